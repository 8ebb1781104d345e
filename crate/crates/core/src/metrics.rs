//! Dataset-pooled confusion matrices and the F1 / IoU / pixel-accuracy report.

use std::fmt::Write as _;

use crate::error::{Result, TcnnError};
use crate::mask::SegMask;

/// Pixel counts, rows indexed by ground truth and columns by prediction.
/// Pixels whose ground-truth class is ignored are never counted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
    ignore: Vec<bool>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize, ignore_classes: &[u8]) -> Result<Self> {
        if num_classes == 0 {
            return Err(TcnnError::invalid("confusion matrix needs at least one class"));
        }
        let mut ignore = vec![false; num_classes];
        for &c in ignore_classes {
            *ignore.get_mut(c as usize).ok_or_else(|| {
                TcnnError::invalid(format!("ignored class {c} out of {num_classes}"))
            })? = true;
        }
        Ok(ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            ignore,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn is_ignored(&self, class: usize) -> bool {
        self.ignore[class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, pred: &SegMask, gt: &SegMask) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(TcnnError::invalid(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        for (&p, &g) in pred.grid().iter().zip(gt.grid()) {
            let (p, g) = (p as usize, g as usize);
            if p >= self.num_classes || g >= self.num_classes {
                return Err(TcnnError::invalid(format!(
                    "class {} outside a {}-class matrix",
                    p.max(g),
                    self.num_classes
                )));
            }
            if !self.ignore[g] {
                self.counts[g * self.num_classes + p] += 1;
            }
        }
        Ok(())
    }

    /// Adds another matrix's counts.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes || other.ignore != self.ignore {
            return Err(TcnnError::invalid("cannot merge matrices with different class setups"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<MetricReport> {
        let total = self.total();
        if total == 0 {
            return Err(TcnnError::Degenerate("no pixels were evaluated".into()));
        }
        let n = self.num_classes;
        let mut per_class_f1 = vec![None; n];
        let mut per_class_iou = vec![None; n];
        let mut trace = 0u64;
        for c in 0..n {
            trace += self.get(c, c);
            if self.ignore[c] {
                continue;
            }
            let tp = self.get(c, c);
            let fn_: u64 = (0..n).map(|p| self.get(c, p)).sum::<u64>() - tp;
            let fp: u64 = (0..n).map(|g| self.get(g, c)).sum::<u64>() - tp;
            if tp + fp + fn_ == 0 {
                continue;
            }
            per_class_iou[c] = Some(tp as f64 / (tp + fp + fn_) as f64);
            per_class_f1[c] = Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
        }
        let mean = |v: &[Option<f64>]| {
            let defined: Vec<f64> = v.iter().flatten().copied().collect();
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        Ok(MetricReport {
            mean_f1: mean(&per_class_f1),
            mean_iou: mean(&per_class_iou),
            pixel_accuracy: trace as f64 / total as f64,
            per_class_f1,
            per_class_iou,
        })
    }
}

/// Per-class scores are `None` for ignored classes and for classes absent
/// from both prediction and ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_class_f1: Vec<Option<f64>>,
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_f1: f64,
    pub mean_iou: f64,
    pub pixel_accuracy: f64,
}

impl MetricReport {
    /// Two-column TSV: one `F1 <class>` row per class, then the means.
    /// Undefined scores print as `nan`.
    pub fn to_tsv(&self, class_names: &[String]) -> String {
        let mut out = String::from("metric\tvalue\n");
        for (c, f1) in self.per_class_f1.iter().enumerate() {
            let name = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            let v = f1.map_or_else(|| "nan".to_owned(), |v| format!("{:.4}", 100.0 * v));
            writeln!(out, "F1 {name}\t{v}").expect("string write");
        }
        writeln!(out, "Mean F1\t{:.4}", 100.0 * self.mean_f1).expect("string write");
        writeln!(out, "Mean IoU\t{:.4}", 100.0 * self.mean_iou).expect("string write");
        writeln!(out, "Mean Pixel Accuracy\t{:.4}", 100.0 * self.pixel_accuracy).expect("string write");
        out
    }
}
