//! The six temporal-module / global-loss / consistency-loss configurations,
//! trained over several seeds and scored on the test split.

use std::fmt::Write as _;

use super::config::TrainConfig;
use super::infer::evaluate_windows;
use super::stage2::{train_segmentation, windows_of};
use crate::data::Dataset;
use crate::error::{Result, TcnnError};
use crate::losses::LossWeights;
use crate::metrics::MetricReport;
use crate::nn::Autoencoder;

/// Which components a configuration switches on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub temporal: bool,
    pub global: bool,
    pub consistency: bool,
}

const fn variant(temporal: bool, global: bool, consistency: bool) -> Variant {
    Variant {
        temporal,
        global,
        consistency,
    }
}

/// Row order of the ablation table: the per-frame baseline first, the full
/// model last.
pub const VARIANTS: [Variant; 6] = [
    variant(false, false, false),
    variant(false, true, false),
    variant(true, false, false),
    variant(true, false, true),
    variant(true, true, false),
    variant(true, true, true),
];

impl Variant {
    /// `cfg` with this variant's switches; enabled terms keep the weights
    /// from `cfg`.
    pub fn apply(&self, cfg: &TrainConfig) -> Result<TrainConfig> {
        let mut out = cfg.clone();
        out.temporal_module = self.temporal;
        out.weights = LossWeights::new(
            if self.global { cfg.weights.lambda_g() } else { 0.0 },
            if self.consistency { cfg.weights.lambda_c() } else { 0.0 },
        )?;
        Ok(out)
    }

    pub fn label(&self) -> String {
        let mark = |b: bool| if b { "yes" } else { "no" };
        format!("{}\t{}\t{}", mark(self.temporal), mark(self.global), mark(self.consistency))
    }
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub reports: Vec<MetricReport>,
}

impl AblationRow {
    fn mean(&self, f: impl Fn(&MetricReport) -> f64) -> f64 {
        self.reports.iter().map(f).sum::<f64>() / self.reports.len() as f64
    }

    pub fn mean_iou(&self) -> f64 {
        self.mean(|r| r.mean_iou)
    }

    pub fn mean_f1(&self) -> f64 {
        self.mean(|r| r.mean_f1)
    }

    pub fn mean_pixel_accuracy(&self) -> f64 {
        self.mean(|r| r.pixel_accuracy)
    }
}

#[derive(Clone, Debug)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Scores are percentages averaged over seeds; the last column lists
    /// the per-seed mean IoU.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "temporal\tglobal\tconsistency\tseeds\tmean_iou\tmean_f1\tmean_pixel_accuracy\tseed_iou\n",
        );
        for r in &self.rows {
            let per_seed: Vec<String> = r
                .reports
                .iter()
                .map(|m| format!("{:.2}", 100.0 * m.mean_iou))
                .collect();
            writeln!(
                out,
                "{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{}",
                r.variant.label(),
                r.seeds.len(),
                100.0 * r.mean_iou(),
                100.0 * r.mean_f1(),
                100.0 * r.mean_pixel_accuracy(),
                per_seed.join(",")
            )
            .expect("string write");
        }
        out
    }
}

/// Trains every variant for every seed against one shared frozen
/// autoencoder and evaluates the selected checkpoints on the test split.
pub fn run_ablation(
    cfg: &TrainConfig,
    data: &Dataset,
    ae: &Autoencoder,
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(TcnnError::invalid("ablation needs at least one seed"));
    }
    let test = windows_of(&data.test, cfg.fps_stride)?;
    if test.is_empty() {
        return Err(TcnnError::Degenerate("test split has no complete windows".into()));
    }
    let mut rows = Vec::with_capacity(VARIANTS.len());
    for v in VARIANTS {
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut run_cfg = v.apply(cfg)?;
            run_cfg.seed = seed;
            let ae = (v.global || v.consistency).then_some(ae);
            let trained = train_segmentation(&run_cfg, &data.train, &data.val, &data.classes, ae)?;
            let report = evaluate_windows(&trained.net, &test, &data.classes, &cfg.ignore_classes)?
                .report()?;
            log::info!("ablation {} seed {seed}: test mIoU {:.4}", v.label(), report.mean_iou);
            reports.push(report);
        }
        rows.push(AblationRow {
            variant: v,
            seeds: seeds.to_vec(),
            reports,
        });
    }
    Ok(AblationTable { rows })
}
