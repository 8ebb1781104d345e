//! Per-class metrics recomputed from sets of pixel indices.

use std::collections::HashSet;

use tcnn::mask::SegMask;

/// Per-class scores computed from pixel index sets.
pub struct SetOracle {
    pub iou: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
    pub accuracy: f64,
}

pub fn oracle(pairs: &[(SegMask, SegMask)], classes: usize, ignore: &[u8]) -> SetOracle {
    let mut pred_sets: Vec<HashSet<(usize, usize)>> = vec![HashSet::new(); classes];
    let mut gt_sets: Vec<HashSet<(usize, usize)>> = vec![HashSet::new(); classes];
    let (mut hits, mut total) = (0usize, 0usize);
    for (k, (pred, gt)) in pairs.iter().enumerate() {
        for (px, (&p, &g)) in pred.grid().iter().zip(gt.grid()).enumerate() {
            if ignore.contains(&g) {
                continue;
            }
            pred_sets[p as usize].insert((k, px));
            gt_sets[g as usize].insert((k, px));
            hits += (p == g) as usize;
            total += 1;
        }
    }
    let mut iou = Vec::new();
    let mut f1 = Vec::new();
    for c in 0..classes {
        if ignore.contains(&(c as u8)) {
            iou.push(None);
            f1.push(None);
            continue;
        }
        let inter = pred_sets[c].intersection(&gt_sets[c]).count() as f64;
        let union = pred_sets[c].union(&gt_sets[c]).count() as f64;
        let sizes = (pred_sets[c].len() + gt_sets[c].len()) as f64;
        iou.push((union > 0.0).then(|| inter / union));
        f1.push((sizes > 0.0).then(|| 2.0 * inter / sizes));
    }
    SetOracle { iou, f1, accuracy: hits as f64 / total as f64 }
}

pub fn mean(v: &[Option<f64>]) -> f64 {
    let d: Vec<f64> = v.iter().flatten().copied().collect();
    d.iter().sum::<f64>() / d.len() as f64
}
