//! Forward-only re-identification objective: batch-hard triplet loss and
//! label-smoothed cross-entropy over pooled descriptors.

use std::fmt;

use crate::error::{validation, IspError, Result};
use crate::parsing::{softmax_in_place, Descriptor};

pub const DEFAULT_MARGIN: f64 = 0.3;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 0.1;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Batch-hard triplet loss with Euclidean distance.
///
/// For every anchor that has at least one positive and one negative in the
/// batch: `max(0, max_pos d - min_neg d + margin)`, averaged over those anchors.
pub fn triplet_loss(feats: &[Vec<f64>], ids: &[u32], margin: f64) -> Result<f64> {
    if feats.len() != ids.len() {
        return Err(validation!("triplet loss: {} features for {} ids", feats.len(), ids.len()));
    }
    let mut total = 0.0;
    let mut anchors = 0usize;
    for (a, fa) in feats.iter().enumerate() {
        let mut hardest_pos = None::<f64>;
        let mut hardest_neg = None::<f64>;
        for (b, fb) in feats.iter().enumerate() {
            if a == b {
                continue;
            }
            let d = euclidean(fa, fb);
            if ids[a] == ids[b] {
                hardest_pos = Some(hardest_pos.map_or(d, |h| h.max(d)));
            } else {
                hardest_neg = Some(hardest_neg.map_or(d, |h| h.min(d)));
            }
        }
        if let (Some(p), Some(n)) = (hardest_pos, hardest_neg) {
            total += (p - n + margin).max(0.0);
            anchors += 1;
        }
    }
    if anchors == 0 {
        return Err(IspError::Degenerate("triplet loss: no anchor has both a positive and a negative".into()));
    }
    Ok(total / anchors as f64)
}

/// Linear identity classifier used by the smoothed cross-entropy term.
#[derive(Debug, Clone, PartialEq)]
pub struct IdHead {
    n_id: usize,
    dim: usize,
    weights: Vec<f64>,
}

impl IdHead {
    pub fn new(n_id: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if n_id == 0 || dim == 0 || weights.len() != n_id * dim {
            return Err(validation!("id head: {} weights for n_id={n_id} dim={dim}", weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(validation!("id head: non-finite weight"));
        }
        Ok(Self { n_id, dim, weights })
    }

    pub fn zeros(n_id: usize, dim: usize) -> Result<Self> {
        Self::new(n_id, dim, vec![0.0; n_id * dim])
    }

    /// Nearest-class-mean head: row `i` is the mean feature of class `i`.
    pub fn from_class_means(feats: &[Vec<f64>], classes: &[usize], n_id: usize) -> Result<Self> {
        let dim = feats.first().map_or(0, Vec::len);
        let mut weights = vec![0.0; n_id * dim];
        let mut counts = vec![0usize; n_id];
        for (f, &cls) in feats.iter().zip(classes) {
            if cls >= n_id {
                return Err(validation!("class {cls} out of range for n_id={n_id}"));
            }
            counts[cls] += 1;
            for (w, v) in weights[cls * dim..(cls + 1) * dim].iter_mut().zip(f) {
                *w += v;
            }
        }
        for (row, &n) in weights.chunks_exact_mut(dim.max(1)).zip(&counts) {
            if n > 0 {
                row.iter_mut().for_each(|w| *w /= n as f64);
            }
        }
        Self::new(n_id, dim, weights)
    }

    pub fn n_id(&self) -> usize {
        self.n_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights.chunks_exact(self.dim).map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum()).collect()
    }
}

/// Cross-entropy against smoothed targets: `1 - eps + eps/n` on the true class
/// and `eps/n` elsewhere, averaged over the batch.
pub fn smoothed_ce(head: &IdHead, feats: &[Vec<f64>], classes: &[usize], epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(validation!("label smoothing epsilon {epsilon} outside [0, 1)"));
    }
    if feats.len() != classes.len() || feats.is_empty() {
        return Err(validation!("smoothed CE: {} features for {} classes", feats.len(), classes.len()));
    }
    let n = head.n_id as f64;
    let mut total = 0.0;
    for (f, &cls) in feats.iter().zip(classes) {
        if cls >= head.n_id {
            return Err(validation!("class {cls} out of range for n_id={}", head.n_id));
        }
        if f.len() != head.dim {
            return Err(validation!("feature dim {} != head dim {}", f.len(), head.dim));
        }
        let mut logits = head.logits(f);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let mut loss = 0.0;
        for (i, l) in logits.iter_mut().enumerate() {
            let target = epsilon / n + if i == cls { 1.0 - epsilon } else { 0.0 };
            loss -= target * (*l - log_z);
        }
        total += loss;
    }
    Ok(total / feats.len() as f64)
}

/// Plain softmax probabilities of a head, for inspection.
pub fn id_probabilities(head: &IdHead, x: &[f64]) -> Vec<f64> {
    let mut l = head.logits(x);
    softmax_in_place(&mut l);
    l
}

/// One identity head per representation: concatenated parts, foreground, global.
#[derive(Debug, Clone, PartialEq)]
pub struct ReidHeads {
    pub part: IdHead,
    pub fg: IdHead,
    pub global: IdHead,
}

impl ReidHeads {
    pub fn from_class_means(descs: &[Descriptor], classes: &[usize], n_id: usize) -> Result<Self> {
        let (parts, fg, global) = representations(descs);
        Ok(Self {
            part: IdHead::from_class_means(&parts, classes, n_id)?,
            fg: IdHead::from_class_means(&fg, classes, n_id)?,
            global: IdHead::from_class_means(&global, classes, n_id)?,
        })
    }
}

/// Part-concatenated, foreground and global vectors, one per descriptor.
type Representations = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn representations(descs: &[Descriptor]) -> Representations {
    (
        descs.iter().map(Descriptor::concat_parts).collect(),
        descs.iter().map(|d| d.fg_feat.clone()).collect(),
        descs.iter().map(|d| d.global_feat.clone()).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_p: f64,
    pub l_f: f64,
    pub l_g: f64,
    pub l_parsing: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(l_p: f64, l_f: f64, l_g: f64, l_parsing: f64, alpha: f64) -> Self {
        Self { l_p, l_f, l_g, l_parsing, alpha, total: l_p + l_f + l_g + alpha * l_parsing }
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l_p={} l_f={} l_g={} l_parsing={} alpha={} total={}",
            self.l_p, self.l_f, self.l_g, self.l_parsing, self.alpha, self.total
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReidLossParams {
    pub margin: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl Default for ReidLossParams {
    fn default() -> Self {
        Self { margin: DEFAULT_MARGIN, epsilon: DEFAULT_EPSILON, alpha: DEFAULT_ALPHA }
    }
}

/// Triplet + smoothed CE on the part, foreground and global representations,
/// combined with the weighted parsing loss.
pub fn reid_objective(
    descs: &[Descriptor],
    classes: &[usize],
    heads: &ReidHeads,
    params: &ReidLossParams,
    l_parsing: f64,
) -> Result<LossReport> {
    if descs.len() != classes.len() {
        return Err(validation!("{} descriptors for {} class labels", descs.len(), classes.len()));
    }
    let ids: Vec<u32> = classes.iter().map(|&c| c as u32).collect();
    let (parts, fg, global) = representations(descs);
    let group = |feats: &[Vec<f64>], head: &IdHead| -> Result<f64> {
        Ok(triplet_loss(feats, &ids, params.margin)? + smoothed_ce(head, feats, classes, params.epsilon)?)
    };
    Ok(LossReport::new(
        group(&parts, &heads.part)?,
        group(&fg, &heads.fg)?,
        group(&global, &heads.global)?,
        l_parsing,
        params.alpha,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_identities_give_zero_triplet() {
        let feats = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![10.0, 0.0], vec![10.0, 0.0]];
        assert_eq!(triplet_loss(&feats, &[1, 1, 2, 2], 0.3).unwrap(), 0.0);
    }

    #[test]
    fn identical_features_give_margin() {
        let feats = vec![vec![1.0, 2.0]; 4];
        assert!((triplet_loss(&feats, &[1, 1, 2, 2], 0.3).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn triplet_needs_a_valid_anchor() {
        let feats = vec![vec![0.0], vec![1.0]];
        assert!(matches!(triplet_loss(&feats, &[1, 1], 0.3), Err(IspError::Degenerate(_))));
        assert!(matches!(triplet_loss(&feats, &[1, 2], 0.3), Err(IspError::Degenerate(_))));
    }

    #[test]
    fn zero_head_gives_log_n_for_any_epsilon() {
        let head = IdHead::zeros(5, 3).unwrap();
        let feats = vec![vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]];
        for eps in [0.0, 0.1, 0.5, 0.9] {
            let l = smoothed_ce(&head, &feats, &[0, 4], eps).unwrap();
            assert!((l - 5f64.ln()).abs() < 1e-12, "eps {eps}");
        }
    }

    #[test]
    fn growing_gap_drives_unsmoothed_ce_to_zero() {
        let mut last = f64::INFINITY;
        for gap in [1.0, 5.0, 20.0, 60.0] {
            let head = IdHead::new(2, 1, vec![gap, 0.0]).unwrap();
            let l = smoothed_ce(&head, &[vec![1.0]], &[0], 0.0).unwrap();
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn smoothed_ce_validates() {
        let head = IdHead::zeros(2, 1).unwrap();
        assert!(smoothed_ce(&head, &[vec![1.0]], &[2], 0.1).is_err());
        assert!(smoothed_ce(&head, &[vec![1.0]], &[0], 1.0).is_err());
    }

    #[test]
    fn report_total() {
        let r = LossReport::new(1.0, 2.0, 3.0, 10.0, 0.1);
        assert!((r.total - 7.0).abs() < 1e-12);
        assert_eq!(LossReport::new(1.0, 2.0, 3.0, 10.0, 0.0).total, 6.0);
        assert_eq!(LossReport::new(1.0, 2.0, 3.0, 0.0, 0.7).total, 6.0);
    }
}
