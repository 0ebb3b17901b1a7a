//! The pixel-wise part classifier and everything computed from its confidences.
//!
//! Each pixel's feature vector `m` is scored with a bias-free linear map
//! `W m`, and a softmax over the `K` rows gives the confidence of the pixel
//! belonging to each part (row 0 is background).

mod io;
mod pool;
mod train;

pub use io::{
    load_classifier, load_descriptors, read_classifier, read_descriptors, save_classifier, save_descriptors,
    write_classifier, write_descriptors,
};
pub use pool::{pool_descriptor, pool_from_confidences, Descriptor};
pub use train::{train_classifier, Adam, TrainOptions, TrainOutcome, Trainer};

use crate::error::{validation, IspError, Result};
use crate::tensor::{FeatureMap, FeatureMapSet, LabelMap, UNLABELED};

#[derive(Debug, Clone, PartialEq)]
pub struct PartClassifier {
    k: usize,
    c: usize,
    /// `k * c`, row `i` scores part `i`.
    weights: Vec<f64>,
}

impl PartClassifier {
    pub fn zeros(k: usize, c: usize) -> Result<Self> {
        Self::from_weights(k, c, vec![0.0; k * c])
    }

    pub fn from_weights(k: usize, c: usize, weights: Vec<f64>) -> Result<Self> {
        if k < 2 || c == 0 {
            return Err(validation!("classifier needs K >= 2 and c >= 1, got K={k} c={c}"));
        }
        if weights.len() != k * c {
            return Err(validation!("classifier: {} weights for K={k} c={c}", weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(validation!("classifier: non-finite weight"));
        }
        Ok(Self { k, c, weights })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.c..(i + 1) * self.c]
    }

    /// Softmax over the `K` scores of one feature vector, written into `out`.
    pub(crate) fn softmax_into<T: Copy + Into<f64>>(&self, x: &[T], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(w, &v)| w * v.into()).sum();
        }
        softmax_in_place(out);
    }

    /// Mean or summed cross-entropy of `batch` and its gradient with respect to `W`.
    ///
    /// `dL/dW_k = sum_pixels (P_k - [k = label]) m^T`, divided by the pixel count for
    /// [`Reduction::Mean`].
    pub fn loss_and_gradient(&self, batch: &PixelBatch, reduction: Reduction) -> (f64, Vec<f64>) {
        self.loss_and_gradient_on(batch, 0..batch.len(), reduction)
    }

    pub fn loss(&self, batch: &PixelBatch, reduction: Reduction) -> f64 {
        let mut probs = vec![0.0; self.k];
        let mut total = 0.0;
        for i in 0..batch.len() {
            self.softmax_into(batch.feature(i), &mut probs);
            total -= probs[usize::from(batch.labels[i])].ln();
        }
        reduction.apply(total, batch.len())
    }

    pub(crate) fn loss_and_gradient_on(
        &self,
        batch: &PixelBatch,
        rows: impl IntoIterator<Item = usize>,
        reduction: Reduction,
    ) -> (f64, Vec<f64>) {
        let (k, c) = (self.k, self.c);
        let mut grad = vec![0.0; k * c];
        let mut probs = vec![0.0; k];
        let mut total = 0.0;
        let mut n = 0usize;
        for i in rows {
            let x = batch.feature(i);
            let label = usize::from(batch.labels[i]);
            self.softmax_into(x, &mut probs);
            total -= probs[label].ln();
            for (j, g) in grad.chunks_exact_mut(c).enumerate() {
                let coef = probs[j] - if j == label { 1.0 } else { 0.0 };
                for (gv, xv) in g.iter_mut().zip(x) {
                    *gv += coef * xv;
                }
            }
            n += 1;
        }
        if reduction == Reduction::Mean && n > 0 {
            let inv = 1.0 / n as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
        }
        (reduction.apply(total, n), grad)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

impl Reduction {
    fn apply(self, total: f64, n: usize) -> f64 {
        match self {
            Reduction::Sum => total,
            Reduction::Mean if n > 0 => total / n as f64,
            Reduction::Mean => 0.0,
        }
    }
}

/// Labeled pixels gathered from a set of feature maps, as `f64` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBatch {
    pub c: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
}

impl PixelBatch {
    pub fn new(c: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if c == 0 || features.len() != labels.len() * c {
            return Err(validation!("pixel batch: {} values for {} labels of dim {c}", features.len(), labels.len()));
        }
        Ok(Self { c, features, labels })
    }

    /// Collects every labeled pixel; `labels[i]` must describe `set.maps()[i]`.
    pub fn from_maps(set: &FeatureMapSet, labels: &[LabelMap]) -> Result<Self> {
        if labels.len() != set.len() {
            return Err(validation!("{} label maps for {} feature maps", labels.len(), set.len()));
        }
        let shape = set.shape();
        let mut features = Vec::new();
        let mut ys = Vec::new();
        for (m, l) in set.maps().iter().zip(labels) {
            check_label_shape(m, l)?;
            for (p, &y) in l.labels.iter().enumerate() {
                if y != UNLABELED {
                    features.extend(m.pixel(p).iter().map(|&v| f64::from(v)));
                    ys.push(y);
                }
            }
        }
        Self::new(shape.c, features, ys)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.c..(i + 1) * self.c]
    }
}

fn check_label_shape(m: &FeatureMap, l: &LabelMap) -> Result<()> {
    let shape = m.shape();
    if (l.h, l.w) != (shape.h, shape.w) {
        return Err(validation!(
            "label map {} is {}x{}, feature map {} is {}x{}",
            l.image_id,
            l.h,
            l.w,
            m.image_id(),
            shape.h,
            shape.w
        ));
    }
    if l.image_id != m.image_id() {
        return Err(validation!("label map {} paired with feature map {}", l.image_id, m.image_id()));
    }
    Ok(())
}

/// Per-pixel part probabilities for one image, stored part-major (`K x h x w`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMaps {
    pub image_id: u32,
    pub k: usize,
    pub h: usize,
    pub w: usize,
    pub probs: Vec<f64>,
}

impl ConfidenceMaps {
    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn plane(&self, k: usize) -> &[f64] {
        let hw = self.pixels();
        &self.probs[k * hw..(k + 1) * hw]
    }

    pub fn prob(&self, k: usize, p: usize) -> f64 {
        self.probs[k * self.pixels() + p]
    }

    /// Most confident part of pixel `p`; ties go to the lowest index.
    pub fn argmax(&self, p: usize) -> usize {
        let mut best = 0;
        for k in 1..self.k {
            if self.prob(k, p) > self.prob(best, p) {
                best = k;
            }
        }
        best
    }

    /// Hard labels from the per-pixel argmax.
    pub fn to_label_map(&self, person_id: u32) -> LabelMap {
        LabelMap {
            image_id: self.image_id,
            person_id,
            h: self.h,
            w: self.w,
            labels: (0..self.pixels()).map(|p| self.argmax(p) as u8).collect(),
        }
    }
}

pub fn forward_confidences(clf: &PartClassifier, m: &FeatureMap) -> Result<ConfidenceMaps> {
    let shape = m.shape();
    if shape.c != clf.c {
        return Err(validation!("classifier expects c={}, feature map {} has c={}", clf.c, m.image_id(), shape.c));
    }
    let hw = shape.pixels();
    let mut probs = vec![0.0; clf.k * hw];
    let mut buf = vec![0.0; clf.k];
    for (p, px) in m.pixels().enumerate() {
        clf.softmax_into(px, &mut buf);
        for (k, &v) in buf.iter().enumerate() {
            probs[k * hw + p] = v;
        }
    }
    Ok(ConfidenceMaps { image_id: m.image_id(), k: clf.k, h: shape.h, w: shape.w, probs })
}

/// Cross-entropy of the confidences against the labels; unlabeled pixels are skipped.
pub fn parsing_loss(conf: &ConfidenceMaps, labels: &LabelMap, reduction: Reduction) -> Result<f64> {
    if (labels.h, labels.w) != (conf.h, conf.w) {
        return Err(validation!("label map {}x{} vs confidences {}x{}", labels.h, labels.w, conf.h, conf.w));
    }
    let mut total = 0.0;
    let mut n = 0;
    for (p, &y) in labels.labels.iter().enumerate() {
        if y == UNLABELED {
            continue;
        }
        let y = usize::from(y);
        if y >= conf.k {
            return Err(validation!("label {y} out of range for K={}", conf.k));
        }
        total -= conf.prob(y, p).ln();
        n += 1;
    }
    if n == 0 {
        return Err(IspError::Degenerate(format!("label map {} has no labeled pixels", labels.image_id)));
    }
    Ok(reduction.apply(total, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MapShape;

    fn fmap(c: usize, h: usize, w: usize, data: Vec<f32>) -> FeatureMap {
        FeatureMap::new(0, 0, 0, MapShape::new(c, h, w), data).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_confidences() {
        let clf = PartClassifier::zeros(4, 3).unwrap();
        let m = fmap(3, 2, 2, (0..12).map(|i| i as f32 - 5.0).collect());
        let conf = forward_confidences(&clf, &m).unwrap();
        assert!(conf.probs.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn log_three_weight_gives_quarter_and_three_quarters() {
        let clf = PartClassifier::from_weights(2, 1, vec![0.0, 3f64.ln()]).unwrap();
        let conf = forward_confidences(&clf, &fmap(1, 1, 1, vec![1.0])).unwrap();
        assert!((conf.prob(0, 0) - 0.25).abs() < 1e-15);
        assert!((conf.prob(1, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let clf = PartClassifier::zeros(2, 3).unwrap();
        assert!(forward_confidences(&clf, &fmap(2, 1, 1, vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let clf = PartClassifier::from_weights(3, 1, vec![1e4, -1e4, 0.0]).unwrap();
        let conf = forward_confidences(&clf, &fmap(1, 1, 2, vec![50.0, -50.0])).unwrap();
        assert!(conf.probs.iter().all(|p| p.is_finite()));
        assert_eq!(conf.prob(0, 0), 1.0);
        assert_eq!(conf.prob(1, 1), 1.0);
    }

    fn label_map(labels: Vec<u8>, h: usize, w: usize) -> LabelMap {
        LabelMap::new(0, 0, h, w, labels).unwrap()
    }

    #[test]
    fn loss_examples() {
        let one_hot = ConfidenceMaps { image_id: 0, k: 2, h: 1, w: 2, probs: vec![1.0, 0.0, 0.0, 1.0] };
        assert_eq!(parsing_loss(&one_hot, &label_map(vec![0, 1], 1, 2), Reduction::Sum).unwrap(), 0.0);

        let uniform = ConfidenceMaps { image_id: 0, k: 4, h: 2, w: 6, probs: vec![0.25; 48] };
        let mut labels = vec![1, 2, 3, 0, 1, 2, 3, 0, 1, 2, UNLABELED, UNLABELED];
        let sum = parsing_loss(&uniform, &label_map(labels.clone(), 2, 6), Reduction::Sum).unwrap();
        assert!((sum - 10.0 * 4f64.ln()).abs() < 1e-12);
        let mean = parsing_loss(&uniform, &label_map(labels.clone(), 2, 6), Reduction::Mean).unwrap();
        assert!((mean - 4f64.ln()).abs() < 1e-12);

        labels.iter_mut().for_each(|l| *l = UNLABELED);
        assert!(matches!(
            parsing_loss(&uniform, &label_map(labels, 2, 6), Reduction::Sum),
            Err(IspError::Degenerate(_))
        ));
    }

    #[test]
    fn loss_depends_on_label_assignment() {
        let clf = PartClassifier::from_weights(3, 2, vec![0.5, -0.2, -0.3, 0.9, 0.1, 0.4]).unwrap();
        let m = fmap(2, 1, 3, vec![1.0, 0.5, -0.7, 2.0, 0.3, -1.1]);
        let conf = forward_confidences(&clf, &m).unwrap();
        let a = label_map(vec![0, 1, 2], 1, 3);
        let b = label_map(vec![2, 0, 1], 1, 3);
        let la = parsing_loss(&conf, &a, Reduction::Sum).unwrap();
        let lb = parsing_loss(&conf, &b, Reduction::Sum).unwrap();
        // direct recomputation
        let direct: f64 = [(0, 0), (1, 1), (2, 2)].iter().map(|&(k, p)| -conf.prob(k, p).ln()).sum();
        assert!((la - direct).abs() < 1e-12);
        assert!((la - lb).abs() > 1e-3);
    }

    #[test]
    fn batch_loss_matches_per_map_loss() {
        let clf = PartClassifier::from_weights(3, 2, vec![0.5, -0.2, -0.3, 0.9, 0.1, 0.4]).unwrap();
        let m = fmap(2, 1, 3, vec![1.0, 0.5, -0.7, 2.0, 0.3, -1.1]);
        let labels = label_map(vec![0, UNLABELED, 2], 1, 3);
        let set = FeatureMapSet::new(vec![m.clone()]).unwrap();
        let batch = PixelBatch::from_maps(&set, std::slice::from_ref(&labels)).unwrap();
        assert_eq!(batch.len(), 2);
        let conf = forward_confidences(&clf, &m).unwrap();
        let want = parsing_loss(&conf, &labels, Reduction::Mean).unwrap();
        assert!((clf.loss(&batch, Reduction::Mean) - want).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_low() {
        let conf = ConfidenceMaps { image_id: 0, k: 3, h: 1, w: 1, probs: vec![0.4, 0.4, 0.2] };
        assert_eq!(conf.argmax(0), 0);
    }
}
