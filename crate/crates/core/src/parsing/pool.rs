use super::{forward_confidences, ConfidenceMaps, PartClassifier};
use crate::error::{validation, Result};
use crate::matching::visibility_labels;
use crate::tensor::FeatureMap;

/// Pooled part, foreground and global features of one image plus part visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub image_id: u32,
    pub person_id: u32,
    pub camera_id: u32,
    /// `F_1 .. F_{K-1}`.
    pub part_feats: Vec<Vec<f64>>,
    pub fg_feat: Vec<f64>,
    pub global_feat: Vec<f64>,
    /// Visibility of parts `1 .. K-1`.
    pub visibility: Vec<bool>,
}

impl Descriptor {
    /// Number of foreground parts (`K - 1`).
    pub fn parts(&self) -> usize {
        self.part_feats.len()
    }

    pub fn dim(&self) -> usize {
        self.global_feat.len()
    }

    /// Part features concatenated in label order.
    pub fn concat_parts(&self) -> Vec<f64> {
        self.part_feats.concat()
    }
}

pub fn pool_descriptor(clf: &PartClassifier, m: &FeatureMap) -> Result<Descriptor> {
    let conf = forward_confidences(clf, m)?;
    pool_from_confidences(&conf, m)
}

/// Confidence-weighted average pooling.
///
/// `F_k = mean_xy P_k(x,y) M(x,y)`, `F_f` pools `sum_{k>=1} P_k(x,y) M(x,y)` and
/// `F_g` pools `M` itself.
pub fn pool_from_confidences(conf: &ConfidenceMaps, m: &FeatureMap) -> Result<Descriptor> {
    let shape = m.shape();
    if (conf.h, conf.w) != (shape.h, shape.w) {
        return Err(validation!("confidences {}x{} vs feature map {}x{}", conf.h, conf.w, shape.h, shape.w));
    }
    let c = shape.c;
    let hw = shape.pixels();
    let inv = 1.0 / hw as f64;
    let mut part_feats = vec![vec![0.0; c]; conf.k - 1];
    let mut fg_feat = vec![0.0; c];
    let mut global_feat = vec![0.0; c];
    for (p, px) in m.pixels().enumerate() {
        let mut fg_weight = 0.0;
        for (k, feat) in part_feats.iter_mut().enumerate() {
            let wgt = conf.prob(k + 1, p);
            fg_weight += wgt;
            for (f, &v) in feat.iter_mut().zip(px) {
                *f += wgt * f64::from(v);
            }
        }
        for ((f, g), &v) in fg_feat.iter_mut().zip(global_feat.iter_mut()).zip(px) {
            *f += fg_weight * f64::from(v);
            *g += f64::from(v);
        }
    }
    for v in part_feats.iter_mut().flatten().chain(&mut fg_feat).chain(&mut global_feat) {
        *v *= inv;
    }
    Ok(Descriptor {
        image_id: m.image_id(),
        person_id: m.person_id(),
        camera_id: m.camera_id(),
        part_feats,
        fg_feat,
        global_feat,
        visibility: visibility_labels(conf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MapShape;

    fn fmap() -> FeatureMap {
        let data = vec![1.0, -2.0, 0.5, 3.0, 4.0, 0.0, -1.5, 2.5, 0.25, 0.75, -0.5, 1.0];
        FeatureMap::new(4, 2, 1, MapShape::new(2, 2, 3), data).unwrap()
    }

    fn gap(m: &FeatureMap) -> Vec<f64> {
        let mut g = vec![0.0; m.shape().c];
        for px in m.pixels() {
            for (a, &v) in g.iter_mut().zip(px) {
                *a += f64::from(v);
            }
        }
        g.iter().map(|v| v / m.shape().pixels() as f64).collect()
    }

    #[test]
    fn full_mass_part_equals_global() {
        let m = fmap();
        let k = 4;
        let mut probs = vec![0.0; k * 6];
        probs[2 * 6..3 * 6].iter_mut().for_each(|p| *p = 1.0);
        let conf = ConfidenceMaps { image_id: 4, k, h: 2, w: 3, probs };
        let d = pool_from_confidences(&conf, &m).unwrap();
        let g = gap(&m);
        for (a, b) in d.part_feats[1].iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.fg_feat, d.global_feat);
        assert_eq!(d.visibility, vec![false, true, false]);
        assert_eq!((d.image_id, d.person_id, d.camera_id), (4, 2, 1));
    }

    #[test]
    fn uniform_confidences_split_global_evenly() {
        let m = fmap();
        let clf = PartClassifier::zeros(5, 2).unwrap();
        let d = pool_descriptor(&clf, &m).unwrap();
        let g = gap(&m);
        for f in &d.part_feats {
            for (a, b) in f.iter().zip(&g) {
                assert!((a - b / 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn foreground_is_sum_of_parts() {
        let m = fmap();
        let clf = PartClassifier::from_weights(3, 2, vec![0.3, -0.1, 1.2, 0.4, -0.7, 0.9]).unwrap();
        let d = pool_descriptor(&clf, &m).unwrap();
        for ch in 0..2 {
            let s: f64 = d.part_feats.iter().map(|f| f[ch]).sum();
            assert!((s - d.fg_feat[ch]).abs() < 1e-12);
        }
    }
}
