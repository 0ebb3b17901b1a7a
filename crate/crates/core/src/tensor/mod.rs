//! Feature-map storage and the per-pixel quantities derived from it.
//!
//! Pixel `(x, y)` is column `x`, row `y`; row 0 is the top of the image.
//! Data is row-major with channels fastest, so pixel `(x, y)` occupies
//! `data[(y * w + x) * c..][..c]`.

mod io;

use std::collections::BTreeSet;

pub use self::io::{
    load_feature_set, load_label_set, read_feature_set, read_label_set, save_feature_set, save_label_set,
    write_feature_set, write_label_set,
};

use crate::error::{validation, IspError, Result};

/// Label value marking a pixel that carries no supervision.
pub const UNLABELED: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MapShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl MapShape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One image's `c x h x w` feature map plus its identity metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    image_id: u32,
    person_id: u32,
    camera_id: u32,
    shape: MapShape,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(image_id: u32, person_id: u32, camera_id: u32, shape: MapShape, data: Vec<f32>) -> Result<Self> {
        if shape.c == 0 || shape.h == 0 || shape.w == 0 {
            return Err(validation!("feature map {image_id}: zero dimension in {shape:?}"));
        }
        if data.len() != shape.len() {
            return Err(validation!("feature map {image_id}: data length {} != h*w*c = {}", data.len(), shape.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(validation!("feature map {image_id}: non-finite value at element {pos}"));
        }
        Ok(Self { image_id, person_id, camera_id, shape, data })
    }

    pub fn image_id(&self) -> u32 {
        self.image_id
    }

    pub fn person_id(&self) -> u32 {
        self.person_id
    }

    pub fn camera_id(&self) -> u32 {
        self.camera_id
    }

    pub fn shape(&self) -> MapShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Feature vector at linear pixel index `p = y * w + x`.
    pub fn pixel(&self, p: usize) -> &[f32] {
        let c = self.shape.c;
        &self.data[p * c..(p + 1) * c]
    }

    pub fn pixel_at(&self, x: usize, y: usize) -> &[f32] {
        self.pixel(y * self.shape.w + x)
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.shape.c)
    }

    /// Euclidean norm of every pixel's feature vector.
    pub fn pixel_norms(&self) -> Vec<f64> {
        self.pixels().map(norm_f32).collect()
    }
}

pub(crate) fn norm_f32(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// A validated batch of feature maps sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    maps: Vec<FeatureMap>,
    n_id: usize,
}

impl FeatureMapSet {
    pub fn new(maps: Vec<FeatureMap>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| validation!("feature set must contain at least one map"))?;
        let shape = first.shape;
        let mut seen = BTreeSet::new();
        let mut persons = BTreeSet::new();
        for m in &maps {
            if m.shape != shape {
                return Err(validation!(
                    "feature map {} has shape {:?}, set shape is {:?}",
                    m.image_id,
                    m.shape,
                    shape
                ));
            }
            if !seen.insert(m.image_id) {
                return Err(validation!("duplicate image_id {}", m.image_id));
            }
            persons.insert(m.person_id);
        }
        Ok(Self { n_id: persons.len(), maps })
    }

    pub fn maps(&self) -> &[FeatureMap] {
        &self.maps
    }

    pub fn shape(&self) -> MapShape {
        self.maps[0].shape
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn n_id(&self) -> usize {
        self.n_id
    }

    /// Distinct person ids in ascending order.
    pub fn person_ids(&self) -> Vec<u32> {
        let ids: BTreeSet<u32> = self.maps.iter().map(|m| m.person_id).collect();
        ids.into_iter().collect()
    }

    /// Indices (into [`maps`](Self::maps)) of every image of `person_id`, in set order.
    pub fn images_of(&self, person_id: u32) -> Vec<usize> {
        self.maps.iter().enumerate().filter(|(_, m)| m.person_id == person_id).map(|(i, _)| i).collect()
    }

    pub fn into_maps(self) -> Vec<FeatureMap> {
        self.maps
    }
}

/// Per-pixel activation normalized by the image's maximum activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

/// Per-pixel l2-normalized feature directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMap {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub vectors: Vec<f64>,
    /// `true` for pixels whose source vector was zero; their direction is the zero vector.
    pub degenerate: Vec<bool>,
}

impl DirectionMap {
    pub fn vector(&self, p: usize) -> &[f64] {
        &self.vectors[p * self.c..(p + 1) * self.c]
    }
}

/// `a(x,y) = |M(x,y)| / max |M(i,j)|` over the positions of one map.
pub fn activation_map(m: &FeatureMap) -> Result<ActivationMap> {
    let norms = m.pixel_norms();
    let max = norms.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(IspError::Degenerate(format!("feature map {} has only zero pixels", m.image_id)));
    }
    Ok(ActivationMap { h: m.shape.h, w: m.shape.w, values: norms.into_iter().map(|n| n / max).collect() })
}

pub fn direction_map(m: &FeatureMap) -> DirectionMap {
    let c = m.shape.c;
    let mut vectors = Vec::with_capacity(m.shape.len());
    let mut degenerate = Vec::with_capacity(m.shape.pixels());
    for px in m.pixels() {
        let n = norm_f32(px);
        if n > 0.0 {
            vectors.extend(px.iter().map(|&v| f64::from(v) / n));
            degenerate.push(false);
        } else {
            vectors.extend(std::iter::repeat_n(0.0, c));
            degenerate.push(true);
        }
    }
    DirectionMap { h: m.shape.h, w: m.shape.w, c, vectors, degenerate }
}

/// Per-pixel part labels for one image (`0` = background, [`UNLABELED`] = no label).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub image_id: u32,
    pub person_id: u32,
    pub h: usize,
    pub w: usize,
    pub labels: Vec<u8>,
}

/// Cluster-derived labels; same layout as ground-truth maps.
pub type PseudoLabelMap = LabelMap;

impl LabelMap {
    pub fn new(image_id: u32, person_id: u32, h: usize, w: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != h * w {
            return Err(validation!("label map {image_id}: {} labels for {h}x{w}", labels.len()));
        }
        Ok(Self { image_id, person_id, h, w, labels })
    }

    /// Distinct labels present, excluding [`UNLABELED`].
    pub fn present_labels(&self) -> BTreeSet<u8> {
        self.labels.iter().copied().filter(|&l| l != UNLABELED).collect()
    }
}

/// A list of label maps sharing `(h, w)` and a part count `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub k: usize,
    pub maps: Vec<LabelMap>,
}

impl LabelSet {
    pub fn new(k: usize, maps: Vec<LabelMap>) -> Result<Self> {
        if !(1..=usize::from(UNLABELED)).contains(&k) {
            return Err(validation!("part count K = {k} outside 1..=255"));
        }
        if let Some(first) = maps.first() {
            let (h, w) = (first.h, first.w);
            for m in &maps {
                if (m.h, m.w) != (h, w) {
                    return Err(validation!("label map {} is {}x{}, expected {h}x{w}", m.image_id, m.h, m.w));
                }
                if let Some(&bad) = m.labels.iter().find(|&&l| l != UNLABELED && usize::from(l) >= k) {
                    return Err(validation!("label map {} has label {bad} >= K = {k}", m.image_id));
                }
            }
        }
        Ok(Self { k, maps })
    }
}
