//! Two-stage, per-identity pixel clustering that turns feature maps into part labels.
//!
//! Stage 1 pools the normalized activations of every pixel of every image of a
//! person and splits them into foreground and background with 2-means. Stage 2
//! pools the l2-normalized feature directions of all foreground pixels of that
//! person and clusters them into `K - 1` parts, which are then numbered from the
//! top of the image down. Background is label 0.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use super::kmeans::{self, ClusterModel, KMeansOutput, KMeansParams};
use crate::error::{validation, IspError, Result};
use crate::rng::derive_seed;
use crate::tensor::{activation_map, direction_map, FeatureMapSet, LabelMap, LabelSet, PseudoLabelMap};

/// Non-fatal conditions met while clustering.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterWarning {
    /// Every pooled activation of this person was identical; all pixels became foreground.
    UniformActivation { person_id: u32 },
    /// An image had no nonzero pixel; its activations were taken as zero.
    ZeroImage { image_id: u32 },
    /// Fewer distinct stage-2 samples than requested parts.
    ReducedParts { person_id: u32, requested: usize, effective: usize },
    /// Stage 1 assigned no usable foreground pixel; the person's images are all background.
    EmptyForeground { person_id: u32 },
}

impl fmt::Display for ClusterWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UniformActivation { person_id } => {
                write!(f, "person {person_id}: uniform activations, all pixels foreground")
            }
            Self::ZeroImage { image_id } => write!(f, "image {image_id}: all-zero feature map"),
            Self::ReducedParts { person_id, requested, effective } => {
                write!(f, "person {person_id}: part clusters reduced from {requested} to {effective}")
            }
            Self::EmptyForeground { person_id } => write!(f, "person {person_id}: no foreground pixels"),
        }
    }
}

/// Result of the foreground/background split for one person.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundSplit {
    pub person_id: u32,
    /// Indices into the feature set of this person's images.
    pub images: Vec<usize>,
    /// One `h * w` mask per entry of `images`.
    pub masks: Vec<Vec<bool>>,
    pub warnings: Vec<ClusterWarning>,
}

/// Mapping of raw stage-2 clusters onto semantic labels `1..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartOrdering {
    pub person_id: u32,
    /// `labels[raw]` is the semantic label of raw cluster `raw`.
    pub labels: Vec<u8>,
    /// Mean row of the pixels of each raw cluster (`+inf` if it is empty).
    pub mean_rows: Vec<f64>,
    pub mean_cols: Vec<f64>,
}

impl PartOrdering {
    /// Orders clusters by mean row, then mean column, then raw index.
    pub fn from_positions(person_id: u32, rows: &[usize], cols: &[usize], raw: &[usize], k: usize) -> Self {
        let mut sum_r = vec![0.0; k];
        let mut sum_c = vec![0.0; k];
        let mut count = vec![0usize; k];
        for ((&r, &c), &j) in rows.iter().zip(cols).zip(raw) {
            sum_r[j] += r as f64;
            sum_c[j] += c as f64;
            count[j] += 1;
        }
        let mean = |s: &[f64], j: usize| if count[j] > 0 { s[j] / count[j] as f64 } else { f64::INFINITY };
        let mean_rows: Vec<f64> = (0..k).map(|j| mean(&sum_r, j)).collect();
        let mean_cols: Vec<f64> = (0..k).map(|j| mean(&sum_c, j)).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            mean_rows[a].total_cmp(&mean_rows[b]).then(mean_cols[a].total_cmp(&mean_cols[b])).then(a.cmp(&b))
        });
        let mut labels = vec![0u8; k];
        for (rank, &raw_idx) in order.iter().enumerate() {
            labels[raw_idx] = (rank + 1) as u8;
        }
        Self { person_id, labels, mean_rows, mean_cols }
    }

    /// Mean rows listed in semantic-label order (label 1 first).
    pub fn rows_by_label(&self) -> Vec<f64> {
        let mut by_label = vec![0.0; self.labels.len()];
        for (raw, &l) in self.labels.iter().enumerate() {
            by_label[usize::from(l) - 1] = self.mean_rows[raw];
        }
        by_label
    }
}

/// Result of clustering one person's foreground pixels into parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PartSplit {
    pub person_id: u32,
    /// `(slot in ForegroundSplit::images, pixel index)` of every clustered sample.
    pub pixels: Vec<(usize, usize)>,
    /// Raw cluster of every sample.
    pub raw: Vec<usize>,
    pub ordering: PartOrdering,
    pub model: ClusterModel,
    pub warnings: Vec<ClusterWarning>,
}

/// Splits all pixels of `person_id`'s images into foreground and background.
pub fn stage1_foreground_split(set: &FeatureMapSet, person_id: u32, seed: u64) -> Result<ForegroundSplit> {
    let images = set.images_of(person_id);
    if images.is_empty() {
        return Err(validation!("person {person_id} not present in feature set"));
    }
    let mut warnings = Vec::new();
    let mut samples = Vec::with_capacity(images.len() * set.shape().pixels());
    for &i in &images {
        let m = &set.maps()[i];
        match activation_map(m) {
            Ok(a) => samples.extend(a.values),
            Err(IspError::Degenerate(_)) => {
                warnings.push(ClusterWarning::ZeroImage { image_id: m.image_id() });
                samples.extend(std::iter::repeat_n(0.0, m.shape().pixels()));
            }
            Err(e) => return Err(e),
        }
    }

    let out = kmeans::kmeans(&samples, 1, &KMeansParams::new(2, seed))?;
    let fg_cluster = if out.model.k < 2 {
        warnings.push(ClusterWarning::UniformActivation { person_id });
        None
    } else if out.model.centroids[1] > out.model.centroids[0] {
        Some(1)
    } else {
        Some(0)
    };
    let pixels = set.shape().pixels();
    let masks = out
        .assignments
        .chunks_exact(pixels)
        .map(|chunk| chunk.iter().map(|&a| fg_cluster.is_none_or(|fg| a == fg)).collect())
        .collect();
    Ok(ForegroundSplit { person_id, images, masks, warnings })
}

/// Clusters the foreground pixel directions of one person into `k_total - 1` parts.
///
/// Without a usable `warm_start`, k-means runs `restarts` times from k-means++
/// seeds derived from `seed`. A warm start whose centroid count matches the
/// effective cluster count competes with a single fresh k-means++ run instead.
/// The lowest inertia wins; earlier candidates (warm start first) win ties.
pub fn stage2_part_split(
    set: &FeatureMapSet,
    fg: &ForegroundSplit,
    k_total: usize,
    seed: u64,
    restarts: usize,
    warm_start: Option<&ClusterModel>,
) -> Result<PartSplit> {
    if k_total < 2 {
        return Err(validation!("K must be >= 2, got {k_total}"));
    }
    let person_id = fg.person_id;
    let shape = set.shape();
    let mut samples = Vec::new();
    let mut pixels = Vec::new();
    for (slot, (&i, mask)) in fg.images.iter().zip(&fg.masks).enumerate() {
        let dirs = direction_map(&set.maps()[i]);
        for (p, &is_fg) in mask.iter().enumerate() {
            if is_fg && !dirs.degenerate[p] {
                samples.extend_from_slice(dirs.vector(p));
                pixels.push((slot, p));
            }
        }
    }
    if pixels.is_empty() {
        return Err(IspError::EmptyForeground { person_id });
    }

    let requested = k_total - 1;
    let out = run_stage2_kmeans(&samples, shape.c, requested, seed, restarts, warm_start)?;
    let mut warnings = Vec::new();
    if out.reduced_k {
        warnings.push(ClusterWarning::ReducedParts { person_id, requested, effective: out.model.k });
    }
    let rows: Vec<usize> = pixels.iter().map(|&(_, p)| p / shape.w).collect();
    let cols: Vec<usize> = pixels.iter().map(|&(_, p)| p % shape.w).collect();
    let ordering = PartOrdering::from_positions(person_id, &rows, &cols, &out.assignments, out.model.k);
    Ok(PartSplit { person_id, pixels, raw: out.assignments, ordering, model: out.model, warnings })
}

fn run_stage2_kmeans(
    samples: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
    restarts: usize,
    warm_start: Option<&ClusterModel>,
) -> Result<KMeansOutput> {
    let effective = kmeans::distinct_count_up_to(samples, dim, k);
    let mut best = match warm_start {
        Some(model) if model.k == effective && model.dim == dim => {
            let mut out =
                kmeans::lloyd(samples, dim, model.centroids.clone(), kmeans::DEFAULT_MAX_ITER, kmeans::DEFAULT_TOL)?;
            out.reduced_k = effective < k;
            Some(out)
        }
        _ => None,
    };
    let fresh = if best.is_some() { 1 } else { restarts.max(1) };
    for r in 0..fresh {
        let out = kmeans::kmeans(samples, dim, &KMeansParams::new(k, derive_seed(seed, &[r as u64])))?;
        if best.as_ref().is_none_or(|b| out.model.inertia < b.model.inertia) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one k-means run"))
}

/// Writes semantic part labels for one person's images.
pub fn person_label_maps(set: &FeatureMapSet, fg: &ForegroundSplit, parts: Option<&PartSplit>) -> Vec<PseudoLabelMap> {
    let shape = set.shape();
    let mut maps: Vec<PseudoLabelMap> = fg
        .images
        .iter()
        .map(|&i| {
            let m = &set.maps()[i];
            LabelMap {
                image_id: m.image_id(),
                person_id: m.person_id(),
                h: shape.h,
                w: shape.w,
                labels: vec![0; shape.pixels()],
            }
        })
        .collect();
    if let Some(parts) = parts {
        for (&(slot, p), &raw) in parts.pixels.iter().zip(&parts.raw) {
            maps[slot].labels[p] = parts.ordering.labels[raw];
        }
    }
    maps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    /// Total label count including background.
    pub k: usize,
    pub seed: u64,
    /// Independent stage-2 k-means++ runs per person when there is no warm start.
    pub restarts: usize,
    /// Mixed into the stage-2 seeds only, so repeated rounds over the same
    /// features share one foreground split but try fresh part seedings.
    pub round: u64,
}

impl CascadeParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, restarts: DEFAULT_RESTARTS, round: 0 }
    }
}

pub const DEFAULT_RESTARTS: usize = 4;

/// Everything produced by one clustering round over a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    /// One label map per image, in feature-set order.
    pub labels: LabelSet,
    /// Stage-1 foreground masks, in feature-set order.
    pub foreground: Vec<Vec<bool>>,
    /// Stage-2 models by person id (absent for persons with no foreground).
    pub models: BTreeMap<u32, ClusterModel>,
    pub orderings: BTreeMap<u32, PartOrdering>,
    pub warnings: Vec<ClusterWarning>,
}

pub fn generate_pseudo_labels(set: &FeatureMapSet, k: usize, seed: u64) -> Result<PseudoLabels> {
    generate_pseudo_labels_with(set, &CascadeParams::new(k, seed), None)
}

struct PersonResult {
    fg: ForegroundSplit,
    labels: Vec<PseudoLabelMap>,
    parts: Option<PartSplit>,
    warnings: Vec<ClusterWarning>,
}

/// Runs both stages independently for every person, in parallel.
///
/// Per-identity degenerate conditions become warnings; only invalid
/// arguments abort.
pub fn generate_pseudo_labels_with(
    set: &FeatureMapSet,
    params: &CascadeParams,
    warm_start: Option<&BTreeMap<u32, ClusterModel>>,
) -> Result<PseudoLabels> {
    if params.k < 2 || params.k > 255 {
        return Err(validation!("K must be in 2..=255, got {}", params.k));
    }
    let persons = set.person_ids();
    let results: Vec<PersonResult> = persons
        .par_iter()
        .map(|&pid| -> Result<PersonResult> {
            let fg = stage1_foreground_split(set, pid, derive_seed(params.seed, &[u64::from(pid), 1]))?;
            let mut warnings = fg.warnings.clone();
            let warm = warm_start.and_then(|w| w.get(&pid));
            let parts = match stage2_part_split(
                set,
                &fg,
                params.k,
                derive_seed(params.seed, &[u64::from(pid), 2, params.round]),
                params.restarts,
                warm,
            ) {
                Ok(parts) => {
                    warnings.extend(parts.warnings.iter().cloned());
                    Some(parts)
                }
                Err(IspError::EmptyForeground { person_id }) => {
                    warnings.push(ClusterWarning::EmptyForeground { person_id });
                    None
                }
                Err(e) => return Err(e),
            };
            let labels = person_label_maps(set, &fg, parts.as_ref());
            Ok(PersonResult { fg, labels, parts, warnings })
        })
        .collect::<Result<_>>()?;

    let n = set.len();
    let mut label_slots: Vec<Option<PseudoLabelMap>> = vec![None; n];
    let mut foreground: Vec<Vec<bool>> = vec![Vec::new(); n];
    let mut models = BTreeMap::new();
    let mut orderings = BTreeMap::new();
    let mut warnings = Vec::new();
    for r in results {
        for ((&i, mask), labels) in r.fg.images.iter().zip(r.fg.masks).zip(r.labels) {
            foreground[i] = mask;
            label_slots[i] = Some(labels);
        }
        if let Some(parts) = r.parts {
            models.insert(parts.person_id, parts.model);
            orderings.insert(parts.person_id, parts.ordering);
        }
        warnings.extend(r.warnings);
    }
    let maps = label_slots.into_iter().map(|m| m.expect("every image belongs to a person")).collect();
    Ok(PseudoLabels { labels: LabelSet::new(params.k, maps)?, foreground, models, orderings, warnings })
}
