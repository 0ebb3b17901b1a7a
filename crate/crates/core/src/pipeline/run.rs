use std::fmt::Write as _;

use rayon::prelude::*;

use super::RunConfig;
use crate::cluster::{generate_pseudo_labels_with, CascadeParams, ClusterWarning, PseudoLabels};
use crate::error::{IspError, Result};
use crate::eval::{cmc_map, parsing_iou, IouReport, MetricReport};
use crate::losses::{reid_objective, LossReport, ReidHeads, ReidLossParams};
use crate::matching::{distance_matrix, DistanceMatrix};
use crate::parsing::{
    forward_confidences, pool_from_confidences, Descriptor, PartClassifier, PixelBatch, TrainOptions, Trainer,
};
use crate::rng::derive_seed;
use crate::tensor::{FeatureMapSet, LabelMap, LabelSet};

/// Label changes below this fraction of pixels end the run when early stopping is on.
pub const EARLY_STOP_FRACTION: f64 = 1e-3;

/// What happened during one clustering round and the training interval after it.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Epochs trained after this round's clustering: `epoch_start..epoch_end`.
    pub epoch_start: usize,
    pub epoch_end: usize,
    /// Fraction of pixels whose pseudo-label differs from the previous round.
    pub label_change: Option<f64>,
    /// Training loss after each epoch of the interval.
    pub train_losses: Vec<f64>,
    /// Re-ID objective on descriptors pooled at the end of the interval, when
    /// the batch admits a triplet anchor.
    pub reid: Option<LossReport>,
    /// IoU of this round's pseudo-labels against the supplied truth.
    pub pseudo_iou: Option<IouReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub classifier: PartClassifier,
    /// Pseudo-labels from the last clustering round.
    pub labels: LabelSet,
    /// Stage-1 foreground masks from the last clustering round.
    pub foreground: Vec<Vec<bool>>,
    /// One descriptor per image, in feature-set order.
    pub descriptors: Vec<Descriptor>,
    pub history: Vec<RoundRecord>,
    /// Retrieval metrics and final pseudo-label IoU.
    pub report: MetricReport,
    /// IoU of the classifier's argmax parsing against the truth.
    pub prediction_iou: Option<IouReport>,
    pub distances: Option<DistanceMatrix>,
    pub warnings: Vec<ClusterWarning>,
}

impl PipelineOutput {
    pub fn clustering_rounds(&self) -> usize {
        self.history.len()
    }

    /// One `key=value` line per round.
    pub fn history_text(&self) -> String {
        let mut s = String::new();
        for r in &self.history {
            let _ = write!(s, "round={} epochs={}..{}", r.round, r.epoch_start, r.epoch_end);
            if let Some(c) = r.label_change {
                let _ = write!(s, " label_change={c}");
            }
            if let Some(l) = r.train_losses.last() {
                let _ = write!(s, " parsing_loss={l}");
            }
            if let Some(reid) = &r.reid {
                let _ = write!(s, " l_p={} l_f={} l_g={} total={}", reid.l_p, reid.l_f, reid.l_g, reid.total);
            }
            if let Some(iou) = &r.pseudo_iou {
                if let Some(fg) = iou.foreground {
                    let _ = write!(s, " iou.fg={fg}");
                }
                let _ = write!(s, " iou.mean={}", iou.mean_iou);
            }
            s.push('\n');
        }
        s
    }
}

/// Per identity, the first image (in set order) is the query and the rest are gallery.
pub fn query_gallery_split(descs: &[Descriptor]) -> (Vec<Descriptor>, Vec<Descriptor>) {
    let mut seen = std::collections::BTreeSet::new();
    let (mut q, mut g) = (Vec::new(), Vec::new());
    for d in descs {
        if seen.insert(d.person_id) {
            q.push(d.clone());
        } else {
            g.push(d.clone());
        }
    }
    (q, g)
}

fn label_change(prev: &LabelSet, next: &LabelSet) -> f64 {
    let (mut changed, mut total) = (0usize, 0usize);
    for (a, b) in prev.maps.iter().zip(&next.maps) {
        total += a.labels.len();
        changed += a.labels.iter().zip(&b.labels).filter(|(x, y)| x != y).count();
    }
    if total == 0 {
        0.0
    } else {
        changed as f64 / total as f64
    }
}

fn pool_all(clf: &PartClassifier, set: &FeatureMapSet) -> Result<(Vec<Descriptor>, Vec<LabelMap>)> {
    let pooled: Vec<(Descriptor, LabelMap)> = set
        .maps()
        .par_iter()
        .map(|m| {
            let conf = forward_confidences(clf, m)?;
            Ok((pool_from_confidences(&conf, m)?, conf.to_label_map(m.person_id())))
        })
        .collect::<Result<_>>()?;
    Ok(pooled.into_iter().unzip())
}

fn class_indices(set: &FeatureMapSet) -> Vec<usize> {
    let ids = set.person_ids();
    set.maps().iter().map(|m| ids.binary_search(&m.person_id()).expect("person id listed")).collect()
}

fn monitor_reid(
    descs: &[Descriptor],
    classes: &[usize],
    n_id: usize,
    cfg: &RunConfig,
    l_parsing: f64,
) -> Result<Option<LossReport>> {
    let heads = ReidHeads::from_class_means(descs, classes, n_id)?;
    let params = ReidLossParams { margin: cfg.margin, epsilon: cfg.epsilon, alpha: cfg.alpha };
    match reid_objective(descs, classes, &heads, &params, l_parsing) {
        Ok(r) => Ok(Some(r)),
        Err(IspError::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn iou_against(labels: &[LabelMap], truth: Option<&LabelSet>, k: usize) -> Result<Option<IouReport>> {
    truth.map(|t| parsing_iou(labels, &t.maps, k.max(t.k))).transpose()
}

/// Alternates cascaded clustering and classifier training, then pools
/// descriptors and evaluates retrieval.
///
/// Clustering runs at epochs `0, n, 2n, ...` below `total_epochs`, so a full
/// run performs `ceil(total_epochs / n)` rounds.
pub fn run_pipeline(set: &FeatureMapSet, cfg: &RunConfig, truth: Option<&LabelSet>) -> Result<PipelineOutput> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let shape = set.shape();
    let classes = class_indices(set);
    let mut trainer = Trainer::new(
        PartClassifier::zeros(cfg.k, shape.c)?,
        TrainOptions { batch_size: cfg.batch_size, reduction: cfg.loss_reduction },
    );

    let cluster = |round: usize, warm: Option<&PseudoLabels>| {
        let params = CascadeParams {
            k: cfg.k,
            seed: derive_seed(cfg.seed, &[10]),
            restarts: cfg.cluster_restarts,
            round: round as u64,
        };
        let warm_models = warm.filter(|_| cfg.warm_start).map(|p| &p.models);
        generate_pseudo_labels_with(set, &params, warm_models)
    };

    let mut current = cluster(0, None)?;
    let mut warnings = current.warnings.clone();
    let mut history = Vec::new();
    let mut change = None;
    let mut epoch = 0;
    let mut round = 0;
    loop {
        let batch = PixelBatch::from_maps(set, &current.labels.maps)?;
        let end = (epoch + cfg.reassign_interval).min(cfg.total_epochs);
        let losses = trainer.train_epochs(&batch, &schedule, epoch..end, derive_seed(cfg.seed, &[20, round as u64]))?;
        let (descs, _) = pool_all(&trainer.classifier, set)?;
        let l_parsing = losses.last().copied().unwrap_or(0.0);
        history.push(RoundRecord {
            round,
            epoch_start: epoch,
            epoch_end: end,
            label_change: change,
            train_losses: losses,
            reid: monitor_reid(&descs, &classes, set.n_id(), cfg, l_parsing)?,
            pseudo_iou: iou_against(&current.labels.maps, truth, cfg.k)?,
        });
        epoch = end;
        if epoch >= cfg.total_epochs {
            break;
        }
        round += 1;
        let next = cluster(round, Some(&current))?;
        let frac = label_change(&current.labels, &next.labels);
        change = Some(frac);
        warnings.extend(next.warnings.iter().cloned());
        current = next;
        if cfg.early_stop && frac < EARLY_STOP_FRACTION {
            // one more interval is not run; record the round that triggered the stop
            history.push(RoundRecord {
                round,
                epoch_start: epoch,
                epoch_end: epoch,
                label_change: change,
                train_losses: Vec::new(),
                reid: None,
                pseudo_iou: iou_against(&current.labels.maps, truth, cfg.k)?,
            });
            break;
        }
    }

    let (descriptors, predicted) = pool_all(&trainer.classifier, set)?;
    let (queries, gallery) = query_gallery_split(&descriptors);
    let (distances, retrieval) = if queries.is_empty() || gallery.is_empty() {
        (None, None)
    } else {
        let dm = distance_matrix(&queries, &gallery)?;
        let metrics = match cmc_map(&dm) {
            Ok(m) => Some(m),
            Err(IspError::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        (Some(dm), metrics)
    };
    let parsing = iou_against(&current.labels.maps, truth, cfg.k)?;
    let prediction_iou = iou_against(&predicted, truth, cfg.k)?;
    Ok(PipelineOutput {
        classifier: trainer.classifier,
        labels: current.labels,
        foreground: current.foreground,
        descriptors,
        history,
        report: MetricReport { retrieval, parsing },
        prediction_iou,
        distances,
        warnings,
    })
}
