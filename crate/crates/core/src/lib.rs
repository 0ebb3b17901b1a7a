//! Identity-guided human parsing for part-aligned person re-identification.
//!
//! Given per-image feature maps and identity labels, this crate
//!
//! 1. clusters every person's pixels into foreground/background and then into
//!    `K - 1` parts ([`cluster`]), producing pixel-level pseudo-labels;
//! 2. trains a linear softmax part classifier on those labels ([`parsing`]);
//! 3. pools part, foreground and global descriptors weighted by the
//!    classifier's confidences, with a visibility flag per part;
//! 4. matches descriptors using only parts visible in both images ([`matching`]);
//! 5. evaluates retrieval (CMC, mAP) and parsing IoU ([`eval`]).
//!
//! [`synth`] generates feature maps with planted parts and ground truth, and
//! [`pipeline`] runs the whole loop.

mod binio;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matching;
pub mod parsing;
pub mod pipeline;
mod rng;
pub mod synth;
pub mod tensor;

pub use cluster::{generate_pseudo_labels, kmeans, ClusterModel, ClusterWarning, PartOrdering, PseudoLabels};
pub use error::{ErrorCategory, IspError, Result};
pub use eval::{cmc_map, parsing_iou, IouReport, MetricReport, RetrievalMetrics};
pub use losses::{reid_objective, smoothed_ce, triplet_loss, IdHead, LossReport};
pub use matching::{aligned_distance, cosine_distance, distance_matrix, visibility_labels, DistanceMatrix, ItemMeta};
pub use parsing::{
    forward_confidences, parsing_loss, pool_descriptor, train_classifier, ConfidenceMaps, Descriptor, PartClassifier,
    PixelBatch, Reduction,
};
pub use pipeline::{run_pipeline, LrSchedule, PipelineOutput, RunConfig};
pub use rng::derive_seed;
pub use synth::{generate, SyntheticData, SyntheticSpec};
pub use tensor::{
    activation_map, direction_map, load_feature_set, load_label_set, save_feature_set, save_label_set, ActivationMap,
    DirectionMap, FeatureMap, FeatureMapSet, LabelMap, LabelSet, MapShape, PseudoLabelMap,
};
