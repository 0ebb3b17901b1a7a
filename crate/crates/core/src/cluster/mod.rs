//! Clustering: k-means and the cascaded pseudo-label generator built on it.

pub mod cascade;
pub mod kmeans;

pub use cascade::{
    generate_pseudo_labels, generate_pseudo_labels_with, stage1_foreground_split, stage2_part_split, CascadeParams,
    ClusterWarning, ForegroundSplit, PartOrdering, PartSplit, PseudoLabels, DEFAULT_RESTARTS,
};
pub use kmeans::{kmeans, ClusterModel, KMeansOutput, KMeansParams};
