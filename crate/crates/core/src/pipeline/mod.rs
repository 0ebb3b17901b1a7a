//! The iterative cluster-then-train loop, its configuration and learning-rate schedule.

mod config;
mod run;
mod schedule;

pub use config::{RunConfig, CONFIG_KEYS};
pub use run::{query_gallery_split, run_pipeline, PipelineOutput, RoundRecord, EARLY_STOP_FRACTION};
pub use schedule::LrSchedule;
