//! Evaluation, persistence, and the command-line surface.

pub mod cli;
pub mod config;
pub mod heatmap;
pub mod metrics;

pub use cli::cli_main;
pub use config::RunConfig;
pub use heatmap::{heatmap, Heatmap};
pub use metrics::{evaluate, EpisodeRecord, Metrics};
