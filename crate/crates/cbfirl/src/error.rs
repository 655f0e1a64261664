use thiserror::Error;

/// Crate-wide error type. Shape mismatches in the network code are treated
/// as programmer errors and panic instead of going through here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible configuration: {0}")]
    ConfigInfeasible(String),

    #[error("episode already finished (t = {t}, horizon = {horizon})")]
    EpisodeFinished { t: usize, horizon: usize },

    #[error("training diverged: non-finite gradient entry")]
    TrainingDiverged,

    #[error("expert too weak: acceptance ratio {ratio:.4} over first {attempts} attempts")]
    ExpertTooWeak { ratio: f64, attempts: usize },

    #[error("pd threshold infeasible: acceptance ratio {ratio:.6} over {proposals} proposals")]
    ThresholdInfeasible { ratio: f64, proposals: usize },

    #[error("barrier unlearnable: held-out sign accuracy {accuracy:.3} is below 0.80")]
    BarrierUnlearnable { accuracy: f64 },

    #[error("heatmap requires a 2-d environment, got dim = {0}")]
    UnsupportedDimension(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
