use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("episode {episode}: no samples")]
    NoSamples { episode: String },

    #[error("episode {episode}: inclusion violated, core vital {channel} never observed")]
    InclusionViolated { episode: String, channel: String },

    #[error("insufficient history: anchor hour {anchor} needs at least two preceding hours")]
    InsufficientHistory { anchor: usize },

    #[error("anchor hour {anchor} is outside the grid ({hours} hours)")]
    AnchorOutOfRange { anchor: usize, hours: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("too few episodes to split: {found} found, {required} required")]
    TooFewEpisodes { found: usize, required: usize },

    #[error("AUC undefined: labels contain a single class")]
    AucUndefined,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("unreachable label: {0}")]
    UnreachableLabel(String),

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable kind tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Stream(_) => "io",
            Error::Csv(_) => "csv",
            Error::NoSamples { .. } => "no_samples",
            Error::InclusionViolated { .. } => "inclusion_violated",
            Error::InsufficientHistory { .. } => "insufficient_history",
            Error::AnchorOutOfRange { .. } => "anchor_out_of_range",
            Error::DegenerateDataset(_) => "degenerate_dataset",
            Error::TooFewEpisodes { .. } => "too_few_episodes",
            Error::AucUndefined => "auc_undefined",
            Error::NonFinite(_) => "non_finite",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::State(_) => "state",
            Error::Format(_) => "format",
            Error::Training(_) => "training",
            Error::UnreachableLabel(_) => "unreachable_label",
            Error::Domain(_) => "domain",
        }
    }
}
