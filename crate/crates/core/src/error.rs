use alloc::string::String;

/// Every failure the core can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("record list is empty")]
    EmptyCorpus,
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("utterance `{0}` has empty text")]
    EmptyText(String),
    #[error("utterance `{0}` has an empty label")]
    EmptyLabel(String),
    #[error("requested {requested} intents but only {available} are available")]
    InsufficientIntents { requested: usize, available: usize },
    #[error("intent `{intent}` has {available} utterances, {needed} needed")]
    InsufficientUtterances {
        intent: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),
    #[error("episode {episode_id} violates an invariant: {reason}")]
    EpisodeInvariant { episode_id: u64, reason: String },
    #[error("unsatisfiable episode constraints: {0}")]
    Unsatisfiable(String),
    #[error("episode statistics out of tolerance: {0}")]
    StatsOutOfTolerance(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("text `{0}` produced no tokens")]
    EmptyTokens(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("score {0} lies outside (0, 1)")]
    ScoreOutOfRange(f64),
    #[error("non-finite loss at update {update}")]
    NonFiniteLoss { update: u64 },
    #[error("reports were computed on different evaluation episodes: {0}")]
    MismatchedEpisodes(String),
    #[error("test intent `{0}` also appears in the training split")]
    Leakage(String),
}

impl Error {
    /// Whether the error comes from invalid input (as opposed to a numeric or
    /// runtime failure).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::ZeroNorm | Error::ScoreOutOfRange(_)
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
