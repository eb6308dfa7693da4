use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} is undefined at state {state}")]
    Domain { state: String, what: String },

    #[error(
        "not positive recurrent at this truncation (N = {n}): stationary weights do not decay"
    )]
    NotPositiveRecurrent { n: usize },

    #[error("tail mass beyond N = {n} is unknown; increase N")]
    UnknownTail { n: usize },

    #[error("truncation too small: support requires N >= {required}")]
    TruncationTooSmall { required: usize },

    #[error("hypothesis `{hypothesis}` fails at state {state}")]
    Hypothesis { hypothesis: String, state: usize },

    #[error("certification failed at state {state}: residual {residual} keeps growing")]
    CertificationFailed { state: String, residual: f64 },

    #[error("restriction violated: alpha_p = {alpha} exceeds 2b(p-1)/(3pa) = {limit}; raise b")]
    RestrictionViolated { alpha: f64, limit: f64 },

    #[error("tilted partition function diverges at lambda = {lambda}")]
    DivergentPartition { lambda: f64 },

    #[error("possible explosion at this horizon: {events} events by time {time}")]
    EventCapExceeded { events: u64, time: f64 },

    #[error("state space of {size} configurations exceeds the enumeration limit")]
    StateSpaceTooLarge { size: u128 },

    #[error("only {effective} effective samples; at least 100 required")]
    InsufficientSamples { effective: f64 },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(state: impl ToString, what: impl Into<String>) -> Self {
        Error::Domain {
            state: state.to_string(),
            what: what.into(),
        }
    }
}
