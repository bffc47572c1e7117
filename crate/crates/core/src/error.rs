use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("not enough marked jumps in window [{eta}, {upper}]: found {found}, need 2")]
    NotEnoughMarkedJumps { eta: f64, upper: f64, found: usize },

    #[error("non-finite state after t = {last_good_time} (last finite value {last_good_value})")]
    NonFinite { last_good_time: f64, last_good_value: f64 },

    #[error("jump-time derivative undefined at the evaluation time t = {time}")]
    NonDifferentiablePoint { time: f64 },

    #[error("flow of sigma diverged from y = {start} over time {span}{context}")]
    FlowDivergence { start: f64, span: f64, context: String },

    #[error("diffusion coefficient vanishes (|sigma| = {value}) at x = {x}")]
    AssumptionHViolation { x: f64, value: f64 },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Attaches jump context to a flow divergence.
    pub fn with_jump_context(self, time: f64) -> Self {
        match self {
            Error::FlowDivergence { start, span, .. } => Error::FlowDivergence {
                start,
                span,
                context: format!(" (jump at t = {time})"),
            },
            other => other,
        }
    }
}
