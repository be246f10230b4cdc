use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("coordinate descent requires the uniform kernel, got {0}")]
    NonUniformKernel(crate::kernels::KernelId),

    #[error(
        "every coordinate in sweep {sweep} had an empty smoothing band; increase the bandwidth h"
    )]
    DegenerateBand { sweep: usize },

    #[error("solver did not converge within {max_iter} iterations")]
    NoConvergence { max_iter: usize },

    #[error("oracle support is empty")]
    EmptySupport,

    #[error("no penalized coordinates: every coordinate is in the unpenalized set")]
    AllUnpenalized,

    #[error("relative improvement undefined: the first stage estimate equals the target")]
    ZeroDenominator,

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("path stopped: {active} active coefficients exceed the limit of {limit}")]
    Saturated { active: usize, limit: usize },

    #[error("cross-validation failed at every lambda in the grid")]
    NoValidLambda,

    #[error("{failed} of {reps} replications failed, exceeding the 10% limit")]
    TooManyFailures { failed: usize, reps: usize },
}

impl Error {
    pub(crate) fn in_stage(self, stage: usize) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
