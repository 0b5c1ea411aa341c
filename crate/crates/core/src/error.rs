use std::path::PathBuf;

use thiserror::Error;

use crate::params::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {0} is not a probability")]
    InvalidProbability(f64),

    #[error("error rate {0} outside the admissible range {1}")]
    EpsOutOfRange(f64, &'static str),

    #[error("invalid CA code {0:?}: expected four binary digits such as 1000")]
    InvalidCode(String),

    #[error("r = 0: {0} is undefined")]
    ZeroR(&'static str),

    #[error("degenerate denominator in the gamma table ({side}, {cell})")]
    DegenerateDenominator { side: Side, cell: String },

    #[error("power iteration did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("island creation impossible: p + q = 0")]
    DegenerateCreation,

    #[error("ring must have at least 3 cells, got {0}")]
    RingTooSmall(usize),

    #[error("ring contains '?' cells where a binary configuration is required")]
    NotBinary,

    #[error("expected {expected} uniforms, got {got}")]
    UniformCount { expected: usize, got: usize },

    #[error("coupling dominance violated at time {time}, cell {cell}")]
    DominanceViolation { time: u64, cell: usize },

    #[error("pair state {0} is unreachable from the refined laws")]
    UnreachablePairState(String),

    #[error("raster rows have unequal lengths")]
    RaggedRaster,

    #[error("{0}")]
    Invalid(String),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
