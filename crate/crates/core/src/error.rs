use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial {family} duals of block {block} reach {value}, above the upper bound {upper}; raise dual_upper.{family}")]
    DualInit {
        family: crate::Family,
        block: usize,
        value: f64,
        upper: f64,
    },
    #[error("subproblem ({block},{subblock}) failed: {reason}")]
    Inner {
        block: usize,
        subblock: usize,
        reason: String,
    },
    #[error("certificate needs {0}")]
    MissingIntermediate(&'static str),
    #[error("trace too short: need at least {needed} iterations, got {got}")]
    TraceTooShort { needed: usize, got: usize },
    #[error("{0}")]
    Parse(#[from] crate::format::ParseError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context: context.to_string(),
            expected,
            got,
        })
    }
}
