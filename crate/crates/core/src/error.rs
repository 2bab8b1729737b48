use std::fmt;

use thiserror::Error;

use crate::archmodel::ArchViolation;
use crate::schedule::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer shape: {0}")]
    InvalidShape(String),

    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),

    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),

    /// Wraps an error raised while parsing a particular line of an input file.
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid schedule: {}", ViolationList(.0))]
    InvalidSchedule(Vec<Violation>),

    #[error("invalid architecture: {}", ViolationList(.0))]
    InvalidArch(Vec<ArchViolation>),

    #[error("non-positive memory size {0} bytes")]
    NonPositiveSize(u64),

    #[error("tensor extent mismatch for {tensor}: expected {expected} elements, got {actual}")]
    ExtentMismatch {
        tensor: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error(
        "simulation of {macs} MACs exceeds the cap of {cap}; use the analytic model for layers this large"
    )]
    SimulationCap { macs: u64, cap: u64 },

    #[error("search space of {size} blockings exceeds the budget of {budget}")]
    BudgetExceeded { size: u64, budget: u64 },

    #[error("no feasible design: {0}")]
    NoSolution(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_line(self, line: usize) -> Error {
        match self {
            e @ Error::Line { .. } => e,
            e => Error::Line {
                line,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through line wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Line { source, .. } => source.root(),
            e => e,
        }
    }
}

struct ViolationList<'a, T>(&'a [T]);

impl<T: fmt::Display> fmt::Display for ViolationList<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
