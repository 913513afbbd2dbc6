use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A kernel, risk or gradient evaluated to a non-finite value.
    #[error("numerical overflow in {context}{}", fmt_index(*.index))]
    Overflow {
        context: &'static str,
        index: Option<usize>,
    },

    /// The Poisson series did not reach its tolerance within the term budget.
    #[error("series truncated after {max_terms} terms (mu = {mu}, gamma = {gamma})")]
    Truncation { mu: f64, gamma: f64, max_terms: usize },

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid trim fraction {alpha}: no errors remain after trimming {n} values")]
    InvalidTrim { alpha: f64, n: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Failure while fitting at a given optimizer iteration.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

fn fmt_index(index: Option<usize>) -> String {
    match index {
        Some(i) => format!(" at sample {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a sample index to an overflow error that does not carry one yet.
    pub fn at_sample(self, i: usize) -> Self {
        match self {
            Error::Overflow {
                context,
                index: None,
            } => Error::Overflow {
                context,
                index: Some(i),
            },
            other => other,
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// True for errors that come from floating point trouble rather than bad
    /// input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Overflow { .. } | Error::Truncation { .. } | Error::InvalidSchedule(_) => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
