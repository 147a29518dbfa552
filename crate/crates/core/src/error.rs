use thiserror::Error;

use crate::events::CountMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Conditioning on a class of probability zero.
    #[error("impossible event: class {class} for type {ty} at level {level} has probability 0")]
    ImpossibleEvent { ty: u32, level: usize, class: u32 },

    /// Zero or several predicates hold for one count matrix.
    #[error("not a partition at level {level}: {holding} predicates hold for count matrix {matrix}")]
    NotAPartition {
        level: usize,
        matrix: CountMatrix,
        holding: usize,
    },

    #[error("enumeration guard exceeded: about {estimate:.3e} trees (limit {limit:.0e})")]
    EnumerationTooLarge { estimate: f64, limit: f64 },

    #[error("predicate parse error in `{expr}` at column {column}: {message}")]
    Parse {
        expr: String,
        column: usize,
        message: String,
    },

    #[error("{}", fmt_config(.line, .message))]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("tree text error at byte {offset}: {message}")]
    TreeSyntax { offset: usize, message: String },

    #[error("sampler postcondition violated: {0}")]
    Postcondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_config(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config error (line {l}): {message}"),
        None => format!("config error: {message}"),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: msg.into(),
        }
    }
}
