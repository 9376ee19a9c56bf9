use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value while processing patch {patch}: {what}")]
    NonFinite { patch: usize, what: &'static str },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("graph is disconnected: node {unreached} is unreachable from node 0")]
    Disconnected { unreached: usize },

    #[error("malformed tree: {0}")]
    Tree(String),

    #[error("image does not fit the network: {0}")]
    ImageShape(String),

    #[error("malformed PPM: {0}")]
    Ppm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
