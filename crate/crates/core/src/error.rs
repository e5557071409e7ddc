use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown symbol '{symbol}' at offset {pos}")]
    UnknownSymbol { symbol: char, pos: usize },

    #[error("machine has a cycle through node v{0}")]
    CyclicFsm(usize),

    #[error("invalid environment spec at `{path}`: {msg}")]
    Spec { path: String, msg: String },

    #[error("no free start cell")]
    NoFreeStart,

    #[error("step called after the episode ended")]
    EpisodeDone,

    #[error("trajectory is not conditioned on the given path")]
    NotConditioned,

    #[error("expected a positive trajectory")]
    NotPositive,

    #[error("{0} buffer is empty")]
    EmptyBuffer(&'static str),

    #[error("every positive trajectory is empty after preprocessing")]
    EmptyPositives,

    #[error("parent already has a child with key {0}")]
    DuplicateChild(String),

    #[error("node {0} is not in the tree")]
    UnknownNode(usize),

    #[error("exploration cap hit after {episodes} episodes with {positives}/{required} conditioned positives")]
    ExploreCap {
        episodes: usize,
        positives: usize,
        required: usize,
    },

    #[error("enumeration cap of {0} feasible assignments exceeded")]
    EnumerationCap(usize),

    #[error("environment step budget of {0} exhausted")]
    BudgetExhausted(u64),

    #[error("policy row for state {0} is not a probability distribution")]
    PolicyRow(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn spec(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Spec {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
