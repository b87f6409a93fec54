use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid rule syntax: {0}")]
    RuleSyntax(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("disconnected rule")]
    DisconnectedRule,

    #[error("unsafe rule: head variable absent from the body")]
    UnsafeRule,

    #[error("CWA confidence undefined for empty body")]
    EmptyBody,

    #[error("undefined head coverage: head relation has no facts")]
    UndefinedHeadCoverage,

    #[error("undefined functionality: relation has no facts")]
    UndefinedFunctionality,

    #[error("degenerate example set: positives and negatives must both be non-empty")]
    DegenerateExamples,

    #[error("matrix oracle requires chain rules")]
    NotChain,

    #[error("empty graph")]
    EmptyGraph,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid ratio `{0}`")]
    InvalidRatio(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
