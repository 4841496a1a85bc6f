use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter vector or batch does not match the model layout it is used with.
    #[error("layout mismatch: {0}")]
    Layout(String),

    /// Caller-supplied arguments violate an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Bytes do not follow the expected container format.
    #[error("format error: {0}")]
    Format(String),

    /// A payload is shorter or longer than its header declares.
    #[error("length error: {0}")]
    Length(String),

    /// Payload kinds were mixed where the protocol forbids it.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::Layout(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
