use core::fmt;

/// Faults raised by the pure core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument is outside the operation's domain.
    Argument(&'static str),
    /// A documented contract was violated (e.g. an illegal flag transition).
    Contract(&'static str),
    /// A cursor left the range representable in the packed word.
    Overflow,
    UnknownConfig,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Overflow => f.write_str("head/tail cursor out of packed range"),
            Error::UnknownConfig => f.write_str("unknown cluster configuration (expected C1..C5)"),
        }
    }
}

impl core::error::Error for Error {}
