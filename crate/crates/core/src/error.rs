use core::fmt;

/// Errors raised by the scheduling and analysis routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A dense system had no usable pivot.
    SingularMatrix,
    /// A string state or configuration had an unsupported module count.
    ModuleCount(usize),
    /// A requested level is not reachable with the given module count.
    LevelOutOfRange {
        /// Requested level.
        level: i32,
        /// Module count.
        modules: usize,
    },
    /// Textual state notation could not be parsed.
    ParseState(alloc::string::String),
    /// Observer table lookup for a state of the wrong length.
    MissingLutEntry,
    /// State selection was asked to choose from nothing.
    NoCandidates,
    /// Ratio of a signal whose mean is zero.
    ZeroMean,
    /// Signal too short for the requested analysis.
    TooShort(usize),
    /// A numeric parameter fell outside its valid range.
    Parameter(&'static str),
    /// Vector arguments with mismatched lengths.
    LengthMismatch {
        /// Expected length.
        expected: usize,
        /// Received length.
        found: usize,
    },
    /// The scheduler found no state realizing the modulator's level.
    DeadEnd {
        /// Tick index at which the dead end occurred.
        tick: usize,
        /// Level that could not be realized.
        level: i32,
    },
}

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularMatrix => write!(f, "singular matrix"),
            Error::ModuleCount(n) => write!(f, "unsupported module count {n} (expected 2..=8)"),
            Error::LevelOutOfRange { level, modules } => {
                write!(f, "level {level} unreachable with {modules} modules")
            }
            Error::ParseState(s) => write!(f, "invalid state notation: {s}"),
            Error::MissingLutEntry => write!(f, "state not present in observer table"),
            Error::NoCandidates => write!(f, "empty candidate set"),
            Error::ZeroMean => write!(f, "ratio undefined for zero-mean signal"),
            Error::TooShort(n) => write!(f, "signal too short ({n} samples)"),
            Error::Parameter(what) => write!(f, "parameter out of range: {what}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::DeadEnd { tick, level } => {
                write!(f, "no state realizes level {level} at tick {tick}")
            }
        }
    }
}

impl core::error::Error for Error {}
