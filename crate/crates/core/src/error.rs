//! Error type shared by all model and simulation operations.

use core::fmt;

/// Errors raised by parameter validation and simulation operations.
///
/// Parameter errors name the first violated invariant so that batch runs
/// fail fast with an actionable message.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A named invariant on input data does not hold.
    Invalid(&'static str),
    /// A digital control code is outside its representable range.
    CodeOutOfRange {
        field: &'static str,
        value: i64,
        max: i64,
    },
    /// `optimal_ipf` with a closed-loop gain at or below one.
    NoPositiveFeedback,
    /// The fixed positive-feedback capacitor is at or below the optimum, so
    /// the sink CDAC has no current to absorb.
    UnderCompensated,
    /// A grounded-input calibration step was requested while the inputs
    /// still carry their sources.
    NotGrounded,
    /// A trace-consuming operation received an empty trace.
    EmptyTrace,
    /// A trace is too short for the requested estimate.
    TraceTooShort { needed: usize, got: usize },
    /// A frequency argument must be positive (or inside the signal band).
    InvalidFrequency,
    /// A measurement needs a longer capture than the configured duration.
    DurationTooShort { periods_needed: u32 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(what) => write!(f, "{what}"),
            Error::CodeOutOfRange { field, value, max } => {
                write!(f, "{field} = {value} out of range 0..={max}")
            }
            Error::NoPositiveFeedback => write!(f, "no positive-feedback solution"),
            Error::UnderCompensated => {
                write!(f, "internal IBL cannot sink under-compensated current")
            }
            Error::NotGrounded => write!(f, "plant not in grounded-input mode"),
            Error::EmptyTrace => write!(f, "empty trace"),
            Error::TraceTooShort { needed, got } => {
                write!(f, "trace too short: need {needed} samples, got {got}")
            }
            Error::InvalidFrequency => write!(f, "frequency must be positive and in band"),
            Error::DurationTooShort { periods_needed } => {
                write!(f, "duration shorter than {periods_needed} test periods")
            }
        }
    }
}

impl core::error::Error for Error {}
