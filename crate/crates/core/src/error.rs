use alloc::string::String;
use core::fmt;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Requested register size is outside `1..=MAX_QUBITS`.
    QubitBudget { requested: usize },
    /// A qubit index does not exist on the register.
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    /// A gate lists the same wire twice or has the wrong number of targets.
    InvalidTargets { kind: &'static str, targets: usize },
    /// The number of resolved angles does not match the gate kind.
    AngleCount { kind: &'static str, expected: usize, got: usize },
    /// Parameter or input vector length differs from the template's slot count.
    SlotCount { what: &'static str, expected: usize, got: usize },
    /// Tensor shapes disagree.
    Shape(String),
    /// A variable handle does not belong to the tape it was used with.
    ForeignVar,
    /// `backward` was called on a non-scalar value.
    NonScalarLoss { len: usize },
    /// A class label is outside `0..classes`.
    LabelOutOfRange { label: usize, classes: usize },
    /// A value lies outside the open interval a function is defined on.
    Domain { what: &'static str, value: f64 },
    /// An operation got an empty input it cannot work with.
    Empty(&'static str),
    /// A dataset or split specification is malformed.
    InvalidSpec(String),
    /// The requested combination is not supported.
    Unsupported(&'static str),
    /// Samples have zero variance; the density is a point mass at `value`.
    PointMass { value: f64 },
    /// A loss became NaN or infinite during training.
    Diverged { step: usize, value: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::QubitBudget { requested } => write!(
                f,
                "qubit budget exceeded: {requested} qubits requested, supported range is 1..={}",
                crate::statevector::MAX_QUBITS
            ),
            Error::QubitOutOfRange { qubit, n_qubits } => {
                write!(f, "qubit {qubit} out of range for a {n_qubits}-qubit register")
            }
            Error::InvalidTargets { kind, targets } => {
                write!(f, "invalid target list for {kind}: {targets} targets or duplicate wire")
            }
            Error::AngleCount { kind, expected, got } => {
                write!(f, "{kind} takes {expected} angle(s), got {got}")
            }
            Error::SlotCount { what, expected, got } => {
                write!(f, "{what} slot mismatch: template expects {expected}, got {got}")
            }
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::ForeignVar => f.write_str("variable does not belong to this tape"),
            Error::NonScalarLoss { len } => write!(f, "loss must be a scalar, got {len} values"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::Domain { what, value } => write!(f, "{what}: value {value} outside domain"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::InvalidSpec(msg) => write!(f, "invalid specification: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::PointMass { value } => {
                write!(f, "degenerate sample: zero variance, point mass at {value}")
            }
            Error::Diverged { step, value } => {
                write!(f, "training diverged at step {step}: loss = {value}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
