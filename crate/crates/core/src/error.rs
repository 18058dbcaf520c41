//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by group arithmetic, discretization, inference and
/// construction routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not a prime number")]
    NotPrime(u64),
    #[error("level must be at least 1")]
    LevelTooSmall,
    #[error("group {p}^{l} has {n} elements, above the cap of {cap}")]
    GroupTooLarge { p: u64, l: u32, n: u64, cap: u64 },
    #[error("element {value} is out of range for a group of {n} elements")]
    ElementOutOfRange { value: u64, n: u64 },
    #[error("expected {expected} digits, got {got}")]
    TooFewDigits { expected: u32, got: usize },
    #[error("digit {digit} is not below p = {p}")]
    DigitOutOfRange { digit: u64, p: u64 },
    #[error("coset index {index} is out of range for p = {p}")]
    CosetIndexOutOfRange { index: u64, p: u64 },
    #[error("group level {l} is below the constancy level {r} of the kernel")]
    LevelBelowConstancy { l: u32, r: u32 },
    #[error("coefficient vector has {got} entries, expected {expected}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("configuration width {got} does not match {expected} units")]
    WidthMismatch { expected: u32, got: u32 },
    #[error("bit-mask {bits} does not fit in {width} bits")]
    BitsOutOfRange { bits: u64, width: u32 },
    #[error("parameter vector for `{name}` has {got} entries, expected {expected}")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("index {index} must lie in [1, {p}-1]")]
    TorsionIndexOutOfRange { index: u64, p: u64 },
    #[error("enumeration over {bits} free bits exceeds the cap of {cap} bits")]
    CapExceeded { bits: u32, cap: u32 },
    #[error("energy evaluated to a non-finite value")]
    NonFiniteEnergy,
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("negative probability {value} at bit-mask {bitmask}")]
    NegativeProbability { bitmask: u64, value: f64 },
    #[error("distribution table has {got} entries, expected {expected}")]
    TableLength { expected: usize, got: usize },
    #[error("distributions already agree; no improving configuration exists")]
    AlreadyMatched,
    #[error("target distribution has empty support")]
    EmptySupport,
    #[error("search budget exhausted; best divergence found was {best_kl}")]
    SearchBudgetExhausted { best_kl: f64 },
    #[error("operation requires a model without deepening layers")]
    DeepeningNotSupported,
    #[error("operation requires a convolutional model")]
    NotConvolutional,
    #[error("malformed model description: {0}")]
    MalformedModel(String),
    #[error("malformed distribution table: {0}")]
    MalformedDistribution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
