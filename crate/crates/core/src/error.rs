use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("extension degree must be at least 1")]
    ZeroDegree,
    #[error("field order {0} exceeds 2^32")]
    FieldTooLarge(u128),
    #[error("modulus has degree {got}, expected {expected}")]
    ModulusDegree { expected: u32, got: usize },
    #[error("modulus is not monic")]
    ModulusNotMonic,
    #[error("modulus coefficient {coeff} is not a residue mod {p}")]
    ModulusCoefficient { coeff: u64, p: u32 },
    #[error("modulus is reducible over F_{p}")]
    ReducibleModulus { p: u32 },
    #[error("element encoding {value} outside [0, {q})")]
    ElementOutOfRange { value: u64, q: u64 },
    #[error("inversion of zero")]
    InverseOfZero,
    #[error("quadratic character is only defined for odd characteristic")]
    EvenCharacteristic,
    #[error("parse error in {input:?} at byte {pos}: {msg}")]
    Parse { input: String, pos: usize, msg: String },
    #[error("invalid degree {n}: {why}")]
    InvalidDegree { n: u64, why: &'static str },
    #[error("explicit set lists element {0} more than once")]
    DuplicateElement(u32),
    #[error("field of order {q} exceeds the enumeration cap {cap}")]
    EnumerationCap { q: u64, cap: u64 },
    #[error("closed formula not available: {0}")]
    FormulaUnavailable(&'static str),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("state space needs {needed} bytes, cap is {cap}; use the boolean engine or brute force")]
    StateSpaceTooLarge { needed: u128, cap: u128 },
    #[error("brute force would enumerate {needed} subsets, cap is {cap}")]
    BruteCapExceeded { needed: u128, cap: u128 },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn parse(input: &str, pos: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            input: input.to_string(),
            pos,
            msg: msg.into(),
        }
    }
}
