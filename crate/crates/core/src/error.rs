use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("characteristic 2 is not supported")]
    EvenCharacteristic,
    #[error("modulus is not a monic irreducible polynomial of degree {0}")]
    BadModulus(u32),
    #[error("field too large (q = {0})")]
    FieldTooLarge(u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("element is not a unit")]
    NotUnit,
    #[error("truncation level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),
    #[error("field mismatch")]
    FieldMismatch,
    #[error("precision exhausted: {0}")]
    Precision(String),
    #[error("matrix is not in the expected Bruhat cell: {0}")]
    NotInCell(String),
    #[error("point is not in Y: {0}")]
    NotInY(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("oracle budget exceeded after {0} elements")]
    Budget(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
