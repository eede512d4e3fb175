use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Each variant belongs to one module; [`Error::exit_code`] maps modules to
/// distinct process exit codes for the command-line front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative probability {value} at outcome {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    SumNotOne { sum: f64 },
    #[error("a categorical variable needs at least 2 outcomes, got {0}")]
    TooFewOutcomes(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a PMD needs at least one component")]
    EmptyPmd,
    #[error("dense grid of {cells} cells exceeds the memory guard")]
    GridTooLarge { cells: u128 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
    #[error("Jacobi iteration did not converge")]
    NoConvergence,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("integer overflow; result does not fit in 64 bits")]
    Overflow,
    #[error("dual ball enumeration visited more than {0} points")]
    BallTooLarge(u64),

    #[error("empty sample set")]
    EmptySampleSet,
    #[error("transform of {0} points exceeds the size limit")]
    SizeOverflow(usize),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("lattice matrix is singular after rounding")]
    SingularAfterRounding,

    #[error("point lies outside the fundamental domain")]
    OutOfDomain,
    #[error("lattice matrix is not diagonal")]
    NotDiagonal,

    #[error("{states} distinct data states exceed the cap of {cap}")]
    StateExplosion { states: usize, cap: usize },
    #[error("family would have {0} members, above the limit")]
    FamilyTooLarge(u128),
    #[error("no separating moment found")]
    NoSeparatingMoment,
    #[error("family members must differ")]
    IdenticalMembers,

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("equilibrium search exhausted all candidates")]
    SearchExhausted,

    #[error("covariance is degenerate on the hyperplane (sigma = {0})")]
    DegenerateCovariance(f64),
    #[error("covariance does not annihilate the all-ones vector")]
    NotHyperplaneDegenerate,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            NegativeProbability { .. } => "NegativeProbability",
            SumNotOne { .. } => "SumNotOne",
            TooFewOutcomes(_) => "TooFewOutcomes",
            DimensionMismatch { .. } => "DimensionMismatch",
            EmptyPmd => "EmptyPmd",
            GridTooLarge { .. } => "GridTooLarge",
            TooFewSamples { .. } => "TooFewSamples",
            NotSymmetric(_) => "NotSymmetric",
            NoConvergence => "NoConvergence",
            SingularMatrix => "SingularMatrix",
            Overflow => "Overflow",
            BallTooLarge(_) => "BallTooLarge",
            EmptySampleSet => "EmptySampleSet",
            SizeOverflow(_) => "SizeOverflow",
            InvalidShape(_) => "InvalidShape",
            InvalidHypothesis(_) => "InvalidHypothesis",
            SingularAfterRounding => "SingularAfterRounding",
            OutOfDomain => "OutOfDomain",
            NotDiagonal => "NotDiagonal",
            StateExplosion { .. } => "StateExplosion",
            FamilyTooLarge(_) => "FamilyTooLarge",
            NoSeparatingMoment => "NoSeparatingMoment",
            IdenticalMembers => "IdenticalMembers",
            IndexOutOfRange(_) => "IndexOutOfRange",
            InvalidGame(_) => "InvalidGame",
            SearchExhausted => "SearchExhausted",
            DegenerateCovariance(_) => "DegenerateCovariance",
            NotHyperplaneDegenerate => "NotHyperplaneDegenerate",
            InvalidParameter(_) => "InvalidParameter",
            Parse(_) => "ParseError",
            Io(_) => "IoError",
        }
    }

    /// Process exit code used by the `pmd` binary.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Parse(_) => 2,
            Io(_) => 3,
            InvalidParameter(_) => 4,
            NegativeProbability { .. }
            | SumNotOne { .. }
            | TooFewOutcomes(_)
            | DimensionMismatch { .. }
            | EmptyPmd
            | GridTooLarge { .. }
            | TooFewSamples { .. } => 10,
            NotSymmetric(_) | NoConvergence | SingularMatrix | Overflow | BallTooLarge(_) => 11,
            EmptySampleSet | SizeOverflow(_) | InvalidShape(_) | InvalidHypothesis(_) => 12,
            SingularAfterRounding => 13,
            OutOfDomain | NotDiagonal => 14,
            StateExplosion { .. } | FamilyTooLarge(_) | NoSeparatingMoment | IdenticalMembers => 15,
            IndexOutOfRange(_) | InvalidGame(_) | SearchExhausted => 16,
            DegenerateCovariance(_) | NotHyperplaneDegenerate => 17,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
