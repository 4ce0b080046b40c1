use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("moment ({i},{j}) lies outside the provider window {window}")]
    WindowExceeded { i: i64, j: i64, window: i64 },

    #[error("moment table has no entry for ({i},{j})")]
    MissingEntry { i: i64, j: i64 },

    #[error("quadrature did not converge: achieved relative change {achieved:.3e}, tolerance {tolerance:.3e}")]
    QuadratureNonConvergence { achieved: f64, tolerance: f64 },

    #[error("moment table format: {0}")]
    TableFormat(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("evaluation point ({x}, {y}) lies on a coordinate axis")]
    OnAxis { x: f64, y: f64 },

    #[error("moment matrix is not positive definite at level {level} (basis index {index}, pivot {pivot:.3e})")]
    NotPositiveDefinite { level: usize, index: usize, pivot: f64 },

    #[error("moment matrix is numerically singular at level {level}: pivot ratio {ratio:.3e} below {threshold:.3e}")]
    IllConditioned { level: usize, ratio: f64, threshold: f64 },

    #[error("level {level} exceeds the available maximum {max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("rank condition violated: {condition} has rank {rank}, expected {expected}")]
    RankDeficient {
        condition: String,
        rank: usize,
        expected: usize,
    },

    #[error("symmetry condition violated: {condition} (deviation {deviation:.3e})")]
    SymmetryViolated { condition: String, deviation: f64 },

    #[error("denominator {value:.3e} is degenerate; use the confluent form")]
    DegenerateDenominator { value: f64 },

    #[error("confluent prefactor is singular: |t^2 - 1| = {value:.3e}")]
    ConfluentSingular { value: f64 },

    #[error("left inverse is ill-conditioned at level {level}: smallest singular value ratio {ratio:.3e}")]
    LeftInverseIllConditioned { level: usize, ratio: f64 },

    #[error("univariate recurrence breaks down at n = {n}: {reason}")]
    Univariate { n: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
