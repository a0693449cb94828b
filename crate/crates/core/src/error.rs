use thiserror::Error;

use crate::rsp::PrepSettings;

pub type Result<T> = std::result::Result<T, RspError>;

#[derive(Debug, Error)]
pub enum RspError {
    #[error("state is not normalized: trace = {trace}")]
    NotNormalized { trace: f64 },

    #[error("matrix is not Hermitian: max |A - A^dagger| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue = {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("Bloch vector has length {length} > 1")]
    BlochOutsideBall { length: f64 },

    #[error("local filter amplifies: largest singular value = {singular_value}")]
    UnphysicalFilter { singular_value: f64 },

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("conditioning on a null event: success probability = {probability:e}")]
    NullEvent { probability: f64 },

    #[error("state is off the great circle: |s . n| = {residual:e}")]
    OffCircle { residual: f64 },

    #[error("point outside the tetrahedron: eigenvalue lambda_{index} = {value}")]
    OutsideTetrahedron { index: usize, value: f64 },

    #[error("filter mixture is invalid: {0}")]
    InvalidMixture(String),

    #[error("count record is invalid: {0}")]
    InvalidCounts(String),

    #[error("settings optimizer did not converge (best fidelity {})", best.predicted_fidelity)]
    SettingsNotConverged { best: Box<PrepSettings> },

    #[error("maximum-likelihood reconstruction did not converge after {evaluations} evaluations (objective {objective})")]
    TomographyNotConverged { evaluations: usize, objective: f64 },

    #[error("closed form and direct computation disagree by {difference:e}")]
    Inconsistent { difference: f64 },

    #[error("{0}")]
    Invalid(String),
}
