use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian: max asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error(
        "eigensolver did not converge: off-diagonal residual {residual:.3e} after {sweeps} sweeps"
    )]
    EigensolverDidNotConverge { residual: f64, sweeps: usize },

    #[error("unsupported spin system: {0}")]
    UnsupportedSpin(String),

    #[error("degenerate levels within the finite-difference stencil for pair ({lower}, {upper})")]
    DegenerateGradient { lower: usize, upper: usize },

    #[error("fit diverged: {0}")]
    FitDiverged(String),

    #[error("singular Jacobian: the model is insensitive to one or more parameters")]
    SingularJacobian,

    #[error("parameter {name} = {value} violates bounds [{lower}, {upper}]")]
    BoundViolation {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("zero modulation frequency: ESEEM at B = 0 has an infinite oscillation period")]
    ZeroModulationFrequency,

    #[error("undefined model value: {0}")]
    UndefinedModel(String),
}
