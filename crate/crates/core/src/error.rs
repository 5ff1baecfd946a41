use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("Jacobi diagonalization did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("eigenvalue tracks {lower} and {upper} approach within {gap:.3e} at t = {t}")]
    BandCrossing { lower: usize, upper: usize, gap: f64, t: f64 },
    #[error("path declared cyclic but H(T) differs from H(0) by {distance:.3e}")]
    NotCyclicWhenRequired { distance: f64 },
    #[error("operation requires a cyclic path")]
    NotCyclic,
    #[error("holonomy leaks off the diagonal by {leakage:.3e}; step size is not adiabatic")]
    ExcessLeakage { leakage: f64 },
    #[error("band {band} at the endpoint is orthogonal to its initial state (overlap {overlap:.3e})")]
    OrthogonalEndpoint { band: usize, overlap: f64 },
    #[error("degeneracy pattern changed along the path at t = {t}: {from:?} -> {to:?}")]
    DegeneracyDrift { t: f64, from: Vec<usize>, to: Vec<usize> },
    #[error("consecutive axes {index} and {next} are antipodal")]
    AntipodalStep { index: usize, next: usize },
    #[error("time {t} outside frame range [{start}, {end}]")]
    OutOfFrameRange { t: f64, start: f64, end: f64 },

    #[error("density matrix invalid: {0}")]
    InvalidState(String),
    #[error("positivity breach: min eigenvalue {min_eigenvalue:.3e} at t = {t}")]
    PositivityBreach { min_eigenvalue: f64, t: f64 },
    #[error("secular approximation violated: frequency difference {difference:.3e} vs damping scale {damping:.3e}")]
    SecularResonance { difference: f64, damping: f64 },
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("negative dephasing density {value} at alpha = {alpha}")]
    NegativeDensity { alpha: f64, value: f64 },
    #[error("quadrature total weight {quadrature} deviates from integral {integral} (relative {relative:.3e})")]
    QuadratureMismatch { quadrature: f64, integral: f64, relative: f64 },
    #[error("closed form is singular at p = 0; use the regrouped form")]
    ZeroP,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}
