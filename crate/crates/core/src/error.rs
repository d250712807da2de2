use crate::expr::ParseError;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("quasinorm tail does not converge (order-sum ratio {ratio:.3} >= 1)")]
    NonConvergentTail { ratio: f64 },
    #[error("quadrature did not converge (achieved error {achieved:.3e})")]
    QuadratureNotConverged { achieved: f64 },
    #[error("stationary point inside the amplitude support (min |f'_x| = {min_grad:.3e})")]
    StationaryPointDetected { min_grad: f64 },
    #[error("degenerate Hessian at the critical point (|det| = {det:.3e})")]
    DegenerateHessian { det: f64 },
    #[error("Newton iteration failed (residual {residual:.3e})")]
    NewtonFailed { residual: f64 },
    #[error("input not band-limited (top-band spectral fraction {fraction:.3e})")]
    AliasingRisk { fraction: f64 },
    #[error("trajectory left the domain at t = {t:.6}")]
    LeftDomain { t: f64 },
    #[error("mixed Hessian degenerate (|det| = {det:.3e})")]
    DegenerateMixedHessian { det: f64 },
    #[error("caustic detected (Jacobian indicator {indicator:.3e})")]
    CausticDetected { indicator: f64 },
    #[error("interpolation failed: {0}")]
    InterpolationError(String),
    #[error("ellipticity lost (min modulus {min:.3e})")]
    EllipticityLost { min: f64 },
    #[error("grid under-resolves the wavelength ({points_per_wavelength:.2} points per wavelength)")]
    ResolutionInsufficient { points_per_wavelength: f64 },
    #[error("model not supported: {0}")]
    ModelNotSupported(String),
    #[error("every residual is at the numerical floor")]
    AllAtFloor,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub type Result<T> = std::result::Result<T, Error>;
