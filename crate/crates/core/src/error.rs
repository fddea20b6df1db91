//! Error types shared across the toolkit.

use thiserror::Error;

/// Everything that can go wrong, from parsing an expression to losing a
/// continuation branch. Variants carry enough context to be reported in a
/// machine-readable way by the CLI and the C API.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("missing binding for variable `{name}`")]
    MissingBinding { name: String },

    #[error("domain error at byte {offset}: {message}")]
    EvalDomain { offset: usize, message: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("{what} did not converge after {iterations} iterations (last residuals: {residuals:?})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("singular algebraic block: |det d2g| = {det:.3e} below threshold")]
    SingularBlock { det: f64 },

    #[error("left the problem domain ({location}, component {component})")]
    LeftDomain { location: String, component: usize },

    #[error("state norm {norm:.3e} exceeded escape bound {bound:.3e} at t = {t:.6e}")]
    BlowUp { t: f64, norm: f64, bound: f64 },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StiffFailure { t: f64, h: f64 },

    #[error("zero of F on the box boundary: min boundary |F| = {min_norm:.3e} <= {tol:.3e}")]
    BoundaryZero { min_norm: f64, tol: f64 },

    #[error("degenerate zero in dimension {dim}: winding index is only available for k+s = 2")]
    DegenerateUnsupportedDim { dim: usize },

    #[error("winding number {turning:.6} is not within {tol:.1e} of an integer")]
    AmbiguousWinding { turning: f64, tol: f64 },

    #[error("zero of the tangent field is degenerate; its index is undefined by sign det")]
    DegenerateTangentZero,

    #[error("continuation origin is T-resonant; the shooting predictor is undefined there")]
    ResonantOrigin,

    #[error("continuation step failed: step size fell below {ds_min:.3e}")]
    StepFailure { ds_min: f64 },

    #[error("singular shooting Jacobian: condition estimate {cond:.3e} (near-resonance)")]
    SingularShootingJacobian { cond: f64 },

    #[error("degree over the box ({degree}) equals the index sum of the listed zeros; the multiplicity hypothesis fails")]
    DegreeMatch { degree: i64 },

    #[error("found only {found} distinct periodic orbits after {retries} retries; {needed} required")]
    InsufficientOrbits {
        found: usize,
        needed: usize,
        retries: usize,
    },

    #[error("A22 block is rank deficient: |det| = {det:.3e}")]
    RankDeficientA22 { det: f64 },

    #[error("kernel condition violated: {0}")]
    KernelMismatch(String),

    #[error("no clear singular-value gap at rank decision: sigma[{index}] = {value:.3e} vs tol {tol:.3e}")]
    RankAmbiguous { index: usize, value: f64, tol: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate a misuse of the API or bad input rather
    /// than a numerical failure encountered mid-computation. The CLI maps
    /// these to exit code 2, the rest to exit code 1.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::UnknownFunction { .. }
                | Error::MissingBinding { .. }
                | Error::InvalidProblem(_)
                | Error::Precondition(_)
                | Error::ResonantOrigin
                | Error::DegreeMatch { .. }
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
