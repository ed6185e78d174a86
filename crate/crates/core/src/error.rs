use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type.
///
/// Variants are grouped by subsystem; the CLI maps operational errors
/// (parse failures, I/O, bad preconditions) to exit code 1 and
/// checked-and-failed verdicts to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    // ---- curve construction & calibration ----
    #[error("polynomial has a constant term (exponent 0); curves must fix the origin")]
    ConstantTerm,
    #[error("polynomial {index} has no nonzero coefficient")]
    ZeroPolynomial { index: usize },
    #[error("curve coefficient matrix has rank 0; input is corrupted")]
    DegenerateCurve,
    #[error(
        "lattice calibration failed: no Gamma <= {cap} certifies the phase bounds \
         (worst violation at xi={xi:?}, t={t}, s={s}, ell={ell}, value={value:.3e})"
    )]
    CalibrationFailed {
        cap: u32,
        xi: Vec<f64>,
        t: f64,
        s: u32,
        ell: u32,
        value: f64,
    },

    // ---- grid operations ----
    #[error("scale ell={ell} is not resolvable at dims {dims:?}: kernel support covers fewer than {min_cells} cells")]
    Resolution { ell: u32, dims: Vec<usize>, min_cells: usize },
    #[error("band k={k} is empty at this resolution (Nyquist radius {nyquist:.1})")]
    Nyquist { k: i32, nyquist: f64 },
    #[error("operation requires a {expected}-dimensional grid, got {got}")]
    Dimension { expected: usize, got: usize },

    // ---- oscillatory integrals ----
    #[error("quadrature error target {target:.1e} unreachable within {panels} panels (achieved {achieved:.1e})")]
    Quadrature { target: f64, achieved: f64, panels: usize },
    #[error("curve satisfies neither lemma hypothesis: {detail}")]
    Hypothesis { detail: String },
    #[error("xi with |xi|={norm:.4} lies outside the shell [1/2, 4]")]
    Shell { norm: f64 },

    // ---- counting / corner ----
    #[error("P_1,s is not strictly monotone on the t-window: derivative changes sign near t={critical_t:.6e}")]
    Substitution { critical_t: f64 },

    // ---- bourgain iteration ----
    #[error("schedule admits only {found} scales under the resolution cap (need at least 3)")]
    Schedule { found: usize },
    #[error(
        "iteration exhausted its budget at step {step}: neither dichotomy branch certifiable \
         (counting form {counting:.3e} <= threshold {threshold:.3e}, increment {increment:.3e} < {needed:.3e})"
    )]
    BudgetExceeded {
        step: usize,
        counting: f64,
        threshold: f64,
        increment: f64,
        needed: f64,
    },

    // ---- pattern search ----
    #[error("no witness found: all {scanned} scanned t values stayed below the noise threshold (best overlap {best_overlap:.3e})")]
    NoWitnessFound { scanned: usize, best_overlap: f64 },
    #[error("no slice met the measure floor {floor:.3e} (best observed {best:.3e})")]
    NoSliceFound { floor: f64, best: f64 },
    #[error("no admissible dyadic size 2^(s*d) >= N/2^d fits N={n}")]
    Rounding { n: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),

    // ---- plumbing ----
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
