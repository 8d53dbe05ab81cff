use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter evaluation failed at t = {t}: {reason}")]
    Evaluation { t: f64, reason: String },

    #[error("time {t} lies outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("exact integer overflow computing {0}")]
    Overflow(String),

    #[error(
        "algebra verification failed (tol {tol:e} x scale {scale}): {}",
        format_failures(.failures)
    )]
    AlgebraVerification {
        failures: Vec<(String, f64)>,
        tol: f64,
        scale: f64,
    },

    #[error(
        "block closure failure for m = {m}: {what} residual {residual:e} exceeds {tol:e} x {scale}"
    )]
    BlockClosure {
        m: usize,
        what: String,
        residual: f64,
        tol: f64,
        scale: f64,
    },

    #[error("singular auxiliary equations at t = {t}: |sin θ| = {sin_theta:e}")]
    Singularity { t: f64, sin_theta: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize },

    #[error("auxiliary trajectory fails certification: residual {residual:e} exceeds {bound:e}")]
    Certification { residual: f64, bound: f64 },

    #[error("transformation check failed ({what}): residual {residual:e} exceeds {tol:e}")]
    Transformation {
        what: String,
        residual: f64,
        tol: f64,
    },

    #[error("state normalization error: {0}")]
    Normalization(String),

    #[error("oracle run rejected: {0}")]
    RejectedRun(String),

    #[error("division guard: |cos θ| = {cos_theta:e} below {guard:e}")]
    DivisionGuard { cos_theta: f64, guard: f64 },

    #[error("cycle closure failure: φ(T) - φ(0) - 2π = {mismatch:e}")]
    CycleClosure { mismatch: f64 },

    #[error("truncation error: {0}")]
    Truncation(String),
}

fn format_failures(failures: &[(String, f64)]) -> String {
    failures
        .iter()
        .map(|(name, r)| format!("{name} = {r:e}"))
        .collect::<Vec<_>>()
        .join(", ")
}
