//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the simulator.
///
/// Physics-level errors carry enough context to tell a genuinely invalid
/// regime (e.g. flux past the frustration point) apart from a numerical bug.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed its documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The SNAIL potential has no true minimum at this flux (D2 ≤ 0): the
    /// flux is outside the model's validity range.
    #[error("no potential minimum at reduced flux {flux_rad:.4} rad (D2 = {d2:.4} GHz)")]
    NoMinimum { flux_rad: f64, d2: f64 },

    /// The charge-basis cutoff does not satisfy the convergence invariant.
    #[error("charge cutoff N = {cutoff} too small: lowest levels shift by {shift:.3e} GHz for N+2")]
    CutoffTooSmall { cutoff: usize, shift: f64 },

    /// Two circuit levels are too close for g/e/f labeling to be physical.
    #[error("degenerate levels: E{upper} - E{lower} = {gap:.3e} GHz")]
    DegenerateLevels { lower: usize, upper: usize, gap: f64 },

    /// A closed-form denominator is too close to zero — perturbation theory
    /// diverges at this operating point.
    #[error("near-resonant denominator {name} = {value_ghz:.4} GHz in closed-form effective parameters")]
    NearResonantDenominator { name: &'static str, value_ghz: f64 },

    /// A V-coupled pair of bare levels is (near-)degenerate, so the
    /// Schrieffer–Wolff generator is singular.
    #[error("degenerate subspace in Schrieffer-Wolff generator: |E_{m} - E_{n}| = {gap_ghz:.3e} GHz")]
    DegenerateSubspace { m: usize, n: usize, gap_ghz: f64 },

    /// Dressed-state labeling failed: best bare-state overlap below threshold.
    #[error("ambiguous dressed-state labeling: best overlap {overlap:.3} < 0.7 for bare state {bare}")]
    LabelingAmbiguous { bare: usize, overlap: f64 },

    /// The adaptive integrator could not meet its tolerance.
    #[error("integrator step rejection at t = {t_ns:.3} ns: step size underflow ({dt_ns:.3e} ns)")]
    StepRejection { t_ns: f64, dt_ns: f64 },

    /// A gate would need a drive amplitude in the leakage regime.
    #[error("drive amplitude out of range: required {required_ghz:.4} GHz exceeds limit {limit_ghz:.4} GHz")]
    AmplitudeOutOfRange { required_ghz: f64, limit_ghz: f64 },

    /// A 1-D calibration search failed to bracket or converge.
    #[error("calibration diverged in stage `{stage}`: {detail}")]
    CalibrationDiverged { stage: &'static str, detail: String },

    /// The simulated computational block is not FSim-like.
    #[error("unitary is not FSim-like: deviation {deviation:.3e} exceeds 1e-2 after Z-phase removal")]
    NotFsimLike { deviation: f64 },

    /// The residual-ZZ sweep never changes sign.
    #[error("no ZZ-null crossing: residual ZZ is single-signed over the amplitude grid")]
    NoCrossing,

    /// The RB decay could not be fit.
    #[error("RB fit failed: {0}")]
    FitFailed(String),

    /// An eigensolver did not converge.
    #[error("eigensolver failed to converge: {0}")]
    EigenFailed(String),
}
