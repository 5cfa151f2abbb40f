//! Error type shared by all modules.

use thiserror::Error;

/// Errors surfaced by construction, transform, transport and flow operations.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A shape or invariant check failed while building a value.
    #[error("validation: {0}")]
    Validation(String),

    /// `-Σλ` is not an integer within tolerance.
    #[error("non-integral degree: -Σλ = {value} is {distance:.3e} away from the nearest integer")]
    NonIntegralDegree { value: String, distance: f64 },

    /// Requested exponents are not a permutation of the residue spectrum.
    #[error("spectrum mismatch at puncture {point}: λ row is not a permutation of the residue eigenvalues (worst gap {gap:.3e})")]
    SpectrumMismatch { point: usize, gap: f64 },

    /// Exhaustive classification ran out of its declared budget.
    #[error("search budget exceeded for (r, n) = ({rank}, {points}); classification is only valid within the searched budget")]
    SearchBudgetExceeded { rank: usize, points: usize },

    /// Invariant-subspace enumeration is exhaustive only up to rank 3.
    #[error("rank budget exceeded: exhaustive invariant-subspace search supports r <= 3, got r = {rank}")]
    RankBudgetExceeded { rank: usize },

    /// A stability candidate's intersection dimensions are inconsistent.
    #[error("inconsistent candidate: intersection dimensions at puncture {point} sum to {sum}, expected rank {rank}")]
    InconsistentCandidate { point: usize, sum: usize, rank: usize },

    /// A flag's adapted basis is too ill-conditioned to shear through.
    #[error("flag degenerate at puncture {point}: condition number {cond:.3e} exceeds {limit:.3e}")]
    FlagDegenerate { point: usize, cond: f64, limit: f64 },

    /// A gauge left the simple-pole class or is singular where it must not be.
    #[error("singular gauge: {0}")]
    SingularGauge(String),

    /// Loop construction cannot achieve the required clearance.
    #[error("geometry too tight: {0}; move the basepoint or relax the clearance")]
    GeometryTooTight(String),

    /// The adaptive integrator hit its minimum step size.
    #[error("step underflow at s = {at}: step {step:.3e} below minimum {min:.3e}")]
    StepUnderflow { at: f64, step: f64, min: f64 },

    /// Two punctures get closer than the deformation clearance.
    #[error("configuration collision: punctures {i} and {j} at distance {distance:.3e} < clearance {clearance:.3e} (s = {at})")]
    ConfigurationCollision { i: usize, j: usize, distance: f64, clearance: f64, at: f64 },

    /// A residue norm diverged: the trajectory is leaving the trivial-bundle
    /// chart, not breaking down.
    #[error("chart exit at s = {at}: ‖A_{point}‖ = {norm:.3e} exceeds {threshold:.3e}")]
    ChartExit { at: f64, point: usize, norm: f64, threshold: f64 },

    /// A puncture crossed the basepoint's argument-sorting cut (or the sort
    /// order changed); loop labels are no longer comparable across the path.
    #[error("ordering cut crossed at s = {at}: {detail}; split the path at that point")]
    OrderingCutCrossed { at: f64, detail: String },

    /// The normalization loop exceeded its step budget.
    #[error("normalization did not terminate within {budget} steps ({applied} applied)")]
    NormalizationBudget { budget: usize, applied: usize },

    /// A numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code class: 2 validation, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::NonIntegralDegree { .. }
            | Error::SpectrumMismatch { .. }
            | Error::InconsistentCandidate { .. }
            | Error::ConfigurationCollision { .. }
            | Error::GeometryTooTight(_)
            | Error::RankBudgetExceeded { .. }
            | Error::SearchBudgetExceeded { .. } => 2,
            _ => 3,
        }
    }
}
