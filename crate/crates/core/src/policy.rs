//! Central numeric tolerances.
//!
//! Every tolerance used by the library lives here so tests and campaigns can
//! tighten or loosen them uniformly instead of scattering magic numbers.

#[derive(Debug, Clone)]
pub struct NumericPolicy {
    /// Generator rows must sum to zero within this bound.
    pub row_sum_tol: f64,
    /// Probability vectors must sum to one within this bound.
    pub distribution_tol: f64,
    /// Per-entry truncation error of the uniformized matrix exponential.
    pub expm_truncation: f64,
    /// Sup-norm change between successive power iterates that counts as converged.
    pub qsd_convergence: f64,
    /// Iteration cap for the quasi-stationary power iteration.
    pub qsd_max_iters: usize,
    /// Residual bound for linear solves (stationary laws, race harmonics).
    pub linear_residual: f64,
    /// Survival mass below this is treated as vanished.
    pub survival_floor: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            row_sum_tol: 1e-12,
            distribution_tol: 1e-12,
            expm_truncation: 1e-13,
            qsd_convergence: 1e-12,
            qsd_max_iters: 1_000_000,
            linear_residual: 1e-10,
            survival_floor: 1e-300,
        }
    }
}
