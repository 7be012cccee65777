//! The implicit upwind finite-volume step.
//!
//! With `ξ_i = U'(ρ_i) + V(x_i)` and `v_{i+1/2} = -(ξ_{i+1} - ξ_i)/Δx`, the
//! interface flux is
//!
//! ```text
//! F_{i+1/2} = m1(ρ_i) m2(ρ_{i+1}) v⁺ + m1(ρ_{i+1}) m2(ρ_i) v⁻,   F_{1/2} = F_{N+1/2} = 0
//! ```
//!
//! and one backward-Euler step solves `H(λ = 1, ρ) = ρⁿ` where
//! `H_i(λ, ρ) = ρ_i + λ (Δt/Δx) (F_{i+1/2} - F_{i-1/2})`.

mod bracket;
mod ops;
mod solve;
mod tridiag;

use thiserror::Error;

use crate::grid::GridError;

pub use bracket::constant_bracket;
pub use ops::{apply_h, flux, jacobian, velocity};
pub use solve::{evolve, implicit_step, Control, HalvingEvent, StepRecord, StepView, Trajectory};
pub use tridiag::Tridiagonal;

pub(crate) use ops::Scheme;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("U'(rho) is infinite at cell {cell} (rho = {value})")]
    SingularEvaluation { cell: usize, value: f64 },
    #[error("Newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("converged state leaves [0, alpha] at cell {cell} (rho = {value})")]
    BoundViolation { cell: usize, value: f64 },
    #[error("step at t = {t} failed after {halvings} time-step halvings")]
    StepFailed { t: f64, halvings: u32 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Which one-sided derivative the Jacobian uses at `v = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Absolute tolerance on `Σ|G_i|`; `None` means `1e-12 · N`.
    pub newton_tol: Option<f64>,
    pub newton_max_iter: usize,
    /// Smallest Armijo step before a Newton solve is declared failed.
    pub damping_min: f64,
    /// λ-continuation stages used when plain Newton fails.
    pub homotopy_stages: Vec<f64>,
    /// Iterates are kept in `[δ, α - δ]` with `δ = clamp_margin · α` when `U'`
    /// is singular.
    pub clamp_margin: f64,
    pub sign_at_zero: TieRule,
    /// Δt halvings [`evolve`] may apply to a failing step.
    pub max_halvings: u32,
}

impl SchemeConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            newton_tol: None,
            newton_max_iter: 50,
            damping_min: 2f64.powi(-20),
            homotopy_stages: vec![0.25, 0.5, 0.75, 1.0],
            clamp_margin: 1e-14,
            sign_at_zero: TieRule::Positive,
            max_halvings: 10,
        }
    }

    pub fn tolerance(&self, n_cells: usize) -> f64 {
        self.newton_tol.unwrap_or(1e-12 * n_cells as f64)
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: String| Err(SchemeError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if let Some(tol) = self.newton_tol {
            if !(tol > 0.0) {
                return bad(format!("newton_tol = {tol} must be positive"));
            }
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1".into());
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            return bad(format!("damping_min = {} must lie in (0, 1]", self.damping_min));
        }
        if !(self.clamp_margin > 0.0 && self.clamp_margin < 0.5) {
            return bad(format!("clamp_margin = {} must lie in (0, 1/2)", self.clamp_margin));
        }
        let st = &self.homotopy_stages;
        if st.is_empty()
            || st.last() != Some(&1.0)
            || st.windows(2).any(|w| w[1] <= w[0])
            || st[0] <= 0.0
        {
            return bad(format!("homotopy_stages {st:?} must increase strictly in (0, 1] and end at 1"));
        }
        Ok(())
    }
}

/// Record of one implicit step (or of the composed sub-steps of a halved one).
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    /// `Σ|H(ρ) - ρⁿ|` at the accepted state.
    pub residual: f64,
    /// `F_{i+1/2}` for `i = 0..=N`; both ends are exactly zero.
    pub fluxes: Vec<f64>,
    /// `v_{i+1/2}` at the `N - 1` interior interfaces.
    pub velocities: Vec<f64>,
    pub energy_before: Option<f64>,
    pub energy_after: Option<f64>,
    /// `Δt Δx Σ F_{i+1/2} v_{i+1/2} = Δt Δx Σ Θ |v|²`.
    pub dissipation: f64,
    pub used_homotopy: bool,
    /// Number of solver steps this report covers (1 unless Δt was halved).
    pub substeps: usize,
    pub dt: f64,
}
