//! Steady-state detection, convergence-order fits and the invariant audits.

mod audit;
mod order;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{discrete_energy, l1_distance, w_minus_1_1_norm, DensityField, GridError};
use crate::model::{ModelError, ProblemSpec};
use crate::scheme::{evolve, Control, HalvingEvent, SchemeConfig, SchemeError, StepRecord, StepView};
use crate::steady::{verify_fixed_point, SteadyError};

pub use audit::{
    AUDIT_SLACK,
    contraction_audit, energy_audit, random_interior_field, ContractionReport, EnergyReport, EnergyWindow, PairResult,
};
pub use order::{estimate_order, fit_order, measure_errors, restrict, OrderFit, OrderProblem, RefinementAxis, RefinementLevel};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("no steady state detected within {max_steps} steps (last rate {last_rate:e})")]
    NoConvergence { max_steps: usize, last_rate: f64 },
    #[error("coarse grid of {coarse} cells does not divide the reference grid of {fine} cells")]
    RefinementMismatch { coarse: usize, fine: usize },
    #[error("degenerate refinement: {0}")]
    DegenerateRefinement(String),
    #[error("invalid diagnostics input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SteadyCriterion {
    /// `‖ρⁿ⁺¹ − ρⁿ‖_{L¹_Δ} / Δt < tol_rate`.
    #[default]
    StepChange,
    /// `E[ρⁿ] − E[ρⁿ⁺¹] < tol_e`.
    EnergyPlateau,
    /// `‖ρⁿ⁺¹ − ρⁿ‖_{W⁻¹,¹_Δ} / Δt < tol_rate`.
    DualStepChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyDetector {
    pub criterion: SteadyCriterion,
    pub tol_rate: f64,
    pub tol_e: f64,
    /// Consecutive firings required.
    pub patience: usize,
}

impl Default for SteadyDetector {
    fn default() -> Self {
        Self {
            criterion: SteadyCriterion::StepChange,
            tol_rate: 1e-10,
            tol_e: 1e-14,
            patience: 5,
        }
    }
}

impl SteadyDetector {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.tol_rate > 0.0 && self.tol_e > 0.0) {
            return Err(DiagnosticsError::InvalidInput(format!(
                "detector tolerances must be positive (tol_rate = {}, tol_e = {})",
                self.tol_rate, self.tol_e
            )));
        }
        if self.patience == 0 {
            return Err(DiagnosticsError::InvalidInput("detector patience must be at least 1".into()));
        }
        Ok(())
    }

    /// The monitored quantity for one step and whether it is below threshold.
    pub fn measure(&self, view: &StepView<'_>, spec: &ProblemSpec, dt: f64) -> (f64, bool) {
        match self.criterion {
            SteadyCriterion::StepChange => {
                let rate = l1_distance(view.state, view.previous) / dt;
                (rate, rate < self.tol_rate)
            }
            SteadyCriterion::DualStepChange => {
                let d: Vec<f64> = view.state.values().iter().zip(view.previous.values()).map(|(a, b)| a - b).collect();
                let rate = w_minus_1_1_norm(&d, view.state.grid()) / dt;
                (rate, rate < self.tol_rate)
            }
            SteadyCriterion::EnergyPlateau => {
                let drop = match (view.report.energy_before, view.report.energy_after) {
                    (Some(a), Some(b)) => a - b,
                    _ => match (discrete_energy(view.previous, spec), discrete_energy(view.state, spec)) {
                        (Ok(a), Ok(b)) => a - b,
                        _ => f64::INFINITY,
                    },
                };
                (drop, drop < self.tol_e)
            }
        }
    }
}

/// A run stopped by the detector.
#[derive(Debug, Clone)]
pub struct SteadyRun {
    pub final_state: DensityField,
    pub steps: usize,
    pub records: Vec<StepRecord>,
    pub halvings: Vec<HalvingEvent>,
    /// Monitored quantity at the last step.
    pub last_rate: f64,
    /// Outcome of the one-step fixed-point cross-check on the final state.
    pub fixed_point: bool,
    pub fixed_point_change: f64,
}

/// Evolves until `detector` fires `patience` times in a row.
pub fn run_to_steady(
    rho0: &DensityField,
    config: &SchemeConfig,
    spec: &ProblemSpec,
    detector: &SteadyDetector,
    max_steps: usize,
) -> Result<SteadyRun, DiagnosticsError> {
    run_to_steady_observed(rho0, config, spec, detector, max_steps, |_| ())
}

/// [`run_to_steady`] with a per-step callback.
pub fn run_to_steady_observed<F>(
    rho0: &DensityField,
    config: &SchemeConfig,
    spec: &ProblemSpec,
    detector: &SteadyDetector,
    max_steps: usize,
    mut on_step: F,
) -> Result<SteadyRun, DiagnosticsError>
where
    F: FnMut(&StepView<'_>),
{
    detector.validate()?;
    let mut streak = 0;
    let mut last_rate = f64::INFINITY;
    let traj = evolve(rho0, max_steps as f64 * config.dt, config, spec, |view| {
        on_step(view);
        let (rate, fired) = detector.measure(view, spec, config.dt);
        last_rate = rate;
        streak = if fired { streak + 1 } else { 0 };
        if streak >= detector.patience {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    if streak < detector.patience {
        return Err(DiagnosticsError::NoConvergence { max_steps, last_rate });
    }
    let (fixed_point, fixed_point_change) = verify_fixed_point(&traj.final_state, config, spec)?;
    Ok(SteadyRun {
        steps: traj.steps(),
        final_state: traj.final_state,
        records: traj.records,
        halvings: traj.halvings,
        last_rate,
        fixed_point,
        fixed_point_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::model::{DiffusionFamily, MobilityFamily, PotentialFamily};
    use crate::steady::solve_mass_constant;

    fn harmonic() -> ProblemSpec {
        ProblemSpec::from_families(
            1.0,
            &MobilityFamily::logistic(),
            &DiffusionFamily::Quadratic,
            &PotentialFamily::Harmonic { k: 10.0, center: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn steady_datum_fires_within_patience() {
        let sp = harmonic();
        let grid = Grid1D::new(32).unwrap();
        let p = solve_mass_constant(0.3, &sp, grid).unwrap();
        let cfg = SchemeConfig::new(2f64.powi(-5));
        for criterion in [
            SteadyCriterion::StepChange,
            SteadyCriterion::EnergyPlateau,
            SteadyCriterion::DualStepChange,
        ] {
            let det = SteadyDetector {
                criterion,
                ..Default::default()
            };
            let run = run_to_steady(&p.field, &cfg, &sp, &det, 100).unwrap();
            assert!(run.steps <= det.patience, "{criterion:?}: {}", run.steps);
            assert!(run.fixed_point);
        }
    }

    #[test]
    fn reports_no_convergence() {
        let sp = harmonic();
        let grid = Grid1D::new(32).unwrap();
        let rho0 = DensityField::constant(grid, 0.3);
        let err = run_to_steady(&rho0, &SchemeConfig::new(2f64.powi(-5)), &sp, &SteadyDetector::default(), 3).unwrap_err();
        assert!(matches!(err, DiagnosticsError::NoConvergence { max_steps: 3, .. }));
    }

    #[test]
    fn detector_rejects_bad_tolerances() {
        let det = SteadyDetector {
            tol_rate: 0.0,
            ..Default::default()
        };
        assert!(det.validate().is_err());
        let det = SteadyDetector {
            patience: 0,
            ..Default::default()
        };
        assert!(det.validate().is_err());
    }
}
