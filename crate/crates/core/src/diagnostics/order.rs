use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::grid::{l1_distance, project_initial, DensityField, Grid1D};
use crate::model::{regularize, ProblemSpec, RegularizationParams};
use crate::scheme::{evolve, Control, SchemeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementAxis {
    /// Δt and Δx refined together; errors plotted against Δx.
    DxDtJoint,
    /// Δx fixed; errors against Δt.
    DtOnly,
    /// Δt fixed; errors against Δx.
    DxOnly,
    /// Grid fixed; errors against ε.
    Epsilon,
}

impl RefinementAxis {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "dx_dt_joint" => Self::DxDtJoint,
            "dt_only" => Self::DtOnly,
            "dx_only" => Self::DxOnly,
            "epsilon" => Self::Epsilon,
            _ => return None,
        })
    }

    fn resolution(self, level: &RefinementLevel) -> f64 {
        match self {
            Self::DxDtJoint | Self::DxOnly => 1.0 / level.n_cells as f64,
            Self::DtOnly => level.dt,
            Self::Epsilon => level.epsilon,
        }
    }
}

/// One run of a study. `epsilon = 0` means the unregularized problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub n_cells: usize,
    pub dt: f64,
    pub epsilon: f64,
}

/// An evolution problem run at several resolutions.
#[derive(Clone)]
pub struct OrderProblem {
    /// Unregularized problem; each level regularizes it with its own ε.
    pub spec: ProblemSpec,
    /// Continuous initial datum, cell-averaged onto every grid.
    pub initial: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub t_end: f64,
    /// Solver settings shared by all levels; `dt` is replaced per level.
    pub solver: SchemeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log resolution`.
    pub fitted_order: f64,
    pub r_squared: f64,
}

impl OrderFit {
    /// `resolution,error` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "resolution,error")?;
        for (h, e) in self.resolutions.iter().zip(&self.errors) {
            writeln!(w, "{h:.16e},{e:.16e}")?;
        }
        Ok(())
    }
}

impl fmt::Display for OrderFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>14}  {:>14}  {:>8}", "resolution", "error", "order")?;
        for (k, (h, e)) in self.resolutions.iter().zip(&self.errors).enumerate() {
            let local = if k == 0 {
                "-".to_string()
            } else {
                let r = (self.errors[k - 1] / e).ln() / (self.resolutions[k - 1] / h).ln();
                format!("{r:.3}")
            };
            writeln!(f, "{h:>14.6e}  {e:>14.6e}  {local:>8}")?;
        }
        write!(f, "fitted order {:.4} (r² = {:.4})", self.fitted_order, self.r_squared)
    }
}

/// Least-squares fit of `log e = p log h + c`.
pub fn fit_order(resolutions: &[f64], errors: &[f64]) -> Result<OrderFit, DiagnosticsError> {
    if resolutions.len() != errors.len() {
        return Err(DiagnosticsError::InvalidInput(format!(
            "{} resolutions but {} errors",
            resolutions.len(),
            errors.len()
        )));
    }
    if resolutions.len() < 3 {
        return Err(DiagnosticsError::InvalidInput(format!(
            "an order fit needs at least 3 levels, got {}",
            resolutions.len()
        )));
    }
    if resolutions.windows(2).any(|w| !(w[1] < w[0])) || resolutions.iter().any(|&h| !(h > 0.0)) {
        return Err(DiagnosticsError::InvalidInput(
            "resolutions must be positive and strictly decreasing".into(),
        ));
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(DiagnosticsError::DegenerateRefinement(format!(
            "error {e:e} cannot enter a log-log fit"
        )));
    }
    let xs: Vec<f64> = resolutions.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(OrderFit {
        resolutions: resolutions.to_vec(),
        errors: errors.to_vec(),
        fitted_order: slope,
        r_squared,
    })
}

/// Averages groups of `N_fine / N_coarse` fine cells onto the coarse grid.
pub fn restrict(fine: &DensityField, coarse: Grid1D) -> Result<DensityField, DiagnosticsError> {
    let (nf, nc) = (fine.grid().n_cells(), coarse.n_cells());
    if nc > nf || nf % nc != 0 {
        return Err(DiagnosticsError::RefinementMismatch { coarse: nc, fine: nf });
    }
    let r = nf / nc;
    let values = fine
        .values()
        .chunks(r)
        .map(|c| c.iter().sum::<f64>() / r as f64)
        .collect();
    Ok(DensityField::new(coarse, values)?)
}

fn run_level(problem: &OrderProblem, level: &RefinementLevel) -> Result<DensityField, DiagnosticsError> {
    let spec = if level.epsilon > 0.0 {
        regularize(&problem.spec, &RegularizationParams::new(level.epsilon, problem.spec.alpha))?
    } else {
        problem.spec.clone()
    };
    let grid = Grid1D::new(level.n_cells)?;
    let rho0 = project_initial(|x| (problem.initial)(x), grid, spec.alpha)?;
    let cfg = SchemeConfig {
        dt: level.dt,
        ..problem.solver.clone()
    };
    Ok(evolve(&rho0, problem.t_end, &cfg, &spec, |_| Control::Continue)?.final_state)
}

/// `(resolution, ‖ρ_level − R ρ_ref‖_{L¹_Δ})` at `t_end` for every level.
pub fn measure_errors(
    problem: &OrderProblem,
    axis: RefinementAxis,
    levels: &[RefinementLevel],
    reference: &RefinementLevel,
) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    for level in levels {
        if reference.n_cells % level.n_cells != 0 {
            return Err(DiagnosticsError::RefinementMismatch {
                coarse: level.n_cells,
                fine: reference.n_cells,
            });
        }
        if level == reference || axis.resolution(level) == axis.resolution(reference) {
            return Err(DiagnosticsError::DegenerateRefinement(format!(
                "level {level:?} coincides with the reference along {axis:?}"
            )));
        }
    }
    let fine = run_level(problem, reference)?;
    let run = |level: &RefinementLevel| -> Result<(f64, f64), DiagnosticsError> {
        let coarse = run_level(problem, level)?;
        let r = restrict(&fine, coarse.grid())?;
        Ok((axis.resolution(level), l1_distance(&coarse, &r)))
    };
    #[cfg(feature = "parallel")]
    let out = levels.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let out = levels.iter().map(run).collect();
    out
}

/// Self-convergence order along `axis` against a fine reference run.
pub fn estimate_order(
    problem: &OrderProblem,
    axis: RefinementAxis,
    levels: &[RefinementLevel],
    reference: &RefinementLevel,
) -> Result<OrderFit, DiagnosticsError> {
    if levels.len() < 3 {
        return Err(DiagnosticsError::InvalidInput(format!(
            "an order study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let mut pairs = measure_errors(problem, axis, levels, reference)?;
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (h, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    fit_order(&h, &e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionFamily, MobilityFamily, PotentialFamily};

    #[test]
    fn fit_recovers_power_law() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let fit = fit_order(&h, &e).unwrap();
        assert!((fit.fitted_order - 1.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let mut csv = Vec::new();
        fit.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("resolution,error\n"));
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_order(&[0.1, 0.05], &[1.0, 0.5]).is_err());
        assert!(fit_order(&[0.1, 0.2, 0.05], &[1.0, 0.5, 0.2]).is_err());
        assert!(matches!(
            fit_order(&[0.1, 0.05, 0.025], &[1.0, 0.0, 0.2]),
            Err(DiagnosticsError::DegenerateRefinement(_))
        ));
    }

    #[test]
    fn restriction_preserves_mass() {
        let fine = DensityField::new(Grid1D::new(8).unwrap(), (0..8).map(|i| i as f64 / 8.0).collect()).unwrap();
        let c = restrict(&fine, Grid1D::new(4).unwrap()).unwrap();
        assert!((c.mass() - fine.mass()).abs() < 1e-15);
        assert_eq!(c.values()[0], 0.0625);
        assert!(matches!(
            restrict(&fine, Grid1D::new(3).unwrap()),
            Err(DiagnosticsError::RefinementMismatch { coarse: 3, fine: 8 })
        ));
    }

    fn problem(initial: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> OrderProblem {
        OrderProblem {
            spec: ProblemSpec::from_families(
                1.0,
                &MobilityFamily::logistic(),
                &DiffusionFamily::Quadratic,
                &PotentialFamily::Harmonic { k: 0.5, center: 0.5 },
            )
            .unwrap(),
            initial,
            t_end: 0.125,
            solver: SchemeConfig::new(0.1),
        }
    }

    #[test]
    fn mismatched_and_degenerate_levels_are_rejected() {
        let p = problem(Arc::new(|_| 0.5));
        let lv = |n: usize| RefinementLevel {
            n_cells: n,
            dt: 1.0 / 64.0,
            epsilon: 0.0,
        };
        let reference = lv(64);
        assert!(matches!(
            measure_errors(&p, RefinementAxis::DxOnly, &[lv(12)], &reference),
            Err(DiagnosticsError::RefinementMismatch { .. })
        ));
        assert!(matches!(
            measure_errors(&p, RefinementAxis::DxOnly, &[lv(64)], &reference),
            Err(DiagnosticsError::DegenerateRefinement(_))
        ));
    }

    #[test]
    fn steady_datum_gives_no_spurious_error() {
        // with V(x) = 0.4x the cell averages of (1 − 0.4x)/2 are a discrete
        // steady state on every grid
        let mut p = problem(Arc::new(|x| (1.0 - 0.4 * x) / 2.0));
        p.spec = ProblemSpec::from_families(
            1.0,
            &MobilityFamily::logistic(),
            &DiffusionFamily::Quadratic,
            &PotentialFamily::Polynomial { coeffs: vec![0.0, 0.4] },
        )
        .unwrap();
        let lv = |n: usize| RefinementLevel {
            n_cells: n,
            dt: 1.0 / 64.0,
            epsilon: 0.0,
        };
        let errs = measure_errors(&p, RefinementAxis::DxOnly, &[lv(16), lv(32), lv(64)], &lv(256)).unwrap();
        let tol = p.solver.tolerance(256);
        for (h, e) in errs {
            assert!(e <= 10.0 * tol, "{h}: {e}");
        }
    }
}
