use super::{Scheme, SchemeConfig, SchemeError, StepReport};
use crate::grid::{discrete_energy, DensityField};
use crate::model::ProblemSpec;

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;

struct Solved {
    rho: Vec<f64>,
    iterations: usize,
    residual: f64,
}

enum NewtonFailure {
    Stalled { residual: f64, iterations: usize },
    Eval(SchemeError),
}

impl From<SchemeError> for NewtonFailure {
    fn from(e: SchemeError) -> Self {
        Self::Eval(e)
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

impl Scheme<'_> {
    /// Damped Newton for `H(λ, ρ) = prev` from `start`.
    fn newton(
        &self,
        prev: &[f64],
        lambda: f64,
        dt: f64,
        start: &[f64],
        cfg: &SchemeConfig,
    ) -> Result<Solved, NewtonFailure> {
        let tol = cfg.tolerance(self.n());
        let mut x = start.to_vec();
        self.project(&mut x);
        let mut g = self.residual(&x, prev, lambda, dt)?;
        let mut r = l1(&g);
        let mut iterations = 0;
        // at least one correction, so a step whose starting residual is
        // already below `tol` still moves towards the root
        while r > tol || iterations == 0 {
            if iterations == cfg.newton_max_iter {
                return Err(NewtonFailure::Stalled { residual: r, iterations });
            }
            iterations += 1;
            let jac = self.jacobian(&x, lambda, dt)?;
            let minus_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(step) = jac.solve(&minus_g) else {
                return Err(NewtonFailure::Stalled { residual: r, iterations });
            };
            let mut theta = 1.0;
            loop {
                let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + theta * d).collect();
                self.project(&mut trial);
                // the residual may be undefined on a trial point only through a
                // singular U', which the projection rules out
                let gt = self.residual(&trial, prev, lambda, dt)?;
                let rt = l1(&gt);
                if rt <= (1.0 - ARMIJO * theta) * r || rt <= tol {
                    x = trial;
                    g = gt;
                    r = rt;
                    break;
                }
                theta *= 0.5;
                if theta < cfg.damping_min {
                    return Err(NewtonFailure::Stalled { residual: r, iterations });
                }
            }
        }
        Ok(Solved {
            rho: x,
            iterations,
            residual: r,
        })
    }

    /// Plain Newton at λ = 1, then λ-continuation over the configured stages.
    fn solve_step(&self, prev: &[f64], dt: f64, cfg: &SchemeConfig) -> Result<(Solved, bool), SchemeError> {
        let first = match self.newton(prev, 1.0, dt, prev, cfg) {
            Ok(s) => return Ok((s, false)),
            Err(NewtonFailure::Eval(e)) => return Err(e),
            Err(NewtonFailure::Stalled { residual, iterations }) => (residual, iterations),
        };
        let mut x = prev.to_vec();
        let mut total = first.1;
        let mut last = None;
        for &lambda in &cfg.homotopy_stages {
            match self.newton(prev, lambda, dt, &x, cfg) {
                Ok(s) => {
                    total += s.iterations;
                    x.clone_from(&s.rho);
                    last = Some(s);
                }
                Err(NewtonFailure::Eval(e)) => return Err(e),
                Err(NewtonFailure::Stalled { residual, iterations }) => {
                    return Err(SchemeError::NewtonDiverged {
                        residual,
                        iterations: total + iterations,
                    })
                }
            }
        }
        let mut s = last.expect("homotopy stages end at 1");
        s.iterations = total;
        Ok((s, true))
    }

    pub(crate) fn step(
        &self,
        prev: &DensityField,
        dt: f64,
        cfg: &SchemeConfig,
    ) -> Result<(DensityField, StepReport), SchemeError> {
        let alpha = self.spec.alpha;
        let (solved, used_homotopy) = self.solve_step(prev.values(), dt, cfg)?;
        if let Some((cell, &value)) = solved
            .rho
            .iter()
            .enumerate()
            .find(|(_, &r)| !(r >= -1e-9 && r <= alpha + 1e-9))
        {
            return Err(SchemeError::BoundViolation { cell, value });
        }
        let mut rho = solved.rho;
        for r in rho.iter_mut() {
            *r = r.clamp(0.0, alpha);
        }
        let xi = self.xi(&rho)?;
        let velocities = self.velocities(&xi);
        let fluxes = self.fluxes(&rho, &velocities);
        let dx = self.grid.dx();
        let dissipation = dt * dx * velocities.iter().zip(&fluxes[1..]).map(|(v, f)| v * f).sum::<f64>();
        let next = DensityField::new(self.grid, rho)?;
        let report = StepReport {
            iterations: solved.iterations,
            residual: solved.residual,
            fluxes,
            velocities,
            energy_before: discrete_energy(prev, self.spec).ok(),
            energy_after: discrete_energy(&next, self.spec).ok(),
            dissipation,
            used_homotopy,
            substeps: 1,
            dt,
        };
        Ok((next, report))
    }

    /// One nominal step of size `dt`, halving up to `cfg.max_halvings` times.
    fn advance(
        &self,
        prev: &DensityField,
        dt: f64,
        depth: u32,
        t: f64,
        cfg: &SchemeConfig,
        events: &mut Vec<HalvingEvent>,
    ) -> Result<(DensityField, StepReport), SchemeError> {
        match self.step(prev, dt, cfg) {
            Ok(ok) => Ok(ok),
            Err(SchemeError::NewtonDiverged { residual, .. }) => {
                if depth >= cfg.max_halvings {
                    return Err(SchemeError::StepFailed { t, halvings: depth });
                }
                events.push(HalvingEvent {
                    t,
                    dt,
                    depth: depth + 1,
                    residual,
                });
                let half = 0.5 * dt;
                let (mid, a) = self.advance(prev, half, depth + 1, t, cfg, events)?;
                let (end, b) = self.advance(&mid, half, depth + 1, t + half, cfg, events)?;
                Ok((
                    end,
                    StepReport {
                        iterations: a.iterations + b.iterations,
                        residual: a.residual.max(b.residual),
                        fluxes: b.fluxes,
                        velocities: b.velocities,
                        energy_before: a.energy_before,
                        energy_after: b.energy_after,
                        dissipation: a.dissipation + b.dissipation,
                        used_homotopy: a.used_homotopy || b.used_homotopy,
                        substeps: a.substeps + b.substeps,
                        dt,
                    },
                ))
            }
            Err(e) => Err(e),
        }
    }
}

/// One backward-Euler step `H(ρ) = ρⁿ`.
pub fn implicit_step(
    rho_prev: &DensityField,
    config: &SchemeConfig,
    spec: &ProblemSpec,
) -> Result<(DensityField, StepReport), SchemeError> {
    config.validate()?;
    Scheme::new(spec, rho_prev.grid(), Some(config)).step(rho_prev, config.dt, config)
}

/// A nominal step that had to be split.
#[derive(Debug, Clone, PartialEq)]
pub struct HalvingEvent {
    pub t: f64,
    /// The step size that failed.
    pub dt: f64,
    pub depth: u32,
    pub residual: f64,
}

/// Summary row of one nominal step; step 0 describes the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub energy: Option<f64>,
    pub dissipation: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub linf_change: f64,
}

/// What an [`evolve`] observer sees after each nominal step.
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub previous: &'a DensityField,
    pub state: &'a DensityField,
    pub report: &'a StepReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: DensityField,
    pub records: Vec<StepRecord>,
    pub halvings: Vec<HalvingEvent>,
    /// Set when the observer asked to stop before `t_end`.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }
}

/// Runs `⌈t_end / Δt⌉` nominal steps, calling `observer` after each.
pub fn evolve<F>(
    rho0: &DensityField,
    t_end: f64,
    config: &SchemeConfig,
    spec: &ProblemSpec,
    mut observer: F,
) -> Result<Trajectory, SchemeError>
where
    F: FnMut(&StepView<'_>) -> Control,
{
    config.validate()?;
    if !(t_end >= 0.0) {
        return Err(SchemeError::InvalidConfig(format!("t_end = {t_end} must be nonnegative")));
    }
    let scheme = Scheme::new(spec, rho0.grid(), Some(config));
    let n_steps = (t_end / config.dt - 1e-9).ceil().max(0.0) as usize;
    let mut records = vec![StepRecord {
        step: 0,
        t: 0.0,
        mass: rho0.mass(),
        energy: discrete_energy(rho0, spec).ok(),
        dissipation: 0.0,
        newton_iters: 0,
        residual: 0.0,
        linf_change: 0.0,
    }];
    let mut halvings = Vec::new();
    let mut state = rho0.clone();
    let mut stopped_early = false;
    for step in 1..=n_steps {
        let t_prev = (step - 1) as f64 * config.dt;
        let (next, report) = scheme.advance(&state, config.dt, 0, t_prev, config, &mut halvings)?;
        let t = step as f64 * config.dt;
        records.push(StepRecord {
            step,
            t,
            mass: next.mass(),
            energy: report.energy_after,
            dissipation: report.dissipation,
            newton_iters: report.iterations,
            residual: report.residual,
            linf_change: next.max_abs_diff(&state),
        });
        let control = observer(&StepView {
            step,
            t,
            previous: &state,
            state: &next,
            report: &report,
        });
        state = next;
        if control == Control::Stop {
            stopped_early = step < n_steps;
            break;
        }
    }
    Ok(Trajectory {
        final_state: state,
        records,
        halvings,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::model::{DiffusionFamily, MobilityFamily, PotentialFamily};

    fn spec(v: PotentialFamily) -> ProblemSpec {
        ProblemSpec::from_families(1.0, &MobilityFamily::logistic(), &DiffusionFamily::Quadratic, &v).unwrap()
    }

    #[test]
    fn constant_data_is_steady() {
        let sp = spec(PotentialFamily::zero());
        let rho = DensityField::constant(Grid1D::new(16).unwrap(), 0.37);
        let (next, rep) = implicit_step(&rho, &SchemeConfig::new(0.1), &sp).unwrap();
        assert_eq!(next, rho);
        // the mandatory correction solves a zero right-hand side
        assert_eq!(rep.iterations, 1);
        assert!(rep.fluxes.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn step_conserves_mass_and_dissipates() {
        let sp = spec(PotentialFamily::Harmonic { k: 10.0, center: 0.0 });
        let grid = Grid1D::new(32).unwrap();
        let rho = crate::grid::project_initial(|x| 0.5 + 0.4 * (6.0 * x).sin(), grid, 1.0).unwrap();
        let cfg = SchemeConfig::new(0.05);
        let (next, rep) = implicit_step(&rho, &cfg, &sp).unwrap();
        assert!((next.mass() - rho.mass()).abs() < 1e-13);
        let (e0, e1) = (rep.energy_before.unwrap(), rep.energy_after.unwrap());
        assert!(e1 <= e0);
        assert!(rep.dissipation >= 0.0);
        assert!(e0 - e1 >= rep.dissipation - 1e-12);
        assert!(rep.residual <= cfg.tolerance(32));
    }

    #[test]
    fn zero_time_is_identity() {
        let sp = spec(PotentialFamily::zero());
        let rho = DensityField::constant(Grid1D::new(4).unwrap(), 0.5);
        let traj = evolve(&rho, 0.0, &SchemeConfig::new(0.1), &sp, |_| Control::Continue).unwrap();
        assert_eq!(traj.steps(), 0);
        assert_eq!(traj.final_state, rho);
    }

    #[test]
    fn step_count_and_early_stop() {
        let sp = spec(PotentialFamily::Harmonic { k: 1.0, center: 0.5 });
        let rho = DensityField::constant(Grid1D::new(8).unwrap(), 0.5);
        let traj = evolve(&rho, 1.0, &SchemeConfig::new(0.1), &sp, |_| Control::Continue).unwrap();
        assert_eq!(traj.steps(), 10);
        assert!((traj.final_time() - 1.0).abs() < 1e-12);
        let traj = evolve(&rho, 1.0, &SchemeConfig::new(0.1), &sp, |v| {
            if v.step == 3 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert_eq!(traj.steps(), 3);
        assert!(traj.stopped_early);
    }

    #[test]
    fn halving_recovers_from_a_tight_iteration_budget() {
        let sp = spec(PotentialFamily::Harmonic { k: 10.0, center: 0.0 });
        let grid = Grid1D::new(32).unwrap();
        let rho = crate::grid::project_initial(|x| if x < 0.5 { 0.9 } else { 0.05 }, grid, 1.0).unwrap();
        let mut cfg = SchemeConfig::new(0.5);
        cfg.newton_max_iter = 5;
        cfg.homotopy_stages = vec![1.0];
        let traj = evolve(&rho, 0.5, &cfg, &sp, |_| Control::Continue).unwrap();
        assert_eq!(traj.steps(), 1);
        assert!(!traj.halvings.is_empty());
        assert!((traj.final_state.mass() - rho.mass()).abs() < 1e-12);
    }
}
