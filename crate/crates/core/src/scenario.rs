//! Built-in experiments and the `run` / `steady` / `audit` drivers.
//!
//! Each driver returns a [`ScenarioOutcome`]: named assertions plus the
//! files to write. Nothing touches the file system until
//! [`ScenarioOutcome::emit`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{build_config, ConfigError, InitialData, RawConfig, RunConfig};
use crate::diagnostics::{
    contraction_audit, energy_audit, estimate_order, fit_order, run_to_steady_observed, DiagnosticsError,
    OrderProblem, RefinementLevel,
};
use crate::grid::{discrete_energy, l1_distance, DensityField};
use crate::model::{regularize, DiffusionFamily, ExternalPotential, ModelError, ProblemSpec, RegularizationParams};
use crate::output::{table_csv, Artifacts};
use crate::scheme::{evolve, implicit_step, Control, SchemeError, StepRecord};
use crate::steady::{check_euler_lagrange, composite_profile, solve_mass_constant, ElVerdict, SteadyError, EL_TOL};

/// Names accepted by [`run_scenario`].
pub const SCENARIOS: &[&str] = &[
    "convex_potential",
    "barenblatt_from_above",
    "non_minimising_double_well",
    "contraction_audit",
    "order_study",
    "epsilon_study",
];

/// Steady-profile agreement required of converged runs.
pub const STEADY_MATCH_TOL: f64 = 1e-6;
/// Relative per-step mass drift allowed.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

pub fn scenario_config_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "convex_potential" => include_str!("../configs/convex.cfg"),
        "barenblatt_from_above" => include_str!("../configs/barenblatt_from_above.cfg"),
        "non_minimising_double_well" => include_str!("../configs/non_minimising_double_well.cfg"),
        "contraction_audit" => include_str!("../configs/contraction_audit.cfg"),
        "order_study" => include_str!("../configs/order_study.cfg"),
        "epsilon_study" => include_str!("../configs/epsilon_study.cfg"),
        _ => return None,
    })
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl From<SchemeError> for ScenarioError {
    fn from(e: SchemeError) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<SteadyError> for ScenarioError {
    fn from(e: SteadyError) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<ModelError> for ScenarioError {
    fn from(e: ModelError) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<DiagnosticsError> for ScenarioError {
    fn from(e: DiagnosticsError) -> Self {
        Self::Solver(e.to_string())
    }
}

fn init_error(msg: String) -> ScenarioError {
    ScenarioError::Config(ConfigError::Validation(vec![format!("initial: {msg}")]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub assertions: Vec<Assertion>,
    /// Scalar results keyed by name, for the report.
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub artifacts: Artifacts,
    pub output_dir: PathBuf,
}

impl ScenarioOutcome {
    fn new(name: &str, cfg: &RunConfig) -> Self {
        Self {
            name: name.to_string(),
            assertions: Vec::new(),
            metrics: serde_json::Map::new(),
            artifacts: Artifacts::new(),
            output_dir: cfg.output.directory.clone(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn metric(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&json!({
            "scenario": self.name,
            "passed": self.passed(),
            "assertions": self.assertions,
            "metrics": self.metrics,
        }))
        .expect("report serializes")
    }

    /// Adds `report.json` / `report.txt` and writes everything.
    pub fn emit(&mut self, with_report: bool) -> std::io::Result<Vec<PathBuf>> {
        if with_report {
            let (json, text) = (self.report_json(), self.to_string());
            self.artifacts.report("report", json, text);
        }
        self.artifacts.emit(&self.output_dir)
    }
}

impl fmt::Display for ScenarioOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {}", self.name)?;
        let width = self.assertions.iter().map(|a| a.name.len()).max().unwrap_or(0);
        for a in &self.assertions {
            writeln!(f, "  {:<width$}  {}  {}", a.name, if a.passed { "PASS" } else { "FAIL" }, a.detail)?;
        }
        let width = self.metrics.keys().map(String::len).max().unwrap_or(0);
        for (k, v) in &self.metrics {
            writeln!(f, "  {k:<width$}  {v}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Scenario config with `key=value` overrides applied.
pub fn load_scenario(name: &str, overrides: &[String]) -> Result<RunConfig, ScenarioError> {
    let text = scenario_config_text(name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    let mut raw = RawConfig::parse(text)?;
    for o in overrides {
        raw.set(o)?;
    }
    Ok(build_config(&raw, Path::new("."))?)
}

pub fn run_scenario(name: &str, overrides: &[String]) -> Result<ScenarioOutcome, ScenarioError> {
    let cfg = load_scenario(name, overrides)?;
    run_scenario_with(name, &cfg)
}

pub fn run_scenario_with(name: &str, cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    match name {
        "convex_potential" => convex_potential(cfg),
        "barenblatt_from_above" => barenblatt_from_above(cfg),
        "non_minimising_double_well" => non_minimising(cfg),
        "contraction_audit" => run_audit(cfg).map(|mut o| {
            o.name = name.into();
            o
        }),
        "order_study" => order_study(cfg),
        "epsilon_study" => epsilon_study(cfg),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

/// What every evolution driver collects.
struct Evolution {
    records: Vec<StepRecord>,
    final_state: DensityField,
    /// Per-step values of the `track` callback.
    tracked: Vec<f64>,
}

fn evolve_config<T>(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    rho0: &DensityField,
    out: &mut ScenarioOutcome,
    mut track: T,
) -> Result<Evolution, ScenarioError>
where
    T: FnMut(&DensityField) -> f64,
{
    let stride = cfg.output.snapshot_stride;
    let mut snaps = Artifacts::new();
    if stride > 0 {
        snaps.snapshot(0, rho0);
    }
    let mut tracked = vec![track(rho0)];
    let mut on_step = |step: usize, state: &DensityField| {
        if stride > 0 && step % stride == 0 {
            snaps.snapshot(step, state);
        }
        tracked.push(track(state));
    };
    let evo = if cfg.time.steady {
        match run_to_steady_observed(rho0, &cfg.solver, spec, &cfg.detector, cfg.time.max_steps, |v| {
            on_step(v.step, v.state)
        }) {
            Ok(run) => {
                out.check("steady_detected", true, format!("after {} steps (rate {:.3e})", run.steps, run.last_rate));
                out.check(
                    "fixed_point",
                    run.fixed_point,
                    format!("one-step change {:.3e}", run.fixed_point_change),
                );
                Evolution {
                    records: run.records,
                    final_state: run.final_state,
                    tracked: Vec::new(),
                }
            }
            Err(DiagnosticsError::NoConvergence { max_steps, last_rate }) => {
                out.check(
                    "steady_detected",
                    false,
                    format!("no detection within {max_steps} steps (rate {last_rate:.3e})"),
                );
                // rerun without the detector so the report still carries a trajectory
                let t_end = max_steps as f64 * cfg.solver.dt;
                let traj = evolve(rho0, t_end, &cfg.solver, spec, |_| Control::Continue)?;
                Evolution {
                    records: traj.records,
                    final_state: traj.final_state,
                    tracked: Vec::new(),
                }
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        let t_end = cfg.time.t_end.unwrap_or(0.0);
        let traj = evolve(rho0, t_end, &cfg.solver, spec, |v| {
            on_step(v.step, v.state);
            Control::Continue
        })?;
        Evolution {
            records: traj.records,
            final_state: traj.final_state,
            tracked: Vec::new(),
        }
    };
    let mut evo = evo;
    evo.tracked = tracked;
    out.artifacts.extend(snaps);
    Ok(evo)
}

fn common_checks(cfg: &RunConfig, evo: &Evolution, out: &mut ScenarioOutcome) {
    let alpha = cfg.problem.alpha;
    let m0 = evo.records[0].mass;
    let drift = evo
        .records
        .windows(2)
        .map(|w| (w[1].mass - w[0].mass).abs() / m0.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    out.check("mass_conserved", drift <= MASS_DRIFT_TOL, format!("max relative drift {drift:.3e}"));
    out.check(
        "bounds",
        evo.final_state.within_bounds(alpha, 1e-9),
        format!("final state within [0, {alpha}]"),
    );
    let energy = energy_audit(&evo.records);
    out.check(
        "energy_audit",
        energy.passed,
        format!(
            "worst increase {:.3e}, cumulative dissipation {:.6e}",
            energy.worst_increase, energy.total_dissipation
        ),
    );
    out.metric("steps", evo.records.len() - 1);
    out.metric("final_time", evo.records.last().map_or(0.0, |r| r.t));
    if cfg.output.reports {
        out.artifacts.report("energy_audit", energy.to_json(), energy.to_string());
    }
    if cfg.output.trajectory {
        out.artifacts.trajectory(&evo.records);
        out.artifacts.add("final.csv", crate::output::field_csv(&evo.final_state));
    }
}

fn spec_and_initial(cfg: &RunConfig) -> Result<(ProblemSpec, DensityField), ScenarioError> {
    let spec = cfg.spec()?;
    let rho0 = cfg.initial_field().map_err(init_error)?;
    Ok((spec, rho0))
}

/// `run <config>`: evolve to `t_end` or steady detection.
pub fn run_config(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("run", cfg);
    let (spec, rho0) = spec_and_initial(cfg)?;
    let evo = evolve_config(cfg, &spec, &rho0, &mut out, |_| 0.0)?;
    common_checks(cfg, &evo, &mut out);
    Ok(out)
}

/// `steady <config>`: the steady profile carrying the initial mass.
pub fn run_steady(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("steady", cfg);
    let (spec, rho0) = spec_and_initial(cfg)?;
    let profile = solve_mass_constant(rho0.mass(), &spec, cfg.grid())?;
    let verdict = profile.el_verdict.clone();
    out.check(
        "euler_lagrange",
        matches!(verdict, Some(ElVerdict::MinimiserCompatible { .. })),
        format!("{verdict:?}"),
    );
    out.check(
        "mass",
        (profile.mass - rho0.mass()).abs() <= 1e-12,
        format!("{:.16e} for target {:.16e}", profile.mass, rho0.mass()),
    );
    out.metric("constant", profile.constant());
    out.metric("mass", profile.mass);
    if cfg.output.steady {
        out.artifacts.steady("steady", &profile);
    }
    Ok(out)
}

/// `audit <config>`: contraction audit on random pairs plus an energy audit
/// of the configured run.
pub fn run_audit(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("audit", cfg);
    let (spec, rho0) = spec_and_initial(cfg)?;
    let grid = cfg.grid();
    let report = contraction_audit(cfg.audit.pairs, cfg.audit.steps, &cfg.solver, &spec, grid, cfg.audit.seed);
    let (l1, pos, ord) = report.worst();
    out.check(
        "contraction",
        report.passed,
        format!(
            "{} pairs x {} steps: worst excess L1 {l1:.3e}, positive part {pos:.3e}, order {ord:.3e}",
            report.pairs.len(),
            report.steps
        ),
    );
    if cfg.output.reports {
        out.artifacts.report("contraction_audit", report.to_json(), report.to_string());
    }

    // ordered constants 0.2α ≤ 0.8α stay ordered under a nonconstant V
    let alpha = spec.alpha;
    let (mut lo, mut hi) = (DensityField::constant(grid, 0.2 * alpha), DensityField::constant(grid, 0.8 * alpha));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cfg.audit.steps {
        lo = implicit_step(&lo, &cfg.solver, &spec)?.0;
        hi = implicit_step(&hi, &cfg.solver, &spec)?.0;
        worst = lo.values().iter().zip(hi.values()).map(|(a, b)| a - b).fold(worst, f64::max);
    }
    out.check(
        "ordered_constants",
        worst <= crate::diagnostics::AUDIT_SLACK,
        format!("max (rho - eta) = {worst:.3e}"),
    );

    let evo = evolve_config(cfg, &spec, &rho0, &mut out, |_| 0.0)?;
    common_checks(cfg, &evo, &mut out);
    Ok(out)
}

fn convex_potential(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("convex_potential", cfg);
    let (spec, rho0) = spec_and_initial(cfg)?;
    let target = solve_mass_constant(rho0.mass(), &spec, cfg.grid())?;
    let evo = evolve_config(cfg, &spec, &rho0, &mut out, |s| l1_distance(s, &target.field))?;
    common_checks(cfg, &evo, &mut out);

    let err = l1_distance(&evo.final_state, &target.field);
    out.check(
        "matches_steady_profile",
        err <= STEADY_MATCH_TOL,
        format!("L1 distance {err:.3e} to the mass-constrained profile"),
    );
    let e = &evo.tracked;
    let bad: Vec<usize> = (11..e.len()).filter(|&k| !(e[k] < e[k - 1])).collect();
    out.check(
        "error_decreasing",
        bad.is_empty(),
        if bad.is_empty() {
            format!("strictly decreasing over steps 10..{}", e.len() - 1)
        } else {
            format!("not decreasing at steps {bad:?}")
        },
    );
    let alpha = spec.alpha;
    let empty = target.values().iter().filter(|&&v| v == 0.0).count();
    let full = target.values().iter().filter(|&&v| v == alpha).count();
    out.check(
        "free_boundary",
        empty + full > 0,
        format!("{empty} empty and {full} saturated cells"),
    );
    out.metric("constant", target.constant());
    out.metric("final_error", err);
    if cfg.output.steady {
        out.artifacts.steady("steady", &target);
    }
    if cfg.output.trajectory {
        let dt = cfg.solver.dt;
        let mut csv = String::from("step,t,l1_error\n");
        for (k, v) in e.iter().enumerate() {
            csv.push_str(&format!("{k},{:.16e},{v:.16e}\n", k as f64 * dt));
        }
        out.artifacts.add("error.csv", csv);
    }
    Ok(out)
}

/// `U(s) = s²` up to scale: `U'(α − u) = 2α − U'(u)`, so the deficit solves
/// the same problem in the potential `−V`.
fn mirrors_under_deficit(u: &DiffusionFamily) -> bool {
    match u {
        DiffusionFamily::Quadratic => true,
        DiffusionFamily::PorousMedium { m } => *m == 2.0,
        _ => false,
    }
}

fn barenblatt_from_above(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("barenblatt_from_above", cfg);
    let (spec, rho0) = spec_and_initial(cfg)?;
    let grid = cfg.grid();
    let alpha = spec.alpha;
    let evo = evolve_config(cfg, &spec, &rho0, &mut out, |_| 0.0)?;
    common_checks(cfg, &evo, &mut out);

    let v = evo.final_state.values();
    let (gap, ok) = saturation_gap(v, alpha);
    out.check(
        "saturation_gap",
        ok,
        match gap {
            Some((a, b)) => format!("cells {a}..{b} below alpha, flanked by saturated cells"),
            None => "no unsaturated block".into(),
        },
    );

    let target = solve_mass_constant(evo.final_state.mass(), &spec, grid)?;
    let err = l1_distance(&evo.final_state, &target.field);
    out.check(
        "matches_steady_profile",
        err <= STEADY_MATCH_TOL,
        format!("L1 distance {err:.3e}"),
    );
    if mirrors_under_deficit(&cfg.problem.diffusion) {
        // deficit u = α − ρ against the Barenblatt-type profile of −V, shifted
        // by sup V to stay nonnegative (constants absorb the shift)
        let top = (0..=10_000).map(|k| spec.external.v(k as f64 / 1e4)).fold(0.0, f64::max);
        let neg = ExternalPotential::new(
            {
                let s = spec.clone();
                crate::model::scalar_fn(move |x| (top - s.external.v(x)).max(0.0))
            },
            {
                let s = spec.clone();
                crate::model::scalar_fn(move |x| -s.external.dv(x))
            },
        )?;
        let mirrored = ProblemSpec::new(spec.mobility.clone(), spec.diffusion.clone(), neg)?;
        let deficit = DensityField::new(grid, v.iter().map(|r| alpha - r).collect())
            .map_err(|e| ScenarioError::Solver(e.to_string()))?;
        let bump = solve_mass_constant(deficit.mass(), &mirrored, grid)?;
        let err = l1_distance(&deficit, &bump.field);
        out.check(
            "deficit_is_barenblatt",
            err <= STEADY_MATCH_TOL,
            format!("L1 distance {err:.3e} between alpha - rho and the profile in -V"),
        );
        if cfg.output.steady {
            out.artifacts.steady("deficit", &bump);
        }
    }
    out.metric("constant", target.constant());
    out.metric("min_density", v.iter().cloned().fold(f64::INFINITY, f64::min));
    if cfg.output.steady {
        out.artifacts.steady("steady", &target);
    }
    Ok(out)
}

/// The single block of cells below `α − 1e-12`, and whether saturated cells flank it.
pub fn saturation_gap(values: &[f64], alpha: f64) -> (Option<(usize, usize)>, bool) {
    const SAT: f64 = 1e-12;
    let below: Vec<usize> = (0..values.len()).filter(|&i| values[i] < alpha - SAT).collect();
    let (Some(&a), Some(&b)) = (below.first(), below.last()) else {
        return (None, false);
    };
    let contiguous = below.len() == b - a + 1;
    let flanked = a > 0 && b + 1 < values.len() && values[a - 1] >= alpha - SAT && values[b + 1] >= alpha - SAT;
    (Some((a, b + 1)), contiguous && flanked)
}

fn non_minimising(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("non_minimising_double_well", cfg);
    let (spec, rho0) = spec_and_initial(cfg)?;
    let grid = cfg.grid();
    let evo = evolve_config(cfg, &spec, &rho0, &mut out, |_| 0.0)?;
    common_checks(cfg, &evo, &mut out);
    let fin = &evo.final_state;

    let verdict = check_euler_lagrange(fin, &spec, EL_TOL);
    let (multi, detail) = match &verdict {
        ElVerdict::MultiConstant { constants, .. } if constants.len() == 2 => {
            let gap = (constants[0] - constants[1]).abs();
            (gap > 1e-3, format!("constants {constants:?}, |C_L - C_K| = {gap:.3e}"))
        }
        other => (false, format!("{other:?}")),
    };
    out.check("multi_constant", multi, detail);

    let single = solve_mass_constant(fin.mass(), &spec, grid)?;
    let (e_fin, e_single) = (
        discrete_energy(fin, &spec).map_err(|e| ScenarioError::Solver(e.to_string()))?,
        discrete_energy(&single.field, &spec).map_err(|e| ScenarioError::Solver(e.to_string()))?,
    );
    out.check(
        "energy_above_minimiser",
        e_fin > e_single,
        format!("E = {e_fin:.12e} vs single-constant {e_single:.12e}"),
    );

    // per-well masses are invariant: split the grid between the two centres
    if let InitialData::TwoBump { centers, .. } = &cfg.initial {
        let split = (0.5 * (centers[0] + centers[1]) * grid.n_cells() as f64).round() as usize;
        let dx = grid.dx();
        let m_l = dx * rho0.values()[..split].iter().sum::<f64>();
        let m_k = dx * rho0.values()[split..].iter().sum::<f64>();
        let composite = composite_profile(&spec, grid, &[(0..split, m_l), (split..grid.n_cells(), m_k)])?;
        let err = l1_distance(fin, &composite.field);
        out.check(
            "matches_composite",
            err <= STEADY_MATCH_TOL,
            format!("L1 distance {err:.3e} (single-constant profile at {:.3e})", l1_distance(fin, &single.field)),
        );
        if cfg.output.steady {
            out.artifacts.steady("steady", &composite);
        }
    }
    out.metric("energy", e_fin);
    out.metric("energy_single_constant", e_single);
    if cfg.output.steady {
        out.artifacts.steady("single_constant", &single);
    }
    Ok(out)
}

fn order_study(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("order_study", cfg);
    let spec = cfg.spec()?;
    let initial = cfg
        .initial
        .profile(spec.alpha)
        .ok_or_else(|| init_error("order studies need a closed-form initial datum".into()))?;
    let study = &cfg.study;
    let finest = *study.levels.iter().max().unwrap_or(&cfg.n_cells);
    let reference_n = study.reference.unwrap_or(4 * finest);
    let level = |n: usize| -> RefinementLevel {
        use crate::diagnostics::RefinementAxis::*;
        let eps = cfg.regularization.as_ref().map_or(0.0, |r| r.epsilon);
        match study.axis {
            DxDtJoint => RefinementLevel {
                n_cells: n,
                dt: study.dt_ratio / n as f64,
                epsilon: eps,
            },
            DxOnly => RefinementLevel {
                n_cells: n,
                dt: cfg.solver.dt,
                epsilon: eps,
            },
            // `n` counts time steps per unit time on this axis
            DtOnly => RefinementLevel {
                n_cells: cfg.n_cells,
                dt: 1.0 / n as f64,
                epsilon: eps,
            },
            Epsilon => RefinementLevel {
                n_cells: cfg.n_cells,
                dt: cfg.solver.dt,
                epsilon: 1.0 / n as f64,
            },
        }
    };
    let problem = OrderProblem {
        spec: if cfg.regularization.is_some() {
            let p = &cfg.problem;
            ProblemSpec::from_families(p.alpha, &p.mobility, &p.diffusion, &p.potential)?
        } else {
            spec.clone()
        },
        initial: Arc::from(initial),
        t_end: study.t_end,
        solver: cfg.solver.clone(),
    };
    let mut levels: Vec<RefinementLevel> = study.levels.iter().map(|&n| level(n)).collect();
    levels.sort_by(|a, b| a.n_cells.cmp(&b.n_cells).then(b.dt.total_cmp(&a.dt)));
    let reference = match study.axis {
        crate::diagnostics::RefinementAxis::Epsilon => RefinementLevel {
            epsilon: 0.0,
            ..level(reference_n)
        },
        _ => level(reference_n),
    };
    let fit = estimate_order(&problem, study.axis, &levels, &reference)?;
    out.check(
        "fitted_order",
        fit.fitted_order >= 0.8,
        format!("order {:.4} (r^2 = {:.4}) along {:?}", fit.fitted_order, fit.r_squared, study.axis),
    );
    out.metric("fitted_order", fit.fitted_order);
    out.metric("r_squared", fit.r_squared);
    let mut csv = Vec::new();
    fit.write_csv(&mut csv).expect("in-memory write");
    out.artifacts.add("order.csv", String::from_utf8(csv).expect("ascii"));
    if cfg.output.reports {
        out.artifacts.report(
            "order_fit",
            serde_json::to_string_pretty(&fit).expect("fit serializes"),
            fit.to_string(),
        );
    }
    Ok(out)
}

/// Tolerance on the ε → 0 distance at the smallest ε of the study.
pub const EPSILON_LIMIT_TOL: f64 = 1e-3;

fn epsilon_study(cfg: &RunConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut out = ScenarioOutcome::new("epsilon_study", cfg);
    let p = &cfg.problem;
    let base = ProblemSpec::from_families(p.alpha, &p.mobility, &p.diffusion, &p.potential)?;
    let rho0 = cfg.initial_field().map_err(init_error)?;
    let grid = cfg.grid();
    let mut eps = cfg.study.epsilons.clone();
    if eps.is_empty() {
        return Err(ConfigError::Validation(vec!["study.epsilons is required for the epsilon study".into()]).into());
    }
    eps.sort_by(|a, b| b.total_cmp(a));

    let (step0, _) = implicit_step(&rho0, &cfg.solver, &base)?;
    let steady0 = solve_mass_constant(rho0.mass(), &base, grid)?;
    let mut rows = Vec::new();
    for &e in &eps {
        let spec = regularize(&base, &RegularizationParams::new(e, base.alpha))?;
        let (step, _) = implicit_step(&rho0, &cfg.solver, &spec)?;
        let steady = solve_mass_constant(rho0.mass(), &spec, grid)?;
        rows.push(vec![e, l1_distance(&step, &step0), l1_distance(&steady.field, &steady0.field)]);
    }
    let last = rows.last().expect("nonempty");
    let (e_min, step_err, steady_err) = (last[0], last[1], last[2]);
    out.check(
        "step_limit",
        step_err <= EPSILON_LIMIT_TOL,
        format!("one-step L1 distance {step_err:.3e} at epsilon = {e_min:e}"),
    );
    out.check(
        "steady_limit",
        steady_err <= EPSILON_LIMIT_TOL,
        format!("steady-state L1 distance {steady_err:.3e} at epsilon = {e_min:e}"),
    );
    for (k, name) in [(1, "step"), (2, "steady")] {
        let h: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let errs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        if let Ok(fit) = fit_order(&h, &errs) {
            out.metric(&format!("{name}_order_in_epsilon"), fit.fitted_order);
        }
    }
    out.artifacts.add("epsilon.csv", table_csv("epsilon,step_error,steady_error", rows));
    Ok(out)
}
