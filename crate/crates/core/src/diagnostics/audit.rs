use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{DensityField, Grid1D};
use crate::model::ProblemSpec;
use crate::scheme::{implicit_step, SchemeConfig, StepRecord};

/// Slack on every audited inequality.
pub const AUDIT_SLACK: f64 = 1e-8;

/// Uniform draws in `[0.05α, 0.95α]`, then one three-point averaging pass.
pub fn random_interior_field<R: Rng>(rng: &mut R, grid: Grid1D, alpha: f64) -> DensityField {
    let n = grid.n_cells();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05 * alpha..=0.95 * alpha)).collect();
    let smooth = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    DensityField::new(grid, smooth).expect("length matches grid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub index: usize,
    /// `max_n Σ|ρⁿ − ηⁿ| − Σ|ρ⁰ − η⁰|`.
    pub l1_excess: f64,
    /// Same for `Σ(ρ − η)⁺`.
    pub positive_excess: f64,
    /// `max_n max_i (ρⁿ_i − ηⁿ_i)` for the ordered companion pair `ρ⁰ ≤ η⁰`.
    pub order_violation: f64,
    /// Solver failure, if any.
    pub failure: Option<String>,
}

impl PairResult {
    pub fn passed(&self, slack: f64) -> bool {
        self.failure.is_none()
            && self.l1_excess <= slack
            && self.positive_excess <= slack
            && self.order_violation <= slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub seed: u64,
    pub steps: usize,
    pub n_cells: usize,
    pub slack: f64,
    /// Sorted by pair index.
    pub pairs: Vec<PairResult>,
    pub passed: bool,
}

impl ContractionReport {
    pub fn violations(&self) -> usize {
        self.pairs.iter().filter(|p| !p.passed(self.slack)).count()
    }

    pub fn worst(&self) -> (f64, f64, f64) {
        self.pairs.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| {
            (a.0.max(p.l1_excess), a.1.max(p.positive_excess), a.2.max(p.order_violation))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for ContractionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (l1, pos, ord) = self.worst();
        writeln!(f, "contraction audit: {} pairs x {} steps, N = {}, seed {}", self.pairs.len(), self.steps, self.n_cells, self.seed)?;
        writeln!(f, "  {:<28} {:>14}", "worst L1 excess", format!("{l1:.3e}"))?;
        writeln!(f, "  {:<28} {:>14}", "worst positive-part excess", format!("{pos:.3e}"))?;
        writeln!(f, "  {:<28} {:>14}", "worst order violation", format!("{ord:.3e}"))?;
        writeln!(f, "  {:<28} {:>14}", "violations", self.violations())?;
        write!(f, "  {:<28} {:>14}", "result", if self.passed { "PASS" } else { "FAIL" })
    }
}

fn audit_pair(
    index: usize,
    seed: u64,
    steps: usize,
    config: &SchemeConfig,
    spec: &ProblemSpec,
    grid: Grid1D,
) -> PairResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let alpha = spec.alpha;
    let rho0 = random_interior_field(&mut rng, grid, alpha);
    let eta0 = random_interior_field(&mut rng, grid, alpha);
    // the ordered companion: ζ⁰ = max(ρ⁰, η⁰) ≥ ρ⁰
    let zeta0 = DensityField::new(
        grid,
        rho0.values().iter().zip(eta0.values()).map(|(a, b)| a.max(*b)).collect(),
    )
    .expect("same grid");

    let l1 = |a: &DensityField, b: &DensityField| -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum()
    };
    let pos = |a: &DensityField, b: &DensityField| -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).max(0.0)).sum()
    };
    let above = |a: &DensityField, b: &DensityField| -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)
    };
    let (l1_0, pos_0) = (l1(&rho0, &eta0), pos(&rho0, &eta0));
    let mut out = PairResult {
        index,
        l1_excess: f64::NEG_INFINITY,
        positive_excess: f64::NEG_INFINITY,
        order_violation: above(&rho0, &zeta0),
        failure: None,
    };
    let (mut rho, mut eta, mut zeta) = (rho0, eta0, zeta0);
    for _ in 0..steps {
        let next = implicit_step(&rho, config, spec)
            .and_then(|(r, _)| Ok((r, implicit_step(&eta, config, spec)?.0)))
            .and_then(|(r, e)| Ok((r, e, implicit_step(&zeta, config, spec)?.0)));
        match next {
            Ok((r, e, z)) => {
                rho = r;
                eta = e;
                zeta = z;
            }
            Err(err) => {
                out.failure = Some(err.to_string());
                return out;
            }
        }
        out.l1_excess = out.l1_excess.max(l1(&rho, &eta) - l1_0);
        out.positive_excess = out.positive_excess.max(pos(&rho, &eta) - pos_0);
        out.order_violation = out.order_violation.max(above(&rho, &zeta));
    }
    out
}

/// L¹ contraction, positive-part contraction and comparison on seeded random pairs.
pub fn contraction_audit(
    pairs: usize,
    steps: usize,
    config: &SchemeConfig,
    spec: &ProblemSpec,
    grid: Grid1D,
    seed: u64,
) -> ContractionReport {
    let job = |k: usize| audit_pair(k, seed, steps, config, spec, grid);
    #[cfg(feature = "parallel")]
    let mut results: Vec<PairResult> = (0..pairs).into_par_iter().map(job).collect();
    #[cfg(not(feature = "parallel"))]
    let mut results: Vec<PairResult> = (0..pairs).map(job).collect();
    results.sort_by_key(|p| p.index);
    let passed = results.iter().all(|p| p.passed(AUDIT_SLACK));
    ContractionReport {
        seed,
        steps,
        n_cells: grid.n_cells(),
        slack: AUDIT_SLACK,
        pairs: results,
        passed,
    }
}

/// Worst margin of the telescoped dissipation inequality over windows of length `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyWindow {
    /// Window length in steps; `None` is the whole trajectory.
    pub k: Option<usize>,
    /// `max_n (Σ_{j=n+1}^{n+k} D_j − (E_n − E_{n+k}))`; ≤ slack to pass.
    pub worst_excess: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub steps: usize,
    /// `max_n (E_{n+1} − E_n)`.
    pub worst_increase: f64,
    pub windows: Vec<EnergyWindow>,
    pub initial_energy: Option<f64>,
    pub final_energy: Option<f64>,
    pub total_dissipation: f64,
    pub slack: f64,
    pub passed: bool,
    /// Set when some energy along the trajectory is infinite.
    pub missing_energy: bool,
}

impl EnergyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |e: Option<f64>| e.map_or("inf".to_string(), |v| format!("{v:.12e}"));
        writeln!(f, "energy audit: {} steps", self.steps)?;
        writeln!(f, "  {:<28} {:>20}", "initial energy", opt(self.initial_energy))?;
        writeln!(f, "  {:<28} {:>20}", "final energy", opt(self.final_energy))?;
        writeln!(f, "  {:<28} {:>20}", "total dissipation", format!("{:.12e}", self.total_dissipation))?;
        writeln!(f, "  {:<28} {:>20}", "worst one-step increase", format!("{:.3e}", self.worst_increase))?;
        for w in &self.windows {
            let label = match w.k {
                Some(k) => format!("window k = {k}"),
                None => "window k = all".to_string(),
            };
            writeln!(f, "  {:<28} {:>20}", label, format!("{:.3e} ({} windows)", w.worst_excess, w.windows))?;
        }
        write!(f, "  {:<28} {:>20}", "result", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// Energy decay and `Σ D ≤ E_n − E_{n+k}` for `k ∈ {1, 10, all}`.
pub fn energy_audit(records: &[StepRecord]) -> EnergyReport {
    let slack = AUDIT_SLACK;
    let steps = records.len().saturating_sub(1);
    let energies: Option<Vec<f64>> = records.iter().map(|r| r.energy).collect();
    let total_dissipation = records.iter().skip(1).map(|r| r.dissipation).sum();
    let Some(e) = energies else {
        return EnergyReport {
            steps,
            worst_increase: f64::NAN,
            windows: Vec::new(),
            initial_energy: records.first().and_then(|r| r.energy),
            final_energy: records.last().and_then(|r| r.energy),
            total_dissipation,
            slack,
            passed: false,
            missing_energy: true,
        };
    };
    // prefix sums of dissipation: cum[n] = Σ_{j=1}^{n} D_j
    let mut cum = vec![0.0; records.len()];
    for n in 1..records.len() {
        cum[n] = cum[n - 1] + records[n].dissipation;
    }
    let worst_increase = e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut windows = Vec::new();
    for k in [Some(1), Some(10), None] {
        let len = k.unwrap_or(steps);
        if len == 0 || len > steps {
            continue;
        }
        let starts = if k.is_none() { 1 } else { steps - len + 1 };
        let worst_excess = (0..starts)
            .map(|n| (cum[n + len] - cum[n]) - (e[n] - e[n + len]))
            .fold(f64::NEG_INFINITY, f64::max);
        windows.push(EnergyWindow {
            k,
            worst_excess,
            windows: starts,
        });
    }
    let passed = (steps == 0 || worst_increase <= slack) && windows.iter().all(|w| w.worst_excess <= slack);
    EnergyReport {
        steps,
        worst_increase: if steps == 0 { 0.0 } else { worst_increase },
        windows,
        initial_energy: e.first().copied(),
        final_energy: e.last().copied(),
        total_dissipation,
        slack,
        passed,
        missing_energy: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionFamily, MobilityFamily, PotentialFamily};
    use crate::scheme::{evolve, Control};

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
    fn random_fields_are_interior_and_seeded() {
        let grid = Grid1D::new(32).unwrap();
        let a = random_interior_field(&mut ChaCha8Rng::seed_from_u64(3), grid, 2.0);
        let b = random_interior_field(&mut ChaCha8Rng::seed_from_u64(3), grid, 2.0);
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| (0.1..=1.9).contains(&v)));
    }

    #[test]
    fn small_contraction_audit_passes_and_is_deterministic() {
        let grid = Grid1D::new(16).unwrap();
        let cfg = SchemeConfig::new(2f64.powi(-5));
        let a = contraction_audit(6, 5, &cfg, &harmonic(), grid, 11);
        assert!(a.passed, "{a}");
        let b = contraction_audit(6, 5, &cfg, &harmonic(), grid, 11);
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.to_string().contains("PASS"));
    }

    #[test]
    fn energy_audit_on_a_run_and_on_a_steady_trajectory() {
        let grid = Grid1D::new(32).unwrap();
        let sp = harmonic();
        let cfg = SchemeConfig::new(2f64.powi(-5));
        let traj = evolve(&DensityField::constant(grid, 0.3), 0.5, &cfg, &sp, |_| Control::Continue).unwrap();
        let rep = energy_audit(&traj.records);
        assert!(rep.passed, "{rep}");
        assert_eq!(rep.windows.len(), 3);
        assert!(rep.total_dissipation > 0.0);

        let steady = crate::steady::solve_mass_constant(0.3, &sp, grid).unwrap();
        let traj = evolve(&steady.field, 0.25, &cfg, &sp, |_| Control::Continue).unwrap();
        let rep = energy_audit(&traj.records);
        assert!(rep.passed);
        assert!(rep.total_dissipation.abs() < 1e-20);
        assert!(rep.worst_increase.abs() < 1e-15);
    }

    #[test]
    fn energy_audit_flags_an_increase() {
        let rec = |step: usize, energy: f64, dissipation: f64| StepRecord {
            step,
            t: step as f64,
            mass: 1.0,
            energy: Some(energy),
            dissipation,
            newton_iters: 1,
            residual: 0.0,
            linf_change: 0.0,
        };
        let rep = energy_audit(&[rec(0, 1.0, 0.0), rec(1, 0.5, 0.4), rec(2, 0.6, 0.0)]);
        assert!(!rep.passed);
        let rep = energy_audit(&[rec(0, 1.0, 0.0), rec(1, 0.5, 0.6)]);
        assert!(!rep.passed);
    }
}
