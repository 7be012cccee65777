//! Acceptance criteria, one line each. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satflow::diagnostics::{fit_order, random_interior_field};
use satflow::grid::{discrete_energy, project_initial, w_minus_1_1_norm, DensityField, Grid1D};
use satflow::model::{regularize, RegularizationParams};
use satflow::scenario::{run_scenario, ScenarioOutcome};
use satflow::scheme::{evolve, implicit_step, jacobian, velocity, Control, SchemeConfig};
use satflow::steady::solve_mass_constant;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The named assertions of a scenario run, all of which must pass.
fn scenario(name: &str, overrides: &[&str], required: &[&str]) -> Verdict {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let out: ScenarioOutcome = run_scenario(name, &overrides).map_err(|e| format!("{name}: {e}"))?;
    let mut parts = Vec::new();
    let mut ok = true;
    for want in required {
        match out.assertions.iter().find(|a| a.name == *want) {
            Some(a) => {
                ok &= a.passed;
                parts.push(format!("{}: {}", a.name, a.detail));
            }
            None => {
                ok = false;
                parts.push(format!("{want}: missing"));
            }
        }
    }
    check(ok, parts.join("; "))
}

fn invariants() -> Verdict {
    let spec = common::harmonic_spec(10.0);
    let grid = Grid1D::new(64).unwrap();
    let rho0 = project_initial(|x| 0.35 + 0.3 * (-(x - 0.4f64).powi(2) / 0.02).exp(), grid, 1.0).unwrap();
    let cfg = SchemeConfig::new(2f64.powi(-6));
    let m0 = rho0.mass();
    let (mut drift, mut bounds_ok, mut rise) = (0.0f64, true, f64::NEG_INFINITY);
    let mut energy = discrete_energy(&rho0, &spec).unwrap();
    let traj = evolve(&rho0, 50.0 * cfg.dt, &cfg, &spec, |v| {
        drift = drift.max((v.state.mass() - v.previous.mass()).abs() / m0);
        bounds_ok &= v.state.within_bounds(1.0, 1e-9);
        let e = discrete_energy(v.state, &spec).unwrap();
        rise = rise.max(e - energy);
        energy = e;
        Control::Continue
    })
    .map_err(|e| e.to_string())?;
    check(
        traj.steps() == 50 && drift <= 1e-10 && rise <= 1e-9 && bounds_ok,
        format!(
            "{} steps, max relative mass drift {drift:.2e}, max energy increase {rise:.2e}, bounds {}",
            traj.steps(),
            if bounds_ok { "held" } else { "violated" }
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let spec = common::harmonic_spec(10.0);
    let cfg = SchemeConfig::new(2f64.powi(-5));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g3 = Grid1D::new(3).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let prev = DensityField::new(g3, (0..3).map(|_| rng.gen_range(0.1..0.9)).collect()).unwrap();
        let (newton, _) = implicit_step(&prev, &cfg, &spec).map_err(|e| e.to_string())?;
        let (picard, res) = common::picard_step(&prev, &cfg, &spec, 0.5);
        if res > 1e-13 {
            return Err(format!("Picard oracle stalled at residual {res:.2e}"));
        }
        worst = worst.max(newton.max_abs_diff(&picard));
    }

    let grid = Grid1D::new(8).unwrap();
    let (mut checked, mut worst_rel) = (0, 0.0f64);
    while checked < 1000 {
        let rho = random_interior_field(&mut rng, grid, 1.0);
        let v = velocity(&rho, &spec).unwrap();
        if v.iter().any(|x| x.abs() < 1e-3) {
            continue;
        }
        let j = jacobian(&rho, &rho, 1.0, &cfg, &spec).unwrap();
        let fd = common::fd_jacobian(&rho, &cfg, &spec, 1e-7);
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for (i, row) in fd.iter().enumerate() {
            for (k, &f) in row.iter().enumerate() {
                diff = diff.max((j.get(i, k) - f).abs());
                scale = scale.max(j.get(i, k).abs());
            }
        }
        worst_rel = worst_rel.max(diff / scale);
        checked += 1;
    }
    check(
        worst <= 1e-9 && worst_rel <= 1e-5,
        format!("Newton vs Picard max diff {worst:.2e} on 20 states; Jacobian vs FD max relative {worst_rel:.2e} on {checked} states"),
    )
}

fn steady_constants() -> Verdict {
    let base = common::harmonic_spec(10.0);
    let mut lines = Vec::new();
    let mut ok = true;
    for eps in [0.1, 0.0] {
        let spec = if eps > 0.0 {
            regularize(&base, &RegularizationParams::new(eps, 1.0)).map_err(|e| e.to_string())?
        } else {
            base.clone()
        };
        let c = |n: usize| -> Result<f64, String> {
            solve_mass_constant(0.3, &spec, Grid1D::new(n).unwrap())
                .map(|p| p.constant())
                .map_err(|e| e.to_string())
        };
        let reference = c(1 << 14)?;
        let mut h = Vec::new();
        let mut err = Vec::new();
        for k in 5..=10 {
            h.push(1.0 / (1u32 << k) as f64);
            err.push((c(1 << k)? - reference).abs());
        }
        let fit = fit_order(&h, &err).map_err(|e| e.to_string())?;
        ok &= fit.fitted_order >= 0.9;
        lines.push(format!("eps = {eps}: order {:.3}", fit.fitted_order));
    }
    check(ok, lines.join(", "))
}

fn w11_norm() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst, mut axioms) = (0.0f64, true);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=64);
        let grid = Grid1D::new(n).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nu = w_minus_1_1_norm(&u, grid);
        worst = worst.max((nu - common::w11_scan(&u, grid.dx())).abs());
        let a = rng.gen_range(-3.0..3.0);
        let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
        let sum: Vec<f64> = u.iter().zip(&w).map(|(x, y)| x + y).collect();
        axioms &= nu > 0.0
            && (w_minus_1_1_norm(&scaled, grid) - a.abs() * nu).abs() <= 1e-12 * (1.0 + nu)
            && w_minus_1_1_norm(&sum, grid) <= nu + w_minus_1_1_norm(&w, grid) + 1e-12;
        axioms &= w_minus_1_1_norm(&vec![0.0; n], grid) == 0.0;
    }
    check(
        worst <= 1e-8 && axioms,
        format!("max deviation from scan oracle {worst:.2e} on 1000 vectors, axioms {}", if axioms { "hold" } else { "violated" }),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "structural invariants", budget: Duration::from_secs(5), run: invariants },
        Criterion {
            id: 2,
            name: "L1 contraction and comparison",
            budget: Duration::from_secs(30),
            run: || scenario("contraction_audit", &[], &["contraction", "ordered_constants"]),
        },
        Criterion { id: 3, name: "implicit-step oracle equivalence", budget: Duration::from_secs(10), run: oracle_equivalence },
        Criterion { id: 4, name: "steady-state constant order", budget: Duration::from_secs(60), run: steady_constants },
        Criterion {
            id: 5,
            name: "epsilon -> 0 consistency",
            budget: Duration::from_secs(60),
            run: || scenario("epsilon_study", &[], &["step_limit", "steady_limit"]),
        },
        Criterion {
            id: 6,
            name: "self-convergence order",
            budget: Duration::from_secs(120),
            run: || scenario("order_study", &[], &["fitted_order"]),
        },
        Criterion {
            id: 7,
            name: "convex potential",
            budget: Duration::from_secs(60),
            run: || {
                scenario(
                    "convex_potential",
                    &["grid.n_cells=2^6", "time.dt=2^-6"],
                    &["steady_detected", "matches_steady_profile", "error_decreasing"],
                )
            },
        },
        Criterion {
            id: 8,
            name: "Barenblatt from above",
            budget: Duration::from_secs(120),
            run: || scenario("barenblatt_from_above", &[], &["saturation_gap", "fixed_point"]),
        },
        Criterion {
            id: 9,
            name: "non-minimising attractor",
            budget: Duration::from_secs(120),
            run: || {
                scenario(
                    "non_minimising_double_well",
                    &[],
                    &["steady_detected", "fixed_point", "multi_constant", "energy_above_minimiser"],
                )
            },
        },
        Criterion { id: 10, name: "W-1,1 norm", budget: Duration::from_secs(5), run: w11_norm },
    ];

    let mut failed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let verdict = (c.run)();
        let elapsed = t0.elapsed();
        let in_budget = elapsed <= c.budget;
        let (ok, detail) = match verdict {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {}: {} ({:.2?} of {:?}{})",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed,
            c.budget,
            if in_budget { "" } else { ", over budget" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
