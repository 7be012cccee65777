//! Browser bindings: step a shipped scenario, compute steady profiles, and
//! inspect mobility splittings. Errors surface in JavaScript as thrown strings.

use satflow::grid::{discrete_energy, DensityField, Grid1D};
use satflow::model::{DiffusionFamily, MobilityFamily, PotentialFamily, ProblemSpec};
use satflow::scenario::{load_scenario, SCENARIOS};
use satflow::scheme::{implicit_step, SchemeConfig};
use satflow::steady::solve_mass_constant;
use wasm_bindgen::prelude::*;

/// Scenario names that evolve a density (the studies are batch jobs).
#[wasm_bindgen]
pub fn scenario_names() -> Vec<String> {
    SCENARIOS
        .iter()
        .filter(|n| !n.ends_with("_study") && **n != "contraction_audit")
        .map(|n| n.to_string())
        .collect()
}

/// A running implicit scheme, advanced a few steps per animation frame.
#[wasm_bindgen]
pub struct Simulation {
    spec: ProblemSpec,
    config: SchemeConfig,
    state: DensityField,
    steps: usize,
    t: f64,
}

#[wasm_bindgen]
impl Simulation {
    /// Starts `name` with its shipped data, on `n_cells` cells with `Δt = dt`.
    #[wasm_bindgen(constructor)]
    pub fn new(name: &str, n_cells: usize, dt: f64) -> Result<Simulation, String> {
        let overrides = vec![format!("grid.n_cells={n_cells}"), format!("time.dt={dt}")];
        let cfg = load_scenario(name, &overrides).map_err(|e| e.to_string())?;
        Ok(Self {
            spec: cfg.spec().map_err(|e| e.to_string())?,
            state: cfg.initial_field()?,
            config: cfg.solver,
            steps: 0,
            t: 0.0,
        })
    }

    /// Advances `count` steps; returns the L¹ change of the last one per unit time.
    pub fn advance(&mut self, count: usize) -> Result<f64, String> {
        let mut rate = 0.0;
        for _ in 0..count {
            let (next, _) = implicit_step(&self.state, &self.config, &self.spec).map_err(|e| e.to_string())?;
            rate = satflow::grid::l1_distance(&next, &self.state) / self.config.dt;
            self.state = next;
            self.steps += 1;
            self.t += self.config.dt;
        }
        Ok(rate)
    }

    pub fn density(&self) -> Vec<f64> {
        self.state.values().to_vec()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.state.grid().centers()
    }

    /// `V` at the cell centres.
    pub fn potential(&self) -> Vec<f64> {
        self.centers().iter().map(|&x| self.spec.external.v(x)).collect()
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn mass(&self) -> f64 {
        self.state.mass()
    }

    pub fn energy(&self) -> f64 {
        discrete_energy(&self.state, &self.spec).unwrap_or(f64::INFINITY)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.t
    }
}

/// Steady profile of `U = s²`, logistic mobility and `V = k x²`.
#[wasm_bindgen]
pub struct SteadyState {
    values: Vec<f64>,
    constant: f64,
}

#[wasm_bindgen]
impl SteadyState {
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn constant(&self) -> f64 {
        self.constant
    }
}

/// The mass-`mass` steady state for `V = k x²` on `n_cells` cells, `α = 1`.
#[wasm_bindgen]
pub fn steady_profile(mass: f64, k: f64, n_cells: usize) -> Result<SteadyState, String> {
    let spec = ProblemSpec::from_families(
        1.0,
        &MobilityFamily::logistic(),
        &DiffusionFamily::Quadratic,
        &PotentialFamily::Harmonic { k, center: 0.0 },
    )
    .map_err(|e| e.to_string())?;
    let grid = Grid1D::new(n_cells).map_err(|e| e.to_string())?;
    let p = solve_mass_constant(mass, &spec, grid).map_err(|e| e.to_string())?;
    Ok(SteadyState {
        constant: p.constant(),
        values: p.field.into_values(),
    })
}

/// Samples `m = m₁ m₂` on `samples` points of `[0, 1]`, flattened as rows
/// `s, m, m₁, m₂`. `family` is `logistic`, `power_product` (exponents `a`,
/// `b`) or `double_well`.
#[wasm_bindgen]
pub fn mobility_split(family: &str, a: f64, b: f64, samples: usize) -> Result<Vec<f64>, String> {
    let params: Vec<f64> = if family == "power_product" { vec![a, b] } else { Vec::new() };
    let pair = MobilityFamily::from_name(family, &params)
        .and_then(|f| f.build(1.0))
        .map_err(|e| e.to_string())?;
    let samples = samples.max(2);
    let mut out = Vec::with_capacity(4 * samples);
    for i in 0..samples {
        let s = i as f64 / (samples - 1) as f64;
        out.extend([s, pair.mobility(s), pair.m1(s), pair.m2(s)]);
    }
    Ok(out)
}
