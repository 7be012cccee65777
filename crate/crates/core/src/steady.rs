//! Steady states: mass-constrained constants, truncated and Barenblatt
//! profiles, and the Euler–Lagrange classification of a discrete state.
//!
//! Every stationary profile here has the form
//! `ρ_i = T_{0,α} ∘ (U')⁻¹(C − V(x_i))` on each connected piece of its
//! support, with `C` fixed by the discrete mass `Δx Σ ρ_i`.

use std::io::{self, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{DensityField, Grid1D, GridError};
use crate::model::ProblemSpec;
use crate::scheme::{implicit_step, SchemeConfig, SchemeError};

/// Target accuracy of the discrete mass condition.
pub const MASS_TOL: f64 = 1e-12;
/// `P(C)` flat over a wider `C`-interval than this is reported, not guessed.
pub const PLATEAU_WIDTH: f64 = 1e-6;
/// Default absolute tolerance on `ξ` in [`check_euler_lagrange`].
pub const EL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SteadyError {
    #[error("mass {mass} outside (0, {capacity})")]
    MassOutOfRange { mass: f64, capacity: f64 },
    #[error("could not bracket the mass constant after {0} doublings")]
    BracketFailed(usize),
    #[error("mass map is flat near the root: every C in [{lo}, {hi}] gives the target mass")]
    NonUniquePlateau { lo: f64, hi: f64 },
    #[error("mass map jumps over the target at C = {c}: mass {below} below, {above} above")]
    MassJump { c: f64, below: f64, above: f64 },
    #[error("Barenblatt support radius {radius} reaches the domain boundary")]
    SupportOverflow { radius: f64 },
    #[error("profile pieces overlap: {0}")]
    Overlap(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyKind {
    /// ε > 0: strictly interior, `(U_ε')⁻¹(C − V)`.
    Regularized,
    /// ε = 0: `T_{0,α} ∘ (U')⁻¹(C − V)`.
    Truncated,
    /// One constant per connected piece of the support.
    Composite,
}

/// Outcome of [`check_euler_lagrange`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ElVerdict {
    /// A single `C` with `ξ ≥ C` where `ρ < α` and `ξ ≤ C` where `ρ > 0`.
    MinimiserCompatible { constant: f64 },
    /// The conditions hold separately on each support component (listed as
    /// half-open cell ranges) with distinct constants.
    MultiConstant {
        constants: Vec<f64>,
        components: Vec<(usize, usize)>,
    },
    /// Cells violating the conditions for the best single constant.
    Violated { constant: f64, cells: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyProfile {
    /// One constant, or one per component for [`SteadyKind::Composite`].
    pub constants: Vec<f64>,
    pub field: DensityField,
    pub mass: f64,
    pub kind: SteadyKind,
    pub el_verdict: Option<ElVerdict>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    constants: &'a [f64],
    mass: f64,
    kind: SteadyKind,
    n_cells: usize,
    el_verdict: &'a Option<ElVerdict>,
}

impl SteadyProfile {
    pub fn constant(&self) -> f64 {
        self.constants[0]
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        self.field.write_csv(w)
    }

    /// `{constants, mass, kind, n_cells, el_verdict}` as pretty JSON.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&Sidecar {
            constants: &self.constants,
            mass: self.mass,
            kind: self.kind,
            n_cells: self.field.grid().n_cells(),
            el_verdict: &self.el_verdict,
        })
        .expect("sidecar serializes")
    }
}

/// `T_{0,α}(s) = min(α, max(0, s))`.
pub fn truncate(s: f64, alpha: f64) -> f64 {
    s.max(0.0).min(alpha)
}

fn sample_v(spec: &ProblemSpec, grid: Grid1D) -> Vec<f64> {
    grid.centers().iter().map(|&x| spec.external.v(x)).collect()
}

/// Finds `C` with `mass_of(C) = target` for a nondecreasing `mass_of`.
fn solve_constant<F: Fn(f64) -> f64>(mass_of: F, target: f64, mut lo: f64, mut hi: f64) -> Result<f64, SteadyError> {
    const MAX_DOUBLINGS: usize = 200;
    let mut width = (hi - lo).max(1.0);
    let mut k = 0;
    while mass_of(lo) > target {
        hi = lo;
        lo -= width;
        width *= 2.0;
        k += 1;
        if k > MAX_DOUBLINGS || !lo.is_finite() {
            return Err(SteadyError::BracketFailed(k));
        }
    }
    while mass_of(hi) < target {
        lo = hi;
        hi += width;
        width *= 2.0;
        k += 1;
        if k > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(SteadyError::BracketFailed(k));
        }
    }
    // invariant: mass_of(lo) ≤ target ≤ mass_of(hi)
    // bisect to the resolution of f64, then accept if the mass matches
    let c;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            let (below, above) = (mass_of(lo), mass_of(hi));
            let (best, err) = if (below - target).abs() <= (above - target).abs() {
                (lo, below - target)
            } else {
                (hi, above - target)
            };
            if err.abs() > MASS_TOL {
                return Err(SteadyError::MassJump { c: mid, below, above });
            }
            c = best;
            break;
        }
        let p = mass_of(mid);
        if p == target {
            c = mid;
            break;
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Plateau check: extent of {C : |P(C) − M| ≤ MASS_TOL} around the root.
    let probe = PLATEAU_WIDTH;
    let inside = |x: f64| (mass_of(x) - target).abs() <= MASS_TOL;
    if inside(c - probe) || inside(c + probe) {
        let edge = |mut a: f64, mut b: f64| {
            // a inside, b outside
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if inside(m) {
                    a = m;
                } else {
                    b = m;
                }
            }
            a
        };
        let mut far_lo = c - probe;
        while inside(far_lo) && far_lo.is_finite() {
            far_lo -= 2.0 * (c - far_lo);
        }
        let mut far_hi = c + probe;
        while inside(far_hi) && far_hi.is_finite() {
            far_hi += 2.0 * (far_hi - c);
        }
        let (a, b) = (edge(c, far_lo), edge(c, far_hi));
        if b - a > PLATEAU_WIDTH {
            return Err(SteadyError::NonUniquePlateau { lo: a, hi: b });
        }
    }
    Ok(c)
}

fn kind_of(spec: &ProblemSpec) -> SteadyKind {
    if spec.regularization.is_some() {
        SteadyKind::Regularized
    } else {
        SteadyKind::Truncated
    }
}

/// `C` and the profile on `cells` (zero elsewhere) carrying `mass` there.
pub fn solve_mass_constant_on(
    mass: f64,
    spec: &ProblemSpec,
    grid: Grid1D,
    cells: Range<usize>,
) -> Result<(f64, Vec<f64>), SteadyError> {
    let dx = grid.dx();
    let capacity = spec.alpha * dx * cells.len() as f64;
    if !(mass > 0.0 && mass < capacity) {
        return Err(SteadyError::MassOutOfRange { mass, capacity });
    }
    let v = sample_v(spec, grid);
    let u = &spec.diffusion;
    let piece = &v[cells.clone()];
    let mass_of = |c: f64| dx * piece.iter().map(|&vi| u.truncated_inverse(c - vi)).sum::<f64>();
    let (vmin, vmax) = piece
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let d = u.du(0.5 * mass);
    let d = if d.is_finite() { d } else { 0.0 };
    let c = solve_constant(mass_of, mass, vmin + d - 1.0, vmax + d + 1.0)?;
    let mut values = vec![0.0; grid.n_cells()];
    for i in cells {
        values[i] = u.truncated_inverse(c - v[i]);
    }
    Ok((c, values))
}

/// The single-constant steady profile of the given mass.
pub fn solve_mass_constant(mass: f64, spec: &ProblemSpec, grid: Grid1D) -> Result<SteadyProfile, SteadyError> {
    let (c, values) = solve_mass_constant_on(mass, spec, grid, 0..grid.n_cells())?;
    let field = DensityField::new(grid, values)?;
    Ok(SteadyProfile {
        constants: vec![c],
        mass: field.mass(),
        el_verdict: Some(check_euler_lagrange(&field, spec, EL_TOL)),
        field,
        kind: kind_of(spec),
    })
}

/// One constant per cell range; the ranges must be disjoint.
pub fn composite_profile(
    spec: &ProblemSpec,
    grid: Grid1D,
    pieces: &[(Range<usize>, f64)],
) -> Result<SteadyProfile, SteadyError> {
    let mut values = vec![0.0; grid.n_cells()];
    let mut constants = Vec::with_capacity(pieces.len());
    let mut owner = vec![usize::MAX; grid.n_cells()];
    for (k, (range, mass)) in pieces.iter().enumerate() {
        for i in range.clone() {
            if owner[i] != usize::MAX {
                return Err(SteadyError::Overlap(format!("cell {i} in pieces {} and {k}", owner[i])));
            }
            owner[i] = k;
        }
        let (c, part) = solve_mass_constant_on(*mass, spec, grid, range.clone())?;
        constants.push(c);
        for i in range.clone() {
            values[i] = part[i];
        }
    }
    let field = DensityField::new(grid, values)?;
    Ok(SteadyProfile {
        constants,
        mass: field.mass(),
        el_verdict: Some(check_euler_lagrange(&field, spec, EL_TOL)),
        field,
        kind: SteadyKind::Composite,
    })
}

fn barenblatt_values(c: f64, m: f64, curvature: f64, center: f64, grid: Grid1D) -> Vec<f64> {
    grid.centers()
        .iter()
        .map(|&x| {
            let base = (m - 1.0) / m * (c - 0.5 * curvature * (x - center).powi(2));
            if base > 0.0 {
                base.powf(1.0 / (m - 1.0))
            } else {
                0.0
            }
        })
        .collect()
}

/// `B_i = ((m−1)/m · (C − |x_i − x_c|²/2))₊^{1/(m−1)}` with `Δx Σ B_i = M`.
pub fn barenblatt(mass: f64, m_exponent: f64, center: f64, grid: Grid1D) -> Result<SteadyProfile, SteadyError> {
    barenblatt_with_curvature(mass, m_exponent, center, 1.0, grid)
}

/// As [`barenblatt`] for the confinement `k |x − x_c|² / 2`.
pub fn barenblatt_with_curvature(
    mass: f64,
    m_exponent: f64,
    center: f64,
    curvature: f64,
    grid: Grid1D,
) -> Result<SteadyProfile, SteadyError> {
    let m = m_exponent;
    if !(m > 1.0) {
        return Err(SteadyError::Scheme(SchemeError::InvalidConfig(format!(
            "Barenblatt exponent m = {m} must exceed 1"
        ))));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(SteadyError::MassOutOfRange {
            mass,
            capacity: f64::INFINITY,
        });
    }
    let dx = grid.dx();
    let mass_of = |c: f64| dx * barenblatt_values(c, m, curvature, center, grid).iter().sum::<f64>();
    let c = solve_constant(mass_of, mass, 0.0, 1.0)?;
    let radius = (2.0 * c / curvature).sqrt();
    if radius >= center.min(1.0 - center) {
        return Err(SteadyError::SupportOverflow { radius });
    }
    let field = DensityField::new(grid, barenblatt_values(c, m, curvature, center, grid))?;
    Ok(SteadyProfile {
        constants: vec![c],
        mass: field.mass(),
        field,
        kind: SteadyKind::Truncated,
        el_verdict: None,
    })
}

/// Sum of Barenblatt bumps `(mass, center)` with one constant each.
pub fn barenblatt_composite(
    bumps: &[(f64, f64)],
    m_exponent: f64,
    curvature: f64,
    grid: Grid1D,
) -> Result<SteadyProfile, SteadyError> {
    let mut values = vec![0.0; grid.n_cells()];
    let mut constants = Vec::new();
    for &(mass, center) in bumps {
        let b = barenblatt_with_curvature(mass, m_exponent, center, curvature, grid)?;
        for (acc, &v) in values.iter_mut().zip(b.values()) {
            if v > 0.0 && *acc > 0.0 {
                return Err(SteadyError::Overlap(format!("bump at {center} meets another bump")));
            }
            *acc += v;
        }
        constants.push(b.constant());
    }
    let field = DensityField::new(grid, values)?;
    Ok(SteadyProfile {
        constants,
        mass: field.mass(),
        field,
        kind: SteadyKind::Composite,
        el_verdict: None,
    })
}

/// Lower/upper bounds on a constant from cells that push it up (`ρ > tol`)
/// and cells that cap it (`ρ < α − tol`).
#[derive(Clone, Copy)]
struct Window {
    lo: f64,
    hi: f64,
}

impl Window {
    fn new() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    fn feasible(&self, tol: f64) -> bool {
        self.lo <= self.hi + 2.0 * tol
    }

    fn pick(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo,
            (false, true) => self.hi,
            (false, false) => 0.0,
        }
    }
}

/// Classifies `ρ` by the Euler–Lagrange conditions on `ξ_i = U'(ρ_i) + V(x_i)`.
pub fn check_euler_lagrange(rho: &DensityField, spec: &ProblemSpec, tol: f64) -> ElVerdict {
    let grid = rho.grid();
    let alpha = spec.alpha;
    let v = sample_v(spec, grid);
    let r = rho.values();
    let xi: Vec<f64> = r.iter().zip(&v).map(|(&s, &vi)| spec.diffusion.du(s) + vi).collect();
    let occupied = |i: usize| r[i] > tol;
    let unsaturated = |i: usize| r[i] < alpha - tol;
    let absorb = |w: &mut Window, i: usize| {
        if occupied(i) {
            w.lo = w.lo.max(xi[i]);
        }
        if unsaturated(i) {
            w.hi = w.hi.min(xi[i]);
        }
    };

    let mut global = Window::new();
    for i in 0..r.len() {
        absorb(&mut global, i);
    }
    if global.feasible(tol) {
        return ElVerdict::MinimiserCompatible {
            constant: global.pick(),
        };
    }

    // maximal runs of occupied cells
    let mut components = Vec::new();
    let mut i = 0;
    while i < r.len() {
        if occupied(i) {
            let start = i;
            while i < r.len() && occupied(i) {
                i += 1;
            }
            components.push((start, i));
        } else {
            i += 1;
        }
    }
    let mut constants = Vec::with_capacity(components.len());
    let mut piecewise_ok = components.len() > 1;
    for &(a, b) in &components {
        let mut w = Window::new();
        for i in a..b {
            absorb(&mut w, i);
        }
        // the empty neighbours must not attract mass either
        for j in [a.checked_sub(1), (b < r.len()).then_some(b)].into_iter().flatten() {
            w.hi = w.hi.min(xi[j]);
        }
        if !w.feasible(tol) {
            piecewise_ok = false;
            break;
        }
        constants.push(w.pick());
    }
    if piecewise_ok {
        let mut sorted = constants.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|p| p[1] - p[0] > 2.0 * tol) {
            return ElVerdict::MultiConstant { constants, components };
        }
    }

    let c = 0.5 * (global.lo + global.hi);
    let cells = (0..r.len())
        .filter(|&i| (occupied(i) && xi[i] > c + tol) || (unsaturated(i) && xi[i] < c - tol))
        .collect();
    ElVerdict::Violated { constant: c, cells }
}

/// One implicit step from `rho`; a fixed point moves by at most `10 · newton_tol` in `Σ|·|`.
pub fn verify_fixed_point(
    rho: &DensityField,
    config: &SchemeConfig,
    spec: &ProblemSpec,
) -> Result<(bool, f64), SteadyError> {
    let (next, _) = implicit_step(rho, config, spec)?;
    let change: f64 = next.values().iter().zip(rho.values()).map(|(a, b)| (a - b).abs()).sum();
    Ok((change <= 10.0 * config.tolerance(rho.grid().n_cells()), change))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regularize, DiffusionFamily, MobilityFamily, PotentialFamily, RegularizationParams};
    use crate::scheme::velocity;

    fn spec(v: PotentialFamily) -> ProblemSpec {
        ProblemSpec::from_families(1.0, &MobilityFamily::logistic(), &DiffusionFamily::Quadratic, &v).unwrap()
    }

    fn harmonic() -> ProblemSpec {
        spec(PotentialFamily::Harmonic { k: 10.0, center: 0.0 })
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(-3.0, 1.0), 0.0);
        assert_eq!(truncate(0.5, 1.0), 0.5);
        let sp = spec(PotentialFamily::zero());
        assert_eq!(sp.diffusion.truncated_inverse(2.0 + 1.0), 1.0);
    }

    #[test]
    fn flat_potential_gives_constant() {
        let sp = spec(PotentialFamily::zero());
        let p = solve_mass_constant(0.5, &sp, Grid1D::new(16).unwrap()).unwrap();
        assert!((p.constant() - 1.0).abs() < 1e-11);
        assert!(p.values().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn harmonic_profile_has_free_boundary_and_matches_mass() {
        let sp = harmonic();
        let grid = Grid1D::new(128).unwrap();
        let p = solve_mass_constant(0.3, &sp, grid).unwrap();
        assert!((p.mass - 0.3).abs() <= 1e-12);
        assert!(p.values().iter().any(|&v| v == 0.0));
        assert_eq!(p.kind, SteadyKind::Truncated);
        assert!(matches!(p.el_verdict, Some(ElVerdict::MinimiserCompatible { .. })));
        // ξ constant on the interior cells
        let xi: Vec<f64> = p
            .values()
            .iter()
            .zip(grid.centers())
            .filter(|(&r, _)| r > 0.0 && r < 1.0)
            .map(|(&r, x)| 2.0 * r + 10.0 * x * x)
            .collect();
        assert!(xi.iter().all(|&z| (z - p.constant()).abs() < 1e-12));
        let (ok, _) = verify_fixed_point(&p.field, &SchemeConfig::new(2f64.powi(-7)), &sp).unwrap();
        assert!(ok);
    }

    #[test]
    fn interior_profile_has_zero_velocity() {
        let sp = spec(PotentialFamily::Harmonic { k: 0.5, center: 0.3 });
        let p = solve_mass_constant(0.5, &sp, Grid1D::new(64).unwrap()).unwrap();
        assert!(p.values().iter().all(|&r| r > 0.0 && r < 1.0));
        let v = velocity(&p.field, &sp).unwrap();
        assert!(v.iter().all(|x| x.abs() <= 1e-12));
    }

    #[test]
    fn regularized_profile_is_interior() {
        let sp = regularize(&harmonic(), &RegularizationParams::new(0.1, 1.0)).unwrap();
        let p = solve_mass_constant(0.3, &sp, Grid1D::new(128).unwrap()).unwrap();
        assert_eq!(p.kind, SteadyKind::Regularized);
        assert!((p.mass - 0.3).abs() <= 1e-12);
        assert!(p.values().iter().all(|&r| r > 0.0 && r < 1.0));
    }

    #[test]
    fn mass_map_is_monotone() {
        let sp = harmonic();
        let grid = Grid1D::new(64).unwrap();
        let v = sample_v(&sp, grid);
        let p = |c: f64| v.iter().map(|&x| sp.diffusion.truncated_inverse(c - x)).sum::<f64>();
        let mut prev = p(-5.0);
        for k in 0..2000 {
            let c = -5.0 + 20.0 * k as f64 / 2000.0;
            assert!(p(c) >= prev);
            prev = p(c);
        }
    }

    #[test]
    fn rejects_bad_masses() {
        let grid = Grid1D::new(8).unwrap();
        for m in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                solve_mass_constant(m, &harmonic(), grid),
                Err(SteadyError::MassOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn plateau_is_reported() {
        // V = 0 on the left half, 10 on the right: mass α/2 fills the left
        // half for every C in [2, 10]
        let v = crate::model::ExternalPotential::new(
            crate::model::scalar_fn(|x| if x < 0.5 { 0.0 } else { 10.0 }),
            crate::model::scalar_fn(|_| 0.0),
        )
        .unwrap();
        let sp = ProblemSpec::new(
            MobilityFamily::logistic().build(1.0).unwrap(),
            DiffusionFamily::Quadratic.build(1.0).unwrap(),
            v,
        )
        .unwrap();
        match solve_mass_constant(0.5, &sp, Grid1D::new(8).unwrap()) {
            Err(SteadyError::NonUniquePlateau { lo, hi }) => {
                assert!((lo - 2.0).abs() < 1e-9 && (hi - 10.0).abs() < 1e-9, "{lo} {hi}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn barenblatt_m2_is_inverted_parabola() {
        let grid = Grid1D::new(256).unwrap();
        let b = barenblatt(0.02, 2.0, 0.5, grid).unwrap();
        let c = b.constant();
        for (x, v) in grid.centers().iter().zip(b.values()) {
            let e = ((c - (x - 0.5).powi(2) / 2.0) / 2.0).max(0.0);
            assert!((v - e).abs() < 1e-15);
        }
        // same thing through the generic solver with V = |x − 1/2|²/2
        let sp = spec(PotentialFamily::Polynomial {
            coeffs: vec![0.125, -0.5, 0.5],
        });
        let g = solve_mass_constant(0.02, &sp, grid).unwrap();
        assert!((g.constant() - c).abs() < 1e-12);
        for (a, b) in g.values().iter().zip(b.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn barenblatt_constant_grows_with_mass_and_overflow_is_caught() {
        let grid = Grid1D::new(128).unwrap();
        let mut prev = 0.0;
        for k in 1..10 {
            let c = barenblatt(0.004 * k as f64, 2.0, 0.5, grid).unwrap().constant();
            assert!(c > prev);
            prev = c;
        }
        assert!(matches!(
            barenblatt(0.5, 2.0, 0.5, grid),
            Err(SteadyError::SupportOverflow { .. })
        ));
    }

    fn double_well() -> ProblemSpec {
        spec(PotentialFamily::DoubleWell {
            x1: 0.25,
            x2: 0.75,
            radius: 0.2,
            strength: 40.0,
        })
    }

    #[test]
    fn two_bump_composite_is_multi_constant_and_stationary() {
        let sp = double_well();
        let grid = Grid1D::new(128).unwrap();
        let p = composite_profile(&sp, grid, &[(0..64, 0.02), (64..128, 0.04)]).unwrap();
        assert_eq!(p.constants.len(), 2);
        assert!((p.constants[0] - p.constants[1]).abs() > 1e-3);
        assert!(matches!(p.el_verdict, Some(ElVerdict::MultiConstant { .. })), "{:?}", p.el_verdict);
        // with curvature 40 inside the wells these are Barenblatt bumps
        let b = barenblatt_composite(&[(0.02, 0.25), (0.04, 0.75)], 2.0, 40.0, grid).unwrap();
        for (a, e) in p.values().iter().zip(b.values()) {
            assert!((a - e).abs() < 1e-12);
        }
        let (ok, change) = verify_fixed_point(&p.field, &SchemeConfig::new(2f64.powi(-12)), &sp).unwrap();
        assert!(ok, "{change}");
    }

    #[test]
    fn perturbed_steady_state_is_not_fixed() {
        let sp = harmonic();
        let grid = Grid1D::new(64).unwrap();
        let mut p = solve_mass_constant(0.3, &sp, grid).unwrap().field;
        p.values_mut()[10] += 1e-3;
        let (ok, _) = verify_fixed_point(&p, &SchemeConfig::new(2f64.powi(-6)), &sp).unwrap();
        assert!(!ok);
    }

    #[test]
    fn random_field_is_violated() {
        use rand::{Rng, SeedableRng};
        let sp = harmonic();
        let grid = Grid1D::new(32).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let values: Vec<f64> = (0..32).map(|_| rng.gen_range(0.05..0.95)).collect();
            let f = DensityField::new(grid, values).unwrap();
            let vmax = velocity(&f, &sp).unwrap().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(vmax > 1e3 * EL_TOL);
            match check_euler_lagrange(&f, &sp, EL_TOL) {
                ElVerdict::Violated { cells, .. } => assert!(!cells.is_empty()),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn sidecar_has_expected_keys() {
        let p = solve_mass_constant(0.3, &harmonic(), Grid1D::new(16).unwrap()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&p.sidecar_json()).unwrap();
        for key in ["constants", "mass", "kind", "el_verdict"] {
            assert!(json.get(key).is_some());
        }
        assert_eq!(json["kind"], "truncated");
    }
}
