//! Independent reference implementations used to cross-check the library.
#![allow(dead_code)]

use satflow::grid::{DensityField, Grid1D};
use satflow::model::{DiffusionFamily, MobilityFamily, PotentialFamily, ProblemSpec};
use satflow::scheme::{apply_h, SchemeConfig};

/// `U = s²`, logistic mobility, `V = k x²` on `α = 1`.
pub fn harmonic_spec(k: f64) -> ProblemSpec {
    ProblemSpec::from_families(
        1.0,
        &MobilityFamily::logistic(),
        &DiffusionFamily::Quadratic,
        &PotentialFamily::Harmonic { k, center: 0.0 },
    )
    .unwrap()
}

/// W⁻¹,¹ norm by evaluating the piecewise-linear objective
/// `t ↦ Δx Σ |t + c_i|` at every breakpoint `t = −c_j` and keeping the least.
pub fn w11_scan(u: &[f64], dx: f64) -> f64 {
    let mut c = vec![0.0];
    let mut acc = 0.0;
    for &v in u {
        acc += dx * v;
        c.push(acc);
    }
    c.iter()
        .map(|&cj| dx * c.iter().map(|ci| (ci - cj).abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Solves `H(ρ) = ρⁿ` by the relaxed fixed-point iteration `ρ ← ρ − ω G(ρ)`.
/// Returns the iterate and the final residual `Σ|G|`.
pub fn picard_step(prev: &DensityField, cfg: &SchemeConfig, spec: &ProblemSpec, omega: f64) -> (DensityField, f64) {
    let mut rho = prev.clone();
    let mut res = f64::INFINITY;
    for _ in 0..200_000 {
        let g = apply_h(&rho, prev, 1.0, cfg, spec).expect("interior iterate");
        res = g.iter().map(|x| x.abs()).sum();
        if res < 1e-15 {
            break;
        }
        for (r, gi) in rho.values_mut().iter_mut().zip(&g) {
            *r -= omega * gi;
        }
    }
    (rho, res)
}

/// Central finite-difference Jacobian of `G(ρ) = H(1, ρ) − ρⁿ`.
pub fn fd_jacobian(rho: &DensityField, cfg: &SchemeConfig, spec: &ProblemSpec, h: f64) -> Vec<Vec<f64>> {
    let n = rho.values().len();
    let grid: Grid1D = rho.grid();
    let mut cols = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut plus = rho.values().to_vec();
        let mut minus = rho.values().to_vec();
        plus[j] += h;
        minus[j] -= h;
        let gp = apply_h(&DensityField::new(grid, plus).unwrap(), rho, 1.0, cfg, spec).unwrap();
        let gm = apply_h(&DensityField::new(grid, minus).unwrap(), rho, 1.0, cfg, spec).unwrap();
        for i in 0..n {
            cols[j][i] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    // rows i, columns j
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}
