use super::{SchemeConfig, SchemeError, TieRule, Tridiagonal};
use crate::grid::{DensityField, Grid1D};
use crate::model::{DomainKind, ProblemSpec};

/// A problem laid out on a grid: `V` sampled at the centres, projection
/// bounds for Newton iterates.
pub(crate) struct Scheme<'a> {
    pub spec: &'a ProblemSpec,
    pub grid: Grid1D,
    pub v: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub tie: TieRule,
}

/// Per-interface partials `∂F/∂ρ_left`, `∂F/∂ρ_right`.
struct FluxPartials {
    left: f64,
    right: f64,
}

impl<'a> Scheme<'a> {
    pub fn new(spec: &'a ProblemSpec, grid: Grid1D, config: Option<&SchemeConfig>) -> Self {
        let alpha = spec.alpha;
        let (lo, hi) = match spec.diffusion.domain_kind() {
            DomainKind::C1Closed => (0.0, alpha),
            DomainKind::Singular => {
                let margin = config.map_or(1e-14, |c| c.clamp_margin) * alpha;
                (margin, alpha - margin)
            }
        };
        Self {
            spec,
            grid,
            v: grid.centers().iter().map(|&x| spec.external.v(x)).collect(),
            lo,
            hi,
            tie: config.map_or(TieRule::Positive, |c| c.sign_at_zero),
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn project(&self, rho: &mut [f64]) {
        for r in rho {
            *r = r.clamp(self.lo, self.hi);
        }
    }

    pub fn xi(&self, rho: &[f64]) -> Result<Vec<f64>, SchemeError> {
        rho.iter()
            .zip(&self.v)
            .enumerate()
            .map(|(i, (&r, &v))| {
                let d = self.spec.diffusion.du(r);
                if d.is_finite() {
                    Ok(d + v)
                } else {
                    Err(SchemeError::SingularEvaluation { cell: i, value: r })
                }
            })
            .collect()
    }

    /// Interior velocities, `N - 1` entries.
    pub fn velocities(&self, xi: &[f64]) -> Vec<f64> {
        let inv_dx = self.grid.n_cells() as f64;
        xi.windows(2).map(|w| -(w[1] - w[0]) * inv_dx).collect()
    }

    /// `N + 1` fluxes with zero ends.
    pub fn fluxes(&self, rho: &[f64], vel: &[f64]) -> Vec<f64> {
        let m = &self.spec.mobility;
        let n = self.n();
        let mut f = vec![0.0; n + 1];
        for i in 0..n - 1 {
            let (a, b, v) = (rho[i], rho[i + 1], vel[i]);
            f[i + 1] = if v > 0.0 {
                m.m1(a) * m.m2(b) * v
            } else if v < 0.0 {
                m.m1(b) * m.m2(a) * v
            } else {
                0.0
            };
        }
        f
    }

    pub fn residual(&self, rho: &[f64], prev: &[f64], lambda: f64, dt: f64) -> Result<Vec<f64>, SchemeError> {
        let xi = self.xi(rho)?;
        let vel = self.velocities(&xi);
        let f = self.fluxes(rho, &vel);
        let r = lambda * dt * self.grid.n_cells() as f64;
        Ok((0..self.n())
            .map(|i| rho[i] + r * (f[i + 1] - f[i]) - prev[i])
            .collect())
    }

    fn partials(&self, a: f64, b: f64, v: f64) -> FluxPartials {
        let m = &self.spec.mobility;
        let u = &self.spec.diffusion;
        let inv_dx = self.grid.n_cells() as f64;
        let (dv_da, dv_db) = (u.ddu(a) * inv_dx, -u.ddu(b) * inv_dx);
        let positive = v > 0.0 || (v == 0.0 && self.tie == TieRule::Positive);
        if positive {
            let (m1, m2) = (m.m1(a), m.m2(b));
            FluxPartials {
                left: m.dm1(a) * m2 * v + m1 * m2 * dv_da,
                right: m1 * m.dm2(b) * v + m1 * m2 * dv_db,
            }
        } else {
            let (m1, m2) = (m.m1(b), m.m2(a));
            FluxPartials {
                left: m1 * m.dm2(a) * v + m1 * m2 * dv_da,
                right: m.dm1(b) * m2 * v + m1 * m2 * dv_db,
            }
        }
    }

    pub fn jacobian(&self, rho: &[f64], lambda: f64, dt: f64) -> Result<Tridiagonal, SchemeError> {
        let n = self.n();
        let xi = self.xi(rho)?;
        let vel = self.velocities(&xi);
        let r = lambda * dt * n as f64;
        let mut jac = Tridiagonal::identity(n);
        for k in 0..n - 1 {
            // interface k + 1/2 (0-based) between cells k and k + 1
            let p = self.partials(rho[k], rho[k + 1], vel[k]);
            // G_k gains +F, G_{k+1} gains -F
            jac.diag[k] += r * p.left;
            jac.upper[k] += r * p.right;
            jac.lower[k + 1] -= r * p.left;
            jac.diag[k + 1] -= r * p.right;
        }
        Ok(jac)
    }
}

fn check_len(rho: &DensityField, other: &DensityField) -> Result<(), SchemeError> {
    if rho.grid() != other.grid() {
        return Err(crate::grid::GridError::LengthMismatch {
            expected: rho.grid().n_cells(),
            got: other.grid().n_cells(),
        }
        .into());
    }
    Ok(())
}

/// `v_{i+1/2}` at the `N - 1` interior interfaces.
pub fn velocity(rho: &DensityField, spec: &ProblemSpec) -> Result<Vec<f64>, SchemeError> {
    let s = Scheme::new(spec, rho.grid(), None);
    Ok(s.velocities(&s.xi(rho.values())?))
}

/// `F_{i+1/2}` for `i = 0..=N`, with `F_{1/2} = F_{N+1/2} = 0`.
pub fn flux(rho: &DensityField, spec: &ProblemSpec) -> Result<Vec<f64>, SchemeError> {
    let s = Scheme::new(spec, rho.grid(), None);
    let vel = s.velocities(&s.xi(rho.values())?);
    Ok(s.fluxes(rho.values(), &vel))
}

/// `G_i = H_i(λ, ρ) - ρⁿ_i`.
pub fn apply_h(
    rho: &DensityField,
    rho_prev: &DensityField,
    lambda: f64,
    config: &SchemeConfig,
    spec: &ProblemSpec,
) -> Result<Vec<f64>, SchemeError> {
    check_len(rho, rho_prev)?;
    Scheme::new(spec, rho.grid(), Some(config)).residual(rho.values(), rho_prev.values(), lambda, config.dt)
}

/// `∂G_i/∂ρ_j`, which does not depend on `ρⁿ`.
pub fn jacobian(
    rho: &DensityField,
    rho_prev: &DensityField,
    lambda: f64,
    config: &SchemeConfig,
    spec: &ProblemSpec,
) -> Result<Tridiagonal, SchemeError> {
    check_len(rho, rho_prev)?;
    Scheme::new(spec, rho.grid(), Some(config)).jacobian(rho.values(), lambda, config.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionFamily, MobilityFamily, PotentialFamily};

    fn spec(v: PotentialFamily) -> ProblemSpec {
        ProblemSpec::from_families(1.0, &MobilityFamily::logistic(), &DiffusionFamily::Quadratic, &v).unwrap()
    }

    fn field(values: Vec<f64>) -> DensityField {
        DensityField::new(Grid1D::new(values.len()).unwrap(), values).unwrap()
    }

    #[test]
    fn two_cell_velocity_and_flux() {
        let sp = spec(PotentialFamily::zero());
        let rho = field(vec![0.2, 0.6]);
        let v = velocity(&rho, &sp).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0] + 1.6).abs() < 1e-15);
        let f = flux(&rho, &sp).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!((f[0], f[2]), (0.0, 0.0));
        assert!((f[1] + 0.768).abs() < 1e-15);
    }

    #[test]
    fn constant_state_has_no_flux() {
        let sp = spec(PotentialFamily::zero());
        let rho = field(vec![0.4; 8]);
        assert!(velocity(&rho, &sp).unwrap().iter().all(|&v| v == 0.0));
        assert!(flux(&rho, &sp).unwrap().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn upwind_factor_vanishes_at_vacuum_and_saturation() {
        // v > 0 out of an empty cell
        let sp = spec(PotentialFamily::Harmonic { k: 10.0, center: 1.0 });
        let rho = field(vec![0.0, 0.1]);
        assert!(velocity(&rho, &sp).unwrap()[0] > 0.0);
        assert_eq!(flux(&rho, &sp).unwrap()[1], 0.0);
        // v < 0 into a saturated cell
        let sp = spec(PotentialFamily::Harmonic { k: 10.0, center: 0.0 });
        let rho = field(vec![1.0, 0.5]);
        assert!(velocity(&rho, &sp).unwrap()[0] < 0.0);
        assert_eq!(flux(&rho, &sp).unwrap()[1], 0.0);
    }

    #[test]
    fn lambda_zero_is_identity() {
        let sp = spec(PotentialFamily::Harmonic { k: 10.0, center: 0.0 });
        let rho = field(vec![0.1, 0.5, 0.9, 0.3]);
        let prev = field(vec![0.2, 0.2, 0.2, 0.2]);
        let cfg = SchemeConfig::new(0.1);
        let g = apply_h(&rho, &prev, 0.0, &cfg, &sp).unwrap();
        for i in 0..4 {
            assert_eq!(g[i], rho.values()[i] - 0.2);
        }
        let j = jacobian(&rho, &prev, 0.0, &cfg, &sp).unwrap();
        assert_eq!(j, Tridiagonal::identity(4));
    }

    #[test]
    fn jacobian_columns_sum_to_one() {
        let sp = spec(PotentialFamily::Harmonic { k: 10.0, center: 0.0 });
        let rho = field(vec![0.1, 0.5, 0.9, 0.3, 0.7]);
        let cfg = SchemeConfig::new(0.3);
        let j = jacobian(&rho, &rho, 1.0, &cfg, &sp).unwrap();
        for s in j.column_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        for i in 1..5 {
            assert!(j.lower[i] <= 0.0 && j.upper[i - 1] <= 0.0);
        }
    }
}
