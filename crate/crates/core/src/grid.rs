//! Uniform cell-centred grid on (0, 1), density vectors, discrete norms and
//! the discrete free energy.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::model::ProblemSpec;
use crate::quad::gauss_legendre5;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("a grid needs at least 2 cells, got {0}")]
    TooFewCells(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("initial datum {value} at x = {x} lies outside [0, {alpha}]")]
    OutOfRange { x: f64, value: f64, alpha: f64 },
    #[error("energy is infinite: cell {cell} sits at a singular endpoint (rho = {value})")]
    EnergyInfinite { cell: usize, value: f64 },
    #[error("malformed density file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `N` cells of width `1/N`; cell `i` (0-based) has centre `(i + 1/2)/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid1D {
    n: usize,
}

impl Grid1D {
    pub fn new(n_cells: usize) -> Result<Self, GridError> {
        if n_cells < 2 {
            return Err(GridError::TooFewCells(n_cells));
        }
        Ok(Self { n: n_cells })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }
}

/// Cell averages on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_cells() {
            return Err(GridError::LengthMismatch {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `Δx Σ ρ_i`.
    pub fn mass(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// Whether every value lies in `[-slack, alpha + slack]`.
    pub fn within_bounds(&self, alpha: f64, slack: f64) -> bool {
        self.values.iter().all(|&r| r >= -slack && r <= alpha + slack)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `x,rho` rows (with a header) using 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,rho")?;
        for (i, r) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.center(i), r)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`DensityField::write_csv`]; the header
    /// is optional and the `x` column is only used to count cells.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, GridError> {
        let mut values = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (k == 0 && line.starts_with('x')) {
                continue;
            }
            let rho = line
                .split(',')
                .nth(1)
                .ok_or_else(|| GridError::Parse {
                    line: k + 1,
                    msg: "expected `x,rho`".into(),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| GridError::Parse {
                    line: k + 1,
                    msg: e.to_string(),
                })?;
            values.push(rho);
        }
        let grid = Grid1D::new(values.len())?;
        Self::new(grid, values)
    }
}

/// Cell averages of `rho0` by 5-point Gauss–Legendre, clamped to `[0, alpha]`.
pub fn project_initial<F: Fn(f64) -> f64>(rho0: F, grid: Grid1D, alpha: f64) -> Result<DensityField, GridError> {
    let dx = grid.dx();
    let mut values = Vec::with_capacity(grid.n_cells());
    for i in 0..grid.n_cells() {
        let a = i as f64 * dx;
        let mut sum = 0.0;
        let mut first = None;
        let mut uniform = true;
        for (x, w) in gauss_legendre5(a, a + dx) {
            let value = rho0(x);
            if !(value >= -1e-9 && value <= alpha + 1e-9) {
                return Err(GridError::OutOfRange { x, value, alpha });
            }
            uniform &= *first.get_or_insert(value) == value;
            sum += w * value;
        }
        // a locally constant datum is reproduced bit-exactly
        let avg = if uniform { first.unwrap_or(0.0) } else { sum / dx };
        values.push(avg.clamp(0.0, alpha));
    }
    DensityField::new(grid, values)
}

/// Which scaling [`l1_norm`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L1Scaling {
    /// `Δx Σ |a_i|`, comparable across resolutions.
    #[default]
    Weighted,
    /// `Σ |a_i|`.
    Raw,
}

pub fn l1_norm(a: &[f64], grid: Grid1D, scaling: L1Scaling) -> f64 {
    let sum: f64 = a.iter().map(|v| v.abs()).sum();
    match scaling {
        L1Scaling::Weighted => grid.dx() * sum,
        L1Scaling::Raw => sum,
    }
}

/// `Δx Σ |a_i - b_i|`.
pub fn l1_distance(a: &DensityField, b: &DensityField) -> f64 {
    let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    l1_norm(&d, a.grid, L1Scaling::Weighted)
}

/// Discrete W⁻¹,¹ norm: `min_t Δx Σ_{i=0}^{N} |t + c_i|` with `c_0 = 0` and
/// `c_i = Δx Σ_{j ≤ i} u_j`. The objective is convex and piecewise linear in
/// `t`, minimised at `t = -median(c)`.
pub fn w_minus_1_1_norm(u: &[f64], grid: Grid1D) -> f64 {
    let dx = grid.dx();
    let mut c = Vec::with_capacity(u.len() + 1);
    c.push(0.0);
    let mut acc = 0.0;
    for &v in u {
        acc += dx * v;
        c.push(acc);
    }
    let mut sorted = c.clone();
    sorted.sort_by(f64::total_cmp);
    let t = -sorted[sorted.len() / 2];
    dx * c.iter().map(|ci| (t + ci).abs()).sum::<f64>()
}

/// `E[ρ] = Δx Σ (U(ρ_i) + V(x_i) ρ_i)`.
pub fn discrete_energy(rho: &DensityField, spec: &ProblemSpec) -> Result<f64, GridError> {
    let grid = rho.grid;
    let mut sum = 0.0;
    for (i, &r) in rho.values.iter().enumerate() {
        let u = spec.diffusion.u(r);
        if !u.is_finite() {
            return Err(GridError::EnergyInfinite { cell: i, value: r });
        }
        sum += u + spec.external.v(grid.center(i)) * r;
    }
    Ok(grid.dx() * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{scalar_fn, DiffusionFamily, DiffusionPotential, ExternalPotential, MobilityFamily};

    fn g(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn grid_geometry() {
        assert!(Grid1D::new(1).is_err());
        let grid = g(4);
        assert_eq!(grid.centers(), vec![0.125, 0.375, 0.625, 0.875]);
        let big = g(1000);
        assert!((big.dx() * 1000.0 - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn projection_of_constant_and_linear() {
        let rho = project_initial(|_| 0.3, g(7), 1.0).unwrap();
        assert!(rho.values().iter().all(|&v| v == 0.3));
        let rho = project_initial(|x| x, g(4), 1.0).unwrap();
        for (v, e) in rho.values().iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_rejects_out_of_range() {
        let err = project_initial(|x| 2.0 * x, g(4), 1.0).unwrap_err();
        assert!(matches!(err, GridError::OutOfRange { .. }));
        // tiny quadrature-level overshoot is absorbed
        let rho = project_initial(|_| 1.0 + 5e-10, g(4), 1.0).unwrap();
        assert!(rho.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn l1_examples() {
        let grid = g(2);
        assert_eq!(l1_norm(&[0.0, 0.0], grid, L1Scaling::Weighted), 0.0);
        assert_eq!(l1_norm(&[1.0, -1.0], grid, L1Scaling::Weighted), 1.0);
        assert_eq!(l1_norm(&[1.0, -1.0], grid, L1Scaling::Raw), 2.0);
    }

    #[test]
    fn w11_examples() {
        assert_eq!(w_minus_1_1_norm(&[0.0; 5], g(5)), 0.0);
        assert!((w_minus_1_1_norm(&[1.0, -1.0], g(2)) - 0.25).abs() < 1e-15);
        assert!((w_minus_1_1_norm(&[2.0, -1.0, -1.0], g(3)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn energy_example() {
        let spec = ProblemSpec::new(
            MobilityFamily::logistic().build(1.0).unwrap(),
            DiffusionFamily::Quadratic.build(1.0).unwrap(),
            // V(0.25) = 0, V(0.75) = 1
            ExternalPotential::new(scalar_fn(|x| 4.0 * (x - 0.25).powi(2)), scalar_fn(|x| 8.0 * (x - 0.25))).unwrap(),
        )
        .unwrap();
        let rho = DensityField::new(g(2), vec![0.2, 0.6]).unwrap();
        assert!((discrete_energy(&rho, &spec).unwrap() - 0.5).abs() < 1e-15);
        let zero = DensityField::constant(g(2), 0.0);
        assert_eq!(discrete_energy(&zero, &spec).unwrap(), 0.0);
    }

    #[test]
    fn energy_infinite_is_reported() {
        let u = DiffusionPotential::new(
            1.0,
            scalar_fn(|s| -s.ln()),
            scalar_fn(|s| -1.0 / s),
            scalar_fn(|s| 1.0 / (s * s)),
            None,
            f64::NEG_INFINITY,
            -1.0,
        );
        let spec = ProblemSpec::new(
            MobilityFamily::logistic().build(1.0).unwrap(),
            u,
            ExternalPotential::new(scalar_fn(|_| 0.0), scalar_fn(|_| 0.0)).unwrap(),
        )
        .unwrap();
        let rho = DensityField::new(g(2), vec![0.0, 0.5]).unwrap();
        assert!(matches!(
            discrete_energy(&rho, &spec),
            Err(GridError::EnergyInfinite { cell: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let values: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin().abs() / 3.0).collect();
        let rho = DensityField::new(g(9), values).unwrap();
        let mut buf = Vec::new();
        rho.write_csv(&mut buf).unwrap();
        let back = DensityField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, rho);
    }
}
