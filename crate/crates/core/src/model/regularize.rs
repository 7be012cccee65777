//! The ε-regularized family `(m_ε, Φ_ε, U_ε)`.
//!
//! * `m_ε = φ · S(m / φ)` with `φ(s) = (1 + ε) c_w(min(s, α − s))`, where
//!   `c_w` is a C¹ clip at height `w = band_width` and `S` a C¹ smooth
//!   maximum of its argument and 1. Near the endpoints `m_ε ≥ (1 + ε) s`,
//!   away from them (once `m` exceeds `(1 + η)(1 + ε) w`) `m_ε = m` exactly.
//! * `Φ_ε' = min(m U'', 1/κ) + ε`.
//! * `U_ε'' = Φ_ε' / m_ε`, integrated from `α/2` where `U_ε`, `U_ε'` take the
//!   base values.
//!
//! `U_ε'` is tabulated with adaptive Simpson on a grid clustered
//! geometrically at both endpoints and interpolated by monotone cubic Hermite
//! segments; beyond the outermost nodes it continues as `a + c log s`
//! (resp. `b − c log(α − s)`), which is the exact asymptotic form since
//! `m_ε` vanishes linearly. `U_ε` is the exact antiderivative of that
//! interpolant, so `U_ε`, `U_ε'` and `U_ε''` are mutually consistent.

use std::sync::Arc;

use super::{decompose_mobility, scalar_fn, DiffusionPotential, ModelError, ProblemSpec, ScalarFn};
use crate::quad::adaptive_simpson;

/// Width of the smooth-max transition band in `S`.
const SMOOTH_MAX_ETA: f64 = 0.25;
/// Intervals per geometric end segment and in the uniform middle segment.
const END_INTERVALS: usize = 4096;
const MID_INTERVALS: usize = 2048;
/// Innermost tabulation node, relative to alpha.
const END_NODE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationParams {
    /// ε ∈ (0, 1].
    pub epsilon: f64,
    /// Cap `κ` on `Φ'`: `Φ_ε' ≤ 1/κ + ε`.
    pub kappa: f64,
    /// Point where `U'' > 0` is validated.
    pub s0: f64,
    /// Plateau height `w` of the endpoint floor of `m_ε`.
    pub band_width: f64,
    /// Absolute tolerance of the `U_ε'` quadrature over `[0, alpha]`.
    pub quadrature_tol: f64,
}

impl RegularizationParams {
    /// Defaults: `κ = ε`, `s0 = α/2`, `w = εα/8`, tolerance `1e-10`.
    pub fn new(epsilon: f64, alpha: f64) -> Self {
        Self {
            epsilon,
            kappa: epsilon,
            s0: 0.5 * alpha,
            band_width: epsilon * alpha / 8.0,
            quadrature_tol: 1e-10,
        }
    }

    pub fn validate(&self, alpha: f64) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadParameter(msg));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon = {} must lie in (0, 1]", self.epsilon));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be positive", self.kappa));
        }
        if !(self.s0 > 0.0 && self.s0 < alpha) {
            return bad(format!("s0 = {} must lie in (0, {alpha})", self.s0));
        }
        if !(self.band_width > 0.0 && self.band_width < alpha / 3.0) {
            return bad(format!("band_width = {} must lie in (0, alpha/3)", self.band_width));
        }
        if !(self.quadrature_tol > 0.0) {
            return bad(format!("quadrature_tol = {} must be positive", self.quadrature_tol));
        }
        Ok(())
    }
}

/// C¹ clip: identity below `w/2`, constant `w` above `3w/2`.
fn clip(t: f64, w: f64) -> (f64, f64) {
    if t <= 0.5 * w {
        (t, 1.0)
    } else if t >= 1.5 * w {
        (w, 0.0)
    } else {
        let d = t - 0.5 * w;
        (t - d * d / (2.0 * w), 1.0 - d / w)
    }
}

/// C¹ smooth version of `max(r, 1)`.
fn smooth_max_one(r: f64) -> (f64, f64) {
    let eta = SMOOTH_MAX_ETA;
    if r <= 1.0 - eta {
        (1.0, 0.0)
    } else if r >= 1.0 + eta {
        (r, 1.0)
    } else {
        let d = r - (1.0 - eta);
        (1.0 + d * d / (4.0 * eta), d / (2.0 * eta))
    }
}

/// The regularized mobility `m_ε` built over a base mobility.
#[derive(Clone)]
pub struct RegularizedMobility {
    alpha: f64,
    epsilon: f64,
    width: f64,
    m: ScalarFn,
    dm: ScalarFn,
}

impl RegularizedMobility {
    pub fn new(alpha: f64, epsilon: f64, width: f64, m: ScalarFn, dm: ScalarFn) -> Self {
        Self {
            alpha,
            epsilon,
            width,
            m,
            dm,
        }
    }

    /// `(m_ε(s), m_ε'(s))`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 || s >= self.alpha {
            return (0.0, 0.0);
        }
        let (dist, sign) = if s <= 0.5 * self.alpha {
            (s, 1.0)
        } else {
            (self.alpha - s, -1.0)
        };
        let (c, dc) = clip(dist, self.width);
        let phi = (1.0 + self.epsilon) * c;
        let dphi = (1.0 + self.epsilon) * dc * sign;
        let m = (self.m)(s);
        let r = m / phi;
        let (big_s, ds) = smooth_max_one(r);
        (phi * big_s, dphi * (big_s - r * ds) + ds * (self.dm)(s))
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.eval(s).1
    }
}

/// Tabulated `U_ε'` with its Hermite interpolant and exact antiderivative.
struct Table {
    alpha: f64,
    s: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    u: Vec<f64>,
    /// `U' = a_lo + c_lo ln s` below the first node.
    a_lo: f64,
    c_lo: f64,
    /// `U' = b_hi − c_hi ln(α − s)` above the last node.
    b_hi: f64,
    c_hi: f64,
}

fn nodes(alpha: f64) -> Vec<f64> {
    let lo = END_NODE * alpha;
    let q = 0.25 * alpha;
    let ratio = (q / lo).ln() / END_INTERVALS as f64;
    let left: Vec<f64> = (0..END_INTERVALS).map(|k| lo * (ratio * k as f64).exp()).collect();
    let mut s = left.clone();
    for k in 0..=MID_INTERVALS {
        s.push(q + 0.5 * alpha * k as f64 / MID_INTERVALS as f64);
    }
    s.extend(left.iter().rev().map(|&t| alpha - t));
    s
}

impl Table {
    fn build(
        alpha: f64,
        anchor_u: f64,
        anchor_du: f64,
        ddu: &dyn Fn(f64) -> f64,
        tol: f64,
    ) -> Result<Self, ModelError> {
        let s = nodes(alpha);
        let n = s.len();
        let mid = END_INTERVALS + MID_INTERVALS / 2;
        debug_assert_eq!(s[mid], 0.5 * alpha);
        let mut y = vec![0.0; n];
        y[mid] = anchor_du;
        let integrate = |a: f64, b: f64| {
            // relative floor: near the endpoints the absolute target would sit below roundoff
            let rough = (b - a) * ddu(0.5 * (a + b));
            let local = (tol * (b - a).abs() / alpha).max(1e-14 * rough.abs());
            adaptive_simpson(&|t| ddu(t), a, b, local).ok_or(ModelError::IntegralDiverged { s: a })
        };
        for k in mid..n - 1 {
            y[k + 1] = y[k] + integrate(s[k], s[k + 1])?;
        }
        for k in (0..mid).rev() {
            y[k] = y[k + 1] - integrate(s[k], s[k + 1])?;
        }
        let mut d: Vec<f64> = s.iter().map(|&t| ddu(t)).collect();
        // Fritsch–Carlson limiter keeps each cubic monotone.
        for k in 0..n - 1 {
            let delta = (y[k + 1] - y[k]) / (s[k + 1] - s[k]);
            if delta <= 0.0 {
                d[k] = 0.0;
                d[k + 1] = 0.0;
                continue;
            }
            let (a, b) = (d[k] / delta, d[k + 1] / delta);
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                d[k] = tau * a * delta;
                d[k + 1] = tau * b * delta;
            }
        }
        let mut u = vec![0.0; n];
        u[mid] = anchor_u;
        let cell = |k: usize| {
            let h = s[k + 1] - s[k];
            h * (0.5 * (y[k] + y[k + 1]) + h * (d[k] - d[k + 1]) / 12.0)
        };
        for k in mid..n - 1 {
            u[k + 1] = u[k] + cell(k);
        }
        for k in (0..mid).rev() {
            u[k] = u[k + 1] - cell(k);
        }
        let c_lo = d[0] * s[0];
        let c_hi = d[n - 1] * (alpha - s[n - 1]);
        Ok(Self {
            alpha,
            a_lo: y[0] - c_lo * s[0].ln(),
            c_lo,
            b_hi: y[n - 1] + c_hi * (alpha - s[n - 1]).ln(),
            c_hi,
            s,
            y,
            d,
            u,
        })
    }

    fn interval(&self, t: f64) -> usize {
        let k = self.s.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.s.len() - 2)
    }

    /// `(U_ε(t), U_ε'(t), U_ε''(t))`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.s.len();
        if t <= 0.0 {
            let (s0, a, c) = (self.s[0], self.a_lo, self.c_lo);
            // ∫_0^{s0} (a + c ln σ) dσ
            return (self.u[0] - (a * s0 + c * (s0 * s0.ln() - s0)), f64::NEG_INFINITY, f64::INFINITY);
        }
        if t >= self.alpha {
            let (e, b, c) = (self.alpha - self.s[n - 1], self.b_hi, self.c_hi);
            return (self.u[n - 1] + b * e - c * (e * e.ln() - e), f64::INFINITY, f64::INFINITY);
        }
        if t < self.s[0] {
            let (s0, a, c) = (self.s[0], self.a_lo, self.c_lo);
            let anti = |x: f64| a * x + c * (x * x.ln() - x);
            return (self.u[0] - (anti(s0) - anti(t)), a + c * t.ln(), c / t);
        }
        if t > self.s[n - 1] {
            let (b, c) = (self.b_hi, self.c_hi);
            let (e0, e) = (self.alpha - self.s[n - 1], self.alpha - t);
            // ∫ (b − c ln(α − σ)) dσ = −(b e − c(e ln e − e)) in terms of e = α − σ
            let anti = |e: f64| -(b * e - c * (e * e.ln() - e));
            return (self.u[n - 1] + anti(e) - anti(e0), b - c * e.ln(), c / e);
        }
        let k = self.interval(t);
        let h = self.s[k + 1] - self.s[k];
        let th = (t - self.s[k]) / h;
        let (y0, y1, d0, d1) = (self.y[k], self.y[k + 1], self.d[k], self.d[k + 1]);
        let (t2, t3, t4) = (th * th, th * th * th, th * th * th * th);
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + th) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * d1;
        let slope = ((6.0 * t2 - 6.0 * th) * (y0 - y1)) / h
            + (3.0 * t2 - 4.0 * th + 1.0) * d0
            + (3.0 * t2 - 2.0 * th) * d1;
        let integral = h
            * ((0.5 * t4 - t3 + th) * y0
                + (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2) * h * d0
                + (-0.5 * t4 + t3) * y1
                + (0.25 * t4 - t3 / 3.0) * h * d1);
        (self.u[k] + integral, value, slope.max(0.0))
    }

    fn inverse(&self, target: f64) -> f64 {
        let n = self.s.len();
        if target <= self.y[0] {
            return ((target - self.a_lo) / self.c_lo).exp().min(self.s[0]);
        }
        if target >= self.y[n - 1] {
            return (self.alpha - ((self.b_hi - target) / self.c_hi).exp()).max(self.s[n - 1]);
        }
        let k = self.y.partition_point(|&v| v <= target).saturating_sub(1).min(n - 2);
        let (mut lo, mut hi) = (self.s[k], self.s[k + 1]);
        let mut x = lo + (hi - lo) * (target - self.y[k]) / (self.y[k + 1] - self.y[k]);
        for _ in 0..100 {
            let (_, f, df) = self.eval(x);
            let r = f - target;
            if r == 0.0 {
                return x;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - r / df;
            let next = if df > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Everything [`regularize`] derives from a base problem, kept on the
/// resulting [`ProblemSpec`] for inspection.
pub struct Regularization {
    params: RegularizationParams,
    mobility: RegularizedMobility,
    base_phi_prime: ScalarFn,
    table: Arc<Table>,
}

impl Regularization {
    pub fn params(&self) -> &RegularizationParams {
        &self.params
    }

    pub fn mobility(&self) -> &RegularizedMobility {
        &self.mobility
    }

    /// `Φ_ε'(s) = min(m(s) U''(s), 1/κ) + ε`.
    pub fn phi_eps_prime(&self, s: f64) -> f64 {
        (self.base_phi_prime)(s).min(1.0 / self.params.kappa) + self.params.epsilon
    }

    /// `Φ_ε'(s) / m_ε(s)` evaluated directly, without the interpolant.
    pub fn exact_ddu(&self, s: f64) -> f64 {
        self.phi_eps_prime(s) / self.mobility.value(s)
    }

    /// Tabulation nodes of `U_ε'` and the values there.
    pub fn table(&self) -> (&[f64], &[f64]) {
        (&self.table.s, &self.table.y)
    }
}

impl std::fmt::Debug for Regularization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Regularization").field("params", &self.params).finish_non_exhaustive()
    }
}

/// Builds the ε-regularized problem: mobility `m_ε`, potential `U_ε`, same `V`.
pub fn regularize(spec: &ProblemSpec, params: &RegularizationParams) -> Result<ProblemSpec, ModelError> {
    let alpha = spec.alpha;
    params.validate(alpha)?;
    let curvature = spec.diffusion.ddu(params.s0);
    if !(curvature > 0.0) {
        return Err(ModelError::AnchorInvalid {
            s0: params.s0,
            value: curvature,
        });
    }

    let base_m = spec.mobility.clone();
    let base_dm = spec.mobility.clone();
    let mobility = RegularizedMobility::new(
        alpha,
        params.epsilon,
        params.band_width,
        scalar_fn(move |s| base_m.mobility(s)),
        scalar_fn(move |s| base_dm.dmobility(s)),
    );
    let (m_base, u_base) = (spec.mobility.clone(), spec.diffusion.clone());
    let base_phi_prime = scalar_fn(move |s| m_base.mobility(s) * u_base.ddu(s));

    let mut reg = Regularization {
        params: params.clone(),
        mobility: mobility.clone(),
        base_phi_prime,
        table: Arc::new(Table {
            alpha,
            s: vec![],
            y: vec![],
            d: vec![],
            u: vec![],
            a_lo: 0.0,
            c_lo: 0.0,
            b_hi: 0.0,
            c_hi: 0.0,
        }),
    };
    let half = 0.5 * alpha;
    let table = Table::build(
        alpha,
        spec.diffusion.u(half),
        spec.diffusion.du(half),
        &|s| reg.exact_ddu(s),
        params.quadrature_tol,
    )?;
    let table = Arc::new(table);
    reg.table = table.clone();

    // Features of m_ε have width ~ band_width; resolve them with ≥ 16 nodes.
    let resolution = ((16.0 * alpha / params.band_width).ceil() as usize).clamp(4097, 1 << 21);
    let (mv, md) = (mobility.clone(), mobility);
    let pair = decompose_mobility(
        scalar_fn(move |s| mv.value(s)),
        Some(scalar_fn(move |s| md.derivative(s))),
        alpha,
        resolution,
    )?;

    let (t1, t2, t3, t4) = (table.clone(), table.clone(), table.clone(), table);
    let diffusion = DiffusionPotential::new(
        alpha,
        scalar_fn(move |s| t1.eval(s).0),
        scalar_fn(move |s| t2.eval(s).1),
        scalar_fn(move |s| t3.eval(s).2),
        Some(scalar_fn(move |y| t4.inverse(y))),
        f64::NEG_INFINITY,
        f64::INFINITY,
    );

    let mut out = ProblemSpec::new(pair, diffusion, spec.external.clone())?;
    out.regularization = Some(Arc::new(reg));
    Ok(out)
}
