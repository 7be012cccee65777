use super::{Scheme, SchemeConfig, SchemeError};
use crate::grid::Grid1D;
use crate::model::ProblemSpec;

/// Constants `c_lo ≤ c ≤ c_hi` with `H(c_lo·1) ≤ c·1 ≤ H(c_hi·1)` componentwise.
///
/// For a constant state `s·1` only `V` drives the flux, so
/// `|H_i(s·1) - s| ≤ 2 (Δt/Δx) K m(s)` with `K = max_i |V_{i+1} - V_i| / Δx`.
/// `c_lo` is the largest `s ≤ c` found with `s + 2(Δt/Δx) K m(s) ≤ c`, `c_hi`
/// the smallest `s ≥ c` with `s - 2(Δt/Δx) K m(s) ≥ c`.
pub fn constant_bracket(
    c: f64,
    config: &SchemeConfig,
    spec: &ProblemSpec,
    grid: Grid1D,
) -> Result<(f64, f64), SchemeError> {
    let alpha = spec.alpha;
    if !(c > 0.0 && c < alpha) {
        return Err(SchemeError::InvalidConfig(format!("constant {c} must lie in (0, {alpha})")));
    }
    let scheme = Scheme::new(spec, grid, Some(config));
    let n = grid.n_cells() as f64;
    let k = scheme.v.windows(2).map(|w| (w[1] - w[0]).abs() * n).fold(0.0, f64::max);
    let gain = 2.0 * config.dt * n * k;
    let m = |s: f64| spec.mobility.mobility(s);

    // invariant: g(lo) ≤ c < g(hi)
    let (mut lo, mut hi) = (0.0, c);
    if c + gain * m(c) <= c {
        lo = c;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mid + gain * m(mid) <= c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let sub = lo;

    // invariant: h(lo) < c ≤ h(hi)
    let (mut lo, mut hi) = (c, alpha);
    if c - gain * m(c) >= c {
        hi = c;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mid - gain * m(mid) >= c {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok((sub, hi))
}
