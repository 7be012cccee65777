//! Small numerical helpers shared by the model and grid code: fixed and
//! adaptive quadrature, scalar bisection.

/// Nodes and weights of the 5-point Gauss–Legendre rule on [-1, 1].
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Gauss–Legendre nodes mapped to `[a, b]`, paired with scaled weights.
pub(crate) fn gauss_legendre5(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5_NODES
        .iter()
        .zip(GL5_WEIGHTS.iter())
        .map(move |(&x, &w)| (mid + half * x, half * w))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance `tol`.
///
/// Returns `None` when the recursion depth is exhausted or a non-finite
/// value shows up.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)?;
    v.is_finite().then_some(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    if delta.abs() <= 15.0 * tol || (m - a) <= 1e-15 * a.abs().max(b.abs()).max(1e-300) {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

/// Bisection for a nondecreasing `f` on `[lo, hi]`, returning the point where
/// `f` crosses `target`. Stops when the bracket is narrower than `x_tol`.
pub(crate) fn bisect_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
) -> f64 {
    for _ in 0..200 {
        if hi - lo <= x_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Central difference with one-sided fallback at the interval ends.
pub(crate) fn numeric_derivative<F: Fn(f64) -> f64>(f: &F, s: f64, lo: f64, hi: f64, h: f64) -> f64 {
    if s - h < lo {
        (f(s + h) - f(s)) / h
    } else if s + h > hi {
        (f(s) - f(s - h)) / h
    } else {
        (f(s + h) - f(s - h)) / (2.0 * h)
    }
}
