//! Saturation mobilities as a product of a nondecreasing and a nonincreasing
//! factor, plus the log-splitting decomposition for mobilities supplied as a
//! single function.

use std::sync::Arc;

use super::{scalar_fn, ModelError, ScalarFn};
use crate::quad::{bisect_increasing, numeric_derivative};

/// `m(s) = m1(s) * m2(s)` on `[0, alpha]` with `m1` nondecreasing and `m2`
/// nonincreasing. Arguments outside `[0, alpha]` are clamped.
#[derive(Clone)]
pub struct MobilityPair {
    alpha: f64,
    m1: ScalarFn,
    dm1: ScalarFn,
    m2: ScalarFn,
    dm2: ScalarFn,
}

impl std::fmt::Debug for MobilityPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MobilityPair").field("alpha", &self.alpha).finish_non_exhaustive()
    }
}

impl MobilityPair {
    pub fn new(alpha: f64, m1: ScalarFn, dm1: ScalarFn, m2: ScalarFn, dm2: ScalarFn) -> Self {
        Self {
            alpha,
            m1,
            dm1,
            m2,
            dm2,
        }
    }

    #[inline]
    fn clamp(&self, s: f64) -> f64 {
        s.clamp(0.0, self.alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn m1(&self, s: f64) -> f64 {
        (self.m1)(self.clamp(s))
    }

    #[inline]
    pub fn dm1(&self, s: f64) -> f64 {
        (self.dm1)(self.clamp(s))
    }

    #[inline]
    pub fn m2(&self, s: f64) -> f64 {
        (self.m2)(self.clamp(s))
    }

    #[inline]
    pub fn dm2(&self, s: f64) -> f64 {
        (self.dm2)(self.clamp(s))
    }

    /// The full mobility `m1 * m2`.
    pub fn mobility(&self, s: f64) -> f64 {
        self.m1(s) * self.m2(s)
    }

    pub fn dmobility(&self, s: f64) -> f64 {
        self.dm1(s) * self.m2(s) + self.m1(s) * self.dm2(s)
    }

    /// Checks the pair invariants on `samples + 1` uniform points of `[0, alpha]`.
    pub fn check_invariants(&self, samples: usize) -> Result<(), ModelError> {
        let a = self.alpha;
        let scale = (0..=samples)
            .map(|k| self.mobility(a * k as f64 / samples as f64))
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        for end in [0.0, a] {
            let v = self.mobility(end);
            if v.abs() > 1e-12 * scale {
                return Err(ModelError::EndpointNonZero { s: end, value: v });
            }
        }
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=samples {
            let s = a * k as f64 / samples as f64;
            let (p, q) = (self.m1(s), self.m2(s));
            if k > 0 && k < samples && p * q <= 0.0 {
                return Err(ModelError::NonPositiveInterior { s });
            }
            if let Some((pp, pq)) = prev {
                if p < pp - 1e-12 || q > pq + 1e-12 {
                    return Err(ModelError::InvariantViolated(format!(
                        "mobility factors are not monotone near s = {s}"
                    )));
                }
            }
            prev = Some((p, q));
        }
        Ok(())
    }
}

/// Piece of the decomposition on which `m` is monotone: there one factor is
/// constant and the other one carries all of `m`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    increasing: bool,
    /// `m2` on increasing segments, `m1` on decreasing ones.
    anchor: f64,
}

struct Decomposition {
    m: ScalarFn,
    dm: ScalarFn,
    segments: Vec<Segment>,
}

impl Decomposition {
    #[inline]
    fn segment(&self, s: f64) -> &Segment {
        let idx = self.segments.partition_point(|seg| seg.start <= s);
        &self.segments[idx.saturating_sub(1)]
    }

    fn m1(&self, s: f64) -> f64 {
        let seg = self.segment(s);
        if seg.increasing {
            (self.m)(s) / seg.anchor
        } else {
            seg.anchor
        }
    }

    fn m2(&self, s: f64) -> f64 {
        let seg = self.segment(s);
        if seg.increasing {
            seg.anchor
        } else {
            (self.m)(s) / seg.anchor
        }
    }

    fn dm1(&self, s: f64) -> f64 {
        let seg = self.segment(s);
        if seg.increasing {
            (self.dm)(s) / seg.anchor
        } else {
            0.0
        }
    }

    fn dm2(&self, s: f64) -> f64 {
        let seg = self.segment(s);
        if seg.increasing {
            0.0
        } else {
            (self.dm)(s) / seg.anchor
        }
    }
}

/// Splits a saturation mobility into monotone factors.
///
/// With `c = alpha / 2` the factors are
/// `m1(s) = m(c) exp(∫_c^s (m')₊/m)` and `m2(s) = exp(∫_c^s (m')₋/m)`.
/// On every interval where `m'` keeps its sign one of the two integrals is
/// zero and the other equals the increment of `log m`, so both factors are
/// evaluated exactly from `m` itself once the sign-change points are known.
/// Those are located on a uniform grid with `grid_resolution` nodes (refined
/// by bisection on `m'`). When `dm` is `None`, `m'` is approximated by central
/// differences with step `1e-6 * alpha`.
pub fn decompose_mobility(
    m: ScalarFn,
    dm: Option<ScalarFn>,
    alpha: f64,
    grid_resolution: usize,
) -> Result<MobilityPair, ModelError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ModelError::BadParameter(format!("alpha = {alpha}")));
    }
    let dm = dm.unwrap_or_else(|| {
        let m = m.clone();
        let h = 1e-6 * alpha;
        scalar_fn(move |s| numeric_derivative(&|x| m(x), s, 0.0, alpha, h))
    });

    let mut intervals = grid_resolution.max(3) - 1;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let node = |k: usize| {
        if k == intervals {
            alpha
        } else {
            alpha * k as f64 / intervals as f64
        }
    };

    let m_max = (0..=intervals).map(|k| m(node(k))).fold(0.0_f64, f64::max);
    for end in [0.0, alpha] {
        let v = m(end);
        if v.abs() > 1e-12 * m_max.max(f64::MIN_POSITIVE) {
            return Err(ModelError::EndpointNonZero { s: end, value: v });
        }
    }
    for k in 1..intervals {
        let s = node(k);
        if !(m(s) > 0.0) {
            return Err(ModelError::NonPositiveInterior { s });
        }
    }

    // Monotone pieces: (start, end, increasing).
    let mut pieces: Vec<(f64, f64, bool)> = Vec::with_capacity(intervals + 8);
    for k in 0..intervals {
        let (a, b) = (node(k), node(k + 1));
        let probes: Vec<f64> = [0.02, 0.25, 0.5, 0.75, 0.98]
            .iter()
            .map(|t| a + t * (b - a))
            .collect();
        let slopes: Vec<f64> = probes.iter().map(|&p| dm(p)).collect();
        let mut cuts = vec![a];
        for j in 0..probes.len() - 1 {
            if slopes[j] > 0.0 && slopes[j + 1] < 0.0 || slopes[j] < 0.0 && slopes[j + 1] > 0.0 {
                let sign = slopes[j].signum();
                let root = bisect_increasing(
                    |x| -sign * dm(x),
                    0.0,
                    probes[j],
                    probes[j + 1],
                    1e-15 * alpha,
                );
                cuts.push(root);
            }
        }
        cuts.push(b);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let d = dm(mid);
            let increasing = if d == 0.0 {
                m(w[1]) >= m(w[0])
            } else {
                d > 0.0
            };
            match pieces.last_mut() {
                Some(last) if last.2 == increasing && last.1 == w[0] => last.1 = w[1],
                _ => pieces.push((w[0], w[1], increasing)),
            }
        }
    }

    // Anchor values are propagated outward from the midpoint, where
    // m1 = m(alpha/2) and m2 = 1.
    let centre = 0.5 * alpha;
    let split = pieces
        .iter()
        .position(|p| p.0 >= centre)
        .ok_or(ModelError::IntegralDiverged { s: centre })?;
    // If the centre falls inside a piece (merged pieces), split it there.
    if split > 0 && pieces[split - 1].1 > centre {
        let (a, b, inc) = pieces[split - 1];
        pieces[split - 1] = (a, centre, inc);
        pieces.insert(split, (centre, b, inc));
    }
    let split = pieces.iter().position(|p| p.0 >= centre).unwrap();
    let mut segments: Vec<Segment> = pieces
        .iter()
        .map(|&(start, _, increasing)| Segment {
            start,
            increasing,
            anchor: f64::NAN,
        })
        .collect();

    let m_centre = m(centre);
    let (mut f1, mut f2) = (m_centre, 1.0);
    for (idx, &(_, b, inc)) in pieces.iter().enumerate().skip(split) {
        let mb = m(b);
        if inc {
            segments[idx].anchor = f2;
            f1 = mb / f2;
        } else {
            segments[idx].anchor = f1;
            f2 = mb / f1;
        }
        if !(segments[idx].anchor > 0.0 && segments[idx].anchor.is_finite()) {
            return Err(ModelError::IntegralDiverged { s: b });
        }
    }
    let (mut f1, mut f2) = (m_centre, 1.0);
    for idx in (0..split).rev() {
        let (a, _, inc) = pieces[idx];
        let ma = m(a);
        if inc {
            segments[idx].anchor = f2;
            f1 = ma / f2;
        } else {
            segments[idx].anchor = f1;
            f2 = ma / f1;
        }
        if !(segments[idx].anchor > 0.0 && segments[idx].anchor.is_finite()) {
            return Err(ModelError::IntegralDiverged { s: a });
        }
    }
    let _ = (f1, f2);

    let dec = Arc::new(Decomposition { m, dm, segments });
    let (d1, d2, d3, d4) = (dec.clone(), dec.clone(), dec.clone(), dec);
    Ok(MobilityPair::new(
        alpha,
        scalar_fn(move |s| d1.m1(s)),
        scalar_fn(move |s| d2.dm1(s)),
        scalar_fn(move |s| d3.m2(s)),
        scalar_fn(move |s| d4.dm2(s)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic() -> (ScalarFn, ScalarFn) {
        (
            scalar_fn(|s| s * (1.0 - s)),
            scalar_fn(|s| 1.0 - 2.0 * s),
        )
    }

    /// Independent check: integrate (m')± / m by composite Simpson.
    fn quadrature_factor(m: impl Fn(f64) -> f64, dm: impl Fn(f64) -> f64, s: f64, positive: bool) -> f64 {
        let c = 0.5;
        let n = 20_000;
        let h = (s - c) / n as f64;
        let g = |x: f64| {
            let d = dm(x);
            let part = if positive { d.max(0.0) } else { d.min(0.0) };
            part / m(x)
        };
        let mut acc = g(c) + g(s);
        for k in 1..n {
            let x = c + h * k as f64;
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(x);
        }
        let integral = acc * h / 3.0;
        if positive {
            m(c) * integral.exp()
        } else {
            integral.exp()
        }
    }

    #[test]
    fn logistic_split_matches_closed_form() {
        let (m, dm) = logistic();
        let pair = decompose_mobility(m, Some(dm), 1.0, 257).unwrap();
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            let (e1, e2) = if s <= 0.5 {
                (s * (1.0 - s), 1.0)
            } else {
                (0.25, 4.0 * s * (1.0 - s))
            };
            assert!((pair.m1(s) - e1).abs() < 1e-14, "m1({s})");
            assert!((pair.m2(s) - e2).abs() < 1e-14, "m2({s})");
        }
    }

    #[test]
    fn logistic_split_agrees_with_quadrature() {
        let (m, dm) = logistic();
        let pair = decompose_mobility(m.clone(), Some(dm.clone()), 1.0, 257).unwrap();
        for &s in &[0.1, 0.3, 0.7, 0.9] {
            let q1 = quadrature_factor(|x| m(x), |x| dm(x), s, true);
            let q2 = quadrature_factor(|x| m(x), |x| dm(x), s, false);
            assert!((pair.m1(s) - q1).abs() < 1e-9, "{s}: {} vs {q1}", pair.m1(s));
            assert!((pair.m2(s) - q2).abs() < 1e-9, "{s}: {} vs {q2}", pair.m2(s));
        }
    }

    #[test]
    fn hand_supplied_pair_is_also_valid() {
        let pair = MobilityPair::new(
            1.0,
            scalar_fn(|s| s),
            scalar_fn(|_| 1.0),
            scalar_fn(|s| 1.0 - s),
            scalar_fn(|_| -1.0),
        );
        pair.check_invariants(1000).unwrap();
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            assert_eq!(pair.mobility(s), s * (1.0 - s));
        }
    }

    #[test]
    fn non_concave_mobility_reproduced_to_1e8() {
        let m = scalar_fn(|s| s * s * (1.0 - s * s));
        let dm = scalar_fn(|s| 2.0 * s - 4.0 * s * s * s);
        let pair = decompose_mobility(m.clone(), Some(dm), 1.0, 1001).unwrap();
        pair.check_invariants(1000).unwrap();
        let mut worst = 0.0_f64;
        for k in 0..=100_000 {
            let s = k as f64 / 100_000.0;
            worst = worst.max((pair.m1(s) * pair.m2(s) - m(s)).abs());
        }
        assert!(worst < 1e-8, "{worst}");
        // peak of s²(1-s²) sits at 1/√2: m1 is flat beyond it
        let peak = 0.5_f64.sqrt();
        assert!((pair.m1(0.9) - pair.m1(peak + 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn numeric_derivative_fallback_works() {
        let m = scalar_fn(|s: f64| s * (2.0 - s) * (1.0 + 0.5 * (6.0 * s).sin().powi(2)));
        let pair = decompose_mobility(m.clone(), None, 2.0, 801).unwrap();
        pair.check_invariants(2000).unwrap();
        for k in 0..=400 {
            let s = 2.0 * k as f64 / 400.0;
            assert!((pair.mobility(s) - m(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_zero_is_rejected() {
        let m = scalar_fn(|s: f64| s * (1.0 - s) * (s - 0.5).powi(2));
        let err = decompose_mobility(m, None, 1.0, 101).unwrap_err();
        assert!(matches!(err, ModelError::NonPositiveInterior { .. }));
    }

    #[test]
    fn endpoint_must_vanish() {
        let m = scalar_fn(|s: f64| 1.0 + s);
        let err = decompose_mobility(m, None, 1.0, 101).unwrap_err();
        assert!(matches!(err, ModelError::EndpointNonZero { .. }));
    }
}
