use super::{ModelError, ScalarFn};
use crate::quad::bisect_increasing;

/// Whether `U'` stays finite on the closed interval `[0, alpha]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DomainKind {
    /// `U ∈ C¹([0, alpha])`: cells may sit exactly at 0 or alpha.
    C1Closed,
    /// `U'(0⁺) = -∞` and/or `U'(alpha⁻) = +∞`: states must stay interior.
    Singular,
}

/// Convex internal-energy density `U` with its first two derivatives.
#[derive(Clone)]
pub struct DiffusionPotential {
    alpha: f64,
    u: ScalarFn,
    du: ScalarFn,
    ddu: ScalarFn,
    inverse_du: Option<ScalarFn>,
    kind: DomainKind,
    zeta_lo: f64,
    zeta_hi: f64,
}

impl std::fmt::Debug for DiffusionPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionPotential")
            .field("alpha", &self.alpha)
            .field("kind", &self.kind)
            .field("zeta_lo", &self.zeta_lo)
            .field("zeta_hi", &self.zeta_hi)
            .finish_non_exhaustive()
    }
}

impl DiffusionPotential {
    /// `zeta_lo`/`zeta_hi` are `U'(0⁺)` and `U'(alpha⁻)`, possibly infinite.
    /// `inverse_du`, when given, must invert `U'` on `(zeta_lo, zeta_hi)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        u: ScalarFn,
        du: ScalarFn,
        ddu: ScalarFn,
        inverse_du: Option<ScalarFn>,
        zeta_lo: f64,
        zeta_hi: f64,
    ) -> Self {
        let kind = if zeta_lo.is_finite() && zeta_hi.is_finite() {
            DomainKind::C1Closed
        } else {
            DomainKind::Singular
        };
        Self {
            alpha,
            u,
            du,
            ddu,
            inverse_du,
            kind,
            zeta_lo,
            zeta_hi,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn u(&self, s: f64) -> f64 {
        (self.u)(s)
    }

    #[inline]
    pub fn du(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return if self.zeta_lo.is_finite() {
                (self.du)(0.0)
            } else {
                f64::NEG_INFINITY
            };
        }
        if s >= self.alpha {
            return if self.zeta_hi.is_finite() {
                (self.du)(self.alpha)
            } else {
                f64::INFINITY
            };
        }
        (self.du)(s)
    }

    #[inline]
    pub fn ddu(&self, s: f64) -> f64 {
        (self.ddu)(s.clamp(0.0, self.alpha))
    }

    pub fn domain_kind(&self) -> DomainKind {
        self.kind
    }

    pub fn zeta_lo(&self) -> f64 {
        self.zeta_lo
    }

    pub fn zeta_hi(&self) -> f64 {
        self.zeta_hi
    }

    /// Generalized `T_{0,α} ∘ (U')⁻¹`: 0 at or below `zeta_lo`, alpha at or
    /// above `zeta_hi`, the inverse of `U'` in between.
    pub fn truncated_inverse(&self, y: f64) -> f64 {
        if y <= self.zeta_lo {
            return 0.0;
        }
        if y >= self.zeta_hi {
            return self.alpha;
        }
        match &self.inverse_du {
            Some(inv) => inv(y).clamp(0.0, self.alpha),
            None => bisect_increasing(|s| self.du(s), y, 0.0, self.alpha, 1e-15 * self.alpha),
        }
    }

    /// Sampled convexity and monotonicity checks.
    pub fn check_invariants(&self, samples: usize) -> Result<(), ModelError> {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..samples {
            let s = self.alpha * k as f64 / samples as f64;
            let d2 = self.ddu(s);
            if d2 < 0.0 {
                return Err(ModelError::InvariantViolated(format!("U''({s}) = {d2} < 0")));
            }
            let d1 = self.du(s);
            if d1 < prev - 1e-12 * prev.abs().max(1.0) {
                return Err(ModelError::InvariantViolated(format!("U' decreases near s = {s}")));
            }
            if d1 < self.zeta_lo || d1 > self.zeta_hi {
                return Err(ModelError::InvariantViolated(format!(
                    "U'({s}) = {d1} outside [{}, {}]",
                    self.zeta_lo, self.zeta_hi
                )));
            }
            prev = d1;
        }
        Ok(())
    }
}

/// Confinement potential `V(x)` on the unit interval.
#[derive(Clone)]
pub struct ExternalPotential {
    v: ScalarFn,
    dv: ScalarFn,
    grad_v_bound: f64,
}

impl std::fmt::Debug for ExternalPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalPotential")
            .field("grad_v_bound", &self.grad_v_bound)
            .finish_non_exhaustive()
    }
}

impl ExternalPotential {
    /// Samples `V ≥ 0` and `sup |V'|` on 10⁴ + 1 points.
    pub fn new(v: ScalarFn, dv: ScalarFn) -> Result<Self, ModelError> {
        const SAMPLES: usize = 10_000;
        let mut bound = 0.0_f64;
        for k in 0..=SAMPLES {
            let x = k as f64 / SAMPLES as f64;
            let value = v(x);
            if !(value >= -1e-14) {
                return Err(ModelError::NegativePotential { x });
            }
            bound = bound.max(dv(x).abs());
        }
        Ok(Self {
            v,
            dv,
            grad_v_bound: bound,
        })
    }

    #[inline]
    pub fn v(&self, x: f64) -> f64 {
        (self.v)(x)
    }

    #[inline]
    pub fn dv(&self, x: f64) -> f64 {
        (self.dv)(x)
    }

    pub fn grad_v_bound(&self) -> f64 {
        self.grad_v_bound
    }
}
