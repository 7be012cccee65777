//! Potentials, mobilities and the ε-regularization family.
//!
//! Every other module consumes the constitutive functions only through the
//! evaluation methods on [`MobilityPair`], [`DiffusionPotential`] and
//! [`ExternalPotential`]; a [`ProblemSpec`] bundles one of each.

mod library;
mod mobility;
mod potential;
mod regularize;

use std::sync::Arc;

use thiserror::Error;

pub use library::{DiffusionFamily, MobilityFamily, PotentialFamily};
pub use mobility::{decompose_mobility, MobilityPair};
pub use potential::{DiffusionPotential, DomainKind, ExternalPotential};
pub use regularize::{regularize, Regularization, RegularizationParams, RegularizedMobility};

/// Shared, thread-safe scalar function handle.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Wraps a closure as a [`ScalarFn`].
pub fn scalar_fn<F>(f: F) -> ScalarFn
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mobility is not positive at interior point s = {s}")]
    NonPositiveInterior { s: f64 },
    #[error("mobility does not vanish at the endpoint s = {s} (m = {value})")]
    EndpointNonZero { s: f64, value: f64 },
    #[error("log-splitting of the mobility diverged near s = {s}")]
    IntegralDiverged { s: f64 },
    #[error("regularization anchor s0 = {s0} has U''(s0) = {value}, need > 0")]
    AnchorInvalid { s0: f64, value: f64 },
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("external potential is negative at x = {x}")]
    NegativePotential { x: f64 },
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}

/// A complete problem definition on the unit interval.
#[derive(Clone)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub mobility: MobilityPair,
    pub diffusion: DiffusionPotential,
    pub external: ExternalPotential,
    /// Present when this spec was produced by [`regularize`].
    pub regularization: Option<Arc<Regularization>>,
}

impl ProblemSpec {
    pub fn new(
        mobility: MobilityPair,
        diffusion: DiffusionPotential,
        external: ExternalPotential,
    ) -> Result<Self, ModelError> {
        let alpha = mobility.alpha();
        if (diffusion.alpha() - alpha).abs() > 1e-12 * alpha {
            return Err(ModelError::BadParameter(format!(
                "mobility saturation level {alpha} differs from potential domain {}",
                diffusion.alpha()
            )));
        }
        Ok(Self {
            alpha,
            mobility,
            diffusion,
            external,
            regularization: None,
        })
    }

    /// Builds a spec from the built-in families.
    pub fn from_families(
        alpha: f64,
        mobility: &MobilityFamily,
        diffusion: &DiffusionFamily,
        external: &PotentialFamily,
    ) -> Result<Self, ModelError> {
        Self::new(
            mobility.build(alpha)?,
            diffusion.build(alpha)?,
            external.build()?,
        )
    }

    pub fn epsilon(&self) -> f64 {
        self.regularization
            .as_ref()
            .map_or(0.0, |r| r.params().epsilon)
    }

    pub fn is_singular(&self) -> bool {
        self.diffusion.domain_kind() == DomainKind::Singular
    }
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("alpha", &self.alpha)
            .field("diffusion", &self.diffusion.domain_kind())
            .field("epsilon", &self.epsilon())
            .finish_non_exhaustive()
    }
}
