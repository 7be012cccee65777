//! Built-in parametric families for `U`, `m` and `V`.

use serde::{Deserialize, Serialize};

use super::{scalar_fn, DiffusionPotential, ExternalPotential, MobilityPair, ModelError};
use crate::model::decompose_mobility;

fn positive(name: &str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::BadParameter(format!("{name} = {value}, need a positive number")))
    }
}

fn arity(family: &str, params: &[f64], allowed: &[usize]) -> Result<(), ModelError> {
    if allowed.contains(&params.len()) {
        Ok(())
    } else {
        Err(ModelError::BadParameter(format!(
            "{family} takes {allowed:?} parameters, got {}",
            params.len()
        )))
    }
}

/// Internal-energy densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DiffusionFamily {
    /// `U(s) = s^m / (m - 1)`.
    PorousMedium { m: f64 },
    /// `U(s) = s log s - s`.
    Boltzmann,
    /// `U(s) = s²`.
    Quadratic,
    /// `U'` given at uniform nodes of `[0, alpha]`, linearly interpolated.
    Tabulated { du: Vec<f64> },
}

impl DiffusionFamily {
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self, ModelError> {
        match name {
            "porous_medium" => {
                arity(name, params, &[1])?;
                Ok(Self::PorousMedium { m: params[0] })
            }
            "boltzmann" => {
                arity(name, params, &[0])?;
                Ok(Self::Boltzmann)
            }
            "quadratic" => {
                arity(name, params, &[0])?;
                Ok(Self::Quadratic)
            }
            "tabulated" | "custom_tabulated" => Ok(Self::Tabulated { du: params.to_vec() }),
            other => Err(ModelError::UnknownFamily(other.to_string())),
        }
    }

    pub fn build(&self, alpha: f64) -> Result<DiffusionPotential, ModelError> {
        positive("alpha", alpha)?;
        match *self {
            Self::PorousMedium { m } => {
                positive("porous-medium exponent m", m)?;
                if m == 1.0 {
                    return Err(ModelError::BadParameter(
                        "porous-medium exponent m = 1 is the boltzmann family".into(),
                    ));
                }
                let c = m / (m - 1.0);
                let lo = if m > 1.0 { 0.0 } else { f64::NEG_INFINITY };
                Ok(DiffusionPotential::new(
                    alpha,
                    scalar_fn(move |s| s.max(0.0).powf(m) / (m - 1.0)),
                    scalar_fn(move |s| c * s.powf(m - 1.0)),
                    scalar_fn(move |s| m * s.powf(m - 2.0)),
                    Some(scalar_fn(move |y| (y / c).powf(1.0 / (m - 1.0)))),
                    lo,
                    c * alpha.powf(m - 1.0),
                ))
            }
            Self::Boltzmann => Ok(DiffusionPotential::new(
                alpha,
                scalar_fn(|s| if s <= 0.0 { 0.0 } else { s * s.ln() - s }),
                scalar_fn(f64::ln),
                scalar_fn(|s| 1.0 / s),
                Some(scalar_fn(f64::exp)),
                f64::NEG_INFINITY,
                alpha.ln(),
            )),
            Self::Quadratic => Ok(DiffusionPotential::new(
                alpha,
                scalar_fn(|s| s * s),
                scalar_fn(|s| 2.0 * s),
                scalar_fn(|_| 2.0),
                Some(scalar_fn(|y| 0.5 * y)),
                0.0,
                2.0 * alpha,
            )),
            Self::Tabulated { ref du } => tabulated_diffusion(alpha, du),
        }
    }
}

fn tabulated_diffusion(alpha: f64, du: &[f64]) -> Result<DiffusionPotential, ModelError> {
    if du.len() < 2 {
        return Err(ModelError::BadParameter("tabulated U' needs at least two values".into()));
    }
    if du.windows(2).any(|w| w[1] < w[0]) || du.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::BadParameter("tabulated U' must be finite and nondecreasing".into()));
    }
    let n = du.len() - 1;
    let h = alpha / n as f64;
    let values = du.to_vec();
    // U at the nodes, U(0) = 0, exact for the piecewise-linear U'.
    let mut nodes_u = vec![0.0; n + 1];
    for k in 0..n {
        nodes_u[k + 1] = nodes_u[k] + 0.5 * h * (values[k] + values[k + 1]);
    }
    let locate = move |s: f64| -> (usize, f64) {
        let t = (s.clamp(0.0, alpha) / h).min(n as f64);
        let k = (t.floor() as usize).min(n - 1);
        (k, t - k as f64)
    };
    let (v1, v2, v3) = (values.clone(), values.clone(), values.clone());
    let (lo, hi) = (values[0], values[n]);
    Ok(DiffusionPotential::new(
        alpha,
        scalar_fn(move |s| {
            let (k, t) = locate(s);
            let slope = v1[k + 1] - v1[k];
            nodes_u[k] + h * t * (v1[k] + 0.5 * t * slope)
        }),
        scalar_fn(move |s| {
            let (k, t) = locate(s);
            v2[k] + t * (v2[k + 1] - v2[k])
        }),
        scalar_fn(move |s| {
            let (k, _) = locate(s);
            (v3[k + 1] - v3[k]) / h
        }),
        None,
        lo,
        hi,
    ))
}

/// Saturation mobilities with hand-written monotone factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MobilityFamily {
    /// `m1 = s^a`, `m2 = (alpha - s)^b`; `a = b = 1` is the logistic mobility.
    PowerProduct { a: f64, b: f64 },
    /// Linear near 0 and near alpha, monotone cubic joins on `(alpha/4, 3 alpha/4)`.
    DoubleWell,
    /// `m` at uniform nodes of `[0, alpha]`, split by [`decompose_mobility`].
    Tabulated { values: Vec<f64> },
}

impl MobilityFamily {
    pub fn logistic() -> Self {
        Self::PowerProduct { a: 1.0, b: 1.0 }
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<Self, ModelError> {
        match name {
            "logistic" => {
                arity(name, params, &[0])?;
                Ok(Self::logistic())
            }
            "power_product" => {
                arity(name, params, &[2])?;
                Ok(Self::PowerProduct {
                    a: params[0],
                    b: params[1],
                })
            }
            "double_well_mobility" | "double_well" => {
                arity(name, params, &[0])?;
                Ok(Self::DoubleWell)
            }
            "tabulated" => Ok(Self::Tabulated {
                values: params.to_vec(),
            }),
            other => Err(ModelError::UnknownFamily(other.to_string())),
        }
    }

    pub fn build(&self, alpha: f64) -> Result<MobilityPair, ModelError> {
        positive("alpha", alpha)?;
        match *self {
            Self::PowerProduct { a, b } => {
                positive("power_product exponent a", a)?;
                positive("power_product exponent b", b)?;
                Ok(MobilityPair::new(
                    alpha,
                    scalar_fn(move |s| s.powf(a)),
                    scalar_fn(move |s| a * s.powf(a - 1.0)),
                    scalar_fn(move |s| (alpha - s).powf(b)),
                    scalar_fn(move |s| -b * (alpha - s).powf(b - 1.0)),
                ))
            }
            Self::DoubleWell => Ok(double_well_mobility(alpha)),
            Self::Tabulated { ref values } => {
                if values.len() < 3 {
                    return Err(ModelError::BadParameter(
                        "tabulated mobility needs at least three values".into(),
                    ));
                }
                let n = values.len() - 1;
                let h = alpha / n as f64;
                let (v1, v2) = (values.clone(), values.clone());
                let locate = move |s: f64| -> (usize, f64) {
                    let t = (s.clamp(0.0, alpha) / h).min(n as f64);
                    let k = (t.floor() as usize).min(n - 1);
                    (k, t - k as f64)
                };
                let m = scalar_fn(move |s| {
                    let (k, t) = locate(s);
                    v1[k] + t * (v1[k + 1] - v1[k])
                });
                let dm = scalar_fn(move |s| {
                    let (k, _) = locate(s);
                    (v2[k + 1] - v2[k]) / h
                });
                decompose_mobility(m, Some(dm), alpha, 64 * n + 1)
            }
        }
    }
}

/// Cubic Hermite segment on `[x0, x1]` returning `(value, derivative)`.
fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1;
    let deriv = ((6.0 * t2 - 6.0 * t) * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * d0
        + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * h * d1)
        / h;
    (value, deriv)
}

fn double_well_mobility(alpha: f64) -> MobilityPair {
    let (q1, q3) = (0.25 * alpha, 0.75 * alpha);
    let m1 = move |s: f64| -> (f64, f64) {
        if s <= q1 {
            (s, 1.0)
        } else if s >= q3 {
            (alpha, 0.0)
        } else {
            hermite(q1, q3, q1, alpha, 1.0, 0.0, s)
        }
    };
    let m2 = move |s: f64| -> (f64, f64) {
        if s <= q1 {
            (1.0, 0.0)
        } else if s >= q3 {
            (1.0 - s / alpha, -1.0 / alpha)
        } else {
            hermite(q1, q3, 1.0, 0.25, 0.0, -1.0 / alpha, s)
        }
    };
    MobilityPair::new(
        alpha,
        scalar_fn(move |s| m1(s).0),
        scalar_fn(move |s| m1(s).1),
        scalar_fn(move |s| m2(s).0),
        scalar_fn(move |s| m2(s).1),
    )
}

/// Confinement potentials on the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    /// `V(x) = k (x - center)²`.
    Harmonic { k: f64, center: f64 },
    /// `k |x - x_j|² / 2` within `radius` of each well centre, `C²` quintic
    /// blend between the wells, the nearer quadratic outside.
    DoubleWell {
        x1: f64,
        x2: f64,
        radius: f64,
        strength: f64,
    },
    /// `V(x) = Σ c_k x^k`.
    Polynomial { coeffs: Vec<f64> },
}

impl PotentialFamily {
    pub fn zero() -> Self {
        Self::Polynomial { coeffs: vec![0.0] }
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<Self, ModelError> {
        match name {
            "harmonic" => {
                arity(name, params, &[1, 2])?;
                Ok(Self::Harmonic {
                    k: params[0],
                    center: params.get(1).copied().unwrap_or(0.0),
                })
            }
            "double_well" => {
                arity(name, params, &[3, 4])?;
                Ok(Self::DoubleWell {
                    x1: params[0],
                    x2: params[1],
                    radius: params[2],
                    strength: params.get(3).copied().unwrap_or(1.0),
                })
            }
            "polynomial" | "custom_polynomial" => {
                if params.is_empty() {
                    return Err(ModelError::BadParameter("polynomial needs coefficients".into()));
                }
                Ok(Self::Polynomial {
                    coeffs: params.to_vec(),
                })
            }
            "zero" => Ok(Self::zero()),
            other => Err(ModelError::UnknownFamily(other.to_string())),
        }
    }

    pub fn build(&self) -> Result<ExternalPotential, ModelError> {
        match *self {
            Self::Harmonic { k, center } => {
                if !(k >= 0.0 && k.is_finite() && center.is_finite()) {
                    return Err(ModelError::BadParameter(format!("harmonic k = {k}, center = {center}")));
                }
                ExternalPotential::new(
                    scalar_fn(move |x| k * (x - center) * (x - center)),
                    scalar_fn(move |x| 2.0 * k * (x - center)),
                )
            }
            Self::DoubleWell {
                x1,
                x2,
                radius,
                strength,
            } => {
                positive("double-well radius", radius)?;
                positive("double-well strength", strength)?;
                if !(0.0 <= x1 && x1 < x2 && x2 <= 1.0) {
                    return Err(ModelError::BadParameter(format!(
                        "double-well centres must satisfy 0 <= x1 < x2 <= 1, got {x1}, {x2}"
                    )));
                }
                if x2 - x1 <= 2.0 * radius {
                    return Err(ModelError::BadParameter(format!(
                        "wells overlap: |x2 - x1| = {} <= 2 R = {}",
                        x2 - x1,
                        2.0 * radius
                    )));
                }
                let f = move |x: f64| double_well_eval(x1, x2, radius, strength, x);
                ExternalPotential::new(scalar_fn(move |x| f(x).0), scalar_fn(move |x| f(x).1))
            }
            Self::Polynomial { ref coeffs } => {
                let (c1, c2) = (coeffs.clone(), coeffs.clone());
                ExternalPotential::new(
                    scalar_fn(move |x| c1.iter().rev().fold(0.0, |acc, c| acc * x + c)),
                    scalar_fn(move |x| {
                        c2.iter()
                            .enumerate()
                            .skip(1)
                            .rev()
                            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
                    }),
                )
            }
        }
    }
}

fn double_well_eval(x1: f64, x2: f64, radius: f64, k: f64, x: f64) -> (f64, f64) {
    let q1 = 0.5 * k * (x - x1) * (x - x1);
    let q2 = 0.5 * k * (x - x2) * (x - x2);
    let (a, b) = (x1 + radius, x2 - radius);
    if x <= a {
        return (q1, k * (x - x1));
    }
    if x >= b {
        return (q2, k * (x - x2));
    }
    let t = (x - a) / (b - a);
    let w = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let dw = 30.0 * t * t * (1.0 - t) * (1.0 - t) / (b - a);
    let value = (1.0 - w) * q1 + w * q2;
    let deriv = (1.0 - w) * k * (x - x1) + w * k * (x - x2) + dw * (q2 - q1);
    (value, deriv)
}
