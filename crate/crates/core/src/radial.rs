//! One-dimensional laws for the radius `R = ‖X‖`.
//!
//! Every family has a closed-form survival function and quantile, so sampling
//! is inverse-transform throughout. Tails are also available in log form so
//! that diagnostics far out in the tail never underflow.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::rng::open01;

/// Radial tail law. Weibull is parametrised as `P(R > v) = exp(-(v/λ)^β)`.
///
/// `PointMass` is a degenerate law used to build deterministic test models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialLaw {
    Weibull { beta: f64, lambda: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Pareto { alpha: f64, x_m: f64 },
    Exponential { rate: f64 },
    PointMass { value: f64 },
}

/// First moment of a radial law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mean {
    Finite(f64),
    Infinite,
}

impl Mean {
    pub fn finite(self) -> Option<f64> {
        match self {
            Mean::Finite(m) => Some(m),
            Mean::Infinite => None,
        }
    }
}

/// Beyond this many standard deviations the lognormal tail switches from
/// `erfc` to the continued fraction for the Mills ratio.
const LOGNORMAL_DEEP_TAIL: f64 = 8.0;

/// `ln P(Z > z)` for a standard normal `Z`.
pub(crate) fn ln_normal_tail(z: f64) -> f64 {
    if z < LOGNORMAL_DEEP_TAIL {
        (0.5 * erfc(z * FRAC_1_SQRT_2)).ln()
    } else {
        // Mills ratio: P(Z > z) / φ(z) = 1/(z + 1/(z + 2/(z + 3/(z + ...))))
        let mut frac = z;
        for k in (1..=60).rev() {
            frac = z + k as f64 / frac;
        }
        -0.5 * z * z - 0.5 * (2.0 * PI).ln() - frac.ln()
    }
}

/// Upper-tail standard normal quantile: `z` with `P(Z > z) = q`.
fn normal_upper_quantile(q: f64) -> f64 {
    let mut z = if q <= 0.5 { SQRT_2 * erfc_inv(2.0 * q) } else { -SQRT_2 * erfc_inv(2.0 * (1.0 - q)) };
    // One Newton step on the log tail tightens the round trip.
    if q < 0.5 && z.is_finite() {
        let target = q.ln();
        let lt = ln_normal_tail(z);
        let ln_pdf = -0.5 * z * z - 0.5 * (2.0 * PI).ln();
        let hazard = (ln_pdf - lt).exp();
        z += (lt - target) / hazard;
    }
    z
}

/// Standard normal quantile on the log-tail scale: `P(Z > z) = exp(ln_q)`.
fn normal_upper_quantile_log(ln_q: f64) -> f64 {
    if ln_q > -700.0 {
        return normal_upper_quantile(ln_q.exp());
    }
    let mut z = (-2.0 * ln_q).sqrt();
    for _ in 0..50 {
        let lt = ln_normal_tail(z);
        let ln_pdf = -0.5 * z * z - 0.5 * (2.0 * PI).ln();
        let step = (lt - ln_q) / (ln_pdf - lt).exp();
        z += step;
        if step.abs() < 1e-15 * z {
            break;
        }
    }
    z
}

impl RadialLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        let good = match *self {
            RadialLaw::Weibull { beta, lambda } => ok(beta) && ok(lambda),
            RadialLaw::Lognormal { mu, sigma } => mu.is_finite() && ok(sigma),
            RadialLaw::Pareto { alpha, x_m } => ok(alpha) && ok(x_m),
            RadialLaw::Exponential { rate } => ok(rate),
            RadialLaw::PointMass { value } => ok(value),
        };
        if good {
            Ok(())
        } else {
            domain(format!("radial law parameters must be positive and finite: {self:?}"))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RadialLaw::Weibull { .. } => "weibull",
            RadialLaw::Lognormal { .. } => "lognormal",
            RadialLaw::Pareto { .. } => "pareto",
            RadialLaw::Exponential { .. } => "exponential",
            RadialLaw::PointMass { .. } => "point_mass",
        }
    }

    /// Left end of the support: the survival function is 1 below it.
    pub fn lower_endpoint(&self) -> f64 {
        match *self {
            RadialLaw::Pareto { x_m, .. } => x_m,
            _ => 0.0,
        }
    }

    /// Whether the law has a Lebesgue density (everything but the point mass).
    pub fn has_density(&self) -> bool {
        !matches!(self, RadialLaw::PointMass { .. })
    }

    /// Heavy-tail experiments accept Weibull only with `β ∈ (0, 1)`.
    pub fn is_heavy_tail_admissible(&self) -> bool {
        match *self {
            RadialLaw::Weibull { beta, .. } => beta > 0.0 && beta < 1.0,
            RadialLaw::Lognormal { .. } | RadialLaw::Pareto { .. } => true,
            RadialLaw::Exponential { .. } | RadialLaw::PointMass { .. } => false,
        }
    }

    /// `ln P(R > v)`.
    pub fn log_survival(&self, v: f64) -> f64 {
        match *self {
            RadialLaw::Weibull { beta, lambda } => {
                if v <= 0.0 {
                    0.0
                } else {
                    -(v / lambda).powf(beta)
                }
            }
            RadialLaw::Lognormal { mu, sigma } => {
                if v <= 0.0 {
                    0.0
                } else {
                    ln_normal_tail((v.ln() - mu) / sigma)
                }
            }
            RadialLaw::Pareto { alpha, x_m } => {
                if v <= x_m {
                    0.0
                } else {
                    alpha * (x_m / v).ln()
                }
            }
            RadialLaw::Exponential { rate } => {
                if v <= 0.0 {
                    0.0
                } else {
                    -rate * v
                }
            }
            RadialLaw::PointMass { value } => {
                if v < value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `P(R > v)`.
    pub fn survival(&self, v: f64) -> f64 {
        match *self {
            RadialLaw::Lognormal { mu, sigma } if v > 0.0 => {
                let z = (v.ln() - mu) / sigma;
                if z < LOGNORMAL_DEEP_TAIL {
                    0.5 * erfc(z * FRAC_1_SQRT_2)
                } else {
                    ln_normal_tail(z).exp()
                }
            }
            _ => self.log_survival(v).exp(),
        }
    }

    /// `P(R <= v)`, accurate when small.
    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            RadialLaw::Lognormal { mu, sigma } => {
                if v <= 0.0 {
                    0.0
                } else {
                    0.5 * erfc(-(v.ln() - mu) / sigma * FRAC_1_SQRT_2)
                }
            }
            RadialLaw::PointMass { value } => {
                if v < value {
                    0.0
                } else {
                    1.0
                }
            }
            _ => -self.log_survival(v).exp_m1(),
        }
    }

    /// Density; zero outside the support. The point mass reports zero.
    pub fn density(&self, v: f64) -> f64 {
        self.log_density(v).exp()
    }

    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            RadialLaw::Weibull { beta, lambda } => {
                if v <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let z = v / lambda;
                    (beta / lambda).ln() + (beta - 1.0) * z.ln() - z.powf(beta)
                }
            }
            RadialLaw::Lognormal { mu, sigma } => {
                if v <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let z = (v.ln() - mu) / sigma;
                    -0.5 * z * z - v.ln() - sigma.ln() - 0.5 * (2.0 * PI).ln()
                }
            }
            RadialLaw::Pareto { alpha, x_m } => {
                if v < x_m {
                    f64::NEG_INFINITY
                } else {
                    alpha.ln() + alpha * x_m.ln() - (alpha + 1.0) * v.ln()
                }
            }
            RadialLaw::Exponential { rate } => {
                if v < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * v
                }
            }
            RadialLaw::PointMass { .. } => f64::NEG_INFINITY,
        }
    }

    /// Hazard rate `f(v) / F̄(v)`, computed in log space.
    pub fn hazard(&self, v: f64) -> f64 {
        (self.log_density(v) - self.log_survival(v)).exp()
    }

    /// Inverse CDF: the `v` with `P(R <= v) = p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("quantile probability must lie in (0,1), got {p}"));
        }
        Ok(match *self {
            RadialLaw::Weibull { beta, lambda } => lambda * (-(-p).ln_1p()).powf(1.0 / beta),
            RadialLaw::Lognormal { mu, sigma } => (mu - sigma * normal_upper_quantile(p)).exp(),
            RadialLaw::Pareto { alpha, x_m } => x_m * ((-p).ln_1p() * (-1.0 / alpha)).exp(),
            RadialLaw::Exponential { rate } => -(-p).ln_1p() / rate,
            RadialLaw::PointMass { value } => value,
        })
    }

    /// Inverse survival: the `v` with `P(R > v) = q`, for `q ∈ (0, 1]`.
    pub fn inverse_survival(&self, q: f64) -> f64 {
        match *self {
            RadialLaw::Lognormal { mu, sigma } => (mu + sigma * normal_upper_quantile(q)).exp(),
            _ => self.inverse_log_survival(q.ln()),
        }
    }

    /// The `v` with `ln P(R > v) = ln_q`, for `ln_q <= 0`.
    pub fn inverse_log_survival(&self, ln_q: f64) -> f64 {
        let t = (-ln_q).max(0.0);
        match *self {
            RadialLaw::Weibull { beta, lambda } => lambda * t.powf(1.0 / beta),
            RadialLaw::Lognormal { mu, sigma } => (mu + sigma * normal_upper_quantile_log(ln_q)).exp(),
            RadialLaw::Pareto { alpha, x_m } => x_m * (t / alpha).exp(),
            RadialLaw::Exponential { rate } => t / rate,
            RadialLaw::PointMass { value } => value,
        }
    }

    /// Inverse-transform draw.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_survival(open01(rng))
    }

    /// Exact draw from the law of `R` given `R > h`.
    pub fn sample_above<R: RngCore + ?Sized>(&self, h: f64, rng: &mut R) -> f64 {
        if let RadialLaw::PointMass { value } = *self {
            return value;
        }
        let ln_q = open01(rng).ln() + self.log_survival(h);
        self.inverse_log_survival(ln_q).max(h)
    }

    /// Exact draw from the law of `R` given `R <= s`.
    pub fn sample_below<R: RngCore + ?Sized>(&self, s: f64, rng: &mut R) -> f64 {
        if let RadialLaw::PointMass { value } = *self {
            return value;
        }
        let p = open01(rng) * self.cdf(s);
        match self.quantile(p) {
            Ok(v) => v.min(s),
            Err(_) => s,
        }
    }

    pub fn mean(&self) -> Mean {
        match *self {
            RadialLaw::Weibull { beta, lambda } => Mean::Finite(lambda * gamma(1.0 + 1.0 / beta)),
            RadialLaw::Lognormal { mu, sigma } => Mean::Finite((mu + 0.5 * sigma * sigma).exp()),
            RadialLaw::Pareto { alpha, x_m } => {
                if alpha <= 1.0 {
                    Mean::Infinite
                } else {
                    Mean::Finite(alpha * x_m / (alpha - 1.0))
                }
            }
            RadialLaw::Exponential { rate } => Mean::Finite(1.0 / rate),
            RadialLaw::PointMass { value } => Mean::Finite(value),
        }
    }

    /// Finite mean or an error naming the law.
    pub fn finite_mean(&self) -> Result<f64> {
        self.mean()
            .finite()
            .ok_or_else(|| Error::NonIntegrable(format!("{} has infinite mean", self.name())))
    }

    /// Characteristic length of the tail at `v`: the mean residual scale
    /// `1 / hazard(v)`, clamped to a sane range. Used to scale quadrature maps.
    pub fn tail_scale(&self, v: f64) -> f64 {
        let s = match *self {
            RadialLaw::PointMass { value } => value,
            _ => 1.0 / self.hazard(v.max(self.lower_endpoint())),
        };
        if s.is_finite() && s > 0.0 {
            s.clamp(1e-6, 1e300)
        } else {
            1.0
        }
    }
}
