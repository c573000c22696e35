//! Asymptotic ruin values and the halfspace integral behind assumptions A5
//! and A6.
//!
//! For the halfspace `A = {Σ_k x^k > 1}` and `c > 0`,
//! `x ∈ uA + vc ⇔ T > u + v‖c‖` with `T = Σ_k X^k`. A cap draw is its center
//! plus a perturbation summing to zero, so on the branch of cap `j`
//! `T = R σ_j` with `σ_j` the coordinate sum of the center, and on the off
//! branch `T = R σ_off`. Hence
//!
//! ```text
//! ∫_0^∞ P(X ∈ uA + vc) dv = (1/‖c‖) Σ_branches m σ ∫_{u/σ}^∞ (r − u/σ) g(r) f(r) dr
//! ```
//!
//! over branches with `σ > 0`, where `g = w` on caps and `1 − w` off the core.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{IncrementModel, Weight};
use crate::par::{map_slice, Execution};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::radial::RadialLaw;
use crate::taildiag::{check_a1_tail, integrated_tail_raw, DiagRow, DiagnosticReport, TailFunction, Verdict, UNDERFLOW};

const MAX_SEGMENTS: usize = 4000;
const QUAD_TOL: Tolerance = Tolerance::new(1e-300, 1e-10);

/// Stop extending the A5 integral once a block adds less than this fraction.
pub const A5_INCREMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticApprox {
    pub u: f64,
    pub value: f64,
    pub method: ApproxMethod,
    /// Bound on the absolute error of `value`.
    pub error: f64,
    /// The integrated tail exceeds 1 here, so `min(1, ·)` would bind.
    pub clipped: bool,
}

/// `(1/‖c‖) ∫_u^∞ P(R > v) dv`, unclipped.
pub fn asymptotic_ruin(law: &RadialLaw, c: &[f64], u: f64) -> Result<AsymptoticApprox> {
    law.validate()?;
    let norm: f64 = c.iter().map(|v| v.abs()).sum();
    if !(norm > 0.0) || !norm.is_finite() {
        return domain("asymptotic_ruin needs a nonzero finite drift");
    }
    if !(u > 0.0) {
        return domain(format!("u must be positive, got {u}"));
    }
    let (tail, method) = match *law {
        RadialLaw::Exponential { rate } => ((-rate * u).exp() / rate, ApproxMethod::ClosedForm),
        RadialLaw::Pareto { alpha, x_m } if alpha > 1.0 => {
            let v = if u >= x_m {
                x_m.powf(alpha) * u.powf(1.0 - alpha) / (alpha - 1.0)
            } else {
                (x_m - u) + x_m / (alpha - 1.0)
            };
            (v, ApproxMethod::ClosedForm)
        }
        RadialLaw::PointMass { value } => ((value - u).max(0.0), ApproxMethod::ClosedForm),
        _ => (integrated_tail_raw(law, u)?, ApproxMethod::Quadrature),
    };
    let value = tail / norm;
    let error = match method {
        ApproxMethod::ClosedForm => value * 4.0 * f64::EPSILON,
        ApproxMethod::Quadrature => value * QUAD_TOL.rel,
    };
    Ok(AsymptoticApprox { u, value, method, error, clipped: tail > 1.0 })
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    Core,
    Off,
}

/// One linear branch `T = σ R` with probability weight `mass · g(R)`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    mass: f64,
    sigma: f64,
    branch: Branch,
}

fn pieces(model: &IncrementModel) -> Vec<Piece> {
    let ang = model.angular();
    let mut out: Vec<Piece> = ang
        .core()
        .caps()
        .iter()
        .zip(ang.masses())
        .map(|(cap, &m)| Piece { mass: m, sigma: cap.center().iter().sum(), branch: Branch::Core })
        .collect();
    out.push(Piece { mass: 1.0, sigma: ang.off_direction().iter().sum(), branch: Branch::Off });
    out.retain(|p| p.sigma > 0.0 && p.mass > 0.0);
    out
}

fn branch_weight(w: &Weight, branch: Branch) -> (Option<f64>, impl Fn(f64) -> f64 + '_) {
    let constant = w.constant().map(|k| match branch {
        Branch::Core => k,
        Branch::Off => 1.0 - k,
    });
    (constant, move |r: f64| match branch {
        Branch::Core => w.eval(r),
        Branch::Off => w.complement(r),
    })
}

fn check_integrable(law: &RadialLaw) -> Result<()> {
    if let RadialLaw::Pareto { alpha, .. } = *law {
        if alpha <= 1.0 {
            return Err(Error::NonIntegrable(format!("pareto radial law with alpha = {alpha} has infinite mean")));
        }
    }
    Ok(())
}

/// `∫_a^∞ g(r) f(r) dr`.
fn weighted_survival(law: &RadialLaw, w: &Weight, branch: Branch, a: f64) -> f64 {
    let (constant, g) = branch_weight(w, branch);
    if let Some(k) = constant {
        return k * law.survival(a);
    }
    if let RadialLaw::PointMass { value } = *law {
        return if value > a { g(value) } else { 0.0 };
    }
    let b = a.max(law.lower_endpoint());
    let ln_sb = law.log_survival(b);
    if ln_sb == f64::NEG_INFINITY {
        return 0.0;
    }
    let r = integrate_to_infinity(
        |r| g(r) * (law.log_density(r) - ln_sb).exp(),
        b,
        law.tail_scale(b),
        QUAD_TOL,
        MAX_SEGMENTS,
    );
    r.value * ln_sb.exp()
}

/// `∫_a^∞ (r − a) g(r) f(r) dr`.
fn weighted_excess(law: &RadialLaw, w: &Weight, branch: Branch, a: f64) -> Result<f64> {
    check_integrable(law)?;
    let (constant, g) = branch_weight(w, branch);
    if let Some(k) = constant {
        return Ok(if k == 0.0 { 0.0 } else { k * integrated_tail_raw(law, a)? });
    }
    if let RadialLaw::PointMass { value } = *law {
        return Ok((value - a).max(0.0) * g(value));
    }
    let b = a.max(law.lower_endpoint());
    let ln_sb = law.log_survival(b);
    if ln_sb == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let r = integrate_to_infinity(
        |r| (r - a) * g(r) * (law.log_density(r) - ln_sb).exp(),
        b,
        law.tail_scale(b),
        QUAD_TOL,
        MAX_SEGMENTS,
    );
    if !r.converged {
        log::warn!("halfspace quadrature at a = {a} did not reach tolerance (error {:.3e})", r.error);
    }
    Ok(r.value * ln_sb.exp())
}

/// `P(T > s)` for the coordinate sum `T` of one increment, `s > 0`.
pub fn coordinate_sum_tail(model: &IncrementModel, s: f64) -> f64 {
    let law = model.radial();
    let w = model.angular().weight();
    pieces(model).iter().map(|p| p.mass * weighted_survival(law, w, p.branch, s / p.sigma)).sum()
}

/// `∫_0^∞ P(X ∈ uA + vc) dv`, evaluated as `(1/‖c‖) ∫_u^∞ P(T > s) ds`.
pub fn halfspace_integral(model: &IncrementModel, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return domain(format!("u must be nonnegative, got {u}"));
    }
    check_drift(model)?;
    let law = model.radial();
    let w = model.angular().weight();
    let mut total = 0.0;
    for p in pieces(model) {
        total += p.mass * p.sigma * weighted_excess(law, w, p.branch, u / p.sigma)?;
    }
    Ok(total / model.c_norm())
}

fn check_drift(model: &IncrementModel) -> Result<()> {
    if model.c().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DriftNotCertified(format!("drift {:?} is not componentwise positive", model.c())));
    }
    Ok(())
}

/// `halfspace_integral(u) / asymptotic_ruin(u) − 1`, or `None` when the
/// denominator underflows.
pub fn equivalence_gap(model: &IncrementModel, u: f64) -> Result<Option<f64>> {
    let asy = asymptotic_ruin(model.radial(), model.c(), u)?;
    if asy.value < UNDERFLOW {
        return Ok(None);
    }
    let h = halfspace_integral(model, u)?;
    Ok(Some(h / asy.value - 1.0))
}

/// Assumption A5: `∫_0^∞ P(X ∈ A + vc) dv < ∞`. The upper bound is doubled
/// until a block adds less than [`A5_INCREMENT`] of the running value.
pub fn check_a5(model: &IncrementModel) -> DiagnosticReport {
    let norm = model.c_norm();
    let tail = |s: f64| coordinate_sum_tail(model, s);
    let mut acc = 0.0;
    let mut lo = 1.0f64;
    let mut rows = Vec::new();
    let mut converged = false;
    while lo < 1e300 {
        let hi = 2.0 * lo;
        let block = integrate(tail, lo, hi, QUAD_TOL, MAX_SEGMENTS).value;
        acc += block;
        if rows.len() < 64 || block <= A5_INCREMENT * acc {
            rows.push(DiagRow { series: "integral".into(), point: hi, ratio: Some(acc / norm), tolerance: A5_INCREMENT });
        }
        if block <= A5_INCREMENT * acc || (acc == 0.0 && block == 0.0) {
            converged = true;
            break;
        }
        lo = hi;
    }
    let verdict = if converged { Verdict::Consistent } else { Verdict::Inconsistent };
    let mut rep = DiagnosticReport::new("A5", verdict);
    rep.rows = rows;
    rep.tolerances = vec![("relative_increment".into(), A5_INCREMENT), ("quadrature_rel".into(), QUAD_TOL.rel)];
    if converged {
        rep.notes.push(format!("integral at u = 1: {:?}", acc / norm));
    } else {
        rep.notes.push("integral still growing at the largest representable bound".into());
    }
    rep
}

/// `H̄(u) = min(1, halfspace_integral(u))` as a tail on `[0, ∞)`.
pub struct HalfspaceTail<'a> {
    model: &'a IncrementModel,
    /// Where `halfspace_integral` crosses 1, if it starts above.
    kink: Option<f64>,
}

impl<'a> HalfspaceTail<'a> {
    pub fn new(model: &'a IncrementModel) -> Result<Self> {
        let h0 = halfspace_integral(model, 0.0)?;
        let kink = if h0 > 1.0 {
            let mut hi = 1.0;
            while halfspace_integral(model, hi)? > 1.0 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if halfspace_integral(model, mid)? > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            Some(hi)
        } else {
            None
        };
        Ok(Self { model, kink })
    }

    pub fn value(&self, u: f64) -> f64 {
        halfspace_integral(self.model, u).map(|h| h.min(1.0)).unwrap_or(f64::NAN)
    }
}

impl TailFunction for HalfspaceTail<'_> {
    fn log_survival(&self, x: f64) -> f64 {
        self.value(x).ln()
    }

    fn density(&self, x: f64) -> f64 {
        if self.kink.is_some_and(|k| x < k) {
            return 0.0;
        }
        coordinate_sum_tail(self.model, x) / self.model.c_norm()
    }

    fn atom_at_zero(&self) -> f64 {
        1.0 - self.value(0.0)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.kink.into_iter().filter(|&k| k > lo && k < hi).collect();
        // kinks of the branch tails sit at σ × (lower endpoint of R)
        let e = self.model.radial().lower_endpoint();
        if e > 0.0 {
            for p in pieces(self.model) {
                let b = e * p.sigma;
                if b > lo && b < hi {
                    out.push(b);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Assumption A6: `H̄` passes the A1 convolution-ratio trend test on `grid`.
pub fn check_a6(model: &IncrementModel, grid: &[f64]) -> Result<DiagnosticReport> {
    let tail = HalfspaceTail::new(model)?;
    let mut rep = check_a1_tail("A6", "halfspace_tail", &tail, grid)?;
    rep.notes.push("tail H̄(u) = min(1, ∫_0^∞ P(X ∈ uA + vc) dv)".into());
    Ok(rep)
}

/// `(u, asymptotic_ruin, halfspace_integral, equivalence_gap)` rows.
pub fn asymptotic_table(model: &IncrementModel, grid: &[f64], exec: Execution) -> Result<Vec<(f64, AsymptoticApprox, f64, Option<f64>)>> {
    let rows = map_slice(exec, grid, |&u| -> Result<_> {
        let asy = asymptotic_ruin(model.radial(), model.c(), u)?;
        let h = halfspace_integral(model, u)?;
        let gap = if asy.value < UNDERFLOW { None } else { Some(h / asy.value - 1.0) };
        Ok((u, asy, h, gap))
    });
    rows.into_iter().collect()
}
