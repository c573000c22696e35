//! Hitting sets of rays `t ↦ x + t θ` against ruin targets.
//!
//! For a direction `θ` on the diamond and a positively flagged cap
//! `(center, ρ)`, on the open set where `x + tθ > 0` the norm is linear in
//! `t`, and the cap condition reads
//!
//! `Σ_k |x^k + tθ^k - center^k (Σx + tΣθ)| < ρ (Σx + tΣθ)`,
//!
//! a convex piecewise-linear function of `t` compared with zero. Its negative
//! set is a single open interval, found exactly from the breakpoints.

use smallvec::SmallVec;

use super::{cone_contains, AngularSet, DiamondCap};
use crate::error::{domain, Result};

/// Open interval `(lo, hi)`; `hi` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t > self.lo && t < self.hi
    }
}

pub type Intervals = SmallVec<[Interval; 4]>;

/// Ruin region at level `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `uC = {‖x‖ > u, x/‖x‖ ∈ set}` with `set` already swollen.
    Cone { set: AngularSet, level: f64 },
    /// `uA = {Σ_k x^k > u}`.
    Halfspace { level: f64 },
}

impl Target {
    pub fn cone(set_swollen: AngularSet, level: f64) -> Result<Self> {
        if !set_swollen.positive() {
            return domain("cone targets need an angular set restricted to the positive diamond");
        }
        if !(level > 0.0) {
            return domain(format!("ruin level must be positive, got {level}"));
        }
        Ok(Target::Cone { set: set_swollen, level })
    }

    pub fn halfspace(level: f64) -> Result<Self> {
        if !(level > 0.0) {
            return domain(format!("ruin level must be positive, got {level}"));
        }
        Ok(Target::Halfspace { level })
    }

    pub fn level(&self) -> f64 {
        match self {
            Target::Cone { level, .. } | Target::Halfspace { level } => *level,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Target::Cone { set, level } => cone_contains(set, *level, x),
            Target::Halfspace { level } => x.iter().sum::<f64>() > *level,
        }
    }

    /// All `t > t_min` with `x + tθ` in the target, as disjoint sorted open
    /// intervals. `θ` must lie on the diamond.
    pub fn ray_hits(&self, x: &[f64], theta: &[f64], t_min: f64) -> Intervals {
        let sx: f64 = x.iter().sum();
        let st: f64 = theta.iter().sum();
        let mut out = Intervals::new();
        match self {
            Target::Halfspace { level } => {
                if let Some(iv) = linear_superlevel(sx, st, *level, t_min, f64::INFINITY) {
                    out.push(iv);
                }
            }
            Target::Cone { set, level } => {
                // positive orthant
                let mut lo = t_min;
                let mut hi = f64::INFINITY;
                for (&xk, &tk) in x.iter().zip(theta) {
                    if tk > 0.0 {
                        lo = lo.max(-xk / tk);
                    } else if tk < 0.0 {
                        hi = hi.min(-xk / tk);
                    } else if xk <= 0.0 {
                        return out;
                    }
                }
                // norm, linear on the orthant
                let Some(norm_iv) = linear_superlevel(sx, st, *level, lo, hi) else {
                    return out;
                };
                for cap in set.caps() {
                    if let Some(iv) = cap_interval(cap, x, theta, sx, st, norm_iv) {
                        out.push(iv);
                    }
                }
                merge(&mut out);
            }
        }
        out
    }
}

/// `{t ∈ (lo, hi) : a + b t > level}`.
fn linear_superlevel(a: f64, b: f64, level: f64, lo: f64, hi: f64) -> Option<Interval> {
    let (mut lo, mut hi) = (lo, hi);
    if b > 0.0 {
        lo = lo.max((level - a) / b);
    } else if b < 0.0 {
        hi = hi.min((level - a) / b);
    } else if a <= level {
        return None;
    }
    (lo < hi).then_some(Interval { lo, hi })
}

fn cap_interval(cap: &DiamondCap, x: &[f64], theta: &[f64], sx: f64, st: f64, within: Interval) -> Option<Interval> {
    let c = cap.center();
    let rho = cap.radius();
    let d = x.len();
    let mut a: SmallVec<[f64; 4]> = SmallVec::with_capacity(d);
    let mut b: SmallVec<[f64; 4]> = SmallVec::with_capacity(d);
    for k in 0..d {
        a.push(x[k] - c[k] * sx);
        b.push(theta[k] - c[k] * st);
    }
    let alpha = rho * sx;
    let beta = rho * st;
    let g = |t: f64| -> f64 { a.iter().zip(&b).map(|(ak, bk)| (ak + bk * t).abs()).sum::<f64>() - (alpha + beta * t) };

    let mut pts: SmallVec<[f64; 8]> = SmallVec::new();
    pts.push(within.lo);
    for k in 0..d {
        if b[k] != 0.0 {
            let t = -a[k] / b[k];
            if t > within.lo && t < within.hi {
                pts.push(t);
            }
        }
    }
    let finite_hi = within.hi.is_finite();
    if finite_hi {
        pts.push(within.hi);
    }
    pts.sort_by(|p, q| p.total_cmp(q));
    let vals: SmallVec<[f64; 8]> = pts.iter().map(|&t| g(t)).collect();
    let slope_inf = b.iter().map(|v| v.abs()).sum::<f64>() - beta;
    let last = pts.len() - 1;
    let root = |i: usize| -> f64 {
        // zero of the linear piece between pts[i] and pts[i+1]
        let (t0, t1, g0, g1) = (pts[i], pts[i + 1], vals[i], vals[i + 1]);
        t0 + (t1 - t0) * g0 / (g0 - g1)
    };

    let first_neg = vals.iter().position(|&v| v < 0.0);
    let tail_neg = !finite_hi && slope_inf < 0.0;
    let lo = match first_neg {
        Some(0) => pts[0],
        Some(i) => root(i - 1),
        None if tail_neg => pts[last] - vals[last] / slope_inf,
        None => return None,
    };
    let hi = match vals.iter().rposition(|&v| v < 0.0) {
        Some(j) if j == last => {
            if finite_hi {
                pts[last]
            } else if slope_inf <= 0.0 {
                f64::INFINITY
            } else {
                pts[last] - vals[last] / slope_inf
            }
        }
        Some(j) => root(j),
        None => f64::INFINITY,
    };
    (lo < hi).then_some(Interval { lo, hi })
}

fn merge(ivs: &mut Intervals) {
    if ivs.len() < 2 {
        return;
    }
    ivs.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    let mut merged = Intervals::new();
    for iv in ivs.iter() {
        match merged.last_mut() {
            Some(top) if iv.lo <= top.hi => top.hi = top.hi.max(iv.hi),
            _ => merged.push(*iv),
        }
    }
    *ivs = merged;
}
