//! Random-walk ruin engine.
//!
//! Path `i` draws its increments from its own counter-based stream
//! `(seed, i)`, and paths are reduced in fixed batch order, so every estimate
//! is bit-identical for any thread count.

mod bigjump;

pub use bigjump::{ruin_mc_bigjump, BigJumpSetup};
pub(crate) use bigjump::bigjump_target;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{domain, Error, Result};
use crate::geometry::{set_distance, AngularSet, Coords, Target};
use crate::model::IncrementModel;
use crate::par::{map_indexed, Execution};
use crate::radial::RadialLaw;
use crate::rng::{domain as dom, stream, Stream};
use crate::stats::{wilson, Z95};

/// Paths per work unit.
pub const BATCH: usize = 1024;

/// Barrier-plus-cap truncation of the infinite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingRule {
    pub n_max: u64,
    pub rho: f64,
    /// `min_k c^k` of the model the rule was built for.
    pub min_c: f64,
    /// Level the barrier is measured against; shared across a sweep so that
    /// runs at different `u` see identical paths.
    pub level: f64,
}

impl StoppingRule {
    pub fn new(model: &IncrementModel, level: f64, n_max: u64, rho: f64) -> Result<Self> {
        let min_c = model.c().iter().copied().fold(f64::INFINITY, f64::min);
        if !(level > 0.0) {
            return domain("stopping level must be positive");
        }
        if !(rho >= 1.0) {
            return domain(format!("barrier rho must be at least 1, got {rho}"));
        }
        if (n_max as f64) < level / min_c {
            return domain(format!("n_max = {n_max} is below the drift time u/min c = {}", level / min_c));
        }
        Ok(Self { n_max, rho, min_c, level })
    }

    /// `ρ = 1` and `n_max = max(1000, 20 u / min c)`.
    pub fn default_for(model: &IncrementModel, level: f64) -> Result<Self> {
        let min_c = model.c().iter().copied().fold(f64::INFINITY, f64::min);
        let n_max = (20.0 * level / min_c).ceil().max(1000.0) as u64;
        Self::new(model, level, n_max, 1.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { n_max: (self.n_max as f64 * factor).ceil() as u64, rho: self.rho * factor, ..*self }
    }

    pub fn check(&self, n: u64, sum: f64) -> Option<StopReason> {
        if n >= self.n_max {
            Some(StopReason::Cap)
        } else if sum < -self.rho * self.level && n as f64 > self.level / self.min_c {
            Some(StopReason::Barrier)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AllHit,
    Barrier,
    Cap,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Crude,
    #[default]
    Bigjump,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuinEstimate {
    pub u: f64,
    pub estimator: Estimator,
    pub hit_probability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: u64,
    /// Paths with a positive contribution.
    pub hits: u64,
    pub truncated_paths: u64,
    pub capped_paths: u64,
    pub mean_hit_time: f64,
    /// Per-path standard deviation of the estimator.
    pub path_std: f64,
    pub below_resolution: bool,
}

impl RuinEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn overlaps(&self, other: &RuinEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }

    fn from_counts(u: f64, n: u64, hits: u64, truncated: u64, capped: u64, time_sum: u64) -> Self {
        let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let (ci_low, ci_high) = wilson(hits, n, Z95);
        Self {
            u,
            estimator: Estimator::Crude,
            hit_probability: p,
            ci_low,
            ci_high,
            n_paths: n,
            hits,
            truncated_paths: truncated,
            capped_paths: capped,
            mean_hit_time: if hits == 0 { f64::NAN } else { time_sum as f64 / hits as f64 },
            path_std: (p * (1.0 - p)).sqrt(),
            below_resolution: hits == 0,
        }
    }
}

/// First-hit indices of one path, one slot per target.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub first_hit: SmallVec<[Option<u64>; 4]>,
    pub steps: u64,
    pub stop: StopReason,
}

/// Runs the walk from `start` (after `n0` steps) until every target has been
/// hit or the rule stops it. Hits are checked before the rule at each step.
pub(crate) fn walk(
    model: &IncrementModel,
    targets: &[Target],
    rule: &StoppingRule,
    rng: &mut Stream,
    start: &mut Coords,
    n0: u64,
    first_hit: &mut [Option<u64>],
) -> (u64, StopReason) {
    let mut x = Coords::new();
    let mut n = n0;
    let mut remaining = first_hit.iter().filter(|h| h.is_none()).count();
    loop {
        n += 1;
        model.sample_increment(rng, &mut x);
        for (s, v) in start.iter_mut().zip(&x) {
            *s += v;
        }
        for (t, h) in targets.iter().zip(first_hit.iter_mut()) {
            if h.is_none() && t.contains(start) {
                *h = Some(n);
                remaining -= 1;
            }
        }
        if remaining == 0 {
            return (n, StopReason::AllHit);
        }
        if let Some(r) = rule.check(n, start.iter().sum()) {
            return (n, r);
        }
    }
}

pub fn simulate_path(model: &IncrementModel, targets: &[Target], rule: &StoppingRule, seed: u64, index: u64) -> PathOutcome {
    let mut rng = stream(seed, dom::PATHS, index);
    let mut s: Coords = std::iter::repeat(0.0).take(model.dim()).collect();
    let mut first_hit: SmallVec<[Option<u64>; 4]> = std::iter::repeat(None).take(targets.len()).collect();
    let (steps, stop) = walk(model, targets, rule, &mut rng, &mut s, 0, &mut first_hit);
    PathOutcome { first_hit, steps, stop }
}

/// Every path's outcome, in path order.
pub fn path_outcomes(
    model: &IncrementModel,
    targets: &[Target],
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    exec: Execution,
) -> Vec<PathOutcome> {
    let batches = (n_paths as usize).div_ceil(BATCH);
    map_indexed(exec, batches, |b| {
        let lo = (b * BATCH) as u64;
        let hi = (lo + BATCH as u64).min(n_paths);
        (lo..hi).map(|i| simulate_path(model, targets, rule, seed, i)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    hits: u64,
    time_sum: u64,
    truncated: u64,
    capped: u64,
}

/// Crude Monte Carlo for several targets on one set of paths.
pub fn crude_estimates(
    model: &IncrementModel,
    targets: &[Target],
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    exec: Execution,
) -> Vec<RuinEstimate> {
    let k = targets.len();
    let batches = (n_paths as usize).div_ceil(BATCH);
    let parts = map_indexed(exec, batches, |b| {
        let mut tallies = vec![Tally::default(); k];
        let lo = (b * BATCH) as u64;
        let hi = (lo + BATCH as u64).min(n_paths);
        for i in lo..hi {
            let out = simulate_path(model, targets, rule, seed, i);
            for (t, h) in tallies.iter_mut().zip(&out.first_hit) {
                match h {
                    Some(n) => {
                        t.hits += 1;
                        t.time_sum += n;
                    }
                    None => match out.stop {
                        StopReason::Barrier => t.truncated += 1,
                        StopReason::Cap => t.capped += 1,
                        StopReason::AllHit => {}
                    },
                }
            }
        }
        tallies
    });
    let mut total = vec![Tally::default(); k];
    for p in &parts {
        for (t, q) in total.iter_mut().zip(p) {
            t.hits += q.hits;
            t.time_sum += q.time_sum;
            t.truncated += q.truncated;
            t.capped += q.capped;
        }
    }
    targets
        .iter()
        .zip(&total)
        .map(|(tg, t)| RuinEstimate::from_counts(tg.level(), n_paths, t.hits, t.truncated, t.capped, t.time_sum))
        .collect()
}

/// Checks `δ` against the admissibility floor `δ/(4+δ)` on the full
/// swelling `Θ^δ`, the stronger of the two conditions. The record also says
/// whether the half swelling passes.
pub fn check_admissible(theta: &AngularSet, delta: f64) -> Result<crate::geometry::Admissibility> {
    let adm = theta.admissibility(delta)?;
    if !adm.on_full_swelling() {
        return domain(format!(
            "delta = {delta} is not admissible: component lower bound {} on the swollen set does not exceed {}",
            adm.full_swelling_bound, adm.floor
        ));
    }
    Ok(adm)
}

pub fn cone_target(theta: &AngularSet, delta: f64, u: f64) -> Result<Target> {
    Target::cone(theta.swell(delta)?, u)
}

/// Crude estimate of `P(S_n ∈ uC_δ for some n)`.
#[allow(clippy::too_many_arguments)]
pub fn ruin_mc_cone(
    model: &IncrementModel,
    theta: &AngularSet,
    delta: f64,
    u: f64,
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    exec: Execution,
) -> Result<RuinEstimate> {
    check_admissible(theta, delta)?;
    let t = cone_target(theta, delta, u)?;
    Ok(crude_estimates(model, &[t], n_paths, rule, seed, exec).remove(0))
}

/// Crude estimate of `P(Σ_k S_n^k > u for some n)`.
pub fn ruin_mc_halfspace(
    model: &IncrementModel,
    u: f64,
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    exec: Execution,
) -> Result<RuinEstimate> {
    let t = Target::halfspace(u)?;
    Ok(crude_estimates(model, &[t], n_paths, rule, seed, exec).remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoConeEstimate {
    pub u: f64,
    pub p_a: RuinEstimate,
    pub p_b: RuinEstimate,
    pub p_both: RuinEstimate,
    /// Paths visiting `uC_A ∪ uC_B`.
    pub p_union: RuinEstimate,
    pub distance: f64,
}

/// Hitting probabilities of two disjoint swollen cones and of visiting both.
#[allow(clippy::too_many_arguments)]
pub fn two_cone_mc(
    model: &IncrementModel,
    theta_a: &AngularSet,
    theta_b: &AngularSet,
    delta: f64,
    u: f64,
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    exec: Execution,
) -> Result<TwoConeEstimate> {
    let (sa, sb) = (theta_a.swell(delta)?, theta_b.swell(delta)?);
    let distance = set_distance(&sa, &sb);
    if !(distance > 0.0) {
        return domain("the swollen angular sets overlap; the two-cone diagnostic needs them disjoint");
    }
    let targets = [Target::cone(sa, u)?, Target::cone(sb, u)?];
    let outcomes = path_outcomes(model, &targets, n_paths, rule, seed, exec);
    let mut tallies = [Tally::default(); 4];
    for o in &outcomes {
        let (a, b) = (o.first_hit[0], o.first_hit[1]);
        let events = [a, b, a.and(b).map(|_| a.unwrap().max(b.unwrap())), a.or(b).map(|_| a.unwrap_or(u64::MAX).min(b.unwrap_or(u64::MAX)))];
        for (t, e) in tallies.iter_mut().zip(events) {
            match e {
                Some(n) => {
                    t.hits += 1;
                    t.time_sum += n;
                }
                None => match o.stop {
                    StopReason::Barrier => t.truncated += 1,
                    StopReason::Cap => t.capped += 1,
                    StopReason::AllHit => {}
                },
            }
        }
    }
    let est = |t: &Tally| RuinEstimate::from_counts(u, n_paths, t.hits, t.truncated, t.capped, t.time_sum);
    Ok(TwoConeEstimate {
        u,
        p_a: est(&tallies[0]),
        p_b: est(&tallies[1]),
        p_both: est(&tallies[2]),
        p_union: est(&tallies[3]),
        distance,
    })
}

/// Step-count schedule `k(u)` labelling short and long horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KuSchedule {
    pub k: u64,
    pub expression: String,
    /// The other reading of the Weibull exponent, `exp(u^β/2 − ε)`.
    pub alternative: Option<u64>,
    pub clamped: bool,
}

fn floor_clamped(v: f64, n_max: u64) -> (u64, bool) {
    if !(v < n_max as f64) {
        (n_max, true)
    } else {
        (v.floor().max(0.0) as u64, false)
    }
}

/// `exp(u^{β/2 − ε})` for Weibull and `u²` for lognormal, floored and clamped.
pub fn ku_schedule(law: &RadialLaw, u: f64, eps: f64, n_max: u64) -> Result<KuSchedule> {
    if !(u > 0.0 && eps > 0.0) {
        return domain("ku_schedule needs u > 0 and eps > 0");
    }
    match *law {
        RadialLaw::Weibull { beta, .. } => {
            if !law.is_heavy_tail_admissible() {
                return domain(format!("weibull schedule needs beta in (0,1), got {beta}"));
            }
            let (k, clamped) = floor_clamped(u.powf(0.5 * beta - eps).exp(), n_max);
            let (alt, _) = floor_clamped((0.5 * u.powf(beta) - eps).exp(), n_max);
            Ok(KuSchedule { k, expression: "exp(u^(beta/2 - eps))".into(), alternative: Some(alt), clamped })
        }
        RadialLaw::Lognormal { .. } => {
            let (k, clamped) = floor_clamped(u * u, n_max);
            Ok(KuSchedule { k, expression: "u^2".into(), alternative: None, clamped })
        }
        _ => Err(Error::Unsupported(format!("no k(u) schedule for {}", law.name()))),
    }
}
