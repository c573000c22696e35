//! Single-big-jump estimator.
//!
//! Let `s` be the split threshold, `p = P(R > s)` and `N` the first step with
//! `R_N > s`. A path is generated with increments conditioned on `R <= s`
//! (the small walk `S̃`) until it hits at `τ`, or until the stopping rule fires,
//! giving `M` steps. With `q(x) = P(x + X ∈ target)` its contribution is
//!
//! ```text
//! Z = Σ_{n=1}^{M} (1−p)^{n−1} q(S̃_{n−1})
//!   + M (1−p)^{n*−1} p Σ_{k>n*} q(S_{k−1})     (no immediate hit at n*)
//! ```
//!
//! The first sum splits as `P(small step hits) + P(big step hits)`: the big
//! branch integrates the survival function against the pre-jump location and
//! the small branch replaces the hit indicator of `S̃` by its conditional
//! probability. The second sum follows one uniformly chosen `n*`: an actual
//! big jump is drawn there and, if it misses, the unconditioned walk continues
//! with its hit indicators replaced the same way.
//!
//! For a fixed direction the hitting radii form a union of intervals (see
//! `Target::ray_hits`), so `q` is a sum of `∫ w f` and `∫ (1−w) f` over those
//! intervals: one core direction is drawn per step, the off direction is
//! exact. `E[Z]` is the crude estimator's truncated hitting probability.

use crate::error::{domain, Error, Result};
use crate::geometry::{AngularSet, Coords, Intervals, Target};
use crate::model::IncrementModel;
use crate::par::{map_indexed, Execution};
use crate::quadrature::{integrate, Tolerance};
use crate::radial::RadialLaw;
use crate::rng::{domain as dom, stream, unit, Stream};
use crate::stats::{Moments, Z95};

use super::{check_admissible, cone_target, Estimator, RuinEstimate, StopReason, StoppingRule, BATCH};

const TABLE_NODES: usize = 2048;

/// `ln E[g(R) | R > a]` on a log grid in `a`, with exact slopes for cubic
/// Hermite interpolation.
#[derive(Debug, Clone)]
struct ConditionalTable {
    ln_a: Vec<f64>,
    value: Vec<f64>,
    slope: Vec<f64>,
    constant: Option<f64>,
}

impl ConditionalTable {
    fn build<G: Fn(f64) -> f64 + Sync>(law: &RadialLaw, g: G, lo: f64, hi: f64) -> Self {
        let (a0, a1) = (lo.ln(), hi.ln());
        let ln_a: Vec<f64> = (0..TABLE_NODES).map(|i| a0 + (a1 - a0) * i as f64 / (TABLE_NODES - 1) as f64).collect();
        let rows = map_indexed(Execution::default(), TABLE_NODES, |i| {
            let a = ln_a[i].exp();
            let ln_sa = law.log_survival(a);
            let r = integrate(
                |q: f64| g(law.inverse_log_survival(q.ln() + ln_sa).max(a)),
                0.0,
                1.0,
                Tolerance::new(1e-300, 1e-12),
                2000,
            );
            let m = r.value;
            // d/d ln a of ln E[g | R > a] = a h(a) (1 − g(a)/E[g | R > a])
            let slope = a * law.hazard(a) * (1.0 - g(a) / m);
            (m.ln(), slope)
        });
        let (value, slope) = rows.into_iter().unzip();
        Self { ln_a, value, slope, constant: None }
    }

    fn eval(&self, a: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let t = a.ln();
        let n = self.ln_a.len();
        if t <= self.ln_a[0] {
            return self.value[0];
        }
        if t >= self.ln_a[n - 1] {
            return self.value[n - 1];
        }
        let h = self.ln_a[1] - self.ln_a[0];
        let i = (((t - self.ln_a[0]) / h) as usize).min(n - 2);
        let x = (t - self.ln_a[i]) / h;
        let (x2, x3) = (x * x, x * x * x);
        (2.0 * x3 - 3.0 * x2 + 1.0) * self.value[i]
            + (x3 - 2.0 * x2 + x) * h * self.slope[i]
            + (-2.0 * x3 + 3.0 * x2) * self.value[i + 1]
            + (x3 - x2) * h * self.slope[i + 1]
    }
}

/// Precomputed pieces shared by all paths of one big-jump run.
#[derive(Debug, Clone)]
pub struct BigJumpSetup {
    split: f64,
    p_split: f64,
    ln_small: f64,
    core: ConditionalTable,
    off: ConditionalTable,
}

impl BigJumpSetup {
    pub fn new(model: &IncrementModel, split: f64) -> Result<Self> {
        let law = *model.radial();
        if !law.has_density() {
            return Err(Error::Unsupported(format!("the big-jump estimator needs a radial density, not {}", law.name())));
        }
        if !(split > 0.0) {
            return domain("split threshold must be positive");
        }
        let p_split = law.survival(split);
        let w = *model.angular().weight();
        let lo = law.lower_endpoint().max(1e-12);
        let hi = law.inverse_log_survival(-745.0).max(lo * 2.0);
        let (core, off) = match w.constant() {
            Some(c) => {
                let mk = |v: f64| ConditionalTable { ln_a: vec![], value: vec![], slope: vec![], constant: Some(v.ln()) };
                (mk(c), mk(1.0 - c))
            }
            None => (
                ConditionalTable::build(&law, |r| w.eval(r), lo, hi),
                ConditionalTable::build(&law, |r| w.complement(r), lo, hi),
            ),
        };
        Ok(Self { split, p_split, ln_small: (-p_split).ln_1p(), core, off })
    }

    pub fn split(&self) -> f64 {
        self.split
    }

    pub fn p_split(&self) -> f64 {
        self.p_split
    }

    /// `∫_a^∞ w f` (core) or `∫_a^∞ (1−w) f` (off).
    pub fn partial_mass(&self, law: &RadialLaw, a: f64, core: bool) -> f64 {
        if a == f64::INFINITY {
            return 0.0;
        }
        let table = if core { &self.core } else { &self.off };
        (law.log_survival(a) + table.eval(a)).exp()
    }

    fn interval_mass(&self, law: &RadialLaw, ivs: &Intervals, core: bool) -> f64 {
        ivs.iter()
            .map(|iv| (self.partial_mass(law, iv.lo, core) - self.partial_mass(law, iv.hi, core)).max(0.0))
            .sum()
    }

    /// `P(x + X ∈ target)` with one core direction drawn from `rng`.
    fn hit_prob(&self, model: &IncrementModel, target: &Target, x: &[f64], theta: &mut Coords, rng: &mut Stream) -> f64 {
        let law = model.radial();
        let angular = model.angular();
        angular.sample_core(rng, theta);
        let core_hits = target.ray_hits(x, theta, 0.0);
        let off_hits = target.ray_hits(x, angular.off_direction(), 0.0);
        self.interval_mass(law, &core_hits, true) + self.interval_mass(law, &off_hits, false)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    z: Moments,
    time_weighted: f64,
    positive: u64,
    truncated: u64,
    capped: u64,
}

fn one_path(model: &IncrementModel, target: &Target, rule: &StoppingRule, setup: &BigJumpSetup, seed: u64, index: u64) -> (f64, f64, Option<StopReason>) {
    let law = model.radial();
    let angular = model.angular();
    let mut rng = stream(seed, dom::BIGJUMP, index);
    let d = model.dim();
    let mut x: Coords = std::iter::repeat(0.0).take(d).collect();
    let mut theta = Coords::new();
    let mut z = 0.0;
    let mut zt = 0.0;
    let mut m: u64 = 0;
    let mut chosen: (u64, Coords) = (1, x.clone());
    let can_step_small = setup.p_split < 1.0;
    let mut stop = None;
    let mut n: u64 = 0;
    loop {
        n += 1;
        let w_prev = ((n - 1) as f64 * setup.ln_small).exp();
        let q = setup.hit_prob(model, target, &x, &mut theta, &mut rng);
        z += w_prev * q;
        zt += w_prev * q * n as f64;
        m += 1;
        if unit(&mut rng) * (m as f64) < 1.0 {
            chosen = (n, x.clone());
        }
        if !can_step_small {
            break;
        }
        let r = law.sample_below(setup.split, &mut rng);
        angular.sample_direction(r, &mut rng, &mut theta);
        for (xk, tk) in x.iter_mut().zip(&theta) {
            *xk += r * tk;
        }
        if target.contains(&x) {
            break;
        }
        if let Some(reason) = rule.check(n, x.iter().sum()) {
            stop = Some(reason);
            break;
        }
    }
    // continuation after one real big jump at a uniformly chosen step
    let (n_star, mut y) = chosen;
    let r = law.sample_above(setup.split, &mut rng);
    angular.sample_direction(r, &mut rng, &mut theta);
    for (yk, tk) in y.iter_mut().zip(&theta) {
        *yk += r * tk;
    }
    if setup.p_split > 0.0 && !target.contains(&y) && rule.check(n_star, y.iter().sum()).is_none() {
        let weight = m as f64 * ((n_star - 1) as f64 * setup.ln_small).exp() * setup.p_split;
        let mut step = Coords::new();
        let mut k = n_star;
        loop {
            k += 1;
            let q = weight * setup.hit_prob(model, target, &y, &mut theta, &mut rng);
            z += q;
            zt += q * k as f64;
            model.sample_increment(&mut rng, &mut step);
            for (yk, sk) in y.iter_mut().zip(&step) {
                *yk += sk;
            }
            if target.contains(&y) || rule.check(k, y.iter().sum()).is_some() {
                break;
            }
        }
    }
    (z, zt, stop)
}

/// Big-jump estimate for an arbitrary target.
pub(crate) fn bigjump_target(
    model: &IncrementModel,
    target: &Target,
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    setup: &BigJumpSetup,
    exec: Execution,
) -> RuinEstimate {
    let batches = (n_paths as usize).div_ceil(BATCH);
    let parts = map_indexed(exec, batches, |b| {
        let mut acc = Acc::default();
        let lo = (b * BATCH) as u64;
        let hi = (lo + BATCH as u64).min(n_paths);
        for i in lo..hi {
            let (z, zt, stop) = one_path(model, target, rule, setup, seed, i);
            acc.z.push(z);
            acc.time_weighted += zt;
            if z > 0.0 {
                acc.positive += 1;
            }
            match stop {
                Some(StopReason::Barrier) => acc.truncated += 1,
                Some(StopReason::Cap) => acc.capped += 1,
                _ => {}
            }
        }
        acc
    });
    let mut total = Acc::default();
    for p in &parts {
        total.z.merge(&p.z);
        total.time_weighted += p.time_weighted;
        total.positive += p.positive;
        total.truncated += p.truncated;
        total.capped += p.capped;
    }
    let mean = total.z.mean();
    let se = total.z.std_error();
    RuinEstimate {
        u: target.level(),
        estimator: Estimator::Bigjump,
        hit_probability: mean,
        ci_low: (mean - Z95 * se).max(0.0),
        ci_high: mean + Z95 * se,
        n_paths,
        hits: total.positive,
        truncated_paths: total.truncated,
        capped_paths: total.capped,
        mean_hit_time: if total.z.sum > 0.0 { total.time_weighted / total.z.sum } else { f64::NAN },
        path_std: total.z.variance().sqrt(),
        below_resolution: total.positive == 0,
    }
}

/// Big-jump estimate of `P(S_n ∈ uC_δ for some n)`; `split` defaults to `u/4`.
#[allow(clippy::too_many_arguments)]
pub fn ruin_mc_bigjump(
    model: &IncrementModel,
    theta: &AngularSet,
    delta: f64,
    u: f64,
    n_paths: u64,
    rule: &StoppingRule,
    seed: u64,
    split: Option<f64>,
    exec: Execution,
) -> Result<RuinEstimate> {
    let split = split.unwrap_or(0.25 * u);
    if !(split < u) {
        return domain(format!("split threshold {split} must be below u = {u}"));
    }
    check_admissible(theta, delta)?;
    let target = cone_target(theta, delta, u)?;
    let setup = BigJumpSetup::new(model, split)?;
    Ok(bigjump_target(model, &target, n_paths, rule, seed, &setup, exec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Direction;
    use crate::model::{AngularMixture, Weight};

    #[test]
    fn partial_masses_match_direct_quadrature() {
        let law = RadialLaw::Weibull { beta: 0.5, lambda: 1.0 };
        let mix = AngularMixture::new(
            AngularSet::cap(&[0.5, 0.5], 0.05).unwrap(),
            vec![1.0],
            Direction::new(&[-0.5, -0.5]).unwrap(),
            Weight::Rational { kappa: 20.0 },
        )
        .unwrap();
        let model = IncrementModel::with_check_draws(law, mix, 0).unwrap();
        let setup = BigJumpSetup::new(&model, 10.0).unwrap();
        for a in [10.0, 10.37, 55.5, 300.0, 4321.0] {
            let direct = crate::quadrature::integrate_to_infinity(
                |r| r / (r + 20.0) * law.density(r),
                a,
                law.tail_scale(a),
                Tolerance::relative(1e-13),
                4000,
            )
            .value;
            let got = setup.partial_mass(&law, a, true);
            assert!((got / direct - 1.0).abs() < 1e-9, "a={a} {got} {direct}");
            let off = setup.partial_mass(&law, a, false);
            assert!(((got + off) / law.survival(a) - 1.0).abs() < 1e-9);
        }
    }
}
