#![allow(dead_code)]

use rand::{Rng, RngCore};
use subexp_ruin::geometry::{jump_threshold, l1_norm, lemma_hit, AngularSet, Ball, Coords, DiamondCap, Direction};
use subexp_ruin::model::{AngularMixture, IncrementModel, ModelSpec, Weight};
use subexp_ruin::radial::RadialLaw;

pub const WEIBULL: RadialLaw = RadialLaw::Weibull { beta: 0.5, lambda: 1.0 };
pub const LOGNORMAL: RadialLaw = RadialLaw::Lognormal { mu: 0.0, sigma: 1.0 };

pub fn model_spec(radial: RadialLaw, kappa: f64) -> ModelSpec {
    let text = format!(
        r#"{{"radial": {}, "core": [{{"center": [0.5, 0.5], "radius": 0.05}}], "off_direction": [-0.5, -0.5], "weight": {{"family": "rational", "kappa": {kappa}}}}}"#,
        serde_json::to_string(&radial).unwrap()
    );
    serde_json::from_str(&text).unwrap()
}

/// Reference geometry with rational weight `r/(r+κ)`.
pub fn reference_model(kappa: f64) -> IncrementModel {
    IncrementModel::from_spec(&model_spec(WEIBULL, kappa)).unwrap()
}

pub fn reference_theta() -> AngularSet {
    AngularSet::cap(&[0.5, 0.5], 0.05).unwrap()
}

pub fn mixture(center: &[f64], radius: f64, weight: Weight) -> AngularMixture {
    let core = AngularSet::cap(center, radius).unwrap();
    let off = Direction::new(&[-0.5, -0.5]).unwrap();
    AngularMixture::new(core, vec![1.0], off, weight).unwrap()
}

/// Trapezoid rule for `∫_u^∞ f` on `v = u + L s/(1-s)`, `s ∈ [0,1]`.
pub fn trapezoid_tail(f: impl Fn(f64) -> f64, u: f64, scale: f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s;
        f(u + scale * s / q) * scale / (q * q)
    };
    let mut sum = 0.5 * (g(0.0) + g(1.0));
    for i in 1..n {
        sum += g(i as f64 * h);
    }
    sum * h
}

pub fn weibull_half_survival(v: f64) -> f64 {
    (-v.max(0.0).sqrt()).exp()
}

pub fn lognormal_survival(v: f64) -> f64 {
    if v <= 0.0 {
        1.0
    } else {
        0.5 * libm::erfc(v.ln() / std::f64::consts::SQRT_2)
    }
}

/// One randomized instance of the jump lemma.
#[derive(Debug, Clone)]
pub struct LemmaInstance {
    pub theta: AngularSet,
    pub delta: f64,
    pub c: Vec<f64>,
    pub eps: f64,
    pub k: f64,
    pub n: u64,
    pub u: f64,
    pub x: Coords,
    pub y: Coords,
    pub t: f64,
    pub u_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LemmaOutcome {
    pub hit: bool,
    pub norm_bound: bool,
    pub angle_bound: bool,
}

fn uniform_simplex<R: RngCore>(rng: &mut R, d: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn lemma_instance<R: RngCore>(rng: &mut R) -> LemmaInstance {
    let d = if rng.random_bool(0.5) { 2 } else { 3 };
    let delta = rng.random_range(0.02..if d == 2 { 0.6 } else { 0.4 });
    let floor = delta / (4.0 + delta);
    let base = floor + 0.5 * delta;
    let n_caps = rng.random_range(1..=3);
    let mut caps = Vec::new();
    for _ in 0..n_caps {
        let r = rng.random_range(0.0..(1.0 / d as f64 - base - 1e-3).min(0.15));
        let low = base + r + 1e-3 * rng.random::<f64>();
        let free = 1.0 - d as f64 * low;
        let center: Vec<f64> = uniform_simplex(rng, d).into_iter().map(|v| low + free * v).collect();
        caps.push(DiamondCap::new(Direction::new(&center).unwrap(), r).unwrap());
    }
    let theta = AngularSet::new(caps, true).unwrap();
    let c: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..2.0)).collect();
    let eps = 0.2 * (1.0 - rng.random::<f64>());
    let k = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..5.0) };
    let n = rng.random_range(0..=50u64);
    let u = 10f64.powf(rng.random_range(-1.0..3.0));
    let centre: Vec<f64> = c.iter().map(|v| -(n as f64) * v).collect();
    let radius = n as f64 * eps + k;
    let x: Coords = if radius > 0.0 { Ball::new(&centre, radius).unwrap().sample(rng) } else { centre.iter().copied().collect() };
    let half = theta.swell(0.5 * delta).unwrap();
    let y = loop {
        let cap = &half.caps()[rng.random_range(0..half.caps().len())];
        let mut y = Coords::new();
        cap.sample(rng, &mut y);
        if half.contains(&y) {
            break y;
        }
    };
    let u_n = jump_threshold(u, n, &c, eps, delta, k).unwrap();
    let t = u_n * (1.0 + 9.0 * (1.0 - rng.random::<f64>()));
    LemmaInstance { theta, delta, c, eps, k, n, u, x, y, t, u_n }
}

pub fn lemma_check(inst: &LemmaInstance) -> LemmaOutcome {
    let d = inst.c.len() as f64;
    let swollen = inst.theta.swell(inst.delta).unwrap();
    let hit = lemma_hit(&inst.x, &inst.y, inst.t, inst.u, &swollen);
    let z: Vec<f64> = inst.x.iter().zip(&inst.y).map(|(a, b)| a + inst.t * b).collect();
    let nz = l1_norm(&z);
    let n = inst.n as f64;
    let lower = -n * l1_norm(&inst.c) - n * d * inst.eps - d * inst.k + inst.t;
    let norm_bound = nz >= lower * (1.0 - 1e-12);
    let dir: Vec<f64> = z.iter().map(|v| v / nz).collect();
    let gap: f64 = dir.iter().zip(&inst.y).map(|(a, b)| (a - b).abs()).sum();
    let angle_bound = gap < 0.5 * inst.delta;
    LemmaOutcome { hit, norm_bound, angle_bound }
}
