//! Increment laws `X = Rθ`: a radial law plus a conditional angular mixture.
//!
//! Given `R = r`, the direction is drawn from the core caps with probability
//! `w(r)` and is `off_direction` otherwise. Core draws are uniform on the
//! tangent-plane cap, so `E[θ | core, cap i] = center_i` and the drift reduces
//! to one-dimensional expectations of `R w(R)` and `R (1 − w(R))`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{AngularSet, Coords, DiamondCap, Direction};
use crate::par::{map_indexed, Execution};
use crate::quadrature::{integrate, Tolerance};
use crate::radial::RadialLaw;
use crate::rng::{domain as dom, stream, unit};
use crate::stats::{Moments, ProbEstimate, Z99};

/// Draws for the Monte Carlo cross-check of the drift.
pub const DRIFT_CHECK_DRAWS: u64 = 1_000_000;

const DRIFT_CHECK_SEED: u64 = 0x0d1f_7c4e;

/// `P(core | R = r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Weight {
    /// `r / (r + κ)`
    Rational { kappa: f64 },
    /// `1 − exp(−r/κ)`
    Exponential { kappa: f64 },
    /// Degenerate constant weight, for tests.
    Constant { value: f64 },
}

impl Weight {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Weight::Rational { kappa } | Weight::Exponential { kappa } if !(kappa > 0.0 && kappa.is_finite()) => {
                domain(format!("weight kappa must be positive, got {kappa}"))
            }
            Weight::Constant { value } if !(0.0..=1.0).contains(&value) => {
                domain(format!("constant weight must lie in [0,1], got {value}"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Weight::Rational { kappa } => {
                if r <= 0.0 {
                    0.0
                } else {
                    r / (r + kappa)
                }
            }
            Weight::Exponential { kappa } => -(-r.max(0.0) / kappa).exp_m1(),
            Weight::Constant { value } => value,
        }
    }

    /// `1 − w(r)`, without cancellation.
    pub fn complement(&self, r: f64) -> f64 {
        match *self {
            Weight::Rational { kappa } => {
                if r <= 0.0 {
                    1.0
                } else {
                    kappa / (r + kappa)
                }
            }
            Weight::Exponential { kappa } => (-r.max(0.0) / kappa).exp(),
            Weight::Constant { value } => 1.0 - value,
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            Weight::Constant { value } => Some(value),
            _ => None,
        }
    }
}

/// Config form of one core cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreCap {
    pub center: Direction,
    pub radius: f64,
    #[serde(default = "one")]
    pub mass: f64,
}

fn one() -> f64 {
    1.0
}

/// Config block of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub radial: RadialLaw,
    pub core: Vec<CoreCap>,
    /// Defaults to the negative diagonal `(−1/d, …, −1/d)`.
    #[serde(default)]
    pub off_direction: Option<Direction>,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularMixture {
    core: AngularSet,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
    off: Direction,
    weight: Weight,
}

impl AngularMixture {
    pub fn new(core: AngularSet, masses: Vec<f64>, off: Direction, weight: Weight) -> Result<Self> {
        weight.validate()?;
        if !core.positive() {
            return domain("the core set must be restricted to the positive diamond");
        }
        if core.min_component_lower_bound() <= 0.0 {
            return domain(format!(
                "core caps must stay strictly inside the positive orthant (lower bound {})",
                core.min_component_lower_bound()
            ));
        }
        if masses.len() != core.caps().len() || masses.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return domain("one nonnegative mass per core cap is required");
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return domain("core masses must not all vanish");
        }
        if off.dim() != core.dim() {
            return Err(Error::DimensionMismatch { expected: core.dim(), got: off.dim() });
        }
        if off.iter().all(|&v| v >= 0.0) {
            return domain("off_direction needs at least one negative component");
        }
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let mut acc = 0.0;
        let cumulative = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Ok(Self { core, masses, cumulative, off, weight })
    }

    pub fn from_caps(caps: &[CoreCap], off: Option<Direction>, weight: Weight) -> Result<Self> {
        if caps.is_empty() {
            return domain("at least one core cap is required");
        }
        let set = AngularSet::new(
            caps.iter().map(|c| DiamondCap::new(c.center.clone(), c.radius)).collect::<Result<Vec<_>>>()?,
            true,
        )?;
        let d = set.dim();
        let off = match off {
            Some(o) => o,
            None => Direction::new(&vec![-1.0 / d as f64; d])?,
        };
        Self::new(set, caps.iter().map(|c| c.mass).collect(), off, weight)
    }

    pub fn core(&self) -> &AngularSet {
        &self.core
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn off_direction(&self) -> &Direction {
        &self.off
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn dim(&self) -> usize {
        self.core.dim()
    }

    /// `E[θ | core]`.
    pub fn core_mean(&self) -> Coords {
        let mut m: Coords = std::iter::repeat(0.0).take(self.dim()).collect();
        for (cap, w) in self.core.caps().iter().zip(&self.masses) {
            for (mk, ck) in m.iter_mut().zip(cap.center().iter()) {
                *mk += w * ck;
            }
        }
        m
    }

    /// Draws a core direction into `out`.
    pub fn sample_core<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut Coords) {
        let caps = self.core.caps();
        let i = if caps.len() == 1 {
            0
        } else {
            let v = unit(rng);
            self.cumulative.iter().position(|&c| v < c).unwrap_or(caps.len() - 1)
        };
        caps[i].sample(rng, out);
    }

    /// Draws `θ` given `R = r`; returns whether the core branch was taken.
    pub fn sample_direction<R: RngCore + ?Sized>(&self, r: f64, rng: &mut R, out: &mut Coords) -> bool {
        if unit(rng) < self.weight.eval(r) {
            self.sample_core(rng, out);
            true
        } else {
            out.clear();
            out.extend_from_slice(&self.off);
            false
        }
    }
}

/// `E[g(R)]` as `∫_0^1 g(F̄⁻¹(q)) dq`.
pub fn expectation<G: Fn(f64) -> f64>(law: &RadialLaw, g: G, tol: Tolerance) -> (f64, f64) {
    if let RadialLaw::PointMass { value } = *law {
        return (g(value), 0.0);
    }
    let r = integrate(|q| g(law.inverse_survival(q)), 0.0, 1.0, tol, 4000);
    (r.value, r.error)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMethod {
    ClosedForm,
    Quadrature,
    /// Supplied by the caller; not certified.
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McDriftCheck {
    pub draws: u64,
    pub estimate: Vec<f64>,
    /// Componentwise 99% confidence radius.
    pub radius99: Vec<f64>,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCertificate {
    /// `c = −E[X]`.
    pub c: Vec<f64>,
    pub norm: f64,
    /// Componentwise error bound on `c`.
    pub radius: Vec<f64>,
    pub method: DriftMethod,
    pub mean_r_core: f64,
    pub mean_r_off: f64,
    pub mc_check: Option<McDriftCheck>,
    pub certified: bool,
}

impl DriftCertificate {
    pub fn min_component(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementModel {
    radial: RadialLaw,
    angular: AngularMixture,
    drift: DriftCertificate,
}

impl IncrementModel {
    /// Builds and certifies a model, with the default Monte Carlo drift check.
    pub fn new(radial: RadialLaw, angular: AngularMixture) -> Result<Self> {
        Self::with_check_draws(radial, angular, DRIFT_CHECK_DRAWS)
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let angular = AngularMixture::from_caps(&spec.core, spec.off_direction.clone(), spec.weight)?;
        Self::new(spec.radial, angular)
    }

    /// Like [`IncrementModel::new`]; `check_draws = 0` skips the Monte Carlo
    /// cross-check.
    pub fn with_check_draws(radial: RadialLaw, angular: AngularMixture, check_draws: u64) -> Result<Self> {
        radial.validate()?;
        let mut drift = drift_by_quadrature(&radial, &angular)?;
        let mut model = Self { radial, angular, drift: drift.clone() };
        if check_draws > 0 {
            let check = model.drift_mc(check_draws, DRIFT_CHECK_SEED, Execution::default());
            if !check.agrees {
                log::warn!("Monte Carlo drift {:?} disagrees with quadrature {:?}", check.estimate, drift.c);
            }
            drift.mc_check = Some(check);
        }
        if !drift.certified {
            return Err(Error::DriftNotCertified(format!(
                "c = -E[X] = {:?} (error bound {:?}) is not componentwise positive",
                drift.c, drift.radius
            )));
        }
        model.drift = drift;
        Ok(model)
    }

    /// A model whose drift is computed but not required to be certified, for
    /// diagnostics that report an A4 failure instead of stopping on it.
    pub fn uncertified(radial: RadialLaw, angular: AngularMixture) -> Result<Self> {
        radial.validate()?;
        let drift = drift_by_quadrature(&radial, &angular)?;
        Ok(Self { radial, angular, drift })
    }

    /// A model with a caller-supplied drift, bypassing (A4). Only for
    /// degenerate test models such as `w ≡ 1`.
    pub fn with_drift(radial: RadialLaw, angular: AngularMixture, c: &[f64]) -> Result<Self> {
        radial.validate()?;
        if c.len() != angular.dim() {
            return Err(Error::DimensionMismatch { expected: angular.dim(), got: c.len() });
        }
        if c.iter().any(|&v| !(v > 0.0)) {
            return domain("supplied drift must be componentwise positive");
        }
        let drift = DriftCertificate {
            c: c.to_vec(),
            norm: c.iter().sum(),
            radius: vec![0.0; c.len()],
            method: DriftMethod::Override,
            mean_r_core: f64::NAN,
            mean_r_off: f64::NAN,
            mc_check: None,
            certified: false,
        };
        Ok(Self { radial, angular, drift })
    }

    pub fn radial(&self) -> &RadialLaw {
        &self.radial
    }

    pub fn angular(&self) -> &AngularMixture {
        &self.angular
    }

    pub fn drift(&self) -> &DriftCertificate {
        &self.drift
    }

    pub fn c(&self) -> &[f64] {
        &self.drift.c
    }

    pub fn c_norm(&self) -> f64 {
        self.drift.norm
    }

    pub fn dim(&self) -> usize {
        self.angular.dim()
    }

    /// One draw of `X = Rθ` into `out`; returns `R`.
    pub fn sample_increment<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut Coords) -> f64 {
        let r = self.radial.sample(rng);
        self.angular.sample_direction(r, rng, out);
        for v in out.iter_mut() {
            *v *= r;
        }
        r
    }

    /// Monte Carlo estimate of `c = −E[X]` over `draws` increments.
    pub fn drift_mc(&self, draws: u64, seed: u64, exec: Execution) -> McDriftCheck {
        const BATCH: u64 = 1 << 14;
        let d = self.dim();
        let batches = draws.div_ceil(BATCH);
        let parts = map_indexed(exec, batches as usize, |b| {
            let mut rng = stream(seed, dom::DRIFT, b as u64);
            let mut acc = vec![Moments::default(); d];
            let mut x = Coords::new();
            let n = BATCH.min(draws - b as u64 * BATCH);
            for _ in 0..n {
                self.sample_increment(&mut rng, &mut x);
                for (a, v) in acc.iter_mut().zip(&x) {
                    a.push(-v);
                }
            }
            acc
        });
        let mut acc = vec![Moments::default(); d];
        for p in &parts {
            for (a, q) in acc.iter_mut().zip(p) {
                a.merge(q);
            }
        }
        let estimate: Vec<f64> = acc.iter().map(Moments::mean).collect();
        let radius99: Vec<f64> = acc.iter().map(|m| Z99 * m.std_error()).collect();
        let agrees = estimate
            .iter()
            .zip(&radius99)
            .zip(&self.drift.c)
            .all(|((e, r), c)| (e - c).abs() <= r + 1e-9 * c.abs());
        McDriftCheck { draws, estimate, radius99, agrees }
    }
}

fn drift_by_quadrature(radial: &RadialLaw, angular: &AngularMixture) -> Result<DriftCertificate> {
    let mean = radial.finite_mean()?;
    let weight = *angular.weight();
    let (mean_r_off, err, method) = match weight.constant() {
        Some(w) => (mean * (1.0 - w), 0.0, DriftMethod::ClosedForm),
        None => {
            let (v, e) = expectation(radial, |r| r * weight.complement(r), Tolerance::new(1e-14, 1e-12));
            (v, e, DriftMethod::Quadrature)
        }
    };
    let mean_r_core = match weight.constant() {
        Some(w) => mean * w,
        None => mean - mean_r_off,
    };
    let core = angular.core_mean();
    let off = angular.off_direction();
    let c: Vec<f64> = core.iter().zip(off.iter()).map(|(a, b)| -(mean_r_core * a + mean_r_off * b)).collect();
    let radius: Vec<f64> = core
        .iter()
        .zip(off.iter())
        .map(|(a, b)| err * (a.abs() + b.abs()) + 1e-12 * mean)
        .collect();
    let certified = c.iter().zip(&radius).all(|(v, r)| v - r > 0.0);
    Ok(DriftCertificate {
        norm: c.iter().map(|v| v.abs()).sum(),
        c,
        radius,
        method,
        mean_r_core,
        mean_r_off,
        mc_check: None,
        certified,
    })
}

/// Monte Carlo estimate of `P(θ ∈ Θ^ε | R > h)` with exact conditioning.
///
/// Draw `i` uses its own stream and draws `R` by inverting the conditioned
/// tail from a single uniform, so for a fixed seed each draw is monotone in `h`.
pub fn conditional_angle_prob(model: &IncrementModel, eps: f64, h: f64, n_draws: u64, seed: u64) -> Result<ProbEstimate> {
    if !(eps > 0.0) {
        return domain("eps must be positive");
    }
    let target = model.angular.core().swell(eps)?;
    let ln_sh = model.radial.log_survival(h);
    const BATCH: u64 = 4096;
    let batches = n_draws.div_ceil(BATCH);
    let counts = map_indexed(Execution::default(), batches as usize, |b| {
        let mut hits = 0u64;
        let mut theta = Coords::new();
        let start = b as u64 * BATCH;
        for i in start..(start + BATCH).min(n_draws) {
            let mut rng = stream(seed, dom::ANGLE, i);
            let u = crate::rng::open01(&mut rng);
            let r = match model.radial {
                RadialLaw::PointMass { value } => value,
                law => law.inverse_log_survival(u.ln() + ln_sh).max(h),
            };
            model.angular.sample_direction(r, &mut rng, &mut theta);
            if target.contains(&theta) {
                hits += 1;
            }
        }
        hits
    });
    Ok(ProbEstimate::from_counts(counts.iter().sum(), n_draws))
}
