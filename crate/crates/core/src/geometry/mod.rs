//! L1 geometry on the unit diamond.
//!
//! Angular sets are finite unions of diamond caps: open L1 balls around a
//! point of the diamond, intersected with the diamond (and, when flagged, with
//! its strictly positive part). Swelling a cap by `δ` is exactly a radius
//! increase, so swollen sets are represented without approximation.
//!
//! All membership tests use strict inequalities: `‖x‖ > u` and
//! `‖y - center‖ < radius`. A cap of radius zero therefore contains nothing
//! itself, but its swellings are the open balls around the center.

mod distance;
mod ray;

pub use distance::{set_distance, SET_DISTANCE_TOL};
pub use ray::{Interval, Intervals, Target};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{domain, Error, Result};
use crate::rng::unit;

/// Coordinates of a point in `R^d`. Inline storage for `d <= 4`.
pub type Coords = SmallVec<[f64; 4]>;

/// Tolerance on `‖θ‖ = 1` for a [`Direction`].
pub const DIAMOND_TOL: f64 = 1e-12;

/// Config centers further than this from the diamond trigger a warning.
pub const CENTER_DRIFT_WARN: f64 = 1e-9;

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum()
}

/// A point on the L1 unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Direction(Coords);

impl Direction {
    /// Wraps coordinates that already have unit L1 norm.
    pub fn new(components: &[f64]) -> Result<Self> {
        if components.len() < 2 {
            return domain("dimension must be at least 2");
        }
        if components.iter().any(|v| !v.is_finite()) {
            return domain("direction components must be finite");
        }
        let n = l1_norm(components);
        if (n - 1.0).abs() > DIAMOND_TOL {
            return domain(format!("direction has L1 norm {n}, expected 1"));
        }
        Ok(Direction(components.iter().copied().collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

impl std::ops::Deref for Direction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(de)?;
        normalize_config_point(&raw).map_err(serde::de::Error::custom)
    }
}

/// Projects a config-supplied point onto the diamond, warning when it was
/// noticeably off.
pub fn normalize_config_point(raw: &[f64]) -> Result<Direction> {
    if raw.len() < 2 {
        return domain("dimension must be at least 2");
    }
    let n = l1_norm(raw);
    if (n - 1.0).abs() > CENTER_DRIFT_WARN {
        log::warn!("point {raw:?} has L1 norm {n}; normalising onto the diamond");
    }
    normalize(raw)
}

/// `x / ‖x‖`.
pub fn normalize(x: &[f64]) -> Result<Direction> {
    if x.iter().any(|v| !v.is_finite()) {
        return domain("vector components must be finite");
    }
    let n = l1_norm(x);
    if n == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    if x.len() < 2 {
        return domain("dimension must be at least 2");
    }
    Ok(Direction(x.iter().map(|v| v / n).collect()))
}

/// Open L1 ball on the diamond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapSpec", into = "CapSpec")]
pub struct DiamondCap {
    center: Direction,
    radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapSpec {
    center: Vec<f64>,
    radius: f64,
}

impl TryFrom<CapSpec> for DiamondCap {
    type Error = Error;
    fn try_from(spec: CapSpec) -> Result<Self> {
        DiamondCap::new(normalize_config_point(&spec.center)?, spec.radius)
    }
}

impl From<DiamondCap> for CapSpec {
    fn from(cap: DiamondCap) -> Self {
        CapSpec { center: cap.center.as_slice().to_vec(), radius: cap.radius }
    }
}

impl DiamondCap {
    pub fn new(center: Direction, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return domain(format!("cap radius must be a nonnegative finite number, got {radius}"));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &Direction {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        l1_distance(y, &self.center) < self.radius
    }

    /// Uniform draw from the closed cap `{center + η : Σ η = 0, ‖η‖ <= radius}`.
    ///
    /// The first `d - 1` tangent coordinates are drawn from a box and the
    /// draw is rejected unless the full perturbation lies in the L1 ball, so
    /// the sample sits on the diamond exactly and within `radius` of the
    /// center. Positivity is the caller's concern.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut Coords) {
        let d = self.center.dim();
        out.clear();
        out.extend_from_slice(&self.center);
        if self.radius == 0.0 {
            return;
        }
        let mut eta: Coords = SmallVec::from_elem(0.0, d);
        loop {
            let mut sum = 0.0;
            let mut norm = 0.0;
            for e in eta.iter_mut().take(d - 1) {
                *e = self.radius * (2.0 * unit(rng) - 1.0);
                sum += *e;
                norm += e.abs();
            }
            eta[d - 1] = -sum;
            norm += sum.abs();
            if norm < self.radius {
                break;
            }
        }
        for (o, e) in out.iter_mut().zip(&eta) {
            *o += e;
        }
    }
}

/// Finite union of diamond caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DiamondCap>", into = "Vec<DiamondCap>")]
pub struct AngularSet {
    caps: Vec<DiamondCap>,
    positive: bool,
}

impl TryFrom<Vec<DiamondCap>> for AngularSet {
    type Error = Error;
    fn try_from(caps: Vec<DiamondCap>) -> Result<Self> {
        AngularSet::new(caps, true)
    }
}

impl From<AngularSet> for Vec<DiamondCap> {
    fn from(set: AngularSet) -> Self {
        set.caps
    }
}

impl AngularSet {
    pub fn new(caps: Vec<DiamondCap>, positive: bool) -> Result<Self> {
        if caps.is_empty() {
            return domain("angular set needs at least one cap");
        }
        let d = caps[0].center.dim();
        if let Some(bad) = caps.iter().find(|c| c.center.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.center.dim() });
        }
        Ok(Self { caps, positive })
    }

    /// Single cap inside the positive part of the diamond.
    pub fn cap(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(vec![DiamondCap::new(Direction::new(center)?, radius)?], true)
    }

    pub fn caps(&self) -> &[DiamondCap] {
        &self.caps
    }

    pub fn positive(&self) -> bool {
        self.positive
    }

    pub fn dim(&self) -> usize {
        self.caps[0].center.dim()
    }

    /// `Θ^δ`: every radius grows by `delta`; the positivity flag is kept.
    pub fn swell(&self, delta: f64) -> Result<AngularSet> {
        if !(delta > 0.0 && delta.is_finite()) {
            return domain(format!("swelling radius must be positive, got {delta}"));
        }
        Ok(AngularSet {
            caps: self
                .caps
                .iter()
                .map(|c| DiamondCap { center: c.center.clone(), radius: c.radius + delta })
                .collect(),
            positive: self.positive,
        })
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        if self.positive && y.iter().any(|&v| v <= 0.0) {
            return false;
        }
        self.caps.iter().any(|c| c.contains(y))
    }

    /// `min over caps of (min_k center^k - radius)`: a lower bound for every
    /// coordinate of every member.
    pub fn min_component_lower_bound(&self) -> f64 {
        self.caps
            .iter()
            .map(|c| c.center.iter().copied().fold(f64::INFINITY, f64::min) - c.radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Which of the two δ-admissibility conditions this set satisfies.
    pub fn admissibility(&self, delta: f64) -> Result<Admissibility> {
        let floor = delta / (4.0 + delta);
        Ok(Admissibility {
            delta,
            floor,
            half_swelling_bound: self.swell(delta / 2.0)?.min_component_lower_bound(),
            full_swelling_bound: self.swell(delta)?.min_component_lower_bound(),
        })
    }
}

/// Record of the δ-admissibility check: the jump lemma needs
/// `y^k > δ/(4+δ)` on `Θ^{δ/2}`, the ruin asymptotic states it on `Θ^δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub delta: f64,
    pub floor: f64,
    pub half_swelling_bound: f64,
    pub full_swelling_bound: f64,
}

impl Admissibility {
    pub fn on_half_swelling(&self) -> bool {
        self.half_swelling_bound > self.floor
    }
    pub fn on_full_swelling(&self) -> bool {
        self.full_swelling_bound > self.floor
    }
}

pub fn angular_contains(set: &AngularSet, y: &[f64]) -> bool {
    set.contains(y)
}

/// `x ∈ uC`: `‖x‖ > u` and `x/‖x‖` in the (already swollen) set.
pub fn cone_contains(set_swollen: &AngularSet, u: f64, x: &[f64]) -> bool {
    let n = l1_norm(x);
    if n <= u || n == 0.0 {
        return false;
    }
    if set_swollen.positive && x.iter().any(|&v| v <= 0.0) {
        return false;
    }
    let dir: Coords = x.iter().map(|v| v / n).collect();
    set_swollen.caps.iter().any(|c| c.contains(&dir))
}

pub fn min_component_lower_bound(set: &AngularSet) -> f64 {
    set.min_component_lower_bound()
}

/// Jump length beyond which a jump from `B(-n c, K + n ε)` in a direction of
/// `Θ^{δ/2}` lands in `uC_δ`:
/// `max(u + n‖c‖ + n d ε + d K, (4+δ)/δ · (n‖c‖ + n d ε + d K))`.
pub fn jump_threshold(u: f64, n: u64, c: &[f64], eps: f64, delta: f64, k: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return domain(format!("delta must be positive, got {delta}"));
    }
    if c.iter().any(|&v| !(v > 0.0)) {
        return domain("drift must be strictly positive componentwise");
    }
    if !(eps >= 0.0) || !(k >= 0.0) {
        return domain("eps and K must be nonnegative");
    }
    let d = c.len() as f64;
    let n = n as f64;
    let spread = n * l1_norm(c) + n * d * eps + d * k;
    Ok((u + spread).max((4.0 + delta) / delta * spread))
}

/// `x + t y ∈ uC` for the swollen set.
pub fn lemma_hit(x: &[f64], y: &[f64], t: f64, u: f64, set_swollen: &AngularSet) -> bool {
    let z: Coords = x.iter().zip(y).map(|(a, b)| a + t * b).collect();
    cone_contains(set_swollen, u, &z)
}

/// L1 ball `B(center, radius)` with `radius > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Coords,
    radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return domain(format!("ball radius must be positive, got {radius}"));
        }
        Ok(Self { center: center.iter().copied().collect(), radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        l1_distance(x, &self.center) < self.radius
    }

    /// Uniform point of the open ball by rejection from its bounding box.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Coords {
        loop {
            let x: Coords = self.center.iter().map(|c| c + self.radius * (2.0 * unit(rng) - 1.0)).collect();
            if self.contains(&x) {
                return x;
            }
        }
    }
}
