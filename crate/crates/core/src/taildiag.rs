//! Integrated tails, two-fold convolution tail ratios and the heavy-tail
//! diagnostics built on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{map_slice, Execution};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::radial::RadialLaw;

/// Survival values below this are treated as numerically lost.
pub const UNDERFLOW: f64 = 1e-280;

/// Relative tolerance for convolution quadrature.
pub const CONV_TOL: f64 = 1e-6;

/// Default half-width of the band around 2 accepted at the last grid point.
pub const A1_TOL: f64 = 0.3;

/// Slack allowed when testing monotone trends on quadrature output.
pub const TREND_SLACK: f64 = 1e-5;

/// Relative step an A2 ratio must drop by between consecutive grid points.
pub const A2_MIN_DROP: f64 = 0.01;

/// The last A2 ratio must fall below this.
pub const A2_FINAL_MAX: f64 = 0.05;

const MAX_SEGMENTS: usize = 4000;

/// `ln ∫_u^∞ F̄(v) dv`, without clipping. Fails for tails that are not
/// integrable.
pub fn ln_integrated_tail_raw(law: &RadialLaw, u: f64) -> Result<f64> {
    law.validate()?;
    if let RadialLaw::Pareto { alpha, .. } = *law {
        if alpha <= 1.0 {
            return Err(Error::NonIntegrable(format!("pareto tail with alpha = {alpha} has no integrated tail")));
        }
    }
    if let RadialLaw::PointMass { value } = *law {
        return Ok((value - u).max(0.0).ln());
    }
    let u = u.max(0.0);
    // Below the support the survival function is 1.
    let a = u.max(law.lower_endpoint());
    let flat = a - u;
    let ln_sa = law.log_survival(a);
    if ln_sa == f64::NEG_INFINITY {
        return Ok(flat.ln());
    }
    let r = match *law {
        // power tails: v = a e^t turns v^{-α} into e^{-(α-1)t}
        RadialLaw::Pareto { alpha, .. } => integrate_to_infinity(
            |t| (law.log_survival(a * t.exp()) - ln_sa + t).exp() * a,
            0.0,
            1.0 / (alpha - 1.0),
            Tolerance::TAIL,
            MAX_SEGMENTS,
        ),
        _ => integrate_to_infinity(|v| (law.log_survival(v) - ln_sa).exp(), a, law.tail_scale(a), Tolerance::TAIL, MAX_SEGMENTS),
    };
    if !r.converged {
        log::warn!("integrated tail of {} at u = {u} did not reach tolerance (error {:.3e})", law.name(), r.error);
    }
    let ln_tail = ln_sa + r.value.ln();
    Ok(if flat > 0.0 { ln_add(flat.ln(), ln_tail) } else { ln_tail })
}

/// `∫_u^∞ F̄(v) dv`, without clipping.
pub fn integrated_tail_raw(law: &RadialLaw, u: f64) -> Result<f64> {
    ln_integrated_tail_raw(law, u).map(f64::exp)
}

/// `ln F̄_I(u)`; non-integrable tails are clipped to 0 (i.e. `F̄_I = 1`).
pub fn ln_integrated_tail(law: &RadialLaw, u: f64) -> f64 {
    match ln_integrated_tail_raw(law, u) {
        Ok(v) => v.min(0.0),
        Err(e) => {
            log::warn!("{e}; integrated tail clipped at 1");
            0.0
        }
    }
}

/// `F̄_I(u) = min(1, ∫_u^∞ F̄(v) dv)`.
pub fn integrated_tail(law: &RadialLaw, u: f64) -> f64 {
    ln_integrated_tail(law, u).exp()
}

pub(crate) fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `F̄_I` with a log-spaced lookup table of the unclipped integral. Nodes
/// carry `ln ∫` and its exact slope `−u F̄(u) / ∫` in `ln u`; lookups use
/// cubic Hermite interpolation, clamped to the neighbouring node values so
/// the table stays monotone. Clipping happens after interpolation.
#[derive(Debug, Clone)]
pub struct IntegratedTail {
    law: RadialLaw,
    ln_u: Vec<f64>,
    ln_value: Vec<f64>,
    slope: Vec<f64>,
}

const TABLE_NODES: usize = 4096;

impl IntegratedTail {
    pub fn new(law: RadialLaw) -> Result<Self> {
        ln_integrated_tail_raw(&law, 1.0)?;
        let lo = law.quantile(1e-3)?.max(1e-9);
        let hi = default_tail_end(&law);
        let n = TABLE_NODES;
        let (a, b) = (lo.ln(), hi.ln());
        let ln_u: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let raw: Vec<Result<f64>> = map_slice(Execution::default(), &ln_u, |&l| ln_integrated_tail_raw(&law, l.exp()));
        let mut ln_value = raw.into_iter().collect::<Result<Vec<f64>>>()?;
        for i in 1..n {
            ln_value[i] = ln_value[i].min(ln_value[i - 1]);
        }
        let slope = ln_u.iter().zip(&ln_value).map(|(&l, &v)| -(l + law.log_survival(l.exp()) - v).exp()).collect();
        Ok(Self { law, ln_u, ln_value, slope })
    }

    pub fn law(&self) -> &RadialLaw {
        &self.law
    }

    /// Quadrature value, bypassing the table.
    pub fn exact(&self, u: f64) -> f64 {
        integrated_tail(&self.law, u)
    }

    /// Table lookup; falls back to quadrature outside the tabulated range.
    pub fn value(&self, u: f64) -> f64 {
        self.ln_value(u).exp()
    }

    pub fn ln_value(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return ln_integrated_tail(&self.law, u);
        }
        let l = u.ln();
        let n = self.ln_u.len();
        if l < self.ln_u[0] || l > self.ln_u[n - 1] {
            return ln_integrated_tail(&self.law, u);
        }
        let i = self.ln_u.partition_point(|&x| x <= l).clamp(1, n - 1);
        let (x0, x1) = (self.ln_u[i - 1], self.ln_u[i]);
        let (y0, y1) = (self.ln_value[i - 1], self.ln_value[i]);
        let h = x1 - x0;
        let t = (l - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * self.slope[i - 1]
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * self.slope[i];
        y.clamp(y1, y0).min(0.0)
    }
}

/// Upper end of default diagnostic grids: where `F̄` reaches about 1e-200,
/// capped at 1e15.
pub fn default_tail_end(law: &RadialLaw) -> f64 {
    let x = law.inverse_log_survival(-200.0 * std::f64::consts::LN_10);
    if x.is_finite() {
        x.min(1e15)
    } else {
        1e15
    }
}

/// `n` log-spaced points from the median of `law` to [`default_tail_end`].
pub fn default_grid(law: &RadialLaw, n: usize) -> Vec<f64> {
    let lo = law.inverse_survival(0.5).max(1e-6);
    log_grid(lo, default_tail_end(law), n)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `F̄^{*2}(x) / F̄(x)` for two independent copies of `R`, or `None` when
/// `F̄(x)` is below [`UNDERFLOW`].
///
/// Uses `P(R₁+R₂ > x) = 2∫_{[0,x/2]} F̄(x−y) dF(y) + F̄(x/2)²` with the outer
/// measure parametrised by `s = −ln F̄(y)`, so the integrand
/// `exp(ln F̄(x−y) − ln F̄(x) − s)` stays of order one.
pub fn conv_tail_ratio(law: &RadialLaw, x: f64) -> Option<f64> {
    let ln_fx = law.log_survival(x);
    if ln_fx < UNDERFLOW.ln() {
        return None;
    }
    if let RadialLaw::PointMass { .. } = *law {
        // F̄(x) = 1 here, and so is the tail of the sum.
        return Some(1.0);
    }
    let half = 0.5 * x;
    let s_max = -law.log_survival(half);
    let integrand = |s: f64| {
        let y = law.inverse_log_survival(-s).min(half);
        (law.log_survival(x - y) - ln_fx - s).exp()
    };
    let r = integrate(integrand, 0.0, s_max, Tolerance::relative(CONV_TOL), MAX_SEGMENTS);
    if !r.converged {
        log::warn!("convolution ratio of {} at x = {x} did not converge", law.name());
    }
    Some(2.0 * r.value + (2.0 * law.log_survival(half) - ln_fx).exp())
}

/// A one-dimensional tail `P(Y > x)` on `[0, ∞)` given through a continuous
/// density plus a possible atom at zero.
pub trait TailFunction: Sync {
    fn log_survival(&self, x: f64) -> f64;
    /// Density of the continuous part.
    fn density(&self, x: f64) -> f64;
    fn atom_at_zero(&self) -> f64 {
        0.0
    }
    /// Points where the density is not smooth.
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64>;
}

/// Convolution tail ratio for a general [`TailFunction`].
pub fn conv_tail_ratio_tail<T: TailFunction + ?Sized>(tail: &T, x: f64) -> Option<f64> {
    let ln_fx = tail.log_survival(x);
    if ln_fx < UNDERFLOW.ln() || !ln_fx.is_finite() {
        return None;
    }
    let half = 0.5 * x;
    let mut cuts = vec![0.0];
    cuts.extend(tail.breakpoints(0.0, half).into_iter().filter(|&b| b > 0.0 && b < half));
    cuts.push(half);
    let integrand = |y: f64| {
        let h = tail.density(y);
        if h == 0.0 {
            0.0
        } else {
            h * (tail.log_survival(x - y) - ln_fx).exp()
        }
    };
    let mut body = 0.0;
    for w in cuts.windows(2) {
        let r = integrate(integrand, w[0], w[1], Tolerance::new(0.0, CONV_TOL), 200);
        body += r.value;
    }
    Some(2.0 * tail.atom_at_zero() + 2.0 * body + (2.0 * tail.log_survival(half) - ln_fx).exp())
}

/// `F̄_I(γu) / F̄_I(u)`, or `None` when both integrated tails are below
/// [`UNDERFLOW`].
pub fn a2_ratio(law: &RadialLaw, gamma: f64, u: f64) -> Result<Option<f64>> {
    if !(gamma > 1.0) || !(u > 0.0) {
        return crate::error::domain(format!("a2_ratio needs gamma > 1 and u > 0, got gamma = {gamma}, u = {u}"));
    }
    let lo = ln_integrated_tail(law, u);
    let hi = ln_integrated_tail(law, gamma * u);
    let floor = UNDERFLOW.ln();
    if lo < floor && hi < floor {
        return Ok(None);
    }
    Ok(Some((hi - lo).exp().min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One evaluated point of a diagnostic. `ratio` is `None` where the value
/// was numerically inconclusive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagRow {
    pub series: String,
    pub point: f64,
    pub ratio: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub assumption: String,
    pub verdict: Verdict,
    pub rows: Vec<DiagRow>,
    /// Named tolerances and thresholds the verdict was computed with.
    pub tolerances: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl DiagnosticReport {
    pub fn new(assumption: &str, verdict: Verdict) -> Self {
        Self { assumption: assumption.to_string(), verdict, rows: Vec::new(), tolerances: Vec::new(), notes: Vec::new() }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["series", "point", "ratio", "tolerance"]).map_err(io)?;
        for r in &self.rows {
            let ratio = r.ratio.map(fmt_f64).unwrap_or_else(|| "nan".into());
            w.write_record([r.series.clone(), fmt_f64(r.point), ratio, fmt_f64(r.tolerance)]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Shortest round-trip formatting, stable across runs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn check_increasing(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] <= 0.0 {
        return crate::error::domain("diagnostic grids must be positive and strictly increasing");
    }
    Ok(())
}

/// Trend verdict on a sequence of convolution ratios.
pub fn a1_verdict(points: &[f64], ratios: &[Option<f64>], tol: f64) -> Verdict {
    let feasible: Vec<(f64, f64)> = points.iter().zip(ratios).filter_map(|(&x, r)| r.map(|r| (x, r))).collect();
    if feasible.len() < 2 {
        return Verdict::Inconclusive;
    }
    let last = feasible[feasible.len() - 1].1;
    if (last - 2.0).abs() > tol {
        return Verdict::Inconsistent;
    }
    let top = &feasible[feasible.len() / 2..];
    let monotone = top.windows(2).all(|w| (w[1].1 - 2.0).abs() <= (w[0].1 - 2.0).abs() + TREND_SLACK);
    if monotone {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    }
}

/// Assumption A1: ratios approach 2 along `grid`.
pub fn check_a1(law: &RadialLaw, grid: &[f64]) -> Result<DiagnosticReport> {
    law.validate()?;
    check_increasing(grid)?;
    let ratios = map_slice(Execution::default(), grid, |&x| conv_tail_ratio(law, x));
    Ok(a1_report("A1", law.name(), grid, ratios))
}

/// A1 machinery applied to a general tail.
pub fn check_a1_tail<T: TailFunction + ?Sized>(assumption: &str, label: &str, tail: &T, grid: &[f64]) -> Result<DiagnosticReport> {
    check_increasing(grid)?;
    let ratios = map_slice(Execution::default(), grid, |&x| conv_tail_ratio_tail(tail, x));
    Ok(a1_report(assumption, label, grid, ratios))
}

fn a1_report(assumption: &str, label: &str, grid: &[f64], ratios: Vec<Option<f64>>) -> DiagnosticReport {
    let verdict = a1_verdict(grid, &ratios, A1_TOL);
    let mut rep = DiagnosticReport::new(assumption, verdict);
    rep.tolerances = vec![("last_point_band".into(), A1_TOL), ("trend_slack".into(), TREND_SLACK), ("quadrature_rel".into(), CONV_TOL)];
    rep.rows = grid
        .iter()
        .zip(&ratios)
        .map(|(&x, &r)| DiagRow { series: label.to_string(), point: x, ratio: r, tolerance: A1_TOL })
        .collect();
    let skipped = ratios.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        rep.notes.push(format!("{skipped} grid points beyond survival underflow were skipped"));
    }
    rep
}

/// Assumption A2: for every `γ`, `F̄_I(γu)/F̄_I(u)` decreases towards 0.
pub fn check_a2(law: &RadialLaw, gammas: &[f64], grid: &[f64]) -> Result<DiagnosticReport> {
    law.validate()?;
    check_increasing(grid)?;
    if gammas.is_empty() || gammas.iter().any(|&g| !(g > 1.0)) {
        return crate::error::domain("A2 needs a nonempty list of gammas > 1");
    }
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &g in gammas {
        let vals: Vec<Option<f64>> = map_slice(Execution::default(), grid, |&u| a2_ratio(law, g, u).ok().flatten());
        // A ratio of exactly 1 means both integrated tails are clipped.
        let feasible: Vec<f64> = vals.iter().flatten().copied().filter(|&r| r < 1.0).collect();
        let v = if feasible.len() < 2 {
            Verdict::Inconclusive
        } else {
            let decreasing = feasible.windows(2).all(|w| w[1] == 0.0 || w[1] < w[0] * (1.0 - A2_MIN_DROP));
            if decreasing && feasible[feasible.len() - 1] <= A2_FINAL_MAX {
                Verdict::Consistent
            } else {
                Verdict::Inconsistent
            }
        };
        verdicts.push(v);
        for (&u, &r) in grid.iter().zip(&vals) {
            rows.push(DiagRow { series: format!("gamma={g}"), point: u, ratio: r, tolerance: A2_FINAL_MAX });
        }
    }
    let verdict = if verdicts.contains(&Verdict::Inconsistent) {
        Verdict::Inconsistent
    } else if verdicts.contains(&Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Consistent
    };
    let mut rep = DiagnosticReport::new("A2", verdict);
    rep.rows = rows;
    rep.tolerances = vec![("min_relative_drop".into(), A2_MIN_DROP), ("final_ratio_max".into(), A2_FINAL_MAX)];
    Ok(rep)
}
