//! Experiment drivers and their CSV/JSON artifacts.

use std::path::Path;

use serde::Serialize;

use crate::asymptotics::{asymptotic_ruin, check_a5, check_a6};
use crate::config::{ExperimentConfig, Validated};
use crate::error::{Error, Result};
use crate::geometry::Admissibility;
use crate::model::{conditional_angle_prob, AngularMixture, DriftCertificate, IncrementModel, ModelSpec, DRIFT_CHECK_DRAWS};
use crate::par::Execution;
use crate::radial::RadialLaw;
use crate::geometry::Target;
use crate::simulate::{
    bigjump_target, cone_target, BigJumpSetup, crude_estimates, ku_schedule, two_cone_mc, Estimator, KuSchedule, RuinEstimate,
    StoppingRule,
};
use crate::taildiag::{check_a1, check_a2, default_grid, log_grid, DiagRow, DiagnosticReport, Verdict};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io)
}

/// Everything needed to reproduce a run. Holds no timestamps or thread
/// counts, so identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub drift: DriftCertificate,
    pub admissibility: Admissibility,
    pub distance: Option<f64>,
    pub rules: Vec<StoppingRule>,
    pub split_thresholds: Vec<f64>,
    pub ku: Vec<Option<KuSchedule>>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(v: &Validated, command: &str, outputs: &[&str]) -> Result<Self> {
        let c = &v.config;
        let rules = c.u.iter().map(|&u| v.rule(u)).collect::<Result<Vec<_>>>()?;
        let ku = c
            .u
            .iter()
            .zip(&rules)
            .map(|(&u, r)| ku_schedule(&c.model.radial, u, c.ku_eps, r.n_max).ok())
            .collect();
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed: c.seed,
            config: c.clone(),
            drift: v.model.drift().clone(),
            admissibility: v.admissibility,
            distance: v.distance,
            rules,
            split_thresholds: c.u.iter().map(|u| u * c.split_fraction).collect(),
            ku,
            warnings: v.warnings.clone(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        })
    }
}

fn estimate_at(v: &Validated, target: &Target, u: f64, exec: Execution) -> Result<RuinEstimate> {
    let c = &v.config;
    let rule = v.rule(u)?;
    Ok(match c.estimator {
        Estimator::Crude => crude_estimates(&v.model, std::slice::from_ref(target), c.paths, &rule, c.seed, exec).remove(0),
        Estimator::Bigjump => {
            let setup = BigJumpSetup::new(&v.model, c.split_fraction * u)?;
            bigjump_target(&v.model, target, c.paths, &rule, c.seed, &setup, exec)
        }
    })
}

/// One `u` of the `simulate` command.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateRow {
    pub u: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub truncated_paths: u64,
    pub mean_hit_time: f64,
}

pub fn run_simulate(v: &Validated, exec: Execution) -> Result<Vec<RuinEstimate>> {
    v.config
        .u
        .iter()
        .map(|&u| estimate_at(v, &cone_target(&v.theta, v.config.delta, u)?, u, exec))
        .collect()
}

pub fn simulate_rows(est: &[RuinEstimate]) -> Vec<SimulateRow> {
    est.iter()
        .map(|e| SimulateRow {
            u: e.u,
            estimate: e.hit_probability,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            truncated_paths: e.truncated_paths,
            mean_hit_time: e.mean_hit_time,
        })
        .collect()
}

/// One point of the ratio experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub u: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub asymptotic: f64,
    pub ratio: Option<f64>,
    pub ratio_low: Option<f64>,
    pub ratio_high: Option<f64>,
    pub n_paths: u64,
    pub hits: u64,
    pub truncated_paths: u64,
    pub capped_paths: u64,
    pub mean_hit_time: f64,
    /// Zero hits or a vanishing asymptotic value; excluded from the trend.
    pub flagged: bool,
    pub cone_hits: Option<u64>,
    pub halfspace_hits: Option<u64>,
    pub halfspace_over_cone: Option<f64>,
}

impl RatioRow {
    pub fn ratio_half_width(&self) -> Option<f64> {
        Some(0.5 * (self.ratio_high? - self.ratio_low?))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioExperiment {
    pub rows: Vec<RatioRow>,
    /// `|ratio − 1|` nonincreasing over the top half of the usable rows, up
    /// to the sum of neighbouring CI half-widths.
    pub trend: Verdict,
    pub final_ratio: Option<f64>,
}

pub fn ratio_trend(rows: &[RatioRow]) -> Verdict {
    let usable: Vec<&RatioRow> = rows.iter().filter(|r| !r.flagged).collect();
    if usable.len() < 2 {
        return Verdict::Inconclusive;
    }
    let top = &usable[usable.len() / 2..];
    if top.len() < 2 {
        return Verdict::Inconclusive;
    }
    let ok = top.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        let (ra, rb) = (a.ratio.unwrap(), b.ratio.unwrap());
        (rb - 1.0).abs() <= (ra - 1.0).abs() + a.ratio_half_width().unwrap_or(0.0) + b.ratio_half_width().unwrap_or(0.0)
    });
    if ok {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    }
}

pub fn run_ratio_experiment(v: &Validated, exec: Execution) -> Result<RatioExperiment> {
    let c = &v.config;
    let mut rows = Vec::with_capacity(c.u.len());
    for &u in &c.u {
        let cone = cone_target(&v.theta, c.delta, u)?;
        let rule = v.rule(u)?;
        let paired = if c.paired_halfspace || c.estimator == Estimator::Crude {
            let targets = [cone.clone(), Target::halfspace(u)?];
            Some(crude_estimates(&v.model, &targets, c.paths, &rule, c.seed, exec))
        } else {
            None
        };
        let est = match (&paired, c.estimator) {
            (Some(p), Estimator::Crude) => p[0].clone(),
            _ => estimate_at(v, &cone, u, exec)?,
        };
        let asy = asymptotic_ruin(v.model.radial(), v.model.c(), u)?.value;
        let flagged = est.hits == 0 || !(asy > 0.0);
        let div = |x: f64| if asy > 0.0 { Some(x / asy) } else { None };
        let (cone_hits, halfspace_hits, halfspace_over_cone) = match (&paired, c.paired_halfspace) {
            (Some(p), true) => {
                let (hc, hh) = (p[0].hits, p[1].hits);
                (Some(hc), Some(hh), if hc > 0 { Some(hh as f64 / hc as f64) } else { None })
            }
            _ => (None, None, None),
        };
        rows.push(RatioRow {
            u,
            estimate: est.hit_probability,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            asymptotic: asy,
            ratio: div(est.hit_probability),
            ratio_low: div(est.ci_low),
            ratio_high: div(est.ci_high),
            n_paths: est.n_paths,
            hits: est.hits,
            truncated_paths: est.truncated_paths,
            capped_paths: est.capped_paths,
            mean_hit_time: est.mean_hit_time,
            flagged,
            cone_hits,
            halfspace_hits,
            halfspace_over_cone,
        });
        log::info!("u = {u}: estimate {:.4e}, asymptotic {asy:.4e}", est.hit_probability);
    }
    let trend = ratio_trend(&rows);
    let final_ratio = rows.last().and_then(|r| r.ratio);
    Ok(RatioExperiment { rows, trend, final_ratio })
}

/// One point of the two-cone sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoConeRow {
    pub u: f64,
    pub p_a: f64,
    pub p_a_low: f64,
    pub p_a_high: f64,
    pub p_b: f64,
    pub p_b_low: f64,
    pub p_b_high: f64,
    pub p_both: f64,
    pub p_both_low: f64,
    pub p_both_high: f64,
    pub p_union: f64,
    pub hits_a: u64,
    pub hits_b: u64,
    pub hits_both: u64,
    pub hits_union: u64,
    pub asymptotic: f64,
    pub p_a_normalized: f64,
    pub p_b_normalized: f64,
    pub p_both_normalized: f64,
    pub truncated_paths: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoConeExperiment {
    pub rows: Vec<TwoConeRow>,
    pub distance: f64,
    /// Normalized `p_both` strictly decreasing along the grid (ties allowed
    /// only at zero).
    pub trend: Verdict,
}

pub fn run_two_cone(v: &Validated, exec: Execution) -> Result<TwoConeExperiment> {
    let c = &v.config;
    let theta_b = v.theta_b.as_ref().ok_or_else(|| Error::Validation(vec!["theta_b: required for the two-cone experiment".into()]))?;
    let mut rows = Vec::new();
    let mut distance = 0.0;
    for &u in &c.u {
        let rule = v.rule(u)?;
        let t = two_cone_mc(&v.model, &v.theta, theta_b, c.delta, u, c.paths, &rule, c.seed, exec)?;
        distance = t.distance;
        let asy = asymptotic_ruin(v.model.radial(), v.model.c(), u)?.value;
        rows.push(TwoConeRow {
            u,
            p_a: t.p_a.hit_probability,
            p_a_low: t.p_a.ci_low,
            p_a_high: t.p_a.ci_high,
            p_b: t.p_b.hit_probability,
            p_b_low: t.p_b.ci_low,
            p_b_high: t.p_b.ci_high,
            p_both: t.p_both.hit_probability,
            p_both_low: t.p_both.ci_low,
            p_both_high: t.p_both.ci_high,
            p_union: t.p_union.hit_probability,
            hits_a: t.p_a.hits,
            hits_b: t.p_b.hits,
            hits_both: t.p_both.hits,
            hits_union: t.p_union.hits,
            asymptotic: asy,
            p_a_normalized: t.p_a.hit_probability / asy,
            p_b_normalized: t.p_b.hit_probability / asy,
            p_both_normalized: t.p_both.hit_probability / asy,
            truncated_paths: t.p_union.truncated_paths,
        });
    }
    let trend = if rows.len() < 2 {
        Verdict::Inconclusive
    } else if rows
        .windows(2)
        .all(|w| w[1].p_both_normalized < w[0].p_both_normalized || (w[1].p_both == 0.0 && w[0].p_both == 0.0))
    {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    };
    Ok(TwoConeExperiment { rows, distance, trend })
}

/// Knobs of the assumption suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub grid_points: usize,
    pub gammas: Vec<f64>,
    pub a3_eps: f64,
    pub a3_draws: u64,
    pub a3_points: usize,
    /// A3 passes when the last conditional probability reaches this.
    pub a3_final_min: f64,
    /// Deepest survival level of the A3 grid.
    pub a3_tail: f64,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            grid_points: 12,
            gammas: vec![2.0, 4.0],
            a3_eps: 0.1,
            a3_draws: 100_000,
            a3_points: 8,
            a3_final_min: 0.9,
            a3_tail: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionBundle {
    pub model: ModelSpec,
    pub options: SuiteOptions,
    pub verdicts: Vec<(String, Verdict)>,
    pub reports: Vec<DiagnosticReport>,
}

impl AssumptionBundle {
    pub fn verdict(&self, assumption: &str) -> Option<Verdict> {
        self.verdicts.iter().find(|(a, _)| a == assumption).map(|(_, v)| *v)
    }
}

fn inconclusive(assumption: &str, note: String) -> DiagnosticReport {
    let mut r = DiagnosticReport::new(assumption, Verdict::Inconclusive);
    r.notes.push(note);
    r
}

fn check_a3(model: &IncrementModel, opts: &SuiteOptions) -> Result<DiagnosticReport> {
    let law = model.radial();
    let lo = law.inverse_survival(0.5).max(law.lower_endpoint()).max(1e-6);
    let hi = law.inverse_log_survival(opts.a3_tail.ln());
    let grid = log_grid(lo, hi.max(lo * 2.0), opts.a3_points);
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for &h in &grid {
        let p = conditional_angle_prob(model, opts.a3_eps, h, opts.a3_draws, opts.seed)?;
        values.push(p.estimate);
        rows.push(DiagRow { series: format!("eps={}", opts.a3_eps), point: h, ratio: Some(p.estimate), tolerance: opts.a3_final_min });
    }
    // common random numbers make the sequence monotone draw by draw
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    let last = *values.last().unwrap_or(&0.0);
    let verdict = if monotone && last >= opts.a3_final_min { Verdict::Consistent } else { Verdict::Inconsistent };
    let mut rep = DiagnosticReport::new("A3", verdict);
    rep.rows = rows;
    rep.tolerances = vec![("final_min".into(), opts.a3_final_min), ("eps".into(), opts.a3_eps)];
    rep.notes.push(format!("{} draws per point, seed {}", opts.a3_draws, opts.seed));
    Ok(rep)
}

fn a4_report(drift: &DriftCertificate) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("A4", if drift.certified { Verdict::Consistent } else { Verdict::Inconsistent });
    rep.rows = drift
        .c
        .iter()
        .zip(&drift.radius)
        .enumerate()
        .map(|(k, (&c, &r))| DiagRow { series: "c".into(), point: k as f64, ratio: Some(c), tolerance: r })
        .collect();
    rep.notes.push(format!("norm {:?}, method {:?}", drift.norm, drift.method));
    if let Some(mc) = &drift.mc_check {
        rep.notes.push(format!("Monte Carlo check over {} draws: {:?}, agrees = {}", mc.draws, mc.estimate, mc.agrees));
    }
    rep
}

/// A1–A6 for one model. Failures of individual checks become inconclusive
/// reports.
pub fn run_assumption_suite(spec: &ModelSpec, opts: &SuiteOptions, exec: Execution) -> AssumptionBundle {
    let law: RadialLaw = spec.radial;
    let grid = default_grid(&law, opts.grid_points);
    let mut reports = Vec::new();
    reports.push(check_a1(&law, &grid).unwrap_or_else(|e| inconclusive("A1", e.to_string())));
    reports.push(check_a2(&law, &opts.gammas, &grid).unwrap_or_else(|e| inconclusive("A2", e.to_string())));
    match AngularMixture::from_caps(&spec.core, spec.off_direction.clone(), spec.weight) {
        Err(e) => {
            for a in ["A3", "A4", "A5", "A6"] {
                reports.push(inconclusive(a, e.to_string()));
            }
        }
        Ok(mix) => match IncrementModel::uncertified(law, mix.clone()) {
            Ok(model) => {
                reports.push(check_a3(&model, opts).unwrap_or_else(|e| inconclusive("A3", e.to_string())));
                let mut drift = model.drift().clone();
                drift.mc_check = Some(model.drift_mc(DRIFT_CHECK_DRAWS, opts.seed, exec));
                reports.push(a4_report(&drift));
                reports.push(check_a5(&model));
                reports.push(check_a6(&model, &grid).unwrap_or_else(|e| inconclusive("A6", e.to_string())));
            }
            Err(e) => {
                // infinite mean: no drift, but A3 and the A5 integral do not need one
                let unit = vec![1.0; mix.dim()];
                let probe = IncrementModel::with_drift(law, mix, &unit);
                match &probe {
                    Ok(m) => reports.push(check_a3(m, opts).unwrap_or_else(|e| inconclusive("A3", e.to_string()))),
                    Err(e) => reports.push(inconclusive("A3", e.to_string())),
                }
                let mut a4 = DiagnosticReport::new("A4", Verdict::Inconsistent);
                a4.notes.push(e.to_string());
                reports.push(a4);
                match &probe {
                    Ok(m) => {
                        let mut a5 = check_a5(m);
                        a5.notes.push("evaluated with unit drift norm; the verdict does not depend on it".into());
                        reports.push(a5);
                    }
                    Err(e) => reports.push(inconclusive("A5", e.to_string())),
                }
                reports.push(inconclusive("A6", e.to_string()));
            }
        },
    }
    AssumptionBundle {
        model: spec.clone(),
        options: opts.clone(),
        verdicts: reports.iter().map(|r| (r.assumption.clone(), r.verdict)).collect(),
        reports,
    }
}

/// One CSV per assumption plus `verdicts.json`.
pub fn write_assumption_bundle(dir: &Path, bundle: &AssumptionBundle) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io)?;
    for r in &bundle.reports {
        let f = std::fs::File::create(dir.join(format!("{}.csv", r.assumption.to_lowercase()))).map_err(io)?;
        r.write_csv(f)?;
    }
    write_json(&dir.join("verdicts.json"), bundle)
}

pub fn write_ratio_outputs(dir: &Path, v: &Validated, exp: &RatioExperiment) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io)?;
    write_csv(&dir.join("ratio.csv"), &exp.rows)?;
    #[derive(Serialize)]
    struct Summary {
        trend: Verdict,
        final_ratio: Option<f64>,
    }
    write_json(&dir.join("ratio_summary.json"), &Summary { trend: exp.trend, final_ratio: exp.final_ratio })?;
    write_json(&dir.join("manifest.json"), &Manifest::new(v, "experiment ratio", &["ratio.csv", "ratio_summary.json"])?)
}

pub fn write_two_cone_outputs(dir: &Path, v: &Validated, exp: &TwoConeExperiment) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io)?;
    write_csv(&dir.join("two_cone.csv"), &exp.rows)?;
    #[derive(Serialize)]
    struct Summary {
        trend: Verdict,
        distance: f64,
    }
    write_json(&dir.join("two_cone_summary.json"), &Summary { trend: exp.trend, distance: exp.distance })?;
    write_json(&dir.join("manifest.json"), &Manifest::new(v, "experiment two-cone", &["two_cone.csv", "two_cone_summary.json"])?)
}

pub fn write_simulate_outputs(dir: &Path, v: &Validated, est: &[RuinEstimate]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io)?;
    write_csv(&dir.join("simulate.csv"), &simulate_rows(est))?;
    write_json(&dir.join("manifest.json"), &Manifest::new(v, "simulate", &["simulate.csv"])?)
}
