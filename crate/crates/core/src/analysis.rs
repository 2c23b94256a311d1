//! Simultaneity classification, quenching-rate fits and the asymptotic
//! relations between the two components near quenching.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{QuenchReport, QuenchTime, Trajectory, Verdict};
use crate::model::{Component, ModelParams};

/// Default lower bound for the terminal minimum of a component that does not
/// quench.
pub const DELTA_CLASS: f64 = 0.05;

/// Spread (max/min ratio) below which a relation counts as bounded above and
/// below.
pub const SPREAD_LIMIT: f64 = 10.0;

pub const MIN_FIT_SAMPLES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Simultaneity {
    Simultaneous,
    OnlyU,
    OnlyV,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimultaneityVerdict {
    pub kind: Simultaneity,
    pub terminal_min_u: f64,
    pub terminal_min_v: f64,
    pub quench_floor: f64,
    pub delta_class: f64,
}

/// Classifies a quenching report by its terminal minima. Minima in the dead
/// band `[quench_floor, delta_class)` give `Indeterminate`.
pub fn classify_simultaneity(report: &QuenchReport, delta_class: f64) -> Result<SimultaneityVerdict> {
    if report.verdict != Verdict::Quench {
        return Err(Error::Logic("simultaneity is only defined for quenching runs".into()));
    }
    if !(delta_class > report.quench_floor) {
        return Err(Error::config(format!(
            "delta_class ({delta_class}) must exceed the quench floor ({})",
            report.quench_floor
        )));
    }
    let (mu, mv, eq) = (report.terminal_min_u, report.terminal_min_v, report.quench_floor);
    let kind = match (mu < eq, mv < eq) {
        (true, true) => Simultaneity::Simultaneous,
        (true, false) if mv >= delta_class => Simultaneity::OnlyU,
        (false, true) if mu >= delta_class => Simultaneity::OnlyV,
        _ => Simultaneity::Indeterminate,
    };
    Ok(SimultaneityVerdict { kind, terminal_min_u: mu, terminal_min_v: mv, quench_floor: eq, delta_class })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `log m = e log(T - t) + c`
    PowerLaw,
    /// `log m = e log(T - t) + l log|log(T - t)| + c`
    LogCorrected,
}

/// Admissible range for `T - t_end`, with `t_end` the last sample time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRange {
    pub lo: f64,
    pub hi: f64,
}

impl GapRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::config(format!("gap range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
        }
        Ok(GapRange { lo, hi })
    }
}

impl From<&QuenchTime> for GapRange {
    /// Positive part of the quenching-time bracket, down to twelve decades
    /// below its upper end.
    fn from(q: &QuenchTime) -> Self {
        let hi = q.gap_max().max(f64::MIN_POSITIVE);
        GapRange { lo: hi * 1e-12, hi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Window in minimum-value space; defaults to `[10 eps_q, 0.1 m(0)]`.
    pub window: Option<(f64, f64)>,
    pub min_samples: usize,
    /// Refine `T` inside the gap range by maximizing r².
    pub refine: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { window: None, min_samples: MIN_FIT_SAMPLES, refine: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub component: Component,
    pub model: RateModel,
    pub exponent: f64,
    /// Zero for the pure power law.
    pub log_exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples_used: usize,
    /// Refined `T - t_end`.
    pub gap: f64,
    pub t_refined: f64,
}

struct Lsq {
    coef: Vec<f64>,
    r2: f64,
}

fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Option<Lsq> {
    let n = y.len();
    let k = columns.len() + 1;
    if n <= k {
        return None;
    }
    let x = DMatrix::from_fn(n, k, |i, j| if j + 1 == k { 1.0 } else { columns[j][i] });
    let b = DVector::from_column_slice(y);
    let coef = x.clone().svd(true, true).solve(&b, 1e-13).ok()?;
    let fitted = &x * &coef;
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    coef.iter().all(|c| c.is_finite()).then(|| Lsq { coef: coef.iter().copied().collect(), r2 })
}

/// Maximizes `f` on `[a, b]` by golden-section search.
fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn fit_at(s: &[f64], logm: &[f64], gap: f64, model: RateModel) -> Option<Lsq> {
    let x: Vec<f64> = s.iter().map(|si| (gap + si).ln()).collect();
    match model {
        RateModel::PowerLaw => least_squares(&[x], logm),
        RateModel::LogCorrected => {
            let lx: Vec<f64> = x.iter().map(|v| v.abs().ln()).collect();
            least_squares(&[x, lx], logm)
        }
    }
}

/// Fits the quenching rate of `component` along its min-track. `T` is
/// searched within `gaps` (relative to the last sample) by golden section on
/// `log(T - t_end)`.
pub fn fit_rate(
    traj: &Trajectory,
    component: Component,
    gaps: GapRange,
    model: RateModel,
    opts: &FitOptions,
) -> Result<RateFit> {
    GapRange::new(gaps.lo, gaps.hi)?;
    let track = traj.min_track(component);
    let window = opts.window.unwrap_or((10.0 * traj.quench_floor, 0.1 * track[0]));
    if !(window.0 < window.1) {
        return Err(Error::InsufficientData(format!("empty fit window {window:?}")));
    }
    let mut s = Vec::new();
    let mut logm = Vec::new();
    for (i, &m) in track.iter().enumerate() {
        if m >= window.0 && m <= window.1 {
            let si = traj.time_before_end(i);
            // The log-corrected model needs |log(T - t)| > 1.
            if model == RateModel::LogCorrected && (gaps.hi + si) >= (-1f64).exp() {
                continue;
            }
            s.push(si);
            logm.push(m.ln());
        }
    }
    if s.len() < opts.min_samples {
        return Err(Error::InsufficientData(format!(
            "{} samples in window [{:e}, {:e}], need {}",
            s.len(),
            window.0,
            window.1,
            opts.min_samples
        )));
    }
    let score = |lg: f64| fit_at(&s, &logm, lg.exp(), model).map_or(-1.0, |f| f.r2);
    let gap = if opts.refine && gaps.hi > gaps.lo {
        golden_max(score, gaps.lo.ln(), gaps.hi.ln(), 80).exp()
    } else {
        gaps.hi
    };
    let fit =
        fit_at(&s, &logm, gap, model).ok_or_else(|| Error::InsufficientData("degenerate design matrix".into()))?;
    let (exponent, log_exponent, intercept) = match model {
        RateModel::PowerLaw => (fit.coef[0], 0.0, fit.coef[1]),
        RateModel::LogCorrected => (fit.coef[0], fit.coef[1], fit.coef[2]),
    };
    let end = traj.end_time();
    Ok(RateFit {
        component,
        model,
        exponent,
        log_exponent,
        intercept,
        r2: fit.r2,
        window,
        samples_used: s.len(),
        gap,
        t_refined: end.hi + (end.lo + gap),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationCase {
    /// `u^(1-q+alpha) ~ v^(1-p+beta)`
    Power,
    /// `-log u ~ v^(1-p+beta)`
    LogU,
    /// `u^(1-q+alpha) ~ -log v`
    LogV,
    /// `u^mu ~ v^lambda`
    Balanced,
}

/// Tolerance for deciding that an exponent gap equals one.
pub const GAP_EPS: f64 = 1e-9;

fn relation_case(params: &ModelParams) -> Result<RelationCase> {
    let (gv, gu) = (params.gap_v(), params.gap_u());
    let one_v = (gv - 1.0).abs() <= GAP_EPS;
    let one_u = (gu - 1.0).abs() <= GAP_EPS;
    if gv < 1.0 - GAP_EPS || gu < 1.0 - GAP_EPS {
        return Err(Error::Regime(format!("relation requires p - beta >= 1 and q - alpha >= 1, got {gv} and {gu}")));
    }
    Ok(match (one_v, one_u) {
        (true, true) => RelationCase::Balanced,
        (false, true) => RelationCase::LogU,
        (true, false) => RelationCase::LogV,
        (false, false) => RelationCase::Power,
    })
}

fn relation_ratio(case: RelationCase, u: f64, v: f64, params: &ModelParams) -> f64 {
    match case {
        RelationCase::Power => u.powf(1.0 - params.gap_u()) / v.powf(1.0 - params.gap_v()),
        RelationCase::LogU => -u.ln() / v.powf(1.0 - params.gap_v()),
        RelationCase::LogV => u.powf(1.0 - params.gap_u()) / -v.ln(),
        RelationCase::Balanced => u.powf(params.mu) / v.powf(params.lambda),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub case: RelationCase,
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `max ratio / min ratio`.
    pub spread: f64,
    pub bounded: bool,
    pub spread_limit: f64,
}

impl RelationReport {
    /// CSV with columns `t,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,ratio\n");
        for (t, r) in self.times.iter().zip(&self.ratios) {
            s.push_str(&format!("{t:.17e},{r:.17e}\n"));
        }
        s
    }
}

/// Evaluates the applicable component relation at `(x_u(t), t)` for the
/// samples whose `u` minimum lies in `window` (default `(0, 0.1 m_u(0)]`).
pub fn check_asymptotic_relation(
    traj: &Trajectory,
    params: &ModelParams,
    window: Option<(f64, f64)>,
) -> Result<RelationReport> {
    let case = relation_case(params)?;
    let (lo, hi) = window.unwrap_or((0.0, 0.1 * traj.samples[0].m_u));
    let mut times = Vec::new();
    let mut ratios = Vec::new();
    for s in &traj.samples {
        if s.m_u > lo && s.m_u <= hi {
            let r = relation_ratio(case, s.m_u, s.v_at_xu, params);
            if r.is_finite() && r > 0.0 {
                times.push(s.time());
                ratios.push(r);
            }
        }
    }
    if ratios.len() < 2 {
        return Err(Error::InsufficientData(format!("{} relation samples in window", ratios.len())));
    }
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max / min;
    Ok(RelationReport { case, times, ratios, spread, bounded: spread < SPREAD_LIMIT, spread_limit: SPREAD_LIMIT })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgminCoincidence {
    /// The argmins agree on a nonempty final run of samples.
    pub coincide: bool,
    /// Start of the final coinciding run.
    pub since: Option<f64>,
    pub first_divergence: Option<f64>,
    pub warning: Option<String>,
}

pub fn check_argmin_coincidence(traj: &Trajectory) -> ArgminCoincidence {
    let same: Vec<bool> = traj.samples.iter().map(|s| s.x_u == s.x_v).collect();
    let first_divergence = same.iter().position(|&b| !b).map(|i| traj.samples[i].time());
    let start = same.iter().rposition(|&b| !b).map_or(0, |i| i + 1);
    let coincide = start < same.len();
    ArgminCoincidence {
        coincide,
        since: coincide.then(|| traj.samples[start].time()),
        first_divergence,
        warning: (traj.len() == 1).then(|| "single sample: coincidence holds vacuously".into()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateCase {
    /// Only `u` quenches.
    OnlyU,
    /// Only `v` quenches.
    OnlyV,
    /// Both gaps above one.
    Power,
    /// `p - beta > 1 = q - alpha`: `u` carries a log factor, `v` decays
    /// logarithmically.
    LogU,
    /// `q - alpha > 1 = p - beta`.
    LogV,
    /// Both gaps equal to one.
    Balanced,
    /// Both gaps below one with coinciding argmins.
    Coincident,
}

/// `m ~ (T - t)^exponent |log(T - t)|^log_exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Law {
    pub exponent: f64,
    pub log_exponent: f64,
}

impl Law {
    fn power(exponent: f64) -> Self {
        Law { exponent, log_exponent: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedRates {
    pub case: RateCase,
    pub u: Option<Law>,
    pub v: Option<Law>,
}

/// Exponent `kappa` of the incomplete-Gamma profile in the log cases.
pub fn log_case_kappa(params: &ModelParams) -> Result<f64> {
    match relation_case(params)? {
        RelationCase::LogU => Ok(params.p / (params.gap_v() - 1.0)),
        RelationCase::LogV => Ok(params.q / (params.gap_u() - 1.0)),
        _ => Err(Error::Regime("incomplete-Gamma profile applies only when exactly one gap equals one".into())),
    }
}

/// `Gamma(1 + kappa, -ln s)`, the profile of `m^(1+alpha)` (or `m^(1+beta)`)
/// at `s = T - t` in the log cases.
pub fn incomplete_gamma_profile(kappa: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("T - t must lie in (0, 1), got {s}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    Ok(statrs::function::gamma::gamma_ui(1.0 + kappa, -s.ln()))
}

/// Theoretical rate laws for the classified behaviour. `argmins_coincide`
/// gates the case where both gaps are below one.
pub fn predicted_rates(params: &ModelParams, kind: Simultaneity, argmins_coincide: bool) -> Result<PredictedRates> {
    let (gv, gu) = (params.gap_v(), params.gap_u());
    match kind {
        Simultaneity::OnlyU => {
            return Ok(PredictedRates {
                case: RateCase::OnlyU,
                u: Some(Law::power(1.0 / (1.0 + params.alpha))),
                v: None,
            })
        }
        Simultaneity::OnlyV => {
            return Ok(PredictedRates {
                case: RateCase::OnlyV,
                u: None,
                v: Some(Law::power(1.0 / (1.0 + params.beta))),
            })
        }
        Simultaneity::Indeterminate => return Err(Error::Regime("no rate law for an indeterminate verdict".into())),
        Simultaneity::Simultaneous => {}
    }
    let d = params.p * params.q - (1.0 + params.alpha) * (1.0 + params.beta);
    let power =
        |case| PredictedRates { case, u: Some(Law::power((gv - 1.0) / d)), v: Some(Law::power((gu - 1.0) / d)) };
    if gv < 1.0 - GAP_EPS && gu < 1.0 - GAP_EPS {
        if !argmins_coincide {
            return Err(Error::Regime("both gaps below one and the argmins do not coincide".into()));
        }
        return Ok(power(RateCase::Coincident));
    }
    Ok(match relation_case(params)? {
        RelationCase::Power => power(RateCase::Power),
        RelationCase::LogU => PredictedRates {
            case: RateCase::LogU,
            u: Some(Law {
                exponent: 1.0 / (1.0 + params.alpha),
                log_exponent: params.p / ((gv - 1.0) * (1.0 + params.alpha)),
            }),
            v: Some(Law { exponent: 0.0, log_exponent: 1.0 / (1.0 - gv) }),
        },
        RelationCase::LogV => PredictedRates {
            case: RateCase::LogV,
            u: Some(Law { exponent: 0.0, log_exponent: 1.0 / (1.0 - gu) }),
            v: Some(Law {
                exponent: 1.0 / (1.0 + params.beta),
                log_exponent: params.q / ((gu - 1.0) * (1.0 + params.beta)),
            }),
        },
        RelationCase::Balanced => {
            let den = params.lambda * params.q + params.mu * params.p;
            PredictedRates {
                case: RateCase::Balanced,
                u: Some(Law::power(params.lambda / den)),
                v: Some(Law::power(params.mu / den)),
            }
        }
    })
}
