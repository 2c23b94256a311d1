//! Shooting over the data split `delta` and general parameter scans.
//!
//! Every sample is an independent integration; rayon runs them in parallel
//! and the indexed collect keeps the output order fixed, so tables do not
//! depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{classify_simultaneity, Simultaneity, DELTA_CLASS};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorControls, QuenchReport, Verdict};
use crate::kernel::NonlocalOperator;
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootingLabel {
    /// Only `v` quenches.
    APlus,
    /// Only `u` quenches.
    AMinus,
    /// Both quench.
    A,
    Indeterminate,
}

impl ShootingLabel {
    fn from_kind(kind: Simultaneity) -> Self {
        match kind {
            Simultaneity::OnlyV => ShootingLabel::APlus,
            Simultaneity::OnlyU => ShootingLabel::AMinus,
            Simultaneity::Simultaneous => ShootingLabel::A,
            Simultaneity::Indeterminate => ShootingLabel::Indeterminate,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShootingLabel::APlus => "a_plus",
            ShootingLabel::AMinus => "a_minus",
            ShootingLabel::A => "a",
            ShootingLabel::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub deltas: Vec<f64>,
    pub params: ModelParams,
    pub controls: IntegratorControls,
    pub bisect_width: f64,
    pub delta_class: f64,
}

impl ShootingConfig {
    /// Checks the smallness condition on the base data and the regime
    /// `p - beta < 1`, `q - alpha < 1`.
    pub fn new(
        u0: Vec<f64>,
        v0: Vec<f64>,
        deltas: Vec<f64>,
        params: ModelParams,
        controls: IntegratorControls,
    ) -> Result<Self> {
        let c = ShootingConfig { u0, v0, deltas, params, controls, bisect_width: 1e-3, delta_class: DELTA_CLASS };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        p.validate_strict()?;
        self.controls.validate()?;
        if p.gap_v() >= 1.0 || p.gap_u() >= 1.0 {
            return Err(Error::config(format!(
                "shooting requires p - beta < 1 and q - alpha < 1, got {} and {}",
                p.gap_v(),
                p.gap_u()
            )));
        }
        if self.u0.is_empty() || self.u0.len() != self.v0.len() {
            return Err(Error::config("u0 and v0 must be nonempty and of equal length"));
        }
        if self.u0.iter().chain(&self.v0).any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::config("initial data must be positive"));
        }
        let (su, sv) = (sup(&self.u0), sup(&self.v0));
        let (bu, bv) = ((p.mu / 2.0).powf(1.0 / p.q).min(1.0), (p.lambda / 2.0).powf(1.0 / p.p).min(1.0));
        if su > bu || sv > bv {
            return Err(Error::config(format!(
                "initial data violate the smallness condition sup u0 <= min(1, (mu/2)^(1/q)) = {bu} \
                 and sup v0 <= min(1, (lambda/2)^(1/p)) = {bv} (got {su}, {sv})"
            )));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::config("every delta must lie in (0, 1)"));
        }
        if !(self.bisect_width > 0.0) {
            return Err(Error::config("bisect_width must be > 0"));
        }
        if !(self.delta_class > self.controls.quench_floor) {
            return Err(Error::config("delta_class must exceed the quench floor"));
        }
        Ok(())
    }

    /// Upper bound on `T_delta` from the sufficient quenching condition.
    pub fn t_bound(&self, delta: f64) -> f64 {
        let (a, b) = (self.params.alpha, self.params.beta);
        let mu = self.u0.iter().map(|&x| (delta * x).powf(1.0 + a) / (1.0 + a)).fold(f64::INFINITY, f64::min);
        let mv = self.v0.iter().map(|&x| ((1.0 - delta) * x).powf(1.0 + b) / (1.0 + b)).fold(f64::INFINITY, f64::min);
        mu.min(mv)
    }
}

fn sup(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingSample {
    pub delta: f64,
    pub label: ShootingLabel,
    pub t_quench: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_bound: f64,
    pub terminal_min_u: f64,
    pub terminal_min_v: f64,
}

/// Interval in `delta` across which the label changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBracket {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub label_lo: ShootingLabel,
    pub label_hi: ShootingLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub label: ShootingLabel,
    pub delta_lo: f64,
    pub delta_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    /// Grid samples in increasing `delta`.
    pub samples: Vec<ShootingSample>,
    pub brackets: Vec<LabelBracket>,
}

impl ShootingResult {
    pub fn has(&self, label: ShootingLabel) -> bool {
        self.samples.iter().any(|s| s.label == label)
    }

    /// Maximal runs of equal labels over the grid samples.
    pub fn label_intervals(&self) -> Vec<LabelInterval> {
        let mut out: Vec<LabelInterval> = Vec::new();
        for s in &self.samples {
            match out.last_mut() {
                Some(last) if last.label == s.label => last.delta_hi = s.delta,
                _ => out.push(LabelInterval { label: s.label, delta_lo: s.delta, delta_hi: s.delta }),
            }
        }
        out
    }

    /// CSV with columns `delta,label,t_quench,t_lo,t_hi,t_bound,min_u,min_v`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,label,t_quench,t_lo,t_hi,t_bound,min_u,min_v\n");
        for x in &self.samples {
            s.push_str(&format!(
                "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                x.delta,
                x.label.name(),
                x.t_quench,
                x.t_lo,
                x.t_hi,
                x.t_bound,
                x.terminal_min_u,
                x.terminal_min_v
            ));
        }
        s
    }
}

fn shoot_one(config: &ShootingConfig, op: &NonlocalOperator, delta: f64) -> Result<ShootingSample> {
    let u: Vec<f64> = config.u0.iter().map(|x| delta * x).collect();
    let v: Vec<f64> = config.v0.iter().map(|x| (1.0 - delta) * x).collect();
    let (_, report) = integrate(&u, &v, &config.params, op, &config.controls)?;
    if report.verdict != Verdict::Quench {
        return Err(Error::InvariantViolation(format!(
            "delta = {delta} did not quench by t = {}, although the data satisfy the quenching condition",
            report.final_time
        )));
    }
    let verdict = classify_simultaneity(&report, config.delta_class)?;
    let qt = report.quench_time.expect("quench report carries a time estimate");
    let (t_lo, t_hi) = qt.bracket();
    Ok(ShootingSample {
        delta,
        label: ShootingLabel::from_kind(verdict.kind),
        t_quench: qt.estimate(),
        t_lo,
        t_hi,
        t_bound: config.t_bound(delta),
        terminal_min_u: report.terminal_min_u,
        terminal_min_v: report.terminal_min_v,
    })
}

fn bisect(
    config: &ShootingConfig,
    op: &NonlocalOperator,
    lo: &ShootingSample,
    hi: &ShootingSample,
) -> Result<LabelBracket> {
    let (mut a, mut b) = (lo.delta, hi.delta);
    let (la, mut lb) = (lo.label, hi.label);
    while b - a > config.bisect_width {
        let mid = 0.5 * (a + b);
        let s = shoot_one(config, op, mid)?;
        if s.label == la {
            a = mid;
        } else {
            b = mid;
            lb = s.label;
        }
    }
    Ok(LabelBracket { delta_lo: a, delta_hi: b, label_lo: la, label_hi: lb })
}

/// Integrates `(delta u0, (1 - delta) v0)` for every `delta`, labels each run
/// and brackets every label change to `bisect_width`.
pub fn shooting_sweep(config: &ShootingConfig, op: &NonlocalOperator) -> Result<ShootingResult> {
    config.validate()?;
    if config.u0.len() != op.len() {
        return Err(Error::config("initial data length does not match the grid size"));
    }
    let mut deltas = config.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let samples: Vec<ShootingSample> = deltas.par_iter().map(|&d| shoot_one(config, op, d)).collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> =
        (1..samples.len()).filter(|&i| samples[i - 1].label != samples[i].label).map(|i| (i - 1, i)).collect();
    let brackets =
        pairs.par_iter().map(|&(i, j)| bisect(config, op, &samples[i], &samples[j])).collect::<Result<_>>()?;
    Ok(ShootingResult { samples, brackets })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// Max adjacent jump of `T_delta` on the full grid.
    pub max_jump_fine: f64,
    /// Same on the even-index subgrid (half resolution).
    pub max_jump_coarse: f64,
    pub shrinks: bool,
    /// Samples with `T_delta` above the bound by more than `tolerance`.
    pub bound_violations: Vec<f64>,
    pub tolerance: f64,
}

fn max_jump(t: &[f64]) -> f64 {
    t.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

pub const T_BOUND_TOLERANCE: f64 = 1e-3;

/// Compares the largest adjacent `T_delta` jump at full and half resolution.
pub fn check_t_delta_continuity(result: &ShootingResult) -> Result<ContinuityReport> {
    let n = result.samples.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("{n} delta samples, need at least 10")));
    }
    let t: Vec<f64> = result.samples.iter().map(|s| s.t_quench).collect();
    let coarse: Vec<f64> = t.iter().step_by(2).copied().collect();
    let (fine, coarse) = (max_jump(&t), max_jump(&coarse));
    Ok(ContinuityReport {
        max_jump_fine: fine,
        max_jump_coarse: coarse,
        shrinks: fine < coarse || (fine == 0.0 && coarse == 0.0),
        bound_violations: result
            .samples
            .iter()
            .filter(|s| s.t_quench > s.t_bound + T_BOUND_TOLERANCE)
            .map(|s| s.delta)
            .collect(),
        tolerance: T_BOUND_TOLERANCE,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Lambda,
    Mu,
    P,
    Q,
    Alpha,
    Beta,
}

impl ParamName {
    fn set(self, p: &mut ModelParams, x: f64) {
        match self {
            ParamName::Lambda => p.lambda = x,
            ParamName::Mu => p.mu = x,
            ParamName::P => p.p = x,
            ParamName::Q => p.q = x,
            ParamName::Alpha => p.alpha = x,
            ParamName::Beta => p.beta = x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanAxis {
    pub param: ParamName,
    pub values: Vec<f64>,
}

impl ScanAxis {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(param: ParamName, lo: f64, hi: f64, n: usize) -> Self {
        let values = match n {
            0 => vec![],
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        };
        ScanAxis { param, values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub index: usize,
    pub params: ModelParams,
    pub verdict: Option<Verdict>,
    pub simultaneity: Option<Simultaneity>,
    pub t_estimate: Option<f64>,
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    pub terminal_min_u: Option<f64>,
    pub terminal_min_v: Option<f64>,
    pub final_time: Option<f64>,
    pub error: Option<String>,
}

impl ScanRow {
    fn failed(index: usize, params: ModelParams, e: &Error) -> Self {
        ScanRow {
            index,
            params,
            verdict: None,
            simultaneity: None,
            t_estimate: None,
            t_lo: None,
            t_hi: None,
            terminal_min_u: None,
            terminal_min_v: None,
            final_time: None,
            error: Some(format!("{}: {e}", e.kind())),
        }
    }

    fn from_report(index: usize, params: ModelParams, r: &QuenchReport, delta_class: f64) -> Self {
        let simultaneity = classify_simultaneity(r, delta_class).ok().map(|v| v.kind);
        let qt = r.quench_time.as_ref();
        ScanRow {
            index,
            params,
            verdict: Some(r.verdict),
            simultaneity,
            t_estimate: qt.map(|q| q.estimate()),
            t_lo: qt.map(|q| q.bracket().0),
            t_hi: qt.map(|q| q.bracket().1),
            terminal_min_u: Some(r.terminal_min_u),
            terminal_min_v: Some(r.terminal_min_v),
            final_time: Some(r.final_time),
            error: None,
        }
    }
}

fn cell<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// CSV with one row per sample, all parameters included.
pub fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from(
        "index,lambda,mu,p,q,alpha,beta,verdict,simultaneity,t_estimate,t_lo,t_hi,min_u,min_v,final_time,error\n",
    );
    for r in rows {
        let p = &r.params;
        let verdict = r.verdict.map(|v| match v {
            Verdict::Quench => "quench",
            Verdict::NoQuenchWithinHorizon => "no_quench_within_horizon",
        });
        let sim = r.simultaneity.map(|k| match k {
            Simultaneity::Simultaneous => "simultaneous",
            Simultaneity::OnlyU => "only_u",
            Simultaneity::OnlyV => "only_v",
            Simultaneity::Indeterminate => "indeterminate",
        });
        let err = r.error.as_ref().map(|e| format!("\"{}\"", e.replace('"', "'")));
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.index,
            p.lambda,
            p.mu,
            p.p,
            p.q,
            p.alpha,
            p.beta,
            cell(verdict),
            cell(sim),
            cell(r.t_estimate),
            cell(r.t_lo),
            cell(r.t_hi),
            cell(r.terminal_min_u),
            cell(r.terminal_min_v),
            cell(r.final_time),
            cell(err)
        ));
    }
    s
}

/// Parameter points of the Cartesian product of `axes` over `base`, last
/// axis fastest.
pub fn scan_points(axes: &[ScanAxis], base: &ModelParams) -> Vec<ModelParams> {
    let mut points = vec![*base];
    for axis in axes {
        points = points
            .iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&x| {
                    let mut q = *p;
                    axis.param.set(&mut q, x);
                    q
                })
            })
            .collect();
    }
    points
}

/// Integrates from `(u0, v0)` at every scan point. Failures are recorded in
/// their row and never abort the scan.
pub fn parameter_scan(
    axes: &[ScanAxis],
    base: &ModelParams,
    u0: &[f64],
    v0: &[f64],
    op: &NonlocalOperator,
    controls: &IntegratorControls,
    delta_class: f64,
) -> Vec<ScanRow> {
    scan_points(axes, base)
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| match integrate(u0, v0, &p, op, controls) {
            Ok((_, r)) => ScanRow::from_report(i, p, &r, delta_class),
            Err(e) => ScanRow::failed(i, p, &e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{assemble_operator, build_kernel, Domain, Profile};

    fn op(n: usize) -> NonlocalOperator {
        let d = Domain::interval(-0.5, 0.5, n).unwrap();
        let k = build_kernel(Profile::Epanechnikov, 0.5, 1).unwrap();
        assemble_operator(&d, &k).unwrap()
    }

    fn shoot_params() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 1.0, 0.5, 0.5).unwrap()
    }

    #[test]
    fn smallness_condition_is_enforced() {
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.5, 0.2, 0.2).unwrap();
        let e = ShootingConfig::new(vec![0.4; 5], vec![0.4; 5], vec![0.5], p, IntegratorControls::default());
        let msg = e.unwrap_err().to_string();
        assert!(msg.contains("smallness condition"), "{msg}");
        let wide = ModelParams::new(1.0, 1.0, 2.0, 1.0, 0.5, 0.5).unwrap();
        let e = ShootingConfig::new(vec![0.4; 5], vec![0.4; 5], vec![0.5], wide, IntegratorControls::default());
        assert!(e.is_err());
        let e =
            ShootingConfig::new(vec![0.4; 5], vec![0.4; 5], vec![1.0], shoot_params(), IntegratorControls::default());
        assert!(e.is_err());
    }

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn t_bound_matches_closed_form() {
        let c =
            ShootingConfig::new(vec![0.4; 3], vec![0.3; 3], vec![0.5], shoot_params(), IntegratorControls::default())
                .unwrap();
        let d: f64 = 0.25;
        let want = ((d * 0.4).powf(1.5) / 1.5).min(((1.0 - d) * 0.3).powf(1.5) / 1.5);
        assert_eq!(c.t_bound(d), want);
    }

    #[test]
    fn extreme_deltas_are_labelled() {
        let n = 21;
        let controls = IntegratorControls { stop_floor: 1e-7, ..Default::default() };
        let c = ShootingConfig::new(vec![0.4; n], vec![0.4; n], vec![0.05, 0.95], shoot_params(), controls).unwrap();
        let r = shooting_sweep(&c, &op(n)).unwrap();
        assert_eq!(r.samples[0].label, ShootingLabel::AMinus);
        assert_eq!(r.samples[1].label, ShootingLabel::APlus);
        assert_eq!(r.brackets.len(), 1);
        let b = &r.brackets[0];
        assert!(b.delta_hi - b.delta_lo <= 1e-3);
        assert!(r.samples.iter().all(|s| s.t_quench <= s.t_bound + T_BOUND_TOLERANCE));
        assert_eq!(r.label_intervals().len(), 2);
    }

    #[test]
    fn continuity_needs_ten_samples() {
        let s = ShootingSample {
            delta: 0.5,
            label: ShootingLabel::A,
            t_quench: 0.1,
            t_lo: 0.1,
            t_hi: 0.1,
            t_bound: 0.2,
            terminal_min_u: 0.0,
            terminal_min_v: 0.0,
        };
        let r = ShootingResult { samples: vec![s.clone(); 3], brackets: vec![] };
        assert!(matches!(check_t_delta_continuity(&r), Err(Error::InsufficientData(_))));
        let r = ShootingResult { samples: vec![s; 12], brackets: vec![] };
        let c = check_t_delta_continuity(&r).unwrap();
        assert_eq!(c.max_jump_fine, 0.0);
        assert!(c.shrinks && c.bound_violations.is_empty());
    }

    #[test]
    fn scan_order_and_failures() {
        let n = 11;
        let base = unit();
        let axes = [
            ScanAxis { param: ParamName::P, values: vec![1.2, 0.0, 2.0] },
            ScanAxis::linspace(ParamName::Lambda, 0.5, 1.0, 2),
        ];
        let controls = IntegratorControls { t_max: 1.0, ..Default::default() };
        let rows = parameter_scan(&axes, &base, &vec![0.4; n], &vec![0.4; n], &op(n), &controls, DELTA_CLASS);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().map(|r| r.index).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        assert_eq!((rows[1].params.p, rows[1].params.lambda), (1.2, 1.0));
        assert!(rows[2].error.is_some() && rows[3].error.is_some());
        assert!(rows[0].verdict == Some(Verdict::Quench));
        let csv = scan_to_csv(&rows);
        assert_eq!(csv.lines().count(), 7);
        let empty = [ScanAxis { param: ParamName::Mu, values: vec![] }];
        assert!(parameter_scan(&empty, &base, &[0.4; 11], &[0.4; 11], &op(n), &controls, DELTA_CLASS).is_empty());
    }
}
