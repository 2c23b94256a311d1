//! Adaptive time stepping, quench detection and trajectory recording.

mod comparison;
mod monitor;
mod report;
mod time;
mod trajectory;

pub use comparison::{check_comparison, ComparisonReport, OrderingViolation, ORDERING_TOLERANCE};
pub use monitor::{monitor_key_inequality, KeyInequalityMonitor, GAP_SLACK};
pub use report::{estimate_quench_time, ComponentVerdict, QuenchReport, QuenchTime, Termination, Verdict, FIT_SAMPLES};
pub use time::Time;
pub use trajectory::{argmin, psi_gap_point, RecordMode, Sample, Trajectory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::NonlocalOperator;
use crate::model::{check_positive, rhs_into, Component, DerivedBounds, ModelParams, State, DEFAULT_FLOOR};

/// Slack on the upper bounds `M`, `N` when reporting bound preservation.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorControls {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub rtol: f64,
    pub atol: f64,
    /// `eps_q`: a minimum below this counts as quenched.
    pub quench_floor: f64,
    /// `eps_s`: integration stops once a minimum falls below this.
    pub stop_floor: f64,
    /// Stage values at or below this are singular and force a step rejection.
    pub positivity_floor: f64,
    pub t_max: f64,
    /// Record every `sample_stride`-th accepted step.
    pub sample_stride: usize,
    /// Also record whenever the smaller minimum has dropped by this factor
    /// since the last record (log-spaced sampling near quenching).
    pub min_drop_ratio: Option<f64>,
    pub record: RecordMode,
    /// Times that are hit exactly and always recorded.
    pub output_times: Vec<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        IntegratorControls {
            dt_init: 1e-3,
            dt_min: 1e-20,
            dt_max: 0.1,
            safety: 0.9,
            rtol: 1e-7,
            atol: 0.0,
            quench_floor: 1e-4,
            stop_floor: 1e-6,
            positivity_floor: DEFAULT_FLOOR,
            t_max: 100.0,
            sample_stride: 1,
            min_drop_ratio: None,
            record: RecordMode::Lean,
            output_times: Vec::new(),
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorControls {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("controls.{name} must be > 0, got {v}")))
            }
        };
        pos("dt_init", self.dt_init)?;
        pos("dt_min", self.dt_min)?;
        pos("dt_max", self.dt_max)?;
        pos("rtol", self.rtol)?;
        pos("quench_floor", self.quench_floor)?;
        pos("stop_floor", self.stop_floor)?;
        pos("positivity_floor", self.positivity_floor)?;
        pos("t_max", self.t_max)?;
        if !(self.dt_min < self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::config("controls need dt_min < dt_init <= dt_max"));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::config("controls.safety must lie in (0, 1)"));
        }
        if !(self.atol >= 0.0) {
            return Err(Error::config("controls.atol must be >= 0"));
        }
        if !(self.stop_floor < self.quench_floor) {
            return Err(Error::config("controls need stop_floor < quench_floor"));
        }
        if !(self.positivity_floor < self.stop_floor) {
            return Err(Error::config("controls need positivity_floor < stop_floor"));
        }
        if self.sample_stride == 0 {
            return Err(Error::config("controls.sample_stride must be >= 1"));
        }
        if let Some(r) = self.min_drop_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config("controls.min_drop_ratio must lie in (0, 1)"));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("controls.max_steps must be >= 1"));
        }
        if self.output_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::config("controls.output_times must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// State after an accepted step, handed to observers.
pub struct StepView<'a> {
    pub t: Time,
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub du: &'a [f64],
    pub dv: &'a [f64],
    pub steps: usize,
}

/// Largest step allowed by the singular absorption terms.
fn singular_guard(u: &[f64], v: &[f64], m: &ModelParams, safety: f64) -> f64 {
    let mut g = f64::INFINITY;
    for i in 0..u.len() {
        if m.lambda > 0.0 {
            g = g.min(u[i].powf(1.0 + m.alpha) * v[i].powf(m.p) / m.lambda);
        }
        if m.mu > 0.0 {
            g = g.min(v[i].powf(1.0 + m.beta) * u[i].powf(m.q) / m.mu);
        }
    }
    safety * g * (1.0 + m.alpha.min(m.beta))
}

fn all_above(x: &[f64], floor: f64) -> bool {
    x.iter().all(|&v| v > floor)
}

/// Stage evaluation; `Ok(false)` when the stage hit the positivity floor.
fn stage(
    u: &[f64],
    v: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
    floor: f64,
    du: &mut [f64],
    dv: &mut [f64],
) -> Result<bool> {
    if !(all_above(u, floor) && all_above(v, floor)) {
        return Ok(false);
    }
    match rhs_into(u, v, params, op, floor, du, dv) {
        Ok(()) => Ok(true),
        Err(Error::Singularity { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

pub fn integrate(
    u0: &[f64],
    v0: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
    controls: &IntegratorControls,
) -> Result<(Trajectory, QuenchReport)> {
    integrate_observed(u0, v0, params, op, controls, &mut |_| Flow::Continue)
}

/// Bogacki–Shampine 3(2) pair with FSAL, local error control and the
/// singular-term step guard.
pub fn integrate_observed(
    u0: &[f64],
    v0: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
    c: &IntegratorControls,
    observer: &mut dyn FnMut(&StepView) -> Flow,
) -> Result<(Trajectory, QuenchReport)> {
    c.validate()?;
    params.validate()?;
    let n = op.len();
    if u0.len() != n || v0.len() != n {
        return Err(Error::config(format!(
            "initial data length {} / {} does not match the grid size {n}",
            u0.len(),
            v0.len()
        )));
    }
    if check_positive(u0, v0, c.positivity_floor).is_err() {
        return Err(Error::Domain("initial data must be positive".into()));
    }

    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut k1u = vec![0.0; n];
    let mut k1v = vec![0.0; n];
    rhs_into(&u, &v, params, op, c.positivity_floor, &mut k1u, &mut k1v)?;
    let (mut k2u, mut k2v, mut k3u, mut k3v, mut k4u, mut k4v) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut su, mut sv, mut nu, mut nv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let mut targets: Vec<f64> = c.output_times.iter().copied().filter(|&t| t > 0.0 && t < c.t_max).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(c.t_max);
    let mut target_idx = 0;

    let bounds = DerivedBounds::from_data(u0, v0);
    let mut t = Time::ZERO;
    let mut dt = c.dt_init;
    let mut last_dt = 0.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut integration_error = 0.0;
    let mut max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut max_v = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut samples = Vec::new();
    let mut states = (c.record == RecordMode::Full).then(Vec::new);
    let first = Sample::from_state(t, &u, &v, &k1u, &k1v, params);
    let mut last_recorded_min = first.m_u.min(first.m_v);
    samples.push(first);
    if let Some(s) = states.as_mut() {
        s.push((u.clone(), v.clone()));
    }

    let termination;
    loop {
        if accepted >= c.max_steps {
            return Err(Error::numerical(
                format!("step limit {} reached at t = {}", c.max_steps, t.value()),
                Some(State { u, v, t: t.value() }),
            ));
        }
        let target = Time::new(targets[target_idx]);
        let to_target = target.diff(t);
        let mut h = dt.min(c.dt_max).min(singular_guard(&u, &v, params, c.safety));
        let hitting = h >= to_target;
        if hitting {
            h = to_target;
        }
        if h < c.dt_min && !hitting {
            let m = samples.last().map(|s: &Sample| s.m_u.min(s.m_v)).unwrap_or(1.0);
            let (_, mu_now) = argmin(&u);
            let (_, mv_now) = argmin(&v);
            if mu_now.min(mv_now).min(m) < c.quench_floor {
                termination = Termination::StepUnderflow;
                break;
            }
            return Err(Error::numerical(
                format!("step size underflow (dt = {h:e}) at t = {} without quenching", t.value()),
                Some(State { u, v, t: t.value() }),
            ));
        }

        // Stage 2.
        for i in 0..n {
            su[i] = u[i] + 0.5 * h * k1u[i];
            sv[i] = v[i] + 0.5 * h * k1v[i];
        }
        let mut ok = stage(&su, &sv, params, op, c.positivity_floor, &mut k2u, &mut k2v)?;
        if ok {
            for i in 0..n {
                su[i] = u[i] + 0.75 * h * k2u[i];
                sv[i] = v[i] + 0.75 * h * k2v[i];
            }
            ok = stage(&su, &sv, params, op, c.positivity_floor, &mut k3u, &mut k3v)?;
        }
        if ok {
            for i in 0..n {
                nu[i] = u[i] + h * (2.0 / 9.0 * k1u[i] + 1.0 / 3.0 * k2u[i] + 4.0 / 9.0 * k3u[i]);
                nv[i] = v[i] + h * (2.0 / 9.0 * k1v[i] + 1.0 / 3.0 * k2v[i] + 4.0 / 9.0 * k3v[i]);
            }
            if nu.iter().chain(&nv).any(|x| !x.is_finite()) {
                return Err(Error::numerical(
                    format!("non-finite state at t = {}", t.value()),
                    Some(State { u, v, t: t.value() }),
                ));
            }
            ok = stage(&nu, &nv, params, op, c.positivity_floor, &mut k4u, &mut k4v)?;
        }
        if !ok {
            rejected += 1;
            dt = 0.25 * h;
            continue;
        }

        let mut err_norm: f64 = 0.0;
        let err = |k1: f64, k2: f64, k3: f64, k4: f64| {
            h * (-5.0 / 72.0 * k1 + 1.0 / 12.0 * k2 + 1.0 / 9.0 * k3 - 1.0 / 8.0 * k4)
        };
        for i in 0..n {
            let eu = err(k1u[i], k2u[i], k3u[i], k4u[i]);
            let ev = err(k1v[i], k2v[i], k3v[i], k4v[i]);
            let scale_u = c.atol + c.rtol * u[i].abs().max(nu[i].abs());
            let scale_v = c.atol + c.rtol * v[i].abs().max(nv[i].abs());
            err_norm = err_norm.max(eu.abs() / scale_u).max(ev.abs() / scale_v);
        }
        if err_norm.is_nan() {
            return Err(Error::numerical(
                format!("non-finite error estimate at t = {}", t.value()),
                Some(State { u, v, t: t.value() }),
            ));
        }
        if err_norm > 1.0 {
            rejected += 1;
            dt = h * (0.9 * err_norm.powf(-1.0 / 3.0)).max(0.2);
            continue;
        }

        // Accept.
        let (xu, mu_new) = argmin(&nu);
        let (xv, mv_new) = argmin(&nv);
        let (e, rate) = if mu_new <= mv_new {
            (err(k1u[xu], k2u[xu], k3u[xu], k4u[xu]), k4u[xu])
        } else {
            (err(k1v[xv], k2v[xv], k3v[xv], k4v[xv]), k4v[xv])
        };
        if rate != 0.0 {
            integration_error += (e.abs() / rate.abs()).min(h);
        }
        std::mem::swap(&mut u, &mut nu);
        std::mem::swap(&mut v, &mut nv);
        std::mem::swap(&mut k1u, &mut k4u);
        std::mem::swap(&mut k1v, &mut k4v);
        t = if hitting { target } else { t.advance(h) };
        accepted += 1;
        last_dt = h;
        let factor = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
        dt = if hitting { dt.max(h * factor) } else { h * factor };
        for i in 0..n {
            max_u = max_u.max(u[i]);
            max_v = max_v.max(v[i]);
        }

        let quenched = mu_new < c.stop_floor || mv_new < c.stop_floor;
        let at_horizon = hitting && target_idx + 1 == targets.len();
        let flow = observer(&StepView { t, u: &u, v: &v, du: &k1u, dv: &k1v, steps: accepted });
        let stop = quenched || at_horizon || flow == Flow::Stop;
        let dropped = c.min_drop_ratio.is_some_and(|r| mu_new.min(mv_new) <= r * last_recorded_min);
        if stop || hitting || accepted.is_multiple_of(c.sample_stride) || dropped {
            let s = Sample::from_state(t, &u, &v, &k1u, &k1v, params);
            last_recorded_min = s.m_u.min(s.m_v);
            samples.push(s);
            if let Some(st) = states.as_mut() {
                st.push((u.clone(), v.clone()));
            }
        }
        if hitting && !at_horizon {
            target_idx += 1;
        }
        if quenched {
            termination = Termination::StopFloor;
            break;
        }
        if at_horizon {
            termination = Termination::Horizon;
            break;
        }
        if flow == Flow::Stop {
            termination = Termination::Observer;
            break;
        }
    }

    // Record the final state if the loop ended on underflow between records.
    if samples.last().map(|s| s.t) != Some(t) {
        let s = Sample::from_state(t, &u, &v, &k1u, &k1v, params);
        samples.push(s);
        if let Some(st) = states.as_mut() {
            st.push((u.clone(), v.clone()));
        }
    }

    let traj = Trajectory {
        samples,
        states,
        params: *params,
        quench_floor: c.quench_floor,
        stop_floor: c.stop_floor,
        grid_len: n,
        operator_fingerprint: op.fingerprint(),
        bounds,
        max_u,
        max_v,
        last_dt,
        integration_error,
        steps_accepted: accepted,
        steps_rejected: rejected,
    };

    let last = *traj.last();
    let quenched = matches!(termination, Termination::StopFloor | Termination::StepUnderflow);
    let verdict = if quenched { Verdict::Quench } else { Verdict::NoQuenchWithinHorizon };
    let quench_time = if quenched {
        let mut q = estimate_quench_time(&traj)?;
        if termination == Termination::StepUnderflow {
            q.gap_upper = q.gap_upper.max(c.dt_min / c.safety);
        }
        Some(q)
    } else {
        None
    };
    let uq = last.m_u < c.quench_floor;
    let vq = last.m_v < c.quench_floor;
    let components = match (quenched, uq, vq) {
        (false, _, _) => None,
        (true, true, true) => Some(ComponentVerdict::Both),
        (true, true, false) => Some(ComponentVerdict::QuenchesU),
        (true, false, true) => Some(ComponentVerdict::QuenchesV),
        (true, false, false) => None,
    };
    let set = |x: &[f64]| (0..n).filter(|&i| x[i] < c.quench_floor).collect::<Vec<_>>();
    let report = QuenchReport {
        verdict,
        termination,
        quench_time,
        components,
        quench_set_u: set(&u),
        quench_set_v: set(&v),
        terminal_min_u: last.m_u,
        terminal_min_v: last.m_v,
        terminal_argmin_u: last.x_u,
        terminal_argmin_v: last.x_v,
        final_time: t.value(),
        bounds,
        max_u,
        max_v,
        bounds_respected: max_u <= bounds.m + BOUND_TOLERANCE && max_v <= bounds.n + BOUND_TOLERANCE,
        quench_floor: c.quench_floor,
        stop_floor: c.stop_floor,
        steps_accepted: accepted,
        steps_rejected: rejected,
        sub_hypothesis: op.sub_hypothesis(),
    };
    Ok((traj, report))
}

/// Component with the smaller terminal minimum.
pub fn fastest_component(report: &QuenchReport) -> Component {
    if report.terminal_min_u <= report.terminal_min_v {
        Component::U
    } else {
        Component::V
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{assemble_operator, build_kernel, Domain, Profile};

    fn line(n: usize) -> NonlocalOperator {
        let d = Domain::interval(-1.0, 1.0, n).unwrap();
        let k = build_kernel(Profile::Tent, 0.5, 1).unwrap();
        assemble_operator(&d, &k).unwrap()
    }

    #[test]
    fn equilibrium_stays_put() {
        let op = line(41);
        let m = ModelParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let c = IntegratorControls { t_max: 5.0, record: RecordMode::Full, ..Default::default() };
        let (traj, rep) = integrate(&vec![1.0; 41], &vec![1.0; 41], &m, &op, &c).unwrap();
        assert_eq!(rep.verdict, Verdict::NoQuenchWithinHorizon);
        assert_eq!(rep.termination, Termination::Horizon);
        assert_eq!(rep.final_time, 5.0);
        for (u, v) in traj.states.as_ref().unwrap() {
            assert!(u.iter().chain(v).all(|&x| x == 1.0));
        }
    }

    #[test]
    fn ode_surrogate_quench_time() {
        let op = NonlocalOperator::reaction_only(3);
        let m = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (_, rep) = integrate(&[0.5; 3], &[0.5; 3], &m, &op, &IntegratorControls::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Quench);
        let q = rep.quench_time.unwrap();
        assert!((q.estimate() - 1.0 / 24.0).abs() < 1e-4, "{}", q.estimate());
        let (lo, hi) = q.bracket();
        assert!(lo <= 1.0 / 24.0 && 1.0 / 24.0 <= hi + 1e-12, "{q:?} {lo} {hi}");
        assert_eq!(rep.components, Some(ComponentVerdict::Both));
    }

    #[test]
    fn quench_time_respects_upper_bound() {
        let op = line(101);
        let m = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (_, rep) = integrate(&[0.4; 101], &[0.4; 101], &m, &op, &IntegratorControls::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Quench);
        assert!(rep.quench_time.unwrap().estimate() <= 0.08);
        assert!(rep.bounds_respected);
    }

    #[test]
    fn output_times_are_hit_exactly() {
        let op = line(21);
        let m = ModelParams::new(0.05, 0.05, 1.0, 1.0, 1.0, 1.0).unwrap();
        let c = IntegratorControls {
            t_max: 1.0,
            output_times: vec![0.25, 0.5, 0.75],
            sample_stride: 1000,
            ..Default::default()
        };
        let (traj, _) = integrate(&[0.8; 21], &[0.9; 21], &m, &op, &c).unwrap();
        let times = traj.times();
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!(times.contains(&t), "{t} missing from {times:?}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let op = line(21);
        let m = ModelParams::new(0.05, 0.05, 1.0, 1.0, 1.0, 1.0).unwrap();
        let c = IntegratorControls::default();
        assert!(matches!(integrate(&[0.8; 20], &[0.9; 21], &m, &op, &c), Err(Error::Configuration(_))));
        let mut u = vec![0.8; 21];
        u[3] = 0.0;
        assert!(matches!(integrate(&u, &[0.9; 21], &m, &op, &c), Err(Error::Domain(_))));
        let bad = IntegratorControls { stop_floor: 1.0, ..Default::default() };
        assert!(matches!(integrate(&[0.8; 21], &[0.9; 21], &m, &op, &bad), Err(Error::Configuration(_))));
    }

    #[test]
    fn observer_can_stop() {
        let op = line(21);
        let m = ModelParams::new(0.05, 0.05, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (traj, rep) =
            integrate_observed(&[0.8; 21], &[0.9; 21], &m, &op, &IntegratorControls::default(), &mut |s| {
                if s.steps >= 5 {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })
            .unwrap();
        assert_eq!(rep.termination, Termination::Observer);
        assert_eq!(traj.steps_accepted, 5);
    }
}
