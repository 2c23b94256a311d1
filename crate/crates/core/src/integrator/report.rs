use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::model::{Component, DerivedBounds};

/// Samples used by the terminal extrapolation fit.
pub const FIT_SAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoQuenchWithinHorizon,
    Quench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentVerdict {
    QuenchesU,
    QuenchesV,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// A minimum fell below the stop floor.
    StopFloor,
    /// The step size fell below `dt_min` with a minimum below the quench floor.
    StepUnderflow,
    /// The horizon `t_max` was reached.
    Horizon,
    /// An observer requested the stop.
    Observer,
}

/// Estimated quenching time, kept relative to the last integration time so
/// that sub-ulp gaps survive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchTime {
    pub t_last: f64,
    pub t_last_lo: f64,
    /// Fitted `T - t_last`.
    pub gap: f64,
    /// Upper end of the fitted gap (estimate plus one standard error).
    pub gap_upper: f64,
    /// Accumulated integration error in time units, widening the bracket on
    /// both sides.
    pub integration_error: f64,
    /// False when the extrapolation fit was ill-conditioned and the
    /// last-step fallback was used.
    pub fitted: bool,
    pub component: Component,
}

impl QuenchTime {
    pub fn estimate(&self) -> f64 {
        self.t_last + (self.t_last_lo + self.gap)
    }

    /// Largest admissible `T - t_last`.
    pub fn gap_max(&self) -> f64 {
        self.gap_upper + self.integration_error
    }

    /// `[t_last - e, t_last + gap_upper + e]` with `e` the integration error.
    pub fn bracket(&self) -> (f64, f64) {
        (self.t_last + (self.t_last_lo - self.integration_error), self.t_last + (self.t_last_lo + self.gap_max()))
    }

    pub fn width(&self) -> f64 {
        self.gap_upper + 2.0 * self.integration_error
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuenchReport {
    pub verdict: Verdict,
    pub termination: Termination,
    pub quench_time: Option<QuenchTime>,
    pub components: Option<ComponentVerdict>,
    pub quench_set_u: Vec<usize>,
    pub quench_set_v: Vec<usize>,
    pub terminal_min_u: f64,
    pub terminal_min_v: f64,
    pub terminal_argmin_u: usize,
    pub terminal_argmin_v: usize,
    pub final_time: f64,
    pub bounds: DerivedBounds,
    pub max_u: f64,
    pub max_v: f64,
    /// `max u <= M + 1e-6` and `max v <= N + 1e-6` over every step.
    pub bounds_respected: bool,
    pub quench_floor: f64,
    pub stop_floor: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// The kernel lies outside the C^1 class assumed by the theory.
    pub sub_hypothesis: bool,
}

impl QuenchReport {
    pub fn terminal_min(&self, c: Component) -> f64 {
        match c {
            Component::U => self.terminal_min_u,
            Component::V => self.terminal_min_v,
        }
    }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, var_a, var_b, cov_ab)`.
fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 3 {
        return None;
    }
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let b = sxy / sxx;
    let a = ym - b * xm;
    let ssr: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let s2 = ssr / (n - 2.0);
    Some((a, b, s2 * (1.0 / n + xm * xm / sxx), s2 / sxx, -xm * s2 / sxx))
}

/// Extrapolates `T` from `m^(1+gamma) ~ c (T - t)` over the last samples of
/// the component with the smaller terminal minimum.
pub fn estimate_quench_time(traj: &Trajectory) -> Result<QuenchTime> {
    let last = traj.last();
    let (mu_end, mv_end) = (last.m_u, last.m_v);
    if mu_end >= traj.quench_floor && mv_end >= traj.quench_floor {
        return Err(Error::Logic(format!(
            "trajectory does not end in the quench regime (terminal minima {mu_end}, {mv_end})"
        )));
    }
    let component = if mu_end <= mv_end { Component::U } else { Component::V };
    let gamma = traj.self_exponent(component);
    let n = traj.len();
    let k = FIT_SAMPLES.min(n);
    let idx = n - k..n;
    let x: Vec<f64> = idx.clone().map(|i| traj.time_before_end(i)).collect();
    let y: Vec<f64> = idx.map(|i| traj.samples[i].min(component).powf(1.0 + gamma)).collect();

    let end = traj.end_time();
    let fallback = QuenchTime {
        t_last: end.hi,
        t_last_lo: end.lo,
        gap: 0.5 * traj.last_dt,
        gap_upper: traj.last_dt,
        integration_error: traj.integration_error,
        fitted: false,
        component,
    };
    let Some((a, b, va, vb, cab)) = ols(&x, &y) else {
        return Ok(fallback);
    };
    let gap = a / b;
    if !(b > 0.0 && gap.is_finite() && gap >= 0.0) {
        return Ok(fallback);
    }
    let var = va / (b * b) + a * a * vb / b.powi(4) - 2.0 * a * cab / b.powi(3);
    let se = var.max(0.0).sqrt();
    Ok(QuenchTime {
        t_last: end.hi,
        t_last_lo: end.lo,
        gap,
        gap_upper: gap + se,
        integration_error: traj.integration_error,
        fitted: true,
        component,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn exact_power_law_recovers_t() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let times: Vec<f64> = (0..=999).map(|i| i as f64 * 1e-4).collect();
        let mu: Vec<f64> = times.iter().map(|t| (0.1 - t).sqrt()).collect();
        let traj = Trajectory::from_min_tracks(&times, &mu, &vec![1.0; 1000], p, 0.02, 1e-3).unwrap();
        let q = estimate_quench_time(&traj).unwrap();
        assert!(q.fitted);
        assert_eq!(q.component, Component::U);
        assert!((q.estimate() - 0.1).abs() < 1e-6);
        let (lo, hi) = q.bracket();
        assert!(lo <= 0.0999 + 1e-15 && hi >= 0.1 - 1e-9);
    }

    #[test]
    fn non_quench_trajectory_is_logic_error() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let traj = Trajectory::from_min_tracks(&[0.0, 1.0], &[1.0, 0.5], &[1.0, 0.5], p, 1e-4, 1e-6).unwrap();
        assert!(matches!(estimate_quench_time(&traj), Err(Error::Logic(_))));
    }

    #[test]
    fn degenerate_fit_falls_back_to_last_step() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let traj = Trajectory::from_min_tracks(&[0.0, 1.0], &[1.0, 1e-5], &[1.0, 1.0], p, 1e-4, 1e-6).unwrap();
        let q = estimate_quench_time(&traj).unwrap();
        assert!(!q.fitted);
        assert_eq!(q.bracket(), (1.0, 2.0));
    }
}
