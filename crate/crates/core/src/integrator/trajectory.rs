use serde::{Deserialize, Serialize};

use super::time::Time;
use crate::error::{Error, Result};
use crate::model::{psi_scalar, Component, DerivedBounds, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordMode {
    /// Minima, argmins and norms only.
    #[default]
    Lean,
    /// Additionally stores the full state at every sample.
    Full,
}

/// One recorded point of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: Time,
    pub m_u: f64,
    pub x_u: usize,
    pub m_v: f64,
    pub x_v: usize,
    pub v_at_xu: f64,
    pub u_at_xv: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub psi_gap: f64,
    /// `u_t` at `x_u`.
    pub du_at_xu: f64,
    /// `v_t` at `x_v`.
    pub dv_at_xv: f64,
}

/// Lowest-index argmin.
pub fn argmin(x: &[f64]) -> (usize, f64) {
    let mut best = (0, x[0]);
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// `|mu Psi_{q-alpha}[u] - lambda Psi_{p-beta}[v]|` at a single node.
pub fn psi_gap_point(u: f64, v: f64, params: &ModelParams) -> f64 {
    (params.mu * psi_scalar(u, params.gap_u()) - params.lambda * psi_scalar(v, params.gap_v())).abs()
}

impl Sample {
    pub fn from_state(t: Time, u: &[f64], v: &[f64], du: &[f64], dv: &[f64], params: &ModelParams) -> Self {
        let (x_u, m_u) = argmin(u);
        let (x_v, m_v) = argmin(v);
        let max = |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let psi_gap = psi_gap_point(u[x_u], v[x_u], params).max(psi_gap_point(u[x_v], v[x_v], params));
        Sample {
            t,
            m_u,
            x_u,
            m_v,
            x_v,
            v_at_xu: v[x_u],
            u_at_xv: u[x_v],
            max_u: max(u),
            max_v: max(v),
            psi_gap,
            du_at_xu: du[x_u],
            dv_at_xv: dv[x_v],
        }
    }

    pub fn time(&self) -> f64 {
        self.t.value()
    }

    pub fn min(&self, c: Component) -> f64 {
        match c {
            Component::U => self.m_u,
            Component::V => self.m_v,
        }
    }

    pub fn argmin(&self, c: Component) -> usize {
        match c {
            Component::U => self.x_u,
            Component::V => self.x_v,
        }
    }
}

/// Time-sampled output of an integration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Full states `(u, v)` aligned with `samples`, present in full mode.
    pub states: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub params: ModelParams,
    pub quench_floor: f64,
    pub stop_floor: f64,
    pub grid_len: usize,
    pub operator_fingerprint: u64,
    pub bounds: DerivedBounds,
    /// Maxima over every accepted step, not only the recorded ones.
    pub max_u: f64,
    pub max_v: f64,
    pub last_dt: f64,
    /// Accumulated local-error contribution to the uncertainty of `T`.
    pub integration_error: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    /// Builds a lean trajectory from externally supplied min-tracks. Argmins
    /// are set to node 0.
    pub fn from_min_tracks(
        times: &[f64],
        m_u: &[f64],
        m_v: &[f64],
        params: ModelParams,
        quench_floor: f64,
        stop_floor: f64,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != m_u.len() || times.len() != m_v.len() {
            return Err(Error::config("min-track series must be nonempty and of equal length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("times must be strictly increasing"));
        }
        let samples: Vec<Sample> = (0..times.len())
            .map(|i| Sample {
                t: Time::new(times[i]),
                m_u: m_u[i],
                x_u: 0,
                m_v: m_v[i],
                x_v: 0,
                v_at_xu: m_v[i],
                u_at_xv: m_u[i],
                max_u: m_u[i],
                max_v: m_v[i],
                psi_gap: psi_gap_point(m_u[i], m_v[i], &params),
                du_at_xu: f64::NAN,
                dv_at_xv: f64::NAN,
            })
            .collect();
        let last_dt = if times.len() > 1 { times[times.len() - 1] - times[times.len() - 2] } else { 0.0 };
        Ok(Trajectory {
            bounds: DerivedBounds::from_data(&m_u[..1], &m_v[..1]),
            max_u: m_u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            max_v: m_v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            samples,
            states: None,
            params,
            quench_floor,
            stop_floor,
            grid_len: 1,
            operator_fingerprint: 0,
            last_dt,
            integration_error: 0.0,
            steps_accepted: times.len() - 1,
            steps_rejected: 0,
        })
    }

    pub fn mode(&self) -> RecordMode {
        if self.states.is_some() {
            RecordMode::Full
        } else {
            RecordMode::Lean
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn end_time(&self) -> Time {
        self.last().t
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::time).collect()
    }

    /// `t_end - t_i`, free of cancellation.
    pub fn time_before_end(&self, i: usize) -> f64 {
        self.end_time().diff(self.samples[i].t)
    }

    pub fn min_track(&self, c: Component) -> Vec<f64> {
        self.samples.iter().map(|s| s.min(c)).collect()
    }

    pub fn argmin_track(&self, c: Component) -> Vec<usize> {
        self.samples.iter().map(|s| s.argmin(c)).collect()
    }

    pub fn terminal_min(&self, c: Component) -> f64 {
        self.last().min(c)
    }

    /// Exponent of the absorption self-power for component `c`.
    pub fn self_exponent(&self, c: Component) -> f64 {
        match c {
            Component::U => self.params.alpha,
            Component::V => self.params.beta,
        }
    }

    /// CSV with columns `t,m_u,argmin_u,m_v,argmin_v,psi_gap`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,m_u,argmin_u,m_v,argmin_v,psi_gap\n");
        for x in &self.samples {
            s.push_str(&format!(
                "{:.17e},{:.17e},{},{:.17e},{},{:.17e}\n",
                x.time(),
                x.m_u,
                x.x_u,
                x.m_v,
                x.x_v,
                x.psi_gap
            ));
        }
        s
    }
}
