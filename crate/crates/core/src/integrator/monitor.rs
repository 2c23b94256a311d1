use serde::{Deserialize, Serialize};

use super::trajectory::{psi_gap_point, Trajectory};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Absolute slack added to the boundedness test so that identically zero
/// gaps (symmetric runs) are not flagged by rounding noise.
pub const GAP_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyInequalityMonitor {
    /// Gap `|mu Psi_{q-alpha}[u] - lambda Psi_{p-beta}[v]|`, maximized over
    /// the two argmin nodes, per sample.
    pub gaps: Vec<f64>,
    pub running_sup: Vec<f64>,
    pub final_sup: f64,
    /// Running supremum at the end of the first quarter of the samples.
    pub first_quartile_sup: f64,
    /// `final_sup < 1.5 * first_quartile_sup + GAP_SLACK`.
    pub bounded: bool,
}

/// Evaluates the gap from stored full states with the supplied parameters,
/// which may differ from those of the run.
pub fn monitor_key_inequality(traj: &Trajectory, params: &ModelParams) -> Result<KeyInequalityMonitor> {
    let states = traj
        .states
        .as_ref()
        .ok_or_else(|| Error::UnsupportedMode("key-inequality monitor needs a full-mode trajectory".into()))?;
    let mut gaps = Vec::with_capacity(states.len());
    for (s, (u, v)) in traj.samples.iter().zip(states) {
        let g = psi_gap_point(u[s.x_u], v[s.x_u], params).max(psi_gap_point(u[s.x_v], v[s.x_v], params));
        gaps.push(g);
    }
    let mut running_sup = Vec::with_capacity(gaps.len());
    let mut sup = f64::NEG_INFINITY;
    for &g in &gaps {
        sup = sup.max(g);
        running_sup.push(sup);
    }
    let q1 = running_sup[(running_sup.len() - 1) / 4];
    Ok(KeyInequalityMonitor {
        bounded: sup < 1.5 * q1 + GAP_SLACK,
        gaps,
        running_sup,
        final_sup: sup,
        first_quartile_sup: q1,
    })
}
