use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::model::Component;

pub const ORDERING_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub t: f64,
    pub node: usize,
    pub component: Component,
    /// `lower - upper`, positive when the ordering is broken.
    pub amount: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub holds: bool,
    pub compared_times: usize,
    /// Largest value of `lower - upper` seen (may be negative).
    pub max_excess: f64,
    pub first_violation: Option<OrderingViolation>,
}

/// Checks that `upper >= lower` nodewise at every sample time the two
/// trajectories share exactly.
pub fn check_comparison(upper: &Trajectory, lower: &Trajectory) -> Result<ComparisonReport> {
    if upper.grid_len != lower.grid_len || upper.operator_fingerprint != lower.operator_fingerprint {
        return Err(Error::config("trajectories were computed on different discretizations"));
    }
    if upper.params != lower.params {
        return Err(Error::config("trajectories were computed with different parameters"));
    }
    let (Some(sa), Some(sb)) = (&upper.states, &lower.states) else {
        return Err(Error::UnsupportedMode("comparison needs full-mode trajectories".into()));
    };
    let (ua, va) = &sa[0];
    let (ub, vb) = &sb[0];
    if ua.iter().zip(ub).any(|(a, b)| a < b) || va.iter().zip(vb).any(|(a, b)| a < b) {
        return Err(Error::Precondition("initial data are not ordered nodewise".into()));
    }

    let mut report =
        ComparisonReport { holds: true, compared_times: 0, max_excess: f64::NEG_INFINITY, first_violation: None };
    let (mut i, mut j) = (0, 0);
    while i < upper.len() && j < lower.len() {
        let (ta, tb) = (upper.samples[i].t, lower.samples[j].t);
        let d = ta.diff(tb);
        if d < 0.0 {
            i += 1;
            continue;
        }
        if d > 0.0 {
            j += 1;
            continue;
        }
        report.compared_times += 1;
        for (component, hi, lo) in [(Component::U, &sa[i].0, &sb[j].0), (Component::V, &sa[i].1, &sb[j].1)] {
            for (node, (a, b)) in hi.iter().zip(lo).enumerate() {
                let excess = b - a;
                report.max_excess = report.max_excess.max(excess);
                if excess > ORDERING_TOLERANCE && report.first_violation.is_none() {
                    report.holds = false;
                    report.first_violation = Some(OrderingViolation { t: ta.value(), node, component, amount: excess });
                }
            }
        }
        i += 1;
        j += 1;
    }
    Ok(report)
}
