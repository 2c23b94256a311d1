//! Stationary solutions: damped Newton, the data-one dichotomy probe and the
//! (lambda, mu) region map.

mod region;

pub use region::{
    map_region, nodewise_monotonicity_violations, rectangle_violations, solution_bound_violations, unit_box_violations,
    CellClass, Exponents, RayBoundary, RegionMap, RegionSpec,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate_observed, Flow, IntegratorControls, QuenchReport, Termination, Verdict};
use crate::kernel::NonlocalOperator;
use crate::model::{absorption_u, absorption_v, rhs, ModelParams};

/// Margin used when checking `mu^(1/q) < w <= 1` and `lambda^(1/p) < z <= 1`.
pub const BOUND_MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50, max_halvings: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Max-norm of the stationary residual.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub reason: Option<String>,
}

impl StationaryResult {
    /// CSV with columns `node,w,z`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,w,z\n");
        for (i, (w, z)) in self.w.iter().zip(&self.z).enumerate() {
            s.push_str(&format!("{i},{w:.17e},{z:.17e}\n"));
        }
        s
    }
}

/// Whether `(w, z)` satisfies the a priori bounds for stationary solutions.
pub fn within_bounds(w: &[f64], z: &[f64], params: &ModelParams) -> bool {
    let wl = params.mu.powf(1.0 / params.q) + BOUND_MARGIN;
    let zl = params.lambda.powf(1.0 / params.p) + BOUND_MARGIN;
    w.iter().all(|&x| x > wl && x <= 1.0 + BOUND_MARGIN) && z.iter().all(|&x| x > zl && x <= 1.0 + BOUND_MARGIN)
}

fn residual(w: &[f64], z: &[f64], params: &ModelParams, op: &NonlocalOperator) -> Result<(Vec<f64>, f64)> {
    let (gw, gz) = rhs(w, z, params, op, 0.0)?;
    let norm = gw.iter().chain(&gz).fold(0.0f64, |a, &x| a.max(x.abs()));
    let mut g = gw;
    g.extend(gz);
    Ok((g, norm))
}

/// Jacobian of `G(w, z) = (W w + b - w - lambda z^-p w^-alpha,
/// W z + b - z - mu w^-q z^-beta)`.
#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub jacobian: DMatrix<f64>,
    n: usize,
}

impl LinearizedSystem {
    pub fn assemble(params: &ModelParams, weights: &DMatrix<f64>, w: &[f64], z: &[f64]) -> Self {
        let n = w.len();
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(weights);
        j.view_mut((n, n), (n, n)).copy_from(weights);
        for i in 0..n {
            let (wi, zi) = (w[i], z[i]);
            let au = absorption_u(wi, zi, params);
            let av = absorption_v(wi, zi, params);
            j[(i, i)] += -1.0 + params.alpha * au / wi;
            j[(i, n + i)] = params.p * au / zi;
            j[(n + i, i)] = params.q * av / wi;
            j[(n + i, n + i)] += -1.0 + params.beta * av / zi;
        }
        LinearizedSystem { jacobian: j, n }
    }

    /// True when both off-diagonal coupling blocks vanish.
    pub fn is_block_diagonal(&self) -> bool {
        let n = self.n;
        self.jacobian.view((0, n), (n, n)).iter().all(|&x| x == 0.0)
            && self.jacobian.view((n, 0), (n, n)).iter().all(|&x| x == 0.0)
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        let x = self.jacobian.clone().lu().solve(&b)?;
        x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
    }
}

pub fn solve_stationary(
    params: &ModelParams,
    op: &NonlocalOperator,
    guess_w: &[f64],
    guess_z: &[f64],
) -> Result<StationaryResult> {
    solve_stationary_with(params, op, guess_w, guess_z, &NewtonOptions::default())
}

/// Damped Newton with halving line search.
pub fn solve_stationary_with(
    params: &ModelParams,
    op: &NonlocalOperator,
    guess_w: &[f64],
    guess_z: &[f64],
    opts: &NewtonOptions,
) -> Result<StationaryResult> {
    params.validate()?;
    let n = op.len();
    if guess_w.len() != n || guess_z.len() != n {
        return Err(Error::config("initial guess length does not match the grid size"));
    }
    if guess_w.iter().chain(guess_z).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain("initial guess must be positive".into()));
    }
    let weights = op.dense_weights();
    let mut w = guess_w.to_vec();
    let mut z = guess_z.to_vec();
    let (mut g, mut norm) = residual(&w, &z, params, op)?;
    let mut iterations = 0;
    let mut reason = None;
    while norm >= opts.tol {
        if iterations >= opts.max_iter {
            reason = Some(format!("no convergence after {} iterations", opts.max_iter));
            break;
        }
        iterations += 1;
        let sys = LinearizedSystem::assemble(params, &weights, &w, &z);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let Some(delta) = sys.solve(&neg) else {
            reason = Some("singular Jacobian".into());
            break;
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let tw: Vec<f64> = (0..n).map(|i| w[i] + step * delta[i]).collect();
            let tz: Vec<f64> = (0..n).map(|i| z[i] + step * delta[n + i]).collect();
            if tw.iter().chain(&tz).all(|&x| x > 0.0 && x.is_finite()) {
                let (tg, tn) = residual(&tw, &tz, params, op)?;
                if tn < norm {
                    accepted = Some((tw, tz, tg, tn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((tw, tz, tg, tn)) = accepted else {
            reason = Some("line search failed".into());
            break;
        };
        w = tw;
        z = tz;
        g = tg;
        norm = tn;
    }
    let mut converged = norm < opts.tol;
    if converged && !within_bounds(&w, &z, params) {
        converged = false;
        reason = Some("bounds violated".into());
    }
    Ok(StationaryResult { w, z, residual_norm: norm, converged, iterations, reason })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOptions {
    /// Max-norm of the right-hand side below which the flow counts as
    /// stationary.
    pub stationary_tol: f64,
    /// Consecutive accepted steps that must satisfy `stationary_tol`.
    pub consecutive: usize,
    /// Refine the integrated state with Newton.
    pub polish: bool,
    pub newton: NewtonOptions,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { stationary_tol: 1e-9, consecutive: 10, polish: true, newton: NewtonOptions::default() }
    }
}

/// Integrator controls suited to long runs toward a steady state.
pub fn probe_controls() -> IntegratorControls {
    IntegratorControls { dt_max: 1.0, t_max: 2000.0, sample_stride: 1000, ..Default::default() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    StationaryReached(StationaryResult),
    Quench(QuenchReport),
}

/// Integrates from `u = v = 1`: the flow either quenches or decreases to a
/// stationary solution.
pub fn dichotomy_probe(
    params: &ModelParams,
    op: &NonlocalOperator,
    controls: &IntegratorControls,
    opts: &ProbeOptions,
) -> Result<Probe> {
    let n = op.len();
    let ones = vec![1.0; n];
    let mut streak = 0usize;
    let mut last_norm = f64::INFINITY;
    let mut captured: Option<(Vec<f64>, Vec<f64>)> = None;
    // The constant-one state may already be stationary (no absorption).
    let (_, n0) = residual(&ones, &ones, params, op)?;
    if n0 < opts.stationary_tol {
        captured = Some((ones.clone(), ones.clone()));
    } else {
        let mut observer = |s: &crate::integrator::StepView| {
            last_norm = s.du.iter().chain(s.dv).fold(0.0f64, |a, &x| a.max(x.abs()));
            if last_norm < opts.stationary_tol {
                streak += 1;
            } else {
                streak = 0;
            }
            if streak >= opts.consecutive {
                captured = Some((s.u.to_vec(), s.v.to_vec()));
                Flow::Stop
            } else {
                Flow::Continue
            }
        };
        let (_, report) = integrate_observed(&ones, &ones, params, op, controls, &mut observer)?;
        match (report.verdict, report.termination) {
            (Verdict::Quench, _) => return Ok(Probe::Quench(report)),
            (_, Termination::Observer) => {}
            _ => {
                return Err(Error::Indeterminate {
                    reason: "horizon reached without quenching or stationarity".into(),
                    t: report.final_time,
                    rhs_norm: last_norm,
                })
            }
        }
    }
    let (u, v) = captured.expect("stationary state captured");
    let result = if opts.polish {
        solve_stationary_with(params, op, &u, &v, &opts.newton)?
    } else {
        let (_, norm) = residual(&u, &v, params, op)?;
        let converged = norm < opts.newton.tol && within_bounds(&u, &v, params);
        StationaryResult {
            reason: (!converged).then(|| "integrated state outside tolerance or bounds".into()),
            w: u,
            z: v,
            residual_norm: norm,
            converged,
            iterations: 0,
        }
    };
    Ok(Probe::StationaryReached(result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{assemble_operator, build_kernel, Domain, Profile};
    use crate::model::rhs;

    fn op(n: usize) -> NonlocalOperator {
        let d = Domain::interval(-1.0, 1.0, n).unwrap();
        let k = build_kernel(Profile::Epanechnikov, 0.5, 1).unwrap();
        assemble_operator(&d, &k).unwrap()
    }

    fn unit(l: f64, m: f64) -> ModelParams {
        ModelParams::new(l, m, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_absorption_is_solved_immediately() {
        let op = op(41);
        let r = solve_stationary(&unit(0.0, 0.0), &op, &[1.0; 41], &[1.0; 41]).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
        assert!(r.w.iter().chain(&r.z).all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn jacobian_at_zero_is_block_diagonal_and_invertible() {
        let op = op(41);
        let sys = LinearizedSystem::assemble(&unit(0.0, 0.0), &op.dense_weights(), &[1.0; 41], &[1.0; 41]);
        assert!(sys.is_block_diagonal());
        assert!(sys.solve(&[1.0; 82]).is_some());
    }

    #[test]
    fn small_parameters_respect_bounds() {
        let op = op(41);
        let r = solve_stationary(&unit(0.005, 0.005), &op, &[1.0; 41], &[1.0; 41]).unwrap();
        assert!(r.converged, "{:?}", r.reason);
        let min = r.w.iter().chain(&r.z).copied().fold(f64::INFINITY, f64::min);
        assert!(min > 0.005 && min <= 1.0);
        let (du, dv) = rhs(&r.w, &r.z, &unit(0.005, 0.005), &op, 0.0).unwrap();
        assert!(du.iter().chain(&dv).all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn large_lambda_has_no_valid_solution() {
        let op = op(41);
        for mu in [0.01, 0.5] {
            let r = solve_stationary(&unit(1.5, mu), &op, &[1.0; 41], &[1.0; 41]).unwrap();
            assert!(!r.converged);
        }
    }

    #[test]
    fn nonpositive_guess_is_domain_error() {
        let op = op(11);
        let mut g = vec![1.0; 11];
        g[0] = 0.0;
        assert!(matches!(solve_stationary(&unit(0.1, 0.1), &op, &g, &[1.0; 11]), Err(Error::Domain(_))));
    }

    #[test]
    fn probe_examples() {
        let op = op(41);
        let c = probe_controls();
        let o = ProbeOptions::default();
        match dichotomy_probe(&unit(0.0, 0.0), &op, &c, &o).unwrap() {
            Probe::StationaryReached(r) => assert!(r.w.iter().all(|&x| (x - 1.0).abs() < 1e-12)),
            Probe::Quench(_) => panic!("expected stationary"),
        }
        assert!(matches!(dichotomy_probe(&unit(1.0, 1.0), &op, &c, &o).unwrap(), Probe::Quench(_)));
        let Probe::StationaryReached(r) = dichotomy_probe(&unit(0.005, 0.005), &op, &c, &o).unwrap() else {
            panic!("expected stationary");
        };
        let cold = solve_stationary(&unit(0.005, 0.005), &op, &[1.0; 41], &[1.0; 41]).unwrap();
        assert!(r.converged && cold.converged);
        for i in 0..41 {
            assert!((r.w[i] - cold.w[i]).abs() < 1e-8);
            assert!((r.z[i] - cold.z[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn short_horizon_is_indeterminate() {
        let op = op(41);
        let c = IntegratorControls { t_max: 0.5, ..probe_controls() };
        let e = dichotomy_probe(&unit(0.01, 0.01), &op, &c, &ProbeOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Indeterminate { .. }));
    }
}
