use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dichotomy_probe, solve_stationary_with, within_bounds, Probe, ProbeOptions};
use crate::error::{Error, Result};
use crate::integrator::IntegratorControls;
use crate::kernel::NonlocalOperator;
use crate::model::ModelParams;

/// The four exponents held fixed while `(lambda, mu)` vary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Exponents {
    pub fn with(&self, lambda: f64, mu: f64) -> ModelParams {
        ModelParams { lambda, mu, p: self.p, q: self.q, alpha: self.alpha, beta: self.beta }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lambda_range: (f64, f64),
    pub mu_range: (f64, f64),
    /// Samples per axis, endpoints included.
    pub resolution: (usize, usize),
    pub exponents: Exponents,
    #[serde(default = "default_width")]
    pub bisect_width: f64,
}

fn default_width() -> f64 {
    1e-3
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lambda_range", self.lambda_range), ("mu_range", self.mu_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::config(format!("{name} must satisfy 0 < lo < hi, got ({lo}, {hi})")));
            }
        }
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return Err(Error::config("resolution must be at least 2 per axis"));
        }
        if !(self.bisect_width > 0.0) {
            return Err(Error::config("bisect_width must be > 0"));
        }
        self.exponents.with(1.0, 1.0).validate()
    }

    fn axis((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Stationary,
    AllQuench,
    Boundary,
}

impl CellClass {
    pub fn name(self) -> &'static str {
        match self {
            CellClass::Stationary => "stationary",
            CellClass::AllQuench => "all_quench",
            CellClass::Boundary => "boundary",
        }
    }
}

/// Bracket `[mu_lo, mu_hi]` for the supremum of stationary `mu` on a ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayBoundary {
    pub lambda: f64,
    /// Largest `mu` known to admit a stationary solution.
    pub mu_lo: Option<f64>,
    /// Smallest `mu` known to quench from data one.
    pub mu_hi: Option<f64>,
    pub width: Option<f64>,
    /// Newton convergence at `mu_lo`, warm-started from the probe solution.
    pub lower_converged: Option<bool>,
    pub note: Option<String>,
}

/// Stationary pair `(w, z)`.
pub type Solution = (Vec<f64>, Vec<f64>);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionMap {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    /// `cells[i][j]` classifies `(lambdas[i], mus[j])`.
    pub cells: Vec<Vec<CellClass>>,
    /// Stationary solutions `(w, z)` for stationary cells.
    #[serde(skip)]
    pub solutions: Vec<Vec<Option<Solution>>>,
    pub rays: Vec<RayBoundary>,
    pub exponents: Exponents,
    /// Largest nodewise difference between warm-started continuation solves
    /// and the probe solutions.
    pub continuation_max_diff: f64,
}

impl RegionMap {
    pub fn params(&self, i: usize, j: usize) -> ModelParams {
        self.exponents.with(self.lambdas[i], self.mus[j])
    }

    /// CSV with columns `lambda,mu,class`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,mu,class\n");
        for (i, l) in self.lambdas.iter().enumerate() {
            for (j, m) in self.mus.iter().enumerate() {
                s.push_str(&format!("{l:.17e},{m:.17e},{}\n", self.cells[i][j].name()));
            }
        }
        s
    }
}

enum Outcome {
    Stationary(Vec<f64>, Vec<f64>),
    Quench,
    Undecided(String),
}

fn classify(
    params: &ModelParams,
    op: &NonlocalOperator,
    controls: &IntegratorControls,
    opts: &ProbeOptions,
) -> Result<Outcome> {
    match dichotomy_probe(params, op, controls, opts) {
        Ok(Probe::Quench(_)) => Ok(Outcome::Quench),
        Ok(Probe::StationaryReached(r)) if r.converged => Ok(Outcome::Stationary(r.w, r.z)),
        Ok(Probe::StationaryReached(r)) => Ok(Outcome::Undecided(r.reason.unwrap_or_default())),
        Err(e @ Error::Indeterminate { .. }) => Ok(Outcome::Undecided(e.to_string())),
        Err(e @ Error::NumericalFailure { .. }) => Ok(Outcome::Undecided(e.to_string())),
        Err(e) => Err(e),
    }
}

struct Ray {
    cells: Vec<CellClass>,
    solutions: Vec<Option<Solution>>,
    boundary: RayBoundary,
    continuation_diff: f64,
}

fn max_diff(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> f64 {
    a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn run_ray(
    lambda: f64,
    mus: &[f64],
    spec: &RegionSpec,
    op: &NonlocalOperator,
    controls: &IntegratorControls,
    opts: &ProbeOptions,
) -> Result<Ray> {
    let mut cells = Vec::with_capacity(mus.len());
    let mut solutions: Vec<Option<Solution>> = Vec::with_capacity(mus.len());
    let mut continuation_diff = 0.0f64;
    let mut prev: Option<Solution> = None;
    for &mu in mus {
        let params = spec.exponents.with(lambda, mu);
        match classify(&params, op, controls, opts)? {
            Outcome::Stationary(w, z) => {
                let sol = (w, z);
                if let Some((pw, pz)) = &prev {
                    let warm = solve_stationary_with(&params, op, pw, pz, &opts.newton)?;
                    if warm.converged {
                        continuation_diff = continuation_diff.max(max_diff(&(warm.w, warm.z), &sol));
                    }
                }
                prev = Some(sol.clone());
                cells.push(CellClass::Stationary);
                solutions.push(Some(sol));
            }
            Outcome::Quench => {
                cells.push(CellClass::AllQuench);
                solutions.push(None);
            }
            Outcome::Undecided(_) => {
                cells.push(CellClass::Boundary);
                solutions.push(None);
            }
        }
    }

    let last_s = cells.iter().rposition(|&c| c == CellClass::Stationary);
    let first_q = match last_s {
        Some(s) => cells[s..].iter().position(|&c| c == CellClass::AllQuench).map(|k| s + k),
        None => cells.iter().position(|&c| c == CellClass::AllQuench),
    };
    let mut boundary = RayBoundary {
        lambda,
        mu_lo: last_s.map(|s| mus[s]),
        mu_hi: first_q.map(|q| mus[q]),
        width: None,
        lower_converged: None,
        note: None,
    };
    if let (Some(s), Some(q)) = (last_s, first_q) {
        let (mut lo, mut hi) = (mus[s], mus[q]);
        let mut lo_sol = solutions[s].clone().expect("stationary cell has a solution");
        while hi - lo > spec.bisect_width {
            let mid = 0.5 * (lo + hi);
            match classify(&spec.exponents.with(lambda, mid), op, controls, opts)? {
                Outcome::Stationary(w, z) => {
                    lo = mid;
                    lo_sol = (w, z);
                }
                Outcome::Quench => hi = mid,
                Outcome::Undecided(why) => {
                    boundary.note = Some(format!("bisection stopped at mu = {mid}: {why}"));
                    break;
                }
            }
        }
        let at_lo = solve_stationary_with(&spec.exponents.with(lambda, lo), op, &lo_sol.0, &lo_sol.1, &opts.newton)?;
        boundary.mu_lo = Some(lo);
        boundary.mu_hi = Some(hi);
        boundary.width = Some(hi - lo);
        boundary.lower_converged = Some(at_lo.converged);
    } else if last_s.is_none() && first_q.is_some() {
        boundary.note = Some("no stationary sample on this ray".into());
    } else if first_q.is_none() {
        boundary.note = Some("no quenching sample above the last stationary one".into());
    }
    Ok(Ray { cells, solutions, boundary, continuation_diff })
}

/// Classifies each `(lambda, mu)` sample with the dichotomy probe and
/// brackets the stationary boundary on every `lambda` ray. Rays run in
/// parallel; results are merged in ray order.
pub fn map_region(
    spec: &RegionSpec,
    op: &NonlocalOperator,
    controls: &IntegratorControls,
    opts: &ProbeOptions,
) -> Result<RegionMap> {
    spec.validate()?;
    controls.validate()?;
    let lambdas = RegionSpec::axis(spec.lambda_range, spec.resolution.0);
    let mus = RegionSpec::axis(spec.mu_range, spec.resolution.1);
    let rays: Vec<Ray> =
        lambdas.par_iter().map(|&l| run_ray(l, &mus, spec, op, controls, opts)).collect::<Result<_>>()?;
    let mut map = RegionMap {
        lambdas,
        mus,
        cells: Vec::new(),
        solutions: Vec::new(),
        rays: Vec::new(),
        exponents: spec.exponents,
        continuation_max_diff: 0.0,
    };
    for r in rays {
        map.continuation_max_diff = map.continuation_max_diff.max(r.continuation_diff);
        map.cells.push(r.cells);
        map.solutions.push(r.solutions);
        map.rays.push(r.boundary);
    }
    Ok(map)
}

/// Stationary cells with a quenching cell to their lower left.
pub fn rectangle_violations(map: &RegionMap) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..map.lambdas.len() {
        for j in 0..map.mus.len() {
            if map.cells[i][j] != CellClass::Stationary {
                continue;
            }
            let bad = (0..=i).any(|a| (0..=j).any(|b| map.cells[a][b] == CellClass::AllQuench));
            if bad {
                out.push((i, j));
            }
        }
    }
    out
}

/// Stationary cells with `lambda >= 1` or `mu >= 1`.
pub fn unit_box_violations(map: &RegionMap) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, l) in map.lambdas.iter().enumerate() {
        for (j, m) in map.mus.iter().enumerate() {
            if (*l >= 1.0 || *m >= 1.0) && map.cells[i][j] == CellClass::Stationary {
                out.push((i, j));
            }
        }
    }
    out
}

/// Stored solutions violating `mu^(1/q) < w <= 1`, `lambda^(1/p) < z <= 1`.
pub fn solution_bound_violations(map: &RegionMap) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..map.lambdas.len() {
        for j in 0..map.mus.len() {
            if let Some((w, z)) = &map.solutions[i][j] {
                if !within_bounds(w, z, &map.params(i, j)) {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// Comparable stationary pairs `(a, b)` with `a <= b` in both parameters whose
/// solutions are not ordered `w_a >= w_b`, `z_a >= z_b` within `tol`.
pub fn nodewise_monotonicity_violations(map: &RegionMap, tol: f64) -> Vec<((usize, usize), (usize, usize))> {
    let mut cells = Vec::new();
    for i in 0..map.lambdas.len() {
        for j in 0..map.mus.len() {
            if map.solutions[i][j].is_some() {
                cells.push((i, j));
            }
        }
    }
    let mut out = Vec::new();
    for &a in &cells {
        for &b in &cells {
            if a == b || a.0 > b.0 || a.1 > b.1 {
                continue;
            }
            let (wa, za) = map.solutions[a.0][a.1].as_ref().expect("present");
            let (wb, zb) = map.solutions[b.0][b.1].as_ref().expect("present");
            let ordered =
                wa.iter().zip(wb).all(|(x, y)| *x >= *y - tol) && za.iter().zip(zb).all(|(x, y)| *x >= *y - tol);
            if !ordered {
                out.push((a, b));
            }
        }
    }
    out
}
