//! Parameters, states and the right-hand side of the coupled system.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::NonlocalOperator;

/// Default positivity floor below which a state value is singular.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::U => "u",
            Component::V => "v",
        })
    }
}

/// Coefficients and exponents of
/// `u_t = J*u - u - lambda v^-p u^-alpha`, `v_t = J*v - v - mu u^-q v^-beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    /// Exponents must be positive; the coefficients may be zero, which turns
    /// the absorption off and is useful for equilibrium checks.
    pub fn new(lambda: f64, mu: f64, p: f64, q: f64, alpha: f64, beta: f64) -> Result<Self> {
        let m = ModelParams { lambda, mu, p, q, alpha, beta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in self.exponents() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Strict check that all six parameters are positive.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu)] {
            if v <= 0.0 {
                return Err(Error::config(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    fn exponents(&self) -> [(&'static str, f64); 4] {
        [("p", self.p), ("q", self.q), ("alpha", self.alpha), ("beta", self.beta)]
    }

    /// `p - beta`, the exponent gap that controls whether `v` can vanish.
    pub fn gap_v(&self) -> f64 {
        self.p - self.beta
    }

    /// `q - alpha`.
    pub fn gap_u(&self) -> f64 {
        self.q - self.alpha
    }

    pub fn symmetric(&self) -> bool {
        self.lambda == self.mu && self.p == self.q && self.alpha == self.beta
    }
}

/// Power routine shared by every evaluation of the absorption terms.
#[inline]
pub fn pow(x: f64, e: f64) -> f64 {
    x.powf(e)
}

#[inline]
pub fn absorption_u(u: f64, v: f64, m: &ModelParams) -> f64 {
    if m.lambda == 0.0 {
        0.0
    } else {
        m.lambda * pow(v, -m.p) * pow(u, -m.alpha)
    }
}

#[inline]
pub fn absorption_v(u: f64, v: f64, m: &ModelParams) -> f64 {
    if m.mu == 0.0 {
        0.0
    } else {
        m.mu * pow(u, -m.q) * pow(v, -m.beta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(u: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::config("u and v must have the same length"));
        }
        check_positive(&u, &v, 0.0)?;
        Ok(State { u, v, t })
    }

    pub fn constant(n: usize, u: f64, v: f64) -> Self {
        State { u: vec![u; n], v: vec![v; n], t: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// `M = max(1, sup u0)`, `N = max(1, sup v0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedBounds {
    pub m: f64,
    pub n: f64,
}

impl DerivedBounds {
    pub fn from_data(u0: &[f64], v0: &[f64]) -> Self {
        let sup = |x: &[f64]| x.iter().copied().fold(1.0, f64::max);
        DerivedBounds { m: sup(u0), n: sup(v0) }
    }
}

/// Returns the first value at or below `floor` as a singularity signal.
pub fn check_positive(u: &[f64], v: &[f64], floor: f64) -> Result<()> {
    for (component, xs) in [(Component::U, u), (Component::V, v)] {
        if let Some((node, &value)) = xs.iter().enumerate().find(|(_, &x)| !(x > floor)) {
            return Err(Error::Singularity { component, node, value });
        }
    }
    Ok(())
}

/// Writes the right-hand side of the system into `du`, `dv`.
pub fn rhs_into(
    u: &[f64],
    v: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
    floor: f64,
    du: &mut [f64],
    dv: &mut [f64],
) -> Result<()> {
    if u.len() != op.len() || v.len() != op.len() {
        return Err(Error::config(format!(
            "state length {} / {} does not match operator size {}",
            u.len(),
            v.len(),
            op.len()
        )));
    }
    check_positive(u, v, floor)?;
    op.apply_into(u, du);
    op.apply_into(v, dv);
    for i in 0..u.len() {
        du[i] -= absorption_u(u[i], v[i], params);
        dv[i] -= absorption_v(u[i], v[i], params);
    }
    Ok(())
}

pub fn rhs(
    u: &[f64],
    v: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
    floor: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut du = vec![0.0; u.len()];
    let mut dv = vec![0.0; v.len()];
    rhs_into(u, v, params, op, floor, &mut du, &mut dv)?;
    Ok((du, dv))
}

/// `g^(1-a) / (1-a)` for `a != 1`, `ln g` for `a == 1`.
pub fn psi_scalar(g: f64, a: f64) -> f64 {
    if a == 1.0 {
        g.ln()
    } else {
        pow(g, 1.0 - a) / (1.0 - a)
    }
}

pub fn psi(g: &[f64], a: f64) -> Result<Vec<f64>> {
    if let Some((i, x)) = g.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::Domain(format!("psi needs positive values, got {x} at node {i}")));
    }
    Ok(g.iter().map(|&x| psi_scalar(x, a)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Supersolution,
    Subsolution,
}

/// Slack of the two differential inequalities, `r = candidate_t - rhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub role: Role,
    pub ru: Vec<f64>,
    pub rv: Vec<f64>,
}

impl ResidualReport {
    /// Whether the claimed role holds nodewise up to `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        let all = |r: &[f64]| match self.role {
            Role::Supersolution => r.iter().all(|&x| x >= -tol),
            Role::Subsolution => r.iter().all(|&x| x <= tol),
        };
        all(&self.ru) && all(&self.rv)
    }

    pub fn max_abs(&self) -> f64 {
        self.ru.iter().chain(&self.rv).fold(0.0, |a, &x| a.max(x.abs()))
    }
}

/// Evaluates the super/subsolution inequalities for a candidate pair. The
/// candidate is time-independent unless `derivative` supplies `(u_t, v_t)`.
pub fn residuals(
    u: &[f64],
    v: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
    role: Role,
    derivative: Option<(&[f64], &[f64])>,
) -> Result<ResidualReport> {
    let (du, dv) = rhs(u, v, params, op, 0.0)?;
    let (ut, vt) = match derivative {
        Some((a, b)) => {
            if a.len() != u.len() || b.len() != v.len() {
                return Err(Error::config("derivative length does not match the state"));
            }
            (a.to_vec(), b.to_vec())
        }
        None => (vec![0.0; u.len()], vec![0.0; v.len()]),
    };
    Ok(ResidualReport {
        role,
        ru: ut.iter().zip(&du).map(|(a, b)| a - b).collect(),
        rv: vt.iter().zip(&dv).map(|(a, b)| a - b).collect(),
    })
}

/// Whether the initial right-hand sides are nonpositive (and strictly
/// negative) at every node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneVerdict {
    pub u: bool,
    pub v: bool,
    pub u_strict: bool,
    pub v_strict: bool,
}

pub fn check_monotone_criterion(
    u0: &[f64],
    v0: &[f64],
    params: &ModelParams,
    op: &NonlocalOperator,
) -> Result<MonotoneVerdict> {
    let (du, dv) = rhs(u0, v0, params, op, 0.0)?;
    Ok(MonotoneVerdict {
        u: du.iter().all(|&x| x <= 0.0),
        v: dv.iter().all(|&x| x <= 0.0),
        u_strict: du.iter().all(|&x| x < 0.0),
        v_strict: dv.iter().all(|&x| x < 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{assemble_operator, build_kernel, Domain, Profile};
    use proptest::prelude::*;

    fn op() -> NonlocalOperator {
        let d = Domain::interval(-1.0, 1.0, 41).unwrap();
        let k = build_kernel(Profile::Tent, 0.5, 1).unwrap();
        assemble_operator(&d, &k).unwrap()
    }

    fn unit(l: f64) -> ModelParams {
        ModelParams::new(l, l, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rhs_on_constant_one() {
        let op = op();
        let n = op.len();
        let (du, dv) = rhs(&vec![1.0; n], &vec![1.0; n], &unit(0.1), &op, DEFAULT_FLOOR).unwrap();
        assert!(du.iter().chain(&dv).all(|&x| x == -0.1));
    }

    #[test]
    fn rhs_without_absorption_is_half_boundary_mass() {
        let op = op();
        let n = op.len();
        let m = ModelParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (du, dv) = rhs(&vec![0.5; n], &vec![1.0; n], &m, &op, DEFAULT_FLOOR).unwrap();
        for i in 0..n {
            let expect = (1.0 - op.row_sum(i)) * 0.5;
            assert!((du[i] - expect).abs() < 1e-15);
            assert!(du[i] >= 0.0);
            assert_eq!(dv[i], 0.0);
        }
    }

    #[test]
    fn rhs_signals_singularity() {
        let op = op();
        let n = op.len();
        let mut v = vec![1.0; n];
        v[7] = 1e-13;
        let e = rhs(&vec![1.0; n], &v, &unit(1.0), &op, DEFAULT_FLOOR).unwrap_err();
        assert!(matches!(e, Error::Singularity { component: Component::V, node: 7, .. }));
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi_scalar(0.7, 0.0), 0.7);
        assert_eq!(psi_scalar(1.0, 1.0), 0.0);
        assert!((psi_scalar(0.5, 2.0) + 2.0).abs() < 1e-15);
        assert!(matches!(psi(&[1.0, 0.0], 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn psi_derivative_is_inverse_power() {
        for a in [0.0, 0.5, 1.0, 1.5, 3.0] {
            for g in [0.1, 0.5, 1.0, 2.0] {
                let h = 1e-6 * g;
                let fd = (psi_scalar(g + h, a) - psi_scalar(g - h, a)) / (2.0 * h);
                let exact = pow(g, -a);
                assert!(((fd - exact) / exact).abs() < 1e-6, "a={a} g={g}");
            }
        }
    }

    #[test]
    fn constant_upper_bounds_are_supersolutions() {
        let op = op();
        let n = op.len();
        for (m, nn) in [(1.0, 1.0), (1.5, 1.0), (2.0, 3.0)] {
            let r = residuals(&vec![m; n], &vec![nn; n], &unit(0.3), &op, Role::Supersolution, None).unwrap();
            assert!(r.holds(0.0));
        }
    }

    #[test]
    fn small_constants_have_positive_slack() {
        // rhs_i = 0.9 b_i - 100, so r_i = 100 - 0.9 b_i > 0.
        let op = op();
        let n = op.len();
        let r = residuals(&vec![0.1; n], &vec![0.1; n], &unit(1.0), &op, Role::Supersolution, None).unwrap();
        for i in 0..n {
            let b = op.boundary_mass()[i];
            assert!((r.ru[i] - (100.0 - 0.9 * b)).abs() < 1e-10);
        }
        assert!(r.holds(0.0));
    }

    #[test]
    fn explicit_derivative_is_used() {
        let op = op();
        let n = op.len();
        let m = ModelParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let slope = vec![-1.0; n];
        let r = residuals(&vec![1.0; n], &vec![1.0; n], &m, &op, Role::Subsolution, Some((&slope, &slope))).unwrap();
        assert!(r.ru.iter().all(|&x| x == -1.0));
        assert!(r.holds(0.0));
    }

    #[test]
    fn monotone_criterion_examples() {
        let op = op();
        let n = op.len();
        let one = vec![1.0; n];
        let v = check_monotone_criterion(&one, &one, &unit(0.1), &op).unwrap();
        assert!(v.u && v.v && v.u_strict && v.v_strict);
        let zero = ModelParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let v = check_monotone_criterion(&one, &one, &zero, &op).unwrap();
        assert!(v.u && v.v && !v.u_strict && !v.v_strict);
        let v = check_monotone_criterion(&vec![0.5; n], &one, &zero, &op).unwrap();
        assert!(!v.u && v.v);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(-1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        let z = ModelParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(z.validate_strict().is_err());
    }

    proptest! {
        #[test]
        fn residual_of_rhs_with_its_own_derivative_vanishes(
            seed in any::<u64>(), l in 0.0f64..2.0, e in 0.1f64..3.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let op = op();
            let n = op.len();
            let m = ModelParams::new(l, l, e, e, e, e).unwrap();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
            let (du, dv) = rhs(&u, &v, &m, &op, DEFAULT_FLOOR).unwrap();
            let r = residuals(&u, &v, &m, &op, Role::Supersolution, Some((&du, &dv))).unwrap();
            prop_assert_eq!(r.max_abs(), 0.0);
        }
    }
}
