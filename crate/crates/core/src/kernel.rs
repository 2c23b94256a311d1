//! Admissible kernels and the discrete nonlocal operator on uniform box grids.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Largest boundary-mass deficit that is silently clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Tent,
    Bump,
    Epanechnikov,
}

impl Profile {
    /// Unnormalized radial profile at `rho = |s| / R`.
    pub fn shape(self, rho: f64) -> f64 {
        let rho = rho.abs();
        if rho >= 1.0 {
            return 0.0;
        }
        match self {
            Profile::Tent => 1.0 - rho,
            Profile::Bump => (-1.0 / (1.0 - rho * rho)).exp(),
            Profile::Epanechnikov => 1.0 - rho * rho,
        }
    }

    /// Whether the profile is continuously differentiable on all of R^d.
    pub fn is_c1(self) -> bool {
        !matches!(self, Profile::Tent)
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Tent => "tent",
            Profile::Bump => "bump",
            Profile::Epanechnikov => "epanechnikov",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tent" => Ok(Profile::Tent),
            "bump" => Ok(Profile::Bump),
            "epanechnikov" => Ok(Profile::Epanechnikov),
            other => Err(Error::config(format!("unsupported kernel profile '{other}'"))),
        }
    }
}

/// A normalized radial kernel `J(s) = normalization * profile(|s| / R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub profile: Profile,
    pub radius: f64,
    pub dim: usize,
    pub normalization: f64,
}

impl KernelSpec {
    /// Kernel value at distance `r` from the origin.
    pub fn radial(&self, r: f64) -> f64 {
        self.normalization * self.profile.shape(r / self.radius)
    }

    /// Kernel value at the displacement `s` (length must equal `dim`).
    pub fn at(&self, s: &[f64]) -> f64 {
        let r = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.radial(r)
    }

    /// Total mass of the kernel, recomputed by quadrature.
    pub fn mass(&self) -> f64 {
        self.normalization * unnormalized_mass(self.profile, self.radius, self.dim)
    }

    /// Runs with a kernel outside the C^1 class are reported as such.
    pub fn sub_hypothesis(&self) -> bool {
        !self.profile.is_c1()
    }
}

fn unnormalized_mass(profile: Profile, radius: f64, dim: usize) -> f64 {
    let f = |r: f64| profile.shape(r / radius);
    match dim {
        1 => 2.0 * quadrature::integrate(f, 0.0, radius, 1e-14 * radius).0,
        _ => {
            // Quarter disc by symmetry, inner integral along y.
            let outer = |x: f64| {
                let ymax = (radius * radius - x * x).max(0.0).sqrt();
                quadrature::integrate(|y| f((x * x + y * y).sqrt()), 0.0, ymax, 1e-14 * radius).0
            };
            4.0 * quadrature::integrate(outer, 0.0, radius, 1e-13 * radius * radius).0
        }
    }
}

pub fn build_kernel(profile: Profile, radius: f64, dim: usize) -> Result<KernelSpec> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::config(format!("kernel radius must be > 0, got {radius}")));
    }
    if dim != 1 && dim != 2 {
        return Err(Error::config(format!("kernel dimension must be 1 or 2, got {dim}")));
    }
    let mass = unnormalized_mass(profile, radius, dim);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Quadrature(format!("kernel mass evaluated to {mass}")));
    }
    Ok(KernelSpec { profile, radius, dim, normalization: 1.0 / mass })
}

/// Axis-aligned box discretized by a uniform tensor grid that includes the
/// boundary. Nodes are numbered with the first axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
}

impl Domain {
    pub fn new(lower: &[f64], upper: &[f64], nodes: &[usize]) -> Result<Self> {
        let dim = lower.len();
        if dim != 1 && dim != 2 {
            return Err(Error::config(format!("domain dimension must be 1 or 2, got {dim}")));
        }
        if upper.len() != dim || nodes.len() != dim {
            return Err(Error::config("domain bounds and node counts must have equal length"));
        }
        for a in 0..dim {
            if !(lower[a].is_finite() && upper[a].is_finite() && lower[a] < upper[a]) {
                return Err(Error::config(format!(
                    "domain axis {a}: need finite lower < upper, got [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            if nodes[a] < 2 {
                return Err(Error::config(format!("domain axis {a}: need at least 2 nodes")));
            }
        }
        Ok(Domain { lower: lower.to_vec(), upper: upper.to_vec(), nodes: nodes.to_vec() })
    }

    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        Domain::new(&[a], &[b], &[n])
    }

    pub fn rectangle(lower: [f64; 2], upper: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        Domain::new(&lower, &upper, &nodes)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.nodes[axis] - 1) as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Integer grid index of node `i` along each axis.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        let nx = self.nodes[0];
        [i % nx, i / nx]
    }

    /// Coordinates of node `i`; the second entry is 0 in 1D.
    pub fn coords(&self, i: usize) -> [f64; 2] {
        let [ix, iy] = self.multi_index(i);
        let x = self.lower[0] + ix as f64 * self.spacing(0);
        let y = if self.dim() == 2 { self.lower[1] + iy as f64 * self.spacing(1) } else { 0.0 };
        [x, y]
    }

    /// Distance from node `i` to the boundary of the box.
    pub fn distance_to_boundary(&self, i: usize) -> f64 {
        let c = self.coords(i);
        (0..self.dim()).map(|a| (c[a] - self.lower[a]).min(self.upper[a] - c[a])).fold(f64::INFINITY, f64::min)
    }
}

/// Discrete `J * u` over the grid plus the exterior mass carried by the
/// Dirichlet data `u = 1` outside the domain.
///
/// Rows are stored in CSR form. Every row satisfies `sum_j w_ij + b_i == 1`
/// in floating point.
#[derive(Clone, Debug)]
pub struct NonlocalOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    boundary_mass: Vec<f64>,
    domain: Option<Domain>,
    kernel: Option<KernelSpec>,
    stencil_sum: f64,
}

pub fn assemble_operator(domain: &Domain, kernel: &KernelSpec) -> Result<NonlocalOperator> {
    let dim = domain.dim();
    if kernel.dim != dim {
        return Err(Error::config(format!("kernel dimension {} does not match domain dimension {dim}", kernel.dim)));
    }
    let h = domain.max_spacing();
    if h >= kernel.radius {
        return Err(Error::Resolution(format!(
            "grid spacing {h} must be smaller than the kernel radius {}",
            kernel.radius
        )));
    }

    let hx = domain.spacing(0);
    let hy = if dim == 2 { domain.spacing(1) } else { 1.0 };
    let cell = if dim == 2 { hx * hy } else { hx };
    let kx = (kernel.radius / hx).floor() as i64;
    let ky = if dim == 2 { (kernel.radius / hy).floor() as i64 } else { 0 };
    let width = (2 * kx + 1) as usize;

    // Raw midpoint weights for each lattice offset, then the full-stencil sum.
    let mut stencil = vec![0.0; width * (2 * ky + 1) as usize];
    let mut total = 0.0;
    for oy in -ky..=ky {
        for ox in -kx..=kx {
            let s = [ox as f64 * hx, oy as f64 * hy];
            let w = cell * kernel.at(&s[..dim]);
            stencil[(ox + kx) as usize + width * (oy + ky) as usize] = w;
            total += w;
        }
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Quadrature(format!("stencil mass evaluated to {total}")));
    }
    for w in &mut stencil {
        *w /= total;
    }

    let [nx, ny] = [domain.nodes_per_axis()[0], if dim == 2 { domain.nodes_per_axis()[1] } else { 1 }];
    let n = domain.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut boundary_mass = Vec::with_capacity(n);
    row_ptr.push(0);
    for i in 0..n {
        let [ix, iy] = domain.multi_index(i);
        let (ix, iy) = (ix as i64, iy as i64);
        let start = cols.len();
        let mut diag = None;
        for jy in (iy - ky).max(0)..=(iy + ky).min(ny as i64 - 1) {
            for jx in (ix - kx).max(0)..=(ix + kx).min(nx as i64 - 1) {
                let w = stencil[(jx - ix + kx) as usize + width * (jy - iy + ky) as usize];
                if w > 0.0 {
                    let j = jx as usize + nx * jy as usize;
                    if j == i {
                        diag = Some(cols.len());
                    }
                    cols.push(j);
                    vals.push(w);
                }
            }
        }
        let b = close_row(&mut vals[start..], diag.map(|d| d - start), i)?;
        boundary_mass.push(b);
        row_ptr.push(cols.len());
    }

    Ok(NonlocalOperator {
        row_ptr,
        cols,
        vals,
        boundary_mass,
        domain: Some(domain.clone()),
        kernel: Some(kernel.clone()),
        stencil_sum: total,
    })
}

fn row_sum(row: &[f64]) -> f64 {
    row.iter().sum()
}

/// Chooses `b` so that `fl(sum(row) + b) == 1`, shaving the diagonal weight
/// when rounding pushed the row sum above one.
fn close_row(row: &mut [f64], diag: Option<usize>, i: usize) -> Result<f64> {
    let mut s = row_sum(row);
    if s > 1.0 {
        let excess = s - 1.0;
        if excess > CLAMP_TOLERANCE {
            return Err(Error::Quadrature(format!("row {i} sums to {s}, exceeding 1 by {excess:e}")));
        }
        let d = diag.ok_or_else(|| Error::Quadrature(format!("row {i} has no diagonal entry")))?;
        for _ in 0..64 {
            if s <= 1.0 {
                break;
            }
            let cut = (s - 1.0).max(row[d] * f64::EPSILON);
            row[d] = (row[d] - cut).max(0.0);
            s = row_sum(row);
        }
        if s > 1.0 {
            return Err(Error::Quadrature(format!("row {i} could not be closed")));
        }
    }
    let mut b = 1.0 - s;
    for _ in 0..64 {
        let t = s + b;
        if t == 1.0 {
            break;
        }
        b = if t < 1.0 { b.next_up() } else { b.next_down() };
    }
    Ok(b.clamp(0.0, 1.0))
}

impl NonlocalOperator {
    /// Operator with `W = I` and no exterior mass: diffusion vanishes and the
    /// system reduces to its reaction ODE at every node.
    pub fn reaction_only(n: usize) -> Self {
        NonlocalOperator {
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
            boundary_mass: vec![0.0; n],
            domain: None,
            kernel: None,
            stencil_sum: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.boundary_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary_mass.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    /// Sum of raw midpoint weights over the full interior stencil, before
    /// renormalization. Its distance from 1 is the midpoint-rule error.
    pub fn stencil_sum(&self) -> f64 {
        self.stencil_sum
    }

    pub fn sub_hypothesis(&self) -> bool {
        self.kernel.as_ref().is_some_and(KernelSpec::sub_hypothesis)
    }

    pub fn boundary_mass(&self) -> &[f64] {
        &self.boundary_mass
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        row_sum(self.row(i).1)
    }

    /// Weight `w_ij`, zero when outside the stencil.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    /// `out_i = sum_j w_ij (u_j - u_i) + b_i (1 - u_i)`, i.e. `J * û - û` for the
    /// extension of `u` by 1. Exactly zero on the constant-one state.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            let ui = u[i];
            let (c, v) = self.row(i);
            let mut acc = 0.0;
            for (&j, &w) in c.iter().zip(v) {
                acc += w * (u[j] - ui);
            }
            out[i] = acc + self.boundary_mass[i] * (1.0 - ui);
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_into(u, &mut out);
        out
    }

    /// `W u + b`: the convolution of the extended state.
    pub fn convolve_extended(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (c, v) = self.row(i);
                let s: f64 = c.iter().zip(v).map(|(&j, &w)| w * u[j]).sum();
                s + self.boundary_mass[i]
            })
            .collect()
    }

    /// Dense copy of `W`.
    pub fn dense_weights(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let (c, v) = self.row(i);
            for (&j, &w) in c.iter().zip(v) {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Hash of the weights and boundary masses, used to detect mismatched
    /// discretizations.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.row_ptr.hash(&mut h);
        self.cols.hash(&mut h);
        for v in self.vals.iter().chain(&self.boundary_mass) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// CSV dump with one `row,col,weight` line per stored weight and a final
    /// `row,exterior,b` line per node.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,weight\n");
        for i in 0..self.len() {
            let (c, v) = self.row(i);
            for (&j, &w) in c.iter().zip(v) {
                s.push_str(&format!("{i},{j},{w:e}\n"));
            }
        }
        for (i, b) in self.boundary_mass.iter().enumerate() {
            s.push_str(&format!("{i},exterior,{b:e}\n"));
        }
        s
    }
}
