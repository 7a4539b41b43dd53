//! Grids, sampled fields, membrane profiles, parameters and discrete norms.
//!
//! The reference rectangle is `[-1, 1] x [0, 1]` in `(x', z')`. Membrane
//! profiles live on the x-lattice of the same grid, so traces of the
//! potential and membrane values are exchanged node by node.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform tensor lattice on `[-1, 1] x [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid2 {
    nx: usize,
    nz: usize,
}

impl Grid2 {
    /// Builds the grid; `nx` must be odd so that `x' = 0` is a node.
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points per direction, got nx={nx}, nz={nz}"
            )));
        }
        if nx % 2 == 0 {
            return Err(Error::InvalidGrid(format!("nx must be odd, got {nx}")));
        }
        Ok(Self { nx, nz })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx<F: Real>(&self) -> F {
        F::lit(2.0) / F::from_usize_exact(self.nx - 1)
    }

    pub fn hz<F: Real>(&self) -> F {
        F::one() / F::from_usize_exact(self.nz - 1)
    }

    /// `x'_i`, computed so that `x(nx-1-i) == -x(i)` holds bitwise.
    pub fn x<F: Real>(&self, i: usize) -> F {
        x_node(self.nx, i)
    }

    /// `z'_j = j / (nz - 1)`.
    pub fn z<F: Real>(&self, j: usize) -> F {
        F::from_usize_exact(j) / F::from_usize_exact(self.nz - 1)
    }

    pub fn xs<F: Real>(&self) -> Vec<F> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn zs<F: Real>(&self) -> Vec<F> {
        (0..self.nz).map(|j| self.z(j)).collect()
    }

    /// Flat index of node `(i, j)`; x-major, z contiguous.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nz + j
    }

    /// Area of the reference rectangle.
    pub fn area<F: Real>(&self) -> F {
        F::lit(2.0)
    }
}

/// Make a uniform grid.
pub fn make_grid(nx: usize, nz: usize) -> Result<Grid2> {
    Grid2::new(nx, nz)
}

/// Node `i` of an `n`-point uniform lattice on `[-1, 1]`.
#[inline]
pub fn x_node<F: Real>(n: usize, i: usize) -> F {
    let num = 2.0 * i as f64 - (n - 1) as f64;
    F::lit(num) / F::from_usize_exact(n - 1)
}

/// Trapezoid weight of node `i` in an `n`-point lattice (spacing excluded).
#[inline]
pub fn trapezoid_weight<F: Real>(n: usize, i: usize) -> F {
    if i == 0 || i + 1 == n {
        F::lit(0.5)
    } else {
        F::one()
    }
}

/// Scalar field sampled on a [`Grid2`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field2<F> {
    grid: Grid2,
    values: Vec<F>,
}

impl<F: Real> Field2<F> {
    pub fn zeros(grid: Grid2) -> Self {
        Self {
            grid,
            values: vec![F::zero(); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2, f: impl Fn(F, F) -> F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.nz() {
                values.push(f(x, grid.z(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid2, values: Vec<F>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> F {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: F) {
        let k = self.grid.idx(i, j);
        self.values[k] = value;
    }

    /// Column `x' = x'_i` as a vector over `z'`.
    pub fn column(&self, i: usize) -> &[F] {
        let start = self.grid.idx(i, 0);
        &self.values[start..start + self.grid.nz()]
    }

    /// Row `z' = z'_j` as a vector over `x'`.
    pub fn row(&self, j: usize) -> Vec<F> {
        (0..self.grid.nx()).map(|i| self.at(i, j)).collect()
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                found: other.grid.len(),
            });
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> F {
        crate::scalar::max_abs(&self.values)
    }
}

/// Upper (`u`) and lower (`v`) membrane displacements on the x-lattice.
///
/// Construction enforces `u(±1) = 0`, `v(±1) = -1` exactly and `u > v`
/// at every node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembranePair<F> {
    u: Vec<F>,
    v: Vec<F>,
}

impl<F: Real> MembranePair<F> {
    pub fn new(u: Vec<F>, v: Vec<F>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: v.len(),
            });
        }
        let n = u.len();
        if n < 3 {
            return Err(Error::InvalidPair(format!("need at least 3 nodes, got {n}")));
        }
        if u[0] != F::zero() || u[n - 1] != F::zero() {
            return Err(Error::InvalidPair("u(±1) must be exactly 0".into()));
        }
        if v[0] != -F::one() || v[n - 1] != -F::one() {
            return Err(Error::InvalidPair("v(±1) must be exactly -1".into()));
        }
        if let Some(k) = (0..n).find(|&k| !(u[k] - v[k] > F::zero())) {
            return Err(Error::NonpositiveGap {
                index: k,
                gap: (u[k] - v[k]).as_f64(),
            });
        }
        Ok(Self { u, v })
    }

    /// Builds a pair from interior-agnostic profiles by overwriting the end
    /// nodes with the exact boundary values.
    pub fn with_boundary_values(mut u: Vec<F>, mut v: Vec<F>) -> Result<Self> {
        let n = u.len();
        if n >= 1 && v.len() == n {
            u[0] = F::zero();
            u[n - 1] = F::zero();
            v[0] = -F::one();
            v[n - 1] = -F::one();
        }
        Self::new(u, v)
    }

    pub fn flat(n: usize) -> Self {
        Self {
            u: vec![F::zero(); n],
            v: vec![-F::one(); n],
        }
    }

    pub fn u(&self) -> &[F] {
        &self.u
    }

    pub fn v(&self) -> &[F] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn gap(&self) -> Vec<F> {
        self.u.iter().zip(&self.v).map(|(&a, &b)| a - b).collect()
    }

    pub fn min_gap(&self) -> F {
        self.u
            .iter()
            .zip(&self.v)
            .fold(F::infinity(), |m, (&a, &b)| m.min(a - b))
    }

    /// Checks that the pair lives on the x-lattice of `grid`.
    pub fn check_grid(&self, grid: &Grid2) -> Result<()> {
        if self.len() != grid.nx() {
            return Err(Error::DimensionMismatch {
                expected: grid.nx(),
                found: self.len(),
            });
        }
        Ok(())
    }

    /// Piecewise-linear value of `(u, v)` at `x ∈ [-1, 1]`.
    pub fn sample(&self, x: F) -> Option<(F, F)> {
        if !(x >= -F::one() && x <= F::one()) {
            return None;
        }
        let n = self.len();
        let h = F::lit(2.0) / F::from_usize_exact(n - 1);
        let pos = (x + F::one()) / h;
        let k = pos.floor().to_usize().unwrap_or(0).min(n - 2);
        let t = pos - F::from_usize_exact(k);
        let lerp = |w: &[F]| w[k] + t * (w[k + 1] - w[k]);
        Some((lerp(&self.u), lerp(&self.v)))
    }
}

/// The zero-voltage pair `u ≡ 0`, `v ≡ -1`.
pub fn flat_pair<F: Real>(grid: &Grid2) -> MembranePair<F> {
    MembranePair::flat(grid.nx())
}

/// Physical parameters of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysParams<F> {
    pub eps: F,
    pub lambda: F,
    pub mu: F,
    pub r0: F,
}

impl<F: Real> PhysParams<F> {
    pub fn new(eps: F, lambda: F, mu: F, r0: F) -> Result<Self> {
        let p = Self { eps, lambda, mu, r0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > F::zero() && self.eps < F::one()) {
            return Err(Error::InvalidParameter(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.lambda >= F::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.mu >= F::zero()) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mu must be finite and >= 0, got {}",
                self.mu
            )));
        }
        if !(self.r0 > F::zero() && self.r0 < F::lit(2.0) / F::lit(3.0)) {
            return Err(Error::InvalidParameter(format!(
                "r0 must lie in (0, 2/3), got {}",
                self.r0
            )));
        }
        Ok(())
    }

    /// `κ₀ = (2/3 - r₀) / 2`.
    pub fn kappa0(&self) -> F {
        kappa0(self.r0)
    }
}

pub fn kappa0<F: Real>(r0: F) -> F {
    (F::lit(2.0) / F::lit(3.0) - r0) / F::lit(2.0)
}

/// Discrete norms used by the estimates and convergence checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport<F> {
    pub l2: F,
    pub linf: F,
    pub w1inf: F,
}

/// Norms of a field on the reference rectangle (trapezoid-weighted L2).
///
/// `w1inf` is the maximum of `linf` and of the one-sided difference
/// quotients in both directions.
pub fn field_norms<F: Real>(field: &Field2<F>, grid: &Grid2) -> Result<NormReport<F>> {
    if field.grid() != *grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: field.values().len(),
        });
    }
    let (nx, nz) = (grid.nx(), grid.nz());
    let (hx, hz) = (grid.hx::<F>(), grid.hz::<F>());
    let mut sum = F::zero();
    let mut linf = F::zero();
    let mut slope = F::zero();
    for i in 0..nx {
        let wi = trapezoid_weight::<F>(nx, i);
        for j in 0..nz {
            let val = field.at(i, j);
            sum += wi * trapezoid_weight::<F>(nz, j) * val * val;
            linf = linf.max(val.abs());
            if i + 1 < nx {
                slope = slope.max(((field.at(i + 1, j) - val) / hx).abs());
            }
            if j + 1 < nz {
                slope = slope.max(((field.at(i, j + 1) - val) / hz).abs());
            }
        }
    }
    Ok(NormReport {
        l2: (sum * hx * hz).sqrt(),
        linf,
        w1inf: linf.max(slope),
    })
}

/// Norms of a profile on the x-lattice of `grid`.
pub fn profile_norms<F: Real>(values: &[F], grid: &Grid2) -> Result<NormReport<F>> {
    if values.len() != grid.nx() {
        return Err(Error::DimensionMismatch {
            expected: grid.nx(),
            found: values.len(),
        });
    }
    let n = values.len();
    let h = grid.hx::<F>();
    let sum = values
        .iter()
        .enumerate()
        .fold(F::zero(), |s, (i, &w)| s + trapezoid_weight::<F>(n, i) * w * w);
    let linf = crate::scalar::max_abs(values);
    let slope = values
        .windows(2)
        .fold(F::zero(), |m, w| m.max(((w[1] - w[0]) / h).abs()));
    Ok(NormReport {
        l2: (sum * h).sqrt(),
        linf,
        w1inf: linf.max(slope),
    })
}

/// First derivative of a profile with spacing `h`: centered in the interior,
/// second-order one-sided at both ends. Odd symmetry of the result is exact
/// for even input.
pub fn first_derivative<F: Real>(w: &[F], h: F) -> Vec<F> {
    let n = w.len();
    assert!(n >= 3, "derivative needs at least 3 nodes");
    let two_h = F::lit(2.0) * h;
    let (three, four) = (F::lit(3.0), F::lit(4.0));
    let mut d = vec![F::zero(); n];
    d[0] = (-three * w[0] + four * w[1] - w[2]) / two_h;
    for i in 1..n - 1 {
        d[i] = (w[i + 1] - w[i - 1]) / two_h;
    }
    d[n - 1] = -((-three * w[n - 1] + four * w[n - 2] - w[n - 3]) / two_h);
    d
}

/// Second derivative of a profile: centered in the interior, four-point
/// second-order one-sided stencil at the ends (three-point when `n == 3`).
pub fn second_derivative<F: Real>(w: &[F], h: F) -> Vec<F> {
    let n = w.len();
    assert!(n >= 3, "derivative needs at least 3 nodes");
    let h2 = h * h;
    let two = F::lit(2.0);
    let mut d = vec![F::zero(); n];
    for i in 1..n - 1 {
        d[i] = (w[i - 1] - two * w[i] + w[i + 1]) / h2;
    }
    if n >= 4 {
        let (four, five) = (F::lit(4.0), F::lit(5.0));
        d[0] = (two * w[0] - five * w[1] + four * w[2] - w[3]) / h2;
        d[n - 1] = (two * w[n - 1] - five * w[n - 2] + four * w[n - 3] - w[n - 4]) / h2;
    } else {
        d[0] = d[1];
        d[n - 1] = d[1];
    }
    d
}

/// Interior second differences `(w[i-1] - 2 w[i] + w[i+1]) / h²`, `i = 1..n-1`.
pub fn interior_second_differences<F: Real>(w: &[F], h: F) -> Vec<F> {
    let h2 = h * h;
    w.windows(3)
        .map(|s| (s[0] - F::lit(2.0) * s[1] + s[2]) / h2)
        .collect()
}

/// Largest `|w[i] - w[n-1-i]|`.
pub fn evenness_defect<F: Real>(w: &[F]) -> F {
    let n = w.len();
    (0..n / 2).fold(F::zero(), |m, i| m.max((w[i] - w[n - 1 - i]).abs()))
}
