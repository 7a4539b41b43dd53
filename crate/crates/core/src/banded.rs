//! Banded LU factorization with partial pivoting.
//!
//! Rows are stored with room for the fill-in produced by row interchanges:
//! row `r` holds columns `r - kl ..= r + ku + kl`.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct BandMatrix<F> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Real> BandMatrix<F> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![F::zero(); n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.ku + self.kl);
        r * self.width + (c + self.kl - r)
    }

    /// Adds `value` to entry `(r, c)`; `c` must lie in the declared band.
    pub fn add(&mut self, r: usize, c: usize, value: F) {
        assert!(
            c + self.kl >= r && c <= r + self.ku && c < self.n,
            "entry ({r}, {c}) outside band"
        );
        let k = self.slot(r, c);
        self.data[k] += value;
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        if c + self.kl < r || c > r + self.ku || c >= self.n {
            return F::zero();
        }
        self.data[self.slot(r, c)]
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).fold(F::zero(), |s, c| s + self.data[self.slot(r, c)] * x[c])
            })
            .collect()
    }

    /// Factorizes a copy of the matrix.
    pub fn factor(&self) -> Result<BandLu<F>> {
        let (n, kl, ku, width) = (self.n, self.kl, self.ku, self.width);
        let mut a = self.data.clone();
        let mut piv = vec![0usize; n];
        let slot = |r: usize, c: usize| r * width + (c + kl - r);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let cmax = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = a[slot(k, k)].abs();
            for r in k + 1..=last {
                let m = a[slot(r, k)].abs();
                if m > best {
                    best = m;
                    p = r;
                }
            }
            if !(best > F::zero()) || !best.is_finite() {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            if p != k {
                for c in k..=cmax {
                    a.swap(slot(k, c), slot(p, c));
                }
            }
            let pivot = a[slot(k, k)];
            let len = cmax - k;
            for r in k + 1..=last {
                let ir = slot(r, k);
                let l = a[ir] / pivot;
                a[ir] = l;
                if l == F::zero() {
                    continue;
                }
                // Row k occupies a lower slice than row r, so split there.
                let (head, tail) = a.split_at_mut(r * width);
                let krow = &head[slot(k, k + 1)..slot(k, k + 1) + len];
                let start = (k + 1 + kl) - r;
                let rrow = &mut tail[start..start + len];
                for (dst, &src) in rrow.iter_mut().zip(krow) {
                    *dst -= l * src;
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            width,
            data: a,
            piv,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu<F> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<F>,
    piv: Vec<usize>,
}

impl<F: Real> BandLu<F> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.width + (c + self.kl - r)]
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [F]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != F::zero() {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    b[r] -= self.at(r, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.at(k, c) * b[c];
            }
            b[k] = s / self.at(k, k);
        }
    }
}

/// Euclidean norm.
pub fn norm2<F: Real>(x: &[F]) -> F {
    x.iter().fold(F::zero(), |s, &v| s + v * v).sqrt()
}

/// Solves `A x = b` by banded LU plus iterative refinement until the relative
/// residual `|b - A x| / |b|` is at most `tol`. Returns `(x, residual, refinement steps)`.
pub fn solve_refined<F: Real>(a: &BandMatrix<F>, b: &[F], tol: F) -> Result<(Vec<F>, F, usize)> {
    let bnorm = norm2(b);
    if bnorm == F::zero() {
        return Ok((vec![F::zero(); b.len()], F::zero(), 0));
    }
    let lu = a.factor()?;
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    let mut best = F::infinity();
    for step in 0..=4 {
        let ax = a.mul_vec(&x);
        let mut r: Vec<F> = b.iter().zip(&ax).map(|(&bi, &yi)| bi - yi).collect();
        let rel = norm2(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::Singular(0));
        }
        if rel <= tol {
            return Ok((x, rel, step));
        }
        if rel >= best {
            return Err(Error::ToleranceNotReached {
                achieved: rel.as_f64(),
                tol: tol.as_f64(),
            });
        }
        best = rel;
        lu.solve_in_place(&mut r);
        for (xi, di) in x.iter_mut().zip(&r) {
            *xi += *di;
        }
    }
    Err(Error::ToleranceNotReached {
        achieved: best.as_f64(),
        tol: tol.as_f64(),
    })
}
