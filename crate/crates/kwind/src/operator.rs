//! Dense 2^N x 2^N complex matrices, row-major.

use std::borrow::Cow;

use matrixmultiply::CGemmOption;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported number of sites for dense storage.
pub const MAX_SITES: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    n_sites: usize,
    dim: usize,
    data: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    /// Conjugate transpose.
    H,
}

impl DenseOperator {
    pub fn zeros(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        DenseOperator {
            n_sites,
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(n_sites: usize) -> Self {
        let mut m = Self::zeros(n_sites);
        for i in 0..m.dim {
            m.data[i * m.dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds from row-major entries; the side length must be a power of two.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::arg(format!("dimension {dim} is not a power of two")));
        }
        if data.len() != dim * dim {
            return Err(Error::arg(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        let n_sites = dim.trailing_zeros() as usize;
        if n_sites > MAX_SITES {
            return Err(Error::arg(format!("{n_sites} sites exceeds the dense limit {MAX_SITES}")));
        }
        Ok(DenseOperator { n_sites, dim, data })
    }

    pub fn from_fn(n_sites: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let dim = 1usize << n_sites;
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        DenseOperator { n_sites, dim, data }
    }

    pub fn diagonal(n_sites: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(n_sites);
        assert_eq!(diag.len(), m.dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = Complex64::new(d, 0.0);
        }
        m
    }

    /// Single-site operator `local` (2x2, row-major) acting on `site`.
    /// Site 0 is the leftmost Kronecker factor, i.e. the most significant bit.
    pub fn site_operator(n_sites: usize, site: usize, local: [[Complex64; 2]; 2]) -> Self {
        assert!(site < n_sites);
        let bit = 1usize << (n_sites - 1 - site);
        let mut m = Self::zeros(n_sites);
        let dim = m.dim;
        for r in 0..dim {
            let rb = (r & bit != 0) as usize;
            for cb in 0..2 {
                let c = if cb == 1 { r | bit } else { r & !bit };
                m.data[r * dim + c] = local[rb][cb];
            }
        }
        m
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::arg(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    /// op(self) * op(other).
    pub fn gemm(&self, a_op: Op, other: &Self, b_op: Op) -> Result<Self> {
        self.check_same(other)?;
        let mut out = Self::zeros(self.n_sites);
        let d = self.dim;
        let (a_buf, rsa, csa) = operand(&self.data, a_op, d);
        let (b_buf, rsb, csb) = operand(&other.data, b_op, d);
        // SAFETY: Complex64 is repr(C) {re, im}, matching [f64; 2]; all
        // three buffers hold d*d elements with the strides given.
        unsafe {
            matrixmultiply::zgemm(
                CGemmOption::Standard,
                CGemmOption::Standard,
                d,
                d,
                d,
                [1.0, 0.0],
                a_buf.as_ptr() as *const [f64; 2],
                rsa,
                csa,
                b_buf.as_ptr() as *const [f64; 2],
                rsb,
                csb,
                [0.0, 0.0],
                out.data.as_mut_ptr() as *mut [f64; 2],
                d as isize,
                1,
            );
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.gemm(Op::N, other, Op::N)
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(self.n_sites, |r, c| self.data[c * d + r].conj())
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|x| *x *= s);
        m
    }

    /// self + s * other
    pub fn add_scaled(&self, s: Complex64, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut m = self.clone();
        m.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(x, y)| *x += s * y);
        Ok(m)
    }

    /// [self, a] = self*a - a*self
    pub fn commutator(&self, a: &Self) -> Result<Self> {
        let ha = self.matmul(a)?;
        let ah = a.matmul(self)?;
        ha.add_scaled(Complex64::new(-1.0, 0.0), &ah)
    }

    /// Normalized inner product (A|B) = Tr(A^dag B) / 2^N.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same(other)?;
        let s: Complex64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s / self.dim as f64)
    }

    /// (A|A)
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.dim as f64
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Frobenius norm of self - self^dag.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for r in 0..d {
            for c in r + 1..d {
                s += 2.0 * (self.data[r * d + c] - self.data[c * d + r].conj()).norm_sqr();
            }
            s += (2.0 * self.data[r * d + r].im).powi(2);
        }
        s.sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.data.iter().all(|z| z.im.abs() <= tol)
    }
}

fn operand(data: &[Complex64], op: Op, d: usize) -> (Cow<'_, [Complex64]>, isize, isize) {
    match op {
        Op::N => (Cow::Borrowed(data), d as isize, 1),
        Op::H => (
            Cow::Owned(data.iter().map(|z| z.conj()).collect()),
            1,
            d as isize,
        ),
    }
}

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
        let d = a.dim();
        DenseOperator::from_fn(a.n_sites(), |r, col| {
            (0..d).map(|k| a.get(r, k) * b.get(k, col)).sum()
        })
    }

    fn sample(n: usize, salt: f64) -> DenseOperator {
        DenseOperator::from_fn(n, |r, col| {
            c(
                ((r * 7 + col * 3) as f64 + salt).sin(),
                ((r * 5 + col * 11) as f64 * salt).cos(),
            )
        })
    }

    #[test]
    fn gemm_matches_naive_in_all_modes() {
        let a = sample(3, 0.3);
        let b = sample(3, 1.7);
        let ah = a.adjoint();
        let bh = b.adjoint();
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-12);
        assert!(a.gemm(Op::H, &b, Op::N).unwrap().max_abs_diff(&naive(&ah, &b)) < 1e-12);
        assert!(a.gemm(Op::N, &b, Op::H).unwrap().max_abs_diff(&naive(&a, &bh)) < 1e-12);
        assert!(a.gemm(Op::H, &b, Op::H).unwrap().max_abs_diff(&naive(&ah, &bh)) < 1e-12);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(DenseOperator::from_row_major(3, vec![c(0.0, 0.0); 9]).is_err());
        assert!(DenseOperator::from_row_major(4, vec![c(0.0, 0.0); 9]).is_err());
    }

    #[test]
    fn site_operator_is_kron_ordered() {
        let x = [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let x0 = DenseOperator::site_operator(2, 0, x);
        // X (x) I flips the most significant bit
        assert_eq!(x0.get(0, 2), c(1.0, 0.0));
        assert_eq!(x0.get(1, 3), c(1.0, 0.0));
        assert_eq!(x0.get(0, 1), c(0.0, 0.0));
    }

    #[test]
    fn inner_product_is_normalized() {
        let id = DenseOperator::identity(4);
        assert!((id.norm_sq() - 1.0).abs() < 1e-15);
        assert!((id.inner(&id).unwrap().re - 1.0).abs() < 1e-15);
    }
}
