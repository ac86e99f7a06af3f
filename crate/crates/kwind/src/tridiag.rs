//! Complex-time propagation on the Krylov chain.
//!
//! `phi(z) = i^{-n} [e^{i T z} e_0]_n` with `T` the real symmetric tridiagonal
//! matrix of Lanczos coefficients. For `z = t + i tau` the factor
//! `e^{-T tau} e_0` is formed first by a Taylor series: with
//! `D = diag((-1)^n)` one has `e^{-T tau} = D e^{T tau} D`, and every term of
//! `e^{T |tau|} e_0` is a nonnegative vector, so the sum is free of
//! cancellation. The unitary factor `e^{i T t}` is then applied through the
//! eigendecomposition of `T`, computed once per propagator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::krylov::minus_i_pow;

#[derive(Clone, Debug)]
pub struct PropagateOptions {
    /// Largest accepted |Im z|.
    pub max_imag: f64,
    /// Boundary amplitude (relative to the norm) that flags truncation.
    pub boundary_threshold: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            max_imag: 25.0,
            boundary_threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Propagated {
    pub phi: Vec<Complex64>,
    /// |phi_{n_max-1}| / |phi|
    pub boundary: f64,
    /// Set when `boundary` exceeds the configured threshold.
    pub truncation_warning: bool,
}

/// Propagator for a fixed chain and imaginary part `tau`, reusable over real
/// times.
#[derive(Clone, Debug)]
pub struct TridiagPropagator {
    tau: f64,
    lambda: Vec<f64>,
    vectors: DMatrix<f64>,
    /// Q^T e^{-T tau} e_0
    coeffs: Vec<f64>,
    threshold: f64,
}

impl TridiagPropagator {
    /// Chain of `n_max` sites using `b[0..n_max-1]` as off-diagonals.
    pub fn new(b: &[f64], n_max: usize, tau: f64) -> Result<Self> {
        Self::with_options(b, n_max, tau, &PropagateOptions::default())
    }

    pub fn with_options(
        b: &[f64],
        n_max: usize,
        tau: f64,
        opts: &PropagateOptions,
    ) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::arg("n_max must be positive"));
        }
        if b.len() + 1 < n_max {
            return Err(Error::arg(format!(
                "need {} Lanczos coefficients for a {n_max}-site chain, got {}",
                n_max - 1,
                b.len()
            )));
        }
        if tau.abs() > opts.max_imag {
            return Err(Error::arg(format!(
                "|Im t| = {} exceeds the configured bound {}",
                tau.abs(),
                opts.max_imag
            )));
        }
        let b = &b[..n_max - 1];
        if b.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::arg("Lanczos coefficients must be finite and nonnegative"));
        }
        let mut t = DMatrix::<f64>::zeros(n_max, n_max);
        for (k, &v) in b.iter().enumerate() {
            t[(k, k + 1)] = v;
            t[(k + 1, k)] = v;
        }
        let eig = SymmetricEigen::new(t);
        let u = imaginary_step(b, tau.abs());
        let u = if tau > 0.0 {
            DVector::from_iterator(
                n_max,
                u.iter().enumerate().map(|(k, x)| if k % 2 == 1 { -x } else { *x }),
            )
        } else {
            DVector::from_vec(u)
        };
        let coeffs = eig.eigenvectors.tr_mul(&u);
        Ok(TridiagPropagator {
            tau,
            lambda: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
            coeffs: coeffs.iter().copied().collect(),
            threshold: opts.boundary_threshold,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Amplitudes at z = t + i tau in the Hermitian-basis convention.
    pub fn at(&self, t: f64) -> Propagated {
        let n = self.len();
        let rot: Vec<Complex64> = self
            .lambda
            .iter()
            .zip(&self.coeffs)
            .map(|(l, a)| Complex64::from_polar(*a, l * t))
            .collect();
        let mut phi = Vec::with_capacity(n);
        for row in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for (k, r) in rot.iter().enumerate() {
                s += r * self.vectors[(row, k)];
            }
            phi.push(minus_i_pow(row) * s);
        }
        finish(phi, self.threshold)
    }
}

fn finish(mut phi: Vec<Complex64>, threshold: f64) -> Propagated {
    let norm = phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let boundary = phi.last().map(|z| z.norm()).unwrap_or(0.0) / norm.max(f64::MIN_POSITIVE);
    phi.shrink_to_fit();
    Propagated {
        phi,
        boundary,
        truncation_warning: boundary > threshold,
    }
}

/// e^{T s} e_0 for s >= 0 by Taylor substeps on nonnegative vectors.
fn imaginary_step(b: &[f64], s: f64) -> Vec<f64> {
    let n = b.len() + 1;
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    if s == 0.0 || n == 1 {
        return v;
    }
    let bmax = b.iter().copied().fold(0.0, f64::max);
    let steps = ((2.0 * bmax * s) / 4.0).ceil().max(1.0) as usize;
    let h = s / steps as f64;
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        term.copy_from_slice(&v);
        let mut k = 1.0;
        loop {
            apply_t(b, &term, &mut next);
            let f = h / k;
            let mut tmax: f64 = 0.0;
            for (x, y) in next.iter().zip(term.iter_mut()) {
                *y = x * f;
                tmax = tmax.max(*y);
            }
            let mut vmax: f64 = 0.0;
            for (a, y) in v.iter_mut().zip(&term) {
                *a += y;
                vmax = vmax.max(*a);
            }
            if tmax <= 1e-18 * vmax {
                break;
            }
            k += 1.0;
        }
    }
    v
}

fn apply_t(b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let mut s = 0.0;
        if i > 0 {
            s += b[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            s += b[i] * x[i + 1];
        }
        out[i] = s;
    }
}

/// One-shot `tridiag_propagate(b, z, n_max)`.
pub fn tridiag_propagate(b: &[f64], z: Complex64, n_max: usize) -> Result<Propagated> {
    Ok(TridiagPropagator::new(b, n_max, z.im)?.at(z.re))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_chain_rotates() {
        let pr = TridiagPropagator::new(&[2.0], 2, 0.0).unwrap();
        for t in [0.0, 0.3, 1.7] {
            let phi = pr.at(t).phi;
            assert!((phi[0] - Complex64::new((2.0 * t).cos(), 0.0)).norm() < 1e-14);
            assert!((phi[1] - Complex64::new((2.0 * t).sin(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn origin_is_the_seed() {
        let b: Vec<f64> = (1..40).map(|n| n as f64).collect();
        let pr = tridiag_propagate(&b, Complex64::new(0.0, 0.0), 40).unwrap();
        assert!((pr.phi[0] - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        assert!(pr.phi[1..].iter().all(|z| z.norm() < 1e-13));
        assert!(!pr.truncation_warning);
    }

    #[test]
    fn real_time_is_unitary() {
        let b: Vec<f64> = (1..60).map(|n| (n as f64).sqrt()).collect();
        let pr = TridiagPropagator::new(&b, 60, 0.0).unwrap();
        for t in [0.5, 2.0, 4.0] {
            let s: f64 = pr.at(t).phi.iter().map(|z| z.norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn imaginary_shift_matches_linear_solution() {
        // b_n = n: phi_n = tanh(z)^n / cosh(z)
        let b: Vec<f64> = (1..300).map(|n| n as f64).collect();
        let z = Complex64::new(0.8, 0.3);
        let pr = tridiag_propagate(&b, z, 300).unwrap();
        for n in [0usize, 1, 2, 10] {
            let want = z.tanh().powu(n as u32) / z.cosh();
            assert!((pr.phi[n] - want).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn short_chain_flags_truncation() {
        let b = vec![1.0; 9];
        let pr = TridiagPropagator::new(&b, 10, 0.0).unwrap().at(8.0);
        assert!(pr.truncation_warning);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TridiagPropagator::new(&[1.0], 3, 0.0).is_err());
        assert!(TridiagPropagator::new(&[-1.0], 2, 0.0).is_err());
        assert!(TridiagPropagator::new(&[1.0], 2, 100.0).is_err());
    }
}
