//! Size and Krylov winding diagnostics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{KrylovAmplitudes, KrylovData};
use crate::operator::c;
use crate::pauli::{decompose, size_table, PauliCoefficients};

pub const DEFAULT_MU_POINTS: usize = 1024;
pub const DEFAULT_SIZE_FLOOR: f64 = 1e-12;
const FLAT_RATIO: f64 = 1.0 + 1e-9;

/// p(l) = sum_{|P|=l} |c_P|^2 and q(l) = sum_{|P|=l} c_P^2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeDistributions {
    pub t: f64,
    pub p: Vec<f64>,
    pub q: Vec<Complex64>,
}

impl SizeDistributions {
    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// max_l (|q(l)| - p(l)), nonpositive up to rounding.
    pub fn alignment_excess(&self) -> f64 {
        self.q
            .iter()
            .zip(&self.p)
            .map(|(q, p)| q.norm() - p)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn size_distributions(cf: &PauliCoefficients, t: f64) -> SizeDistributions {
    let n = cf.n_sites();
    let sizes = size_table(n);
    let mut p = vec![0.0; n + 1];
    let mut q = vec![c(0.0, 0.0); n + 1];
    for (v, &s) in cf.as_slice().iter().zip(&sizes) {
        p[s as usize] += v.norm_sqr();
        q[s as usize] += v * v;
    }
    SizeDistributions { t, p, q }
}

/// Uniform grid of `points` values on [-pi, pi).
pub fn uniform_mu_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| -PI + 2.0 * PI * k as f64 / points as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub mu_k: f64,
    /// Half-width at half maximum of |value|^2.
    pub width: f64,
    pub peak_magnitude: f64,
    pub flat: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPeak {
    pub mu_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub mu_k: f64,
    pub width: f64,
    pub peak_magnitude: f64,
    pub flat: bool,
}

impl FourierPeak {
    pub fn from_values(mu_grid: &[f64], values: Vec<Complex64>) -> Self {
        let pk = find_peak(&values, mu_grid);
        FourierPeak {
            mu_grid: mu_grid.to_vec(),
            values,
            mu_k: pk.mu_k,
            width: pk.width,
            peak_magnitude: pk.peak_magnitude,
            flat: pk.flat,
        }
    }

    pub fn estimate(&self) -> PeakEstimate {
        PeakEstimate {
            mu_k: self.mu_k,
            width: self.width,
            peak_magnitude: self.peak_magnitude,
            flat: self.flat,
        }
    }
}

/// sum_n a_n e^{i mu n} on every grid point (Horner in e^{i mu}).
pub fn fourier_series(coeffs: &[Complex64], mu_grid: &[f64]) -> Vec<Complex64> {
    mu_grid
        .iter()
        .map(|&mu| {
            let x = Complex64::from_polar(1.0, mu);
            coeffs.iter().rev().fold(c(0.0, 0.0), |acc, a| acc * x + a)
        })
        .collect()
}

/// C_K(mu) = sum_n phi_n^2 e^{i mu n}; `phi` is used as given.
pub fn fourier_ck(phi: &[Complex64], mu_grid: &[f64]) -> FourierPeak {
    let sq: Vec<Complex64> = phi.iter().map(|z| z * z).collect();
    FourierPeak::from_values(mu_grid, fourier_series(&sq, mu_grid))
}

/// C_K of amplitudes rescaled to unit norm.
pub fn fourier_ck_normalized(amps: &KrylovAmplitudes, mu_grid: &[f64]) -> FourierPeak {
    fourier_ck(&amps.normalized(), mu_grid)
}

/// C_S(mu) = sum_l q(l) e^{i mu l}.
pub fn fourier_cs(sd: &SizeDistributions, mu_grid: &[f64]) -> FourierPeak {
    FourierPeak::from_values(mu_grid, fourier_series(&sd.q, mu_grid))
}

fn is_periodic(grid: &[f64]) -> bool {
    let n = grid.len();
    if n < 2 {
        return false;
    }
    let d = 2.0 * PI / n as f64;
    grid.windows(2).all(|w| ((w[1] - w[0]) - d).abs() < 1e-9)
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Peak of |values| refined by a 3-point parabola, and the HWHM of
/// |values|^2 by linear interpolation between grid points.
///
/// A grid spanning [-pi, pi) uniformly is treated as periodic. If the half
/// maximum is crossed on one side only, that side sets the width; if on
/// neither, the width is half the grid span.
pub fn find_peak(values: &[Complex64], mu_grid: &[f64]) -> PeakEstimate {
    assert_eq!(values.len(), mu_grid.len());
    assert!(values.len() >= 5, "find_peak needs at least 5 grid points");
    let n = values.len();
    let mags: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let (k, &mmax) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mmin = mags.iter().copied().fold(f64::INFINITY, f64::min);
    if mmax == 0.0 || mmax < FLAT_RATIO * mmin {
        return PeakEstimate {
            mu_k: mu_grid[k],
            width: f64::NAN,
            peak_magnitude: mmax,
            flat: true,
        };
    }
    let periodic = is_periodic(mu_grid);
    let span = mu_grid[n - 1] - mu_grid[0];
    let pos = |i: isize| -> Option<(f64, f64)> {
        if periodic {
            let j = i.rem_euclid(n as isize) as usize;
            let turns = i.div_euclid(n as isize) as f64;
            Some((mu_grid[j] + 2.0 * PI * turns, mags[j]))
        } else if i >= 0 && (i as usize) < n {
            Some((mu_grid[i as usize], mags[i as usize]))
        } else {
            None
        }
    };

    let ki = k as isize;
    let mut mu_k = mu_grid[k];
    if let (Some((x0, y0)), Some((x1, y1)), Some((x2, y2))) = (pos(ki - 1), pos(ki), pos(ki + 1)) {
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        if a < 0.0 {
            let v = -b / (2.0 * a);
            if v > x0 && v < x2 {
                mu_k = v;
            }
        }
    }
    if periodic {
        mu_k = wrap_angle(mu_k);
    }

    let half = 0.5 * mmax * mmax;
    let reach = if periodic { n as isize / 2 } else { n as isize };
    let crossing = |dir: isize| -> Option<f64> {
        let (mut xp, mut yp) = (mu_grid[k], mmax * mmax);
        for s in 1..=reach {
            let (x, y) = pos(ki + dir * s)?;
            let y2 = y * y;
            if y2 <= half {
                let frac = (yp - half) / (yp - y2);
                return Some(xp + frac * (x - xp));
            }
            xp = x;
            yp = y2;
        }
        None
    };
    let width = match (crossing(1), crossing(-1)) {
        (Some(r), Some(l)) => 0.5 * (r - l),
        (Some(r), None) => r - mu_grid[k],
        (None, Some(l)) => mu_grid[k] - l,
        (None, None) => 0.5 * if periodic { 2.0 * PI } else { span },
    };
    PeakEstimate {
        mu_k,
        width,
        peak_magnitude: mmax,
        flat: false,
    }
}

/// Size-resolved overlap matrix M_nm(l) = (O_n|P_l|O_m) with its spectrum.
#[derive(Clone, Debug)]
pub struct OverlapSpectrum {
    pub ell: usize,
    pub m: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column nu is psi_nu.
    pub eigenvectors: DMatrix<f64>,
}

impl OverlapSpectrum {
    pub fn from_matrix(ell: usize, m: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let k = m.nrows();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(k, k, |r, col| eig.eigenvectors[(r, order[col])]);
        OverlapSpectrum {
            ell,
            m,
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.m - self.m.transpose()).abs().max()
    }
}

/// Pauli coefficients of every Hermitian basis operator, as real vectors.
fn basis_coefficients(kd: &KrylovData) -> Result<Vec<Vec<f64>>> {
    (0..kd.depth())
        .map(|n| {
            let cf = decompose(&kd.basis(n)?)?;
            let scale = cf.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let imag = cf.as_slice().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            if imag > 1e-10 * scale.max(1.0) {
                return Err(Error::Numeric {
                    context: format!("basis operator {n} is not Hermitian"),
                    estimate: imag,
                    bound: 1e-10,
                });
            }
            Ok(cf.as_slice().iter().map(|z| z.re).collect())
        })
        .collect()
}

fn sector_matrix(coeffs: &[Vec<f64>], sizes: &[u8], ell: usize) -> DMatrix<f64> {
    let idx: Vec<usize> = sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s as usize == ell)
        .map(|(i, _)| i)
        .collect();
    let k = coeffs.len();
    let cm = DMatrix::from_fn(k, idx.len(), |n, j| coeffs[n][idx[j]]);
    &cm * cm.transpose()
}

/// M(l) for a single sector.
pub fn overlap_matrix(kd: &KrylovData, ell: usize) -> Result<OverlapSpectrum> {
    if ell > kd.n_sites() {
        return Err(Error::arg(format!("size {ell} outside 0..={}", kd.n_sites())));
    }
    let coeffs = basis_coefficients(kd)?;
    let sizes = size_table(kd.n_sites());
    Ok(OverlapSpectrum::from_matrix(ell, sector_matrix(&coeffs, &sizes, ell)))
}

/// M(l) for every l = 0..=N, decomposing each basis operator once.
pub fn overlap_matrices(kd: &KrylovData) -> Result<Vec<OverlapSpectrum>> {
    let coeffs = basis_coefficients(kd)?;
    let sizes = size_table(kd.n_sites());
    Ok((0..=kd.n_sites())
        .map(|ell| OverlapSpectrum::from_matrix(ell, sector_matrix(&coeffs, &sizes, ell)))
        .collect())
}

/// p and q rebuilt from the overlap spectra:
/// `Q_nu = sum_n Phi_n psi_nu,n`, `p = sum lambda |Q|^2`, `q = sum lambda Q^2`,
/// with `Phi = sqrt(N) phi` the raw overlaps.
pub fn eigen_reconstruct(
    spectra: &[OverlapSpectrum],
    amps: &KrylovAmplitudes,
) -> Result<(SizeDistributions, f64)> {
    let k = amps.phi.len();
    let scale = amps.seed_norm_sq.sqrt();
    let mut p = Vec::with_capacity(spectra.len());
    let mut q = Vec::with_capacity(spectra.len());
    for sp in spectra {
        if sp.m.nrows() != k {
            return Err(Error::arg(format!(
                "Krylov depth mismatch: spectrum {} vs amplitudes {k}",
                sp.m.nrows()
            )));
        }
        let mut ps = 0.0;
        let mut qs = c(0.0, 0.0);
        for (nu, lam) in sp.eigenvalues.iter().enumerate() {
            let qn: Complex64 = (0..k)
                .map(|n| amps.phi[n] * sp.eigenvectors[(n, nu)])
                .sum::<Complex64>()
                * scale;
            ps += lam * qn.norm_sqr();
            qs += qn * qn * *lam;
        }
        p.push(ps);
        q.push(qs);
    }
    Ok((SizeDistributions { t: amps.t, p, q }, amps.tail_weight))
}

/// (lambda_0, lambda_1, lambda_1 / lambda_0)
pub fn spectral_gap(sp: &OverlapSpectrum) -> Result<(f64, f64, f64)> {
    if sp.eigenvalues.len() < 2 {
        return Err(Error::arg("spectral gap needs K >= 2"));
    }
    let (l0, l1) = (sp.eigenvalues[0], sp.eigenvalues[1]);
    Ok((l0, l1, if l0 > 0.0 { l1 / l0 } else { f64::NAN }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub ell: usize,
    /// Unwrapped Arg q(l); NaN when masked.
    pub arg_q: f64,
    pub abs_q: f64,
    pub p: f64,
    pub masked: bool,
}

/// Each phase moved by a multiple of 2 pi to lie nearest the previous one.
pub fn unwrap_phases(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut prev: Option<f64> = None;
    for &x in raw {
        let v = match prev {
            Some(p) => x + 2.0 * PI * ((p - x) / (2.0 * PI)).round(),
            None => x,
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

pub fn phase_vs_size(sd: &SizeDistributions, floor: f64) -> Vec<PhasePoint> {
    let keep: Vec<usize> = (0..sd.p.len()).filter(|&l| sd.p[l] >= floor).collect();
    let raw: Vec<f64> = keep.iter().map(|&l| sd.q[l].arg()).collect();
    let unwrapped = unwrap_phases(&raw);
    let mut out: Vec<PhasePoint> = (0..sd.p.len())
        .map(|ell| PhasePoint {
            ell,
            arg_q: f64::NAN,
            abs_q: sd.q[ell].norm(),
            p: sd.p[ell],
            masked: true,
        })
        .collect();
    for (&l, &ph) in keep.iter().zip(&unwrapped) {
        out[l].arg_q = ph;
        out[l].masked = false;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliString;

    #[test]
    fn single_string_distribution() {
        let x1: PauliString = "XII".parse().unwrap();
        let cf = PauliCoefficients::from_pairs(3, &[(x1, c(1.0, 0.0))]).unwrap();
        let sd = size_distributions(&cf, 0.0);
        assert_eq!(sd.p, vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sd.q[1], c(1.0, 0.0));
    }

    #[test]
    fn unit_amplitude_gives_flat_ck() {
        let grid = uniform_mu_grid(64);
        let pk = fourier_ck(&[c(1.0, 0.0), c(0.0, 0.0)], &grid);
        assert!(pk.flat);
        assert!(pk.values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn size_one_cs_is_a_pure_phase() {
        let grid = uniform_mu_grid(32);
        let sd = SizeDistributions {
            t: 0.0,
            p: vec![0.0, 1.0],
            q: vec![c(0.0, 0.0), c(1.0, 0.0)],
        };
        let pk = fourier_cs(&sd, &grid);
        for (mu, v) in grid.iter().zip(&pk.values) {
            assert!((v - Complex64::from_polar(1.0, *mu)).norm() < 1e-14);
        }
        assert!(pk.flat);
    }

    #[test]
    fn peak_on_constant_is_flat() {
        let grid = uniform_mu_grid(16);
        assert!(find_peak(&vec![c(2.0, 1.0); 16], &grid).flat);
    }

    #[test]
    fn unwrap_follows_branch() {
        let raw = [3.0, -3.0, -2.5, 2.9];
        let u = unwrap_phases(&raw);
        assert!((u[1] - (2.0 * PI - 3.0)).abs() < 1e-12);
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() < PI));
    }

    #[test]
    fn gap_examples() {
        let rank_one = OverlapSpectrum::from_matrix(1, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(spectral_gap(&rank_one).unwrap().2, 0.0);
        let half = OverlapSpectrum::from_matrix(1, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
        assert!((spectral_gap(&half).unwrap().2 - 1.0).abs() < 1e-15);
    }
}
