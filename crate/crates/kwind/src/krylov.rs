//! Lanczos on operator space and Krylov amplitudes.
//!
//! In the eigenframe of H the Liouvillian acts entrywise,
//! `(L A)_ab = (E_a - E_b) A_ab`, so every Krylov operator is
//! `O_n = p_n(omega) * O_0` for a real polynomial `p_n`. The recursion therefore
//! runs on real vectors `f_n = p_n(omega) sqrt(w)` over the 4^N matrix entries
//! with weights `w_ab = |O0_ab|^2 / 2^N`, and the dense operators are rebuilt on
//! demand as `O_n = sqrt(2^N) f_n * phase(O0)`.
//!
//! For a Hermitian seed `w` is symmetric and `omega` antisymmetric, so
//! `f_n(b, a) = (-1)^n f_n(a, b)`. Only pairs `a <= b` are stored, scaled by
//! `sqrt(2)` off the diagonal so that plain dot products reproduce the full
//! inner product within a parity class; vectors of opposite parity are
//! orthogonal by symmetry and never compared.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{c, DenseOperator};
use crate::spin::{diagonalize, SpectralHamiltonian, ThermalSeed};

pub const BASIS_MAGIC: &[u8; 8] = b"KRYLBAS1";
pub const DEFAULT_DEPTH: usize = 512;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_BUDGET_MB: f64 = 4096.0;
pub const BUDGET_ENV: &str = "KWIND_MEMORY_MB";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reorth {
    Full,
    None,
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Maximum number of basis operators.
    pub n_max: usize,
    /// Termination threshold relative to b_1 (relative to the spectral width
    /// for b_1 itself).
    pub tol: f64,
    pub reorth: Reorth,
    pub memory_budget_mb: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            n_max: DEFAULT_DEPTH,
            tol: DEFAULT_TOL,
            reorth: Reorth::Full,
            memory_budget_mb: memory_budget_mb(),
        }
    }
}

/// Budget from the environment, falling back to the default.
pub fn memory_budget_mb() -> f64 {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|v| *v > 0.0)
        .unwrap_or(DEFAULT_BUDGET_MB)
}

/// Bytes held per Krylov vector for an `n_sites` system.
pub fn vector_bytes(n_sites: usize) -> f64 {
    8.0 * (1u64 << (2 * n_sites)) as f64
}

/// min(512, budget / vector size)
pub fn default_depth(n_sites: usize, budget_mb: f64) -> usize {
    let fit = (budget_mb * 1024.0 * 1024.0 / vector_bytes(n_sites)) as usize;
    DEFAULT_DEPTH.min(fit.max(1))
}

#[derive(Clone, Debug)]
pub struct KrylovData {
    /// b_1..b_{K-1}; `b[n-1]` couples basis operators n-1 and n.
    pub b: Vec<f64>,
    /// True when the recursion stopped on a vanishing b.
    pub terminated: bool,
    pub reorth: Reorth,
    /// Seed normalization N; amplitudes are reported as overlaps / sqrt(N).
    pub seed_norm_sq: f64,
    pub beta: f64,
    n_sites: usize,
    eigenvectors: DenseOperator,
    /// Stored entries (a, b), a <= b.
    pairs: Vec<(u32, u32)>,
    omega: Vec<f64>,
    phase: Vec<Complex64>,
    f: Vec<Vec<f64>>,
}

/// Runs Lanczos for `h` after diagonalizing it at the seed's temperature.
pub fn lanczos(
    seed: &ThermalSeed,
    h: &DenseOperator,
    beta: f64,
    opts: &LanczosOptions,
) -> Result<KrylovData> {
    let sh = diagonalize(h, beta)?;
    lanczos_spectral(seed, &sh, opts)
}

pub fn lanczos_spectral(
    seed: &ThermalSeed,
    sh: &SpectralHamiltonian,
    opts: &LanczosOptions,
) -> Result<KrylovData> {
    if opts.n_max < 1 {
        return Err(Error::arg("n_max must be at least 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    let n_sites = sh.n_sites();
    if seed.o0.n_sites() != n_sites {
        return Err(Error::arg("seed and Hamiltonian sizes differ"));
    }
    let needed = (opts.n_max as f64 + 3.0) * vector_bytes(n_sites) / (1024.0 * 1024.0);
    if needed > opts.memory_budget_mb {
        return Err(Error::Resource {
            what: format!("{} Krylov vectors at N={n_sites}", opts.n_max),
            needed_mb: needed,
            budget_mb: opts.memory_budget_mb,
        });
    }
    let norm = seed.o0.norm_sq();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::arg(format!("seed is not normalized: (o0|o0) = {norm}")));
    }

    let dim = sh.dim();
    let o_eig = sh.to_eigenframe(&seed.o0)?;
    let herm = o_eig.hermiticity_defect();
    if herm > 1e-10 * o_eig.frobenius().max(1.0) {
        return Err(Error::arg(format!(
            "seed must be Hermitian (defect {herm:e})"
        )));
    }
    let e = &sh.eigenvalues;
    let npairs = dim * (dim + 1) / 2;
    let mut pairs = Vec::with_capacity(npairs);
    let mut omega = Vec::with_capacity(npairs);
    let mut phase = Vec::with_capacity(npairs);
    let mut f0 = Vec::with_capacity(npairs);
    for a in 0..dim {
        for bb in a..dim {
            let z = o_eig.get(a, bb);
            let r = z.norm();
            let mult = if a == bb { 1.0 } else { 2.0f64.sqrt() };
            pairs.push((a as u32, bb as u32));
            omega.push(e[a] - e[bb]);
            phase.push(if r > 0.0 { z / r } else { c(0.0, 0.0) });
            f0.push(mult * r / (dim as f64).sqrt());
        }
    }
    normalize(&mut f0);

    let width = e[dim - 1] - e[0];
    let mut f = vec![f0];
    let mut b: Vec<f64> = Vec::new();
    let mut terminated = false;
    while f.len() < opts.n_max {
        let n = f.len();
        let mut a: Vec<f64> = omega.iter().zip(&f[n - 1]).map(|(w, x)| w * x).collect();
        if n >= 2 {
            let bp = b[n - 2];
            a.iter_mut().zip(&f[n - 2]).for_each(|(x, y)| *x -= bp * y);
        }
        if opts.reorth == Reorth::Full {
            for _ in 0..2 {
                for q in f.iter().skip(n % 2).step_by(2) {
                    let s = dot(q, &a);
                    a.iter_mut().zip(q).for_each(|(x, y)| *x -= s * y);
                }
            }
        }
        let bn = dot(&a, &a).sqrt();
        let floor = if n == 1 { opts.tol * width.max(f64::MIN_POSITIVE) } else { opts.tol * b[0] };
        if !(bn > floor) {
            terminated = true;
            break;
        }
        a.iter_mut().for_each(|x| *x /= bn);
        b.push(bn);
        f.push(a);
    }

    Ok(KrylovData {
        b,
        terminated,
        reorth: opts.reorth,
        seed_norm_sq: seed.norm_sq,
        beta: sh.beta,
        n_sites,
        eigenvectors: sh.eigenvectors.clone(),
        pairs,
        omega,
        phase,
        f,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// (-i)^n
pub(crate) fn minus_i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => c(1.0, 0.0),
        1 => c(0.0, -1.0),
        2 => c(-1.0, 0.0),
        _ => c(0.0, 1.0),
    }
}

impl KrylovData {
    pub fn depth(&self) -> usize {
        self.f.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Hermitian basis operator i^n O_n in the computational frame.
    pub fn basis(&self, n: usize) -> Result<DenseOperator> {
        let gv = self
            .f
            .get(n)
            .ok_or_else(|| Error::State(format!("basis operator {n} not stored")))?;
        let dim = 1usize << self.n_sites;
        let s = (dim as f64).sqrt();
        let half = s / 2.0f64.sqrt();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let ph = minus_i_pow(n).conj();
        let mut eig = DenseOperator::zeros(self.n_sites);
        for ((&(a, bb), g), u) in self.pairs.iter().zip(gv).zip(&self.phase) {
            let (a, bb) = (a as usize, bb as usize);
            if a == bb {
                eig.set(a, a, ph * u * (s * g));
            } else {
                eig.set(a, bb, ph * u * (half * g));
                eig.set(bb, a, ph * u.conj() * (sign * half * g));
            }
        }
        self.eigenvectors
            .matmul(&eig)?
            .gemm(crate::operator::Op::N, &self.eigenvectors, crate::operator::Op::H)
    }

    pub fn basis_all(&self) -> Result<Vec<DenseOperator>> {
        (0..self.depth()).map(|n| self.basis(n)).collect()
    }

    /// Largest |(O_m|O_n) - delta_mn| over stored pairs.
    pub fn gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..self.f.len() {
            for n in (m % 2..=m).step_by(2) {
                let g = dot(&self.f[m], &self.f[n]) - if m == n { 1.0 } else { 0.0 };
                worst = worst.max(g.abs());
            }
        }
        worst
    }

    /// |(O_m|L|O_n)| for a pair of basis indices.
    pub fn liouvillian_element(&self, m: usize, n: usize) -> f64 {
        if (m + n) % 2 == 0 {
            return 0.0;
        }
        self.f[m]
            .iter()
            .zip(&self.f[n])
            .zip(&self.omega)
            .map(|((x, y), w)| x * y * w)
            .sum::<f64>()
            .abs()
    }

    /// Exact amplitudes of rho^{1/2} O(t) for the seed operator itself.
    ///
    /// Uses `rho^{1/2} O(t) = e^{i L z} rho^{1/4} O rho^{1/4}` with
    /// `z = t + i beta/4`. Folding each pair with its transpose turns the
    /// kernel into `cos(omega z)` for even n and `i sin(omega z)` for odd n.
    pub fn thermal_amplitudes(&self, t: f64) -> KrylovAmplitudes {
        let tau = self.beta / 4.0;
        let mut even = Vec::with_capacity(self.omega.len());
        let mut odd = Vec::with_capacity(self.omega.len());
        let mut target = 0.0;
        for (w, g0) in self.omega.iter().zip(&self.f[0]) {
            let (s, co) = (w * t).sin_cos();
            let (ch, sh) = ((w * tau).cosh(), (w * tau).sinh());
            even.push(c(co * ch, -s * sh) * *g0);
            odd.push(c(-co * sh, s * ch) * *g0);
            target += g0 * g0 * (2.0 * w * tau).cosh();
        }
        self.project(t, &even, &odd, target)
    }

    fn project(&self, t: f64, even: &[Complex64], odd: &[Complex64], target: f64) -> KrylovAmplitudes {
        let phi: Vec<Complex64> = self
            .f
            .iter()
            .enumerate()
            .map(|(n, gv)| {
                let g = if n % 2 == 0 { even } else { odd };
                let s: Complex64 = gv.iter().zip(g).map(|(x, z)| z * *x).sum();
                minus_i_pow(n) * s
            })
            .collect();
        let captured: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        KrylovAmplitudes {
            t,
            beta: self.beta,
            phi,
            tail_weight: if target > 0.0 { 1.0 - captured / target } else { 0.0 },
            target_norm_sq: target * self.seed_norm_sq,
            seed_norm_sq: self.seed_norm_sq,
        }
    }

    /// Serializable summary (coefficients and metadata, no basis).
    pub fn summary(&self) -> KrylovSummary {
        KrylovSummary {
            n_sites: self.n_sites,
            beta: self.beta,
            depth: self.depth(),
            b: self.b.clone(),
            terminated: self.terminated,
            reorth: self.reorth,
            seed_norm_sq: self.seed_norm_sq,
        }
    }

    /// Writes all basis operators (computational frame) as
    /// `KRYLBAS1 | n_sites u64 | K u64 | K * 4^N * (re, im) f64`, little-endian.
    pub fn write_basis(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(BASIS_MAGIC)?;
        w.write_all(&(self.n_sites as u64).to_le_bytes())?;
        w.write_all(&(self.depth() as u64).to_le_bytes())?;
        for n in 0..self.depth() {
            for z in self.basis(n)?.as_slice() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `overlap_amplitudes` for an arbitrary evolved operator `a` at time `t`:
/// `phi_n = (O_n | a) / sqrt(N)` with `O_n` the Hermitian basis.
pub fn overlap_amplitudes(kd: &KrylovData, a: &DenseOperator, t: f64) -> Result<KrylovAmplitudes> {
    if a.n_sites() != kd.n_sites {
        return Err(Error::arg("operator size differs from the Krylov basis"));
    }
    let dim = a.dim();
    let ae = kd
        .eigenvectors
        .gemm(crate::operator::Op::H, a, crate::operator::Op::N)?
        .matmul(&kd.eigenvectors)?;
    let scale = 1.0 / ((dim as f64) * kd.seed_norm_sq).sqrt();
    let r2 = 2.0f64.sqrt();
    let mut even = Vec::with_capacity(kd.pairs.len());
    let mut odd = Vec::with_capacity(kd.pairs.len());
    for (&(p, q), u) in kd.pairs.iter().zip(&kd.phase) {
        let (p, q) = (p as usize, q as usize);
        let gpq = u.conj() * ae.get(p, q) * scale;
        if p == q {
            even.push(gpq);
            odd.push(c(0.0, 0.0));
        } else {
            let gqp = u * ae.get(q, p) * scale;
            even.push((gpq + gqp) / r2);
            odd.push((gpq - gqp) / r2);
        }
    }
    let target = a.norm_sq() / kd.seed_norm_sq;
    Ok(kd.project(t, &even, &odd, target))
}

pub fn read_basis(path: &Path) -> Result<Vec<DenseOperator>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(Error::arg("not a Krylov basis file"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n_sites = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let k = u64::from_le_bytes(word) as usize;
    let dim = 1usize << n_sites;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut data = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            data.push(c(re, f64::from_le_bytes(word)));
        }
        out.push(DenseOperator::from_row_major(dim, data)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovSummary {
    pub n_sites: usize,
    pub beta: f64,
    pub depth: usize,
    pub b: Vec<f64>,
    pub terminated: bool,
    pub reorth: Reorth,
    pub seed_norm_sq: f64,
}

/// Krylov amplitudes at one time. `phi_n = (O_n | rho^{1/2} O(t)) / sqrt(N)`,
/// so that `phi = e_0` at `t = 0, beta = 0`; multiply by `sqrt(seed_norm_sq)`
/// for raw overlaps.
#[derive(Clone, Debug)]
pub struct KrylovAmplitudes {
    pub t: f64,
    pub beta: f64,
    pub phi: Vec<Complex64>,
    /// 1 - sum |phi_n|^2 / (|rho^{1/2} O(t)|^2 / N)
    pub tail_weight: f64,
    pub target_norm_sq: f64,
    pub seed_norm_sq: f64,
}

impl KrylovAmplitudes {
    pub fn norm_sq(&self) -> f64 {
        self.phi.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Amplitudes rescaled to unit norm.
    pub fn normalized(&self) -> Vec<Complex64> {
        let n = self.norm_sq().sqrt();
        self.phi.iter().map(|z| z / n).collect()
    }
}

/// Least-squares line through `(n, b_n)` for n in `window` (1-based, inclusive).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub alpha: f64,
    pub intercept: f64,
    /// |residual|_2 / |b|_2 over the window.
    pub residual: f64,
}

pub fn fit_alpha(b: &[f64], window: std::ops::RangeInclusive<usize>) -> Result<LineFit> {
    let (lo, hi) = (*window.start(), *window.end());
    if lo < 1 || hi > b.len() || hi < lo + 2 {
        return Err(Error::arg(format!(
            "fit window {lo}..={hi} needs 3+ points within 1..={}",
            b.len()
        )));
    }
    let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|n| b[n - 1]).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - alpha * x - intercept).powi(2))
        .sum();
    let yy: f64 = ys.iter().map(|y| y * y).sum();
    Ok(LineFit {
        alpha,
        intercept,
        residual: if yy > 0.0 { (rss / yy).sqrt() } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{Pauli, PauliString};
    use crate::spin::{make_seed, thermal_root};

    fn qubit(beta: f64) -> (SpectralHamiltonian, DenseOperator) {
        let z = PauliString::identity(1).with_site(0, Pauli::Z).to_dense();
        let x = PauliString::identity(1).with_site(0, Pauli::X).to_dense();
        (diagonalize(&z, beta).unwrap(), x)
    }

    #[test]
    fn single_qubit_chain() {
        let (sh, x) = qubit(0.0);
        let seed = make_seed(&x, &thermal_root(&sh)).unwrap();
        let kd = lanczos_spectral(&seed, &sh, &LanczosOptions::default()).unwrap();
        assert_eq!(kd.depth(), 2);
        assert!(kd.terminated);
        assert!((kd.b[0] - 2.0).abs() < 1e-14);
        let y = PauliString::identity(1).with_site(0, Pauli::Y).to_dense();
        assert!(kd.basis(0).unwrap().max_abs_diff(&x) < 1e-14);
        assert!(kd.basis(1).unwrap().max_abs_diff(&y.scaled(c(-1.0, 0.0))) < 1e-14);
    }

    #[test]
    fn commuting_seed_terminates_immediately() {
        let (sh, _) = qubit(0.3);
        let z = PauliString::identity(1).with_site(0, Pauli::Z).to_dense();
        let seed = make_seed(&z, &thermal_root(&sh)).unwrap();
        let kd = lanczos_spectral(&seed, &sh, &LanczosOptions::default()).unwrap();
        assert_eq!(kd.depth(), 1);
        assert!(kd.b.is_empty());
        assert!(kd.terminated);
    }

    #[test]
    fn budget_is_enforced() {
        let (sh, x) = qubit(0.0);
        let seed = make_seed(&x, &thermal_root(&sh)).unwrap();
        let opts = LanczosOptions {
            n_max: 1 << 30,
            memory_budget_mb: 1.0,
            ..LanczosOptions::default()
        };
        assert!(matches!(
            lanczos_spectral(&seed, &sh, &opts),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn fit_examples() {
        let b: Vec<f64> = (1..=20).map(|n| 2.0 * n as f64).collect();
        let fit = fit_alpha(&b, 2..=10).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-12 && fit.residual < 1e-14);
        assert!(fit_alpha(&b, 3..=4).is_err());
        assert!(fit_alpha(&b, 0..=4).is_err());
        let flat = vec![3.0; 30];
        assert!(fit_alpha(&flat, 10..=30).unwrap().alpha.abs() < 1e-14);
    }

    #[test]
    fn default_depth_respects_budget() {
        assert_eq!(default_depth(8, 4096.0), 512);
        assert_eq!(default_depth(8, 64.0), 128);
    }
}
