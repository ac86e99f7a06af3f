//! Disordered all-to-all 2-local spin model, exact spectral decomposition,
//! thermal roots and Heisenberg evolution.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{c, DenseOperator, Op};
use crate::pauli::{Pauli, PauliString};

/// Seeds whose normalization falls below this are rejected.
pub const SEED_NORM_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
            Axis::Z => Pauli::Z,
        }
    }
}

/// Couplings J_ij^a for i < j, ordered (i, j, a) lexicographically with
/// a in x, y, z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    pub n_sites: usize,
    pub seed: u64,
    pub variance_scale: f64,
    pub couplings: Vec<f64>,
}

impl CouplingSet {
    pub fn default_variance(n_sites: usize) -> f64 {
        1.0 / (9.0 * n_sites as f64)
    }

    pub fn n_couplings(n_sites: usize) -> usize {
        3 * n_sites * (n_sites - 1) / 2
    }

    /// Iterates `(i, j, axis, J)`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, Axis, f64)> + '_ {
        let n = self.n_sites;
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .flat_map(|(i, j)| Axis::ALL.into_iter().map(move |a| (i, j, a)))
            .zip(&self.couplings)
            .map(|((i, j, a), &v)| (i, j, a, v))
    }

    pub fn get(&self, i: usize, j: usize, axis: Axis) -> Option<f64> {
        self.terms()
            .find(|&(a, b, ax, _)| a == i && b == j && ax == axis)
            .map(|t| t.3)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: CouplingSet =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if set.n_sites < 2 || set.couplings.len() != Self::n_couplings(set.n_sites) {
            return Err(Error::arg("coupling count does not match n_sites"));
        }
        Ok(set)
    }
}

/// Gaussian couplings with mean zero and the given variance.
///
/// Coupling `k` is drawn from ChaCha20 keyed by `seed` on stream `k`, so
/// every value depends only on `(seed, k)`.
pub fn sample_couplings(n_sites: usize, seed: u64, variance_scale: f64) -> Result<CouplingSet> {
    if n_sites < 2 {
        return Err(Error::arg(format!("need at least 2 sites, got {n_sites}")));
    }
    if !(variance_scale >= 0.0) {
        return Err(Error::arg("variance must be nonnegative"));
    }
    let sd = variance_scale.sqrt();
    let couplings = (0..CouplingSet::n_couplings(n_sites))
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let g: f64 = StandardNormal.sample(&mut rng);
            sd * g
        })
        .collect();
    Ok(CouplingSet {
        n_sites,
        seed,
        variance_scale,
        couplings,
    })
}

/// S_site^axis = sigma^axis / 2.
pub fn spin_operator(n_sites: usize, site: usize, axis: Axis) -> DenseOperator {
    PauliString::identity(n_sites)
        .with_site(site, axis.pauli())
        .to_dense()
        .scaled(c(0.5, 0.0))
}

/// H = sum_{i<j} sum_a J_ij^a S_i^a S_j^a.
pub fn build_hamiltonian(cs: &CouplingSet) -> DenseOperator {
    let n = cs.n_sites;
    let mut h = DenseOperator::zeros(n);
    let dim = h.dim();
    for (i, j, axis, jv) in cs.terms() {
        let p = PauliString::identity(n)
            .with_site(i, axis.pauli())
            .with_site(j, axis.pauli());
        let (x, z) = (p.x_mask() as usize, p.z_mask() as usize);
        // Y_i Y_j carries i^2 = -1 relative to X^x Z^z.
        let base = if (x & z).count_ones() == 2 { -0.25 } else { 0.25 } * jv;
        for col in 0..dim {
            let s = if (z & col).count_ones() % 2 == 1 { -base } else { base };
            let r = col ^ x;
            let v = h.get(r, col) + c(s, 0.0);
            h.set(r, col, v);
        }
    }
    h
}

/// Eigen-decomposition of a Hermitian H, eigenvalues ascending, with the
/// inverse temperature used for thermal quantities.
#[derive(Clone, Debug)]
pub struct SpectralHamiltonian {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: DenseOperator,
    pub beta: f64,
}

pub fn diagonalize(h: &DenseOperator, beta: f64) -> Result<SpectralHamiltonian> {
    if !(beta >= 0.0) {
        return Err(Error::arg(format!("beta must be >= 0, got {beta}")));
    }
    let scale = h.frobenius().max(1.0);
    if h.hermiticity_defect() > 1e-10 * scale {
        return Err(Error::arg("matrix is not Hermitian"));
    }
    let d = h.dim();
    let (vals, vecs): (Vec<f64>, Vec<Complex64>) = if h.is_real(0.0) {
        let m = DMatrix::<f64>::from_fn(d, d, |r, col| 0.5 * (h.get(r, col).re + h.get(col, r).re));
        let eig = SymmetricEigen::new(m);
        let v = eig.eigenvectors;
        (
            eig.eigenvalues.iter().copied().collect(),
            (0..d * d).map(|k| c(v[(k / d, k % d)], 0.0)).collect(),
        )
    } else {
        let m = DMatrix::<Complex64>::from_fn(d, d, |r, col| {
            0.5 * (h.get(r, col) + h.get(col, r).conj())
        });
        let eig = SymmetricEigen::new(m);
        let v = eig.eigenvectors;
        (
            eig.eigenvalues.iter().copied().collect(),
            (0..d * d).map(|k| v[(k / d, k % d)]).collect(),
        )
    };
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let eigenvalues = order.iter().map(|&k| vals[k]).collect();
    let sorted = (0..d * d)
        .map(|k| vecs[(k / d) * d + order[k % d]])
        .collect();
    Ok(SpectralHamiltonian {
        eigenvalues,
        eigenvectors: DenseOperator::from_row_major(d, sorted)?,
        beta,
    })
}

impl SpectralHamiltonian {
    pub fn n_sites(&self) -> usize {
        self.eigenvectors.n_sites()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// rho_a = e^{-beta E_a} / Z, shifted for overflow safety.
    pub fn boltzmann(&self) -> Vec<f64> {
        let e0 = self.eigenvalues[0];
        let w: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|e| (-self.beta * (e - e0)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// V^dag A V
    pub fn to_eigenframe(&self, a: &DenseOperator) -> Result<DenseOperator> {
        self.eigenvectors
            .gemm(Op::H, a, Op::N)?
            .matmul(&self.eigenvectors)
    }

    /// V A V^dag
    pub fn from_eigenframe(&self, a: &DenseOperator) -> Result<DenseOperator> {
        self.eigenvectors
            .matmul(a)?
            .gemm(Op::N, &self.eigenvectors, Op::H)
    }

    pub fn reassemble(&self) -> DenseOperator {
        let d = DenseOperator::diagonal(self.n_sites(), &self.eigenvalues);
        self.from_eigenframe(&d).expect("matching dimensions")
    }

    /// Eigenframe matrix scaled entrywise by `f(a, b)`, mapped back.
    fn conjugate_by(
        &self,
        a: &DenseOperator,
        f: impl Fn(usize, usize) -> Complex64,
    ) -> Result<DenseOperator> {
        let mut t = self.to_eigenframe(a)?;
        let d = t.dim();
        for r in 0..d {
            for col in 0..d {
                let v = t.get(r, col) * f(r, col);
                t.set(r, col, v);
            }
        }
        self.from_eigenframe(&t)
    }
}

/// rho^{1/4} = V diag(e^{-beta E/4}) V^dag / Z^{1/4}.
pub fn thermal_root(sh: &SpectralHamiltonian) -> DenseOperator {
    let r: Vec<f64> = sh.boltzmann().iter().map(|x| x.powf(0.25)).collect();
    let d = DenseOperator::diagonal(sh.n_sites(), &r);
    sh.from_eigenframe(&d).expect("matching dimensions")
}

/// Normalized symmetrized thermal operator rho^{1/4} O rho^{1/4}.
#[derive(Clone, Debug)]
pub struct ThermalSeed {
    pub o0: DenseOperator,
    /// (A|A) of A = rho^{1/4} O rho^{1/4} before normalization.
    pub norm_sq: f64,
}

pub fn make_seed(o: &DenseOperator, rho4: &DenseOperator) -> Result<ThermalSeed> {
    let a = rho4.matmul(o)?.matmul(rho4)?;
    let norm_sq = a.norm_sq();
    if !(norm_sq >= SEED_NORM_FLOOR) {
        return Err(Error::DegenerateSeed {
            norm: norm_sq,
            floor: SEED_NORM_FLOOR,
        });
    }
    Ok(ThermalSeed {
        o0: a.scaled(c(1.0 / norm_sq.sqrt(), 0.0)),
        norm_sq,
    })
}

/// O(t) = e^{iHt} O e^{-iHt}.
pub fn heisenberg_evolve(
    sh: &SpectralHamiltonian,
    a: &DenseOperator,
    t: f64,
) -> Result<DenseOperator> {
    let e = &sh.eigenvalues;
    sh.conjugate_by(a, |r, col| Complex64::from_polar(1.0, (e[r] - e[col]) * t))
}

/// rho^{1/2} O(t).
pub fn thermal_evolved(
    sh: &SpectralHamiltonian,
    o: &DenseOperator,
    t: f64,
) -> Result<DenseOperator> {
    let e = &sh.eigenvalues;
    let rho = sh.boltzmann();
    sh.conjugate_by(o, |r, col| {
        Complex64::from_polar(rho[r].sqrt(), (e[r] - e[col]) * t)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_count_and_determinism() {
        let a = sample_couplings(5, 42, 0.1).unwrap();
        let b = sample_couplings(5, 42, 0.1).unwrap();
        assert_eq!(a.couplings.len(), 30);
        assert_eq!(a, b);
        let other = sample_couplings(5, 43, 0.1).unwrap();
        assert_ne!(a.couplings, other.couplings);
        assert!(sample_couplings(1, 0, 0.1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let a = sample_couplings(4, 7, CouplingSet::default_variance(4)).unwrap();
        let back = CouplingSet::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn two_site_zz() {
        let cs = CouplingSet {
            n_sites: 2,
            seed: 0,
            variance_scale: 0.0,
            couplings: vec![0.0, 0.0, 1.3],
        };
        let h = build_hamiltonian(&cs);
        let j = 1.3;
        let want = DenseOperator::diagonal(2, &[j / 4.0, -j / 4.0, -j / 4.0, j / 4.0]);
        assert!(h.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn hamiltonian_matches_spin_products() {
        let cs = sample_couplings(3, 5, 1.0).unwrap();
        let h = build_hamiltonian(&cs);
        let mut want = DenseOperator::zeros(3);
        for (i, j, a, v) in cs.terms() {
            let term = spin_operator(3, i, a).matmul(&spin_operator(3, j, a)).unwrap();
            want = want.add_scaled(c(v, 0.0), &term).unwrap();
        }
        assert!(h.max_abs_diff(&want) < 1e-14);
        assert!(h.trace().norm() < 1e-12);
        assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn diagonalize_z() {
        let z = PauliString::identity(1).with_site(0, Pauli::Z).to_dense();
        let sh = diagonalize(&z, 0.0).unwrap();
        assert_eq!(sh.eigenvalues, vec![-1.0, 1.0]);
        let not_h = DenseOperator::from_fn(1, |r, col| c((r + 2 * col) as f64, 0.0));
        assert!(diagonalize(&not_h, 0.0).is_err());
    }

    #[test]
    fn infinite_temperature_root() {
        let cs = sample_couplings(3, 1, 0.2).unwrap();
        let sh = diagonalize(&build_hamiltonian(&cs), 0.0).unwrap();
        let r = thermal_root(&sh);
        let want = DenseOperator::identity(3).scaled(c((1.0f64 / 8.0).powf(0.25), 0.0));
        assert!(r.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn infinite_temperature_seed_is_the_operator() {
        let cs = sample_couplings(3, 1, 0.2).unwrap();
        let sh = diagonalize(&build_hamiltonian(&cs), 0.0).unwrap();
        let x1 = PauliString::identity(3).with_site(0, Pauli::X).to_dense();
        let seed = make_seed(&x1, &thermal_root(&sh)).unwrap();
        assert!(seed.o0.max_abs_diff(&x1) < 1e-12);
        assert!((seed.norm_sq - 1.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn zero_operator_is_degenerate() {
        let z = PauliString::identity(1).with_site(0, Pauli::Z).to_dense();
        let sh = diagonalize(&z, 1.0).unwrap();
        let zero = DenseOperator::zeros(1);
        assert!(matches!(
            make_seed(&zero, &thermal_root(&sh)),
            Err(Error::DegenerateSeed { .. })
        ));
    }
}
