//! Pauli strings in the symplectic (x, z) convention and the dense <-> Pauli
//! coefficient transforms.
//!
//! Site `k` of an `N`-site string lives at bit `N-1-k` of both masks, which is
//! the same bit it occupies in a computational basis index. Per site,
//! `(x, z)` = (0,0) I, (1,0) X, (0,1) Z, (1,1) Y.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{c, DenseOperator};

/// Largest N for which the dense coefficient array is allocated.
pub const MAX_DECOMPOSE_SITES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n_sites: u8,
    x: u32,
    z: u32,
}

/// Overall phase in {1, i, -1, -i}, stored as the exponent of i.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phase(pub u8);

impl Phase {
    pub fn to_complex(self) -> Complex64 {
        match self.0 & 3 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Z => (false, true),
            Pauli::Y => (true, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (false, true) => Pauli::Z,
            (true, true) => Pauli::Y,
        }
    }
}

impl PauliString {
    pub fn identity(n_sites: usize) -> Self {
        assert!(n_sites >= 1 && n_sites <= 16);
        PauliString {
            n_sites: n_sites as u8,
            x: 0,
            z: 0,
        }
    }

    pub fn from_masks(n_sites: usize, x: u32, z: u32) -> Result<Self> {
        if n_sites == 0 || n_sites > 16 {
            return Err(Error::arg(format!("unsupported site count {n_sites}")));
        }
        let full = (1u32 << n_sites) - 1;
        if x & !full != 0 || z & !full != 0 {
            return Err(Error::arg("mask has bits beyond n_sites"));
        }
        Ok(PauliString {
            n_sites: n_sites as u8,
            x,
            z,
        })
    }

    pub fn from_paulis(ops: &[Pauli]) -> Result<Self> {
        let n = ops.len();
        let mut p = PauliString::from_masks(n, 0, 0)?;
        for (k, op) in ops.iter().enumerate() {
            p = p.with_site(k, *op);
        }
        Ok(p)
    }

    pub fn with_site(mut self, site: usize, op: Pauli) -> Self {
        let bit = 1u32 << (self.n_sites as usize - 1 - site);
        let (x, z) = op.bits();
        self.x = if x { self.x | bit } else { self.x & !bit };
        self.z = if z { self.z | bit } else { self.z & !bit };
        self
    }

    pub fn site(&self, site: usize) -> Pauli {
        let bit = 1u32 << (self.n_sites as usize - 1 - site);
        Pauli::from_bits(self.x & bit != 0, self.z & bit != 0)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites as usize
    }

    pub fn x_mask(&self) -> u32 {
        self.x
    }

    pub fn z_mask(&self) -> u32 {
        self.z
    }

    /// Index into a dense coefficient array: `z << N | x`.
    pub fn code(&self) -> usize {
        ((self.z as usize) << self.n_sites) | self.x as usize
    }

    pub fn from_code(n_sites: usize, code: usize) -> Self {
        let full = (1usize << n_sites) - 1;
        PauliString {
            n_sites: n_sites as u8,
            x: (code & full) as u32,
            z: (code >> n_sites) as u32,
        }
    }

    /// Number of non-identity sites.
    pub fn size(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn to_dense(&self) -> DenseOperator {
        let n = self.n_sites();
        let y_phase = Phase((self.x & self.z).count_ones() as u8).to_complex();
        let (x, z) = (self.x as usize, self.z as usize);
        let mut m = DenseOperator::zeros(n);
        for col in 0..m.dim() {
            let sign = if (z & col).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            m.set(col ^ x, col, y_phase * sign);
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.n_sites() {
            let ch = match self.site(k) {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{ch}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ops = s
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::arg(format!("bad Pauli label {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        PauliString::from_paulis(&ops)
    }
}

/// `p * q = phase * r`.
///
/// With `P(x,z) = i^{|x&z|} X^x Z^z` and `Z^a X^b = (-1)^{|a&b|} X^b Z^a`, the
/// exponent of i is `|x1&z1| + |x2&z2| + 2|z1&x2| - |x3&z3|` (mod 4).
pub fn pauli_multiply(p: &PauliString, q: &PauliString) -> Result<(Phase, PauliString)> {
    if p.n_sites != q.n_sites {
        return Err(Error::arg(format!(
            "site mismatch: {} vs {}",
            p.n_sites, q.n_sites
        )));
    }
    let x = p.x ^ q.x;
    let z = p.z ^ q.z;
    let e = (p.x & p.z).count_ones() + (q.x & q.z).count_ones() + 2 * (p.z & q.x).count_ones()
        + 4 * 16
        - (x & z).count_ones();
    Ok((
        Phase((e % 4) as u8),
        PauliString {
            n_sites: p.n_sites,
            x,
            z,
        },
    ))
}

pub fn string_size(p: &PauliString) -> usize {
    p.size()
}

/// Dense Pauli coefficients `c_P = (P|A)`, indexed by `PauliString::code`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliCoefficients {
    n_sites: usize,
    coeffs: Vec<Complex64>,
}

impl PauliCoefficients {
    pub fn zeros(n_sites: usize) -> Self {
        PauliCoefficients {
            n_sites,
            coeffs: vec![c(0.0, 0.0); 1 << (2 * n_sites)],
        }
    }

    pub fn from_pairs(n_sites: usize, pairs: &[(PauliString, Complex64)]) -> Result<Self> {
        let mut out = Self::zeros(n_sites);
        for (p, v) in pairs {
            if p.n_sites() != n_sites {
                return Err(Error::arg("string site count differs from map"));
            }
            out.coeffs[p.code()] += *v;
        }
        Ok(out)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn get(&self, p: &PauliString) -> Complex64 {
        self.coeffs[p.code()]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Nonzero entries as (string, coefficient).
    pub fn nonzero(&self, tol: f64) -> Vec<(PauliString, Complex64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > tol)
            .map(|(code, v)| (PauliString::from_code(self.n_sites, code), *v))
            .collect()
    }
}

/// Size |P| for every code of an `n`-site coefficient array.
pub fn size_table(n_sites: usize) -> Vec<u8> {
    let full = (1usize << n_sites) - 1;
    (0..1usize << (2 * n_sites))
        .map(|code| ((code & full) | (code >> n_sites)).count_ones() as u8)
        .collect()
}

/// `c_P = Tr(P a) / 2^N` for all strings, by a site-by-site transform in
/// `O(N 4^N)`.
///
/// Row/column bit `k` of entry `(r, c)` becomes the z/x bit of site `k`, so the
/// transformed matrix read row-major is already indexed by `z << N | x`.
pub fn decompose(a: &DenseOperator) -> Result<PauliCoefficients> {
    let n = a.n_sites();
    if n > MAX_DECOMPOSE_SITES {
        return Err(Error::arg(format!(
            "{n} sites exceeds decomposition limit {MAX_DECOMPOSE_SITES}"
        )));
    }
    let d = a.dim();
    let mut t = a.as_slice().to_vec();
    let i_unit = c(0.0, 1.0);
    for k in 0..n {
        let m = 1usize << k;
        for r in (0..d).filter(|r| r & m == 0) {
            for col in (0..d).filter(|col| col & m == 0) {
                let i00 = r * d + col;
                let i01 = r * d + (col | m);
                let i10 = (r | m) * d + col;
                let i11 = (r | m) * d + (col | m);
                let (a00, a01, a10, a11) = (t[i00], t[i01], t[i10], t[i11]);
                t[i00] = (a00 + a11) * 0.5;
                t[i01] = (a01 + a10) * 0.5;
                t[i10] = (a00 - a11) * 0.5;
                t[i11] = i_unit * (a01 - a10) * 0.5;
            }
        }
    }
    Ok(PauliCoefficients {
        n_sites: n,
        coeffs: t,
    })
}

/// Inverse of [`decompose`]: `sum_P c_P P`.
pub fn reconstruct(cf: &PauliCoefficients) -> DenseOperator {
    let n = cf.n_sites;
    let d = 1usize << n;
    let mut t = cf.coeffs.clone();
    let i_unit = c(0.0, 1.0);
    for k in 0..n {
        let m = 1usize << k;
        for r in (0..d).filter(|r| r & m == 0) {
            for col in (0..d).filter(|col| col & m == 0) {
                let i00 = r * d + col;
                let i01 = r * d + (col | m);
                let i10 = (r | m) * d + col;
                let i11 = (r | m) * d + (col | m);
                let (ci, cx, cz, cy) = (t[i00], t[i01], t[i10], t[i11]);
                t[i00] = ci + cz;
                t[i11] = ci - cz;
                t[i01] = cx - i_unit * cy;
                t[i10] = cx + i_unit * cy;
            }
        }
    }
    DenseOperator::from_row_major(d, t).expect("power-of-two by construction")
}

/// Keep only strings of size `ell`.
pub fn project_size(cf: &PauliCoefficients, ell: usize) -> Result<PauliCoefficients> {
    if ell > cf.n_sites {
        return Err(Error::arg(format!(
            "size {ell} outside 0..={}",
            cf.n_sites
        )));
    }
    let sizes = size_table(cf.n_sites);
    let coeffs = cf
        .coeffs
        .iter()
        .zip(&sizes)
        .map(|(v, &s)| if s as usize == ell { *v } else { c(0.0, 0.0) })
        .collect();
    Ok(PauliCoefficients {
        n_sites: cf.n_sites,
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn multiply_examples() {
        let (ph, r) = pauli_multiply(&ps("X"), &ps("X")).unwrap();
        assert_eq!((ph, r), (Phase(0), ps("I")));
        let (ph, r) = pauli_multiply(&ps("X"), &ps("Y")).unwrap();
        assert_eq!((ph, r), (Phase(1), ps("Z")));
        let (ph, r) = pauli_multiply(&ps("XZ"), &ps("YZ")).unwrap();
        assert_eq!((ph, r), (Phase(1), ps("ZI")));
        assert!(pauli_multiply(&ps("X"), &ps("XX")).is_err());
    }

    #[test]
    fn sizes() {
        assert_eq!(ps("II").size(), 0);
        assert_eq!(ps("XIZ").size(), 2);
        assert_eq!(ps("YYYYYY").size(), 6);
    }

    #[test]
    fn display_round_trip() {
        for s in ["IXYZ", "Y", "ZZIX"] {
            assert_eq!(ps(s).to_string(), s);
        }
    }

    #[test]
    fn single_site_matrices() {
        let y = ps("Y").to_dense();
        assert_eq!(y.get(0, 1), c(0.0, -1.0));
        assert_eq!(y.get(1, 0), c(0.0, 1.0));
        let z = ps("Z").to_dense();
        assert_eq!(z.get(1, 1), c(-1.0, 0.0));
    }

    #[test]
    fn decompose_examples() {
        let id = DenseOperator::identity(1);
        let cf = decompose(&id).unwrap();
        assert_eq!(cf.nonzero(0.0), vec![(ps("I"), c(1.0, 0.0))]);

        let a = ps("X")
            .to_dense()
            .add_scaled(c(2.0, 0.0), &ps("Z").to_dense())
            .unwrap();
        let cf = decompose(&a).unwrap();
        assert_eq!(cf.get(&ps("X")), c(1.0, 0.0));
        assert_eq!(cf.get(&ps("Z")), c(2.0, 0.0));
        assert_eq!(cf.nonzero(1e-15).len(), 2);
    }

    #[test]
    fn reconstruct_non_hermitian() {
        let cf = PauliCoefficients::from_pairs(1, &[(ps("X"), c(0.0, 1.0))]).unwrap();
        let m = reconstruct(&cf);
        assert!(m.max_abs_diff(&ps("X").to_dense().scaled(c(0.0, 1.0))) < 1e-15);
    }

    #[test]
    fn project_example() {
        let cf = PauliCoefficients::from_pairs(
            2,
            &[(ps("XI"), c(1.0, 0.0)), (ps("XZ"), c(2.0, 0.0))],
        )
        .unwrap();
        let p1 = project_size(&cf, 1).unwrap();
        assert_eq!(p1.nonzero(0.0), vec![(ps("XI"), c(1.0, 0.0))]);
        assert!(project_size(&cf, 3).is_err());
    }
}
