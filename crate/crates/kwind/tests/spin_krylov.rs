use kwind::krylov::{fit_alpha, lanczos_spectral, overlap_amplitudes, KrylovData, LanczosOptions};
use kwind::operator::DenseOperator;
use kwind::spin::{
    build_hamiltonian, diagonalize, heisenberg_evolve, make_seed, sample_couplings,
    spin_operator, thermal_evolved, thermal_root, Axis, CouplingSet, SpectralHamiltonian,
};
use kwind::tridiag::tridiag_propagate;
use num_complex::Complex64;
use proptest::prelude::*;

fn instance(n: usize, seed: u64, beta: f64) -> (SpectralHamiltonian, DenseOperator) {
    let cs = sample_couplings(n, seed, CouplingSet::default_variance(n)).unwrap();
    let sh = diagonalize(&build_hamiltonian(&cs), beta).unwrap();
    (sh, spin_operator(n, 0, Axis::X))
}

fn krylov(sh: &SpectralHamiltonian, o: &DenseOperator, n_max: usize) -> KrylovData {
    let seed = make_seed(o, &thermal_root(sh)).unwrap();
    let opts = LanczosOptions { n_max, ..LanczosOptions::default() };
    lanczos_spectral(&seed, sh, &opts).unwrap()
}

/// e^{iH z} A e^{-iH z} for complex z, built in the eigenframe.
fn complex_time_conjugate(sh: &SpectralHamiltonian, a: &DenseOperator, z: Complex64) -> DenseOperator {
    let mut m = sh.to_eigenframe(a).unwrap();
    let e = &sh.eigenvalues;
    for r in 0..sh.dim() {
        for col in 0..sh.dim() {
            let ph = (Complex64::i() * z * (e[r] - e[col])).exp();
            m.set(r, col, m.get(r, col) * ph);
        }
    }
    sh.from_eigenframe(&m).unwrap()
}

#[test]
fn two_point_function_matches_direct_trace() {
    let (sh, o) = instance(4, 5, 0.8);
    let r4 = thermal_root(&sh);
    let rho = r4.matmul(&r4).unwrap().matmul(&r4).unwrap().matmul(&r4).unwrap();
    let a0 = thermal_evolved(&sh, &o, 0.0).unwrap();
    for k in 0..6 {
        let t = 0.7 * k as f64;
        let via_inner = a0.inner(&thermal_evolved(&sh, &o, t).unwrap()).unwrap();
        let ot = heisenberg_evolve(&sh, &o, t).unwrap();
        let direct = rho.matmul(&ot).unwrap().matmul(&o).unwrap().trace() / sh.dim() as f64;
        assert!((via_inner - direct).norm() < 1e-10, "t = {t}");
    }
}

#[test]
fn thermal_evolution_is_complex_time_evolution() {
    let (sh, o) = instance(4, 9, 1.3);
    let r4 = thermal_root(&sh);
    let a = r4.matmul(&o).unwrap().matmul(&r4).unwrap();
    for k in 0..5 {
        let t = 0.9 * k as f64;
        let z = Complex64::new(t, sh.beta / 4.0);
        let want = complex_time_conjugate(&sh, &a, z);
        let got = thermal_evolved(&sh, &o, t).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-10, "t = {t}");
    }
}

#[test]
fn spectral_hamiltonian_reassembles() {
    let cs = sample_couplings(5, 2, CouplingSet::default_variance(5)).unwrap();
    let h = build_hamiltonian(&cs);
    let sh = diagonalize(&h, 1.0).unwrap();
    assert!(sh.reassemble().max_abs_diff(&h) < 1e-10);
    assert!(h.hermiticity_defect() < 1e-12);
    assert!(sh.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn seed_is_normalized_and_hermitian() {
    let (sh, o) = instance(5, 4, 2.0);
    let seed = make_seed(&o, &thermal_root(&sh)).unwrap();
    assert!((seed.o0.norm_sq() - 1.0).abs() < 1e-12);
    assert!(seed.o0.hermiticity_defect() < 1e-12);
}

#[test]
fn krylov_basis_is_orthonormal_and_tridiagonal() {
    let (sh, o) = instance(5, 3, 1.0);
    let kd = krylov(&sh, &o, 64);
    assert!(kd.gram_defect() < 1e-10);
    let tol = 1e-8 * kd.b[0];
    assert!(kd.b.iter().all(|&b| b > tol));
    let k = kd.depth();
    for m in (0..k).step_by(3) {
        for n in (0..k).step_by(5) {
            if m.abs_diff(n) >= 2 {
                assert!(kd.liouvillian_element(m, n).abs() < 1e-8, "L[{m},{n}]");
            }
        }
    }
}

#[test]
fn deep_basis_stays_orthogonal_at_eight_sites() {
    let (sh, o) = instance(8, 1, 1.0);
    let kd = krylov(&sh, &o, 512);
    assert_eq!(kd.depth(), 512);
    assert!(kd.gram_defect() < 1e-10, "{}", kd.gram_defect());
}

#[test]
fn infinite_temperature_amplitudes_start_on_the_seed() {
    let (sh, o) = instance(4, 8, 0.0);
    let kd = krylov(&sh, &o, 256);
    let a = kd.thermal_amplitudes(0.0);
    assert!((a.phi[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    assert!(a.phi[1..].iter().all(|z| z.norm() < 1e-12));
    for k in 0..8 {
        let a = kd.thermal_amplitudes(2.5 * k as f64);
        assert!((a.norm_sq() + a.tail_weight - 1.0).abs() < 1e-10);
    }
}

#[test]
fn krylov_weight_is_conserved_at_finite_temperature() {
    let (sh, o) = instance(4, 12, 1.0);
    let kd = krylov(&sh, &o, 256);
    let w0 = overlap_amplitudes(&kd, &thermal_evolved(&sh, &o, 0.0).unwrap(), 0.0).unwrap();
    for k in 1..10 {
        let t = 1.7 * k as f64;
        let w = overlap_amplitudes(&kd, &thermal_evolved(&sh, &o, t).unwrap(), t).unwrap();
        assert!(w.tail_weight.abs() < 1e-6);
        assert!((w.norm_sq() - w0.norm_sq()).abs() < 1e-10);
    }
}

#[test]
fn exact_overlaps_agree_with_chain_propagation() {
    let (sh, o) = instance(4, 6, 1.0);
    let kd = krylov(&sh, &o, 256);
    let alpha = fit_alpha(&kd.b, 1..=4).unwrap().alpha;
    let k = kd.depth();
    for j in 0..=10 {
        let t = 0.2 * j as f64 / alpha;
        let exact = overlap_amplitudes(&kd, &thermal_evolved(&sh, &o, t).unwrap(), t).unwrap();
        let chain = tridiag_propagate(&kd.b, Complex64::new(t, sh.beta / 4.0), k).unwrap();
        let err = exact
            .phi
            .iter()
            .zip(&chain.phi)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "t = {t}: {err}");
        let spectral = kd.thermal_amplitudes(t);
        for (a, b) in exact.phi.iter().zip(&spectral.phi) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn couplings_regenerate_bit_exactly(n in 2usize..=8, seed in any::<u64>(), scale in 0.01f64..2.0) {
        let a = sample_couplings(n, seed, scale).unwrap();
        let b = sample_couplings(n, seed, scale).unwrap();
        prop_assert_eq!(a.couplings.len(), CouplingSet::n_couplings(n));
        prop_assert_eq!(a.terms().count(), 3 * n * (n - 1) / 2);
        prop_assert!(a.couplings.iter().zip(&b.couplings).all(|(x, y)| x.to_bits() == y.to_bits()));
        let back = CouplingSet::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn thermal_norm_is_time_independent(seed in 0u64..1000, beta in 0.0f64..3.0, t in 0.0f64..50.0) {
        let (sh, o) = instance(3, seed, beta);
        let n0 = thermal_evolved(&sh, &o, 0.0).unwrap().norm_sq();
        let nt = thermal_evolved(&sh, &o, t).unwrap().norm_sq();
        prop_assert!((nt - n0).abs() < 1e-12 * n0);
    }
}
