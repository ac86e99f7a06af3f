//! Oracle and invariant checks, one per acceptance criterion.
//!
//! Each check records measured quantities against pinned bounds. A bound can
//! be tightened per criterion to confirm that the check is able to fail.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{
    lorentzian_width, ramp_plateau_depth, ramp_plateau_run, solvable_ck, solvable_mu_k,
    solvable_phi, solvable_phi_vec, RampPlateauParams, SolvableParams,
};
use crate::config::{RunConfig, TimeGrid};
use crate::error::{Error, Result};
use crate::harness::spin_run;
use crate::krylov::{lanczos_spectral, overlap_amplitudes, LanczosOptions};
use crate::operator::c;
use crate::pauli::{decompose, Pauli, PauliString};
use crate::scramblon::{
    cs_closed, cs_value, kernel_fa_closed, kernel_fa_tilde, peak_in_n, peak_scaling_exponent,
    phase_exponent, rank1_factor, size_dists_exact, ScramblonParams,
};
use crate::spin::{
    build_hamiltonian, diagonalize, make_seed, sample_couplings, spin_operator, thermal_evolved,
    thermal_root, Axis, CouplingSet,
};
use crate::tridiag::{tridiag_propagate, TridiagPropagator};
use crate::winding::{
    eigen_reconstruct, find_peak, fourier_ck, overlap_matrices, size_distributions,
    uniform_mu_grid,
};

pub const CRITERIA: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    pub kind: Bound,
}

impl Measurement {
    pub fn passed(&self) -> bool {
        match self.kind {
            Bound::AtMost => self.value <= self.bound,
            Bound::AtLeast => self.value >= self.bound,
        }
    }

    fn render(&self) -> String {
        let op = match self.kind {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        let flag = if self.passed() { "" } else { " !" };
        format!("{} {} {op} {}{flag}", self.label, num(self.value), num(self.bound))
    }
}

fn num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub measurements: Vec<Measurement>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.error.is_none()
            && !self.measurements.is_empty()
            && self.measurements.iter().all(Measurement::passed)
    }

    /// `PASS  3  title  (0.12 s)  label value <= bound; ...`
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut detail: Vec<String> = self.measurements.iter().map(Measurement::render).collect();
        if let Some(e) = &self.error {
            detail.push(format!("error: {e}"));
        }
        format!(
            "{status} {:>2}  {:<32} ({:.2} s)  {}",
            self.id,
            self.title,
            self.seconds,
            detail.join("; ")
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub outcomes: Vec<Outcome>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.passed()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(Outcome::passed)
    }

    pub fn outcome(&self, id: usize) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.id == id)
    }
}

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    /// Scratch directory for the spin ensemble output.
    pub workdir: PathBuf,
    /// Criteria to run; empty runs all.
    pub only: Vec<usize>,
    /// Scales the bounds of one criterion: AtMost bounds are multiplied by
    /// the factor, AtLeast bounds divided by it.
    pub tighten: Option<(usize, f64)>,
    pub realizations: usize,
    pub seed_base: u64,
    pub threads: usize,
}

impl SelftestOptions {
    pub fn new(workdir: PathBuf) -> Self {
        SelftestOptions {
            workdir,
            only: Vec::new(),
            tighten: None,
            realizations: 100,
            seed_base: 1,
            threads: 0,
        }
    }
}

type Check = fn(&SelftestOptions, &mut Vec<Measurement>) -> Result<()>;

const TABLE: [(&str, Option<f64>, Check); CRITERIA] = [
    ("solvable-model oracle", Some(5.0), solvable_oracle),
    ("C_K closed form", Some(5.0), ck_closed_form),
    ("hopping-equation residual", None, hopping_residual),
    ("single qubit end to end", None, single_qubit),
    ("cross-basis equivalence", Some(120.0), cross_basis),
    ("norm conservation", None, norm_conservation),
    ("spin-model ensemble", Some(1800.0), spin_ensemble),
    ("scramblon h=1 closed forms", Some(60.0), scramblon_closed_forms),
    ("superlinear size phase", None, superlinear_phase),
    ("rank-1 factorization", None, rank_one),
    ("peak in n", None, peak_in_index),
    ("ramp-plateau", Some(300.0), ramp_plateau),
];

pub fn title(id: usize) -> Option<&'static str> {
    id.checked_sub(1).and_then(|k| TABLE.get(k)).map(|e| e.0)
}

/// Runs one criterion.
pub fn run_check(id: usize, opts: &SelftestOptions) -> Result<Outcome> {
    let (title, limit, check) = *id
        .checked_sub(1)
        .and_then(|k| TABLE.get(k))
        .ok_or_else(|| Error::arg(format!("no criterion {id}")))?;
    let start = Instant::now();
    let mut measurements = Vec::new();
    let error = check(opts, &mut measurements).err().map(|e| e.to_string());
    let seconds = start.elapsed().as_secs_f64();
    if let Some(l) = limit {
        measurements.push(at_most("runtime s", seconds, l));
    }
    if let Some((tid, factor)) = opts.tighten {
        if tid == id {
            for m in &mut measurements {
                m.bound = match m.kind {
                    Bound::AtMost => m.bound * factor,
                    Bound::AtLeast => m.bound / factor,
                };
            }
        }
    }
    Ok(Outcome { id, title, measurements, error, seconds })
}

/// Runs the selected criteria in order, calling `each` after every one.
pub fn run_selftest(opts: &SelftestOptions, mut each: impl FnMut(&Outcome)) -> Result<SelftestReport> {
    let start = Instant::now();
    let ids: Vec<usize> = if opts.only.is_empty() {
        (1..=CRITERIA).collect()
    } else {
        opts.only.clone()
    };
    let mut outcomes = Vec::with_capacity(ids.len());
    for id in ids {
        let o = run_check(id, opts)?;
        each(&o);
        outcomes.push(o);
    }
    Ok(SelftestReport { outcomes, seconds: start.elapsed().as_secs_f64() })
}

fn at_most(label: &str, value: f64, bound: f64) -> Measurement {
    Measurement { label: label.into(), value, bound, kind: Bound::AtMost }
}

fn at_least(label: &str, value: f64, bound: f64) -> Measurement {
    Measurement { label: label.into(), value, bound, kind: Bound::AtLeast }
}

/// max that lets NaN through, so a NaN anywhere fails the bound.
fn worst(acc: f64, v: f64) -> f64 {
    if acc.is_nan() || v.is_nan() {
        f64::NAN
    } else {
        acc.max(v)
    }
}

fn figure_solvable() -> Result<SolvableParams> {
    SolvableParams::new(PI / 2.0, 0.25, 1.0, 1.0)
}

fn solvable_oracle(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let sp = figure_solvable()?;
    let n_max = 400;
    let prop = TridiagPropagator::new(&sp.coefficients(n_max - 1), n_max, sp.beta / 4.0)?;
    let t_end = 4.0 / (2.0 * sp.alpha);
    let mut err = 0.0;
    for k in 0..=40 {
        let t = t_end * k as f64 / 40.0;
        let pr = prop.at(t);
        let exact = solvable_phi_vec(101, t, &sp)?;
        // sp.norm = 1, so absolute errors are relative to |phi|.
        for (a, b) in pr.phi.iter().zip(&exact) {
            err = worst(err, (a - b).norm());
        }
    }
    m.push(at_most("max |dphi_n|/|phi|, n<=100", err, 1e-8));
    Ok(())
}

/// Terms needed for |tanh|^{2n} to drop below 1e-20.
fn solvable_terms(t: f64, sp: &SolvableParams) -> usize {
    let r = sp.z(t).tanh().norm();
    if r < 1e-300 {
        return 1;
    }
    let n = (-20.0 * 10f64.ln() / (2.0 * r.ln())).ceil() + 16.0;
    (n as usize).min(200_000)
}

fn ck_closed_form(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let sp = figure_solvable()?;
    let mu = uniform_mu_grid(1024);
    let step = 2.0 * PI / mu.len() as f64;
    let (mut err, mut peak_err) = (0.0, 0.0);
    for k in 1..=10 {
        let t = 0.25 * k as f64 / (2.0 * sp.alpha);
        let phi = solvable_phi_vec(solvable_terms(t, &sp), t, &sp)?;
        let f = fourier_ck(&phi, &mu);
        for (v, &x) in f.values.iter().zip(&mu) {
            err = worst(err, (v - solvable_ck(x, t, &sp)).norm());
        }
        let d = (f.mu_k - solvable_mu_k(t, &sp)).abs();
        peak_err = worst(peak_err, d.min(2.0 * PI - d) / step);
    }
    m.push(at_most("max |dC_K|", err, 1e-10));
    m.push(at_most("max |dmu_K| / grid step", peak_err, 1.0));
    Ok(())
}

fn hopping_residual(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let sp = figure_solvable()?;
    let h = 1e-4;
    let t_end = 4.0 / (2.0 * sp.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // |phi| = 1, so the absolute residual is also relative to the state.
    let mut res = 0.0;
    for _ in 0..50 {
        let n: usize = rng.random_range(0..=20);
        let t: f64 = rng.random_range(0.0..t_end);
        let lhs = (solvable_phi(n, t + h, &sp)? - solvable_phi(n, t - h, &sp)?) / (2.0 * h);
        let down = if n == 0 {
            c(0.0, 0.0)
        } else {
            solvable_phi(n - 1, t, &sp)? * sp.b(n)
        };
        let up = solvable_phi(n + 1, t, &sp)? * sp.b(n + 1);
        res = worst(res, (lhs - (down - up)).norm());
    }
    m.push(at_most("max |residual|", res, 1e-6));
    Ok(())
}

fn single_qubit(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let pauli = |p: Pauli| PauliString::identity(1).with_site(0, p);
    let z = pauli(Pauli::Z).to_dense();
    let x = pauli(Pauli::X).to_dense();
    let opts = LanczosOptions { n_max: 8, ..LanczosOptions::default() };
    let times: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();

    let sh = diagonalize(&z, 0.0)?;
    let kd = lanczos_spectral(&make_seed(&x, &thermal_root(&sh))?, &sh, &opts)?;
    m.push(at_most("|K - 2|", (kd.depth() as f64 - 2.0).abs(), 0.0));
    m.push(at_most("|b_1 - 2|", (kd.b.first().copied().unwrap_or(f64::NAN) - 2.0).abs(), 1e-10));
    let mut err = 0.0;
    let mut len_err = 0.0;
    for &t in &times {
        let a = kd.thermal_amplitudes(t);
        len_err = worst(len_err, (a.phi.len() as f64 - 2.0).abs());
        let want = [c((2.0 * t).cos(), 0.0), c((2.0 * t).sin(), 0.0)];
        for (g, w) in a.phi.iter().zip(&want) {
            err = worst(err, (g - w).norm());
        }
        let pr = tridiag_propagate(&kd.b, c(t, 0.0), 2)?;
        len_err = worst(len_err, (pr.phi.len() as f64 - 2.0).abs());
        for (g, w) in pr.phi.iter().zip(&want) {
            err = worst(err, (g - w).norm());
        }
    }
    m.push(at_most("beta=0 max |dphi|", err, 1e-10));

    let beta = 0.7;
    let sh = diagonalize(&z, beta)?;
    let kd = lanczos_spectral(&make_seed(&x, &thermal_root(&sh))?, &sh, &opts)?;
    let cf = decompose(&thermal_evolved(&sh, &x, 0.0)?)?;
    let s = (2.0 * beta.cosh()).sqrt();
    let cx = c((beta / 2.0).cosh() / s, 0.0);
    let cy = c(0.0, -(beta / 2.0).sinh() / s);
    let coeff_err = (cf.get(&pauli(Pauli::X)) - cx)
        .norm()
        .max((cf.get(&pauli(Pauli::Y)) - cy).norm())
        .max(cf.get(&pauli(Pauli::I)).norm())
        .max(cf.get(&pauli(Pauli::Z)).norm());
    m.push(at_most("beta=0.7 max |dc_P|", coeff_err, 1e-10));
    let mut err = 0.0;
    for &t in &times {
        let zt = c(2.0 * t, beta / 2.0);
        let a = kd.thermal_amplitudes(t);
        len_err = worst(len_err, (a.phi.len() as f64 - 2.0).abs());
        for (g, w) in a.phi.iter().zip(&[zt.cos(), zt.sin()]) {
            err = worst(err, (g - w).norm());
        }
    }
    m.push(at_most("beta=0.7 max |dphi - (cos, sin)(2 t_beta)|", err, 1e-10));
    m.push(at_most("max |len(phi) - 2|", len_err, 0.0));
    Ok(())
}

fn spin_instance(n: usize, seed: u64, beta: f64) -> Result<(crate::spin::SpectralHamiltonian, crate::operator::DenseOperator)> {
    let cs = sample_couplings(n, seed, CouplingSet::default_variance(n))?;
    let sh = diagonalize(&build_hamiltonian(&cs), beta)?;
    Ok((sh, spin_operator(n, 0, Axis::X)))
}

fn cross_basis(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let n = 4;
    let (sh, o) = spin_instance(n, 7, 1.0)?;
    let seed = make_seed(&o, &thermal_root(&sh))?;
    let opts = LanczosOptions { n_max: 1 << (2 * n), ..LanczosOptions::default() };
    let kd = lanczos_spectral(&seed, &sh, &opts)?;
    let spectra = overlap_matrices(&kd)?;

    let k = kd.depth();
    let mut sum = DMatrix::<f64>::zeros(k, k);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for sp in &spectra {
        sum += &sp.m;
        for &l in &sp.eigenvalues {
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    let id_err = (sum - DMatrix::<f64>::identity(k, k)).amax();

    let mut err = 0.0;
    for j in 0..10 {
        let t = 0.8 * j as f64;
        let a = thermal_evolved(&sh, &o, t)?;
        let direct = size_distributions(&decompose(&a)?, t);
        let (rebuilt, _) = eigen_reconstruct(&spectra, &overlap_amplitudes(&kd, &a, t)?)?;
        let scale = direct.total();
        for l in 0..direct.p.len() {
            err = worst(err, (direct.p[l] - rebuilt.p[l]).abs() / scale);
            err = worst(err, (direct.q[l] - rebuilt.q[l]).norm() / scale);
        }
    }
    m.push(at_most("max |dp|, |dq| relative", err, 1e-8));
    m.push(at_most("max |sum_l M(l) - I|", id_err, 1e-10));
    m.push(at_least("min lambda", lo, -1e-10));
    m.push(at_most("max lambda", hi, 1.0 + 1e-10));
    Ok(())
}

fn norm_conservation(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let (sh, o) = spin_instance(8, 11, 1.0)?;
    let n0 = thermal_evolved(&sh, &o, 0.0)?.frobenius();
    let (mut drift, mut excess) = (0.0, f64::NEG_INFINITY);
    for k in 0..20 {
        let t = 1.5 * k as f64;
        let a = thermal_evolved(&sh, &o, t)?;
        drift = worst(drift, (a.frobenius() - n0).abs() / n0);
        let sd = size_distributions(&decompose(&a)?, t);
        excess = worst(excess, sd.alignment_excess() / sd.total());
    }
    m.push(at_most("max |d norm| / norm", drift, 1e-12));
    // Rounding allowance on |q| <= p.
    m.push(at_most("max (|q| - p) / sum p", excess, 1e-14));
    Ok(())
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn spin_ensemble(opts: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.output_dir = opts.workdir.join("spin-ensemble");
    cfg.threads = opts.threads;
    cfg.model.realizations = opts.realizations;
    cfg.model.seed_base = opts.seed_base;
    cfg.analysis.size_resolved = false;
    cfg.analysis.t_grid = TimeGrid { t_max: 60.0, points: 121 };
    let res = spin_run(&cfg)?;
    let fit = res.fit.ok_or_else(|| Error::State("no b_n fit".into()))?;
    m.push(at_least("fitted alpha", fit.alpha, f64::MIN_POSITIVE));
    m.push(at_most("b_n fit relative residual", fit.residual, 0.15));

    let tau: Vec<f64> = res.times.iter().map(|t| 2.0 * fit.alpha * t).collect();
    let window = |lo: f64, hi: f64| -> Vec<usize> {
        (0..tau.len()).filter(|&k| tau[k] >= lo && tau[k] <= hi).collect()
    };
    let early = window(0.5, 2.5);
    let late = window(4.0, 6.0);
    if early.len() < 3 || late.len() < 3 {
        return Err(Error::State(format!(
            "time grid covers too little of t*2alpha (alpha = {:.4})",
            fit.alpha
        )));
    }

    let rise = early
        .windows(2)
        .map(|w| res.ck_peaks[w[1]].width - res.ck_peaks[w[0]].width)
        .fold(f64::NEG_INFINITY, worst);
    m.push(at_most("largest early width increase", rise, 0.0));

    let pred = res.predicted_mu_k(cfg.model.beta);
    let mu: Vec<f64> = res.ck_peaks.iter().map(|p| p.mu_k).collect();
    let dev = early
        .iter()
        .map(|&k| ((mu[k] - pred[k]) / pred[k]).abs())
        .fold(0.0, worst);
    m.push(at_most("early max |mu_K/pred - 1|", dev, 0.25));

    let pick = |idx: &[usize], v: &[f64]| -> Vec<f64> { idx.iter().map(|&k| v[k]).collect() };
    let s_early = slope(&pick(&early, &tau), &pick(&early, &mu));
    let s_late = slope(&pick(&late, &tau), &pick(&late, &mu));
    m.push(at_most("|late slope| / |early slope|", (s_late / s_early).abs(), 0.2));

    let plateau = late.iter().map(|&k| mu[k]).sum::<f64>() / late.len() as f64;
    let r = res.completed.len();
    let per_real: Vec<f64> = (0..r)
        .map(|j| late.iter().map(|&k| res.mu_k_by_realization[k][j]).sum::<f64>() / late.len() as f64)
        .collect();
    let mean = per_real.iter().sum::<f64>() / r as f64;
    let var = per_real.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0);
    let sem = (var / r as f64).sqrt();
    m.push(at_least("|plateau mu_K| / sem", plateau.abs() / sem, 3.0));
    if res.exit_code() != 0 {
        return Err(Error::State(format!("{} realizations failed", res.report.failures.len())));
    }
    Ok(())
}

fn scramblon_closed_forms(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let p = ScramblonParams::figure(1.0)?;
    let t34 = c(0.0, -p.beta / 2.0);
    let mut fa = 0.0;
    for k in 0..20 {
        let x = c(0.25 * k as f64, 0.0);
        let exact = kernel_fa_closed(x, t34, &p);
        let q = kernel_fa_tilde(x, t34, &p)?;
        fa = worst(fa, (q.value - exact).norm() / exact.norm());
    }
    m.push(at_most("f^A max relative diff", fa, 1e-8));
    let t = p.figure_time();
    let mut cs = 0.0;
    for k in 0..20 {
        let mu = -0.6 + 1.2 * k as f64 / 19.0;
        let exact = cs_closed(mu, t, &p);
        cs = worst(cs, (cs_value(mu, t, &p)?.value - exact).norm() / exact.norm());
    }
    m.push(at_most("C_S max relative diff", cs, 1e-6));
    Ok(())
}

fn superlinear_phase(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let (lo, hi, pts) = (1e-5f64, 3e-4f64, 30);
    let r = (hi / lo).powf(1.0 / (pts - 1) as f64);
    for h in [1.0, 0.75, 0.5] {
        let p = ScramblonParams::figure(h)?;
        let t = p.figure_time();
        let s: Vec<f64> = (0..pts).map(|k| p.s0 + lo * r.powi(k)).collect();
        let d = size_dists_exact(&p, t, &s)?;
        let (k, a, _) = phase_exponent(&d, &p)?;
        m.push(at_most(&format!("h={h} |k h - 1|"), (k * h - 1.0).abs(), 0.05));
        if h == 1.0 {
            let want = (PI * p.nu / 2.0).sin() / p.k_const * (-2.0 * p.alpha * t).exp();
            m.push(at_most("h=1 |A / slope - 1|", (a / want - 1.0).abs(), 0.02));
        }
    }
    Ok(())
}

fn rank_one(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let p = ScramblonParams::figure(1.0)?;
    let unit = 1.0 / (2.0 * p.alpha);
    let s: Vec<f64> = (1..=50).map(|k| p.s0 + 0.002 * k as f64).collect();
    let f = rank1_factor(&p, &s, 0.5 * unit, 0.9 * unit)?;
    m.push(at_most("max |q - r1 r2| / |q|", f.max_rel_residual, 1e-8));
    Ok(())
}

fn peak_in_index(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    for (h, lo, hi) in [(1.0, 0.01, 0.1), (0.5, 0.003, 0.03)] {
        let p = ScramblonParams::figure(h)?;
        let t = p.figure_time();
        let pk = peak_in_n(&p, (p.s0 + 0.01) * p.n(), t)?;
        m.push(at_least(&format!("h={h} single peaked"), f64::from(u8::from(pk.single_peaked)), 1.0));
        m.push(at_most(&format!("h={h} phase spread rad"), pk.phase_spread, 0.5));
        let (k, _) = peak_scaling_exponent(&p, t, lo, hi, 6)?;
        m.push(at_most(&format!("h={h} |slope h - 1|"), (k * h - 1.0).abs(), 0.10));
    }
    Ok(())
}

fn ramp_plateau(_: &SelftestOptions, m: &mut Vec<Measurement>) -> Result<()> {
    let mu = uniform_mu_grid(16384);
    let step = 2.0 * PI / mu.len() as f64;

    // Thermodynamic limit: a ramp that never reaches its plateau. At
    // alpha t = 3 the weight beyond 1600 sites is below 1e-6.
    let thermo = RampPlateauParams::new(1.0, 1 << 30, 1.0)?;
    let times: Vec<f64> = (0..=8).map(|k| 1.0 + 0.25 * k as f64).collect();
    let run = ramp_plateau_run(&thermo, &times, 1600, &mu)?;
    let mut dev = 0.0;
    for pt in &run.points {
        dev = worst(dev, (pt.peak.width / thermo.lorentzian_width(pt.t) - 1.0).abs());
    }
    m.push(at_most("max |HWHM / lorentzian - 1|", dev, 0.10));

    let tb = SolvableParams::new(PI, 0.5, 1.0, 1.0)?;
    let t = 2.0 / PI;
    let phi = solvable_phi_vec(2 * mu.len(), t, &tb)?;
    let sq: Vec<Complex64> = phi.iter().map(|z| z * z).collect();
    let vals = crate::winding::fourier_series(&sq, &mu);
    let fitted = find_peak(&vals, &mu).width;
    m.push(at_most("alpha beta = pi: lorentzian / grid step", lorentzian_width(t, PI, 1.0) / step, 1.0));
    m.push(at_most("alpha beta = pi: fitted HWHM / grid step", fitted / step, 1.0));

    let xs: Vec<f64> = (0..=20).map(|k| 2.0 + 0.1 * k as f64).collect();
    let mut curves = Vec::new();
    for n in [8usize, 12, 16, 20] {
        let p = RampPlateauParams::new(1.0, n, 1.0)?;
        let ts = p.scrambling_time();
        let tl: Vec<f64> = xs.iter().map(|x| x * ts).collect();
        let run = ramp_plateau_run(&p, &tl, ramp_plateau_depth(&p, 4.0 * ts), &mu)?;
        if run.truncated() {
            return Err(Error::State(format!("N={n} chain truncated")));
        }
        curves.push(run.points.iter().map(|q| n as f64 * q.peak.mu_k.abs()).collect::<Vec<_>>());
        let v = run
            .plateau_front_speed()
            .ok_or_else(|| Error::State(format!("N={n} has no plateau front")))?;
        m.push(at_most(&format!("N={n} |speed / 2 plateau - 1|"), (v / (2.0 * p.plateau_level) - 1.0).abs(), 0.10));
    }
    let mut spread = 0.0;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            for (a, b) in curves[i].iter().zip(&curves[j]) {
                spread = worst(spread, (a - b).abs() / a.abs().max(b.abs()));
            }
        }
    }
    m.push(at_most("collapse max pairwise rel diff", spread, 0.10));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SelftestOptions {
        SelftestOptions::new(std::env::temp_dir())
    }

    #[test]
    fn fast_checks_pass() {
        for id in [1, 2, 3, 4, 6, 10] {
            let o = run_check(id, &opts()).unwrap();
            assert!(o.passed(), "{}", o.line());
        }
    }

    #[test]
    fn tightened_bounds_fail() {
        let mut o = opts();
        o.tighten = Some((2, 0.0));
        let out = run_check(2, &o).unwrap();
        assert!(!out.passed(), "{}", out.line());
        assert!(run_check(1, &o).unwrap().passed());
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_check(13, &opts()).is_err());
        assert!(title(0).is_none());
        assert_eq!(title(12), Some("ramp-plateau"));
    }
}
