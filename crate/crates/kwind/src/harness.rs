//! Run orchestration: disorder ensembles of the spin model, analytic curves
//! and scramblon grids, written as CSV files plus a JSON manifest.
//!
//! Every CSV starts with a header line followed by one `#` comment line
//! carrying units and conventions.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::analytic::{
    largeq_ck, largeq_phi, lorentzian_width, ramp_plateau_depth, ramp_plateau_run, solvable_ck,
    solvable_mu_k, solvable_phi_vec, solvable_theta_k, LargeQParams, RampPlateauParams,
    SolvableParams,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::krylov::{
    fit_alpha, lanczos_spectral, memory_budget_mb, overlap_amplitudes, vector_bytes,
    LanczosOptions, LineFit,
};
use crate::operator::c;
use crate::pauli::decompose;
use crate::scramblon::{
    compressed_exponential, cs_closed, cs_value, peak_in_n, size_dists_exact,
    size_dists_linearized, ScramblonParams,
};
use crate::spin::{
    build_hamiltonian, diagonalize, make_seed, sample_couplings, spin_operator, thermal_evolved,
    thermal_root, CouplingSet,
};
use crate::winding::{
    find_peak, fourier_ck, fourier_ck_normalized, fourier_cs, fourier_series, size_distributions,
    uniform_mu_grid, PeakEstimate, SizeDistributions,
};

pub const TOOL: &str = "kwind";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
const MB: f64 = 1024.0 * 1024.0;

/// Process exit status for an error: 1 for argument, configuration and
/// resource problems, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::Config(_) | Error::Resource { .. } => 1,
        _ => 3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub item: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// Paths relative to the output directory, sorted.
    pub files: Vec<String>,
    pub failures: Vec<Failure>,
    pub summary: Map<String, Value>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    pub summary: Map<String, Value>,
}

impl RunReport {
    fn new(dir: &Path) -> Self {
        RunReport {
            output_dir: dir.to_path_buf(),
            files: Vec::new(),
            failures: Vec::new(),
            summary: Map::new(),
        }
    }

    /// 0 on full success, 2 when some items failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    fn csv(&mut self, name: &str, header: &[&str], units: &str) -> Result<CsvSink> {
        let path = self.output_dir.join(name);
        let sink = CsvSink::create(&path, header, units)?;
        self.files.push(path);
        Ok(sink)
    }

    fn finish(&mut self, command: &str, cfg: &RunConfig) -> Result<()> {
        let manifest_path = self.output_dir.join(MANIFEST);
        let mut files: Vec<String> = self
            .files
            .iter()
            .map(|p| {
                p.strip_prefix(&self.output_dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .replace('\\', "/")
            })
            .collect();
        files.sort();
        let m = Manifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config: cfg.clone(),
            files,
            failures: self.failures.clone(),
            summary: self.summary.clone(),
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&manifest_path, text + "\n")?;
        self.files.push(manifest_path);
        Ok(())
    }
}

/// CSV writer that emits the header and units lines up front.
pub struct CsvSink {
    w: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str], units: &str) -> Result<Self> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "{}", header.join(","))?;
        writeln!(f, "# {units}")?;
        Ok(CsvSink {
            w: csv::WriterBuilder::new().has_headers(false).from_writer(f),
        })
    }

    pub fn row<R: Serialize>(&mut self, r: R) -> Result<()> {
        self.w.serialize(r).map_err(std::io::Error::from)?;
        Ok(())
    }

    pub fn close(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Header and numeric rows of a file written by `CsvSink`.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(std::io::Error::from)?;
    let header = rd
        .headers()
        .map_err(std::io::Error::from)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(std::io::Error::from)?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("{}: non-numeric field {s:?}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn workers(threads: usize) -> usize {
    if threads == 0 {
        rayon::current_num_threads()
    } else {
        threads
    }
}

// ---------------------------------------------------------------- spin model

/// Disorder-averaged output of `spin_run`, in realization order.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub report: RunReport,
    /// Realization indices that completed.
    pub completed: Vec<usize>,
    pub times: Vec<f64>,
    pub mu_grid: Vec<f64>,
    /// Mean of b_1..b_L over realizations, L the shortest chain.
    pub b_mean: Vec<f64>,
    pub b_std: Vec<f64>,
    pub fit: Option<LineFit>,
    /// Mean C_K of unit-normalized amplitudes, indexed [t][mu].
    pub ck_mean: Vec<Vec<Complex64>>,
    pub ck_peaks: Vec<PeakEstimate>,
    /// Peak of every realization's own C_K, indexed [t][realization].
    pub mu_k_by_realization: Vec<Vec<f64>>,
    pub cs_mean: Option<Vec<Vec<Complex64>>>,
    pub cs_peaks: Option<Vec<PeakEstimate>>,
    /// Largest tail weight seen at each time.
    pub tail_max: Vec<f64>,
}

impl EnsembleResult {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }

    /// -2 Arg tanh(alpha t_beta) with alpha from the b_n fit.
    pub fn predicted_mu_k(&self, beta: f64) -> Vec<f64> {
        match self.fit.and_then(|f| SolvableParams::new(f.alpha, 0.25, beta, 1.0).ok()) {
            Some(sp) => self.times.iter().map(|&t| solvable_mu_k(t, &sp)).collect(),
            None => vec![f64::NAN; self.times.len()],
        }
    }
}

struct Realization {
    index: usize,
    b: Vec<f64>,
    ck: Vec<Vec<Complex64>>,
    ck_peaks: Vec<PeakEstimate>,
    cs: Option<Vec<Vec<Complex64>>>,
    size: Option<Vec<SizeDistributions>>,
    tail: Vec<f64>,
}

fn normalized_sizes(sd: &SizeDistributions) -> SizeDistributions {
    let tot = sd.total();
    SizeDistributions {
        t: sd.t,
        p: sd.p.iter().map(|v| v / tot).collect(),
        q: sd.q.iter().map(|v| v / tot).collect(),
    }
}

fn run_realization(
    cfg: &RunConfig,
    r: usize,
    times: &[f64],
    mu: &[f64],
    budget_mb: f64,
) -> Result<Realization> {
    let m = &cfg.model;
    let n = m.n_sites;
    let seed = m.seed_base + r as u64;
    let variance = m.variance.unwrap_or_else(|| CouplingSet::default_variance(n));
    let cs = sample_couplings(n, seed, variance)?;
    let sh = diagonalize(&build_hamiltonian(&cs), m.beta)?;
    let o = spin_operator(n, m.operator.site, m.operator.axis);
    let seed_op = make_seed(&o, &thermal_root(&sh))?;
    let opts = LanczosOptions {
        n_max: cfg.krylov.n_max,
        tol: cfg.krylov.tol,
        reorth: cfg.krylov.reorth,
        memory_budget_mb: budget_mb,
    };
    let kd = lanczos_spectral(&seed_op, &sh, &opts)?;

    let dir = cfg.output_dir.join("realizations").join(format!("r{r:04}"));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("couplings.json"), cs.to_json() + "\n")?;
    let mut bf = CsvSink::create(&dir.join("b.csv"), &["n", "b_n"], "b_n in units of the coupling scale; b[n] couples O_{n-1} and O_n")?;
    for (k, v) in kd.b.iter().enumerate() {
        bf.row((k + 1, v))?;
    }
    bf.close()?;

    let resolved = cfg.analysis.size_resolved;
    let mut phi_f = CsvSink::create(
        &dir.join("phi.csv"),
        &["t", "n", "re_phi", "im_phi"],
        "t in units of 1/J; phi_n = (O_n|rho^{1/2} O(t))/sqrt(N_seed) with the Hermitian basis",
    )?;
    let mut peaks_f = CsvSink::create(
        &dir.join("peaks.csv"),
        &["t", "mu_k", "width_k", "tail_weight", "mu_s", "width_s"],
        "t in units of 1/J; mu in radians per Krylov index (per unit size for mu_s); widths are HWHM of |C|^2",
    )?;
    let mut size_f = if resolved {
        Some(CsvSink::create(
            &dir.join("size.csv"),
            &["t", "ell", "p", "re_q", "im_q"],
            "t in units of 1/J; p and q normalized by sum_l p(l)",
        )?)
    } else {
        None
    };

    let mut ck = Vec::with_capacity(times.len());
    let mut ck_peaks = Vec::with_capacity(times.len());
    let mut cs_all = Vec::new();
    let mut sizes = Vec::new();
    let mut tail = Vec::with_capacity(times.len());
    for &t in times {
        let (amps, sd) = if resolved {
            let a = thermal_evolved(&sh, &o, t)?;
            let amps = overlap_amplitudes(&kd, &a, t)?;
            let sd = normalized_sizes(&size_distributions(&decompose(&a)?, t));
            (amps, Some(sd))
        } else {
            (kd.thermal_amplitudes(t), None)
        };
        for (k, z) in amps.phi.iter().enumerate() {
            phi_f.row((t, k, z.re, z.im))?;
        }
        let pk = fourier_ck_normalized(&amps, mu);
        let (mu_s, width_s) = match &sd {
            Some(sd) => {
                let f = fourier_cs(sd, mu);
                if let Some(w) = size_f.as_mut() {
                    for (ell, (p, q)) in sd.p.iter().zip(&sd.q).enumerate() {
                        w.row((t, ell, p, q.re, q.im))?;
                    }
                }
                let r = (f.mu_k, f.width);
                cs_all.push(f.values);
                sizes.push(sd.clone());
                r
            }
            None => (f64::NAN, f64::NAN),
        };
        peaks_f.row((t, pk.mu_k, pk.width, amps.tail_weight, mu_s, width_s))?;
        tail.push(amps.tail_weight);
        ck_peaks.push(pk.estimate());
        ck.push(pk.values);
    }
    phi_f.close()?;
    peaks_f.close()?;
    if let Some(w) = size_f {
        w.close()?;
    }
    Ok(Realization {
        index: r,
        b: kd.b,
        ck,
        ck_peaks,
        cs: resolved.then_some(cs_all),
        size: resolved.then_some(sizes),
        tail,
    })
}

/// Memory needed by `workers` concurrent realizations, in MB.
pub fn spin_memory_estimate_mb(cfg: &RunConfig) -> f64 {
    let per = vector_bytes(cfg.model.n_sites) * (cfg.krylov.n_max + 12) as f64 / MB;
    per * workers(cfg.threads).min(cfg.model.realizations) as f64
}

fn mean_grid(parts: &[&Vec<Vec<Complex64>>]) -> Vec<Vec<Complex64>> {
    let inv = 1.0 / parts.len() as f64;
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        for (row, other) in acc.iter_mut().zip(p.iter()) {
            for (a, b) in row.iter_mut().zip(other) {
                *a += b;
            }
        }
    }
    for row in acc.iter_mut() {
        for a in row.iter_mut() {
            *a *= inv;
        }
    }
    acc
}

/// Runs every realization of the disordered spin model and writes the
/// per-realization and aggregate files.
pub fn spin_run(cfg: &RunConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let budget = memory_budget_mb();
    let need = spin_memory_estimate_mb(cfg);
    if need > budget {
        return Err(Error::Resource {
            what: format!(
                "{} concurrent realizations x {} Krylov vectors at N = {}",
                workers(cfg.threads).min(cfg.model.realizations),
                cfg.krylov.n_max,
                cfg.model.n_sites
            ),
            needed_mb: need,
            budget_mb: budget,
        });
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out.join("realizations"))?;
    let times = cfg.analysis.t_grid.values();
    let mu = uniform_mu_grid(cfg.analysis.mu_points);
    let per_worker = budget / workers(cfg.threads).max(1) as f64;

    let pool = thread_pool(cfg.threads)?;
    let outcomes: Vec<Result<Realization>> = pool.install(|| {
        (0..cfg.model.realizations)
            .into_par_iter()
            .map(|r| run_realization(cfg, r, &times, &mu, per_worker))
            .collect()
    });

    let mut report = RunReport::new(out);
    let mut done = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => done.push(v),
            Err(e) => report.failures.push(Failure {
                item: format!("realization {r} (seed {})", cfg.model.seed_base + r as u64),
                error: e.to_string(),
            }),
        }
    }
    for d in &done {
        let dir = out.join("realizations").join(format!("r{:04}", d.index));
        let mut names = vec!["couplings.json", "b.csv", "phi.csv", "peaks.csv"];
        if d.size.is_some() {
            names.push("size.csv");
        }
        report.files.extend(names.into_iter().map(|n| dir.join(n)));
    }
    if done.is_empty() {
        report.finish("spin-run", cfg)?;
        return Err(Error::Numeric {
            context: format!("all {} realizations failed", cfg.model.realizations),
            estimate: 0.0,
            bound: 0.0,
        });
    }

    let count = done.len() as f64;
    let len = done.iter().map(|d| d.b.len()).min().unwrap_or(0);
    let b_mean: Vec<f64> = (0..len)
        .map(|k| done.iter().map(|d| d.b[k]).sum::<f64>() / count)
        .collect();
    let b_std: Vec<f64> = (0..len)
        .map(|k| {
            let v = done.iter().map(|d| (d.b[k] - b_mean[k]).powi(2)).sum::<f64>();
            (v / (count - 1.0).max(1.0)).sqrt()
        })
        .collect();
    let [w0, w1] = cfg.analysis.fit_window;
    let fit = fit_alpha(&b_mean, w0..=w1).ok();

    let ck_mean = mean_grid(&done.iter().map(|d| &d.ck).collect::<Vec<_>>());
    let ck_peaks: Vec<PeakEstimate> = ck_mean.iter().map(|v| find_peak(v, &mu)).collect();
    let mu_k_by_realization: Vec<Vec<f64>> = (0..times.len())
        .map(|i| done.iter().map(|d| d.ck_peaks[i].mu_k).collect())
        .collect();
    let cs_mean = if done.iter().all(|d| d.cs.is_some()) {
        Some(mean_grid(&done.iter().map(|d| d.cs.as_ref().expect("checked")).collect::<Vec<_>>()))
    } else {
        None
    };
    let cs_peaks = cs_mean
        .as_ref()
        .map(|m| m.iter().map(|v| find_peak(v, &mu)).collect::<Vec<_>>());
    let tail_max: Vec<f64> = (0..times.len())
        .map(|i| done.iter().map(|d| d.tail[i]).fold(0.0, f64::max))
        .collect();

    let result = EnsembleResult {
        report,
        completed: done.iter().map(|d| d.index).collect(),
        times,
        mu_grid: mu,
        b_mean,
        b_std,
        fit,
        ck_mean,
        ck_peaks,
        mu_k_by_realization,
        cs_mean,
        cs_peaks,
        tail_max,
    };
    write_aggregates(cfg, result, &done)
}

fn write_aggregates(cfg: &RunConfig, mut res: EnsembleResult, done: &[Realization]) -> Result<EnsembleResult> {
    let pred = res.predicted_mu_k(cfg.model.beta);
    let rep = &mut res.report;
    let mut f = rep.csv("b_mean.csv", &["n", "b_mean", "b_std", "count"], "b_n in units of the coupling scale; std over realizations")?;
    for (k, (m, s)) in res.b_mean.iter().zip(&res.b_std).enumerate() {
        f.row((k + 1, m, s, done.len()))?;
    }
    f.close()?;

    let alpha = res.fit.map(|f| f.alpha).unwrap_or(f64::NAN);
    let mut f = rep.csv(
        "ck_mean.csv",
        &["t", "mu", "re_ck", "im_ck", "abs_ck"],
        "t in units of 1/J; mu in radians per Krylov index; mean over realizations of C_K of unit-normalized phi",
    )?;
    for (t, row) in res.times.iter().zip(&res.ck_mean) {
        for (m, v) in res.mu_grid.iter().zip(row) {
            f.row((t, m, v.re, v.im, v.norm()))?;
        }
    }
    f.close()?;

    if let Some(cs) = &res.cs_mean {
        let mut f = rep.csv(
            "cs_mean.csv",
            &["t", "mu", "re_cs", "im_cs", "abs_cs"],
            "t in units of 1/J; mu in radians per unit size; q normalized by sum_l p(l) before averaging",
        )?;
        for (t, row) in res.times.iter().zip(cs) {
            for (m, v) in res.mu_grid.iter().zip(row) {
                f.row((t, m, v.re, v.im, v.norm()))?;
            }
        }
        f.close()?;
        let mut f = rep.csv("size_mean.csv", &["t", "ell", "p", "re_q", "im_q"], "t in units of 1/J; normalized by sum_l p(l), then averaged")?;
        let nl = cfg.model.n_sites + 1;
        for (i, t) in res.times.iter().enumerate() {
            for ell in 0..nl {
                let mut p = 0.0;
                let mut q = c(0.0, 0.0);
                for d in done {
                    let sd = &d.size.as_ref().expect("resolved")[i];
                    p += sd.p[ell];
                    q += sd.q[ell];
                }
                let k = done.len() as f64;
                f.row((t, ell, p / k, q.re / k, q.im / k))?;
            }
        }
        f.close()?;
    }

    let mut f = rep.csv(
        "mu_k.csv",
        &["t", "t_2alpha", "mu_k", "width_k", "mu_k_mean", "mu_k_sem", "mu_k_pred", "mu_s", "width_s", "tail_max"],
        "t in units of 1/J and of 1/(2 alpha) with alpha from the b_n fit; mu_k of the averaged C_K; mean and standard error of per-realization peaks; mu_k_pred = -2 Arg tanh(alpha t_beta)",
    )?;
    for (i, &t) in res.times.iter().enumerate() {
        let v = &res.mu_k_by_realization[i];
        let k = v.len() as f64;
        let mean = v.iter().sum::<f64>() / k;
        let sem = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
        } else {
            f64::NAN
        };
        let (ms, ws) = res
            .cs_peaks
            .as_ref()
            .map(|p| (p[i].mu_k, p[i].width))
            .unwrap_or((f64::NAN, f64::NAN));
        let pk = &res.ck_peaks[i];
        f.row((t, 2.0 * alpha * t, pk.mu_k, pk.width, mean, sem, pred[i], ms, ws, res.tail_max[i]))?;
    }
    f.close()?;

    rep.summary.insert("realizations_completed".into(), json!(res.completed.len()));
    rep.summary.insert("realizations_failed".into(), json!(rep.failures.len()));
    rep.summary.insert("fit".into(), json!(res.fit));
    rep.summary.insert("chain_length".into(), json!(res.b_mean.len() + 1));
    rep.finish("spin-run", cfg)?;
    Ok(res)
}

// ---------------------------------------------------------------- analytic

fn solvable_params(cfg: &RunConfig) -> Result<SolvableParams> {
    let a = &cfg.analytic;
    let alpha = match a.alpha {
        Some(v) => v,
        None if a.beta > 0.0 => PI * a.nu / a.beta,
        None => return Err(Error::arg("beta = 0 needs an explicit analytic.alpha")),
    };
    SolvableParams::new(alpha, a.delta, a.beta, 1.0)
}

/// Solvable, large-q and ramp-plateau curves.
pub fn analytic_run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let a = &cfg.analytic;
    let sp = solvable_params(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let mut rep = RunReport::new(out);
    let mu = uniform_mu_grid(a.mu_points);
    let times: Vec<f64> = a.times.iter().map(|tau| tau / (2.0 * sp.alpha)).collect();

    let mut phi_f = rep.csv("solvable_phi.csv", &["t_2alpha", "n", "re_phi", "im_phi"], "t in units of 1/(2 alpha); phi_n(t + i beta/4) with unit norm")?;
    let mut ck_f = rep.csv("solvable_ck.csv", &["t_2alpha", "mu", "re_ck", "im_ck", "abs_ck"], "t in units of 1/(2 alpha); mu in radians per Krylov index; closed form")?;
    let mut mk_f = rep.csv(
        "solvable_mu_k.csv",
        &["t_2alpha", "mu_k", "mu_k_closed", "theta_k", "width", "lorentzian_width", "flat", "max_imag_ck"],
        "t in units of 1/(2 alpha); mu_k from the numerical transform of phi^2, mu_k_closed = -2 Arg tanh(alpha t_beta); flat is 1 when C_K has no peak",
    )?;
    let mut all_real = true;
    for (&tau, &t) in a.times.iter().zip(&times) {
        let phi = solvable_phi_vec(a.n_max, t, &sp)?;
        all_real &= phi.iter().all(|z| z.im.abs() <= 1e-14 * z.norm());
        for (n, z) in phi.iter().enumerate() {
            phi_f.row((tau, n, z.re, z.im))?;
        }
        let closed: Vec<Complex64> = mu.iter().map(|&m| solvable_ck(m, t, &sp)).collect();
        let max_im = closed.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        for (m, v) in mu.iter().zip(&closed) {
            ck_f.row((tau, m, v.re, v.im, v.norm()))?;
        }
        let pk = fourier_ck(&phi, &mu);
        mk_f.row((
            tau,
            pk.mu_k,
            solvable_mu_k(t, &sp),
            solvable_theta_k(t, &sp),
            pk.width,
            sp.lorentzian_width(t),
            u8::from(pk.flat),
            max_im,
        ))?;
    }
    phi_f.close()?;
    ck_f.close()?;
    mk_f.close()?;
    rep.summary.insert("solvable".into(), json!(sp));
    rep.summary.insert("solvable_phi_real".into(), json!(all_real));

    if a.q_locality > 0 && a.beta > 0.0 {
        let lq = LargeQParams::new(a.q_locality, a.nu, a.beta)?;
        let mut f = rep.csv(
            "largeq_ck.csv",
            &["t_2alpha", "mu", "re_ck", "im_ck", "abs_ck"],
            "t in units of 1/(2 alpha); leading order in 1/q",
        )?;
        let mut g = rep.csv("largeq_phi.csv", &["t_2alpha", "n", "re_phi", "im_phi"], "t in units of 1/(2 alpha); leading order in 1/q")?;
        for &tau in &a.times {
            let t = tau / (2.0 * lq.alpha);
            for m in &mu {
                let v = largeq_ck(*m, t, &lq);
                f.row((tau, m, v.re, v.im, v.norm()))?;
            }
            for n in 0..a.n_max.min(64) {
                let z = largeq_phi(n, t, &lq);
                g.row((tau, n, z.re, z.im))?;
            }
        }
        f.close()?;
        g.close()?;
        rep.summary.insert("largeq".into(), json!(lq));
    }

    if !a.ramp_sizes.is_empty() {
        ramp_plateau_files(cfg, &mut rep)?;
    }
    rep.finish("analytic", cfg)?;
    Ok(rep)
}

fn ramp_plateau_files(cfg: &RunConfig, rep: &mut RunReport) -> Result<()> {
    let a = &cfg.analytic;
    let mu = uniform_mu_grid(a.ramp_mu_points);
    let mut f = rep.csv(
        "ramp_plateau.csv",
        &["n_ramp", "t", "t_over_log_n", "mu_k", "n_abs_mu_k", "width", "lorentzian_width", "front", "boundary", "truncated"],
        "t_over_log_n = alpha t / ln N; mu in radians per Krylov index; front = largest n with |phi_n|^2 > 1e-6 max",
    )?;
    let mut speeds = Map::new();
    for &n in &a.ramp_sizes {
        let p = RampPlateauParams::new(a.ramp_alpha, n as usize, a.ramp_beta)?;
        let scale = (n as f64).ln() / p.alpha;
        let tl: Vec<f64> = (0..a.ramp_points)
            .map(|k| a.ramp_t_max * scale * k as f64 / (a.ramp_points - 1).max(1) as f64)
            .collect();
        let depth = ramp_plateau_depth(&p, a.ramp_t_max * scale);
        let run = ramp_plateau_run(&p, &tl, depth, &mu)?;
        for pt in &run.points {
            f.row((
                n,
                pt.t,
                pt.t / scale,
                pt.peak.mu_k,
                n as f64 * pt.peak.mu_k.abs(),
                pt.peak.width,
                lorentzian_width(pt.t, p.alpha, p.beta),
                pt.front,
                pt.boundary,
                u8::from(pt.truncation_warning),
            ))?;
        }
        speeds.insert(
            n.to_string(),
            json!({
                "front_speed": run.plateau_front_speed(),
                "plateau_level": p.plateau_level,
                "truncated": run.truncated(),
            }),
        );
    }
    f.close()?;
    rep.summary.insert("ramp_plateau".into(), Value::Object(speeds));
    Ok(())
}

// ---------------------------------------------------------------- scramblon

pub fn scramblon_params(cfg: &RunConfig, h: f64) -> Result<ScramblonParams> {
    let s = &cfg.scramblon;
    let mut p = ScramblonParams::new(s.q_locality, s.nu, s.beta, s.n_majorana, h)?;
    if let Some(d) = s.delta {
        p = p.with_delta(d)?;
    }
    if let Some(cc) = s.ladder_c {
        p = p.with_ladder_c(cc)?;
    }
    Ok(p)
}

fn h_tag(h: f64) -> String {
    format!("{h}").replace('.', "p")
}

/// True when |values| fails to rise monotonically from the left edge of
/// the grid to the peak.
pub fn left_flank_non_monotone(values: &[Complex64]) -> bool {
    let mags: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let k = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    mags[..=k].windows(2).any(|w| w[1] < w[0])
}

/// Size and winding distributions, C_S and peak-in-n profiles for each h.
/// Failing grid points are recorded and the run continues.
pub fn scramblon_run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let s = &cfg.scramblon;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let mut rep = RunReport::new(out);
    let pool = thread_pool(cfg.threads)?;
    let mut per_h = Map::new();
    for &h in &s.h_list {
        let p = scramblon_params(cfg, h)?;
        let t = s.t / (2.0 * p.alpha);
        let tag = h_tag(h);
        let grid: Vec<f64> = (1..=s.s_points)
            .map(|k| p.s0 + s.s_span * k as f64 / s.s_points as f64)
            .collect();
        let exact: Vec<Result<(f64, f64, f64)>> = pool.install(|| {
            grid.par_iter()
                .map(|&x| size_dists_exact(&p, t, &[x]).map(|d| (d.y[0], d.p[0], d.arg_q[0])))
                .collect()
        });
        let lin = size_dists_linearized(&p, t, &grid)?;
        let mut f = rep.csv(
            &format!("size_h{tag}.csv"),
            &["s", "s_minus_s0", "y", "p", "arg_q", "p_lin", "arg_q_lin", "re_shape", "im_shape"],
            "s = l/N; t in units of 1/(2 alpha) as configured; arg in radians; shape = exp(-K^{-1/h}(s-s0)^{1/h} e^{-2 alpha t_beta})",
        )?;
        for (i, &x) in grid.iter().enumerate() {
            let (y, pp, ar) = match &exact[i] {
                Ok(v) => *v,
                Err(e) => {
                    rep.failures.push(Failure { item: format!("h={h} s={x}"), error: e.to_string() });
                    (f64::NAN, f64::NAN, f64::NAN)
                }
            };
            let sh = compressed_exponential(x, t, &p)?;
            f.row((x, x - p.s0, y, pp, ar, lin.p[i], lin.arg_q[i], sh.re, sh.im))?;
        }
        f.close()?;

        let mu: Vec<f64> = (0..s.mu_points)
            .map(|k| -s.mu_max + 2.0 * s.mu_max * k as f64 / (s.mu_points - 1) as f64)
            .collect();
        let cs: Vec<Result<Complex64>> =
            pool.install(|| mu.par_iter().map(|&m| cs_value(m, t, &p).map(|r| r.value)).collect());
        let mut f = rep.csv(
            &format!("cs_h{tag}.csv"),
            &["mu", "re_cs", "im_cs", "abs_cs", "re_closed", "im_closed"],
            "mu in radians per unit size l; closed columns are the h = 1 closed form (NaN otherwise)",
        )?;
        let mut values = Vec::with_capacity(mu.len());
        let mut worst: f64 = 0.0;
        for (m, v) in mu.iter().zip(&cs) {
            let v = match v {
                Ok(v) => *v,
                Err(e) => {
                    rep.failures.push(Failure { item: format!("h={h} mu={m}"), error: e.to_string() });
                    c(f64::NAN, f64::NAN)
                }
            };
            let cl = if h == 1.0 { cs_closed(*m, t, &p) } else { c(f64::NAN, f64::NAN) };
            if h == 1.0 && v.re.is_finite() {
                worst = worst.max((v - cl).norm() / cl.norm());
            }
            values.push(v);
            f.row((m, v.re, v.im, v.norm(), cl.re, cl.im))?;
        }
        f.close()?;
        let finite: Vec<Complex64> = values.iter().copied().filter(|z| z.re.is_finite()).collect();
        let peak = (finite.len() == values.len()).then(|| find_peak(&values, &mu));

        let mut entry = json!({
            "params": p,
            "t": t,
            "lambda0": p.lambda0(t),
            "early_time_warning": lin.warning,
            "cs_mu_peak": peak.map(|pk| pk.mu_k),
            "cs_width": peak.map(|pk| pk.width),
            "cs_left_flank_non_monotone": left_flank_non_monotone(&values),
        });
        if h == 1.0 {
            entry["cs_closed_form_max_rel_diff"] = json!(worst);
        }
        match peak_in_n(&p, (p.s0 + s.peak_offset) * p.n_majorana as f64, t) {
            Ok(pk) => {
                let mut f = rep.csv(
                    &format!("peak_n_h{tag}.csv"),
                    &["n", "abs_phi_psi", "arg_phi"],
                    "|phi_n(t_beta) psi_0n(l)| and Arg phi_n in radians at l = (s0 + peak_offset) N",
                )?;
                for (n, (v, a)) in pk.terms.iter().zip(&pk.phase).enumerate() {
                    f.row((n, v, a))?;
                }
                f.close()?;
                entry["peak_n0"] = json!(pk.n0);
                entry["peak_hwhm"] = json!(pk.hwhm_n);
                entry["peak_phase_spread"] = json!(pk.phase_spread);
                entry["peak_single"] = json!(pk.single_peaked);
            }
            Err(e) => rep.failures.push(Failure { item: format!("h={h} peak-in-n"), error: e.to_string() }),
        }
        per_h.insert(format!("h={h}"), entry);
    }
    rep.summary.insert("scramblon".into(), Value::Object(per_h));
    rep.finish("scramblon", cfg)?;
    Ok(rep)
}

/// Recomputes the mean C_K from the per-realization `phi.csv` files of a
/// finished run; returns the largest deviation from `ck_mean.csv`.
pub fn recompute_ck_mean(dir: &Path) -> Result<f64> {
    let m = Manifest::read(dir)?;
    let mu = uniform_mu_grid(m.config.analysis.mu_points);
    let times = m.config.analysis.t_grid.values();
    let mut acc: Vec<Vec<Complex64>> = vec![vec![c(0.0, 0.0); mu.len()]; times.len()];
    let mut count = 0usize;
    let mut rdirs: Vec<PathBuf> = fs::read_dir(dir.join("realizations"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("phi.csv").exists())
        .collect();
    rdirs.sort();
    for rd in rdirs {
        let (_, rows) = read_csv(&rd.join("phi.csv"))?;
        for (i, &t) in times.iter().enumerate() {
            let phi: Vec<Complex64> = rows
                .iter()
                .filter(|r| r[0] == t)
                .map(|r| c(r[2], r[3]))
                .collect();
            let norm = phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let sq: Vec<Complex64> = phi.iter().map(|z| (z / norm) * (z / norm)).collect();
            for (a, v) in acc[i].iter_mut().zip(fourier_series(&sq, &mu)) {
                *a += v;
            }
        }
        count += 1;
    }
    let (_, rows) = read_csv(&dir.join("ck_mean.csv"))?;
    let mut worst: f64 = 0.0;
    for (k, r) in rows.iter().enumerate() {
        let (i, j) = (k / mu.len(), k % mu.len());
        let mine = acc[i][j] / count as f64;
        worst = worst.max((mine - c(r[2], r[3])).norm());
    }
    Ok(worst)
}
