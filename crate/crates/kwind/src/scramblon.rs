//! Scramblon description of the large-q SYK + bath model.
//!
//! Sizes are normalized, `s = l / N`. The early-time distributions use the
//! delta-function limit of the Gaussian smearing, where every size `s`
//! corresponds to one scramblon variable `y` through
//! `1 - 2 s = f_A(lambda_0 y^h, -i beta/2)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::SolvableParams;
use crate::error::{Error, Result};
use crate::operator::c;
use crate::quad::{power_exp, semi_infinite, QuadOptions, QuadResult};
use crate::winding::FourierPeak;

/// lambda_0 above which the early-time formulas are flagged.
pub const EARLY_TIME_LAMBDA0: f64 = 0.1;
pub const MAX_PSI_INDEX: usize = 10_000;
const LOG_RESCALE: f64 = 1e150;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScramblonParams {
    pub q_locality: u32,
    pub delta: f64,
    pub nu: f64,
    pub beta: f64,
    pub n_majorana: u64,
    /// lambda_L / (2 alpha)
    pub h: f64,
    pub alpha: f64,
    pub ladder_c: f64,
    pub s0: f64,
    pub k_const: f64,
}

impl ScramblonParams {
    /// Delta = 1/q and the large-q ladder constant 4 N Delta^2 cos(pi nu/2).
    pub fn new(q_locality: u32, nu: f64, beta: f64, n_majorana: u64, h: f64) -> Result<Self> {
        if q_locality < 2 || q_locality % 2 != 0 {
            return Err(Error::arg(format!("q must be an even integer >= 2, got {q_locality}")));
        }
        let delta = 1.0 / q_locality as f64;
        let ladder = default_ladder(n_majorana, delta, nu);
        Self::build(q_locality, delta, nu, beta, n_majorana, h, ladder)
    }

    /// Figure parameter set: N = 3000, nu = 0.5, q = 6, beta = 1.
    pub fn figure(h: f64) -> Result<Self> {
        Self::new(6, 0.5, 1.0, 3000, h)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let ladder = default_ladder(self.n_majorana, delta, self.nu);
        Self::build(self.q_locality, delta, self.nu, self.beta, self.n_majorana, self.h, ladder)
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::build(self.q_locality, self.delta, self.nu, self.beta, self.n_majorana, h, self.ladder_c)
    }

    pub fn with_ladder_c(&self, ladder_c: f64) -> Result<Self> {
        Self::build(self.q_locality, self.delta, self.nu, self.beta, self.n_majorana, self.h, ladder_c)
    }

    fn build(
        q_locality: u32,
        delta: f64,
        nu: f64,
        beta: f64,
        n_majorana: u64,
        h: f64,
        ladder_c: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::arg(format!("delta must be positive, got {delta}")));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::arg(format!("nu must lie in (0,1), got {nu}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::arg(format!("beta must be positive, got {beta}")));
        }
        if n_majorana == 0 {
            return Err(Error::arg("N must be positive"));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::arg(format!("h must lie in (0,1], got {h}")));
        }
        if !(ladder_c > 0.0 && ladder_c.is_finite()) {
            return Err(Error::arg(format!("ladder constant must be positive, got {ladder_c}")));
        }
        let cosv = (PI * nu / 2.0).cos();
        let k_const = cosv.powf(2.0 * delta) * libm::tgamma(2.0 * delta + h)
            / (2.0 * libm::tgamma(2.0 * delta) * ladder_c);
        Ok(ScramblonParams {
            q_locality,
            delta,
            nu,
            beta,
            n_majorana,
            h,
            alpha: PI * nu / beta,
            ladder_c,
            s0: (1.0 - cosv.powf(2.0 * delta)) / 2.0,
            k_const,
        })
    }

    /// Largest deviation of stored derived fields from a fresh evaluation.
    pub fn derived_defect(&self) -> f64 {
        match Self::build(
            self.q_locality,
            self.delta,
            self.nu,
            self.beta,
            self.n_majorana,
            self.h,
            self.ladder_c,
        ) {
            Ok(f) => [
                (f.alpha - self.alpha).abs(),
                (f.s0 - self.s0).abs(),
                ((f.k_const - self.k_const) / f.k_const).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn lambda_l(&self) -> f64 {
        2.0 * self.alpha * self.h
    }

    /// C^{-1} e^{lambda_L t}
    pub fn lambda0(&self, t: f64) -> f64 {
        (self.lambda_l() * t).exp() / self.ladder_c
    }

    /// t = 0.9 / (2 alpha)
    pub fn figure_time(&self) -> f64 {
        0.9 / (2.0 * self.alpha)
    }

    fn cos_half(&self) -> f64 {
        (PI * self.nu / 2.0).cos()
    }

    fn sin_half(&self) -> f64 {
        (PI * self.nu / 2.0).sin()
    }

    /// cos(pi nu (1/2 - i T / beta))
    pub fn vertex_c(&self, t: Complex64) -> Complex64 {
        (c(0.5, 0.0) - c(0.0, 1.0) * t / self.beta).scale(PI * self.nu).cos()
    }

    pub fn n(&self) -> f64 {
        self.n_majorana as f64
    }

    /// The solvable Krylov family with the same alpha, beta and Delta.
    pub fn solvable(&self) -> SolvableParams {
        SolvableParams {
            alpha: self.alpha,
            delta: self.delta,
            beta: self.beta,
            norm: 1.0,
        }
    }
}

fn default_ladder(n: u64, delta: f64, nu: f64) -> f64 {
    4.0 * n as f64 * delta * delta * (PI * nu / 2.0).cos()
}

/// 2pi/beta (1 - (sqrt(k^4 + 4k^2) - k^2)/2)
pub fn lambda_l_from_k(k_ratio: f64, beta: f64) -> f64 {
    let k2 = k_ratio * k_ratio;
    2.0 * PI / beta * (1.0 - ((k2 * k2 + 4.0 * k2).sqrt() - k2) / 2.0)
}

/// h = lambda_L beta / (2 pi nu)
pub fn h_from_lambda_l(lambda_l: f64, nu: f64, beta: f64) -> f64 {
    lambda_l * beta / (2.0 * PI * nu)
}

/// h^R(y, T) = y^{2D-1} cos^{2D}(pi nu/2) / Gamma(2D) exp(-y cos(pi nu (1/2 - i T/beta)))
pub fn kernel_h_r(y: Complex64, t12: Complex64, p: &ScramblonParams) -> Complex64 {
    let two_d = 2.0 * p.delta;
    y.powf(two_d - 1.0) * p.cos_half().powf(two_d) / libm::tgamma(two_d)
        * (-y * p.vertex_c(t12)).exp()
}

/// f~_A(x, T) = int_0^inf e^{-x y^h} h^A(y, T) dy by quadrature.
pub fn kernel_fa_tilde(x: Complex64, t34: Complex64, p: &ScramblonParams) -> Result<QuadResult> {
    let two_d = 2.0 * p.delta;
    let pref = p.cos_half().powf(two_d) / libm::tgamma(two_d);
    let r = power_exp(two_d, p.vertex_c(t34), -x, p.h, &QuadOptions::default())?;
    Ok(QuadResult {
        value: r.value * pref,
        error: r.error * pref,
        evaluations: r.evaluations,
    })
}

/// h = 1 closed form cos^{2D}(pi nu/2) (c(T) + x)^{-2D}.
pub fn kernel_fa_closed(x: Complex64, t34: Complex64, p: &ScramblonParams) -> Complex64 {
    let two_d = 2.0 * p.delta;
    (p.vertex_c(t34) + x).powf(-two_d) * p.cos_half().powf(two_d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DeltaApproxExactInversion,
    EarlyTimeLinearized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScramblonDistributions {
    pub t: f64,
    pub method: Method,
    pub lambda0: f64,
    pub s_grid: Vec<f64>,
    /// Scramblon variable solving the size relation at each s.
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub arg_q: Vec<f64>,
    pub abs_q: Vec<f64>,
    /// Set when lambda_0 exceeds EARLY_TIME_LAMBDA0.
    pub warning: Option<String>,
}

impl ScramblonDistributions {
    pub fn q(&self) -> Vec<Complex64> {
        self.abs_q
            .iter()
            .zip(&self.arg_q)
            .map(|(r, a)| Complex64::from_polar(*r, *a))
            .collect()
    }
}

fn early_time_warning(lambda0: f64) -> Option<String> {
    (lambda0 > EARLY_TIME_LAMBDA0).then(|| {
        format!("lambda0 = {lambda0:.3e} exceeds {EARLY_TIME_LAMBDA0}; early-time formulas are unreliable")
    })
}

fn check_size(s: f64, p: &ScramblonParams) -> Result<f64> {
    if !(s > p.s0 && s < 0.5) {
        return Err(Error::range(format!(
            "size {s} outside ({}, 1/2)",
            p.s0
        )));
    }
    Ok(s - p.s0)
}

/// s(y) - s0 = cos^{2D}/(2 Gamma(2D)) int y_l^{2D-1} e^{-y_l} (1 - e^{-lambda_0 (y y_l)^h}),
/// evaluated without the cancellation in 1 - 2s.
pub fn size_offset(y: f64, t: f64, p: &ScramblonParams) -> Result<f64> {
    if y <= 0.0 {
        return Ok(0.0);
    }
    let two_d = 2.0 * p.delta;
    let x = p.lambda0(t) * y.powf(p.h);
    let h = p.h;
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-13, ..Default::default() };
    let r = semi_infinite(
        two_d,
        1.0,
        |_| 0.0,
        |yl| c(-(-x * yl.powf(h)).exp_m1() * (-yl).exp(), 0.0),
        &opts,
    )?;
    Ok(0.5 * p.cos_half().powf(two_d) / libm::tgamma(two_d) * r.value.re)
}

pub fn size_of_y(y: f64, t: f64, p: &ScramblonParams) -> Result<f64> {
    Ok(p.s0 + size_offset(y, t, p)?)
}

/// Inverts the size relation for y by bracketed regula falsi in log y.
pub fn solve_y(s: f64, t: f64, p: &ScramblonParams) -> Result<f64> {
    let ds = check_size(s, p)?;
    let two_d = 2.0 * p.delta;
    let lin = 2.0 * libm::tgamma(two_d) * ds
        / (p.cos_half().powf(two_d) * p.lambda0(t) * libm::tgamma(two_d + p.h));
    let guess = lin.powf(1.0 / p.h).max(1e-300).ln();
    let f = |u: f64| -> Result<f64> { Ok(size_offset(u.exp(), t, p)? / ds - 1.0) };

    let (mut lo, mut hi) = (guess - 0.5, guess + 0.5);
    let (mut flo, mut fhi) = (f(lo)?, f(hi)?);
    for _ in 0..200 {
        if flo <= 0.0 {
            break;
        }
        hi = lo;
        fhi = flo;
        lo -= 2.0;
        flo = f(lo)?;
    }
    for _ in 0..200 {
        if fhi >= 0.0 {
            break;
        }
        lo = hi;
        flo = fhi;
        hi += 2.0;
        fhi = f(hi)?;
    }
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::range(format!("size {s} could not be bracketed")));
    }
    // Illinois variant of regula falsi
    let mut side = 0i8;
    for _ in 0..200 {
        let u = (lo * fhi - hi * flo) / (fhi - flo);
        let fu = f(u)?;
        if fu.abs() < 1e-13 || (hi - lo) < 1e-14 * hi.abs().max(1.0) {
            return Ok(u.exp());
        }
        if fu < 0.0 {
            lo = u;
            flo = fu;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = u;
            fhi = fu;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(((lo * fhi - hi * flo) / (fhi - flo)).exp())
}

/// ln int_0^inf u^{2D+h-1} e^{-(k u)^h - u} du, substituting v = (k u)^h when k > 1
/// so the quadrature always sees an O(1) decay scale.
fn ln_jacobian_integral(k: f64, two_d: f64, h: f64) -> Result<f64> {
    let a = two_d + h;
    let opts = QuadOptions { abs_tol: 1e-300, ..Default::default() };
    if k <= 1.0 {
        let r = semi_infinite(a, 1.0, |_| 0.0, |u| c((-(k * u).powf(h) - u).exp(), 0.0), &opts)?;
        Ok(r.value.re.ln())
    } else {
        let r = semi_infinite(a / h, 1.0, |_| 0.0, |v| c((-v - v.powf(1.0 / h) / k).exp(), 0.0), &opts)?;
        Ok(r.value.re.ln() - a * k.ln() - h.ln())
    }
}

/// Early-time distributions with the exact size relation.
///
/// `p = 2 (lambda_0 h)^{-1} y^{2D-h} e^{-y cos(pi nu/2)} / J(y)` with
/// `J = int y_l^{2D+h-1} e^{-lambda_0 (y y_l)^h - y_l}` (the analytic y-derivative
/// of f~_A), `Arg q = y sin(pi nu/2) - pi nu D`, `|q| = p`.
pub fn size_dists_exact(p: &ScramblonParams, t: f64, s_grid: &[f64]) -> Result<ScramblonDistributions> {
    let lambda0 = p.lambda0(t);
    let two_d = 2.0 * p.delta;
    let rows: Vec<(f64, f64, f64)> = s_grid
        .par_iter()
        .map(|&s| -> Result<(f64, f64, f64)> {
            let y = solve_y(s, t, p)?;
            let ln_j = ln_jacobian_integral(lambda0.powf(1.0 / p.h) * y, two_d, p.h)?;
            let ln_dens = 2f64.ln() + (two_d - p.h) * y.ln() - y * p.cos_half()
                - (lambda0 * p.h).ln()
                - ln_j;
            let dens = ln_dens.exp();
            Ok((y, dens, y * p.sin_half() - PI * p.nu * p.delta))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(p, t, s_grid, rows, Method::DeltaApproxExactInversion))
}

fn assemble(
    p: &ScramblonParams,
    t: f64,
    s_grid: &[f64],
    rows: Vec<(f64, f64, f64)>,
    method: Method,
) -> ScramblonDistributions {
    let lambda0 = p.lambda0(t);
    ScramblonDistributions {
        t,
        method,
        lambda0,
        s_grid: s_grid.to_vec(),
        y: rows.iter().map(|r| r.0).collect(),
        p: rows.iter().map(|r| r.1).collect(),
        arg_q: rows.iter().map(|r| r.2).collect(),
        abs_q: rows.iter().map(|r| r.1).collect(),
        warning: early_time_warning(lambda0),
    }
}

/// Closed forms from linearizing e^{-lambda_0 (y y_l)^h}:
/// `y = K^{-1/h} e^{-2at} (s - s0)^{1/h}`.
pub fn size_dists_linearized(p: &ScramblonParams, t: f64, s_grid: &[f64]) -> Result<ScramblonDistributions> {
    let two_d = 2.0 * p.delta;
    let pref = 2.0 * p.ladder_c / (p.h * libm::tgamma(two_d + p.h));
    let rows = s_grid
        .iter()
        .map(|&s| {
            let ds = check_size(s, p)?;
            let lt = ds / p.k_const;
            let y = lt.powf(1.0 / p.h) * (-2.0 * p.alpha * t).exp();
            let dens = pref * lt.powf(two_d / p.h - 1.0) * (-2.0 * two_d * p.alpha * t).exp()
                * (-y * p.cos_half()).exp();
            Ok((y, dens, y * p.sin_half() - PI * p.nu * p.delta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(p, t, s_grid, rows, Method::EarlyTimeLinearized))
}

/// Compressed-exponential shape exp(-K^{-1/h} (s - s0)^{1/h} e^{-2 alpha (t + i beta/4)}).
pub fn compressed_exponential(s: f64, t: f64, p: &ScramblonParams) -> Result<Complex64> {
    let ds = check_size(s, p)?;
    let z = c(t, p.beta / 4.0) * (-2.0 * p.alpha);
    Ok((-(ds / p.k_const).powf(1.0 / p.h) * z.exp()).exp())
}

/// C_S(mu, t) by quadrature over the linearized size relation.
pub fn cs_value(mu: f64, t: f64, p: &ScramblonParams) -> Result<QuadResult> {
    let two_d = 2.0 * p.delta;
    let half = PI * p.nu / 2.0;
    let w = c(0.0, mu * p.k_const * p.n() * (2.0 * p.alpha * p.h * t).exp());
    let r = power_exp(two_d, Complex64::from_polar(1.0, -half), w, p.h, &QuadOptions::default())?;
    let pref = Complex64::from_polar(
        p.cos_half().powf(two_d) / libm::tgamma(two_d),
        mu * p.s0 * p.n() - PI * p.nu * p.delta,
    );
    Ok(QuadResult {
        value: r.value * pref,
        error: r.error * pref.norm(),
        evaluations: r.evaluations,
    })
}

/// h = 1 closed form of C_S.
pub fn cs_closed(mu: f64, t: f64, p: &ScramblonParams) -> Complex64 {
    let half = PI * p.nu / 2.0;
    let den = Complex64::from_polar(1.0, -half)
        - c(0.0, mu * p.k_const * p.n() * (2.0 * p.alpha * t).exp());
    (c(p.cos_half(), 0.0) / den).powf(2.0 * p.delta)
        * Complex64::from_polar(1.0, mu * p.s0 * p.n() - PI * p.nu * p.delta)
}

pub fn cs_scramblon(mu_grid: &[f64], t: f64, p: &ScramblonParams) -> Result<FourierPeak> {
    let values = mu_grid
        .par_iter()
        .map(|&mu| cs_value(mu, t, p).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(FourierPeak::from_values(mu_grid, values))
}

/// r(s, t) with q(s, t1, t2) = r(s, t1) r(s, t2).
pub fn r_of_s(s: f64, t: f64, p: &ScramblonParams) -> Result<Complex64> {
    let ds = check_size(s, p)?;
    let lt = ds / p.k_const;
    let amp = (2.0 * p.ladder_c / (p.h * libm::tgamma(2.0 * p.delta + p.h))).sqrt()
        * lt.powf(p.delta / p.h - 0.5);
    let ab = c(t, p.beta / 4.0) * p.alpha;
    Ok((-ab * (2.0 * p.delta) - (-ab * 2.0).exp() * (0.5 * lt.powf(1.0 / p.h))).exp() * amp)
}

/// Two-time winding distribution in the linearized regime.
pub fn q_two_time(s: f64, t1: f64, t2: f64, p: &ScramblonParams) -> Result<Complex64> {
    let ds = check_size(s, p)?;
    let lt = ds / p.k_const;
    let two_d = 2.0 * p.delta;
    let amp = 2.0 * p.ladder_c / (p.h * libm::tgamma(two_d + p.h)) * lt.powf(two_d / p.h - 1.0);
    let a = p.alpha;
    let first = c(-two_d * a * (t1 + t2), -PI * p.nu * p.delta);
    let mix = ((-2.0 * a * t1).exp() + (-2.0 * a * t2).exp()) / 2.0;
    let second = -Complex64::from_polar(lt.powf(1.0 / p.h) * mix, -PI * p.nu / 2.0);
    Ok((first + second).exp() * amp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rank1Factorization {
    pub s_grid: Vec<f64>,
    pub q_two_time: Vec<Complex64>,
    pub r1: Vec<Complex64>,
    pub r2: Vec<Complex64>,
    /// max_s |q - r1 r2| / |q|
    pub max_rel_residual: f64,
}

pub fn rank1_factor(p: &ScramblonParams, s_grid: &[f64], t1: f64, t2: f64) -> Result<Rank1Factorization> {
    let mut q = Vec::with_capacity(s_grid.len());
    let mut r1 = Vec::with_capacity(s_grid.len());
    let mut r2 = Vec::with_capacity(s_grid.len());
    let mut worst: f64 = 0.0;
    for &s in s_grid {
        let qv = q_two_time(s, t1, t2, p)?;
        let (a, b) = (r_of_s(s, t1, p)?, r_of_s(s, t2, p)?);
        worst = worst.max((qv - a * b).norm() / qv.norm());
        q.push(qv);
        r1.push(a);
        r2.push(b);
    }
    Ok(Rank1Factorization {
        s_grid: s_grid.to_vec(),
        q_two_time: q,
        r1,
        r2,
        max_rel_residual: worst,
    })
}

/// ln|psi_{0n}(l)| and sign for n = 0..len.
///
/// `psi_{0n} = A e^{-x/2} lt^{D/h-1/2} (-1)^n sqrt(Gamma(2D) n!/Gamma(n+2D)) L_n^{(2D-1)}(x)`
/// with `lt = (s - s0)/K`, `x = lt^{1/h}`; the normalized Laguerre values come
/// from the three-term recurrence with a running log scale.
fn psi0_log(len: usize, ell: f64, p: &ScramblonParams) -> Result<Vec<(f64, f64)>> {
    if len > MAX_PSI_INDEX + 1 {
        return Err(Error::range(format!("psi_0n requested up to n = {}", len - 1)));
    }
    let ds = check_size(ell / p.n(), p)?;
    let lt = ds / p.k_const;
    let x = lt.powf(1.0 / p.h);
    let b = 2.0 * p.delta;
    let a = b - 1.0;
    let pref = 0.5 * (2.0 * p.ladder_c / (p.n() * p.h * libm::tgamma(b + p.h))).ln()
        + 0.5 * libm::lgamma(b)
        + (p.delta / p.h - 0.5) * lt.ln()
        - x / 2.0;
    let mut out = Vec::with_capacity(len);
    let (mut prev, mut cur) = (0.0f64, (-0.5 * libm::lgamma(b)).exp());
    let mut log_scale = 0.0;
    for n in 0..len {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 } * cur.signum();
        out.push((pref + log_scale + cur.abs().ln(), sign));
        let nf = n as f64;
        let r1 = ((nf + 1.0) / (nf + a + 1.0)).sqrt();
        let r0 = if n == 0 { 0.0 } else { ((nf + 1.0) * nf / ((nf + a + 1.0) * (nf + a))).sqrt() };
        let next = ((2.0 * nf + 1.0 + a - x) * cur * r1 - (nf + a) * prev * r0) / (nf + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > LOG_RESCALE {
            cur /= LOG_RESCALE;
            prev /= LOG_RESCALE;
            log_scale += LOG_RESCALE.ln();
        }
        if !cur.is_finite() {
            return Err(Error::range(format!("Laguerre recurrence overflow at n = {}", n + 1)));
        }
    }
    Ok(out)
}

/// psi_{0n}(l) for n = 0..len.
pub fn psi0_vec(len: usize, ell: f64, p: &ScramblonParams) -> Result<Vec<f64>> {
    Ok(psi0_log(len, ell, p)?.into_iter().map(|(l, s)| s * l.exp()).collect())
}

pub fn psi0(n: usize, ell: f64, p: &ScramblonParams) -> Result<f64> {
    Ok(psi0_vec(n + 1, ell, p)?[n])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakInN {
    /// Argmax refined by a parabola through the three largest neighbours.
    pub n0: f64,
    pub n_argmax: usize,
    pub hwhm_n: f64,
    /// max - min of Arg phi_n over the half-maximum window.
    pub phase_spread: f64,
    /// The half-maximum set is one contiguous run of indices.
    pub single_peaked: bool,
    pub window: (usize, usize),
    pub terms: Vec<f64>,
    pub phase: Vec<f64>,
}

/// Profile |phi_n(t_beta) psi_{0n}(l)| over n.
pub fn peak_in_n(p: &ScramblonParams, ell: f64, t: f64) -> Result<PeakInN> {
    let sp = p.solvable();
    let z = sp.z(t);
    let th = z.tanh();
    let ch = z.cosh();
    let two_d = 2.0 * p.delta;
    let mut len = 64usize;
    loop {
        let psi = psi0_log(len, ell, p)?;
        let terms: Vec<f64> = psi
            .iter()
            .enumerate()
            .map(|(n, (lp, _))| {
                let lphi = 0.5 * (libm::lgamma(two_d + n as f64) - libm::lgamma(n as f64 + 1.0) - libm::lgamma(two_d))
                    + n as f64 * th.norm().ln()
                    - two_d * ch.norm().ln();
                (lphi + lp).exp()
            })
            .collect();
        let (k, &peak) = terms
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let settled = k < len / 2 && terms[len - 1] < 1e-12 * peak;
        if settled || len > MAX_PSI_INDEX {
            if !settled {
                return Err(Error::range(format!("peak in n not resolved below n = {MAX_PSI_INDEX}")));
            }
            let phase: Vec<f64> = (0..len)
                .map(|n| n as f64 * th.arg() - two_d * ch.arg())
                .collect();
            return Ok(profile(terms, phase, k, peak));
        }
        len = (2 * len).min(MAX_PSI_INDEX + 1);
    }
}

fn profile(terms: Vec<f64>, phase: Vec<f64>, k: usize, peak: f64) -> PeakInN {
    let half = peak / 2.0;
    let above: Vec<usize> = (0..terms.len()).filter(|&n| terms[n] >= half).collect();
    let (lo, hi) = (above[0], *above.last().expect("peak is above half"));
    let single = hi - lo + 1 == above.len();
    let n0 = if k > 0 && k + 1 < terms.len() {
        let (a, b, cc) = (terms[k - 1], terms[k], terms[k + 1]);
        let den = a - 2.0 * b + cc;
        if den != 0.0 { k as f64 + 0.5 * (a - cc) / den } else { k as f64 }
    } else {
        k as f64
    };
    let left = if lo == 0 {
        0.0
    } else {
        let (a, b) = (terms[lo - 1], terms[lo]);
        (lo - 1) as f64 + (half - a) / (b - a)
    };
    let right = if hi + 1 >= terms.len() {
        hi as f64
    } else {
        let (a, b) = (terms[hi], terms[hi + 1]);
        hi as f64 + (a - half) / (a - b)
    };
    let window = &phase[lo..=hi];
    let spread = window.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - window.iter().copied().fold(f64::INFINITY, f64::min);
    PeakInN {
        n0,
        n_argmax: k,
        hwhm_n: (right - left) / 2.0,
        phase_spread: spread,
        single_peaked: single,
        window: (lo, hi),
        terms,
        phase,
    }
}

/// Power law y = A x^k fitted in log-log; returns (k, A, relative rms residual).
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::arg("power-law fit needs two or more matching points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::arg("power-law fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("power-law fit needs distinct abscissae"));
    }
    let k = sxy / sxx;
    let b = my - k * mx;
    let rms = (lx.iter().zip(&ly).map(|(a, v)| (v - b - k * a).powi(2)).sum::<f64>() / m).sqrt();
    Ok((k, b.exp(), rms))
}

/// Exponent of (Arg q + pi nu D) against (s - s0).
pub fn phase_exponent(d: &ScramblonDistributions, p: &ScramblonParams) -> Result<(f64, f64, f64)> {
    let off = PI * p.nu * p.delta;
    let x: Vec<f64> = d.s_grid.iter().map(|s| s - p.s0).collect();
    let y: Vec<f64> = d.arg_q.iter().map(|a| a + off).collect();
    fit_power_law(&x, &y)
}

/// log-log slope of n0 against l - l0 over `points` sizes spaced
/// geometrically in [ds_lo, ds_hi] (normalized offsets s - s0).
pub fn peak_scaling_exponent(
    p: &ScramblonParams,
    t: f64,
    ds_lo: f64,
    ds_hi: f64,
    points: usize,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if points < 2 || !(ds_lo > 0.0 && ds_hi > ds_lo) {
        return Err(Error::arg("need at least two points and 0 < ds_lo < ds_hi"));
    }
    let r = (ds_hi / ds_lo).powf(1.0 / (points - 1) as f64);
    let mut pairs = Vec::with_capacity(points);
    for k in 0..points {
        let ds = ds_lo * r.powi(k as i32);
        let pk = peak_in_n(p, (p.s0 + ds) * p.n(), t)?;
        pairs.push((ds * p.n(), pk.n0));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok((fit_power_law(&x, &y)?.0, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig(h: f64) -> ScramblonParams {
        ScramblonParams::figure(h).unwrap()
    }

    #[test]
    fn derived_fields() {
        let p = fig(1.0);
        assert!(p.derived_defect() < 1e-12);
        assert!(p.s0 >= 0.0 && p.s0 < 0.5);
        // paper form of K at the default ladder constant
        let cv = (PI / 4.0).cos();
        let d = 1.0 / 6.0;
        let k = cv.powf(2.0 * d - 1.0) * libm::tgamma(2.0 * d + 1.0)
            / (4.0 * 3000.0 * d * libm::tgamma(2.0 * d + 1.0));
        assert!((p.k_const - k).abs() < 1e-14 * k);
        assert!(ScramblonParams::new(6, 0.5, 1.0, 3000, 1.2).is_err());
        assert!(ScramblonParams::new(5, 0.5, 1.0, 3000, 1.0).is_err());
    }

    #[test]
    fn lyapunov_from_bath_coupling() {
        assert!((lambda_l_from_k(0.0, 2.0) - PI).abs() < 1e-15);
        let want = 2.0 * PI * (1.0 - (5f64.sqrt() - 1.0) / 2.0);
        assert!((lambda_l_from_k(1.0, 1.0) - want).abs() < 1e-14);
        let mut last = f64::INFINITY;
        for k in [0.1, 1.0, 10.0, 100.0] {
            let v = lambda_l_from_k(k, 1.0);
            assert!(v < last && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn h_r_is_real_at_zero_time() {
        let p = fig(1.0);
        let v = kernel_h_r(c(0.7, 0.0), c(0.0, 0.0), &p);
        assert!(v.im.abs() < 1e-16);
    }

    #[test]
    fn h_r_zeroth_moment_is_one() {
        let p = fig(1.0);
        let two_d = 2.0 * p.delta;
        let r = power_exp(two_d, p.vertex_c(c(0.0, 0.0)), c(0.0, 0.0), 1.0, &QuadOptions::default()).unwrap();
        let m0 = r.value * p.cos_half().powf(two_d) / libm::tgamma(two_d);
        assert!((m0 - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fa_at_zero_is_normalization() {
        let p = fig(0.5);
        let t34 = c(0.0, -0.5 * p.beta);
        let r = kernel_fa_tilde(c(0.0, 0.0), t34, &p).unwrap();
        let want = p.cos_half().powf(2.0 * p.delta);
        assert!((r.value.re - want).abs() < 1e-12);
    }

    #[test]
    fn fa_tilde_matches_closed_form_at_h_one() {
        let p = fig(1.0);
        let t34 = c(0.0, -0.5 * p.beta);
        for x in [0.0, 0.01, 0.3, 2.0, 15.0] {
            let q = kernel_fa_tilde(c(x, 0.0), t34, &p).unwrap().value;
            let w = kernel_fa_closed(c(x, 0.0), t34, &p);
            assert!((q - w).norm() < 1e-10 * w.norm(), "x={x}");
        }
    }

    #[test]
    fn size_relation_is_monotone() {
        let p = fig(0.75);
        let t = p.figure_time();
        let mut last = p.s0;
        for k in -6..4 {
            let s = size_of_y(10f64.powi(k), t, &p).unwrap();
            assert!(s > last && s < 0.5);
            last = s;
        }
    }

    #[test]
    fn inversion_round_trip() {
        let p = fig(0.5);
        let t = p.figure_time();
        for ds in [1e-4, 3e-3, 0.05, 0.3] {
            let s = p.s0 + ds;
            let y = solve_y(s, t, &p).unwrap();
            assert!((size_of_y(y, t, &p).unwrap() - s).abs() < 1e-12 * ds.max(1e-3));
        }
        assert!(matches!(solve_y(p.s0 - 0.01, t, &p), Err(Error::Range(_))));
        assert!(matches!(solve_y(0.5, t, &p), Err(Error::Range(_))));
    }

    #[test]
    fn winding_aligns_with_size() {
        let p = fig(0.75);
        let t = p.figure_time();
        let grid: Vec<f64> = (1..6).map(|k| p.s0 + 0.01 * k as f64).collect();
        for d in [size_dists_exact(&p, t, &grid).unwrap(), size_dists_linearized(&p, t, &grid).unwrap()] {
            for (a, b) in d.abs_q.iter().zip(&d.p) {
                assert!((a - b).abs() <= 1e-10 * b);
                assert!(*b >= 0.0);
            }
        }
    }

    #[test]
    fn cs_at_zero_momentum() {
        let p = fig(0.5);
        let v = cs_value(0.0, p.figure_time(), &p).unwrap().value;
        // cos^{2D} Gamma(2D) e^{i pi nu D} / Gamma(2D) * e^{-i pi nu D}
        let want = p.cos_half().powf(2.0 * p.delta);
        assert!((v - c(want, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn factorization_is_exact_on_the_diagonal() {
        let p = fig(1.0);
        let t = p.figure_time();
        let grid = [p.s0 + 0.003, p.s0 + 0.02];
        assert!(rank1_factor(&p, &grid, t, t).unwrap().max_rel_residual < 1e-12);
    }

    #[test]
    fn psi0_low_orders() {
        let p = fig(1.0);
        let ell = (p.s0 + 0.004) * 3000.0;
        let lt: f64 = 0.004 / p.k_const;
        let b = 2.0 * p.delta;
        let v = psi0_vec(2, ell, &p).unwrap();
        let base = (2.0 * p.ladder_c / (3000.0 * libm::tgamma(b + 1.0))).sqrt()
            * (-lt / 2.0).exp()
            * lt.powf(p.delta - 0.5);
        assert!((v[0] - base).abs() < 1e-12 * base.abs());
        // 1F1(-1, b, x) = 1 - x/b and sqrt(Gamma(b+1)/(Gamma(b) 1!)) = sqrt(b)
        let want1 = -base * b.sqrt() * (1.0 - lt / b);
        assert!((v[1] - want1).abs() < 1e-12 * want1.abs());
    }

    #[test]
    fn cs_matches_closed_form_at_h_one() {
        let p = fig(1.0);
        let t = p.figure_time();
        for mu in [-0.02, 0.0, 0.003, 0.05] {
            let q = cs_value(mu, t, &p).unwrap().value;
            let w = cs_closed(mu, t, &p);
            assert!((q - w).norm() < 1e-8 * w.norm(), "mu={mu}");
        }
    }

    #[test]
    fn size_density_is_normalized() {
        // s - s0 = (1/2 - s0) v^3 cancels the endpoint power (2D/h = 1/3)
        let p = fig(1.0);
        let t = p.figure_time();
        let span = 0.5 - p.s0;
        let opts = QuadOptions { rel_tol: 1e-8, ..Default::default() };
        let r = crate::quad::integrate(
            |v| {
                if v <= 0.0 || v >= 1.0 {
                    return c(0.0, 0.0);
                }
                let s = p.s0 + span * v.powi(3);
                if s <= p.s0 {
                    return c(0.0, 0.0);
                }
                let d = size_dists_exact(&p, t, &[s]).unwrap();
                c(d.p[0] * 3.0 * span * v * v, 0.0)
            },
            0.0,
            1.0,
            &opts,
        );
        assert!((r.value.re - 1.0).abs() < 1e-7, "{} {}", r.value.re, r.evaluations);
    }

    #[test]
    fn overlap_reproduces_r() {
        // sum_n phi_n(t) psi_0n(l) = r(l/N, t) / sqrt(N)
        let p = fig(1.0);
        let sp = p.solvable();
        let t = p.figure_time();
        for ds in [0.002, 0.02] {
            let ell = (p.s0 + ds) * 3000.0;
            let psi = psi0_vec(400, ell, &p).unwrap();
            let phi = crate::analytic::solvable_phi_vec(400, t, &sp).unwrap();
            let sum: Complex64 = phi.iter().zip(&psi).map(|(a, b)| a * b).sum();
            let want = r_of_s(p.s0 + ds, t, &p).unwrap() / 3000f64.sqrt();
            assert!((sum - want).norm() < 1e-9 * want.norm(), "{sum} {want}");
        }
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        let (k, a, r) = fit_power_law(&x, &y).unwrap();
        assert!((k - 1.7).abs() < 1e-12 && (a - 3.0).abs() < 1e-12 && r < 1e-12);
    }
}
