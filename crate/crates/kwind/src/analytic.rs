//! Closed-form Krylov wavefunctions and the ramp-plateau toy chain.
//!
//! All thermal quantities are evaluated at the complex time
//! `t_beta = t + i beta/4`. For `alpha * beta <= pi` the real part of
//! `cosh(alpha t_beta)` and of `1 - e^{i mu} tanh^2(alpha t_beta)` stay
//! nonnegative, so principal-branch powers are continuous in `t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::c;
use crate::tridiag::{PropagateOptions, TridiagPropagator};
use crate::winding::{fourier_ck, FourierPeak};

/// Largest index accepted by `solvable_phi`.
pub const MAX_SOLVABLE_INDEX: usize = 1_000_000;
/// Relative threshold on |phi_n|^2 defining the wavefront.
pub const FRONT_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvableParams {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub norm: f64,
}

impl SolvableParams {
    pub fn new(alpha: f64, delta: f64, beta: f64, norm: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::arg(format!("delta must be positive, got {delta}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::arg(format!("beta must be nonnegative, got {beta}")));
        }
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::arg(format!("norm must be positive, got {norm}")));
        }
        if alpha * beta > PI * (1.0 + 1e-12) {
            return Err(Error::arg(format!(
                "alpha*beta = {} exceeds the thermal bound pi",
                alpha * beta
            )));
        }
        Ok(SolvableParams { alpha, delta, beta, norm })
    }

    /// alpha * t_beta
    pub fn z(&self, t: f64) -> Complex64 {
        c(self.alpha * t, self.alpha * self.beta / 4.0)
    }

    /// Lanczos coefficient b_n = alpha sqrt(n (n + 2 delta - 1)), n >= 1.
    pub fn b(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha * (n * (n + 2.0 * self.delta - 1.0)).max(0.0).sqrt()
    }

    /// b_1..b_{len}
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|n| self.b(n)).collect()
    }

    pub fn lorentzian_width(&self, t: f64) -> f64 {
        lorentzian_width(t, self.alpha, self.beta)
    }
}

fn ln_prefactor(n: usize, delta: f64) -> f64 {
    let two_d = 2.0 * delta;
    0.5 * (libm::lgamma(two_d + n as f64) - libm::lgamma(n as f64 + 1.0) - libm::lgamma(two_d))
}

fn int_pow(z: Complex64, n: usize) -> Complex64 {
    if n == 0 {
        return c(1.0, 0.0);
    }
    if z == c(0.0, 0.0) {
        return z;
    }
    if n <= 64 {
        return z.powu(n as u32);
    }
    let l = z.ln();
    (l * n as f64).exp()
}

/// phi_n(t) = sqrt(N Gamma(2D+n) / (n! Gamma(2D))) tanh(z)^n / cosh(z)^{2D}.
pub fn solvable_phi(n: usize, t: f64, p: &SolvableParams) -> Result<Complex64> {
    if n > MAX_SOLVABLE_INDEX {
        return Err(Error::range(format!(
            "index {n} beyond {MAX_SOLVABLE_INDEX}"
        )));
    }
    let z = p.z(t);
    let pref = (ln_prefactor(n, p.delta) + 0.5 * p.norm.ln()).exp();
    Ok(int_pow(z.tanh(), n) * pref / z.cosh().powf(2.0 * p.delta))
}

/// phi_0..phi_{len-1}, sharing the transcendental factors.
pub fn solvable_phi_vec(len: usize, t: f64, p: &SolvableParams) -> Result<Vec<Complex64>> {
    if len > MAX_SOLVABLE_INDEX + 1 {
        return Err(Error::range(format!("{len} amplitudes requested")));
    }
    let z = p.z(t);
    let th = z.tanh();
    let base = p.norm.sqrt() / z.cosh().powf(2.0 * p.delta);
    let mut out = Vec::with_capacity(len);
    let mut pw = c(1.0, 0.0);
    for n in 0..len {
        out.push(pw * base * ln_prefactor(n, p.delta).exp());
        pw *= th;
    }
    Ok(out)
}

/// theta_K = Arg tanh(alpha t_beta) = atan(sin(alpha beta/2) / sinh(2 alpha t)).
pub fn solvable_theta_k(t: f64, p: &SolvableParams) -> f64 {
    (p.alpha * p.beta / 2.0).sin().atan2((2.0 * p.alpha * t).sinh())
}

/// Peak momentum -2 theta_K.
pub fn solvable_mu_k(t: f64, p: &SolvableParams) -> f64 {
    -2.0 * solvable_theta_k(t, p)
}

/// N / ((1 - e^{i mu} tanh^2)^{2D} cosh^{4D}); requires alpha beta < pi.
pub fn solvable_ck(mu: f64, t: f64, p: &SolvableParams) -> Complex64 {
    let z = p.z(t);
    let th = z.tanh();
    let w = c(1.0, 0.0) - Complex64::from_polar(1.0, mu) * th * th;
    let ch = z.cosh().powf(2.0 * p.delta);
    p.norm / (w.powf(2.0 * p.delta) * ch * ch)
}

/// Late-time form exp(-2n e^{-2at} cos(ab/2)) exp(i theta n) with
/// theta = 2 e^{-2at} sin(ab/2). Valid for t >= 1/alpha.
pub fn asymptotic_phi(n: usize, t: f64, p: &SolvableParams) -> Result<Complex64> {
    asymptotic_phi_from(n, t, p, 1.0 / p.alpha)
}

pub fn asymptotic_phi_from(n: usize, t: f64, p: &SolvableParams, t_min: f64) -> Result<Complex64> {
    if t < t_min {
        return Err(Error::range(format!("t = {t} below the asymptotic window t >= {t_min}")));
    }
    let e = (-2.0 * p.alpha * t).exp();
    let ab = p.alpha * p.beta / 2.0;
    let n = n as f64;
    Ok(Complex64::from_polar((-2.0 * n * e * ab.cos()).exp(), 2.0 * e * ab.sin() * n))
}

/// Half-width of the Lorentzian |C_K|^2 peak,
/// `-2 + |coth^2| + |tanh^2|` under the square root.
///
/// Evaluated as `2 cos(ab/2) / sqrt(cosh^2(2at) - cos^2(ab/2))`, which is the
/// same expression without the cancellation.
pub fn lorentzian_width(t: f64, alpha: f64, beta: f64) -> f64 {
    let cc = (alpha * beta / 2.0).cos();
    let ch = (2.0 * alpha * t).cosh();
    if !ch.is_finite() {
        return 0.0;
    }
    let q = cc / ch;
    (2.0 * q / (1.0 - q * q).sqrt()).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeQParams {
    pub q_locality: u32,
    pub nu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub delta: f64,
    pub script_j: f64,
}

impl LargeQParams {
    pub fn new(q_locality: u32, nu: f64, beta: f64) -> Result<Self> {
        if q_locality < 4 || q_locality % 2 != 0 {
            return Err(Error::arg(format!("q must be an even integer >= 4, got {q_locality}")));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::arg(format!("nu must lie in (0,1), got {nu}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::arg(format!("beta must be positive, got {beta}")));
        }
        Ok(LargeQParams {
            q_locality,
            nu,
            beta,
            alpha: PI * nu / beta,
            delta: 1.0 / q_locality as f64,
            script_j: PI * nu / (beta * (PI * nu / 2.0).cos()),
        })
    }

    /// Largest deviation of the stored derived values from a fresh evaluation.
    pub fn derived_defect(&self) -> f64 {
        match Self::new(self.q_locality, self.nu, self.beta) {
            Ok(f) => (f.alpha - self.alpha)
                .abs()
                .max((f.delta - self.delta).abs())
                .max((f.script_j - self.script_j).abs()),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn z(&self, t: f64) -> Complex64 {
        c(self.alpha * t, self.alpha * self.beta / 4.0)
    }

    /// The solvable family with the same alpha, beta and delta = 1/q.
    pub fn solvable(&self) -> SolvableParams {
        SolvableParams {
            alpha: self.alpha,
            delta: self.delta,
            beta: self.beta,
            norm: 1.0,
        }
    }
}

/// Leading order in 1/q: `1 + (2/q) ln sech z` for n = 0,
/// `tanh(z)^n sqrt(2/(n q))` otherwise.
pub fn largeq_phi(n: usize, t: f64, p: &LargeQParams) -> Complex64 {
    largeq_phi_at(n, p.z(t), p.q_locality)
}

/// `largeq_phi` as a function of `z = alpha t_beta` directly.
pub fn largeq_phi_at(n: usize, z: Complex64, q_locality: u32) -> Complex64 {
    let q = q_locality as f64;
    if n == 0 {
        c(1.0, 0.0) - z.cosh().ln() * (2.0 / q)
    } else {
        int_pow(z.tanh(), n) * (2.0 / (n as f64 * q)).sqrt()
    }
}

/// 1 + (2/q) ln((1 - tanh^2) / (1 - e^{i mu} tanh^2))
pub fn largeq_ck(mu: f64, t: f64, p: &LargeQParams) -> Complex64 {
    let th = p.z(t).tanh();
    let t2 = th * th;
    let one = c(1.0, 0.0);
    let num = (one - t2).ln();
    let den = (one - Complex64::from_polar(1.0, mu) * t2).ln();
    one + (num - den) * (2.0 / p.q_locality as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampPlateauParams {
    pub alpha: f64,
    pub n_ramp: usize,
    pub plateau_level: f64,
    pub beta: f64,
}

impl RampPlateauParams {
    /// Plateau joined continuously at alpha * n_ramp.
    pub fn new(alpha: f64, n_ramp: usize, beta: f64) -> Result<Self> {
        Self::with_plateau(alpha, n_ramp, alpha * n_ramp as f64, beta)
    }

    pub fn with_plateau(alpha: f64, n_ramp: usize, plateau_level: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
        }
        if n_ramp < 1 {
            return Err(Error::arg("n_ramp must be at least 1"));
        }
        if !(plateau_level >= alpha && plateau_level.is_finite()) {
            return Err(Error::arg(format!(
                "plateau level {plateau_level} below alpha = {alpha}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::arg(format!("beta must be nonnegative, got {beta}")));
        }
        Ok(RampPlateauParams { alpha, n_ramp, plateau_level, beta })
    }

    /// t_* = log(N) / alpha
    pub fn scrambling_time(&self) -> f64 {
        (self.n_ramp as f64).ln() / self.alpha
    }

    pub fn lorentzian_width(&self, t: f64) -> f64 {
        lorentzian_width(t, self.alpha, self.beta)
    }

    /// b_1..b_{len}
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|n| ramp_plateau_b(n, self)).collect()
    }
}

/// alpha n for n <= n_ramp, plateau_level beyond.
pub fn ramp_plateau_b(n: usize, p: &RampPlateauParams) -> f64 {
    if n <= p.n_ramp {
        p.alpha * n as f64
    } else {
        p.plateau_level
    }
}

/// Largest n with |phi_n|^2 > FRONT_THRESHOLD * max |phi|^2.
pub fn wavefront(phi: &[Complex64]) -> usize {
    let peak = phi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    phi.iter()
        .rposition(|z| z.norm_sqr() > FRONT_THRESHOLD * peak)
        .unwrap_or(0)
}

#[derive(Clone, Debug)]
pub struct RampPlateauPoint {
    pub t: f64,
    pub phi: Vec<Complex64>,
    pub peak: FourierPeak,
    pub front: usize,
    pub boundary: f64,
    pub truncation_warning: bool,
}

#[derive(Clone, Debug)]
pub struct RampPlateauRun {
    pub params: RampPlateauParams,
    pub points: Vec<RampPlateauPoint>,
}

impl RampPlateauRun {
    pub fn truncated(&self) -> bool {
        self.points.iter().any(|p| p.truncation_warning)
    }

    /// Least-squares slope of the wavefront position over `t >= t_from`.
    pub fn front_speed(&self, t_from: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.t >= t_from)
            .map(|p| (p.t, p.front as f64))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    /// Front speed over the plateau regime, taken as t >= 2 t_*.
    pub fn plateau_front_speed(&self) -> Option<f64> {
        self.front_speed(2.0 * self.params.scrambling_time())
    }
}

/// Propagates the ramp-plateau chain at `t + i beta/4` for each time and
/// extracts the winding peak of the unit-normalized amplitudes.
pub fn ramp_plateau_run(
    p: &RampPlateauParams,
    t_list: &[f64],
    n_max: usize,
    mu_grid: &[f64],
) -> Result<RampPlateauRun> {
    let b = p.coefficients(n_max.saturating_sub(1));
    let prop = TridiagPropagator::with_options(
        &b,
        n_max,
        p.beta / 4.0,
        &PropagateOptions::default(),
    )?;
    let points = t_list
        .iter()
        .map(|&t| {
            let pr = prop.at(t);
            let norm = pr.phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let unit: Vec<Complex64> = pr.phi.iter().map(|z| z / norm).collect();
            RampPlateauPoint {
                t,
                peak: fourier_ck(&unit, mu_grid),
                front: wavefront(&pr.phi),
                phi: pr.phi,
                boundary: pr.boundary,
                truncation_warning: pr.truncation_warning,
            }
        })
        .collect();
    Ok(RampPlateauRun { params: *p, points })
}

/// Chain length that keeps the wavefront away from the boundary up to `t_max`.
pub fn ramp_plateau_depth(p: &RampPlateauParams, t_max: f64) -> usize {
    let reach = p.n_ramp as f64 + 2.0 * p.plateau_level * t_max.max(0.0);
    (1.25 * reach) as usize + 64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(alpha: f64, delta: f64, beta: f64) -> SolvableParams {
        SolvableParams::new(alpha, delta, beta, 1.0).unwrap()
    }

    #[test]
    fn phi_at_origin() {
        let p = SolvableParams::new(1.3, 0.25, 0.0, 2.5).unwrap();
        assert!((solvable_phi(0, 0.0, &p).unwrap() - c(2.5f64.sqrt(), 0.0)).norm() < 1e-15);
        assert_eq!(solvable_phi(3, 0.0, &p).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn half_weight_reduces_to_tanh_over_cosh() {
        let p = sp(0.7, 0.5, 1.0);
        let z = p.z(1.1);
        for n in [0usize, 1, 5, 40] {
            let want = z.tanh().powu(n as u32) / z.cosh();
            assert!((solvable_phi(n, 1.1, &p).unwrap() - want).norm() < 1e-14);
        }
    }

    #[test]
    fn vec_matches_pointwise() {
        let p = sp(PI / 2.0, 0.25, 1.0);
        let v = solvable_phi_vec(300, 0.8, &p).unwrap();
        for n in [0usize, 1, 17, 170, 299] {
            let d = (v[n] - solvable_phi(n, 0.8, &p).unwrap()).norm();
            assert!(d <= 1e-12 * v[n].norm().max(1e-300), "n={n} d={d}");
        }
    }

    #[test]
    fn index_limit() {
        let p = sp(1.0, 0.25, 0.0);
        assert!(matches!(solvable_phi(MAX_SOLVABLE_INDEX + 1, 1.0, &p), Err(Error::Range(_))));
    }

    #[test]
    fn theta_k_limits() {
        let p = sp(1.0, 0.25, 1.0);
        assert!((solvable_theta_k(0.0, &p) - PI / 2.0).abs() < 1e-15);
        assert!(solvable_theta_k(40.0, &p) < 1e-30);
    }

    #[test]
    fn thermal_bound_is_enforced() {
        assert!(SolvableParams::new(4.0, 0.25, 1.0, 1.0).is_err());
        assert!(SolvableParams::new(PI, 0.25, 1.0, 1.0).is_ok());
    }

    #[test]
    fn width_vanishes_at_the_bound() {
        for t in [0.0, 0.5, 2.0] {
            assert!(lorentzian_width(t, PI, 1.0) < 1e-15);
        }
        assert!(lorentzian_width(400.0, 1.0, 1.0) == 0.0);
    }

    #[test]
    fn width_matches_unsimplified_form() {
        let p = sp(1.0, 0.5, 1.0);
        for t in [0.3, 1.0, 2.0] {
            let th = p.z(t).tanh();
            let r = (th * th).norm();
            let direct = (-2.0 + 1.0 / r + r).sqrt();
            assert!((p.lorentzian_width(t) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn largeq_basics() {
        let p = LargeQParams::new(6, 0.5, 2.0).unwrap();
        assert!(p.derived_defect() < 1e-12);
        assert!((p.alpha - PI / 4.0).abs() < 1e-15);
        assert_eq!(largeq_phi_at(0, c(0.0, 0.0), 6), c(1.0, 0.0));
        assert!((largeq_ck(0.0, 0.7, &p) - c(1.0, 0.0)).norm() < 1e-15);
        let r = largeq_phi(1, 0.7, &p) / largeq_phi(2, 0.7, &p);
        let want = 2.0f64.sqrt() / p.z(0.7).tanh();
        assert!((r - want).norm() < 1e-13);
        assert!(LargeQParams::new(5, 0.5, 1.0).is_err());
    }

    #[test]
    fn ramp_plateau_values() {
        let p = RampPlateauParams::new(0.5, 10, 1.0).unwrap();
        assert_eq!(ramp_plateau_b(1, &p), 0.5);
        assert_eq!(ramp_plateau_b(10, &p), 5.0);
        assert_eq!(ramp_plateau_b(11, &p), 5.0);
        let q = RampPlateauParams::with_plateau(0.5, 10, 7.0, 1.0).unwrap();
        assert_eq!(ramp_plateau_b(11, &q), 7.0);
        assert!(RampPlateauParams::with_plateau(0.5, 10, 0.1, 1.0).is_err());
        assert!(RampPlateauParams::new(0.5, 0, 1.0).is_err());
    }

    #[test]
    fn wavefront_threshold() {
        let phi = vec![c(1.0, 0.0), c(0.0, 1e-2), c(1e-4, 0.0), c(0.0, 0.0)];
        assert_eq!(wavefront(&phi), 1);
    }
}
