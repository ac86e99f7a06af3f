//! Adaptive Gauss-Kronrod quadrature for complex integrands and the
//! semi-infinite integrals `int_0^inf y^{a-1} exp(-c y + w y^h) dy`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::c;

// 21-point Kronrod extension of the 10-point Gauss rule.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208980292882,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    /// A-posteriori absolute error estimate.
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Subdivision cap per adaptive call.
    pub max_intervals: usize,
    /// Tail panel cap for semi-infinite integrals.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 2000,
            max_panels: 20_000,
        }
    }
}

impl QuadOptions {
    fn target(&self, value: Complex64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.norm())
    }
}

fn gk21(f: &mut impl FnMut(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[10];
    let mut gauss = c(0.0, 0.0);
    let mut vals = [(c(0.0, 0.0), c(0.0, 0.0)); 10];
    let mut res_abs = fc.norm() * WGK[10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx), f(center + dx));
        vals[j] = (f1, f2);
        kron += (f1 + f2) * WGK[j];
        res_abs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kron * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).norm();
    for j in 0..10 {
        res_asc += WGK[j] * ((vals[j].0 - mean).norm() + (vals[j].1 - mean).norm());
    }
    let h = half.abs();
    let (res_abs, res_asc) = (res_abs * h, res_asc * h);
    let mut err = ((kron - gauss) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (kron * half, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive bisection on [a, b]. Returns the best estimate even
/// when the tolerance is not met; callers judge `error`.
pub fn integrate(
    mut f: impl FnMut(f64) -> Complex64,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> QuadResult {
    let (v, e) = gk21(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let (mut total, mut err) = (v, e);
    let mut evals = 21;
    while err > opts.target(total) && heap.len() < opts.max_intervals {
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk21(&mut f, p.a, m);
        let (v2, e2) = gk21(&mut f, m, p.b);
        evals += 42;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
    // re-sum to shed the drift of incremental updates
    let total: Complex64 = heap.iter().map(|p| p.value).sum();
    let err: f64 = heap.iter().map(|p| p.error).sum();
    QuadResult { value: total, error: err, evaluations: evals }
}

/// Wynn's epsilon algorithm on a sequence of partial sums; returns the
/// highest-order even column entry.
pub fn wynn_epsilon(s: &[Complex64]) -> Complex64 {
    let n = s.len();
    if n < 3 {
        return s.last().copied().unwrap_or(c(0.0, 0.0));
    }
    let mut prev = vec![c(0.0, 0.0); n + 1];
    let mut cur: Vec<Complex64> = s.to_vec();
    let mut best = cur[cur.len() - 1];
    let mut k = 0;
    while cur.len() > 1 {
        let next: Vec<Complex64> = (0..cur.len() - 1)
            .map(|i| {
                let d = cur[i + 1] - cur[i];
                if d.norm() < 1e-300 {
                    c(f64::INFINITY, 0.0)
                } else {
                    prev[i + 1] + d.inv()
                }
            })
            .collect();
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            break;
        }
        prev = cur;
        cur = next;
        k += 1;
        if k % 2 == 0 {
            best = cur[cur.len() - 1];
        }
    }
    best
}

/// `int_0^inf y^{a-1} exp(-c y + w y^h) dy` for `a > 0`, `Re c > 0`,
/// `Re w <= 0`, `h > 0`.
pub fn power_exp(a: f64, cc: Complex64, w: Complex64, h: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(h > 0.0) {
        return Err(Error::arg(format!("need h > 0, got {h}")));
    }
    if !(cc.re > 0.0) {
        return Err(Error::arg(format!("Re c must be positive, got {}", cc.re)));
    }
    if w.re > 0.0 {
        return Err(Error::arg(format!("Re w must be nonpositive, got {}", w.re)));
    }
    semi_infinite(
        a,
        cc.re,
        |y| (-cc.im + w.im * h * y.powf(h - 1.0)).abs(),
        |y| (-cc * y + w * y.powf(h)).exp(),
        opts,
    )
}

/// `int_0^inf y^{a-1} g(y) dy` where `|g(y)| <= e^{-d y}` and `omega(y)`
/// bounds the local phase rate of `g`.
///
/// The first panel `[0, y1]` is mapped by `y = y1 u^{1/a}` to remove the
/// endpoint power. The tail is cut into panels spanning at most a phase of
/// pi or one decay length, summed until the envelope bound falls below
/// the target or Wynn extrapolates of the partial sums settle.
pub fn semi_infinite(
    a: f64,
    d: f64,
    omega: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> Complex64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(a > 0.0) {
        return Err(Error::arg(format!("need a > 0, got {a}")));
    }
    if !(d > 0.0) {
        return Err(Error::arg(format!("decay rate must be positive, got {d}")));
    }
    let scale = libm::tgamma(a) * d.powf(-a);
    let mut opts = *opts;
    if opts.abs_tol <= 0.0 {
        opts.abs_tol = 1e-15 * scale;
    }

    let y1 = (1.0 / d).min(1.0);
    let head = if a < 1.0 {
        let r = integrate(|u| g(y1 * u.powf(1.0 / a)), 0.0, 1.0, &opts);
        let k = y1.powf(a) / a;
        QuadResult { value: r.value * k, error: r.error * k, ..r }
    } else {
        integrate(|y| g(y) * y.powf(a - 1.0), 0.0, y1, &opts)
    };

    let mut total = head.value;
    let mut err = head.error;
    let mut evals = head.evaluations;
    let mut partial = vec![total];
    let mut y = y1;
    let mut last_wynn: Option<Complex64> = None;
    let envelope = |y: f64| y.powf(a - 1.0) * (-d * y).exp() / d * (1.0 + (a - 1.0).max(0.0) / (d * y));
    for panel in 0..opts.max_panels {
        let width = (PI / omega(y).max(1e-300)).min(1.0 / d);
        let r = integrate(|x| g(x) * x.powf(a - 1.0), y, y + width, &opts);
        y += width;
        total += r.value;
        err += r.error;
        evals += r.evaluations;
        partial.push(total);
        let target = opts.target(total);
        let env = envelope(y);
        if env < 0.1 * target {
            return finish(total, err + env, evals, &opts);
        }
        if panel >= 8 {
            let tail = &partial[partial.len().saturating_sub(12)..];
            let est = wynn_epsilon(tail);
            if let Some(prev) = last_wynn {
                if (est - prev).norm() < 0.1 * target {
                    return finish(est, err + (est - prev).norm(), evals, &opts);
                }
            }
            last_wynn = Some(est);
        }
    }
    Err(Error::Numeric {
        context: "semi-infinite quadrature: panel limit reached".into(),
        estimate: total.norm(),
        bound: err + envelope(y),
    })
}

fn finish(value: Complex64, error: f64, evaluations: usize, opts: &QuadOptions) -> Result<QuadResult> {
    let target = opts.target(value);
    if error > 100.0 * target {
        return Err(Error::Numeric {
            context: "semi-infinite quadrature did not converge".into(),
            estimate: value.norm(),
            bound: error,
        });
    }
    Ok(QuadResult { value, error, evaluations })
}
