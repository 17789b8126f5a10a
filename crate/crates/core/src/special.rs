//! Modified Bessel functions of the first kind and the von Mises
//! mean-resultant ratio `A(κ) = I₁(κ)/I₀(κ)`.
//!
//! Power series up to `x = 50`, Hankel asymptotic expansion above. Ratios
//! `I_j/I₀` for many orders come from the backward continued-fraction
//! recurrence, which stays stable where the forward recurrence does not.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest concentration produced anywhere in the library.
pub const KAPPA_MAX: f64 = 700.0;

const SERIES_LIMIT: f64 = 50.0;
const SERIES_MAX_TERMS: usize = 500;

/// Power series `Σ_k (x/2)^{2k+n} / (k! (k+n)!)`, for `0 ≤ x ≤ 50`.
fn series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=order {
        term *= half / i as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = term;
    for k in 1..SERIES_MAX_TERMS {
        term *= q / (k as f64 * (k as f64 + order as f64));
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

/// `I_n(x) · e^{−x} · sqrt(2πx)` from the large-argument expansion.
fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order as f64) * (order as f64);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * x);
        let mag = term.abs();
        if mag >= prev {
            // the expansion is asymptotic: stop at the smallest term
            break;
        }
        sum += term;
        prev = mag;
        if mag < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Modified Bessel function `I_order(x)` for `x ≥ 0`.
///
/// Overflows to infinity beyond `x ≈ 709`; use [`log_bessel_i0`] there.
pub fn bessel_i(order: u32, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("bessel_i requires x >= 0, got {x}")));
    }
    if x <= SERIES_LIMIT {
        return Ok(series(order, x));
    }
    let prefactor = |scaled: f64| (x - 0.5 * (2.0 * PI * x).ln()).exp() * scaled;
    if order <= 1 {
        return Ok(prefactor(asymptotic_scaled(order, x)));
    }
    let ratios = bessel_ratios(x, order as usize);
    Ok(prefactor(asymptotic_scaled(0, x)) * ratios[order as usize - 1])
}

/// `ln I₀(x)` for `x ≥ 0`, finite for every finite `x`.
pub fn log_bessel_i0(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("log_bessel_i0 requires x >= 0, got {x}")));
    }
    Ok(log_i0(x))
}

#[inline]
pub(crate) fn log_i0(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(0, x).ln()
    } else {
        x - 0.5 * (2.0 * PI * x).ln() + asymptotic_scaled(0, x).ln()
    }
}

/// `A(κ) = I₁(κ)/I₀(κ)`, the mean resultant length of a von Mises law.
pub fn mean_resultant_ratio(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!(
            "mean_resultant_ratio requires kappa > 0, got {kappa}"
        )));
    }
    Ok(a_ratio(kappa))
}

/// `A(κ)` extended by continuity to `A(0) = 0`.
#[inline]
pub(crate) fn a_ratio(kappa: f64) -> f64 {
    if kappa <= 0.0 {
        0.0
    } else if kappa <= SERIES_LIMIT {
        series(1, kappa) / series(0, kappa)
    } else {
        asymptotic_scaled(1, kappa) / asymptotic_scaled(0, kappa)
    }
}

/// `A'(κ) = 1 − A(κ)/κ − A(κ)²`.
#[inline]
pub(crate) fn a_ratio_derivative(kappa: f64) -> f64 {
    if kappa < 1e-6 {
        // A(κ) = κ/2 − κ³/16 + …
        return 0.5 - 0.375 * kappa * kappa;
    }
    let a = a_ratio(kappa);
    1.0 - a / kappa - a * a
}

/// Solves `A(κ) = rbar` for `κ`, capped at [`KAPPA_MAX`].
///
/// Starts from Sra's approximation `κ₀ = r̄(2 − r̄²)/(1 − r̄²)` and polishes
/// with safeguarded Newton steps until `|A(κ) − r̄| ≤ 1e-13`.
pub fn inverse_mean_resultant(rbar: f64) -> Result<f64> {
    if !(rbar > 0.0) {
        return Err(Error::Domain(format!(
            "inverse_mean_resultant requires rbar > 0, got {rbar}"
        )));
    }
    Ok(inverse_a(rbar))
}

pub(crate) fn inverse_a(rbar: f64) -> f64 {
    if rbar <= 0.0 {
        return 0.0;
    }
    if rbar >= a_ratio(KAPPA_MAX) {
        return KAPPA_MAX;
    }
    let r2 = rbar * rbar;
    let mut kappa = (rbar * (2.0 - r2) / (1.0 - r2)).min(KAPPA_MAX);
    let (mut lo, mut hi) = (0.0, KAPPA_MAX);
    for _ in 0..100 {
        let f = a_ratio(kappa) - rbar;
        if f.abs() <= 1e-13 {
            break;
        }
        if f > 0.0 {
            hi = kappa;
        } else {
            lo = kappa;
        }
        let step = f / a_ratio_derivative(kappa);
        let mut next = kappa - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - kappa).abs() <= 1e-15 * kappa {
            kappa = next;
            break;
        }
        kappa = next;
    }
    kappa
}

/// Ratios `I_j(x)/I₀(x)` for `j = 1..=n`, by backward recurrence on
/// `I_j/I_{j−1} = 1 / (2j/x + I_{j+1}/I_j)`.
pub fn bessel_ratios(x: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if x <= 0.0 {
        return vec![0.0; n];
    }
    let start = n + 2 * (x.ceil() as usize) + 64;
    let mut consecutive = vec![0.0; n];
    let mut r = 0.0;
    for j in (1..=start).rev() {
        r = 1.0 / (2.0 * j as f64 / x + r);
        if j <= n {
            consecutive[j - 1] = r;
        }
    }
    let mut acc = 1.0;
    consecutive
        .into_iter()
        .map(|r| {
            acc *= r;
            acc
        })
        .collect()
}

/// Streaming `ln Σ exp(x_i)` with a running shift.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub(crate) fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else if x.is_finite() {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `ln Σ exp(x_i)` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum, accumulated in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

pub(crate) fn gauss_legendre_20() -> (&'static [f64], &'static [f64]) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = RULE.get_or_init(|| gauss_legendre(20));
    (x, w)
}
