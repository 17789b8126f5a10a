//! Univariate circular laws used as marginals and binding densities.
//!
//! Both CDFs are measured from the reference point `θ₀ = μ − π`, so the
//! median sits exactly at `μ` and `F(μ + t) = 1 − F(μ − t)`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::angle::{normalize, resultant, wrap_signed};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::special::{bessel_ratios, gauss_legendre_20, inverse_a, log_i0, KAPPA_MAX};

/// Lower clip for fitted von Mises concentrations.
pub const KAPPA_MIN: f64 = 1e-6;
/// Fitted wrapped Cauchy `ρ` is clipped to `[RHO_MIN, 1 − RHO_MIN]`.
pub const RHO_MIN: f64 = 1e-6;

const LN_TAU: f64 = 1.837_877_066_409_345_5;
const CDF_TERM_CUTOFF: f64 = 1e-14;
const CDF_MAX_TERMS: usize = 250;
// below this the series' absolute error dominates; integrate the tail instead
const TAIL_SWITCH: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct VonMises {
    mu: f64,
    kappa: f64,
    log_norm: f64,
    // I_j(κ)/(j·I₀(κ)) for j = 1..=J
    cdf_coeffs: Vec<f64>,
}

impl VonMises {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if !(kappa > 0.0 && kappa <= KAPPA_MAX) {
            return Err(Error::param("kappa", format!("must lie in (0, 700], got {kappa}")));
        }
        let ratios = bessel_ratios(kappa, CDF_MAX_TERMS);
        let cdf_coeffs = ratios
            .iter()
            .take_while(|&&r| r >= CDF_TERM_CUTOFF)
            .enumerate()
            .map(|(j, r)| r / (j + 1) as f64)
            .collect();
        Ok(VonMises {
            mu: normalize(mu),
            kappa,
            log_norm: LN_TAU + log_i0(kappa),
            cdf_coeffs,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[inline]
    pub fn log_pdf(&self, theta: f64) -> f64 {
        self.kappa * (theta - self.mu).cos() - self.log_norm
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        self.cdf_centered(wrap_signed(theta - self.mu))
    }

    /// CDF as a function of `t = θ − μ ∈ [−π, π]`.
    fn cdf_centered(&self, t: f64) -> f64 {
        // Clenshaw recurrence for Σ_j b_j sin(j t)
        let two_cos = 2.0 * t.cos();
        let (mut y1, mut y2) = (0.0, 0.0);
        for &b in self.cdf_coeffs.iter().rev() {
            let y = b + two_cos * y1 - y2;
            y2 = y1;
            y1 = y;
        }
        let series = y1 * t.sin();
        let f = (t + PI) / TAU + series / PI;
        if f < TAIL_SWITCH {
            self.lower_tail(t)
        } else if f > 1.0 - TAIL_SWITCH {
            1.0 - self.lower_tail(-t)
        } else {
            f
        }
    }

    /// `∫_{−π}^{t} pdf` for `t ≤ 0` with relative rather than absolute accuracy.
    ///
    /// Gauss–Legendre on panels that double in width away from `t`, stopping
    /// once the integrand has fallen by `e^{−50}`.
    fn lower_tail(&self, t: f64) -> f64 {
        let t = t.min(0.0);
        let width = t + PI;
        if width <= 0.0 {
            return 0.0;
        }
        let k = self.kappa;
        let ct = t.cos();
        let drop = |w: f64| k * (ct - (t - w).cos());
        let lambda = k * t.sin().abs() + k.sqrt() + 1.0;
        let (nodes, weights) = gauss_legendre_20();
        let (mut a, mut b) = (0.0, (0.5 / lambda).min(width));
        let mut inner = 0.0;
        loop {
            let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
            inner += half
                * nodes
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * (-drop(mid + half * x)).exp())
                    .sum::<f64>();
            if b >= width || drop(b) > 50.0 {
                break;
            }
            a = b;
            b = (2.0 * b).min(width);
        }
        ((k * ct - self.log_norm).exp() * inner).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        let (mut lo, mut hi) = (-PI, PI);
        let mut t = TAU * q - PI;
        let mut newton_ok = false;
        for _ in 0..100 {
            let f = self.cdf_centered(t) - q;
            if f.abs() <= 1e-16 * q.min(1.0 - q).max(1e-300) {
                newton_ok = true;
                break;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if hi - lo <= 1e-15 {
                newton_ok = true;
                break;
            }
            let dens = (self.kappa * t.cos() - self.log_norm).exp();
            let mut next = t - f / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-15 {
                t = next;
                newton_ok = true;
                break;
            }
            t = next;
        }
        if !newton_ok {
            t = bisect(|x| self.cdf_centered(x) - q, lo, hi)?;
        }
        Ok(normalize(self.mu + t))
    }

    /// Best–Fisher rejection sampler with a wrapped Cauchy envelope.
    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        let k = self.kappa;
        let s = (1.0 + 4.0 * k * k).sqrt();
        let tau = 1.0 + s;
        let tau_minus_two = 4.0 * k * k / (s + 1.0);
        let rho = tau * tau_minus_two / (tau + (2.0 * tau).sqrt()) / (2.0 * k);
        let r = (1.0 + rho * rho) / (2.0 * rho);
        loop {
            let z = (PI * rng.uniform()).cos();
            let f = (1.0 + r * z) / (r + z);
            let c = k * (r - f);
            let u2 = rng.uniform_open();
            if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
                let w = f.clamp(-1.0, 1.0).acos();
                let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                return normalize(self.mu + sign * w);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedCauchy {
    mu: f64,
    rho: f64,
}

impl WrappedCauchy {
    pub fn new(mu: f64, rho: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::param("rho", format!("must lie in (0, 1), got {rho}")));
        }
        Ok(WrappedCauchy {
            mu: normalize(mu),
            rho,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn pdf(&self, theta: f64) -> f64 {
        let r = self.rho;
        (1.0 - r * r) / (TAU * (1.0 + r * r - 2.0 * r * (theta - self.mu).cos()))
    }

    #[inline]
    pub fn log_pdf(&self, theta: f64) -> f64 {
        let r = self.rho;
        // 1 + ρ² − 2ρ cos t = (1 − ρ)² + 4ρ sin²(t/2), free of cancellation
        let h = (0.5 * (theta - self.mu)).sin();
        ((1.0 - r) * (1.0 + r)).ln() - LN_TAU - ((1.0 - r) * (1.0 - r) + 4.0 * r * h * h).ln()
    }

    /// `½ + (1/π)·atan(((1+ρ)/(1−ρ))·tan(t/2))`, the half-angle form of the
    /// arccos closed form, which has no branch cut inside `(−π, π)`.
    pub fn cdf(&self, theta: f64) -> f64 {
        let t = wrap_signed(theta - self.mu);
        let (s, c) = (0.5 * t).sin_cos();
        let a = ((1.0 + self.rho) * s).atan2((1.0 - self.rho) * c);
        (0.5 + a / PI).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        let (s, c) = (PI * (q - 0.5)).sin_cos();
        let t = 2.0 * ((1.0 - self.rho) * s).atan2((1.0 + self.rho) * c);
        Ok(normalize(self.mu + t))
    }

    /// Wraps a linear Cauchy draw with scale `−ln ρ`.
    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        let gamma = -self.rho.ln();
        let x = gamma * (PI * (rng.uniform_open() - 0.5)).tan();
        normalize(self.mu + x.rem_euclid(TAU))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginalFamily {
    VonMises,
    WrappedCauchy,
    Uniform,
}

impl MarginalFamily {
    pub fn tag(self) -> &'static str {
        match self {
            MarginalFamily::VonMises => "vm",
            MarginalFamily::WrappedCauchy => "wc",
            MarginalFamily::Uniform => "uniform",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "vm" => Some(MarginalFamily::VonMises),
            "wc" => Some(MarginalFamily::WrappedCauchy),
            "uniform" => Some(MarginalFamily::Uniform),
            _ => None,
        }
    }
}

impl fmt::Display for MarginalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One of the supported univariate circular densities.
#[derive(Debug, Clone, PartialEq)]
pub enum UnivariateCircular {
    VonMises(VonMises),
    WrappedCauchy(WrappedCauchy),
    Uniform,
}

impl UnivariateCircular {
    pub fn von_mises(mu: f64, kappa: f64) -> Result<Self> {
        VonMises::new(mu, kappa).map(UnivariateCircular::VonMises)
    }

    pub fn wrapped_cauchy(mu: f64, rho: f64) -> Result<Self> {
        WrappedCauchy::new(mu, rho).map(UnivariateCircular::WrappedCauchy)
    }

    pub fn family(&self) -> MarginalFamily {
        match self {
            UnivariateCircular::VonMises(_) => MarginalFamily::VonMises,
            UnivariateCircular::WrappedCauchy(_) => MarginalFamily::WrappedCauchy,
            UnivariateCircular::Uniform => MarginalFamily::Uniform,
        }
    }

    /// Location parameter; zero for the uniform law.
    pub fn mu(&self) -> f64 {
        match self {
            UnivariateCircular::VonMises(d) => d.mu,
            UnivariateCircular::WrappedCauchy(d) => d.mu,
            UnivariateCircular::Uniform => 0.0,
        }
    }

    /// `κ` for von Mises, `ρ` for wrapped Cauchy, zero for uniform.
    pub fn concentration(&self) -> f64 {
        match self {
            UnivariateCircular::VonMises(d) => d.kappa,
            UnivariateCircular::WrappedCauchy(d) => d.rho,
            UnivariateCircular::Uniform => 0.0,
        }
    }

    /// Mean resultant length `E[cos(θ − μ)]`.
    pub fn mean_resultant_length(&self) -> f64 {
        match self {
            UnivariateCircular::VonMises(d) => crate::special::a_ratio(d.kappa),
            UnivariateCircular::WrappedCauchy(d) => d.rho,
            UnivariateCircular::Uniform => 0.0,
        }
    }

    #[inline]
    pub fn pdf(&self, theta: f64) -> f64 {
        match self {
            UnivariateCircular::WrappedCauchy(d) => d.pdf(theta),
            _ => self.log_pdf(theta).exp(),
        }
    }

    #[inline]
    pub fn log_pdf(&self, theta: f64) -> f64 {
        match self {
            UnivariateCircular::VonMises(d) => d.log_pdf(theta),
            UnivariateCircular::WrappedCauchy(d) => d.log_pdf(theta),
            UnivariateCircular::Uniform => -LN_TAU,
        }
    }

    /// CDF from `θ₀ = μ − π`; for the uniform law, from `0`.
    #[inline]
    pub fn cdf(&self, theta: f64) -> f64 {
        match self {
            UnivariateCircular::VonMises(d) => d.cdf(theta),
            UnivariateCircular::WrappedCauchy(d) => d.cdf(theta),
            UnivariateCircular::Uniform => normalize(theta) / TAU,
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        match self {
            UnivariateCircular::VonMises(d) => d.quantile(q),
            UnivariateCircular::WrappedCauchy(d) => d.quantile(q),
            UnivariateCircular::Uniform => {
                check_probability(q)?;
                Ok(normalize(TAU * q))
            }
        }
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        match self {
            UnivariateCircular::VonMises(d) => d.sample(rng),
            UnivariateCircular::WrappedCauchy(d) => d.sample(rng),
            UnivariateCircular::Uniform => TAU * rng.uniform(),
        }
    }

    /// Maximum-likelihood (von Mises) or moment (wrapped Cauchy) fit.
    pub fn fit(family: MarginalFamily, data: &[f64], weights: Option<&[f64]>) -> Result<Fitted<Self>> {
        Ok(match family {
            MarginalFamily::VonMises => fit_von_mises_weighted(data, weights)?.map(UnivariateCircular::VonMises),
            MarginalFamily::WrappedCauchy => {
                fit_wrapped_cauchy_weighted(data, weights)?.map(UnivariateCircular::WrappedCauchy)
            }
            MarginalFamily::Uniform => Fitted {
                dist: UnivariateCircular::Uniform,
                degenerate: false,
            },
        })
    }
}

/// An estimate together with a flag raised when the sample resultant vanished.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<T> {
    pub dist: T,
    pub degenerate: bool,
}

impl<T> Fitted<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Fitted<U> {
        Fitted {
            dist: f(self.dist),
            degenerate: self.degenerate,
        }
    }
}

pub fn fit_von_mises(data: &[f64]) -> Result<Fitted<VonMises>> {
    fit_von_mises_weighted(data, None)
}

/// Von Mises MLE from (optionally weighted) circular moments.
pub fn fit_von_mises_weighted(data: &[f64], weights: Option<&[f64]>) -> Result<Fitted<VonMises>> {
    let (r, degenerate) = weighted_resultant(data, weights)?;
    let kappa = if degenerate {
        KAPPA_MIN
    } else {
        inverse_a(r.length).clamp(KAPPA_MIN, KAPPA_MAX)
    };
    Ok(Fitted {
        dist: VonMises::new(r.direction, kappa)?,
        degenerate,
    })
}

pub fn fit_wrapped_cauchy(data: &[f64]) -> Result<Fitted<WrappedCauchy>> {
    fit_wrapped_cauchy_weighted(data, None)
}

/// Moment estimator: `ρ̂` is the mean resultant length.
pub fn fit_wrapped_cauchy_weighted(data: &[f64], weights: Option<&[f64]>) -> Result<Fitted<WrappedCauchy>> {
    let (r, degenerate) = weighted_resultant(data, weights)?;
    let rho = r.length.clamp(RHO_MIN, 1.0 - RHO_MIN);
    Ok(Fitted {
        dist: WrappedCauchy::new(r.direction, rho)?,
        degenerate,
    })
}

fn weighted_resultant(data: &[f64], weights: Option<&[f64]>) -> Result<(crate::angle::Resultant, bool)> {
    if data.len() < 2 {
        return Err(Error::Degenerate(format!(
            "at least two observations are needed, got {}",
            data.len()
        )));
    }
    let r = match weights {
        Some(w) => {
            if w.len() != data.len() {
                return Err(Error::DimensionMismatch {
                    expected: data.len(),
                    found: w.len(),
                });
            }
            if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::param("weights", "must be non-negative with a positive sum"));
            }
            resultant(data.iter().copied().zip(w.iter().copied()))
        }
        None => resultant(data.iter().map(|&t| (t, 1.0))),
    };
    Ok((r, r.length < 1e-12))
}

fn check_probability(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability must lie in [0, 1], got {q}")))
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Numeric("quantile bisection lost its bracket".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
