//! Circulae: densities on `T^d` with uniform marginals, built by coupling
//! every coordinate to one uniform latent angle `φ` through a centered
//! binding density, `u_i = ω_i + q_i φ` with `ω_i ~ g_i`.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::angle::normalize;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::special::{a_ratio, log_i0, LogSumExp, KAPPA_MAX};
use crate::univariate::UnivariateCircular;

const LN_TAU: f64 = 1.837_877_066_409_345_5;

/// Pairs of binding `ρ` closer than this are spread apart before evaluating
/// the residue sum.
pub const RHO_TIE: f64 = 1e-7;

/// Cancellation factor of the residue sum above which the closed form is
/// replaced by adaptive quadrature.
const WC_CONDITION_LIMIT: f64 = 1e5;

pub const QUADRATURE_START_NODES: usize = 4096;
pub const QUADRATURE_MAX_NODES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BindingFamily {
    VonMises,
    WrappedCauchy,
    Uniform,
}

impl BindingFamily {
    pub fn tag(self) -> &'static str {
        match self {
            BindingFamily::VonMises => "vm",
            BindingFamily::WrappedCauchy => "wc",
            BindingFamily::Uniform => "uniform",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "vm" => Some(BindingFamily::VonMises),
            "wc" => Some(BindingFamily::WrappedCauchy),
            "uniform" => Some(BindingFamily::Uniform),
            _ => None,
        }
    }
}

impl fmt::Display for BindingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct WcCache {
    // binding ρ after spreading near-ties, in the original coordinate order
    rho: Vec<f64>,
    // coordinate indices by ascending ρ
    order: Vec<usize>,
}

/// Parameters of a circula on `T^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculaParams {
    family: BindingFamily,
    conc: Vec<f64>,
    q: Vec<i8>,
    bindings: Vec<UnivariateCircular>,
    log_norm: f64,
    wc: Option<WcCache>,
}

impl CirculaParams {
    /// `conc` holds `κ_i ∈ (0, 700]` or `ρ_i ∈ (0, 1)` and must be empty for
    /// the uniform family; `q` holds the signs `±1` and fixes the dimension.
    pub fn new(family: BindingFamily, conc: Vec<f64>, q: Vec<i8>) -> Result<Self> {
        let d = q.len();
        if d == 0 {
            return Err(Error::param("q", "a circula needs at least one coordinate"));
        }
        if let Some(i) = q.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::param(format!("q[{i}]"), "signs must be +1 or -1"));
        }
        let bindings = match family {
            BindingFamily::Uniform => {
                if !conc.is_empty() {
                    return Err(Error::param("conc", "the uniform binding takes no concentrations"));
                }
                vec![UnivariateCircular::Uniform; d]
            }
            _ => {
                if conc.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: conc.len(),
                    });
                }
                conc.iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        match family {
                            BindingFamily::VonMises => UnivariateCircular::von_mises(0.0, c),
                            _ => UnivariateCircular::wrapped_cauchy(0.0, c),
                        }
                        .map_err(|_| {
                            Error::param(
                                format!("conc[{i}]"),
                                format!("{c} is outside the {family} binding domain"),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let log_norm = match family {
            BindingFamily::VonMises => -(d as f64) * LN_TAU - conc.iter().map(|&k| log_i0(k)).sum::<f64>(),
            _ => -(d as f64) * LN_TAU,
        };
        let wc = (family == BindingFamily::WrappedCauchy).then(|| spread_ties(&conc));
        Ok(CirculaParams {
            family,
            conc,
            q,
            bindings,
            log_norm,
            wc,
        })
    }

    pub fn von_mises(kappa: Vec<f64>, q: Vec<i8>) -> Result<Self> {
        Self::new(BindingFamily::VonMises, kappa, q)
    }

    pub fn wrapped_cauchy(rho: Vec<f64>, q: Vec<i8>) -> Result<Self> {
        Self::new(BindingFamily::WrappedCauchy, rho, q)
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        Self::new(BindingFamily::Uniform, Vec::new(), vec![1; dim])
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn family(&self) -> BindingFamily {
        self.family
    }

    pub fn conc(&self) -> &[f64] {
        &self.conc
    }

    pub fn q(&self) -> &[i8] {
        &self.q
    }

    /// Mean resultant length of binding density `i`; this is the per-coordinate
    /// coupling strength, so pairwise dependence is `ρ_k ρ_l`.
    pub fn binding_rho(&self, i: usize) -> f64 {
        match self.family {
            BindingFamily::VonMises => a_ratio(self.conc[i]),
            BindingFamily::WrappedCauchy => self.conc[i],
            BindingFamily::Uniform => 0.0,
        }
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Log-density at a point of circula space, by the fastest exact route.
    pub fn logpdf(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        match self.family {
            BindingFamily::VonMises => Ok(self.vm_logpdf_unchecked(u)),
            BindingFamily::WrappedCauchy => self.wc_logpdf_unchecked(u),
            BindingFamily::Uniform => Ok(self.log_norm),
        }
    }

    #[inline]
    fn vm_logpdf_unchecked(&self, u: &[f64]) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for ((&k, &q), &ui) in self.conc.iter().zip(&self.q).zip(u) {
            let (sn, cs) = ui.sin_cos();
            c += k * cs;
            s += k * q as f64 * sn;
        }
        log_i0(c.hypot(s)) + self.log_norm
    }

    fn wc_logpdf_unchecked(&self, u: &[f64]) -> Result<f64> {
        let d = self.dim();
        if d == 1 {
            return Ok(-LN_TAU);
        }
        if d == 2 {
            return Ok(self.wc_pair_logpdf(u, None));
        }
        self.wc_residue_logpdf(u)
    }

    /// Residue sum over the poles `η_j = ρ_j e^{i q_j u_j}` inside the unit
    /// circle, accumulated in ascending `ρ` with compensation.
    fn wc_residue_logpdf(&self, u: &[f64]) -> Result<f64> {
        let d = self.dim();
        let cache = self.wc.as_ref().expect("wrapped Cauchy cache");
        let eta: Vec<Complex64> = cache
            .rho
            .iter()
            .zip(&self.q)
            .zip(u)
            .map(|((&r, &q), &ui)| Complex64::from_polar(r, q as f64 * ui))
            .collect();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        let mut abs_sum = 0.0;
        for &j in &cache.order {
            let ej = eta[j];
            let mut term = ej.powu(d as u32 - 1);
            for (k, &ek) in eta.iter().enumerate() {
                if k != j {
                    let rk = cache.rho[k];
                    term *= (1.0 - rk * rk) / ((ej - ek) * (1.0 - ek.conj() * ej));
                }
            }
            abs_sum += term.norm();
            // Kahan compensation on both parts
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let total = sum.re.abs().max(sum.im.abs());
        if !(abs_sum.is_finite() && abs_sum <= WC_CONDITION_LIMIT * total) {
            return Ok(self.wc_logpdf_by_quadrature(u));
        }
        if sum.re <= 0.0 || sum.im.abs() > 1e-9 * sum.re.abs() {
            return Err(Error::Numeric(format!(
                "wrapped Cauchy circula residue sum {sum} is not a positive real (rho = {:?}, q = {:?})",
                self.conc, self.q
            )));
        }
        Ok(sum.re.ln() - d as f64 * LN_TAU)
    }

    /// Two wrapped Cauchy bindings compose to a wrapped Cauchy in
    /// `u_1 − q_1 q_2 u_2` with concentration `ρ_1 ρ_2`; this form has no
    /// cancellation when the two poles meet.
    fn wc_pair_logpdf(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (r1, r2) = (self.conc[0], self.conc[1]);
        let r = r1 * r2;
        let cos = (u[0] - (self.q[0] * self.q[1]) as f64 * u[1]).cos();
        let den = 1.0 + r * r - 2.0 * r * cos;
        if let Some(g) = grad {
            let dr = -2.0 * r / (1.0 - r * r) - (2.0 * r - 2.0 * cos) / den;
            g[0] = r2 * dr;
            g[1] = r1 * dr;
        }
        (1.0 - r * r).ln() - den.ln() - 2.0 * LN_TAU
    }

    /// Trapezoid rule for the wrapped Cauchy latent-variable integral. The
    /// integrand's Fourier coefficients decay like `ρ_max^m`, so the node
    /// count starts where that bound drops below 1e-16 and doubles until two
    /// successive values agree to 1e-12.
    fn wc_logpdf_by_quadrature(&self, u: &[f64]) -> f64 {
        let rho_max = self.conc.iter().fold(0.0f64, |m, &r| m.max(r));
        let start = (1.5 * 16.0 * std::f64::consts::LN_10 / -rho_max.ln()).ceil().max(64.0);
        let mut n = (start as usize).next_power_of_two().min(QUADRATURE_MAX_NODES / 2);
        let mut acc = LogSumExp::new();
        let h = TAU / n as f64;
        for m in 0..n {
            acc.push(self.log_integrand(u, m as f64 * h));
        }
        let mut value = acc.value() - (n as f64).ln();
        while n < QUADRATURE_MAX_NODES {
            let h = TAU / n as f64;
            for m in 0..n {
                acc.push(self.log_integrand(u, (m as f64 + 0.5) * h));
            }
            n *= 2;
            let next = acc.value() - (n as f64).ln();
            let converged = (next - value).abs() < 1e-12;
            value = next;
            if converged {
                break;
            }
        }
        value
    }

    /// `Σ_i ln g_i(u_i − q_i φ)`, the integrand of the latent-variable integral.
    #[inline]
    fn log_integrand(&self, u: &[f64], phi: f64) -> f64 {
        self.bindings
            .iter()
            .zip(&self.q)
            .zip(u)
            .map(|((g, &q), &ui)| g.log_pdf(ui - q as f64 * phi))
            .sum()
    }

    /// Draws one point `u` by sampling the latent angle then the bindings.
    pub fn sample(&self, rng: &mut RandomSource) -> Vec<f64> {
        let phi = TAU * rng.uniform();
        self.bindings
            .iter()
            .zip(&self.q)
            .map(|(g, &q)| {
                let omega = match g {
                    UnivariateCircular::Uniform => TAU * rng.uniform(),
                    _ => g.sample(rng),
                };
                normalize(omega + q as f64 * phi)
            })
            .collect()
    }

    /// The circula of the coordinates in `subset` (0-based, no repeats).
    pub fn marginal(&self, subset: &[usize]) -> Result<CirculaParams> {
        check_subset(subset, self.dim())?;
        let conc = match self.family {
            BindingFamily::Uniform => Vec::new(),
            _ => subset.iter().map(|&i| self.conc[i]).collect(),
        };
        CirculaParams::new(self.family, conc, subset.iter().map(|&i| self.q[i]).collect())
    }

    /// Log-density together with its gradient with respect to the binding
    /// concentrations (`κ_i` for von Mises, `ρ_i` for wrapped Cauchy).
    pub fn logpdf_with_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_point(u)?;
        if grad.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: grad.len(),
            });
        }
        match self.family {
            BindingFamily::Uniform => {
                grad.fill(0.0);
                Ok(self.log_norm)
            }
            BindingFamily::VonMises => Ok(self.vm_logpdf_gradient(u, grad)),
            BindingFamily::WrappedCauchy => self.wc_logpdf_gradient(u, grad),
        }
    }

    fn vm_logpdf_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for ((&k, &q), &ui) in self.conc.iter().zip(&self.q).zip(u) {
            let (sn, cs) = ui.sin_cos();
            c += k * cs;
            s += k * q as f64 * sn;
        }
        let r = c.hypot(s);
        // A(R)/R tends to 1/2 as R → 0
        let scale = if r > 1e-150 { a_ratio(r) / r } else { 0.5 };
        for (i, g) in grad.iter_mut().enumerate() {
            let (sn, cs) = u[i].sin_cos();
            *g = scale * (c * cs + s * self.q[i] as f64 * sn) - a_ratio(self.conc[i]);
        }
        log_i0(r) + self.log_norm
    }

    fn wc_logpdf_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = self.dim();
        if d == 1 {
            grad[0] = 0.0;
            return Ok(-LN_TAU);
        }
        if d == 2 {
            return Ok(self.wc_pair_logpdf(u, Some(grad)));
        }
        let cache = self.wc.as_ref().expect("wrapped Cauchy cache");
        let rho = &cache.rho;
        let eta: Vec<Complex64> = rho
            .iter()
            .zip(&self.q)
            .zip(u)
            .map(|((&r, &q), &ui)| Complex64::from_polar(r, q as f64 * ui))
            .collect();
        let zero = Complex64::new(0.0, 0.0);
        let mut sum = zero;
        let mut abs_sum = 0.0;
        let mut dsum = vec![zero; d];
        let mut dlog = vec![zero; d];
        let log_one_minus: Vec<f64> = rho.iter().map(|r| -2.0 * r / (1.0 - r * r)).collect();
        for &j in &cache.order {
            let ej = eta[j];
            let mut term = ej.powu(d as u32 - 1);
            let mut own = Complex64::new((d - 1) as f64, 0.0);
            for (k, &ek) in eta.iter().enumerate() {
                if k == j {
                    continue;
                }
                let rk = rho[k];
                let a = 1.0 / (ej - ek);
                let b = ek.conj() * ej / (1.0 - ek.conj() * ej);
                term *= (1.0 - rk * rk) * a / (1.0 - ek.conj() * ej);
                own += b - ej * a;
                dlog[k] = log_one_minus[k] + (ek * a + b) / rk;
            }
            dlog[j] = own / rho[j];
            abs_sum += term.norm();
            sum += term;
            for m in 0..d {
                dsum[m] += term * dlog[m];
            }
        }
        let total = sum.re.abs().max(sum.im.abs());
        if !(abs_sum.is_finite() && abs_sum <= WC_CONDITION_LIMIT * total) || sum.re <= 0.0 {
            return self.gradient_by_differences(u, grad);
        }
        for m in 0..d {
            grad[m] = dsum[m].re / sum.re;
        }
        self.wc_logpdf_unchecked(u)
    }

    /// Central differences of the log-density in the concentrations, used
    /// where the residue sum is too ill-conditioned to differentiate.
    fn gradient_by_differences(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        const H: f64 = 1e-5;
        let value = self.logpdf(u)?;
        for i in 0..self.dim() {
            let c = self.conc[i];
            let (lo, hi) = match self.family {
                BindingFamily::VonMises => ((c - H).max(1e-12), (c + H).min(KAPPA_MAX)),
                _ => ((c - H).max(1e-12), (c + H).min(1.0 - 1e-12)),
            };
            let mut conc = self.conc.clone();
            conc[i] = hi;
            let up = CirculaParams::new(self.family, conc.clone(), self.q.clone())?.logpdf(u)?;
            conc[i] = lo;
            let down = CirculaParams::new(self.family, conc, self.q.clone())?.logpdf(u)?;
            grad[i] = (up - down) / (hi - lo);
        }
        Ok(value)
    }
}

pub(crate) fn check_subset(subset: &[usize], dim: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut seen = vec![false; dim];
    for &i in subset {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        if seen[i] {
            return Err(Error::param("subset", format!("index {i} repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Spreads every group of `ρ` values within [`RHO_TIE`] of each other
/// symmetrically around the group mean, in steps of `RHO_TIE`.
fn spread_ties(rho: &[f64]) -> WcCache {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
    let mut spread = rho.to_vec();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && rho[order[end]] - rho[order[end - 1]] < RHO_TIE {
            end += 1;
        }
        let p = end - start;
        if p > 1 {
            let mean = order[start..end].iter().map(|&i| rho[i]).sum::<f64>() / p as f64;
            for (rank, &i) in order[start..end].iter().enumerate() {
                let offset = (rank as f64 - 0.5 * (p - 1) as f64) * RHO_TIE;
                spread[i] = (mean + offset).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
            }
        }
        start = end;
    }
    WcCache { rho: spread, order }
}

/// Closed-form log-density of a von Mises-bound circula.
pub fn vm_circula_logpdf(params: &CirculaParams, u: &[f64]) -> Result<f64> {
    if params.family != BindingFamily::VonMises {
        return Err(Error::param("params", "expected a von Mises binding"));
    }
    params.check_point(u)?;
    Ok(params.vm_logpdf_unchecked(u))
}

/// Closed-form log-density of a wrapped Cauchy-bound circula (residue sum).
pub fn wc_circula_logpdf(params: &CirculaParams, u: &[f64]) -> Result<f64> {
    if params.family != BindingFamily::WrappedCauchy {
        return Err(Error::param("params", "expected a wrapped Cauchy binding"));
    }
    params.check_point(u)?;
    params.wc_logpdf_unchecked(u)
}

/// Trapezoid rule with `nodes` points on the latent-variable integral.
pub fn circula_logpdf_quadrature(params: &CirculaParams, u: &[f64], nodes: usize) -> Result<f64> {
    if nodes < 64 {
        return Err(Error::param("nodes", "at least 64 quadrature nodes are required"));
    }
    params.check_point(u)?;
    if params.family == BindingFamily::Uniform {
        return Ok(params.log_norm);
    }
    let h = TAU / nodes as f64;
    let mut acc = LogSumExp::new();
    for m in 0..nodes {
        acc.push(params.log_integrand(u, m as f64 * h));
    }
    Ok(acc.value() - (nodes as f64).ln())
}

/// Trapezoid rule starting at 4096 nodes and doubling until two successive
/// values agree to `1e-10` or `2^20` nodes are reached.
pub fn circula_logpdf_adaptive(params: &CirculaParams, u: &[f64]) -> f64 {
    if params.family == BindingFamily::Uniform {
        return params.log_norm;
    }
    let mut n = QUADRATURE_START_NODES;
    let mut acc = LogSumExp::new();
    let h = TAU / n as f64;
    for m in 0..n {
        acc.push(params.log_integrand(u, m as f64 * h));
    }
    let mut value = acc.value() - (n as f64).ln();
    while n < QUADRATURE_MAX_NODES {
        let h = TAU / n as f64;
        for m in 0..n {
            acc.push(params.log_integrand(u, (m as f64 + 0.5) * h));
        }
        n *= 2;
        let next = acc.value() - (n as f64).ln();
        let converged = (next - value).abs() < 1e-10;
        value = next;
        if converged {
            break;
        }
    }
    value
}

/// Pairwise dependence of coordinates `k`, `l` implied by the circula:
/// `E[cos(u_k − q_k q_l u_l)] = ρ_k ρ_l`.
pub fn pairwise_dependence(params: &CirculaParams, k: usize, l: usize) -> f64 {
    params.binding_rho(k) * params.binding_rho(l)
}
