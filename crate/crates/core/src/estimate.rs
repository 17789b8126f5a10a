//! Two-stage estimation of circula-based distributions: marginals first,
//! then the circula concentrations by bounded quasi-Newton maximization of
//! the circula log-likelihood with the sign vector fixed.

use std::f64::consts::TAU;

use crate::cbmd::{CbmdParams, Families};
use crate::circula::{BindingFamily, CirculaParams};
use crate::correlation::{js_correlation_matrix, rank1_factor_approx, Rank1Factor};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::optim::{minimize_box, OptimConfig};
use crate::special::{a_ratio_derivative, compensated_sum, inverse_a, KAPPA_MAX};
use crate::univariate::UnivariateCircular;

/// Bounds on the coupling strengths `ρ_i` during refinement.
pub const RHO_LOWER: f64 = 1e-4;
pub const RHO_UPPER: f64 = 1.0 - 1e-4;
/// Largest dimension accepted by the exhaustive sign search.
pub const EXHAUSTIVE_MAX_DIM: usize = 12;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub gradient: GradientMode,
    pub optim: OptimConfig,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            gradient: GradientMode::Analytic,
            optim: OptimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbmdFit {
    pub params: CbmdParams,
    /// Weighted joint log-likelihood of the data under `params`.
    pub loglik: f64,
    /// Weighted circula log-likelihood at the starting `ρ` and at the optimum.
    pub circula_loglik_initial: f64,
    pub circula_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Rank-one factor of the JS matrix that seeded `q` and `ρ`.
    pub factor: Option<Rank1Factor>,
    /// The JS matrix was unusable and the fit fell back to independence.
    pub independence_fallback: bool,
    pub marginal_degenerate: Vec<bool>,
}

/// Marginal fits and circula-space data shared by every sign configuration.
struct Prepared {
    dim: usize,
    marginals: Vec<UnivariateCircular>,
    marginal_degenerate: Vec<bool>,
    u: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
    factor: Option<Rank1Factor>,
}

struct Refined {
    circula: CirculaParams,
    loglik_initial: f64,
    loglik: f64,
    converged: bool,
    iterations: usize,
}

pub fn estimate_cbmd(data: &Dataset, families: Families) -> Result<CbmdFit> {
    estimate_cbmd_with(data, families, &EstimateOptions::default())
}

/// Marginal fits, sign vector and starting strengths from the rank-one
/// factor of the JS matrix, then refinement of the strengths.
pub fn estimate_cbmd_with(data: &Dataset, families: Families, options: &EstimateOptions) -> Result<CbmdFit> {
    let prep = prepare(data, families)?;
    let d = prep.dim;
    let (q, rho, fallback) = match &prep.factor {
        Some(f) if !f.negative_radicand => (
            f.w.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect::<Vec<i8>>(),
            f.w.iter().map(|x| x.abs().clamp(RHO_LOWER, RHO_UPPER)).collect::<Vec<_>>(),
            false,
        ),
        _ => (vec![1; d], vec![RHO_LOWER; d], prep.factor.is_none()),
    };
    let refined = if fallback {
        fixed(&prep, families.binding, &q, &rho)?
    } else {
        refine(&prep, families.binding, &q, &rho, options)?
    };
    assemble(data, prep, refined, fallback)
}

/// Runs the refinement for every sign vector (lexicographic, `+1` first) from
/// the same starting strengths and keeps the best circula likelihood.
pub fn estimate_cbmd_exhaustive(data: &Dataset, families: Families) -> Result<CbmdFit> {
    estimate_cbmd_exhaustive_with(data, families, &EstimateOptions::default())
}

pub fn estimate_cbmd_exhaustive_with(data: &Dataset, families: Families, options: &EstimateOptions) -> Result<CbmdFit> {
    let d = data.dim();
    if d > EXHAUSTIVE_MAX_DIM {
        return Err(Error::Refused(format!(
            "exhaustive sign search over 2^{d} configurations exceeds the limit of dimension {EXHAUSTIVE_MAX_DIM}"
        )));
    }
    let prep = prepare(data, families)?;
    let rho: Vec<f64> = match &prep.factor {
        Some(f) if !f.negative_radicand => f.w.iter().map(|x| x.abs().clamp(RHO_LOWER, RHO_UPPER)).collect(),
        _ => vec![RHO_LOWER; d],
    };
    let mut best: Option<Refined> = None;
    for code in 0u32..(1 << d) {
        let q: Vec<i8> = (0..d).map(|i| if code >> (d - 1 - i) & 1 == 1 { -1 } else { 1 }).collect();
        let r = refine(&prep, families.binding, &q, &rho, options)?;
        let better = match &best {
            None => true,
            Some(b) => r.loglik - b.loglik > 1e-12 * b.loglik.abs(),
        };
        if better {
            best = Some(r);
        }
        if families.binding == BindingFamily::Uniform {
            break;
        }
    }
    assemble(data, prep, best.expect("at least one sign configuration"), false)
}

fn prepare(data: &Dataset, families: Families) -> Result<Prepared> {
    let d = data.dim();
    if data.len() < 10 * d {
        return Err(Error::Degenerate(format!(
            "estimation needs at least {} observations in dimension {d}, got {}",
            10 * d,
            data.len()
        )));
    }
    let mut marginals = Vec::with_capacity(d);
    let mut marginal_degenerate = Vec::with_capacity(d);
    for j in 0..d {
        let fit = UnivariateCircular::fit(families.marginal, &data.column(j), data.weights())?;
        marginals.push(fit.dist);
        marginal_degenerate.push(fit.degenerate);
    }
    let max_w = (0..data.len()).map(|i| data.weight(i)).fold(0.0, f64::max);
    if !(max_w > 0.0) {
        return Err(Error::Degenerate("all observation weights are zero".into()));
    }
    let mut u = Vec::with_capacity(data.len() * d);
    let mut weights = Vec::with_capacity(data.len());
    for (i, row) in data.rows().enumerate() {
        let w = data.weight(i);
        if w <= 1e-12 * max_w {
            continue;
        }
        weights.push(w);
        u.extend(marginals.iter().zip(row).map(|(f, &t)| (TAU * f.cdf(t)).min(TAU.next_down())));
    }
    let factor = if families.binding == BindingFamily::Uniform || d < 2 {
        None
    } else {
        match js_correlation_matrix(data) {
            Ok(r) => Some(rank1_factor_approx(&r)?),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        }
    };
    Ok(Prepared {
        dim: d,
        marginals,
        marginal_degenerate,
        total_weight: compensated_sum(weights.iter().copied()),
        u,
        weights,
        factor,
    })
}

/// Circula with coupling strengths `ρ`; von Mises bindings use `κ = A⁻¹(ρ)`.
pub fn circula_from_strengths(family: BindingFamily, rho: &[f64], q: &[i8]) -> Result<CirculaParams> {
    match family {
        BindingFamily::Uniform => CirculaParams::uniform(q.len()),
        BindingFamily::VonMises => CirculaParams::von_mises(rho.iter().map(|&r| inverse_a(r)).collect(), q.to_vec()),
        BindingFamily::WrappedCauchy => CirculaParams::wrapped_cauchy(rho.to_vec(), q.to_vec()),
    }
}

/// Mean circula log-likelihood and its gradient in `ρ`.
fn mean_loglik(prep: &Prepared, family: BindingFamily, q: &[i8], rho: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
    let d = prep.dim;
    let c = circula_from_strengths(family, rho, q)?;
    let mut terms = Vec::with_capacity(prep.weights.len());
    let Some(grad) = grad else {
        for (row, &w) in prep.u.chunks_exact(d).zip(&prep.weights) {
            terms.push(w * c.logpdf(row)?);
        }
        return Ok(compensated_sum(terms) / prep.total_weight);
    };
    let mut acc = vec![0.0; d];
    let mut g = vec![0.0; d];
    for (row, &w) in prep.u.chunks_exact(d).zip(&prep.weights) {
        terms.push(w * c.logpdf_with_gradient(row, &mut g)?);
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += w * gi;
        }
    }
    for i in 0..d {
        let chain = match family {
            BindingFamily::VonMises => {
                let k = c.conc()[i];
                if k >= KAPPA_MAX {
                    0.0
                } else {
                    1.0 / a_ratio_derivative(k)
                }
            }
            _ => 1.0,
        };
        grad[i] = acc[i] * chain / prep.total_weight;
    }
    Ok(compensated_sum(terms) / prep.total_weight)
}

/// Central differences of the mean log-likelihood in `ρ`.
fn mean_loglik_fd(prep: &Prepared, family: BindingFamily, q: &[i8], rho: &[f64], grad: &mut [f64]) -> Result<f64> {
    let value = mean_loglik(prep, family, q, rho, None)?;
    let mut x = rho.to_vec();
    for i in 0..rho.len() {
        x[i] = rho[i] + FD_STEP;
        let up = mean_loglik(prep, family, q, &x, None)?;
        x[i] = rho[i] - FD_STEP;
        let down = mean_loglik(prep, family, q, &x, None)?;
        x[i] = rho[i];
        grad[i] = (up - down) / (2.0 * FD_STEP);
    }
    Ok(value)
}

fn fixed(prep: &Prepared, family: BindingFamily, q: &[i8], rho: &[f64]) -> Result<Refined> {
    let ll = mean_loglik(prep, family, q, rho, None)? * prep.total_weight;
    Ok(Refined {
        circula: circula_from_strengths(family, rho, q)?,
        loglik_initial: ll,
        loglik: ll,
        converged: true,
        iterations: 0,
    })
}

fn refine(prep: &Prepared, family: BindingFamily, q: &[i8], rho0: &[f64], options: &EstimateOptions) -> Result<Refined> {
    if family == BindingFamily::Uniform {
        return fixed(prep, family, q, &[]);
    }
    let d = prep.dim;
    let initial = mean_loglik(prep, family, q, rho0, None)?;
    let objective = |x: &[f64], g: &mut [f64]| -> Result<f64> {
        let v = match options.gradient {
            GradientMode::Analytic => mean_loglik(prep, family, q, x, Some(&mut *g))?,
            GradientMode::FiniteDifference => mean_loglik_fd(prep, family, q, x, g)?,
        };
        g.iter_mut().for_each(|gi| *gi = -*gi);
        Ok(-v)
    };
    let result = minimize_box(objective, rho0, &vec![RHO_LOWER; d], &vec![RHO_UPPER; d], &options.optim)?;
    let (rho, value) = if -result.f >= initial {
        (result.x, -result.f)
    } else {
        (rho0.to_vec(), initial)
    };
    Ok(Refined {
        circula: circula_from_strengths(family, &rho, q)?,
        loglik_initial: initial * prep.total_weight,
        loglik: value * prep.total_weight,
        converged: result.converged,
        iterations: result.iterations,
    })
}

fn assemble(data: &Dataset, prep: Prepared, refined: Refined, fallback: bool) -> Result<CbmdFit> {
    let params = CbmdParams::new(prep.marginals, refined.circula)?;
    Ok(CbmdFit {
        loglik: params.log_likelihood(data)?,
        params,
        circula_loglik_initial: refined.loglik_initial,
        circula_loglik: refined.loglik,
        converged: refined.converged,
        iterations: refined.iterations,
        factor: prep.factor,
        independence_fallback: fallback,
        marginal_degenerate: prep.marginal_degenerate,
    })
}

/// Coupling strengths `ρ_i` of a fitted circula (zero for the uniform binding).
pub fn coupling_strengths(c: &CirculaParams) -> Vec<f64> {
    (0..c.dim()).map(|i| c.binding_rho(i)).collect()
}
