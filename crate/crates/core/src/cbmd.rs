//! Circula-based multivariate distributions: `d` univariate marginals glued
//! by a circula through the probability-integral transform
//! `u_i = 2π F_i(θ_i)`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::circula::{check_subset, BindingFamily, CirculaParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::special::compensated_sum;
use crate::univariate::{MarginalFamily, UnivariateCircular};

const LN_TAU: f64 = 1.837_877_066_409_345_5;

/// Marginal and binding family pair, written `marginal-binding` (`vm-wc`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Families {
    pub marginal: MarginalFamily,
    pub binding: BindingFamily,
}

impl Families {
    pub const VM_WC: Families = Families {
        marginal: MarginalFamily::VonMises,
        binding: BindingFamily::WrappedCauchy,
    };
    pub const VM_VM: Families = Families {
        marginal: MarginalFamily::VonMises,
        binding: BindingFamily::VonMises,
    };
    pub const WC_WC: Families = Families {
        marginal: MarginalFamily::WrappedCauchy,
        binding: BindingFamily::WrappedCauchy,
    };
    pub const WC_VM: Families = Families {
        marginal: MarginalFamily::WrappedCauchy,
        binding: BindingFamily::VonMises,
    };

    pub fn new(marginal: MarginalFamily, binding: BindingFamily) -> Self {
        Families { marginal, binding }
    }

    /// Same marginals, circula replaced by the independence (uniform) binding.
    pub fn independent(self) -> Self {
        Families {
            marginal: self.marginal,
            binding: BindingFamily::Uniform,
        }
    }
}

impl fmt::Display for Families {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.marginal.tag(), self.binding.tag())
    }
}

impl FromStr for Families {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("families", format!("expected `<marginal>-<binding>` such as vm-wc, got `{s}`"));
        let (m, b) = s.split_once('-').ok_or_else(bad)?;
        Ok(Families {
            marginal: MarginalFamily::from_tag(m).ok_or_else(bad)?,
            binding: BindingFamily::from_tag(b).ok_or_else(bad)?,
        })
    }
}

/// Parameters of a circula-based distribution on `T^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbmdParams {
    marginals: Vec<UnivariateCircular>,
    circula: CirculaParams,
}

impl CbmdParams {
    pub fn new(marginals: Vec<UnivariateCircular>, circula: CirculaParams) -> Result<Self> {
        if marginals.len() != circula.dim() {
            return Err(Error::DimensionMismatch {
                expected: circula.dim(),
                found: marginals.len(),
            });
        }
        Ok(CbmdParams { marginals, circula })
    }

    /// Product of the marginals, coupled by the uniform circula.
    pub fn independent(marginals: Vec<UnivariateCircular>) -> Result<Self> {
        let circula = CirculaParams::uniform(marginals.len())?;
        Self::new(marginals, circula)
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[UnivariateCircular] {
        &self.marginals
    }

    pub fn circula(&self) -> &CirculaParams {
        &self.circula
    }

    /// Families when every marginal shares one family.
    pub fn families(&self) -> Option<Families> {
        let m = self.marginals[0].family();
        self.marginals
            .iter()
            .all(|f| f.family() == m)
            .then(|| Families::new(m, self.circula.family()))
    }

    fn check_point(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    /// `u_i = 2π F_i(θ_i)`.
    pub fn to_circula_space(&self, theta: &[f64]) -> Vec<f64> {
        self.marginals
            .iter()
            .zip(theta)
            .map(|(f, &t)| (TAU * f.cdf(t)).min(TAU.next_down()))
            .collect()
    }

    /// `d ln 2π + Σ ln f_i(θ_i) + ln c(u)`.
    pub fn logpdf(&self, theta: &[f64]) -> Result<f64> {
        self.check_point(theta)?;
        let marginal: f64 = self.marginals.iter().zip(theta).map(|(f, &t)| f.log_pdf(t)).sum();
        if self.circula.family() == BindingFamily::Uniform {
            return Ok(marginal);
        }
        let u = self.to_circula_space(theta);
        Ok(self.dim() as f64 * LN_TAU + marginal + self.circula.logpdf(&u)?)
    }

    pub fn pdf(&self, theta: &[f64]) -> Result<f64> {
        self.logpdf(theta).map(f64::exp)
    }

    /// `Σ_n w_n ln h(θ_n)`, compensated and in row order.
    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.dim(),
            });
        }
        let terms = data
            .rows()
            .enumerate()
            .map(|(i, r)| Ok(data.weight(i) * self.logpdf(r)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(compensated_sum(terms))
    }

    /// Draws `n` points: circula sample, then marginal quantiles.
    pub fn sample(&self, rng: &mut RandomSource, n: usize) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        let mut values = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            let u = self.circula.sample(rng);
            for (f, ui) in self.marginals.iter().zip(u) {
                values.push(f.quantile(ui / TAU)?);
            }
        }
        Dataset::from_flat(self.dim(), values)
    }

    /// Distribution of the coordinates in `subset` (0-based, no repeats).
    pub fn marginal(&self, subset: &[usize]) -> Result<CbmdParams> {
        check_subset(subset, self.dim())?;
        CbmdParams::new(
            subset.iter().map(|&i| self.marginals[i].clone()).collect(),
            self.circula.marginal(subset)?,
        )
    }

    /// `ln h(θ_A | θ_B)` for disjoint index sets given as `(index, angle)` pairs.
    pub fn conditional_logpdf(&self, given: &[(usize, f64)], target: &[(usize, f64)]) -> Result<f64> {
        let joint: Vec<(usize, f64)> = target.iter().chain(given).copied().collect();
        let joint_idx: Vec<usize> = joint.iter().map(|p| p.0).collect();
        check_subset(&joint_idx, self.dim())?;
        if target.is_empty() {
            return Err(Error::EmptySubset);
        }
        let joint_theta: Vec<f64> = joint.iter().map(|p| p.1).collect();
        let log_joint = self.marginal(&joint_idx)?.logpdf(&joint_theta)?;
        if given.is_empty() {
            return Ok(log_joint);
        }
        let given_idx: Vec<usize> = given.iter().map(|p| p.0).collect();
        let given_theta: Vec<f64> = given.iter().map(|p| p.1).collect();
        let log_given = self.marginal(&given_idx)?.logpdf(&given_theta)?;
        if log_given < (1e-300f64).ln() {
            return Err(Error::Numeric(format!(
                "conditioning density {:e} is below 1e-300",
                log_given.exp()
            )));
        }
        Ok(log_joint - log_given)
    }
}
