//! Synthetic data on the torus (wrapped multivariate normals with LKJ or
//! factor-structured correlations) and the sign-search benchmark comparing
//! the rank-one heuristic with exhaustive search.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::cbmd::Families;
use crate::correlation::g_matrix;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{estimate_cbmd, estimate_cbmd_exhaustive, EXHAUSTIVE_MAX_DIM};
use crate::rng::RandomSource;

/// Draws a correlation matrix from the LKJ(η) distribution by the onion method.
pub fn sample_lkj_correlation(dim: usize, eta: f64, rng: &mut RandomSource) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(Error::param("dim", "must be at least 2"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive"));
    }
    let beta_dist = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::Numeric(format!("beta({a}, {b}): {e}")));
    let mut beta = eta + (dim as f64 - 2.0) / 2.0;
    let r12 = 2.0 * beta_dist(beta, beta)?.sample(rng) - 1.0;
    let mut r = DMatrix::from_row_slice(2, 2, &[1.0, r12, r12, 1.0]);
    for k in 2..dim {
        beta -= 0.5;
        let y = beta_dist(k as f64 / 2.0, beta)?.sample(rng);
        let dir = DVector::from_fn(k, |_, _| rng.standard_normal()).normalize();
        let w = dir * y.sqrt();
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("onion step lost positive definiteness".into()))?;
        let z = chol.l() * w;
        let mut next = DMatrix::identity(k + 1, k + 1);
        next.view_mut((0, 0), (k, k)).copy_from(&r);
        for i in 0..k {
            next[(i, k)] = z[i];
            next[(k, i)] = z[i];
        }
        r = next;
    }
    Ok(r)
}

/// Normal draws with covariance `D^{1/2} R D^{1/2}`, wrapped onto `[0, 2π)`.
pub fn wrapped_mvn_sample(
    mean: &[f64],
    correlation: &DMatrix<f64>,
    variances: &[f64],
    n: usize,
    rng: &mut RandomSource,
) -> Result<Dataset> {
    let d = mean.len();
    if correlation.nrows() != d || correlation.ncols() != d || variances.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: variances.len(),
        });
    }
    if let Some(i) = variances.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param(format!("variances[{i}]"), "must be finite and non-negative"));
    }
    let l = correlation
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("correlation matrix is not positive definite".into()))?
        .l();
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut values = Vec::with_capacity(n * d);
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.standard_normal());
        let x = &l * &z;
        values.extend((0..d).map(|i| mean[i] + sd[i] * x[i]));
    }
    Dataset::from_flat(d, values)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationSource {
    Lkj { eta: f64 },
    Explicit(DMatrix<f64>),
    /// `G(w)`: unit diagonal, `w_i w_j` off the diagonal.
    Factor(Vec<f64>),
}

/// How the sampled spread values are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpreadKind {
    Variance,
    StdDev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dim: usize,
    pub n_samples: usize,
    pub n_repeats: usize,
    pub correlation: CorrelationSource,
    /// Per-coordinate spreads are drawn uniformly from this interval.
    pub spread_range: (f64, f64),
    pub spread_kind: SpreadKind,
    pub seed: u64,
}

impl SynthSpec {
    /// LKJ(1) correlations, variances uniform on `[0, π/2]`, 1000 samples.
    pub fn lkj(dim: usize, n_repeats: usize, seed: u64) -> Self {
        SynthSpec {
            dim,
            n_samples: 1000,
            n_repeats,
            correlation: CorrelationSource::Lkj { eta: 1.0 },
            spread_range: (0.0, std::f64::consts::FRAC_PI_2),
            spread_kind: SpreadKind::Variance,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::param("dim", "must be at least 2"));
        }
        let (lo, hi) = self.spread_range;
        if !(0.0 <= lo && lo <= hi && hi <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::param("spread_range", "must be an interval within [0, π/2]"));
        }
        match &self.correlation {
            CorrelationSource::Lkj { eta } if !(*eta > 0.0) => Err(Error::param("eta", "must be positive")),
            CorrelationSource::Explicit(m) if m.nrows() != self.dim || m.ncols() != self.dim => {
                Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: m.nrows(),
                })
            }
            CorrelationSource::Factor(w) if w.len() != self.dim => Err(Error::DimensionMismatch {
                expected: self.dim,
                found: w.len(),
            }),
            CorrelationSource::Factor(w) if w.iter().any(|x| !(x.abs() < 1.0)) => {
                Err(Error::param("factor", "entries must lie in (-1, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Dataset of repeat `repeat`, drawn from its own stream of the seed.
    pub fn generate(&self, repeat: usize) -> Result<Dataset> {
        self.validate()?;
        let d = self.dim;
        let mut rng = RandomSource::new(self.seed).fork(repeat as u64);
        let mean: Vec<f64> = (0..d).map(|_| TAU * rng.uniform()).collect();
        let (lo, hi) = self.spread_range;
        let variances: Vec<f64> = (0..d)
            .map(|_| {
                let s = lo + (hi - lo) * rng.uniform();
                match self.spread_kind {
                    SpreadKind::Variance => s,
                    SpreadKind::StdDev => s * s,
                }
            })
            .collect();
        let corr = match &self.correlation {
            CorrelationSource::Lkj { eta } => sample_lkj_correlation(d, *eta, &mut rng)?,
            CorrelationSource::Explicit(m) => m.clone(),
            CorrelationSource::Factor(w) => g_matrix(w),
        };
        wrapped_mvn_sample(&mean, &corr, &variances, self.n_samples, &mut rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Heuristic,
    Exhaustive,
    IndependentVm,
}

impl BenchMethod {
    pub fn tag(self) -> &'static str {
        match self {
            BenchMethod::Heuristic => "heuristic",
            BenchMethod::Exhaustive => "exhaustive",
            BenchMethod::IndependentVm => "independent_vm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub repeat: usize,
    pub method: BenchMethod,
    pub loglik: f64,
    pub wall_seconds: f64,
    /// Sign vector of the fitted circula (empty for the independent arm).
    pub q: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: BenchMethod,
    pub mean_loglik: f64,
    pub mean_wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub dim: usize,
    pub n_samples: usize,
    pub n_repeats: usize,
    pub seed: u64,
    pub records: Vec<BenchRecord>,
    /// Repeats excluded after an estimation failure, with the error text.
    pub failures: Vec<(usize, String)>,
    pub summary: Vec<MethodSummary>,
}

impl BenchReport {
    pub fn summary_for(&self, method: BenchMethod) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn records_for(&self, method: BenchMethod) -> impl Iterator<Item = &BenchRecord> + '_ {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// `repeat,method,loglik,wall_seconds`, one line per record.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("repeat,method,loglik,wall_seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{:.16e},{:.6e}", r.repeat, r.method.tag(), r.loglik, r.wall_seconds);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// For each repeat: vM-wC by the heuristic and by exhaustive sign search,
/// plus the independent von Mises baseline. Data generation is untimed.
pub fn run_rank1_benchmark(spec: &SynthSpec) -> Result<BenchReport> {
    spec.validate()?;
    if spec.dim > EXHAUSTIVE_MAX_DIM {
        return Err(Error::Refused(format!(
            "the exhaustive arm is limited to dimension {EXHAUSTIVE_MAX_DIM}, got {}",
            spec.dim
        )));
    }
    let mut records = Vec::with_capacity(3 * spec.n_repeats);
    let mut failures = Vec::new();
    for repeat in 0..spec.n_repeats {
        let data = spec.generate(repeat)?;
        match bench_repeat(&data, repeat) {
            Ok(r) => records.extend(r),
            Err(e) => failures.push((repeat, e.to_string())),
        }
    }
    let summary = [BenchMethod::Heuristic, BenchMethod::Exhaustive, BenchMethod::IndependentVm]
        .into_iter()
        .map(|method| {
            let rs: Vec<&BenchRecord> = records.iter().filter(|r| r.method == method).collect();
            let k = rs.len().max(1) as f64;
            MethodSummary {
                method,
                mean_loglik: rs.iter().map(|r| r.loglik).sum::<f64>() / k,
                mean_wall_seconds: rs.iter().map(|r| r.wall_seconds).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(BenchReport {
        dim: spec.dim,
        n_samples: spec.n_samples,
        n_repeats: spec.n_repeats,
        seed: spec.seed,
        records,
        failures,
        summary,
    })
}

fn bench_repeat(data: &Dataset, repeat: usize) -> Result<Vec<BenchRecord>> {
    let t = Instant::now();
    let h = estimate_cbmd(data, Families::VM_WC)?;
    let th = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let e = estimate_cbmd_exhaustive(data, Families::VM_WC)?;
    let te = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let b = estimate_cbmd(data, Families::VM_WC.independent())?;
    let tb = t.elapsed().as_secs_f64();
    Ok(vec![
        BenchRecord {
            repeat,
            method: BenchMethod::Heuristic,
            loglik: h.loglik,
            wall_seconds: th,
            q: h.params.circula().q().to_vec(),
        },
        BenchRecord {
            repeat,
            method: BenchMethod::Exhaustive,
            loglik: e.loglik,
            wall_seconds: te,
            q: e.params.circula().q().to_vec(),
        },
        BenchRecord {
            repeat,
            method: BenchMethod::IndependentVm,
            loglik: b.loglik,
            wall_seconds: tb,
            q: Vec::new(),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::{arc_distance, resultant};
    use crate::correlation::js_correlation_matrix;

    #[test]
    fn lkj_two_dimensional_marginal_is_uniform() {
        let mut rng = RandomSource::new(81);
        let mut xs: Vec<f64> = (0..10_000)
            .map(|_| sample_lkj_correlation(2, 1.0, &mut rng).unwrap()[(0, 1)])
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + 1.0) / 2.0;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.02, "{ks}");
    }

    #[test]
    fn lkj_draws_are_correlation_matrices() {
        let mut rng = RandomSource::new(82);
        for &d in &[2usize, 3, 5, 10] {
            for eta in [0.5, 1.0, 4.0] {
                let r = sample_lkj_correlation(d, eta, &mut rng).unwrap();
                assert!((&r - r.transpose()).amax() < 1e-12);
                assert!((0..d).all(|i| (r[(i, i)] - 1.0).abs() < 1e-12));
                assert!(r.clone().cholesky().is_some());
                let det = r.determinant();
                assert!(det > 0.0 && det <= 1.0 + 1e-12);
            }
        }
        assert!(sample_lkj_correlation(1, 1.0, &mut rng).is_err());
        assert!(sample_lkj_correlation(3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn wrapped_normal_examples() {
        let mut rng = RandomSource::new(83);
        let mean = [6.0, 0.3, 3.0];
        let data = wrapped_mvn_sample(&mean, &DMatrix::identity(3, 3), &[0.05; 3], 100_000, &mut rng).unwrap();
        for j in 0..3 {
            let m = resultant(data.column(j).iter().map(|&t| (t, 1.0))).direction;
            assert!(arc_distance(m, mean[j]) < 0.02);
        }
        let still = wrapped_mvn_sample(&[7.0, -1.0], &DMatrix::identity(2, 2), &[0.0, 0.0], 10, &mut rng).unwrap();
        assert!(still.rows().all(|r| (r[0] - (7.0 - TAU)).abs() < 1e-12 && (r[1] - (TAU - 1.0)).abs() < 1e-12));
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let data = wrapped_mvn_sample(&[1.0, 2.0], &corr, &[0.5, 0.5], 20_000, &mut rng).unwrap();
        assert!(js_correlation_matrix(&data).unwrap().get(0, 1) > 0.3);
    }

    #[test]
    fn repeats_are_reproducible_and_distinct() {
        let spec = SynthSpec::lkj(3, 2, 9);
        assert_eq!(spec.generate(0).unwrap(), spec.generate(0).unwrap());
        assert_ne!(spec.generate(0).unwrap(), spec.generate(1).unwrap());
        let bad = SynthSpec {
            spread_range: (0.0, 2.0),
            ..spec
        };
        assert!(bad.generate(0).is_err());
    }

    #[test]
    fn small_benchmark() {
        let spec = SynthSpec {
            n_samples: 300,
            ..SynthSpec::lkj(3, 3, 11)
        };
        let report = run_rank1_benchmark(&spec).unwrap();
        assert_eq!(report.records.len() + 3 * report.failures.len(), 9);
        let h: Vec<_> = report.records_for(BenchMethod::Heuristic).collect();
        let e: Vec<_> = report.records_for(BenchMethod::Exhaustive).collect();
        let b: Vec<_> = report.records_for(BenchMethod::IndependentVm).collect();
        for i in 0..h.len() {
            assert!(e[i].loglik >= h[i].loglik - 1e-9);
            assert!(h[i].loglik >= b[i].loglik - 1e-9);
        }
        let again = run_rank1_benchmark(&spec).unwrap();
        for (a, b) in report.records.iter().zip(&again.records) {
            assert_eq!(a.loglik, b.loglik);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("repeat,method,loglik,wall_seconds\n"));
        assert_eq!(csv.lines().count(), 1 + report.records.len());
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["dim"], 3);
    }
}
