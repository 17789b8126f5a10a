//! Finite mixtures of circula-based distributions: toroidal k-means++
//! seeding, EM, and component-wise EM under a minimum-message-length
//! criterion that annihilates unsupported components.

use std::f64::consts::LN_2;

use crate::angle::{geodesic_dist2_unchecked, resultant};
use crate::cbmd::{CbmdParams, Families};
use crate::circula::BindingFamily;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{circula_from_strengths, estimate_cbmd, RHO_LOWER};
use crate::rng::RandomSource;
use crate::special::{compensated_sum, LogSumExp};
use crate::univariate::{MarginalFamily, UnivariateCircular, KAPPA_MIN, RHO_MIN};

/// Summary of a mixture fit; lengths are in bits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitMeta {
    pub message_length_bits: f64,
    pub model_length_bits: f64,
    pub data_length_bits: f64,
    pub k_nz: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    /// Human-readable notes on frozen, collapsed or fallback components.
    pub diagnostics: Vec<String>,
}

/// `Σ_k w_k h_k(θ)` with weights on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    weights: Vec<f64>,
    components: Vec<CbmdParams>,
    meta: FitMeta,
}

impl MixtureModel {
    /// Weights must be finite, non-negative and sum to one within 1e-9.
    pub fn new(weights: Vec<f64>, components: Vec<CbmdParams>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("components", "a mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                found: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param(format!("weights[{i}]"), "must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("weights", format!("sum to {total}, not 1")));
        }
        let d = components[0].dim();
        if let Some(i) = components.iter().position(|c| c.dim() != d) {
            return Err(Error::param(format!("components[{i}]"), "component dimensions differ"));
        }
        let k_nz = weights.iter().filter(|&&w| w > 0.0).count();
        Ok(MixtureModel {
            weights,
            components,
            meta: FitMeta {
                k_nz,
                ..Default::default()
            },
        })
    }

    pub fn with_meta(mut self, meta: FitMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn k_nz(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[CbmdParams] {
        &self.components
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    pub fn logpdf(&self, theta: &[f64]) -> Result<f64> {
        let mut acc = LogSumExp::new();
        for (w, c) in self.weights.iter().zip(&self.components) {
            if *w > 0.0 {
                acc.push(w.ln() + c.logpdf(theta)?);
            }
        }
        Ok(acc.value())
    }

    /// `Σ_n w_n ln p(θ_n)`, compensated, in row order.
    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        let mut terms = Vec::with_capacity(data.len());
        for (i, row) in data.rows().enumerate() {
            terms.push(data.weight(i) * self.logpdf(row)?);
        }
        Ok(compensated_sum(terms))
    }

    /// Posterior component probabilities, one row per observation.
    pub fn responsibilities(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.check_data(data)?;
        let mut out = Vec::with_capacity(data.len());
        for row in data.rows() {
            let logs: Vec<f64> = self
                .weights
                .iter()
                .zip(&self.components)
                .map(|(w, c)| if *w > 0.0 { Ok(w.ln() + c.logpdf(row)?) } else { Ok(f64::NEG_INFINITY) })
                .collect::<Result<_>>()?;
            let mut acc = LogSumExp::new();
            logs.iter().for_each(|&v| acc.push(v));
            let z = acc.value();
            out.push(logs.iter().map(|v| (v - z).exp()).collect());
        }
        Ok(out)
    }

    pub fn sample(&self, rng: &mut RandomSource, n: usize) -> Result<Dataset> {
        let d = self.dim();
        let mut values = Vec::with_capacity(n * d);
        for _ in 0..n {
            let mut u = rng.uniform();
            let mut k = self.k() - 1;
            for (j, &w) in self.weights.iter().enumerate() {
                if u < w {
                    k = j;
                    break;
                }
                u -= w;
            }
            let row = self.components[k].sample(rng, 1)?;
            values.extend_from_slice(row.row(0));
        }
        Dataset::from_flat(d, values)
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmlConfig {
    pub families: Families,
    pub k_min: usize,
    pub k_max: usize,
    /// Fraction of rows used by each sweep; `1` means full-data EM.
    pub batch_fraction: f64,
    pub max_iter: usize,
    /// Relative change of the message length that ends a sweep sequence.
    pub tol: f64,
    pub seed: u64,
}

impl Default for MmlConfig {
    fn default() -> Self {
        MmlConfig {
            families: Families::VM_WC,
            k_min: 1,
            k_max: 10,
            batch_fraction: 1.0,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Free parameters per component: a mean and concentration per marginal,
/// plus a coupling strength per coordinate unless the binding is uniform.
pub fn parameters_per_component(binding: BindingFamily, dim: usize) -> usize {
    match binding {
        BindingFamily::Uniform => 2 * dim,
        _ => 3 * dim,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageLength {
    pub model_bits: f64,
    pub data_bits: f64,
    pub total_bits: f64,
}

/// Two-part length with the data-resolution constant omitted, so it is
/// meaningful only relative to other models of the same data.
pub fn message_length(model: &MixtureModel, data: &Dataset) -> Result<MessageLength> {
    let loglik = model.log_likelihood(data)?;
    Ok(length_from_loglik(model.weights(), model.components(), data.total_weight(), loglik))
}

fn length_from_loglik(weights: &[f64], components: &[CbmdParams], n: f64, loglik: f64) -> MessageLength {
    let mut model = 0.0;
    let mut k_nz = 0.0;
    for (w, c) in weights.iter().zip(components) {
        if *w > 0.0 {
            let big_n = parameters_per_component(c.circula().family(), c.dim()) as f64;
            model += 0.5 * big_n * (n * w / 12.0).ln() + 0.5 * (big_n + 1.0);
            k_nz += 1.0;
        }
    }
    model += 0.5 * k_nz * (n / 12.0).ln();
    let model_bits = model / LN_2;
    let data_bits = -loglik / LN_2;
    MessageLength {
        model_bits,
        data_bits,
        total_bits: model_bits + data_bits,
    }
}

/// Cluster centers and the label of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == k).collect()
    }
}

/// k-means++ seeding and Lloyd iterations under the flat-torus metric.
pub fn toroidal_kmeanspp(data: &Dataset, k: usize, rng: &mut RandomSource) -> Result<Partition> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::param("k", format!("must lie in 1..={n}, got {k}")));
    }
    let d = data.dim();
    let mut centers = vec![data.row(rng.index(n)).to_vec()];
    let mut nearest: Vec<f64> = data.rows().map(|r| geodesic_dist2_unchecked(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().enumerate().map(|(i, v)| data.weight(i) * v).sum();
        let pick = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut chosen = n - 1;
            for (i, v) in nearest.iter().enumerate() {
                let p = data.weight(i) * v;
                if u < p {
                    chosen = i;
                    break;
                }
                u -= p;
            }
            chosen
        } else {
            rng.index(n)
        };
        let c = data.row(pick).to_vec();
        for (i, r) in data.rows().enumerate() {
            nearest[i] = nearest[i].min(geodesic_dist2_unchecked(r, &c));
        }
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (i, r) in data.rows().enumerate() {
            let (best, bd) = centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, geodesic_dist2_unchecked(r, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            dist[i] = bd;
        }
        // re-seed empty clusters from the farthest points
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for j in 0..k {
            if sizes[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("k ≤ n leaves a donor cluster");
            sizes[labels[far]] -= 1;
            labels[far] = j;
            sizes[j] = 1;
            dist[far] = 0.0;
            changed = true;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            for (a, slot) in c.iter_mut().enumerate().take(d) {
                *slot = resultant(
                    data.rows()
                        .enumerate()
                        .filter(|(i, _)| labels[*i] == j)
                        .map(|(i, r)| (r[a], data.weight(i))),
                )
                .direction;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Partition { centers, labels })
}

/// Component fitted at independence when a cluster is too small to estimate
/// its coupling.
fn independence_component(data: &Dataset, families: Families) -> Result<CbmdParams> {
    let d = data.dim();
    let mut marginals = Vec::with_capacity(d);
    for j in 0..d {
        let col = data.column(j);
        let m = if col.len() >= 2 {
            UnivariateCircular::fit(families.marginal, &col, data.weights())?.dist
        } else {
            match families.marginal {
                MarginalFamily::VonMises => UnivariateCircular::von_mises(col[0], KAPPA_MIN)?,
                MarginalFamily::WrappedCauchy => UnivariateCircular::wrapped_cauchy(col[0], RHO_MIN)?,
                MarginalFamily::Uniform => UnivariateCircular::Uniform,
            }
        };
        marginals.push(m);
    }
    let circula = circula_from_strengths(families.binding, &vec![RHO_LOWER; d], &vec![1; d])?;
    CbmdParams::new(marginals, circula)
}

/// One component per cluster, weights proportional to cluster mass.
pub fn init_mixture_from_partition(data: &Dataset, partition: &Partition, families: Families) -> Result<MixtureModel> {
    let d = data.dim();
    let total = data.total_weight();
    let mut weights = Vec::with_capacity(partition.k());
    let mut components = Vec::with_capacity(partition.k());
    let mut diagnostics = Vec::new();
    for k in 0..partition.k() {
        let idx = partition.members(k);
        if idx.is_empty() {
            return Err(Error::param(format!("partition cluster {k}"), "is empty"));
        }
        let sub = data.select(&idx);
        let component = if sub.len() >= 10 * d {
            match estimate_cbmd(&sub, families) {
                Ok(fit) => fit.params,
                Err(Error::Degenerate(_)) | Err(Error::Numeric(_)) => {
                    diagnostics.push(format!("component {k}: estimation failed, initialized at independence"));
                    independence_component(&sub, families)?
                }
                Err(e) => return Err(e),
            }
        } else {
            diagnostics.push(format!(
                "component {k}: {} rows < {}, initialized at independence",
                sub.len(),
                10 * d
            ));
            independence_component(&sub, families)?
        };
        weights.push(sub.total_weight() / total);
        components.push(component);
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    let model = MixtureModel::new(weights, components)?;
    let meta = FitMeta {
        k_nz: model.k_nz(),
        diagnostics,
        ..Default::default()
    };
    Ok(model.with_meta(meta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change that ends the iteration.
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

/// Working state: components, weights and the per-row component
/// log-densities of the rows currently in play.
struct State<'a> {
    data: Dataset,
    full: &'a Dataset,
    families: Families,
    weights: Vec<f64>,
    components: Vec<CbmdParams>,
    logd: Vec<Vec<f64>>,
    diagnostics: Vec<String>,
}

impl<'a> State<'a> {
    fn new(model: &MixtureModel, full: &'a Dataset, families: Families) -> Result<Self> {
        let mut s = State {
            data: full.clone(),
            full,
            families,
            weights: model.weights.clone(),
            components: model.components.clone(),
            logd: Vec::new(),
            diagnostics: model.meta.diagnostics.clone(),
        };
        s.refresh()?;
        Ok(s)
    }

    fn column(&self, c: &CbmdParams) -> Result<Vec<f64>> {
        self.data.rows().map(|r| c.logpdf(r)).collect()
    }

    fn refresh(&mut self) -> Result<()> {
        self.logd = self.components.iter().map(|c| self.column(c)).collect::<Result<_>>()?;
        Ok(())
    }

    fn use_rows(&mut self, rows: Option<&[usize]>) -> Result<()> {
        self.data = match rows {
            Some(r) => self.full.select(r),
            None => self.full.clone(),
        };
        self.refresh()
    }

    /// Responsibilities scaled by the row weights, and the log-likelihood.
    fn e_step(&self) -> (Vec<Vec<f64>>, f64) {
        let n = self.data.len();
        let k = self.components.len();
        let mut resp = vec![vec![0.0; n]; k];
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = LogSumExp::new();
            for j in 0..k {
                if self.weights[j] > 0.0 {
                    acc.push(self.weights[j].ln() + self.logd[j][i]);
                }
            }
            let z = acc.value();
            let w = self.data.weight(i);
            for j in 0..k {
                if self.weights[j] > 0.0 {
                    resp[j][i] = w * (self.weights[j].ln() + self.logd[j][i] - z).exp();
                }
            }
            terms.push(w * z);
        }
        (resp, compensated_sum(terms))
    }

    fn loglik(&self) -> f64 {
        self.e_step().1
    }

    /// Refits component `j` to responsibility-weighted rows, keeping the new
    /// parameters only if the weighted component log-likelihood improves.
    fn update_component(&mut self, j: usize, resp: &[f64]) -> Result<()> {
        let weighted = self.data.clone().with_weights(resp.to_vec())?;
        let fitted = match estimate_cbmd(&weighted, self.families) {
            Ok(f) => f.params,
            Err(Error::Degenerate(_)) | Err(Error::Numeric(_)) => {
                self.diagnostics.push(format!("component {j}: refit failed, kept previous parameters"));
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let column = self.column(&fitted)?;
        let q = |col: &[f64]| compensated_sum(col.iter().zip(resp).map(|(l, r)| if *r > 0.0 { r * l } else { 0.0 }));
        if q(&column) >= q(&self.logd[j]) {
            self.components[j] = fitted;
            self.logd[j] = column;
        }
        Ok(())
    }

    fn remove(&mut self, j: usize) {
        self.weights.remove(j);
        self.components.remove(j);
        self.logd.remove(j);
        let s: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
    }

    fn model(&self, meta: FitMeta) -> Result<MixtureModel> {
        Ok(MixtureModel::new(self.weights.clone(), self.components.clone())?.with_meta(meta))
    }
}

/// Classical EM with the number of components fixed. Components whose
/// responsibility mass drops below one are frozen.
pub fn em_fit(init: MixtureModel, data: &Dataset, families: Families, config: &EmConfig) -> Result<MixtureModel> {
    init.check_data(data)?;
    let mut s = State::new(&init, data, families)?;
    let total = data.total_weight();
    let mut ll = s.loglik();
    let mut converged = false;
    for _ in 0..config.max_iter {
        let (resp, _) = s.e_step();
        for j in 0..s.components.len() {
            let mass: f64 = resp[j].iter().sum();
            s.weights[j] = mass / total;
            if mass < 1.0 {
                s.diagnostics.push(format!("component {j}: responsibility mass {mass:.3e} < 1, frozen"));
                continue;
            }
            s.update_component(j, &resp[j])?;
        }
        let sum: f64 = s.weights.iter().sum();
        s.weights.iter_mut().for_each(|w| *w /= sum);
        let next = s.loglik();
        let change = (next - ll).abs();
        ll = next;
        if change <= config.tol * ll.abs() {
            converged = true;
            break;
        }
    }
    s.diagnostics.dedup();
    let length = length_from_loglik(&s.weights, &s.components, total, ll);
    let meta = FitMeta {
        message_length_bits: length.total_bits,
        model_length_bits: length.model_bits,
        data_length_bits: length.data_bits,
        k_nz: s.weights.iter().filter(|&&w| w > 0.0).count(),
        converged,
        seed: init.meta.seed,
        diagnostics: std::mem::take(&mut s.diagnostics),
    };
    s.model(meta)
}

/// Component-wise EM that minimizes the message length, starting at
/// `k_max` components and annihilating down to `k_min`; returns the shortest
/// model met along the way.
pub fn mml_em_fit(data: &Dataset, config: &MmlConfig, rng: &mut RandomSource) -> Result<MixtureModel> {
    let d = data.dim();
    let n = data.len();
    if !(1 <= config.k_min && config.k_min <= config.k_max) {
        return Err(Error::param("k_min", "need 1 ≤ k_min ≤ k_max"));
    }
    if config.k_max * 10 * d > n {
        return Err(Error::param(
            "k_max",
            format!("k_max = {} exceeds n/(10d) = {}", config.k_max, n / (10 * d)),
        ));
    }
    if !(config.batch_fraction > 0.0 && config.batch_fraction <= 1.0) {
        return Err(Error::param("batch_fraction", "must lie in (0, 1]"));
    }
    let families = config.families;
    let big_n = parameters_per_component(families.binding, d) as f64;
    let n_total = data.total_weight();
    let batch = config.batch_fraction < 1.0;
    let batch_size = ((config.batch_fraction * n as f64).ceil() as usize).clamp(10 * d, n);

    let partition = toroidal_kmeanspp(data, config.k_max, rng)?;
    let init = init_mixture_from_partition(data, &partition, families)?;
    let mut s = State::new(&init, data, families)?;

    let mut best: Option<MixtureModel> = None;
    loop {
        let mut previous = f64::INFINITY;
        let mut converged = false;
        let mut length = f64::NAN;
        let mut scale = 1.0;
        for _ in 0..config.max_iter {
            if batch {
                let rows = draw_batch(rng, n, batch_size);
                s.use_rows(Some(&rows))?;
                scale = n_total / s.data.total_weight();
            }
            // descending weight, ties by position
            let mut order: Vec<usize> = (0..s.components.len()).collect();
            order.sort_by(|&a, &b| s.weights[b].total_cmp(&s.weights[a]).then(a.cmp(&b)));
            let mut ids: Vec<usize> = (0..s.components.len()).collect();
            for target in order {
                let Some(j) = ids.iter().position(|&x| x == target) else {
                    continue;
                };
                let (resp, _) = s.e_step();
                let support: Vec<f64> = resp
                    .iter()
                    .map(|r| (scale * r.iter().sum::<f64>() - 0.5 * big_n).max(0.0))
                    .collect();
                let denom: f64 = support.iter().sum();
                if !(denom > 0.0) {
                    return best.ok_or_else(|| Error::Degenerate("every mixture component was annihilated".into()));
                }
                s.weights[j] = support[j] / denom;
                let sum: f64 = s.weights.iter().sum();
                s.weights.iter_mut().for_each(|w| *w /= sum);
                if s.weights[j] == 0.0 {
                    s.remove(j);
                    ids.remove(j);
                    continue;
                }
                let (resp, _) = s.e_step();
                s.update_component(j, &resp[j])?;
            }
            let ll = s.loglik() * scale;
            length = length_from_loglik(&s.weights, &s.components, n_total, ll).total_bits;
            if (previous - length).abs() <= config.tol * length.abs() {
                converged = true;
                break;
            }
            previous = length;
        }
        if batch {
            s.use_rows(None)?;
            let ll = s.loglik();
            length = length_from_loglik(&s.weights, &s.components, n_total, ll).total_bits;
        }
        let better = best.as_ref().is_none_or(|b| length < b.meta.message_length_bits);
        if better {
            let ll = s.loglik();
            let parts = length_from_loglik(&s.weights, &s.components, n_total, ll);
            let meta = FitMeta {
                message_length_bits: parts.total_bits,
                model_length_bits: parts.model_bits,
                data_length_bits: parts.data_bits,
                k_nz: s.weights.iter().filter(|&&w| w > 0.0).count(),
                converged,
                seed: Some(config.seed),
                diagnostics: s.diagnostics.clone(),
            };
            best = Some(s.model(meta)?);
        }
        if s.components.len() <= config.k_min {
            break;
        }
        let weakest = (0..s.weights.len())
            .min_by(|&a, &b| s.weights[a].total_cmp(&s.weights[b]).then(a.cmp(&b)))
            .expect("non-empty mixture");
        s.remove(weakest);
    }
    best.ok_or_else(|| Error::Degenerate("every mixture component was annihilated".into()))
}

/// `size` distinct row indices, in increasing order.
fn draw_batch(rng: &mut RandomSource, n: usize, size: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + rng.index(n - i);
        idx.swap(i, j);
    }
    let mut out = idx[..size].to_vec();
    out.sort_unstable();
    out
}
