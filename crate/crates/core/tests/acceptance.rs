//! Acceptance suite. Each test prints one `PASS` or `FAIL` line with the
//! measured value, its tolerance and the wall time against the time budget.
//! Tests hold a shared lock so timings are not distorted by each other.
//! Lines go straight to the stderr handle so they show without `--nocapture`.

use std::f64::consts::{PI, TAU};
use std::io::Write as _;
use std::sync::Mutex;
use std::time::Instant;

use circula::angle::{arc_distance, resultant};
use circula::cbmd::{CbmdParams, Families};
use circula::circula::{circula_logpdf_adaptive, BindingFamily, CirculaParams};
use circula::correlation::{
    circula_correlation, g_matrix, js_correlation_matrix, js_correlation_matrix_centered, rank1_factor_approx,
    rank1_stationarity_residual, JsCorrelationMatrix,
};
use circula::estimate::{circula_from_strengths, coupling_strengths, estimate_cbmd};
use circula::io::{format_model, load_model, save_model};
use circula::mixture::{mml_em_fit, MixtureModel, MmlConfig};
use circula::modes::count_modes;
use circula::special::inverse_mean_resultant;
use circula::synth::{run_rank1_benchmark, BenchMethod, SynthSpec};
use circula::univariate::{MarginalFamily, UnivariateCircular};
use circula::{Dataset, RandomSource};

static SERIAL: Mutex<()> = Mutex::new(());

struct Check {
    id: u32,
    title: &'static str,
    budget_s: f64,
    start: Instant,
}

impl Check {
    fn start(id: u32, title: &'static str, budget_s: f64) -> Self {
        Check {
            id,
            title,
            budget_s,
            start: Instant::now(),
        }
    }

    fn finish(self, ok: bool, detail: String) {
        let elapsed = self.start.elapsed().as_secs_f64();
        let in_time = elapsed <= self.budget_s;
        let verdict = if ok && in_time { "PASS" } else { "FAIL" };
        emit(&format!(
            "{verdict} criterion {:>2} {}: {detail}; {elapsed:.1} s of {:.0} s",
            self.id, self.title, self.budget_s
        ));
        assert!(ok, "criterion {} failed: {detail}", self.id);
        assert!(in_time, "criterion {} exceeded its time budget", self.id);
    }
}

fn emit(line: &str) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn between(rng: &mut RandomSource, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn signs(rng: &mut RandomSource, d: usize) -> Vec<i8> {
    (0..d).map(|_| if rng.uniform() < 0.5 { 1 } else { -1 }).collect()
}

fn random_marginal(rng: &mut RandomSource, family: MarginalFamily) -> UnivariateCircular {
    let mu = TAU * rng.uniform();
    match family {
        MarginalFamily::VonMises => UnivariateCircular::von_mises(mu, between(rng, 0.5, 5.0)).unwrap(),
        MarginalFamily::WrappedCauchy => UnivariateCircular::wrapped_cauchy(mu, between(rng, 0.1, 0.7)).unwrap(),
        MarginalFamily::Uniform => UnivariateCircular::Uniform,
    }
}

fn random_cbmd(rng: &mut RandomSource, families: Families, d: usize, rho: (f64, f64)) -> CbmdParams {
    let marginals = (0..d).map(|_| random_marginal(rng, families.marginal)).collect();
    let strengths: Vec<f64> = (0..d).map(|_| between(rng, rho.0, rho.1)).collect();
    let q = signs(rng, d);
    CbmdParams::new(marginals, circula_from_strengths(families.binding, &strengths, &q).unwrap()).unwrap()
}

const INSTANTIATIONS: [Families; 4] = [Families::VM_WC, Families::VM_VM, Families::WC_WC, Families::WC_VM];

/// Midpoint-rule integral of the density over `T^d` with `m` nodes per axis.
fn grid_mass(p: &CbmdParams, m: usize) -> f64 {
    let d = p.dim();
    let h = TAU / m as f64;
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    for idx in 0..m.pow(d as u32) {
        let mut r = idx;
        for slot in x.iter_mut().rev() {
            *slot = ((r % m) as f64 + 0.5) * h;
            r /= m;
        }
        total += p.pdf(&x).unwrap();
    }
    total * h.powi(d as i32)
}

#[test]
fn criterion_01_closed_forms_match_quadrature() {
    let _g = lock();
    let check = Check::start(1, "closed-form circula densities vs latent-angle quadrature", 60.0);
    let mut rng = RandomSource::new(101);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for family in [BindingFamily::VonMises, BindingFamily::WrappedCauchy] {
        for d in [2usize, 3, 5] {
            for _ in 0..100 {
                let conc: Vec<f64> = (0..d)
                    .map(|_| match family {
                        BindingFamily::VonMises => between(&mut rng, 0.05, 10.0),
                        _ => between(&mut rng, 0.05, 0.9),
                    })
                    .collect();
                let c = CirculaParams::new(family, conc, signs(&mut rng, d)).unwrap();
                let u: Vec<f64> = (0..d).map(|_| TAU * rng.uniform()).collect();
                let closed = c.logpdf(&u).unwrap().exp();
                let quad = circula_logpdf_adaptive(&c, &u).exp();
                worst = worst.max((closed - quad).abs() / quad);
                count += 1;
            }
        }
    }
    check.finish(worst <= 1e-8, format!("{count} cases, max relative error {worst:.2e} (tol 1e-8)"));
}

#[test]
fn criterion_02_densities_integrate_to_one() {
    let _g = lock();
    let check = Check::start(2, "normalization on T^2 (512^2) and T^3 (128^3)", 300.0);
    let mut rng = RandomSource::new(102);
    let (mut dev2, mut dev3): (f64, f64) = (0.0, 0.0);
    for families in INSTANTIATIONS {
        for _ in 0..10 {
            let p2 = random_cbmd(&mut rng, families, 2, (0.1, 0.85));
            dev2 = dev2.max((grid_mass(&p2, 512) - 1.0).abs());
            let p3 = random_cbmd(&mut rng, families, 3, (0.1, 0.85));
            dev3 = dev3.max((grid_mass(&p3, 128) - 1.0).abs());
        }
    }
    check.finish(
        dev2 <= 1e-5 && dev3 <= 1e-4,
        format!("max |mass − 1| T^2 {dev2:.2e} (tol 1e-5), T^3 {dev3:.2e} (tol 1e-4)"),
    );
}

#[test]
fn criterion_03_marginalization_is_closed_form() {
    let _g = lock();
    let check = Check::start(3, "integrating out one coordinate of d=3 gives the d=2 marginal", 60.0);
    let mut rng = RandomSource::new(103);
    let m = 256;
    let h = TAU / m as f64;
    let mut worst: f64 = 0.0;
    for families in [Families::VM_WC, Families::VM_VM] {
        let p = random_cbmd(&mut rng, families, 3, (0.3, 0.85));
        let pair = p.marginal(&[0, 1]).unwrap();
        for a in 0..m {
            for b in 0..m {
                let (x, y) = ((a as f64 + 0.5) * h, (b as f64 + 0.5) * h);
                let integrated: f64 = (0..m).map(|c| p.pdf(&[x, y, (c as f64 + 0.5) * h]).unwrap()).sum::<f64>() * h;
                worst = worst.max((integrated - pair.pdf(&[x, y]).unwrap()).abs());
            }
        }
    }
    check.finish(worst <= 1e-6, format!("sup-norm difference {worst:.2e} (tol 1e-6)"));
}

#[test]
fn criterion_04_pairwise_dependence_of_circula_samples() {
    let _g = lock();
    let check = Check::start(4, "pairwise resultant length of circula draws equals rho_k rho_l", 30.0);
    let n = 100_000;
    let rho = [0.8, 0.6, 0.4];
    let q = vec![1, -1, 1];
    let mut worst: f64 = 0.0;
    for family in [BindingFamily::WrappedCauchy, BindingFamily::VonMises] {
        let c = circula_from_strengths(family, &rho, &q).unwrap();
        let mut rng = RandomSource::new(104);
        let draws: Vec<Vec<f64>> = (0..n).map(|_| c.sample(&mut rng)).collect();
        for k in 0..3 {
            for l in k + 1..3 {
                let s = f64::from(q[k] * q[l]);
                let r = resultant(draws.iter().map(|u| (u[k] - s * u[l], 1.0))).length;
                worst = worst.max((r - rho[k] * rho[l]).abs());
            }
        }
    }
    check.finish(worst <= 0.02, format!("max deviation {worst:.4} (tol 0.02), n = {n}"));
}

#[test]
fn criterion_05_js_correlation_has_factor_structure() {
    let _g = lock();
    let check = Check::start(5, "JS correlation of CBMD draws equals R_c(q, rho)", 30.0);
    let n = 100_000;
    let rho = [0.9, 0.7, 0.6, 0.8];
    let q = [1, -1, 1, 1];
    let marginals = [(0.5, 2.0), (2.0, 2.0), (4.0, 2.0), (5.5, 2.0)]
        .iter()
        .map(|&(mu, k)| UnivariateCircular::von_mises(mu, k).unwrap())
        .collect();
    let p = CbmdParams::new(marginals, CirculaParams::wrapped_cauchy(rho.to_vec(), q.to_vec()).unwrap()).unwrap();
    let data = p.sample(&mut RandomSource::new(105), n).unwrap();
    let target = circula_correlation(&q, &rho).unwrap();
    let dev = |m: &JsCorrelationMatrix| (m.as_matrix() - target.as_matrix()).amax();
    let tol = 4.0 / (n as f64).sqrt();

    // the same draws mapped to circula space, centred at the image of the marginal means
    let u: Vec<f64> = data.rows().flat_map(|r| p.to_circula_space(r)).collect();
    let u = Dataset::from_flat(4, u).unwrap();
    let in_circula = dev(&js_correlation_matrix_centered(&u, &[PI; 4]).unwrap());
    emit(&format!("INFO criterion  5 circula-space JS deviation {in_circula:.4} (tol {tol:.4})"));

    let raw = dev(&js_correlation_matrix(&data).unwrap());
    check.finish(raw <= tol, format!("angle-space max deviation {raw:.4} (tol {tol:.4}), d = 4, n = {n}"));
}

#[test]
fn criterion_06_rank_one_factor_recovery() {
    let _g = lock();
    let check = Check::start(6, "rank-one factor recovery from G(w*)", 10.0);
    let mut rng = RandomSource::new(106);
    let (mut res, mut stat): (f64, f64) = (0.0, 0.0);
    for case in 0..50 {
        let d = 2 + case % 9;
        let w: Vec<f64> = (0..d).map(|_| between(&mut rng, -0.95, 0.95)).collect();
        let r = JsCorrelationMatrix::from_matrix(g_matrix(&w)).unwrap();
        let f = rank1_factor_approx(&r).unwrap();
        res = res.max(f.residual);
        stat = stat.max(rank1_stationarity_residual(&r, &f.w));
    }
    check.finish(
        res <= 1e-8 && stat <= 1e-10,
        format!("max Frobenius residual {res:.2e} (tol 1e-8), max stationarity residual {stat:.2e} (tol 1e-10)"),
    );
}

#[test]
fn criterion_07_heuristic_against_exhaustive_search() {
    let _g = lock();
    let check = Check::start(7, "rank-one heuristic vs exhaustive sign search", 1800.0);
    let r3 = run_rank1_benchmark(&SynthSpec::lkj(3, 100, 107)).unwrap();
    let mean = |r: &circula::synth::BenchReport, m| r.summary_for(m).unwrap().clone();
    let (h, e, b) = (
        mean(&r3, BenchMethod::Heuristic),
        mean(&r3, BenchMethod::Exhaustive),
        mean(&r3, BenchMethod::IndependentVm),
    );
    let gap = (h.mean_loglik - e.mean_loglik).abs() / e.mean_loglik.abs();
    let speed3 = e.mean_wall_seconds / h.mean_wall_seconds;
    let r5 = run_rank1_benchmark(&SynthSpec::lkj(5, 20, 207)).unwrap();
    let speed5 = mean(&r5, BenchMethod::Exhaustive).mean_wall_seconds / mean(&r5, BenchMethod::Heuristic).mean_wall_seconds;
    let ok = gap <= 0.002
        && h.mean_loglik > b.mean_loglik
        && e.mean_loglik > b.mean_loglik
        && speed3 >= 5.0
        && speed5 >= 10.0
        && r3.failures.is_empty();
    check.finish(
        ok,
        format!(
            "d=3 mean LL heuristic {:.3}, exhaustive {:.3}, independent {:.3}, gap {:.4}% (tol 0.2%), \
             speed-up {speed3:.1}x (min 5x), {} failures; d=5 speed-up {speed5:.1}x (min 10x)",
            h.mean_loglik,
            e.mean_loglik,
            b.mean_loglik,
            100.0 * gap,
            r3.failures.len()
        ),
    );
}

#[test]
fn criterion_08_estimation_round_trip() {
    let _g = lock();
    let check = Check::start(8, "sample-then-fit recovery, d=3 vM-wC, n=2e4", 600.0);
    let mut good = 0;
    let mut misses = Vec::new();
    for seed in 0..20u64 {
        let mut rng = RandomSource::new(1080 + seed);
        let mu: Vec<f64> = (0..3).map(|_| TAU * rng.uniform()).collect();
        let kappa: Vec<f64> = (0..3).map(|_| between(&mut rng, 1.0, 8.0)).collect();
        let rho: Vec<f64> = (0..3).map(|_| between(&mut rng, 0.3, 0.9)).collect();
        let q = signs(&mut rng, 3);
        let truth = CbmdParams::new(
            (0..3).map(|i| UnivariateCircular::von_mises(mu[i], kappa[i]).unwrap()).collect(),
            CirculaParams::wrapped_cauchy(rho.clone(), q.clone()).unwrap(),
        )
        .unwrap();
        let data = truth.sample(&mut rng, 20_000).unwrap();
        let fit = estimate_cbmd(&data, Families::VM_WC).unwrap().params;
        let m = fit.marginals();
        let rho_hat = coupling_strengths(fit.circula());
        // q and −q describe the same distribution
        let flipped: Vec<i8> = q.iter().map(|v| -v).collect();
        let q_hat = fit.circula().q().to_vec();
        let ok = (0..3).all(|i| {
            arc_distance(m[i].mu(), mu[i]) <= 0.05
                && (m[i].concentration() / kappa[i] - 1.0).abs() <= 0.1
                && (rho_hat[i] - rho[i]).abs() <= 0.05
        }) && (q_hat == q || q_hat == flipped);
        if ok {
            good += 1;
        } else {
            misses.push(seed);
        }
    }
    check.finish(good >= 18, format!("{good}/20 seeds recovered (min 18), misses {misses:?}"));
}

fn blob(mu: [f64; 2], kappa: f64, binding: Option<f64>) -> CbmdParams {
    let marginals = mu.iter().map(|&m| UnivariateCircular::von_mises(m, kappa).unwrap()).collect();
    match binding {
        Some(rho) => CbmdParams::new(marginals, CirculaParams::wrapped_cauchy(vec![rho; 2], vec![1, 1]).unwrap()).unwrap(),
        None => CbmdParams::independent(marginals).unwrap(),
    }
}

#[test]
fn criterion_09_mixture_model_selection() {
    let _g = lock();
    let check = Check::start(9, "message-length EM selects the number of components", 1200.0);
    let three = MixtureModel::new(
        vec![0.3, 0.3, 0.4],
        vec![
            blob([1.0, 1.0], 20.0, Some(0.7)),
            blob([4.0, 1.5], 20.0, Some(0.7)),
            blob([2.5, 4.5], 20.0, Some(0.7)),
        ],
    )
    .unwrap();
    let one = MixtureModel::new(vec![1.0], vec![blob([2.0, 3.0], 5.0, Some(0.6))]).unwrap();
    let (mut hits3, mut hits1) = (0, 0);
    let mut chosen3 = Vec::new();
    for seed in 0..20u64 {
        let data = three.sample(&mut RandomSource::new(1000 + seed), 3000).unwrap();
        let config = MmlConfig {
            k_max: 10,
            seed,
            ..Default::default()
        };
        let k = mml_em_fit(&data, &config, &mut RandomSource::new(seed)).unwrap().k_nz();
        hits3 += usize::from(k == 3);
        chosen3.push(k);

        let data = one.sample(&mut RandomSource::new(2000 + seed), 1000).unwrap();
        let config = MmlConfig {
            k_max: 5,
            seed,
            ..Default::default()
        };
        hits1 += usize::from(mml_em_fit(&data, &config, &mut RandomSource::new(seed)).unwrap().k_nz() == 1);
    }
    check.finish(
        hits3 >= 18 && hits1 == 20,
        format!("three-component data: K=3 in {hits3}/20 (min 18), chosen {chosen3:?}; one-component data: K=1 in {hits1}/20 (min 20)"),
    );
}

#[test]
fn criterion_10_coupling_shortens_the_message() {
    let _g = lock();
    let check = Check::start(10, "coupled mixtures beat the independence baseline on correlated data", 900.0);
    let coupled = MixtureModel::new(
        vec![0.5, 0.5],
        vec![blob([1.0, 1.0], 8.0, Some(0.85)), blob([4.0, 4.0], 8.0, Some(0.85))],
    )
    .unwrap();
    let independent = MixtureModel::new(vec![0.5, 0.5], vec![blob([1.0, 1.0], 8.0, None), blob([4.0, 4.0], 8.0, None)]).unwrap();
    let n = 1000;
    let d = 2;
    // extra binding parameters per component, each costing about ½ log2 n bits
    let allowance = 3.0 * d as f64 * 0.5 * (n as f64).log2();
    let bits = |data: &Dataset, families: Families, seed: u64| {
        let config = MmlConfig {
            families,
            k_max: 4,
            seed,
            ..Default::default()
        };
        mml_em_fit(data, &config, &mut RandomSource::new(seed)).unwrap().meta().message_length_bits
    };
    let mut wins = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let data = coupled.sample(&mut RandomSource::new(3000 + seed), n).unwrap();
        wins += usize::from(bits(&data, Families::VM_WC, seed) < bits(&data, Families::VM_WC.independent(), seed));
        let data = independent.sample(&mut RandomSource::new(4000 + seed), n).unwrap();
        let excess = bits(&data, Families::VM_WC.independent(), seed) - bits(&data, Families::VM_WC, seed);
        worst_excess = worst_excess.max(excess);
    }
    check.finish(
        wins >= 19 && worst_excess <= allowance,
        format!(
            "correlated data: coupled shorter in {wins}/20 (min 19); independent data: baseline excess at most {worst_excess:.2} bits (allowance {allowance:.2})"
        ),
    );
}

#[test]
fn criterion_11_mode_counts() {
    let _g = lock();
    let check = Check::start(11, "critical points of vM-vM and wC-wC densities", 120.0);
    let g = 0.6f64.sqrt();
    let setting = |marginal_vm: bool, binding_vm: bool, d: usize, marginal_rho: f64| {
        let f = if marginal_vm {
            UnivariateCircular::von_mises(0.0, inverse_mean_resultant(marginal_rho).unwrap()).unwrap()
        } else {
            UnivariateCircular::wrapped_cauchy(0.0, marginal_rho).unwrap()
        };
        let family = if binding_vm {
            BindingFamily::VonMises
        } else {
            BindingFamily::WrappedCauchy
        };
        CbmdParams::new(vec![f; d], circula_from_strengths(family, &vec![g; d], &vec![1; d]).unwrap()).unwrap()
    };
    let vv2 = count_modes(&setting(true, true, 2, 0.9), 64).unwrap();
    let vv3 = count_modes(&setting(true, true, 3, 0.6), 64).unwrap();
    let ww2 = count_modes(&setting(false, false, 2, 0.9), 64).unwrap();
    let ok = vv2.modes() == 3 && vv3.modes() == 7 && ww2.modes() == 1 && vv2.alternating_sum() == 0;
    check.finish(
        ok,
        format!(
            "vM-vM d=2 {} modes (want 3), d=3 {} modes (want 7), wC-wC d=2 {} modes (want 1), d=2 alternating sum {} (want 0)",
            vv2.modes(),
            vv3.modes(),
            ww2.modes(),
            vv2.alternating_sum()
        ),
    );
}

#[test]
fn criterion_12_determinism_and_serialization() {
    let _g = lock();
    let check = Check::start(12, "seeded fits give identical files; save/load preserves densities", 60.0);
    let truth = MixtureModel::new(
        vec![0.5, 0.5],
        vec![blob([1.0, 5.0], 6.0, Some(0.7)), blob([3.5, 2.0], 4.0, None)],
    )
    .unwrap();
    let data = truth.sample(&mut RandomSource::new(112), 600).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = MmlConfig {
        k_max: 3,
        seed: 12,
        ..Default::default()
    };
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let m = mml_em_fit(&data, &config, &mut RandomSource::new(12)).unwrap();
        let path = dir.path().join(name);
        save_model(&path, &m).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    let identical = files[0] == files[1];
    let model = mml_em_fit(&data, &config, &mut RandomSource::new(12)).unwrap();
    let loaded = load_model(dir.path().join("a.csv")).unwrap();
    let resaved = format_model(&loaded).into_bytes() == files[0];
    let mut rng = RandomSource::new(212);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = [TAU * rng.uniform(), TAU * rng.uniform()];
        let (a, b) = (model.logpdf(&x).unwrap().exp(), loaded.logpdf(&x).unwrap().exp());
        worst = worst.max((a - b).abs() / a);
    }
    check.finish(
        identical && resaved && worst <= 1e-15,
        format!("identical files {identical}, re-save identical {resaved}, max relative density change {worst:.1e} (tol 1e-15)"),
    );
}
