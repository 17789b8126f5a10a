//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! Search directions come from the L-BFGS two-loop recursion restricted to
//! the free variables (those not pinned at a bound with the gradient pushing
//! outward). Steps follow the projected path `P(x + α p)`; the weak Wolfe
//! conditions are enforced by bisection while the path stays inside the box
//! and plain sufficient decrease once it bends along a face.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub max_iter: usize,
    /// Stop when the projected gradient's ∞-norm falls below this.
    pub pg_tol: f64,
    /// Stop when `|Δf| ≤ rel_tol · max(|f|, 1)`.
    pub rel_tol: f64,
    pub memory: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iter: 500,
            pg_tol: 1e-6,
            rel_tol: 1e-10,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_LINE_STEPS: usize = 60;

/// Minimizes `f` over `lower ≤ x ≤ upper`. The objective writes its gradient
/// into the second argument and returns the value; a non-finite value is
/// treated as a failed trial step.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], config: &OptimConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lower.len().min(upper.len()),
        });
    }
    if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
        return Err(Error::param(format!("bounds[{i}]"), "lower bound exceeds upper bound"));
    }
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)?;
    let mut evaluations = 1;
    if !fx.is_finite() {
        return Err(Error::Numeric("objective is not finite at the starting point".into()));
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(config.memory);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    for iter in 0..config.max_iter {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg < config.pg_tol {
            return Ok(OptimResult {
                x,
                f: fx,
                iterations: iter,
                evaluations,
                converged: true,
            });
        }

        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let mut p = two_loop(&g, &free, &history);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            history.clear();
            p = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            slope = dot(&g, &p);
        }

        // largest step keeping the unprojected point feasible
        let mut alpha_max = f64::INFINITY;
        for i in 0..n {
            if p[i] > 0.0 {
                alpha_max = alpha_max.min((upper[i] - x[i]) / p[i]);
            } else if p[i] < 0.0 {
                alpha_max = alpha_max.min((lower[i] - x[i]) / p[i]);
            }
        }
        let mut alpha = if history.is_empty() {
            (1.0 / p.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut accepted = None;
        for _ in 0..MAX_LINE_STEPS {
            for i in 0..n {
                trial[i] = x[i] + alpha * p[i];
            }
            project(&mut trial);
            let ft = f(&trial, &mut g_trial)?;
            evaluations += 1;
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            let armijo = ft.is_finite() && ft <= fx + ARMIJO * decrease;
            if !armijo {
                hi = alpha;
            } else if alpha < alpha_max && dot(&g_trial, &p) < CURVATURE * slope {
                lo = alpha;
            } else {
                accepted = Some(ft);
                break;
            }
            alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
            if hi.is_finite() && hi - lo < 1e-16 * (1.0 + lo) {
                if lo > 0.0 {
                    // curvature never certified; take the sufficient-decrease point
                    for i in 0..n {
                        trial[i] = x[i] + lo * p[i];
                    }
                    project(&mut trial);
                    let ft = f(&trial, &mut g_trial)?;
                    evaluations += 1;
                    if ft < fx {
                        accepted = Some(ft);
                    }
                }
                break;
            }
        }
        let Some(ft) = accepted else {
            return Ok(OptimResult {
                x,
                f: fx,
                iterations: iter,
                evaluations,
                converged: false,
            });
        };

        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y));
        }
        let change = (fx - ft).abs();
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        let previous = fx;
        fx = ft;
        if change <= config.rel_tol * previous.abs().max(fx.abs()).max(1.0) {
            return Ok(OptimResult {
                x,
                f: fx,
                iterations: iter + 1,
                evaluations,
                converged: true,
            });
        }
    }
    let converged = projected_gradient_norm(&x, &g, lower, upper) < config.pg_tol;
    Ok(OptimResult {
        x,
        f: fx,
        iterations: config.max_iter,
        evaluations,
        converged,
    })
}

/// `‖x − P(x − g)‖∞`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - (x[i] - g[i]).clamp(lower[i], upper[i])).abs())
        .fold(0.0, f64::max)
}

fn two_loop(g: &[f64], free: &[bool], history: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let n = g.len();
    let mask = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| if free[i] { v[i] } else { 0.0 }).collect() };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let (s, y) = (mask(s), mask(y));
        let sy = dot(&s, &y);
        if sy <= 0.0 {
            alphas.push(None);
            continue;
        }
        let a = dot(&s, &q) / sy;
        for i in 0..n {
            q[i] -= a * y[i];
        }
        alphas.push(Some((a, s, y, sy)));
    }
    if let Some((s, y)) = history.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        if yy > 0.0 && dot(&s, &y) > 0.0 {
            let gamma = dot(&s, &y) / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for entry in alphas.into_iter().rev().flatten() {
        let (a, s, y, sy) = entry;
        let b = dot(&y, &q) / sy;
        for i in 0..n {
            q[i] += (a - b) * s[i];
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> Result<f64> {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        Ok((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let r = minimize_box(
            rosenbrock,
            &[-1.2, 1.0],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &OptimConfig {
                rel_tol: 0.0,
                pg_tol: 1e-9,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn active_bound() {
        // minimum of the quadratic sits outside the box at (2, -3)
        let f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            g[0] = 2.0 * (x[0] - 2.0);
            g[1] = 8.0 * (x[1] + 3.0);
            Ok((x[0] - 2.0).powi(2) + 4.0 * (x[1] + 3.0).powi(2))
        };
        let r = minimize_box(f, &[0.5, 0.5], &[0.0, -1.0], &[1.0, 1.0], &OptimConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.x, vec![1.0, -1.0]);
    }

    #[test]
    fn flat_quartic_inside_the_box() {
        let f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi = 4.0 * (i as f64 + 1.0) * (x[i] - 0.3).powi(3);
            }
            Ok(x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.3).powi(4)).sum())
        };
        let x0 = [0.9, 0.1, 0.5, 0.99];
        let f0 = f(&x0, &mut [0.0; 4]).unwrap();
        let r = minimize_box(f, &x0, &[1e-4; 4], &[1.0 - 1e-4; 4], &OptimConfig::default()).unwrap();
        assert!(r.f <= f0);
        assert!(r.x.iter().all(|v| (v - 0.3).abs() < 0.05), "{:?}", r.x);
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(minimize_box(rosenbrock, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &OptimConfig::default()).is_err());
    }
}
