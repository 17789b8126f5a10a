//! Critical points of a density on `T^d` (`d ≤ 3`): grid scan, Newton
//! polish, and a tally by Morse index.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::angle::{geodesic_dist2_unchecked, normalize};
use crate::cbmd::CbmdParams;
use crate::error::{Error, Result};

const FD_STEP: f64 = 1e-4;
const MERGE_DIST: f64 = 1e-4;
const TIE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub point: Vec<f64>,
    /// Number of negative Hessian eigenvalues; `d` for a local maximum.
    pub index: usize,
    pub log_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub dim: usize,
    pub critical_points: Vec<CriticalPoint>,
    /// `counts_by_index[k]` critical points of index `k`.
    pub counts_by_index: Vec<usize>,
    /// Grid ties or degenerate Hessians were met; counts may be unreliable.
    pub plateau: bool,
}

impl ModeReport {
    /// Local maxima.
    pub fn modes(&self) -> usize {
        self.counts_by_index[self.dim]
    }

    /// `Σ_k (−1)^k n_k`, which is zero on the torus for a Morse function.
    pub fn alternating_sum(&self) -> i64 {
        self.counts_by_index
            .iter()
            .enumerate()
            .map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) })
            .sum()
    }
}

/// Locates maxima, minima and saddles of the density of `params`.
pub fn count_modes(params: &CbmdParams, grid_per_dim: usize) -> Result<ModeReport> {
    let d = params.dim();
    if d == 0 || d > 3 {
        return Err(Error::param("params", format!("mode counting supports 1 ≤ d ≤ 3, got {d}")));
    }
    if grid_per_dim < 64 {
        return Err(Error::param("grid_per_dim", "must be at least 64"));
    }
    let f = |x: &[f64]| params.logpdf(x);
    let m = grid_per_dim;
    let h = TAU / m as f64;
    let total = m.pow(d as u32);
    let coords = |mut idx: usize| -> Vec<usize> {
        let mut c = vec![0; d];
        for slot in c.iter_mut().rev() {
            *slot = idx % m;
            idx /= m;
        }
        c
    };
    let flat = |c: &[usize]| c.iter().fold(0, |acc, &v| acc * m + v);
    let point = |c: &[usize]| c.iter().map(|&v| (v as f64 + 0.5) * h).collect::<Vec<_>>();

    let mut values = Vec::with_capacity(total);
    for idx in 0..total {
        values.push(f(&point(&coords(idx)))?);
    }

    let mut plateau = false;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let offsets: Vec<Vec<isize>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as isize - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<isize>| o.iter().any(|&v| v != 0))
        .collect();
    let shift = |c: &[usize], o: &[isize]| -> usize {
        let moved: Vec<usize> = c.iter().zip(o).map(|(&v, &s)| (v as isize + s).rem_euclid(m as isize) as usize).collect();
        flat(&moved)
    };

    // grid extrema by neighbor comparison
    for idx in 0..total {
        let c = coords(idx);
        let v = values[idx];
        let (mut above, mut below) = (true, true);
        for o in &offsets {
            let w = values[shift(&c, o)];
            if (w - v).abs() <= TIE * v.abs().max(1.0) {
                plateau = true;
            }
            above &= v > w;
            below &= v < w;
        }
        if above || below {
            starts.push(point(&c));
        }
    }

    // cells where every component of the grid gradient changes sign
    let gradient = |c: &[usize]| -> Vec<f64> {
        (0..d)
            .map(|i| {
                let mut up = vec![0isize; d];
                up[i] = 1;
                let mut down = vec![0isize; d];
                down[i] = -1;
                (values[shift(c, &up)] - values[shift(c, &down)]) / (2.0 * h)
            })
            .collect()
    };
    let grads: Vec<Vec<f64>> = (0..total).map(|idx| gradient(&coords(idx))).collect();
    let corners: Vec<Vec<isize>> = (0..1usize << d)
        .map(|k| (0..d).map(|i| ((k >> i) & 1) as isize).collect())
        .collect();
    for idx in 0..total {
        let c = coords(idx);
        let mut pos = vec![false; d];
        let mut neg = vec![false; d];
        for o in &corners {
            let g = &grads[shift(&c, o)];
            for i in 0..d {
                pos[i] |= g[i] >= 0.0;
                neg[i] |= g[i] <= 0.0;
            }
        }
        if (0..d).all(|i| pos[i] && neg[i]) {
            starts.push(c.iter().map(|&v| (v as f64 + 1.0) * h).collect());
        }
    }

    let mut found: Vec<CriticalPoint> = Vec::new();
    for s in starts {
        let Some((x, hess)) = newton(&f, s, h)? else {
            continue;
        };
        if found.iter().any(|p| geodesic_dist2_unchecked(&p.point, &x) < MERGE_DIST * MERGE_DIST) {
            continue;
        }
        let eig = SymmetricEigen::new(hess);
        let scale = eig.eigenvalues.amax();
        if eig.eigenvalues.iter().any(|l| l.abs() <= 1e-8 * scale.max(1e-300)) {
            plateau = true;
        }
        found.push(CriticalPoint {
            index: eig.eigenvalues.iter().filter(|&&l| l < 0.0).count(),
            log_density: f(&x)?,
            point: x,
        });
    }
    found.sort_by(|a, b| b.log_density.total_cmp(&a.log_density));
    let mut counts_by_index = vec![0; d + 1];
    for p in &found {
        counts_by_index[p.index] += 1;
    }
    Ok(ModeReport {
        dim: d,
        critical_points: found,
        counts_by_index,
        plateau,
    })
}

fn derivatives(f: &impl Fn(&[f64]) -> Result<f64>, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = x.len();
    let e = FD_STEP;
    let at = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(i, s) in shifts {
            y[i] = normalize(y[i] + s);
        }
        f(&y)
    };
    let f0 = f(x)?;
    let mut g = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let up = at(&[(i, e)])?;
        let down = at(&[(i, -e)])?;
        g[i] = (up - down) / (2.0 * e);
        hess[(i, i)] = (up - 2.0 * f0 + down) / (e * e);
        for j in 0..i {
            let v = (at(&[(i, e), (j, e)])? - at(&[(i, e), (j, -e)])? - at(&[(i, -e), (j, e)])? + at(&[(i, -e), (j, -e)])?)
                / (4.0 * e * e);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((g, hess))
}

/// Newton iteration on the gradient of `f`, steps capped at one grid cell.
fn newton(f: &impl Fn(&[f64]) -> Result<f64>, mut x: Vec<f64>, cell: f64) -> Result<Option<(Vec<f64>, DMatrix<f64>)>> {
    for _ in 0..100 {
        let (g, hess) = derivatives(f, &x)?;
        let Some(step) = hess.clone().lu().solve(&(-&g)) else {
            return Ok(None);
        };
        let len = step.norm();
        if !len.is_finite() {
            return Ok(None);
        }
        let scale = if len > cell { cell / len } else { 1.0 };
        for (xi, s) in x.iter_mut().zip(step.iter()) {
            *xi = normalize(*xi + scale * s);
        }
        if len < 1e-10 {
            let (g, hess) = derivatives(f, &x)?;
            let gscale = hess.amax().max(1.0);
            return Ok((g.amax() <= 1e-6 * gscale).then_some((x, hess)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circula::CirculaParams;
    use crate::special::inverse_a;
    use crate::univariate::UnivariateCircular;

    fn setting(marginal_vm: bool, binding_vm: bool, d: usize, marginal_rho: f64) -> CbmdParams {
        let f = if marginal_vm {
            UnivariateCircular::von_mises(0.0, inverse_a(marginal_rho)).unwrap()
        } else {
            UnivariateCircular::wrapped_cauchy(0.0, marginal_rho).unwrap()
        };
        let g = 0.6f64.sqrt();
        let c = if binding_vm {
            CirculaParams::von_mises(vec![inverse_a(g); d], vec![1; d]).unwrap()
        } else {
            CirculaParams::wrapped_cauchy(vec![g; d], vec![1; d]).unwrap()
        };
        CbmdParams::new(vec![f; d], c).unwrap()
    }

    #[test]
    fn vm_vm_is_trimodal_in_two_dimensions() {
        let r = count_modes(&setting(true, true, 2, 0.9), 64).unwrap();
        assert_eq!(r.modes(), 3, "{r:?}");
        assert_eq!(r.alternating_sum(), 0, "{r:?}");
    }

    #[test]
    fn vm_vm_has_seven_modes_in_three_dimensions() {
        let r = count_modes(&setting(true, true, 3, 0.6), 64).unwrap();
        assert_eq!(r.modes(), 7, "{:?}", r.counts_by_index);
        assert_eq!(r.alternating_sum(), 0, "{:?}", r.counts_by_index);
    }

    #[test]
    fn wc_wc_is_unimodal() {
        let r = count_modes(&setting(false, false, 2, 0.9), 64).unwrap();
        assert_eq!(r.modes(), 1, "{r:?}");
        assert_eq!(r.alternating_sum(), 0);
    }

    #[test]
    fn independent_product_has_one_mode() {
        let p = CbmdParams::independent(vec![UnivariateCircular::von_mises(1.0, 2.0).unwrap(); 2]).unwrap();
        let r = count_modes(&p, 64).unwrap();
        assert_eq!(r.counts_by_index, vec![1, 2, 1]);
    }

    #[test]
    fn guards() {
        let p = setting(true, true, 2, 0.9);
        assert!(count_modes(&p, 32).is_err());
        let p4 = CbmdParams::independent(vec![UnivariateCircular::Uniform; 4]).unwrap();
        assert!(count_modes(&p4, 64).is_err());
        let flat = CbmdParams::independent(vec![UnivariateCircular::Uniform; 2]).unwrap();
        assert!(count_modes(&flat, 64).unwrap().plateau);
    }
}
