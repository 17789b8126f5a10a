//! Jammalamadaka–Sarma circular correlation and the rank-one off-diagonal
//! ("one factor") approximation `G(w) = wwᵀ − Diag(wwᵀ) + I`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::angle::resultant;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Symmetric matrix with unit diagonal and entries in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JsCorrelationMatrix(DMatrix<f64>);

impl JsCorrelationMatrix {
    /// Validates symmetry (to 1e-12), unit diagonal and entry bounds.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if d == 0 || m.ncols() != d {
            return Err(Error::param("matrix", "must be square and non-empty"));
        }
        for i in 0..d {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::param(format!("matrix[{i},{i}]"), "diagonal must be 1"));
            }
            for j in 0..d {
                let x = m[(i, j)];
                if !x.is_finite() || x.abs() > 1.0 + 1e-12 {
                    return Err(Error::param(format!("matrix[{i},{j}]"), "entries must lie in [-1, 1]"));
                }
                if (x - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::param(format!("matrix[{i},{j}]"), "matrix must be symmetric"));
                }
            }
        }
        Ok(JsCorrelationMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Sample JS correlation matrix, each coordinate centered at its (weighted)
/// circular mean.
pub fn js_correlation_matrix(data: &Dataset) -> Result<JsCorrelationMatrix> {
    let centers = (0..data.dim())
        .map(|j| resultant(data.rows().enumerate().map(|(i, r)| (r[j], data.weight(i)))).direction)
        .collect::<Vec<_>>();
    js_correlation_matrix_centered(data, &centers)
}

/// Sample JS correlation matrix around caller-supplied centers.
pub fn js_correlation_matrix_centered(data: &Dataset, centers: &[f64]) -> Result<JsCorrelationMatrix> {
    let d = data.dim();
    if centers.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: centers.len(),
        });
    }
    if data.len() < 3 {
        return Err(Error::Degenerate(format!(
            "the JS correlation needs at least 3 observations, got {}",
            data.len()
        )));
    }
    let mut s = DMatrix::<f64>::zeros(d, d);
    let mut z = vec![0.0; d];
    for (n, r) in data.rows().enumerate() {
        let w = data.weight(n);
        for j in 0..d {
            z[j] = (r[j] - centers[j]).sin();
        }
        for a in 0..d {
            for b in a..d {
                s[(a, b)] += w * z[a] * z[b];
            }
        }
    }
    let total = data.total_weight();
    for j in 0..d {
        if !(s[(j, j)] / total > 1e-12) {
            return Err(Error::Degenerate(format!("coordinate {j} has vanishing sine variance")));
        }
    }
    let mut m = DMatrix::<f64>::identity(d, d);
    for a in 0..d {
        for b in a + 1..d {
            let r = (s[(a, b)] / (s[(a, a)] * s[(b, b)]).sqrt()).clamp(-1.0, 1.0);
            m[(a, b)] = r;
            m[(b, a)] = r;
        }
    }
    Ok(JsCorrelationMatrix(m))
}

/// `G(w) = wwᵀ − Diag(wwᵀ) + I`.
pub fn g_matrix(w: &[f64]) -> DMatrix<f64> {
    let d = w.len();
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { w[i] * w[j] })
}

/// Population JS matrix of a circula with signs `q` and coupling strengths `ρ`.
pub fn circula_correlation(q: &[i8], rho: &[f64]) -> Result<JsCorrelationMatrix> {
    if q.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: rho.len(),
        });
    }
    let w: Vec<f64> = q.iter().zip(rho).map(|(&s, &r)| s as f64 * r).collect();
    JsCorrelationMatrix::from_matrix(g_matrix(&w))
}

/// `‖R − G(w)‖_F`.
pub fn factor_residual(r: &JsCorrelationMatrix, w: &[f64]) -> f64 {
    let d = r.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let e = r.get(i, j) - w[i] * w[j];
                acc += e * e;
            }
        }
    }
    acc.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Factor {
    pub w: Vec<f64>,
    /// `‖R − G(w)‖_F` at the returned `w`.
    pub residual: f64,
    /// The scale numerator was negative and `w` fell back to zero.
    pub negative_radicand: bool,
}

/// Leading eigenvector of `R − I` scaled by the closed-form optimal length.
pub fn rank1_heuristic(r: &JsCorrelationMatrix) -> Result<Rank1Factor> {
    let d = r.dim();
    let a = r.as_matrix() - DMatrix::<f64>::identity(d, d);
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigen-solver did not converge".into()))?;
    let top = eig.eigenvalues.imax();
    let v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let num = DVector::from_column_slice(&v).dot(&(&a * DVector::from_column_slice(&v)));
    let v2: f64 = v.iter().map(|x| x * x).sum();
    let v4: f64 = v.iter().map(|x| x.powi(4)).sum();
    let den = v2 * v2 - v4;
    let (scale, negative_radicand) = if num < 0.0 {
        (0.0, true)
    } else if den <= 1e-300 {
        (0.0, false)
    } else {
        ((num / den).sqrt(), false)
    };
    let mut w: Vec<f64> = v.iter().map(|x| (scale * x).clamp(-1.0, 1.0)).collect();
    canonical_sign(&mut w);
    Ok(Rank1Factor {
        residual: factor_residual(r, &w),
        w,
        negative_radicand,
    })
}

/// Rank-one off-diagonal approximation of `R`: the eigenvector heuristic
/// polished by box-constrained Levenberg–Marquardt on `Σ_{i<j}(R_ij − w_i w_j)²`.
pub fn rank1_factor_approx(r: &JsCorrelationMatrix) -> Result<Rank1Factor> {
    let start = rank1_heuristic(r)?;
    if start.negative_radicand || start.w.iter().all(|&x| x == 0.0) {
        return Ok(start);
    }
    let mut w = refine(r, start.w);
    canonical_sign(&mut w);
    Ok(Rank1Factor {
        residual: factor_residual(r, &w),
        w,
        negative_radicand: false,
    })
}

fn objective(r: &JsCorrelationMatrix, w: &[f64]) -> f64 {
    let d = w.len();
    let mut acc = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            let e = r.get(i, j) - w[i] * w[j];
            acc += e * e;
        }
    }
    acc
}

fn refine(r: &JsCorrelationMatrix, mut w: Vec<f64>) -> Vec<f64> {
    let d = w.len();
    let mut f = objective(r, &w);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        if f < 1e-32 {
            break;
        }
        let mut jtj = DMatrix::<f64>::zeros(d, d);
        let mut jtr = DVector::<f64>::zeros(d);
        for i in 0..d {
            for j in i + 1..d {
                let e = r.get(i, j) - w[i] * w[j];
                // ∂e/∂w_i = −w_j, ∂e/∂w_j = −w_i
                jtr[i] -= w[j] * e;
                jtr[j] -= w[i] * e;
                jtj[(i, i)] += w[j] * w[j];
                jtj[(j, j)] += w[i] * w[i];
                jtj[(i, j)] += w[i] * w[j];
                jtj[(j, i)] += w[i] * w[j];
            }
        }
        if jtr.amax() < 1e-17 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for k in 0..d {
                m[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&jtr));
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(x, s)| (x + s).clamp(-1.0, 1.0)).collect();
            let ft = objective(r, &trial);
            if ft < f {
                let rel = (f - ft) / f.max(1e-300);
                w = trial;
                f = ft;
                lambda = (lambda * 0.1).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    w
}

/// Makes the first entry with magnitude above 1e-12 non-negative.
fn canonical_sign(w: &mut [f64]) {
    if let Some(&x) = w.iter().find(|x| x.abs() > 1e-12) {
        if x < 0.0 {
            w.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Norm of the tangential part of `(1 − Σv⁴)Av + (vᵀAv)v³` at `v = w/‖w‖`,
/// `A = R − I`; zero exactly at first-order stationary directions of the
/// one-factor fit. Returns NaN when `w = 0`.
pub fn rank1_stationarity_residual(r: &JsCorrelationMatrix, w: &[f64]) -> f64 {
    let d = r.dim();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return f64::NAN;
    }
    let v = DVector::from_iterator(d, w.iter().map(|x| x / norm));
    let a = r.as_matrix() - DMatrix::<f64>::identity(d, d);
    let av = &a * &v;
    let vav = v.dot(&av);
    let v4: f64 = v.iter().map(|x| x.powi(4)).sum();
    let v3 = v.map(|x| x * x * x);
    let g = av * (1.0 - v4) + v3 * vav;
    let tangential = &g - &v * v.dot(&g);
    tangential.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbmd::CbmdParams;
    use crate::circula::CirculaParams;
    use crate::rng::RandomSource;
    use crate::univariate::UnivariateCircular;

    fn corr(m: DMatrix<f64>) -> JsCorrelationMatrix {
        JsCorrelationMatrix::from_matrix(m).unwrap()
    }

    fn random_correlation(rng: &mut RandomSource, d: usize) -> JsCorrelationMatrix {
        let b = DMatrix::from_fn(d, d + 2, |_, _| rng.standard_normal());
        let s = &b * b.transpose();
        corr(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt()
            }
        }))
    }

    #[test]
    fn js_examples() {
        let mut rng = RandomSource::new(51);
        let x: Vec<f64> = (0..500).map(|_| 1.0 + 0.8 * rng.standard_normal()).collect();
        let same = Dataset::from_rows(&x.iter().map(|&t| vec![t, t]).collect::<Vec<_>>()).unwrap();
        assert!((js_correlation_matrix(&same).unwrap().get(0, 1) - 1.0).abs() < 1e-12);
        let mirrored = Dataset::from_rows(&x.iter().map(|&t| vec![t, 4.0 - t]).collect::<Vec<_>>()).unwrap();
        assert!((js_correlation_matrix(&mirrored).unwrap().get(0, 1) + 1.0).abs() < 1e-12);
        let flat = Dataset::from_rows(&[vec![1.0, 0.2], vec![1.0, 0.4], vec![1.0, 0.9]]).unwrap();
        assert!(matches!(js_correlation_matrix(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn circula_space_js_matches_factor_structure() {
        let q = vec![1, -1, 1, -1];
        let rho = vec![0.9, 0.7, 0.5, 0.8];
        let c = CirculaParams::wrapped_cauchy(rho.clone(), q.clone()).unwrap();
        let mut rng = RandomSource::new(52);
        let n = 100_000;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| c.sample(&mut rng)).collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let got = js_correlation_matrix_centered(&data, &[std::f64::consts::PI; 4]).unwrap();
        let want = circula_correlation(&q, &rho).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((got.get(i, j) - want.get(i, j)).abs() < 4.0 / (n as f64).sqrt(), "({i},{j})");
            }
        }
    }

    #[test]
    fn zero_coupling_gives_zero_correlation() {
        let p = CbmdParams::independent(vec![
            UnivariateCircular::von_mises(1.0, 2.0).unwrap(),
            UnivariateCircular::wrapped_cauchy(3.0, 0.5).unwrap(),
            UnivariateCircular::von_mises(5.0, 0.5).unwrap(),
        ])
        .unwrap();
        let data = p.sample(&mut RandomSource::new(53), 100_000).unwrap();
        let m = js_correlation_matrix(&data).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(m.get(i, j).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn heuristic_examples() {
        let id = corr(DMatrix::identity(4, 4));
        let f = rank1_factor_approx(&id).unwrap();
        assert!(f.w.iter().all(|&x| x == 0.0));

        let wstar = [0.9, -0.5, 0.4];
        let g = corr(g_matrix(&wstar));
        let f = rank1_factor_approx(&g).unwrap();
        for (a, b) in f.w.iter().zip(wstar) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(f.residual < 1e-8);
        assert!(rank1_stationarity_residual(&g, &wstar) < 1e-10);
    }

    #[test]
    fn recovers_random_factors() {
        let mut rng = RandomSource::new(54);
        for _ in 0..200 {
            let d = 2 + rng.index(7);
            let wstar: Vec<f64> = (0..d).map(|_| -0.95 + 1.9 * rng.uniform()).collect();
            let g = corr(g_matrix(&wstar));
            let f = rank1_factor_approx(&g).unwrap();
            assert!(f.residual <= 1e-8, "{wstar:?} -> {:?} ({})", f.w, f.residual);
            if d > 2 {
                assert!(rank1_stationarity_residual(&g, &f.w) <= 1e-10);
            }
        }
    }

    #[test]
    fn beats_random_candidates() {
        let mut rng = RandomSource::new(55);
        let r = random_correlation(&mut rng, 5);
        let best = rank1_factor_approx(&r).unwrap();
        let a = r.as_matrix() - DMatrix::<f64>::identity(5, 5);
        for _ in 0..10_000 {
            let v = DVector::from_fn(5, |_, _| rng.standard_normal()).normalize();
            let num = v.dot(&(&a * &v)).max(0.0);
            let den = 1.0 - v.iter().map(|x| x.powi(4)).sum::<f64>();
            let s = (num / den).sqrt();
            let w: Vec<f64> = v.iter().map(|x| (s * x).clamp(-1.0, 1.0)).collect();
            assert!(best.residual <= factor_residual(&r, &w) + 1e-9);
        }
    }

    #[test]
    fn stationarity_examples() {
        // A with isotropic eigenvector (1, 1, -1, -1)/2
        let mut a = DMatrix::<f64>::from_element(4, 4, 0.1);
        for i in 0..4 {
            a[(i, i)] = 1.0;
        }
        let r = corr(a);
        assert!(rank1_stationarity_residual(&r, &[0.5, 0.5, -0.5, -0.5]) <= 1e-8);
        let mut rng = RandomSource::new(56);
        let r = random_correlation(&mut rng, 4);
        let w: Vec<f64> = (0..4).map(|_| rng.uniform() - 0.5).collect();
        assert!(rank1_stationarity_residual(&r, &w) > 0.0);
    }

    #[test]
    fn validates_matrices() {
        assert!(JsCorrelationMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(JsCorrelationMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0])).is_err());
        assert!(JsCorrelationMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.5, 1.0])).is_err());
    }
}
