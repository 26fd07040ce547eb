//! Standard Gaussian-process regression on pointwise data with a
//! squared-exponential kernel. Serves as the data-only baseline.

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Mat};
use crate::scalar::Real;

/// `κ(x, x') = ζ₁² exp(-(x - x')² / (2 ζ₂²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel<T> {
    zeta: [T; 2],
}

impl<T: Real> SeKernel<T> {
    /// Signal standard deviation `ζ₁` and length scale `ζ₂`, both positive.
    pub fn new(signal_std: T, length_scale: T) -> Result<Self> {
        if !(signal_std > T::zero() && length_scale > T::zero())
            || !signal_std.is_finite()
            || !length_scale.is_finite()
        {
            return Err(Error::invalid(format!(
                "squared-exponential parameters must be positive, got ({signal_std}, {length_scale})"
            )));
        }
        Ok(Self {
            zeta: [signal_std, length_scale],
        })
    }

    pub fn zeta(&self) -> [T; 2] {
        self.zeta
    }

    pub fn eval(&self, x: T, y: T) -> T {
        se_kernel(self, x, y)
    }

    pub fn matrix(&self, xs: &[T], ys: &[T]) -> Mat<T> {
        Mat::from_fn(xs.len(), ys.len(), |i, j| self.eval(xs[i], ys[j]))
    }
}

pub fn se_kernel<T: Real>(kernel: &SeKernel<T>, x: T, y: T) -> T {
    let [s, l] = kernel.zeta;
    let r = x - y;
    s * s * (-(r * r) / (T::lit(2.0) * l * l)).exp()
}

/// Predictive distribution at the test points.
#[derive(Debug, Clone)]
pub struct SgpPosterior<T> {
    pub mean: Vec<T>,
    /// Full predictive covariance; absent in diagonal-only mode.
    pub cov: Option<Mat<T>>,
    pub var: Vec<T>,
    pub alpha: Vec<T>,
    pub y_offset: T,
    pub jitter: T,
}

impl<T: Real> SgpPosterior<T> {
    pub fn std(&self) -> Vec<T> {
        self.var.iter().map(|v| v.max(T::zero()).sqrt()).collect()
    }
}

/// Training matrix `𝒦(X, X) + σ² I`.
pub fn training_matrix<T: Real>(kernel: &SeKernel<T>, train_x: &[T], sigma: T) -> Mat<T> {
    let mut c = kernel.matrix(train_x, train_x);
    c.add_to_diagonal(sigma * sigma);
    c
}

fn validate<T: Real>(train_x: &[T], train_y: &[T], sigma: T) -> Result<()> {
    if train_x.len() != train_y.len() {
        return Err(Error::invalid(format!(
            "{} training inputs but {} outputs",
            train_x.len(),
            train_y.len()
        )));
    }
    if train_x.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise level {sigma} must be >= 0")));
    }
    for (i, &a) in train_x.iter().enumerate() {
        if train_x[..i].contains(&a) {
            return Err(Error::invalid(format!("duplicate training input {a}")));
        }
    }
    Ok(())
}

/// Fits on `(train_x, train_y)` after subtracting the data mean and predicts
/// at `test_x`. With `full_cov = false` only the predictive variances are
/// computed.
pub fn fit_predict<T: Real>(
    kernel: &SeKernel<T>,
    train_x: &[T],
    train_y: &[T],
    sigma: T,
    test_x: &[T],
    full_cov: bool,
) -> Result<SgpPosterior<T>> {
    validate(train_x, train_y, sigma)?;
    let y_offset = train_y.iter().copied().sum::<T>() / T::count(train_y.len());
    let centred: Vec<T> = train_y.iter().map(|&y| y - y_offset).collect();
    let c = training_matrix(kernel, train_x, sigma);
    let (chol, jitter) = Cholesky::factor_with_jitter(&c).map_err(|e| {
        let [z1, z2] = kernel.zeta;
        Error::numerical(format!(
            "training matrix not positive definite for ζ = ({z1:e}, {z2:e}), M = {}: {e}",
            train_x.len()
        ))
    })?;
    let alpha = chol.solve(&centred);

    let cross = kernel.matrix(test_x, train_x);
    let mean = cross
        .matvec(&alpha)
        .into_iter()
        .map(|m| m + y_offset)
        .collect();
    let z: Vec<Vec<T>> = (0..test_x.len()).map(|i| chol.solve_lower(cross.row(i))).collect();
    // Variances always come from the direct formula so both modes report the
    // same numbers.
    let var: Vec<T> = test_x
        .iter()
        .zip(&z)
        .map(|(&x, zi)| kernel.eval(x, x) - dot(zi, zi))
        .collect();
    let cov = if full_cov {
        Some(gram(&posterior_factor(kernel, test_x, &z, &var)))
    } else {
        None
    };
    Ok(SgpPosterior {
        mean,
        cov,
        var,
        alpha,
        y_offset,
        jitter,
    })
}

/// Pivoted Cholesky factor `L` (one row per test point) of the predictive
/// covariance `κ(x, x') - zᵀz'`.
///
/// Forming that difference entrywise leaves rounding noise of order
/// `ε ζ₁²`, which for long length scales dwarfs the posterior variance and
/// shows up as negative eigenvalues. Returning `L Lᵀ` instead keeps the
/// covariance positive semidefinite by construction. Pivoting stops once
/// every remaining Schur-complement diagonal falls below a few hundred ulps
/// of `ζ₁²`, so dropped entries are of the same size as the rounding noise.
fn posterior_factor<T: Real>(kernel: &SeKernel<T>, test_x: &[T], z: &[Vec<T>], var: &[T]) -> Mat<T> {
    let n = test_x.len();
    let [s, _] = kernel.zeta;
    let tol = T::epsilon() * T::lit(256.0) * s * s;
    let mut resid = var.to_vec();
    let mut cols: Vec<Vec<T>> = Vec::new();
    let mut col = vec![T::zero(); n];
    while cols.len() < n {
        let (p, &d) = resid
            .iter()
            .enumerate()
            .fold((0, &T::neg_infinity()), |best, cur| if *cur.1 > *best.1 { cur } else { best });
        if !(d > tol) {
            break;
        }
        for (i, c) in col.iter_mut().enumerate() {
            *c = kernel.eval(test_x[i], test_x[p]) - dot(&z[i], &z[p]);
        }
        for prev in &cols {
            let w = prev[p];
            if w != T::zero() {
                for (c, &v) in col.iter_mut().zip(prev) {
                    *c -= w * v;
                }
            }
        }
        let root = d.sqrt();
        for (i, c) in col.iter_mut().enumerate() {
            *c /= root;
            resid[i] -= *c * *c;
        }
        col[p] = root;
        resid[p] = T::zero();
        cols.push(col.clone());
    }
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// `L Lᵀ` with both triangles filled from the same products. Each dot product
/// only runs over the overlap of the two rows' nonzero ranges, which matters
/// for short length scales where `L` is nearly diagonal.
fn gram<T: Real>(l: &Mat<T>) -> Mat<T> {
    let n = l.nrows();
    let support: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let row = l.row(i);
            match row.iter().position(|&v| v != T::zero()) {
                Some(a) => (a, row.iter().rposition(|&v| v != T::zero()).unwrap() + 1),
                None => (0, 0),
            }
        })
        .collect();
    let mut g = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let lo = support[i].0.max(support[j].0);
            let hi = support[i].1.min(support[j].1);
            if lo < hi {
                let v = dot(&l.row(i)[lo..hi], &l.row(j)[lo..hi]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_examples() {
        let k = SeKernel::new(0.7, 0.3).unwrap();
        assert_relative_eq!(k.eval(0.2, 0.2), 0.49, epsilon = 1e-15);
        let unit = SeKernel::new(1.0, 1.0).unwrap();
        assert_relative_eq!(unit.eval(0.0, 1.0), 0.6065307, epsilon = 1e-7);
        assert_eq!(unit.eval(0.0, 1e3), 0.0);
        assert!(SeKernel::new(0.0, 1.0).is_err());
        assert!(SeKernel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn interpolates_without_noise() {
        let x = [-1.0, -0.4, 0.1, 0.7, 1.0];
        let y = [0.3, -0.2, 0.5, 0.1, -0.4];
        let k = SeKernel::new(0.5, 0.3).unwrap();
        let p = fit_predict(&k, &x, &y, 0.0, &x, true).unwrap();
        for (m, t) in p.mean.iter().zip(&y) {
            assert_relative_eq!(m, t, epsilon = 1e-8);
        }
    }

    #[test]
    fn constant_data_gives_constant_mean() {
        let x = [-1.0, 0.0, 1.0];
        let k = SeKernel::new(1.0, 0.2).unwrap();
        let p = fit_predict(&k, &x, &[2.5; 3], 0.0, &[-0.7, 0.3, 0.9], false).unwrap();
        for m in p.mean {
            assert_relative_eq!(m, 2.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_bad_training_sets() {
        let k = SeKernel::new(1.0, 0.2).unwrap();
        assert!(fit_predict(&k, &[0.0, 0.0], &[1.0, 2.0], 0.0, &[0.0], false).is_err());
        assert!(fit_predict(&k, &[0.0], &[1.0, 2.0], 0.0, &[0.0], false).is_err());
        assert!(fit_predict::<f64>(&k, &[], &[], 0.0, &[0.0], false).is_err());
    }

    #[test]
    fn diagonal_mode_matches_full() {
        let x = [-1.0, -0.2, 0.5, 1.0];
        let y = [0.0, 0.4, -0.3, 0.1];
        let k = SeKernel::new(0.8, 0.4).unwrap();
        let t = [-0.9, 0.0, 0.75];
        let full = fit_predict(&k, &x, &y, 1e-2, &t, true).unwrap();
        let diag = fit_predict(&k, &x, &y, 1e-2, &t, false).unwrap();
        for (a, b) in full.var.iter().zip(&diag.var) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn factored_covariance_matches_direct_formula() {
        let x = [-1.0, -0.3, 0.2, 1.0];
        let y = [0.1, 0.4, -0.2, 0.3];
        let t: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        for zeta in [(0.5, 0.1), (0.09, 0.6), (0.05, 1e-6)] {
            let k = SeKernel::new(zeta.0, zeta.1).unwrap();
            let p = fit_predict(&k, &x, &y, 0.0, &t, true).unwrap();
            let cov = p.cov.unwrap();
            let c = training_matrix(&k, &x, 0.0);
            let chol = Cholesky::factor(&c).unwrap();
            for i in 0..t.len() {
                let zi = chol.solve_lower(k.matrix(&[t[i]], &x).row(0));
                for j in 0..t.len() {
                    let zj = chol.solve_lower(k.matrix(&[t[j]], &x).row(0));
                    let direct = k.eval(t[i], t[j]) - dot(&zi, &zj);
                    assert!((cov[(i, j)] - direct).abs() < 1e-12 * zeta.0 * zeta.0);
                }
            }
        }
    }
}
