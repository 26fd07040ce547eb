//! Functional Gaussian-process regression and the posterior of the state.
//!
//! The unknown model error is a Gaussian functional `g` with covariance
//! operator `k`. Observing `d - s = g(Φ) + noise` through the adjoint states
//! gives a Gaussian posterior for `g` on the finite-element basis, which is
//! pushed through the inverse stiffness operator to obtain the posterior mean
//! and covariance of the state.

use std::sync::Arc;

use crate::covariance::{CovOperator, GramBundle};
use crate::error::{Error, Result};
use crate::fem1d::{EvalMatrix, FeSpace};
use crate::linalg::{dot, Cholesky, Mat};
use crate::problem::{AdjointSet, BkModel};
use crate::scalar::Real;

/// Solution of the training system `D β = d - s`, `D = K(Φ,Φ) + σ² I`.
#[derive(Debug, Clone)]
pub struct FgpFit<T> {
    pub gram: GramBundle<T>,
    /// `K(Φ,Φ) + σ² I` before any jitter.
    pub d: Mat<T>,
    pub chol_d: Cholesky<T>,
    /// Diagonal shift added to `d` to make it factorizable (usually zero).
    pub jitter: T,
    pub beta: Vec<T>,
    pub residual: Vec<T>,
    pub sigma: T,
    /// Adjoint coefficient vectors as columns (`n_dof x M'`).
    pub phi: Mat<T>,
    /// Mesh nodes of the observation points.
    pub obs_nodes: Vec<usize>,
}

impl<T: Real> FgpFit<T> {
    /// Noise variance as actually used in `D`, jitter included.
    pub fn effective_noise(&self) -> T {
        self.sigma * self.sigma + self.jitter
    }
}

pub fn fit<T: Real>(
    op: &CovOperator<T>,
    adjoints: &AdjointSet<T>,
    residual: &[T],
    sigma: T,
) -> Result<FgpFit<T>> {
    if residual.len() != adjoints.len() {
        return Err(Error::invalid(format!(
            "residual has length {}, expected one entry per adjoint ({})",
            residual.len(),
            adjoints.len()
        )));
    }
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise level {sigma} must be >= 0")));
    }
    let gram = op.gram(adjoints)?;
    let mut d = gram.k_phi_phi.clone();
    d.add_to_diagonal(sigma * sigma);
    let (chol_d, jitter) = Cholesky::factor_with_jitter(&d).map_err(|e| {
        let [t1, t2] = op.theta();
        Error::numerical(format!(
            "training matrix not positive definite for θ = ({t1:e}, {t2:e}), M' = {}: {e}",
            adjoints.len()
        ))
    })?;
    let beta = chol_d.solve(residual);
    let columns: Vec<Vec<T>> = adjoints.fields().iter().map(|f| f.coeffs().to_vec()).collect();
    let phi = Mat::from_columns(&columns, op.space().n_dof());
    Ok(FgpFit {
        gram,
        d,
        chol_d,
        jitter,
        beta,
        residual: residual.to_vec(),
        sigma,
        phi,
        obs_nodes: adjoints.nodes().to_vec(),
    })
}

/// Posterior of the functional on the nodal basis, `g* = g([v₁, …, v_J])`.
#[derive(Debug, Clone)]
pub struct FunctionalPosterior<T> {
    /// `K(Φ*, Φ) β`.
    pub gbar: Vec<T>,
    /// `K(Φ*, Φ*) - K(Φ*, Φ) D⁻¹ K(Φ, Φ*)`.
    pub cov_g: Mat<T>,
}

/// Rows of `L⁻¹ K(Φ, v_j)` for every basis function `v_j`.
fn whitened_cross<T: Real>(fit: &FgpFit<T>) -> Vec<Vec<T>> {
    let kbp = &fit.gram.k_basis_phi;
    (0..kbp.nrows()).map(|j| fit.chol_d.solve_lower(kbp.row(j))).collect()
}

pub fn posterior_functional<T: Real>(fit: &FgpFit<T>) -> FunctionalPosterior<T> {
    let gbar = fit.gram.k_basis_phi.matvec(&fit.beta);
    let z = whitened_cross(fit);
    let kbb = &fit.gram.k_basis_basis;
    let n = z.len();
    let mut cov_g = Mat::from_fn(n, n, |i, j| kbb.get(i, j) - dot(&z[i], &z[j]));
    cov_g.symmetrize();
    FunctionalPosterior { gbar, cov_g }
}

/// Posterior of the state at a set of evaluation points.
#[derive(Debug, Clone)]
pub struct FgpPosterior<T> {
    space: Arc<FeSpace<T>>,
    /// Posterior mean at every mesh node.
    pub mean_nodal: Vec<T>,
    pub points: Vec<T>,
    /// Posterior mean at `points`.
    pub mean: Vec<T>,
    /// Posterior covariance at `points`; absent in diagonal-only mode.
    pub cov: Option<Mat<T>>,
    /// Pointwise posterior standard deviation at `points`.
    pub std: Vec<T>,
    pub gbar: Vec<T>,
}

impl<T: Real> FgpPosterior<T> {
    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }
}

/// Posterior mean `U (l - ḡ*)` plus the boundary lift.
fn posterior_mean_nodal<T: Real>(model: &BkModel<T>, gbar: &[T]) -> Result<Vec<T>> {
    let rhs: Vec<T> = model.load().iter().zip(gbar).map(|(&l, &g)| l - g).collect();
    model
        .space()
        .solve_dirichlet_values(&rhs, model.b_left(), model.b_right())
}

fn check_model<T: Real>(model: &BkModel<T>, n: usize) -> Result<()> {
    if model.space().n_dof() != n {
        return Err(Error::invalid(
            "functional posterior and model live on different spaces",
        ));
    }
    Ok(())
}

/// Full posterior: mean `U (l - ḡ*)` and covariance `U cov(g*) Uᵀ` with
/// `U = V A⁻¹` and zero boundary rows.
///
/// The covariance is formed from the prior state covariance
/// `H = A⁻¹ K A⁻¹` in Joseph form `Q H Qᵀ + σ² F ᵀF`, `Q = I - H_{:,o} D⁻¹ E_oᵀ`,
/// so rows belonging to noise-free observations come out zero to working
/// precision instead of as a difference of two equal numbers.
pub fn posterior_state<T: Real>(
    model: &BkModel<T>,
    fit: &FgpFit<T>,
    eval_points: &[T],
) -> Result<FgpPosterior<T>> {
    let space = model.space();
    let n = space.n_dof();
    let gbar = fit.gram.k_basis_phi.matvec(&fit.beta);
    check_model(model, gbar.len())?;
    let eval = space.eval_matrix(eval_points)?;
    let mean_nodal = posterior_mean_nodal(model, &gbar)?;

    // H = A_II⁻¹ K_II A_II⁻¹ via two sweeps of row solves (both symmetric)
    let ni = space.n_interior();
    let k = fit.gram.k_basis_basis.principal(1, n - 1);
    let mut h = Mat::from_fn(ni, ni, |i, j| k.get(i, j));
    for i in 0..ni {
        space.solve_interior_in_place(h.row_mut(i));
    }
    let mut h = h.transpose();
    for i in 0..ni {
        space.solve_interior_in_place(h.row_mut(i));
    }
    h.symmetrize();

    // F = D⁻¹ H_{o,:}, stored as ni rows of length M'
    let obs: Vec<usize> = fit.obs_nodes.iter().map(|&k| k - 1).collect();
    let f: Vec<Vec<T>> = (0..ni)
        .map(|j| {
            let col: Vec<T> = obs.iter().map(|&o| h[(o, j)]).collect();
            fit.chol_d.solve(&col)
        })
        .collect();
    let project = |y: &mut Mat<T>| {
        let cols: Vec<Vec<T>> = (0..ni).map(|i| obs.iter().map(|&o| y[(i, o)]).collect()).collect();
        for i in 0..ni {
            let row = y.row_mut(i);
            for (j, fj) in f.iter().enumerate() {
                row[j] -= dot(&cols[i], fj);
            }
        }
    };
    project(&mut h);
    project(&mut h);
    let s2 = fit.effective_noise();
    if s2 > T::zero() {
        for i in 0..ni {
            for j in 0..ni {
                h[(i, j)] += s2 * dot(&f[i], &f[j]);
            }
        }
    }
    h.symmetrize();

    let mut cov_nodal = Mat::zeros(n, n);
    for i in 0..ni {
        cov_nodal.row_mut(i + 1)[1..n - 1].copy_from_slice(h.row(i));
    }
    drop(h);

    let cov = sandwich(&eval, &cov_nodal);
    let std = cov.diagonal().into_iter().map(|v| v.max(T::zero()).sqrt()).collect();
    Ok(FgpPosterior {
        space: space.clone(),
        mean: eval.apply(&mean_nodal),
        mean_nodal,
        points: eval_points.to_vec(),
        cov: Some(cov),
        std,
        gbar,
    })
}

/// `V C Vᵀ` for a sparse evaluation operator.
fn sandwich<T: Real>(eval: &EvalMatrix<T>, c: &Mat<T>) -> Mat<T> {
    let p = eval.n_points();
    let mut out = Mat::from_fn(p, p, |a, b| {
        let mut s = T::zero();
        for &(i, wi) in &eval.row(a) {
            if wi == T::zero() {
                continue;
            }
            for &(j, wj) in &eval.row(b) {
                if wj != T::zero() {
                    s += wi * wj * c[(i, j)];
                }
            }
        }
        s
    });
    out.symmetrize();
    out
}

/// Posterior mean and pointwise variance without forming any dense
/// covariance matrix; memory is linear in the number of nodes.
///
/// For each point, with `w = A⁻¹ Vᵀ e_p` and `a = D⁻¹ Φᵀ K w`, the variance is
/// `rᵀ K r + σ² |a|²` with `r = w - Φ a`.
pub fn posterior_state_diagonal<T: Real>(
    model: &BkModel<T>,
    fit: &FgpFit<T>,
    eval_points: &[T],
) -> Result<FgpPosterior<T>> {
    let space = model.space();
    let n = space.n_dof();
    let gbar = fit.gram.k_basis_phi.matvec(&fit.beta);
    check_model(model, gbar.len())?;
    let eval = space.eval_matrix(eval_points)?;
    let mean_nodal = posterior_mean_nodal(model, &gbar)?;
    let kbb = &fit.gram.k_basis_basis;
    let kbp = &fit.gram.k_basis_phi;
    let phi = &fit.phi;
    let m = kbp.ncols();
    let s2 = fit.effective_noise();

    let mut w = vec![T::zero(); n];
    let std = (0..eval.n_points())
        .map(|p| {
            w.iter_mut().for_each(|v| *v = T::zero());
            for &(j, wj) in &eval.row(p) {
                if j > 0 && j < n - 1 {
                    w[j] += wj;
                }
            }
            space.solve_interior_in_place(&mut w[1..n - 1]);
            let cross: Vec<T> = (0..m)
                .map(|c| (1..n - 1).fold(T::zero(), |s, k| s + kbp[(k, c)] * w[k]))
                .collect();
            let a = fit.chol_d.solve(&cross);
            let r: Vec<T> = (0..n).map(|k| w[k] - dot(phi.row(k), &a)).collect();
            (kbb.form(&r, &r) + s2 * dot(&a, &a)).max(T::zero()).sqrt()
        })
        .collect();
    Ok(FgpPosterior {
        space: space.clone(),
        mean: eval.apply(&mean_nodal),
        mean_nodal,
        points: eval_points.to_vec(),
        cov: None,
        std,
        gbar,
    })
}

/// Mean outputs `s̄*_i = ū*(x_i)` at mesh nodes.
pub fn predicted_outputs<T: Real>(posterior: &FgpPosterior<T>, points: &[T]) -> Result<Vec<T>> {
    let mesh = posterior.space.mesh();
    points
        .iter()
        .map(|&x| {
            mesh.node_index(x)
                .map(|k| posterior.mean_nodal[k])
                .ok_or_else(|| Error::invalid(format!("output point {x} is not a mesh node")))
        })
        .collect()
}

/// Comparison of the data misfit `d - s̄*` with the noise term `σ² β`.
#[derive(Debug, Clone)]
pub struct OutputDiagnostic<T> {
    pub predicted: Vec<T>,
    pub misfit: Vec<T>,
    pub noise_term: Vec<T>,
}

pub fn output_diagnostic<T: Real>(
    posterior: &FgpPosterior<T>,
    fit: &FgpFit<T>,
    points: &[T],
    data: &[T],
) -> Result<OutputDiagnostic<T>> {
    if points.len() != data.len() || data.len() != fit.beta.len() {
        return Err(Error::invalid("points, data and β must have equal length"));
    }
    let predicted = predicted_outputs(posterior, points)?;
    let misfit = data.iter().zip(&predicted).map(|(&d, &s)| d - s).collect();
    let s2 = fit.sigma * fit.sigma;
    let noise_term = fit.beta.iter().map(|&b| s2 * b).collect();
    Ok(OutputDiagnostic {
        predicted,
        misfit,
        noise_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::solve_adjoints;
    use approx::assert_relative_eq;

    fn setup(points: &[f64]) -> (Arc<FeSpace<f64>>, AdjointSet<f64>) {
        let s = FeSpace::uniform(16, points).unwrap();
        let a = solve_adjoints(&s, points).unwrap();
        (s, a)
    }

    #[test]
    fn zero_residual_gives_zero_beta() {
        let (s, adj) = setup(&[-0.3, 0.2]);
        let op = CovOperator::new(s, [1.0, 0.5]).unwrap();
        let f = fit(&op, &adj, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(f.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn single_observation_beta() {
        let (s, adj) = setup(&[0.0]);
        let op = CovOperator::new(s, [0.0, 1.0]).unwrap();
        let f = fit(&op, &adj, &[0.3], 0.0).unwrap();
        assert_relative_eq!(f.beta[0], 0.6, epsilon = 1e-13);
        let f = fit(&op, &adj, &[0.3], 1e6).unwrap();
        assert!(f.beta[0].abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let (s, adj) = setup(&[0.0]);
        let op = CovOperator::new(s, [0.0, 1.0]).unwrap();
        assert!(fit(&op, &adj, &[0.3, 0.1], 0.0).is_err());
        assert!(fit(&op, &adj, &[0.3], -1.0).is_err());
    }

    #[test]
    fn prior_recovery_when_beta_zero() {
        let (s, adj) = setup(&[-0.5, 0.25]);
        let op = CovOperator::new(s, [0.4, 0.1]).unwrap();
        let f = fit(&op, &adj, &[0.0, 0.0], 1e3).unwrap();
        let fp = posterior_functional(&f);
        assert!(fp.gbar.iter().all(|&g| g == 0.0));
        // σ large: cov_g ≈ K_basis_basis
        let prior = f.gram.k_basis_basis.to_dense();
        assert!(fp.cov_g.max_abs_diff(&prior) < 1e-6 * prior.max_abs());
    }

    #[test]
    fn observed_direction_has_no_variance() {
        let (s, adj) = setup(&[0.25]);
        let op = CovOperator::new(s, [1.0, 0.3]).unwrap();
        let f = fit(&op, &adj, &[0.1], 0.0).unwrap();
        let fp = posterior_functional(&f);
        let phi = adj.fields()[0].coeffs();
        let q = dot(phi, &fp.cov_g.matvec(phi));
        assert!(q.abs() < 1e-10, "quadratic form {q}");
    }

    #[test]
    fn diagonal_mode_matches_full() {
        let pts = [-0.5, 0.1, 0.6];
        let (s, adj) = setup(&pts);
        let model = BkModel::from_source_fn(s.clone(), |x: f64| x.sin(), 0.1, -0.2).unwrap();
        let op = CovOperator::new(s.clone(), [0.3, 0.05]).unwrap();
        let f = fit(&op, &adj, &[0.01, -0.02, 0.03], 1e-3).unwrap();
        let eval = [-1.0, -0.77, 0.1, 0.33, 1.0];
        let full = posterior_state(&model, &f, &eval).unwrap();
        let diag = posterior_state_diagonal(&model, &f, &eval).unwrap();
        for (a, b) in full.std.iter().zip(&diag.std) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(full.mean, diag.mean);
        assert_eq!(full.std[0], 0.0);
        assert_eq!(full.std[4], 0.0);
    }

    #[test]
    fn state_covariance_is_pushforward_of_functional_covariance() {
        let pts = [-0.4, 0.2, 0.7];
        let (s, adj) = setup(&pts);
        let model = BkModel::from_source_fn(s.clone(), |x: f64| x.cos(), 0.0, 0.3).unwrap();
        let op = CovOperator::new(s.clone(), [0.2, 0.07]).unwrap();
        for sigma in [0.0, 0.05] {
            let f = fit(&op, &adj, &[0.02, 0.01, -0.03], sigma).unwrap();
            let cov_g = posterior_functional(&f).cov_g;
            // dense A_II⁻¹ cov_g,II A_II⁻¹ as the reference
            let n = s.n_dof();
            let a = Mat::from_fn(n - 2, n - 2, |i, j| s.stiffness().get(i + 1, j + 1));
            let lu = crate::linalg::Lu::factor(&a).unwrap();
            let c = Mat::from_fn(n - 2, n - 2, |i, j| cov_g[(i + 1, j + 1)]);
            let left = Mat::from_columns(&(0..n - 2).map(|j| lu.solve(&c.column(j))).collect::<Vec<_>>(), n - 2);
            let reference = Mat::from_rows(&(0..n - 2).map(|i| lu.solve(left.row(i))).collect::<Vec<_>>());
            let cov = posterior_state(&model, &f, s.nodes()).unwrap().cov.unwrap();
            let inner = Mat::from_fn(n - 2, n - 2, |i, j| cov[(i + 1, j + 1)]);
            assert!(inner.max_abs_diff(&reference) < 1e-12 * reference.max_abs());
        }
    }
}
