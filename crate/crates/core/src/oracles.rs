//! Independent reference computations used to validate functional regression.
//!
//! * Weight-space Bayesian regression in the eigenbasis of the covariance
//!   operator, which must agree with the kernel formulation when no modes are
//!   dropped.
//! * The constrained least-squares problem whose optimality system has the
//!   posterior mean state as its solution.
//!
//! Both are dense and meant for coarse meshes only.

use std::sync::Arc;

use crate::covariance::CovOperator;
use crate::error::{Error, Result};
use crate::fem1d::Field;
use crate::linalg::{dot, sym_eigen, Cholesky, Lu, Mat};
use crate::problem::{AdjointSet, BkModel};
use crate::scalar::Real;

/// Eigenpairs of `k(ψ, v) = Λ m(ψ, v)` on the homogeneous-Dirichlet subspace,
/// normalized so that `m(ψ_i, ψ_j) = δ_ij`.
#[derive(Debug, Clone)]
pub struct EigenBasis<T> {
    pub psis: Vec<Field<T>>,
    /// Descending.
    pub lambdas: Vec<T>,
}

pub fn eigenbasis<T: Real>(op: &CovOperator<T>, n_modes: usize) -> Result<EigenBasis<T>> {
    let space = op.space();
    let ni = space.n_interior();
    if n_modes > ni {
        return Err(Error::invalid(format!(
            "requested {n_modes} modes but only {ni} interior dofs exist"
        )));
    }
    let k = op.matrix().principal(1, space.n_dof() - 1).to_dense();
    let chol_m = Cholesky::factor(&space.interior_mass().to_dense())?;

    // C = L⁻¹ K L⁻ᵀ with M = L Lᵀ
    let half: Vec<Vec<T>> = (0..ni).map(|j| chol_m.solve_lower(&k.column(j))).collect();
    let half = Mat::from_columns(&half, ni);
    let cols: Vec<Vec<T>> = (0..ni).map(|j| chol_m.solve_lower(half.row(j))).collect();
    let c = Mat::from_columns(&cols, ni);
    let (values, vectors) = sym_eigen(&c)?;

    let n = space.n_dof();
    let mut psis = Vec::with_capacity(n_modes);
    for mode in 0..n_modes {
        let interior = chol_m.solve_upper(&vectors.column(mode));
        let mut coeffs = vec![T::zero(); n];
        coeffs[1..n - 1].copy_from_slice(&interior);
        psis.push(Field::new(space.clone(), coeffs)?);
    }
    Ok(EigenBasis {
        psis,
        lambdas: values[..n_modes].to_vec(),
    })
}

/// Predictive mean and variance of `g(φ*)` for each test field.
#[derive(Debug, Clone)]
pub struct WeightSpacePrediction<T> {
    pub means: Vec<T>,
    pub variances: Vec<T>,
}

/// Bayesian linear regression on the basis weights, evaluated through the
/// `M' x M'` system `σ² I + Lᵀ Λ L` obtained from the Woodbury identity.
pub fn weight_space_predict<T: Real>(
    basis: &EigenBasis<T>,
    adjoints: &AdjointSet<T>,
    residual: &[T],
    sigma: T,
    test_fields: &[Field<T>],
) -> Result<WeightSpacePrediction<T>> {
    if residual.len() != adjoints.len() {
        return Err(Error::invalid("residual length must equal the number of adjoints"));
    }
    let Some(first) = basis.psis.first() else {
        return Err(Error::invalid("empty eigenbasis"));
    };
    let space = first.space().clone();
    let mass = space.mass();
    let m_psi: Vec<Vec<T>> = basis.psis.iter().map(|p| mass.matvec(p.coeffs())).collect();
    let functionals = |f: &Field<T>| -> Result<Vec<T>> {
        if !Arc::ptr_eq(f.space(), &space) {
            return Err(Error::invalid("field does not live on the eigenbasis space"));
        }
        Ok(m_psi.iter().map(|mp| dot(mp, f.coeffs())).collect())
    };

    // columns of L: l(φ_j); Λ-weighted copies alongside
    let l_cols = adjoints
        .fields()
        .iter()
        .map(&functionals)
        .collect::<Result<Vec<_>>>()?;
    let lam_l: Vec<Vec<T>> = l_cols
        .iter()
        .map(|c| c.iter().zip(&basis.lambdas).map(|(&a, &l)| a * l).collect())
        .collect();
    let m = adjoints.len();
    let mut s = Mat::from_fn(m, m, |i, j| dot(&l_cols[i], &lam_l[j]));
    s.symmetrize();
    s.add_to_diagonal(sigma * sigma);
    let (chol, _) = Cholesky::factor_with_jitter(&s)?;
    let weights = chol.solve(residual);

    let mut means = Vec::with_capacity(test_fields.len());
    let mut variances = Vec::with_capacity(test_fields.len());
    for f in test_fields {
        let l_star = functionals(f)?;
        let cross: Vec<T> = lam_l.iter().map(|c| dot(c, &l_star)).collect();
        let prior: T = l_star
            .iter()
            .zip(&basis.lambdas)
            .map(|(&a, &l)| a * a * l)
            .sum();
        let z = chol.solve_lower(&cross);
        means.push(dot(&cross, &weights));
        variances.push(prior - dot(&z, &z));
    }
    Ok(WeightSpacePrediction { means, variances })
}

/// Minimizer of `½ k(q,q) + ½ σ² |β|²` subject to `a(u, v) + k(q, v) = ℓ(v)`
/// and `u(x_i) + σ² β_i = d_i`.
#[derive(Debug, Clone)]
pub struct KktSolution<T> {
    pub u_o: Field<T>,
    pub q_o: Field<T>,
    pub beta_o: Vec<T>,
    /// Relative residuals of the five stationarity conditions with the
    /// multipliers set to `p = q`, `ϱ = β`.
    pub residuals: [T; 5],
}

/// Assembles and solves the optimality system
///
/// ```text
/// [ K_II  A_II  0   ] [q]   [l_I - A_IB u_B]
/// [ A_II  0     Cᵀ  ] [u] = [0             ]
/// [ 0     C     σ²I ] [β]   [d             ]
/// ```
///
/// where `C` selects the observation nodes. The adjoint states never appear:
/// the second row is the adjoint equation for `q = Σ β_i φ_i` itself.
pub fn kkt_solve<T: Real>(
    model: &BkModel<T>,
    op: &CovOperator<T>,
    points: &[T],
    data: &[T],
    sigma: T,
) -> Result<KktSolution<T>> {
    let space = model.space();
    if !Arc::ptr_eq(space, op.space()) {
        return Err(Error::invalid("model and covariance operator live on different spaces"));
    }
    if points.len() != data.len() {
        return Err(Error::invalid("one datum per observation point required"));
    }
    let n = space.n_dof();
    let ni = space.n_interior();
    let m = points.len();
    let obs = points
        .iter()
        .map(|&x| match space.mesh().node_index(x) {
            Some(k) if k > 0 && k < n - 1 => Ok(k - 1),
            _ => Err(Error::invalid(format!("{x} is not an interior mesh node"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let a = space.interior_stiffness();
    let k = op.matrix().principal(1, n - 1);
    let size = 2 * ni + m;
    let (q0, u0, b0) = (0, ni, 2 * ni);
    let mut sys = Mat::zeros(size, size);
    for i in 0..ni {
        for j in i.saturating_sub(1)..(i + 2).min(ni) {
            sys[(q0 + i, q0 + j)] = k.get(i, j);
            sys[(q0 + i, u0 + j)] = a.get(i, j);
            sys[(u0 + i, q0 + j)] = a.get(i, j);
        }
    }
    let s2 = sigma * sigma;
    for (r, &node) in obs.iter().enumerate() {
        sys[(u0 + node, b0 + r)] = T::one();
        sys[(b0 + r, u0 + node)] = T::one();
        sys[(b0 + r, b0 + r)] = s2;
    }

    let stiff = space.stiffness();
    let mut rhs = vec![T::zero(); size];
    rhs[q0..q0 + ni].copy_from_slice(&model.load()[1..ni + 1]);
    rhs[q0] -= stiff.get(1, 0) * model.b_left();
    rhs[q0 + ni - 1] -= stiff.get(n - 2, n - 1) * model.b_right();
    rhs[b0..].copy_from_slice(data);

    let sol = Lu::factor(&sys)?.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("optimality system produced non-finite values"));
    }

    let mut u = vec![T::zero(); n];
    u[0] = model.b_left();
    u[n - 1] = model.b_right();
    u[1..n - 1].copy_from_slice(&sol[u0..u0 + ni]);
    let mut q = vec![T::zero(); n];
    q[1..n - 1].copy_from_slice(&sol[q0..q0 + ni]);
    let beta = sol[b0..].to_vec();

    let residuals = kkt_residuals(model, op, &obs, data, sigma, &u, &q, &beta);
    Ok(KktSolution {
        u_o: Field::new(space.clone(), u)?,
        q_o: Field::new(space.clone(), q)?,
        beta_o: beta,
        residuals,
    })
}

#[allow(clippy::too_many_arguments)]
fn kkt_residuals<T: Real>(
    model: &BkModel<T>,
    op: &CovOperator<T>,
    obs: &[usize],
    data: &[T],
    sigma: T,
    u: &[T],
    q: &[T],
    beta: &[T],
) -> [T; 5] {
    let space = model.space();
    let n = space.n_dof();
    let kmat = op.matrix();
    let s2 = sigma * sigma;
    let rel = |r: T, scale: T| if scale > T::zero() { r / scale } else { r };
    let interior_max = |v: &[T]| v[1..n - 1].iter().fold(T::zero(), |m, &x| m.max(x.abs()));

    // multipliers from the eliminated conditions
    let p = q;
    let rho = beta;

    let kq = kmat.matvec(q);
    let kp = kmat.matvec(p);
    let diff: Vec<T> = kq.iter().zip(&kp).map(|(&a, &b)| a - b).collect();
    let r_a = rel(interior_max(&diff), interior_max(&kq));

    let mut ap = space.stiffness().matvec(p);
    for (&node, &r) in obs.iter().zip(rho) {
        ap[node + 1] += r;
    }
    let r_b = rel(interior_max(&ap), crate::linalg::max_abs(rho));

    let r_c = beta
        .iter()
        .zip(rho)
        .fold(T::zero(), |m, (&b, &r)| m.max((s2 * b - s2 * r).abs()));

    let au = space.stiffness().matvec(u);
    let state: Vec<T> = (0..n).map(|i| au[i] + kq[i] - model.load()[i]).collect();
    let r_d = rel(interior_max(&state), interior_max(model.load()));

    let r_e = obs
        .iter()
        .zip(data)
        .zip(beta)
        .fold(T::zero(), |m, ((&node, &d), &b)| m.max((u[node + 1] + s2 * b - d).abs()));
    let r_e = rel(r_e, crate::linalg::max_abs(data));
    [r_a, r_b, r_c, r_d, r_e]
}

/// `½ k(q, q) + ½ σ² |β|²`.
pub fn kkt_objective<T: Real>(op: &CovOperator<T>, q: &[T], beta: &[T], sigma: T) -> T {
    let half = T::lit(0.5);
    half * op.matrix().form(q, q) + half * sigma * sigma * dot(beta, beta)
}
