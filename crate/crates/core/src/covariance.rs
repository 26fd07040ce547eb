//! Bilinear covariance operators `k(v, w; θ) = θ₁ ∫ v w + θ₂ ∫ v' w'`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem1d::{FeSpace, Field};
use crate::linalg::{Mat, SymTridiag};
use crate::problem::AdjointSet;
use crate::scalar::Real;

/// Two-parameter covariance operator on a finite-element space.
#[derive(Debug, Clone)]
pub struct CovOperator<T> {
    theta: [T; 2],
    space: Arc<FeSpace<T>>,
}

impl<T: Real> CovOperator<T> {
    /// Requires `θ₁, θ₂ ≥ 0` and `θ₁ + θ₂ > 0`.
    pub fn new(space: Arc<FeSpace<T>>, theta: [T; 2]) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite() || *t < T::zero()) {
            return Err(Error::invalid(format!(
                "covariance parameters must be finite and nonnegative, got ({}, {})",
                theta[0], theta[1]
            )));
        }
        if !(theta[0] + theta[1] > T::zero()) {
            return Err(Error::invalid("covariance operator is degenerate at θ = (0, 0)"));
        }
        Ok(Self { theta, space })
    }

    pub fn theta(&self) -> [T; 2] {
        self.theta
    }

    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }

    /// `θ₁ M + θ₂ A`, the operator on the nodal basis.
    pub fn matrix(&self) -> SymTridiag<T> {
        self.space
            .mass()
            .combine(self.theta[0], self.space.stiffness(), self.theta[1])
    }

    pub fn k_apply(&self, v: &Field<T>, w: &Field<T>) -> Result<T> {
        if !Arc::ptr_eq(v.space(), &self.space) || !Arc::ptr_eq(w.space(), &self.space) {
            return Err(Error::invalid("fields do not live on the operator's space"));
        }
        Ok(self.matrix().form(v.coeffs(), w.coeffs()))
    }

    /// Gram blocks against the adjoint states and the nodal basis.
    pub fn gram(&self, adjoints: &AdjointSet<T>) -> Result<GramBundle<T>> {
        if !Arc::ptr_eq(adjoints.space(), &self.space) {
            return Err(Error::invalid("adjoints do not live on the operator's space"));
        }
        let k_basis_basis = self.matrix();
        let n = self.space.n_dof();
        let m = adjoints.len();
        let columns: Vec<Vec<T>> = adjoints
            .fields()
            .iter()
            .map(|phi| k_basis_basis.matvec(phi.coeffs()))
            .collect();
        let k_basis_phi = Mat::from_columns(&columns, n);
        let mut k_phi_phi = Mat::from_fn(m, m, |i, j| {
            crate::linalg::dot(adjoints.fields()[i].coeffs(), &columns[j])
        });
        k_phi_phi.symmetrize();
        Ok(GramBundle {
            theta: self.theta,
            k_phi_phi,
            k_basis_phi,
            k_basis_basis,
        })
    }
}

/// Covariance blocks needed by functional regression.
#[derive(Debug, Clone)]
pub struct GramBundle<T> {
    pub theta: [T; 2],
    /// `k(φ_i, φ_j)`.
    pub k_phi_phi: Mat<T>,
    /// `k(v_j, φ_i)`, one column per adjoint.
    pub k_basis_phi: Mat<T>,
    /// `k(v_i, v_j) = θ₁ M + θ₂ A`.
    pub k_basis_basis: SymTridiag<T>,
}

/// The θ-independent pieces `ΦᵀMΦ` and `ΦᵀAΦ`, so that
/// `K(Φ,Φ; θ) = θ₁ ΦᵀMΦ + θ₂ ΦᵀAΦ`.
#[derive(Debug, Clone)]
pub struct GramComponents<T> {
    pub mass: Mat<T>,
    pub stiffness: Mat<T>,
}

impl<T: Real> GramComponents<T> {
    pub fn new(adjoints: &AdjointSet<T>) -> Self {
        let space = adjoints.space();
        let fields = adjoints.fields();
        let m_phi: Vec<Vec<T>> = fields.iter().map(|f| space.mass().matvec(f.coeffs())).collect();
        let a_phi: Vec<Vec<T>> = fields
            .iter()
            .map(|f| space.stiffness().matvec(f.coeffs()))
            .collect();
        let n = fields.len();
        let mut mass = Mat::from_fn(n, n, |i, j| crate::linalg::dot(fields[i].coeffs(), &m_phi[j]));
        let mut stiffness =
            Mat::from_fn(n, n, |i, j| crate::linalg::dot(fields[i].coeffs(), &a_phi[j]));
        mass.symmetrize();
        stiffness.symmetrize();
        Self { mass, stiffness }
    }

    pub fn at(&self, theta: [T; 2]) -> Mat<T> {
        self.mass.scale(theta[0]).add(&self.stiffness.scale(theta[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::solve_adjoints;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_theta() {
        let s = FeSpace::<f64>::uniform(4, &[]).unwrap();
        assert!(CovOperator::new(s.clone(), [0.0, 0.0]).is_err());
        assert!(CovOperator::new(s.clone(), [-1.0, 1.0]).is_err());
        assert!(CovOperator::new(s, [f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn k_apply_examples() {
        let s = FeSpace::<f64>::uniform(16, &[]).unwrap();
        let one = Field::new(s.clone(), vec![1.0; s.n_dof()]).unwrap();
        let mass = CovOperator::new(s.clone(), [1.0, 0.0]).unwrap();
        assert_relative_eq!(mass.k_apply(&one, &one).unwrap(), 2.0, epsilon = 1e-14);

        let adj = solve_adjoints(&s, &[0.0]).unwrap();
        let phi = &adj.fields()[0];
        let stiff = CovOperator::new(s.clone(), [0.0, 1.0]).unwrap();
        assert_relative_eq!(stiff.k_apply(phi, phi).unwrap(), 0.5, epsilon = 1e-14);

        let mixed = CovOperator::new(s.clone(), [2.0, 3.0]).unwrap();
        let expect = 2.0 * mass.k_apply(phi, &one).unwrap() + 3.0 * stiff.k_apply(phi, &one).unwrap();
        assert_relative_eq!(mixed.k_apply(phi, &one).unwrap(), expect, epsilon = 1e-14);

        let other = FeSpace::<f64>::uniform(16, &[]).unwrap();
        let stranger = Field::zeros(other);
        assert!(mass.k_apply(&one, &stranger).is_err());
    }

    #[test]
    fn gram_examples() {
        let s = FeSpace::<f64>::uniform(16, &[]).unwrap();
        let adj = solve_adjoints(&s, &[0.0]).unwrap();
        let g = CovOperator::new(s.clone(), [0.0, 1.0]).unwrap().gram(&adj).unwrap();
        assert_relative_eq!(g.k_phi_phi[(0, 0)], 0.5, epsilon = 1e-14);

        let none = solve_adjoints(&s, &[]).unwrap();
        let g = CovOperator::new(s.clone(), [1.0, 1.0]).unwrap().gram(&none).unwrap();
        assert_eq!(g.k_phi_phi.nrows(), 0);
        assert_eq!(g.k_basis_phi.ncols(), 0);

        let p = 2f64.sqrt() - 1.0;
        let s = FeSpace::<f64>::uniform(32, &[-p, p]).unwrap();
        let adj = solve_adjoints(&s, &[-p, p]).unwrap();
        let g = CovOperator::new(s.clone(), [1.0, 0.0]).unwrap().gram(&adj).unwrap();
        assert_eq!(g.k_phi_phi[(0, 1)], g.k_phi_phi[(1, 0)]);
        assert_relative_eq!(g.k_phi_phi[(0, 0)], g.k_phi_phi[(1, 1)], max_relative = 1e-12);
    }

    #[test]
    fn components_match_gram() {
        let s = FeSpace::<f64>::uniform(20, &[-0.3, 0.45]).unwrap();
        let adj = solve_adjoints(&s, &[-0.3, 0.45]).unwrap();
        let comps = GramComponents::new(&adj);
        let g = CovOperator::new(s, [0.7, 0.2]).unwrap().gram(&adj).unwrap();
        assert!(comps.at([0.7, 0.2]).max_abs_diff(&g.k_phi_phi) < 1e-14);
    }
}
