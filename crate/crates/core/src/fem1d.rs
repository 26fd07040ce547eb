//! Piecewise-linear finite elements on the interval (-1, 1).
//!
//! The basis is the nodal hat basis, so coefficient vectors are nodal values,
//! point evaluation at a node is a read-off, and stiffness and mass matrices
//! are tridiagonal and assembled exactly from the closed-form element
//! matrices. Dirichlet data is imposed by lifting: the two boundary values are
//! prescribed and only the interior block is solved.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Mat, SymTridiag, TridiagCholesky};
use crate::scalar::Real;

/// Uniform grid nodes closer than this to a required point are dropped.
pub const NODE_MERGE_TOL: f64 = 1e-12;

/// Strictly increasing node coordinates spanning `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    nodes: Vec<T>,
}

impl<T: Real> Mesh<T> {
    /// Uniform grid with `n_elements` cells, merged with `required_points`.
    ///
    /// Every required point becomes a node with its exact bit pattern; uniform
    /// nodes within [`NODE_MERGE_TOL`] of a required point are dropped so the
    /// mesh has no near-duplicate nodes.
    pub fn build(n_elements: usize, required_points: &[T]) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::invalid(format!(
                "mesh needs at least 2 elements, got {n_elements}"
            )));
        }
        let one = T::one();
        for &p in required_points {
            if !(p > -one && p < one) {
                return Err(Error::invalid(format!(
                    "required mesh point {p} is not strictly inside (-1, 1)"
                )));
            }
        }
        let mut required = required_points.to_vec();
        required.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
        if let Some(w) = required.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate required mesh point {}", w[0])));
        }

        let tol = T::lit(NODE_MERGE_TOL);
        let n = T::count(n_elements);
        let two = T::lit(2.0);
        let mut nodes: Vec<T> = (0..=n_elements)
            .map(|k| {
                if k == n_elements {
                    one
                } else {
                    -one + two * T::count(k) / n
                }
            })
            .filter(|&x| required.iter().all(|&p| (x - p).abs() >= tol))
            .collect();
        nodes.extend_from_slice(&required);
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
        Self::from_nodes(nodes)
    }

    /// Wraps an explicit node list after checking the mesh invariants.
    pub fn from_nodes(nodes: Vec<T>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::invalid(format!(
                "mesh needs at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] != -T::one() || nodes[nodes.len() - 1] != T::one() {
            return Err(Error::invalid("mesh must start at -1 and end at +1"));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "mesh nodes not strictly increasing near {}",
                w[0]
            )));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node bitwise equal to `x`, if any.
    pub fn node_index(&self, x: T) -> Option<usize> {
        let k = self.nodes.partition_point(|&n| n < x);
        (k < self.nodes.len() && self.nodes[k] == x).then_some(k)
    }

    /// Element `k` spanning `[nodes[k], nodes[k+1]]` that contains `x`.
    fn locate(&self, x: T) -> Option<usize> {
        let one = T::one();
        if !(x >= -one && x <= one) {
            return None;
        }
        let k = self.nodes.partition_point(|&n| n <= x);
        Some(k.saturating_sub(1).min(self.n_elements() - 1))
    }
}

/// Assembled linear finite-element space on a [`Mesh`].
#[derive(Debug, Clone)]
pub struct FeSpace<T> {
    mesh: Mesh<T>,
    stiffness: SymTridiag<T>,
    mass: SymTridiag<T>,
    interior_stiffness: TridiagCholesky<T>,
}

impl<T: Real> FeSpace<T> {
    /// Exact element-by-element assembly of stiffness and mass.
    pub fn assemble(mesh: Mesh<T>) -> Result<Arc<Self>> {
        let n = mesh.n_nodes();
        let (mut a_diag, mut a_off) = (vec![T::zero(); n], vec![T::zero(); n - 1]);
        let (mut m_diag, mut m_off) = (vec![T::zero(); n], vec![T::zero(); n - 1]);
        let six = T::lit(6.0);
        let two = T::lit(2.0);
        for (e, w) in mesh.nodes.windows(2).enumerate() {
            let h = w[1] - w[0];
            let k = T::one() / h;
            a_diag[e] += k;
            a_diag[e + 1] += k;
            a_off[e] -= k;
            let m = h / six;
            m_diag[e] += two * m;
            m_diag[e + 1] += two * m;
            m_off[e] += m;
        }
        let stiffness = SymTridiag::new(a_diag, a_off);
        let mass = SymTridiag::new(m_diag, m_off);
        let interior_stiffness = TridiagCholesky::factor(&stiffness.principal(1, n - 1))?;
        Ok(Arc::new(Self {
            mesh,
            stiffness,
            mass,
            interior_stiffness,
        }))
    }

    /// Builds the mesh and assembles in one step.
    pub fn uniform(n_elements: usize, required_points: &[T]) -> Result<Arc<Self>> {
        Self::assemble(Mesh::build(n_elements, required_points)?)
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn nodes(&self) -> &[T] {
        self.mesh.nodes()
    }

    pub fn n_dof(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn interior_dofs(&self) -> Range<usize> {
        1..self.n_dof() - 1
    }

    pub fn n_interior(&self) -> usize {
        self.n_dof() - 2
    }

    /// `A_ij = ∫ v_i' v_j'`.
    pub fn stiffness(&self) -> &SymTridiag<T> {
        &self.stiffness
    }

    /// `M_ij = ∫ v_i v_j`.
    pub fn mass(&self) -> &SymTridiag<T> {
        &self.mass
    }

    pub fn interior_stiffness(&self) -> SymTridiag<T> {
        self.stiffness.principal(1, self.n_dof() - 1)
    }

    pub fn interior_mass(&self) -> SymTridiag<T> {
        self.mass.principal(1, self.n_dof() - 1)
    }

    /// Solves `A_II x = b` for interior-sized `b`.
    pub fn solve_interior(&self, b: &[T]) -> Vec<T> {
        self.interior_stiffness.solve(b)
    }

    pub fn solve_interior_in_place(&self, b: &mut [T]) {
        self.interior_stiffness.solve_in_place(b);
    }

    /// Nodal values of the Dirichlet problem `a(u, v_i) = rhs_i` for interior
    /// `i`, with `u(-1) = b_left` and `u(1) = b_right`.
    pub fn solve_dirichlet_values(&self, rhs: &[T], b_left: T, b_right: T) -> Result<Vec<T>> {
        let n = self.n_dof();
        if rhs.len() != n {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, expected {n}",
                rhs.len()
            )));
        }
        if !b_left.is_finite() || !b_right.is_finite() {
            return Err(Error::invalid("Dirichlet data must be finite"));
        }
        let mut interior = rhs[1..n - 1].to_vec();
        interior[0] -= self.stiffness.get(1, 0) * b_left;
        let last = interior.len() - 1;
        interior[last] -= self.stiffness.get(n - 2, n - 1) * b_right;
        self.interior_stiffness.solve_in_place(&mut interior);
        if interior.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite Dirichlet solution"));
        }
        let mut u = Vec::with_capacity(n);
        u.push(b_left);
        u.extend(interior);
        u.push(b_right);
        Ok(u)
    }

    /// `sqrt(vᵀ M v)`, the L² norm of the piecewise-linear interpolant.
    pub fn l2_norm(&self, nodal_values: &[T]) -> T {
        assert_eq!(nodal_values.len(), self.n_dof(), "l2_norm dimension mismatch");
        self.mass.form(nodal_values, nodal_values).max(T::zero()).sqrt()
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.nodes().iter().map(|&x| f(x)).collect()
    }

    /// Sparse evaluation operator `V_ij = v_j(x_i)`.
    pub fn eval_matrix(&self, points: &[T]) -> Result<EvalMatrix<T>> {
        let rows = points
            .iter()
            .map(|&x| {
                let k = self.mesh.locate(x).ok_or_else(|| {
                    Error::invalid(format!("evaluation point {x} outside [-1, 1]"))
                })?;
                let (x0, x1) = (self.nodes()[k], self.nodes()[k + 1]);
                let right = if x == x0 { T::zero() } else { (x - x0) / (x1 - x0) };
                Ok([(k, T::one() - right), (k + 1, right)])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalMatrix {
            n_dof: self.n_dof(),
            rows,
        })
    }
}

/// Point-evaluation operator with at most two nonzeros per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix<T> {
    n_dof: usize,
    rows: Vec<[(usize, T); 2]>,
}

impl<T: Real> EvalMatrix<T> {
    pub fn n_points(&self) -> usize {
        self.rows.len()
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn row(&self, i: usize) -> [(usize, T); 2] {
        self.rows[i]
    }

    /// `V · coeffs`.
    pub fn apply(&self, coeffs: &[T]) -> Vec<T> {
        assert_eq!(coeffs.len(), self.n_dof, "eval dimension mismatch");
        self.rows
            .iter()
            .map(|r| r.iter().fold(T::zero(), |s, &(j, w)| s + w * coeffs[j]))
            .collect()
    }

    pub fn to_dense(&self) -> Mat<T> {
        let mut v = Mat::zeros(self.rows.len(), self.n_dof);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                v[(i, j)] += w;
            }
        }
        v
    }
}

/// A function in the finite-element space, stored by its nodal coefficients.
#[derive(Debug, Clone)]
pub struct Field<T> {
    space: Arc<FeSpace<T>>,
    coeffs: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(space: Arc<FeSpace<T>>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != space.n_dof() {
            return Err(Error::invalid(format!(
                "field has {} coefficients, space has {} dofs",
                coeffs.len(),
                space.n_dof()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("field coefficients must be finite"));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<FeSpace<T>>) -> Self {
        let n = space.n_dof();
        Self {
            space,
            coeffs: vec![T::zero(); n],
        }
    }

    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn same_space(&self, other: &Field<T>) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    /// Value at an arbitrary point of `[-1, 1]`.
    pub fn value_at(&self, x: T) -> Result<T> {
        Ok(self.space.eval_matrix(&[x])?.apply(&self.coeffs)[0])
    }

    pub fn l2_norm(&self) -> T {
        self.space.l2_norm(&self.coeffs)
    }

    /// `alpha · self + other`.
    pub fn axpy(&self, alpha: T, other: &Field<T>) -> Result<Field<T>> {
        if !self.same_space(other) {
            return Err(Error::invalid("fields live on different spaces"));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| alpha * a + b)
            .collect();
        Field::new(self.space.clone(), coeffs)
    }
}

/// Dirichlet solve returning a [`Field`]; see
/// [`FeSpace::solve_dirichlet_values`].
pub fn solve_dirichlet<T: Real>(
    space: &Arc<FeSpace<T>>,
    rhs: &[T],
    b_left: T,
    b_right: T,
) -> Result<Field<T>> {
    let values = space.solve_dirichlet_values(rhs, b_left, b_right)?;
    Field::new(space.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_node() -> Arc<FeSpace<f64>> {
        FeSpace::uniform(2, &[]).unwrap()
    }

    #[test]
    fn mesh_examples() {
        assert_eq!(Mesh::<f64>::build(2, &[]).unwrap().nodes(), &[-1.0, 0.0, 1.0]);
        assert_eq!(Mesh::build(2, &[0.5]).unwrap().nodes(), &[-1.0, 0.0, 0.5, 1.0]);
        let p = 0.414213562373095;
        let m = Mesh::build(4, &[-p, p]).unwrap();
        assert_eq!(m.n_nodes(), 7);
        assert!(m.node_index(p).is_some() && m.node_index(-p).is_some());
    }

    #[test]
    fn mesh_merges_near_duplicates() {
        let m = Mesh::build(4, &[0.5 + 1e-14]).unwrap();
        assert_eq!(m.n_nodes(), 5);
        assert_eq!(m.nodes()[3], 0.5 + 1e-14);
    }

    #[test]
    fn mesh_rejects_bad_points() {
        assert!(Mesh::<f64>::build(1, &[]).is_err());
        assert!(Mesh::build(4, &[1.0]).is_err());
        assert!(Mesh::build(4, &[-1.5]).is_err());
        assert!(Mesh::build(4, &[0.3, 0.3]).is_err());
        assert!(Mesh::build(4, &[f64::NAN]).is_err());
        assert!(Mesh::from_nodes(vec![-1.0, 0.2, 0.1, 1.0]).is_err());
    }

    #[test]
    fn assembly_examples() {
        let s = three_node();
        assert_relative_eq!(s.stiffness().get(1, 1), 2.0);
        assert_relative_eq!(s.mass().get(1, 1), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.mass().entry_sum(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_examples() {
        let s = three_node();
        let zero = solve_dirichlet(&s, &[0.0; 3], 0.0, 0.0).unwrap();
        assert!(zero.coeffs().iter().all(|&v| v == 0.0));
        let u = solve_dirichlet(&s, &[0.0, 1.0, 0.0], 0.0, 0.0).unwrap();
        assert_relative_eq!(u.coeffs()[1], 0.5, epsilon = 1e-15);
        let fine = FeSpace::uniform(7, &[0.123]).unwrap();
        let one = solve_dirichlet(&fine, &vec![0.0; fine.n_dof()], 1.0, 1.0).unwrap();
        for &v in one.coeffs() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-13);
        }
        assert!(solve_dirichlet(&s, &[0.0; 2], 0.0, 0.0).is_err());
    }

    #[test]
    fn norm_examples() {
        let s = FeSpace::uniform(5, &[0.3]).unwrap();
        assert_relative_eq!(s.l2_norm(&vec![1.0; s.n_dof()]), 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(s.l2_norm(&vec![0.0; s.n_dof()]), 0.0);
        let t = three_node();
        assert_relative_eq!(t.l2_norm(&[0.0, 1.0, 0.0]), (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn eval_examples() {
        let s = FeSpace::assemble(Mesh::from_nodes(vec![-1.0, 0.0, 0.5, 1.0]).unwrap()).unwrap();
        let v = s.eval_matrix(&[0.25, 0.0, -1.0, 1.0, 0.75]).unwrap().to_dense();
        assert_eq!(v.row(0), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(v.row(1), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(v.row(2), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(v.row(3), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(v.row(4), &[0.0, 0.0, 0.5, 0.5]);
        assert!(matches!(s.eval_matrix(&[1.5]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn field_checks() {
        let s = three_node();
        assert!(Field::new(s.clone(), vec![0.0; 2]).is_err());
        assert!(Field::new(s.clone(), vec![0.0, f64::INFINITY, 0.0]).is_err());
        let other = three_node();
        let a = Field::zeros(s);
        let b = Field::zeros(other);
        assert!(a.axpy(1.0, &b).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let s = FeSpace::<f32>::uniform(4, &[]).unwrap();
        let u = solve_dirichlet(&s, &[0.0; 5], 1.0, 1.0).unwrap();
        assert!(u.coeffs().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }
}
