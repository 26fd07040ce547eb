//! Best-knowledge model, synthetic truth, observations and adjoint states.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem1d::{solve_dirichlet, FeSpace, Field};
use crate::scalar::Real;

/// Scaled Chebyshev points whose first and last entries are exactly ∓1.
///
/// `x_i = -cos((2i-1)π/(2M)) / cos(π/(2M))` for `i = 1..=M`.
pub fn chebyshev_points<T: Real>(m: usize) -> Result<Vec<T>> {
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 Chebyshev points, got {m}")));
    }
    let pi = T::lit(PI);
    let two_m = T::count(2 * m);
    let denom = (pi / two_m).cos();
    // left half from the formula, right half mirrored so the set is exactly
    // antisymmetric; the middle point of an odd set is zero
    let mut x = vec![T::zero(); m];
    for i in 1..=m / 2 {
        let v = -(T::count(2 * i - 1) * pi / two_m).cos() / denom;
        x[i - 1] = v;
        x[m - i] = -v;
    }
    x[0] = -T::one();
    x[m - 1] = T::one();
    Ok(x)
}

/// Synthetic true state `sin(πx)/π² + sin(4πx)/(4π²)`.
pub fn true_state<T: Real>(x: T) -> T {
    let pi = T::lit(PI);
    let four = T::lit(4.0);
    (pi * x).sin() / (pi * pi) + (four * pi * x).sin() / (four * pi * pi)
}

/// Synthetic true source `sin(πx) + 4 sin(4πx)`, so that `-u_true'' = f_true`.
pub fn true_source<T: Real>(x: T) -> T {
    let pi = T::lit(PI);
    let four = T::lit(4.0);
    (pi * x).sin() + four * (four * pi * x).sin()
}

/// Source of the best-knowledge model in the heat benchmark: `4 sin(4πx)`.
pub fn benchmark_source<T: Real>(x: T) -> T {
    let four = T::lit(4.0);
    four * (four * T::lit(PI) * x).sin()
}

/// Best-knowledge model `a(u, v) = ℓ(v)` with Dirichlet data.
#[derive(Debug, Clone)]
pub struct BkModel<T> {
    space: Arc<FeSpace<T>>,
    source: Vec<T>,
    load: Vec<T>,
    b_left: T,
    b_right: T,
}

impl<T: Real> BkModel<T> {
    /// Model with nodal source values; the load is `l = M · source`.
    pub fn new(space: Arc<FeSpace<T>>, source: Vec<T>, b_left: T, b_right: T) -> Result<Self> {
        if source.len() != space.n_dof() {
            return Err(Error::invalid(format!(
                "source has {} values, space has {} dofs",
                source.len(),
                space.n_dof()
            )));
        }
        if !b_left.is_finite() || !b_right.is_finite() || source.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model data must be finite"));
        }
        let load = space.mass().matvec(&source);
        Ok(Self {
            space,
            source,
            load,
            b_left,
            b_right,
        })
    }

    pub fn from_source_fn(
        space: Arc<FeSpace<T>>,
        f: impl Fn(T) -> T,
        b_left: T,
        b_right: T,
    ) -> Result<Self> {
        let source = space.interpolate(f);
        Self::new(space, source, b_left, b_right)
    }

    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }

    pub fn source(&self) -> &[T] {
        &self.source
    }

    /// `l_i = ℓ(v_i)`.
    pub fn load(&self) -> &[T] {
        &self.load
    }

    pub fn b_left(&self) -> T {
        self.b_left
    }

    pub fn b_right(&self) -> T {
        self.b_right
    }
}

/// Best-knowledge state and its outputs at the requested points.
#[derive(Debug, Clone)]
pub struct BkSolution<T> {
    pub state: Field<T>,
    pub outputs: Vec<T>,
}

/// Solves the best-knowledge model and reads off `s_i = u(x_i)` at mesh nodes.
pub fn solve_bk<T: Real>(model: &BkModel<T>, points: &[T]) -> Result<BkSolution<T>> {
    let state = solve_dirichlet(model.space(), model.load(), model.b_left, model.b_right)?;
    let outputs = points
        .iter()
        .map(|&x| {
            let k = node_of(model.space(), x)?;
            Ok(state.coeffs()[k])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BkSolution { state, outputs })
}

fn node_of<T: Real>(space: &FeSpace<T>, x: T) -> Result<usize> {
    space
        .mesh()
        .node_index(x)
        .ok_or_else(|| Error::invalid(format!("observation point {x} is not a mesh node")))
}

/// Pointwise observations `d_i` at strictly increasing points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T> {
    points: Vec<T>,
    data: Vec<T>,
    noise_sigma: T,
    rng_seed: u64,
}

impl<T: Real> ObservationSet<T> {
    pub fn new(points: Vec<T>, data: Vec<T>, noise_sigma: T, rng_seed: u64) -> Result<Self> {
        if points.len() != data.len() {
            return Err(Error::invalid(format!(
                "{} observation points but {} data values",
                points.len(),
                data.len()
            )));
        }
        if points.len() < 2 {
            return Err(Error::invalid("need at least two observations"));
        }
        let one = T::one();
        if points.iter().any(|&x| !(x >= -one && x <= one)) {
            return Err(Error::invalid("observation points must lie in [-1, 1]"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("observation points must be strictly increasing"));
        }
        if data.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("observation data must be finite"));
        }
        if !(noise_sigma >= T::zero()) || !noise_sigma.is_finite() {
            return Err(Error::invalid(format!("noise level {noise_sigma} must be >= 0")));
        }
        Ok(Self {
            points,
            data,
            noise_sigma,
            rng_seed,
        })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn noise_sigma(&self) -> T {
        self.noise_sigma
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points strictly between the first and last observation.
    pub fn interior_points(&self) -> &[T] {
        &self.points[1..self.points.len() - 1]
    }

    pub fn interior_data(&self) -> &[T] {
        &self.data[1..self.data.len() - 1]
    }

    /// Same points, different data (noise level and seed kept).
    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        Self::new(self.points.clone(), data, self.noise_sigma, self.rng_seed)
    }
}

/// `d_i = u_true(x_i) + σ ξ_i` with `ξ_i` standard normal from a seeded
/// ChaCha8 stream.
pub fn synthesize_observations<T: Real>(
    points: &[T],
    noise_sigma: T,
    rng_seed: u64,
) -> Result<ObservationSet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let data = points
        .iter()
        .map(|&x| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            true_state(x) + noise_sigma * T::lit(xi)
        })
        .collect();
    ObservationSet::new(points.to_vec(), data, noise_sigma, rng_seed)
}

/// Adjoint states `a(v, φ_i) = -v(x_i)` with homogeneous Dirichlet data.
#[derive(Debug, Clone)]
pub struct AdjointSet<T> {
    space: Arc<FeSpace<T>>,
    points: Vec<T>,
    nodes: Vec<usize>,
    fields: Vec<Field<T>>,
}

impl<T: Real> AdjointSet<T> {
    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Mesh node carrying each observation point.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn fields(&self) -> &[Field<T>] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Nodal values of `Σ_i w_i φ_i`.
    pub fn combine(&self, weights: &[T]) -> Vec<T> {
        assert_eq!(weights.len(), self.len(), "one weight per adjoint");
        let mut out = vec![T::zero(); self.space.n_dof()];
        for (f, &w) in self.fields.iter().zip(weights) {
            for (o, &c) in out.iter_mut().zip(f.coeffs()) {
                *o += w * c;
            }
        }
        out
    }
}

pub fn solve_adjoints<T: Real>(space: &Arc<FeSpace<T>>, interior_points: &[T]) -> Result<AdjointSet<T>> {
    let n = space.n_dof();
    let mut nodes = Vec::with_capacity(interior_points.len());
    let mut fields = Vec::with_capacity(interior_points.len());
    for &x in interior_points {
        let k = node_of(space, x)?;
        if k == 0 || k == n - 1 {
            return Err(Error::invalid(format!(
                "adjoint point {x} lies on the Dirichlet boundary"
            )));
        }
        let mut rhs = vec![T::zero(); n];
        rhs[k] = -T::one();
        fields.push(solve_dirichlet(space, &rhs, T::zero(), T::zero())?);
        nodes.push(k);
    }
    Ok(AdjointSet {
        space: space.clone(),
        points: interior_points.to_vec(),
        nodes,
        fields,
    })
}
