//! Log marginal likelihood and its maximization over hyperparameters.
//!
//! The search is a deterministic two-stage procedure: a logarithmic grid
//! (optionally including the exact lower bound 0) followed by a Nelder–Mead
//! refinement whose trial points are clamped onto the box, so a parameter can
//! settle exactly on its bound.

use std::f64::consts::PI;

use crate::covariance::GramComponents;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Mat};
use crate::scalar::Real;
use crate::sgp::{training_matrix, SeKernel};

/// Two LML values closer than this are a tie; the lexicographically smaller
/// parameter vector wins.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmlKind {
    /// `D(θ) = θ₁ ΦᵀMΦ + θ₂ ΦᵀAΦ + σ² I` on `y = d - s`.
    Functional,
    /// `C(ζ) = 𝒦_ζ(X, X) + σ² I` on centred data.
    Standard,
}

/// Stage-one grid: `points_per_axis` log-spaced values in `[lo, hi]`, plus
/// the value 0 when `include_zero` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub include_zero: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 25,
            lo: 1e-6,
            hi: 1e3,
            include_zero: false,
        }
    }
}

impl GridSpec {
    pub fn axis_values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.points_per_axis + 1);
        if self.include_zero {
            v.push(0.0);
        }
        let n = self.points_per_axis;
        if n == 1 {
            v.push(self.lo);
        } else if n > 1 {
            let (a, b) = (self.lo.log10(), self.hi.log10());
            v.extend((0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)));
        }
        v
    }
}

/// Stage-two settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadSpec {
    pub max_evals: usize,
    /// Stop when the simplex diameter falls below this fraction of the best
    /// vertex's magnitude.
    pub rel_tol: f64,
}

impl Default for NelderMeadSpec {
    fn default() -> Self {
        Self {
            max_evals: 400,
            rel_tol: 1e-6,
        }
    }
}

type Builder<'a, T> = Box<dyn Fn(&[T]) -> Option<Mat<T>> + Send + Sync + 'a>;

/// A Gaussian marginal likelihood `y ~ N(0, B(p))` over a box of parameters.
pub struct LmlProblem<'a, T> {
    pub kind: LmlKind,
    pub residual: Vec<T>,
    builder: Builder<'a, T>,
    pub bounds: Vec<(T, T)>,
    pub grid: GridSpec,
    pub nelder_mead: NelderMeadSpec,
}

impl<'a, T: Real> LmlProblem<'a, T> {
    /// `builder` maps parameters to the covariance of `residual`, or `None`
    /// where the parameters are inadmissible.
    pub fn new(
        kind: LmlKind,
        residual: Vec<T>,
        bounds: Vec<(T, T)>,
        builder: impl Fn(&[T]) -> Option<Mat<T>> + Send + Sync + 'a,
    ) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("need at least one hyperparameter"));
        }
        if bounds.iter().any(|&(lo, hi)| !(lo >= T::zero() && lo <= hi) || !hi.is_finite()) {
            return Err(Error::invalid("bounds must satisfy 0 <= lo <= hi < inf"));
        }
        if residual.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("residual must be finite"));
        }
        let grid = GridSpec {
            include_zero: kind == LmlKind::Functional,
            ..GridSpec::default()
        };
        Ok(Self {
            kind,
            residual,
            builder: Box::new(builder),
            bounds,
            grid,
            nelder_mead: NelderMeadSpec::default(),
        })
    }

    /// Functional-GP likelihood with `θ ∈ [0, 10³]²`.
    pub fn functional(components: GramComponents<T>, residual: Vec<T>, sigma: T) -> Result<Self> {
        let n = components.mass.nrows();
        if residual.len() != n {
            return Err(Error::invalid(format!(
                "residual has length {}, Gram blocks are {n}x{n}",
                residual.len()
            )));
        }
        let s2 = sigma * sigma;
        let hi = T::lit(1e3);
        Self::new(
            LmlKind::Functional,
            residual,
            vec![(T::zero(), hi); 2],
            move |p: &[T]| {
                if p.iter().any(|&t| t < T::zero()) || !(p[0] + p[1] > T::zero()) {
                    return None;
                }
                let mut d = components.at([p[0], p[1]]);
                d.add_to_diagonal(s2);
                Some(d)
            },
        )
    }

    /// Standard-GP likelihood with the squared-exponential kernel,
    /// `ζ ∈ [10⁻⁶, 10³]²`. `centred_y` must already have its mean removed.
    pub fn standard(train_x: Vec<T>, centred_y: Vec<T>, sigma: T) -> Result<Self> {
        if train_x.len() != centred_y.len() {
            return Err(Error::invalid("training inputs and outputs differ in length"));
        }
        let bounds = vec![(T::lit(1e-6), T::lit(1e3)); 2];
        Self::new(LmlKind::Standard, centred_y, bounds, move |p: &[T]| {
            let kernel = SeKernel::new(p[0], p[1]).ok()?;
            Some(training_matrix(&kernel, &train_x, sigma))
        })
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_nelder_mead(mut self, nm: NelderMeadSpec) -> Self {
        self.nelder_mead = nm;
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn matrix(&self, params: &[T]) -> Option<Mat<T>> {
        (self.builder)(params)
    }

    fn clamp(&self, x: &mut [T]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.max(lo).min(hi);
        }
    }
}

/// `-½ yᵀB⁻¹y - ½ log det B - (n/2) log 2π`, or `-∞` when `B` cannot be
/// factored even with jitter.
pub fn lml_from_matrix<T: Real>(b: &Mat<T>, y: &[T]) -> T {
    assert_eq!(b.nrows(), y.len(), "LML dimension mismatch");
    match Cholesky::factor_with_jitter(b) {
        Ok((chol, _)) => {
            let z = chol.solve_lower(y);
            let half = T::lit(0.5);
            let value = -half * dot(&z, &z)
                - half * chol.log_det()
                - half * T::count(y.len()) * T::lit((2.0 * PI).ln());
            if value.is_nan() {
                T::neg_infinity()
            } else {
                value
            }
        }
        Err(_) => T::neg_infinity(),
    }
}

pub fn log_marginal_likelihood<T: Real>(problem: &LmlProblem<'_, T>, params: &[T]) -> T {
    assert_eq!(params.len(), problem.dim(), "parameter dimension mismatch");
    match problem.matrix(params) {
        Some(b) if b.nrows() == problem.residual.len() && b.is_finite() => {
            lml_from_matrix(&b, &problem.residual)
        }
        _ => T::neg_infinity(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult<T> {
    pub theta_star: Vec<T>,
    pub lml_star: T,
    pub n_evals: usize,
    /// Every evaluation in order: grid first, then the simplex.
    pub trace: Vec<(Vec<T>, T)>,
    /// Best point of the grid stage.
    pub grid_best: (Vec<T>, T),
}

fn lex_less<T: Real>(a: &[T], b: &[T]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// `true` when `(pa, fa)` beats the incumbent `(pb, fb)`.
fn better<T: Real>(pa: &[T], fa: T, pb: &[T], fb: T) -> bool {
    let tie = T::lit(TIE_TOL);
    if fa > fb + tie {
        return true;
    }
    if fa.is_finite() && fb.is_finite() && (fa - fb).abs() <= tie {
        return lex_less(pa, pb);
    }
    false
}

struct Recorder<'p, 'a, T> {
    problem: &'p LmlProblem<'a, T>,
    trace: Vec<(Vec<T>, T)>,
}

impl<T: Real> Recorder<'_, '_, T> {
    fn eval(&mut self, p: &[T]) -> T {
        let v = log_marginal_likelihood(self.problem, p);
        self.trace.push((p.to_vec(), v));
        v
    }
}

/// Grid search followed by box-projected Nelder–Mead.
pub fn optimize<T: Real>(problem: &LmlProblem<'_, T>) -> Result<OptResult<T>> {
    let mut rec = Recorder {
        problem,
        trace: Vec::new(),
    };
    let grid_best = grid_stage(&mut rec);
    let Some((x0, f0)) = grid_best else {
        return Err(Error::Optimization(format!(
            "all {} grid evaluations were infeasible",
            rec.trace.len()
        )));
    };
    nelder_mead_stage(&mut rec, x0.clone());

    let mut best: Option<(Vec<T>, T)> = None;
    for (p, f) in &rec.trace {
        if !f.is_finite() {
            continue;
        }
        match &best {
            Some((bp, bf)) if !better(p, *f, bp, *bf) => {}
            _ => best = Some((p.clone(), *f)),
        }
    }
    let (theta_star, lml_star) = best.expect("grid produced a finite value");
    Ok(OptResult {
        theta_star,
        lml_star,
        n_evals: rec.trace.len(),
        trace: rec.trace,
        grid_best: (x0, f0),
    })
}

fn grid_stage<T: Real>(rec: &mut Recorder<'_, '_, T>) -> Option<(Vec<T>, T)> {
    let problem = rec.problem;
    let axes: Vec<Vec<T>> = problem
        .bounds
        .iter()
        .map(|&(lo, hi)| {
            let mut v: Vec<T> = problem
                .grid
                .axis_values()
                .into_iter()
                .map(T::lit)
                .filter(|&x| x >= lo && x <= hi)
                .collect();
            v.dedup();
            if v.is_empty() {
                v.push(lo);
            }
            v
        })
        .collect();

    let mut best: Option<(Vec<T>, T)> = None;
    let mut idx = vec![0usize; axes.len()];
    loop {
        let p: Vec<T> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let f = rec.eval(&p);
        if f.is_finite() {
            match &best {
                Some((bp, bf)) if !better(&p, f, bp, *bf) => {}
                _ => best = Some((p, f)),
            }
        }
        // odometer, last axis fastest: lexicographic order
        let mut d = axes.len();
        loop {
            if d == 0 {
                return best;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn nelder_mead_stage<T: Real>(rec: &mut Recorder<'_, '_, T>, x0: Vec<T>) {
    let problem = rec.problem;
    let spec = problem.nelder_mead;
    let n = problem.dim();
    let budget_end = rec.trace.len() + spec.max_evals;
    let cost = |lml: T| if lml.is_nan() { T::infinity() } else { -lml };

    // initial simplex: a quarter of each coordinate, or of the largest
    // coordinate when the start sits at zero
    let scale = x0.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let quarter = T::lit(0.25);
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let f0 = cost(log_marginal_likelihood(problem, &x0));
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut step = quarter * if x0[i] != T::zero() { x0[i].abs() } else { scale };
        if step == T::zero() {
            step = T::lit(1e-6);
        }
        let mut x = x0.clone();
        x[i] += step;
        problem.clamp(&mut x);
        if x[i] == x0[i] {
            x[i] = x0[i] - step;
            problem.clamp(&mut x);
        }
        let f = cost(rec.eval(&x));
        simplex.push((x, f));
    }

    let (alpha, gamma, rho, shrink) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let order = |s: &mut Vec<(Vec<T>, T)>| {
        s.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    if lex_less(&a.0, &b.0) {
                        std::cmp::Ordering::Less
                    } else if lex_less(&b.0, &a.0) {
                        std::cmp::Ordering::Greater
                    } else {
                        std::cmp::Ordering::Equal
                    }
                })
        })
    };
    let tol = T::lit(spec.rel_tol);

    while rec.trace.len() < budget_end {
        order(&mut simplex);
        let best = simplex[0].0.clone();
        let mag = best.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let diam = simplex[1..].iter().fold(T::zero(), |m, (x, _)| {
            x.iter().zip(&best).fold(m, |m, (&a, &b)| m.max((a - b).abs()))
        });
        if diam <= tol * mag.max(T::min_positive_value()) {
            break;
        }

        let worst = simplex[n].clone();
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &v) in centroid.iter_mut().zip(x) {
                *c += v / T::count(n);
            }
        }
        let along = |t: T, from: &[T]| -> Vec<T> {
            let mut x: Vec<T> = centroid.iter().zip(from).map(|(&c, &w)| c + t * (c - w)).collect();
            problem.clamp(&mut x);
            x
        };

        let xr = along(alpha, &worst.0);
        let fr = cost(rec.eval(&xr));
        if fr < simplex[0].1 {
            let xe = along(gamma, &worst.0);
            let fe = cost(rec.eval(&xe));
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let accepted = if fr < worst.1 {
            let xc = along(rho, &worst.0);
            let fc = cost(rec.eval(&xc));
            (fc <= fr).then_some((xc, fc))
        } else {
            let xc = along(-rho, &worst.0);
            let fc = cost(rec.eval(&xc));
            (fc < worst.1).then_some((xc, fc))
        };
        if let Some(v) = accepted {
            simplex[n] = v;
            continue;
        }
        for k in 1..=n {
            if rec.trace.len() >= budget_end {
                break;
            }
            let x: Vec<T> = simplex[k]
                .0
                .iter()
                .zip(&best)
                .map(|(&v, &b)| b + shrink * (v - b))
                .collect();
            let f = cost(rec.eval(&x));
            simplex[k] = (x, f);
        }
    }
}
