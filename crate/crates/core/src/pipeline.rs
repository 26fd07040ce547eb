//! End-to-end assimilation runs: best-knowledge solve, adjoints,
//! hyperparameter search and posterior, plus the data-only baseline.

use std::sync::Arc;

use crate::covariance::{CovOperator, GramComponents};
use crate::error::{Error, Result};
use crate::fem1d::FeSpace;
use crate::fgp::{self, FgpFit, FgpPosterior};
use crate::hyperopt::{optimize, GridSpec, LmlProblem, NelderMeadSpec, OptResult};
use crate::problem::{
    benchmark_source, chebyshev_points, solve_adjoints, solve_bk, synthesize_observations,
    AdjointSet, BkModel, BkSolution, ObservationSet,
};
use crate::scalar::Real;
use crate::sgp::{self, SeKernel, SgpPosterior};

/// Observations, the mesh built around them, and the best-knowledge model
/// whose boundary data are the first and last observations.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub space: Arc<FeSpace<T>>,
    pub observations: ObservationSet<T>,
    pub model: BkModel<T>,
    pub bk: BkSolution<T>,
    pub adjoints: AdjointSet<T>,
}

impl<T: Real> Scenario<T> {
    /// Heat-conduction benchmark: `M` scaled Chebyshev observations of the
    /// synthetic truth and the best-knowledge source `4 sin(4πx)`.
    pub fn heat_benchmark(m: usize, n_elements: usize, sigma: T, seed: u64) -> Result<Self> {
        if m < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 observations (two fix the boundary data), got {m}"
            )));
        }
        let points = chebyshev_points(m)?;
        let obs = synthesize_observations(&points, sigma, seed)?;
        Self::from_observations(obs, n_elements, benchmark_source)
    }

    /// Builds everything from an observation set whose first and last points
    /// are the domain endpoints.
    pub fn from_observations(
        observations: ObservationSet<T>,
        n_elements: usize,
        source: impl Fn(T) -> T,
    ) -> Result<Self> {
        let pts = observations.points();
        if pts[0] != -T::one() || pts[pts.len() - 1] != T::one() {
            return Err(Error::invalid(
                "first and last observation must sit at -1 and +1",
            ));
        }
        if observations.len() < 3 {
            return Err(Error::invalid("need at least one interior observation"));
        }
        let interior = observations.interior_points().to_vec();
        let space = FeSpace::uniform(n_elements, &interior)?;
        let data = observations.data();
        let model = BkModel::from_source_fn(space.clone(), source, data[0], data[data.len() - 1])?;
        let bk = solve_bk(&model, &interior)?;
        let adjoints = solve_adjoints(&space, &interior)?;
        Ok(Self {
            space,
            observations,
            model,
            bk,
            adjoints,
        })
    }

    /// Replaces the interior data by the best-knowledge outputs, so that the
    /// residual vanishes.
    pub fn with_bk_data(mut self) -> Result<Self> {
        let mut data = self.observations.data().to_vec();
        let m = data.len();
        data[1..m - 1].copy_from_slice(&self.bk.outputs);
        self.observations = self.observations.with_data(data)?;
        Ok(self)
    }

    /// `d - s` at the interior observation points.
    pub fn residual(&self) -> Vec<T> {
        self.observations
            .interior_data()
            .iter()
            .zip(&self.bk.outputs)
            .map(|(&d, &s)| d - s)
            .collect()
    }

    pub fn sigma(&self) -> T {
        self.observations.noise_sigma()
    }

    pub fn lml_problem(&self) -> Result<LmlProblem<'static, T>> {
        LmlProblem::functional(GramComponents::new(&self.adjoints), self.residual(), self.sigma())
    }

    /// Functional-GP likelihood with the given search settings; the grid
    /// always contains 0.
    pub fn functional_problem(&self, search: &SearchSpec) -> Result<LmlProblem<'static, T>> {
        Ok(self
            .lml_problem()?
            .with_grid(GridSpec {
                include_zero: true,
                ..search.grid
            })
            .with_nelder_mead(search.nelder_mead))
    }

    /// Squared-exponential likelihood on all observations after removing
    /// their mean.
    pub fn standard_problem(&self, search: &SearchSpec) -> Result<LmlProblem<'static, T>> {
        let x = self.observations.points().to_vec();
        let y = self.observations.data();
        let mean = y.iter().copied().sum::<T>() / T::count(y.len());
        let centred = y.iter().map(|&v| v - mean).collect();
        Ok(LmlProblem::standard(x, centred, self.sigma())?
            .with_grid(GridSpec {
                include_zero: false,
                ..search.grid
            })
            .with_nelder_mead(search.nelder_mead))
    }
}

/// Hyperparameter search settings shared by both regressions. The functional
/// search always adds the exact value 0 to its grid; the standard one never
/// does.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchSpec {
    pub grid: GridSpec,
    pub nelder_mead: NelderMeadSpec,
}

/// Outcome of the functional regression pipeline.
#[derive(Debug, Clone)]
pub struct FgpRun<T> {
    pub opt: OptResult<T>,
    pub op: CovOperator<T>,
    pub fit: FgpFit<T>,
    pub posterior: FgpPosterior<T>,
}

/// Learns `θ` by marginal-likelihood maximization and computes the posterior
/// at every mesh node.
pub fn run_functional<T: Real>(
    scenario: &Scenario<T>,
    search: &SearchSpec,
    full_cov: bool,
) -> Result<FgpRun<T>> {
    let opt = optimize(&scenario.functional_problem(search)?)?;
    let theta = [opt.theta_star[0], opt.theta_star[1]];
    run_functional_at(scenario, theta, full_cov).map(|(op, fit, posterior)| FgpRun {
        opt,
        op,
        fit,
        posterior,
    })
}

/// Posterior for fixed hyperparameters.
pub fn run_functional_at<T: Real>(
    scenario: &Scenario<T>,
    theta: [T; 2],
    full_cov: bool,
) -> Result<(CovOperator<T>, FgpFit<T>, FgpPosterior<T>)> {
    let op = CovOperator::new(scenario.space.clone(), theta)?;
    let fit = fgp::fit(&op, &scenario.adjoints, &scenario.residual(), scenario.sigma())?;
    let nodes = scenario.space.nodes();
    let posterior = if full_cov {
        fgp::posterior_state(&scenario.model, &fit, nodes)?
    } else {
        fgp::posterior_state_diagonal(&scenario.model, &fit, nodes)?
    };
    Ok((op, fit, posterior))
}

/// Outcome of the data-only baseline.
#[derive(Debug, Clone)]
pub struct SgpRun<T> {
    pub opt: OptResult<T>,
    pub kernel: SeKernel<T>,
    pub posterior: SgpPosterior<T>,
}

/// Squared-exponential GP on all observations, predicted at every mesh node.
pub fn run_standard<T: Real>(
    scenario: &Scenario<T>,
    search: &SearchSpec,
    full_cov: bool,
) -> Result<SgpRun<T>> {
    let opt = optimize(&scenario.standard_problem(search)?)?;
    run_standard_at(scenario, [opt.theta_star[0], opt.theta_star[1]], full_cov).map(
        |(kernel, posterior)| SgpRun {
            opt,
            kernel,
            posterior,
        },
    )
}

/// Baseline prediction for fixed `(ζ₁, ζ₂)`.
pub fn run_standard_at<T: Real>(
    scenario: &Scenario<T>,
    zeta: [T; 2],
    full_cov: bool,
) -> Result<(SeKernel<T>, SgpPosterior<T>)> {
    let kernel = SeKernel::new(zeta[0], zeta[1])?;
    let posterior = sgp::fit_predict(
        &kernel,
        scenario.observations.points(),
        scenario.observations.data(),
        scenario.sigma(),
        scenario.space.nodes(),
        full_cov,
    )?;
    Ok((kernel, posterior))
}
