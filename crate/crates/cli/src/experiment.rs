//! Single cases and the sweep over the number of observations.

use std::fs;
use std::path::{Path, PathBuf};

use funcgp::pipeline::{self, FgpRun, SgpRun};
use funcgp::problem::{benchmark_source, true_state};
use funcgp::hyperopt::optimize;
use funcgp::{ObservationSet, Scenario};

use crate::config::RunConfig;
use crate::error::{RunError, Stage};
use crate::output;

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseResult {
    pub m: usize,
    pub theta1: f64,
    pub theta2: f64,
    /// `‖u_true - ū*‖` in L²(-1, 1).
    pub err_fgp: f64,
    /// L² norm of the pointwise posterior standard deviation.
    pub std_fgp: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub err_sgp: f64,
    pub std_sgp: f64,
}

/// Where the observation data come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Extended Chebyshev points, synthetic truth plus seeded noise.
    Synthetic,
    /// Chebyshev points with interior data replaced by the best-knowledge
    /// outputs, which switches the correction off.
    BestKnowledge,
    /// `x,d` pairs read from a CSV file; the first and last `x` must be -1
    /// and 1.
    File(PathBuf),
}

/// Everything computed for one case.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub result: CaseResult,
    pub scenario: Scenario<f64>,
    pub fgp: FgpRun<f64>,
    pub sgp: SgpRun<f64>,
    /// Nodal interpolant of the synthetic truth.
    pub u_true: Vec<f64>,
}

impl CaseRun {
    pub fn points_csv(&self) -> Vec<u8> {
        let std_sgp = self.sgp.posterior.std();
        output::points_csv([
            self.scenario.space.nodes(),
            &self.u_true,
            self.scenario.bk.state.coeffs(),
            &self.fgp.posterior.mean,
            &self.fgp.posterior.std,
            &self.sgp.posterior.mean,
            &std_sgp,
        ])
    }
}

/// Reads `x,d` rows; a non-numeric first row is taken as a header.
pub fn read_observations(path: &Path, sigma: f64, seed: u64) -> Result<ObservationSet<f64>, RunError> {
    let text = fs::read_to_string(path).map_err(RunError::io(path))?;
    let bad = |msg: String| RunError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut xs, mut ds) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad(format!("line {}: expected 2 columns, got {}", i + 1, rec.len())));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(d)) => {
                xs.push(x);
                ds.push(d);
            }
            _ if i == 0 => continue,
            _ => return Err(bad(format!("line {}: not a number pair", i + 1))),
        }
    }
    ObservationSet::new(xs, ds, sigma, seed).map_err(RunError::stage(Stage::Observations))
}

fn scenario(cfg: &RunConfig, m: usize, source: &DataSource) -> Result<Scenario<f64>, RunError> {
    let sc = match source {
        DataSource::Synthetic => Scenario::heat_benchmark(m, cfg.n_elements, cfg.sigma, cfg.seed),
        DataSource::BestKnowledge => {
            Scenario::heat_benchmark(m, cfg.n_elements, cfg.sigma, cfg.seed)
                .and_then(Scenario::with_bk_data)
        }
        DataSource::File(path) => {
            let obs = read_observations(path, cfg.sigma, cfg.seed)?;
            Scenario::from_observations(obs, cfg.n_elements, benchmark_source)
        }
    };
    sc.map_err(RunError::stage(Stage::Setup))
}

/// Runs both regressions for one case. `m` is ignored for file data.
pub fn compute_case(cfg: &RunConfig, m: usize, source: &DataSource) -> Result<CaseRun, RunError> {
    let sc = scenario(cfg, m, source)?;
    let search = cfg.search();
    let full_cov = !cfg.diag_only;

    let problem = sc
        .functional_problem(&search)
        .map_err(RunError::stage(Stage::FunctionalSearch))?;
    let opt = optimize(&problem).map_err(RunError::stage(Stage::FunctionalSearch))?;
    let theta = [opt.theta_star[0], opt.theta_star[1]];
    let (op, fit, posterior) = pipeline::run_functional_at(&sc, theta, full_cov)
        .map_err(RunError::stage(Stage::FunctionalPosterior))?;
    let fgp = FgpRun {
        opt,
        op,
        fit,
        posterior,
    };
    let sgp = pipeline::run_standard(&sc, &search, full_cov)
        .map_err(RunError::stage(Stage::StandardGp))?;

    let space = &sc.space;
    let u_true = space.interpolate(true_state);
    let err = |mean: &[f64]| {
        let e: Vec<f64> = u_true.iter().zip(mean).map(|(a, b)| a - b).collect();
        space.l2_norm(&e)
    };
    let result = CaseResult {
        m: sc.observations.len(),
        theta1: theta[0],
        theta2: theta[1],
        err_fgp: err(&fgp.posterior.mean),
        std_fgp: space.l2_norm(&fgp.posterior.std),
        zeta1: sgp.kernel.zeta()[0],
        zeta2: sgp.kernel.zeta()[1],
        err_sgp: err(&sgp.posterior.mean),
        std_sgp: space.l2_norm(&sgp.posterior.std()),
    };
    Ok(CaseRun {
        result,
        scenario: sc,
        fgp,
        sgp,
        u_true,
    })
}

/// [`compute_case`] plus the per-node CSV in the output directory.
pub fn run_case(cfg: &RunConfig, m: usize, source: &DataSource) -> Result<CaseRun, RunError> {
    let run = compute_case(cfg, m, source)?;
    output::write_atomic(&cfg.points_path(run.result.m), &run.points_csv())?;
    Ok(run)
}

/// Outcome of a sweep. Failed cases are kept with their error.
#[derive(Debug)]
pub struct TableOutcome {
    pub rows: Vec<(usize, Result<CaseResult, RunError>)>,
}

impl TableOutcome {
    pub fn results(&self) -> impl Iterator<Item = &CaseResult> {
        self.rows.iter().filter_map(|(_, r)| r.as_ref().ok())
    }

    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// One case per `M` in the configured range. Writes `table.csv`, and
/// `table_failures.csv` when some case failed.
pub fn run_table(cfg: &RunConfig) -> Result<TableOutcome, RunError> {
    cfg.validate()?;
    let rows: Vec<_> = cfg
        .m_values()
        .map(|m| (m, compute_case(cfg, m, &DataSource::Synthetic).map(|r| r.result)))
        .collect();

    let table: Vec<(usize, Option<CaseResult>)> = rows
        .iter()
        .map(|(m, r)| (*m, r.as_ref().ok().copied()))
        .collect();
    output::write_atomic(&cfg.table_path(), &output::table_csv(&table))?;

    let failures: Vec<(usize, String, String)> = rows
        .iter()
        .filter_map(|(m, r)| r.as_ref().err().map(|e| (*m, e)))
        .map(|(m, e)| {
            let stage = match e {
                RunError::Stage { stage, .. } => stage.to_string(),
                _ => String::new(),
            };
            (m, stage, e.to_string())
        })
        .collect();
    let fpath = cfg.failures_path();
    if failures.is_empty() {
        if fpath.exists() {
            fs::remove_file(&fpath).map_err(RunError::io(&fpath))?;
        }
    } else {
        output::write_atomic(&fpath, &output::failures_csv(&failures))?;
    }
    Ok(TableOutcome { rows })
}
