use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use funcgp_cli::checks;
use funcgp_cli::{output, run_case, run_table, DataSource, RunConfig, RunError};

#[derive(Debug, Parser)]
#[command(
    name = "funcgp",
    version,
    about = "Functional GP data assimilation on the 1D heat-conduction benchmark"
)]
struct Cli {
    /// JSON file with RunConfig keys; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of uniform elements before observation points are inserted.
    #[arg(long, global = true)]
    elements: Option<usize>,
    /// Observation noise standard deviation.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pointwise variances only (no dense covariance matrices).
    #[arg(long, global = true)]
    diag_only: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep over the number of observations and write table.csv.
    Table {
        #[arg(long)]
        m_min: Option<usize>,
        #[arg(long)]
        m_max: Option<usize>,
    },
    /// Single case; writes points_M<M>.csv.
    Case {
        /// Number of observations, boundary points included.
        #[arg(long, required_unless_present = "data")]
        m: Option<usize>,
        /// Replace the data with the best-knowledge outputs.
        #[arg(long)]
        bk_data: bool,
        /// CSV of x,d pairs used instead of synthetic data.
        #[arg(long, conflicts_with = "bk_data")]
        data: Option<PathBuf>,
    },
    /// Run the oracle equivalence checks.
    Verify,
}

fn config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.elements {
        cfg.n_elements = v;
    }
    if let Some(v) = cli.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out_dir = v.clone();
    }
    if cli.diag_only {
        cfg.diag_only = true;
    }
    if let Command::Table { m_min, m_max } = &cli.command {
        if let Some(v) = m_min {
            cfg.m_min = *v;
        }
        if let Some(v) = m_max {
            cfg.m_max = *v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, RunError> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::Table { .. } => {
            let outcome = run_table(&cfg)?;
            println!("{}", output::TABLE_HEADER.join(","));
            for (m, r) in &outcome.rows {
                match r {
                    Ok(r) => println!(
                        "{m},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}",
                        r.theta1, r.theta2, r.err_fgp, r.std_fgp, r.zeta1, r.zeta2, r.err_sgp, r.std_sgp
                    ),
                    Err(e) => eprintln!("M = {m}: {e}"),
                }
            }
            println!("wrote {}", cfg.table_path().display());
            Ok(outcome.n_failed() == 0)
        }
        Command::Case { m, bk_data, data } => {
            let source = match (data, bk_data) {
                (Some(p), _) => DataSource::File(p.clone()),
                (None, true) => DataSource::BestKnowledge,
                (None, false) => DataSource::Synthetic,
            };
            let run = run_case(&cfg, m.unwrap_or(0), &source)?;
            let r = run.result;
            println!("M          {}", r.m);
            println!("theta      ({:.6e}, {:.6e})", r.theta1, r.theta2);
            println!("err_fgp    {:.6e}", r.err_fgp);
            println!("std_fgp    {:.6e}", r.std_fgp);
            println!("zeta       ({:.6e}, {:.6e})", r.zeta1, r.zeta2);
            println!("err_sgp    {:.6e}", r.err_sgp);
            println!("std_sgp    {:.6e}", r.std_sgp);
            println!("wrote {}", cfg.points_path(r.m).display());
            Ok(true)
        }
        Command::Verify => {
            let lines = checks::verify_all();
            for l in &lines {
                println!("{l}");
            }
            Ok(lines.iter().all(|l| l.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
