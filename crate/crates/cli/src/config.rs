use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use funcgp::{GridSpec, NelderMeadSpec, SearchSpec};
use serde::{Deserialize, Serialize};

use crate::error::RunError;

/// Settings for a table sweep or a single case. JSON config files use the
/// field names as keys; missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_elements: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub sigma: f64,
    pub seed: u64,
    pub grid_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub max_evals: usize,
    pub rel_tol: f64,
    pub out_dir: PathBuf,
    /// Pointwise variances only, no dense covariance matrices.
    pub diag_only: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        let nm = NelderMeadSpec::default();
        Self {
            n_elements: 2000,
            m_min: 4,
            m_max: 15,
            sigma: 0.0,
            seed: 0,
            grid_points: grid.points_per_axis,
            grid_lo: grid.lo,
            grid_hi: grid.hi,
            max_evals: nm.max_evals,
            rel_tol: nm.rel_tol,
            out_dir: PathBuf::from("out"),
            diag_only: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(RunError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |msg: String| Err(RunError::Config(msg));
        if self.n_elements < 2 {
            return fail(format!("n_elements must be >= 2, got {}", self.n_elements));
        }
        if self.m_min < 3 || self.m_min > self.m_max {
            return fail(format!(
                "need 3 <= m_min <= m_max, got {}..{}",
                self.m_min, self.m_max
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.grid_points < 2 {
            return fail(format!("grid_points must be >= 2, got {}", self.grid_points));
        }
        if !(self.grid_lo > 0.0 && self.grid_lo < self.grid_hi && self.grid_hi.is_finite()) {
            return fail(format!(
                "grid bounds must satisfy 0 < lo < hi, got [{}, {}]",
                self.grid_lo, self.grid_hi
            ));
        }
        if self.max_evals == 0 || !(self.rel_tol > 0.0) {
            return fail("max_evals and rel_tol must be positive".into());
        }
        Ok(())
    }

    pub fn m_values(&self) -> RangeInclusive<usize> {
        self.m_min..=self.m_max
    }

    pub fn search(&self) -> SearchSpec {
        SearchSpec {
            grid: GridSpec {
                points_per_axis: self.grid_points,
                lo: self.grid_lo,
                hi: self.grid_hi,
                include_zero: false,
            },
            nelder_mead: NelderMeadSpec {
                max_evals: self.max_evals,
                rel_tol: self.rel_tol,
            },
        }
    }

    pub fn table_path(&self) -> PathBuf {
        self.out_dir.join("table.csv")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.out_dir.join("table_failures.csv")
    }

    pub fn points_path(&self, m: usize) -> PathBuf {
        self.out_dir.join(format!("points_M{m}.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"n_elements": 400, "sigma": 0.01}"#).unwrap();
        assert_eq!(cfg.n_elements, 400);
        assert_eq!(cfg.sigma, 0.01);
        assert_eq!(cfg.m_min, 4);
        assert_eq!(cfg.m_max, 15);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"elements": 10}"#).is_err());
    }

    #[test]
    fn validation() {
        let bad = RunConfig {
            m_min: 2,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            sigma: -1.0,
            ..RunConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    }
}
