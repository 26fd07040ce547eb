use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline step that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Observations,
    Setup,
    FunctionalSearch,
    FunctionalPosterior,
    StandardGp,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Observations => "observation setup",
            Stage::Setup => "mesh, best-knowledge solve and adjoints",
            Stage::FunctionalSearch => "functional GP hyperparameter search",
            Stage::FunctionalPosterior => "functional GP posterior",
            Stage::StandardGp => "standard GP baseline",
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: funcgp::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    pub fn stage(stage: Stage) -> impl FnOnce(funcgp::Error) -> RunError {
        move |source| RunError::Stage { stage, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> RunError {
        let path = path.into();
        move |source| RunError::Io { path, source }
    }

    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Stage {
                source: funcgp::Error::InvalidInput(_),
                ..
            }
            | RunError::Config(_) => 2,
            _ => 1,
        }
    }
}
