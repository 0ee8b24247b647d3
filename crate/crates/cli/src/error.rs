use std::path::PathBuf;

use tempfield::pipeline::StageError;
use tempfield::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Stage(#[from] StageError),

    /// A command-level step outside the core pipeline stages.
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: tempfield::Error,
    },

    #[error("no pipeline state at {0}; run `tempfield pipeline` first")]
    MissingState(PathBuf),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn step(step: &'static str) -> impl FnOnce(tempfield::Error) -> Self {
        move |source| CliError::Step { step, source }
    }

    pub fn output(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Output { path, source }
    }

    /// 2 for configuration problems (including an unusable output
    /// location), 3 for data problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        let by_kind = |k: ErrorKind| match k {
            ErrorKind::Input => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        };
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Stage(e) => by_kind(e.source.kind()),
            CliError::Step { source, .. } => by_kind(source.kind()),
            CliError::MissingState(_) => 3,
        }
    }
}
