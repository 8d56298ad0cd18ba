use flowdmd::experiments::ExperimentError;
use flowdmd::{DmdError, IoError, PipelineError, TransportError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error("{0}{hint}", hint = pipeline_hint(.0))]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Usage(String),
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        CliError::Pipeline(e.into())
    }
}

fn pipeline_hint(e: &PipelineError) -> &'static str {
    let source = match e {
        PipelineError::Step { source, .. } | PipelineError::Transport(source) => source,
        _ => return "",
    };
    match source {
        TransportError::Infeasible { .. } => {
            "\nhint: rerun with --reservoir auto to route unreachable mass through a penalized reservoir"
        }
        TransportError::OverBudget { .. } => {
            "\nhint: use --mode local, a coarser grid, or raise --budget"
        }
        _ => "",
    }
}

impl CliError {
    /// Process exit status. Input and format errors keep the codes of the
    /// file layer; numerical failures get their own range.
    pub fn code(&self) -> i32 {
        match self {
            CliError::Io(e) => e.code(),
            CliError::Usage(_) => 2,
            CliError::Dmd(_) => 20,
            CliError::Pipeline(PipelineError::Dmd(_)) => 20,
            CliError::Pipeline(PipelineError::Step { .. } | PipelineError::Transport(_)) => 21,
            CliError::Pipeline(_) => 22,
            CliError::Experiment(_) => 23,
        }
    }
}
