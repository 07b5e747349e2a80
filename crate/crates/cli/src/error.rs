use std::path::Path;

use lep_core::ddpg::DdpgError;
use lep_core::envs::EnvError;
use lep_core::explore::ExploreError;
use lep_core::nn::NnError;
use lep_core::pipeline::PipelineError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for usage and config errors, 3 for I/O, 4 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Runtime(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io {
            path: "<output>".into(),
            source: e,
        }
    }
}

impl From<ExploreError> for CliError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Io(io) => io.into(),
            ExploreError::Nn(n) => n.into(),
            ExploreError::Env(v) => v.into(),
            ExploreError::TooShort { .. }
            | ExploreError::Empty
            | ExploreError::Dim(_)
            | ExploreError::Param(_)
            | ExploreError::Format { .. } => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io(io) => io.into(),
            NnError::Format(_) | NnError::MissingTensor(_) | NnError::TensorShape { .. } => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::UnknownTask { .. } | EnvError::InvalidSpec(_) => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<DdpgError> for CliError {
    fn from(e: DdpgError) -> Self {
        match e {
            DdpgError::Config(_) | DdpgError::Dim(_) => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Plan(_) => Self::Usage(e.to_string()),
            PipelineError::Io(io) => io.into(),
            PipelineError::Explore(x) => x.into(),
            PipelineError::Env(x) => x.into(),
            PipelineError::Nn(x) => x.into(),
            PipelineError::Ddpg(x) => x.into(),
            other => Self::Runtime(other.to_string()),
        }
    }
}
