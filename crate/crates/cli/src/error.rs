use std::path::{Path, PathBuf};

use roadsight_core::annotation::AnnotationError;
use roadsight_core::eval::EvalError;
use roadsight_core::graph::GraphError;
use thiserror::Error;

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Annotation error with the file it came from.
    pub fn annotation(ctx: impl AsRef<Path>, e: AnnotationError) -> Self {
        let msg = format!("{}: {e}", ctx.as_ref().display());
        match e {
            AnnotationError::Parse { .. } | AnnotationError::Manifest(_) => CliError::Parse(msg),
            _ => CliError::Data(msg),
        }
    }

    pub fn eval(ctx: impl AsRef<Path>, e: EvalError) -> Self {
        let msg = format!("{}: {e}", ctx.as_ref().display());
        match e {
            EvalError::Parse { .. } => CliError::Parse(msg),
            EvalError::InvalidInput(_) => CliError::Data(msg),
        }
    }

    pub fn graph(ctx: impl AsRef<Path>, e: GraphError) -> Self {
        let msg = format!("{}: {e}", ctx.as_ref().display());
        match e {
            GraphError::Definition { .. } | GraphError::Snapshot { .. } => CliError::Parse(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(path.as_ref(), text).map_err(|e| CliError::io(path, e))
}
