use std::fmt;
use std::path::Path;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Upstream = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure {
            kind: ExitKind::Usage,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure {
            kind: ExitKind::Data,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn upstream(msg: impl fmt::Display) -> Self {
        Failure {
            kind: ExitKind::Upstream,
            error: anyhow::anyhow!("{msg}"),
        }
    }
}

pub type StageResult<T> = Result<T, Failure>;

/// Tags an error with the exit code it should produce.
pub trait Classify<T> {
    fn data(self) -> StageResult<T>;
    fn upstream(self) -> StageResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self) -> StageResult<T> {
        self.map_err(|e| Failure {
            kind: ExitKind::Data,
            error: e.into(),
        })
    }

    fn upstream(self) -> StageResult<T> {
        self.map_err(|e| Failure {
            kind: ExitKind::Upstream,
            error: e.into(),
        })
    }
}

/// Fails with a data error naming what to run when `path` is missing.
pub fn require(stage: &str, path: &Path, hint: &str) -> StageResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::data(format!(
            "{stage}: {} not found ({hint})",
            path.display()
        )))
    }
}
