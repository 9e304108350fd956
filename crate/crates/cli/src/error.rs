use std::fmt;
use std::path::Path;

/// Process exit status for each failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Integrity = 3,
    Runtime = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
    /// Pipeline stage that failed, when known.
    pub stage: Option<&'static str>,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(field: &str, message: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Config,
            message: format!("{field}: {message}"),
            stage: None,
        }
    }

    pub fn integrity(message: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Integrity,
            message: message.to_string(),
            stage: None,
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Runtime,
            message: message.to_string(),
            stage: None,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::runtime(format!("{}: {err}", path.display()))
    }

    /// Tags the error with a stage name unless an inner stage already did.
    pub fn in_stage(mut self, stage: &'static str) -> Self {
        self.stage.get_or_insert(stage);
        self
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(stage) => write!(f, "stage `{stage}` failed: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<boltrm_core::Error> for CliError {
    fn from(err: boltrm_core::Error) -> Self {
        use boltrm_core::Error as E;
        let kind = match &err {
            E::Config { .. } => ExitKind::Config,
            E::Format(_) | E::Integrity(_) => ExitKind::Integrity,
            _ => ExitKind::Runtime,
        };
        Self {
            kind,
            message: err.to_string(),
            stage: None,
        }
    }
}
