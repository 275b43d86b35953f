//! File formats and scenario plumbing around `terranav-core`: ESRI ASCII
//! grid terrain, binary PGM imagery, flow CSV interchange, JSON problem and
//! scenario descriptions, and run-report emission.

pub mod asc;
pub mod flow_csv;
pub mod pgm;
pub mod problem;
pub mod report;
pub mod scenario;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

impl FormatError {
    pub fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
