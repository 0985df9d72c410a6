use std::fmt;

/// A single offending input row (1-based data row, header excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

fn list(rows: &[RowIssue]) -> String {
    const SHOWN: usize = 10;
    let mut s = rows
        .iter()
        .take(SHOWN)
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("; ");
    if rows.len() > SHOWN {
        s.push_str(&format!("; ... and {} more", rows.len() - SHOWN));
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid rows: {}", list(.0))]
    Rows(Vec<RowIssue>),

    #[error("design error: {0}")]
    Design(String),

    #[error("empty cell: subject {subject} has no trials in condition {condition}")]
    EmptyCell { subject: String, condition: String },

    #[error("shift-log transform failed, rt must exceed shift: {}", list(.0))]
    Transform(Vec<RowIssue>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("scale error: {0}")]
    Scale(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unstable estimate: {0}")]
    Unstable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Rows(_) | Error::Transform(_) | Error::Csv(_) => 2,
            Error::Design(_) | Error::EmptyCell { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Unstable(_) => 5,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
