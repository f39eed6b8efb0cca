use thiserror::Error;

/// A single rejected input row, reported back to the user verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid price {value} at index {index}: closes must be finite and positive")]
    InvalidPrice { index: usize, value: f64 },

    #[error("dates must be strictly increasing; violation at index {index}")]
    UnorderedDates { index: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rejected {} input row(s): {}", .0.len(), summarize(.0))]
    Rows(Vec<RowIssue>),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ForecastError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn summarize(rows: &[RowIssue]) -> String {
    const SHOWN: usize = 10;
    let mut parts: Vec<String> = rows.iter().take(SHOWN).map(|r| r.to_string()).collect();
    if rows.len() > SHOWN {
        parts.push(format!("... and {} more", rows.len() - SHOWN));
    }
    parts.join("; ")
}

impl ForecastError {
    pub fn at_stage(self, stage: &'static str) -> Self {
        ForecastError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, ForecastError>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ForecastError::NonFinite { what, index }),
        None => Ok(()),
    }
}
