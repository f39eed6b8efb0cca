use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ForecastError, Result, RowIssue};
use crate::series::PriceSeries;

const DATE_NAMES: &[&str] = &["date", "trading date", "trade date"];
const CLOSE_NAMES: &[&str] = &["close", "adj close", "adj_close", "adjusted close", "closing price", "close price"];

/// Column and date-format settings for CSV price files. Column names are
/// matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub date_column: Option<String>,
    pub close_column: Option<String>,
    /// chrono formats tried in order.
    pub date_formats: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            date_column: None,
            close_column: None,
            date_formats: vec!["%Y-%m-%d".into(), "%d/%m/%Y".into()],
        }
    }
}

fn normalize(name: &str) -> String {
    name.trim().trim_start_matches('\u{feff}').to_lowercase()
}

fn find_column(headers: &csv::StringRecord, wanted: Option<&str>, defaults: &[&str], role: &str) -> Result<usize> {
    let names: Vec<String> = headers.iter().map(normalize).collect();
    let candidates: Vec<String> = match wanted {
        Some(w) => vec![normalize(w)],
        None => defaults.iter().map(|d| d.to_string()).collect(),
    };
    candidates
        .iter()
        .find_map(|c| names.iter().position(|n| n == c))
        .ok_or_else(|| {
            ForecastError::InvalidParameter(format!(
                "no {role} column (looked for {}; header has {})",
                candidates.join(", "),
                names.join(", ")
            ))
        })
}

fn parse_date(raw: &str, formats: &[String]) -> Option<NaiveDate> {
    let raw = raw.trim();
    let date_part = raw.split(['T', ' ']).next().unwrap_or(raw);
    formats.iter().find_map(|f| {
        NaiveDate::parse_from_str(raw, f)
            .or_else(|_| NaiveDate::parse_from_str(date_part, f))
            .ok()
    })
}

fn parse_close(raw: &str) -> Option<f64> {
    let cleaned: String = raw.chars().filter(|c| !matches!(c, ',' | '"' | ' ')).collect();
    cleaned.parse().ok()
}

/// Reads `date` and `close` columns, sorts by date and validates. Every bad
/// row is reported, not only the first.
pub fn ingest_csv(path: &Path, options: &CsvOptions) -> Result<PriceSeries> {
    let file = std::fs::File::open(path)?;
    read_prices(file, options)
}

pub fn read_prices<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_col = find_column(&headers, options.date_column.as_deref(), DATE_NAMES, "date")?;
    let close_col = find_column(&headers, options.close_column.as_deref(), CLOSE_NAMES, "close")?;

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    let mut issues = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let date = record.get(date_col).and_then(|d| parse_date(d, &options.date_formats));
        let close = record.get(close_col).and_then(parse_close);
        match (date, close) {
            (None, _) => issues.push(RowIssue {
                line,
                message: format!("unparseable date {:?}", record.get(date_col).unwrap_or("")),
            }),
            (_, None) => issues.push(RowIssue {
                line,
                message: format!("unparseable close {:?}", record.get(close_col).unwrap_or("")),
            }),
            (Some(_), Some(c)) if !(c.is_finite() && c > 0.0) => issues.push(RowIssue {
                line,
                message: format!("close must be positive, got {c}"),
            }),
            (Some(d), Some(c)) => rows.push((d, c, line)),
        }
    }
    rows.sort_by_key(|r| (r.0, r.2));
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            issues.push(RowIssue {
                line: pair[1].2,
                message: format!("duplicate date {} (also on line {})", pair[1].0, pair[0].2),
            });
        }
    }
    if !issues.is_empty() {
        issues.sort_by_key(|i| i.line);
        return Err(ForecastError::Rows(issues));
    }
    PriceSeries::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect())
}

/// Writes the series as `date,close` with round-trip float formatting.
pub fn write_prices<W: std::io::Write>(prices: &PriceSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "close"])?;
    for (d, c) in prices.dates().iter().zip(prices.closes()) {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// SHA-256 over the canonical `date,close` rendering of the series.
pub fn data_fingerprint(prices: &PriceSeries) -> String {
    let mut hasher = Sha256::new();
    for (d, c) in prices.dates().iter().zip(prices.closes()) {
        hasher.update(format!("{d},{c}\n").as_bytes());
    }
    hex::encode(hasher.finalize())
}
