//! CSV input (`date,price` or `date,price1,price2`) and output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{CliError, CliResult};

/// Rows of a price file, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub dates: Vec<String>,
    /// One column for a spread file, two for a pair file.
    pub columns: Vec<Vec<f64>>,
}

impl PriceTable {
    pub fn is_pair(&self) -> bool {
        self.columns.len() == 2
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Seconds since the epoch of an ISO-8601 date or date-time.
fn parse_date(s: &str) -> Option<i64> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

/// Reads a price file. The header decides the layout: `price1,price2`
/// gives a pair, otherwise `price` is required. Dates must be ISO-8601 and
/// strictly increasing; every price must be a finite positive number.
pub fn read_prices(path: &Path) -> CliResult<PriceTable> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_prices_from(file, path)
}

pub fn read_prices_from<R: std::io::Read>(reader: R, path: &Path) -> CliResult<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| parse_err(1, format!("missing column `{name}`"));
    let date_col = find("date").ok_or_else(|| missing("date"))?;
    let price_cols: Vec<usize> = match (find("price1"), find("price2"), find("price")) {
        (Some(a), Some(b), _) => vec![a, b],
        (Some(_), None, _) => return Err(missing("price2")),
        (None, Some(_), _) => return Err(missing("price1")),
        (None, None, Some(p)) => vec![p],
        (None, None, None) => return Err(missing(if headers.len() <= 1 { "price" } else { "price1" })),
    };
    let mut dates = Vec::new();
    let mut columns = vec![Vec::new(); price_cols.len()];
    let mut last: Option<i64> = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let date = rec.get(date_col).unwrap_or("");
        let t = parse_date(date).ok_or_else(|| parse_err(line, format!("`{date}` is not an ISO-8601 date")))?;
        if last.is_some_and(|prev| t <= prev) {
            return Err(parse_err(line, format!("date `{date}` is not after the previous row")));
        }
        last = Some(t);
        for (col, &idx) in columns.iter_mut().zip(&price_cols) {
            let field = rec.get(idx).unwrap_or("");
            if field.is_empty() {
                return Err(parse_err(line, format!("missing value in column `{}`", &headers[idx])));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(parse_err(line, format!("price must be finite and positive, got `{field}`")));
            }
            col.push(v);
        }
        dates.push(date.to_string());
    }
    Ok(PriceTable { dates, columns })
}

/// Writes a header row and data rows. Numbers use Rust's shortest
/// round-trip formatting; NaN is written as `NaN`.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_io(path, e))?;
    w.write_record(header).map_err(|e| csv_to_io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(|e| csv_to_io(path, e))?;
    }
    w.flush().map_err(io)
}

fn csv_to_io(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e.to_string()))
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) if v.is_nan() => "NaN".to_string(),
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

/// Writes a value as pretty JSON followed by a newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Creates `dir` if needed and returns `dir/name`.
pub fn output_path(dir: &Path, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.join(name))
}
