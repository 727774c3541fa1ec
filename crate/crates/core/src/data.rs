//! Price and metadata ingestion, discrete returns and rolling window splits.
//!
//! Dates are plain calendar labels. Rows are trading days and a "year" is
//! 252 rows; no calendar arithmetic happens anywhere in this crate.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Rectangular panel of strictly positive prices, one column per company.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: Array2<f64>,
}

impl PricePanel {
    /// Builds a panel, checking ordering, uniqueness and positivity.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: Array2<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != tickers.len() {
            return Err(Error::InvalidInput(format!(
                "price matrix is {}x{} but there are {} dates and {} tickers",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        check_unique_tickers(&tickers)?;
        for pair in dates.windows(2) {
            if pair[1] == pair[0] {
                return Err(Error::DuplicateDate(pair[1].to_string()));
            }
            if pair[1] < pair[0] {
                return Err(Error::InvalidInput(format!(
                    "dates not increasing: {} after {}",
                    pair[1], pair[0]
                )));
            }
        }
        for ((row, col), &value) in prices.indexed_iter() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidPrice {
                    row: row + 1,
                    col: tickers[col].clone(),
                    value,
                });
            }
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> ArrayView2<'_, f64> {
        self.prices.view()
    }

    pub fn n_rows(&self) -> usize {
        self.prices.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.prices.ncols()
    }
}

/// Daily simple returns. Row `t` holds the return realised on `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    returns: Array2<f64>,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: Array2<f64>) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != tickers.len() {
            return Err(Error::InvalidInput(format!(
                "return matrix is {}x{} but there are {} dates and {} tickers",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        check_unique_tickers(&tickers)?;
        if let Some(((row, col), v)) = returns
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v > -1.0))
        {
            return Err(Error::InvalidInput(format!(
                "return {v} at row {row}, column {} is not a valid simple return",
                tickers[col]
            )));
        }
        Ok(Self {
            dates,
            tickers,
            returns,
        })
    }

    /// Builds a panel with synthetic consecutive dates starting 2000-01-03.
    /// Handy for simulated data where only row order matters.
    pub fn with_generated_dates(tickers: Vec<String>, returns: Array2<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let dates = start
            .iter_days()
            .take(returns.nrows())
            .collect::<Vec<_>>();
        Self::new(dates, tickers, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> ArrayView2<'_, f64> {
        self.returns.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.returns.column(j)
    }

    pub fn n_rows(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Sub-panel over a contiguous row range.
    pub fn slice_rows(&self, rows: Range<usize>) -> ReturnsPanel {
        ReturnsPanel {
            dates: self.dates[rows.clone()].to_vec(),
            tickers: self.tickers.clone(),
            returns: self.returns.slice(s![rows, ..]).to_owned(),
        }
    }

    /// Companies as points: one row per ticker, one coordinate per day.
    pub fn company_matrix(&self, rows: Range<usize>) -> Array2<f64> {
        self.returns.slice(s![rows, ..]).t().to_owned()
    }
}

fn check_unique_tickers(tickers: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(tickers.len());
    for t in tickers {
        if !seen.insert(t.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate ticker {t}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop companies with any blank cell instead of failing.
    pub drop_incomplete: bool,
}

/// Loads a price CSV, rejecting any blank cell.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    load_price_csv_with(path, LoadOptions::default()).map(|(panel, _)| panel)
}

/// Loads a price CSV. Returns the panel and the tickers dropped for
/// incomplete history (always empty unless `drop_incomplete` is set).
pub fn load_price_csv_with(
    path: impl AsRef<Path>,
    options: LoadOptions,
) -> Result<(PricePanel, Vec<String>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers()?.clone();
    if header.is_empty() || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::ParseError {
            row: 0,
            message: "header must start with `date`".into(),
        });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if tickers.is_empty() {
        return Err(Error::ParseError {
            row: 0,
            message: "no ticker columns".into(),
        });
    }
    check_unique_tickers(&tickers)?;

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        if record.len() != tickers.len() + 1 {
            return Err(Error::ParseError {
                row,
                message: format!("expected {} fields, got {}", tickers.len() + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|e| {
            Error::ParseError {
                row,
                message: format!("bad date `{}`: {e}", &record[0]),
            }
        })?;
        let mut values = Vec::with_capacity(tickers.len());
        for (col, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                if !options.drop_incomplete {
                    return Err(Error::MissingData {
                        row,
                        col: tickers[col].clone(),
                    });
                }
                values.push(None);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::ParseError {
                row,
                message: format!("bad number `{cell}` in column {}", tickers[col]),
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidPrice {
                    row,
                    col: tickers[col].clone(),
                    value,
                });
            }
            values.push(Some(value));
        }
        rows.push((date, values));
    }

    rows.sort_by_key(|(date, _)| *date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateDate(pair[0].0.to_string()));
        }
    }

    let keep: Vec<usize> = (0..tickers.len())
        .filter(|&j| rows.iter().all(|(_, v)| v[j].is_some()))
        .collect();
    let dropped = (0..tickers.len())
        .filter(|j| !keep.contains(j))
        .map(|j| tickers[j].clone())
        .collect::<Vec<_>>();

    let mut prices = Array2::zeros((rows.len(), keep.len()));
    for (t, (_, values)) in rows.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            prices[[t, c]] = values[j].expect("kept columns are complete");
        }
    }
    let dates = rows.iter().map(|(d, _)| *d).collect();
    let kept = keep.iter().map(|&j| tickers[j].clone()).collect();
    Ok((PricePanel::new(dates, kept, prices)?, dropped))
}

/// Writes a panel in the same layout `load_price_csv` reads. Values are
/// written with the shortest representation that round-trips exactly.
pub fn write_price_csv(panel: &PricePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut text = String::from("date");
    for t in &panel.tickers {
        text.push(',');
        text.push_str(t);
    }
    text.push('\n');
    for (t, date) in panel.dates.iter().enumerate() {
        text.push_str(&date.format(DATE_FORMAT).to_string());
        for v in panel.prices.row(t) {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// `r[t][j] = p[t+1][j] / p[t][j] - 1`, dated by the later day.
pub fn compute_discrete_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    let rows = panel.n_rows();
    if rows < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: rows,
        });
    }
    let prices = &panel.prices;
    let returns = Array2::from_shape_fn((rows - 1, panel.n_assets()), |(t, j)| {
        prices[[t + 1, j]] / prices[[t, j]] - 1.0
    });
    ReturnsPanel::new(panel.dates[1..].to_vec(), panel.tickers.clone(), returns)
}

/// One rolling step: train rows, validation rows, then a single test row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test_point: usize,
}

/// Every feasible split, shifting by one row each time.
pub fn rolling_windows(
    panel: &ReturnsPanel,
    train_len: usize,
    val_len: usize,
) -> Result<Vec<WindowSplit>> {
    rolling_windows_for_rows(panel.n_rows(), train_len, val_len)
}

pub fn rolling_windows_for_rows(
    rows: usize,
    train_len: usize,
    val_len: usize,
) -> Result<Vec<WindowSplit>> {
    if train_len == 0 {
        return Err(Error::InvalidInput("train_len must be at least 1".into()));
    }
    let lookback = train_len + val_len;
    if rows <= lookback {
        return Err(Error::NoTestData {
            rows,
            train_len,
            val_len,
        });
    }
    Ok((lookback..rows)
        .map(|test_point| {
            let start = test_point - lookback;
            WindowSplit {
                train: start..start + train_len,
                validation: start + train_len..test_point,
                test_point,
            }
        })
        .collect())
}

/// Industry classification for one company.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompanyMeta {
    pub ticker: String,
    pub industry_code: String,
}

impl CompanyMeta {
    pub fn new(ticker: impl Into<String>, industry_code: impl Into<String>) -> Result<Self> {
        let ticker = ticker.into();
        let industry_code = industry_code.into();
        if industry_code.is_empty() || !industry_code.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidInput(format!(
                "industry code `{industry_code}` for {ticker} must be a nonempty digit string"
            )));
        }
        Ok(Self {
            ticker,
            industry_code,
        })
    }

    /// Leading `digits` characters of the code (the whole code if shorter).
    pub fn prefix(&self, digits: usize) -> &str {
        &self.industry_code[..digits.min(self.industry_code.len())]
    }
}

/// Reads `ticker,industry_code` rows.
pub fn load_meta_csv(path: impl AsRef<Path>) -> Result<Vec<CompanyMeta>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers()?.clone();
    if header.len() < 2
        || !header[0].eq_ignore_ascii_case("ticker")
        || !header[1].eq_ignore_ascii_case("industry_code")
    {
        return Err(Error::ParseError {
            row: 0,
            message: "metadata header must be `ticker,industry_code`".into(),
        });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::ParseError {
                row: idx + 1,
                message: "expected ticker and industry_code".into(),
            });
        }
        if !seen.insert(record[0].to_owned()) {
            return Err(Error::InvalidInput(format!(
                "duplicate metadata for {}",
                &record[0]
            )));
        }
        out.push(CompanyMeta::new(&record[0], &record[1])?);
    }
    Ok(out)
}
