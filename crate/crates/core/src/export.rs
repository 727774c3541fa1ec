//! CSV and JSON Lines readers and writers for study artifacts.
//!
//! Every writer goes through a temporary file that is renamed into place, so
//! an interrupted or failed write never leaves a partial artifact behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::engine::{BacktestReport, SummaryRow};
use crate::error::{Error, Result};
use crate::spectral::{Grouping, SpectralClustering};
use crate::tsne::Embedding;

/// Companion text file holding `key=value` lines for an artifact.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes `contents` to `path` via a temporary sibling file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(contents)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

fn key_values(pairs: &[(String, String)]) -> Vec<u8> {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out.into_bytes()
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Writes `ticker,y1,...,yd` plus a sidecar with the configuration and final cost.
pub fn write_embedding(path: &Path, tickers: &[String], embedding: &Embedding) -> Result<()> {
    let (n, d) = embedding.points.dim();
    if tickers.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} tickers for {n} embedded points",
            tickers.len()
        )));
    }
    let mut header = vec!["ticker".to_string()];
    header.extend((1..=d).map(|k| format!("y{k}")));
    let rows = tickers.iter().zip(embedding.points.outer_iter()).map(|(t, p)| {
        let mut row = vec![t.clone()];
        row.extend(p.iter().map(|v| v.to_string()));
        row
    });
    let mut meta: Vec<(String, String)> = embedding
        .config_used
        .to_key_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    meta.push(("final_cost".into(), embedding.final_cost.to_string()));
    meta.push((
        "unconverged_bandwidths".into(),
        embedding.affinities.unconverged.len().to_string(),
    ));
    write_atomic(path, &csv_bytes(&header, rows)?)?;
    write_atomic(&sidecar_path(path), &key_values(&meta))
}

/// Reads an embedding CSV back as tickers and an `n x d` matrix.
pub fn read_embedding(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = reader(path)?;
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::ParseError {
            row: 0,
            message: "embedding needs a ticker column and at least one coordinate".into(),
        });
    }
    let mut tickers = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        tickers.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::ParseError {
                row: i + 1,
                message: format!("bad coordinate `{field}`"),
            })?;
            values.push(v);
        }
    }
    let n = tickers.len();
    let points = Array2::from_shape_vec((n, width - 1), values).map_err(|e| Error::ParseError {
        row: 0,
        message: e.to_string(),
    })?;
    Ok((tickers, points))
}

/// Writes `ticker,group_label` plus a sidecar with clustering diagnostics.
pub fn write_grouping(
    path: &Path,
    tickers: &[String],
    grouping: &Grouping,
    clustering: Option<&SpectralClustering>,
) -> Result<()> {
    if tickers.len() != grouping.len() {
        return Err(Error::GroupingMismatch {
            grouping: grouping.len(),
            panel: tickers.len(),
        });
    }
    let header = vec!["ticker".to_string(), "group_label".to_string()];
    let rows = tickers
        .iter()
        .zip(grouping.labels())
        .map(|(t, l)| vec![t.clone(), l.to_string()]);
    let mut meta = vec![
        ("g".to_string(), grouping.g().to_string()),
        ("group_sizes".to_string(), join(grouping.sizes())),
    ];
    if let Some(c) = clustering {
        meta.push(("requested_k".into(), c.requested_k.to_string()));
        meta.push(("eigenvalues".into(), join(&c.eigenvalues)));
        meta.push(("degenerate_rows".into(), join(&c.degenerate_rows)));
        meta.push(("compacted".into(), c.compacted.to_string()));
    }
    write_atomic(path, &csv_bytes(&header, rows)?)?;
    write_atomic(&sidecar_path(path), &key_values(&meta))
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Reads a grouping CSV; labels are compacted to `0..g` in numeric order.
pub fn read_grouping(path: &Path) -> Result<(Vec<String>, Grouping)> {
    let mut rdr = reader(path)?;
    let mut tickers = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::ParseError {
                row: i + 1,
                message: "expected ticker,group_label".into(),
            });
        }
        tickers.push(rec[0].to_string());
        labels.push(rec[1].parse::<usize>().map_err(|_| Error::ParseError {
            row: i + 1,
            message: format!("bad group label `{}`", &rec[1]),
        })?);
    }
    Ok((tickers, Grouping::compact(&labels).0))
}

/// Writes `date,test_return` for a backtest.
pub fn write_returns(path: &Path, report: &BacktestReport) -> Result<()> {
    let header = vec!["date".to_string(), "test_return".to_string()];
    let rows = report
        .dates
        .iter()
        .zip(&report.test_returns)
        .map(|(d, r)| vec![d.to_string(), r.to_string()]);
    write_atomic(path, &csv_bytes(&header, rows)?)
}

pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "g", "sharpe_annualized", "bootstrap_se", "n_obs"];

/// Summary table as CSV text with fixed six-decimal formatting.
pub fn format_summary(rows: &[SummaryRow]) -> Result<String> {
    let header: Vec<String> = SUMMARY_HEADER.iter().map(|s| s.to_string()).collect();
    let body = rows.iter().map(|r| {
        vec![
            r.strategy.clone(),
            r.g.to_string(),
            format!("{:.6}", r.sharpe_annualized),
            r.bootstrap_se.map(|se| format!("{se:.6}")).unwrap_or_default(),
            r.n_obs.to_string(),
        ]
    });
    String::from_utf8(csv_bytes(&header, body)?)
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_atomic(path, format_summary(rows)?.as_bytes())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(Error::ParseError {
            row: 0,
            message: format!("expected header {}", SUMMARY_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::ParseError {
            row: i + 1,
            message: format!("bad {what}"),
        };
        out.push(SummaryRow {
            strategy: rec[0].to_string(),
            g: rec[1].parse().map_err(|_| bad("g"))?,
            sharpe_annualized: rec[2].parse().map_err(|_| bad("sharpe_annualized"))?,
            bootstrap_se: match &rec[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("bootstrap_se"))?),
            },
            n_obs: rec[4].parse().map_err(|_| bad("n_obs"))?,
        });
    }
    Ok(out)
}

/// One JSON object per epoch per report.
pub fn write_epoch_log(path: &Path, reports: &[BacktestReport]) -> Result<()> {
    let mut out = Vec::new();
    for record in reports.iter().flat_map(|r| &r.epochs) {
        serde_json::to_writer(&mut out, record)
            .map_err(|e| Error::InvalidInput(format!("epoch log: {e}")))?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}
