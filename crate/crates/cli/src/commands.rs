use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clustfolio_core::data::{
    compute_discrete_returns, load_meta_csv, load_price_csv_with, CompanyMeta, LoadOptions,
    ReturnsPanel,
};
use clustfolio_core::engine::{run_study, Strategy, SummaryRow};
use clustfolio_core::export::{
    format_summary, read_embedding, read_grouping, read_summary, sidecar_path, write_atomic,
    write_embedding, write_epoch_log, write_grouping, write_returns,
};
use clustfolio_core::seed::{derive_seed, SeedRole};
use clustfolio_core::spectral::{median_scale, spectral_cluster, Grouping};
use clustfolio_core::tsne::{run_tsne, TsneConfig};
use ndarray::Array2;

use crate::config::{RunConfig, UsageError};
use crate::svg::{scatter, sharpe_chart, SharpeChart};

/// Files written by one command. Unless committed, they are removed when
/// the command fails so no partial set of outputs is left behind.
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            written: Vec::new(),
            committed: false,
        })
    }

    fn text(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        self.written.push(path.clone());
        write_atomic(&path, contents.as_bytes())?;
        Ok(())
    }

    /// Runs a writer that produces `path` and its `.meta` sidecar.
    fn with_sidecar(&mut self, path: PathBuf, write: impl FnOnce(&Path) -> clustfolio_core::Result<()>) -> Result<()> {
        self.written.push(path.clone());
        self.written.push(sidecar_path(&path));
        write(&path)?;
        Ok(())
    }

    fn file(&mut self, path: PathBuf, write: impl FnOnce(&Path) -> clustfolio_core::Result<()>) -> Result<()> {
        self.written.push(path.clone());
        write(&path)?;
        Ok(())
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}

fn report_written(files: &[PathBuf]) {
    for f in files {
        log::info!("wrote {}", f.display());
    }
}

fn load_returns(config: &RunConfig) -> Result<ReturnsPanel> {
    let path = config.prices_path()?;
    let options = LoadOptions {
        drop_incomplete: config.drop_incomplete,
    };
    let (prices, dropped) = load_price_csv_with(path, options)
        .with_context(|| format!("loading {}", path.display()))?;
    if !dropped.is_empty() {
        log::warn!("dropped {} incomplete tickers: {}", dropped.len(), dropped.join(", "));
    }
    log::info!(
        "{} companies, {} price rows from {}",
        prices.n_assets(),
        prices.n_rows(),
        path.display()
    );
    Ok(compute_discrete_returns(&prices)?)
}

fn load_meta(config: &RunConfig) -> Result<Option<Vec<CompanyMeta>>> {
    match config.meta_path()? {
        Some(path) => Ok(Some(
            load_meta_csv(path).with_context(|| format!("loading {}", path.display()))?,
        )),
        None => Ok(None),
    }
}

fn points2(points: &Array2<f64>) -> Vec<(f64, f64)> {
    points.outer_iter().map(|p| (p[0], p[1])).collect()
}

fn perplexity_tag(p: f64) -> String {
    p.to_string()
}

/// Color labels and legend names for embedding plots.
fn coloring(
    tickers: &[String],
    grouping_file: Option<&Path>,
    industry_digits: Option<usize>,
    meta: Option<&[CompanyMeta]>,
) -> Result<Option<(Vec<usize>, Vec<String>)>> {
    if let Some(path) = grouping_file {
        let (names, grouping) = read_grouping(path)?;
        let by_ticker: HashMap<&str, usize> = names
            .iter()
            .map(String::as_str)
            .zip(grouping.labels().iter().copied())
            .collect();
        let labels = tickers
            .iter()
            .map(|t| {
                by_ticker
                    .get(t.as_str())
                    .copied()
                    .with_context(|| format!("ticker {t} missing from {}", path.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        let legend = (0..grouping.g()).map(|g| format!("group {g}")).collect();
        return Ok(Some((labels, legend)));
    }
    if let Some(digits) = industry_digits {
        let meta = meta.ok_or_else(|| UsageError("--color-industry needs --meta".into()))?;
        let by_ticker: HashMap<&str, &CompanyMeta> = meta.iter().map(|m| (m.ticker.as_str(), m)).collect();
        let keys = tickers
            .iter()
            .map(|t| {
                by_ticker
                    .get(t.as_str())
                    .map(|m| m.prefix(digits).to_string())
                    .ok_or_else(|| clustfolio_core::Error::MetadataMissing(t.clone()))
            })
            .collect::<clustfolio_core::Result<Vec<_>>>()?;
        let grouping = Grouping::from_keys(&keys);
        let mut legend = vec![String::new(); grouping.g()];
        for (key, &l) in keys.iter().zip(grouping.labels()) {
            legend[l] = format!("code {key}");
        }
        return Ok(Some((grouping.labels().to_vec(), legend)));
    }
    Ok(None)
}

fn tsne_config(config: &RunConfig, index: usize, perplexity: f64) -> TsneConfig {
    TsneConfig {
        perplexity,
        seed: derive_seed(config.engine.master_seed, SeedRole::Tsne, index as u64, 0, 0),
        ..config.engine.tsne.clone()
    }
}

pub fn embed(config: &RunConfig, color_grouping: Option<&Path>, color_industry: Option<usize>) -> Result<()> {
    let panel = load_returns(config)?;
    let meta = load_meta(config)?;
    let colors = coloring(panel.tickers(), color_grouping, color_industry, meta.as_deref())?;
    let x = panel.company_matrix(0..panel.n_rows());
    let mut out = Outputs::new(&config.out)?;
    for (i, &p) in config.engine.perplexity_grid.iter().enumerate() {
        let tsne = tsne_config(config, i, p);
        log::info!("embedding at perplexity {p}");
        let embedding = run_tsne(x.view(), &tsne).with_context(|| format!("perplexity {p}"))?;
        let stem = format!("embedding_p{}", perplexity_tag(p));
        out.with_sidecar(config.out.join(format!("{stem}.csv")), |path| {
            write_embedding(path, panel.tickers(), &embedding)
        })?;
        let svg = scatter(
            &format!("t-SNE, perplexity {p}"),
            &points2(&embedding.points),
            colors.as_ref().map(|(l, n)| (l.as_slice(), n.as_slice())),
        );
        out.text(config.out.join(format!("{stem}.svg")), &svg)?;
    }
    report_written(&out.commit());
    Ok(())
}

pub fn cluster(config: &RunConfig, embedding_file: Option<&Path>) -> Result<()> {
    let (tickers, points) = match embedding_file {
        Some(path) => read_embedding(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            let panel = load_returns(config)?;
            let p = config.engine.perplexity_grid[0];
            log::info!("no embedding given; embedding at perplexity {p}");
            let x = panel.company_matrix(0..panel.n_rows());
            let e = run_tsne(x.view(), &tsne_config(config, 0, p))?;
            (panel.tickers().to_vec(), e.points)
        }
    };
    if points.ncols() < 2 {
        bail!("embedding needs at least two coordinates");
    }
    let scale = median_scale(points.view());
    let mut out = Outputs::new(&config.out)?;
    for &k in &config.engine.group_counts {
        let seed = derive_seed(config.engine.master_seed, SeedRole::Cluster, 0, k as u64, 0);
        let clustering = spectral_cluster(points.view(), k, scale, seed)?;
        for d in clustering.diagnostics() {
            log::warn!("k = {k}: {d}");
        }
        let grouping = &clustering.grouping;
        out.with_sidecar(config.out.join(format!("grouping_k{k}.csv")), |path| {
            write_grouping(path, &tickers, grouping, Some(&clustering))
        })?;
        let legend: Vec<String> = grouping
            .sizes()
            .iter()
            .enumerate()
            .map(|(g, s)| format!("group {g} ({s})"))
            .collect();
        let svg = scatter(
            &format!("spectral clustering, {} groups", grouping.g()),
            &points2(&points),
            Some((grouping.labels(), &legend)),
        );
        out.text(config.out.join(format!("grouping_k{k}.svg")), &svg)?;
    }
    report_written(&out.commit());
    Ok(())
}

fn default_strategies(has_meta: bool) -> Vec<Strategy> {
    Strategy::ALL
        .into_iter()
        .filter(|s| has_meta || !matches!(s, Strategy::Tr2 | Strategy::Tr4))
        .collect()
}

pub fn chart_data(rows: &[SummaryRow]) -> SharpeChart {
    let mut by_g: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut chart = SharpeChart::default();
    for r in rows {
        let v = Some(r.sharpe_annualized);
        if let Some(g) = r.strategy.strip_prefix("TS_").and_then(|g| g.parse().ok()) {
            by_g.entry(g).or_default().0 = v;
        } else if let Some(g) = r.strategy.strip_prefix("RND_").and_then(|g| g.parse().ok()) {
            by_g.entry(g).or_default().1 = v;
        } else {
            match r.strategy.as_str() {
                "MW_full" => chart.mw_full = v,
                "N_full" => chart.n_full = v,
                "TR2" => chart.tr2 = v,
                "TR4" => chart.tr4 = v,
                _ => {}
            }
        }
    }
    chart.by_g = by_g.into_iter().map(|(g, (ts, rnd))| (g, ts, rnd)).collect();
    chart
}

fn chart_svg(rows: &[SummaryRow]) -> String {
    sharpe_chart("Annualized Sharpe ratio by number of groups", &chart_data(rows))
}

pub fn backtest(config: &RunConfig) -> Result<()> {
    let panel = load_returns(config)?;
    let meta = load_meta(config)?;
    let strategies = config
        .strategies
        .clone()
        .unwrap_or_else(|| default_strategies(meta.is_some()));
    if meta.is_none() && strategies.iter().any(|s| matches!(s, Strategy::Tr2 | Strategy::Tr4)) {
        return Err(UsageError("TR2/TR4 need --meta".into()).into());
    }
    let names: Vec<String> = strategies.iter().map(Strategy::to_string).collect();
    log::info!("running strategies {}", names.join(", "));
    let reports = run_study(&panel, meta.as_deref(), &strategies, &config.engine)?;
    let rows: Vec<SummaryRow> = reports.iter().map(|r| r.summary()).collect();

    let mut out = Outputs::new(&config.out)?;
    out.text(config.out.join("summary.csv"), &format_summary(&rows)?)?;
    for report in &reports {
        out.file(config.out.join(format!("returns_{}.csv", report.strategy)), |path| {
            write_returns(path, report)
        })?;
    }
    out.file(config.out.join("epochs.jsonl"), |path| write_epoch_log(path, &reports))?;
    out.text(config.out.join("sharpe_vs_g.svg"), &chart_svg(&rows))?;
    report_written(&out.commit());
    Ok(())
}

/// Fixed-width text rendering of the summary table.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!("{:<10} {:>4} {:>10} {:>10} {:>7}\n", "strategy", "g", "sharpe", "se", "n_obs");
    for r in rows {
        let se = r.bootstrap_se.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<10} {:>4} {:>10.3} {:>10} {:>7}\n",
            r.strategy, r.g, r.sharpe_annualized, se, r.n_obs
        ));
    }
    s
}

pub fn report(config: &RunConfig, summary: Option<&Path>) -> Result<()> {
    let default = config.out.join("summary.csv");
    let path = summary.unwrap_or(&default);
    if !path.is_file() {
        return Err(UsageError(format!("summary file {} does not exist", path.display())).into());
    }
    let rows = read_summary(path).with_context(|| format!("reading {}", path.display()))?;
    let table = summary_table(&rows);
    let mut out = Outputs::new(&config.out)?;
    out.text(config.out.join("summary.txt"), &table)?;
    out.text(config.out.join("sharpe_vs_g.svg"), &chart_svg(&rows))?;
    report_written(&out.commit());
    print!("{table}");
    Ok(())
}
