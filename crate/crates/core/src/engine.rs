//! Decision engine and rolling-window backtests.
//!
//! For each selection epoch the engine embeds the training window once per
//! perplexity, clusters each embedding with several seeds for every
//! requested group count, scores every grouping by the validation Sharpe
//! ratio of its grouped tangency portfolio and keeps the best one for the
//! next `reselect_every` test days. Tangency weights are re-estimated every
//! test day on the trailing `est_window` grouped rows.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{s, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{rolling_windows, CompanyMeta, ReturnsPanel, WindowSplit};
use crate::error::{Error, Result};
use crate::portfolio::{
    dot, group_matrix, moments_of_rows, sharpe, sharpe_with_se, tangency_from_moments,
    SharpeEstimate,
};
use crate::seed::{derive_seed, SeedRole};
use crate::spectral::{
    affinity_from_embedding, cluster_decomposition, median_scale, Grouping,
    SpectralDecomposition, DEFAULT_KMEANS_RESTARTS,
};
use crate::tsne::{run_tsne, Embedding, TsneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub perplexity_grid: Vec<f64>,
    /// Spectral clusterings per embedding, each with its own seed.
    pub clustering_restarts: usize,
    pub group_counts: Vec<usize>,
    pub train_len: usize,
    pub val_len: usize,
    /// Rows used to estimate moments for each tangency portfolio.
    pub est_window: usize,
    pub reselect_every: usize,
    pub master_seed: u64,
    pub random_bench_reps: usize,
    pub bootstrap_reps: usize,
    /// k-means restarts inside a single spectral clustering.
    pub kmeans_restarts: usize,
    /// Template for every embedding; perplexity and seed are overridden.
    pub tsne: TsneConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            perplexity_grid: (0..11).map(|i| 3.0 + 5.0 * i as f64).collect(),
            clustering_restarts: 30,
            group_counts: (2..=20).collect(),
            train_len: 1260,
            val_len: 252,
            est_window: 504,
            reselect_every: 252,
            master_seed: 0,
            random_bench_reps: 100,
            bootstrap_reps: 1000,
            kmeans_restarts: DEFAULT_KMEANS_RESTARTS,
            tsne: TsneConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.perplexity_grid.is_empty() {
            return fail("perplexity grid is empty");
        }
        if self.group_counts.is_empty() {
            return fail("group count list is empty");
        }
        if self.group_counts.contains(&0) {
            return fail("group counts must be positive");
        }
        if self.clustering_restarts == 0
            || self.train_len == 0
            || self.val_len == 0
            || self.reselect_every == 0
            || self.random_bench_reps == 0
            || self.kmeans_restarts == 0
        {
            return fail("all counts must be positive");
        }
        if self.est_window < 2 {
            return fail("est_window must be at least 2");
        }
        if self.train_len < self.est_window {
            return fail("train_len must be at least est_window");
        }
        if self.bootstrap_reps < 2 {
            return fail("bootstrap_reps must be at least 2");
        }
        Ok(())
    }

    fn bootstrap_seed(&self) -> u64 {
        derive_seed(self.master_seed, SeedRole::Bootstrap, 0, 0, 0)
    }
}

/// One grouping produced for a (perplexity, restart, g) triple.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub perplexity: f64,
    pub perplexity_index: usize,
    pub restart: usize,
    pub restart_seed: u64,
    pub g: usize,
    pub grouping: Grouping,
    pub diagnostics: Vec<String>,
    /// `None` until scored; `-inf` for degenerate candidates.
    pub val_sharpe: Option<f64>,
}

/// Embedding of a training window at one grid perplexity, with the spectral
/// decomposition of its affinity graph.
#[derive(Debug, Clone)]
pub struct GridEmbedding {
    pub perplexity: f64,
    pub perplexity_index: usize,
    pub embedding: Embedding,
    pub scale: f64,
    pub decomposition: SpectralDecomposition,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingGrid {
    pub entries: Vec<GridEmbedding>,
    pub diagnostics: Vec<String>,
}

/// Embeds the training window at every grid perplexity. Perplexities that
/// fail (for example out of range for the company count) are skipped and
/// noted; the call fails only when none succeed.
pub fn embed_grid(train: &ReturnsPanel, config: &EngineConfig, epoch: usize) -> Result<EmbeddingGrid> {
    let x = train.company_matrix(0..train.n_rows());
    let results: Vec<Result<GridEmbedding>> = config
        .perplexity_grid
        .par_iter()
        .enumerate()
        .map(|(pi, &perplexity)| {
            let tsne = TsneConfig {
                perplexity,
                seed: derive_seed(config.master_seed, SeedRole::Tsne, pi as u64, 0, epoch as u64),
                ..config.tsne.clone()
            };
            let embedding = run_tsne(x.view(), &tsne)?;
            let scale = median_scale(embedding.points.view());
            let affinity = affinity_from_embedding(embedding.points.view(), scale)?;
            let decomposition = SpectralDecomposition::new(&affinity)?;
            Ok(GridEmbedding {
                perplexity,
                perplexity_index: pi,
                embedding,
                scale,
                decomposition,
            })
        })
        .collect();

    let mut grid = EmbeddingGrid::default();
    let mut first_error = None;
    for (pi, res) in results.into_iter().enumerate() {
        match res {
            Ok(entry) => grid.entries.push(entry),
            Err(e) => {
                grid.diagnostics.push(format!(
                    "perplexity {} skipped: {e}",
                    config.perplexity_grid[pi]
                ));
                first_error.get_or_insert(e);
            }
        }
    }
    match (grid.entries.is_empty(), first_error) {
        (true, Some(e)) => Err(e),
        _ => Ok(grid),
    }
}

/// Ungraded candidates for one group count from a precomputed grid.
pub fn candidates_from_grid(
    grid: &EmbeddingGrid,
    g: usize,
    config: &EngineConfig,
    epoch: usize,
) -> (Vec<Candidate>, Vec<String>) {
    let jobs: Vec<(&GridEmbedding, usize)> = grid
        .entries
        .iter()
        .flat_map(|e| (0..config.clustering_restarts).map(move |r| (e, r)))
        .collect();
    let results: Vec<Result<Candidate>> = jobs
        .par_iter()
        .map(|&(entry, restart)| {
            let restart_seed = derive_seed(
                config.master_seed,
                SeedRole::Cluster,
                entry.perplexity_index as u64,
                restart as u64,
                epoch as u64,
            );
            let clustering =
                cluster_decomposition(&entry.decomposition, g, restart_seed, config.kmeans_restarts)?;
            Ok(Candidate {
                perplexity: entry.perplexity,
                perplexity_index: entry.perplexity_index,
                restart,
                restart_seed,
                g,
                diagnostics: clustering.diagnostics(),
                grouping: clustering.grouping,
                val_sharpe: None,
            })
        })
        .collect();
    let mut candidates = Vec::with_capacity(results.len());
    let mut failures = BTreeMap::<String, usize>::new();
    for res in results {
        match res {
            Ok(c) => candidates.push(c),
            Err(e) => *failures.entry(e.to_string()).or_default() += 1,
        }
    }
    let diagnostics = failures
        .into_iter()
        .map(|(msg, count)| format!("{count} clusterings failed: {msg}"))
        .collect();
    (candidates, diagnostics)
}

/// `|grid| * restarts` ungraded candidates for group count `g`.
pub fn enumerate_candidates(
    train: &ReturnsPanel,
    g: usize,
    config: &EngineConfig,
    epoch: usize,
) -> Result<Vec<Candidate>> {
    let grid = embed_grid(train, config, epoch)?;
    let (candidates, diagnostics) = candidates_from_grid(&grid, g, config, epoch);
    for d in grid.diagnostics.iter().chain(&diagnostics) {
        log::warn!("epoch {epoch}, g = {g}: {d}");
    }
    Ok(candidates)
}

/// Realized returns of a daily re-estimated tangency portfolio.
#[derive(Debug, Clone, Default)]
pub struct RollingReturns {
    pub returns: Vec<f64>,
    /// Days whose covariance needed the ridge fallback.
    pub ridged_days: usize,
}

/// For each row `t` in `rows`, estimates moments on `grouped[t - est_window..t]`,
/// forms tangency weights and records their return on row `t`.
pub fn rolling_tangency_returns(
    grouped: ArrayView2<'_, f64>,
    rows: Range<usize>,
    est_window: usize,
) -> Result<RollingReturns> {
    if rows.start < est_window || rows.end > grouped.nrows() {
        return Err(Error::InsufficientData {
            needed: est_window + rows.len(),
            available: grouped.nrows(),
        });
    }
    let mut out = RollingReturns::default();
    out.returns.reserve(rows.len());
    for t in rows {
        let window = grouped.slice(s![t - est_window..t, ..]);
        let (mu, sigma) = moments_of_rows(window)?;
        let (w, ridged) = tangency_from_moments(mu.view(), sigma.view())?;
        out.ridged_days += usize::from(ridged);
        out.returns
            .push(dot(w.as_slice().expect("contiguous"), grouped.row(t)));
    }
    Ok(out)
}

/// Annualized validation Sharpe ratio of a grouping. `history` holds the
/// training rows followed by the `val_len` validation rows.
pub fn score_grouping(
    history: ArrayView2<'_, f64>,
    grouping: &Grouping,
    val_len: usize,
    est_window: usize,
) -> Result<f64> {
    let rows = history.nrows();
    if rows < val_len + est_window {
        return Err(Error::InsufficientData {
            needed: val_len + est_window,
            available: rows,
        });
    }
    let needed = history.slice(s![rows - val_len - est_window.., ..]);
    let grouped = group_matrix(needed, grouping)?;
    let realized = rolling_tangency_returns(grouped.view(), est_window..est_window + val_len, est_window)?;
    Ok(sharpe(&realized.returns)?.annualized_sharpe)
}

/// Validation score of a candidate; degenerate candidates score `-inf`.
pub fn score_candidate(
    candidate: &Candidate,
    train: &ReturnsPanel,
    validation: &ReturnsPanel,
    est_window: usize,
) -> f64 {
    let history = match ndarray::concatenate(Axis(0), &[train.returns(), validation.returns()]) {
        Ok(h) => h,
        Err(_) => return f64::NEG_INFINITY,
    };
    match score_grouping(history.view(), &candidate.grouping, validation.n_rows(), est_window) {
        Ok(score) => score,
        Err(e) => {
            log::debug!(
                "candidate (perplexity {}, restart {}) degenerate: {e}",
                candidate.perplexity,
                candidate.restart
            );
            f64::NEG_INFINITY
        }
    }
}

/// Highest finite validation score; ties go to the lower perplexity, then
/// the lower restart seed.
pub fn select_model(candidates: &[Candidate]) -> Result<&Candidate> {
    candidates
        .iter()
        .filter(|c| c.val_sharpe.is_some_and(f64::is_finite))
        .max_by(|a, b| {
            let (sa, sb) = (a.val_sharpe.unwrap(), b.val_sharpe.unwrap());
            sa.total_cmp(&sb)
                .then(b.perplexity.total_cmp(&a.perplexity))
                .then(b.restart_seed.cmp(&a.restart_seed))
        })
        .ok_or(Error::NoViableCandidate)
}

/// What the engine did in one selection epoch of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub strategy: String,
    pub epoch: usize,
    /// Test-point indices covered, `start..end`.
    pub start: usize,
    pub end: usize,
    pub start_date: String,
    pub perplexity: Option<f64>,
    pub restart_seed: Option<u64>,
    pub g_requested: usize,
    pub g: usize,
    pub group_sizes: Vec<usize>,
    pub labels: Vec<usize>,
    pub val_sharpe: Option<f64>,
    pub candidates: usize,
    pub viable_candidates: usize,
    pub ridged_days: usize,
    pub diagnostics: Vec<String>,
}

impl EpochRecord {
    pub fn grouping(&self) -> Grouping {
        Grouping::new(self.labels.clone(), self.g).expect("epoch records hold dense labels")
    }
}

/// Per-repetition results of the random-grouping benchmark.
#[derive(Debug, Clone)]
pub struct RepetitionSummary {
    pub sharpes: Vec<f64>,
    pub bootstrap_ses: Vec<f64>,
    /// Grouping used in each epoch, per repetition.
    pub groupings: Vec<Vec<Grouping>>,
}

impl RepetitionSummary {
    pub fn mean_sharpe(&self) -> f64 {
        self.sharpes.iter().sum::<f64>() / self.sharpes.len() as f64
    }

    pub fn mean_bootstrap_se(&self) -> f64 {
        self.bootstrap_ses.iter().sum::<f64>() / self.bootstrap_ses.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub strategy: String,
    /// Group count shown in the summary table.
    pub g: usize,
    pub dates: Vec<NaiveDate>,
    pub test_returns: Vec<f64>,
    pub sharpe: SharpeEstimate,
    pub epochs: Vec<EpochRecord>,
    pub repetitions: Option<RepetitionSummary>,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub g: usize,
    pub sharpe_annualized: f64,
    pub bootstrap_se: Option<f64>,
    pub n_obs: usize,
}

impl BacktestReport {
    /// Summary line; the random benchmark reports repetition averages.
    pub fn summary(&self) -> SummaryRow {
        let (sharpe_annualized, bootstrap_se) = match &self.repetitions {
            Some(reps) => (reps.mean_sharpe(), Some(reps.mean_bootstrap_se())),
            None => (self.sharpe.annualized_sharpe, self.sharpe.bootstrap_se),
        };
        SummaryRow {
            strategy: self.strategy.clone(),
            g: self.g,
            sharpe_annualized,
            bootstrap_se,
            n_obs: self.test_returns.len(),
        }
    }
}

#[derive(Debug, Clone)]
struct EpochSpan {
    index: usize,
    tests: Range<usize>,
    train: Range<usize>,
    validation: Range<usize>,
}

fn epoch_spans(splits: &[WindowSplit], reselect_every: usize) -> Vec<EpochSpan> {
    (0..splits.len())
        .step_by(reselect_every)
        .enumerate()
        .map(|(index, start)| {
            let end = (start + reselect_every).min(splits.len());
            EpochSpan {
                index,
                tests: start..end,
                train: splits[start].train.clone(),
                validation: splits[start].validation.clone(),
            }
        })
        .collect()
}

struct Plan {
    splits: Vec<WindowSplit>,
    spans: Vec<EpochSpan>,
}

impl Plan {
    fn new(panel: &ReturnsPanel, config: &EngineConfig) -> Result<Self> {
        config.validate()?;
        let splits = rolling_windows(panel, config.train_len, config.val_len)?;
        let spans = epoch_spans(&splits, config.reselect_every);
        Ok(Self { splits, spans })
    }

    fn test_dates(&self, panel: &ReturnsPanel) -> Vec<NaiveDate> {
        self.splits
            .iter()
            .map(|s| panel.dates()[s.test_point])
            .collect()
    }

    fn record(&self, panel: &ReturnsPanel, strategy: &str, span: &EpochSpan, grouping: &Grouping) -> EpochRecord {
        EpochRecord {
            strategy: strategy.to_string(),
            epoch: span.index,
            start: span.tests.start,
            end: span.tests.end,
            start_date: panel.dates()[self.splits[span.tests.start].test_point].to_string(),
            perplexity: None,
            restart_seed: None,
            g_requested: grouping.g(),
            g: grouping.g(),
            group_sizes: grouping.sizes().to_vec(),
            labels: grouping.labels().to_vec(),
            val_sharpe: None,
            candidates: 0,
            viable_candidates: 0,
            ridged_days: 0,
            diagnostics: Vec::new(),
        }
    }

    /// Test returns with one grouping per epoch. Returns per-epoch ridge counts too.
    fn grouped_returns(
        &self,
        panel: &ReturnsPanel,
        groupings: &[Grouping],
        est_window: usize,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        if groupings.len() != self.spans.len() {
            return Err(Error::InvalidInput(format!(
                "{} groupings for {} epochs",
                groupings.len(),
                self.spans.len()
            )));
        }
        let mut returns = Vec::with_capacity(self.splits.len());
        let mut ridged = Vec::with_capacity(self.spans.len());
        for (span, grouping) in self.spans.iter().zip(groupings) {
            let first = self.splits[span.tests.start].test_point;
            let last = self.splits[span.tests.end - 1].test_point;
            let rows = panel.returns().slice(s![first - est_window..=last, ..]).to_owned();
            let grouped = group_matrix(rows.view(), grouping)?;
            let rolled = rolling_tangency_returns(grouped.view(), est_window..grouped.nrows(), est_window)?;
            returns.extend(rolled.returns);
            ridged.push(rolled.ridged_days);
        }
        Ok((returns, ridged))
    }
}

fn finish(
    strategy: String,
    g: usize,
    dates: Vec<NaiveDate>,
    test_returns: Vec<f64>,
    epochs: Vec<EpochRecord>,
    config: &EngineConfig,
) -> Result<BacktestReport> {
    let sharpe = sharpe_with_se(&test_returns, config.bootstrap_reps, config.bootstrap_seed())?;
    Ok(BacktestReport {
        strategy,
        g,
        dates,
        test_returns,
        sharpe,
        epochs,
        repetitions: None,
    })
}

/// Test returns of a strategy that uses `groupings[e]` during epoch `e`.
pub fn run_grouped_backtest(
    panel: &ReturnsPanel,
    groupings: &[Grouping],
    config: &EngineConfig,
) -> Result<Vec<f64>> {
    let plan = Plan::new(panel, config)?;
    Ok(plan.grouped_returns(panel, groupings, config.est_window)?.0)
}

/// Number of selection epochs a panel yields under `config`.
pub fn epoch_count(panel: &ReturnsPanel, config: &EngineConfig) -> Result<usize> {
    Ok(Plan::new(panel, config)?.spans.len())
}

fn fixed_grouping_report(
    panel: &ReturnsPanel,
    config: &EngineConfig,
    strategy: &str,
    g: usize,
    grouping: &Grouping,
) -> Result<BacktestReport> {
    let plan = Plan::new(panel, config)?;
    let groupings = vec![grouping.clone(); plan.spans.len()];
    let (returns, ridged) = plan.grouped_returns(panel, &groupings, config.est_window)?;
    let epochs = plan
        .spans
        .iter()
        .zip(ridged)
        .map(|(span, r)| EpochRecord {
            ridged_days: r,
            ..plan.record(panel, strategy, span, grouping)
        })
        .collect();
    finish(strategy.to_string(), g, plan.test_dates(panel), returns, epochs, config)
}

/// Decision-engine backtests for several group counts sharing one set of
/// embeddings per epoch. Reports come back in `group_counts` order.
pub fn run_decision_engine(
    panel: &ReturnsPanel,
    group_counts: &[usize],
    config: &EngineConfig,
) -> Result<Vec<BacktestReport>> {
    let plan = Plan::new(panel, config)?;
    let n = panel.n_assets();
    let mut groupings: Vec<Vec<Grouping>> = vec![Vec::new(); group_counts.len()];
    let mut epochs: Vec<Vec<EpochRecord>> = vec![Vec::new(); group_counts.len()];

    for span in &plan.spans {
        let train = panel.slice_rows(span.train.clone());
        let grid = embed_grid(&train, config, span.index)?;
        let history = panel
            .returns()
            .slice(s![span.train.start..span.validation.end, ..])
            .to_owned();
        log::info!(
            "epoch {}: {} embeddings, starting at test point {}",
            span.index,
            grid.entries.len(),
            span.tests.start
        );

        for (gi, &g) in group_counts.iter().enumerate() {
            let strategy = format!("TS_{g}");
            let (mut candidates, mut diagnostics) = candidates_from_grid(&grid, g, config, span.index);
            diagnostics.splice(0..0, grid.diagnostics.iter().cloned());
            let scores: Vec<Result<f64>> = candidates
                .par_iter()
                .map(|c| score_grouping(history.view(), &c.grouping, config.val_len, config.est_window))
                .collect();
            let mut degenerate = BTreeMap::<String, usize>::new();
            for (c, score) in candidates.iter_mut().zip(scores) {
                c.val_sharpe = Some(match score {
                    Ok(s) => s,
                    Err(e) => {
                        *degenerate.entry(e.to_string()).or_default() += 1;
                        f64::NEG_INFINITY
                    }
                });
            }
            diagnostics.extend(
                degenerate
                    .into_iter()
                    .map(|(msg, count)| format!("{count} candidates degenerate: {msg}")),
            );
            let viable = candidates
                .iter()
                .filter(|c| c.val_sharpe.is_some_and(f64::is_finite))
                .count();

            let mut record = match select_model(&candidates) {
                Ok(best) => {
                    diagnostics.extend(best.diagnostics.iter().cloned());
                    let mut r = plan.record(panel, &strategy, span, &best.grouping);
                    r.perplexity = Some(best.perplexity);
                    r.restart_seed = Some(best.restart_seed);
                    r.val_sharpe = best.val_sharpe;
                    r
                }
                Err(Error::NoViableCandidate) => {
                    log::warn!(
                        "epoch {}, g = {g}: no viable candidate, falling back to the naive portfolio",
                        span.index
                    );
                    diagnostics.push("no viable candidate; naive fallback".into());
                    plan.record(panel, &strategy, span, &Grouping::single(n))
                }
                Err(e) => return Err(e),
            };
            record.g_requested = g;
            record.candidates = candidates.len();
            record.viable_candidates = viable;
            record.diagnostics = diagnostics;
            groupings[gi].push(record.grouping());
            epochs[gi].push(record);
        }
    }

    let dates = plan.test_dates(panel);
    group_counts
        .iter()
        .zip(groupings)
        .zip(epochs)
        .map(|((&g, groups), mut records)| {
            let (returns, ridged) = plan.grouped_returns(panel, &groups, config.est_window)?;
            for (r, days) in records.iter_mut().zip(ridged) {
                r.ridged_days = days;
            }
            finish(format!("TS_{g}"), g, dates.clone(), returns, records, config)
        })
        .collect()
}

/// Decision-engine backtest for a single group count.
pub fn run_backtest_ts(panel: &ReturnsPanel, g: usize, config: &EngineConfig) -> Result<BacktestReport> {
    Ok(run_decision_engine(panel, &[g], config)?.remove(0))
}

/// Tangency portfolio over all individual assets (each company its own group).
pub fn run_benchmark_mw(panel: &ReturnsPanel, config: &EngineConfig) -> Result<BacktestReport> {
    fixed_grouping_report(panel, config, "MW_full", 1, &Grouping::singletons(panel.n_assets()))
}

/// Equal weights over all assets every test day.
pub fn run_benchmark_naive(panel: &ReturnsPanel, config: &EngineConfig) -> Result<BacktestReport> {
    let plan = Plan::new(panel, config)?;
    let single = Grouping::single(panel.n_assets());
    let rows: Vec<usize> = plan.splits.iter().map(|s| s.test_point).collect();
    let test_rows = panel.returns().select(Axis(0), &rows);
    let returns = group_matrix(test_rows.view(), &single)?.column(0).to_vec();
    let epochs = plan
        .spans
        .iter()
        .map(|span| plan.record(panel, "N_full", span, &single))
        .collect();
    finish("N_full".into(), 1, plan.test_dates(panel), returns, epochs, config)
}

/// Fixed grouping by the leading `digits` characters of each industry code.
pub fn industry_grouping(panel: &ReturnsPanel, meta: &[CompanyMeta], digits: usize) -> Result<Grouping> {
    let by_ticker: BTreeMap<&str, &CompanyMeta> =
        meta.iter().map(|m| (m.ticker.as_str(), m)).collect();
    let keys = panel
        .tickers()
        .iter()
        .map(|t| {
            by_ticker
                .get(t.as_str())
                .map(|m| m.prefix(digits).to_string())
                .ok_or_else(|| Error::MetadataMissing(t.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Grouping::from_keys(&keys))
}

pub fn run_benchmark_industry(
    panel: &ReturnsPanel,
    meta: &[CompanyMeta],
    digits: usize,
    config: &EngineConfig,
) -> Result<BacktestReport> {
    if digits == 0 {
        return Err(Error::InvalidInput("industry prefix needs at least one digit".into()));
    }
    let grouping = industry_grouping(panel, meta, digits)?;
    fixed_grouping_report(panel, config, &format!("TR{digits}"), grouping.g(), &grouping)
}

/// Random assignment with the given group sizes.
pub fn random_grouping(sizes: &[usize], seed: u64) -> Result<Grouping> {
    if sizes.contains(&0) {
        return Err(Error::InvalidInput("group sizes must be positive".into()));
    }
    let mut labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Grouping::new(labels, sizes.len())
}

/// Group sizes chosen in each epoch of a report.
pub fn reference_sizes(report: &BacktestReport) -> Vec<Vec<usize>> {
    report.epochs.iter().map(|e| e.group_sizes.clone()).collect()
}

/// Random groupings matching the reference sizes of each epoch, repeated
/// `random_bench_reps` times. The report's return series is the
/// cross-repetition daily mean; its summary carries the mean Sharpe ratio
/// and mean bootstrap standard error over repetitions.
pub fn run_benchmark_random(
    panel: &ReturnsPanel,
    g: usize,
    config: &EngineConfig,
    reference: &[Vec<usize>],
) -> Result<BacktestReport> {
    let plan = Plan::new(panel, config)?;
    let n = panel.n_assets();
    if reference.len() != plan.spans.len() {
        return Err(Error::InvalidInput(format!(
            "{} reference size vectors for {} epochs",
            reference.len(),
            plan.spans.len()
        )));
    }
    for sizes in reference {
        let sum: usize = sizes.iter().sum();
        if sum != n {
            return Err(Error::SizeMismatch { sum, n });
        }
    }

    struct Rep {
        returns: Vec<f64>,
        sharpe: SharpeEstimate,
        groupings: Vec<Grouping>,
    }
    let reps: Vec<Result<Rep>> = (0..config.random_bench_reps)
        .into_par_iter()
        .map(|rep| {
            let groupings = reference
                .iter()
                .enumerate()
                .map(|(e, sizes)| {
                    let seed = derive_seed(
                        config.master_seed,
                        SeedRole::RandomGrouping,
                        g as u64,
                        rep as u64,
                        e as u64,
                    );
                    random_grouping(sizes, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let (returns, _) = plan.grouped_returns(panel, &groupings, config.est_window)?;
            let sharpe = sharpe_with_se(&returns, config.bootstrap_reps, config.bootstrap_seed())?;
            Ok(Rep {
                returns,
                sharpe,
                groupings,
            })
        })
        .collect();
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;

    let days = plan.splits.len();
    let count = reps.len() as f64;
    let mut mean_returns = vec![0.0; days];
    for rep in &reps {
        for (m, r) in mean_returns.iter_mut().zip(&rep.returns) {
            *m += r;
        }
    }
    mean_returns.iter_mut().for_each(|m| *m /= count);

    let strategy = format!("RND_{g}");
    let epochs = plan
        .spans
        .iter()
        .zip(reference)
        .map(|(span, sizes)| {
            let mut r = plan.record(panel, &strategy, span, &reps[0].groupings[span.index]);
            r.g_requested = g;
            r.group_sizes = sizes.clone();
            r.labels = Vec::new();
            r.diagnostics = vec![format!("{} random repetitions", reps.len())];
            r
        })
        .collect();
    let summary = RepetitionSummary {
        sharpes: reps.iter().map(|r| r.sharpe.annualized_sharpe).collect(),
        bootstrap_ses: reps
            .iter()
            .map(|r| r.sharpe.bootstrap_se.expect("bootstrap filled"))
            .collect(),
        groupings: reps.into_iter().map(|r| r.groupings).collect(),
    };
    let mut report = finish(strategy, g, plan.test_dates(panel), mean_returns, epochs, config)?;
    report.repetitions = Some(summary);
    Ok(report)
}

/// Strategies a study can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Decision engine for every configured group count.
    Ts,
    /// Random groupings sized like the decision engine's choices.
    Random,
    MwFull,
    NaiveFull,
    Tr2,
    Tr4,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Ts,
        Strategy::Random,
        Strategy::MwFull,
        Strategy::NaiveFull,
        Strategy::Tr2,
        Strategy::Tr4,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Ts => "TS",
            Strategy::Random => "RND",
            Strategy::MwFull => "MW_full",
            Strategy::NaiveFull => "N_full",
            Strategy::Tr2 => "TR2",
            Strategy::Tr4 => "TR4",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TS" | "TS_G" => Ok(Strategy::Ts),
            "RND" | "RND_G" => Ok(Strategy::Random),
            "MW" | "MW_FULL" => Ok(Strategy::MwFull),
            "N" | "N_FULL" => Ok(Strategy::NaiveFull),
            "TR2" => Ok(Strategy::Tr2),
            "TR4" => Ok(Strategy::Tr4),
            other => Err(Error::InvalidInput(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Runs the requested strategies. Rows come out as `TS_g, RND_g` for each
/// group count, followed by `MW_full, N_full, TR2, TR4`.
pub fn run_study(
    panel: &ReturnsPanel,
    meta: Option<&[CompanyMeta]>,
    strategies: &[Strategy],
    config: &EngineConfig,
) -> Result<Vec<BacktestReport>> {
    config.validate()?;
    let wants = |s: Strategy| strategies.contains(&s);
    let industry_meta = || meta.ok_or_else(|| Error::InvalidInput("industry benchmarks need metadata".into()));
    if wants(Strategy::Tr2) || wants(Strategy::Tr4) {
        industry_meta()?;
    }

    let mut reports = Vec::new();
    if wants(Strategy::Ts) || wants(Strategy::Random) {
        let ts = run_decision_engine(panel, &config.group_counts, config)?;
        for report in ts {
            let random = if wants(Strategy::Random) {
                Some(run_benchmark_random(panel, report.g, config, &reference_sizes(&report))?)
            } else {
                None
            };
            if wants(Strategy::Ts) {
                reports.push(report);
            }
            reports.extend(random);
        }
    }
    if wants(Strategy::MwFull) {
        reports.push(run_benchmark_mw(panel, config)?);
    }
    if wants(Strategy::NaiveFull) {
        reports.push(run_benchmark_naive(panel, config)?);
    }
    if wants(Strategy::Tr2) {
        reports.push(run_benchmark_industry(panel, industry_meta()?, 2, config)?);
    }
    if wants(Strategy::Tr4) {
        reports.push(run_benchmark_industry(panel, industry_meta()?, 4, config)?);
    }
    Ok(reports)
}
