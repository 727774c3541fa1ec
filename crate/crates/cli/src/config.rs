//! Run configuration: defaults, then a `key = value` file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};

use clustfolio_core::engine::{EngineConfig, Strategy};

/// Bad configuration or arguments; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub type UsageResult<T> = Result<T, UsageError>;

fn usage<T>(msg: impl Into<String>) -> UsageResult<T> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub out: PathBuf,
    pub strategies: Option<Vec<Strategy>>,
    pub jobs: Option<usize>,
    pub drop_incomplete: bool,
    /// Set when a seed came from a file or flag, so the environment
    /// fallback does not override it.
    pub seed_given: bool,
    pub engine: EngineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: None,
            meta: None,
            out: PathBuf::from("out"),
            strategies: None,
            jobs: None,
            drop_incomplete: false,
            seed_given: false,
            engine: EngineConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> UsageResult<T> {
    value
        .parse()
        .or_else(|_| usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> UsageResult<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => usage(format!("invalid boolean `{value}` for `{key}`")),
    }
}

/// Comma separated reals, e.g. `3,8,13`.
pub fn parse_real_list(key: &str, value: &str) -> UsageResult<Vec<f64>> {
    let list = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse::<f64>(key, s))
        .collect::<UsageResult<Vec<_>>>()?;
    if list.is_empty() {
        return usage(format!("`{key}` needs at least one value"));
    }
    Ok(list)
}

/// Comma separated counts and inclusive ranges, e.g. `2-20` or `2,4,6-8`.
pub fn parse_count_list(key: &str, value: &str) -> UsageResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse(key, a.trim())?, parse(key, b.trim())?);
                if a > b {
                    return usage(format!("empty range `{item}` for `{key}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(key, item)?),
        }
    }
    if out.is_empty() {
        return usage(format!("`{key}` needs at least one value"));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies one setting. Keys accept `-` or `_` as separators.
    pub fn set(&mut self, key: &str, value: &str) -> UsageResult<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        let e = &mut self.engine;
        let t = &mut e.tsne;
        match k {
            "prices" => self.prices = Some(PathBuf::from(value)),
            "meta" => self.meta = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "strategies" => {
                let list = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Strategy>().map_err(|e| UsageError(e.to_string())))
                    .collect::<UsageResult<Vec<_>>>()?;
                if list.is_empty() {
                    return usage("`strategies` needs at least one value");
                }
                self.strategies = Some(list);
            }
            "jobs" => {
                let jobs: usize = parse(k, value)?;
                if jobs == 0 {
                    return usage("`jobs` must be at least 1");
                }
                self.jobs = Some(jobs);
            }
            "drop_incomplete" => self.drop_incomplete = parse_bool(k, value)?,
            "seed" | "master_seed" => {
                e.master_seed = parse(k, value)?;
                self.seed_given = true;
            }
            "perplexity" | "perplexity_grid" => e.perplexity_grid = parse_real_list(k, value)?,
            "groups" | "group_counts" => e.group_counts = parse_count_list(k, value)?,
            "clustering_restarts" => e.clustering_restarts = parse(k, value)?,
            "train_len" => e.train_len = parse(k, value)?,
            "val_len" => e.val_len = parse(k, value)?,
            "est_window" => e.est_window = parse(k, value)?,
            "reselect_every" => e.reselect_every = parse(k, value)?,
            "random_bench_reps" => e.random_bench_reps = parse(k, value)?,
            "bootstrap_reps" => e.bootstrap_reps = parse(k, value)?,
            "kmeans_restarts" => e.kmeans_restarts = parse(k, value)?,
            "out_dim" => t.out_dim = parse(k, value)?,
            "max_iter" => t.max_iter = parse(k, value)?,
            "learning_rate" => t.learning_rate = parse(k, value)?,
            "momentum_initial" => t.momentum_initial = parse(k, value)?,
            "momentum_final" => t.momentum_final = parse(k, value)?,
            "momentum_switch_iter" => t.momentum_switch_iter = parse(k, value)?,
            "early_exaggeration_factor" => t.early_exaggeration_factor = parse(k, value)?,
            "early_exaggeration_iters" => t.early_exaggeration_iters = parse(k, value)?,
            "bandwidth_tolerance" => t.bandwidth_tolerance = parse(k, value)?,
            "bandwidth_max_iters" => t.bandwidth_max_iters = parse(k, value)?,
            "standardize" => t.standardize = parse_bool(k, value)?,
            _ => return usage(format!("unknown setting `{key}`")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> UsageResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!("{origin}:{}: expected `key = value`", i + 1));
            };
            self.set(key, value)
                .map_err(|e| UsageError(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> UsageResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Uses `value` as the master seed unless one was already given.
    pub fn seed_fallback(&mut self, value: Option<&str>) -> UsageResult<()> {
        if let (false, Some(v)) = (self.seed_given, value) {
            self.engine.master_seed = v
                .trim()
                .parse()
                .or_else(|_| usage(format!("invalid CLUSTFOLIO_SEED `{v}`")))?;
        }
        Ok(())
    }

    pub fn prices_path(&self) -> UsageResult<&Path> {
        let path = self
            .prices
            .as_deref()
            .ok_or_else(|| UsageError("missing --prices".into()))?;
        if !path.is_file() {
            return usage(format!("prices file {} does not exist", path.display()));
        }
        Ok(path)
    }

    pub fn meta_path(&self) -> UsageResult<Option<&Path>> {
        match self.meta.as_deref() {
            Some(p) if !p.is_file() => usage(format!("metadata file {} does not exist", p.display())),
            other => Ok(other),
        }
    }

    pub fn validate(&self) -> UsageResult<()> {
        self.engine.validate().map_err(|e| UsageError(e.to_string()))?;
        if let Some(p) = self.engine.perplexity_grid.iter().find(|p| !(**p > 1.0)) {
            return usage(format!("perplexity {p} must exceed 1"));
        }
        self.engine
            .tsne
            .validate(usize::MAX)
            .map_err(|e| UsageError(e.to_string()))
    }
}
