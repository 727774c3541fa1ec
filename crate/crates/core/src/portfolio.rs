//! Naive group sub-portfolios, tangency weights and Sharpe ratio inference.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ReturnsPanel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::spectral::Grouping;

/// Trading days per year.
pub const TRADING_DAYS: f64 = 252.0;

/// Relative ridge added to a covariance that fails to factor.
pub const RIDGE_FACTOR: f64 = 1e-8;

const DEGENERATE_TANGENCY: f64 = 1e-12;

/// Equal-weight (1/N_g) returns of each group, rebalanced every row.
pub fn group_matrix(returns: ArrayView2<'_, f64>, grouping: &Grouping) -> Result<Array2<f64>> {
    if grouping.len() != returns.ncols() {
        return Err(Error::GroupingMismatch {
            grouping: grouping.len(),
            panel: returns.ncols(),
        });
    }
    let members = grouping.members();
    let mut out = Array2::zeros((returns.nrows(), grouping.g()));
    for (t, row) in returns.outer_iter().enumerate() {
        for (g, idx) in members.iter().enumerate() {
            let mut sum = 0.0;
            for &j in idx {
                sum += row[j];
            }
            out[[t, g]] = sum / idx.len() as f64;
        }
    }
    Ok(out)
}

/// Panel with one column per group, named `G0`, `G1`, ...
pub fn group_returns(panel: &ReturnsPanel, grouping: &Grouping) -> Result<ReturnsPanel> {
    let grouped = group_matrix(panel.returns(), grouping)?;
    let names = (0..grouping.g()).map(|g| format!("G{g}")).collect();
    ReturnsPanel::new(panel.dates().to_vec(), names, grouped)
}

/// Sample mean and covariance (divisor `len - 1`) of a return window.
#[derive(Debug, Clone)]
pub struct MomentEstimates {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub window_len: usize,
    pub labels: Vec<String>,
}

/// Moments of every row of `window`.
pub fn moments_of_rows(window: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let m = window.nrows();
    if m < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: m,
        });
    }
    let mu = window.sum_axis(Axis(0)) / m as f64;
    let centered = &window - &mu;
    let mut sigma = centered.t().dot(&centered) / (m - 1) as f64;
    let k = sigma.nrows();
    for i in 0..k {
        for j in i + 1..k {
            sigma[[j, i]] = sigma[[i, j]];
        }
    }
    Ok((mu, sigma))
}

/// Moments over the trailing `window_len` rows of the panel.
pub fn estimate_moments(panel: &ReturnsPanel, window_len: usize) -> Result<MomentEstimates> {
    let rows = panel.n_rows();
    if window_len < 2 || rows < window_len {
        return Err(Error::InsufficientData {
            needed: window_len.max(2),
            available: rows,
        });
    }
    let (mu, sigma) = moments_of_rows(panel.returns().slice(s![rows - window_len.., ..]))?;
    Ok(MomentEstimates {
        mu,
        sigma,
        window_len,
        labels: panel.tickers().to_vec(),
    })
}

/// Portfolio weights over a labelled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub basis: Vec<String>,
    /// The covariance needed the ridge fallback.
    pub ridged: bool,
}

/// Raw tangency solve: `S^-1 mu / (1' S^-1 mu)`. Returns the weights and
/// whether the ridge fallback was used.
pub fn tangency_from_moments(
    mu: ArrayView1<'_, f64>,
    sigma: ArrayView2<'_, f64>,
) -> Result<(Array1<f64>, bool)> {
    let n = mu.len();
    let (factor, ridged) = match cholesky(sigma) {
        Some(l) => (l, false),
        None => {
            let ridge = RIDGE_FACTOR * sigma.diag().sum() / n as f64;
            let mut bumped = sigma.to_owned();
            bumped.diag_mut().mapv_inplace(|d| d + ridge);
            (cholesky(bumped.view()).ok_or(Error::SingularCovariance)?, true)
        }
    };
    let x = cholesky_solve(&factor, mu);
    let total = x.sum();
    if !(total.abs() >= DEGENERATE_TANGENCY) {
        return Err(Error::DegenerateTangency(total));
    }
    Ok((x / total, ridged))
}

/// Maximal-Sharpe portfolio at a zero risk-free rate. Shorts allowed.
pub fn tangency_weights(moments: &MomentEstimates) -> Result<WeightVector> {
    let (w, ridged) = tangency_from_moments(moments.mu.view(), moments.sigma.view())?;
    Ok(WeightVector {
        weights: w.to_vec(),
        basis: moments.labels.clone(),
        ridged,
    })
}

/// `r_t = sum_j w_j r_tj` for every row.
pub fn portfolio_return_series(panel: &ReturnsPanel, w: &WeightVector) -> Result<Vec<f64>> {
    if w.basis != panel.tickers() || w.weights.len() != panel.n_assets() {
        return Err(Error::BasisMismatch);
    }
    Ok(panel
        .returns()
        .outer_iter()
        .map(|row| dot(&w.weights, row))
        .collect())
}

pub(crate) fn dot(w: &[f64], row: ArrayView1<'_, f64>) -> f64 {
    let mut sum = 0.0;
    for (a, b) in w.iter().zip(row) {
        sum += a * b;
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpeEstimate {
    pub annualized_sharpe: f64,
    pub daily_mean: f64,
    pub daily_std: f64,
    pub n_obs: usize,
    pub bootstrap_se: Option<f64>,
    pub bootstrap_reps: Option<usize>,
}

fn mean_std(returns: &[f64]) -> (f64, f64) {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn daily_sharpe(returns: &[f64]) -> Option<(f64, f64, f64)> {
    let first = returns[0];
    if returns.iter().all(|&r| r == first) {
        return None;
    }
    let (mean, std) = mean_std(returns);
    if !(std > 0.0 && std.is_finite()) {
        return None;
    }
    Some((mean / std, mean, std))
}

/// Daily mean over daily sample standard deviation, scaled by `sqrt(252)`.
pub fn sharpe(returns: &[f64]) -> Result<SharpeEstimate> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: returns.len(),
        });
    }
    let (sr, mean, std) = daily_sharpe(returns).ok_or(Error::ZeroVariance)?;
    Ok(SharpeEstimate {
        annualized_sharpe: sr * TRADING_DAYS.sqrt(),
        daily_mean: mean,
        daily_std: std,
        n_obs: returns.len(),
        bootstrap_se: None,
        bootstrap_reps: None,
    })
}

/// Annualized Sharpe of every accepted bootstrap resample, in draw order.
pub fn bootstrap_sharpes(returns: &[f64], reps: usize, seed: u64) -> Result<Vec<f64>> {
    let n = returns.len();
    if n < 2 || reps < 2 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least 2 observations and 2 repetitions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = 10 * reps;
    let mut draws = 0;
    let mut sample = vec![0.0; n];
    let mut out = Vec::with_capacity(reps);
    while out.len() < reps {
        if draws >= cap {
            return Err(Error::BootstrapDegenerate { draws, reps });
        }
        draws += 1;
        for s in sample.iter_mut() {
            *s = returns[rng.random_range(0..n)];
        }
        if let Some((sr, _, _)) = daily_sharpe(&sample) {
            out.push(sr * TRADING_DAYS.sqrt());
        }
    }
    Ok(out)
}

/// Standard deviation of resampled annualized Sharpe ratios.
pub fn bootstrap_sharpe_se(returns: &[f64], reps: usize, seed: u64) -> Result<f64> {
    let sharpes = bootstrap_sharpes(returns, reps, seed)?;
    Ok(mean_std(&sharpes).1)
}

/// Sharpe estimate with its bootstrap standard error filled in.
pub fn sharpe_with_se(returns: &[f64], reps: usize, seed: u64) -> Result<SharpeEstimate> {
    let mut est = sharpe(returns)?;
    est.bootstrap_se = Some(bootstrap_sharpe_se(returns, reps, seed)?);
    est.bootstrap_reps = Some(reps);
    Ok(est)
}
