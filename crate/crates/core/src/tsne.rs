//! Exact t-SNE.
//!
//! High-dimensional similarities are Gaussian conditionals calibrated per
//! point to a target perplexity, symmetrized into a joint distribution `P`.
//! Map similarities use the Student-t kernel `(1 + |y_i - y_j|^2)^-1`
//! normalized over all ordered pairs. The KL divergence `KL(P || Q)` is
//! minimized by momentum gradient descent with per-coordinate gains and an
//! early exaggeration phase. Everything is `O(n^2)`; there is no tree
//! approximation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Floor applied to `q_ij` inside logarithms.
pub const Q_FLOOR: f64 = 1e-12;

const INIT_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;
/// The learning rate is applied to the gradient without its constant factor
/// of 4, the scale on which the customary rate of 200 was tuned.
const STEP_GRADIENT_SCALE: f64 = 0.25;
const BRACKET_STEPS: usize = 1100;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub out_dim: usize,
    pub max_iter: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub seed: u64,
    pub bandwidth_tolerance: f64,
    pub bandwidth_max_iters: usize,
    /// Z-score each input row (one company's series) before computing distances.
    pub standardize: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            out_dim: 2,
            max_iter: 1000,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            early_exaggeration_factor: 12.0,
            early_exaggeration_iters: 250,
            seed: 0,
            bandwidth_tolerance: 1e-5,
            bandwidth_max_iters: 50,
            standardize: false,
        }
    }
}

impl TsneConfig {
    /// Checks the configuration against a point count.
    pub fn validate(&self, n: usize) -> Result<()> {
        check_perplexity(self.perplexity, n)?;
        if !(self.out_dim == 2 || self.out_dim == 3) {
            return Err(Error::InvalidInput(format!(
                "out_dim must be 2 or 3, got {}",
                self.out_dim
            )));
        }
        if self.max_iter < self.early_exaggeration_iters {
            return Err(Error::InvalidInput(
                "max_iter must be at least early_exaggeration_iters".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.early_exaggeration_factor > 0.0) {
            return Err(Error::InvalidInput(
                "learning rate and exaggeration factor must be positive".into(),
            ));
        }
        for m in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::InvalidInput(format!("momentum {m} outside [0, 1)")));
            }
        }
        if !(self.bandwidth_tolerance > 0.0) {
            return Err(Error::InvalidInput("bandwidth tolerance must be positive".into()));
        }
        Ok(())
    }

    /// `key = value` lines describing every field.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("perplexity", self.perplexity.to_string()),
            ("out_dim", self.out_dim.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("momentum_initial", self.momentum_initial.to_string()),
            ("momentum_final", self.momentum_final.to_string()),
            ("momentum_switch_iter", self.momentum_switch_iter.to_string()),
            (
                "early_exaggeration_factor",
                self.early_exaggeration_factor.to_string(),
            ),
            (
                "early_exaggeration_iters",
                self.early_exaggeration_iters.to_string(),
            ),
            ("seed", self.seed.to_string()),
            ("bandwidth_tolerance", self.bandwidth_tolerance.to_string()),
            ("bandwidth_max_iters", self.bandwidth_max_iters.to_string()),
            ("standardize", self.standardize.to_string()),
        ]
    }
}

fn check_perplexity(perplexity: f64, n: usize) -> Result<()> {
    if !(perplexity > 1.0 && perplexity <= n.saturating_sub(1) as f64) {
        return Err(Error::InvalidPerplexity { perplexity, n });
    }
    Ok(())
}

/// Squared Euclidean distances between the rows of `x`.
pub fn pairwise_squared_distances(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (i + 1..n)
                .map(|j| {
                    xi.iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Result of the per-point bandwidth search.
#[derive(Debug, Clone)]
pub struct BandwidthCalibration {
    /// Row `i` holds `p_{j|i}`.
    pub conditional: Array2<f64>,
    pub bandwidths: Array1<f64>,
    /// `2^H` of each returned row.
    pub achieved_perplexity: Array1<f64>,
    /// Rows whose search ended outside tolerance.
    pub unconverged: Vec<usize>,
}

/// Fills row `i` of conditional probabilities for bandwidth `sigma` and
/// returns the row perplexity `exp(H)` (H in nats, equal to `2^H` in bits).
fn conditional_row(dist: &[f64], i: usize, sigma: f64, out: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let beta = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0;
    for (j, (&d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == i { 0.0 } else { (-(d - dmin) * beta).exp() };
        sum += *o;
    }
    let mut entropy = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            entropy -= *o * o.ln();
        }
    }
    entropy.exp()
}

struct RowFit {
    sigma: f64,
    perplexity: f64,
    converged: bool,
}

fn calibrate_row(dist: &[f64], i: usize, target: f64, tol: f64, max_iters: usize, out: &mut [f64]) -> RowFit {
    let close = |p: f64| (p - target).abs() <= tol;
    let mut sigma = 1.0;
    let mut perp = conditional_row(dist, i, sigma, out);
    if close(perp) {
        return RowFit { sigma, perplexity: perp, converged: true };
    }

    // Bracket: perplexity is increasing in sigma.
    let (mut lo, mut hi);
    if perp < target {
        lo = sigma;
        hi = sigma;
        let mut bracketed = false;
        for _ in 0..BRACKET_STEPS {
            hi *= 2.0;
            perp = conditional_row(dist, i, hi, out);
            if close(perp) {
                return RowFit { sigma: hi, perplexity: perp, converged: true };
            }
            if perp > target {
                bracketed = true;
                break;
            }
            lo = hi;
        }
        if !bracketed {
            return RowFit { sigma: hi, perplexity: perp, converged: false };
        }
    } else {
        hi = sigma;
        lo = sigma;
        let mut bracketed = false;
        for _ in 0..BRACKET_STEPS {
            lo *= 0.5;
            perp = conditional_row(dist, i, lo, out);
            if close(perp) {
                return RowFit { sigma: lo, perplexity: perp, converged: true };
            }
            if perp < target {
                bracketed = true;
                break;
            }
            hi = lo;
        }
        if !bracketed {
            return RowFit { sigma: lo, perplexity: perp, converged: false };
        }
    }

    for _ in 0..max_iters {
        sigma = 0.5 * (lo + hi);
        perp = conditional_row(dist, i, sigma, out);
        if close(perp) {
            return RowFit { sigma, perplexity: perp, converged: true };
        }
        if perp < target {
            lo = sigma;
        } else {
            hi = sigma;
        }
    }
    sigma = 0.5 * (lo + hi);
    perp = conditional_row(dist, i, sigma, out);
    RowFit { sigma, perplexity: perp, converged: close(perp) }
}

/// Per-point Gaussian bandwidths hitting the target perplexity.
///
/// Each `sigma_i` is bracketed by doubling or halving from 1 and then
/// bisected for at most `max_iters` steps. Rows that never come within
/// `tolerance` keep the last midpoint and are listed in `unconverged`.
pub fn calibrate_bandwidths(
    sq_dist: ArrayView2<'_, f64>,
    perplexity: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<BandwidthCalibration> {
    let n = sq_dist.nrows();
    check_perplexity(perplexity, n)?;
    let fits: Vec<(Vec<f64>, RowFit)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist = sq_dist.row(i).to_vec();
            let mut row = vec![0.0; n];
            let fit = calibrate_row(&dist, i, perplexity, tolerance, max_iters, &mut row);
            (row, fit)
        })
        .collect();

    let mut conditional = Array2::zeros((n, n));
    let mut bandwidths = Array1::zeros(n);
    let mut achieved = Array1::zeros(n);
    let mut unconverged = Vec::new();
    for (i, (row, fit)) in fits.into_iter().enumerate() {
        conditional.row_mut(i).assign(&Array1::from(row));
        bandwidths[i] = fit.sigma;
        achieved[i] = fit.perplexity;
        if !fit.converged {
            unconverged.push(i);
        }
    }
    Ok(BandwidthCalibration {
        conditional,
        bandwidths,
        achieved_perplexity: achieved,
        unconverged,
    })
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn symmetrize(conditional: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = conditional.nrows();
    let denom = 2.0 * n as f64;
    Array2::from_shape_fn((n, n), |(i, j)| {
        (conditional[[i, j]] + conditional[[j, i]]) / denom
    })
}

/// Calibration artifacts of the input space.
#[derive(Debug, Clone)]
pub struct HighDimAffinities {
    pub conditional: Array2<f64>,
    pub joint: Array2<f64>,
    pub bandwidths: Array1<f64>,
    pub achieved_perplexity: Array1<f64>,
    pub unconverged: Vec<usize>,
}

impl From<BandwidthCalibration> for HighDimAffinities {
    fn from(cal: BandwidthCalibration) -> Self {
        let joint = symmetrize(cal.conditional.view());
        Self {
            conditional: cal.conditional,
            joint,
            bandwidths: cal.bandwidths,
            achieved_perplexity: cal.achieved_perplexity,
            unconverged: cal.unconverged,
        }
    }
}

pub fn high_dim_affinities(
    x: ArrayView2<'_, f64>,
    perplexity: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<HighDimAffinities> {
    let d = pairwise_squared_distances(x)?;
    Ok(calibrate_bandwidths(d.view(), perplexity, tolerance, max_iters)?.into())
}

/// Map-space similarities. `kernel` holds the unnormalized Student-t values.
#[derive(Debug, Clone)]
pub struct LowDimAffinities {
    pub q: Array2<f64>,
    pub kernel: Array2<f64>,
}

pub fn low_dim_affinities(y: ArrayView2<'_, f64>) -> LowDimAffinities {
    let n = y.nrows();
    let mut kernel = Array2::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        let yi = y.row(i);
        for j in i + 1..n {
            let d2: f64 = yi
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let k = 1.0 / (1.0 + d2);
            kernel[[i, j]] = k;
            kernel[[j, i]] = k;
            total += 2.0 * k;
        }
    }
    let q = &kernel / total;
    LowDimAffinities { q, kernel }
}

/// `KL(P || Q)` over off-diagonal pairs, with `0 log 0 = 0`.
pub fn kl_cost(p: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>) -> f64 {
    let mut cost = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            cost += pij * (pij / q[[i, j]].max(Q_FLOOR)).ln();
        }
    }
    cost.max(0.0)
}

fn gradient_scaled(
    p: ArrayView2<'_, f64>,
    exaggeration: f64,
    low: &LowDimAffinities,
    y: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (n, dim) = y.dim();
    let mut grad = Array2::zeros((n, dim));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let m = 4.0 * (exaggeration * p[[i, j]] - low.q[[i, j]]) * low.kernel[[i, j]];
            for c in 0..dim {
                grad[[i, c]] += m * (y[[i, c]] - y[[j, c]]);
            }
        }
    }
    grad
}

/// Row `i` is `4 sum_j (p_ij - q_ij) k_ij (y_i - y_j)`.
pub fn kl_gradient(
    p: ArrayView2<'_, f64>,
    low: &LowDimAffinities,
    y: ArrayView2<'_, f64>,
) -> Array2<f64> {
    gradient_scaled(p, 1.0, low, y)
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub points: Array2<f64>,
    pub final_cost: f64,
    /// KL against the un-exaggerated `P` after every iteration.
    pub cost_trace: Vec<f64>,
    pub config_used: TsneConfig,
    pub affinities: HighDimAffinities,
}

/// Seeded isotropic Gaussian start, standard deviation `1e-4`.
pub fn initial_points(n: usize, config: &TsneConfig) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    Array2::from_shape_simple_fn((n, config.out_dim), || normal.sample(&mut rng))
}

fn standardize_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    let d = x.ncols() as f64;
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = if d > 1.0 {
            row.iter().map(|v| v * v).sum::<f64>() / (d - 1.0)
        } else {
            0.0
        };
        if var > 0.0 {
            let sd = var.sqrt();
            row.mapv_inplace(|v| v / sd);
        }
    }
    out
}

/// Embeds the rows of `x`.
pub fn run_tsne(x: ArrayView2<'_, f64>, config: &TsneConfig) -> Result<Embedding> {
    let init = initial_points(x.nrows(), config);
    run_tsne_from(x, config, init)
}

/// Same as [`run_tsne`] but with caller-supplied starting coordinates.
pub fn run_tsne_from(
    x: ArrayView2<'_, f64>,
    config: &TsneConfig,
    init: Array2<f64>,
) -> Result<Embedding> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InvalidInput(format!("t-SNE needs at least 3 points, got {n}")));
    }
    config.validate(n)?;
    if init.dim() != (n, config.out_dim) {
        return Err(Error::InvalidInput("initial coordinates have the wrong shape".into()));
    }

    let affinities = if config.standardize {
        let z = standardize_rows(x);
        high_dim_affinities(
            z.view(),
            config.perplexity,
            config.bandwidth_tolerance,
            config.bandwidth_max_iters,
        )?
    } else {
        high_dim_affinities(
            x,
            config.perplexity,
            config.bandwidth_tolerance,
            config.bandwidth_max_iters,
        )?
    };
    if !affinities.unconverged.is_empty() {
        log::debug!(
            "perplexity {}: {} rows outside bandwidth tolerance",
            config.perplexity,
            affinities.unconverged.len()
        );
    }
    let p = affinities.joint.view();

    let mut y = init;
    let mut update = Array2::<f64>::zeros(y.dim());
    let mut gains = Array2::<f64>::ones(y.dim());
    let mut low = low_dim_affinities(y.view());
    let mut cost_trace = Vec::with_capacity(config.max_iter);

    for iter in 0..config.max_iter {
        let exaggeration = if iter < config.early_exaggeration_iters {
            config.early_exaggeration_factor
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.momentum_initial
        } else {
            config.momentum_final
        };
        let grad = gradient_scaled(p, exaggeration, &low, y.view());

        ndarray::Zip::from(&mut y)
            .and(&mut update)
            .and(&mut gains)
            .and(&grad)
            .for_each(|yv, u, gain, &g| {
                // grow while the step keeps pointing downhill, shrink on reversal
                *gain = if (g > 0.0) != (*u > 0.0) {
                    *gain + 0.2
                } else {
                    *gain * 0.8
                };
                *gain = gain.max(MIN_GAIN);
                *u = momentum * *u - config.learning_rate * *gain * STEP_GRADIENT_SCALE * g;
                *yv += *u;
            });
        let mean = y.mean_axis(Axis(0)).expect("nonempty");
        y -= &mean;

        low = low_dim_affinities(y.view());
        let cost = kl_cost(p, low.q.view());
        if !cost.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: iter });
        }
        cost_trace.push(cost);
    }

    let final_cost = match cost_trace.last() {
        Some(&c) => c,
        None => kl_cost(p, low.q.view()),
    };
    Ok(Embedding {
        points: y,
        final_cost,
        cost_trace,
        config_used: config.clone(),
        affinities,
    })
}
