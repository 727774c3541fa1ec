//! Block factor model for panels with a known cluster structure.
//!
//! Each asset's daily return is
//! `drift_b + vol * (sqrt(wm) * M_t + sqrt(wb) * F_bt + sqrt(wi) * e_it)`
//! with independent standard normal market, block and idiosyncratic terms,
//! so the correlation is `wm + wb` within a block and `wm` across blocks.

use chrono::NaiveDate;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{CompanyMeta, PricePanel, ReturnsPanel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    pub n_assets: usize,
    pub n_rows: usize,
    pub n_blocks: usize,
    pub market_weight: f64,
    pub block_weight: f64,
    pub idio_weight: f64,
    pub vol: f64,
    /// Daily drift per block, cycled when shorter than `n_blocks`.
    pub drifts: Vec<f64>,
    pub seed: u64,
}

impl Default for BlockModel {
    fn default() -> Self {
        Self {
            n_assets: 50,
            n_rows: 2000,
            n_blocks: 5,
            market_weight: 0.05,
            block_weight: 0.55,
            idio_weight: 0.40,
            vol: 0.01,
            drifts: vec![0.0010, 0.0006, 0.0002, -0.0002, 0.0004],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub returns: ReturnsPanel,
    /// Planted block of each asset.
    pub blocks: Vec<usize>,
    /// Four-digit codes whose first two digits identify the block.
    pub meta: Vec<CompanyMeta>,
}

impl BlockModel {
    pub fn block_of(&self, asset: usize) -> usize {
        asset * self.n_blocks / self.n_assets
    }

    pub fn generate(&self) -> Result<SyntheticPanel> {
        if self.n_assets == 0 || self.n_rows < 2 || self.n_blocks == 0 || self.n_blocks > self.n_assets {
            return Err(Error::InvalidInput(
                "block model needs assets, at least two rows and 1..=n_assets blocks".into(),
            ));
        }
        if self.drifts.is_empty() {
            return Err(Error::InvalidInput("block model needs at least one drift".into()));
        }
        let (sm, sb, si) = (
            self.market_weight.sqrt(),
            self.block_weight.sqrt(),
            self.idio_weight.sqrt(),
        );
        let blocks: Vec<usize> = (0..self.n_assets).map(|i| self.block_of(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut returns = Array2::zeros((self.n_rows, self.n_assets));
        let mut factors = vec![0.0; self.n_blocks];
        for mut row in returns.outer_iter_mut() {
            let market = draw();
            factors.iter_mut().for_each(|f| *f = draw());
            for (i, r) in row.iter_mut().enumerate() {
                let b = blocks[i];
                let shock = sm * market + sb * factors[b] + si * draw();
                *r = self.drifts[b % self.drifts.len()] + self.vol * shock;
            }
        }
        let tickers: Vec<String> = (0..self.n_assets).map(|i| format!("S{i:03}")).collect();
        let meta = tickers
            .iter()
            .zip(&blocks)
            .enumerate()
            .map(|(i, (t, &b))| CompanyMeta::new(t.clone(), format!("{:02}{:02}", 10 + b, 10 + i % 2)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticPanel {
            returns: ReturnsPanel::with_generated_dates(tickers, returns)?,
            blocks,
            meta,
        })
    }
}

/// Prices compounding `returns` from a level of 100, with one extra leading date.
pub fn prices_from_returns(returns: &ReturnsPanel) -> Result<PricePanel> {
    let (t, n) = returns.returns().dim();
    let mut prices = Array2::zeros((t + 1, n));
    prices.row_mut(0).fill(100.0);
    for k in 0..t {
        for j in 0..n {
            prices[[k + 1, j]] = prices[[k, j]] * (1.0 + returns.returns()[[k, j]]);
        }
    }
    let first = returns.dates().first().copied();
    let lead = first
        .and_then(|d| d.pred_opt())
        .unwrap_or(NaiveDate::from_ymd_opt(2000, 1, 2).expect("valid date"));
    let mut dates = vec![lead];
    dates.extend_from_slice(returns.dates());
    PricePanel::new(dates, returns.tickers().to_vec(), prices)
}
