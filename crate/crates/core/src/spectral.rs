//! Ng-Jordan-Weiss spectral clustering of map points.
//!
//! Gaussian affinities, the normalized operator `D^-1/2 A D^-1/2`, its
//! top-k eigenvectors with unit-normalized rows, then k-means on those rows.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kmeans::kmeans_rows;
use crate::linalg::symmetric_eigen;

/// k-means restarts inside one spectral clustering call.
pub const DEFAULT_KMEANS_RESTARTS: usize = 10;

const DEGENERATE_ROW_NORM: f64 = 1e-12;

/// Assignment of `n` items to `g` nonempty groups labelled `0..g`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grouping {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Grouping {
    /// Strict constructor: every label below `g` and every group nonempty.
    pub fn new(labels: Vec<usize>, g: usize) -> Result<Self> {
        let mut sizes = vec![0; g];
        for &l in &labels {
            if l >= g {
                return Err(Error::InvalidInput(format!("label {l} out of range for g = {g}")));
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("group {empty} is empty")));
        }
        Ok(Self { labels, sizes })
    }

    /// Relabels to `0..g` keeping the numeric order of the labels in use.
    /// The flag is true when some label value was unused.
    pub fn compact(labels: &[usize]) -> (Self, bool) {
        let used: BTreeMap<usize, usize> = labels
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(new, old)| (old, new))
            .collect();
        let max_label = labels.iter().copied().max().map_or(0, |m| m + 1);
        let compacted = used.len() < max_label;
        let relabelled: Vec<usize> = labels.iter().map(|l| used[l]).collect();
        let g = used.len();
        (
            Self::new(relabelled, g).expect("compacted labels are dense"),
            compacted,
        )
    }

    /// Labels in order of first appearance of each key.
    pub fn from_keys<K: Ord + Clone>(keys: &[K]) -> Self {
        let mut index = BTreeMap::new();
        let mut labels = Vec::with_capacity(keys.len());
        for key in keys {
            let next = index.len();
            labels.push(*index.entry(key.clone()).or_insert(next));
        }
        let g = index.len();
        Self::new(labels, g).expect("first-appearance labels are dense")
    }

    /// Same partition relabelled in order of first appearance, so equal
    /// partitions compare equal and group columns follow asset order.
    pub fn canonical(&self) -> Self {
        Self::from_keys(&self.labels)
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            sizes: vec![1; n],
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            sizes: vec![n],
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn g(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of every group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.g()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Gaussian affinities between map points.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    pub values: Array2<f64>,
    pub scale: f64,
}

/// `A_ij = exp(-|y_i - y_j|^2 / (2 scale^2))`, zero diagonal.
pub fn affinity_from_embedding(y: ArrayView2<'_, f64>, scale: f64) -> Result<AffinityMatrix> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidScale(scale));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite map coordinate".into()));
    }
    let n = y.nrows();
    let denom = 2.0 * scale * scale;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let a = (-d2 / denom).exp();
            values[[i, j]] = a;
            values[[j, i]] = a;
        }
    }
    Ok(AffinityMatrix { values, scale })
}

/// Median pairwise distance divided by `sqrt(2)`; falls back to 1 when all
/// points coincide.
pub fn median_scale(y: ArrayView2<'_, f64>) -> f64 {
    let n = y.nrows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 {
        median / std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// `D^-1/2 A D^-1/2` together with the degree vector.
pub fn normalized_operator(a: &AffinityMatrix) -> Result<(Array2<f64>, Array1<f64>)> {
    let degree = a.values.sum_axis(ndarray::Axis(1));
    if let Some(i) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    let inv_sqrt = degree.mapv(|d| 1.0 / d.sqrt());
    let n = degree.len();
    let m = Array2::from_shape_fn((n, n), |(i, j)| inv_sqrt[i] * a.values[[i, j]] * inv_sqrt[j]);
    Ok((m, degree))
}

/// Top-k eigenvectors of the normalized operator, rows scaled to unit length.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub eigenvalues: Array1<f64>,
    /// Raw (not row-normalized) eigenvectors as columns.
    pub eigenvectors: Array2<f64>,
    pub rows: Array2<f64>,
    pub degree: Array1<f64>,
    /// Rows whose raw norm was below `1e-12`; they are replaced by `e_1`.
    pub degenerate_rows: Vec<usize>,
}

/// Full eigendecomposition of the normalized operator, reusable across k.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
    pub degree: Array1<f64>,
}

impl SpectralDecomposition {
    pub fn new(a: &AffinityMatrix) -> Result<Self> {
        let (m, degree) = normalized_operator(a)?;
        let eig = symmetric_eigen(m.view());
        Ok(Self {
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            degree,
        })
    }

    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn basis(&self, k: usize) -> Result<SpectralBasis> {
        let n = self.n();
        if k == 0 || k > n {
            return Err(Error::InvalidK { k, n });
        }
        let vectors = self.eigenvectors.slice(ndarray::s![.., ..k]).to_owned();
        let mut rows = vectors.clone();
        let mut degenerate_rows = Vec::new();
        for (i, mut row) in rows.outer_iter_mut().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm < DEGENERATE_ROW_NORM {
                row.fill(0.0);
                row[0] = 1.0;
                degenerate_rows.push(i);
            } else {
                row.mapv_inplace(|v| v / norm);
            }
        }
        Ok(SpectralBasis {
            eigenvalues: self.eigenvalues.slice(ndarray::s![..k]).to_owned(),
            eigenvectors: vectors,
            rows,
            degree: self.degree.clone(),
            degenerate_rows,
        })
    }
}

pub fn spectral_basis(a: &AffinityMatrix, k: usize) -> Result<SpectralBasis> {
    let n = a.values.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    SpectralDecomposition::new(a)?.basis(k)
}

#[derive(Debug, Clone)]
pub struct SpectralClustering {
    pub grouping: Grouping,
    pub requested_k: usize,
    pub eigenvalues: Vec<f64>,
    pub degenerate_rows: Vec<usize>,
    /// Some k-means cluster ended empty and labels were compacted.
    pub compacted: bool,
}

impl SpectralClustering {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.compacted {
            out.push(format!(
                "requested {} groups, {} nonempty",
                self.requested_k,
                self.grouping.g()
            ));
        }
        if !self.degenerate_rows.is_empty() {
            out.push(format!("degenerate spectral rows: {:?}", self.degenerate_rows));
        }
        out
    }
}

/// k-means on the top-k spectral rows of a precomputed decomposition.
pub fn cluster_decomposition(
    decomposition: &SpectralDecomposition,
    k: usize,
    seed: u64,
    kmeans_restarts: usize,
) -> Result<SpectralClustering> {
    let basis = decomposition.basis(k)?;
    let km = kmeans_rows(basis.rows.view(), k, seed, kmeans_restarts)?;
    let (grouping, compacted) = Grouping::compact(&km.labels);
    let grouping = grouping.canonical();
    Ok(SpectralClustering {
        compacted: compacted || grouping.g() < k,
        grouping,
        requested_k: k,
        eigenvalues: basis.eigenvalues.to_vec(),
        degenerate_rows: basis.degenerate_rows,
    })
}

/// Groups map points into `k` clusters.
pub fn spectral_cluster(
    y: ArrayView2<'_, f64>,
    k: usize,
    scale: f64,
    seed: u64,
) -> Result<SpectralClustering> {
    let n = y.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let a = affinity_from_embedding(y, scale)?;
    let decomposition = SpectralDecomposition::new(&a)?;
    cluster_decomposition(&decomposition, k, seed, DEFAULT_KMEANS_RESTARTS)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-15 {
        return 1.0;
    }
    (index - expected) / denom
}
