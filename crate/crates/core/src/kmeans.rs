//! Lloyd's k-means with k-means++ seeding and restarts.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(data: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), data.row(first))).collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding leaving target just above the last weight
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            if free.is_empty() {
                rng.random_range(0..n)
            } else {
                free[rng.random_range(0..free.len())]
            }
        };
        chosen[pick] = true;
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(pick)));
        }
    }
    centroids
}

fn lloyd(data: ArrayView2<'_, f64>, mut centroids: Array2<f64>) -> KMeansResult {
    let (n, dim) = data.dim();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(data.row(i), &centroids);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        // repair empty clusters with the point farthest from its centroid
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                counts[labels[i]] -= 1;
                labels[i] = empty;
                counts[empty] = 1;
                dists[i] = 0.0;
                changed = true;
            }
        }

        let mut sums = Array2::<f64>::zeros((k, dim));
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l);
            row += &data.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(data.row(i), centroids.row(l)))
        .sum();
    KMeansResult {
        labels,
        centroids,
        wcss,
    }
}

/// Best of `restarts` seeded k-means++ / Lloyd runs by within-cluster sum of squares.
pub fn kmeans_rows(
    data: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(data, k, &mut rng);
        let run = lloyd(data, init);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_blobs(seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        Array2::from_shape_fn((20, 2), |(i, _)| {
            let center = if i < 10 { 0.0 } else { 50.0 };
            center + noise.sample(&mut rng)
        })
    }

    #[test]
    fn separates_far_blobs() {
        let data = two_blobs(3);
        let res = kmeans_rows(data.view(), 2, 17, 5).unwrap();
        let first = res.labels[0];
        for i in 0..20 {
            assert_eq!(res.labels[i] == first, i < 10);
        }
    }

    #[test]
    fn k_equals_n_is_exact() {
        let data = two_blobs(4);
        let res = kmeans_rows(data.view(), 20, 1, 3).unwrap();
        assert_eq!(res.wcss, 0.0);
        let mut labels = res.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn duplicates_share_labels() {
        let mut data = two_blobs(5);
        let copy = data.row(3).to_owned();
        data.row_mut(14).assign(&copy);
        let res = kmeans_rows(data.view(), 3, 2, 4).unwrap();
        assert_eq!(res.labels[3], res.labels[14]);
    }

    #[test]
    fn deterministic_for_seed() {
        let data = two_blobs(6);
        let a = kmeans_rows(data.view(), 4, 99, 3).unwrap();
        let b = kmeans_rows(data.view(), 4, 99, 3).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.wcss, b.wcss);
    }

    #[test]
    fn no_empty_clusters_with_identical_points() {
        let data = Array2::<f64>::zeros((6, 2));
        let res = kmeans_rows(data.view(), 3, 0, 2).unwrap();
        for c in 0..3 {
            assert!(res.labels.contains(&c));
        }
    }

    #[test]
    fn invalid_k() {
        let data = two_blobs(1);
        assert!(kmeans_rows(data.view(), 0, 0, 1).is_err());
        assert!(kmeans_rows(data.view(), 21, 0, 1).is_err());
    }
}
