//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! and then asserts the same condition.
//!
//! The synthetic end-to-end study (criteria 10 and 11) is shared through a
//! lazily computed cache so it runs once per seed.

use std::sync::OnceLock;
use std::time::Instant;

use clustfolio_core::engine::{run_backtest_ts, run_benchmark_mw, run_study, EngineConfig, Strategy};
use clustfolio_core::export::format_summary;
use clustfolio_core::linalg::symmetric_eigen;
use clustfolio_core::portfolio::{bootstrap_sharpe_se, sharpe, tangency_from_moments, TRADING_DAYS};
use clustfolio_core::spectral::{
    adjusted_rand_index, affinity_from_embedding, cluster_decomposition, median_scale,
    normalized_operator, spectral_cluster, AffinityMatrix, Grouping, SpectralDecomposition,
};
use clustfolio_core::synthetic::BlockModel;
use clustfolio_core::tsne::{
    high_dim_affinities, kl_cost, kl_gradient, low_dim_affinities, run_tsne, TsneConfig,
};
use clustfolio_core::kmeans::kmeans_rows;
use clustfolio_core::data::ReturnsPanel;
use ndarray::{array, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2}: {} | {name} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Three well separated Gaussian blobs of `per` points each in `dim` dimensions.
fn blobs(per: usize, dim: usize, spread: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = gaussian(3, dim, &mut rng) * spread;
    let n = 3 * per;
    let mut x = gaussian(n, dim, &mut rng);
    let labels: Vec<usize> = (0..n).map(|i| i / per).collect();
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        row += &centers.row(labels[i]);
    }
    (x, labels)
}

/// Accuracy of a clustering against truth under the best label permutation (k = 3).
fn accuracy3(pred: &[usize], truth: &[usize]) -> f64 {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|p| pred.iter().zip(truth).filter(|(a, b)| p[**a] == **b).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

fn check_distribution(m: ArrayView2<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = (m.sum() - 1.0).abs();
    for i in 0..n {
        worst = worst.max(m[[i, i]].abs());
        for j in 0..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

#[test]
fn criterion_01_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let instances = 25;
    for _ in 0..instances {
        let n = rng.random_range(4..=10);
        let x = gaussian(n, 5, &mut rng);
        let perplexity = rng.random_range(1.5..(n - 1) as f64);
        let p = high_dim_affinities(x.view(), perplexity, 1e-5, 50).unwrap().joint;
        let y = gaussian(n, 2, &mut rng);
        let analytic = kl_gradient(p.view(), &low_dim_affinities(y.view()), y.view());
        let h = 1e-6;
        let mut numeric = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            for c in 0..2 {
                let mut plus = y.clone();
                plus[[i, c]] += h;
                let mut minus = y.clone();
                minus[[i, c]] -= h;
                let fp = kl_cost(p.view(), low_dim_affinities(plus.view()).q.view());
                let fm = kl_cost(p.view(), low_dim_affinities(minus.view()).q.view());
                numeric[[i, c]] = (fp - fm) / (2.0 * h);
            }
        }
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = (&analytic - &numeric)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            / scale;
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && secs < 5.0;
    report(
        1,
        "gradient vs central differences",
        pass,
        format!("{instances} instances, max rel err {worst:.2e}, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_perplexity_calibration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = gaussian(50, 10, &mut rng);
        for target in [3.0, 8.0, 30.0] {
            let aff = high_dim_affinities(x.view(), target, 1e-5, 50).unwrap();
            assert!(aff.unconverged.is_empty());
            for &h in aff.achieved_perplexity.iter() {
                worst = worst.max((h - target).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && secs < 2.0;
    report(
        2,
        "perplexity calibration",
        pass,
        format!("max |perp - target| {worst:.2e}, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_distribution_sanity() {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for seed in 0..4 {
        let (x, _) = blobs(10, 8, 5.0, 300 + seed);
        let config = TsneConfig {
            perplexity: 8.0,
            max_iter: 300,
            seed,
            ..TsneConfig::default()
        };
        let e = run_tsne(x.view(), &config).unwrap();
        worst = worst.max(check_distribution(e.affinities.joint.view()));
        worst = worst.max(check_distribution(low_dim_affinities(e.points.view()).q.view()));
        runs += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for n in [2, 5, 17, 40] {
        let y = gaussian(n, 2, &mut rng) * 10.0;
        worst = worst.max(check_distribution(low_dim_affinities(y.view()).q.view()));
        if n > 2 {
            let x = gaussian(n, 6, &mut rng);
            let p = high_dim_affinities(x.view(), (n as f64 - 1.0) / 2.0, 1e-5, 50).unwrap();
            worst = worst.max(check_distribution(p.joint.view()));
        }
        runs += 1;
    }
    let pass = worst <= 1e-12;
    report(
        3,
        "P and Q sum to one, symmetric, zero diagonal",
        pass,
        format!("{runs} runs, worst deviation {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_tsne_separates_blobs() {
    let start = Instant::now();
    let mut accs = Vec::new();
    let mut cost_drops = true;
    for seed in 0..5u64 {
        let (x, truth) = blobs(20, 50, 3.0, 400 + seed);
        let config = TsneConfig {
            perplexity: 10.0,
            seed,
            ..TsneConfig::default()
        };
        let e = run_tsne(x.view(), &config).unwrap();
        let after_exaggeration = e.cost_trace[config.early_exaggeration_iters - 1];
        cost_drops &= e.final_cost < after_exaggeration;
        let km = kmeans_rows(e.points.view(), 3, seed, 10).unwrap();
        accs.push(accuracy3(&km.labels, &truth));
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let pass = cost_drops && mean >= 0.95 && secs < 30.0;
    report(
        4,
        "t-SNE optimizes and separates blobs",
        pass,
        format!("final KL below post-exaggeration KL: {cost_drops}, mean accuracy {mean:.3}, {secs:.2}s"),
    );
    assert!(pass);
}

fn block_affinity(labels: &[usize]) -> AffinityMatrix {
    let n = labels.len();
    AffinityMatrix {
        values: Array2::from_shape_fn((n, n), |(i, j)| {
            if i != j && labels[i] == labels[j] {
                1.0
            } else {
                0.0
            }
        }),
        scale: 1.0,
    }
}

#[test]
fn criterion_05_spectral_recovers_components() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut exact = true;
    let mut cases = 0;
    for k in 2..=5 {
        for _ in 0..3 {
            let n = rng.random_range(4 * k..=60);
            // every component gets at least two members so no vertex is isolated
            let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
            for i in (1..n).rev() {
                labels.swap(i, rng.random_range(0..=i));
            }
            let decomposition = SpectralDecomposition::new(&block_affinity(&labels)).unwrap();
            let c = cluster_decomposition(&decomposition, k, rng.random(), 10).unwrap();
            exact &= adjusted_rand_index(c.grouping.labels(), &labels) == 1.0;
            cases += 1;
        }
    }
    let mut blob_ari = Vec::new();
    for seed in 0..3 {
        let (y, truth) = blobs(20, 2, 30.0, 550 + seed);
        let c = spectral_cluster(y.view(), 3, median_scale(y.view()) / 4.0, seed).unwrap();
        blob_ari.push(adjusted_rand_index(c.grouping.labels(), &truth));
    }
    let blobs_ok = blob_ari.iter().all(|&a| a == 1.0);
    let secs = start.elapsed().as_secs_f64();
    let pass = exact && blobs_ok && secs < 5.0;
    report(
        5,
        "spectral clustering oracle",
        pass,
        format!("{cases} block cases exact: {exact}, blob ARIs {blob_ari:?}, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_eigensolver_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut residual, mut ortho): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let y = gaussian(50, 2, &mut rng);
        let a = affinity_from_embedding(y.view(), median_scale(y.view())).unwrap();
        let (m, _) = normalized_operator(&a).unwrap();
        let eig = symmetric_eigen(m.view());
        for k in 0..50 {
            let v = eig.vectors.column(k);
            let mv = m.dot(&v);
            for i in 0..50 {
                residual = residual.max((mv[i] - eig.values[k] * v[i]).abs());
            }
            for l in 0..50 {
                let d = v.dot(&eig.vectors.column(l));
                let target = if k == l { 1.0 } else { 0.0 };
                ortho = ortho.max((d - target).abs());
            }
        }
    }
    let pass = residual < 1e-8 && ortho < 1e-8;
    report(
        6,
        "eigensolver residual and orthogonality",
        pass,
        format!("max residual {residual:.2e}, max orthogonality error {ortho:.2e}"),
    );
    assert!(pass);
}

fn sharpe_objective(w: &Array1<f64>, mu: &Array1<f64>, sigma: &Array2<f64>) -> f64 {
    w.dot(mu) / w.dot(&sigma.dot(w)).sqrt()
}

/// Sharpe maximizer over the unit-budget plane by coarse grid plus
/// coordinate refinement. Independent of any linear solve.
fn brute_force_tangency(mu: &Array1<f64>, sigma: &Array2<f64>) -> Array1<f64> {
    let n = mu.len();
    let to_w = |free: &[f64]| {
        let mut w = Array1::zeros(n);
        for (i, &f) in free.iter().enumerate() {
            w[i] = f;
        }
        w[n - 1] = 1.0 - free.iter().sum::<f64>();
        w
    };
    let mut best = vec![0.0; n - 1];
    let mut best_val = f64::NEG_INFINITY;
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
    let mut idx = vec![0usize; n - 1];
    loop {
        let free: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        let v = sharpe_objective(&to_w(&free), mu, sigma);
        if v > best_val {
            best_val = v;
            best = free;
        }
        let mut d = 0;
        while d < idx.len() {
            idx[d] += 1;
            if idx[d] < grid.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == idx.len() {
            break;
        }
    }
    let mut step = 0.25;
    while step > 1e-9 {
        let mut improved = false;
        for i in 0..n - 1 {
            for dir in [-1.0, 1.0] {
                let mut trial = best.clone();
                trial[i] += dir * step;
                let v = sharpe_objective(&to_w(&trial), mu, sigma);
                if v > best_val {
                    best_val = v;
                    best = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    to_w(&best)
}

#[test]
fn criterion_07_tangency_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 8 {
        let n = 3 + cases % 2;
        let a = gaussian(n, n, &mut rng);
        let sigma = a.t().dot(&a) + Array2::<f64>::eye(n) * 0.5;
        let mu = Array1::from_shape_fn(n, |_| rng.random_range(0.2..1.0));
        let (w, _) = tangency_from_moments(mu.view(), sigma.view()).unwrap();
        // the grid search only covers weights in [-5, 5]
        if w.iter().any(|v| v.abs() > 4.5) {
            continue;
        }
        let brute = brute_force_tangency(&mu, &sigma);
        worst = worst.max((&w - &brute).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        cases += 1;
    }
    let mut identity_err: f64 = 0.0;
    for mu in [array![1.0, 2.0, 3.0], array![0.5, -0.25, 1.5, 2.0], array![3.0, 1.0, 1.0]] {
        let n = mu.len();
        let (w, _) = tangency_from_moments(mu.view(), Array2::<f64>::eye(n).view()).unwrap();
        let expected = &mu / mu.sum();
        identity_err = identity_err.max((&w - &expected).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let pass = worst < 1e-4 && identity_err < 1e-12;
    report(
        7,
        "tangency weights vs brute-force maximizer",
        pass,
        format!("{cases} SPD cases max err {worst:.2e}, identity-covariance err {identity_err:.2e}"),
    );
    assert!(pass);
}

fn small_engine_config(master_seed: u64) -> EngineConfig {
    EngineConfig {
        perplexity_grid: vec![3.0, 5.0],
        clustering_restarts: 2,
        group_counts: vec![2, 3],
        train_len: 120,
        val_len: 40,
        est_window: 60,
        reselect_every: 25,
        master_seed,
        random_bench_reps: 5,
        bootstrap_reps: 200,
        kmeans_restarts: 3,
        tsne: TsneConfig {
            max_iter: 300,
            ..TsneConfig::default()
        },
    }
}

#[test]
fn criterion_08_singleton_grouping_equals_full_tangency() {
    let model = BlockModel {
        n_assets: 8,
        n_rows: 230,
        n_blocks: 2,
        seed: 808,
        ..BlockModel::default()
    };
    let panel = model.generate().unwrap().returns;
    let config = EngineConfig {
        group_counts: vec![8],
        ..small_engine_config(8)
    };
    let ts = run_backtest_ts(&panel, 8, &config).unwrap();
    let singleton_everywhere = ts
        .epochs
        .iter()
        .all(|e| e.grouping() == Grouping::singletons(panel.n_assets()));
    let mw = run_benchmark_mw(&panel, &config).unwrap();
    let identical = ts.test_returns.len() == mw.test_returns.len()
        && ts
            .test_returns
            .iter()
            .zip(&mw.test_returns)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let pass = singleton_everywhere && identical;
    report(
        8,
        "singleton TS equals MW_full bit for bit",
        pass,
        format!(
            "{} test days, all epochs singleton: {singleton_everywhere}, bit-identical: {identical}",
            ts.test_returns.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_bootstrap_se_matches_asymptotics() {
    let t = 1259;
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let normal = Normal::new(0.0005, 0.01).unwrap();
        let r: Vec<f64> = (0..t).map(|_| normal.sample(&mut rng)).collect();
        let se = bootstrap_sharpe_se(&r, 1000, seed).unwrap();
        // iid normal: SE of the daily Sharpe is sqrt((1 + SR^2 / 2) / T)
        let sr_daily = sharpe(&r).unwrap().annualized_sharpe / TRADING_DAYS.sqrt();
        let asymptotic = ((1.0 + sr_daily * sr_daily / 2.0) / t as f64).sqrt() * TRADING_DAYS.sqrt();
        ratios.push(se / asymptotic);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let pass = (mean - 1.0).abs() < 0.15;
    report(
        9,
        "bootstrap SE vs asymptotic formula",
        pass,
        format!("mean ratio {mean:.4} over 10 seeds"),
    );
    assert!(pass);
}

const STUDY_SEEDS: u64 = 10;

fn study_config(master_seed: u64) -> EngineConfig {
    EngineConfig {
        perplexity_grid: vec![5.0, 15.0, 30.0],
        clustering_restarts: 5,
        group_counts: (2..=10).collect(),
        master_seed,
        ..EngineConfig::default()
    }
}

fn study_panel(seed: u64) -> (ReturnsPanel, Vec<usize>, Vec<clustfolio_core::data::CompanyMeta>) {
    let s = BlockModel {
        n_assets: 50,
        n_rows: 2000,
        n_blocks: 5,
        seed,
        ..BlockModel::default()
    }
    .generate()
    .unwrap();
    (s.returns, s.blocks, s.meta)
}

struct StudyRun {
    summary_csv: String,
    ts_ari: Vec<f64>,
    rnd_ari: Vec<f64>,
    ts5_sharpe: f64,
    rnd5_sharpe: f64,
}

fn run_synthetic_study(seed: u64) -> StudyRun {
    let (panel, blocks, meta) = study_panel(seed);
    let config = study_config(seed);
    let reports = run_study(&panel, Some(&meta), &Strategy::ALL, &config).unwrap();
    let rows: Vec<_> = reports.iter().map(|r| r.summary()).collect();
    let mut run = StudyRun {
        summary_csv: format_summary(&rows).unwrap(),
        ts_ari: Vec::new(),
        rnd_ari: Vec::new(),
        ts5_sharpe: f64::NAN,
        rnd5_sharpe: f64::NAN,
    };
    for r in &reports {
        if r.strategy.starts_with("TS_") {
            run.ts_ari
                .extend(r.epochs.iter().map(|e| adjusted_rand_index(&e.labels, &blocks)));
        }
        if let Some(reps) = &r.repetitions {
            for per_rep in &reps.groupings {
                run.rnd_ari
                    .extend(per_rep.iter().map(|g| adjusted_rand_index(g.labels(), &blocks)));
            }
        }
        match r.strategy.as_str() {
            "TS_5" => run.ts5_sharpe = r.summary().sharpe_annualized,
            "RND_5" => run.rnd5_sharpe = r.summary().sharpe_annualized,
            _ => {}
        }
    }
    run
}

fn study_runs() -> &'static Vec<(StudyRun, f64)> {
    static RUNS: OnceLock<Vec<(StudyRun, f64)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..STUDY_SEEDS)
            .map(|seed| {
                let start = Instant::now();
                let run = run_synthetic_study(seed);
                (run, start.elapsed().as_secs_f64())
            })
            .collect()
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_10_synthetic_study() {
    let runs = study_runs();
    let secs: f64 = runs.iter().map(|(_, s)| s).sum();
    let ts_ari = mean(&runs.iter().map(|(r, _)| mean(&r.ts_ari)).collect::<Vec<_>>());
    let rnd_ari = mean(&runs.iter().map(|(r, _)| mean(&r.rnd_ari)).collect::<Vec<_>>());
    let ts5 = mean(&runs.iter().map(|(r, _)| r.ts5_sharpe).collect::<Vec<_>>());
    let rnd5 = mean(&runs.iter().map(|(r, _)| r.rnd5_sharpe).collect::<Vec<_>>());
    for (seed, (r, s)) in runs.iter().enumerate() {
        println!(
            "  seed {seed}: TS ARI {:.3}, RND ARI {:.3}, TS_5 {:.3}, RND_5 {:.3}, {s:.1}s",
            mean(&r.ts_ari),
            mean(&r.rnd_ari),
            r.ts5_sharpe,
            r.rnd5_sharpe
        );
    }
    let ari_ok = ts_ari > rnd_ari;
    let sharpe_ok = ts5 >= rnd5;
    let pass = ari_ok && sharpe_ok && secs < 15.0 * 60.0;
    report(
        10,
        "synthetic end-to-end study",
        pass,
        format!(
            "{STUDY_SEEDS} seeds: ARI TS {ts_ari:.3} vs RND {rnd_ari:.3}; Sharpe TS_5 {ts5:.3} vs RND_5 {rnd5:.3}; {secs:.0}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_deterministic_summary() {
    let first = &study_runs()[0].0.summary_csv;
    let again = run_synthetic_study(0).summary_csv;
    let pass = *first == again;
    report(
        11,
        "fixed master seed gives byte-identical summary",
        pass,
        format!("{} bytes, identical: {pass}", first.len()),
    );
    assert!(pass);
}
