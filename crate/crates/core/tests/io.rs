use clustfolio_core::data::{compute_discrete_returns, load_meta_csv, load_price_csv, write_price_csv};
use clustfolio_core::engine::{run_benchmark_naive, EngineConfig};
use clustfolio_core::export::{
    read_embedding, read_summary, sidecar_path, write_embedding, write_epoch_log, write_returns,
    write_summary,
};
use clustfolio_core::synthetic::{prices_from_returns, BlockModel};
use clustfolio_core::tsne::{run_tsne, TsneConfig};

#[test]
fn synthetic_prices_round_trip_through_csv() {
    let s = BlockModel {
        n_assets: 6,
        n_rows: 40,
        n_blocks: 2,
        seed: 21,
        ..BlockModel::default()
    }
    .generate()
    .unwrap();
    let prices = prices_from_returns(&s.returns).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    write_price_csv(&prices, &path).unwrap();
    let loaded = load_price_csv(&path).unwrap();
    assert_eq!(loaded.dates(), prices.dates());
    assert_eq!(loaded.tickers(), prices.tickers());
    assert_eq!(loaded.prices(), prices.prices());
    let returns = compute_discrete_returns(&loaded).unwrap();
    for (a, b) in returns.returns().iter().zip(s.returns.returns().iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn meta_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.csv");
    std::fs::write(&path, "ticker,industry_code\nAAA,5510\nBBB,5720\n").unwrap();
    let meta = load_meta_csv(&path).unwrap();
    assert_eq!(meta.len(), 2);
    assert_eq!(meta[1].prefix(2), "57");
}

#[test]
fn embedding_csv_round_trip() {
    let s = BlockModel {
        n_assets: 9,
        n_rows: 50,
        n_blocks: 3,
        seed: 22,
        ..BlockModel::default()
    }
    .generate()
    .unwrap();
    let x = s.returns.company_matrix(0..50);
    let config = TsneConfig {
        perplexity: 3.0,
        max_iter: 300,
        ..TsneConfig::default()
    };
    let e = run_tsne(x.view(), &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    write_embedding(&path, s.returns.tickers(), &e).unwrap();
    let (tickers, points) = read_embedding(&path).unwrap();
    assert_eq!(tickers, s.returns.tickers());
    assert_eq!(points, e.points);
    let meta = std::fs::read_to_string(sidecar_path(&path)).unwrap();
    assert!(meta.contains("perplexity=3\n"));
    assert!(meta.contains("final_cost="));
}

#[test]
fn report_artifacts_are_written() {
    let s = BlockModel {
        n_assets: 4,
        n_rows: 90,
        n_blocks: 2,
        seed: 23,
        ..BlockModel::default()
    }
    .generate()
    .unwrap();
    let config = EngineConfig {
        train_len: 60,
        val_len: 20,
        est_window: 30,
        reselect_every: 5,
        bootstrap_reps: 20,
        ..EngineConfig::default()
    };
    let report = run_benchmark_naive(&s.returns, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let returns_path = dir.path().join("returns.csv");
    write_returns(&returns_path, &report).unwrap();
    let text = std::fs::read_to_string(&returns_path).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.starts_with("date,test_return\n"));

    let summary_path = dir.path().join("summary.csv");
    write_summary(&summary_path, &[report.summary()]).unwrap();
    let rows = read_summary(&summary_path).unwrap();
    assert_eq!(rows[0].strategy, "N_full");
    assert_eq!(rows[0].n_obs, 10);

    let log_path = dir.path().join("epochs.jsonl");
    write_epoch_log(&log_path, &[report]).unwrap();
    let log = std::fs::read_to_string(&log_path).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["strategy"], "N_full");
    assert_eq!(first["g"], 1);
}
