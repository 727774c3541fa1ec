use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clustfolio_core::data::write_price_csv;
use clustfolio_core::synthetic::{prices_from_returns, BlockModel};

const SMALL: &[&str] = &[
    "--set", "train_len=60",
    "--set", "val_len=20",
    "--set", "est_window=30",
    "--set", "reselect_every=10",
    "--set", "clustering_restarts=2",
    "--set", "random_bench_reps=3",
    "--set", "bootstrap_reps=50",
    "--set", "max_iter=300",
];

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(n_assets: usize, n_rows: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let s = BlockModel {
            n_assets,
            n_rows,
            n_blocks: 2,
            seed: 5,
            ..BlockModel::default()
        }
        .generate()
        .unwrap();
        write_price_csv(&prices_from_returns(&s.returns).unwrap(), dir.path().join("prices.csv")).unwrap();
        let mut meta = String::from("ticker,industry_code\n");
        for m in &s.meta {
            meta.push_str(&format!("{},{}\n", m.ticker, m.industry_code));
        }
        fs::write(dir.path().join("meta.csv"), meta).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_env(args, None)
    }

    fn run_env(&self, args: &[&str], seed: Option<&str>) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_clustfolio"));
        cmd.current_dir(self.dir.path()).args(args).env_remove("CLUSTFOLIO_SEED");
        if let Some(s) = seed {
            cmd.env("CLUSTFOLIO_SEED", s);
        }
        cmd.output().unwrap()
    }
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

#[test]
fn embed_writes_one_map_per_perplexity() {
    let f = Fixture::new(12, 60);
    let out = f.run(&["embed", "--prices", "prices.csv", "--out", "emb", "--perplexity", "3,5", "--set", "max_iter=300"]);
    ok(&out);
    assert_eq!(
        files(&f.path("emb")),
        [
            "embedding_p3.csv",
            "embedding_p3.csv.meta",
            "embedding_p3.svg",
            "embedding_p5.csv",
            "embedding_p5.csv.meta",
            "embedding_p5.svg"
        ]
    );
    let csv = fs::read_to_string(f.path("emb/embedding_p3.csv")).unwrap();
    assert!(csv.starts_with("ticker,y1,y2\n"));
    assert_eq!(csv.lines().count(), 13);
    assert!(out.stdout.is_empty());
}

#[test]
fn embed_colored_by_industry_has_legend() {
    let f = Fixture::new(12, 60);
    let out = f.run(&[
        "embed", "--prices", "prices.csv", "--meta", "meta.csv", "--out", "emb",
        "--perplexity", "4", "--color-industry", "4", "--set", "max_iter=300",
    ]);
    ok(&out);
    let svg = fs::read_to_string(f.path("emb/embedding_p4.svg")).unwrap();
    assert_eq!(svg.matches("class=\"legend\"").count(), 4);
    assert!(svg.contains("code 1010"));
}

#[test]
fn empty_perplexity_list_is_a_usage_error() {
    let f = Fixture::new(6, 30);
    let out = f.run(&["embed", "--prices", "prices.csv", "--perplexity", ""]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("error")).count(), 1);
}

#[test]
fn missing_prices_and_unknown_flags_exit_2() {
    let f = Fixture::new(6, 30);
    assert_eq!(f.run(&["embed", "--prices", "nope.csv"]).status.code(), Some(2));
    assert_eq!(f.run(&["embed", "--bogus"]).status.code(), Some(2));
    assert_eq!(f.run(&["backtest", "--set", "oops"]).status.code(), Some(2));
}

#[test]
fn cluster_twice_with_new_k_and_reproducible_svg() {
    let f = Fixture::new(14, 60);
    ok(&f.run(&["embed", "--prices", "prices.csv", "--out", "emb", "--perplexity", "4", "--set", "max_iter=300"]));
    let args = ["cluster", "--embedding", "emb/embedding_p4.csv", "--out", "cl", "--seed", "7"];
    ok(&f.run(&[&args[..], &["--groups", "2"]].concat()));
    ok(&f.run(&[&args[..], &["--groups", "3"]].concat()));
    for k in [2, 3] {
        let csv = fs::read_to_string(f.path(&format!("cl/grouping_k{k}.csv"))).unwrap();
        let labels: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(labels.len(), 14);
        for g in 0..k {
            assert!(labels.contains(&g), "group {g} empty for k = {k}");
        }
    }
    let first = fs::read(f.path("cl/grouping_k3.svg")).unwrap();
    ok(&f.run(&[&args[..], &["--groups", "3"]].concat()));
    assert_eq!(first, fs::read(f.path("cl/grouping_k3.svg")).unwrap());
}

#[test]
fn cluster_with_too_many_groups_exits_1_and_leaves_nothing() {
    let f = Fixture::new(6, 40);
    let out = f.run(&["cluster", "--prices", "prices.csv", "--perplexity", "2", "--groups", "2,9", "--out", "cl", "--set", "max_iter=300"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(files(&f.path("cl")).is_empty());
}

#[test]
fn backtest_single_strategy() {
    let f = Fixture::new(6, 95);
    let out = f.run(&[&["backtest", "--prices", "prices.csv", "--out", "bt", "--strategies", "N_full"], SMALL].concat());
    ok(&out);
    let summary = fs::read_to_string(f.path("bt/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("N_full,1,"));
    assert!(f.path("bt/returns_N_full.csv").exists());
    assert!(f.path("bt/sharpe_vs_g.svg").exists());
}

#[test]
fn full_backtest_rows_and_determinism() {
    let f = Fixture::new(8, 95);
    let base = [
        &["backtest", "--prices", "prices.csv", "--meta", "meta.csv", "--groups", "2-3", "--perplexity", "3,4", "--seed", "11"][..],
        SMALL,
    ]
    .concat();
    ok(&f.run(&[&base[..], &["--out", "a"]].concat()));
    ok(&f.run(&[&base[..], &["--out", "b", "--jobs", "1"]].concat()));
    let a = fs::read(f.path("a/summary.csv")).unwrap();
    assert_eq!(a, fs::read(f.path("b/summary.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 + 4);
    let chart = fs::read_to_string(f.path("a/sharpe_vs_g.svg")).unwrap();
    assert_eq!(chart.matches("class=\"TS\"").count(), 2);
    assert!(chart.contains("class=\"TR4\""));
    let log = fs::read_to_string(f.path("a/epochs.jsonl")).unwrap();
    assert!(log.lines().count() >= 8);

    ok(&f.run(&["report", "--out", "a"]));
    let table = fs::read_to_string(f.path("a/summary.txt")).unwrap();
    assert!(table.contains("MW_full"));
}

#[test]
fn seed_precedence() {
    let f = Fixture::new(10, 50);
    let cluster = |extra: &[&str], env: Option<&str>, out: &str| {
        let args = [&["cluster", "--prices", "prices.csv", "--perplexity", "3", "--groups", "3", "--out", out, "--set", "max_iter=300"][..], extra].concat();
        ok(&f.run_env(&args, env));
        fs::read(f.path(&format!("{out}/grouping_k3.csv.meta"))).unwrap()
    };
    fs::write(f.path("cfg.txt"), "# fixed seed\nseed = 5\n").unwrap();
    let from_env = cluster(&[], Some("5"), "e");
    let from_flag = cluster(&["--seed", "5"], Some("99"), "f");
    let from_file = cluster(&["--config", "cfg.txt"], Some("99"), "c");
    let csv = |d: &str| fs::read(f.path(&format!("{d}/grouping_k3.csv"))).unwrap();
    assert_eq!(from_env, from_flag);
    assert_eq!(from_env, from_file);
    assert_eq!(csv("e"), csv("f"));
    assert_eq!(csv("e"), csv("c"));
}

#[test]
fn report_without_summary_is_usage_error() {
    let f = Fixture::new(6, 30);
    assert_eq!(f.run(&["report", "--out", "nowhere"]).status.code(), Some(2));
}
