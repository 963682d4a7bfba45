use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lpscope::amm::PoolId;
use lpscope::ingest::{replay, EventKind, ReplayOptions};
use lpscope_cli::scenario::{generate, Scenario};

fn lpscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpscope")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lpscope(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// generate + replay + analyze for a preset into `dir`.
fn pipeline(dir: &Path, preset: &str, extra: &[&str]) {
    let (gen, rep, ana) = (dir.join("gen"), dir.join("rep"), dir.join("ana"));
    ok(&["generate", "--preset", preset, "--seed", "42", "--out", s(&gen)]);
    ok(&["replay", "--events", s(&gen.join("events.jsonl")), "--registry", s(&gen.join("registry.csv")), "--out", s(&rep)]);
    let (prices, registry) = (gen.join("prices.csv"), gen.join("registry.csv"));
    let mut args = vec![
        "analyze",
        "--replay-dir",
        s(&rep),
        "--prices",
        s(&prices),
        "--registry",
        s(&registry),
        "--out",
        s(&ana),
    ];
    args.extend(extra);
    ok(&args);
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn minimal_preset_is_two_lines() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--preset", "minimal", "--out", s(dir.path())]);
    let log = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn same_seed_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", "--preset", "market", "--seed", "42", "--out", s(&a)]);
    ok(&["generate", "--preset", "market", "--seed", "42", "--out", s(&b)]);
    for f in ["events.jsonl", "prices.csv", "registry.csv", "planted.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn replay_writes_two_files_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    fs::write(
        &log,
        concat!(
            "{\"block\":1,\"tx_index\":0,\"log_index\":0,\"ts\":10,\"pool\":\"A-B\",\"kind\":\"PoolCreated\",\"actor\":\"0xf\",\"token0\":\"A\",\"token1\":\"B\"}\n",
            "{\"block\":2,\"tx_index\":0,\"log_index\":0,\"ts\":20,\"pool\":\"A-B\",\"kind\":\"Mint\",\"actor\":\"0xa\",\"amount0\":1000000,\"amount1\":1000000}\n",
            "{\"block\":3,\"tx_index\":0,\"log_index\":0,\"ts\":30,\"pool\":\"A-B\",\"kind\":\"Swap\",\"actor\":\"0xt\",\"in_token\":\"A\",\"amount_in\":100000}\n",
        ),
    )
    .unwrap();
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    ok(&["replay", "--events", s(&log), "--out", s(&o1)]);
    ok(&["replay", "--events", s(&log), "--out", s(&o2)]);
    let mut names: Vec<String> = fs::read_dir(&o1).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["ledger.csv", "snapshots.csv"]);
    for f in &names {
        assert_eq!(fs::read(o1.join(f)).unwrap(), fs::read(o2.join(f)).unwrap());
    }
    let snaps = fs::read_to_string(o1.join("snapshots.csv")).unwrap();
    assert!(snaps.lines().last().unwrap().ends_with(",Swap,1100000,909339,1000000"), "{snaps}");
}

#[test]
fn malformed_line_two_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    fs::write(
        &log,
        "{\"block\":1,\"tx_index\":0,\"log_index\":0,\"ts\":5,\"pool\":\"P\",\"kind\":\"Mint\",\"actor\":\"0xa\",\"amount0\":4,\"amount1\":9}\n{oops\n",
    )
    .unwrap();
    let out = lpscope(&["replay", "--events", s(&log), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_input_is_an_input_error() {
    let out = lpscope(&["replay", "--events", "/nonexistent/events.jsonl", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stable_scenario_earns_with_no_tail_loss() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "stable", &[]);
    let risk = rows(&dir.path().join("ana/risk.csv"));
    let row = risk.iter().find(|r| &r[0] == "USDC-USDT").unwrap();
    let (mean, cvar): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
    assert!(mean > 0.0, "{row:?}");
    assert!(cvar >= -1e-9, "{row:?}");
    assert_eq!(&row[1], "Stable");
}

#[test]
fn exotic_scenario_loses_to_impermanent_loss() {
    let dir = tempfile::tempdir().unwrap();
    // the price falls exactly 100x; the default factor needs more than that
    pipeline(dir.path(), "exotic", &["--exotic-factor", "50"]);
    let cum = rows(&dir.path().join("ana/cumulative.csv"));
    let il: f64 = cum.last().unwrap()[5].parse().unwrap();
    let closed = 100.0 * (2.0 * 10.0 / 101.0 - 1.0);
    assert!((il - closed).abs() < 1e-3, "{il} vs {closed}");
    let class = rows(&dir.path().join("ana/classification.csv"));
    assert_eq!(&class[0][3], "Exotic");
}

#[test]
fn empty_window_gives_insufficient_data_rows() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "stable", &["--start", "1000", "--end", "2000"]);
    let risk = rows(&dir.path().join("ana/risk.csv"));
    assert_eq!(risk.len(), 3);
    for r in &risk {
        assert!(r[6].starts_with("insufficient data"), "{r:?}");
    }
}

#[test]
fn analyze_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "market", &["--histogram-bins", "8"]);
    for f in [
        "returns_daily.csv",
        "cumulative.csv",
        "histogram.csv",
        "risk.csv",
        "classification.csv",
        "activity.csv",
        "correlation.csv",
        "providers.csv",
        "single_pool_share.csv",
    ] {
        let text = fs::read_to_string(dir.path().join("ana").join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f} is empty");
    }
    let hist = rows(&dir.path().join("ana/histogram.csv"));
    let dai_usdc: f64 = hist.iter().filter(|r| &r[0] == "DAI-USDC").map(|r| r[4].parse::<f64>().unwrap()).sum();
    assert!((dai_usdc - 1.0).abs() < 1e-12);
    let corr = rows(&dir.path().join("ana/correlation.csv"));
    assert!(corr.iter().any(|r| &r[0] == "ALL" && &r[1] == "mints_burns"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "stable", &[]);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "cvar_level = 0.25\n").unwrap();
    let ana = dir.path().join("ana2");
    ok(&[
        "analyze",
        "--replay-dir",
        s(&dir.path().join("rep")),
        "--prices",
        s(&dir.path().join("gen/prices.csv")),
        "--cvar-level",
        "0.1",
        "--config",
        s(&cfg),
        "--out",
        s(&ana),
    ]);
    let risk = rows(&ana.join("risk.csv"));
    assert_eq!(&risk[0][5], "0.25");
}

const BURST: &str = r#"
days = 3
eth_usd = { kind = "constant", usd = 400.0 }
tokens = [{ id = "DAI", price = { kind = "constant", usd = 1.0 } }, { id = "UNI", price = { kind = "constant", usd = 4.0 } }]
pools = [
  { token_a = "DAI", token_b = "WETH", liquidity_usd = 10000000.0 },
  { token_a = "UNI", token_b = "WETH", liquidity_usd = 10000000.0 },
]
movers = [{ from = ["DAI", "WETH"], to = ["UNI", "WETH"], burst_day = 1, burst_count = 700 }]
"#;

#[test]
fn movements_cap_and_spike() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("burst.toml"), BURST).unwrap();
    ok(&["generate", "--scenario", s(&p.join("burst.toml")), "--seed", "1", "--out", s(&p.join("gen"))]);
    let events = p.join("gen/events.jsonl");
    ok(&["replay", "--events", s(&events), "--out", s(&p.join("rep"))]);
    ok(&[
        "movements",
        "--events",
        s(&events),
        "--replay-dir",
        s(&p.join("rep")),
        "--eligibility",
        "0",
        "--display-cap",
        "500",
        "--out",
        s(&p.join("mov")),
    ]);
    let raw = rows(&p.join("mov/matrix_raw.csv"));
    let capped = rows(&p.join("mov/matrix_capped.csv"));
    let max = |m: &[csv::StringRecord]| m.iter().flat_map(|r| r.iter().skip(1).map(|v| v.parse::<u64>().unwrap()).collect::<Vec<_>>()).max().unwrap();
    assert_eq!(max(&raw), 700);
    assert_eq!(max(&capped), 500);
    let series = rows(&p.join("mov/series.csv"));
    let peak = series.iter().max_by_key(|r| r[4].parse::<u64>().unwrap()).unwrap();
    let first_day: u64 = series[0][2].parse().unwrap();
    assert_eq!(peak[2].parse::<u64>().unwrap(), first_day + 1);
    assert_eq!(&peak[4], "700");
}

#[test]
fn movements_without_cross_pool_activity_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "stable", &[]);
    let p = dir.path();
    ok(&[
        "movements",
        "--events",
        s(&p.join("gen/events.jsonl")),
        "--replay-dir",
        s(&p.join("rep")),
        "--eligibility",
        "0",
        "--out",
        s(&p.join("mov")),
    ]);
    let raw = rows(&p.join("mov/matrix_raw.csv"));
    assert_eq!(raw.len(), 3);
    assert!(raw.iter().all(|r| r.iter().skip(1).all(|v| v == "0")));
}

#[test]
fn hundred_thousand_swaps_keep_k_monotone() {
    let sc = Scenario::from_toml(
        r#"
days = 10
eth_usd = { kind = "gbm", usd = 400.0, vol = 0.05 }
tokens = [{ id = "UNI", price = { kind = "gbm", usd = 4.0, vol = 0.08 } }]
pools = [{ token_a = "UNI", token_b = "WETH", liquidity_usd = 10000000.0, swaps_per_day = 5000.0, mints_per_day = 20.0, burns_per_day = 20.0, providers = 4 }]
"#,
    )
    .unwrap();
    let g = generate(&sc, 3).unwrap();
    let swaps = g.events.iter().filter(|e| e.kind() == EventKind::Swap).count();
    assert!(swaps >= 100_000, "{swaps}");
    let out = replay(&g.events, &ReplayOptions::default(), Some(&g.registry)).unwrap();
    let snaps = &out.pools[&PoolId::from("UNI-WETH")].snapshots;
    for w in snaps.windows(2).filter(|w| w[1].kind == EventKind::Swap) {
        let k = |s: &lpscope::ingest::replay::Snapshot| num_bigint::BigUint::from(s.reserve0) * s.reserve1;
        assert!(k(&w[1]) > k(&w[0]));
    }
}
