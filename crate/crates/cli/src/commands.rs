//! The four CLI verbs. Every file is written atomically; per-pool analysis
//! runs in parallel and is written in pool order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use lpscope::amm::PoolId;
use lpscope::analytics::classify::classify_replayed_pool;
use lpscope::analytics::returns::{cumulative_series, CumulativeRow};
use lpscope::analytics::{
    daily_fee_series, daily_impermanent_loss_series, daily_return_series, pearson, At, Histogram, PoolCategory,
    RiskReport, ValuationContext,
};
use lpscope::ingest::replay::{read_snapshots_csv, write_snapshots_csv, PoolSnapshotSeries};
use lpscope::ingest::{
    daily_aggregate, parse_event_log, replay, write_event_log, DailyRow, Event, PriceFeed, ReplayOptions,
    TokenRegistry, SECONDS_PER_DAY,
};
use lpscope::ledger::{pools_per_provider, read_snapshot_csv, single_pool_liquidity_share, write_snapshot_csv};
use lpscope::movement::{
    average_liquidity, build_matrix, detect_movements, eligible_pools, liquidity_event_counts, movement_timeseries,
    write_records_csv,
};
use rayon::prelude::*;

use crate::config::{day_label, RunConfig};
use crate::error::CliError;
use crate::output::{open, write_atomic};
use crate::scenario::{generate, Scenario};

pub const SNAPSHOTS: &str = "snapshots.csv";
pub const LEDGER: &str = "ledger.csv";

fn csv_err(e: csv::Error) -> String {
    e.to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_events(path: &Path) -> Result<Vec<Event>, CliError> {
    parse_event_log(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_registry(path: Option<&PathBuf>) -> Result<TokenRegistry, CliError> {
    match path {
        Some(p) => TokenRegistry::read_csv(open(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => Ok(TokenRegistry::new()),
    }
}

fn load_snapshots(dir: &Path) -> Result<BTreeMap<PoolId, PoolSnapshotSeries>, CliError> {
    let path = dir.join(SNAPSHOTS);
    read_snapshots_csv(open(&path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes events.jsonl, prices.csv, registry.csv and planted.csv.
pub fn cmd_generate(sc: &Scenario, seed: u64, out: &Path) -> Result<(), CliError> {
    let g = generate(sc, seed)?;
    write_atomic(&out.join("events.jsonl"), |w| write_event_log(w, &g.events).map_err(|e| e.to_string()))?;
    write_atomic(&out.join("prices.csv"), |w| g.feed.write_csv(w).map_err(csv_err))?;
    write_atomic(&out.join("registry.csv"), |w| g.registry.write_csv(w).map_err(csv_err))?;
    write_atomic(&out.join("planted.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["address", "from_pool", "to_pool"]).map_err(csv_err)?;
        for (a, f, t) in &g.planted {
            c.write_record([a.as_str(), f.as_str(), t.as_str()]).map_err(csv_err)?;
        }
        c.flush().map_err(|e| e.to_string())
    })
}

/// Replays the event log; writes snapshots.csv and ledger.csv (final balances).
pub fn cmd_replay(cfg: &RunConfig) -> Result<(), CliError> {
    let events = load_events(cfg.require(&cfg.events, "events")?)?;
    let registry = load_registry(cfg.registry.as_ref())?;
    let opts = ReplayOptions { mode: cfg.mode, ..ReplayOptions::default() };
    let out = replay(&events, &opts, Some(&registry))?;
    for d in &out.divergences {
        eprintln!("divergence {} at {}: {} logged {} derived {}", d.pool, d.key, d.field, d.logged, d.derived);
    }
    write_atomic(&cfg.out.join(SNAPSHOTS), |w| write_snapshots_csv(w, &out.pools).map_err(csv_err))?;
    write_atomic(&cfg.out.join(LEDGER), |w| write_snapshot_csv(w, &out.ledger.snapshot()).map_err(csv_err))
}

struct DailyFigures {
    day: u64,
    return_pct: f64,
    fees_pct: f64,
    il_pct: f64,
}

struct Correlation {
    metric: &'static str,
    n: usize,
    value: Result<f64, String>,
}

struct PoolReport {
    series: PoolSnapshotSeries,
    daily: Result<Vec<DailyFigures>, String>,
    cumulative: Result<Vec<CumulativeRow>, String>,
    risk: Result<RiskReport, String>,
    category: Result<PoolCategory, String>,
    activity: Vec<DailyRow>,
    correlations: Vec<Correlation>,
}

fn daily_figures(ctx: &ValuationContext, pool: &PoolId, start: u64, end: u64, interval: u64) -> Result<(Vec<DailyFigures>, Vec<CumulativeRow>), String> {
    let v = ctx.valuation_series(pool, start, end, interval).map_err(|e| e.to_string())?;
    let ret = daily_return_series(&v).map_err(|e| e.to_string())?;
    let fees = daily_fee_series(&v).map_err(|e| e.to_string())?;
    let il = daily_impermanent_loss_series(&v).map_err(|e| e.to_string())?;
    let rows = ret
        .iter()
        .zip(&fees)
        .zip(&il)
        .map(|((r, f), i)| DailyFigures { day: r.day, return_pct: r.value, fees_pct: f.value, il_pct: i.value })
        .collect();
    let cum = cumulative_series(&v).map_err(|e| e.to_string())?;
    Ok((rows, cum))
}

fn correlate(metric: &'static str, pairs: Vec<(f64, f64)>) -> Correlation {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Correlation { metric, n: x.len(), value: pearson(&x, &y).map_err(|e| e.to_string()) }
}

fn analyze_pool(ctx: &ValuationContext, series: &PoolSnapshotSeries, cfg: &RunConfig, start: u64, end: u64) -> PoolReport {
    let pool = &series.pool;
    let figures = daily_figures(ctx, pool, start, end, cfg.sample_interval);
    let (daily, cumulative) = match figures {
        Ok((d, c)) => (Ok(d), Ok(c)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let risk = match &daily {
        Ok(d) => {
            let returns: Vec<f64> = d.iter().map(|f| f.return_pct).collect();
            RiskReport::from_daily_returns(pool.clone(), &returns, cfg.cvar_level).map_err(|e| e.to_string())
        }
        Err(e) => Err(e.clone()),
    };
    let category = classify_replayed_pool(ctx, &series.token0, &series.token1, start, end, &cfg.classify)
        .map_err(|e| e.to_string());
    let (d0, d1) = (start / SECONDS_PER_DAY, end / SECONDS_PER_DAY);
    let activity: Vec<DailyRow> =
        daily_aggregate(series, Some(ctx)).into_iter().filter(|r| r.day >= d0 && r.day <= d1).collect();

    let day_end = |day: u64| At::Time(((day + 1) * SECONDS_PER_DAY - 1).min(end));
    let with_liquidity = |f: &dyn Fn(&DailyRow) -> Option<f64>| -> Vec<(f64, f64)> {
        activity.iter().filter_map(|r| Some((r.end_liquidity_usd?, f(r)?))).collect()
    };
    let correlations = vec![
        correlate("liquidity_volume", with_liquidity(&|r| r.volume_usd)),
        correlate("liquidity_price0", with_liquidity(&|r| ctx.token_price_usd(&series.token0, day_end(r.day)).ok())),
        correlate("liquidity_price1", with_liquidity(&|r| ctx.token_price_usd(&series.token1, day_end(r.day)).ok())),
        correlate("mints_burns", activity.iter().map(|r| (r.mint_count as f64, r.burn_count as f64)).collect()),
    ];
    PoolReport { series: series.clone(), daily, cumulative, risk, category, activity, correlations }
}

/// Reads replay output and writes the per-pool report files.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_snapshots(&cfg.replay_dir)?;
    let prices = cfg.require(&cfg.prices, "prices")?;
    let feed = PriceFeed::read_csv(open(prices)?).map_err(|e| CliError::Input(format!("{}: {e}", prices.display())))?;
    let registry = load_registry(cfg.registry.as_ref())?;
    let ledger_path = cfg.replay_dir.join(LEDGER);
    let balances = read_snapshot_csv(open(&ledger_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", ledger_path.display())))?;

    let first_ts = series.values().filter_map(|s| s.first()).map(|s| s.key.timestamp).min().unwrap_or(0);
    let last_ts = series.values().filter_map(|s| s.last()).map(|s| s.key.timestamp).max().unwrap_or(0);
    let start = cfg.start.unwrap_or(first_ts);
    let end = cfg.end.unwrap_or(last_ts);
    let ctx = ValuationContext::new(feed, registry, series, cfg.weth.clone());
    let all: Vec<&PoolSnapshotSeries> = ctx.all_series().values().collect();
    let reports: Vec<PoolReport> = all.par_iter().map(|s| analyze_pool(&ctx, s, cfg, start, end)).collect();

    let out = &cfg.out;
    write_atomic(&out.join("returns_daily.csv"), |w| {
        writeln!(w, "pool,day,date,return_pct,fees_pct,il_pct").map_err(|e| e.to_string())?;
        for r in &reports {
            for d in r.daily.iter().flatten() {
                writeln!(w, "{},{},{},{},{},{}", r.series.pool, d.day, day_label(d.day), d.return_pct, d.fees_pct, d.il_pct)
                    .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    })?;
    write_atomic(&out.join("cumulative.csv"), |w| {
        writeln!(w, "pool,day,date,return_pct,fees_pct,il_pct").map_err(|e| e.to_string())?;
        for r in &reports {
            for c in r.cumulative.iter().flatten() {
                writeln!(w, "{},{},{},{},{},{}", r.series.pool, c.day, day_label(c.day), c.return_pct, c.fees_pct, c.impermanent_loss_pct)
                    .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    })?;
    write_atomic(&out.join("histogram.csv"), |w| {
        writeln!(w, "pool,bin,lo,hi,frequency").map_err(|e| e.to_string())?;
        for r in &reports {
            let Ok(daily) = &r.daily else { continue };
            let xs: Vec<f64> = daily.iter().map(|d| d.return_pct).collect();
            let Some(h) = Histogram::new(&xs, cfg.histogram_bins) else { continue };
            for (i, f) in h.frequencies.iter().enumerate() {
                let (lo, hi) = h.bin_edges(i);
                writeln!(w, "{},{i},{lo},{hi},{f}", r.series.pool).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    })?;
    write_atomic(&out.join("risk.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["pool", "category", "n_days", "mean_daily_return_pct", "cvar_pct", "level", "status"]).map_err(csv_err)?;
        for r in &reports {
            let category = r.category.as_ref().map(|c| c.category.to_string()).unwrap_or_default();
            let row = match &r.risk {
                Ok(k) => [
                    r.series.pool.to_string(),
                    category,
                    k.n_days.to_string(),
                    k.mean_daily_return_pct.to_string(),
                    k.cvar_daily_pct.to_string(),
                    k.level.to_string(),
                    "ok".into(),
                ],
                Err(e) => [r.series.pool.to_string(), category, "0".into(), String::new(), String::new(), cfg.cvar_level.to_string(), e.clone()],
            };
            c.write_record(&row).map_err(csv_err)?;
        }
        c.flush().map_err(|e| e.to_string())
    })?;
    write_atomic(&out.join("classification.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "pool", "token0", "token1", "category", "days0", "volatility0", "range0", "days1", "volatility1", "range1", "status",
        ])
        .map_err(csv_err)?;
        for r in &reports {
            let s = &r.series;
            let mut row = vec![s.pool.to_string(), s.token0.to_string(), s.token1.to_string()];
            match &r.category {
                Ok(pc) => {
                    row.push(pc.category.to_string());
                    for ev in &pc.evidence {
                        row.extend([ev.days.to_string(), fmt_opt(ev.daily_volatility), fmt_opt(ev.price_range)]);
                    }
                    row.push("ok".into());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push(e.clone());
                }
            }
            c.write_record(&row).map_err(csv_err)?;
        }
        c.flush().map_err(|e| e.to_string())
    })?;
    write_atomic(&out.join("activity.csv"), |w| {
        writeln!(w, "pool,day,date,mints,burns,swaps,volume_usd,end_liquidity_usd").map_err(|e| e.to_string())?;
        for r in &reports {
            for a in &r.activity {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.series.pool,
                    a.day,
                    day_label(a.day),
                    a.mint_count,
                    a.burn_count,
                    a.swap_count,
                    fmt_opt(a.volume_usd),
                    fmt_opt(a.end_liquidity_usd)
                )
                .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    })?;

    // market-wide daily injections against withdrawals
    let mut totals: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for r in &reports {
        for a in &r.activity {
            let t = totals.entry(a.day).or_default();
            t.0 += a.mint_count as f64;
            t.1 += a.burn_count as f64;
        }
    }
    let market = correlate("mints_burns", totals.into_values().collect());
    write_atomic(&out.join("correlation.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["pool", "metric", "n", "value", "status"]).map_err(csv_err)?;
        let rows = reports
            .iter()
            .flat_map(|r| r.correlations.iter().map(move |k| (r.series.pool.to_string(), k)))
            .chain([("ALL".to_string(), &market)]);
        for (pool, k) in rows {
            let (value, status) = match &k.value {
                Ok(v) => (v.to_string(), "ok".to_string()),
                Err(e) => (String::new(), e.clone()),
            };
            c.write_record([pool, k.metric.into(), k.n.to_string(), value, status]).map_err(csv_err)?;
        }
        c.flush().map_err(|e| e.to_string())
    })?;
    write_atomic(&out.join("providers.csv"), |w| {
        writeln!(w, "pools_participated,providers").map_err(|e| e.to_string())?;
        for (n, count) in pools_per_provider(&balances) {
            writeln!(w, "{n},{count}").map_err(|e| e.to_string())?;
        }
        Ok(())
    })?;
    write_atomic(&out.join("single_pool_share.csv"), |w| {
        writeln!(w, "pool,single_pool_share").map_err(|e| e.to_string())?;
        for pool in balances.keys() {
            let share = single_pool_liquidity_share(&balances, pool).ok();
            writeln!(w, "{pool},{}", fmt_opt(share)).map_err(|e| e.to_string())?;
        }
        Ok(())
    })
}

/// Detects movements and writes matrix_raw.csv, matrix_capped.csv,
/// records.csv, series.csv and meta.csv.
pub fn cmd_movements(cfg: &RunConfig) -> Result<(), CliError> {
    let events = load_events(cfg.require(&cfg.events, "events")?)?;
    let series = load_snapshots(&cfg.replay_dir)?;
    let ctx = match &cfg.prices {
        Some(p) => {
            let feed = PriceFeed::read_csv(open(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            let registry = load_registry(cfg.registry.as_ref())?;
            Some(ValuationContext::new(feed, registry, series.clone(), cfg.weth.clone()))
        }
        None => None,
    };
    let in_window = |ts: u64| cfg.start.is_none_or(|s| ts >= s) && cfg.end.is_none_or(|e| ts <= e);
    let events: Vec<Event> = events.into_iter().filter(|e| in_window(e.key.timestamp)).collect();

    // pool size: USD value when prices are given, liquidity supply otherwise
    let average: BTreeMap<PoolId, f64> = series
        .values()
        .filter_map(|s| {
            let avg = match &ctx {
                Some(ctx) => average_liquidity(s, |snap| ctx.reserves_usd(&s.pool, snap.reserve0, snap.reserve1, At::Key(snap.key)).ok()),
                None => average_liquidity(s, |snap| Some(snap.total_liquidity as f64)),
            };
            avg.map(|a| (s.pool.clone(), a))
        })
        .collect();
    let counts = liquidity_event_counts(&events);
    let pools = eligible_pools(&counts, &average, cfg.eligibility);
    let records = detect_movements(&events, cfg.movement_window, cfg.matching);
    let matrix = build_matrix(&records, &pools, cfg.display_cap);

    let out = &cfg.out;
    write_atomic(&out.join("matrix_raw.csv"), |w| matrix.write_csv(w, false).map_err(csv_err))?;
    write_atomic(&out.join("matrix_capped.csv"), |w| matrix.write_csv(w, true).map_err(csv_err))?;
    write_atomic(&out.join("records.csv"), |w| write_records_csv(w, &records).map_err(csv_err))?;

    let first_day = events.iter().map(|e| e.key.day()).min().unwrap_or(0);
    let last_day = events.iter().map(|e| e.key.day()).max().unwrap_or(0);
    write_atomic(&out.join("series.csv"), |w| {
        writeln!(w, "from_pool,to_pool,day,date,count").map_err(|e| e.to_string())?;
        for (i, from) in pools.iter().enumerate() {
            for (j, to) in pools.iter().enumerate() {
                if matrix.counts[i][j] == 0 {
                    continue;
                }
                for (day, n) in movement_timeseries(&records, from, to, cfg.bucket_days, first_day, last_day) {
                    writeln!(w, "{from},{to},{day},{},{n}", day_label(day)).map_err(|e| e.to_string())?;
                }
            }
        }
        Ok(())
    })?;
    write_atomic(&out.join("meta.csv"), |w| {
        writeln!(w, "key,value").map_err(|e| e.to_string())?;
        for (k, v) in [
            ("matching", cfg.matching.to_string()),
            ("window_blocks", cfg.movement_window.to_string()),
            ("eligibility_threshold", cfg.eligibility.to_string()),
            ("display_cap", cfg.display_cap.to_string()),
            ("eligible_pools", pools.len().to_string()),
            ("movements", records.len().to_string()),
            ("movements_between_eligible", matrix.total().to_string()),
        ] {
            writeln!(w, "{k},{v}").map_err(|e| e.to_string())?;
        }
        Ok(())
    })
}
