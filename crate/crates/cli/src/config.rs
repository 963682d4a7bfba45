//! Run configuration: command-line flags merged with an optional TOML file.
//! Values in the file take precedence over flags.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use lpscope::amm::TokenId;
use lpscope::analytics::ClassifyConfig;
use lpscope::ingest::{ReplayMode, SECONDS_PER_DAY};
use lpscope::movement::{MatchingMode, DEFAULT_DISPLAY_CAP, DEFAULT_ELIGIBILITY, DEFAULT_WINDOW};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// JSON-lines event log
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// ETH/USD price feed CSV (ts,price_usd)
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Pool/token registry CSV (pool,token0,token1,decimals0,decimals1)
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Directory holding replay output (snapshots.csv, ledger.csv)
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window start: unix seconds or YYYY-MM-DD (UTC)
    #[arg(long)]
    pub start: Option<String>,
    /// Window end (inclusive): unix seconds or YYYY-MM-DD (UTC, whole day)
    #[arg(long)]
    pub end: Option<String>,
    /// Numeraire token traded against every priced token
    #[arg(long)]
    pub weth: Option<String>,
    /// Comma-separated stable coin list
    #[arg(long, value_delimiter = ',')]
    pub stable_tokens: Option<Vec<String>>,
    #[arg(long)]
    pub stable_volatility: Option<f64>,
    #[arg(long)]
    pub exotic_factor: Option<f64>,
    #[arg(long)]
    pub min_history_days: Option<usize>,
    #[arg(long)]
    pub cvar_level: Option<f64>,
    /// Seconds between valuation samples besides event times
    #[arg(long)]
    pub sample_interval: Option<u64>,
    #[arg(long)]
    pub histogram_bins: Option<usize>,
    /// Movement window in blocks
    #[arg(long)]
    pub movement_window: Option<u64>,
    /// Minimum liquidity events (exclusive) for a pool to enter the matrix
    #[arg(long)]
    pub eligibility: Option<usize>,
    #[arg(long)]
    pub display_cap: Option<u64>,
    #[arg(long)]
    pub bucket_days: Option<u64>,
    /// derive | trust_sync
    #[arg(long)]
    pub mode: Option<String>,
    /// injective | all_pairs
    #[arg(long)]
    pub matching: Option<String>,
    /// TOML file with any of the above keys
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! prefer_file {
    ($file:expr, $flags:expr, $($f:ident),*) => {
        Settings { $($f: $file.$f.or($flags.$f),)* config: None }
    };
}

impl Settings {
    /// Reads `--config` if given and lays it over the flags.
    pub fn merged(self) -> Result<Settings, CliError> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let file: Settings = toml::from_str(&text).map_err(|e| CliError::io(&path, e))?;
        Ok(prefer_file!(
            file, self, events, prices, registry, replay_dir, out, start, end, weth, stable_tokens, stable_volatility,
            exotic_factor, min_history_days, cvar_level, sample_interval, histogram_bins, movement_window, eligibility,
            display_cap, bucket_days, mode, matching
        ))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub events: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub replay_dir: PathBuf,
    pub out: PathBuf,
    pub start: Option<u64>,
    pub end: Option<u64>,
    pub weth: TokenId,
    pub classify: ClassifyConfig,
    pub cvar_level: f64,
    pub sample_interval: u64,
    pub histogram_bins: usize,
    pub movement_window: u64,
    pub eligibility: usize,
    pub display_cap: u64,
    pub bucket_days: u64,
    pub mode: ReplayMode,
    pub matching: MatchingMode,
}

/// Unix seconds, or a UTC date; `end_of_day` maps a date to its last second.
pub fn parse_time(s: &str, end_of_day: bool) -> Result<u64, CliError> {
    if let Ok(ts) = s.parse::<u64>() {
        return Ok(ts);
    }
    let date = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| CliError::Input(format!("bad time {s:?}: expected unix seconds or YYYY-MM-DD")))?;
    let start = date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp();
    let start = u64::try_from(start).map_err(|_| CliError::Input(format!("date {s} before 1970")))?;
    Ok(if end_of_day { start + SECONDS_PER_DAY - 1 } else { start })
}

/// UTC date of a day number.
pub fn day_label(day: u64) -> String {
    chrono::DateTime::from_timestamp((day * SECONDS_PER_DAY) as i64, 0)
        .map(|d| d.date_naive().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn resolve(s: Settings) -> Result<Self, CliError> {
        let s = s.merged()?;
        let defaults = ClassifyConfig::default();
        let classify = ClassifyConfig {
            stable_tokens: match s.stable_tokens {
                Some(list) => list.into_iter().map(TokenId::new).collect::<BTreeSet<_>>(),
                None => defaults.stable_tokens,
            },
            stable_volatility: s.stable_volatility.unwrap_or(defaults.stable_volatility),
            exotic_factor: s.exotic_factor.unwrap_or(defaults.exotic_factor),
            min_history_days: s.min_history_days.unwrap_or(defaults.min_history_days),
        };
        let mode = match s.mode.as_deref() {
            None | Some("derive") => ReplayMode::Derive,
            Some("trust_sync") => ReplayMode::TrustSync,
            Some(other) => return Err(CliError::Input(format!("unknown mode {other:?}"))),
        };
        let matching = match s.matching.as_deref() {
            None => MatchingMode::default(),
            Some(m) => m.parse().map_err(CliError::Input)?,
        };
        let out = s.out.unwrap_or_else(|| PathBuf::from("out"));
        let cfg = RunConfig {
            events: s.events,
            prices: s.prices,
            registry: s.registry,
            replay_dir: s.replay_dir.unwrap_or_else(|| out.clone()),
            out,
            start: s.start.as_deref().map(|t| parse_time(t, false)).transpose()?,
            end: s.end.as_deref().map(|t| parse_time(t, true)).transpose()?,
            weth: TokenId::from(s.weth.as_deref().unwrap_or("WETH")),
            classify,
            cvar_level: s.cvar_level.unwrap_or(0.05),
            sample_interval: s.sample_interval.unwrap_or(3600),
            histogram_bins: s.histogram_bins.unwrap_or(20),
            movement_window: s.movement_window.unwrap_or(DEFAULT_WINDOW),
            eligibility: s.eligibility.unwrap_or(DEFAULT_ELIGIBILITY),
            display_cap: s.display_cap.unwrap_or(DEFAULT_DISPLAY_CAP),
            bucket_days: s.bucket_days.unwrap_or(1),
            mode,
            matching,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let (Some(a), Some(b)) = (self.start, self.end) {
            if a >= b {
                return Err(CliError::Input(format!("window start {a} must precede end {b}")));
            }
        }
        let positive = [
            ("stable_volatility", self.classify.stable_volatility),
            ("exotic_factor", self.classify.exotic_factor),
            ("cvar_level", self.cvar_level),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Input(format!("{name} must be positive")));
            }
        }
        if self.cvar_level >= 1.0 {
            return Err(CliError::Input("cvar_level must be below 1".into()));
        }
        if self.movement_window == 0 || self.histogram_bins == 0 || self.bucket_days == 0 || self.sample_interval == 0 {
            return Err(CliError::Input("movement_window, histogram_bins, bucket_days and sample_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf, CliError> {
        field.as_ref().ok_or_else(|| CliError::Input(format!("--{name} is required")))
    }
}
