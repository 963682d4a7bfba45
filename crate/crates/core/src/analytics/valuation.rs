//! USD valuation of pools and positions.
//!
//! A token is priced in ETH from the spot ratio of its WETH pool, then in
//! USD through the ETH/USD feed. Both steps use the last observation at or
//! before the query point.

use std::collections::BTreeMap;

use super::returns::FeeIndex;
use super::AnalyticsError;
use crate::amm::{PoolId, TokenId};
use crate::ingest::replay::{PoolSnapshotSeries, Snapshot};
use crate::ingest::{EventKey, PriceFeed, TokenRegistry};

/// Decimals assumed for tokens missing from the registry.
pub const DEFAULT_DECIMALS: u8 = 18;

/// Query point: right after an event, or at a wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum At {
    Key(EventKey),
    Time(u64),
}

impl At {
    pub fn timestamp(self) -> u64 {
        match self {
            At::Key(k) => k.timestamp,
            At::Time(t) => t,
        }
    }
}

pub(crate) fn state_at(series: &PoolSnapshotSeries, at: At) -> Option<&Snapshot> {
    match at {
        At::Key(k) => series.at_key(k),
        At::Time(t) => series.at_time(t),
    }
}

#[derive(Debug, Clone)]
pub struct ValuationContext {
    feed: PriceFeed,
    registry: TokenRegistry,
    series: BTreeMap<PoolId, PoolSnapshotSeries>,
    weth: TokenId,
    eth_pair: BTreeMap<TokenId, PoolId>,
}

impl ValuationContext {
    /// For each token the WETH pool with the most snapshots is its pricing
    /// pool (ties go to the smaller pool id).
    pub fn new(
        feed: PriceFeed,
        registry: TokenRegistry,
        series: BTreeMap<PoolId, PoolSnapshotSeries>,
        weth: TokenId,
    ) -> Self {
        let mut eth_pair: BTreeMap<TokenId, (usize, PoolId)> = BTreeMap::new();
        for s in series.values() {
            let other = if s.token0 == weth {
                &s.token1
            } else if s.token1 == weth {
                &s.token0
            } else {
                continue;
            };
            let candidate = (s.len(), s.pool.clone());
            match eth_pair.get(other) {
                Some((n, _)) if *n >= candidate.0 => {}
                _ => {
                    eth_pair.insert(other.clone(), candidate);
                }
            }
        }
        let eth_pair = eth_pair.into_iter().map(|(t, (_, p))| (t, p)).collect();
        ValuationContext { feed, registry, series, weth, eth_pair }
    }

    pub fn weth(&self) -> &TokenId {
        &self.weth
    }

    pub fn feed(&self) -> &PriceFeed {
        &self.feed
    }

    pub fn series(&self, pool: &PoolId) -> Option<&PoolSnapshotSeries> {
        self.series.get(pool)
    }

    pub fn all_series(&self) -> &BTreeMap<PoolId, PoolSnapshotSeries> {
        &self.series
    }

    pub fn registry(&self) -> &TokenRegistry {
        &self.registry
    }

    pub fn decimals(&self, token: &TokenId) -> u8 {
        self.registry.decimals(token).unwrap_or(DEFAULT_DECIMALS)
    }

    pub fn pricing_pool(&self, token: &TokenId) -> Option<&PoolId> {
        self.eth_pair.get(token)
    }

    /// Whole-token amount for base units of `token`.
    pub fn units(&self, token: &TokenId, base_units: u128) -> f64 {
        base_units as f64 / 10f64.powi(self.decimals(token) as i32)
    }

    /// ETH per whole token.
    pub fn token_price_eth(&self, token: &TokenId, at: At) -> Result<f64, AnalyticsError> {
        if *token == self.weth {
            return Ok(1.0);
        }
        let pool = self.eth_pair.get(token).ok_or_else(|| AnalyticsError::NoEthPair(token.clone()))?;
        let series = &self.series[pool];
        let snap = state_at(series, at).ok_or_else(|| AnalyticsError::EmptyPool(pool.clone()))?;
        let token_side = series.side_of(token).expect("pricing pool trades the token");
        let token_units = self.units(token, snap.reserve(token_side));
        let weth_units = self.units(&self.weth, snap.reserve(token_side.other()));
        if token_units <= 0.0 || weth_units <= 0.0 {
            return Err(AnalyticsError::EmptyPool(pool.clone()));
        }
        Ok(weth_units / token_units)
    }

    pub fn eth_usd(&self, ts: u64) -> Result<f64, AnalyticsError> {
        self.feed.price_at(ts).ok_or(AnalyticsError::NoUsdPrice(ts))
    }

    /// USD per whole token.
    pub fn token_price_usd(&self, token: &TokenId, at: At) -> Result<f64, AnalyticsError> {
        Ok(self.token_price_eth(token, at)? * self.eth_usd(at.timestamp())?)
    }

    /// USD value of raw reserves of `pool`'s two tokens.
    pub fn reserves_usd(&self, pool: &PoolId, reserve0: u128, reserve1: u128, at: At) -> Result<f64, AnalyticsError> {
        let series = self.series.get(pool).ok_or_else(|| AnalyticsError::UnknownPool(pool.clone()))?;
        let p0 = self.token_price_usd(&series.token0, at)?;
        let p1 = self.token_price_usd(&series.token1, at)?;
        Ok(self.units(&series.token0, reserve0) * p0 + self.units(&series.token1, reserve1) * p1)
    }

    /// Total USD value locked in `pool`.
    pub fn pool_value_usd(&self, pool: &PoolId, at: At) -> Result<f64, AnalyticsError> {
        let series = self.series.get(pool).ok_or_else(|| AnalyticsError::UnknownPool(pool.clone()))?;
        let snap = state_at(series, at).ok_or_else(|| AnalyticsError::EmptyPool(pool.clone()))?;
        self.reserves_usd(pool, snap.reserve0, snap.reserve1, at)
    }

    /// Value of a `share` of `pool` at `at` against holding the tokens the
    /// position was opened with.
    pub fn position_value_usd(
        &self,
        pool: &PoolId,
        share: f64,
        at: At,
        inception: &Inception,
    ) -> Result<PositionValue, AnalyticsError> {
        if !(share > 0.0 && share <= 1.0) {
            return Err(AnalyticsError::InvalidShare(share));
        }
        let series = self.series.get(pool).ok_or_else(|| AnalyticsError::UnknownPool(pool.clone()))?;
        let snap = state_at(series, at).ok_or_else(|| AnalyticsError::EmptyPool(pool.clone()))?;
        if snap.total_liquidity == 0 {
            return Err(AnalyticsError::EmptyPool(pool.clone()));
        }
        let invest_usd = share * self.reserves_usd(pool, snap.reserve0, snap.reserve1, at)?;
        let hold_usd = self.reserves_usd(pool, inception.amount0, inception.amount1, at)?;
        Ok(PositionValue { invest_usd, hold_usd })
    }

    /// Builds the valuation series of a fixed number of liquidity tokens
    /// (the whole supply at the opening point) from `start` to `end`.
    ///
    /// The position opens at the pool state in force at `start`, or at the
    /// first funded state after it. Samples are taken after every event and
    /// at every multiple of `interval_secs`; samples whose prices cannot be
    /// formed are dropped.
    pub fn valuation_series(
        &self,
        pool: &PoolId,
        start: u64,
        end: u64,
        interval_secs: u64,
    ) -> Result<ValuationSeries, AnalyticsError> {
        let series = self.series.get(pool).ok_or_else(|| AnalyticsError::UnknownPool(pool.clone()))?;
        let fee_index = FeeIndex::for_series(series);
        let open_idx = match series.index_at_time(start) {
            Some(i) if series.snapshots[i].total_liquidity > 0 => i,
            other => {
                let from = other.map_or(0, |i| i + 1);
                (from..series.len())
                    .find(|&i| series.snapshots[i].total_liquidity > 0 && series.snapshots[i].key.timestamp <= end)
                    .ok_or_else(|| AnalyticsError::InsufficientData(format!("pool {pool} holds nothing in window")))?
            }
        };
        let open = series.snapshots[open_idx];
        let open_ts = open.key.timestamp.max(start);
        let inception = Inception { key: open.key, amount0: open.reserve0, amount1: open.reserve1 };
        let reference_liquidity = open.total_liquidity as f64;

        // (ts, snapshot index, at); boundaries sort after events at the same ts
        let mut instants: Vec<(u64, u8, usize, At)> = Vec::new();
        for (i, s) in series.snapshots.iter().enumerate().skip(open_idx) {
            if s.key.timestamp > end {
                break;
            }
            if i == open_idx || s.key.timestamp >= open_ts {
                instants.push((s.key.timestamp.max(open_ts), 0, i, At::Key(s.key)));
            }
        }
        if interval_secs > 0 {
            let mut t = open_ts.div_ceil(interval_secs) * interval_secs;
            while t <= end {
                if let Some(i) = series.index_at_time(t) {
                    if i >= open_idx {
                        instants.push((t, 1, i, At::Time(t)));
                    }
                }
                t += interval_secs;
            }
        }
        instants.sort_by_key(|&(ts, order, i, _)| (ts, order, i));

        let mut samples = Vec::with_capacity(instants.len());
        let mut dropped = 0;
        for (ts, _, idx, at) in instants {
            let snap = &series.snapshots[idx];
            if snap.total_liquidity == 0 || snap.reserve0 == 0 || snap.reserve1 == 0 {
                dropped += 1;
                continue;
            }
            let invest = self
                .reserves_usd(pool, snap.reserve0, snap.reserve1, at)
                .map(|v| v * reference_liquidity / snap.total_liquidity as f64);
            let hold = self.reserves_usd(pool, inception.amount0, inception.amount1, at);
            match (invest, hold) {
                (Ok(invest_usd), Ok(hold_usd)) if hold_usd > 0.0 && invest_usd > 0.0 => {
                    let price = self.units(&series.token1, snap.reserve1) / self.units(&series.token0, snap.reserve0);
                    samples.push(ValuationSample {
                        ts,
                        key: snap.key,
                        invest_usd,
                        hold_usd,
                        ratio: invest_usd / hold_usd,
                        fee_index: fee_index.values[idx],
                        pool_price: price,
                    });
                }
                _ => dropped += 1,
            }
        }
        Ok(ValuationSeries { pool: pool.clone(), inception, samples, dropped })
    }
}

/// Token amounts (base units) a position held when it was opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inception {
    pub key: EventKey,
    pub amount0: u128,
    pub amount1: u128,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionValue {
    pub invest_usd: f64,
    pub hold_usd: f64,
}

impl PositionValue {
    pub fn ratio(&self) -> f64 {
        self.invest_usd / self.hold_usd
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuationSample {
    pub ts: u64,
    /// Key of the pool state the sample reflects.
    pub key: EventKey,
    pub invest_usd: f64,
    pub hold_usd: f64,
    pub ratio: f64,
    /// Compounded fee growth factor (see [`FeeIndex`]).
    pub fee_index: f64,
    /// Pool price `reserve1 / reserve0` in whole tokens.
    pub pool_price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuationSeries {
    pub pool: PoolId,
    pub inception: Inception,
    pub samples: Vec<ValuationSample>,
    /// Samples skipped for missing or degenerate prices.
    pub dropped: usize,
}

impl ValuationSeries {
    /// Last sample taken at exactly `ts`.
    pub fn sample_at(&self, ts: u64) -> Result<&ValuationSample, AnalyticsError> {
        let idx = self.samples.partition_point(|s| s.ts <= ts);
        match idx.checked_sub(1).map(|i| &self.samples[i]) {
            Some(s) if s.ts == ts => Ok(s),
            _ => Err(AnalyticsError::MissingSample(ts)),
        }
    }

    /// Return against holding between the samples at `t1` and `t2`.
    pub fn return_between(&self, t1: u64, t2: u64) -> Result<f64, AnalyticsError> {
        if t1 >= t2 {
            return Err(AnalyticsError::InsufficientData(format!("t1 {t1} must precede t2 {t2}")));
        }
        Ok(super::return_pct(self.sample_at(t1)?.ratio, self.sample_at(t2)?.ratio))
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

