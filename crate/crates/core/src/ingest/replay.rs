//! Replays an ordered event log through the pool state machine and the
//! position ledger.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use super::{Event, EventBody, EventKey, EventKind, TokenRegistry};
use crate::amm::{AmmError, FeeParams, Pool, PoolId, Side, TokenId};
use crate::ledger::{Ledger, LedgerError, LiquidityChange, LiquidityEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayMode {
    /// Reserves evolve only through pool transitions; Sync is checked, not applied.
    #[default]
    Derive,
    /// Sync events overwrite reserves.
    TrustSync,
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub mode: ReplayMode,
    /// Relative reserve difference above which a Sync is reported.
    pub sync_tolerance: f64,
    pub fees: FeeParams,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions { mode: ReplayMode::Derive, sync_tolerance: 1e-9, fees: FeeParams::default() }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{kind} at {key} refers to unknown pool {pool}")]
    OrphanEvent { key: EventKey, pool: PoolId, kind: EventKind },
    #[error("{pool} at {key}: {detail}")]
    NegativeReserve { key: EventKey, pool: PoolId, detail: String },
    #[error("{pool} at {key}: {source}")]
    Transition { key: EventKey, pool: PoolId, source: AmmError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{pool} at {key}: ledger supply {ledger} differs from pool supply {pool_supply}")]
    SupplyMismatch { key: EventKey, pool: PoolId, ledger: u128, pool_supply: u128 },
}

impl ReplayError {
    /// True for errors that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, ReplayError::SupplyMismatch { .. })
    }
}

/// Pool state right after one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub key: EventKey,
    pub kind: EventKind,
    pub reserve0: u128,
    pub reserve1: u128,
    pub total_liquidity: u128,
}

impl Snapshot {
    pub fn k_f64(&self) -> f64 {
        self.reserve0 as f64 * self.reserve1 as f64
    }

    pub fn reserve(&self, side: Side) -> u128 {
        match side {
            Side::Token0 => self.reserve0,
            Side::Token1 => self.reserve1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSnapshotSeries {
    pub pool: PoolId,
    pub token0: TokenId,
    pub token1: TokenId,
    pub snapshots: Vec<Snapshot>,
}

impl PoolSnapshotSeries {
    pub fn new(pool: PoolId, token0: TokenId, token1: TokenId) -> Self {
        PoolSnapshotSeries { pool, token0, token1, snapshots: Vec::new() }
    }

    /// Last snapshot at or before `key`.
    pub fn at_key(&self, key: EventKey) -> Option<&Snapshot> {
        let idx = self.snapshots.partition_point(|s| s.key <= key);
        idx.checked_sub(1).map(|i| &self.snapshots[i])
    }

    /// Index of the last snapshot with timestamp at or before `ts`.
    pub fn index_at_time(&self, ts: u64) -> Option<usize> {
        let idx = self.snapshots.partition_point(|s| s.key.timestamp <= ts);
        idx.checked_sub(1)
    }

    pub fn at_time(&self, ts: u64) -> Option<&Snapshot> {
        self.index_at_time(ts).map(|i| &self.snapshots[i])
    }

    pub fn first(&self) -> Option<&Snapshot> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn side_of(&self, token: &TokenId) -> Option<Side> {
        if token == &self.token0 {
            Some(Side::Token0)
        } else if token == &self.token1 {
            Some(Side::Token1)
        } else {
            None
        }
    }
}

/// A logged value that disagrees with the replayed one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub key: EventKey,
    pub pool: PoolId,
    pub field: &'static str,
    pub logged: u128,
    pub derived: u128,
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub pools: BTreeMap<PoolId, PoolSnapshotSeries>,
    pub ledger: Ledger,
    pub divergences: Vec<Divergence>,
    /// Transfers to or from the zero address, skipped because Mint and Burn
    /// already account for supply.
    pub skipped_supply_transfers: usize,
}

struct Replayer<'a> {
    opts: &'a ReplayOptions,
    registry: Option<&'a TokenRegistry>,
    pools: BTreeMap<PoolId, Pool>,
    out: ReplayOutput,
}

fn rel_diff(a: u128, b: u128) -> f64 {
    let (a, b) = (a as f64, b as f64);
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

impl<'a> Replayer<'a> {
    fn create(&mut self, e: &Event, tokens: (Option<&TokenId>, Option<&TokenId>)) -> Result<(), ReplayError> {
        let pool_id = &e.pool;
        if self.pools.contains_key(pool_id) {
            return Err(ReplayError::Transition {
                key: e.key,
                pool: pool_id.clone(),
                source: AmmError::PoolExists(pool_id.clone()),
            });
        }
        let (t0, t1) = match self.registry.and_then(|r| r.pool(pool_id)) {
            Some(info) => (info.token0.clone(), info.token1.clone()),
            None => match tokens {
                (Some(a), Some(b)) => (a.clone(), b.clone()),
                _ => (TokenId::new(format!("{pool_id}:0")), TokenId::new(format!("{pool_id}:1"))),
            },
        };
        let pool = Pool::new(pool_id.clone(), t0, t1, self.opts.fees)
            .map_err(|source| ReplayError::Transition { key: e.key, pool: pool_id.clone(), source })?;
        self.out
            .pools
            .insert(pool_id.clone(), PoolSnapshotSeries::new(pool_id.clone(), pool.token0.clone(), pool.token1.clone()));
        self.out.ledger.ensure_pool(pool_id);
        self.pools.insert(pool_id.clone(), pool);
        Ok(())
    }

    fn pool_mut(&mut self, e: &Event) -> Result<&mut Pool, ReplayError> {
        self.pools.get_mut(&e.pool).ok_or_else(|| ReplayError::OrphanEvent {
            key: e.key,
            pool: e.pool.clone(),
            kind: e.kind(),
        })
    }

    fn diverge(&mut self, e: &Event, field: &'static str, logged: u128, derived: u128) {
        if logged != derived {
            self.out.divergences.push(Divergence { key: e.key, pool: e.pool.clone(), field, logged, derived });
        }
    }

    fn resolve_side(pool: &Pool, in_token: &str) -> Option<Side> {
        match in_token {
            t if t == pool.token0.as_str() => Some(Side::Token0),
            t if t == pool.token1.as_str() => Some(Side::Token1),
            "0" => Some(Side::Token0),
            "1" => Some(Side::Token1),
            _ => None,
        }
    }

    fn apply(&mut self, e: &Event) -> Result<(), ReplayError> {
        let transition = |source: AmmError| ReplayError::Transition { key: e.key, pool: e.pool.clone(), source };
        match &e.body {
            EventBody::PoolCreated { token0, token1 } => {
                self.create(e, (token0.as_ref(), token1.as_ref()))?;
            }
            EventBody::Mint { amount0, amount1, liquidity } => {
                if !self.pools.contains_key(&e.pool) {
                    self.create(e, (None, None))?;
                }
                let minted = self.pool_mut(e)?.add_liquidity(*amount0, *amount1).map_err(transition)?;
                if let Some(logged) = liquidity {
                    self.diverge(e, "liquidity", *logged, minted.liquidity);
                }
                self.out.ledger.apply(&LiquidityEvent {
                    key: e.key,
                    pool: e.pool.clone(),
                    change: LiquidityChange::Mint { to: e.actor.clone() },
                    amount: minted.liquidity,
                })?;
            }
            EventBody::Burn { liquidity, amount0, amount1 } => {
                let owner_balance = self.out.ledger.balance(&e.pool, &e.actor);
                let pool = self.pool_mut(e)?;
                if *liquidity > pool.total_liquidity {
                    return Err(ReplayError::NegativeReserve {
                        key: e.key,
                        pool: e.pool.clone(),
                        detail: format!("burn of {liquidity} exceeds supply {}", pool.total_liquidity),
                    });
                }
                for (logged, reserve, name) in
                    [(amount0, pool.reserve0, "amount0"), (amount1, pool.reserve1, "amount1")]
                {
                    if let Some(v) = logged {
                        if v.0 > reserve.0 {
                            return Err(ReplayError::NegativeReserve {
                                key: e.key,
                                pool: e.pool.clone(),
                                detail: format!("burn {name} {v} exceeds reserve {reserve}"),
                            });
                        }
                    }
                }
                if *liquidity > owner_balance {
                    return Err(LedgerError::NegativeBalance {
                        address: e.actor.clone(),
                        pool: e.pool.clone(),
                        key: e.key,
                        balance: owner_balance,
                        requested: *liquidity,
                    }
                    .into());
                }
                let burned = pool.burn(*liquidity, owner_balance).map_err(transition)?;
                if let Some(v) = amount0 {
                    self.diverge(e, "amount0", v.0, burned.amount0.0);
                }
                if let Some(v) = amount1 {
                    self.diverge(e, "amount1", v.0, burned.amount1.0);
                }
                self.out.ledger.apply(&LiquidityEvent {
                    key: e.key,
                    pool: e.pool.clone(),
                    change: LiquidityChange::Burn { from: e.actor.clone() },
                    amount: *liquidity,
                })?;
            }
            EventBody::Swap { in_token, amount_in, amount_out } => {
                let pool = self.pool_mut(e)?;
                let side = Self::resolve_side(pool, in_token)
                    .ok_or_else(|| transition(AmmError::UnknownToken(TokenId::new(in_token.as_str()))))?;
                let swapped = pool.swap_side(side, *amount_in).map_err(transition)?;
                if let Some(v) = amount_out {
                    self.diverge(e, "amount_out", v.0, swapped.amount_out.0);
                }
            }
            EventBody::Transfer { from, to, liquidity } => {
                self.pool_mut(e)?;
                if from.is_zero() || to.is_zero() {
                    self.out.skipped_supply_transfers += 1;
                } else {
                    self.out.ledger.apply(&LiquidityEvent {
                        key: e.key,
                        pool: e.pool.clone(),
                        change: LiquidityChange::Transfer { from: from.clone(), to: to.clone() },
                        amount: *liquidity,
                    })?;
                }
                return Ok(());
            }
            EventBody::Sync { reserve0, reserve1 } => {
                let tolerance = self.opts.sync_tolerance;
                let trust = self.opts.mode == ReplayMode::TrustSync;
                let pool = self.pool_mut(e)?;
                let (d0, d1) = (pool.reserve0.0, pool.reserve1.0);
                if trust {
                    pool.sync(*reserve0, *reserve1);
                }
                if rel_diff(reserve0.0, d0) > tolerance {
                    self.out.divergences.push(Divergence {
                        key: e.key,
                        pool: e.pool.clone(),
                        field: "reserve0",
                        logged: reserve0.0,
                        derived: d0,
                    });
                }
                if rel_diff(reserve1.0, d1) > tolerance {
                    self.out.divergences.push(Divergence {
                        key: e.key,
                        pool: e.pool.clone(),
                        field: "reserve1",
                        logged: reserve1.0,
                        derived: d1,
                    });
                }
            }
        }
        self.record(e)
    }

    fn record(&mut self, e: &Event) -> Result<(), ReplayError> {
        let pool = &self.pools[&e.pool];
        let ledger_supply = self.out.ledger.supply(&e.pool);
        if ledger_supply != pool.total_liquidity {
            return Err(ReplayError::SupplyMismatch {
                key: e.key,
                pool: e.pool.clone(),
                ledger: ledger_supply,
                pool_supply: pool.total_liquidity,
            });
        }
        let snap = Snapshot {
            key: e.key,
            kind: e.kind(),
            reserve0: pool.reserve0.0,
            reserve1: pool.reserve1.0,
            total_liquidity: pool.total_liquidity,
        };
        self.out.pools.get_mut(&e.pool).expect("series exists").snapshots.push(snap);
        Ok(())
    }
}

/// Replays events in key order. The input need not be sorted.
///
/// Pools get tokens from `registry` when listed there, otherwise from the
/// PoolCreated record, otherwise placeholder ids `<pool>:0` / `<pool>:1`.
pub fn replay(
    events: &[Event],
    opts: &ReplayOptions,
    registry: Option<&TokenRegistry>,
) -> Result<ReplayOutput, ReplayError> {
    let mut ordered: Vec<&Event> = events.iter().collect();
    ordered.sort_by_key(|e| e.key);
    let mut r = Replayer {
        opts,
        registry,
        pools: BTreeMap::new(),
        out: ReplayOutput {
            pools: BTreeMap::new(),
            ledger: Ledger::new(),
            divergences: Vec::new(),
            skipped_supply_transfers: 0,
        },
    };
    for e in ordered {
        r.apply(e)?;
    }
    Ok(r.out)
}

const SNAPSHOT_HEADER: [&str; 11] = [
    "pool", "token0", "token1", "block", "tx_index", "log_index", "ts", "kind", "reserve0", "reserve1",
    "total_liquidity",
];

/// Writes every snapshot of every pool, pools in id order.
pub fn write_snapshots_csv<W: Write>(
    writer: W,
    pools: &BTreeMap<PoolId, PoolSnapshotSeries>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SNAPSHOT_HEADER)?;
    for series in pools.values() {
        for s in &series.snapshots {
            w.write_record([
                series.pool.as_str(),
                series.token0.as_str(),
                series.token1.as_str(),
                &s.key.block.to_string(),
                &s.key.tx_index.to_string(),
                &s.key.log_index.to_string(),
                &s.key.timestamp.to_string(),
                s.kind.as_str(),
                &s.reserve0.to_string(),
                &s.reserve1.to_string(),
                &s.total_liquidity.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots_csv<R: Read>(reader: R) -> Result<BTreeMap<PoolId, PoolSnapshotSeries>, String> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(SNAPSHOT_HEADER) {
        return Err(format!("unexpected snapshot header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut pools: BTreeMap<PoolId, PoolSnapshotSeries> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let num = |idx: usize| -> Result<u128, String> {
            rec[idx].parse::<u128>().map_err(|e| format!("line {line}: column {}: {e}", SNAPSHOT_HEADER[idx]))
        };
        let pool = PoolId::new(&rec[0]);
        let kind = EventKind::parse(&rec[7]).ok_or_else(|| format!("line {line}: bad kind {}", &rec[7]))?;
        let key = EventKey::new(
            u64::try_from(num(3)?).map_err(|e| e.to_string())?,
            u32::try_from(num(4)?).map_err(|e| e.to_string())?,
            u32::try_from(num(5)?).map_err(|e| e.to_string())?,
            u64::try_from(num(6)?).map_err(|e| e.to_string())?,
        );
        let series = pools
            .entry(pool.clone())
            .or_insert_with(|| PoolSnapshotSeries::new(pool, TokenId::new(&rec[1]), TokenId::new(&rec[2])));
        if series.last().is_some_and(|s| s.key >= key) {
            return Err(format!("line {line}: snapshot keys must increase within a pool"));
        }
        series.snapshots.push(Snapshot {
            key,
            kind,
            reserve0: num(8)?,
            reserve1: num(9)?,
            total_liquidity: num(10)?,
        });
    }
    Ok(pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Address;
    use crate::amm::TokenAmount;

    fn ev(block: u64, pool: &str, actor: &str, body: EventBody) -> Event {
        Event { key: EventKey::new(block, 0, 0, 1_600_000_000 + block * 13), pool: pool.into(), actor: actor.into(), body }
    }

    fn created(block: u64, pool: &str) -> Event {
        ev(block, pool, "0xf", EventBody::PoolCreated { token0: Some("A".into()), token1: Some("B".into()) })
    }

    fn mint(block: u64, pool: &str, actor: &str, a: u128, b: u128) -> Event {
        ev(block, pool, actor, EventBody::Mint { amount0: TokenAmount(a), amount1: TokenAmount(b), liquidity: None })
    }

    fn burn(block: u64, pool: &str, actor: &str, liquidity: u128) -> Event {
        ev(block, pool, actor, EventBody::Burn { liquidity, amount0: None, amount1: None })
    }

    fn swap(block: u64, pool: &str, token: &str, amount: u128) -> Event {
        ev(
            block,
            pool,
            "0xt",
            EventBody::Swap { in_token: token.into(), amount_in: TokenAmount(amount), amount_out: None },
        )
    }

    #[test]
    fn create_then_mint() {
        let out = replay(&[created(1, "P"), mint(2, "P", "0xa", 4, 9)], &ReplayOptions::default(), None).unwrap();
        let last = *out.pools[&PoolId::from("P")].last().unwrap();
        assert_eq!((last.reserve0, last.reserve1, last.total_liquidity), (4, 9, 6));
        assert_eq!(out.ledger.balance(&"P".into(), &"0xa".into()), 6);
    }

    #[test]
    fn swap_follows_pool_math() {
        let events = [created(1, "P"), mint(2, "P", "0xa", 1_000_000, 1_000_000), swap(3, "P", "A", 100_000)];
        let out = replay(&events, &ReplayOptions::default(), None).unwrap();
        let last = *out.pools[&PoolId::from("P")].last().unwrap();
        assert_eq!((last.reserve0, last.reserve1), (1_100_000, 1_000_000 - 90_661));
    }

    #[test]
    fn mint_into_unknown_pool_creates_it() {
        let out = replay(&[mint(1, "Q", "0xa", 4, 9)], &ReplayOptions::default(), None).unwrap();
        assert_eq!(out.pools[&PoolId::from("Q")].token0.as_str(), "Q:0");
    }

    #[test]
    fn orphan_events_rejected() {
        let err = replay(&[swap(1, "P", "0", 5)], &ReplayOptions::default(), None).unwrap_err();
        assert!(matches!(err, ReplayError::OrphanEvent { kind: EventKind::Swap, .. }));
    }

    #[test]
    fn oversized_burn_is_negative_reserve() {
        let events = [created(1, "P"), mint(2, "P", "0xa", 4, 9), burn(3, "P", "0xa", 7)];
        let err = replay(&events, &ReplayOptions::default(), None).unwrap_err();
        assert!(matches!(err, ReplayError::NegativeReserve { .. }));

        let mut big = burn(3, "P", "0xa", 1);
        big.body = EventBody::Burn { liquidity: 1, amount0: Some(TokenAmount(5)), amount1: None };
        let err = replay(&[created(1, "P"), mint(2, "P", "0xa", 4, 9), big], &ReplayOptions::default(), None)
            .unwrap_err();
        assert!(matches!(err, ReplayError::NegativeReserve { .. }));
    }

    #[test]
    fn burn_by_non_holder_fails() {
        let events = [created(1, "P"), mint(2, "P", "0xa", 4, 9), burn(3, "P", "0xb", 1)];
        let err = replay(&events, &ReplayOptions::default(), None).unwrap_err();
        assert!(matches!(err, ReplayError::Ledger(LedgerError::NegativeBalance { .. })));
    }

    #[test]
    fn transfers_move_positions_and_skip_supply_legs() {
        let events = [
            created(1, "P"),
            mint(2, "P", "0xa", 100, 400),
            ev(3, "P", "0xa", EventBody::Transfer { from: Address::zero(), to: "0xa".into(), liquidity: 200 }),
            ev(4, "P", "0xa", EventBody::Transfer { from: "0xa".into(), to: "0xb".into(), liquidity: 50 }),
            burn(5, "P", "0xb", 50),
        ];
        let out = replay(&events, &ReplayOptions::default(), None).unwrap();
        assert_eq!(out.skipped_supply_transfers, 1);
        assert_eq!(out.ledger.balance(&"P".into(), &"0xa".into()), 150);
        assert_eq!(out.ledger.balance(&"P".into(), &"0xb".into()), 0);
        let last = *out.pools[&PoolId::from("P")].last().unwrap();
        assert_eq!((last.reserve0, last.reserve1, last.total_liquidity), (75, 300, 150));
    }

    #[test]
    fn sync_modes() {
        let sync = ev(3, "P", "", EventBody::Sync { reserve0: TokenAmount(5), reserve1: TokenAmount(9) });
        let events = [created(1, "P"), mint(2, "P", "0xa", 4, 9), sync];
        let derived = replay(&events, &ReplayOptions::default(), None).unwrap();
        assert_eq!(derived.pools[&PoolId::from("P")].last().unwrap().reserve0, 4);
        assert_eq!(derived.divergences.len(), 1);
        assert_eq!(derived.divergences[0].field, "reserve0");

        let opts = ReplayOptions { mode: ReplayMode::TrustSync, ..Default::default() };
        let trusted = replay(&events, &opts, None).unwrap();
        assert_eq!(trusted.pools[&PoolId::from("P")].last().unwrap().reserve0, 5);
        assert_eq!(trusted.divergences.len(), 1);
    }

    #[test]
    fn logged_amounts_are_checked() {
        let mut m = mint(2, "P", "0xa", 4, 9);
        m.body = EventBody::Mint { amount0: TokenAmount(4), amount1: TokenAmount(9), liquidity: Some(7) };
        let out = replay(&[created(1, "P"), m], &ReplayOptions::default(), None).unwrap();
        assert_eq!(
            out.divergences,
            vec![Divergence { key: EventKey::new(2, 0, 0, 0), pool: "P".into(), field: "liquidity", logged: 7, derived: 6 }]
        );
    }

    #[test]
    fn snapshots_csv_round_trip() {
        let events = [created(1, "P"), mint(2, "P", "0xa", 1_000_000, 1_000_000), swap(3, "P", "1", 100_000)];
        let out = replay(&events, &ReplayOptions::default(), None).unwrap();
        let mut buf = Vec::new();
        write_snapshots_csv(&mut buf, &out.pools).unwrap();
        assert_eq!(read_snapshots_csv(buf.as_slice()).unwrap(), out.pools);
    }
}
