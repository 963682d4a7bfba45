//! Per-(address, pool) liquidity-token balances.
//!
//! The ledger is a fold over Mint, Burn and Transfer events. Each position
//! keeps its full history so balances can be queried as of any event key.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::PoolId;
use crate::ingest::{Address, Event, EventBody, EventKey, EventKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("{address} in {pool} at {key}: debit {requested} exceeds balance {balance}")]
    NegativeBalance { address: Address, pool: PoolId, key: EventKey, balance: u128, requested: u128 },
    #[error("unknown pool {0}")]
    UnknownPool(PoolId),
    #[error("pool {0} has no liquidity at the requested key")]
    EmptyPool(PoolId),
    #[error("{0} events do not move liquidity tokens")]
    NotLiquidityEvent(EventKind),
    #[error("mint at {0} carries no liquidity amount")]
    MissingLiquidity(EventKey),
    #[error("zero address cannot hold a position (at {0})")]
    ZeroAddress(EventKey),
    #[error("balance overflow")]
    Overflow,
}

/// How liquidity tokens moved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LiquidityChange {
    Mint { to: Address },
    Burn { from: Address },
    Transfer { from: Address, to: Address },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiquidityEvent {
    pub key: EventKey,
    pub pool: PoolId,
    pub change: LiquidityChange,
    pub amount: u128,
}

impl LiquidityEvent {
    /// Liquidity movement described by a raw event. Mints need the
    /// `liquidity` field; replay fills it from the pool transition instead.
    pub fn from_event(event: &Event) -> Result<Self, LedgerError> {
        let (change, amount) = match &event.body {
            EventBody::Mint { liquidity, .. } => (
                LiquidityChange::Mint { to: event.actor.clone() },
                liquidity.ok_or(LedgerError::MissingLiquidity(event.key))?,
            ),
            EventBody::Burn { liquidity, .. } => {
                (LiquidityChange::Burn { from: event.actor.clone() }, *liquidity)
            }
            EventBody::Transfer { from, to, liquidity } => {
                (LiquidityChange::Transfer { from: from.clone(), to: to.clone() }, *liquidity)
            }
            other => return Err(LedgerError::NotLiquidityEvent(other.kind())),
        };
        Ok(LiquidityEvent { key: event.key, pool: event.pool.clone(), change, amount })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryEntry {
    pub key: EventKey,
    pub delta: i128,
    pub balance_after: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Position {
    pub address: Address,
    pub pool: PoolId,
    pub balance: u128,
    pub history: Vec<HistoryEntry>,
}

impl Position {
    fn new(address: Address, pool: PoolId) -> Self {
        Position { address, pool, balance: 0, history: Vec::new() }
    }

    pub fn balance_at(&self, key: EventKey) -> u128 {
        let idx = self.history.partition_point(|h| h.key <= key);
        idx.checked_sub(1).map_or(0, |i| self.history[i].balance_after)
    }

    fn record(&mut self, key: EventKey, delta: i128, balance_after: u128) {
        self.balance = balance_after;
        self.history.push(HistoryEntry { key, delta, balance_after });
    }
}

/// Pools each address has ever touched, with the first and last key seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderProfile {
    pub address: Address,
    pub pools_participated: BTreeSet<PoolId>,
    pub first_seen: EventKey,
    pub last_seen: EventKey,
}

/// Positive balances per pool and address, as of one key.
pub type BalanceSnapshot = BTreeMap<PoolId, BTreeMap<Address, u128>>;

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    positions: BTreeMap<PoolId, BTreeMap<Address, Position>>,
    supply: BTreeMap<PoolId, u128>,
}

fn signed(v: u128) -> Result<i128, LedgerError> {
    i128::try_from(v).map_err(|_| LedgerError::Overflow)
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a pool with no positions yet.
    pub fn ensure_pool(&mut self, pool: &PoolId) {
        self.positions.entry(pool.clone()).or_default();
        self.supply.entry(pool.clone()).or_insert(0);
    }

    pub fn balance(&self, pool: &PoolId, address: &Address) -> u128 {
        self.positions
            .get(pool)
            .and_then(|m| m.get(address))
            .map_or(0, |p| p.balance)
    }

    /// Sum of all balances in the pool.
    pub fn supply(&self, pool: &PoolId) -> u128 {
        self.supply.get(pool).copied().unwrap_or(0)
    }

    pub fn position(&self, pool: &PoolId, address: &Address) -> Option<&Position> {
        self.positions.get(pool).and_then(|m| m.get(address))
    }

    pub fn positions(&self) -> impl Iterator<Item = &Position> {
        self.positions.values().flat_map(|m| m.values())
    }

    pub fn pools(&self) -> impl Iterator<Item = &PoolId> {
        self.positions.keys()
    }

    /// Applies a raw Mint, Burn or Transfer event.
    pub fn apply_event(&mut self, event: &Event) -> Result<(), LedgerError> {
        self.apply(&LiquidityEvent::from_event(event)?)
    }

    /// Applies one liquidity movement. On error the ledger is unchanged.
    ///
    /// Transfer legs touching the zero address are supply changes: a
    /// transfer from zero only credits the receiver, one to zero only debits
    /// the sender.
    pub fn apply(&mut self, ev: &LiquidityEvent) -> Result<(), LedgerError> {
        let (debit, credit) = match &ev.change {
            LiquidityChange::Mint { to } => {
                if to.is_zero() {
                    return Err(LedgerError::ZeroAddress(ev.key));
                }
                (None, Some(to))
            }
            LiquidityChange::Burn { from } => {
                if from.is_zero() {
                    return Err(LedgerError::ZeroAddress(ev.key));
                }
                (Some(from), None)
            }
            LiquidityChange::Transfer { from, to } => {
                (Some(from).filter(|a| !a.is_zero()), Some(to).filter(|a| !a.is_zero()))
            }
        };
        let amount = signed(ev.amount)?;

        if let Some(from) = debit {
            let balance = self.balance(&ev.pool, from);
            if balance < ev.amount {
                return Err(LedgerError::NegativeBalance {
                    address: from.clone(),
                    pool: ev.pool.clone(),
                    key: ev.key,
                    balance,
                    requested: ev.amount,
                });
            }
        }
        let credit_after = match credit {
            Some(to) => Some(self.balance(&ev.pool, to).checked_add(ev.amount).ok_or(LedgerError::Overflow)?),
            None => None,
        };
        let supply = self.supply(&ev.pool);
        let supply_after = match (debit.is_some(), credit.is_some()) {
            (true, false) => supply - ev.amount,
            (false, true) => supply.checked_add(ev.amount).ok_or(LedgerError::Overflow)?,
            _ => supply,
        };

        self.ensure_pool(&ev.pool);
        let positions = self.positions.get_mut(&ev.pool).expect("pool registered");
        if let Some(from) = debit {
            let pos = positions.get_mut(from).expect("debited position exists");
            let after = pos.balance - ev.amount;
            pos.record(ev.key, -amount, after);
        }
        if let (Some(to), Some(after)) = (credit, credit_after) {
            positions
                .entry(to.clone())
                .or_insert_with(|| Position::new(to.clone(), ev.pool.clone()))
                .record(ev.key, amount, after);
        }
        self.supply.insert(ev.pool.clone(), supply_after);
        Ok(())
    }

    /// Positive balances in `pool` as of the last event at or before `key`.
    pub fn balances_at(&self, pool: &PoolId, key: EventKey) -> Result<BTreeMap<Address, u128>, LedgerError> {
        let positions = self.positions.get(pool).ok_or_else(|| LedgerError::UnknownPool(pool.clone()))?;
        Ok(positions
            .values()
            .filter_map(|p| {
                let b = p.balance_at(key);
                (b > 0).then(|| (p.address.clone(), b))
            })
            .collect())
    }

    /// Positive balances in every pool as of `key`.
    pub fn snapshot_at(&self, key: EventKey) -> BalanceSnapshot {
        self.positions
            .keys()
            .map(|pool| (pool.clone(), self.balances_at(pool, key).expect("known pool")))
            .collect()
    }

    /// Current positive balances in every pool.
    pub fn snapshot(&self) -> BalanceSnapshot {
        self.positions
            .iter()
            .map(|(pool, m)| {
                let balances = m
                    .values()
                    .filter(|p| p.balance > 0)
                    .map(|p| (p.address.clone(), p.balance))
                    .collect();
                (pool.clone(), balances)
            })
            .collect()
    }

    pub fn pools_per_provider_distribution(&self, key: EventKey) -> BTreeMap<usize, usize> {
        pools_per_provider(&self.snapshot_at(key))
    }

    pub fn single_pool_liquidity_share(&self, pool: &PoolId, key: EventKey) -> Result<f64, LedgerError> {
        if !self.positions.contains_key(pool) {
            return Err(LedgerError::UnknownPool(pool.clone()));
        }
        single_pool_liquidity_share(&self.snapshot_at(key), pool)
    }

    /// Every address that ever held a position.
    pub fn provider_profiles(&self) -> Vec<ProviderProfile> {
        let mut by_address: BTreeMap<&Address, ProviderProfile> = BTreeMap::new();
        for pos in self.positions() {
            let (Some(first), Some(last)) = (pos.history.first(), pos.history.last()) else { continue };
            let entry = by_address.entry(&pos.address).or_insert_with(|| ProviderProfile {
                address: pos.address.clone(),
                pools_participated: BTreeSet::new(),
                first_seen: first.key,
                last_seen: last.key,
            });
            entry.pools_participated.insert(pos.pool.clone());
            entry.first_seen = entry.first_seen.min(first.key);
            entry.last_seen = entry.last_seen.max(last.key);
        }
        by_address.into_values().collect()
    }
}

/// Histogram: number of pools an address holds a positive balance in →
/// number of such addresses.
pub fn pools_per_provider(snapshot: &BalanceSnapshot) -> BTreeMap<usize, usize> {
    let mut pools_of: BTreeMap<&Address, usize> = BTreeMap::new();
    for balances in snapshot.values() {
        for (addr, &b) in balances {
            if b > 0 {
                *pools_of.entry(addr).or_default() += 1;
            }
        }
    }
    let mut hist = BTreeMap::new();
    for n in pools_of.into_values() {
        *hist.entry(n).or_default() += 1;
    }
    hist
}

/// Fraction of `pool`'s supply held by addresses whose only positive
/// balance is in `pool`.
pub fn single_pool_liquidity_share(snapshot: &BalanceSnapshot, pool: &PoolId) -> Result<f64, LedgerError> {
    let balances = snapshot.get(pool).ok_or_else(|| LedgerError::UnknownPool(pool.clone()))?;
    let total: u128 = balances.values().sum();
    if total == 0 {
        return Err(LedgerError::EmptyPool(pool.clone()));
    }
    let mut pools_of: BTreeMap<&Address, usize> = BTreeMap::new();
    for other in snapshot.values() {
        for (addr, &b) in other {
            if b > 0 {
                *pools_of.entry(addr).or_default() += 1;
            }
        }
    }
    let single: u128 = balances
        .iter()
        .filter(|(addr, _)| pools_of.get(addr) == Some(&1))
        .map(|(_, &b)| b)
        .sum();
    Ok(single as f64 / total as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRow {
    pool: PoolId,
    address: Address,
    balance: String,
}

/// Writes `pool,address,balance` rows in pool then address order.
pub fn write_snapshot_csv<W: Write>(writer: W, snapshot: &BalanceSnapshot) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pool", "address", "balance"])?;
    for (pool, balances) in snapshot {
        for (address, balance) in balances {
            w.write_record([pool.as_str(), address.as_str(), &balance.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_csv<R: Read>(reader: R) -> Result<BalanceSnapshot, String> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut snap = BalanceSnapshot::new();
    for (i, row) in rdr.deserialize::<SnapshotRow>().enumerate() {
        let row = row.map_err(|e| format!("line {}: {e}", i + 2))?;
        let balance: u128 = row.balance.parse().map_err(|e| format!("line {}: {e}", i + 2))?;
        snap.entry(row.pool).or_default().insert(row.address, balance);
    }
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(block: u64) -> EventKey {
        EventKey::new(block, 0, 0, block * 12)
    }

    fn mint(block: u64, pool: &str, to: &str, amount: u128) -> LiquidityEvent {
        LiquidityEvent { key: key(block), pool: pool.into(), change: LiquidityChange::Mint { to: to.into() }, amount }
    }

    fn burn(block: u64, pool: &str, from: &str, amount: u128) -> LiquidityEvent {
        LiquidityEvent { key: key(block), pool: pool.into(), change: LiquidityChange::Burn { from: from.into() }, amount }
    }

    fn transfer(block: u64, pool: &str, from: &str, to: &str, amount: u128) -> LiquidityEvent {
        LiquidityEvent {
            key: key(block),
            pool: pool.into(),
            change: LiquidityChange::Transfer { from: from.into(), to: to.into() },
            amount,
        }
    }

    #[test]
    fn mint_transfer_burn() {
        let mut l = Ledger::new();
        l.apply(&mint(1, "P", "X", 20)).unwrap();
        assert_eq!(l.balance(&"P".into(), &"X".into()), 20);
        l.apply(&transfer(2, "P", "X", "Y", 5)).unwrap();
        let b = l.balances_at(&"P".into(), key(2)).unwrap();
        assert_eq!(b, BTreeMap::from([("X".into(), 15), ("Y".into(), 5)]));
        assert_eq!(b.values().sum::<u128>(), 20);
        assert_eq!(l.supply(&"P".into()), 20);

        let err = l.apply(&burn(3, "P", "X", 30)).unwrap_err();
        assert!(matches!(err, LedgerError::NegativeBalance { balance: 15, requested: 30, .. }));
        assert_eq!(l.balance(&"P".into(), &"X".into()), 15);
    }

    #[test]
    fn balances_before_first_event_are_empty() {
        let mut l = Ledger::new();
        l.apply(&mint(10, "P", "X", 20)).unwrap();
        assert!(l.balances_at(&"P".into(), key(9)).unwrap().is_empty());
        assert_eq!(l.balances_at(&"Q".into(), key(9)), Err(LedgerError::UnknownPool("Q".into())));
    }

    #[test]
    fn zero_address_transfer_legs_change_supply() {
        let mut l = Ledger::new();
        l.apply(&transfer(1, "P", Address::ZERO_HEX, "X", 7)).unwrap();
        assert_eq!(l.supply(&"P".into()), 7);
        l.apply(&transfer(2, "P", "X", "0x0", 3)).unwrap();
        assert_eq!(l.supply(&"P".into()), 4);
        assert_eq!(l.balance(&"P".into(), &"X".into()), 4);
        assert!(matches!(l.apply(&mint(3, "P", "0x0", 1)), Err(LedgerError::ZeroAddress(_))));
    }

    #[test]
    fn distribution_counts_positive_balances_only() {
        let mut l = Ledger::new();
        l.apply(&mint(1, "P", "X", 10)).unwrap();
        assert_eq!(l.pools_per_provider_distribution(key(1)), BTreeMap::from([(1, 1)]));
        l.apply(&mint(2, "Q", "X", 10)).unwrap();
        l.apply(&mint(3, "P", "Y", 10)).unwrap();
        assert_eq!(l.pools_per_provider_distribution(key(3)), BTreeMap::from([(1, 1), (2, 1)]));
        l.apply(&burn(4, "Q", "X", 10)).unwrap();
        assert_eq!(l.pools_per_provider_distribution(key(4)), BTreeMap::from([(1, 2)]));
        // history retained for the exited position
        assert_eq!(l.provider_profiles()[0].pools_participated.len(), 2);
    }

    #[test]
    fn single_pool_share() {
        let mut l = Ledger::new();
        l.apply(&mint(1, "P", "X", 50)).unwrap();
        assert_eq!(l.single_pool_liquidity_share(&"P".into(), key(1)).unwrap(), 1.0);
        l.apply(&mint(2, "P", "Y", 50)).unwrap();
        l.apply(&mint(3, "Q", "Y", 1)).unwrap();
        assert_eq!(l.single_pool_liquidity_share(&"P".into(), key(3)).unwrap(), 0.5);
        assert_eq!(
            l.single_pool_liquidity_share(&"P".into(), key(0)),
            Err(LedgerError::EmptyPool("P".into()))
        );
        assert!(matches!(
            l.single_pool_liquidity_share(&"R".into(), key(3)),
            Err(LedgerError::UnknownPool(_))
        ));
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let mut l = Ledger::new();
        l.apply(&mint(1, "P", "X", u128::MAX / 4)).unwrap();
        l.apply(&mint(2, "Q", "Y", 3)).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &l.snapshot()).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("pool,address,balance\n"));
        assert_eq!(read_snapshot_csv(buf.as_slice()).unwrap(), l.snapshot());
    }
}
