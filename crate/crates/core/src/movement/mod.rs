//! Detection of liquidity moved by one address from one pool to another.
//!
//! A movement is a burn in pool X followed, within a block window, by a mint
//! in a different pool Y by the same address.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;

use crate::amm::PoolId;
use crate::ingest::replay::{PoolSnapshotSeries, Snapshot};
use crate::ingest::{Address, Event, EventKey, EventKind, SECONDS_PER_DAY};

pub const DEFAULT_WINDOW: u64 = 6000;
pub const DEFAULT_ELIGIBILITY: usize = 5000;
pub const DEFAULT_DISPLAY_CAP: u64 = 500;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MovementRecord {
    pub address: Address,
    pub from_pool: PoolId,
    pub to_pool: PoolId,
    pub burn_key: EventKey,
    pub mint_key: EventKey,
    pub block_gap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchingMode {
    /// Each mint takes the earliest unmatched qualifying burn.
    #[default]
    Injective,
    /// Every qualifying burn/mint pair counts.
    AllPairs,
}

impl fmt::Display for MatchingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchingMode::Injective => "injective",
            MatchingMode::AllPairs => "all_pairs",
        })
    }
}

impl std::str::FromStr for MatchingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "injective" => Ok(MatchingMode::Injective),
            "all_pairs" | "all-pairs" => Ok(MatchingMode::AllPairs),
            other => Err(format!("unknown matching mode {other:?}")),
        }
    }
}

/// Finds movements with `0 < mint.block - burn.block <= window`.
pub fn detect_movements(events: &[Event], window: u64, mode: MatchingMode) -> Vec<MovementRecord> {
    let mut ordered: Vec<&Event> =
        events.iter().filter(|e| matches!(e.kind(), EventKind::Mint | EventKind::Burn)).collect();
    ordered.sort_by_key(|e| e.key);

    // per address: burns not yet consumed, in log order
    let mut open: BTreeMap<&Address, VecDeque<(EventKey, &PoolId)>> = BTreeMap::new();
    let mut records = Vec::new();
    for e in ordered {
        let burns = open.entry(&e.actor).or_default();
        if e.kind() == EventKind::Burn {
            burns.push_back((e.key, &e.pool));
            continue;
        }
        let block = e.key.block;
        while burns.front().is_some_and(|(k, _)| block - k.block > window) {
            burns.pop_front();
        }
        let qualifies = |(k, p): &(EventKey, &PoolId)| k.block < block && *p != &e.pool;
        let record = |(k, p): &(EventKey, &PoolId)| MovementRecord {
            address: e.actor.clone(),
            from_pool: (*p).clone(),
            to_pool: e.pool.clone(),
            burn_key: *k,
            mint_key: e.key,
            block_gap: block - k.block,
        };
        match mode {
            MatchingMode::Injective => {
                if let Some(i) = burns.iter().position(qualifies) {
                    let b = burns.remove(i).expect("index in range");
                    records.push(record(&b));
                }
            }
            MatchingMode::AllPairs => records.extend(burns.iter().filter(|b| qualifies(b)).map(record)),
        }
    }
    records
}

/// Number of mint and burn events per pool.
pub fn liquidity_event_counts(events: &[Event]) -> BTreeMap<PoolId, usize> {
    let mut counts = BTreeMap::new();
    for e in events {
        if matches!(e.kind(), EventKind::Mint | EventKind::Burn) {
            *counts.entry(e.pool.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Time-weighted mean of `value` over the pool's life, from its first to
/// its last snapshot. Snapshots where `value` is `None` are skipped.
pub fn average_liquidity(series: &PoolSnapshotSeries, value: impl Fn(&Snapshot) -> Option<f64>) -> Option<f64> {
    let points: Vec<(u64, f64)> = series.snapshots.iter().filter_map(|s| value(s).map(|v| (s.key.timestamp, v))).collect();
    let (first, last) = (points.first()?, points.last()?);
    let span = last.0 - first.0;
    if span == 0 {
        return Some(points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64);
    }
    let area: f64 = points.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0) as f64).sum();
    Some(area / span as f64)
}

/// Pools with more than `threshold` liquidity events, smallest average
/// liquidity first (ties by id). Pools without an average are left out.
pub fn eligible_pools(
    counts: &BTreeMap<PoolId, usize>,
    average: &BTreeMap<PoolId, f64>,
    threshold: usize,
) -> Vec<PoolId> {
    let mut pools: Vec<(f64, &PoolId)> = counts
        .iter()
        .filter(|(_, &n)| n > threshold)
        .filter_map(|(p, _)| average.get(p).map(|&a| (a, p)))
        .collect();
    pools.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    pools.into_iter().map(|(_, p)| p.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovementMatrix {
    pub pools: Vec<PoolId>,
    /// `counts[from][to]`, indices into `pools`.
    pub counts: Vec<Vec<u64>>,
    pub display_cap: u64,
}

/// Aggregates records between the listed pools; records touching other
/// pools are ignored.
pub fn build_matrix(records: &[MovementRecord], pools: &[PoolId], display_cap: u64) -> MovementMatrix {
    let index: BTreeMap<&PoolId, usize> = pools.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut counts = vec![vec![0u64; pools.len()]; pools.len()];
    for r in records {
        if let (Some(&i), Some(&j)) = (index.get(&r.from_pool), index.get(&r.to_pool)) {
            counts[i][j] += 1;
        }
    }
    MovementMatrix { pools: pools.to_vec(), counts, display_cap }
}

impl MovementMatrix {
    pub fn get(&self, from: &PoolId, to: &PoolId) -> Option<u64> {
        let i = self.pools.iter().position(|p| p == from)?;
        let j = self.pools.iter().position(|p| p == to)?;
        Some(self.counts[i][j])
    }

    pub fn display(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j].min(self.display_cap)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Square CSV: header `from\to,<pools...>`, one row per source pool.
    pub fn write_csv<W: Write>(&self, writer: W, capped: bool) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["from\\to".to_string()];
        header.extend(self.pools.iter().map(|p| p.to_string()));
        w.write_record(&header)?;
        for (i, p) in self.pools.iter().enumerate() {
            let mut row = vec![p.to_string()];
            row.extend((0..self.pools.len()).map(|j| {
                if capped { self.display(i, j) } else { self.counts[i][j] }.to_string()
            }));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Movements from `from` to `to` per bucket of `bucket_days` UTC days,
/// keyed by the mint's day, covering days `first_day..=last_day`.
pub fn movement_timeseries(
    records: &[MovementRecord],
    from: &PoolId,
    to: &PoolId,
    bucket_days: u64,
    first_day: u64,
    last_day: u64,
) -> Vec<(u64, u64)> {
    let bucket_days = bucket_days.max(1);
    if last_day < first_day {
        return Vec::new();
    }
    let n = ((last_day - first_day) / bucket_days + 1) as usize;
    let mut out: Vec<(u64, u64)> = (0..n as u64).map(|b| (first_day + b * bucket_days, 0)).collect();
    for r in records.iter().filter(|r| &r.from_pool == from && &r.to_pool == to) {
        let day = r.mint_key.timestamp / SECONDS_PER_DAY;
        if (first_day..=last_day).contains(&day) {
            out[((day - first_day) / bucket_days) as usize].1 += 1;
        }
    }
    out
}

pub fn write_records_csv<W: Write>(writer: W, records: &[MovementRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["address", "from_pool", "to_pool", "burn_block", "burn_tx", "burn_log", "mint_block", "mint_tx", "mint_log", "mint_ts", "block_gap"])?;
    for r in records {
        w.write_record([
            r.address.to_string(),
            r.from_pool.to_string(),
            r.to_pool.to_string(),
            r.burn_key.block.to_string(),
            r.burn_key.tx_index.to_string(),
            r.burn_key.log_index.to_string(),
            r.mint_key.block.to_string(),
            r.mint_key.tx_index.to_string(),
            r.mint_key.log_index.to_string(),
            r.mint_key.timestamp.to_string(),
            r.block_gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amm::TokenAmount;
    use crate::ingest::EventBody;

    fn mint(block: u64, pool: &str, who: &str) -> Event {
        Event {
            key: EventKey::new(block, 0, 0, block * 13),
            pool: pool.into(),
            actor: who.into(),
            body: EventBody::Mint { amount0: TokenAmount(1), amount1: TokenAmount(1), liquidity: None },
        }
    }

    fn burn(block: u64, pool: &str, who: &str) -> Event {
        Event {
            key: EventKey::new(block, 0, 0, block * 13),
            pool: pool.into(),
            actor: who.into(),
            body: EventBody::Burn { liquidity: 1, amount0: None, amount1: None },
        }
    }

    #[test]
    fn window_boundary_is_inclusive() {
        let r = detect_movements(&[burn(100, "X", "a"), mint(6100, "Y", "a")], 6000, MatchingMode::Injective);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].block_gap, 6000);
        let r = detect_movements(&[burn(100, "X", "a"), mint(6101, "Y", "a")], 6000, MatchingMode::Injective);
        assert!(r.is_empty());
    }

    #[test]
    fn same_pool_and_other_address_ignored() {
        let r = detect_movements(&[burn(100, "X", "a"), mint(200, "X", "a")], 6000, MatchingMode::Injective);
        assert!(r.is_empty());
        let r = detect_movements(&[burn(100, "X", "a"), mint(200, "Y", "b")], 6000, MatchingMode::Injective);
        assert!(r.is_empty());
    }

    #[test]
    fn same_block_is_not_a_movement() {
        let r = detect_movements(&[burn(100, "X", "a"), mint(100, "Y", "a")], 6000, MatchingMode::Injective);
        assert!(r.is_empty());
    }

    #[test]
    fn injective_versus_all_pairs() {
        let ev = [burn(1, "X", "a"), burn(2, "Z", "a"), mint(3, "Y", "a"), mint(4, "W", "a")];
        let inj = detect_movements(&ev, 10, MatchingMode::Injective);
        assert_eq!(inj.len(), 2);
        assert_eq!((inj[0].from_pool.as_str(), inj[1].from_pool.as_str()), ("X", "Z"));
        assert_eq!(detect_movements(&ev, 10, MatchingMode::AllPairs).len(), 4);
    }

    #[test]
    fn matrix_and_cap() {
        let rec = detect_movements(&[burn(1, "X", "a"), mint(2, "Y", "a")], 10, MatchingMode::Injective);
        let pools: Vec<PoolId> = vec!["X".into(), "Y".into()];
        let m = build_matrix(&rec, &pools, 500);
        assert_eq!(m.get(&"X".into(), &"Y".into()), Some(1));
        assert_eq!(m.get(&"Y".into(), &"X".into()), Some(0));

        let many = vec![rec[0].clone(); 600];
        let m = build_matrix(&many, &pools, 500);
        assert_eq!((m.counts[0][1], m.display(0, 1)), (600, 500));
    }

    #[test]
    fn timeseries_buckets() {
        let pools = ["X", "Y"];
        let mut ev = Vec::new();
        for d in 0..3u64 {
            let b = d * SECONDS_PER_DAY / 13 + 10;
            ev.push(burn(b, pools[0], "a"));
            ev.push(mint(b + 1, pools[1], "a"));
        }
        let rec = detect_movements(&ev, 6000, MatchingMode::Injective);
        let ts = movement_timeseries(&rec, &"X".into(), &"Y".into(), 1, 0, 2);
        assert_eq!(ts.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1, 1, 1]);
        assert!(movement_timeseries(&[], &"X".into(), &"Y".into(), 1, 0, 2).iter().all(|x| x.1 == 0));
    }

    #[test]
    fn eligibility_and_order() {
        let counts: BTreeMap<PoolId, usize> = [("A".into(), 5001), ("B".into(), 5000), ("C".into(), 9000)].into();
        let avg: BTreeMap<PoolId, f64> = [("A".into(), 10.0), ("B".into(), 1.0), ("C".into(), 5.0)].into();
        assert_eq!(eligible_pools(&counts, &avg, 5000), vec![PoolId::from("C"), PoolId::from("A")]);
    }
}
