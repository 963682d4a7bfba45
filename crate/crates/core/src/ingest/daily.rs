//! Per-UTC-day activity of a pool.

use crate::analytics::{At, ValuationContext};
use crate::ingest::replay::PoolSnapshotSeries;
use crate::ingest::{EventKind, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRow {
    pub day: u64,
    pub mint_count: u64,
    pub burn_count: u64,
    pub swap_count: u64,
    /// USD value of swap inputs; `None` without a valuation context or price.
    pub volume_usd: Option<f64>,
    /// Pool value at the end of the day, carried forward over quiet days.
    pub end_liquidity_usd: Option<f64>,
}

/// One row per UTC day from the pool's first to its last event.
pub fn daily_aggregate(series: &PoolSnapshotSeries, ctx: Option<&ValuationContext>) -> Vec<DailyRow> {
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Vec::new();
    };
    let (d0, d1) = (first.key.day(), last.key.day());
    let mut rows: Vec<DailyRow> = (d0..=d1)
        .map(|day| DailyRow {
            day,
            mint_count: 0,
            burn_count: 0,
            swap_count: 0,
            volume_usd: ctx.map(|_| 0.0),
            end_liquidity_usd: None,
        })
        .collect();

    for (i, s) in series.snapshots.iter().enumerate() {
        let row = &mut rows[(s.key.day() - d0) as usize];
        match s.kind {
            EventKind::Mint => row.mint_count += 1,
            EventKind::Burn => row.burn_count += 1,
            EventKind::Swap => {
                row.swap_count += 1;
                if let (Some(ctx), Some(prev)) = (ctx, i.checked_sub(1).map(|j| &series.snapshots[j])) {
                    let in0 = s.reserve0.saturating_sub(prev.reserve0);
                    let in1 = s.reserve1.saturating_sub(prev.reserve1);
                    let v = ctx.reserves_usd(&series.pool, in0, in1, At::Key(s.key)).ok();
                    row.volume_usd = match (row.volume_usd, v) {
                        (Some(acc), Some(v)) => Some(acc + v),
                        _ => None,
                    };
                }
            }
            _ => {}
        }
    }

    if let Some(ctx) = ctx {
        let mut carried = None;
        for row in &mut rows {
            let end = (row.day + 1) * SECONDS_PER_DAY - 1;
            if let Some(v) = ctx.pool_value_usd(&series.pool, At::Time(end)).ok() {
                carried = Some(v);
            }
            row.end_liquidity_usd = carried;
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::replay::Snapshot;
    use crate::ingest::EventKey;

    fn snap(ts: u64, kind: EventKind) -> Snapshot {
        Snapshot { key: EventKey::new(ts, 0, 0, ts), kind, reserve0: 10, reserve1: 10, total_liquidity: 10 }
    }

    #[test]
    fn counts_and_empty_days() {
        let mut s = PoolSnapshotSeries::new("P".into(), "A".into(), "B".into());
        s.snapshots = vec![
            snap(10, EventKind::Mint),
            snap(20, EventKind::Mint),
            snap(30, EventKind::Burn),
            snap(40, EventKind::Mint),
            snap(2 * SECONDS_PER_DAY + 5, EventKind::Swap),
        ];
        let rows = daily_aggregate(&s, None);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].mint_count, rows[0].burn_count), (3, 1));
        assert_eq!((rows[1].mint_count, rows[1].burn_count, rows[1].swap_count), (0, 0, 0));
        assert_eq!(rows[2].swap_count, 1);
        assert_eq!(rows[1].volume_usd, None);
    }
}
