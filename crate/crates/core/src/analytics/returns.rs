//! Return against holding, fee accrual and impermanent loss.

use std::collections::BTreeMap;

use dashu_int::IBig;

use super::valuation::{state_at, At, ValuationSample, ValuationSeries};
use super::AnalyticsError;
use crate::amm::exact::{rational, Rational};
use crate::ingest::replay::PoolSnapshotSeries;
use crate::ingest::{EventKind, SECONDS_PER_DAY};

/// Percent change of the invest/hold ratio from `ratio_t1` to `ratio_t2`.
pub fn return_pct(ratio_t1: f64, ratio_t2: f64) -> f64 {
    100.0 * (ratio_t2 - ratio_t1) / ratio_t1
}

/// Fees earned between two invariant values, as a percent of liquidity:
/// `100 * (1 - sqrt(k1) / sqrt(k2))`.
pub fn fees_pct(k1: f64, k2: f64) -> Result<f64, AnalyticsError> {
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(AnalyticsError::InsufficientData(format!("invariant must be positive (k1={k1}, k2={k2})")));
    }
    Ok(100.0 * (1.0 - k1.sqrt() / k2.sqrt()))
}

/// Divergence loss for a move of the pool price from `p_t1` to `p_t2`:
/// `100 * (2 sqrt(r) / (1 + r) - 1)` with `r = p_t2 / p_t1`.
pub fn impermanent_loss_pct(p_t1: f64, p_t2: f64) -> Result<f64, AnalyticsError> {
    if !(p_t1 > 0.0 && p_t2 > 0.0) || !p_t1.is_finite() || !p_t2.is_finite() {
        return Err(AnalyticsError::NonPositivePrice(p_t1, p_t2));
    }
    let r = p_t2 / p_t1;
    Ok(100.0 * (2.0 * r.sqrt() / (1.0 + r) - 1.0))
}

/// Compounded fee growth factor per snapshot.
///
/// Within a stretch without mints or burns the factor grows like `sqrt(k)`.
/// Mints and burns move `k` without any fee being earned, so they start a
/// new stretch and leave the factor unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FeeIndex {
    pub values: Vec<f64>,
}

fn breaks_epoch(kind: EventKind) -> bool {
    matches!(kind, EventKind::Mint | EventKind::Burn | EventKind::PoolCreated)
}

impl FeeIndex {
    pub fn for_series(series: &PoolSnapshotSeries) -> Self {
        let mut values = Vec::with_capacity(series.len());
        let mut g = 1.0f64;
        for (i, s) in series.snapshots.iter().enumerate() {
            if i > 0 && !breaks_epoch(s.kind) {
                let prev = &series.snapshots[i - 1];
                if prev.reserve0 > 0 && prev.reserve1 > 0 && s.reserve0 > 0 && s.reserve1 > 0 {
                    let growth = (s.reserve0 as f64 / prev.reserve0 as f64) * (s.reserve1 as f64 / prev.reserve1 as f64);
                    g *= growth.sqrt();
                }
            }
            values.push(g);
        }
        FeeIndex { values }
    }
}

/// Fees between two points of a pool's history, compounding
/// `sqrt(k_end / k_start)` over every mint- and burn-free stretch.
pub fn fees_pct_between(series: &PoolSnapshotSeries, from: At, to: At) -> Result<f64, AnalyticsError> {
    let idx = |at: At| -> Result<usize, AnalyticsError> {
        let snap = state_at(series, at).ok_or_else(|| AnalyticsError::EmptyPool(series.pool.clone()))?;
        if snap.reserve0 == 0 || snap.reserve1 == 0 {
            return Err(AnalyticsError::EmptyPool(series.pool.clone()));
        }
        Ok(series.snapshots.partition_point(|s| s.key <= snap.key) - 1)
    };
    let (i, j) = (idx(from)?, idx(to)?);
    let index = FeeIndex::for_series(series);
    Ok(100.0 * (1.0 - index.values[i] / index.values[j]))
}

/// Exact `prod(k_end / k_start)` over the mint- and burn-free stretches
/// between snapshot indices `from` and `to`; its square root is the fee
/// growth factor.
pub fn fee_growth_squared_exact(series: &PoolSnapshotSeries, from: usize, to: usize) -> Rational {
    let mut acc = Rational::ONE;
    for i in (from + 1)..=to {
        let (prev, cur) = (&series.snapshots[i - 1], &series.snapshots[i]);
        if breaks_epoch(cur.kind) || prev.reserve0 == 0 || prev.reserve1 == 0 {
            continue;
        }
        let k_prev = IBig::from(prev.reserve0) * IBig::from(prev.reserve1);
        let k_cur = IBig::from(cur.reserve0) * IBig::from(cur.reserve1);
        acc *= rational(k_cur, k_prev);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyValue {
    /// UTC day number.
    pub day: u64,
    pub value: f64,
}

/// Mean of `f(sample)` per UTC day, in day order.
fn daily_means(samples: &[ValuationSample], f: impl Fn(&ValuationSample) -> f64) -> Vec<(u64, f64)> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for s in samples {
        let e = acc.entry(s.ts / SECONDS_PER_DAY).or_insert((0.0, 0));
        e.0 += f(s);
        e.1 += 1;
    }
    acc.into_iter().map(|(d, (sum, n))| (d, sum / n as f64)).collect()
}

fn consecutive(
    means: Vec<(u64, f64)>,
    step: impl Fn(f64, f64) -> Result<f64, AnalyticsError>,
) -> Result<Vec<DailyValue>, AnalyticsError> {
    if means.len() < 2 {
        return Err(AnalyticsError::InsufficientData(format!("{} day(s) of samples, need 2", means.len())));
    }
    means
        .windows(2)
        .map(|w| Ok(DailyValue { day: w[1].0, value: step(w[0].1, w[1].1)? }))
        .collect()
}

/// Daily returns from the mean invest/hold ratio of each day.
pub fn daily_return_series(v: &ValuationSeries) -> Result<Vec<DailyValue>, AnalyticsError> {
    consecutive(daily_means(&v.samples, |s| s.ratio), |a, b| Ok(return_pct(a, b)))
}

/// Daily fees from the mean fee index of each day.
pub fn daily_fee_series(v: &ValuationSeries) -> Result<Vec<DailyValue>, AnalyticsError> {
    consecutive(daily_means(&v.samples, |s| s.fee_index), |a, b| Ok(100.0 * (1.0 - a / b)))
}

/// Daily impermanent loss from the mean pool price of each day.
pub fn daily_impermanent_loss_series(v: &ValuationSeries) -> Result<Vec<DailyValue>, AnalyticsError> {
    consecutive(daily_means(&v.samples, |s| s.pool_price), impermanent_loss_pct)
}

/// Cumulative figures from the first sample to the last sample of each day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulativeRow {
    pub day: u64,
    pub return_pct: f64,
    pub fees_pct: f64,
    pub impermanent_loss_pct: f64,
}

pub fn cumulative_series(v: &ValuationSeries) -> Result<Vec<CumulativeRow>, AnalyticsError> {
    let first = v.samples.first().ok_or(AnalyticsError::EmptyInput)?;
    let mut last_of_day: BTreeMap<u64, &ValuationSample> = BTreeMap::new();
    for s in &v.samples {
        last_of_day.insert(s.ts / SECONDS_PER_DAY, s);
    }
    last_of_day
        .into_iter()
        .map(|(day, s)| {
            Ok(CumulativeRow {
                day,
                return_pct: return_pct(first.ratio, s.ratio),
                fees_pct: 100.0 * (1.0 - first.fee_index / s.fee_index),
                impermanent_loss_pct: impermanent_loss_pct(first.pool_price, s.pool_price)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amm::{Pool, PoolId, TokenAmount};
    use crate::ingest::replay::Snapshot;
    use crate::ingest::EventKey;

    fn approx(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn return_examples() {
        assert_eq!(return_pct(1.0, 1.0), 0.0);
        assert!(approx(return_pct(1.0, 1.02), 2.0, 1e-12));
        assert!(approx(return_pct(0.8, 1.0), 25.0, 1e-12));
    }

    #[test]
    fn fee_examples() {
        assert_eq!(fees_pct(1e12, 1e12).unwrap(), 0.0);
        // sqrt(1.0201) = 1.01
        let expected = 100.0 * (1.0 - 1.0 / 1.01);
        assert!(approx(fees_pct(1e12, 1.0201e12).unwrap(), expected, 1e-12));
        assert!(approx(expected, 0.990_099_009_9, 1e-9));
        assert!(fees_pct(0.0, 1.0).is_err());
    }

    #[test]
    fn impermanent_loss_examples() {
        assert_eq!(impermanent_loss_pct(2.0, 2.0).unwrap(), 0.0);
        assert!(approx(impermanent_loss_pct(1.0, 4.0).unwrap(), -20.0, 1e-12));
        assert!(approx(impermanent_loss_pct(1.0, 100.0).unwrap(), 100.0 * (20.0 / 101.0 - 1.0), 1e-12));
        assert!(matches!(impermanent_loss_pct(0.0, 1.0), Err(AnalyticsError::NonPositivePrice(..))));
        assert!(impermanent_loss_pct(-1.0, 1.0).is_err());
    }

    fn snap(block: u64, kind: EventKind, r0: u128, r1: u128, l: u128) -> Snapshot {
        Snapshot { key: EventKey::new(block, 0, 0, block), kind, reserve0: r0, reserve1: r1, total_liquidity: l }
    }

    #[test]
    fn fee_index_compounds_across_mints() {
        let mut series = PoolSnapshotSeries::new("P".into(), "A".into(), "B".into());
        series.snapshots = vec![
            snap(1, EventKind::Mint, 100, 100, 100),
            snap(2, EventKind::Swap, 110, 100, 100), // k x1.1
            snap(3, EventKind::Mint, 220, 200, 200), // no fee
            snap(4, EventKind::Swap, 220, 220, 200), // k x1.1
        ];
        let idx = FeeIndex::for_series(&series);
        assert!(approx(idx.values[3], 1.1, 1e-12));
        let f = fees_pct_between(&series, At::Key(series.snapshots[0].key), At::Key(series.snapshots[3].key)).unwrap();
        assert!(approx(f, 100.0 * (1.0 - 1.0 / 1.1), 1e-12));
        let exact = fee_growth_squared_exact(&series, 0, 3);
        assert_eq!(exact, rational(121, 100));
    }

    #[test]
    fn single_swap_fee_matches_reserves() {
        let mut pool = Pool::new(PoolId::from("P"), "A".into(), "B".into(), Default::default()).unwrap();
        pool.mint_initial(TokenAmount(3_000_000), TokenAmount(7_000_000)).unwrap();
        let mut series = PoolSnapshotSeries::new("P".into(), "A".into(), "B".into());
        series.snapshots.push(snap(1, EventKind::Mint, pool.reserve0.0, pool.reserve1.0, pool.total_liquidity));
        let k0 = pool.k_f64();
        pool.swap(&"A".into(), TokenAmount(250_000)).unwrap();
        series.snapshots.push(snap(2, EventKind::Swap, pool.reserve0.0, pool.reserve1.0, pool.total_liquidity));
        let k1 = pool.k_f64();
        let f = fees_pct_between(&series, At::Key(series.snapshots[0].key), At::Key(series.snapshots[1].key)).unwrap();
        assert!(approx(f, 100.0 * (1.0 - (k0 / k1).sqrt()), 1e-9));
        assert!(f > 0.0);
    }
}
