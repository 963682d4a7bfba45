//! Historical tail risk.

use super::AnalyticsError;
use crate::amm::PoolId;

pub fn mean(xs: &[f64]) -> Result<f64, AnalyticsError> {
    if xs.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Number of observations in the lower `level` tail: `ceil(level * n)`,
/// at least one. Products within 1e-9 of an integer are not rounded up, so
/// `0.05 * 60` is a tail of 3 despite binary rounding.
pub fn tail_size(level: f64, n: usize) -> usize {
    let x = level * n as f64;
    let nearest = x.round();
    let m = if (x - nearest).abs() < 1e-9 { nearest } else { x.ceil() };
    (m as usize).clamp(1, n)
}

/// Conditional value at risk: mean of the `ceil(level * n)` smallest returns.
pub fn cvar(returns: &[f64], level: f64) -> Result<f64, AnalyticsError> {
    if returns.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(AnalyticsError::InvalidLevel(level));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = tail_size(level, sorted.len());
    Ok(sorted[..m].iter().sum::<f64>() / m as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub pool: PoolId,
    pub mean_daily_return_pct: f64,
    pub cvar_daily_pct: f64,
    pub level: f64,
    pub n_days: usize,
}

impl RiskReport {
    pub fn from_daily_returns(pool: PoolId, daily: &[f64], level: f64) -> Result<Self, AnalyticsError> {
        Ok(RiskReport {
            pool,
            mean_daily_return_pct: mean(daily)?,
            cvar_daily_pct: cvar(daily, level)?,
            level,
            n_days: daily.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvar_examples() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(cvar(&xs, 0.05).unwrap(), 1.0);
        assert_eq!(cvar(&[2.5; 7], 0.05).unwrap(), 2.5);
        let mut ys: Vec<f64> = (0..38).map(|i| i as f64 * 0.1).collect();
        ys.extend([-5.0, -3.0]);
        assert_eq!(cvar(&ys, 0.05).unwrap(), -4.0);
    }

    #[test]
    fn cvar_errors() {
        assert_eq!(cvar(&[], 0.05), Err(AnalyticsError::EmptyInput));
        assert_eq!(cvar(&[1.0], 0.0), Err(AnalyticsError::InvalidLevel(0.0)));
        assert_eq!(cvar(&[1.0], 1.0), Err(AnalyticsError::InvalidLevel(1.0)));
    }

    #[test]
    fn tail_sizes() {
        assert_eq!(tail_size(0.05, 20), 1);
        assert_eq!(tail_size(0.05, 60), 3);
        assert_eq!(tail_size(0.05, 61), 4);
        assert_eq!(tail_size(0.05, 3), 1);
        assert_eq!(tail_size(0.1, 30), 3);
    }

    #[test]
    fn risk_report() {
        let r = RiskReport::from_daily_returns("P".into(), &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_eq!((r.mean_daily_return_pct, r.cvar_daily_pct, r.n_days), (2.0, 1.0, 3));
    }
}
