//! Stable / normal / exotic pool taxonomy from token USD price behavior.

use std::collections::BTreeSet;
use std::fmt;

use super::valuation::{At, ValuationContext};
use super::AnalyticsError;
use crate::amm::TokenId;
use crate::ingest::SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    Stable,
    Normal,
    Exotic,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Stable => "Stable",
            Category::Normal => "Normal",
            Category::Exotic => "Exotic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyConfig {
    pub stable_tokens: BTreeSet<TokenId>,
    /// Realized volatility of daily log returns below which a token counts as stable.
    pub stable_volatility: f64,
    /// Max/min USD price ratio above which a token counts as exotic.
    pub exotic_factor: f64,
    pub min_history_days: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            stable_tokens: ["USDC", "USDT", "DAI"].into_iter().map(TokenId::from).collect(),
            stable_volatility: 0.01,
            exotic_factor: 100.0,
            min_history_days: 30,
        }
    }
}

/// Price statistics of one token over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEvidence {
    pub token: TokenId,
    pub listed_stable: bool,
    pub days: usize,
    pub daily_volatility: Option<f64>,
    pub price_range: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolCategory {
    pub category: Category,
    pub evidence: [TokenEvidence; 2],
}

/// Root mean square of log returns, not demeaned, so a steady trend counts
/// as movement.
fn realized_volatility(log_returns: &[f64]) -> Option<f64> {
    if log_returns.is_empty() {
        return None;
    }
    Some((log_returns.iter().map(|r| r * r).sum::<f64>() / log_returns.len() as f64).sqrt())
}

fn evidence(token: &TokenId, daily_prices: &[f64], cfg: &ClassifyConfig) -> Result<TokenEvidence, AnalyticsError> {
    let listed_stable = cfg.stable_tokens.contains(token);
    if !listed_stable && daily_prices.len() < cfg.min_history_days {
        return Err(AnalyticsError::InsufficientHistory {
            token: token.clone(),
            days: daily_prices.len(),
            needed: cfg.min_history_days,
        });
    }
    if let Some(&p) = daily_prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(AnalyticsError::NonPositivePrice(p, p));
    }
    let log_returns: Vec<f64> = daily_prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let price_range = if daily_prices.is_empty() {
        None
    } else {
        let max = daily_prices.iter().copied().fold(f64::MIN, f64::max);
        let min = daily_prices.iter().copied().fold(f64::MAX, f64::min);
        Some(max / min)
    };
    Ok(TokenEvidence {
        token: token.clone(),
        listed_stable,
        days: daily_prices.len(),
        daily_volatility: realized_volatility(&log_returns),
        price_range,
    })
}

/// Classifies a pool from daily USD prices of its two tokens.
///
/// Stable if both tokens are configured stable coins or both are calm;
/// otherwise exotic if either token's price moved by more than the exotic
/// factor; otherwise normal.
pub fn classify_pool(
    token0: (&TokenId, &[f64]),
    token1: (&TokenId, &[f64]),
    cfg: &ClassifyConfig,
) -> Result<PoolCategory, AnalyticsError> {
    let e0 = evidence(token0.0, token0.1, cfg)?;
    let e1 = evidence(token1.0, token1.1, cfg)?;
    let calm = |e: &TokenEvidence| e.daily_volatility.is_some_and(|v| v < cfg.stable_volatility);
    let wild = |e: &TokenEvidence| !e.listed_stable && e.price_range.is_some_and(|r| r > cfg.exotic_factor);
    let category = if e0.listed_stable && e1.listed_stable {
        Category::Stable
    } else if wild(&e0) || wild(&e1) {
        Category::Exotic
    } else if calm(&e0) && calm(&e1) {
        Category::Stable
    } else {
        Category::Normal
    };
    Ok(PoolCategory { category, evidence: [e0, e1] })
}

/// USD price of `token` at the end of each UTC day in `[start, end]` on
/// which it can be priced.
pub fn daily_usd_prices(ctx: &ValuationContext, token: &TokenId, start: u64, end: u64) -> Vec<f64> {
    let first_day = start / SECONDS_PER_DAY;
    let last_day = end / SECONDS_PER_DAY;
    (first_day..=last_day)
        .filter_map(|d| {
            let t = ((d + 1) * SECONDS_PER_DAY - 1).min(end);
            ctx.token_price_usd(token, At::Time(t)).ok()
        })
        .collect()
}

/// Classifies a replayed pool from the prices its valuation context implies.
pub fn classify_replayed_pool(
    ctx: &ValuationContext,
    token0: &TokenId,
    token1: &TokenId,
    start: u64,
    end: u64,
    cfg: &ClassifyConfig,
) -> Result<PoolCategory, AnalyticsError> {
    let p0 = daily_usd_prices(ctx, token0, start, end);
    let p1 = daily_usd_prices(ctx, token1, start, end);
    classify_pool((token0, &p0), (token1, &p1), cfg)
}
