//! Liquidity-provider analytics: USD valuation, returns against holding,
//! fee accrual, impermanent loss, tail risk, correlations and pool
//! classification.

pub mod classify;
pub mod returns;
pub mod risk;
pub mod stats;
pub mod valuation;

use thiserror::Error;

use crate::amm::{PoolId, TokenId};

pub use classify::{classify_pool, Category, ClassifyConfig, PoolCategory};
pub use returns::{
    daily_fee_series, daily_impermanent_loss_series, daily_return_series, fees_pct, fees_pct_between,
    impermanent_loss_pct, return_pct, DailyValue, FeeIndex,
};
pub use risk::{cvar, mean, RiskReport};
pub use stats::{pearson, Histogram};
pub use valuation::{At, Inception, PositionValue, ValuationContext, ValuationSample, ValuationSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("token {0} has no pool with the numeraire")]
    NoEthPair(TokenId),
    #[error("pool {0} is empty at the requested point")]
    EmptyPool(PoolId),
    #[error("unknown pool {0}")]
    UnknownPool(PoolId),
    #[error("no USD price at or before ts {0}")]
    NoUsdPrice(u64),
    #[error("share {0} outside (0, 1]")]
    InvalidShare(f64),
    #[error("no sample at ts {0}")]
    MissingSample(u64),
    #[error("prices must be positive (got {0}, {1})")]
    NonPositivePrice(f64, f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty input")]
    EmptyInput,
    #[error("level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("token {token} has {days} days of price history, need {needed}")]
    InsufficientHistory { token: TokenId, days: usize, needed: usize },
}
