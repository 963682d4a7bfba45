//! Constant-product liquidity pools: integer and exact-rational pool
//! mechanics, event-log replay into pool states and provider positions, and
//! liquidity-provider analytics (returns against holding, fees, impermanent
//! loss, tail risk, classification and cross-pool liquidity movements).

pub mod amm;
pub mod analytics;
pub mod ingest;
pub mod ledger;
pub mod movement;
