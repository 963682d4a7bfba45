//! Side inputs: the numeraire price feed and the pool registry.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::amm::{PoolId, TokenId};

/// ETH/USD observations, strictly increasing in time. Lookups return the
/// last observation at or before the query time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceFeed {
    points: Vec<(u64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    ts: u64,
    price_usd: f64,
}

impl PriceFeed {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self, IngestError> {
        for (i, &(ts, price)) in points.iter().enumerate() {
            if !(price.is_finite() && price > 0.0) {
                return Err(IngestError::Csv { line: i + 2, reason: format!("price must be positive, got {price}") });
            }
            if i > 0 && ts <= points[i - 1].0 {
                return Err(IngestError::Csv { line: i + 2, reason: "timestamps must be strictly increasing".into() });
            }
        }
        Ok(PriceFeed { points })
    }

    /// Constant price from time zero.
    pub fn constant(price: f64) -> Self {
        PriceFeed { points: vec![(0, price)] }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
            let row = row.map_err(|e| IngestError::Csv { line: i + 2, reason: e.to_string() })?;
            points.push((row.ts, row.price_usd));
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for &(ts, price_usd) in &self.points {
            w.serialize(PriceRow { ts, price_usd })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn price_at(&self, ts: u64) -> Option<f64> {
        let idx = self.points.partition_point(|&(t, _)| t <= ts);
        idx.checked_sub(1).map(|i| self.points[i].1)
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolInfo {
    pub pool: PoolId,
    pub token0: TokenId,
    pub token1: TokenId,
    pub decimals0: u8,
    pub decimals1: u8,
}

/// Pool → token pair metadata, plus token decimals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenRegistry {
    pools: BTreeMap<PoolId, PoolInfo>,
    decimals: BTreeMap<TokenId, u8>,
}

impl TokenRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pool. Token order is canonicalized so that `token0 < token1`.
    pub fn insert(&mut self, mut info: PoolInfo) -> Result<(), String> {
        if info.token0 == info.token1 {
            return Err(format!("pool {} lists {} twice", info.pool, info.token0));
        }
        if info.token1 < info.token0 {
            std::mem::swap(&mut info.token0, &mut info.token1);
            std::mem::swap(&mut info.decimals0, &mut info.decimals1);
        }
        for (t, d) in [(&info.token0, info.decimals0), (&info.token1, info.decimals1)] {
            if let Some(&prev) = self.decimals.get(t) {
                if prev != d {
                    return Err(format!("token {t} has conflicting decimals {prev} and {d}"));
                }
            }
            self.decimals.insert(t.clone(), d);
        }
        self.pools.insert(info.pool.clone(), info);
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut reg = TokenRegistry::new();
        for (i, row) in rdr.deserialize::<PoolInfo>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| IngestError::Csv { line, reason: e.to_string() })?;
            reg.insert(row).map_err(|reason| IngestError::Csv { line, reason })?;
        }
        Ok(reg)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for info in self.pools.values() {
            w.serialize(info)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn pool(&self, id: &PoolId) -> Option<&PoolInfo> {
        self.pools.get(id)
    }

    pub fn pools(&self) -> impl Iterator<Item = &PoolInfo> {
        self.pools.values()
    }

    pub fn decimals(&self, token: &TokenId) -> Option<u8> {
        self.decimals.get(token).copied()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenId> {
        self.decimals.keys()
    }

    /// Pools trading `a` against `b`, in id order.
    pub fn pools_for_pair<'a>(&'a self, a: &'a TokenId, b: &'a TokenId) -> impl Iterator<Item = &'a PoolInfo> {
        self.pools.values().filter(move |p| {
            (&p.token0 == a && &p.token1 == b) || (&p.token0 == b && &p.token1 == a)
        })
    }
}
