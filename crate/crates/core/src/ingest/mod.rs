//! Event-log ingestion.
//!
//! The log is JSON lines, one on-chain event per line:
//!
//! ```text
//! {"block":100,"tx_index":0,"log_index":1,"ts":1600000000,"pool":"P","kind":"Mint","actor":"0xab","amount0":4,"amount1":9}
//! ```
//!
//! Amounts may be JSON integers of any size or decimal strings. Unknown
//! fields are ignored.

pub mod daily;
pub mod feeds;
pub mod replay;

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::amm::{PoolId, TokenAmount, TokenId};

pub use daily::{daily_aggregate, DailyRow};
pub use feeds::{PoolInfo, PriceFeed, TokenRegistry};
pub use replay::{replay, Divergence, ReplayError, ReplayMode, ReplayOptions, ReplayOutput};

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate event key {0}")]
    DuplicateKey(EventKey),
    #[error("timestamp goes backwards at {key} ({ts} < {prev_ts})")]
    NonMonotonicTimestamp { key: EventKey, ts: u64, prev_ts: u64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Position of an event in the chain. Ordering and equality use
/// `(block, tx_index, log_index)` only; the timestamp rides along.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EventKey {
    pub block: u64,
    pub tx_index: u32,
    pub log_index: u32,
    pub timestamp: u64,
}

impl EventKey {
    pub fn new(block: u64, tx_index: u32, log_index: u32, timestamp: u64) -> Self {
        EventKey { block, tx_index, log_index, timestamp }
    }

    fn tuple(&self) -> (u64, u32, u32) {
        (self.block, self.tx_index, self.log_index)
    }

    /// UTC day number (days since the unix epoch).
    pub fn day(&self) -> u64 {
        self.timestamp / SECONDS_PER_DAY
    }

    /// Largest key in `block`; everything in the block sorts at or before it.
    pub fn end_of_block(block: u64, timestamp: u64) -> Self {
        EventKey { block, tx_index: u32::MAX, log_index: u32::MAX, timestamp }
    }
}

impl PartialEq for EventKey {
    fn eq(&self, other: &Self) -> bool {
        self.tuple() == other.tuple()
    }
}

impl Eq for EventKey {}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tuple().cmp(&other.tuple())
    }
}

impl std::hash::Hash for EventKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.tuple().hash(state)
    }
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.block, self.tx_index, self.log_index)
    }
}

/// Account address. Each address is treated as one liquidity provider.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub String);

impl Address {
    pub const ZERO_HEX: &'static str = "0x0000000000000000000000000000000000000000";

    pub fn new(s: impl Into<String>) -> Self {
        Address(s.into())
    }

    pub fn zero() -> Self {
        Address(Self::ZERO_HEX.to_string())
    }

    /// `0x0`, `0x000…0` or an empty string.
    pub fn is_zero(&self) -> bool {
        let digits = self.0.strip_prefix("0x").unwrap_or(&self.0);
        digits.bytes().all(|b| b == b'0')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    PoolCreated,
    Mint,
    Burn,
    Swap,
    Transfer,
    Sync,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PoolCreated => "PoolCreated",
            EventKind::Mint => "Mint",
            EventKind::Burn => "Burn",
            EventKind::Swap => "Swap",
            EventKind::Transfer => "Transfer",
            EventKind::Sync => "Sync",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PoolCreated" => EventKind::PoolCreated,
            "Mint" => EventKind::Mint,
            "Burn" => EventKind::Burn,
            "Swap" => EventKind::Swap,
            "Transfer" => EventKind::Transfer,
            "Sync" => EventKind::Sync,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind-specific payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventBody {
    PoolCreated {
        token0: Option<TokenId>,
        token1: Option<TokenId>,
    },
    Mint {
        amount0: TokenAmount,
        amount1: TokenAmount,
        /// Liquidity reported by the log, if any; replay recomputes it.
        liquidity: Option<u128>,
    },
    Burn {
        liquidity: u128,
        amount0: Option<TokenAmount>,
        amount1: Option<TokenAmount>,
    },
    Swap {
        /// Token id, or `"0"` / `"1"` for the reserve side.
        in_token: String,
        amount_in: TokenAmount,
        amount_out: Option<TokenAmount>,
    },
    Transfer {
        from: Address,
        to: Address,
        liquidity: u128,
    },
    Sync {
        reserve0: TokenAmount,
        reserve1: TokenAmount,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::PoolCreated { .. } => EventKind::PoolCreated,
            EventBody::Mint { .. } => EventKind::Mint,
            EventBody::Burn { .. } => EventKind::Burn,
            EventBody::Swap { .. } => EventKind::Swap,
            EventBody::Transfer { .. } => EventKind::Transfer,
            EventBody::Sync { .. } => EventKind::Sync,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub key: EventKey,
    pub pool: PoolId,
    pub actor: Address,
    pub body: EventBody,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }

    /// Serializes to one JSON-lines record with a fixed field order.
    pub fn to_json_line(&self) -> String {
        let mut m = Vec::<(&str, Value)>::with_capacity(12);
        m.push(("block", Value::from(self.key.block)));
        m.push(("tx_index", Value::from(self.key.tx_index)));
        m.push(("log_index", Value::from(self.key.log_index)));
        m.push(("ts", Value::from(self.key.timestamp)));
        m.push(("pool", Value::from(self.pool.as_str())));
        m.push(("kind", Value::from(self.kind().as_str())));
        m.push(("actor", Value::from(self.actor.as_str())));
        let num = |v: u128| Value::Number(v.into());
        match &self.body {
            EventBody::PoolCreated { token0, token1 } => {
                if let Some(t) = token0 {
                    m.push(("token0", Value::from(t.as_str())));
                }
                if let Some(t) = token1 {
                    m.push(("token1", Value::from(t.as_str())));
                }
            }
            EventBody::Mint { amount0, amount1, liquidity } => {
                m.push(("amount0", num(amount0.0)));
                m.push(("amount1", num(amount1.0)));
                if let Some(l) = liquidity {
                    m.push(("liquidity", num(*l)));
                }
            }
            EventBody::Burn { liquidity, amount0, amount1 } => {
                if let Some(a) = amount0 {
                    m.push(("amount0", num(a.0)));
                }
                if let Some(a) = amount1 {
                    m.push(("amount1", num(a.0)));
                }
                m.push(("liquidity", num(*liquidity)));
            }
            EventBody::Swap { in_token, amount_in, amount_out } => {
                m.push(("in_token", Value::from(in_token.as_str())));
                m.push(("amount_in", num(amount_in.0)));
                if let Some(a) = amount_out {
                    m.push(("amount_out", num(a.0)));
                }
            }
            EventBody::Transfer { from, to, liquidity } => {
                m.push(("from", Value::from(from.as_str())));
                m.push(("to", Value::from(to.as_str())));
                m.push(("liquidity", num(*liquidity)));
            }
            EventBody::Sync { reserve0, reserve1 } => {
                m.push(("reserve0", num(reserve0.0)));
                m.push(("reserve1", num(reserve1.0)));
            }
        }
        let mut out = String::from("{");
        for (i, (k, v)) in m.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&serde_json::to_string(k).expect("string key"));
            out.push(':');
            out.push_str(&v.to_string());
        }
        out.push('}');
        out
    }
}

struct Record<'a> {
    line: usize,
    map: &'a Map<String, Value>,
}

impl Record<'_> {
    fn err(&self, reason: impl Into<String>) -> IngestError {
        IngestError::MalformedRecord { line: self.line, reason: reason.into() }
    }

    fn field(&self, name: &str) -> Option<&Value> {
        self.map.get(name).filter(|v| !v.is_null())
    }

    fn opt_u128(&self, name: &str) -> Result<Option<u128>, IngestError> {
        let Some(v) = self.field(name) else { return Ok(None) };
        let text = match v {
            Value::Number(n) => n.to_string(),
            Value::String(s) => s.trim().to_string(),
            _ => return Err(self.err(format!("`{name}` must be a non-negative integer"))),
        };
        text.parse::<u128>()
            .map(Some)
            .map_err(|_| self.err(format!("`{name}` must be a non-negative integer, got {text}")))
    }

    fn u128(&self, name: &str) -> Result<u128, IngestError> {
        self.opt_u128(name)?.ok_or_else(|| self.err(format!("missing `{name}`")))
    }

    fn u64(&self, name: &str) -> Result<u64, IngestError> {
        let v = self.u128(name)?;
        u64::try_from(v).map_err(|_| self.err(format!("`{name}` out of range")))
    }

    fn u32(&self, name: &str) -> Result<u32, IngestError> {
        let v = self.u128(name)?;
        u32::try_from(v).map_err(|_| self.err(format!("`{name}` out of range")))
    }

    fn opt_str(&self, name: &str) -> Result<Option<&str>, IngestError> {
        match self.field(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(format!("`{name}` must be a string"))),
        }
    }

    fn str(&self, name: &str) -> Result<&str, IngestError> {
        self.opt_str(name)?.ok_or_else(|| self.err(format!("missing `{name}`")))
    }
}

/// Parses one JSON-lines record. `line` is 1-based and only used in errors.
pub fn parse_record(text: &str, line: usize) -> Result<Event, IngestError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| IngestError::MalformedRecord { line, reason: e.to_string() })?;
    let Value::Object(map) = value else {
        return Err(IngestError::MalformedRecord { line, reason: "record is not an object".into() });
    };
    let r = Record { line, map: &map };
    let kind_text = r.str("kind")?;
    let kind = EventKind::parse(kind_text).ok_or_else(|| r.err(format!("unknown kind `{kind_text}`")))?;
    let key = EventKey::new(r.u64("block")?, r.u32("tx_index")?, r.u32("log_index")?, r.u64("ts")?);
    let pool = PoolId::new(r.str("pool")?);
    let actor = Address::new(r.opt_str("actor")?.unwrap_or_default());
    let body = match kind {
        EventKind::PoolCreated => EventBody::PoolCreated {
            token0: r.opt_str("token0")?.map(TokenId::new),
            token1: r.opt_str("token1")?.map(TokenId::new),
        },
        EventKind::Mint => EventBody::Mint {
            amount0: TokenAmount(r.u128("amount0")?),
            amount1: TokenAmount(r.u128("amount1")?),
            liquidity: r.opt_u128("liquidity")?,
        },
        EventKind::Burn => EventBody::Burn {
            liquidity: r.u128("liquidity")?,
            amount0: r.opt_u128("amount0")?.map(TokenAmount),
            amount1: r.opt_u128("amount1")?.map(TokenAmount),
        },
        EventKind::Swap => EventBody::Swap {
            in_token: r.str("in_token")?.to_string(),
            amount_in: TokenAmount(r.u128("amount_in")?),
            amount_out: r.opt_u128("amount_out")?.map(TokenAmount),
        },
        EventKind::Transfer => {
            let from = Address::new(r.str("from")?);
            let to = Address::new(r.str("to")?);
            if from == to {
                return Err(r.err("transfer `from` equals `to`"));
            }
            EventBody::Transfer { from, to, liquidity: r.u128("liquidity")? }
        }
        EventKind::Sync => EventBody::Sync {
            reserve0: TokenAmount(r.u128("reserve0")?),
            reserve1: TokenAmount(r.u128("reserve1")?),
        },
    };
    Ok(Event { key, pool, actor, body })
}

/// Reads a whole log, then returns events in key order.
///
/// Rejects duplicate keys and timestamps that decrease along the sorted
/// order. Blank lines are skipped.
pub fn parse_event_log<R: BufRead>(reader: R) -> Result<Vec<Event>, IngestError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io { path: "<event log>".into(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_record(&line, i + 1)?);
    }
    order_events(events)
}

/// Sorts events by key and checks key uniqueness and timestamp monotonicity.
pub fn order_events(mut events: Vec<Event>) -> Result<Vec<Event>, IngestError> {
    events.sort_by_key(|e| e.key);
    for pair in events.windows(2) {
        let (prev, cur) = (&pair[0].key, &pair[1].key);
        if prev == cur {
            return Err(IngestError::DuplicateKey(*cur));
        }
        if cur.timestamp < prev.timestamp {
            return Err(IngestError::NonMonotonicTimestamp {
                key: *cur,
                ts: cur.timestamp,
                prev_ts: prev.timestamp,
            });
        }
    }
    Ok(events)
}

/// Writes events as JSON lines.
pub fn write_event_log<W: Write>(mut out: W, events: &[Event]) -> std::io::Result<()> {
    for e in events {
        writeln!(out, "{}", e.to_json_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(block: u64, kind: &str, extra: &str) -> String {
        format!(
            r#"{{"block":{block},"tx_index":0,"log_index":0,"ts":{},"pool":"P","kind":"{kind}","actor":"0xa"{extra}}}"#,
            1_600_000_000 + block
        )
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_event_log("".as_bytes()).unwrap().is_empty());
        assert!(parse_event_log("\n  \n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn records_are_sorted() {
        let log = format!(
            "{}\n{}\n",
            line(5, "Swap", r#","in_token":"0","amount_in":10"#),
            line(2, "Mint", r#","amount0":4,"amount1":"9""#)
        );
        let events = parse_event_log(log.as_bytes()).unwrap();
        assert_eq!(events.iter().map(|e| e.key.block).collect::<Vec<_>>(), vec![2, 5]);
        assert_eq!(
            events[0].body,
            EventBody::Mint { amount0: TokenAmount(4), amount1: TokenAmount(9), liquidity: None }
        );
    }

    #[test]
    fn missing_kind_is_malformed() {
        let log = r#"{"block":1,"tx_index":0,"log_index":0,"ts":1,"pool":"P"}"#;
        match parse_event_log(log.as_bytes()) {
            Err(IngestError::MalformedRecord { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_and_bad_line_numbers() {
        let log = format!("{}\n{}\n", line(1, "Mint", r#","amount0":1,"amount1":1"#), line(2, "Flash", ""));
        match parse_event_log(log.as_bytes()) {
            Err(IngestError::MalformedRecord { line: 2, reason }) => assert!(reason.contains("Flash")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let l = line(1, "Mint", r#","amount0":1,"amount1":1"#);
        let log = format!("{l}\n{l}\n");
        assert!(matches!(parse_event_log(log.as_bytes()), Err(IngestError::DuplicateKey(_))));
    }

    #[test]
    fn backwards_timestamp_rejected() {
        let a = r#"{"block":1,"tx_index":0,"log_index":0,"ts":50,"pool":"P","kind":"Sync","reserve0":1,"reserve1":1}"#;
        let b = r#"{"block":2,"tx_index":0,"log_index":0,"ts":40,"pool":"P","kind":"Sync","reserve0":1,"reserve1":1}"#;
        let log = format!("{a}\n{b}\n");
        assert!(matches!(
            parse_event_log(log.as_bytes()),
            Err(IngestError::NonMonotonicTimestamp { ts: 40, prev_ts: 50, .. })
        ));
    }

    #[test]
    fn self_transfer_rejected() {
        let l = line(1, "Transfer", r#","from":"0xb","to":"0xb","liquidity":3"#);
        assert!(matches!(parse_record(&l, 1), Err(IngestError::MalformedRecord { .. })));
    }

    #[test]
    fn huge_amounts_survive() {
        let big = u128::MAX;
        let l = line(1, "Sync", &format!(r#","reserve0":{big},"reserve1":"{big}""#));
        let e = parse_record(&l, 1).unwrap();
        assert_eq!(e.body, EventBody::Sync { reserve0: TokenAmount(big), reserve1: TokenAmount(big) });
        assert_eq!(parse_record(&e.to_json_line(), 1).unwrap(), e);
    }

    #[test]
    fn negative_amount_rejected() {
        let l = line(1, "Mint", r#","amount0":-1,"amount1":1"#);
        assert!(parse_record(&l, 1).is_err());
    }

    #[test]
    fn unknown_fields_ignored() {
        let l = line(1, "Mint", r#","amount0":1,"amount1":1,"gas":21000"#);
        assert!(parse_record(&l, 1).is_ok());
    }

    #[test]
    fn zero_address_forms() {
        assert!(Address::zero().is_zero());
        assert!(Address::new("0x0").is_zero());
        assert!(!Address::new("0x01").is_zero());
    }
}
