//! Seeded synthetic market: token price paths, pools kept at those prices by
//! an arbitrageur, noise traders, liquidity providers and planted
//! cross-pool liquidity movements.

use std::collections::BTreeMap;

use lpscope::amm::{FeeParams, Pool, PoolId, Side, TokenAmount, TokenId};
use lpscope::ingest::{Address, Event, EventBody, EventKey, PoolInfo, PriceFeed, TokenRegistry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PricePath {
    Constant { usd: f64 },
    /// Geometric Brownian motion; `vol` and `drift` are per day.
    Gbm { usd: f64, vol: f64, #[serde(default)] drift: f64 },
    /// Exponential fall to `usd / factor` by the last day.
    Decay { usd: f64, factor: f64 },
}

impl PricePath {
    fn start(&self) -> f64 {
        match *self {
            PricePath::Constant { usd } | PricePath::Gbm { usd, .. } | PricePath::Decay { usd, .. } => usd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSpec {
    pub id: String,
    #[serde(default = "default_decimals")]
    pub decimals: u8,
    pub price: PricePath,
}

fn default_decimals() -> u8 {
    18
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub token_a: String,
    pub token_b: String,
    pub liquidity_usd: f64,
    #[serde(default = "one")]
    pub providers: usize,
    /// Noise trades per day; each is followed by an arbitrage trade.
    #[serde(default)]
    pub swaps_per_day: f64,
    /// Noise trade size as a fraction of the input reserve.
    #[serde(default = "default_swap_frac")]
    pub swap_frac: f64,
    #[serde(default)]
    pub mints_per_day: f64,
    #[serde(default)]
    pub burns_per_day: f64,
    #[serde(default)]
    pub transfers_per_day: f64,
}

fn one() -> usize {
    1
}

fn default_swap_frac() -> f64 {
    1e-3
}

/// Addresses that withdraw from `from` and deposit into `to` shortly after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoverSpec {
    pub from: [String; 2],
    pub to: [String; 2],
    #[serde(default)]
    pub per_day: f64,
    #[serde(default)]
    pub burst_day: Option<u64>,
    #[serde(default)]
    pub burst_count: usize,
    #[serde(default = "default_mover_usd")]
    pub size_usd: f64,
}

fn default_mover_usd() -> f64 {
    1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_start")]
    pub start_ts: u64,
    pub days: u64,
    #[serde(default = "default_ticks")]
    pub ticks_per_day: u64,
    #[serde(default = "default_block_time")]
    pub block_time: u64,
    #[serde(default = "default_weth")]
    pub weth: String,
    pub eth_usd: PricePath,
    #[serde(default)]
    pub tokens: Vec<TokenSpec>,
    pub pools: Vec<PoolSpec>,
    #[serde(default)]
    pub movers: Vec<MoverSpec>,
}

fn default_start() -> u64 {
    1_600_041_600 // 2020-09-14T00:00:00Z
}

fn default_ticks() -> u64 {
    24
}

fn default_block_time() -> u64 {
    13
}

fn default_weth() -> String {
    "WETH".into()
}

/// Files produced by [`generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub events: Vec<Event>,
    pub feed: PriceFeed,
    pub registry: TokenRegistry,
    /// Planted movements as (address, from pool, to pool).
    pub planted: Vec<(Address, PoolId, PoolId)>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("scenario: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(format!("invalid scenario: {m}")));
        if self.days == 0 || self.ticks_per_day == 0 || self.block_time == 0 {
            return bad("days, ticks_per_day and block_time must be positive".into());
        }
        if 86_400 % self.ticks_per_day != 0 {
            return bad("ticks_per_day must divide 86400".into());
        }
        if self.pools.is_empty() {
            return bad("no pools".into());
        }
        for t in &self.tokens {
            if t.id == self.weth {
                return bad(format!("{} is priced by the eth_usd path", t.id));
            }
            if !(t.price.start() > 0.0) || t.decimals > 30 {
                return bad(format!("token {}: price must be positive and decimals at most 30", t.id));
            }
        }
        let known = |id: &str| id == self.weth || self.tokens.iter().any(|t| t.id == id);
        let mut pairs = std::collections::BTreeSet::new();
        for p in &self.pools {
            if !known(&p.token_a) || !known(&p.token_b) || p.token_a == p.token_b {
                return bad(format!("pool {}/{} uses an unknown or repeated token", p.token_a, p.token_b));
            }
            if !(p.liquidity_usd > 0.0) || p.providers == 0 || !(p.swap_frac > 0.0 && p.swap_frac < 0.5) {
                return bad(format!("pool {}/{}: liquidity, providers and swap_frac out of range", p.token_a, p.token_b));
            }
            if !pairs.insert(pool_id(&p.token_a, &p.token_b)) {
                return bad(format!("pool {}/{} listed twice", p.token_a, p.token_b));
            }
        }
        for m in &self.movers {
            for pair in [&m.from, &m.to] {
                if !pairs.contains(&pool_id(&pair[0], &pair[1])) {
                    return bad(format!("mover references missing pool {}/{}", pair[0], pair[1]));
                }
            }
            if pool_id(&m.from[0], &m.from[1]) == pool_id(&m.to[0], &m.to[1]) {
                return bad("mover source and destination are the same pool".into());
            }
        }
        Ok(())
    }

    /// Built-in scenarios.
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = match name {
            "minimal" => PRESET_MINIMAL,
            "stable" => PRESET_STABLE,
            "exotic" => PRESET_EXOTIC,
            "market" => PRESET_MARKET,
            other => return Err(CliError::Input(format!("unknown preset {other:?}"))),
        };
        Self::from_toml(text)
    }
}

pub const PRESET_MINIMAL: &str = r#"
days = 1
eth_usd = { kind = "constant", usd = 400.0 }
tokens = [{ id = "DAI", price = { kind = "constant", usd = 1.0 } }]
pools = [{ token_a = "DAI", token_b = "WETH", liquidity_usd = 1000000.0 }]
"#;

pub const PRESET_STABLE: &str = r#"
days = 40
eth_usd = { kind = "constant", usd = 400.0 }
tokens = [
  { id = "USDC", decimals = 6, price = { kind = "constant", usd = 1.0 } },
  { id = "USDT", decimals = 6, price = { kind = "constant", usd = 1.0 } },
]
pools = [
  { token_a = "USDC", token_b = "WETH", liquidity_usd = 50000000.0 },
  { token_a = "USDT", token_b = "WETH", liquidity_usd = 50000000.0 },
  { token_a = "USDC", token_b = "USDT", liquidity_usd = 20000000.0, swaps_per_day = 30.0, swap_frac = 0.0001 },
]
"#;

pub const PRESET_EXOTIC: &str = r#"
days = 40
eth_usd = { kind = "constant", usd = 400.0 }
tokens = [{ id = "KIMCHI", price = { kind = "decay", usd = 10.0, factor = 100.0 } }]
pools = [{ token_a = "KIMCHI", token_b = "WETH", liquidity_usd = 5000000.0, swaps_per_day = 24.0, swap_frac = 0.0001 }]
"#;

pub const PRESET_MARKET: &str = r#"
days = 40
eth_usd = { kind = "gbm", usd = 400.0, vol = 0.04 }
tokens = [
  { id = "USDC", decimals = 6, price = { kind = "constant", usd = 1.0 } },
  { id = "USDT", decimals = 6, price = { kind = "constant", usd = 1.0 } },
  { id = "DAI", price = { kind = "constant", usd = 1.0 } },
  { id = "UNI", price = { kind = "gbm", usd = 4.0, vol = 0.06 } },
  { id = "LINK", price = { kind = "gbm", usd = 11.0, vol = 0.05 } },
  { id = "DPI", price = { kind = "gbm", usd = 80.0, vol = 0.05 } },
  { id = "SUSHI", price = { kind = "gbm", usd = 2.0, vol = 0.08 } },
  { id = "MOON", price = { kind = "decay", usd = 5.0, factor = 300.0 } },
  { id = "KIMCHI", price = { kind = "decay", usd = 20.0, factor = 500.0 } },
]
pools = [
  { token_a = "USDC", token_b = "WETH", liquidity_usd = 80000000.0, providers = 6, swaps_per_day = 48.0, mints_per_day = 6.0, burns_per_day = 5.0, transfers_per_day = 1.0 },
  { token_a = "USDT", token_b = "WETH", liquidity_usd = 60000000.0, providers = 6, swaps_per_day = 48.0, mints_per_day = 6.0, burns_per_day = 5.0 },
  { token_a = "DAI", token_b = "WETH", liquidity_usd = 50000000.0, providers = 5, swaps_per_day = 36.0, mints_per_day = 5.0, burns_per_day = 4.0 },
  { token_a = "UNI", token_b = "WETH", liquidity_usd = 30000000.0, providers = 4, swaps_per_day = 36.0, mints_per_day = 4.0, burns_per_day = 3.0 },
  { token_a = "LINK", token_b = "WETH", liquidity_usd = 20000000.0, providers = 4, swaps_per_day = 24.0, mints_per_day = 3.0, burns_per_day = 3.0 },
  { token_a = "DPI", token_b = "WETH", liquidity_usd = 5000000.0, providers = 3, swaps_per_day = 12.0, mints_per_day = 2.0, burns_per_day = 2.0 },
  { token_a = "SUSHI", token_b = "WETH", liquidity_usd = 10000000.0, providers = 3, swaps_per_day = 24.0, mints_per_day = 2.0, burns_per_day = 2.0 },
  { token_a = "MOON", token_b = "WETH", liquidity_usd = 2000000.0, providers = 2, swaps_per_day = 12.0, mints_per_day = 1.0, burns_per_day = 1.0 },
  { token_a = "KIMCHI", token_b = "WETH", liquidity_usd = 3000000.0, providers = 2, swaps_per_day = 12.0, mints_per_day = 1.0, burns_per_day = 1.0 },
  { token_a = "KIMCHI", token_b = "SUSHI", liquidity_usd = 1000000.0, providers = 2, swaps_per_day = 6.0 },
  { token_a = "USDC", token_b = "USDT", liquidity_usd = 20000000.0, providers = 3, swaps_per_day = 24.0, swap_frac = 0.0001, mints_per_day = 1.0, burns_per_day = 1.0 },
  { token_a = "DAI", token_b = "USDT", liquidity_usd = 10000000.0, providers = 2, swaps_per_day = 12.0, swap_frac = 0.0001 },
  { token_a = "DAI", token_b = "USDC", liquidity_usd = 10000000.0, providers = 2, swaps_per_day = 12.0, swap_frac = 0.0001 },
]
movers = [
  { from = ["DAI", "WETH"], to = ["SUSHI", "WETH"], per_day = 2.0, burst_day = 20, burst_count = 40 },
  { from = ["SUSHI", "WETH"], to = ["DAI", "WETH"], per_day = 1.0 },
  { from = ["USDC", "WETH"], to = ["UNI", "WETH"], per_day = 1.0 },
]
"#;

pub fn pool_id(a: &str, b: &str) -> PoolId {
    let (a, b) = (TokenId::from(a), TokenId::from(b));
    if a < b {
        PoolId::for_pair(&a, &b)
    } else {
        PoolId::for_pair(&b, &a)
    }
}

fn address(n: u64) -> Address {
    Address::new(format!("0x{n:040x}"))
}

/// Token amount that moves the pool to `target` (raw token1 per raw token0)
/// with one swap, and its input side. `None` when already within 1e-9.
fn rebalance(pool: &Pool, target: f64) -> Option<(Side, u128)> {
    let (a, b) = (pool.reserve0.0 as f64, pool.reserve1.0 as f64);
    let price = b / a;
    if ((price - target) / target).abs() < 1e-9 {
        return None;
    }
    // adding x of the input token: (x_in + r d)(x_in + d) = x_in y_out / p
    // with p the target quoted as output per input
    let (side, x, p) = if price > target { (Side::Token0, a, target) } else { (Side::Token1, b, 1.0 / target) };
    let y = if side == Side::Token0 { b } else { a };
    let r = pool.fees.r1();
    let qb = (1.0 + r) * x;
    let qc = x * x - x * y / p;
    let d = -2.0 * qc / (qb + (qb * qb - 4.0 * r * qc).sqrt());
    let d = d.round();
    (d >= 1.0 && d.is_finite()).then_some((side, d as u128))
}

struct PoolState {
    spec_idx: usize,
    pool: Pool,
    decimals: (u8, u8),
    providers: Vec<Address>,
    balances: BTreeMap<Address, u128>,
}

enum MoverState {
    Holding { burn_tick: u64 },
    Withdrawn { deposit_tick: u64 },
}

struct Mover {
    address: Address,
    from: usize,
    to: usize,
    state: MoverState,
    size_usd: f64,
}

struct Generator<'a> {
    sc: &'a Scenario,
    rng: ChaCha8Rng,
    prices: BTreeMap<String, f64>,
    eth_usd: f64,
    pools: Vec<PoolState>,
    next_address: u64,
}

/// One tick's events before keys are assigned.
type Pending = Vec<(PoolId, Address, EventBody)>;

impl Generator<'_> {
    fn usd(&self, token: &TokenId) -> f64 {
        if token.as_str() == self.sc.weth {
            self.eth_usd
        } else {
            self.prices[token.as_str()]
        }
    }

    /// Target raw token1 per raw token0.
    fn target(&self, st: &PoolState) -> f64 {
        let p0 = self.usd(&st.pool.token0);
        let p1 = self.usd(&st.pool.token1);
        (p0 / p1) * 10f64.powi(st.decimals.1 as i32 - st.decimals.0 as i32)
    }

    fn fresh_address(&mut self) -> Address {
        self.next_address += 1;
        address(self.next_address)
    }

    fn step_prices(&mut self, tick: u64) {
        let ticks = (self.sc.days * self.sc.ticks_per_day) as f64;
        let dt = 1.0 / self.sc.ticks_per_day as f64;
        let step = |path: &PricePath, current: f64, rng: &mut ChaCha8Rng| -> f64 {
            match *path {
                PricePath::Constant { usd } => usd,
                PricePath::Gbm { vol, drift, .. } => {
                    let z: f64 = StandardNormal.sample(rng);
                    current * ((drift - 0.5 * vol * vol) * dt + vol * dt.sqrt() * z).exp()
                }
                PricePath::Decay { usd, factor } => usd * factor.powf(-(tick as f64) / (ticks - 1.0).max(1.0)),
            }
        };
        self.eth_usd = step(&self.sc.eth_usd, self.eth_usd, &mut self.rng);
        for t in &self.sc.tokens {
            let cur = self.prices[&t.id];
            let next = step(&t.price, cur, &mut self.rng);
            self.prices.insert(t.id.clone(), next);
        }
    }

    fn arbitrage(&mut self, i: usize, out: &mut Pending) {
        let target = self.target(&self.pools[i]);
        let st = &mut self.pools[i];
        if st.pool.is_empty() {
            return;
        }
        if let Some((side, amount)) = rebalance(&st.pool, target) {
            if st.pool.swap_side(side, TokenAmount(amount)).is_ok() {
                let token = st.pool.token(side).to_string();
                out.push((st.pool.id.clone(), Address::new("0xarb"), swap_body(token, amount)));
            }
        }
    }

    fn noise_swap(&mut self, i: usize, out: &mut Pending) {
        let frac = self.sc.pools[self.pools[i].spec_idx].swap_frac;
        let side = if self.rng.random_bool(0.5) { Side::Token0 } else { Side::Token1 };
        let scale: f64 = self.rng.random_range(0.5..1.5);
        let st = &mut self.pools[i];
        let amount = (st.pool.reserve(side).0 as f64 * frac * scale).round() as u128;
        if amount > 0 && st.pool.swap_side(side, TokenAmount(amount)).is_ok() {
            let token = st.pool.token(side).to_string();
            out.push((st.pool.id.clone(), Address::new("0xnoise"), swap_body(token, amount)));
        }
        self.arbitrage(i, out);
    }

    /// Deposit worth about `usd` at the pool's current ratio.
    fn deposit(&mut self, i: usize, who: &Address, usd: f64, out: &mut Pending) -> bool {
        let (p0, p1) = (self.usd(&self.pools[i].pool.token0), self.usd(&self.pools[i].pool.token1));
        let st = &mut self.pools[i];
        let (amount0, amount1) = if st.pool.is_empty() {
            let a = (usd / 2.0 / p0 * 10f64.powi(st.decimals.0 as i32)).round() as u128;
            let b = (usd / 2.0 / p1 * 10f64.powi(st.decimals.1 as i32)).round() as u128;
            (a, b)
        } else {
            let value = st.pool.reserve0.0 as f64 / 10f64.powi(st.decimals.0 as i32) * p0
                + st.pool.reserve1.0 as f64 / 10f64.powi(st.decimals.1 as i32) * p1;
            let l = ((usd / value) * st.pool.total_liquidity as f64).floor() as u128;
            if l == 0 {
                return false;
            }
            // least amounts that buy `l` liquidity tokens
            match st.pool.quote_deposit(l) {
                Ok((a, b)) => (a.0, b.0),
                Err(_) => return false,
            }
        };
        match st.pool.add_liquidity(TokenAmount(amount0), TokenAmount(amount1)) {
            Ok(m) => {
                *st.balances.entry(who.clone()).or_default() += m.liquidity;
                out.push((
                    st.pool.id.clone(),
                    who.clone(),
                    EventBody::Mint { amount0: TokenAmount(amount0), amount1: TokenAmount(amount1), liquidity: None },
                ));
                true
            }
            Err(_) => false,
        }
    }

    fn withdraw(&mut self, i: usize, who: &Address, liquidity: u128, out: &mut Pending) -> bool {
        let st = &mut self.pools[i];
        let have = st.balances.get(who).copied().unwrap_or(0);
        // keep the pool funded so prices stay defined
        if liquidity == 0 || liquidity > have || liquidity >= st.pool.total_liquidity {
            return false;
        }
        match st.pool.burn(liquidity, have) {
            Ok(_) => {
                *st.balances.get_mut(who).expect("has balance") -= liquidity;
                out.push((st.pool.id.clone(), who.clone(), EventBody::Burn { liquidity, amount0: None, amount1: None }));
                true
            }
            Err(_) => false,
        }
    }

    fn count(&mut self, per_day: f64) -> u64 {
        let rate = per_day / self.sc.ticks_per_day as f64;
        let whole = rate.floor();
        whole as u64 + u64::from(self.rng.random_bool(rate - whole))
    }

    fn provider_activity(&mut self, i: usize, out: &mut Pending) {
        let spec = self.sc.pools[self.pools[i].spec_idx].clone();
        for _ in 0..self.count(spec.mints_per_day) {
            let who = self.pools[i].providers[self.rng.random_range(0..spec.providers)].clone();
            let usd = spec.liquidity_usd / spec.providers as f64 * self.rng.random_range(0.01..0.1);
            self.deposit(i, &who, usd, out);
        }
        for _ in 0..self.count(spec.burns_per_day) {
            let who = self.pools[i].providers[self.rng.random_range(0..spec.providers)].clone();
            let have = self.pools[i].balances.get(&who).copied().unwrap_or(0);
            let frac: f64 = self.rng.random_range(0.05..0.5);
            self.withdraw(i, &who, (have as f64 * frac) as u128, out);
        }
        for _ in 0..self.count(spec.transfers_per_day) {
            if spec.providers < 2 {
                break;
            }
            let a = self.rng.random_range(0..spec.providers);
            let b = (a + self.rng.random_range(1..spec.providers)) % spec.providers;
            let (from, to) = (self.pools[i].providers[a].clone(), self.pools[i].providers[b].clone());
            let st = &mut self.pools[i];
            let have = st.balances.get(&from).copied().unwrap_or(0);
            let amount = have / 4;
            if amount > 0 {
                *st.balances.get_mut(&from).expect("has balance") -= amount;
                *st.balances.entry(to.clone()).or_default() += amount;
                out.push((st.pool.id.clone(), from.clone(), EventBody::Transfer { from, to, liquidity: amount }));
            }
        }
    }
}

fn swap_body(token: String, amount: u128) -> EventBody {
    EventBody::Swap { in_token: token, amount_in: TokenAmount(amount), amount_out: None }
}

/// Runs a scenario. `seed` is used when the scenario does not set one.
pub fn generate(sc: &Scenario, seed: u64) -> Result<Generated, CliError> {
    sc.validate()?;
    let seed = sc.seed.unwrap_or(seed);
    let decimals: BTreeMap<&str, u8> =
        sc.tokens.iter().map(|t| (t.id.as_str(), t.decimals)).chain([(sc.weth.as_str(), 18)]).collect();
    let mut registry = TokenRegistry::new();
    let mut pools = Vec::new();
    let mut next_address = 0;
    for (idx, p) in sc.pools.iter().enumerate() {
        let id = pool_id(&p.token_a, &p.token_b);
        let pool = Pool::new(id.clone(), p.token_a.as_str().into(), p.token_b.as_str().into(), FeeParams::default())
            .map_err(|e| CliError::Input(format!("invalid scenario: {e}")))?;
        let dec = (decimals[pool.token0.as_str()], decimals[pool.token1.as_str()]);
        registry
            .insert(PoolInfo { pool: id, token0: pool.token0.clone(), token1: pool.token1.clone(), decimals0: dec.0, decimals1: dec.1 })
            .map_err(CliError::Input)?;
        let providers = (0..p.providers)
            .map(|_| {
                next_address += 1;
                address(next_address)
            })
            .collect();
        pools.push(PoolState { spec_idx: idx, pool, decimals: dec, providers, balances: BTreeMap::new() });
    }

    let mut g = Generator {
        sc,
        rng: ChaCha8Rng::seed_from_u64(seed),
        prices: sc.tokens.iter().map(|t| (t.id.clone(), t.price.start())).collect(),
        eth_usd: sc.eth_usd.start(),
        pools,
        next_address,
    };
    let index_of = |pair: &[String; 2]| sc.pools.iter().position(|p| pool_id(&p.token_a, &p.token_b) == pool_id(&pair[0], &pair[1])).expect("validated");

    let ticks = sc.days * sc.ticks_per_day;
    let tick_secs = 86_400 / sc.ticks_per_day;
    let blocks_per_tick = (tick_secs / sc.block_time).max(1);
    let mut movers: Vec<Mover> = Vec::new();
    let mut planted = Vec::new();
    let mut events = Vec::new();
    let mut feed = Vec::new();

    for tick in 0..ticks {
        let mut pending: Pending = Vec::new();
        if tick > 0 {
            g.step_prices(tick);
        }
        feed.push((sc.start_ts + tick * tick_secs, g.eth_usd));
        if tick == 0 {
            for i in 0..g.pools.len() {
                let id = g.pools[i].pool.id.clone();
                let (t0, t1) = (g.pools[i].pool.token0.clone(), g.pools[i].pool.token1.clone());
                pending.push((id, Address::new("0xfactory"), EventBody::PoolCreated { token0: Some(t0), token1: Some(t1) }));
                let spec = &sc.pools[g.pools[i].spec_idx];
                let share = spec.liquidity_usd / spec.providers as f64;
                for k in 0..spec.providers {
                    let who = g.pools[i].providers[k].clone();
                    g.deposit(i, &who, share, &mut pending);
                }
            }
        } else {
            for i in 0..g.pools.len() {
                g.arbitrage(i, &mut pending);
            }
        }

        // plant movers: open a position now, move it later
        let day = tick / sc.ticks_per_day;
        for m in &sc.movers {
            let mut n = g.count(m.per_day);
            if m.burst_day == Some(day) && tick % sc.ticks_per_day == 0 {
                n += m.burst_count as u64;
            }
            for _ in 0..n {
                let who = g.fresh_address();
                let (from, to) = (index_of(&m.from), index_of(&m.to));
                if g.deposit(from, &who, m.size_usd, &mut pending) {
                    // withdraw a few ticks later, redeposit the tick after
                    let delay = g.rng.random_range(1..=3);
                    movers.push(Mover { address: who, from, to, state: MoverState::Holding { burn_tick: tick + delay }, size_usd: m.size_usd });
                }
            }
        }

        for i in 0..g.pools.len() {
            let spec_idx = g.pools[i].spec_idx;
            for _ in 0..g.count(sc.pools[spec_idx].swaps_per_day) {
                g.noise_swap(i, &mut pending);
            }
            if tick > 0 {
                g.provider_activity(i, &mut pending);
            }
        }

        let mut still = Vec::new();
        for mut m in movers.drain(..) {
            match m.state {
                MoverState::Holding { burn_tick } if burn_tick == tick => {
                    let bal = g.pools[m.from].balances.get(&m.address).copied().unwrap_or(0);
                    if g.withdraw(m.from, &m.address, bal, &mut pending) {
                        m.state = MoverState::Withdrawn { deposit_tick: tick + 1 };
                        still.push(m);
                    }
                }
                MoverState::Withdrawn { deposit_tick } if deposit_tick == tick => {
                    if g.deposit(m.to, &m.address, m.size_usd, &mut pending) {
                        planted.push((m.address, g.pools[m.from].pool.id.clone(), g.pools[m.to].pool.id.clone()));
                    }
                }
                _ => still.push(m),
            }
        }
        movers = still;

        let base_block = 1 + tick * blocks_per_tick;
        let n = pending.len() as u64;
        for (j, (pool, actor, body)) in pending.into_iter().enumerate() {
            let block = base_block + (j as u64 * blocks_per_tick) / n.max(1);
            let ts = sc.start_ts + tick * tick_secs + (block - base_block) * sc.block_time;
            events.push(Event { key: EventKey::new(block, j as u32, 0, ts), pool, actor, body });
        }
    }
    let feed = PriceFeed::new(feed).map_err(|e| CliError::Internal(format!("generated feed: {e}")))?;
    Ok(Generated { events, feed, registry, planted })
}
