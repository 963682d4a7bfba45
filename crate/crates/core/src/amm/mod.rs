//! Constant-product liquidity pool.
//!
//! Reserves and liquidity-token supply are held as `u128` base units. Every
//! product or quotient that could exceed 128 bits is evaluated in arbitrary
//! precision and floored, the way deployed pools round. The [`exact`] module
//! carries the same transitions over exact rationals for invariant checks.

pub mod exact;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmmError {
    #[error("pool tokens must differ (got {0} twice)")]
    DuplicateTokens(TokenId),
    #[error("pool {0} already exists")]
    PoolExists(PoolId),
    #[error("pool already holds liquidity")]
    PoolNotEmpty,
    #[error("pool holds no liquidity")]
    EmptyPool,
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("deposit too small to mint any liquidity tokens")]
    ZeroLiquidityMinted,
    #[error("burn of {requested} exceeds owner balance {balance}")]
    InsufficientLiquidityBalance { requested: u128, balance: u128 },
    #[error("swap output rounds to zero")]
    InsufficientOutput,
    #[error("token {0} is not traded in this pool")]
    UnknownToken(TokenId),
    #[error("invalid fee ratio {num}/{den}")]
    InvalidFee { num: u64, den: u64 },
    #[error("arithmetic overflow")]
    Overflow,
}

/// Token identifier (contract address or ticker).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub String);

impl TokenId {
    pub fn new(s: impl Into<String>) -> Self {
        TokenId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TokenId {
    fn from(s: &str) -> Self {
        TokenId(s.to_string())
    }
}

/// Opaque pool identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoolId(pub String);

impl PoolId {
    pub fn new(s: impl Into<String>) -> Self {
        PoolId(s.into())
    }

    /// Identifier derived from a canonically ordered token pair.
    pub fn for_pair(token0: &TokenId, token1: &TokenId) -> Self {
        PoolId(format!("{token0}-{token1}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PoolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PoolId {
    fn from(s: &str) -> Self {
        PoolId(s.to_string())
    }
}

/// Amount of a token in base units. Decimals are a property of the token
/// and only matter for display and valuation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenAmount(pub u128);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    /// Value in whole tokens.
    pub fn to_units(self, decimals: u8) -> f64 {
        self.0 as f64 / 10f64.powi(decimals as i32)
    }
}

impl From<u128> for TokenAmount {
    fn from(v: u128) -> Self {
        TokenAmount(v)
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which reserve a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Token0,
    Token1,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Token0 => Side::Token1,
            Side::Token1 => Side::Token0,
        }
    }
}

/// Fee ratios kept as exact fractions: `r1` scales the input that counts
/// toward the invariant, `r2` scales the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeParams {
    pub r1_num: u64,
    pub r1_den: u64,
    pub r2_num: u64,
    pub r2_den: u64,
}

impl Default for FeeParams {
    fn default() -> Self {
        FeeParams { r1_num: 997, r1_den: 1000, r2_num: 1, r2_den: 1 }
    }
}

impl FeeParams {
    pub fn new(r1_num: u64, r1_den: u64, r2_num: u64, r2_den: u64) -> Result<Self, AmmError> {
        let fees = FeeParams { r1_num, r1_den, r2_num, r2_den };
        fees.validate()?;
        Ok(fees)
    }

    /// No trading fee at all.
    pub fn fee_free() -> Self {
        FeeParams { r1_num: 1, r1_den: 1, r2_num: 1, r2_den: 1 }
    }

    pub fn validate(&self) -> Result<(), AmmError> {
        for (num, den) in [(self.r1_num, self.r1_den), (self.r2_num, self.r2_den)] {
            if num == 0 || den == 0 || num > den {
                return Err(AmmError::InvalidFee { num, den });
            }
        }
        Ok(())
    }

    pub fn r1(&self) -> f64 {
        self.r1_num as f64 / self.r1_den as f64
    }
}

/// Fee withheld from `amount_in`: `floor(amount_in * (1 - r1))`.
pub fn quote_fee(amount_in: TokenAmount, fees: &FeeParams) -> TokenAmount {
    let num = BigUint::from(amount_in.0) * BigUint::from(fees.r1_den - fees.r1_num);
    let fee = num / BigUint::from(fees.r1_den);
    // fee <= amount_in, so it always fits
    TokenAmount(fee.to_u128().expect("fee bounded by input"))
}

/// Integer floor square root.
pub fn isqrt(v: &BigUint) -> BigUint {
    v.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MintResult {
    pub liquidity: u128,
    pub amount0: TokenAmount,
    pub amount1: TokenAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurnResult {
    pub liquidity: u128,
    pub amount0: TokenAmount,
    pub amount1: TokenAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapResult {
    pub input: Side,
    pub amount_in: TokenAmount,
    pub amount_out: TokenAmount,
    /// Share of the input withheld as fee (see [`quote_fee`]).
    pub fee: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub id: PoolId,
    pub token0: TokenId,
    pub token1: TokenId,
    pub reserve0: TokenAmount,
    pub reserve1: TokenAmount,
    pub total_liquidity: u128,
    pub fees: FeeParams,
}

fn to_u128(v: BigUint) -> Result<u128, AmmError> {
    v.to_u128().ok_or(AmmError::Overflow)
}

fn big(v: u128) -> BigUint {
    BigUint::from(v)
}

impl Pool {
    /// Empty pool over a token pair; tokens are stored in lexicographic order.
    pub fn new(
        id: PoolId,
        token_a: TokenId,
        token_b: TokenId,
        fees: FeeParams,
    ) -> Result<Self, AmmError> {
        if token_a == token_b {
            return Err(AmmError::DuplicateTokens(token_a));
        }
        fees.validate()?;
        let (token0, token1) = if token_a < token_b { (token_a, token_b) } else { (token_b, token_a) };
        Ok(Pool {
            id,
            token0,
            token1,
            reserve0: TokenAmount::ZERO,
            reserve1: TokenAmount::ZERO,
            total_liquidity: 0,
            fees,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.total_liquidity == 0
    }

    pub fn reserve(&self, side: Side) -> TokenAmount {
        match side {
            Side::Token0 => self.reserve0,
            Side::Token1 => self.reserve1,
        }
    }

    pub fn token(&self, side: Side) -> &TokenId {
        match side {
            Side::Token0 => &self.token0,
            Side::Token1 => &self.token1,
        }
    }

    pub fn side_of(&self, token: &TokenId) -> Result<Side, AmmError> {
        if *token == self.token0 {
            Ok(Side::Token0)
        } else if *token == self.token1 {
            Ok(Side::Token1)
        } else {
            Err(AmmError::UnknownToken(token.clone()))
        }
    }

    /// The constant-product invariant `reserve0 * reserve1`.
    pub fn k(&self) -> BigUint {
        big(self.reserve0.0) * big(self.reserve1.0)
    }

    /// First deposit into an empty pool: mints `isqrt(amount0 * amount1)`.
    pub fn mint_initial(
        &mut self,
        amount0: TokenAmount,
        amount1: TokenAmount,
    ) -> Result<MintResult, AmmError> {
        if !self.is_empty() {
            return Err(AmmError::PoolNotEmpty);
        }
        if amount0.0 == 0 || amount1.0 == 0 {
            return Err(AmmError::ZeroAmount);
        }
        let liquidity = to_u128(isqrt(&(big(amount0.0) * big(amount1.0))))?;
        self.reserve0 = amount0;
        self.reserve1 = amount1;
        self.total_liquidity = liquidity;
        Ok(MintResult { liquidity, amount0, amount1 })
    }

    /// Deposit into a funded pool. Credits the smaller of the two proportional
    /// claims; any excess on the other side stays in the pool.
    pub fn mint(&mut self, amount0: TokenAmount, amount1: TokenAmount) -> Result<MintResult, AmmError> {
        if self.is_empty() {
            return Err(AmmError::EmptyPool);
        }
        if amount0.0 == 0 || amount1.0 == 0 {
            return Err(AmmError::ZeroAmount);
        }
        let supply = big(self.total_liquidity);
        let claim0 = &supply * big(amount0.0) / big(self.reserve0.0);
        let claim1 = &supply * big(amount1.0) / big(self.reserve1.0);
        let liquidity = to_u128(claim0.min(claim1))?;
        if liquidity == 0 {
            return Err(AmmError::ZeroLiquidityMinted);
        }
        let reserve0 = self.reserve0.0.checked_add(amount0.0).ok_or(AmmError::Overflow)?;
        let reserve1 = self.reserve1.0.checked_add(amount1.0).ok_or(AmmError::Overflow)?;
        let total = self.total_liquidity.checked_add(liquidity).ok_or(AmmError::Overflow)?;
        self.reserve0 = TokenAmount(reserve0);
        self.reserve1 = TokenAmount(reserve1);
        self.total_liquidity = total;
        Ok(MintResult { liquidity, amount0, amount1 })
    }

    /// Dispatches to [`Pool::mint_initial`] or [`Pool::mint`] depending on supply.
    pub fn add_liquidity(
        &mut self,
        amount0: TokenAmount,
        amount1: TokenAmount,
    ) -> Result<MintResult, AmmError> {
        if self.is_empty() {
            self.mint_initial(amount0, amount1)
        } else {
            self.mint(amount0, amount1)
        }
    }

    /// Redeems `liquidity` tokens held by an owner with `owner_balance`.
    pub fn burn(&mut self, liquidity: u128, owner_balance: u128) -> Result<BurnResult, AmmError> {
        if liquidity == 0 {
            return Err(AmmError::ZeroAmount);
        }
        if liquidity > owner_balance || owner_balance > self.total_liquidity {
            return Err(AmmError::InsufficientLiquidityBalance {
                requested: liquidity,
                balance: owner_balance.min(self.total_liquidity),
            });
        }
        let (amount0, amount1) = self.quote_burn(liquidity)?;
        self.reserve0 = TokenAmount(self.reserve0.0 - amount0.0);
        self.reserve1 = TokenAmount(self.reserve1.0 - amount1.0);
        self.total_liquidity -= liquidity;
        Ok(BurnResult { liquidity, amount0, amount1 })
    }

    /// Amounts a burn of `liquidity` would return, without mutating.
    pub fn quote_burn(&self, liquidity: u128) -> Result<(TokenAmount, TokenAmount), AmmError> {
        if self.is_empty() {
            return Err(AmmError::EmptyPool);
        }
        if liquidity > self.total_liquidity {
            return Err(AmmError::InsufficientLiquidityBalance {
                requested: liquidity,
                balance: self.total_liquidity,
            });
        }
        let supply = big(self.total_liquidity);
        let amount0 = to_u128(big(self.reserve0.0) * big(liquidity) / &supply)?;
        let amount1 = to_u128(big(self.reserve1.0) * big(liquidity) / &supply)?;
        Ok((TokenAmount(amount0), TokenAmount(amount1)))
    }

    /// Least deposit that mints at least `liquidity` tokens:
    /// `ceil(liquidity * reserve / supply)` per side.
    pub fn quote_deposit(&self, liquidity: u128) -> Result<(TokenAmount, TokenAmount), AmmError> {
        if self.is_empty() {
            return Err(AmmError::EmptyPool);
        }
        let supply = big(self.total_liquidity);
        let need = |r: u128| to_u128((big(r) * big(liquidity) + &supply - 1u32) / &supply);
        Ok((TokenAmount(need(self.reserve0.0)?), TokenAmount(need(self.reserve1.0)?)))
    }

    /// Output for `amount_in` of the `input` token, without mutating.
    ///
    /// `out = floor(r2 * r1 * in * reserve_out / (reserve_in + r1 * in))`,
    /// evaluated as one integer quotient.
    pub fn quote_swap(&self, input: Side, amount_in: TokenAmount) -> Result<TokenAmount, AmmError> {
        if self.reserve0.0 == 0 || self.reserve1.0 == 0 {
            return Err(AmmError::EmptyPool);
        }
        if amount_in.0 == 0 {
            return Err(AmmError::ZeroAmount);
        }
        let f = &self.fees;
        let reserve_in = big(self.reserve(input).0);
        let reserve_out = big(self.reserve(input.other()).0);
        let in_with_fee = big(amount_in.0) * BigUint::from(f.r1_num);
        let numerator = &in_with_fee * reserve_out * BigUint::from(f.r2_num);
        let denominator = (reserve_in * BigUint::from(f.r1_den) + in_with_fee) * BigUint::from(f.r2_den);
        Ok(TokenAmount(to_u128(numerator / denominator)?))
    }

    /// Executes a swap of `amount_in` of `input_token`.
    pub fn swap(&mut self, input_token: &TokenId, amount_in: TokenAmount) -> Result<SwapResult, AmmError> {
        let side = self.side_of(input_token)?;
        self.swap_side(side, amount_in)
    }

    pub fn swap_side(&mut self, input: Side, amount_in: TokenAmount) -> Result<SwapResult, AmmError> {
        let amount_out = self.quote_swap(input, amount_in)?;
        if amount_out.0 == 0 {
            return Err(AmmError::InsufficientOutput);
        }
        let new_in = self.reserve(input).0.checked_add(amount_in.0).ok_or(AmmError::Overflow)?;
        // quote is strictly below the output reserve
        let new_out = self.reserve(input.other()).0 - amount_out.0;
        match input {
            Side::Token0 => {
                self.reserve0 = TokenAmount(new_in);
                self.reserve1 = TokenAmount(new_out);
            }
            Side::Token1 => {
                self.reserve1 = TokenAmount(new_in);
                self.reserve0 = TokenAmount(new_out);
            }
        }
        Ok(SwapResult { input, amount_in, amount_out, fee: quote_fee(amount_in, &self.fees) })
    }

    /// Overwrites reserves with externally observed values (Sync).
    pub fn sync(&mut self, reserve0: TokenAmount, reserve1: TokenAmount) {
        self.reserve0 = reserve0;
        self.reserve1 = reserve1;
    }

    /// `k` as a float, for analytics.
    pub fn k_f64(&self) -> f64 {
        self.reserve0.0 as f64 * self.reserve1.0 as f64
    }
}

/// Set of pools keyed by id, with at most one pool per unordered token pair.
#[derive(Debug, Clone, Default)]
pub struct PoolRegistry {
    pools: BTreeMap<PoolId, Pool>,
    by_pair: BTreeMap<(TokenId, TokenId), PoolId>,
}

impl PoolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates an empty pool for the pair. The id is derived from the
    /// canonical token order, so `(A, B)` and `(B, A)` name the same pool.
    pub fn create_pool(
        &mut self,
        token_a: TokenId,
        token_b: TokenId,
        fees: FeeParams,
    ) -> Result<&mut Pool, AmmError> {
        if token_a == token_b {
            return Err(AmmError::DuplicateTokens(token_a));
        }
        let (t0, t1) = if token_a < token_b { (&token_a, &token_b) } else { (&token_b, &token_a) };
        let id = PoolId::for_pair(t0, t1);
        self.insert(Pool::new(id, token_a, token_b, fees)?)
    }

    /// Registers a pool with an externally assigned id.
    pub fn insert(&mut self, pool: Pool) -> Result<&mut Pool, AmmError> {
        let pair = (pool.token0.clone(), pool.token1.clone());
        if self.by_pair.contains_key(&pair) || self.pools.contains_key(&pool.id) {
            return Err(AmmError::PoolExists(pool.id));
        }
        let id = pool.id.clone();
        self.by_pair.insert(pair, id.clone());
        Ok(self.pools.entry(id).or_insert(pool))
    }

    pub fn get(&self, id: &PoolId) -> Option<&Pool> {
        self.pools.get(id)
    }

    pub fn get_mut(&mut self, id: &PoolId) -> Option<&mut Pool> {
        self.pools.get_mut(id)
    }

    pub fn find_pair(&self, a: &TokenId, b: &TokenId) -> Option<&Pool> {
        let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.by_pair.get(&key).and_then(|id| self.pools.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pool> {
        self.pools.values()
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }
}

/// Whether `k` did not decrease between two reserve pairs.
pub fn k_nondecreasing(before: (u128, u128), after: (u128, u128)) -> bool {
    big(after.0) * big(after.1) >= big(before.0) * big(before.1)
}
