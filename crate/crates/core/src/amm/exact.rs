//! Exact-rational pool. Same transitions as [`super::Pool`] with no rounding,
//! so the real-valued pool equations hold with equality.

use dashu_int::{IBig, UBig};
use dashu_base::SquareRoot;
use dashu_ratio::RBig;

use super::{AmmError, FeeParams, Side};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExactError {
    #[error(transparent)]
    Amm(#[from] AmmError),
    #[error("initial deposit product has no rational square root")]
    IrrationalLiquidity,
    #[error("burn exceeds owner balance")]
    InsufficientLiquidityBalance,
}

pub type Rational = RBig;

/// `num / den`, reduced. Panics on a zero denominator.
pub fn rational(num: impl Into<IBig>, den: impl Into<IBig>) -> Rational {
    RBig::from_parts_signed(num.into(), den.into())
}

pub fn from_u128(v: u128) -> Rational {
    RBig::from(v)
}

fn is_positive(v: &Rational) -> bool {
    v > &RBig::ZERO
}

/// Exact square root of a non-negative rational, if one exists.
pub fn rational_sqrt(v: &Rational) -> Option<Rational> {
    if v < &RBig::ZERO {
        return None;
    }
    let num = UBig::try_from(v.numerator().clone()).ok()?;
    let den = v.denominator();
    let (rn, rd) = (num.sqrt(), den.sqrt());
    if &rn * &rn == num && &rd * &rd == *den {
        Some(RBig::from_parts(rn.into(), rd))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPool {
    pub reserve0: Rational,
    pub reserve1: Rational,
    pub total_liquidity: Rational,
    pub fees: FeeParams,
}

impl ExactPool {
    pub fn new(fees: FeeParams) -> Result<Self, AmmError> {
        fees.validate()?;
        Ok(ExactPool {
            reserve0: RBig::ZERO,
            reserve1: RBig::ZERO,
            total_liquidity: RBig::ZERO,
            fees,
        })
    }

    pub fn k(&self) -> Rational {
        &self.reserve0 * &self.reserve1
    }

    fn reserve(&self, side: Side) -> &Rational {
        match side {
            Side::Token0 => &self.reserve0,
            Side::Token1 => &self.reserve1,
        }
    }

    /// Mints `sqrt(a * b)`; the product must be a perfect rational square.
    pub fn mint_initial(&mut self, a: Rational, b: Rational) -> Result<Rational, ExactError> {
        if !self.total_liquidity.is_zero() {
            return Err(AmmError::PoolNotEmpty.into());
        }
        if !is_positive(&a) || !is_positive(&b) {
            return Err(AmmError::ZeroAmount.into());
        }
        let liquidity = rational_sqrt(&(&a * &b)).ok_or(ExactError::IrrationalLiquidity)?;
        self.reserve0 = a;
        self.reserve1 = b;
        self.total_liquidity = liquidity.clone();
        Ok(liquidity)
    }

    pub fn mint(&mut self, a: Rational, b: Rational) -> Result<Rational, AmmError> {
        if self.total_liquidity.is_zero() {
            return Err(AmmError::EmptyPool);
        }
        if !is_positive(&a) || !is_positive(&b) {
            return Err(AmmError::ZeroAmount);
        }
        let claim0 = &self.total_liquidity * &a / &self.reserve0;
        let claim1 = &self.total_liquidity * &b / &self.reserve1;
        let liquidity = claim0.min(claim1);
        self.reserve0 += a;
        self.reserve1 += b;
        self.total_liquidity += &liquidity;
        Ok(liquidity)
    }

    pub fn burn(
        &mut self,
        liquidity: &Rational,
        owner_balance: &Rational,
    ) -> Result<(Rational, Rational), ExactError> {
        if !is_positive(liquidity) {
            return Err(AmmError::ZeroAmount.into());
        }
        if liquidity > owner_balance || owner_balance > &self.total_liquidity {
            return Err(ExactError::InsufficientLiquidityBalance);
        }
        let share = liquidity / &self.total_liquidity;
        let out0 = &self.reserve0 * &share;
        let out1 = &self.reserve1 * &share;
        self.reserve0 -= &out0;
        self.reserve1 -= &out1;
        self.total_liquidity -= liquidity;
        Ok((out0, out1))
    }

    /// `out = r1 * r2 * reserve_out * in / (reserve_in + r1 * in)`, which keeps
    /// `(reserve_in + r1 * in) * (reserve_out - out / r2) = reserve_in * reserve_out`.
    pub fn quote_swap(&self, input: Side, amount_in: &Rational) -> Result<Rational, AmmError> {
        if self.reserve0.is_zero() || self.reserve1.is_zero() {
            return Err(AmmError::EmptyPool);
        }
        if !is_positive(amount_in) {
            return Err(AmmError::ZeroAmount);
        }
        let r1 = rational(self.fees.r1_num, self.fees.r1_den);
        let r2 = rational(self.fees.r2_num, self.fees.r2_den);
        let reserve_in = self.reserve(input);
        let reserve_out = self.reserve(input.other());
        let effective_in = &r1 * amount_in;
        Ok(&r2 * reserve_out * &effective_in / (reserve_in + &effective_in))
    }

    pub fn swap(&mut self, input: Side, amount_in: &Rational) -> Result<Rational, AmmError> {
        let out = self.quote_swap(input, amount_in)?;
        match input {
            Side::Token0 => {
                self.reserve0 += amount_in;
                self.reserve1 -= &out;
            }
            Side::Token1 => {
                self.reserve1 += amount_in;
                self.reserve0 -= &out;
            }
        }
        Ok(out)
    }

    /// Whether the pool is in the trivial "one unit of liquidity per sqrt(k)" state.
    pub fn liquidity_matches_sqrt_k(&self) -> bool {
        rational_sqrt(&self.k()).is_some_and(|s| s == self.total_liquidity)
    }
}

impl Default for ExactPool {
    fn default() -> Self {
        ExactPool::new(FeeParams::default()).expect("default fees are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        rational(n, d)
    }

    #[test]
    fn sqrt_of_squares() {
        assert_eq!(rational_sqrt(&q(9, 4)), Some(q(3, 2)));
        assert_eq!(rational_sqrt(&q(2, 1)), None);
    }

    #[test]
    fn fee_free_swap_preserves_k() {
        let mut p = ExactPool::new(FeeParams::fee_free()).unwrap();
        p.mint_initial(q(100, 1), q(400, 1)).unwrap();
        let k = p.k();
        p.swap(Side::Token0, &q(37, 3)).unwrap();
        assert_eq!(p.k(), k);
    }

    #[test]
    fn fee_swap_matches_invariant_form() {
        let mut p = ExactPool::default();
        p.mint_initial(q(1_000_000, 1), q(1_000_000, 1)).unwrap();
        let (a, b) = (p.reserve0.clone(), p.reserve1.clone());
        let d = q(100_000, 1);
        let out = p.swap(Side::Token0, &d).unwrap();
        let r1 = q(997, 1000);
        assert_eq!((&a + &r1 * &d) * (&b - &out), &a * &b);
    }

    #[test]
    fn general_output_fee_keeps_invariant() {
        let fees = FeeParams::new(997, 1000, 99, 100).unwrap();
        let mut p = ExactPool::new(fees).unwrap();
        p.mint_initial(q(500, 1), q(2000, 1)).unwrap();
        let (a, b) = (p.reserve0.clone(), p.reserve1.clone());
        let d = q(50, 1);
        let out = p.swap(Side::Token0, &d).unwrap();
        assert_eq!((&a + q(997, 1000) * &d) * (&b - &out / q(99, 100)), &a * &b);
    }

    #[test]
    fn proportional_round_trip_is_exact() {
        let mut p = ExactPool::default();
        p.mint_initial(q(100, 1), q(400, 1)).unwrap();
        let minted = p.mint(q(7, 3), q(28, 3)).unwrap();
        let (a, b) = p.burn(&minted, &minted).unwrap();
        assert_eq!((a, b), (q(7, 3), q(28, 3)));
        assert!(p.liquidity_matches_sqrt_k());
    }

    #[test]
    fn irrational_initial_deposit_rejected() {
        let mut p = ExactPool::default();
        assert_eq!(p.mint_initial(q(2, 1), q(3, 1)), Err(ExactError::IrrationalLiquidity));
    }
}
