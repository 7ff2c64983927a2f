//! Exact arithmetic for assignment objectives. Dyadic rationals capture f64
//! payoffs losslessly, and big-integer tie weights order equal-payoff
//! solutions so the solver's answer never depends on float rounding.

use core::cmp::Ordering;
use core::ops::{Add, Neg, Sub};

use num_bigint::BigInt;

/// Exact dyadic rational `mantissa * 2^exp`; closed under addition, so any
/// finite sum of f64 values is represented without rounding.
#[derive(Clone, Debug)]
pub(crate) struct Dyadic {
    mantissa: BigInt,
    exp: i64,
}

impl Dyadic {
    pub(crate) fn zero() -> Self {
        Self {
            mantissa: BigInt::from(0u8),
            exp: 0,
        }
    }

    /// Lossless conversion of a finite f64 via its bit layout.
    pub(crate) fn from_f64(x: f64) -> Self {
        debug_assert!(x.is_finite());
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        // Subnormals (and zero) have an implicit leading 0 and fixed scale.
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let mut mantissa = BigInt::from(mant);
        if bits >> 63 == 1 {
            mantissa = -mantissa;
        }
        Self { mantissa, exp }
    }

    fn aligned(&self, other: &Self) -> (BigInt, BigInt, i64) {
        let exp = self.exp.min(other.exp);
        let a = &self.mantissa << (self.exp - exp) as u64;
        let b = &other.mantissa << (other.exp - exp) as u64;
        (a, b, exp)
    }
}

impl Add<&Dyadic> for &Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: &Dyadic) -> Dyadic {
        let (a, b, exp) = self.aligned(rhs);
        Dyadic {
            mantissa: a + b,
            exp,
        }
    }
}

impl Sub<&Dyadic> for &Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let (a, b, exp) = self.aligned(rhs);
        Dyadic {
            mantissa: a - b,
            exp,
        }
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        Dyadic {
            mantissa: -self.mantissa,
            exp: self.exp,
        }
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Dyadic {}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

/// Edge cost for the assignment search, ordered lexicographically: the
/// (negated) payoff dominates, the (negated) tie weight breaks exact payoff
/// ties in favor of lexicographically smaller pair sets.
///
/// The tie weight of the pair ranked `k` in row-major order is `2^(M-1-k)`
/// (`M` = matrix size): a set containing the smallest differing rank always
/// outweighs any combination of larger ranks, so maximizing the tie sum picks
/// the lexicographically smallest pair set among equal-payoff solutions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Cost {
    payoff: Dyadic,
    tie: BigInt,
}

impl Cost {
    pub(crate) fn zero() -> Self {
        Self {
            payoff: Dyadic::zero(),
            tie: BigInt::from(0u8),
        }
    }

    /// Cost of assigning the finite-payoff pair with row-major rank `rank`
    /// out of `total` matrix cells.
    pub(crate) fn edge(payoff: f64, rank: usize, total: usize) -> Self {
        Self {
            payoff: -Dyadic::from_f64(payoff),
            tie: -(BigInt::from(1u8) << (total - 1 - rank)),
        }
    }
}

impl Add<&Cost> for &Cost {
    type Output = Cost;

    fn add(self, rhs: &Cost) -> Cost {
        Cost {
            payoff: &self.payoff + &rhs.payoff,
            tie: &self.tie + &rhs.tie,
        }
    }
}

impl Sub<&Cost> for &Cost {
    type Output = Cost;

    fn sub(self, rhs: &Cost) -> Cost {
        Cost {
            payoff: &self.payoff - &rhs.payoff,
            tie: &self.tie - &rhs.tie,
        }
    }
}
