//! Exact money arithmetic in signed integer cents.
//!
//! All ledger state and event amounts are stored as integer cents; no floating
//! point enters balance arithmetic. The only place a float touches money is
//! when a sampled or rate-derived amount is converted to cents through
//! [`Money::from_f64_dollars_half_up`] / [`Money::scale_half_up`], which round
//! half-up at that single point.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

/// A signed amount of money in integer cents.
///
/// Serialized as the raw cent count (snapshots, audit records). Event exports
/// use the signed two-decimal string form via [`Money::to_decimal_string`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money {
    cents: i64,
}

/// Error parsing a decimal money string.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MoneyParseError {
    #[error("not a decimal amount: {0:?}")]
    NotNumeric(String),
    #[error("more than two decimal places: {0:?}")]
    TooPrecise(String),
    #[error("amount out of range: {0:?}")]
    OutOfRange(String),
}

impl Money {
    pub const ZERO: Money = Money { cents: 0 };

    pub const fn from_cents(cents: i64) -> Money {
        Money { cents }
    }

    pub const fn from_dollars(dollars: i64) -> Money {
        Money {
            cents: dollars * 100,
        }
    }

    pub const fn cents(self) -> i64 {
        self.cents
    }

    /// Dollar value as f64, for statistics and feature encoding only.
    pub fn to_f64_dollars(self) -> f64 {
        self.cents as f64 / 100.0
    }

    pub fn abs(self) -> Money {
        Money {
            cents: self.cents.abs(),
        }
    }

    pub fn is_positive(self) -> bool {
        self.cents > 0
    }

    pub fn is_negative(self) -> bool {
        self.cents < 0
    }

    pub fn is_zero(self) -> bool {
        self.cents == 0
    }

    pub fn min(self, other: Money) -> Money {
        Money {
            cents: self.cents.min(other.cents),
        }
    }

    pub fn max(self, other: Money) -> Money {
        Money {
            cents: self.cents.max(other.cents),
        }
    }

    /// Converts a dollar amount sampled in floating point to cents,
    /// rounding half away from zero.
    pub fn from_f64_dollars_half_up(dollars: f64) -> Money {
        let cents = dollars * 100.0;
        let rounded = if cents >= 0.0 {
            (cents + 0.5).floor()
        } else {
            (cents - 0.5).ceil()
        };
        Money {
            cents: rounded as i64,
        }
    }

    /// Multiplies by a rate, rounding half-up. Used for interest and minimum
    /// payment fractions.
    pub fn scale_half_up(self, rate: f64) -> Money {
        Money::from_f64_dollars_half_up(self.to_f64_dollars() * rate)
    }

    /// Parses a signed decimal string such as `"15.49"`, `"-120"`, `"0.5"`.
    /// At most two decimal places are accepted.
    pub fn parse_decimal(s: &str) -> Result<Money, MoneyParseError> {
        let t = s.trim();
        if t.is_empty() {
            return Err(MoneyParseError::NotNumeric(s.to_string()));
        }
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        if body.is_empty() {
            return Err(MoneyParseError::NotNumeric(s.to_string()));
        }
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || (int_part.is_empty() && frac_part.is_empty())
        {
            return Err(MoneyParseError::NotNumeric(s.to_string()));
        }
        if frac_part.len() > 2 {
            return Err(MoneyParseError::TooPrecise(s.to_string()));
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| MoneyParseError::OutOfRange(s.to_string()))?
        };
        let frac: i64 = match frac_part.len() {
            0 => 0,
            1 => frac_part.parse::<i64>().unwrap() * 10,
            _ => frac_part.parse::<i64>().unwrap(),
        };
        let cents = whole
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac))
            .ok_or_else(|| MoneyParseError::OutOfRange(s.to_string()))?;
        Ok(Money {
            cents: if neg { -cents } else { cents },
        })
    }

    /// Signed fixed two-decimal string, e.g. `-120.00`, `15.49`.
    pub fn to_decimal_string(self) -> String {
        let sign = if self.cents < 0 { "-" } else { "" };
        let a = self.cents.unsigned_abs();
        format!("{}{}.{:02}", sign, a / 100, a % 100)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.to_decimal_string())
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money {
            cents: self.cents + rhs.cents,
        }
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money {
            cents: self.cents - rhs.cents,
        }
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money { cents: -self.cents }
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.cents += rhs.cents;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.cents -= rhs.cents;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money {
            cents: iter.map(|m| m.cents).sum(),
        }
    }
}
