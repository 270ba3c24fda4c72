use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Euro amount held in whole cents.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    /// Rounds to the nearest cent, half away from zero.
    pub fn from_euros(euros: f64) -> Money {
        Money((euros * 100.0).round() as i64)
    }

    pub fn from_cents(cents: i64) -> Money {
        Money(cents)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn euros(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Millions of euros.
    pub fn millions(self) -> f64 {
        self.0 as f64 / 1e8
    }
}

impl Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;

    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;

    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02} EUR", abs / 100, abs % 100)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_cents() {
        assert_eq!(Money::from_euros(1.005).cents(), 100);
        assert_eq!(Money::from_euros(2.675).cents(), 268);
        assert_eq!(Money::from_euros(-0.126).cents(), -13);
        assert_eq!(Money::from_euros(1_402_586.0).millions(), 1.402586);
    }

    #[test]
    fn sums_are_exact() {
        let total: Money = (0..1000).map(|_| Money::from_euros(0.1)).sum();
        assert_eq!(total, Money::from_euros(100.0));
        assert_eq!(format!("{}", Money::from_cents(-12345)), "-123.45 EUR");
    }
}
