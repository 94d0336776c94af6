use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Extended nonnegative rational used for α values.
///
/// Finite values are kept in lowest terms so structural equality matches
/// numeric equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alpha {
    Finite { num: u128, den: u128 },
    Infinite,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl Alpha {
    pub const ONE: Alpha = Alpha::Finite { num: 1, den: 1 };

    /// `num / den`; a zero denominator with a positive numerator is infinite
    /// and `0 / 0` is one.
    pub fn ratio(num: u128, den: u128) -> Alpha {
        match (num, den) {
            (0, 0) => Alpha::ONE,
            (_, 0) => Alpha::Infinite,
            _ => {
                let g = gcd(num, den);
                Alpha::Finite {
                    num: num / g,
                    den: den / g,
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Alpha::Finite { .. })
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Alpha::Finite { num, den } => num as f64 / den as f64,
            Alpha::Infinite => f64::INFINITY,
        }
    }

    /// Whether the value is at most `bound`.
    pub fn at_most(&self, bound: f64) -> bool {
        match *self {
            Alpha::Infinite => bound.is_infinite(),
            // Scale to avoid rounding when the ratio is an exact integer.
            Alpha::Finite { num, den } => (num as f64) <= bound * den as f64 * (1.0 + 1e-12),
        }
    }
}

impl PartialOrd for Alpha {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Alpha {
    fn cmp(&self, other: &Self) -> Ordering {
        match (*self, *other) {
            (Alpha::Infinite, Alpha::Infinite) => Ordering::Equal,
            (Alpha::Infinite, _) => Ordering::Greater,
            (_, Alpha::Infinite) => Ordering::Less,
            (Alpha::Finite { num: a, den: b }, Alpha::Finite { num: c, den: d }) => {
                match (a.checked_mul(d), c.checked_mul(b)) {
                    (Some(x), Some(y)) => x.cmp(&y),
                    _ => (a as f64 / b as f64).total_cmp(&(c as f64 / d as f64)),
                }
            }
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Alpha::Infinite => f.write_str("inf"),
            Alpha::Finite { num, den: 1 } => write!(f, "{num}"),
            Alpha::Finite { num, den } => write!(f, "{num}/{den}"),
        }
    }
}
