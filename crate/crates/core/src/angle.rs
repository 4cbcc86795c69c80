//! Angles stored as exact rational multiples of π.
//!
//! Configuration files write angles as `"3/4 pi"`, `"-1/2 pi"`, `"pi"` or `"0"`.
//! Keeping them rational makes sorter determinism checks exact and keeps the
//! mirror table free of decimal drift.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PiAngle(Ratio<i64>);

impl PiAngle {
    pub const ZERO: PiAngle = PiAngle(Ratio::new_raw(0, 1));

    /// `numer/denom · π`.
    pub fn new(numer: i64, denom: i64) -> Self {
        PiAngle(Ratio::new(numer, denom))
    }

    pub fn from_ratio(r: Ratio<i64>) -> Self {
        PiAngle(r)
    }

    /// Coefficient of π.
    pub fn turns_of_pi(&self) -> Ratio<i64> {
        self.0
    }

    pub fn radians(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN) * std::f64::consts::PI
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Display for PiAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = (*self.0.numer(), *self.0.denom());
        if n == 0 {
            write!(f, "0")
        } else if d == 1 && n.abs() == 1 {
            write!(f, "{}pi", if n < 0 { "-" } else { "" })
        } else if d == 1 {
            write!(f, "{n} pi")
        } else {
            write!(f, "{n}/{d} pi")
        }
    }
}

impl FromStr for PiAngle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("angle", format!("`{s}` is not a rational multiple of pi"));
        let t = s.trim();
        if t == "0" {
            return Ok(PiAngle::ZERO);
        }
        let coeff = t
            .strip_suffix("pi")
            .or_else(|| t.strip_suffix('π'))
            .ok_or_else(bad)?
            .trim();
        let ratio = match coeff {
            "" | "+" => Ratio::from_integer(1),
            "-" => Ratio::from_integer(-1),
            c => {
                let c = c.strip_suffix('*').map(str::trim).unwrap_or(c);
                let mut parts = c.splitn(2, '/');
                let numer: i64 = parts.next().unwrap().trim().parse().map_err(|_| bad())?;
                let denom: i64 = match parts.next() {
                    Some(d) => d.trim().parse().map_err(|_| bad())?,
                    None => 1,
                };
                if denom == 0 {
                    return Err(bad());
                }
                Ratio::new(numer, denom)
            }
        };
        Ok(PiAngle(ratio))
    }
}

impl Serialize for PiAngle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PiAngle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reduces a multiple of π into the half-open interval (−1, 1].
pub(crate) fn reduce_turns(r: Ratio<i64>) -> Ratio<i64> {
    let two = Ratio::from_integer(2);
    let mut x = r % two;
    if x <= Ratio::from_integer(-1) {
        x += two;
    } else if x > Ratio::from_integer(1) {
        x -= two;
    }
    x
}
