//! Integrability exponents `p, q, theta` in `(0, inf]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exponent in `(0, inf]`. Serialized as a number, or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p <= 0.0 {
            return Err(Error::config(format!("exponent must lie in (0, inf], got {p}")));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `1/p`, with `1/inf = 0`.
    pub fn recip(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }

    /// `(sum |v|^p)^(1/p)`, or `max |v|` for `p = inf`.
    pub fn norm<'a>(self, values: impl IntoIterator<Item = &'a f64>) -> f64 {
        if self.is_infinite() {
            values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
        } else {
            let p = self.0;
            let sum: f64 = values.into_iter().map(|v| v.abs().powf(p)).sum();
            sum.powf(1.0 / p)
        }
    }

    /// Combine terms as an `l_p` sum (`p < inf`) or a running max (`p = inf`).
    pub fn combine(self, terms: impl IntoIterator<Item = f64>) -> f64 {
        let terms: Vec<f64> = terms.into_iter().collect();
        self.norm(&terms)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "INF" | "∞" => Ok(Self::INFINITY),
            t => Self::new(
                t.parse::<f64>()
                    .map_err(|e| Error::config(format!("bad exponent {t:?}: {e}")))?,
            ),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(de)? {
            Raw::Num(v) => Exponent::new(v),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// `(x)_+ = max(x, 0)`.
pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_norms() {
        let inf: Exponent = "inf".parse().unwrap();
        assert!(inf.is_infinite());
        assert_eq!(inf.recip(), 0.0);
        assert!("0".parse::<Exponent>().is_err());
        assert!("-1".parse::<Exponent>().is_err());
        let two: Exponent = "2".parse().unwrap();
        assert_eq!(two.norm(&[3.0, -4.0]), 5.0);
        assert_eq!(inf.norm(&[3.0, -4.0]), 4.0);
        let json = serde_json::to_string(&vec![inf, two]).unwrap();
        assert_eq!(json, r#"["inf",2.0]"#);
        let back: Vec<Exponent> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![inf, two]);
    }
}
