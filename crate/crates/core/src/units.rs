use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Reporting unit for capacities and losses. Computation is always in nats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    /// Factor applied to a value measured in nats.
    pub fn scale(self) -> f64 {
        match self {
            Units::Nats => 1.0,
            Units::Bits => 1.0 / std::f64::consts::LN_2,
        }
    }
}

impl FromStr for Units {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nats" => Ok(Units::Nats),
            "bits" => Ok(Units::Bits),
            other => Err(format!("unknown unit '{other}', expected nats or bits")),
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        })
    }
}

/// Fixed nine-decimal rendering used by every CSV writer. Negative zero and
/// values that round to zero print without a sign.
pub fn fmt_fixed(v: f64) -> String {
    let s = format!("{v:.9}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_format_drops_negative_zero() {
        assert_eq!(fmt_fixed(-0.0), "0.000000000");
        assert_eq!(fmt_fixed(-1e-13), "0.000000000");
        assert_eq!(fmt_fixed(-0.5), "-0.500000000");
    }

    #[test]
    fn bits_scale() {
        assert!((std::f64::consts::LN_2 * Units::Bits.scale() - 1.0).abs() < 1e-15);
    }
}
