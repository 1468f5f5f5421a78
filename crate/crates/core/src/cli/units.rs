//! Quantities with unit suffixes at the config boundary.
//!
//! A quantity is either a bare number in the base unit of its dimension or a
//! string such as `"500 um"`, `"970 MHz"` or `"22 meV"`.

use serde::de::{self, Deserializer};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Base unit m.
    Length,
    /// Ordinary frequency, base unit Hz.
    Frequency,
    /// Base unit V.
    Voltage,
    /// Per-electron energy, base unit eV.
    Energy,
    /// Base unit rad.
    Angle,
    /// Dimensionless or rate, no suffix accepted.
    Plain,
}

impl Dimension {
    fn factor(self, unit: &str) -> Option<f64> {
        use Dimension::*;
        Some(match (self, unit) {
            (Length, "m") => 1.0,
            (Length, "mm") => 1e-3,
            (Length, "um" | "µm" | "μm") => 1e-6,
            (Length, "nm") => 1e-9,
            (Frequency, "Hz") => 1.0,
            (Frequency, "kHz") => 1e3,
            (Frequency, "MHz") => 1e6,
            (Frequency, "GHz") => 1e9,
            (Voltage, "V") => 1.0,
            (Voltage, "mV") => 1e-3,
            (Voltage, "kV") => 1e3,
            (Energy, "eV") => 1.0,
            (Energy, "meV") => 1e-3,
            (Energy, "keV") => 1e3,
            (Angle, "rad") => 1.0,
            (Angle, "mrad") => 1e-3,
            (Angle, "deg" | "°") => std::f64::consts::PI / 180.0,
            _ => return None,
        })
    }

    fn units(self) -> &'static str {
        use Dimension::*;
        match self {
            Length => "m, mm, um, nm",
            Frequency => "Hz, kHz, MHz, GHz",
            Voltage => "V, mV, kV",
            Energy => "eV, meV, keV",
            Angle => "rad, mrad, deg",
            Plain => "none",
        }
    }
}

/// Parse `"<number> <unit>"` (the space is optional) into the base unit.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+') || ((c == 'e' || c == 'E') && i > 0 && text[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map_or(text.len(), |(i, _)| i);
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot read a number from `{text}`"))?;
    let unit = unit.trim();
    let factor = if unit.is_empty() {
        1.0
    } else {
        dim.factor(unit)
            .ok_or_else(|| format!("unit `{unit}` not accepted here (allowed: {})", dim.units()))?
    };
    Ok(value * factor)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Raw {
    Number(f64),
    Text(String),
}

fn quantity<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> Result<f64, D::Error> {
    match Raw::deserialize(d)? {
        Raw::Number(v) => Ok(v),
        Raw::Text(s) => parse_quantity(&s, dim).map_err(de::Error::custom),
    }
}

fn quantities<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> Result<Vec<f64>, D::Error> {
    Vec::<Raw>::deserialize(d)?
        .into_iter()
        .map(|r| match r {
            Raw::Number(v) => Ok(v),
            Raw::Text(s) => parse_quantity(&s, dim).map_err(de::Error::custom),
        })
        .collect()
}

macro_rules! dimension_module {
    ($name:ident, $dim:expr) => {
        pub mod $name {
            use super::*;

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                quantity(d, $dim)
            }

            pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(*v)
            }

            pub mod vec {
                use super::super::*;

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
                    quantities(d, $dim)
                }

                pub fn serialize<S: serde::Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
                    serde::Serialize::serialize(v, s)
                }
            }
        }
    };
}

dimension_module!(length, Dimension::Length);
dimension_module!(frequency, Dimension::Frequency);
dimension_module!(voltage, Dimension::Voltage);
dimension_module!(energy, Dimension::Energy);
dimension_module!(angle, Dimension::Angle);
