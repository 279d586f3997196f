//! Unit normalization backed by `data/units.csv`.
//!
//! Each row maps an alias to a canonical unit through `value * multiply /
//! divide`. Aliases are matched case-insensitively with whitespace removed
//! and sub/superscript digits folded, so "tCO₂e", "t CO2e" and "TCO2E" are
//! one key. Magnitude words (thousand, million, billion) may lead or trail
//! any unit and scale the value; on their own they denote a plain count.

use std::collections::HashMap;
use std::sync::LazyLock;

use serde::Deserialize;
use thiserror::Error;

const UNITS_CSV: &str = include_str!("../../data/units.csv");

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("value is not finite: {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct UnitRow {
    pub alias: String,
    pub canonical: String,
    pub family: String,
    pub multiply: f64,
    pub divide: f64,
}

#[derive(Debug)]
pub struct UnitTable {
    rows: Vec<UnitRow>,
    by_key: HashMap<String, usize>,
    magnitudes: HashMap<String, f64>,
}

static TABLE: LazyLock<UnitTable> =
    LazyLock::new(|| UnitTable::from_csv(UNITS_CSV).expect("shipped unit table is valid"));

/// Lookup key: lowercase, folded digits, no whitespace.
pub fn unit_key(unit: &str) -> String {
    fold(unit)
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
}

fn fold(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '₀' | '⁰' => '0',
            '₁' | '¹' => '1',
            '₂' | '²' => '2',
            '₃' | '³' => '3',
            '₄' | '⁴' => '4',
            c => c,
        })
        .collect()
}

/// The outcome of resolving a raw unit string against the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved<'a> {
    pub row: &'a UnitRow,
    pub magnitude: f64,
}

impl UnitTable {
    pub fn global() -> &'static UnitTable {
        &TABLE
    }

    pub fn from_csv(raw: &str) -> Result<Self, String> {
        let mut reader = csv::Reader::from_reader(raw.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.deserialize::<UnitRow>() {
            rows.push(rec.map_err(|e| e.to_string())?);
        }
        let mut by_key = HashMap::new();
        let mut magnitudes = HashMap::new();
        for (i, row) in rows.iter().enumerate() {
            if !(row.multiply.is_finite() && row.divide.is_finite() && row.divide != 0.0) {
                return Err(format!("row {i} ({}) has an invalid factor", row.alias));
            }
            let key = unit_key(&row.alias);
            if by_key.insert(key.clone(), i).is_some() {
                return Err(format!("duplicate unit alias {:?}", row.alias));
            }
            if row.family == "magnitude" {
                magnitudes.insert(key, row.multiply / row.divide);
            }
        }
        // Canonical units must resolve to themselves with factor one.
        for row in &rows {
            match by_key.get(&unit_key(&row.canonical)).map(|&i| &rows[i]) {
                Some(c) if c.canonical == row.canonical && c.multiply == 1.0 && c.divide == 1.0 => {}
                _ => return Err(format!("canonical unit {:?} is not an identity row", row.canonical)),
            }
        }
        Ok(Self {
            rows,
            by_key,
            magnitudes,
        })
    }

    pub fn rows(&self) -> &[UnitRow] {
        &self.rows
    }

    /// Resolve a raw unit, peeling magnitude words off either end.
    pub fn resolve(&self, unit_raw: &str) -> Option<Resolved<'_>> {
        let folded = fold(unit_raw.trim());
        let mut words: Vec<&str> = folded.split_whitespace().collect();
        if words.is_empty() {
            return None;
        }
        if let Some(&i) = self.by_key.get(&unit_key(&folded)) {
            return Some(Resolved {
                row: &self.rows[i],
                magnitude: 1.0,
            });
        }
        let mut magnitude = 1.0;
        while words.len() > 1 {
            if let Some(m) = self.magnitudes.get(&words[0].to_lowercase()) {
                magnitude *= m;
                words.remove(0);
            } else if let Some(m) = self.magnitudes.get(&words[words.len() - 1].to_lowercase()) {
                magnitude *= m;
                words.pop();
            } else {
                break;
            }
        }
        if magnitude == 1.0 {
            return None;
        }
        let key = unit_key(&words.join(" "));
        self.by_key.get(&key).map(|&i| Resolved {
            row: &self.rows[i],
            magnitude,
        })
    }

    pub fn recognizes(&self, unit_raw: &str) -> bool {
        self.resolve(unit_raw).is_some()
    }

    /// Convert to the canonical unit of the value's family.
    ///
    /// Unknown units leave the value unchanged and lowercase/trim the unit.
    /// Applying this to its own output is the identity.
    pub fn normalize(&self, value: f64, unit_raw: &str) -> Result<(f64, String), UnitError> {
        if !value.is_finite() {
            return Err(UnitError::NonFinite(value));
        }
        match self.resolve(unit_raw) {
            Some(Resolved { row, magnitude }) => {
                let v = value * magnitude * row.multiply / row.divide;
                if !v.is_finite() {
                    return Err(UnitError::NonFinite(v));
                }
                Ok((v, row.canonical.clone()))
            }
            None => Ok((value, unit_raw.trim().to_lowercase())),
        }
    }
}

pub fn normalize_unit_value(value: f64, unit_raw: &str) -> Result<(f64, String), UnitError> {
    UnitTable::global().normalize(value, unit_raw)
}

/// Parse a number as written in a report: thousands separators, optional
/// sign, optional decimals. `"2,500"` is 2500.
pub fn parse_number(raw: &str) -> Option<f64> {
    let cleaned: String = raw.trim().chars().filter(|&c| c != ',' && c != ' ').collect();
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_conversions() {
        assert_eq!(normalize_unit_value(2.5, "GWh").unwrap(), (2500.0, "MWh".into()));
        assert_eq!(normalize_unit_value(3.6, "GJ").unwrap(), (1.0, "MWh".into()));
        assert_eq!(
            normalize_unit_value(12.0, "million litres").unwrap(),
            (12000.0, "m3".into())
        );
        assert_eq!(
            normalize_unit_value(1000.0, "tCO₂e").unwrap(),
            (1000.0, "tCO2e".into())
        );
    }

    #[test]
    fn other_families() {
        assert_eq!(normalize_unit_value(45.0, "%").unwrap(), (45.0, "%".into()));
        assert_eq!(normalize_unit_value(1_850_000.0, "kg").unwrap(), (1850.0, "t".into()));
        assert_eq!(normalize_unit_value(2.0, "ktCO2e").unwrap(), (2000.0, "tCO2e".into()));
        assert_eq!(normalize_unit_value(500.0, "kg CO2e").unwrap(), (0.5, "tCO2e".into()));
        assert_eq!(normalize_unit_value(3.0, "megalitres").unwrap(), (3000.0, "m3".into()));
        assert_eq!(normalize_unit_value(1.2, "$ million").unwrap(), (1_200_000.0, "USD".into()));
        assert_eq!(normalize_unit_value(4.0, "USD billion").unwrap(), (4e9, "USD".into()));
        assert_eq!(normalize_unit_value(7.0, "incidents").unwrap(), (7.0, "count".into()));
        assert_eq!(normalize_unit_value(2.0, "million").unwrap(), (2e6, "count".into()));
    }

    #[test]
    fn unknown_unit_passes_through_lowercased() {
        assert_eq!(normalize_unit_value(3.0, "  Widgets ").unwrap(), (3.0, "widgets".into()));
        assert_eq!(normalize_unit_value(3.0, "million widgets").unwrap(), (3.0, "million widgets".into()));
        assert_eq!(normalize_unit_value(3.0, "").unwrap(), (3.0, "".into()));
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(normalize_unit_value(f64::NAN, "MWh").is_err());
        assert!(normalize_unit_value(f64::INFINITY, "MWh").is_err());
    }

    #[test]
    fn number_parsing() {
        assert_eq!(parse_number("2,500"), Some(2500.0));
        assert_eq!(parse_number("1,850,000"), Some(1_850_000.0));
        assert_eq!(parse_number("34.5"), Some(34.5));
        assert_eq!(parse_number("-3"), Some(-3.0));
        assert_eq!(parse_number("abc"), None);
    }

    #[test]
    fn duplicate_alias_rejected() {
        let csv = "alias,canonical,family,multiply,divide\nMWh,MWh,energy,1,1\nmwh,MWh,energy,1,1\n";
        assert!(UnitTable::from_csv(csv).is_err());
    }
}
