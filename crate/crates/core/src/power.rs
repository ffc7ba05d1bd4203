//! Static supply power per operating point and derived per-round energy.
//!
//! Powers are held as integer nanowatts so that totals are exact sums of the
//! supply breakdown; there is no interpolation between stored points.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerError {
    #[error("no power entry for preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid power value {value} W for {name}: {reason}")]
    InvalidValue { name: String, value: f64, reason: &'static str },
    #[error("round duration {0} s must be > 0")]
    Duration(f64),
    #[error("duplicate power entry {0:?}")]
    Duplicate(String),
}

/// Non-negative power with nanowatt resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Power(u64);

impl Power {
    pub fn from_nanowatts(nw: u64) -> Self {
        Power(nw)
    }

    pub fn from_watts(name: &str, w: f64) -> Result<Self, PowerError> {
        if !w.is_finite() {
            return Err(PowerError::InvalidValue { name: name.into(), value: w, reason: "not finite" });
        }
        if w < 0.0 {
            return Err(PowerError::InvalidValue { name: name.into(), value: w, reason: "negative" });
        }
        let nw = (w * 1e9).round();
        if nw > u64::MAX as f64 {
            return Err(PowerError::InvalidValue { name: name.into(), value: w, reason: "too large" });
        }
        Ok(Power(nw as u64))
    }

    pub fn nanowatts(self) -> u64 {
        self.0
    }

    pub fn watts(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl std::ops::Add for Power {
    type Output = Power;
    fn add(self, rhs: Power) -> Power {
        Power(self.0 + rhs.0)
    }
}

/// Exact decimal in milliwatt form, e.g. `13.4e-3`.
impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / 1_000_000;
        let frac = self.0 % 1_000_000;
        if frac == 0 {
            write!(f, "{whole}e-3")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{whole}.{}e-3", digits.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerEntryConfig {
    pub name: String,
    /// Watts drawn from the 1.8 V supply.
    pub p_1v8: f64,
    /// Watts drawn from the 3.3 V supply.
    pub p_3v3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerReport {
    pub p_1v8: Power,
    pub p_3v3: Power,
    pub total: Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    entries: Vec<(String, Power, Power)>,
}

impl PowerTable {
    pub fn from_config(rows: &[PowerEntryConfig]) -> Result<Self, PowerError> {
        let mut entries: Vec<(String, Power, Power)> = Vec::with_capacity(rows.len());
        for row in rows {
            if entries.iter().any(|(n, _, _)| *n == row.name) {
                return Err(PowerError::Duplicate(row.name.clone()));
            }
            let p18 = Power::from_watts(&format!("{}.p_1v8", row.name), row.p_1v8)?;
            let p33 = Power::from_watts(&format!("{}.p_3v3", row.name), row.p_3v3)?;
            entries.push((row.name.clone(), p18, p33));
        }
        Ok(PowerTable { entries })
    }

    /// Measured supply power at 1.2 K, 4.2 K, 35 K and 300 K.
    pub fn measured() -> Self {
        let mw = |x: u64| Power::from_nanowatts(x * 100_000);
        PowerTable {
            entries: vec![
                ("1.2K".into(), mw(32), mw(102)),
                ("4.2K".into(), mw(33), mw(109)),
                ("35K".into(), mw(34), mw(109)),
                ("300K".into(), mw(34), mw(119)),
            ],
        }
    }

    pub fn default_config() -> Vec<PowerEntryConfig> {
        Self::measured()
            .entries
            .iter()
            .map(|(n, a, b)| PowerEntryConfig { name: n.clone(), p_1v8: a.watts(), p_3v3: b.watts() })
            .collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn report(&self, name: &str) -> Result<PowerReport, PowerError> {
        let (_, p_1v8, p_3v3) = self
            .entries
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| PowerError::UnknownPreset(name.to_string()))?;
        Ok(PowerReport { p_1v8: *p_1v8, p_3v3: *p_3v3, total: *p_1v8 + *p_3v3 })
    }

    /// Joules consumed over one round of `round_duration` seconds.
    pub fn energy_per_round(&self, name: &str, round_duration: f64) -> Result<f64, PowerError> {
        if !(round_duration.is_finite() && round_duration > 0.0) {
            return Err(PowerError::Duration(round_duration));
        }
        Ok(self.report(name)?.total.watts() * round_duration)
    }
}
