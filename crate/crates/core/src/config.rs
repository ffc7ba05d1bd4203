//! The single TOML run configuration.
//!
//! Every section is optional and falls back to the shipped defaults; unknown
//! keys anywhere are rejected. All quantities are SI (siemens, volts, amperes,
//! seconds, watts, ohms).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analog::{TemperaturePreset, TiaParams};
use crate::crossbar::{Scheme, DEFAULT_CLAMP};
use crate::device::{MemristorParams, WriteVerify};
use crate::matrix::Matrix;
use crate::pipeline::{self, Circuit, Mapping, NetworkWeights};
use crate::power::{PowerEntryConfig, PowerTable};
use crate::qec::{NoiseModel, RepetitionCode, TrainConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax { origin: String, line: usize, column: usize, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

fn invalid(key: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossbarConfig {
    /// Siemens per unit weight.
    pub k: f64,
    pub scheme: Scheme,
    pub v_clamp: f64,
    /// Per-device read noise on every inference evaluation.
    pub read_noise: bool,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        let p = MemristorParams::default();
        CrossbarConfig { k: p.g_max - p.g_min, scheme: Scheme::OneSided, v_clamp: DEFAULT_CLAMP, read_noise: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitConfig {
    pub v_logic_high: f64,
    pub pulse_width: f64,
    /// Comparator threshold, volts.
    pub v_th: f64,
    pub tia: TiaParams,
    pub recurrence_enabled: bool,
    pub droop_rate: f64,
    /// Preset used when a command is not given one.
    pub preset: String,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        let c = Circuit::new(TemperaturePreset::builtin().pop().expect("builtin presets"));
        CircuitConfig {
            v_logic_high: c.v_logic_high,
            pulse_width: c.pulse_width,
            v_th: c.v_th,
            tia: c.tia,
            recurrence_enabled: c.recurrence_enabled,
            droop_rate: c.droop_rate,
            preset: c.preset.name,
        }
    }
}

/// Weights as nested row lists, bias row last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub w_in: Vec<Vec<f64>>,
    pub w_rec: Vec<Vec<f64>>,
    pub w_out: Vec<Vec<f64>>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let w = pipeline::demo_weights();
        WeightsConfig { w_in: w.w_in.to_rows(), w_rec: w.w_rec.to_rows(), w_out: w.w_out.to_rows() }
    }
}

impl WeightsConfig {
    pub fn to_weights(&self) -> Result<NetworkWeights, ConfigError> {
        let m = |key: &str, rows: &[Vec<f64>]| Matrix::from_rows(rows).map_err(|e| invalid(key, e));
        let w = NetworkWeights {
            w_in: m("demo.w_in", &self.w_in)?,
            w_rec: m("demo.w_rec", &self.w_rec)?,
            w_out: m("demo.w_out", &self.w_out)?,
        };
        w.check_shape().map_err(|e| invalid("demo", e))?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Repetitions averaged by the programming sweep.
    pub n_runs: usize,
    /// Pulses in each of the depression and potentiation trains.
    pub n_pulses: usize,
    pub amplitude: f64,
    pub width: f64,
    /// Half-width of the sigmoid sweep, amperes.
    pub i_max: f64,
    pub n_points: usize,
    /// Waveform sampling period, seconds.
    pub sample_period: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_runs: 10,
            n_pulses: 100,
            amplitude: 1.5,
            width: 1e-6,
            i_max: 500e-6,
            n_points: 1001,
            sample_period: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QecConfig {
    pub distance: usize,
    pub rounds: usize,
    pub p: f64,
    pub q: f64,
    /// Traces written by `qec gen` and used for training.
    pub train_traces: usize,
    /// Monte Carlo trials for `qec eval`.
    pub trials: usize,
    /// Current scale of the training logit, amperes.
    pub out_scale: f64,
    /// Relative write-verify tolerance used by `qec compile`.
    pub program_tolerance: f64,
    /// Preset the surrogate is trained for and the hardware is run at.
    pub preset: String,
    pub train: TrainConfig,
}

impl Default for QecConfig {
    fn default() -> Self {
        QecConfig {
            distance: 3,
            rounds: 3,
            p: 0.05,
            q: 0.02,
            train_traces: 2000,
            trials: 10_000,
            out_scale: 1e-6,
            program_tolerance: 0.01,
            preset: "300K".into(),
            train: TrainConfig::default(),
        }
    }
}

impl QecConfig {
    pub fn code(&self) -> Result<RepetitionCode, ConfigError> {
        RepetitionCode::new(self.distance).map_err(|e| invalid("qec.distance", e))
    }

    pub fn noise(&self) -> Result<NoiseModel, ConfigError> {
        NoiseModel::new(self.p, self.q).map_err(|e| invalid("qec.p/qec.q", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub device: MemristorParams,
    pub crossbar: CrossbarConfig,
    pub programming: WriteVerify,
    pub circuit: CircuitConfig,
    pub demo: WeightsConfig,
    pub sweep: SweepConfig,
    pub qec: QecConfig,
    pub presets: Vec<TemperaturePreset>,
    pub power: Vec<PowerEntryConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            device: MemristorParams::default(),
            crossbar: CrossbarConfig::default(),
            programming: WriteVerify::default(),
            circuit: CircuitConfig::default(),
            demo: WeightsConfig::default(),
            sweep: SweepConfig::default(),
            qec: QecConfig::default(),
            presets: TemperaturePreset::builtin(),
            power: PowerTable::default_config(),
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("{x} must be finite and > 0")))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates; `origin` labels diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            ConfigError::Syntax {
                origin: origin.to_string(),
                line,
                column,
                message: e.message().replace('\n', " ").trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.device.validate().map_err(|e| invalid("device", e))?;
        self.programming.validate(&self.device).map_err(|e| invalid("programming", e))?;

        positive("crossbar.k", self.crossbar.k)?;
        if !self.crossbar.v_clamp.is_finite() {
            return Err(invalid("crossbar.v_clamp", "must be finite"));
        }

        let c = &self.circuit;
        positive("circuit.pulse_width", c.pulse_width)?;
        positive("circuit.tia.r_f", c.tia.r_f)?;
        if !(c.droop_rate.is_finite() && c.droop_rate >= 0.0) {
            return Err(invalid("circuit.droop_rate", format!("{} must be >= 0", c.droop_rate)));
        }
        let drive = c.v_logic_high - self.crossbar.v_clamp;
        if !(0.0..=crate::crossbar::MAX_DRIVE + crate::crossbar::DRIVE_SLACK).contains(&drive) {
            return Err(invalid(
                "circuit.v_logic_high",
                format!(
                    "logic-high drive {drive} V across the devices is outside [0, {}] V",
                    crate::crossbar::MAX_DRIVE
                ),
            ));
        }

        if self.presets.is_empty() {
            return Err(invalid("presets", "at least one preset is required"));
        }
        for (i, p) in self.presets.iter().enumerate() {
            p.validate().map_err(|e| invalid(&format!("presets[{i}]"), e))?;
            if self.presets[..i].iter().any(|q| q.name == p.name) {
                return Err(invalid(&format!("presets[{i}].name"), format!("duplicate preset {:?}", p.name)));
            }
        }
        self.preset(&c.preset).map_err(|_| invalid("circuit.preset", format!("no preset named {:?}", c.preset)))?;
        PowerTable::from_config(&self.power).map_err(|e| invalid("power", e))?;

        let demo = self.demo.to_weights()?;
        let w_max = (self.device.g_max - self.device.g_min) / self.crossbar.k;
        if demo.max_abs() > w_max * (1.0 + 1e-12) {
            return Err(invalid("demo", format!("weight magnitude {} exceeds representable {w_max}", demo.max_abs())));
        }

        let s = &self.sweep;
        if s.n_runs == 0 {
            return Err(invalid("sweep.n_runs", "must be >= 1"));
        }
        if !(s.amplitude.is_finite() && s.amplitude >= 0.0) {
            return Err(invalid("sweep.amplitude", "must be >= 0"));
        }
        positive("sweep.width", s.width)?;
        positive("sweep.i_max", s.i_max)?;
        positive("sweep.sample_period", s.sample_period)?;
        if s.n_points < 2 {
            return Err(invalid("sweep.n_points", "must be >= 2"));
        }

        let q = &self.qec;
        q.code()?;
        q.noise()?;
        if q.rounds == 0 {
            return Err(invalid("qec.rounds", "must be >= 1"));
        }
        if q.train_traces == 0 {
            return Err(invalid("qec.train_traces", "must be >= 1"));
        }
        if q.trials == 0 {
            return Err(invalid("qec.trials", "must be >= 1"));
        }
        positive("qec.out_scale", q.out_scale)?;
        positive("qec.program_tolerance", q.program_tolerance)?;
        self.preset(&q.preset).map_err(|_| invalid("qec.preset", format!("no preset named {:?}", q.preset)))?;
        let t = &q.train;
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return Err(invalid("qec.train.learning_rate", "must be >= 0"));
        }
        if !(t.weight_noise_sigma.is_finite() && t.weight_noise_sigma >= 0.0) {
            return Err(invalid("qec.train.weight_noise_sigma", "must be >= 0"));
        }
        if !(t.init_scale.is_finite() && t.init_scale >= 0.0) {
            return Err(invalid("qec.train.init_scale", "must be >= 0"));
        }
        if t.n_hidden == 0 {
            return Err(invalid("qec.train.n_hidden", "must be >= 1"));
        }
        Ok(())
    }

    pub fn preset(&self, name: &str) -> Result<TemperaturePreset, ConfigError> {
        self.presets
            .iter()
            .find(|p| p.name == name)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
    }

    pub fn mapping(&self) -> Mapping {
        Mapping {
            params: self.device,
            k: self.crossbar.k,
            scheme: self.crossbar.scheme,
            v_clamp: self.crossbar.v_clamp,
        }
    }

    pub fn circuit(&self, preset: &str) -> Result<Circuit, ConfigError> {
        let c = &self.circuit;
        Ok(Circuit {
            v_logic_high: c.v_logic_high,
            pulse_width: c.pulse_width,
            v_th: c.v_th,
            tia: c.tia,
            preset: self.preset(preset)?,
            recurrence_enabled: c.recurrence_enabled,
            read_noise: self.crossbar.read_noise,
            droop_rate: c.droop_rate,
        })
    }

    pub fn power_table(&self) -> PowerTable {
        PowerTable::from_config(&self.power).expect("validated at load")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("", "t").unwrap(), Config::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let text = Config::default().to_toml();
        assert_eq!(Config::parse(&text, "t").unwrap(), Config::default());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Config::parse("[device]\ng_min = 1e-5\ng_mxa = 1e-4\n", "cfg.toml").unwrap_err();
        match err {
            ConfigError::Syntax { line, ref message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("g_mxa"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(!err.to_string().contains('\n'));
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(matches!(Config::parse("[devices]\n", "t"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let err = Config::parse("[device]\ng_min = 2e-4\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "device"), "{err}");
        let err = Config::parse("[qec]\npreset = \"10K\"\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "qec.preset"), "{err}");
        let err = Config::parse("[circuit]\nv_logic_high = 3.3\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "circuit.v_logic_high"), "{err}");
    }

    #[test]
    fn presets_and_power_are_overridable() {
        let text = r#"
[circuit]
preset = "cold"

[qec]
preset = "cold"

[[presets]]
name = "cold"
temperature = 2.0
sigmoid = { v_max = 1.8, i_mid = 0.0, i_scale = 4e-5, i_offset = 0.0 }

[[power]]
name = "cold"
p_1v8 = 1e-3
p_3v3 = 2e-3
"#;
        let cfg = Config::parse(text, "t").unwrap();
        assert_eq!(cfg.presets.len(), 1);
        assert_eq!(cfg.preset("cold").unwrap().delay, 100e-9);
        assert_eq!(cfg.power_table().report("cold").unwrap().total.to_string(), "3e-3");
        assert!(matches!(cfg.preset("300K"), Err(ConfigError::UnknownPreset(_))));
    }
}
