//! Behavioral models of the decoder's analog blocks.
//!
//! Everything here is a pure function except [`CurrentMemoryCell`], which is a
//! plain value threaded through the pipeline. Temperature enters only through
//! the parameters bundled in a [`TemperaturePreset`].

use serde::{Deserialize, Serialize};

pub type Bit = u8;

pub const SUPPLY_LOW: f64 = 1.2;
pub const SUPPLY_MID: f64 = 1.8;
pub const SUPPLY_HIGH: f64 = 3.3;
pub const BUFFER_GAIN: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalogError {
    #[error("voltage buffer input {0} V outside [0, {SUPPLY_MID}] V")]
    BufferRange(f64),
    #[error("release requested on an unlatched memory cell")]
    ReleaseWithoutLatch,
    #[error("release at t={release} s precedes latch at t={latch} s")]
    TimeOrder { latch: f64, release: f64 },
    #[error("invalid analog parameter: {0}")]
    InvalidParams(String),
}

/// Logistic transfer of the resistive sigmoid neuron, current in, volts out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmoidParams {
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default)]
    pub i_mid: f64,
    pub i_scale: f64,
    /// Process-variation offset added to the midpoint.
    #[serde(default)]
    pub i_offset: f64,
}

fn default_v_max() -> f64 {
    SUPPLY_MID
}

impl SigmoidParams {
    pub fn new(i_scale: f64) -> Self {
        SigmoidParams { v_max: SUPPLY_MID, i_mid: 0.0, i_scale, i_offset: 0.0 }
    }

    pub fn validate(&self) -> Result<(), AnalogError> {
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(AnalogError::InvalidParams(format!("v_max={} must be > 0", self.v_max)));
        }
        if !(self.i_scale.is_finite() && self.i_scale > 0.0) {
            return Err(AnalogError::InvalidParams(format!("i_scale={} must be > 0", self.i_scale)));
        }
        if !(self.i_mid.is_finite() && self.i_offset.is_finite()) {
            return Err(AnalogError::InvalidParams("non-finite sigmoid midpoint".into()));
        }
        Ok(())
    }

    /// Slope at the midpoint, V/A.
    pub fn midpoint_slope(&self) -> f64 {
        self.v_max / (4.0 * self.i_scale)
    }

    fn centre(&self) -> f64 {
        self.i_mid + self.i_offset
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `v_max / (1 + exp(-(i - i_mid - i_offset) / i_scale))`.
///
/// The result stays strictly inside `(0, v_max)` even where the logistic
/// rounds to 0 or 1, so downstream range checks never see a rail.
pub fn sigmoid_v(i: f64, p: &SigmoidParams) -> f64 {
    let v = p.v_max * logistic((i - p.centre()) / p.i_scale);
    v.clamp(f64::MIN_POSITIVE, p.v_max.next_down())
}

/// `d sigmoid_v / d i`, V/A.
pub fn sigmoid_dv_di(i: f64, p: &SigmoidParams) -> f64 {
    let s = logistic((i - p.centre()) / p.i_scale);
    p.v_max * s * (1.0 - s) / p.i_scale
}

/// Sample the transfer curve on `n + 1` evenly spaced currents in `[-i_max, i_max]`.
pub fn sigmoid_sweep(p: &SigmoidParams, i_max: f64, n: usize) -> Vec<(f64, f64)> {
    let half = n as f64 / 2.0;
    (0..=n)
        .map(|k| {
            // centred index so the sweep hits 0 A exactly for even n
            let i = (k as f64 - half) / half * i_max;
            (i, sigmoid_v(i, p))
        })
        .collect()
}

/// 1/3-gain buffer mapping the sigmoid's 0..1.8 V onto 1.2..1.8 V.
pub fn voltage_buffer(v: f64) -> Result<f64, AnalogError> {
    if !(0.0..=SUPPLY_MID).contains(&v) {
        return Err(AnalogError::BufferRange(v));
    }
    Ok(SUPPLY_LOW + v / 3.0)
}

/// Two-trigger analog current memory: `latch` samples, `release` returns the
/// held current and frees the cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentMemoryCell {
    pub stored: f64,
    pub latched: bool,
    pub latch_time: f64,
    /// First-order leak of the storage capacitor, 1/s.
    pub droop_rate: f64,
}

impl CurrentMemoryCell {
    pub fn with_droop(droop_rate: f64) -> Self {
        CurrentMemoryCell { droop_rate, ..Default::default() }
    }

    /// Storage trigger. Latching an already-latched cell overwrites it.
    pub fn latch(self, i: f64, t: f64) -> Self {
        CurrentMemoryCell { stored: i, latched: true, latch_time: t, droop_rate: self.droop_rate }
    }

    /// Release trigger.
    pub fn release(self, t: f64) -> Result<(f64, Self), AnalogError> {
        if !self.latched {
            return Err(AnalogError::ReleaseWithoutLatch);
        }
        if t < self.latch_time {
            return Err(AnalogError::TimeOrder { latch: self.latch_time, release: t });
        }
        let held = if self.droop_rate == 0.0 {
            self.stored
        } else {
            self.stored * (-self.droop_rate * (t - self.latch_time)).exp()
        };
        Ok((held, CurrentMemoryCell { stored: 0.0, latched: false, ..self }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiaParams {
    /// Feedback resistance, ohms.
    pub r_f: f64,
    pub v_ref: f64,
}

impl Default for TiaParams {
    fn default() -> Self {
        TiaParams { r_f: 10e3, v_ref: 0.9 }
    }
}

/// Transimpedance amplifier, `v_ref + i * r_f` clipped to the 0..3.3 V rails.
pub fn tia(i: f64, r_f: f64, v_ref: f64) -> f64 {
    debug_assert!(r_f > 0.0);
    (v_ref + i * r_f).clamp(0.0, SUPPLY_HIGH)
}

/// Strict comparison; a tie reads as 0.
pub fn comparator(v: f64, v_th: f64) -> Bit {
    Bit::from(v > v_th)
}

/// One cryostat operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperaturePreset {
    pub name: String,
    /// Kelvin.
    pub temperature: f64,
    pub sigmoid: SigmoidParams,
    #[serde(default = "default_delay")]
    pub delay: f64,
    #[serde(default)]
    pub tau_rise: f64,
    #[serde(default)]
    pub tau_fall: f64,
}

fn default_delay() -> f64 {
    100e-9
}

impl TemperaturePreset {
    pub fn validate(&self) -> Result<(), AnalogError> {
        self.sigmoid.validate()?;
        for (name, x) in [("delay", self.delay), ("tau_rise", self.tau_rise), ("tau_fall", self.tau_fall)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(AnalogError::InvalidParams(format!("preset {}: {name}={x} must be >= 0", self.name)));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(AnalogError::InvalidParams(format!("preset {}: temperature must be > 0", self.name)));
        }
        Ok(())
    }

    /// The five shipped operating points. Colder presets get a narrower
    /// logistic (steeper linear regime); 4.2K has the slow falling edge.
    pub fn builtin() -> Vec<TemperaturePreset> {
        let mk = |name: &str, temperature: f64, i_scale: f64, tau_fall: f64| TemperaturePreset {
            name: name.to_string(),
            temperature,
            sigmoid: SigmoidParams::new(i_scale),
            delay: 100e-9,
            tau_rise: 40e-9,
            tau_fall,
        };
        vec![
            mk("1.2K", 1.2, 50e-6, 60e-9),
            mk("4.2K", 4.2, 60e-6, 120e-9),
            mk("35K", 35.0, 100e-6, 60e-9),
            mk("77K", 77.0, 120e-6, 60e-9),
            mk("300K", 300.0, 150e-6, 60e-9),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p300() -> SigmoidParams {
        SigmoidParams::new(150e-6)
    }

    #[test]
    fn logistic_midpoint() {
        let p = SigmoidParams { i_mid: 20e-6, i_offset: -5e-6, ..p300() };
        assert_eq!(sigmoid_v(15e-6, &p), 0.9);
    }

    #[test]
    fn ten_scales_above_midpoint_is_near_rail() {
        let p = p300();
        let v = sigmoid_v(10.0 * p.i_scale, &p);
        assert!((v - 1.8).abs() <= 1e-4 * 1.8);
        assert!(v < 1.8);
        assert!(sigmoid_v(1.0, &p) < p.v_max);
        assert!(sigmoid_v(-1.0, &p) > 0.0);
    }

    #[test]
    fn colder_preset_is_steeper() {
        let presets = TemperaturePreset::builtin();
        let slope = |n: &str| presets.iter().find(|p| p.name == n).unwrap().sigmoid.midpoint_slope();
        assert!(slope("1.2K") > slope("300K"));
        assert_eq!(slope("300K"), 1.8 / (4.0 * 150e-6));
        for w in presets.windows(2) {
            assert!(w[0].sigmoid.i_scale < w[1].sigmoid.i_scale);
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let p = SigmoidParams { i_offset: 12e-6, ..SigmoidParams::new(60e-6) };
        for k in 0..100 {
            let i = -500e-6 + k as f64 * 10e-6;
            let h = 1e-9;
            let numeric = (sigmoid_v(i + h, &p) - sigmoid_v(i - h, &p)) / (2.0 * h);
            let analytic = sigmoid_dv_di(i, &p);
            assert!((numeric - analytic).abs() <= 1e-6 * analytic.abs(), "i={i}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn buffer_endpoints_and_range() {
        assert!((voltage_buffer(0.0).unwrap() - 1.2).abs() <= 1e-12);
        assert!((voltage_buffer(1.8).unwrap() - 1.8).abs() <= 1e-12);
        assert!((voltage_buffer(0.9).unwrap() - 1.5).abs() <= 1e-12);
        assert_eq!(voltage_buffer(1.9), Err(AnalogError::BufferRange(1.9)));
        assert!(voltage_buffer(-0.1).is_err());
    }

    #[test]
    fn memory_round_trip() {
        for i in [42e-6, -15e-6, 0.0] {
            let cell = CurrentMemoryCell::default().latch(i, 1e-6);
            let (out, after) = cell.release(3e-6).unwrap();
            assert_eq!(out, i);
            assert!(!after.latched);
        }
    }

    #[test]
    fn memory_protocol_errors() {
        assert_eq!(CurrentMemoryCell::default().release(0.0), Err(AnalogError::ReleaseWithoutLatch));
        let cell = CurrentMemoryCell::default().latch(1e-6, 2e-6);
        assert!(matches!(cell.release(1e-6), Err(AnalogError::TimeOrder { .. })));
        let (_, freed) = cell.release(2e-6).unwrap();
        assert_eq!(freed.release(3e-6), Err(AnalogError::ReleaseWithoutLatch));
    }

    #[test]
    fn memory_droop_is_exponential() {
        let cell = CurrentMemoryCell::with_droop(1e3).latch(30e-6, 0.5e-3);
        let (out, _) = cell.release(1.5e-3).unwrap();
        assert!((out - 30e-6 * (-1.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn tia_and_comparator() {
        assert_eq!(tia(0.0, 10e3, 0.9), 0.9);
        assert!((tia(100e-6, 10e3, 0.9) - 1.9).abs() < 1e-12);
        assert_eq!(tia(1.0, 10e3, 0.9), 3.3);
        assert_eq!(tia(-1.0, 10e3, 0.9), 0.0);
        assert_eq!(comparator(1.001, 1.0), 1);
        assert_eq!(comparator(0.999, 1.0), 0);
        assert_eq!(comparator(1.0, 1.0), 0);
    }

    #[test]
    fn sweep_hits_zero_current() {
        let s = sigmoid_sweep(&p300(), 500e-6, 1000);
        assert_eq!(s.len(), 1001);
        assert_eq!(s[0].0, -500e-6);
        assert_eq!(s[500], (0.0, 0.9));
        assert_eq!(s[1000].0, 500e-6);
        for preset in TemperaturePreset::builtin() {
            let s = sigmoid_sweep(&preset.sigmoid, 500e-6, 1000);
            assert!(s.windows(2).all(|w| w[1].1 > w[0].1), "{}", preset.name);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_bounded_and_monotone(a in -1e-3f64..1e-3, b in -1e-3f64..1e-3, scale in 10e-6f64..300e-6) {
            let p = SigmoidParams::new(scale);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (vl, vh) = (sigmoid_v(lo, &p), sigmoid_v(hi, &p));
            prop_assert!(vl > 0.0 && vh < p.v_max);
            prop_assert!(vl <= vh);
        }

        #[test]
        fn buffer_is_affine(a in 0.0f64..0.9, b in 0.0f64..0.9) {
            let lhs = voltage_buffer(a).unwrap() + voltage_buffer(b).unwrap() - voltage_buffer(0.0).unwrap();
            prop_assert!((lhs - voltage_buffer(a + b).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn comparator_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, th in -1.0f64..4.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(comparator(lo, th) <= comparator(hi, th));
        }
    }
}
