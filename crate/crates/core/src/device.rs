//! Stochastic behavioral model of one metal-oxide memristor.
//!
//! Conductance moves under programming pulses according to a multiplicative
//! window law: a potentiating pulse closes a fixed fraction of the remaining
//! gap to `g_max`, a depressing pulse closes a fixed fraction of the gap to
//! `g_min`. Steps therefore shrink near the bounds and the device saturates
//! instead of overshooting. Cycle-to-cycle variation scales each step by
//! `1 + eta` with `eta ~ N(0, sigma_c2c)`; reads are non-destructive and carry
//! multiplicative Gaussian noise.
//!
//! Pulse width is accepted and validated but does not enter the update law.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error(
        "read voltage {v_read} V is not below the switching threshold {v_switch} V; the read would disturb the device"
    )]
    DestructiveRead { v_read: f64, v_switch: f64 },
    #[error("target conductance {target:e} S outside device range [{g_min:e}, {g_max:e}] S")]
    OutOfRange { target: f64, g_min: f64, g_max: f64 },
    #[error("write-verify did not converge after {pulses} pulses (target {target:e} S, last read {last_read:e} S)")]
    Convergence { state: MemristorState, pulses: usize, target: f64, last_read: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemristorParams {
    pub g_min: f64,
    pub g_max: f64,
    pub a_pot: f64,
    pub a_dep: f64,
    pub v_switch: f64,
    pub sigma_c2c: f64,
    pub sigma_read: f64,
}

impl Default for MemristorParams {
    fn default() -> Self {
        MemristorParams {
            g_min: 10e-6,
            g_max: 100e-6,
            a_pot: 0.02,
            a_dep: 0.02,
            v_switch: 1.0,
            sigma_c2c: 0.05,
            sigma_read: 0.01,
        }
    }
}

impl MemristorParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let all = [self.g_min, self.g_max, self.a_pot, self.a_dep, self.v_switch, self.sigma_c2c, self.sigma_read];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(DeviceError::InvalidParams("non-finite value".into()));
        }
        if !(0.0 < self.g_min && self.g_min < self.g_max) {
            return Err(DeviceError::InvalidParams(format!(
                "need 0 < g_min < g_max, got g_min={:e}, g_max={:e}",
                self.g_min, self.g_max
            )));
        }
        for (name, a) in [("a_pot", self.a_pot), ("a_dep", self.a_dep)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(DeviceError::InvalidParams(format!("{name}={a} outside [0, 1]")));
            }
        }
        if self.sigma_c2c < 0.0 || self.sigma_read < 0.0 {
            return Err(DeviceError::InvalidParams("noise sigmas must be non-negative".into()));
        }
        if self.v_switch <= 0.0 {
            return Err(DeviceError::InvalidParams(format!("v_switch={} must be > 0", self.v_switch)));
        }
        Ok(())
    }

    /// Same device with all stochastic terms disabled.
    pub fn noiseless(&self) -> Self {
        MemristorParams { sigma_c2c: 0.0, sigma_read: 0.0, ..*self }
    }

    pub fn g_mid(&self) -> f64 {
        0.5 * (self.g_min + self.g_max)
    }

    pub fn clamp(&self, g: f64) -> f64 {
        g.clamp(self.g_min, self.g_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    /// Conductance increase.
    #[serde(rename = "+")]
    Potentiate,
    /// Conductance decrease.
    #[serde(rename = "-")]
    Depress,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Potentiate => "+",
            Polarity::Depress => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub polarity: Polarity,
    /// Magnitude in volts; the sign is carried by `polarity`.
    pub amplitude: f64,
    pub width: f64,
}

impl Pulse {
    pub fn new(polarity: Polarity, amplitude: f64, width: f64) -> Self {
        Pulse { polarity, amplitude, width }
    }

    fn validate(&self) -> Result<(), DeviceError> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(DeviceError::InvalidPulse(format!("amplitude {} must be >= 0", self.amplitude)));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(DeviceError::InvalidPulse(format!("width {} must be > 0", self.width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorState {
    /// Conductance in siemens.
    pub g: f64,
    pub pulses_applied: u64,
}

impl MemristorState {
    pub fn new(g: f64, params: &MemristorParams) -> Result<Self, DeviceError> {
        params.validate()?;
        if !(g.is_finite() && params.g_min <= g && g <= params.g_max) {
            return Err(DeviceError::OutOfRange { target: g, g_min: params.g_min, g_max: params.g_max });
        }
        Ok(MemristorState { g, pulses_applied: 0 })
    }

    /// Fresh device in its lowest-conductance state.
    pub fn at_min(params: &MemristorParams) -> Self {
        MemristorState { g: params.g_min, pulses_applied: 0 }
    }
}

fn normal(rng: &mut SimRng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Apply one programming pulse.
///
/// Sub-threshold pulses leave the state untouched and draw nothing from `rng`;
/// every effective pulse draws exactly one normal variate.
pub fn apply_pulse(
    state: MemristorState,
    pulse: Pulse,
    params: &MemristorParams,
    rng: &mut SimRng,
) -> Result<MemristorState, DeviceError> {
    params.validate()?;
    pulse.validate()?;
    if pulse.amplitude < params.v_switch {
        return Ok(state);
    }
    let eta = normal(rng, params.sigma_c2c);
    let g = state.g;
    let next = match pulse.polarity {
        Polarity::Potentiate => g + params.a_pot * (params.g_max - g) * (1.0 + eta),
        Polarity::Depress => g - params.a_dep * (g - params.g_min) * (1.0 + eta),
    };
    Ok(MemristorState { g: params.clamp(next), pulses_applied: state.pulses_applied + 1 })
}

/// Apply `n` identical pulses, recording the conductance after each one.
pub fn apply_pulse_train(
    mut state: MemristorState,
    n: usize,
    pulse: Pulse,
    params: &MemristorParams,
    rng: &mut SimRng,
) -> Result<(MemristorState, Vec<f64>), DeviceError> {
    params.validate()?;
    pulse.validate()?;
    let mut trajectory = Vec::with_capacity(n);
    for _ in 0..n {
        state = apply_pulse(state, pulse, params, rng)?;
        trajectory.push(state.g);
    }
    Ok((state, trajectory))
}

/// Non-destructive read at `v_read`. Does not mutate the device.
pub fn read_conductance(
    state: &MemristorState,
    v_read: f64,
    params: &MemristorParams,
    rng: &mut SimRng,
) -> Result<f64, DeviceError> {
    params.validate()?;
    if !(v_read.is_finite() && v_read > 0.0) {
        return Err(DeviceError::InvalidPulse(format!("read voltage {v_read} must be > 0")));
    }
    if v_read >= params.v_switch {
        return Err(DeviceError::DestructiveRead { v_read, v_switch: params.v_switch });
    }
    Ok(state.g * (1.0 + normal(rng, params.sigma_read)))
}

/// Closed-loop write-verify settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WriteVerify {
    /// Accept when `|read - target| <= tolerance * target`.
    pub tolerance: f64,
    pub max_pulses: usize,
    pub v_write: f64,
    pub v_read: f64,
    pub pulse_width: f64,
}

impl Default for WriteVerify {
    fn default() -> Self {
        WriteVerify { tolerance: 0.02, max_pulses: 1000, v_write: 1.5, v_read: 0.2, pulse_width: 1e-6 }
    }
}

impl WriteVerify {
    pub fn with_tolerance(tolerance: f64) -> Self {
        WriteVerify { tolerance, ..Default::default() }
    }

    /// Checks the settings against the devices they will be used on.
    pub fn validate(&self, params: &MemristorParams) -> Result<(), DeviceError> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(DeviceError::InvalidParams(format!("tolerance {} must be > 0", self.tolerance)));
        }
        if !(self.v_read.is_finite() && self.v_read > 0.0) {
            return Err(DeviceError::InvalidParams(format!("v_read {} must be > 0", self.v_read)));
        }
        if self.v_read >= params.v_switch {
            return Err(DeviceError::DestructiveRead { v_read: self.v_read, v_switch: params.v_switch });
        }
        if !(self.v_write.is_finite() && self.v_write >= params.v_switch) {
            return Err(DeviceError::InvalidParams(format!(
                "v_write {} is below the switching threshold {}",
                self.v_write, params.v_switch
            )));
        }
        Pulse::new(Polarity::Potentiate, self.v_write, self.pulse_width).validate()
    }
}

/// Read, compare, nudge: repeat until a read lands inside the tolerance band.
///
/// Returns the final state and the number of corrective pulses. On failure the
/// error carries the state reached so callers can inspect or keep it.
pub fn program_target(
    mut state: MemristorState,
    g_target: f64,
    wv: &WriteVerify,
    params: &MemristorParams,
    rng: &mut SimRng,
) -> Result<(MemristorState, usize), DeviceError> {
    params.validate()?;
    if !(g_target.is_finite() && params.g_min <= g_target && g_target <= params.g_max) {
        return Err(DeviceError::OutOfRange { target: g_target, g_min: params.g_min, g_max: params.g_max });
    }
    if !(wv.tolerance.is_finite() && wv.tolerance > 0.0) {
        return Err(DeviceError::InvalidParams(format!("tolerance {} must be > 0", wv.tolerance)));
    }
    let band = wv.tolerance * g_target;
    let mut pulses = 0;
    loop {
        let read = read_conductance(&state, wv.v_read, params, rng)?;
        if (read - g_target).abs() <= band {
            return Ok((state, pulses));
        }
        if pulses >= wv.max_pulses {
            return Err(DeviceError::Convergence { state, pulses, target: g_target, last_read: read });
        }
        let polarity = if read < g_target { Polarity::Potentiate } else { Polarity::Depress };
        state = apply_pulse(state, Pulse::new(polarity, wv.v_write, wv.pulse_width), params, rng)?;
        pulses += 1;
    }
}

/// A device together with its own parameter set, as placed in a crossbar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Memristor {
    pub state: MemristorState,
    pub params: MemristorParams,
}

impl Memristor {
    pub fn fresh(params: MemristorParams) -> Self {
        Memristor { state: MemristorState::at_min(&params), params }
    }

    #[inline]
    pub fn g(&self) -> f64 {
        self.state.g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn quiet() -> MemristorParams {
        MemristorParams::default().noiseless()
    }

    fn pot(amplitude: f64) -> Pulse {
        Pulse::new(Polarity::Potentiate, amplitude, 1e-6)
    }

    #[test]
    fn window_closed_at_ceiling() {
        let p = quiet();
        let s = MemristorState { g: p.g_max, pulses_applied: 0 };
        let out = apply_pulse(s, pot(1.5), &p, &mut from_seed(1)).unwrap();
        assert_eq!(out.g, p.g_max);
        assert_eq!(out.pulses_applied, 1);
    }

    #[test]
    fn sub_threshold_pulse_is_a_no_op() {
        let p = MemristorParams::default();
        let s = MemristorState { g: 42e-6, pulses_applied: 3 };
        let out = apply_pulse(s, pot(0.5 * p.v_switch), &p, &mut from_seed(1)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn single_potentiation_step() {
        // 50 uS + 0.02 * (100 - 50) uS = 51 uS
        let p = quiet();
        let s = MemristorState { g: 50e-6, pulses_applied: 0 };
        let out = apply_pulse(s, pot(1.5), &p, &mut from_seed(1)).unwrap();
        assert!((out.g - 51e-6).abs() < 1e-18, "{}", out.g);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = quiet();
        p.g_min = p.g_max;
        let s = MemristorState { g: 50e-6, pulses_applied: 0 };
        assert!(matches!(apply_pulse(s, pot(1.5), &p, &mut from_seed(1)), Err(DeviceError::InvalidParams(_))));
        p = quiet();
        p.sigma_c2c = f64::NAN;
        assert!(matches!(apply_pulse(s, pot(1.5), &p, &mut from_seed(1)), Err(DeviceError::InvalidParams(_))));
        p = quiet();
        p.a_dep = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn negative_amplitude_rejected() {
        let p = quiet();
        let s = MemristorState::at_min(&p);
        assert!(matches!(apply_pulse(s, pot(-1.0), &p, &mut from_seed(1)), Err(DeviceError::InvalidPulse(_))));
        let zero_width = Pulse::new(Polarity::Depress, 1.5, 0.0);
        assert!(apply_pulse(s, zero_width, &p, &mut from_seed(1)).is_err());
    }

    #[test]
    fn empty_train() {
        let p = MemristorParams::default();
        let s = MemristorState { g: 30e-6, pulses_applied: 0 };
        let (out, traj) = apply_pulse_train(s, 0, pot(1.5), &p, &mut from_seed(1)).unwrap();
        assert_eq!(out, s);
        assert!(traj.is_empty());
    }

    #[test]
    fn train_of_two_equals_two_single_pulses() {
        let p = MemristorParams::default();
        let s = MemristorState { g: 30e-6, pulses_applied: 0 };
        let (train, traj) = apply_pulse_train(s, 2, pot(1.5), &p, &mut from_seed(9)).unwrap();
        let mut rng = from_seed(9);
        let a = apply_pulse(s, pot(1.5), &p, &mut rng).unwrap();
        let b = apply_pulse(a, pot(1.5), &p, &mut rng).unwrap();
        assert_eq!(train, b);
        assert_eq!(traj, vec![a.g, b.g]);
    }

    #[test]
    fn depression_then_potentiation_loop() {
        let p = quiet();
        let mut rng = from_seed(0);
        let s = MemristorState { g: p.g_max, pulses_applied: 0 };
        let (s, down) = apply_pulse_train(s, 100, Pulse::new(Polarity::Depress, 1.5, 1e-6), &p, &mut rng).unwrap();
        let (_, up) = apply_pulse_train(s, 100, pot(1.5), &p, &mut rng).unwrap();
        assert!(down.windows(2).all(|w| w[1] <= w[0]));
        assert!(up.windows(2).all(|w| w[1] >= w[0]));
        assert!(down[99] < down[0] && up[99] > up[0]);
    }

    #[test]
    fn noiseless_read_is_exact_and_pure() {
        let p = quiet();
        let s = MemristorState { g: 33e-6, pulses_applied: 5 };
        let before = s;
        assert_eq!(read_conductance(&s, 0.2, &p, &mut from_seed(3)).unwrap(), 33e-6);
        assert_eq!(s, before);
    }

    #[test]
    fn read_at_switch_voltage_is_destructive() {
        let p = MemristorParams::default();
        let s = MemristorState::at_min(&p);
        assert!(matches!(
            read_conductance(&s, p.v_switch, &p, &mut from_seed(3)),
            Err(DeviceError::DestructiveRead { .. })
        ));
    }

    #[test]
    fn mean_read_within_statistical_band() {
        let p = MemristorParams::default();
        let s = MemristorState { g: 60e-6, pulses_applied: 0 };
        let mut rng = from_seed(11);
        let n = 1000;
        let mean = (0..n).map(|_| read_conductance(&s, 0.2, &p, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let band = 3.0 * p.sigma_read * s.g / (n as f64).sqrt();
        assert!((mean - s.g).abs() <= band, "mean {mean:e} band {band:e}");
    }

    #[test]
    fn program_target_already_there() {
        let p = quiet();
        let s = MemristorState { g: 40e-6, pulses_applied: 0 };
        let (out, n) = program_target(s, 40e-6, &WriteVerify::default(), &p, &mut from_seed(1)).unwrap();
        assert_eq!(n, 0);
        assert_eq!(out, s);
    }

    #[test]
    fn program_target_out_of_range() {
        let p = quiet();
        let s = MemristorState::at_min(&p);
        let err = program_target(s, 1.5 * p.g_max, &WriteVerify::default(), &p, &mut from_seed(1)).unwrap_err();
        assert!(matches!(err, DeviceError::OutOfRange { .. }));
    }

    #[test]
    fn program_target_matches_reference_loop() {
        let p = quiet();
        let target = p.g_mid();
        let tol = 0.02;
        let (out, n) = program_target(
            MemristorState::at_min(&p),
            target,
            &WriteVerify::with_tolerance(tol),
            &p,
            &mut from_seed(1),
        )
        .unwrap();

        // Independent loop over the raw update rule.
        let mut g = p.g_min;
        let mut count = 0usize;
        while (g - target).abs() > tol * target {
            if g < target {
                g = (g + p.a_pot * (p.g_max - g)).min(p.g_max);
            } else {
                g = (g - p.a_dep * (g - p.g_min)).max(p.g_min);
            }
            count += 1;
            assert!(count < 10_000);
        }
        assert_eq!(n, count);
        assert_eq!(out.g, g);
    }

    #[test]
    fn stuck_device_fails_to_converge() {
        let p = MemristorParams { a_pot: 0.0, ..quiet() };
        let wv = WriteVerify { max_pulses: 50, ..Default::default() };
        let err = program_target(MemristorState::at_min(&p), p.g_mid(), &wv, &p, &mut from_seed(1)).unwrap_err();
        match err {
            DeviceError::Convergence { state, pulses, .. } => {
                assert_eq!(pulses, 50);
                assert_eq!(state.g, p.g_min);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn positive_mean_step_under_noise() {
        let p = MemristorParams::default();
        let s = MemristorState { g: 40e-6, pulses_applied: 0 };
        let mut rng = from_seed(5);
        let n = 2000;
        let deltas: Vec<f64> = (0..n).map(|_| apply_pulse(s, pot(1.5), &p, &mut rng).unwrap().g - s.g).collect();
        let mean = deltas.iter().sum::<f64>() / n as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean - 3.0 * (var / n as f64).sqrt() > 0.0);
    }
}
