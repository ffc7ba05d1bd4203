//! Round-by-round execution of the recurrent decoder.
//!
//! One round is two-phase. First the input pulses drive the input crossbar,
//! the previous round's latched recurrent currents are released, and the sum
//! passes through the sigmoid and the 1/3 buffer. Then the buffered hidden
//! voltages drive both the recurrent crossbar (whose currents are latched for
//! the next round) and the output crossbar (TIA + comparator).
//!
//! Each crossbar carries one extra row, the last, that is permanently driven
//! at the logic-high drive and realises the layer bias.

use serde::{Deserialize, Serialize};

use crate::analog::{self, AnalogError, Bit, CurrentMemoryCell, TemperaturePreset, TiaParams};
use crate::crossbar::{self, CrossbarError, DifferentialCrossbar, Scheme, WeightSpec};
use crate::device::{MemristorParams, WriteVerify};
use crate::matrix::Matrix;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("expected {expected} input bits, got {found}")]
    InputWidth { expected: usize, found: usize },
    #[error("input value {0} is not a bit")]
    NotABit(u8),
    #[error("inconsistent decoder shape: {0}")]
    Shape(String),
    #[error("invalid circuit setting: {0}")]
    Invalid(String),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error(transparent)]
    Analog(#[from] AnalogError),
}

/// Everything about the chip except the crossbar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub v_logic_high: f64,
    pub pulse_width: f64,
    pub v_th: f64,
    pub tia: TiaParams,
    pub preset: TemperaturePreset,
    pub recurrence_enabled: bool,
    /// Apply per-device read noise on every crossbar evaluation.
    pub read_noise: bool,
    /// Leak rate of the current memory cells, 1/s.
    pub droop_rate: f64,
}

impl Circuit {
    pub fn new(preset: TemperaturePreset) -> Self {
        Circuit {
            v_logic_high: analog::SUPPLY_MID,
            pulse_width: 1e-6,
            v_th: 0.9,
            tia: TiaParams::default(),
            preset,
            recurrence_enabled: true,
            read_noise: false,
            droop_rate: 0.0,
        }
    }

    /// Wall-clock length of one round, also used for energy accounting.
    pub fn round_duration(&self) -> f64 {
        self.pulse_width + self.preset.delay
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub input_xbar: DifferentialCrossbar,
    pub recurrent_xbar: DifferentialCrossbar,
    pub output_xbar: DifferentialCrossbar,
    pub circuit: Circuit,
}

/// Signed weights of the three layers, bias row last in each matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub w_out: Matrix,
}

impl NetworkWeights {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        NetworkWeights {
            w_in: Matrix::zeros(n_in + 1, n_hidden),
            w_rec: Matrix::zeros(n_hidden + 1, n_hidden),
            w_out: Matrix::zeros(n_hidden + 1, n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w_in.rows() - 1
    }

    pub fn n_hidden(&self) -> usize {
        self.w_in.cols()
    }

    pub fn n_out(&self) -> usize {
        self.w_out.cols()
    }

    pub fn layers(&self) -> [(&'static str, &Matrix); 3] {
        [("input", &self.w_in), ("recurrent", &self.w_rec), ("output", &self.w_out)]
    }

    pub fn check_shape(&self) -> Result<(), PipelineError> {
        let (n_h, n_out) = (self.w_in.cols(), self.w_out.cols());
        if self.w_in.rows() < 2 || n_h == 0 || n_out == 0 {
            return Err(PipelineError::Shape("empty layer".into()));
        }
        if self.w_rec.rows() != n_h + 1 || self.w_rec.cols() != n_h {
            return Err(PipelineError::Shape(format!(
                "recurrent weights {}x{}, expected {}x{}",
                self.w_rec.rows(),
                self.w_rec.cols(),
                n_h + 1,
                n_h
            )));
        }
        if self.w_out.rows() != n_h + 1 {
            return Err(PipelineError::Shape(format!(
                "output weights have {} rows, expected {}",
                self.w_out.rows(),
                n_h + 1
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.layers().iter().flat_map(|(_, m)| m.as_slice().iter()).fold(0.0, |a, &b| a.max(b.abs()))
    }
}

/// How abstract weights become conductances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mapping {
    pub params: MemristorParams,
    /// Siemens per unit weight.
    pub k: f64,
    pub scheme: Scheme,
    pub v_clamp: f64,
}

impl Mapping {
    fn targets(&self, w: &Matrix) -> Result<(Matrix, Matrix), CrossbarError> {
        crossbar::compile_weights(&WeightSpec { w: w.clone(), k: self.k, scheme: self.scheme }, &self.params)
    }
}

impl DecoderConfig {
    /// Crossbars set exactly to their compiled targets (fixed-resistor mode).
    pub fn from_weights_ideal(
        weights: &NetworkWeights,
        map: &Mapping,
        circuit: Circuit,
    ) -> Result<Self, PipelineError> {
        weights.check_shape()?;
        let build = |w: &Matrix| -> Result<DifferentialCrossbar, CrossbarError> {
            let (tp, tm) = map.targets(w)?;
            let mut x = DifferentialCrossbar::from_conductances(map.params, &tp, &tm)?;
            x.v_clamp = map.v_clamp;
            Ok(x)
        };
        let cfg = DecoderConfig {
            n_in: weights.n_in(),
            n_hidden: weights.n_hidden(),
            n_out: weights.n_out(),
            input_xbar: build(&weights.w_in)?,
            recurrent_xbar: build(&weights.w_rec)?,
            output_xbar: build(&weights.w_out)?,
            circuit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Crossbars written device by device with write-verify from a fresh
    /// (all `g_min`) array. Cells that fail to converge are kept as reached;
    /// the returned reports say which.
    pub fn from_weights_programmed(
        weights: &NetworkWeights,
        map: &Mapping,
        circuit: Circuit,
        wv: &WriteVerify,
        rng: &mut SimRng,
    ) -> Result<(Self, [crossbar::ProgrammingReport; 3]), PipelineError> {
        weights.check_shape()?;
        let mut program = |w: &Matrix| -> Result<(DifferentialCrossbar, crossbar::ProgrammingReport), CrossbarError> {
            let (tp, tm) = map.targets(w)?;
            let mut x = DifferentialCrossbar::fresh(w.rows(), w.cols(), map.params);
            x.v_clamp = map.v_clamp;
            let report = match crossbar::program_crossbar(&mut x, &tp, &tm, wv, rng) {
                Ok(r) => r,
                Err(CrossbarError::PartialFailure(r)) => r,
                Err(e) => return Err(e),
            };
            Ok((x, report))
        };
        let (input_xbar, r_in) = program(&weights.w_in)?;
        let (recurrent_xbar, r_rec) = program(&weights.w_rec)?;
        let (output_xbar, r_out) = program(&weights.w_out)?;
        let cfg = DecoderConfig {
            n_in: weights.n_in(),
            n_hidden: weights.n_hidden(),
            n_out: weights.n_out(),
            input_xbar,
            recurrent_xbar,
            output_xbar,
            circuit,
        };
        cfg.validate()?;
        Ok((cfg, [r_in, r_rec, r_out]))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let check = |name: &str, x: &DifferentialCrossbar, rows: usize, cols: usize| {
            if x.n_in() != rows || x.n_out() != cols {
                return Err(PipelineError::Shape(format!(
                    "{name} crossbar is {}x{}, expected {rows}x{cols}",
                    x.n_in(),
                    x.n_out()
                )));
            }
            Ok(())
        };
        check("input", &self.input_xbar, self.n_in + 1, self.n_hidden)?;
        check("recurrent", &self.recurrent_xbar, self.n_hidden + 1, self.n_hidden)?;
        check("output", &self.output_xbar, self.n_hidden + 1, self.n_out)?;
        self.circuit.preset.validate()?;
        let c = &self.circuit;
        if !(c.pulse_width.is_finite() && c.pulse_width > 0.0) {
            return Err(PipelineError::Invalid(format!("pulse_width {} must be > 0", c.pulse_width)));
        }
        if !(c.tia.r_f.is_finite() && c.tia.r_f > 0.0) {
            return Err(PipelineError::Invalid(format!("TIA feedback resistance {} must be > 0", c.tia.r_f)));
        }
        if !(c.droop_rate.is_finite() && c.droop_rate >= 0.0) {
            return Err(PipelineError::Invalid(format!("droop_rate {} must be >= 0", c.droop_rate)));
        }
        if c.preset.sigmoid.v_max > analog::SUPPLY_MID {
            return Err(PipelineError::Invalid(format!(
                "sigmoid v_max {} V exceeds the buffer input range",
                c.preset.sigmoid.v_max
            )));
        }
        Ok(())
    }

    /// Row drive for a logic-high pulse (and for the bias row).
    pub fn high_drive(&self) -> f64 {
        self.circuit.v_logic_high - self.input_xbar.v_clamp
    }

    pub fn with_preset(&self, preset: TemperaturePreset) -> Self {
        let mut c = self.clone();
        c.circuit.preset = preset;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub memory: Vec<CurrentMemoryCell>,
    pub round_index: usize,
    /// Start time of the next round, seconds.
    pub clock: f64,
}

impl DecoderState {
    pub fn new(cfg: &DecoderConfig) -> Self {
        DecoderState {
            memory: vec![CurrentMemoryCell::with_droop(cfg.circuit.droop_rate); cfg.n_hidden],
            round_index: 0,
            clock: 0.0,
        }
    }
}

/// Every internal signal of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub input_bits: Vec<Bit>,
    pub i_input_layer: Vec<f64>,
    pub i_recurrent_in: Vec<f64>,
    pub v_sigmoid: Vec<f64>,
    pub v_buffered: Vec<f64>,
    pub i_recurrent_latched: Vec<f64>,
    pub v_tia: Vec<f64>,
    pub out_bits: Vec<Bit>,
}

impl RoundTrace {
    /// Flattened `(signal, node, value)` view in a fixed order.
    pub fn signals(&self) -> Vec<(&'static str, usize, f64)> {
        let mut out = Vec::new();
        let bits = |v: &[Bit]| v.iter().map(|&b| f64::from(b)).collect::<Vec<_>>();
        let groups: [(&'static str, Vec<f64>); 8] = [
            ("input_bits", bits(&self.input_bits)),
            ("i_input_layer", self.i_input_layer.clone()),
            ("i_recurrent_in", self.i_recurrent_in.clone()),
            ("v_sigmoid", self.v_sigmoid.clone()),
            ("v_buffered", self.v_buffered.clone()),
            ("i_recurrent_latched", self.i_recurrent_latched.clone()),
            ("v_tia", self.v_tia.clone()),
            ("out_bits", bits(&self.out_bits)),
        ];
        for (name, values) in groups {
            for (node, v) in values.into_iter().enumerate() {
                out.push((name, node, v));
            }
        }
        out
    }

    /// Same trace with the round counter erased, for comparing rounds run in
    /// different positions.
    pub fn without_round(&self) -> RoundTrace {
        RoundTrace { round: 0, ..self.clone() }
    }
}

fn forward(
    xbar: &DifferentialCrossbar,
    drive: &[f64],
    noisy: bool,
    rng: &mut SimRng,
) -> Result<Vec<f64>, CrossbarError> {
    xbar.forward(drive, if noisy { Some(rng) } else { None })
}

/// One computing round.
///
/// `rng` is only drawn from when the circuit has read noise enabled.
pub fn decoder_step(
    state: DecoderState,
    bits: &[Bit],
    cfg: &DecoderConfig,
    rng: &mut SimRng,
) -> Result<(Vec<Bit>, DecoderState, RoundTrace), PipelineError> {
    if bits.len() != cfg.n_in {
        return Err(PipelineError::InputWidth { expected: cfg.n_in, found: bits.len() });
    }
    if let Some(&b) = bits.iter().find(|&&b| b > 1) {
        return Err(PipelineError::NotABit(b));
    }
    let c = &cfg.circuit;
    let high = cfg.high_drive();
    let noisy = c.read_noise;
    let t = state.clock;

    // Input layer; logical 0 contributes no current.
    let mut drive: Vec<f64> = bits.iter().map(|&b| if b == 1 { high } else { 0.0 }).collect();
    drive.push(high);
    let i_input_layer = forward(&cfg.input_xbar, &drive, noisy, rng)?;

    let mut memory = state.memory;
    let mut i_recurrent_in = vec![0.0; cfg.n_hidden];
    for (cell, slot) in memory.iter_mut().zip(i_recurrent_in.iter_mut()) {
        if cell.latched {
            let (i, freed) = cell.release(t)?;
            *slot = i;
            *cell = freed;
        }
    }

    let mut v_sigmoid = Vec::with_capacity(cfg.n_hidden);
    let mut v_buffered = Vec::with_capacity(cfg.n_hidden);
    for j in 0..cfg.n_hidden {
        let v = analog::sigmoid_v(i_input_layer[j] + i_recurrent_in[j], &c.preset.sigmoid);
        v_sigmoid.push(v);
        v_buffered.push(analog::voltage_buffer(v)?);
    }

    // Hidden drives are shared by the recurrent and output crossbars.
    let mut hidden_drive: Vec<f64> = v_buffered.iter().map(|v| v - cfg.recurrent_xbar.v_clamp).collect();
    hidden_drive.push(high);

    let mut i_recurrent_latched = vec![0.0; cfg.n_hidden];
    if c.recurrence_enabled {
        i_recurrent_latched = forward(&cfg.recurrent_xbar, &hidden_drive, noisy, rng)?;
        for (cell, &i) in memory.iter_mut().zip(&i_recurrent_latched) {
            *cell = cell.latch(i, t);
        }
    }

    let i_out = forward(&cfg.output_xbar, &hidden_drive, noisy, rng)?;
    let v_tia: Vec<f64> = i_out.iter().map(|&i| analog::tia(i, c.tia.r_f, c.tia.v_ref)).collect();
    let out_bits: Vec<Bit> = v_tia.iter().map(|&v| analog::comparator(v, c.v_th)).collect();

    let trace = RoundTrace {
        round: state.round_index,
        input_bits: bits.to_vec(),
        i_input_layer,
        i_recurrent_in,
        v_sigmoid,
        v_buffered,
        i_recurrent_latched,
        v_tia,
        out_bits: out_bits.clone(),
    };
    let next = DecoderState { memory, round_index: state.round_index + 1, clock: t + c.round_duration() };
    Ok((out_bits, next, trace))
}

/// Fold [`decoder_step`] over `inputs` from a fresh state.
pub fn run(
    cfg: &DecoderConfig,
    inputs: &[Vec<Bit>],
    seed: u64,
) -> Result<(Vec<Vec<Bit>>, Vec<RoundTrace>), PipelineError> {
    cfg.validate()?;
    let mut rng = rng::from_seed(seed);
    let mut state = DecoderState::new(cfg);
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut traces = Vec::with_capacity(inputs.len());
    for bits in inputs {
        let (out, next, trace) = decoder_step(state, bits, cfg, &mut rng)?;
        state = next;
        outputs.push(out);
        traces.push(trace);
    }
    Ok((outputs, traces))
}

/// Leading/trailing edge times of each round's pulse. Round `r` starts at
/// `r * period`; its pulse follows `delay` later.
pub fn pulse_edges(n_rounds: usize, period: f64, pulse_width: f64, delay: f64) -> Vec<(f64, f64)> {
    (0..n_rounds)
        .map(|r| {
            let on = r as f64 * period + delay;
            (on, on + pulse_width)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSample {
    pub time: f64,
    pub signal: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    target: f64,
    tau: f64,
    y0: f64,
}

impl Segment {
    fn at(&self, t: f64) -> f64 {
        if self.tau == 0.0 {
            self.target
        } else {
            self.target + (self.y0 - self.target) * (-(t - self.start) / self.tau).exp()
        }
    }
}

/// Render one signal's per-round levels as a shaped pulse train.
///
/// Each round's value is held for `pulse_width`, starting `preset.delay`
/// after the round boundary; between pulses the line relaxes towards zero.
/// Both edges are first-order responses with `tau_rise` (leading) and
/// `tau_fall` (trailing). Because `period` is given separately, the same
/// train rendered with a different delay has every edge moved by exactly the
/// difference.
pub fn render_levels(
    levels: &[f64],
    period: f64,
    pulse_width: f64,
    preset: &TemperaturePreset,
    times: &[f64],
) -> Vec<f64> {
    let edges = pulse_edges(levels.len(), period, pulse_width, preset.delay);
    let mut segments = vec![Segment { start: 0.0, target: 0.0, tau: 0.0, y0: 0.0 }];
    for (&level, &(on, off)) in levels.iter().zip(&edges) {
        let y_on = segments.last().unwrap().at(on);
        let rise = Segment { start: on, target: level, tau: preset.tau_rise, y0: y_on };
        segments.push(rise);
        segments.push(Segment { start: off, target: 0.0, tau: preset.tau_fall, y0: rise.at(off) });
    }
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0;
    for &t in times {
        while k + 1 < segments.len() && segments[k + 1].start <= t {
            k += 1;
        }
        out.push(segments[k].at(t));
    }
    out
}

/// Sampled waveforms of every traced signal.
///
/// Rounds last `pulse_width + delay`. Samples sit at `k * sample_period` and
/// cover all rounds plus five trailing time constants. Output is grouped by
/// signal in trace order.
pub fn render_waveform(
    traces: &[RoundTrace],
    preset: &TemperaturePreset,
    pulse_width: f64,
    sample_period: f64,
) -> Result<Vec<WaveSample>, PipelineError> {
    if !(sample_period.is_finite() && sample_period > 0.0) {
        return Err(PipelineError::Invalid(format!("sample period {sample_period} must be > 0")));
    }
    if traces.is_empty() {
        return Ok(Vec::new());
    }
    let period = pulse_width + preset.delay;
    let end = traces.len() as f64 * period + 5.0 * preset.tau_fall;
    let n = (end / sample_period).ceil() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * sample_period).collect();

    let layout = traces[0].signals();
    let mut out = Vec::with_capacity(layout.len() * times.len());
    for (idx, &(name, node, _)) in layout.iter().enumerate() {
        let levels: Vec<f64> = traces.iter().map(|tr| tr.signals()[idx].2).collect();
        let signal = format!("{name}[{node}]");
        for (&time, value) in times.iter().zip(render_levels(&levels, period, pulse_width, preset, &times)) {
            out.push(WaveSample { time, signal: signal.clone(), value });
        }
    }
    Ok(out)
}

/// Parse a comma-separated round pattern such as `"11,01"`.
pub fn parse_pattern(pattern: &str, n_in: usize) -> Result<Vec<Vec<Bit>>, String> {
    if pattern.trim().is_empty() {
        return Err("empty pattern".into());
    }
    pattern
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.len() != n_in || !tok.chars().all(|c| c == '0' || c == '1') {
                return Err(format!("bad pattern token {tok:?}: expected {n_in} binary digits"));
            }
            Ok(tok.bytes().map(|b| b - b'0').collect())
        })
        .collect()
}

/// The shipped 2-2-1 demonstration network.
///
/// Hidden node 0 is excited by syndrome bit 0, inhibited by bit 1, and fed
/// back positively; node 1 is the mirror image. The output reads node 0
/// against a bias that puts the decision exactly at the sigmoid midpoint, so
/// the digital result depends on the sign of node 0's input current and not on
/// the preset's sigmoid sharpness. Node 0's feedback is at most 0.09 k, half
/// its smallest input-driven current, so it can never flip that sign.
pub fn demo_weights() -> NetworkWeights {
    NetworkWeights {
        w_in: Matrix::from_rows(&[vec![1.0, -0.4], vec![-0.4, 0.9], vec![-0.3, -0.2]]).unwrap(),
        w_rec: Matrix::from_rows(&[vec![0.2, -0.2], vec![-0.1, 0.5], vec![-0.05, -0.1]]).unwrap(),
        w_out: Matrix::from_rows(&[vec![1.0], vec![0.0], vec![-0.5]]).unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> Mapping {
        let params = MemristorParams::default().noiseless();
        Mapping { params, k: params.g_max - params.g_min, scheme: Scheme::OneSided, v_clamp: 1.2 }
    }

    fn preset(name: &str) -> TemperaturePreset {
        TemperaturePreset::builtin().into_iter().find(|p| p.name == name).unwrap()
    }

    fn demo(recurrence: bool) -> DecoderConfig {
        let mut c = Circuit::new(preset("300K"));
        c.recurrence_enabled = recurrence;
        DecoderConfig::from_weights_ideal(&demo_weights(), &mapping(), c).unwrap()
    }

    #[test]
    fn zero_weights_reduce_to_sigmoid_of_zero() {
        let cfg = DecoderConfig::from_weights_ideal(
            &NetworkWeights::zeros(2, 2, 1),
            &mapping(),
            Circuit::new(preset("4.2K")),
        )
        .unwrap();
        for bits in [[0, 0], [1, 0], [1, 1]] {
            let (out, traces) = run(&cfg, &[bits.to_vec()], 0).unwrap();
            let tr = &traces[0];
            assert_eq!(tr.i_input_layer, vec![0.0, 0.0]);
            let v0 = analog::sigmoid_v(0.0, &cfg.circuit.preset.sigmoid);
            assert_eq!(tr.v_sigmoid, vec![v0, v0]);
            assert_eq!(out[0], vec![analog::comparator(analog::tia(0.0, 10e3, 0.9), 0.9)]);
        }
    }

    #[test]
    fn round_zero_has_no_recurrent_input() {
        let (_, traces) = run(&demo(true), &[vec![1, 1]], 0).unwrap();
        assert_eq!(traces[0].i_recurrent_in, vec![0.0, 0.0]);
        assert!(traces[0].i_recurrent_latched.iter().any(|&i| i != 0.0));
    }

    #[test]
    fn recurrence_changes_second_round() {
        let cfg = demo(true);
        let (_, two) = run(&cfg, &[vec![1, 1], vec![0, 1]], 0).unwrap();
        let (_, fresh) = run(&cfg, &[vec![0, 1]], 0).unwrap();
        assert_eq!(two[1].i_input_layer, fresh[0].i_input_layer);
        assert_eq!(two[1].i_recurrent_in, two[0].i_recurrent_latched);
        assert!(two[1].i_recurrent_in.iter().all(|&i| i != 0.0));
        assert_ne!(two[1].v_sigmoid, fresh[0].v_sigmoid);
    }

    #[test]
    fn disabled_recurrence_makes_rounds_independent() {
        let cfg = demo(false);
        let seq = vec![vec![1, 1], vec![0, 1], vec![1, 0]];
        let (outs, traces) = run(&cfg, &seq, 0).unwrap();
        for (k, bits) in seq.iter().enumerate() {
            let (o, t) = run(&cfg, std::slice::from_ref(bits), 0).unwrap();
            assert_eq!(outs[k], o[0]);
            assert_eq!(traces[k].without_round(), t[0].without_round());
        }
    }

    #[test]
    fn run_equals_manual_steps() {
        let cfg = demo(true);
        let seq = vec![vec![1, 0], vec![1, 1]];
        let (outs, traces) = run(&cfg, &seq, 3).unwrap();
        let mut rng = rng::from_seed(3);
        let s0 = DecoderState::new(&cfg);
        let (o1, s1, t1) = decoder_step(s0, &seq[0], &cfg, &mut rng).unwrap();
        let (o2, s2, t2) = decoder_step(s1, &seq[1], &cfg, &mut rng).unwrap();
        assert_eq!(outs, vec![o1, o2]);
        assert_eq!(traces, vec![t1, t2]);
        assert_eq!(s2.round_index, 2);
        assert!((s2.clock - 2.0 * cfg.circuit.round_duration()).abs() < 1e-18);
    }

    #[test]
    fn empty_sequence_and_bad_inputs() {
        let cfg = demo(true);
        assert_eq!(run(&cfg, &[], 0).unwrap(), (vec![], vec![]));
        assert!(matches!(run(&cfg, &[vec![1]], 0), Err(PipelineError::InputWidth { expected: 2, found: 1 })));
        assert!(matches!(run(&cfg, &[vec![1, 2]], 0), Err(PipelineError::NotABit(2))));
    }

    #[test]
    fn buffered_voltages_stay_in_window() {
        let cfg = demo(true);
        let seq: Vec<Vec<Bit>> = (0..16).map(|k| vec![(k & 1) as u8, ((k >> 1) & 1) as u8]).collect();
        let (_, traces) = run(&cfg, &seq, 0).unwrap();
        for t in traces {
            for (&s, &b) in t.v_sigmoid.iter().zip(&t.v_buffered) {
                assert!(s > 0.0 && s < 1.8);
                assert!((1.2..=1.8).contains(&b));
            }
        }
    }

    #[test]
    fn noisy_runs_are_seed_deterministic() {
        let map = Mapping { params: MemristorParams::default(), ..mapping() };
        let mut c = Circuit::new(preset("300K"));
        c.read_noise = true;
        let cfg = DecoderConfig::from_weights_ideal(&demo_weights(), &map, c).unwrap();
        let seq = vec![vec![1, 1], vec![0, 1]];
        let a = run(&cfg, &seq, 17).unwrap();
        let b = run(&cfg, &seq, 17).unwrap();
        let c = run(&cfg, &seq, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn pattern_parsing() {
        assert_eq!(parse_pattern("11,01", 2).unwrap(), vec![vec![1, 1], vec![0, 1]]);
        assert!(parse_pattern("", 2).is_err());
        let err = parse_pattern("11,0x", 2).unwrap_err();
        assert!(err.contains("0x"), "{err}");
        assert!(parse_pattern("111", 2).is_err());
    }

    #[test]
    fn ideal_square_pulse_without_shaping() {
        let p = TemperaturePreset { delay: 0.0, tau_rise: 0.0, tau_fall: 0.0, ..preset("300K") };
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.1e-6 + 0.05e-6).collect();
        let w = render_levels(&[2.0, -1.0], 1e-6, 1e-6, &p, &times);
        for (t, v) in times.iter().zip(w) {
            let expected = if *t < 1e-6 {
                2.0
            } else if *t < 2e-6 {
                -1.0
            } else {
                0.0
            };
            assert_eq!(v, expected, "t={t}");
        }
    }

    #[test]
    fn waveform_rejects_bad_period() {
        assert!(render_waveform(&[], &preset("300K"), 1e-6, 0.0).is_err());
    }

    #[test]
    fn demo_output_is_temperature_invariant() {
        let base = demo(true);
        let presets = TemperaturePreset::builtin();
        for rounds in 1..=4 {
            for code in 0..(1u32 << (2 * rounds)) {
                let seq: Vec<Vec<Bit>> = (0..rounds)
                    .map(|r| vec![((code >> (2 * r)) & 1) as Bit, ((code >> (2 * r + 1)) & 1) as Bit])
                    .collect();
                let outs: Vec<_> =
                    presets.iter().map(|p| run(&base.with_preset(p.clone()), &seq, 0).unwrap().0).collect();
                assert!(outs.windows(2).all(|w| w[0] == w[1]), "pattern {seq:?}: {outs:?}");
            }
        }
    }
}
