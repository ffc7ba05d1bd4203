//! Bit-flip repetition code under i.i.d. data and measurement flips.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::QecError;
use crate::analog::Bit;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionCode {
    distance: usize,
}

impl RepetitionCode {
    pub fn new(distance: usize) -> Result<Self, QecError> {
        if distance < 3 || distance.is_multiple_of(2) {
            return Err(QecError::Invalid(format!("distance {distance} must be odd and >= 3")));
        }
        Ok(RepetitionCode { distance })
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    /// Number of data qubits.
    pub fn n_data(&self) -> usize {
        self.distance
    }

    /// Number of `Z_k Z_{k+1}` checks, one syndrome bit each per round.
    pub fn n_checks(&self) -> usize {
        self.distance - 1
    }

    /// Noise-free syndrome of a data error pattern.
    pub fn syndrome(&self, errors: &[Bit]) -> Vec<Bit> {
        (0..self.n_checks()).map(|k| errors[k] ^ errors[k + 1]).collect()
    }
}

impl Default for RepetitionCode {
    fn default() -> Self {
        RepetitionCode { distance: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-round, per-qubit bit-flip probability.
    pub p_data: f64,
    /// Per-round, per-check measurement flip probability.
    pub q_meas: f64,
}

impl NoiseModel {
    pub fn new(p_data: f64, q_meas: f64) -> Result<Self, QecError> {
        for (name, x) in [("p_data", p_data), ("q_meas", q_meas)] {
            if !(0.0..=0.5).contains(&x) {
                return Err(QecError::Invalid(format!("{name}={x} outside [0, 0.5]")));
            }
        }
        Ok(NoiseModel { p_data, q_meas })
    }
}

/// Everything that went wrong during a window, hidden from the decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorHistory {
    /// `rounds x n_data`, flips applied in each round.
    pub data_flips: Vec<Vec<Bit>>,
    /// `rounds x n_checks`, flips of the reported syndrome bits.
    pub meas_flips: Vec<Vec<Bit>>,
}

impl ErrorHistory {
    pub fn quiet(code: &RepetitionCode, rounds: usize) -> Self {
        ErrorHistory {
            data_flips: vec![vec![0; code.n_data()]; rounds],
            meas_flips: vec![vec![0; code.n_checks()]; rounds],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeTrace {
    /// `rounds x n_checks` reported syndrome bits.
    pub syndromes: Vec<Vec<Bit>>,
    /// Whether the first data qubit (the logical readout) ends the window flipped.
    pub label: Bit,
}

impl SyndromeTrace {
    pub fn rounds(&self) -> usize {
        self.syndromes.len()
    }

    /// Syndrome bits packed round-major, bit `round * n_checks + k`.
    pub fn pattern_index(&self) -> usize {
        let mut idx = 0usize;
        let mut bit = 0;
        for round in &self.syndromes {
            for &s in round {
                idx |= usize::from(s) << bit;
                bit += 1;
            }
        }
        idx
    }
}

/// Replay a history: accumulate data flips, read each check's parity, then
/// apply that round's measurement flips. The label comes from the hidden
/// data state only.
pub fn trace_from_history(code: &RepetitionCode, history: &ErrorHistory) -> SyndromeTrace {
    let mut errors = vec![0 as Bit; code.n_data()];
    let mut syndromes = Vec::with_capacity(history.data_flips.len());
    for (flips, meas) in history.data_flips.iter().zip(&history.meas_flips) {
        for (e, f) in errors.iter_mut().zip(flips) {
            *e ^= f;
        }
        let s = code.syndrome(&errors).into_iter().zip(meas).map(|(s, m)| s ^ m).collect();
        syndromes.push(s);
    }
    SyndromeTrace { syndromes, label: errors[0] }
}

fn bernoulli(rng: &mut SimRng, p: f64) -> Bit {
    let u: f64 = rng.random();
    Bit::from(u < p)
}

/// Draws `n_data` then `n_checks` uniforms per round, in that order.
pub fn sample_history(code: &RepetitionCode, noise: &NoiseModel, rounds: usize, rng: &mut SimRng) -> ErrorHistory {
    let mut h = ErrorHistory { data_flips: Vec::with_capacity(rounds), meas_flips: Vec::with_capacity(rounds) };
    for _ in 0..rounds {
        h.data_flips.push((0..code.n_data()).map(|_| bernoulli(rng, noise.p_data)).collect());
        h.meas_flips.push((0..code.n_checks()).map(|_| bernoulli(rng, noise.q_meas)).collect());
    }
    h
}

pub fn sample_trace(
    code: &RepetitionCode,
    noise: &NoiseModel,
    rounds: usize,
    rng: &mut SimRng,
) -> Result<SyndromeTrace, QecError> {
    if rounds == 0 {
        return Err(QecError::Invalid("rounds must be >= 1".into()));
    }
    Ok(trace_from_history(code, &sample_history(code, noise, rounds, rng)))
}
