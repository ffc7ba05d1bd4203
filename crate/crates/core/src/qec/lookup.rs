//! Exact maximum-likelihood decoding by exhaustive enumeration.
//!
//! For a fixed window length the decoder enumerates every data-flip history,
//! bins its prior probability by (noise-free syndrome pattern, label), and
//! then folds in the measurement channel to get `P(observed, label)` for every
//! observable syndrome pattern. The result is a lookup table indexed by the
//! packed observed pattern.

use super::code::{NoiseModel, RepetitionCode, SyndromeTrace};
use super::QecError;
use crate::analog::Bit;

/// Largest `rounds * (n_data + n_checks)` the decoder will enumerate.
pub const MAX_ENUMERATION_BITS: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct LookupDecoder {
    code: RepetitionCode,
    rounds: usize,
    table: Vec<Bit>,
}

fn binomial_weight(p: f64, flips: u32, total: u32) -> f64 {
    p.powi(flips as i32) * (1.0 - p).powi((total - flips) as i32)
}

impl LookupDecoder {
    pub fn build(code: &RepetitionCode, noise: &NoiseModel, rounds: usize) -> Result<Self, QecError> {
        if rounds == 0 {
            return Err(QecError::Invalid("rounds must be >= 1".into()));
        }
        let (d, m) = (code.n_data(), code.n_checks());
        let bits = rounds * (d + m);
        if bits > MAX_ENUMERATION_BITS {
            return Err(QecError::Capacity { bits, max: MAX_ENUMERATION_BITS });
        }
        let data_bits = (rounds * d) as u32;
        let obs_bits = (rounds * m) as u32;
        let n_patterns = 1usize << obs_bits;

        // prior[pattern][label]
        let mut prior = vec![[0.0f64; 2]; n_patterns];
        for history in 0u64..(1 << data_bits) {
            let mut errors = 0u64; // current data error bits
            let mut pattern = 0usize;
            for r in 0..rounds {
                errors ^= (history >> (r * d)) & ((1 << d) - 1);
                let checks = (errors ^ (errors >> 1)) & ((1 << m) - 1);
                pattern |= (checks as usize) << (r * m);
            }
            let label = (errors & 1) as usize;
            prior[pattern][label] += binomial_weight(noise.p_data, history.count_ones(), data_bits);
        }

        let mut table = vec![0 as Bit; n_patterns];
        for (observed, slot) in table.iter_mut().enumerate() {
            let mut post = [0.0f64; 2];
            for (true_pattern, pr) in prior.iter().enumerate() {
                let flips = (observed ^ true_pattern).count_ones();
                let lik = binomial_weight(noise.q_meas, flips, obs_bits);
                post[0] += pr[0] * lik;
                post[1] += pr[1] * lik;
            }
            *slot = Bit::from(post[1] > post[0]);
        }
        Ok(LookupDecoder { code: *code, rounds, table })
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn table(&self) -> &[Bit] {
        &self.table
    }

    pub fn decode(&self, trace: &SyndromeTrace) -> Result<Bit, QecError> {
        if trace.rounds() != self.rounds || trace.syndromes.iter().any(|s| s.len() != self.code.n_checks()) {
            return Err(QecError::Invalid(format!(
                "trace shape {}x{} does not match decoder {}x{}",
                trace.rounds(),
                trace.syndromes.first().map_or(0, Vec::len),
                self.rounds,
                self.code.n_checks()
            )));
        }
        Ok(self.table[trace.pattern_index()])
    }
}

/// One-shot ML decode. Builds the table for this trace's window length.
pub fn ml_lookup_decoder(trace: &SyndromeTrace, code: &RepetitionCode, noise: &NoiseModel) -> Result<Bit, QecError> {
    LookupDecoder::build(code, noise, trace.rounds())?.decode(trace)
}
