//! Monte Carlo logical-error-rate estimation.
//!
//! Trial `n` samples its trace from `rng::stream(seed, n)`; decoders that need
//! randomness of their own (read noise in the hardware model) get a seed
//! derived from `(seed, n)` as well. Trials are therefore independent of
//! execution order and are run in parallel.

use rayon::prelude::*;

use super::code::{sample_trace, NoiseModel, RepetitionCode, SyndromeTrace};
use super::lookup::LookupDecoder;
use super::surrogate::{SurrogateModel, SurrogateWeights};
use super::QecError;
use crate::analog::Bit;
use crate::pipeline::{self, DecoderConfig};
use crate::rng;

/// 97.5th percentile of the standard normal.
pub const Z_95: f64 = 1.959_963_984_540_054;

const HARDWARE_SALT: u64 = 0x4857;

pub enum Decoder<'a> {
    /// Reads the hidden label. Useful only as a harness check.
    Oracle,
    Constant(Bit),
    Lookup(&'a LookupDecoder),
    Surrogate {
        model: &'a SurrogateModel,
        weights: &'a SurrogateWeights,
    },
    /// Runs the simulated chip and takes the last round's first output bit.
    Hardware(&'a DecoderConfig),
}

impl Decoder<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::Oracle => "oracle",
            Decoder::Constant(0) => "constant0",
            Decoder::Constant(_) => "constant1",
            Decoder::Lookup(_) => "lookup",
            Decoder::Surrogate { .. } => "surrogate",
            Decoder::Hardware(_) => "hardware",
        }
    }

    pub fn decode(&self, trace: &SyndromeTrace, seed: u64) -> Result<Bit, QecError> {
        match self {
            Decoder::Oracle => Ok(trace.label),
            Decoder::Constant(b) => Ok(*b),
            Decoder::Lookup(table) => table.decode(trace),
            Decoder::Surrogate { model, weights } => Ok(model.predict(weights, trace)),
            Decoder::Hardware(cfg) => {
                let (outs, _) = pipeline::run(cfg, &trace.syndromes, seed)?;
                outs.last().map(|o| o[0]).ok_or_else(|| QecError::Invalid("empty trace".into()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LerEstimate {
    pub errors: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl LerEstimate {
    pub fn from_counts(errors: usize, trials: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, trials, Z_95);
        LerEstimate { errors, trials, rate: errors as f64 / trials as f64, ci_low, ci_high }
    }

    /// Intervals share no point.
    pub fn separated_below(&self, other: &LerEstimate) -> bool {
        self.ci_high < other.ci_low
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let phat = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (phat + z2 / (2.0 * n_f)) / denom;
    let half = z * (phat * (1.0 - phat) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Trace of trial `index` under `seed`.
pub fn trial_trace(
    code: &RepetitionCode,
    noise: &NoiseModel,
    rounds: usize,
    seed: u64,
    index: u64,
) -> Result<SyndromeTrace, QecError> {
    sample_trace(code, noise, rounds, &mut rng::stream(seed, index))
}

fn decoder_seed(seed: u64, index: u64) -> u64 {
    rng::subseed(rng::subseed(seed, HARDWARE_SALT), index)
}

pub fn evaluate_ler(
    decoder: &Decoder<'_>,
    code: &RepetitionCode,
    noise: &NoiseModel,
    rounds: usize,
    n_trials: usize,
    seed: u64,
) -> Result<LerEstimate, QecError> {
    if n_trials == 0 {
        return Err(QecError::Invalid("n_trials must be >= 1".into()));
    }
    let errors = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let trace = trial_trace(code, noise, rounds, seed, i)?;
            let guess = decoder.decode(&trace, decoder_seed(seed, i))?;
            Ok::<_, QecError>(usize::from(guess != trace.label))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(LerEstimate::from_counts(errors, n_trials))
}

/// Error rate on a fixed set of traces; trace `i` uses decoder seed `(seed, i)`.
pub fn evaluate_on(decoder: &Decoder<'_>, traces: &[SyndromeTrace], seed: u64) -> Result<LerEstimate, QecError> {
    if traces.is_empty() {
        return Err(QecError::Invalid("no traces".into()));
    }
    let errors = traces
        .par_iter()
        .enumerate()
        .map(|(i, t)| Ok::<_, QecError>(usize::from(decoder.decode(t, decoder_seed(seed, i as u64))? != t.label)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(LerEstimate::from_counts(errors, traces.len()))
}

/// Fraction of traces on which two decoders agree.
pub fn agreement(a: &Decoder<'_>, b: &Decoder<'_>, traces: &[SyndromeTrace], seed: u64) -> Result<f64, QecError> {
    if traces.is_empty() {
        return Err(QecError::Invalid("no traces".into()));
    }
    let same = traces
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let s = decoder_seed(seed, i as u64);
            Ok::<_, QecError>(usize::from(a.decode(t, s)? == b.decode(t, s)?))
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))?;
    Ok(same as f64 / traces.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (RepetitionCode, NoiseModel) {
        (RepetitionCode::default(), NoiseModel::new(0.05, 0.02).unwrap())
    }

    #[test]
    fn oracle_never_errs() {
        let (code, noise) = setup();
        let est = evaluate_ler(&Decoder::Oracle, &code, &noise, 3, 2000, 1).unwrap();
        assert_eq!(est.errors, 0);
        assert_eq!(est.rate, 0.0);
    }

    #[test]
    fn constant_zero_rate_is_label_frequency() {
        let (code, noise) = setup();
        let n = 5000;
        let est = evaluate_ler(&Decoder::Constant(0), &code, &noise, 3, n, 9).unwrap();
        let ones = (0..n as u64).filter(|&i| trial_trace(&code, &noise, 3, 9, i).unwrap().label == 1).count();
        assert_eq!(est.errors, ones);
    }

    #[test]
    fn wilson_known_values() {
        // 10/100 at 95%: (0.05523, 0.17437)
        let (lo, hi) = wilson_interval(10, 100, Z_95);
        assert!((lo - 0.05522914).abs() < 1e-6, "{lo}");
        assert!((hi - 0.17436566).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(0, 50, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn estimate_independent_of_thread_count() {
        let (code, noise) = setup();
        let table = LookupDecoder::build(&code, &noise, 3).unwrap();
        let par = evaluate_ler(&Decoder::Lookup(&table), &code, &noise, 3, 3000, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| evaluate_ler(&Decoder::Lookup(&table), &code, &noise, 3, 3000, 5).unwrap());
        assert_eq!(par, seq);
    }

    #[test]
    fn zero_trials_rejected() {
        let (code, noise) = setup();
        assert!(evaluate_ler(&Decoder::Oracle, &code, &noise, 3, 0, 1).is_err());
    }
}
