//! Differentiable software twin of the decoder chip, used for training.
//!
//! The forward pass is the pipeline's, written in physical units: currents
//! are `k * w * drive`, the hidden nonlinearity is the preset's logistic, the
//! buffered hidden voltage (minus the clamp) drives both the recurrent and
//! output layers, and recurrent currents arrive one round late. The output is
//! read once, after the last round; its current is compared against the
//! current that puts the TIA exactly at the comparator threshold.
//!
//! Training minimises binary cross-entropy on `z = (i_out - i_threshold) /
//! out_scale` with full-batch projected gradient descent, either plain or
//! with Adam step sizes, under a learning rate that decays linearly to zero.
//! Identical traces are merged into weighted samples first. Hardware
//! awareness comes from multiplicative Gaussian noise on every weight, redrawn
//! each epoch and applied during the forward pass. Each run returns the
//! lowest-loss weights it visited, and several seeded runs are compared on
//! training error.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::code::SyndromeTrace;
use super::QecError;
use crate::analog::{self, Bit, SigmoidParams};
use crate::matrix::Matrix;
use crate::pipeline::{Circuit, Mapping, NetworkWeights};
use crate::rng::{self, SimRng};

pub type SurrogateWeights = NetworkWeights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateModel {
    pub sigmoid: SigmoidParams,
    /// Siemens per unit weight.
    pub k: f64,
    /// Row drive of a logic 1 and of the bias rows, volts.
    pub high_drive: f64,
    pub v_clamp: f64,
    /// Output current at which the comparator flips.
    pub i_threshold: f64,
    /// Current scale of the training logit.
    pub out_scale: f64,
    pub recurrence: bool,
    /// Largest representable `|w|`.
    pub w_max: f64,
}

impl SurrogateModel {
    pub fn from_hardware(circuit: &Circuit, map: &Mapping, out_scale: f64) -> Self {
        SurrogateModel {
            sigmoid: circuit.preset.sigmoid,
            k: map.k,
            high_drive: circuit.v_logic_high - map.v_clamp,
            v_clamp: map.v_clamp,
            i_threshold: (circuit.v_th - circuit.tia.v_ref) / circuit.tia.r_f,
            out_scale,
            recurrence: circuit.recurrence_enabled,
            w_max: (map.params.g_max - map.params.g_min) / map.k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Plain steepest descent, `w -= lr * grad`.
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_noise_sigma: f64,
    /// Not read from configuration files; the command line derives it from
    /// the run seed.
    #[serde(skip)]
    pub seed: u64,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub n_hidden: usize,
    /// Independent initialisations; the one with the fewest training errors
    /// wins, ties broken by loss.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.02,
            epochs: 1000,
            weight_noise_sigma: 0.05,
            seed: 0,
            init_scale: 0.1,
            n_hidden: 2,
            restarts: 4,
        }
    }
}

struct Tape {
    in_drive: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    hid_drive: Vec<Vec<f64>>,
    i_out: Vec<f64>,
}

fn affine(w: &Matrix, drive: &[f64], k: f64) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &d) in drive.iter().enumerate() {
        for (c, o) in out.iter_mut().enumerate() {
            *o += k * w.get(r, c) * d;
        }
    }
    out
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SurrogateModel {
    fn forward(&self, w: &NetworkWeights, trace: &SyndromeTrace) -> Tape {
        let n_h = w.n_hidden();
        let mut tape = Tape { in_drive: vec![], pre: vec![], hid_drive: vec![], i_out: vec![] };
        let mut rec = vec![0.0; n_h];
        for bits in &trace.syndromes {
            let mut d: Vec<f64> = bits.iter().map(|&b| if b == 1 { self.high_drive } else { 0.0 }).collect();
            d.push(self.high_drive);
            let a: Vec<f64> = affine(&w.w_in, &d, self.k).iter().zip(&rec).map(|(x, r)| x + r).collect();
            let mut u: Vec<f64> = a
                .iter()
                .map(|&ai| analog::SUPPLY_LOW + analog::sigmoid_v(ai, &self.sigmoid) / 3.0 - self.v_clamp)
                .collect();
            u.push(self.high_drive);
            rec = if self.recurrence { affine(&w.w_rec, &u, self.k) } else { vec![0.0; n_h] };
            tape.in_drive.push(d);
            tape.pre.push(a);
            tape.hid_drive.push(u);
        }
        tape.i_out = match tape.hid_drive.last() {
            Some(u) => affine(&w.w_out, u, self.k),
            None => affine(&w.w_out, &[vec![0.0; n_h], vec![self.high_drive]].concat(), self.k),
        };
        tape
    }

    /// Output current after the last round.
    pub fn output_current(&self, w: &NetworkWeights, trace: &SyndromeTrace) -> Vec<f64> {
        self.forward(w, trace).i_out
    }

    /// Thresholded prediction of the first output.
    pub fn predict(&self, w: &NetworkWeights, trace: &SyndromeTrace) -> Bit {
        Bit::from(self.output_current(w, trace)[0] > self.i_threshold)
    }

    fn logit(&self, i_out: f64) -> f64 {
        (i_out - self.i_threshold) / self.out_scale
    }

    /// Mean binary cross-entropy over `traces`.
    pub fn loss(&self, w: &NetworkWeights, traces: &[SyndromeTrace]) -> f64 {
        self.weighted_loss(w, &uniform(traces))
    }

    fn weighted_loss(&self, w: &NetworkWeights, items: &[(&SyndromeTrace, f64)]) -> f64 {
        items
            .iter()
            .map(|(t, weight)| {
                let z = self.logit(self.forward(w, t).i_out[0]);
                weight * (softplus(z) - f64::from(t.label) * z)
            })
            .sum()
    }

    /// Loss and its gradient with respect to every weight, by backpropagation
    /// through the unrolled rounds.
    pub fn loss_and_grad(&self, w: &NetworkWeights, traces: &[SyndromeTrace]) -> (f64, NetworkWeights) {
        self.weighted_loss_and_grad(w, &uniform(traces))
    }

    fn weighted_loss_and_grad(&self, w: &NetworkWeights, items: &[(&SyndromeTrace, f64)]) -> (f64, NetworkWeights) {
        let n_h = w.n_hidden();
        let mut grad = NetworkWeights {
            w_in: Matrix::zeros(w.w_in.rows(), w.w_in.cols()),
            w_rec: Matrix::zeros(w.w_rec.rows(), w.w_rec.cols()),
            w_out: Matrix::zeros(w.w_out.rows(), w.w_out.cols()),
        };
        let mut loss = 0.0;
        for &(trace, scale) in items {
            let tape = self.forward(w, trace);
            let y = f64::from(trace.label);
            let z = self.logit(tape.i_out[0]);
            loss += (softplus(z) - y * z) * scale;
            let g_out = (logistic(z) - y) / self.out_scale * scale;

            let rounds = tape.pre.len();
            if rounds == 0 {
                continue;
            }
            // dL/du at the last round, from the output layer.
            let u_last = &tape.hid_drive[rounds - 1];
            let mut g_u = vec![0.0; n_h];
            for (m, &u) in u_last.iter().enumerate() {
                grad.w_out.as_mut_slice()[m * w.w_out.cols()] += g_out * self.k * u;
                if m < n_h {
                    g_u[m] = g_out * self.k * w.w_out.get(m, 0);
                }
            }
            // dL/d(recurrent current produced in round t), consumed in round t+1.
            let mut g_rec = vec![0.0; n_h];
            for t in (0..rounds).rev() {
                let u = &tape.hid_drive[t];
                if self.recurrence && t + 1 < rounds {
                    for (m, &um) in u.iter().enumerate() {
                        for (j, &gr) in g_rec.iter().enumerate() {
                            let cur = grad.w_rec.get(m, j);
                            grad.w_rec.set(m, j, cur + gr * self.k * um);
                            if m < n_h {
                                g_u[m] += gr * self.k * w.w_rec.get(m, j);
                            }
                        }
                    }
                }
                let g_pre: Vec<f64> =
                    (0..n_h).map(|j| g_u[j] / 3.0 * analog::sigmoid_dv_di(tape.pre[t][j], &self.sigmoid)).collect();
                for (i, &d) in tape.in_drive[t].iter().enumerate() {
                    for (j, &gp) in g_pre.iter().enumerate() {
                        let cur = grad.w_in.get(i, j);
                        grad.w_in.set(i, j, cur + gp * self.k * d);
                    }
                }
                g_rec = g_pre;
                g_u = vec![0.0; n_h];
            }
        }
        (loss, grad)
    }
}

fn uniform(traces: &[SyndromeTrace]) -> Vec<(&SyndromeTrace, f64)> {
    let weight = 1.0 / traces.len() as f64;
    traces.iter().map(|t| (t, weight)).collect()
}

/// Identical traces merged, each weighted by its share of the dataset.
fn merge_duplicates(traces: &[SyndromeTrace]) -> Vec<(&SyndromeTrace, f64)> {
    type Key<'a> = (&'a [Vec<Bit>], Bit);
    let mut counts: BTreeMap<Key, (&SyndromeTrace, usize)> = BTreeMap::new();
    for t in traces {
        counts.entry((&t.syndromes, t.label)).or_insert((t, 0)).1 += 1;
    }
    let n = traces.len() as f64;
    counts.into_values().map(|(t, c)| (t, c as f64 / n)).collect()
}

/// Seeded uniform initialisation, row-major through input, recurrent, output.
pub fn init_weights(n_in: usize, n_hidden: usize, n_out: usize, scale: f64, rng: &mut SimRng) -> NetworkWeights {
    let mut w = NetworkWeights::zeros(n_in, n_hidden, n_out);
    for m in [&mut w.w_in, &mut w.w_rec, &mut w.w_out] {
        for x in m.as_mut_slice() {
            *x = rng.random_range(-scale..=scale);
        }
    }
    w
}

fn noisy_copy(w: &NetworkWeights, sigma: f64, rng: &mut SimRng) -> (NetworkWeights, NetworkWeights) {
    let mut factors = NetworkWeights::zeros(w.n_in(), w.n_hidden(), w.n_out());
    for m in [&mut factors.w_in, &mut factors.w_rec, &mut factors.w_out] {
        for x in m.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *x = 1.0 + sigma * z;
        }
    }
    let mul = |a: &Matrix, b: &Matrix| Matrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) * b.get(r, c));
    let noisy = NetworkWeights {
        w_in: mul(&w.w_in, &factors.w_in),
        w_rec: mul(&w.w_rec, &factors.w_rec),
        w_out: mul(&w.w_out, &factors.w_out),
    };
    (noisy, factors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: SurrogateWeights,
    /// Noise-free loss of the nominal weights before each epoch and after the last.
    pub losses: Vec<f64>,
}

/// First and second moment estimates for Adam, flattened across layers.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Turns raw gradients into steps, in place.
    fn steps(&mut self, grads: &mut [f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for ((g, m), v) in grads.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * *g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * *g * *g;
            *g = (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

const INIT_SALT: u64 = 0x1417;
const NOISE_SALT: u64 = 0x2b0b;

pub fn train_surrogate(
    dataset: &[SyndromeTrace],
    model: &SurrogateModel,
    cfg: &TrainConfig,
) -> Result<TrainReport, QecError> {
    let first = dataset.first().ok_or_else(|| QecError::Invalid("empty training set".into()))?;
    let n_in = first.syndromes.first().map_or(0, Vec::len);
    if n_in == 0 {
        return Err(QecError::Invalid("traces carry no syndrome bits".into()));
    }
    let merged = merge_duplicates(dataset);
    let errors = |w: &NetworkWeights| dataset.iter().filter(|t| model.predict(w, t) != t.label).count();
    let mut best: Option<(usize, f64, TrainReport)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let seed = if restart == 0 { cfg.seed } else { rng::subseed(cfg.seed, restart as u64) };
        let report = train_once(&merged, model, cfg, n_in, seed)?;
        let key = (errors(&report.weights), *report.losses.last().unwrap_or(&f64::INFINITY));
        if best.as_ref().is_none_or(|(e, l, _)| key.0 < *e || (key.0 == *e && key.1 < *l)) {
            best = Some((key.0, key.1, report));
        }
    }
    Ok(best.map(|(_, _, r)| r).expect("at least one restart"))
}

fn train_once(
    dataset: &[(&SyndromeTrace, f64)],
    model: &SurrogateModel,
    cfg: &TrainConfig,
    n_in: usize,
    seed: u64,
) -> Result<TrainReport, QecError> {
    let mut weights = init_weights(
        n_in,
        cfg.n_hidden,
        1,
        cfg.init_scale.min(model.w_max),
        &mut rng::from_seed(rng::subseed(seed, INIT_SALT)),
    );
    let mut noise_rng = rng::from_seed(rng::subseed(seed, NOISE_SALT));
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let n_weights: usize = weights.layers().iter().map(|(_, m)| m.as_slice().len()).sum();
    let mut adam = AdamState::new(n_weights);

    let mut best = (f64::INFINITY, weights.clone());
    for epoch in 0..cfg.epochs {
        let current = model.weighted_loss(&weights, dataset);
        if current < best.0 {
            best = (current, weights.clone());
        }
        losses.push(current);
        let grad = if cfg.weight_noise_sigma > 0.0 {
            let (noisy, factors) = noisy_copy(&weights, cfg.weight_noise_sigma, &mut noise_rng);
            let (loss, g) = model.weighted_loss_and_grad(&noisy, dataset);
            if !loss.is_finite() {
                return Err(QecError::Divergence { epoch });
            }
            let mul = |a: &Matrix, b: &Matrix| Matrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) * b.get(r, c));
            NetworkWeights {
                w_in: mul(&g.w_in, &factors.w_in),
                w_rec: mul(&g.w_rec, &factors.w_rec),
                w_out: mul(&g.w_out, &factors.w_out),
            }
        } else {
            let (loss, g) = model.weighted_loss_and_grad(&weights, dataset);
            if !loss.is_finite() {
                return Err(QecError::Divergence { epoch });
            }
            g
        };
        let mut step: Vec<f64> = grad.layers().iter().flat_map(|(_, m)| m.as_slice().to_vec()).collect();
        if cfg.optimizer == Optimizer::Adam {
            adam.steps(&mut step);
        }
        let lr = cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64);
        let params = [&mut weights.w_in, &mut weights.w_rec, &mut weights.w_out];
        let mut step = step.into_iter();
        for x in params.into_iter().flat_map(|m| m.as_mut_slice().iter_mut()) {
            let s = step.next().unwrap_or(0.0);
            *x = (*x - lr * s).clamp(-model.w_max, model.w_max);
        }
        if weights.max_abs().is_nan() {
            return Err(QecError::Divergence { epoch });
        }
    }
    let last = model.weighted_loss(&weights, dataset);
    if !last.is_finite() {
        return Err(QecError::Divergence { epoch: cfg.epochs });
    }
    losses.push(last);
    let weights = if last <= best.0 { weights } else { best.1 };
    Ok(TrainReport { weights, losses })
}
