//! Software model of the network and its gradient-descent trainer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    add_noise_in_place, binarize, binary_thresholds, FastSensor, SensorStates, SignalMode,
};
use crate::braille::{BrailleSymbol, Dataset, ForceGrid, Selection, GRID_COLS, GRID_ROWS};
use crate::config::SimConfig;
use crate::error::{Error, Result};

/// Sensor-layer outputs: 2 column readouts and 4 row readouts.
pub const SENSOR_OUT: usize = GRID_COLS + GRID_ROWS;
/// Width of the hidden 1T1M layer.
pub const HIDDEN: usize = 14;
pub const NETWORK_FORMAT: &str = "tms-network/1";

/// Small positive start keeps hidden units out of the dead ReLU region.
const HIDDEN_BIAS_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkArch {
    pub sensor_rows: usize,
    pub sensor_cols: usize,
    pub hidden: usize,
    pub n_out: usize,
}

impl NetworkArch {
    /// Output widths of the single-group and fusion networks.
    pub const OUTPUT_SIZES: [usize; 4] = [26, 27, 46, 125];

    pub fn new(n_out: usize) -> Result<Self> {
        let arch = NetworkArch {
            sensor_rows: GRID_ROWS,
            sensor_cols: GRID_COLS,
            hidden: HIDDEN,
            n_out,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn for_selection(selection: &Selection) -> Result<Self> {
        Self::new(selection.groups().iter().map(|g| g.expected_size()).sum())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_rows != GRID_ROWS || self.sensor_cols != GRID_COLS || self.hidden != HIDDEN {
            return Err(Error::DimensionMismatch {
                context: "network architecture",
                expected: format!("{GRID_ROWS}x{GRID_COLS} sensor layer and {HIDDEN} hidden units"),
                actual: format!(
                    "{}x{} sensor layer and {} hidden units",
                    self.sensor_rows, self.sensor_cols, self.hidden
                ),
            });
        }
        if !Self::OUTPUT_SIZES.contains(&self.n_out) {
            return Err(Error::DimensionMismatch {
                context: "network outputs",
                expected: format!("one of {:?}", Self::OUTPUT_SIZES),
                actual: self.n_out.to_string(),
            });
        }
        Ok(())
    }

    pub fn sensor_out(&self) -> usize {
        self.sensor_rows + self.sensor_cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Noise variance injected into every training presentation.
    pub sigma2: f64,
    pub seed: u64,
    /// Learn the first-layer memristor states (analog mode only).
    pub train_states: bool,
    pub optimizer: Optimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    Sgd,
    /// Adam with the usual moment decay rates.
    Adam,
}

impl Hyper {
    /// Adam at lr 0.01, 500 epochs of 32-sample batches.
    pub fn new(sigma2: f64, seed: u64) -> Self {
        Hyper {
            lr: 0.01,
            epochs: 500,
            batch: 32,
            sigma2,
            seed,
            train_states: true,
            optimizer: Optimizer::Adam,
        }
    }

    /// Plain gradient descent at lr 0.05. Underfits the larger groups
    /// within 500 epochs.
    pub fn plain(sigma2: f64, seed: u64) -> Self {
        Hyper {
            lr: 0.05,
            optimizer: Optimizer::Sgd,
            ..Self::new(sigma2, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::domain("learning rate", self.lr, "finite and > 0"));
        }
        if self.batch == 0 {
            return Err(Error::domain("batch size", 0.0, ">= 1"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2", self.sigma2, "finite and >= 0"));
        }
        Ok(())
    }
}

/// Dense layers of the software model, row-major `[input][output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareNetwork {
    pub w_hidden: Vec<Vec<f64>>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
}

impl SoftwareNetwork {
    /// Pre-softmax outputs for one feature vector.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = (0..self.b_hidden.len())
            .map(|j| {
                let a = self.b_hidden[j]
                    + x.iter().zip(&self.w_hidden).map(|(xi, row)| xi * row[j]).sum::<f64>();
                a.max(0.0)
            })
            .collect();
        (0..self.b_out.len())
            .map(|o| {
                self.b_out[o]
                    + hidden.iter().zip(&self.w_out).map(|(h, row)| h * row[o]).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let peak = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - peak).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub format: String,
    pub arch: NetworkArch,
    pub mode: SignalMode,
    pub selection: Selection,
    /// Output port `o` recognises `classes[o]`.
    pub classes: Vec<BrailleSymbol>,
    pub hyper: Hyper,
    pub sensor_states: SensorStates,
    /// Comparator levels of the binary variant.
    pub binary_thresholds: Option<[f64; SENSOR_OUT]>,
    pub weights: SoftwareNetwork,
    /// Siemens per unit weight for the hidden and output crossbars.
    pub mapping_scale: [f64; 2],
    pub final_loss: f64,
}

impl TrainedNetwork {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: TrainedNetwork = serde_json::from_str(text)?;
        if net.format != NETWORK_FORMAT {
            return Err(Error::Config(format!(
                "unsupported network format {:?} (expected {NETWORK_FORMAT:?})",
                net.format
            )));
        }
        net.arch.validate()?;
        if net.classes.len() != net.arch.n_out
            || net.weights.b_out.len() != net.arch.n_out
            || net.weights.w_hidden.len() != SENSOR_OUT
            || net.weights.w_out.len() != HIDDEN
        {
            return Err(Error::DimensionMismatch {
                context: "serialized network",
                expected: format!("{SENSOR_OUT}x{HIDDEN} and {HIDDEN}x{}", net.arch.n_out),
                actual: "inconsistent weight shapes".into(),
            });
        }
        Ok(net)
    }

    pub fn label(&self, port: usize) -> &str {
        &self.classes[port].label
    }

    /// Noiseless or noisy features as presented to the hidden layer.
    pub fn features<R: Rng>(
        &self,
        forces: &ForceGrid,
        cfg: &SimConfig,
        sigma2: f64,
        rng: &mut R,
    ) -> [f64; SENSOR_OUT] {
        let sensor = FastSensor::new(&cfg.devices, &cfg.scaling);
        let mut x = sensor.features(forces, &self.sensor_states);
        add_noise_in_place(&mut x, sigma2, rng);
        if let Some(t) = &self.binary_thresholds {
            binarize(&mut x, t);
        }
        x
    }

    /// Largest absolute weight (or bias) of each dense layer.
    pub fn max_abs_weights(&self) -> [f64; 2] {
        let w = &self.weights;
        let m1 = w.w_hidden.iter().flatten().chain(&w.b_hidden).fold(0.0f64, |m, v| m.max(v.abs()));
        let m2 = w.w_out.iter().flatten().chain(&w.b_out).fold(0.0f64, |m, v| m.max(v.abs()));
        [m1, m2]
    }
}

/// Flat parameter buffers used while training.
struct Params {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    states: SensorStates,
}

impl Params {
    fn zeros_like(&self) -> Self {
        Params {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
            states: [[0.0; GRID_COLS]; GRID_ROWS],
        }
    }
}

/// Trains the software model on `dataset` with mini-batch gradient descent
/// on the cross-entropy loss. Every presentation draws fresh feature noise
/// at `hyper.sigma2`.
pub fn train(
    dataset: &Dataset,
    arch: NetworkArch,
    mode: SignalMode,
    hyper: &Hyper,
    cfg: &SimConfig,
) -> Result<TrainedNetwork> {
    arch.validate()?;
    hyper.validate()?;
    cfg.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if dataset.n_classes() != arch.n_out {
        return Err(Error::DimensionMismatch {
            context: "training labels",
            expected: format!("{} classes", arch.n_out),
            actual: format!("{} classes", dataset.n_classes()),
        });
    }
    let n_out = arch.n_out;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let sensor = FastSensor::new(&cfg.devices, &cfg.scaling);

    let mut states = [[0.0; GRID_COLS]; GRID_ROWS];
    for s in states.iter_mut().flatten() {
        *s = rng.random_range(0.5..=1.0);
    }
    let he1 = Normal::new(0.0, (2.0 / SENSOR_OUT as f64).sqrt()).expect("finite std");
    let he2 = Normal::new(0.0, (2.0 / HIDDEN as f64).sqrt()).expect("finite std");
    let mut p = Params {
        w1: (0..SENSOR_OUT * HIDDEN).map(|_| he1.sample(&mut rng)).collect(),
        b1: vec![HIDDEN_BIAS_INIT; HIDDEN],
        w2: (0..HIDDEN * n_out).map(|_| he2.sample(&mut rng)).collect(),
        b2: vec![0.0; n_out],
        states,
    };

    let thresholds = match mode {
        SignalMode::Analog => None,
        SignalMode::Binary => Some(binary_thresholds(&sensor, dataset.f_press, &p.states)),
    };
    let learn_states = hyper.train_states && mode == SignalMode::Analog;

    let mut order: Vec<usize> = (0..dataset.samples.len()).collect();
    let mut grad = p.zeros_like();
    let mut scratch = Scratch::new(n_out);
    let mut last_loss = f64::NAN;
    let mut opt = Stepper::new(hyper, &p);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch) {
            zero(&mut grad);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let sample = &dataset.samples[idx];
                let mut x = sensor.features(&sample.forces, &p.states);
                add_noise_in_place(&mut x, hyper.sigma2, &mut rng);
                if let Some(t) = &thresholds {
                    binarize(&mut x, t);
                }
                batch_loss += scratch.accumulate(&p, &mut grad, &x, sample.class);
                if learn_states {
                    let slopes = sensor.cell_slopes(&sample.forces, &p.states);
                    for r in 0..GRID_ROWS {
                        for c in 0..GRID_COLS {
                            // Cell (r, c) feeds column c and row r.
                            let dx = scratch.dx[c] + scratch.dx[GRID_COLS + r];
                            grad.states[r][c] += dx * slopes[r][c];
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    detail: format!(
                        "loss became {batch_loss} (lr {}, sigma2 {})",
                        hyper.lr, hyper.sigma2
                    ),
                });
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            opt.step(&mut p, &grad, scale, learn_states);
        }
        last_loss = epoch_loss / dataset.samples.len() as f64;
    }

    let weights = SoftwareNetwork {
        w_hidden: p.w1.chunks(HIDDEN).map(<[f64]>::to_vec).collect(),
        b_hidden: p.b1,
        w_out: p.w2.chunks(n_out).map(<[f64]>::to_vec).collect(),
        b_out: p.b2,
    };
    let mut net = TrainedNetwork {
        format: NETWORK_FORMAT.to_string(),
        arch,
        mode,
        selection: dataset.selection.clone(),
        classes: dataset.classes.clone(),
        hyper: *hyper,
        sensor_states: p.states,
        binary_thresholds: thresholds,
        weights,
        mapping_scale: [0.0; 2],
        final_loss: last_loss,
    };
    let span = 1.0 / cfg.devices.r_on - 1.0 / cfg.devices.r_off;
    net.mapping_scale = net.max_abs_weights().map(|m| if m > 0.0 { span / m } else { span });
    Ok(net)
}

/// Applies one optimizer step; states are projected back onto [0, 1].
struct Stepper {
    kind: Optimizer,
    lr: f64,
    t: i32,
    m: Params,
    v: Params,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Stepper {
    fn new(hyper: &Hyper, p: &Params) -> Self {
        Stepper {
            kind: hyper.optimizer,
            lr: hyper.lr,
            t: 0,
            m: p.zeros_like(),
            v: p.zeros_like(),
        }
    }

    fn step(&mut self, p: &mut Params, g: &Params, scale: f64, learn_states: bool) {
        self.t += 1;
        let lr = self.lr;
        let kind = self.kind;
        let (c1, c2) = (1.0 - BETA1.powi(self.t), 1.0 - BETA2.powi(self.t));
        let apply = |x: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| match kind {
            Optimizer::Sgd => {
                for (x, g) in x.iter_mut().zip(g) {
                    *x -= lr * scale * g;
                }
            }
            Optimizer::Adam => {
                for i in 0..x.len() {
                    let gi = g[i] * scale;
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                    x[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        };
        apply(&mut p.w1, &g.w1, &mut self.m.w1, &mut self.v.w1);
        apply(&mut p.b1, &g.b1, &mut self.m.b1, &mut self.v.b1);
        apply(&mut p.w2, &g.w2, &mut self.m.w2, &mut self.v.w2);
        apply(&mut p.b2, &g.b2, &mut self.m.b2, &mut self.v.b2);
        if learn_states {
            apply(
                p.states.as_flattened_mut(),
                g.states.as_flattened(),
                self.m.states.as_flattened_mut(),
                self.v.states.as_flattened_mut(),
            );
            for s in p.states.as_flattened_mut() {
                *s = s.clamp(0.0, 1.0);
            }
        }
    }
}

fn zero(p: &mut Params) {
    p.w1.fill(0.0);
    p.b1.fill(0.0);
    p.w2.fill(0.0);
    p.b2.fill(0.0);
    p.states = [[0.0; GRID_COLS]; GRID_ROWS];
}

/// Per-sample forward/backward buffers.
struct Scratch {
    pre: [f64; HIDDEN],
    h: [f64; HIDDEN],
    z: Vec<f64>,
    dh: [f64; HIDDEN],
    dx: [f64; SENSOR_OUT],
}

impl Scratch {
    fn new(n_out: usize) -> Self {
        Scratch {
            pre: [0.0; HIDDEN],
            h: [0.0; HIDDEN],
            z: vec![0.0; n_out],
            dh: [0.0; HIDDEN],
            dx: [0.0; SENSOR_OUT],
        }
    }

    /// Adds the gradient of `-ln p[y]` to `g`, leaves `dL/dx` in `self.dx`
    /// and returns the loss.
    fn accumulate(&mut self, p: &Params, g: &mut Params, x: &[f64; SENSOR_OUT], y: usize) -> f64 {
        let n_out = self.z.len();
        self.pre.copy_from_slice(&p.b1);
        for (i, xi) in x.iter().enumerate() {
            let row = &p.w1[i * HIDDEN..(i + 1) * HIDDEN];
            for j in 0..HIDDEN {
                self.pre[j] += xi * row[j];
            }
        }
        for j in 0..HIDDEN {
            self.h[j] = self.pre[j].max(0.0);
        }
        self.z.copy_from_slice(&p.b2);
        for (j, hj) in self.h.iter().enumerate() {
            if *hj == 0.0 {
                continue;
            }
            let row = &p.w2[j * n_out..(j + 1) * n_out];
            for (z, w) in self.z.iter_mut().zip(row) {
                *z += hj * w;
            }
        }
        let peak = self.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in self.z.iter_mut() {
            *z = (*z - peak).exp();
            total += *z;
        }
        // self.z now holds dL/dz = softmax - onehot.
        for z in self.z.iter_mut() {
            *z /= total;
        }
        let loss = -self.z[y].ln();
        self.z[y] -= 1.0;

        for (b, dz) in g.b2.iter_mut().zip(&self.z) {
            *b += dz;
        }
        for j in 0..HIDDEN {
            let row = &p.w2[j * n_out..(j + 1) * n_out];
            let grow = &mut g.w2[j * n_out..(j + 1) * n_out];
            let mut dh = 0.0;
            let hj = self.h[j];
            for o in 0..n_out {
                grow[o] += hj * self.z[o];
                dh += row[o] * self.z[o];
            }
            self.dh[j] = if self.pre[j] > 0.0 { dh } else { 0.0 };
        }
        for (b, d) in g.b1.iter_mut().zip(&self.dh) {
            *b += d;
        }
        for (i, xi) in x.iter().enumerate() {
            let row = &p.w1[i * HIDDEN..(i + 1) * HIDDEN];
            let grow = &mut g.w1[i * HIDDEN..(i + 1) * HIDDEN];
            let mut dx = 0.0;
            for j in 0..HIDDEN {
                grow[j] += xi * self.dh[j];
                dx += row[j] * self.dh[j];
            }
            self.dx[i] = dx;
        }
        loss
    }
}
