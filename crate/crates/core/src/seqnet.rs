//! Single-layer LSTM sequence classifier.
//!
//! One cell step computes
//!
//! ```text
//! f = σ(W_f x + U_f h + b_f)      i = σ(W_i x + U_i h + b_i)
//! a = tanh(W_c x + U_c h + b_c)   o = σ(W_o x + U_o h + b_o)
//! c' = f ∘ c + i ∘ a              h' = o ∘ tanh(c')
//! ```
//!
//! A window is classified many-to-one: the cell runs over every sample from a
//! zero state and an affine readout plus softmax maps the final hidden
//! vector to class probabilities. Training is plain SGD with
//! back-propagation through time over each window's own length.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::labels::{AnyLabel, Family, Label};

/// Inertial channels per time step (3 accelerometer + 3 gyroscope).
pub const INPUT_DIM: usize = 6;
pub const WEIGHT_MAGIC: &[u8; 4] = b"ODW1";
pub const WEIGHT_VERSION: u32 = 1;
const GRAVITY: f64 = 9.81;
const ACCEL_SCALE: f64 = 5.0;
const GYRO_SCALE: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum SeqnetError {
    #[error("input has dimension {found}, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cannot classify an empty window")]
    EmptyWindow,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set mixes move-state and action-unit labels")]
    MixedLabelFamilies,
    #[error("unsupported weight file version {found} (expected {expected})")]
    FormatVersionMismatch { expected: u32, found: u32 },
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Weights of one gate: input matrix `W` (m×l), recurrent matrix `U` (m×m)
/// and bias `b` (m), all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl Gate {
    fn zeros(m: usize, l: usize) -> Self {
        Gate {
            w: vec![0.0; m * l],
            u: vec![0.0; m * m],
            b: vec![0.0; m],
        }
    }

    /// `W x + U h + b`
    fn preactivation(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        let l = x.len();
        let m = h.len();
        for (j, o) in out.iter_mut().enumerate() {
            let wr = &self.w[j * l..(j + 1) * l];
            let ur = &self.u[j * m..(j + 1) * m];
            let mut acc = self.b[j];
            for (w, xv) in wr.iter().zip(x) {
                acc += w * xv;
            }
            for (u, hv) in ur.iter().zip(h) {
                acc += u * hv;
            }
            *o = acc;
        }
    }
}

/// LSTM weights plus the classification readout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    pub classes: usize,
    pub input_gate: Gate,
    pub output_gate: Gate,
    pub forget_gate: Gate,
    pub candidate: Gate,
    /// classes × hidden
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize, classes: usize) -> Self {
        LstmParams {
            hidden,
            input,
            classes,
            input_gate: Gate::zeros(hidden, input),
            output_gate: Gate::zeros(hidden, input),
            forget_gate: Gate::zeros(hidden, input),
            candidate: Gate::zeros(hidden, input),
            head_w: vec![0.0; classes * hidden],
            head_b: vec![0.0; classes],
        }
    }

    /// Uniform weights in ±1/√m, zero biases except the forget gate at +1.
    pub fn init(hidden: usize, input: usize, classes: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden, input, classes);
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        p.input_gate.b.fill(0.0);
        p.output_gate.b.fill(0.0);
        p.candidate.b.fill(0.0);
        p.forget_gate.b.fill(1.0);
        p.head_b.fill(0.0);
        p
    }

    /// Every tensor in weight-file order: W_i, W_o, W_f, W_c, U_i, U_o, U_f,
    /// U_c, b_i, b_o, b_f, b_c, head_W, head_b.
    pub fn tensors(&self) -> [&Vec<f64>; 14] {
        let g = [
            &self.input_gate,
            &self.output_gate,
            &self.forget_gate,
            &self.candidate,
        ];
        [
            &g[0].w,
            &g[1].w,
            &g[2].w,
            &g[3].w,
            &g[0].u,
            &g[1].u,
            &g[2].u,
            &g[3].u,
            &g[0].b,
            &g[1].b,
            &g[2].b,
            &g[3].b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 14] {
        let LstmParams {
            input_gate: i,
            output_gate: o,
            forget_gate: f,
            candidate: c,
            head_w,
            head_b,
            ..
        } = self;
        [
            &mut i.w, &mut o.w, &mut f.w, &mut c.w, &mut i.u, &mut o.u, &mut f.u, &mut c.u,
            &mut i.b, &mut o.b, &mut f.b, &mut c.b, head_w, head_b,
        ]
    }

    fn expected_lengths(&self) -> [usize; 14] {
        let (m, l, k) = (self.hidden, self.input, self.classes);
        [
            m * l,
            m * l,
            m * l,
            m * l,
            m * m,
            m * m,
            m * m,
            m * m,
            m,
            m,
            m,
            m,
            k * m,
            k,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.expected_lengths().iter().sum()
    }

    /// Checks dimensions and finiteness.
    pub fn validate(&self) -> Result<(), SeqnetError> {
        if self.hidden == 0 || self.input == 0 || self.classes < 2 {
            return Err(SeqnetError::InvalidParams(format!(
                "hidden={}, input={}, classes={}",
                self.hidden, self.input, self.classes
            )));
        }
        for (t, want) in self.tensors().iter().zip(self.expected_lengths()) {
            if t.len() != want {
                return Err(SeqnetError::InvalidParams(format!(
                    "tensor of length {} where {want} expected",
                    t.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(SeqnetError::InvalidParams("non-finite weight".to_string()));
            }
        }
        Ok(())
    }

    fn norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum()
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn add_scaled(&mut self, other: &LstmParams, s: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += s * y;
            }
        }
    }

    /// Serialises to the versioned little-endian weight format.
    pub fn to_bytes(&self) -> Result<Vec<u8>, SeqnetError> {
        self.validate()?;
        let mut out = Vec::with_capacity(24 + 8 * self.parameter_count());
        out.extend_from_slice(WEIGHT_MAGIC);
        for v in [
            WEIGHT_VERSION,
            self.hidden as u32,
            self.input as u32,
            self.classes as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.tensors() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SeqnetError> {
        const HEADER: usize = 20;
        if bytes.len() < HEADER + 4 {
            return Err(SeqnetError::CorruptFile(format!(
                "{} bytes is too short",
                bytes.len()
            )));
        }
        if &bytes[..4] != WEIGHT_MAGIC {
            return Err(SeqnetError::CorruptFile("bad magic".to_string()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != WEIGHT_VERSION {
            return Err(SeqnetError::FormatVersionMismatch {
                expected: WEIGHT_VERSION,
                found: version,
            });
        }
        let (m, l, k) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let mut params = LstmParams::zeros(m, l, k);
        let body = 8 * params.parameter_count();
        if bytes.len() != HEADER + body + 4 {
            return Err(SeqnetError::CorruptFile(format!(
                "expected {} bytes for m={m} l={l} classes={k}, found {}",
                HEADER + body + 4,
                bytes.len()
            )));
        }
        let stored = word(HEADER + body);
        if crc32fast::hash(&bytes[..HEADER + body]) != stored {
            return Err(SeqnetError::CorruptFile("checksum mismatch".to_string()));
        }
        let mut at = HEADER;
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
                at += 8;
            }
        }
        params.validate()?;
        Ok(params)
    }
}

pub fn save_params(params: &LstmParams, path: impl AsRef<Path>) -> Result<(), SeqnetError> {
    fs::write(path, params.to_bytes()?)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<LstmParams, SeqnetError> {
    LstmParams::from_bytes(&fs::read(path)?)
}

/// Hidden output and cell state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(m: usize) -> Self {
        LstmState {
            h: vec![0.0; m],
            c: vec![0.0; m],
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intermediate values of one step, kept for back-propagation.
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    a: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn forward_step(p: &LstmParams, x: &[f64], prev: &LstmState) -> (LstmState, StepCache) {
    let m = p.hidden;
    let mut f = vec![0.0; m];
    let mut i = vec![0.0; m];
    let mut a = vec![0.0; m];
    let mut o = vec![0.0; m];
    p.forget_gate.preactivation(x, &prev.h, &mut f);
    p.input_gate.preactivation(x, &prev.h, &mut i);
    p.candidate.preactivation(x, &prev.h, &mut a);
    p.output_gate.preactivation(x, &prev.h, &mut o);
    f.iter_mut().for_each(|v| *v = sigmoid(*v));
    i.iter_mut().for_each(|v| *v = sigmoid(*v));
    a.iter_mut().for_each(|v| *v = v.tanh());
    o.iter_mut().for_each(|v| *v = sigmoid(*v));
    let c: Vec<f64> = (0..m).map(|j| f[j] * prev.c[j] + i[j] * a[j]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..m).map(|j| o[j] * tanh_c[j]).collect();
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        f,
        i,
        a,
        o,
        tanh_c,
    };
    (LstmState { h, c }, cache)
}

/// One LSTM time step.
pub fn cell_step(
    params: &LstmParams,
    x: &[f64],
    prev: &LstmState,
) -> Result<LstmState, SeqnetError> {
    if x.len() != params.input {
        return Err(SeqnetError::DimMismatch {
            expected: params.input,
            found: x.len(),
        });
    }
    if prev.h.len() != params.hidden || prev.c.len() != params.hidden {
        return Err(SeqnetError::DimMismatch {
            expected: params.hidden,
            found: prev.h.len().min(prev.c.len()),
        });
    }
    Ok(forward_step(params, x, prev).0)
}

fn logits(p: &LstmParams, h: &[f64]) -> Vec<f64> {
    (0..p.classes)
        .map(|k| {
            let row = &p.head_w[k * p.hidden..(k + 1) * p.hidden];
            p.head_b[k] + row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; the earliest wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Scales one raw inertial reading (accel m/s², gyro rad/s) into the model's
/// input range. Gravity is removed from the vertical channel.
pub fn features(raw: &[f64; 6]) -> [f64; 6] {
    [
        raw[0] / ACCEL_SCALE,
        raw[1] / ACCEL_SCALE,
        (raw[2] - GRAVITY) / ACCEL_SCALE,
        raw[3] / GYRO_SCALE,
        raw[4] / GYRO_SCALE,
        raw[5] / GYRO_SCALE,
    ]
}

/// Label, class probabilities and the number of classifier passes spent.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierVerdict {
    pub label: usize,
    pub confidence: Vec<f64>,
    pub evals: u32,
}

impl ClassifierVerdict {
    pub fn from_probabilities(confidence: Vec<f64>) -> Self {
        ClassifierVerdict {
            label: argmax(&confidence),
            confidence,
            evals: 1,
        }
    }

    /// Probability of the winning class.
    pub fn top(&self) -> f64 {
        self.confidence[self.label]
    }

    pub fn label_as<L: Label>(&self) -> Option<L> {
        L::from_index(self.label)
    }
}

fn final_hidden(p: &LstmParams, xs: &[[f64; INPUT_DIM]]) -> Vec<f64> {
    let mut state = LstmState::zeros(p.hidden);
    for x in xs {
        state = forward_step(p, x, &state).0;
    }
    state.h
}

/// Class probabilities for a window of already-scaled feature vectors.
pub fn predict_features(
    params: &LstmParams,
    xs: &[[f64; INPUT_DIM]],
) -> Result<ClassifierVerdict, SeqnetError> {
    if xs.is_empty() {
        return Err(SeqnetError::EmptyWindow);
    }
    if params.input != INPUT_DIM {
        return Err(SeqnetError::DimMismatch {
            expected: INPUT_DIM,
            found: params.input,
        });
    }
    let h = final_hidden(params, xs);
    Ok(ClassifierVerdict::from_probabilities(softmax(&logits(
        params, &h,
    ))))
}

/// Classifies a window of raw 6-channel inertial samples.
pub fn classify(
    params: &LstmParams,
    window: &[[f64; 6]],
) -> Result<ClassifierVerdict, SeqnetError> {
    let xs: Vec<[f64; INPUT_DIM]> = window.iter().map(features).collect();
    predict_features(params, &xs)
}

/// Cross-entropy of one window and its gradient with respect to every
/// parameter, by back-propagation through time.
#[allow(clippy::needless_range_loop)]
pub fn loss_and_grad(p: &LstmParams, xs: &[[f64; INPUT_DIM]], label: usize) -> (f64, LstmParams) {
    let m = p.hidden;
    let l = p.input;
    let mut caches = Vec::with_capacity(xs.len());
    let mut state = LstmState::zeros(m);
    for x in xs {
        let (next, cache) = forward_step(p, x, &state);
        caches.push(cache);
        state = next;
    }
    let probs = softmax(&logits(p, &state.h));
    let loss = -probs[label].max(1e-300).ln();

    let mut g = LstmParams::zeros(m, l, p.classes);
    let mut dh = vec![0.0; m];
    for k in 0..p.classes {
        let dz = probs[k] - if k == label { 1.0 } else { 0.0 };
        g.head_b[k] = dz;
        for j in 0..m {
            g.head_w[k * m + j] = dz * state.h[j];
            dh[j] += dz * p.head_w[k * m + j];
        }
    }

    let mut dc = vec![0.0; m];
    let mut dz_f = vec![0.0; m];
    let mut dz_i = vec![0.0; m];
    let mut dz_a = vec![0.0; m];
    let mut dz_o = vec![0.0; m];
    for cache in caches.iter().rev() {
        for j in 0..m {
            let do_ = dh[j] * cache.tanh_c[j];
            dc[j] += dh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
            let df = dc[j] * cache.c_prev[j];
            let di = dc[j] * cache.a[j];
            let da = dc[j] * cache.i[j];
            dz_o[j] = do_ * cache.o[j] * (1.0 - cache.o[j]);
            dz_f[j] = df * cache.f[j] * (1.0 - cache.f[j]);
            dz_i[j] = di * cache.i[j] * (1.0 - cache.i[j]);
            dz_a[j] = da * (1.0 - cache.a[j] * cache.a[j]);
            dc[j] *= cache.f[j];
        }
        let mut dh_prev = vec![0.0; m];
        for (gate, grad, dz) in [
            (&p.forget_gate, &mut g.forget_gate, &dz_f),
            (&p.input_gate, &mut g.input_gate, &dz_i),
            (&p.candidate, &mut g.candidate, &dz_a),
            (&p.output_gate, &mut g.output_gate, &dz_o),
        ] {
            for j in 0..m {
                let d = dz[j];
                if d == 0.0 {
                    continue;
                }
                grad.b[j] += d;
                for (w, xv) in grad.w[j * l..(j + 1) * l].iter_mut().zip(&cache.x) {
                    *w += d * xv;
                }
                let urow = &gate.u[j * m..(j + 1) * m];
                for q in 0..m {
                    grad.u[j * m + q] += d * cache.h_prev[q];
                    dh_prev[q] += d * urow[q];
                }
            }
        }
        dh = dh_prev;
    }
    (loss, g)
}

/// Cross-entropy only.
pub fn sequence_loss(p: &LstmParams, xs: &[[f64; INPUT_DIM]], label: usize) -> f64 {
    let h = final_hidden(p, xs);
    let probs = softmax(&logits(p, &h));
    -probs[label].max(1e-300).ln()
}

/// One labelled training window of raw 6-channel samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub window: Vec<[f64; 6]>,
    pub label: AnyLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Examples per update; 0 means the whole set.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 0.05,
            hidden: 24,
            seed: 7,
            clip_norm: 5.0,
            batch_size: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: LstmParams,
    pub family: Family,
    /// Mean training loss before the first epoch and after each epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&f64::NAN)
    }
}

fn mean_loss(p: &LstmParams, data: &[(Vec<[f64; INPUT_DIM]>, usize)]) -> f64 {
    data.iter()
        .map(|(xs, y)| sequence_loss(p, xs, *y))
        .sum::<f64>()
        / data.len() as f64
}

/// Fits an LSTM classifier by SGD on cross-entropy. Windows keep their own
/// lengths; nothing is padded.
pub fn train(dataset: &[Example], cfg: &TrainConfig) -> Result<TrainedModel, SeqnetError> {
    let first = dataset.first().ok_or(SeqnetError::EmptyDataset)?;
    let family = first.label.family();
    if dataset.iter().any(|e| e.label.family() != family) {
        return Err(SeqnetError::MixedLabelFamilies);
    }
    if dataset.iter().any(|e| e.window.is_empty()) {
        return Err(SeqnetError::EmptyWindow);
    }
    if cfg.hidden == 0 {
        return Err(SeqnetError::InvalidParams("hidden size 0".to_string()));
    }
    let data: Vec<(Vec<[f64; INPUT_DIM]>, usize)> = dataset
        .iter()
        .map(|e| (e.window.iter().map(features).collect(), e.label.index()))
        .collect();
    let mut params = LstmParams::init(cfg.hidden, INPUT_DIM, family.class_count(), cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = if cfg.batch_size == 0 {
        data.len()
    } else {
        cfg.batch_size
    };
    let mut loss_history = vec![mean_loss(&params, &data)];
    for _ in 0..cfg.epochs {
        if batch < data.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let mut grad = LstmParams::zeros(params.hidden, params.input, params.classes);
            for &idx in chunk {
                let (xs, y) = &data[idx];
                let (_, g) = loss_and_grad(&params, xs, *y);
                grad.add_scaled(&g, 1.0);
            }
            grad.scale(1.0 / chunk.len() as f64);
            let norm = grad.norm_sq().sqrt();
            if norm > cfg.clip_norm {
                grad.scale(cfg.clip_norm / norm);
            }
            params.add_scaled(&grad, -cfg.lr);
        }
        loss_history.push(mean_loss(&params, &data));
    }
    Ok(TrainedModel {
        params,
        family,
        loss_history,
    })
}
