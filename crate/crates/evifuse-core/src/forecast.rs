//! LSTM load predictor: forward pass, backpropagation through time,
//! full-batch gradient-descent training, and finite-difference gradient
//! checking.
//!
//! The cell follows the standard gate formulation. With input `x_t`, previous
//! hidden state `h_{t-1}` and previous cell state `c_{t-1}`:
//!
//! ```text
//! i = sigmoid(W_i x + U_i h_prev + b_i)      input gate
//! f = sigmoid(W_f x + U_f h_prev + b_f)      forget gate
//! g =    tanh(W_c x + U_c h_prev + b_c)      candidate cell
//! o = sigmoid(W_o x + U_o h_prev + b_o)      output gate
//! c = f .* c_prev + i .* g
//! h = o .* tanh(c)
//! ```
//!
//! Layers stack (layer `l` reads layer `l-1`'s hidden sequence) and a scalar
//! affine head reads the top hidden state at each step. Everything is f64 and
//! fully deterministic: the same seed always produces bit-identical
//! parameters and training runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;

/// Half-width of the uniform parameter initialization interval.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("feature sequence is empty")]
    EmptySequence,
    #[error("step {step} carries {found} features, the network expects {expected}")]
    InputSizeMismatch {
        step: usize,
        expected: usize,
        found: usize,
    },
    #[error("input at step {step} is not finite")]
    NonFiniteInput { step: usize },
    #[error("prediction series is empty")]
    EmptySeries,
    #[error("{found} targets supplied for {expected} sequence steps")]
    TargetLengthMismatch { expected: usize, found: usize },
    #[error("flat parameter vector holds {found} values, expected {expected}")]
    FlatLengthMismatch { expected: usize, found: usize },
    #[error("no training samples supplied")]
    NoSamples,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("checkpoint is inconsistent: {0}")]
    BadCheckpoint(String),
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dense row-major matrix. Rows index outputs, columns index inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// `y = A x`.
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `x = A^T y`, accumulated into `acc`.
    fn matvec_t_acc(&self, y: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(acc.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v * yr;
            }
        }
    }

    /// `A += y x^T`.
    fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (a, &v) in row.iter_mut().zip(x) {
                *a += yr * v;
            }
        }
    }
}

/// One gate's parameters: input weights, recurrent weights, bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GateParams {
    w: Mat,
    u: Mat,
    b: Vec<f64>,
}

impl GateParams {
    fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w: Mat::zeros(hidden, input),
            u: Mat::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    /// Pre-activation `W x + U h_prev + b`.
    fn preact(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut a = self.w.matvec(x);
        let ua = self.u.matvec(h_prev);
        for ((av, uv), bv) in a.iter_mut().zip(ua).zip(&self.b) {
            *av += uv + bv;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerParams {
    input: GateParams,
    forget: GateParams,
    cell: GateParams,
    output: GateParams,
}

impl LayerParams {
    fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            input: GateParams::zeros(hidden, input),
            forget: GateParams::zeros(hidden, input),
            cell: GateParams::zeros(hidden, input),
            output: GateParams::zeros(hidden, input),
        }
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.input, &self.forget, &self.cell, &self.output]
    }

    fn gates_mut(&mut self) -> [&mut GateParams; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.cell,
            &mut self.output,
        ]
    }
}

/// Hidden and cell state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LayerState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }
}

/// Full network state: one [`LayerState`] per layer, bottom first.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub layers: Vec<LayerState>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize, num_layers: usize) -> Self {
        Self {
            layers: (0..num_layers).map(|_| LayerState::zeros(hidden_size)).collect(),
        }
    }
}

/// All learnable parameters of a stacked LSTM with a scalar output head.
///
/// The flat ordering used by [`to_flat`](Self::to_flat),
/// [`set_flat`](Self::set_flat), and seeded initialization is: for each layer
/// bottom-up, the input, forget, cell, and output gates in that order, each
/// as `W` row-major, then `U` row-major, then `b`; after all layers, the head
/// weights and finally the head bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    input_size: usize,
    hidden_size: usize,
    layers: Vec<LayerParams>,
    head_w: Vec<f64>,
    head_b: f64,
}

impl LstmParams {
    /// All-zero parameters (useful as a gradient accumulator and in tests).
    pub fn zeros(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
    ) -> Result<Self, ForecastError> {
        if input_size == 0 || hidden_size == 0 || num_layers == 0 {
            return Err(ForecastError::InvalidConfig(format!(
                "sizes must be positive (input {input_size}, hidden {hidden_size}, layers {num_layers})"
            )));
        }
        let layers = (0..num_layers)
            .map(|l| {
                let in_l = if l == 0 { input_size } else { hidden_size };
                LayerParams::zeros(hidden_size, in_l)
            })
            .collect();
        Ok(Self {
            input_size,
            hidden_size,
            layers,
            head_w: vec![0.0; hidden_size],
            head_b: 0.0,
        })
    }

    /// Seeded uniform initialization over `[-scale, scale]`, drawn in flat
    /// parameter order. The same arguments always produce bit-identical
    /// parameters.
    pub fn random_uniform(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Self, ForecastError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(ForecastError::InvalidConfig(format!(
                "init scale must be positive, got {scale}"
            )));
        }
        let mut params = Self::zeros(input_size, hidden_size, num_layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..params.param_count())
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        params.set_flat(&flat).expect("length matches by construction");
        Ok(params)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden_size;
        let per_layer = |in_l: usize| 4 * (h * in_l + h * h + h);
        let mut count = 0;
        for l in 0..self.layers.len() {
            count += per_layer(if l == 0 { self.input_size } else { h });
        }
        count + h + 1
    }

    /// Copies every parameter into one vector in the canonical flat order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for gate in layer.gates() {
                flat.extend_from_slice(&gate.w.data);
                flat.extend_from_slice(&gate.u.data);
                flat.extend_from_slice(&gate.b);
            }
        }
        flat.extend_from_slice(&self.head_w);
        flat.push(self.head_b);
        flat
    }

    /// Overwrites every parameter from a flat vector in canonical order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ForecastError> {
        if flat.len() != self.param_count() {
            return Err(ForecastError::FlatLengthMismatch {
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for layer in &mut self.layers {
            for gate in layer.gates_mut() {
                take(&mut gate.w.data);
                take(&mut gate.u.data);
                take(&mut gate.b);
            }
        }
        take(&mut self.head_w);
        self.head_b = flat[pos];
        Ok(())
    }

    /// Advances one layer by one step, returning its new state and the
    /// hidden output vector it emits.
    pub fn cell_forward(
        &self,
        layer: usize,
        x: &[f64],
        prev: &LayerState,
    ) -> Result<(LayerState, Vec<f64>), ForecastError> {
        if layer >= self.layers.len() {
            return Err(ForecastError::InvalidConfig(format!(
                "layer {layer} out of range for {} layers",
                self.layers.len()
            )));
        }
        let expected = if layer == 0 { self.input_size } else { self.hidden_size };
        if x.len() != expected {
            return Err(ForecastError::InputSizeMismatch {
                step: 0,
                expected,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::NonFiniteInput { step: 0 });
        }
        let trace = self.cell_forward_traced(layer, x, prev);
        let output = trace.h.clone();
        Ok((
            LayerState {
                hidden: trace.h,
                cell: trace.c,
            },
            output,
        ))
    }

    fn cell_forward_traced(&self, layer: usize, x: &[f64], prev: &LayerState) -> LayerTrace {
        let p = &self.layers[layer];
        let i: Vec<f64> = p.input.preact(x, &prev.hidden).iter().map(|&a| sigmoid(a)).collect();
        let f: Vec<f64> = p.forget.preact(x, &prev.hidden).iter().map(|&a| sigmoid(a)).collect();
        let g: Vec<f64> = p.cell.preact(x, &prev.hidden).iter().map(|&a| a.tanh()).collect();
        let o: Vec<f64> = p.output.preact(x, &prev.hidden).iter().map(|&a| sigmoid(a)).collect();
        let c: Vec<f64> = (0..self.hidden_size)
            .map(|k| f[k] * prev.cell[k] + i[k] * g[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..self.hidden_size).map(|k| o[k] * tanh_c[k]).collect();
        LayerTrace {
            x: x.to_vec(),
            h_prev: prev.hidden.clone(),
            c_prev: prev.cell.clone(),
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        }
    }

    fn check_features(&self, features: &[Vec<f64>]) -> Result<(), ForecastError> {
        if features.is_empty() {
            return Err(ForecastError::EmptySequence);
        }
        for (step, row) in features.iter().enumerate() {
            if row.len() != self.input_size {
                return Err(ForecastError::InputSizeMismatch {
                    step,
                    expected: self.input_size,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ForecastError::NonFiniteInput { step });
            }
        }
        Ok(())
    }

    fn forward_traced(&self, features: &[Vec<f64>]) -> Result<ForwardTrace, ForecastError> {
        self.check_features(features)?;
        let mut state = LstmState::zeros(self.hidden_size, self.layers.len());
        let mut steps = Vec::with_capacity(features.len());
        let mut preds = Vec::with_capacity(features.len());
        for x in features {
            let mut layer_traces = Vec::with_capacity(self.layers.len());
            let mut input = x.clone();
            for (l, prev) in state.layers.iter_mut().enumerate() {
                let trace = self.cell_forward_traced(l, &input, prev);
                input = trace.h.clone();
                *prev = LayerState {
                    hidden: trace.h.clone(),
                    cell: trace.c.clone(),
                };
                layer_traces.push(trace);
            }
            let top = &layer_traces[self.layers.len() - 1].h;
            let pred = self.head_w.iter().zip(top).map(|(w, h)| w * h).sum::<f64>() + self.head_b;
            preds.push(pred);
            steps.push(StepTrace {
                layers: layer_traces,
            });
        }
        Ok(ForwardTrace { steps, preds, final_state: state })
    }

    /// Runs the whole sequence, returning the per-step predictions and the
    /// final network state.
    pub fn forward_sequence(
        &self,
        features: &[Vec<f64>],
    ) -> Result<(Vec<f64>, LstmState), ForecastError> {
        let trace = self.forward_traced(features)?;
        Ok((trace.preds, trace.final_state))
    }

    /// Prediction for the last step of the sequence.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<f64, ForecastError> {
        let (preds, _) = self.forward_sequence(features)?;
        Ok(*preds.last().expect("nonempty by check_features"))
    }

    /// [`mse_loss`] of this network's per-step predictions against `targets`.
    pub fn sequence_loss(
        &self,
        features: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<f64, ForecastError> {
        let (preds, _) = self.forward_sequence(features)?;
        mse_loss(&preds, targets)
    }

    /// Gradient of [`sequence_loss`](Self::sequence_loss) with respect to
    /// every parameter, as a parameter-shaped accumulator.
    ///
    /// `truncation` limits how many steps from the end of the sequence carry
    /// gradient; `None` (or any value at least the sequence length)
    /// backpropagates through the full window. Error signals at steps outside
    /// the truncated window are dropped.
    pub fn backward(
        &self,
        features: &[Vec<f64>],
        targets: &[f64],
        truncation: Option<usize>,
    ) -> Result<LstmParams, ForecastError> {
        let trace = self.forward_traced(features)?;
        if targets.len() != trace.preds.len() {
            return Err(ForecastError::TargetLengthMismatch {
                expected: trace.preds.len(),
                found: targets.len(),
            });
        }
        let t_len = trace.preds.len() as f64;
        let errors: Vec<f64> = trace
            .preds
            .iter()
            .zip(targets)
            .map(|(p, y)| 2.0 * (p - y) / t_len)
            .collect();
        let mut grads = LstmParams::zeros(self.input_size, self.hidden_size, self.layers.len())?;
        self.backward_from_errors(&trace, &errors, truncation, &mut grads);
        Ok(grads)
    }

    /// Core BPTT recursion: accumulates parameter gradients for the given
    /// per-step prediction errors `dL/dpred_t`.
    fn backward_from_errors(
        &self,
        trace: &ForwardTrace,
        errors: &[f64],
        truncation: Option<usize>,
        grads: &mut LstmParams,
    ) {
        let t_total = trace.steps.len();
        let h = self.hidden_size;
        let depth = truncation.unwrap_or(t_total).min(t_total);
        let start = t_total - depth;

        // carried gradients flowing backwards in time, per layer
        let mut dh_next = vec![vec![0.0f64; h]; self.layers.len()];
        let mut dc_next = vec![vec![0.0f64; h]; self.layers.len()];

        for t in (start..t_total).rev() {
            let step = &trace.steps[t];
            let top = self.layers.len() - 1;

            // head gradient and the error's entry into the top hidden state
            let e = errors[t];
            for (gw, hv) in grads.head_w.iter_mut().zip(&step.layers[top].h) {
                *gw += e * hv;
            }
            grads.head_b += e;

            // dh flowing into the layer below from dx of the layer above
            let mut dx_from_above: Vec<f64> = Vec::new();
            for l in (0..self.layers.len()).rev() {
                let lt = &step.layers[l];
                let mut dh = dh_next[l].clone();
                if l == top {
                    for (dv, wv) in dh.iter_mut().zip(&self.head_w) {
                        *dv += e * wv;
                    }
                } else {
                    for (dv, up) in dh.iter_mut().zip(&dx_from_above) {
                        *dv += up;
                    }
                }

                let mut da_o = vec![0.0f64; h];
                let mut dc = dc_next[l].clone();
                let mut da_f = vec![0.0f64; h];
                let mut da_i = vec![0.0f64; h];
                let mut da_g = vec![0.0f64; h];
                for k in 0..h {
                    let do_k = dh[k] * lt.tanh_c[k];
                    da_o[k] = do_k * lt.o[k] * (1.0 - lt.o[k]);
                    dc[k] += dh[k] * lt.o[k] * (1.0 - lt.tanh_c[k] * lt.tanh_c[k]);
                    let df_k = dc[k] * lt.c_prev[k];
                    da_f[k] = df_k * lt.f[k] * (1.0 - lt.f[k]);
                    let di_k = dc[k] * lt.g[k];
                    da_i[k] = di_k * lt.i[k] * (1.0 - lt.i[k]);
                    let dg_k = dc[k] * lt.i[k];
                    da_g[k] = dg_k * (1.0 - lt.g[k] * lt.g[k]);
                }

                let gp = &mut grads.layers[l];
                let pp = &self.layers[l];
                let in_l = lt.x.len();
                let mut dx = vec![0.0f64; in_l];
                let mut dh_prev = vec![0.0f64; h];
                for ((gate_grads, gate_params), da) in gp
                    .gates_mut()
                    .into_iter()
                    .zip(pp.gates())
                    .zip([&da_i, &da_f, &da_g, &da_o])
                {
                    gate_grads.w.add_outer(da, &lt.x);
                    gate_grads.u.add_outer(da, &lt.h_prev);
                    for (bg, dv) in gate_grads.b.iter_mut().zip(da) {
                        *bg += dv;
                    }
                    gate_params.w.matvec_t_acc(da, &mut dx);
                    gate_params.u.matvec_t_acc(da, &mut dh_prev);
                }

                dh_next[l] = dh_prev;
                for k in 0..h {
                    dc_next[l][k] = dc[k] * lt.f[k];
                }
                dx_from_above = dx;
            }
        }
    }

    /// Maximum relative deviation between analytic and central
    /// finite-difference gradients of [`sequence_loss`](Self::sequence_loss).
    ///
    /// The relative deviation uses `|a - n| / max(|a|, |n|, 1e-8)` so that
    /// near-zero gradients do not blow the ratio up.
    pub fn grad_check(
        &self,
        features: &[Vec<f64>],
        targets: &[f64],
        eps: f64,
    ) -> Result<f64, ForecastError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(ForecastError::BadEpsilon(eps));
        }
        let analytic = self.backward(features, targets, None)?.to_flat();
        let base = self.to_flat();
        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for k in 0..base.len() {
            let mut flat = base.clone();
            flat[k] = base[k] + eps;
            probe.set_flat(&flat)?;
            let plus = probe.sequence_loss(features, targets)?;
            flat[k] = base[k] - eps;
            probe.set_flat(&flat)?;
            let minus = probe.sequence_loss(features, targets)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[k] - numeric).abs() / denom);
        }
        Ok(worst)
    }
}

struct LayerTrace {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

struct StepTrace {
    layers: Vec<LayerTrace>,
}

struct ForwardTrace {
    steps: Vec<StepTrace>,
    preds: Vec<f64>,
    final_state: LstmState,
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub seed: u64,
    /// BPTT depth from the end of each sequence; `None` means the full window.
    pub truncation_length: Option<usize>,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            hidden_size: 16,
            num_layers: 1,
            seed: 0,
            truncation_length: None,
            clip_norm: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.epochs == 0 {
            return Err(ForecastError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ForecastError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_size == 0 || self.num_layers == 0 {
            return Err(ForecastError::InvalidConfig(
                "hidden size and layer count must be positive".into(),
            ));
        }
        if let Some(t) = self.truncation_length {
            if t == 0 {
                return Err(ForecastError::InvalidConfig(
                    "truncation length must be positive".into(),
                ));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(ForecastError::InvalidConfig(format!(
                    "clip norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Trained parameters plus the per-epoch loss trajectory.
///
/// `loss_history[e]` is the full-batch loss under the parameters entering
/// epoch `e`; the final entry is the loss under the returned parameters, so
/// the history holds `epochs + 1` values.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LstmParams,
    pub loss_history: Vec<f64>,
}

/// Mean of squared differences between two equal-length series.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, ForecastError> {
    if predictions.len() != targets.len() {
        return Err(ForecastError::TargetLengthMismatch {
            expected: predictions.len(),
            found: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(ForecastError::EmptySeries);
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Last-step prediction for each sample, in normalized units.
pub fn predict_batch(
    params: &LstmParams,
    samples: &[Sample],
) -> Result<Vec<f64>, ForecastError> {
    samples.iter().map(|s| params.predict(&s.features)).collect()
}

/// Mean squared error of last-step predictions over a sample batch.
pub fn batch_loss(params: &LstmParams, samples: &[Sample]) -> Result<f64, ForecastError> {
    if samples.is_empty() {
        return Err(ForecastError::NoSamples);
    }
    let mut sum = 0.0;
    for s in samples {
        let e = params.predict(&s.features)? - s.target;
        sum += e * e;
    }
    Ok(sum / samples.len() as f64)
}

/// Full-batch gradient descent on the mean squared error of each sample's
/// final-step prediction. Deterministic for a fixed config and sample set.
pub fn train(samples: &[Sample], config: &TrainingConfig) -> Result<TrainOutcome, ForecastError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(ForecastError::NoSamples);
    }
    let input_size = samples[0]
        .features
        .first()
        .map(Vec::len)
        .ok_or(ForecastError::EmptySequence)?;

    let mut params = LstmParams::random_uniform(
        input_size,
        config.hidden_size,
        config.num_layers,
        INIT_SCALE,
        config.seed,
    )?;
    let n = samples.len() as f64;
    let mut history = Vec::with_capacity(config.epochs + 1);

    for epoch in 0..config.epochs {
        let mut grads =
            LstmParams::zeros(input_size, config.hidden_size, config.num_layers)?;
        let mut loss = 0.0;
        for sample in samples {
            let trace = params.forward_traced(&sample.features)?;
            let pred = *trace.preds.last().expect("nonempty sequence");
            let err = pred - sample.target;
            loss += err * err;
            // only the final step carries loss; earlier entries are zero
            let mut errors = vec![0.0; trace.preds.len()];
            *errors.last_mut().unwrap() = 2.0 * err / n;
            params.backward_from_errors(&trace, &errors, config.truncation_length, &mut grads);
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(ForecastError::Diverged { epoch, loss });
        }
        history.push(loss);

        let mut flat_g = grads.to_flat();
        if let Some(clip) = config.clip_norm {
            let norm = flat_g.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                for g in &mut flat_g {
                    *g *= s;
                }
            }
        }
        let mut theta = params.to_flat();
        for (t, g) in theta.iter_mut().zip(&flat_g) {
            *t -= config.learning_rate * g;
        }
        params.set_flat(&theta)?;
    }

    let final_loss = batch_loss(&params, samples)?;
    if !final_loss.is_finite() {
        return Err(ForecastError::Diverged {
            epoch: config.epochs,
            loss: final_loss,
        });
    }
    history.push(final_loss);
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

/// Serializable model snapshot. JSON round-trips are bit-exact for every
/// parameter, so a restored model predicts identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    pub params: LstmParams,
}

impl Checkpoint {
    pub fn new(config: TrainingConfig, params: LstmParams) -> Result<Self, ForecastError> {
        if params.hidden_size() != config.hidden_size || params.num_layers() != config.num_layers {
            return Err(ForecastError::BadCheckpoint(format!(
                "params are {}x{} but config says {}x{}",
                params.hidden_size(),
                params.num_layers(),
                config.hidden_size,
                config.num_layers
            )));
        }
        Ok(Self { config, params })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ForecastError> {
        let ckpt: Checkpoint = serde_json::from_str(text)
            .map_err(|e| ForecastError::BadCheckpoint(e.to_string()))?;
        Checkpoint::new(ckpt.config, ckpt.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_features(steps: usize, input: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|t| (0..input).map(|k| ((t * input + k) as f64 * 0.37).sin() * 0.5).collect())
            .collect()
    }

    #[test]
    fn zero_params_predict_head_bias() {
        // all-zero gates: i = f = o = 0.5, g = 0, so c and h stay zero and
        // the prediction is exactly the head bias
        let params = LstmParams::zeros(4, 8, 2).unwrap();
        let (preds, state) = params.forward_sequence(&toy_features(5, 4)).unwrap();
        assert_eq!(preds, vec![0.0; 5]);
        for layer in &state.layers {
            assert_eq!(layer.hidden, vec![0.0; 8]);
            assert_eq!(layer.cell, vec![0.0; 8]);
        }
    }

    #[test]
    fn seeded_init_is_bit_deterministic() {
        let a = LstmParams::random_uniform(4, 16, 1, INIT_SCALE, 7).unwrap();
        let b = LstmParams::random_uniform(4, 16, 1, INIT_SCALE, 7).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        let c = LstmParams::random_uniform(4, 16, 1, INIT_SCALE, 8).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
        assert!(a.to_flat().iter().all(|v| v.abs() <= INIT_SCALE));
    }

    #[test]
    fn param_count_matches_flat_length() {
        for (input, hidden, layers) in [(4, 16, 1), (4, 3, 2), (1, 1, 1), (2, 5, 3)] {
            let p = LstmParams::zeros(input, hidden, layers).unwrap();
            assert_eq!(p.to_flat().len(), p.param_count());
            let expected: usize = (0..layers)
                .map(|l| {
                    let in_l = if l == 0 { input } else { hidden };
                    4 * (hidden * in_l + hidden * hidden + hidden)
                })
                .sum::<usize>()
                + hidden
                + 1;
            assert_eq!(p.param_count(), expected);
        }
    }

    #[test]
    fn flat_round_trip_is_exact() {
        let a = LstmParams::random_uniform(3, 5, 2, INIT_SCALE, 42).unwrap();
        let mut b = LstmParams::zeros(3, 5, 2).unwrap();
        b.set_flat(&a.to_flat()).unwrap();
        assert_eq!(a, b);

        let err = b.set_flat(&[0.0; 3]).unwrap_err();
        assert!(matches!(err, ForecastError::FlatLengthMismatch { .. }));
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let params = LstmParams::zeros(4, 4, 1).unwrap();
        assert_eq!(
            params.forward_sequence(&[]).unwrap_err(),
            ForecastError::EmptySequence
        );
        let err = params.forward_sequence(&[vec![0.0; 3]]).unwrap_err();
        assert_eq!(
            err,
            ForecastError::InputSizeMismatch {
                step: 0,
                expected: 4,
                found: 3
            }
        );
    }

    #[test]
    fn cell_forward_matches_sequence_of_one() {
        let params = LstmParams::random_uniform(4, 6, 1, INIT_SCALE, 3).unwrap();
        let x = vec![0.1, -0.4, 0.2, 0.9];
        let (state, output) = params.cell_forward(0, &x, &LayerState::zeros(6)).unwrap();
        assert_eq!(output, state.hidden);
        let (_, seq_state) = params.forward_sequence(&[x]).unwrap();
        assert_eq!(state, seq_state.layers[0]);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell_state() {
        // scalar cell, all weights zero, forget bias +20 and the other
        // biases -20: the forget gate is ~1, input and output gates ~0
        let mut params = LstmParams::zeros(1, 1, 1).unwrap();
        let mut flat = params.to_flat();
        // per-gate block is [w, u, b] with one value each; order i, f, g, o
        flat[2] = -20.0; // input-gate bias
        flat[5] = 20.0; // forget-gate bias
        flat[8] = -20.0; // candidate bias
        flat[11] = -20.0; // output-gate bias
        params.set_flat(&flat).unwrap();

        let prev = LayerState {
            hidden: vec![0.0],
            cell: vec![0.7],
        };
        let (state, output) = params.cell_forward(0, &[0.0], &prev).unwrap();
        assert!((state.cell[0] - 0.7).abs() < 1e-6);
        assert!(output[0].abs() < 1e-6);
    }

    #[test]
    fn cell_forward_rejects_non_finite_input() {
        let params = LstmParams::zeros(2, 2, 1).unwrap();
        let err = params
            .cell_forward(0, &[f64::NAN, 0.0], &LayerState::zeros(2))
            .unwrap_err();
        assert_eq!(err, ForecastError::NonFiniteInput { step: 0 });
        let err = params
            .forward_sequence(&[vec![0.0, 0.0], vec![0.0, f64::INFINITY]])
            .unwrap_err();
        assert_eq!(err, ForecastError::NonFiniteInput { step: 1 });
    }

    #[test]
    fn mse_loss_hand_values() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[2.0, 1.0]).unwrap(), 2.5);
        assert_eq!(mse_loss(&[], &[]).unwrap_err(), ForecastError::EmptySeries);
        assert!(matches!(
            mse_loss(&[1.0], &[1.0, 2.0]).unwrap_err(),
            ForecastError::TargetLengthMismatch { .. }
        ));
    }

    #[test]
    fn zero_params_on_zero_data_are_stationary() {
        // zero inputs and zero targets with zero params: the loss is already
        // zero, so every gradient vanishes and descent stays put
        let params = LstmParams::zeros(2, 3, 1).unwrap();
        let features = vec![vec![0.0, 0.0]; 4];
        let targets = vec![0.0; 4];
        assert_eq!(params.sequence_loss(&features, &targets).unwrap(), 0.0);
        let grads = params.backward(&features, &targets, None).unwrap();
        assert!(grads.to_flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn hidden_and_cell_values_stay_bounded() {
        let params = LstmParams::random_uniform(2, 4, 2, 1.5, 99).unwrap();
        let features = toy_features(50, 2);
        let (_, state) = params.forward_sequence(&features).unwrap();
        for layer in &state.layers {
            for &h in &layer.hidden {
                assert!(h.abs() <= 1.0); // h = o * tanh(c), both factors in (-1, 1)
            }
            for &c in &layer.cell {
                assert!(c.is_finite());
            }
        }
    }

    /// Targets a small fixed offset away from the model's own predictions:
    /// errors stay nonzero at every step while the loss stays small, which
    /// keeps finite-difference rounding noise far below the rel-dev floor.
    fn offset_targets(params: &LstmParams, features: &[Vec<f64>]) -> Vec<f64> {
        let (preds, _) = params.forward_sequence(features).unwrap();
        preds
            .iter()
            .enumerate()
            .map(|(t, p)| p + if t % 2 == 0 { 0.05 } else { -0.05 })
            .collect()
    }

    #[test]
    fn gradient_check_passes_on_stacked_network() {
        let params = LstmParams::random_uniform(3, 3, 2, 0.6, 11).unwrap();
        let features = toy_features(4, 3);
        let targets = offset_targets(&params, &features);
        let worst = params.grad_check(&features, &targets, 1e-5).unwrap();
        assert!(worst <= 1e-4, "max relative deviation {worst}");
    }

    #[test]
    fn gradient_check_passes_on_two_step_instance() {
        let params = LstmParams::random_uniform(2, 3, 1, 0.6, 21).unwrap();
        let features = toy_features(2, 2);
        let targets = offset_targets(&params, &features);
        let worst = params.grad_check(&features, &targets, 1e-5).unwrap();
        assert!(worst <= 1e-4, "max relative deviation {worst}");
    }

    #[test]
    fn duplicated_sample_leaves_mean_gradient_unchanged() {
        // one epoch of full-batch descent averages per-sample gradients, so
        // duplicating every sample changes nothing
        let single = line_samples(6);
        let doubled: Vec<Sample> = single.iter().chain(single.iter()).cloned().collect();
        let config = TrainingConfig {
            epochs: 1,
            hidden_size: 4,
            seed: 12,
            ..TrainingConfig::default()
        };
        let a = train(&single, &config).unwrap();
        let b = train(&doubled, &config).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
    }

    #[test]
    fn grad_check_rejects_bad_epsilon() {
        let params = LstmParams::zeros(2, 2, 1).unwrap();
        let err = params
            .grad_check(&toy_features(2, 2), &[0.0, 0.0], 0.0)
            .unwrap_err();
        assert_eq!(err, ForecastError::BadEpsilon(0.0));
    }

    #[test]
    fn truncation_at_full_length_matches_untruncated() {
        let params = LstmParams::random_uniform(2, 4, 1, INIT_SCALE, 5).unwrap();
        let features = toy_features(6, 2);
        let targets = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let full = params.backward(&features, &targets, None).unwrap();
        let same = params.backward(&features, &targets, Some(6)).unwrap();
        let longer = params.backward(&features, &targets, Some(100)).unwrap();
        assert_eq!(full.to_flat(), same.to_flat());
        assert_eq!(full.to_flat(), longer.to_flat());
    }

    #[test]
    fn truncation_drops_early_step_gradient() {
        let params = LstmParams::random_uniform(2, 4, 1, INIT_SCALE, 5).unwrap();
        let features = toy_features(6, 2);
        let targets = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let full = params.backward(&features, &targets, None).unwrap().to_flat();
        let short = params.backward(&features, &targets, Some(1)).unwrap().to_flat();
        assert_ne!(full, short);
        // truncated gradients still point somewhere: not all zero
        assert!(short.iter().any(|g| *g != 0.0));
    }

    fn line_samples(n: usize) -> Vec<Sample> {
        // target is a noiseless linear readout of the last input; easily
        // learnable by gradient descent
        (0..n)
            .map(|k| {
                let v = k as f64 / n as f64;
                Sample {
                    features: vec![vec![v, 1.0 - v], vec![v * 0.5, v]],
                    target: 0.3 + 0.4 * v,
                    target_timestamp: k as i64,
                }
            })
            .collect()
    }

    #[test]
    fn training_reduces_loss_and_logs_history() {
        let samples = line_samples(24);
        let config = TrainingConfig {
            epochs: 150,
            learning_rate: 0.2,
            hidden_size: 6,
            num_layers: 1,
            seed: 1,
            ..TrainingConfig::default()
        };
        let outcome = train(&samples, &config).unwrap();
        assert_eq!(outcome.loss_history.len(), config.epochs + 1);
        let first = outcome.loss_history[0];
        let last = *outcome.loss_history.last().unwrap();
        assert!(last < first * 0.2, "loss went {first} -> {last}");
        // the recorded final loss is exactly the loss of the returned params
        let recomputed = batch_loss(&outcome.params, &samples).unwrap();
        assert!((recomputed - last).abs() <= 1e-9);
    }

    #[test]
    fn loss_trend_is_nearly_monotone_at_small_rate() {
        let samples = line_samples(32);
        let config = TrainingConfig {
            epochs: 120,
            learning_rate: 0.01,
            hidden_size: 6,
            seed: 4,
            ..TrainingConfig::default()
        };
        let outcome = train(&samples, &config).unwrap();
        let upticks = outcome
            .loss_history
            .windows(2)
            .filter(|w| w[1] > w[0])
            .count();
        let budget = (outcome.loss_history.len() as f64 * 0.05).ceil() as usize;
        assert!(upticks <= budget, "{upticks} upticks out of {}", outcome.loss_history.len());
    }

    #[test]
    fn predict_batch_is_zero_for_zero_params() {
        let params = LstmParams::zeros(2, 3, 1).unwrap();
        let samples = line_samples(5);
        let preds = predict_batch(&params, &samples).unwrap();
        assert_eq!(preds, vec![0.0; 5]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let samples = line_samples(16);
        let config = TrainingConfig {
            epochs: 40,
            hidden_size: 5,
            seed: 9,
            ..TrainingConfig::default()
        };
        let a = train(&samples, &config).unwrap();
        let b = train(&samples, &config).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn perfect_fit_keeps_loss_at_zero() {
        // target equals what zero-ish params already produce only in the
        // trivial sense; instead check a constant-target problem the head
        // bias can solve, then verify the history is non-increasing overall
        let samples: Vec<Sample> = (0..8)
            .map(|k| Sample {
                features: vec![vec![0.5, 0.5]],
                target: 0.25,
                target_timestamp: k,
            })
            .collect();
        let config = TrainingConfig {
            epochs: 300,
            learning_rate: 0.3,
            hidden_size: 4,
            seed: 2,
            ..TrainingConfig::default()
        };
        let outcome = train(&samples, &config).unwrap();
        assert!(*outcome.loss_history.last().unwrap() < 1e-8);
    }

    #[test]
    fn divergent_run_reports_epoch() {
        let samples = line_samples(8);
        let config = TrainingConfig {
            epochs: 50,
            learning_rate: 1e60,
            hidden_size: 4,
            seed: 3,
            ..TrainingConfig::default()
        };
        let err = train(&samples, &config).unwrap_err();
        match err {
            ForecastError::Diverged { epoch, .. } => assert!(epoch > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn clipping_tames_the_same_run() {
        let samples = line_samples(8);
        let config = TrainingConfig {
            epochs: 50,
            learning_rate: 5.0,
            hidden_size: 4,
            seed: 3,
            clip_norm: Some(1.0),
            ..TrainingConfig::default()
        };
        let outcome = train(&samples, &config).unwrap();
        assert!(outcome.loss_history.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn config_validation_catches_nonsense() {
        let bad = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig {
            learning_rate: -1.0,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig {
            clip_norm: Some(0.0),
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig {
            truncation_length: Some(0),
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let config = TrainingConfig {
            hidden_size: 5,
            num_layers: 2,
            ..TrainingConfig::default()
        };
        let params = LstmParams::random_uniform(4, 5, 2, INIT_SCALE, 77).unwrap();
        let ckpt = Checkpoint::new(config, params.clone()).unwrap();
        let restored = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(
            params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            restored.params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );

        let mismatched = Checkpoint::new(
            TrainingConfig { hidden_size: 9, ..TrainingConfig::default() },
            LstmParams::zeros(4, 5, 1).unwrap(),
        );
        assert!(matches!(mismatched, Err(ForecastError::BadCheckpoint(_))));
    }
}
