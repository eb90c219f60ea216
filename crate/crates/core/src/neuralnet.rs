//! Two-branch multilayer perceptron approximating the per-beam reward of
//! the waking AP from its neighbors' locations and beams.
//!
//! ```text
//! locations (2N) -> dense+ReLU (d1) --\
//!                                      concat -> [dense+ReLU+dropout] x H -> dense (M)
//! beams (2MN)    -> dense+ReLU (d2) --/
//! ```
//!
//! All parameters live in one flat vector so the optimizer, gradient checks
//! and checkpoints treat them uniformly. Dense weights are stored input-major
//! (`w[i * outputs + o]`) so the forward pass is a sequence of axpy updates.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::Context;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    /// 2 * N.
    pub location_inputs: usize,
    /// 2 * M * N.
    pub beam_inputs: usize,
    pub location_width: usize,
    pub beam_width: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// M, one estimate per beam.
    pub outputs: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub init_seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self::for_network(5, 16)
    }
}

impl MlpConfig {
    /// Default architecture for `paps` neighbors and an `m`-beam codebook.
    pub fn for_network(paps: usize, m: usize) -> Self {
        Self {
            location_inputs: 2 * paps,
            beam_inputs: 2 * m * paps,
            location_width: 50,
            beam_width: 50,
            hidden_width: 100,
            hidden_layers: 3,
            outputs: m,
            dropout: 0.01,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("neuralnet: {m}")));
        if self.location_inputs == 0 || self.beam_inputs == 0 || self.outputs == 0 {
            return bad("input and output sizes must be positive");
        }
        if self.location_width == 0 || self.beam_width == 0 || self.hidden_width == 0 {
            return bad("layer widths must be positive");
        }
        if self.hidden_layers == 0 {
            return bad("need at least one hidden layer");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    weights: usize,
    bias: usize,
}

impl LayerShape {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.weights..self.weights + self.inputs * self.outputs
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias..self.bias + self.outputs
    }
}

/// Forward-pass mode. Dropout masks are drawn from the RNG in train mode only.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Inverted-dropout scale factors (0 or 1/(1-p)) for each hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(Vec<Vec<f64>>);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    adam: AdamState,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    concat: Vec<f64>,
    delta: Vec<Vec<f64>>,
    dconcat: Vec<f64>,
}

const LOC: usize = 0;
const BEAM: usize = 1;
const FIRST_HIDDEN: usize = 2;

impl Mlp {
    /// Fresh network with He-style uniform weights, zero biases and zero
    /// Adam moments.
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![
            (config.location_inputs, config.location_width),
            (config.beam_inputs, config.beam_width),
            (
                config.location_width + config.beam_width,
                config.hidden_width,
            ),
        ];
        for _ in 1..config.hidden_layers {
            dims.push((config.hidden_width, config.hidden_width));
        }
        dims.push((config.hidden_width, config.outputs));

        let mut layers = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for (inputs, outputs) in dims {
            let weights = offset;
            let bias = weights + inputs * outputs;
            offset = bias + outputs;
            layers.push(LayerShape {
                inputs,
                outputs,
                weights,
                bias,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = vec![0.0; offset];
        for l in &layers {
            let limit = (6.0 / l.inputs as f64).sqrt();
            for w in &mut params[l.weight_range()] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(Self {
            adam: AdamState {
                m: vec![0.0; offset],
                v: vec![0.0; offset],
                step: 0,
            },
            config,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn adam_step_count(&self) -> u64 {
        self.adam.step
    }

    pub fn outputs(&self) -> usize {
        self.config.outputs
    }

    fn output_layer(&self) -> usize {
        self.layers.len() - 1
    }

    fn check_context(&self, x: &Context) -> Result<()> {
        if x.locations.len() != self.config.location_inputs {
            return Err(Error::dimension(
                "location input",
                self.config.location_inputs,
                x.locations.len(),
            ));
        }
        if x.beams.len() != self.config.beam_inputs {
            return Err(Error::dimension(
                "beam input",
                self.config.beam_inputs,
                x.beams.len(),
            ));
        }
        Ok(())
    }

    pub fn sample_masks(&self, rng: &mut dyn RngCore) -> DropoutMasks {
        let p = self.config.dropout;
        let keep = 1.0 / (1.0 - p);
        DropoutMasks(
            (0..self.config.hidden_layers)
                .map(|_| {
                    (0..self.config.hidden_width)
                        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                        .collect()
                })
                .collect(),
        )
    }

    fn masks_for(&self, mode: Mode<'_>) -> Option<DropoutMasks> {
        match mode {
            Mode::Train(rng) if self.config.dropout > 0.0 => Some(self.sample_masks(rng)),
            _ => None,
        }
    }

    /// Predicted reward for every beam.
    pub fn forward(&self, x: &Context, mode: Mode<'_>) -> Result<Vec<f64>> {
        self.check_context(x)?;
        let masks = self.masks_for(mode);
        let mut s = Scratch::default();
        self.forward_cached(x, masks.as_ref(), &mut s);
        Ok(s.post[self.output_layer()].clone())
    }

    /// Eval-mode forward into a reusable scratch; returns the output slice.
    pub fn predict<'s>(&self, x: &Context, scratch: &'s mut Scratch) -> Result<&'s [f64]> {
        self.check_context(x)?;
        self.forward_cached(x, None, scratch);
        Ok(&scratch.post[self.output_layer()])
    }

    fn ensure_scratch(&self, s: &mut Scratch) {
        if s.pre.len() == self.layers.len() {
            return;
        }
        s.pre = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        s.post = s.pre.clone();
        s.delta = s.pre.clone();
        s.concat = vec![0.0; self.config.location_width + self.config.beam_width];
        s.dconcat = s.concat.clone();
    }

    fn forward_cached(&self, x: &Context, masks: Option<&DropoutMasks>, s: &mut Scratch) {
        self.ensure_scratch(s);
        let d1 = self.config.location_width;

        self.dense(LOC, &x.locations, &mut s.pre[LOC]);
        relu_into(&s.pre[LOC], &mut s.post[LOC]);
        self.dense(BEAM, &x.beams, &mut s.pre[BEAM]);
        relu_into(&s.pre[BEAM], &mut s.post[BEAM]);
        s.concat[..d1].copy_from_slice(&s.post[LOC]);
        s.concat[d1..].copy_from_slice(&s.post[BEAM]);

        let out = self.output_layer();
        for l in FIRST_HIDDEN..out {
            let (before, after) = s.post.split_at_mut(l);
            let input: &[f64] = if l == FIRST_HIDDEN {
                &s.concat
            } else {
                &before[l - 1]
            };
            self.dense(l, input, &mut s.pre[l]);
            relu_into(&s.pre[l], &mut after[0]);
            if let Some(m) = masks {
                for (a, k) in after[0].iter_mut().zip(&m.0[l - FIRST_HIDDEN]) {
                    *a *= k;
                }
            }
        }
        self.dense(out, &s.post[out - 1], &mut s.pre[out]);
        s.post[out].copy_from_slice(&s.pre[out]);
    }

    fn dense(&self, layer: usize, x: &[f64], y: &mut [f64]) {
        let l = self.layers[layer];
        let w = &self.params[l.weight_range()];
        y.copy_from_slice(&self.params[l.bias_range()]);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w[i * l.outputs..(i + 1) * l.outputs];
            for (yo, &wo) in y.iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
    }

    /// Accumulates dL/dW, dL/db into `grad` and, when asked, writes dL/dx.
    fn dense_backward(
        &self,
        layer: usize,
        x: &[f64],
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let l = self.layers[layer];
        for (g, &d) in grad[l.bias_range()].iter_mut().zip(dy) {
            *g += d;
        }
        let gw = &mut grad[l.weight_range()];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &mut gw[i * l.outputs..(i + 1) * l.outputs];
            for (g, &d) in row.iter_mut().zip(dy) {
                *g += xi * d;
            }
        }
        if let Some(dx) = dx {
            let w = &self.params[l.weight_range()];
            for (i, dxi) in dx.iter_mut().enumerate() {
                let row = &w[i * l.outputs..(i + 1) * l.outputs];
                *dxi = row.iter().zip(dy).map(|(a, b)| a * b).sum();
            }
        }
    }

    /// Backpropagates dL/d(output) through the cached activations.
    fn backward(
        &self,
        x: &Context,
        masks: Option<&DropoutMasks>,
        s: &mut Scratch,
        grad: &mut [f64],
    ) {
        let out = self.output_layer();
        for l in (FIRST_HIDDEN..=out).rev() {
            let (lower, upper) = s.delta.split_at_mut(l);
            let dy = &upper[0];
            if l == FIRST_HIDDEN {
                self.dense_backward(l, &s.concat, dy, grad, Some(&mut s.dconcat));
            } else {
                let dx = &mut lower[l - 1];
                self.dense_backward(l, &s.post[l - 1], dy, grad, Some(dx));
                // Through dropout and ReLU of hidden layer l-1.
                let k = l - 1;
                for (j, d) in dx.iter_mut().enumerate() {
                    let mut v = if s.pre[k][j] > 0.0 { *d } else { 0.0 };
                    if let Some(m) = masks {
                        v *= m.0[k - FIRST_HIDDEN][j];
                    }
                    *d = v;
                }
            }
        }
        let d1 = self.config.location_width;
        for (j, d) in s.delta[LOC].iter_mut().enumerate() {
            *d = if s.pre[LOC][j] > 0.0 {
                s.dconcat[j]
            } else {
                0.0
            };
        }
        for (j, d) in s.delta[BEAM].iter_mut().enumerate() {
            *d = if s.pre[BEAM][j] > 0.0 {
                s.dconcat[d1 + j]
            } else {
                0.0
            };
        }
        let (dl, rest) = s.delta.split_at(BEAM);
        self.dense_backward(LOC, &x.locations, &dl[LOC], grad, None);
        self.dense_backward(BEAM, &x.beams, &rest[0], grad, None);
    }

    /// Squared error on the taken action and its gradient with respect to
    /// every parameter.
    pub fn loss_and_gradient(
        &self,
        x: &Context,
        action: usize,
        target: f64,
        mode: Mode<'_>,
    ) -> Result<(f64, Vec<f64>)> {
        let masks = self.masks_for(mode);
        let mut grad = vec![0.0; self.params.len()];
        let mut s = Scratch::default();
        let loss =
            self.accumulate_gradient(x, action, target, masks.as_ref(), 1.0, &mut s, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `weight * dL/dtheta` for one sample into `grad`; returns the loss.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_gradient(
        &self,
        x: &Context,
        action: usize,
        target: f64,
        masks: Option<&DropoutMasks>,
        weight: f64,
        s: &mut Scratch,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_context(x)?;
        if action >= self.config.outputs {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range for {} outputs",
                self.config.outputs
            )));
        }
        if !target.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite training target {target}"
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::dimension("gradient", self.params.len(), grad.len()));
        }
        self.forward_cached(x, masks, s);
        let out = self.output_layer();
        let err = s.post[out][action] - target;
        s.delta[out].iter_mut().for_each(|d| *d = 0.0);
        s.delta[out][action] = 2.0 * err * weight;
        self.backward(x, masks, s, grad);
        Ok(err * err)
    }

    /// One mean-squared-error gradient step over a batch of
    /// (context, action, target) samples. Returns the mean loss.
    pub fn train_batch(
        &mut self,
        batch: &[(&Context, usize, f64)],
        rng: Option<&mut dyn RngCore>,
        scratch: &mut Scratch,
        grad: &mut Vec<f64>,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        grad.clear();
        grad.resize(self.params.len(), 0.0);
        let w = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut rng = rng;
        for &(x, a, t) in batch {
            let masks = match rng.as_deref_mut() {
                Some(r) if self.config.dropout > 0.0 => Some(self.sample_masks(r)),
                _ => None,
            };
            loss += w * self.accumulate_gradient(x, a, t, masks.as_ref(), w, scratch, grad)?;
        }
        self.adam_step(grad)?;
        Ok(loss)
    }

    /// Bias-corrected Adam update; increments the step counter.
    pub fn adam_step(&mut self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::dimension("gradient", self.params.len(), grad.len()));
        }
        let c = &self.config;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step = c.learning_rate / bc1;
        let bc2_sqrt = bc2.sqrt();
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(&mut self.adam.m)
            .zip(&mut self.adam.v)
            .zip(grad)
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            // Moments of dead units decay geometrically into subnormals,
            // which are orders of magnitude slower to operate on.
            if m.abs() < TINY {
                *m = 0.0;
            }
            if *v < TINY {
                *v = 0.0;
            }
            *p -= step * *m / ((*v).sqrt() / bc2_sqrt + c.epsilon);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            config: self.config.clone(),
            layers: self.layers.iter().map(|l| [l.inputs, l.outputs]).collect(),
            params: self.params.clone(),
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
            adam_step: self.adam.step,
        }
    }

    /// Rebuilds a network; rejects inconsistent layer shapes or vector sizes.
    pub fn from_checkpoint(ck: MlpCheckpoint) -> Result<Self> {
        let mut net = Self::new(ck.config)?;
        let shapes: Vec<[usize; 2]> = net.layers.iter().map(|l| [l.inputs, l.outputs]).collect();
        if shapes != ck.layers {
            return Err(Error::Checkpoint(format!(
                "layer shapes {:?} do not match configuration {:?}",
                ck.layers, shapes
            )));
        }
        let n = net.params.len();
        for (what, len) in [
            ("params", ck.params.len()),
            ("adam_m", ck.adam_m.len()),
            ("adam_v", ck.adam_v.len()),
        ] {
            if len != n {
                return Err(Error::Checkpoint(format!(
                    "{what} has {len} entries, expected {n}"
                )));
            }
        }
        net.params = ck.params;
        net.adam = AdamState {
            m: ck.adam_m,
            v: ck.adam_v,
            step: ck.adam_step,
        };
        Ok(net)
    }
}

const TINY: f64 = 1e-200;

fn relu_into(pre: &[f64], post: &mut [f64]) {
    for (o, &z) in post.iter_mut().zip(pre) {
        *o = z.max(0.0);
    }
}

/// Serialized network: configuration, layer shapes, parameters and
/// optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub config: MlpConfig,
    pub layers: Vec<[usize; 2]>,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_step: u64,
}
