//! Dense network kernel: layers, temperature softmax, cross-entropy,
//! analytic backpropagation and SGD with decoupled-from-bias weight decay.
//!
//! Everything runs in `f64` on row-major batches (`[batch, features]`).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ByteCursor;

/// Probability floor applied before taking the log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AFFM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Activation> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Optimisation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            weight_decay: 0.005,
            temperature: 2.0,
            epochs: 50,
            batch_size: 128,
            patience: 25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::invalid("epochs, batch_size and patience must be positive"));
        }
        if self.patience > self.epochs {
            return Err(Error::invalid(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        Ok(())
    }
}

/// Fully connected layer computing `activation(x Wᵀ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out, in]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

impl DenseLayer {
    pub fn zeros(input_dim: usize, output_dim: usize, activation: Activation) -> Result<DenseLayer> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::invalid(format!(
                "layer dims must be positive, got {output_dim}x{input_dim}"
            )));
        }
        Ok(DenseLayer {
            weights: Array2::zeros((output_dim, input_dim)),
            bias: Array1::zeros(output_dim),
            activation,
        })
    }

    /// He-scaled uniform weights, `U(-a, a)` with `a = sqrt(6 / fan_in)`
    /// (standard deviation `sqrt(2 / fan_in)`), zero bias.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<DenseLayer> {
        let mut layer = DenseLayer::zeros(input_dim, output_dim, activation)?;
        let bound = (6.0 / input_dim as f64).sqrt();
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        Ok(layer)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Returns `(pre_activation, output)` for a batch.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "expected {} input features, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        let mut pre = input.dot(&self.weights.t());
        pre += &self.bias;
        let out = match self.activation {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Identity => pre.clone(),
        };
        Ok((pre, out))
    }

    /// Given `grad_output = dL/d(output)`, returns the parameter gradients and
    /// `dL/d(input)`.
    pub fn backward(
        &self,
        input: ArrayView2<'_, f64>,
        pre: ArrayView2<'_, f64>,
        grad_output: ArrayView2<'_, f64>,
    ) -> (LayerGrad, Array2<f64>) {
        let grad_pre = match self.activation {
            Activation::Relu => {
                let mut g = grad_output.to_owned();
                Zip::from(&mut g).and(pre).for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                g
            }
            Activation::Identity => grad_output.to_owned(),
        };
        let weights = grad_pre.t().dot(&input);
        let bias = grad_pre.sum_axis(Axis(0));
        let grad_input = grad_pre.dot(&self.weights);
        (LayerGrad { weights, bias }, grad_input)
    }

    /// `p ← p − lr·(g + wd·p)` on weights; biases get no decay.
    pub fn apply_sgd(&mut self, grad: &LayerGrad, learning_rate: f64, weight_decay: f64) {
        Zip::from(&mut self.weights)
            .and(&grad.weights)
            .for_each(|w, &g| *w -= learning_rate * (g + weight_decay * *w));
        Zip::from(&mut self.bias)
            .and(&grad.bias)
            .for_each(|b, &g| *b -= learning_rate * g);
    }

    fn check_grad_shape(&self, grad: &LayerGrad) -> Result<()> {
        if grad.weights.dim() != self.weights.dim() || grad.bias.len() != self.bias.len() {
            return Err(Error::invalid(format!(
                "gradient shape {:?}/{} does not match layer {:?}/{}",
                grad.weights.dim(),
                grad.bias.len(),
                self.weights.dim(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Deterministic He-initialised layer from a seed.
pub fn init_params(input_dim: usize, output_dim: usize, activation: Activation, seed: u64) -> Result<DenseLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseLayer::init(input_dim, output_dim, activation, &mut rng)
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    Ok(())
}

/// `softmax(z / T)`, stabilised by subtracting the maximum.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    Ok(softmax_row(ArrayView1::from(logits), temperature).to_vec())
}

fn softmax_row(logits: ArrayView1<'_, f64>, temperature: f64) -> Array1<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z / temperature));
    let mut exps = logits.mapv(|z| (z / temperature - max).exp());
    let sum = exps.sum();
    exps /= sum;
    exps
}

/// `-ln(max(probs[target], 1e-12))`.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64> {
    if target >= probs.len() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} classes",
            probs.len()
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid(format!("not a probability vector (sum {total})")));
    }
    Ok(-probs[target].max(PROB_FLOOR).ln())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean temperature-softmax cross-entropy over a batch of logits, and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy_grad(
    logits: ArrayView2<'_, f64>,
    targets: &[usize],
    temperature: f64,
) -> Result<(f64, Array2<f64>)> {
    check_temperature(temperature)?;
    let (batch, classes) = logits.dim();
    if batch != targets.len() {
        return Err(Error::invalid(format!(
            "{} targets for a batch of {batch}",
            targets.len()
        )));
    }
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let max_loss = -PROB_FLOOR.ln();
    let scale = 1.0 / (temperature * batch as f64);
    let mut grad = Array2::zeros((batch, classes));
    let mut total = 0.0;
    for ((row, mut grad_row), &target) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(targets) {
        if target >= classes {
            return Err(Error::invalid(format!("target class {target} out of range for {classes} classes")));
        }
        // -ln p_t = logsumexp(z/T) - z_t/T, capped at the floor.
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z / temperature));
        let sum: f64 = row.iter().map(|&z| (z / temperature - max).exp()).sum();
        let nll = max + sum.ln() - row[target] / temperature;
        total += nll.min(max_loss);
        for (g, &z) in grad_row.iter_mut().zip(row.iter()) {
            *g = (z / temperature - max).exp() / sum * scale;
        }
        grad_row[target] -= scale;
    }
    Ok((total / batch as f64, grad))
}

/// Mean loss only (used for validation passes).
pub fn mean_loss(logits: ArrayView2<'_, f64>, targets: &[usize], temperature: f64) -> Result<f64> {
    softmax_cross_entropy_grad(logits, targets, temperature).map(|(loss, _)| loss)
}

/// Per-layer inputs and pre-activations of a forward pass through a stack.
#[derive(Debug, Clone)]
pub struct Activations {
    pub inputs: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

pub fn forward(layers: &[DenseLayer], input: ArrayView2<'_, f64>) -> Result<Activations> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut current = input.to_owned();
    for (i, layer) in layers.iter().enumerate() {
        let (z, out) = layer
            .forward(current.view())
            .map_err(|e| Error::invalid(format!("layer {i}: {e}")))?;
        inputs.push(current);
        pre.push(z);
        current = out;
    }
    Ok(Activations {
        inputs,
        pre,
        output: current,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerGrad::is_finite)
    }
}

/// Backpropagates `dL/d(logits)` through the stack.
pub fn backprop(layers: &[DenseLayer], acts: &Activations, grad_logits: Array2<f64>) -> Result<GradientSet> {
    if acts.inputs.len() != layers.len() || acts.pre.len() != layers.len() {
        return Err(Error::invalid(format!(
            "activations for {} layers, network has {}",
            acts.inputs.len(),
            layers.len()
        )));
    }
    let mut grads = Vec::with_capacity(layers.len());
    let mut upstream = grad_logits;
    for (i, layer) in layers.iter().enumerate().rev() {
        if acts.pre[i].dim() != upstream.dim() || acts.inputs[i].ncols() != layer.input_dim() {
            return Err(Error::invalid(format!("layer {i}: activation shape mismatch")));
        }
        let (g, down) = layer.backward(acts.inputs[i].view(), acts.pre[i].view(), upstream.view());
        grads.push(g);
        upstream = down;
    }
    grads.reverse();
    Ok(GradientSet { layers: grads })
}

/// Gradients of the mean temperature-softmax cross-entropy with respect to
/// every parameter of the stack.
pub fn backward(
    layers: &[DenseLayer],
    acts: &Activations,
    targets: &[usize],
    temperature: f64,
) -> Result<GradientSet> {
    let (_, grad_logits) = softmax_cross_entropy_grad(acts.output.view(), targets, temperature)?;
    backprop(layers, acts, grad_logits)
}

/// Applies one SGD step to every layer. Nothing is modified if any gradient
/// is non-finite or mis-shaped.
pub fn sgd_update(
    layers: &mut [DenseLayer],
    grads: &GradientSet,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.layers.len() != layers.len() {
        return Err(Error::invalid(format!(
            "{} gradients for {} layers",
            grads.layers.len(),
            layers.len()
        )));
    }
    for (i, (layer, grad)) in layers.iter().zip(&grads.layers).enumerate() {
        layer
            .check_grad_shape(grad)
            .map_err(|e| Error::invalid(format!("layer {i}: {e}")))?;
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient { layer: i });
        }
    }
    for (layer, grad) in layers.iter_mut().zip(&grads.layers) {
        layer.apply_sgd(grad, learning_rate, weight_decay);
    }
    Ok(())
}

/// Decoded checkpoint: the layer stack, an opaque tag block and the config echo.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layers: Vec<DenseLayer>,
    pub tags: Vec<u8>,
    pub echo: String,
}

/// Serialises a layer stack.
///
/// Layout: magic `AFFM`, u32 version, u32 layer count; per layer u32 in,
/// u32 out, u8 activation code, `out*in` f64 weights row-major, `out` f64
/// biases; then u16 tag length + tag bytes; then u32 echo length + UTF-8 echo.
/// All integers and reals little-endian.
pub fn encode_checkpoint(layers: &[&DenseLayer], tags: &[u8], echo: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        if !layer.is_finite() {
            return Err(Error::Data("refusing to checkpoint non-finite parameters".into()));
        }
        out.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.output_dim() as u32).to_le_bytes());
        out.push(layer.activation.code());
        for w in layer.weights.iter() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in layer.bias.iter() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    let tag_len = u16::try_from(tags.len()).map_err(|_| Error::invalid("tag block too long"))?;
    out.extend_from_slice(&tag_len.to_le_bytes());
    out.extend_from_slice(tags);
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = ByteCursor::new(bytes);
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic, expected \"AFFM\"".into(),
        });
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported checkpoint version {version}"),
        });
    }
    let count = cur.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let dims_at = cur.offset();
        let input_dim = cur.u32("layer input dim")? as usize;
        let output_dim = cur.u32("layer output dim")? as usize;
        let code_at = cur.offset();
        let code = cur.take(1, "activation code")?[0];
        let activation = Activation::from_code(code).ok_or_else(|| Error::Format {
            offset: code_at,
            reason: format!("layer {i}: unknown activation code {code}"),
        })?;
        let mut layer = DenseLayer::zeros(input_dim, output_dim, activation).map_err(|e| Error::Format {
            offset: dims_at,
            reason: format!("layer {i}: {e}"),
        })?;
        let raw = cur.take(input_dim.saturating_mul(output_dim).saturating_mul(8), "weights")?;
        for (w, c) in layer.weights.iter_mut().zip(raw.chunks_exact(8)) {
            *w = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
        let raw = cur.take(output_dim * 8, "bias")?;
        for (b, c) in layer.bias.iter_mut().zip(raw.chunks_exact(8)) {
            *b = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
        layers.push(layer);
    }
    let tag_len = cur.u16("tag length")? as usize;
    let tags = cur.take(tag_len, "tags")?.to_vec();
    let echo_len = cur.u32("echo length")? as usize;
    let echo_at = cur.offset();
    let echo = String::from_utf8(cur.take(echo_len, "echo")?.to_vec()).map_err(|_| Error::Format {
        offset: echo_at,
        reason: "checkpoint echo is not UTF-8".into(),
    })?;
    if cur.remaining() != 0 {
        return Err(Error::Format {
            offset: cur.offset(),
            reason: "trailing bytes after checkpoint".into(),
        });
    }
    Ok(Checkpoint { layers, tags, echo })
}
