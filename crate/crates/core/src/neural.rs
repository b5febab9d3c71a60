//! Dense feed-forward networks: forward pass with inverted dropout, exact
//! backpropagation, minibatch SGD with exponential learning-rate decay and
//! early stopping, plus a symmetric autoencoder.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{sigmoid, softplus, Matrix};
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidInput(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Binary cross-entropy on a sigmoid output, computed from the logit.
    Bce,
    /// Mean squared error over all output entries.
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Multilayer perceptron. Layer `l` maps `layer_dims[l]` to
/// `layer_dims[l + 1]`; its weights are stored row-major as
/// `layer_dims[l + 1] x layer_dims[l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    /// One per layer; the last entry is the output activation.
    pub activations: Vec<Activation>,
    pub dropout_rate: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Layer outputs of one forward pass. `post[0]` is the input and
/// `post[l + 1]` the (possibly dropped-out) output of layer `l`.
#[derive(Clone, Debug)]
pub struct Activations {
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
    /// Scaled keep masks (`0` or `1 / (1 - rate)`) for hidden layers in train mode.
    masks: Vec<Option<Matrix>>,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.post.last().expect("at least the input is present")
    }

    /// Pre-activation of the last layer.
    pub fn logits(&self) -> &Matrix {
        self.pre.last().expect("model has at least one layer")
    }
}

/// Gradients laid out exactly like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x *= c);
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases).flatten()
    }
}

impl MlpModel {
    /// Randomly initialized network. Relu layers use a He-uniform range
    /// `sqrt(6 / fan_in)`, the others Xavier-uniform
    /// `sqrt(6 / (fan_in + fan_out))`; biases start at zero.
    pub fn new(
        layer_dims: &[usize],
        hidden: Activation,
        output: Activation,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n_layers = layer_dims.len().saturating_sub(1);
        let mut activations = vec![hidden; n_layers];
        if let Some(last) = activations.last_mut() {
            *last = output;
        }
        Self::with_activations(layer_dims, activations, dropout_rate, rng)
    }

    pub fn with_activations(
        layer_dims: &[usize],
        activations: Vec<Activation>,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut model = Self::zeros_with(layer_dims, activations, dropout_rate)?;
        for l in 0..model.n_layers() {
            let fan_in = layer_dims[l] as f64;
            let fan_out = layer_dims[l + 1] as f64;
            let limit = match model.activations[l] {
                Activation::Relu => (6.0 / fan_in).sqrt(),
                _ => (6.0 / (fan_in + fan_out)).sqrt(),
            };
            for w in &mut model.weights[l] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// All-zero parameters.
    pub fn zeros(
        layer_dims: &[usize],
        hidden: Activation,
        output: Activation,
        dropout_rate: f64,
    ) -> Result<Self> {
        let n_layers = layer_dims.len().saturating_sub(1);
        let mut activations = vec![hidden; n_layers];
        if let Some(last) = activations.last_mut() {
            *last = output;
        }
        Self::zeros_with(layer_dims, activations, dropout_rate)
    }

    fn zeros_with(layer_dims: &[usize], activations: Vec<Activation>, dropout_rate: f64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "layer_dims must hold at least two positive widths, got {layer_dims:?}"
            )));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(Error::InvalidInput(format!(
                "{} activations for {} layers",
                activations.len(),
                layer_dims.len() - 1
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidInput(format!("dropout rate {dropout_rate} not in [0, 1)")));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activations,
            dropout_rate,
            weights: layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated on construction")
    }

    pub fn output_activation(&self) -> Activation {
        *self.activations.last().expect("validated on construction")
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Shape and finiteness checks, used after deserializing a snapshot.
    pub fn validate(&self) -> Result<()> {
        let n = self.layer_dims.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 || self.activations.len() != n - 1 {
            return Err(Error::Shape("model layer lists have inconsistent lengths".into()));
        }
        for l in 0..n - 1 {
            if self.weights[l].len() != self.layer_dims[l] * self.layer_dims[l + 1]
                || self.biases[l].len() != self.layer_dims[l + 1]
            {
                return Err(Error::Shape(format!("layer {l} parameters do not match layer_dims")));
            }
        }
        if self.weights.iter().chain(&self.biases).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Matrix, mode: Mode, rng: Option<&mut Rng>) -> Result<Activations> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        let dropout = mode == Mode::Train && self.dropout_rate > 0.0;
        let mut rng = rng;
        if dropout && rng.is_none() {
            return Err(Error::InvalidInput("train-mode dropout needs a random generator".into()));
        }
        let n = input.rows();
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut post = Vec::with_capacity(self.n_layers() + 1);
        let mut masks = Vec::with_capacity(self.n_layers());
        post.push(input.clone());
        for l in 0..self.n_layers() {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.weights[l];
            let b = &self.biases[l];
            let a_prev = &post[l];
            let mut z = Matrix::zeros(n, dout);
            for i in 0..n {
                let x = a_prev.row(i);
                let zr = z.row_mut(i);
                for j in 0..dout {
                    let wr = &w[j * din..(j + 1) * din];
                    zr[j] = b[j] + x.iter().zip(wr).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            let act = self.activations[l];
            let mut a = z.clone();
            a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            let hidden = l + 1 < self.n_layers();
            let mask = if dropout && hidden {
                let keep = 1.0 - self.dropout_rate;
                let r = rng.as_deref_mut().expect("checked above");
                let mut m = Matrix::zeros(n, dout);
                for v in m.as_mut_slice() {
                    *v = if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
                a.as_mut_slice()
                    .iter_mut()
                    .zip(m.as_slice())
                    .for_each(|(x, k)| *x *= k);
                Some(m)
            } else {
                None
            };
            pre.push(z);
            post.push(a);
            masks.push(mask);
        }
        Ok(Activations { pre, post, masks })
    }

    /// Eval-mode output.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self
            .forward(input, Mode::Eval, None)?
            .post
            .pop()
            .expect("model has at least one layer"))
    }

    /// Backpropagate `delta = dL/d(last pre-activation)` through a forward
    /// pass. The caller folds any batch averaging into `delta`.
    pub fn backward(&self, acts: &Activations, delta: Matrix) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        let n = delta.rows();
        let mut delta = delta;
        for l in (0..self.n_layers()).rev() {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let a_prev = &acts.post[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for i in 0..n {
                let d = delta.row(i);
                let x = a_prev.row(i);
                for j in 0..dout {
                    let dj = d[j];
                    if dj == 0.0 {
                        continue;
                    }
                    gb[j] += dj;
                    gw[j * din..(j + 1) * din]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(g, xv)| *g += dj * xv);
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut next = Matrix::zeros(n, din);
            for i in 0..n {
                let d = delta.row(i);
                let out = next.row_mut(i);
                for j in 0..dout {
                    let dj = d[j];
                    if dj == 0.0 {
                        continue;
                    }
                    out.iter_mut()
                        .zip(&w[j * din..(j + 1) * din])
                        .for_each(|(o, wv)| *o += dj * wv);
                }
            }
            let act = self.activations[l - 1];
            let z = &acts.pre[l - 1];
            let mask = acts.masks[l - 1].as_ref();
            for (k, v) in next.as_mut_slice().iter_mut().enumerate() {
                let m = mask.map_or(1.0, |m| m.as_slice()[k]);
                *v *= m * act.derivative(z.as_slice()[k]);
            }
            delta = next;
        }
        grads
    }

    /// SGD update `theta -= lr * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.iter_mut().zip(g).for_each(|(p, d)| *p -= lr * d);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.iter_mut().zip(g).for_each(|(p, d)| *p -= lr * d);
        }
    }

    /// The `k`-th parameter in gradient order (weights, then biases).
    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            if k < v.len() {
                return &mut v[k];
            }
            k -= v.len();
        }
        panic!("parameter index out of range")
    }
}

fn check_targets(model: &MlpModel, input: &Matrix, targets: &Matrix) -> Result<()> {
    if targets.rows() != input.rows() || targets.cols() != model.output_dim() {
        return Err(Error::Shape(format!(
            "targets are {}x{}, expected {}x{}",
            targets.rows(),
            targets.cols(),
            input.rows(),
            model.output_dim()
        )));
    }
    if input.rows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(())
}

/// Mean loss over all output entries, given a forward pass.
fn loss_value(model: &MlpModel, acts: &Activations, targets: &Matrix, loss: Loss) -> f64 {
    let count = targets.as_slice().len() as f64;
    match loss {
        Loss::Bce => {
            let z = acts.logits().as_slice();
            z.iter()
                .zip(targets.as_slice())
                .map(|(&z, &t)| softplus(z) - t * z)
                .sum::<f64>()
                / count
        }
        Loss::Mse => {
            let _ = model;
            acts.output()
                .as_slice()
                .iter()
                .zip(targets.as_slice())
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                / count
        }
    }
}

fn output_delta(model: &MlpModel, acts: &Activations, targets: &Matrix, loss: Loss) -> Matrix {
    let count = targets.as_slice().len() as f64;
    let z = acts.logits();
    let mut delta = Matrix::zeros(z.rows(), z.cols());
    let out_act = model.output_activation();
    for (k, d) in delta.as_mut_slice().iter_mut().enumerate() {
        let zk = z.as_slice()[k];
        let t = targets.as_slice()[k];
        *d = match loss {
            Loss::Bce => (sigmoid(zk) - t) / count,
            Loss::Mse => 2.0 * (acts.output().as_slice()[k] - t) * out_act.derivative(zk) / count,
        };
    }
    delta
}

fn check_loss_pairing(model: &MlpModel, loss: Loss) -> Result<()> {
    if loss == Loss::Bce && model.output_activation() != Activation::Sigmoid {
        return Err(Error::InvalidInput("bce loss needs a sigmoid output layer".into()));
    }
    Ok(())
}

/// Mean loss in eval mode.
pub fn evaluate_loss(model: &MlpModel, input: &Matrix, targets: &Matrix, loss: Loss) -> Result<f64> {
    check_targets(model, input, targets)?;
    check_loss_pairing(model, loss)?;
    let acts = model.forward(input, Mode::Eval, None)?;
    Ok(loss_value(model, &acts, targets, loss))
}

/// Mean loss and its exact gradients. `rng` enables train-mode dropout.
pub fn loss_and_gradients(
    model: &MlpModel,
    input: &Matrix,
    targets: &Matrix,
    loss: Loss,
    rng: Option<&mut Rng>,
) -> Result<(f64, Gradients)> {
    check_targets(model, input, targets)?;
    check_loss_pairing(model, loss)?;
    let mode = if rng.is_some() { Mode::Train } else { Mode::Eval };
    let acts = model.forward(input, mode, rng)?;
    let value = loss_value(model, &acts, targets, loss);
    let delta = output_delta(model, &acts, targets, loss);
    Ok((value, model.backward(&acts, delta)))
}

/// Eval-mode gradients of the mean batch loss.
pub fn gradients(model: &MlpModel, input: &Matrix, targets: &Matrix, loss: Loss) -> Result<Gradients> {
    loss_and_gradients(model, input, targets, loss, None).map(|(_, g)| g)
}

/// Largest relative error between `analytic` and central finite
/// differences (`h = 1e-5`) over every parameter. Entries where both are
/// exactly zero count as zero error.
pub fn max_relative_error(
    model: &MlpModel,
    input: &Matrix,
    targets: &Matrix,
    loss: Loss,
    analytic: &Gradients,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let analytic: Vec<f64> = analytic.iter().copied().collect();
    for (k, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(k);
        *probe.param_mut(k) = original + H;
        let up = evaluate_loss(&probe, input, targets, loss)?;
        *probe.param_mut(k) = original - H;
        let down = evaluate_loss(&probe, input, targets, loss)?;
        *probe.param_mut(k) = original;
        let numeric = (up - down) / (2.0 * H);
        let scale = a.abs().max(numeric.abs());
        let err = if scale == 0.0 { 0.0 } else { (a - numeric).abs() / scale };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Worst relative error of the backpropagated gradients.
pub fn gradient_check(model: &MlpModel, input: &Matrix, targets: &Matrix, loss: Loss) -> Result<f64> {
    let analytic = gradients(model, input, targets, loss)?;
    max_relative_error(model, input, targets, loss, &analytic)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
    pub patience: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            decay_rate: 0.99,
            decay_steps: 1024,
            patience: 10,
            min_delta: 1e-4,
            batch_size: 512,
            max_epochs: 1000,
            seed: 0,
            loss: Loss::Bce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("train config: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate must be in (0, 1]");
        }
        if self.decay_steps == 0 || self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("decay_steps, patience, batch_size and max_epochs must be positive");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be non-negative");
        }
        Ok(())
    }

    /// Learning rate for the `step`-th update (0-based), with a continuous
    /// decay exponent.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        self.learning_rate * self.decay_rate.powf(step as f64 / self.decay_steps as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// `(train, val)` mean loss per epoch.
    pub loss_curve: Vec<(f64, f64)>,
    pub stopped_early: bool,
}

/// What the SGD loop optimizes. Items are addressed by index; a batch is a
/// slice of indices into `0..n_train()`.
pub trait Objective {
    fn n_train(&self) -> usize;

    /// Called before each epoch; objectives that resample their training
    /// items do it here.
    fn begin_epoch(&mut self, _epoch: usize, _rng: &mut Rng) -> Result<()> {
        Ok(())
    }

    /// Mean loss over the batch and its gradients, in train mode.
    fn batch_gradients(&self, model: &MlpModel, batch: &[usize], rng: &mut Rng) -> Result<(f64, Gradients)>;

    /// Eval-mode loss on the held-out set.
    fn val_loss(&self, model: &MlpModel) -> Result<f64>;
}

/// Minibatch SGD with early stopping. An epoch improves when its validation
/// loss is at least `min_delta` below the best so far; training stops after
/// `patience` epochs without improvement. The returned parameters are those
/// of the epoch with the lowest validation loss.
pub fn fit(mut model: MlpModel, objective: &mut impl Objective, config: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    let mut rng = crate::seeded_rng(config.seed, 0x7a1);
    let mut best_model = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::INFINITY;
    let mut stale = 0;
    let mut curve = Vec::new();
    let mut step: u64 = 0;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        objective.begin_epoch(epoch, &mut rng)?;
        let n = objective.n_train();
        if n == 0 {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = objective.batch_gradients(&model, batch, &mut rng)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "loss became {loss} at epoch {epoch}, step {step} (lr {:.3e})",
                    config.learning_rate_at(step)
                )));
            }
            model.apply_gradients(&grads, config.learning_rate_at(step));
            step += 1;
            total += loss * batch.len() as f64;
        }
        let val = objective.val_loss(&model)?;
        if !val.is_finite() {
            return Err(Error::Numerical(format!("validation loss became {val} at epoch {epoch}")));
        }
        curve.push((total / n as f64, val));
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best_model = model.clone();
        }
        if epoch == 0 || (reference - val >= config.min_delta && val < reference) {
            reference = val;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = epoch + 1 < config.max_epochs;
                break;
            }
        }
    }
    let report = TrainReport {
        epochs_run: curve.len(),
        best_epoch,
        best_val_loss: best_val,
        loss_curve: curve,
        stopped_early,
    };
    Ok((best_model, report))
}

/// Plain supervised objective on fixed matrices.
pub struct Supervised<'a> {
    pub x_train: &'a Matrix,
    pub y_train: &'a Matrix,
    pub x_val: &'a Matrix,
    pub y_val: &'a Matrix,
    pub loss: Loss,
}

impl Objective for Supervised<'_> {
    fn n_train(&self) -> usize {
        self.x_train.rows()
    }

    fn batch_gradients(&self, model: &MlpModel, batch: &[usize], rng: &mut Rng) -> Result<(f64, Gradients)> {
        let x = self.x_train.select_rows(batch);
        let y = self.y_train.select_rows(batch);
        loss_and_gradients(model, &x, &y, self.loss, Some(rng))
    }

    fn val_loss(&self, model: &MlpModel) -> Result<f64> {
        evaluate_loss(model, self.x_val, self.y_val, self.loss)
    }
}

pub fn train(
    model: MlpModel,
    x_train: &Matrix,
    y_train: &Matrix,
    x_val: &Matrix,
    y_val: &Matrix,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    if x_train.rows() == 0 || x_val.rows() == 0 {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    check_targets(&model, x_train, y_train)?;
    check_targets(&model, x_val, y_val)?;
    check_loss_pairing(&model, config.loss)?;
    let mut objective = Supervised {
        x_train,
        y_train,
        x_val,
        y_val,
        loss: config.loss,
    };
    fit(model, &mut objective, config)
}

/// Seeded `(train, val)` index split holding out `fraction` of `n` rows
/// (at least one). With fewer than two rows both sides get every row.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..n).collect();
    if n < 2 {
        return (all.clone(), all);
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order = all;
    order.shuffle(&mut crate::seeded_rng(seed, 0x401d));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Encoder hidden widths, outermost first; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub val_fraction: f64,
    pub train: TrainConfig,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            bottleneck: 16,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            val_fraction: 0.1,
            train: TrainConfig {
                loss: Loss::Mse,
                ..TrainConfig::default()
            },
        }
    }
}

/// Train a mirrored encoder/decoder under reconstruction MSE.
pub fn train_autoencoder(x: &Matrix, config: &AutoencoderConfig) -> Result<(MlpModel, TrainReport)> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidInput("autoencoder needs a non-empty matrix".into()));
    }
    let mut dims = vec![x.cols()];
    dims.extend(&config.hidden);
    dims.push(config.bottleneck);
    dims.extend(config.hidden.iter().rev());
    dims.push(x.cols());
    let mut rng = crate::seeded_rng(config.train.seed, 0xae);
    let model = MlpModel::new(&dims, config.activation, Activation::Identity, config.dropout_rate, &mut rng)?;
    let (tr, va) = holdout_split(x.rows(), config.val_fraction, config.train.seed);
    let x_train = x.select_rows(&tr);
    let x_val = x.select_rows(&va);
    let train_config = TrainConfig {
        loss: Loss::Mse,
        ..config.train.clone()
    };
    train(model, &x_train, &x_train, &x_val, &x_val, &train_config)
}

/// The layers up to and including the bottleneck.
pub fn encoder_half(autoencoder: &MlpModel) -> Result<MlpModel> {
    let n = autoencoder.n_layers();
    if n % 2 != 0 {
        return Err(Error::Shape("autoencoder must have an even number of layers".into()));
    }
    let k = n / 2;
    Ok(MlpModel {
        layer_dims: autoencoder.layer_dims[..=k].to_vec(),
        activations: autoencoder.activations[..k].to_vec(),
        dropout_rate: autoencoder.dropout_rate,
        weights: autoencoder.weights[..k].to_vec(),
        biases: autoencoder.biases[..k].to_vec(),
    })
}
