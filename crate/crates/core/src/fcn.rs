//! Finite-width fully connected network trained by full-batch gradient descent on a ridge-penalized
//! squared loss.
//!
//! Layer `l` computes `z = W h + b`; hidden layers apply Erf or ReLU and the last layer is linear.
//! Weights start at `N(0, σ_w²/d_{l−1})`, biases at `N(0, σ_b²)`. The objective is
//! `(1/N)‖Ŷ − Y‖² + λ Σ_l (‖W_l‖² + ‖b_l‖²)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Activation;
use crate::nc1::{nc1_of_features, Nc1Report};
use crate::rng::NormalStream;

/// Loss growth over the initial value that aborts training.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnArch {
    /// `d_0 … d_L`; the last entry is the output width.
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// σ_w²
    pub weight_var: f64,
    /// σ_b²
    pub bias_var: f64,
}

impl FcnArch {
    /// `depth` weight layers with `width` hidden units each and a scalar output.
    pub fn new(d0: usize, width: usize, depth: usize, activation: Activation) -> Result<Self> {
        if !(2..=6).contains(&depth) {
            return Err(Error::InvalidParameter(format!("depth {depth} outside 2..=6")));
        }
        let mut widths = vec![d0];
        widths.extend(std::iter::repeat_n(width, depth - 1));
        widths.push(1);
        let arch = Self { widths, activation, weight_var: 1.0, bias_var: 0.0 };
        arch.validate()?;
        Ok(arch)
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::InvalidParameter("need at least one hidden layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be >= 1".into()));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(Error::InvalidParameter("output width must be 1".into()));
        }
        if !(self.weight_var > 0.0) || !(self.bias_var >= 0.0) {
            return Err(Error::InvalidParameter("need σ_w² > 0 and σ_b² >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnModel {
    /// `W_l` of shape `d_l × d_{l−1}`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub activation: Activation,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl FcnModel {
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    /// Sum of squared parameters.
    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_squared()).sum::<f64>()
            + self.biases.iter().map(|b| b.norm_squared()).sum::<f64>()
    }

    fn apply_update(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= g * lr;
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.axpy(-lr, g, 1.0);
        }
    }
}

pub fn init_fcn(arch: &FcnArch, seed: u64) -> Result<FcnModel> {
    arch.validate()?;
    let mut weights = Vec::with_capacity(arch.depth());
    let mut biases = Vec::with_capacity(arch.depth());
    for l in 0..arch.depth() {
        let (fan_in, fan_out) = (arch.widths[l], arch.widths[l + 1]);
        let mut s = NormalStream::new(seed, l as u64);
        let std = (arch.weight_var / fan_in as f64).sqrt();
        // row-major fill so that each unit's incoming weights are contiguous in the stream
        weights.push(DMatrix::from_row_iterator(fan_out, fan_in, (0..fan_out * fan_in).map(|_| std * s.standard_normal())));
        biases.push(if arch.bias_var == 0.0 {
            DVector::zeros(fan_out)
        } else {
            let bstd = arch.bias_var.sqrt();
            DVector::from_fn(fan_out, |_, _| bstd * s.standard_normal())
        });
    }
    Ok(FcnModel { weights, biases, activation: arch.activation })
}

fn phi(activation: Activation, z: f64) -> f64 {
    match activation {
        Activation::Erf => libm::erf(z),
        Activation::Relu => z.max(0.0),
    }
}

fn phi_prime(activation: Activation, z: f64) -> f64 {
    match activation {
        Activation::Erf => 2.0 / PI.sqrt() * (-z * z).exp(),
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Per-layer values of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Pre-activations `z_l`, one per layer.
    pub pre: Vec<DMatrix<f64>>,
    /// Hidden post-activations `h_l`, one per hidden layer.
    pub post: Vec<DMatrix<f64>>,
    /// `1 × N` predictions.
    pub output: DMatrix<f64>,
}

fn affine(w: &DMatrix<f64>, b: &DVector<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = w * h;
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z
}

/// Forward pass over a `d0 × N` batch.
pub fn forward(model: &FcnModel, x: &DMatrix<f64>) -> Result<ForwardPass> {
    if x.nrows() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: x.nrows() });
    }
    let depth = model.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(depth - 1);
    for l in 0..depth {
        let input = if l == 0 { x } else { &post[l - 1] };
        let z = affine(&model.weights[l], &model.biases[l], input);
        if l + 1 < depth {
            post.push(z.map(|v| phi(model.activation, v)));
        }
        pre.push(z);
    }
    let output = pre[depth - 1].clone();
    Ok(ForwardPass { pre, post, output })
}

/// Objective value and its gradient with respect to every parameter.
pub fn loss_and_grad(model: &FcnModel, x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<(f64, Gradients)> {
    let (loss, grads, _) = loss_grad_output(model, x, y, lambda)?;
    Ok((loss, grads))
}

fn loss_grad_output(model: &FcnModel, x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<(f64, Gradients, DMatrix<f64>)> {
    let n = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let fp = forward(model, x)?;
    let err = DMatrix::from_fn(1, n, |_, j| fp.output[(0, j)] - y[j]);
    let loss = err.norm_squared() / n as f64 + lambda * model.squared_norm();

    let depth = model.depth();
    let mut gw = vec![DMatrix::zeros(0, 0); depth];
    let mut gb = vec![DVector::zeros(0); depth];
    let mut delta = err * (2.0 / n as f64);
    for l in (0..depth).rev() {
        let input = if l == 0 { x } else { &fp.post[l - 1] };
        let mut w_grad = &delta * input.transpose();
        w_grad += &model.weights[l] * (2.0 * lambda);
        let mut b_grad: DVector<f64> = delta.column_sum();
        b_grad.axpy(2.0 * lambda, &model.biases[l], 1.0);
        gw[l] = w_grad;
        gb[l] = b_grad;
        if l > 0 {
            let back = model.weights[l].transpose() * &delta;
            let z = &fp.pre[l - 1];
            delta = back.zip_map(z, |d, zv| d * phi_prime(model.activation, zv));
        }
    }
    Ok((loss, Gradients { weights: gw, biases: gb }, fp.output))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// λ
    pub weight_decay: f64,
    pub steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Erf, separable data.
    pub fn erf_preset(seed: u64) -> Self {
        Self { lr: 1e-3, weight_decay: 1e-6, steps: 1000, seed }
    }

    /// ReLU, separable data.
    pub fn relu_preset(seed: u64) -> Self {
        Self { lr: 1e-4, weight_decay: 1e-6, steps: 1000, seed }
    }

    /// Overlapping classes (σ_c = 2).
    pub fn non_separable_preset(seed: u64) -> Self {
        Self { lr: 5e-3, weight_decay: 1e-6, steps: 2000, seed }
    }

    pub fn preset(activation: Activation, seed: u64) -> Self {
        match activation {
            Activation::Erf => Self::erf_preset(seed),
            Activation::Relu => Self::relu_preset(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || self.steps == 0 {
            return Err(Error::InvalidParameter("need lr > 0, λ >= 0, steps >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Penultimate-feature NC1 after the last update; `None` when degenerate.
    pub final_nc1: Option<Nc1Report>,
}

impl TrainTrace {
    /// Writes `step,loss,accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,accuracy\n");
        for (i, (l, a)) in self.loss.iter().zip(&self.accuracy).enumerate() {
            out.push_str(&format!("{i},{l:e},{a}\n"));
        }
        out
    }
}

fn sign_accuracy(output: &DMatrix<f64>, y: &[f64]) -> f64 {
    let hits = y.iter().enumerate().filter(|(j, &t)| output[(0, *j)].signum() == t.signum() && output[(0, *j)] != 0.0).count();
    hits as f64 / y.len() as f64
}

/// Full-batch gradient descent for `cfg.steps` updates; loss and sign accuracy are recorded before
/// each update.
pub fn train(model: &mut FcnModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    let x = &dataset.x;
    let y = &dataset.labels;
    let mut loss = Vec::with_capacity(cfg.steps);
    let mut accuracy = Vec::with_capacity(cfg.steps);
    let mut initial = None;
    for step in 0..cfg.steps {
        let (value, grads, output) = loss_grad_output(model, x, y, cfg.weight_decay)?;
        let first = *initial.get_or_insert(value);
        if !value.is_finite() || value > DIVERGENCE_FACTOR * first {
            return Err(Error::Diverged { step, loss: value });
        }
        loss.push(value);
        accuracy.push(sign_accuracy(&output, y));
        model.apply_update(&grads, cfg.lr);
    }
    let final_nc1 = nc1_of_features(&penultimate_features(model, x)?, &dataset.partition).ok();
    Ok(TrainTrace { loss, accuracy, final_nc1 })
}

/// Last hidden layer's post-activations, sample-major (`N × d_{L−1}`).
pub fn penultimate_features(model: &FcnModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let fp = forward(model, x)?;
    Ok(fp.post.last().expect("at least one hidden layer").transpose())
}
