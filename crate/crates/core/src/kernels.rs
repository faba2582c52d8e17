//! Closed-form limiting kernels of a single-hidden-layer network and class-blocked Gram matrices.
//!
//! All forms are driven by the pre-activation kernel `K(x, y) = σ_b² + (σ_w²/d0)⟨x, y⟩`:
//!
//! * NNGP-Erf: `(2/π) asin(2K_xy / √((1 + 2K_xx)(1 + 2K_yy)))`
//! * NNGP-ReLU (arc-cosine): `√(K_xx K_yy)/(2π) · (sin θ + (π − θ) cos θ)`, `θ = acos(K_xy/√(K_xx K_yy))`
//! * derivative kernels: Erf `(4/π)·det([[1+2K_xx, 2K_xy],[2K_xy, 1+2K_yy]])^{-1/2}`, ReLU `(π − θ)/(2π)`
//! * NTK: `σ_b² + σ_w² Q + K Q̇`
//!
//! Linear is the identity feature map `⟨x, y⟩`, used for NC1 of the raw data.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVectorView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_partition, matrix_to_csv, read_matrix_csv, Dataset};
use crate::error::{Error, Result};

/// Tolerance for clamping an arcsin/arccos argument back into [-1, 1].
pub const CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// σ_w²
    pub weight_var: f64,
    /// σ_b²
    pub bias_var: f64,
    pub d0: usize,
    /// σ_a², scales only the adaptive (EoS) post-activation kernel.
    pub readout_var: f64,
}

impl HyperParams {
    /// σ_w² = 1, σ_b² = 0, σ_a² = 1/128.
    pub fn standard(d0: usize) -> Self {
        Self { weight_var: 1.0, bias_var: 0.0, d0, readout_var: 1.0 / 128.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_var > 0.0) {
            return Err(Error::InvalidParameter(format!("σ_w² = {} must be > 0", self.weight_var)));
        }
        if !(self.bias_var >= 0.0) {
            return Err(Error::InvalidParameter(format!("σ_b² = {} must be >= 0", self.bias_var)));
        }
        if self.d0 == 0 {
            return Err(Error::InvalidParameter("d0 must be >= 1".into()));
        }
        if !(self.readout_var > 0.0) {
            return Err(Error::InvalidParameter(format!("σ_a² = {} must be > 0", self.readout_var)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Erf,
    Relu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Erf => "erf",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erf" => Ok(Activation::Erf),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Parse(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Linear,
    NngpErf,
    NngpRelu,
    NtkErf,
    NtkRelu,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] =
        [KernelKind::Linear, KernelKind::NngpErf, KernelKind::NngpRelu, KernelKind::NtkErf, KernelKind::NtkRelu];

    pub fn activation(self) -> Option<Activation> {
        match self {
            KernelKind::Linear => None,
            KernelKind::NngpErf | KernelKind::NtkErf => Some(Activation::Erf),
            KernelKind::NngpRelu | KernelKind::NtkRelu => Some(Activation::Relu),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::NngpErf => "nngp-erf",
            KernelKind::NngpRelu => "nngp-relu",
            KernelKind::NtkErf => "ntk-erf",
            KernelKind::NtkRelu => "ntk-relu",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown kernel kind `{s}`")))
    }
}

/// Where a Gram matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum GramSource {
    Kernel { kind: KernelKind },
    /// Post-activation kernel of a converged EoS state at effective width `d1`.
    Eos { d1: f64 },
    /// Inner products of explicit features.
    Features,
}

/// Symmetric `N × N` kernel matrix with the dataset's class-block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub values: DMatrix<f64>,
    pub partition: Vec<usize>,
    pub source: GramSource,
    pub hyper: Option<HyperParams>,
}

impl Gram {
    pub fn new(values: DMatrix<f64>, partition: Vec<usize>, source: GramSource, hyper: Option<HyperParams>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch { expected: values.nrows(), got: values.ncols() });
        }
        check_partition(&partition, values.nrows())?;
        Ok(Self { values, partition, source, hyper })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn kind(&self) -> Option<KernelKind> {
        match self.source {
            GramSource::Kernel { kind } => Some(kind),
            _ => None,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Block `(c, c')`, of shape `n_c × n_{c'}`.
    pub fn block(&self, c: usize, c2: usize) -> DMatrix<f64> {
        let start = |k: usize| self.partition[..k].iter().sum::<usize>();
        self.values
            .view((start(c), start(c2)), (self.partition[c], self.partition[c2]))
            .into_owned()
    }

    /// A copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: &self.values * factor, ..self.clone() }
    }

    /// Writes `<stem>.csv` (full matrix) and `<stem>.json` (source, hyper, partition).
    pub fn export(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        fs::write(&csv_path, matrix_to_csv(&self.values)).map_err(|e| Error::io(&csv_path, e))?;
        let sidecar = serde_json::json!({
            "source": self.source,
            "kind": self.kind().map(KernelKind::name),
            "hyper": self.hyper,
            "partition": self.partition,
            "n": self.len(),
        });
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }

    /// Reads a pair written by [`Gram::export`].
    pub fn import(stem: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Sidecar {
            source: GramSource,
            hyper: Option<HyperParams>,
            partition: Vec<usize>,
        }
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        let json = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let side: Sidecar =
            serde_json::from_str(&json).map_err(|e| Error::Parse(format!("{}: {e}", json_path.display())))?;
        let values = read_matrix_csv(&csv_path)?;
        Gram::new(values, side.partition, side.source, side.hyper)
    }
}

/// `K(x, y) = σ_b² + (σ_w²/d0)⟨x, y⟩`.
pub fn pre_kernel(x: &[f64], y: &[f64], hyper: &HyperParams) -> Result<f64> {
    check_dims(x, y, hyper)?;
    Ok(pre_from_dot(dot(x, y), hyper))
}

fn pre_from_dot(dot: f64, hyper: &HyperParams) -> f64 {
    hyper.bias_var + hyper.weight_var / hyper.d0 as f64 * dot
}

fn check_dims(x: &[f64], y: &[f64], hyper: &HyperParams) -> Result<()> {
    if x.len() != hyper.d0 {
        return Err(Error::DimensionMismatch { expected: hyper.d0, got: x.len() });
    }
    if y.len() != hyper.d0 {
        return Err(Error::DimensionMismatch { expected: hyper.d0, got: y.len() });
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Clamps `u` into [-1, 1] if it overshoots by at most [`CLAMP_TOLERANCE`].
pub fn clamp_unit(u: f64) -> Result<f64> {
    if u.is_nan() || u.abs() > 1.0 + CLAMP_TOLERANCE {
        return Err(Error::CorrelationOutOfRange { value: u });
    }
    Ok(u.clamp(-1.0, 1.0))
}

/// The pre-activation triple `(K_xy, K_xx, K_yy)` of a pair of inputs.
#[derive(Debug, Clone, Copy)]
pub struct PrePair {
    pub xy: f64,
    pub xx: f64,
    pub yy: f64,
}

pub fn erf_nngp(p: PrePair) -> Result<f64> {
    let u = 2.0 * p.xy / ((1.0 + 2.0 * p.xx) * (1.0 + 2.0 * p.yy)).sqrt();
    Ok(2.0 / PI * clamp_unit(u)?.asin())
}

pub fn erf_derivative(p: PrePair) -> Result<f64> {
    let det = (1.0 + 2.0 * p.xx) * (1.0 + 2.0 * p.yy) - 4.0 * p.xy * p.xy;
    if !(det > 0.0) {
        return Err(Error::CorrelationOutOfRange { value: 1.0 - det });
    }
    Ok(4.0 / PI / det.sqrt())
}

fn relu_angle(p: PrePair) -> Option<Result<f64>> {
    let norm = (p.xx * p.yy).sqrt();
    if !(norm > 0.0) {
        return None;
    }
    Some(clamp_unit(p.xy / norm).map(f64::acos))
}

/// Arc-cosine kernel; `None` when an input has zero pre-activation norm.
pub fn relu_nngp(p: PrePair) -> Option<Result<f64>> {
    let norm = (p.xx * p.yy).sqrt();
    relu_angle(p).map(|theta| theta.map(|t| norm / (2.0 * PI) * (t.sin() + (PI - t) * t.cos())))
}

pub fn relu_derivative(p: PrePair) -> Option<Result<f64>> {
    relu_angle(p).map(|theta| theta.map(|t| (PI - t) / (2.0 * PI)))
}

/// Evaluates `kind` from pre-activation values; `dot` is the raw ⟨x, y⟩ used by `Linear`.
fn kernel_from_pre(kind: KernelKind, p: PrePair, dot: f64, hyper: &HyperParams) -> Option<Result<f64>> {
    let ntk = |q: f64, qdot: f64| hyper.bias_var + hyper.weight_var * q + p.xy * qdot;
    match kind {
        KernelKind::Linear => Some(Ok(dot)),
        KernelKind::NngpErf => Some(erf_nngp(p)),
        KernelKind::NtkErf => Some(erf_nngp(p).and_then(|q| erf_derivative(p).map(|qd| ntk(q, qd)))),
        KernelKind::NngpRelu => relu_nngp(p),
        KernelKind::NtkRelu => {
            let q = relu_nngp(p)?;
            let qd = relu_derivative(p)?;
            Some(q.and_then(|q| qd.map(|qd| ntk(q, qd))))
        }
    }
}

/// Evaluates a closed-form kernel on two inputs.
pub fn eval_kernel(kind: KernelKind, x: &[f64], y: &[f64], hyper: &HyperParams) -> Result<f64> {
    check_dims(x, y, hyper)?;
    let p = PrePair {
        xy: pre_from_dot(dot(x, y), hyper),
        xx: pre_from_dot(dot(x, x), hyper),
        yy: pre_from_dot(dot(y, y), hyper),
    };
    kernel_from_pre(kind, p, dot(x, y), hyper).unwrap_or_else(|| {
        let index = if p.xx > 0.0 { 1 } else { 0 };
        Err(Error::DegenerateInput { index })
    })
}

/// Derivative kernel `Q̇` for the given activation.
pub fn derivative_kernel(activation: Activation, x: &[f64], y: &[f64], hyper: &HyperParams) -> Result<f64> {
    check_dims(x, y, hyper)?;
    let p = PrePair {
        xy: pre_from_dot(dot(x, y), hyper),
        xx: pre_from_dot(dot(x, x), hyper),
        yy: pre_from_dot(dot(y, y), hyper),
    };
    match activation {
        Activation::Erf => erf_derivative(p),
        Activation::Relu => relu_derivative(p).unwrap_or_else(|| {
            let index = if p.xx > 0.0 { 1 } else { 0 };
            Err(Error::DegenerateInput { index })
        }),
    }
}

/// Assembles `Q[i][j] = kernel(x_i, x_j)` over the dataset columns.
///
/// Only the upper triangle is evaluated; the lower triangle is its mirror, so the result is
/// exactly symmetric. Rows are distributed over the rayon pool.
pub fn assemble_gram(kind: KernelKind, dataset: &Dataset, hyper: &HyperParams) -> Result<Gram> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    if dataset.d0() != hyper.d0 {
        return Err(Error::DimensionMismatch { expected: hyper.d0, got: dataset.d0() });
    }
    let n = dataset.len();
    let x = &dataset.x;
    let col = |i: usize| -> DVectorView<'_, f64> { x.column(i) };
    let self_dots: Vec<f64> = (0..n).map(|i| col(i).dot(&col(i))).collect();
    let diag_pre: Vec<f64> = self_dots.iter().map(|&d| pre_from_dot(d, hyper)).collect();
    if kind.activation() == Some(Activation::Relu) {
        if let Some(index) = diag_pre.iter().position(|&k| !(k > 0.0)) {
            return Err(Error::DegenerateInput { index });
        }
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = col(i);
            (i..n)
                .map(|j| {
                    let d = if i == j { self_dots[i] } else { xi.dot(&col(j)) };
                    let p = PrePair { xy: pre_from_dot(d, hyper), xx: diag_pre[i], yy: diag_pre[j] };
                    kernel_from_pre(kind, p, d, hyper).unwrap_or(Err(Error::DegenerateInput { index: i }))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut values = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Gram::new(values, dataset.partition.clone(), GramSource::Kernel { kind }, Some(*hyper))
}

/// Gram of explicit features: `H Hᵀ` for a sample-major `N × d` feature matrix.
pub fn feature_gram(features: &DMatrix<f64>, partition: &[usize]) -> Result<Gram> {
    let n = features.nrows();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = features.row(i).dot(&features.row(j));
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Gram::new(values, partition.to_vec(), GramSource::Features, None)
}
