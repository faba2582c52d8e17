//! Within-class variability collapse (NC1) from Gram matrices and from explicit features.
//!
//! With `S_cc'` the sum of the Gram block between classes `c` and `c'`, `S` the sum of all
//! entries and `n_c` the class sizes,
//!
//! ```text
//! tr ΣW = (1/N) tr Q − (1/N) Σ_c S_cc / n_c
//! tr ΣB = (1/C) Σ_c S_cc / n_c² − (2/C) Σ_c Σ_c' S_cc' / (n_c N) + S / N²
//! ```
//!
//! which are the traces of `ΣW = (1/N) Σ_c Σ_i (h − h̄_c)(h − h̄_c)ᵀ` and
//! `ΣB = (1/C) Σ_c (h̄_c − h̄)(h̄_c − h̄)ᵀ` for any partition. When the classes are balanced the
//! within-class term reduces to `(1/C) Σ_c S_cc / n_c²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{check_partition, Dataset};
use crate::error::{Error, Result};
use crate::kernels::Gram;

/// Between-class traces at or below this value are reported as degenerate.
pub const BETWEEN_FLOOR: f64 = 1e-30;
/// Default stabilizer of the data-relative NC1.
pub const DEFAULT_TAU: f64 = 1e-8;
/// Relative tolerance (against ‖Q‖_∞) for negative traces caused by rounding.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nc1Report {
    pub tr_within: f64,
    pub tr_between: f64,
    pub nc1: f64,
    pub log10_nc1: f64,
    pub nc1_data: Option<f64>,
    pub relative_nc1: Option<f64>,
    pub tau: f64,
}

impl Nc1Report {
    fn from_traces(tr_within: f64, tr_between: f64, scale: f64) -> Result<Self> {
        if !(tr_between > BETWEEN_FLOOR) {
            return Err(Error::DegenerateBetweenVariance(tr_between));
        }
        if tr_within < -PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NegativeWithinVariance(tr_within));
        }
        let nc1 = tr_within.max(0.0) / tr_between;
        Ok(Self {
            tr_within,
            tr_between,
            nc1,
            log10_nc1: nc1.log10(),
            nc1_data: None,
            relative_nc1: None,
            tau: DEFAULT_TAU,
        })
    }

    /// Attaches the data NC1 and the relative ratio `nc1 / (nc1_data + τ)`.
    pub fn with_data(mut self, nc1_data: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("τ = {tau} must be > 0")));
        }
        self.nc1_data = Some(nc1_data);
        self.relative_nc1 = Some(self.nc1 / (nc1_data + tau));
        self.tau = tau;
        Ok(self)
    }
}

/// Per-class block sums, row-major `C × C`, and the diagonal sum per class.
struct BlockSums {
    blocks: Vec<f64>,
    diag: Vec<f64>,
    c: usize,
}

fn block_sums(gram: &Gram) -> Result<BlockSums> {
    let n = gram.len();
    check_partition(&gram.partition, n)?;
    let c = gram.partition.len();
    let mut owner = Vec::with_capacity(n);
    for (k, &nk) in gram.partition.iter().enumerate() {
        owner.extend(std::iter::repeat_n(k, nk));
    }
    let mut blocks = vec![0.0; c * c];
    let mut diag = vec![0.0; c];
    let q = &gram.values;
    for j in 0..n {
        let cj = owner[j];
        for i in 0..n {
            blocks[owner[i] * c + cj] += q[(i, j)];
        }
        diag[cj] += q[(j, j)];
    }
    Ok(BlockSums { blocks, diag, c })
}

fn traces(sums: &BlockSums, partition: &[usize]) -> (f64, f64) {
    let c = sums.c;
    let n: usize = partition.iter().sum();
    let nf = n as f64;
    let cf = c as f64;
    let trace_q: f64 = sums.diag.iter().sum();
    let total: f64 = sums.blocks.iter().sum();
    let mut own = 0.0;
    let mut means_sq = 0.0;
    let mut cross = 0.0;
    for k in 0..c {
        let nk = partition[k] as f64;
        let skk = sums.blocks[k * c + k];
        own += skk / nk;
        means_sq += skk / (nk * nk);
        let row: f64 = sums.blocks[k * c..(k + 1) * c].iter().sum();
        cross += row / (nk * nf);
    }
    let within = (trace_q - own) / nf;
    let between = means_sq / cf - 2.0 * cross / cf + total / (nf * nf);
    (within, between)
}

pub fn trace_within(gram: &Gram) -> Result<f64> {
    Ok(traces(&block_sums(gram)?, &gram.partition).0)
}

pub fn trace_between(gram: &Gram) -> Result<f64> {
    Ok(traces(&block_sums(gram)?, &gram.partition).1)
}

/// NC1 from a Gram matrix through its block sums.
pub fn nc1_of_gram(gram: &Gram) -> Result<Nc1Report> {
    let (within, between) = traces(&block_sums(gram)?, &gram.partition);
    Nc1Report::from_traces(within, between, gram.max_abs())
}

/// NC1 of a sample-major `N × d` feature matrix computed from the class means directly.
pub fn nc1_of_features(h: &DMatrix<f64>, partition: &[usize]) -> Result<Nc1Report> {
    let n = h.nrows();
    check_partition(partition, n)?;
    let d = h.ncols();
    let nf = n as f64;
    let global = h.row_sum().transpose() / nf;
    let mut within = 0.0;
    let mut between = 0.0;
    let mut start = 0;
    for &nk in partition {
        let rows = h.rows(start, nk);
        let mean = rows.row_sum().transpose() / nk as f64;
        for i in 0..nk {
            for k in 0..d {
                let dev = rows[(i, k)] - mean[k];
                within += dev * dev;
            }
        }
        between += (&mean - &global).norm_squared();
        start += nk;
    }
    within /= nf;
    between /= partition.len() as f64;
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v * v));
    Nc1Report::from_traces(within, between, scale)
}

/// NC1 of the raw inputs: the identity feature map on the dataset columns.
pub fn data_nc1(dataset: &Dataset) -> Result<f64> {
    Ok(nc1_of_features(&dataset.x.transpose(), &dataset.partition)?.nc1)
}

/// `NC1(H) / (NC1(X) + τ)` with `NC1(X)` from the raw dataset.
pub fn relative_nc1(gram: &Gram, dataset: &Dataset, tau: f64) -> Result<f64> {
    let report = nc1_of_gram(gram)?.with_data(data_nc1(dataset)?, tau)?;
    Ok(report.relative_nc1.expect("set by with_data"))
}

/// One serialized NC1 result together with the context it was computed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nc1Record {
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub d0: usize,
    pub partition: Vec<usize>,
    pub seed: u64,
    #[serde(flatten)]
    pub report: Nc1Report,
}

/// Mean and sample standard deviation of `log10 NC1` across repeated seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Log10Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Log10Summary {
    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.std / (self.count as f64).sqrt()
        }
    }
}

/// Aggregates log10 values; `None` for an empty input.
pub fn aggregate_log10(values: &[f64]) -> Option<Log10Summary> {
    let count = values.len();
    if count == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Log10Summary { mean, std, count })
}
