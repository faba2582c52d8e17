//! Leading-order expected-NC1 predictors for two 1-D Gaussian classes, and the Monte Carlo
//! estimators used to check them.
//!
//! A predictor is built from three expected kernel values per class layout
//! ([`CaseValues`]): the diagonal `V1(c) = E[Q(x, x)]`, the same-class off-diagonal
//! `V2(c) = E[Q(x, x')]` and the cross-class `V3 = E[Q(x, x'')]`. [`expected_nc1`] turns them
//! into a ratio of expected traces. Higher-order remainders are not modelled.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_gaussian_mixture, ClassSpec, MixtureSpec};
use crate::error::{Error, Result};
use crate::kernels::{assemble_gram, HyperParams, KernelKind};
use crate::nc1::nc1_of_gram;
use crate::rng::{derive_seed, NormalStream};

/// `|μ_c| / σ_c` below this triggers a separation warning.
pub const SEPARATION_RATIO: f64 = 3.0;

/// Two 1-D Gaussian classes `N(μ_c, σ_c²)` with `n_c` samples each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussParams1D {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub n1: usize,
    pub n2: usize,
    /// σ_w²
    pub weight_var: f64,
}

impl GaussParams1D {
    /// Balanced classes at `∓mu` with a shared `sigma` and `n` samples each.
    pub fn symmetric(mu: f64, sigma: f64, n: usize) -> Self {
        Self { mu1: -mu.abs(), mu2: mu.abs(), sigma1: sigma, sigma2: sigma, n1: n, n2: n, weight_var: 1.0 }
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn mu(&self, c: usize) -> f64 {
        [self.mu1, self.mu2][c]
    }

    pub fn sigma(&self, c: usize) -> f64 {
        [self.sigma1, self.sigma2][c]
    }

    pub fn count(&self, c: usize) -> usize {
        [self.n1, self.n2][c]
    }

    fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidParameter("class sizes must be >= 1".into()));
        }
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter("class standard deviations must be >= 0".into()));
        }
        if !(self.weight_var > 0.0) {
            return Err(Error::InvalidParameter(format!("σ_w² = {} must be > 0", self.weight_var)));
        }
        Ok(())
    }

    /// Violations of the separation assumptions, as human-readable messages.
    pub fn assumption_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.mu1 < 0.0 && self.mu2 > 0.0) {
            out.push(format!("expected μ1 < 0 < μ2, got μ1 = {}, μ2 = {}", self.mu1, self.mu2));
        }
        for c in 0..2 {
            let (mu, sigma) = (self.mu(c), self.sigma(c));
            if sigma > 0.0 && mu.abs() / sigma < SEPARATION_RATIO {
                out.push(format!("class {}: |μ|/σ = {:.3} is below {SEPARATION_RATIO}", c + 1, mu.abs() / sigma));
            }
        }
        out
    }

    fn check(&self) -> Result<()> {
        self.validate()?;
        for msg in self.assumption_warnings() {
            warn!("{msg}");
        }
        Ok(())
    }

    /// The matching 1-D mixture, labels `-1` and `+1`.
    pub fn mixture_spec(&self) -> MixtureSpec {
        MixtureSpec {
            d0: 1,
            classes: vec![
                ClassSpec::new(self.mu1, self.sigma1, self.n1, -1.0),
                ClassSpec::new(self.mu2, self.sigma2, self.n2, 1.0),
            ],
        }
    }
}

/// Expected kernel values per case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseValues {
    /// `c = c'`, `i = j`
    pub v1: [f64; 2],
    /// `c = c'`, `i ≠ j`
    pub v2: [f64; 2],
    /// `c ≠ c'`
    pub v3: f64,
}

impl CaseValues {
    pub fn scaled(&self, s: f64) -> Self {
        Self { v1: self.v1.map(|v| v * s), v2: self.v2.map(|v| v * s), v3: self.v3 * s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReluKernel {
    Nngp,
    Ntk,
}

/// `T = E[1/x²]` to second order for `x ~ N(μ, σ²)`.
pub fn t_moment(mu: f64, sigma: f64) -> Result<f64> {
    let m2 = mu * mu + sigma * sigma;
    if !(m2 > 0.0) {
        return Err(Error::DegenerateDenominator(m2));
    }
    let s2 = sigma * sigma;
    Ok(1.0 / m2 + (2.0 * s2 * s2 + 4.0 * s2 * mu * mu) / (m2 * m2 * m2))
}

/// ReLU NNGP cases `(σ_w²/2)(σ²+μ²)`, `(σ_w²/2)μ²`, `0`; NTK replaces `σ_w²/2` by `σ_w⁴/2 + σ_w²/2`.
pub fn relu_case_values(p: &GaussParams1D, kernel: ReluKernel) -> Result<CaseValues> {
    p.check()?;
    let w = p.weight_var;
    let scale = match kernel {
        ReluKernel::Nngp => w / 2.0,
        ReluKernel::Ntk => w * w / 2.0 + w / 2.0,
    };
    let v1 = [0, 1].map(|c| scale * (p.sigma(c).powi(2) + p.mu(c).powi(2)));
    let v2 = [0, 1].map(|c| scale * p.mu(c).powi(2));
    Ok(CaseValues { v1, v2, v3: 0.0 })
}

/// Erf NNGP cases to leading order; the cross-class value carries the sign of `μ1 μ2`.
pub fn erf_case_values(p: &GaussParams1D) -> Result<CaseValues> {
    p.check()?;
    let w = p.weight_var;
    let t = [t_moment(p.mu1, p.sigma1)?, t_moment(p.mu2, p.sigma2)?];
    let v1 = t.map(|tc| 1.0 - tc / (2.0 * w));
    let v2 = t.map(|tc| 1.0 - tc / (2.0 * w) - tc * tc / (16.0 * w * w));
    let sign = (p.mu1 * p.mu2).signum();
    let v3 = sign * (1.0 - (t[0] + t[1]) / (4.0 * w) - t[0] * t[1] / (16.0 * w * w));
    Ok(CaseValues { v1, v2, v3 })
}

/// Identity feature map: `σ²+μ²`, `μ²`, `μ1 μ2`.
pub fn data_case_values(p: &GaussParams1D) -> CaseValues {
    CaseValues {
        v1: [0, 1].map(|c| p.sigma(c).powi(2) + p.mu(c).powi(2)),
        v2: [0, 1].map(|c| p.mu(c).powi(2)),
        v3: p.mu1 * p.mu2,
    }
}

/// Expected within and between traces from case values (two classes).
pub fn expected_traces(cases: &CaseValues, n1: usize, n2: usize) -> Result<(f64, f64)> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidParameter("class sizes must be >= 1".into()));
    }
    let counts = [n1 as f64, n2 as f64];
    let n = counts[0] + counts[1];
    let mut within = 0.0;
    let mut between = 0.0;
    for c in 0..2 {
        let nc = counts[c];
        let block = nc * (nc - 1.0) * cases.v2[c] + nc * cases.v1[c];
        within += nc * cases.v1[c] / n - block / (2.0 * nc * nc);
        between += (1.0 / (2.0 * nc * nc) - 1.0 / (n * n)) * block;
    }
    between -= 2.0 * counts[0] * counts[1] / (n * n) * cases.v3;
    Ok((within, between))
}

/// Ratio of expected traces.
pub fn expected_nc1(cases: &CaseValues, n1: usize, n2: usize) -> Result<f64> {
    let (within, between) = expected_traces(cases, n1, n2)?;
    ratio(within, between)
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if !(den.abs() > 1e-300) || !den.is_finite() {
        return Err(Error::DegenerateDenominator(den));
    }
    Ok(num / den)
}

/// The two readings of the ReLU expected-NC1 closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem2Variant {
    /// Denominator includes `−(2/N²) Π n_c μ_c`.
    AsPrinted,
    /// Cross-class term dropped (`V3 = 0`).
    AppendixD,
}

impl Theorem2Variant {
    pub const ALL: [Theorem2Variant; 2] = [Theorem2Variant::AsPrinted, Theorem2Variant::AppendixD];
}

impl Default for Theorem2Variant {
    /// The variant supported by the Monte Carlo check on the D1 setup.
    fn default() -> Self {
        Theorem2Variant::AppendixD
    }
}

impl fmt::Display for Theorem2Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Theorem2Variant::AsPrinted => "as-printed",
            Theorem2Variant::AppendixD => "appendix-D",
        })
    }
}

impl FromStr for Theorem2Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "as-printed" => Ok(Theorem2Variant::AsPrinted),
            "appendix-d" => Ok(Theorem2Variant::AppendixD),
            _ => Err(Error::Parse(format!("unknown variant `{s}`"))),
        }
    }
}

/// Expected NC1 of the ReLU NNGP (equivalently NTK) features.
pub fn theorem2_expected_nc1(p: &GaussParams1D, variant: Theorem2Variant) -> Result<f64> {
    p.check()?;
    let n = p.n() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..2 {
        let (nc, mu, s) = (p.count(c) as f64, p.mu(c), p.sigma(c));
        num += (nc * mu * mu + nc * s * s) / n - mu * mu / 2.0;
        den += mu * mu / 2.0 - nc * nc * mu * mu / (n * n);
    }
    if variant == Theorem2Variant::AsPrinted {
        den -= 2.0 / (n * n) * (p.n1 as f64 * p.mu1) * (p.n2 as f64 * p.mu2);
    }
    ratio(num, den)
}

/// Predicted `E[NC1(H)] / E[NC1(X)]` for the ReLU NNGP.
pub fn corollary1_ratio(p: &GaussParams1D) -> Result<f64> {
    p.check()?;
    let n = p.n() as f64;
    let cross = 2.0 / (n * n) * (p.n1 as f64 * p.mu1) * (p.n2 as f64 * p.mu2);
    let den: f64 = (0..2)
        .map(|c| {
            let (nc, mu) = (p.count(c) as f64, p.mu(c));
            mu * mu / 2.0 - nc * nc * mu * mu / (n * n)
        })
        .sum();
    Ok(1.0 - ratio(cross, den)?)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let draws = values.len();
        let mean = values.iter().sum::<f64>() / draws as f64;
        let var = if draws > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64
        } else {
            f64::NAN
        };
        Self { mean, std_err: (var / draws as f64).sqrt(), draws }
    }

    /// `(predicted − mean) / std_err`.
    pub fn z_score(&self, predicted: f64) -> f64 {
        (predicted - self.mean) / self.std_err
    }
}

/// Monte Carlo kernel means per case for class 1 (diag, within) and the cross pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMonteCarlo {
    pub diag: [McEstimate; 2],
    pub within: [McEstimate; 2],
    pub cross: McEstimate,
}

/// Estimates each case mean from `pairs` independent draws, with `kernel` acting on 1-D inputs.
pub fn monte_carlo_case_values<F>(p: &GaussParams1D, pairs: usize, seed: u64, kernel: F) -> CaseMonteCarlo
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let run = |tag: u64, draw: &dyn Fn(&mut NormalStream) -> (f64, f64)| {
        let mut s = NormalStream::new(derive_seed(seed, &[tag]), 0);
        let values: Vec<f64> = (0..pairs)
            .map(|_| {
                let (x, y) = draw(&mut s);
                kernel(x, y)
            })
            .collect();
        McEstimate::from_samples(&values)
    };
    let diag = [0, 1].map(|c| {
        run(c as u64, &|s: &mut NormalStream| {
            let x = s.normal(p.mu(c), p.sigma(c));
            (x, x)
        })
    });
    let within = [0, 1].map(|c| {
        run(2 + c as u64, &|s: &mut NormalStream| (s.normal(p.mu(c), p.sigma(c)), s.normal(p.mu(c), p.sigma(c))))
    });
    let cross = run(4, &|s: &mut NormalStream| (s.normal(p.mu1, p.sigma1), s.normal(p.mu2, p.sigma2)));
    CaseMonteCarlo { diag, within, cross }
}

/// 1-D NNGP-Erf with σ_b² = 0, as a closure-friendly function.
pub fn erf_nngp_1d(weight_var: f64) -> impl Fn(f64, f64) -> f64 + Sync {
    move |x, y| {
        let kxy = weight_var * x * y;
        let u = 2.0 * kxy / ((1.0 + 2.0 * weight_var * x * x) * (1.0 + 2.0 * weight_var * y * y)).sqrt();
        2.0 / PI * u.clamp(-1.0, 1.0).asin()
    }
}

/// NC1 of `kind`'s Gram on `draws` fresh 1-D datasets drawn from `p`.
pub fn monte_carlo_nc1(p: &GaussParams1D, kind: KernelKind, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = p.mixture_spec();
    let hyper = HyperParams { weight_var: p.weight_var, bias_var: 0.0, d0: 1, readout_var: 1.0 };
    (0..draws)
        .into_par_iter()
        .map(|k| {
            let ds = sample_gaussian_mixture(&spec, derive_seed(seed, &[k as u64]))?;
            Ok(nc1_of_gram(&assemble_gram(kind, &ds, &hyper)?)?.nc1)
        })
        .collect()
}

/// Comparison of both closed-form variants against Monte Carlo NC1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Verdict {
    pub monte_carlo: McEstimate,
    pub as_printed: f64,
    pub appendix_d: f64,
    pub z_as_printed: f64,
    pub z_appendix_d: f64,
    /// The single variant within `z_max` standard errors, if exactly one is.
    pub supported: Option<Theorem2Variant>,
}

pub fn adjudicate_theorem2(p: &GaussParams1D, nc1_draws: &[f64], z_max: f64) -> Result<Theorem2Verdict> {
    let mc = McEstimate::from_samples(nc1_draws);
    let as_printed = theorem2_expected_nc1(p, Theorem2Variant::AsPrinted)?;
    let appendix_d = theorem2_expected_nc1(p, Theorem2Variant::AppendixD)?;
    let z_as_printed = mc.z_score(as_printed);
    let z_appendix_d = mc.z_score(appendix_d);
    let supported = match (z_as_printed.abs() <= z_max, z_appendix_d.abs() <= z_max) {
        (true, false) => Some(Theorem2Variant::AsPrinted),
        (false, true) => Some(Theorem2Variant::AppendixD),
        _ => None,
    };
    Ok(Theorem2Verdict { monte_carlo: mc, as_printed, appendix_d, z_as_printed, z_appendix_d, supported })
}
