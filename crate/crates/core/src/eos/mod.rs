//! Equations of State for the data-aware Erf kernel of a two-layer network.
//!
//! For a first-layer weight-row covariance `C` (d0 × d0) the system is
//!
//! ```text
//! K = XᵀCX
//! Q_ab = σ_a² (2/π) asin(u_ab),  u_ab = 2K_ab / √((1 + 2K_aa)(1 + 2K_bb))
//! f̄ = Q (Q + σ²I)⁻¹ y
//! A = −(y − f̄)(y − f̄)ᵀ σ⁻⁴ + (Q + σ²I)⁻¹
//! [C⁻¹]_ij = (d0/σ_w²) δ_ij + (1/d1) tr(A ∂Q/∂C_ij)
//! ```
//!
//! The derivative in the last line treats the entries of `C` as independent, so for `i ≠ j` it is
//! half of the derivative along the symmetric direction `E_ij + E_ji` that
//! [`q_derivative_wrt_c`] returns. The solver works in C-space: it drives
//! `F(C) = C − [(d0/σ_w²) I + M(C)/d1]⁻¹` to zero, `M_ij = tr(A ∂Q/∂C_ij)`, over the upper
//! triangle of `C`.

mod gmres;
mod solver;

pub use gmres::{gmres, GmresOutcome};
pub use solver::{solve_eos, solve_eos_from, solve_factor, ConvergenceLog, FactorLog};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{Gram, GramSource, HyperParams};

/// Default readout scale σ_a².
pub const DEFAULT_READOUT_VAR: f64 = 1.0 / 128.0;
/// Default ridge σ².
pub const DEFAULT_RIDGE: f64 = 1e-5;
/// Entries with `|u| ≥ 1 − SINGULAR_MARGIN` make the arcsin derivative unusable.
pub const SINGULAR_MARGIN: f64 = 1e-12;

/// Decreasing effective widths, ending at the target `d1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    factors: Vec<f64>,
}

impl AnnealSchedule {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("annealing schedule is empty".into()));
        }
        if factors.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::InvalidParameter("annealing factors must be positive and finite".into()));
        }
        if factors.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("annealing factors must be strictly decreasing".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn target(&self) -> f64 {
        *self.factors.last().expect("non-empty by construction")
    }
}

/// Step-wise factors `10⁵ … 2·10⁴` (step 10⁴), `10⁴ … 2·10³` (step 10³), `10³ …` (step 10²),
/// cut at `target`. A target off this grid is appended as the final factor.
pub fn default_schedule(target_d1: u64) -> Result<AnnealSchedule> {
    if !(500..=100_000).contains(&target_d1) {
        return Err(Error::InvalidParameter(format!("target d1 = {target_d1} outside 500..=100000")));
    }
    let grid = (2..=10u64)
        .rev()
        .map(|k| k * 10_000)
        .chain((2..=10u64).rev().map(|k| k * 1_000))
        .chain((1..=10u64).rev().map(|k| k * 100));
    let mut factors: Vec<f64> = grid.filter(|&f| f >= target_d1).map(|f| f as f64).collect();
    if factors.last() != Some(&(target_d1 as f64)) {
        factors.push(target_d1 as f64);
    }
    AnnealSchedule::new(factors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// ∞-norm tolerance on `F(C)`.
    pub tolerance: f64,
    pub max_newton: usize,
    pub gmres_tolerance: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// Finite-difference step, scaled by `1 + ‖C‖`.
    pub fd_step: f64,
    /// Damping α of the fixed-point fallback `C ← C − α F(C)`.
    pub picard_damping: f64,
    pub picard_max_steps: usize,
    pub max_backtracks: usize,
    /// Times a failed annealing step may be halved (geometrically) before giving up.
    pub max_subdivisions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_newton: 50,
            gmres_tolerance: 1e-4,
            gmres_restart: 30,
            gmres_max_iter: 300,
            fd_step: 1e-7,
            picard_damping: 0.5,
            picard_max_steps: 500,
            max_backtracks: 12,
            max_subdivisions: 6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tolerance, self.gmres_tolerance, self.fd_step, self.picard_damping];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("solver tolerances and steps must be > 0".into()));
        }
        if self.picard_damping > 1.0 {
            return Err(Error::InvalidParameter("Picard damping must lie in (0, 1]".into()));
        }
        if self.max_newton == 0 || self.gmres_restart == 0 || self.gmres_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration limits must be >= 1".into()));
        }
        Ok(())
    }
}

/// Kernels and predictions at a given `C`.
#[derive(Debug, Clone)]
pub struct EosKernels {
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub f_bar: DVector<f64>,
    pub a: DMatrix<f64>,
}

/// A solved (or evaluated) EoS state.
#[derive(Debug, Clone)]
pub struct EosState {
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub f_bar: DVector<f64>,
    pub a: DMatrix<f64>,
    pub residual_norm: f64,
    pub annealing_factor: f64,
    pub log: ConvergenceLog,
}

impl EosState {
    /// The post-activation kernel as a Gram over `partition`.
    pub fn gram(&self, partition: &[usize], hyper: &HyperParams) -> Result<Gram> {
        Gram::new(self.q.clone(), partition.to_vec(), GramSource::Eos { d1: self.annealing_factor }, Some(*hyper))
    }
}

/// Fixed inputs of one EoS system: data, targets, hyperparameters and ridge.
#[derive(Debug, Clone)]
pub struct EosProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    hyper: HyperParams,
    sigma2: f64,
}

/// Intermediate quantities shared by the kernels and the gradient.
struct Pieces {
    k: DMatrix<f64>,
    u: DMatrix<f64>,
    q: DMatrix<f64>,
    /// `1 + 2 K_aa`
    diag: DVector<f64>,
    f_bar: DVector<f64>,
    a: DMatrix<f64>,
}

impl EosProblem {
    pub fn new(dataset: &Dataset, hyper: &HyperParams, sigma2: f64) -> Result<Self> {
        hyper.validate()?;
        if dataset.d0() != hyper.d0 {
            return Err(Error::DimensionMismatch { expected: hyper.d0, got: dataset.d0() });
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("σ² = {sigma2} must be > 0")));
        }
        if dataset.is_empty() {
            return Err(Error::InvalidParameter("empty dataset".into()));
        }
        Ok(Self { x: dataset.x.clone(), y: DVector::from_vec(dataset.labels.clone()), hyper: *hyper, sigma2 })
    }

    pub fn d0(&self) -> usize {
        self.x.nrows()
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    /// `(σ_w²/d0) I`, the infinite-width root.
    pub fn initial_c(&self) -> DMatrix<f64> {
        DMatrix::identity(self.d0(), self.d0()) * (self.hyper.weight_var / self.d0() as f64)
    }

    fn check_c(&self, c: &DMatrix<f64>) -> Result<()> {
        let d0 = self.d0();
        if c.shape() != (d0, d0) {
            return Err(Error::DimensionMismatch { expected: d0, got: c.nrows() });
        }
        if c.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("weight covariance C"));
        }
        Ok(())
    }

    fn pieces(&self, c: &DMatrix<f64>) -> Result<Pieces> {
        let n = self.x.ncols();
        let cx = c * &self.x;
        let mut k = self.x.transpose() * cx;
        k = (&k + k.transpose()) * 0.5;
        let diag = DVector::from_fn(n, |a, _| 1.0 + 2.0 * k[(a, a)]);
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::NotPositiveDefinite("pre-activation kernel diagonal"));
        }
        let scale = self.hyper.readout_var * 2.0 / PI;
        let mut u = DMatrix::zeros(n, n);
        let mut q = DMatrix::zeros(n, n);
        for b in 0..n {
            for a in 0..n {
                let v = 2.0 * k[(a, b)] / (diag[a] * diag[b]).sqrt();
                let v = crate::kernels::clamp_unit(v)?;
                u[(a, b)] = v;
                q[(a, b)] = scale * v.asin();
            }
        }
        let mut shifted = q.clone();
        for a in 0..n {
            shifted[(a, a)] += self.sigma2;
        }
        let chol = shifted.cholesky().ok_or(Error::Singular("Q + σ²I"))?;
        let resolvent = chol.inverse();
        let alpha = &resolvent * &self.y;
        let f_bar = &q * &alpha;
        // (y − f̄)/σ² = α
        let mut a = resolvent;
        a.ger(-1.0, &alpha, &alpha, 1.0);
        Ok(Pieces { k, u, q, diag, f_bar, a })
    }

    /// `K`, `Q`, `f̄`, `A` at `C`.
    pub fn kernels(&self, c: &DMatrix<f64>) -> Result<EosKernels> {
        self.check_c(c)?;
        let p = self.pieces(c)?;
        Ok(EosKernels { k: p.k, q: p.q, f_bar: p.f_bar, a: p.a })
    }

    /// `∂Q/∂C` along the symmetric direction `E_ij + E_ji` (or `E_ii`).
    pub fn q_derivative(&self, c: &DMatrix<f64>, i: usize, j: usize) -> Result<DMatrix<f64>> {
        self.check_c(c)?;
        let d0 = self.d0();
        if i >= d0 || j >= d0 {
            return Err(Error::InvalidParameter(format!("index ({i}, {j}) outside {d0}×{d0}")));
        }
        let p = self.pieces(c)?;
        let n = self.x.ncols();
        let xi = self.x.row(i);
        let xj = self.x.row(j);
        let dk = |a: usize, b: usize| {
            if i == j {
                xi[a] * xi[b]
            } else {
                xi[a] * xj[b] + xj[a] * xi[b]
            }
        };
        let scale = self.hyper.readout_var * 2.0 / PI;
        let mut out = DMatrix::zeros(n, n);
        for b in 0..n {
            for a in 0..n {
                let u = p.u[(a, b)];
                if u.abs() >= 1.0 - SINGULAR_MARGIN {
                    return Err(Error::NearSingularDerivative(u.abs()));
                }
                let du = 2.0 * dk(a, b) / (p.diag[a] * p.diag[b]).sqrt()
                    - u * (dk(a, a) / p.diag[a] + dk(b, b) / p.diag[b]);
                out[(a, b)] = scale / (1.0 - u * u).sqrt() * du;
            }
        }
        Ok(out)
    }

    /// `M_ij = tr(A ∂Q/∂C_ij)` with independent entries, assembled as `X S Xᵀ`.
    fn m_matrix(&self, p: &Pieces) -> Result<DMatrix<f64>> {
        let n = self.x.ncols();
        let scale = self.hyper.readout_var * 2.0 / PI;
        let mut s = DMatrix::zeros(n, n);
        let mut r = vec![0.0; n];
        for b in 0..n {
            for a in 0..n {
                let u = p.u[(a, b)];
                if u.abs() >= 1.0 - SINGULAR_MARGIN {
                    return Err(Error::NearSingularDerivative(u.abs()));
                }
                let w = p.a[(a, b)] * scale / (1.0 - u * u).sqrt();
                s[(a, b)] = 2.0 * w / (p.diag[a] * p.diag[b]).sqrt();
                r[a] -= 2.0 * w * u / p.diag[a];
            }
        }
        for (a, ra) in r.into_iter().enumerate() {
            s[(a, a)] += ra;
        }
        let xs = &self.x * s;
        let m = xs * self.x.transpose();
        Ok((&m + m.transpose()) * 0.5)
    }

    /// `M(C)` with independent-entry derivatives.
    pub fn trace_gradient(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_c(c)?;
        let p = self.pieces(c)?;
        self.m_matrix(&p)
    }

    /// `(d0/σ_w²) I + M(C)/d1`, the right-hand side for `C⁻¹`.
    pub fn bracket(&self, c: &DMatrix<f64>, d1: f64) -> Result<DMatrix<f64>> {
        let m = self.trace_gradient(c)?;
        Ok(self.bracket_from(&m, d1))
    }

    fn bracket_from(&self, m: &DMatrix<f64>, d1: f64) -> DMatrix<f64> {
        let d0 = self.d0();
        let mut b = m / d1;
        for i in 0..d0 {
            b[(i, i)] += d0 as f64 / self.hyper.weight_var;
        }
        b
    }

    /// `F(C) = C − bracket⁻¹`, exactly symmetric.
    pub fn residual(&self, c: &DMatrix<f64>, d1: f64) -> Result<DMatrix<f64>> {
        if !(d1 > 0.0) {
            return Err(Error::InvalidParameter(format!("d1 = {d1} must be > 0")));
        }
        let b = self.bracket(c, d1)?;
        let inv = invert_symmetric(b)?;
        let f = c - inv;
        Ok((&f + f.transpose()) * 0.5)
    }

    /// Builds the full state at `C`.
    pub fn state(&self, c: DMatrix<f64>, d1: f64, log: ConvergenceLog) -> Result<EosState> {
        let residual_norm = self.residual(&c, d1)?.amax();
        let kernels = self.kernels(&c)?;
        Ok(EosState {
            c,
            k: kernels.k,
            q: kernels.q,
            f_bar: kernels.f_bar,
            a: kernels.a,
            residual_norm,
            annealing_factor: d1,
            log,
        })
    }
}

fn invert_symmetric(b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = match b.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => b.try_inverse().ok_or(Error::Singular("EoS bracket"))?,
    };
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("EoS bracket"));
    }
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `K`, `Q`, `f̄` and `A` at `C`.
pub fn eos_q_and_predictions(
    c: &DMatrix<f64>,
    dataset: &Dataset,
    hyper: &HyperParams,
    sigma2: f64,
) -> Result<EosKernels> {
    EosProblem::new(dataset, hyper, sigma2)?.kernels(c)
}

/// `∂Q/∂C` along `E_ij + E_ji` for `i ≠ j`, `E_ii` otherwise. The ridge plays no role here.
pub fn q_derivative_wrt_c(c: &DMatrix<f64>, dataset: &Dataset, hyper: &HyperParams, i: usize, j: usize) -> Result<DMatrix<f64>> {
    EosProblem::new(dataset, hyper, 1.0)?.q_derivative(c, i, j)
}

/// `F(C) = C − [(d0/σ_w²) I + M(C)/d1]⁻¹`.
pub fn eos_residual(
    c: &DMatrix<f64>,
    dataset: &Dataset,
    hyper: &HyperParams,
    sigma2: f64,
    d1_effective: f64,
) -> Result<DMatrix<f64>> {
    EosProblem::new(dataset, hyper, sigma2)?.residual(c, d1_effective)
}

/// Upper triangle of a symmetric matrix, row-major.
pub fn upper_triangle(c: &DMatrix<f64>) -> DVector<f64> {
    let d = c.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            v.push(c[(i, j)]);
        }
    }
    DVector::from_vec(v)
}

/// Inverse of [`upper_triangle`].
pub fn from_upper_triangle(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            c[(i, j)] = v[k];
            c[(j, i)] = v[k];
            k += 1;
        }
    }
    c
}

/// Floors eigenvalues at `1e-10 · |tr C| / d0`; returns whether anything changed.
pub fn project_pd(c: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let d = c.nrows();
    let floor = 1e-10 * c.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    let eig = c.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (c.clone(), false);
    }
    let lam = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&lam) * v.transpose();
    ((&out + out.transpose()) * 0.5, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_d1;
    use crate::kernels::{assemble_gram, KernelKind};
    use crate::rng::NormalStream;

    fn hyper(d0: usize) -> HyperParams {
        HyperParams::standard(d0)
    }

    fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
        let mut s = NormalStream::new(seed, 7);
        let b = DMatrix::from_fn(d, d, |_, _| s.standard_normal());
        (&b * b.transpose()) / (4.0 * d as f64) + DMatrix::identity(d, d) * (0.5 / d as f64)
    }

    #[test]
    fn schedule_grid() {
        let s = default_schedule(500).unwrap();
        assert_eq!(s.factors().len(), 9 + 9 + 6);
        assert_eq!(s.factors()[0], 1e5);
        assert_eq!(s.factors()[8], 2e4);
        assert_eq!(s.factors()[9], 1e4);
        assert_eq!(s.factors()[17], 2e3);
        assert_eq!(s.factors()[18], 1e3);
        assert_eq!(s.target(), 500.0);
        let s = default_schedule(2000).unwrap();
        assert_eq!(s.target(), 2000.0);
        assert_eq!(s.factors().len(), 18);
        assert_eq!(default_schedule(100_000).unwrap().factors(), &[1e5]);
        assert_eq!(default_schedule(2500).unwrap().factors().last(), Some(&2500.0));
        assert!(default_schedule(499).is_err());
        assert!(default_schedule(100_001).is_err());
        assert!(AnnealSchedule::new(vec![1e3, 1e3]).is_err());
        assert!(AnnealSchedule::new(vec![]).is_err());
    }

    #[test]
    fn initial_state_reproduces_limiting_kernels() {
        let ds = make_d1(64, 3, 4).unwrap();
        let h = hyper(3);
        let p = EosProblem::new(&ds, &h, 1e-3).unwrap();
        let k = p.kernels(&p.initial_c()).unwrap();
        let lin = assemble_gram(KernelKind::Linear, &ds, &h).unwrap().values / 3.0;
        assert!((&k.k - lin).amax() < 1e-12);
        let nngp = assemble_gram(KernelKind::NngpErf, &ds, &h).unwrap().values;
        assert!((&k.q / h.readout_var - nngp).amax() < 1e-12);
        assert!(k.q.amax() <= h.readout_var);
    }

    #[test]
    fn zero_targets_and_large_ridge() {
        let mut ds = make_d1(32, 2, 1).unwrap();
        let h = hyper(2);
        let c = EosProblem::new(&ds, &h, 1.0).unwrap().initial_c();
        let big = eos_q_and_predictions(&c, &ds, &h, 1e8).unwrap();
        assert!(big.f_bar.amax() < 1e-8);
        ds.labels.iter_mut().for_each(|y| *y = 0.0);
        let k = eos_q_and_predictions(&c, &ds, &h, 1e-2).unwrap();
        assert_eq!(k.f_bar.amax(), 0.0);
        let mut shifted = k.q.clone();
        for a in 0..32 {
            shifted[(a, a)] += 1e-2;
        }
        assert!((&k.a * shifted - DMatrix::identity(32, 32)).amax() < 1e-8);
    }

    #[test]
    fn non_pd_c_is_rejected() {
        let ds = make_d1(8, 2, 0).unwrap();
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(eos_q_and_predictions(&c, &ds, &hyper(2), 1e-3), Err(Error::NotPositiveDefinite(_))));
    }

    fn central_difference(p: &EosProblem, c: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
        let h = 1e-6 * c.norm();
        let mut dir = DMatrix::zeros(c.nrows(), c.ncols());
        dir[(i, j)] = 1.0;
        dir[(j, i)] = 1.0;
        let plus = p.kernels(&(c + &dir * h)).unwrap().q;
        let minus = p.kernels(&(c - &dir * h)).unwrap().q;
        (plus - minus) / (2.0 * h)
    }

    #[test]
    fn derivative_matches_central_differences() {
        for seed in 0..3 {
            let ds = make_d1(16, 4, seed).unwrap();
            let h = hyper(4);
            let p = EosProblem::new(&ds, &h, 1e-3).unwrap();
            let c = random_spd(4, seed);
            for i in 0..4 {
                for j in i..4 {
                    let an = p.q_derivative(&c, i, j).unwrap();
                    let fd = central_difference(&p, &c, i, j);
                    let rel = (&an - &fd).amax() / fd.amax();
                    assert!(rel < 1e-6, "({i},{j}) rel {rel}");
                }
            }
        }
    }

    #[test]
    fn derivative_vanishes_for_unused_coordinate() {
        let mut ds = make_d1(10, 3, 2).unwrap();
        ds.x.row_mut(1).fill(0.0);
        let h = hyper(3);
        let c = random_spd(3, 1);
        let d = q_derivative_wrt_c(&c, &ds, &h, 1, 1).unwrap();
        assert_eq!(d.amax(), 0.0);
    }

    #[test]
    fn one_dimensional_chain_rule() {
        let ds = make_d1(6, 1, 3).unwrap();
        let h = hyper(1);
        let c = DMatrix::from_element(1, 1, 0.7);
        let d = q_derivative_wrt_c(&c, &ds, &h, 0, 0).unwrap();
        let scale = h.readout_var * 2.0 / PI;
        for a in 0..6 {
            for b in 0..6 {
                let (xa, xb) = (ds.x[(0, a)], ds.x[(0, b)]);
                let (ka, kb, kab) = (0.7 * xa * xa, 0.7 * xb * xb, 0.7 * xa * xb);
                let nrm = ((1.0 + 2.0 * ka) * (1.0 + 2.0 * kb)).sqrt();
                let u = 2.0 * kab / nrm;
                // ∂K/∂C = x_a x_b for every entry in 1-D
                let du = 2.0 * xa * xb / nrm - u * (xa * xa / (1.0 + 2.0 * ka) + xb * xb / (1.0 + 2.0 * kb));
                let expected = scale / (1.0 - u * u).sqrt() * du;
                assert!((d[(a, b)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn trace_gradient_equals_halved_symmetric_derivatives() {
        let ds = make_d1(16, 3, 5).unwrap();
        let h = hyper(3);
        let p = EosProblem::new(&ds, &h, 1e-3).unwrap();
        let c = random_spd(3, 2);
        let m = p.trace_gradient(&c).unwrap();
        let a = p.kernels(&c).unwrap().a;
        for i in 0..3 {
            for j in i..3 {
                let dq = p.q_derivative(&c, i, j).unwrap();
                let tr = (&a * dq).trace() / if i == j { 1.0 } else { 2.0 };
                assert!((m[(i, j)] - tr).abs() < 1e-10 * tr.abs().max(1.0), "({i},{j}) {} vs {tr}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn residual_is_symmetric_and_has_the_wide_limit() {
        let ds = make_d1(24, 3, 6).unwrap();
        let h = hyper(3);
        let p = EosProblem::new(&ds, &h, 1e-3).unwrap();
        let c = random_spd(3, 3);
        let f = p.residual(&c, 700.0).unwrap();
        assert_eq!(f, f.transpose());
        let wide = p.residual(&c, 1e300).unwrap();
        assert!((wide - (&c - p.initial_c())).amax() < 1e-14);
        assert!(p.residual(&p.initial_c(), 1e300).unwrap().amax() < 1e-15);
    }

    #[test]
    fn triangle_round_trip_and_projection() {
        let c = random_spd(4, 9);
        assert_eq!(from_upper_triangle(&upper_triangle(&c), 4), c);
        assert!(!project_pd(&c).1);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (fixed, changed) = project_pd(&bad);
        assert!(changed);
        assert!(fixed.clone().cholesky().is_some());
    }
}
