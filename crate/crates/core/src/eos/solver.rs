//! Annealed Jacobian-free Newton–Krylov solve of the EoS fixed point.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{from_upper_triangle, gmres, project_pd, upper_triangle, AnnealSchedule, EosProblem, EosState, SolverConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::HyperParams;

/// Sufficient-decrease constant of the backtracking line search.
const ARMIJO: f64 = 1e-4;
/// PD projections per factor beyond which a warning is emitted.
const RECURRENT_PROJECTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorLog {
    pub factor: f64,
    pub newton_iterations: usize,
    pub gmres_iterations: usize,
    pub picard_steps: usize,
    pub pd_projections: usize,
    /// ∞-norm of `F` at each Newton iterate, starting with the warm start.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    /// Coordinates the unknowns live in.
    pub formulation: String,
    pub sigma2: f64,
    pub readout_var: f64,
    pub config: SolverConfig,
    pub factors: Vec<FactorLog>,
}

impl ConvergenceLog {
    fn new(problem: &EosProblem, cfg: &SolverConfig) -> Self {
        Self {
            formulation: "C-space, upper triangle".into(),
            sigma2: problem.sigma2,
            readout_var: problem.hyper.readout_var,
            config: *cfg,
            factors: Vec::new(),
        }
    }
}

/// Solves every factor of `schedule` in turn, starting from `(σ_w²/d0) I`.
pub fn solve_eos(
    dataset: &Dataset,
    hyper: &HyperParams,
    sigma2: f64,
    schedule: &AnnealSchedule,
    cfg: &SolverConfig,
) -> Result<EosState> {
    let problem = EosProblem::new(dataset, hyper, sigma2)?;
    let c0 = problem.initial_c();
    solve_eos_from(&problem, c0, schedule, cfg)
}

/// Annealed solve from an explicit starting covariance.
pub fn solve_eos_from(
    problem: &EosProblem,
    c0: DMatrix<f64>,
    schedule: &AnnealSchedule,
    cfg: &SolverConfig,
) -> Result<EosState> {
    cfg.validate()?;
    let mut log = ConvergenceLog::new(problem, cfg);
    let mut c = c0;
    // d1 of the last converged state; the first factor starts from the initial guess
    let mut reached: Option<f64> = None;
    for (index, &factor) in schedule.factors().iter().enumerate() {
        let mut pending = vec![factor];
        let mut splits = 0;
        while let Some(&next) = pending.last() {
            let (solved, flog) = solve_factor(problem, c.clone(), next, cfg)?;
            let converged = flog.converged;
            let history = flog.residual_history.clone();
            debug!(
                "factor {next}: {} Newton, {} GMRES, {} Picard, residual {:e}",
                flog.newton_iterations,
                flog.gmres_iterations,
                flog.picard_steps,
                history.last().copied().unwrap_or(f64::NAN)
            );
            log.factors.push(flog);
            if converged {
                c = solved;
                reached = Some(next);
                pending.pop();
                continue;
            }
            match reached {
                Some(prev) if splits < cfg.max_subdivisions => {
                    splits += 1;
                    let mid = (prev * next).sqrt();
                    debug!("factor {next}: inserting intermediate factor {mid}");
                    pending.push(mid);
                }
                _ => {
                    return Err(Error::NonConvergence {
                        factor_index: index,
                        factor: next,
                        residual: history.last().copied().unwrap_or(f64::NAN),
                        history,
                    })
                }
            }
        }
    }
    problem.state(c, schedule.target(), log)
}

/// Newton iterations for a single annealing factor, warm-started at `c`.
pub fn solve_factor(problem: &EosProblem, c: DMatrix<f64>, factor: f64, cfg: &SolverConfig) -> Result<(DMatrix<f64>, FactorLog)> {
    let d0 = problem.d0();
    let eval = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let (cm, _) = project_pd(&from_upper_triangle(v, d0));
        Ok(upper_triangle(&problem.residual(&cm, factor)?))
    };
    let project = |v: DVector<f64>, log: &mut FactorLog| -> DVector<f64> {
        let (cm, changed) = project_pd(&from_upper_triangle(&v, d0));
        if changed {
            log.pd_projections += 1;
            upper_triangle(&cm)
        } else {
            v
        }
    };

    let mut log = FactorLog {
        factor,
        newton_iterations: 0,
        gmres_iterations: 0,
        picard_steps: 0,
        pd_projections: 0,
        residual_history: Vec::new(),
        converged: false,
    };
    let mut v = project(upper_triangle(&c), &mut log);
    let mut r = eval(&v)?;

    loop {
        let norm = r.amax();
        log.residual_history.push(norm);
        if norm < cfg.tolerance {
            log.converged = true;
            break;
        }
        if log.newton_iterations >= cfg.max_newton {
            break;
        }
        log.newton_iterations += 1;

        let base = r.clone();
        let v_now = v.clone();
        let scale = 1.0 + v_now.norm();
        let rhs = -&base;
        let step = gmres(
            |w| {
                let wn = w.norm();
                if wn == 0.0 {
                    return Ok(DVector::zeros(w.len()));
                }
                let h = cfg.fd_step * scale / wn;
                Ok((eval(&(&v_now + w * h))? - &base) / h)
            },
            &rhs,
            cfg.gmres_tolerance,
            cfg.gmres_restart,
            cfg.gmres_max_iter,
        )?;
        log.gmres_iterations += step.iterations;

        let r_norm = base.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial = &v + &step.x * lambda;
            if let Ok(rt) = eval(&trial) {
                if rt.norm() <= (1.0 - ARMIJO * lambda) * r_norm {
                    accepted = Some(trial);
                    break;
                }
            }
            lambda *= 0.5;
        }

        match accepted {
            Some(trial) => {
                v = project(trial, &mut log);
                r = eval(&v)?;
            }
            None => {
                // stagnation: damped fixed-point iteration C ← C − α F(C)
                debug!("factor {factor}: line search failed, switching to damped fixed point");
                let before = norm;
                for _ in 0..cfg.picard_max_steps {
                    let trial = &v - &r * cfg.picard_damping;
                    if trial.iter().any(|x| !x.is_finite()) {
                        break;
                    }
                    v = project(trial, &mut log);
                    r = eval(&v)?;
                    log.picard_steps += 1;
                    let now = r.amax();
                    if now < cfg.tolerance || !now.is_finite() || now > 1e3 * before {
                        break;
                    }
                }
                if !(r.amax() < before) {
                    log.residual_history.push(r.amax());
                    break;
                }
            }
        }
    }

    if log.pd_projections > RECURRENT_PROJECTIONS {
        warn!("factor {factor}: C lost positive-definiteness {} times", log.pd_projections);
    }
    let (c, _) = project_pd(&from_upper_triangle(&v, d0));
    Ok((c, log))
}
