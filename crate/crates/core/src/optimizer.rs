//! Projected-gradient minimization of the tracking functional over the
//! admissible set, with the variational-inequality residual as the
//! optimality certificate.

use crate::error::OptimError;
use crate::sensitivity::{interval_integral, solve_adjoint, ForcingSeries, Target};
pub use crate::sensitivity::evaluate_j;
use crate::spectral::{SpectralField, Tables};
use crate::state::{ControlTrajectory, SolverConfig};
use serde::Serialize;

/// Bounded closed convex control constraint.
#[derive(Debug, Clone)]
pub enum AdmissibleSet {
    /// L2(Q) ball of the given radius.
    Ball { radius: f64 },
    /// Componentwise bounds on every coefficient of every interval.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl AdmissibleSet {
    pub fn uniform_box(n_intervals: usize, n_modes: usize, lo: f64, hi: f64) -> Self {
        AdmissibleSet::Box {
            lo: vec![lo; n_intervals * n_modes],
            hi: vec![hi; n_intervals * n_modes],
        }
    }

    pub fn validate(&self, n_intervals: usize, n_modes: usize) -> Result<(), OptimError> {
        match self {
            AdmissibleSet::Ball { radius } => {
                if !(*radius > 0.0) {
                    return Err(OptimError::Setup(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
            AdmissibleSet::Box { lo, hi } => {
                let need = n_intervals * n_modes;
                if lo.len() != need || hi.len() != need {
                    return Err(OptimError::Setup(format!(
                        "box bounds need {need} entries, got {} / {}",
                        lo.len(),
                        hi.len()
                    )));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(OptimError::Setup("box has lo > hi".into()));
                }
            }
        }
        Ok(())
    }
}

/// Projection onto the admissible set: radial scaling for the ball,
/// componentwise clamp for the box. Idempotent and nonexpansive.
pub fn project_admissible(u: &ControlTrajectory, set: &AdmissibleSet) -> ControlTrajectory {
    match set {
        AdmissibleSet::Ball { radius } => {
            let norm = u.norm_l2q();
            if norm <= *radius {
                u.clone()
            } else {
                u.scaled(radius / norm)
            }
        }
        AdmissibleSet::Box { lo, hi } => {
            let mut out = u.clone();
            let nm = out.values()[0].coeff().len();
            for (i, field) in out.values_mut().iter_mut().enumerate() {
                for (j, c) in field.coeff_mut().iter_mut().enumerate() {
                    *c = c.clamp(lo[i * nm + j], hi[i * nm + j]);
                }
            }
            out
        }
    }
}

/// min over v in the admissible set of <grad, v - u> in L2(Q).
///
/// Nonpositive by construction; zero exactly at a point satisfying the
/// discrete first-order optimality condition.
pub fn vi_residual(u: &ControlTrajectory, grad: &ControlTrajectory, set: &AdmissibleSet) -> f64 {
    let dtc = u.interval_len();
    match set {
        AdmissibleSet::Ball { radius } => {
            let gnorm = grad.norm_l2q();
            -radius * gnorm - grad.inner(u)
        }
        AdmissibleSet::Box { lo, hi } => {
            let nm = u.values()[0].coeff().len();
            let mut acc = 0.0;
            for i in 0..u.n_intervals() {
                let g = grad.value(i).coeff();
                let uc = u.value(i).coeff();
                for j in 0..nm {
                    let a = g[j] * (lo[i * nm + j] - uc[j]);
                    let b = g[j] * (hi[i * nm + j] - uc[j]);
                    acc += dtc * a.min(b);
                }
            }
            acc
        }
    }
}

/// Adjoint-based L2(Q) gradient representative p + lambda u in the
/// piecewise-constant control space, plus the J it came from.
pub fn gradient(
    tables: &Tables,
    cfg: &SolverConfig,
    y0: &SpectralField,
    u: &ControlTrajectory,
    y_d: &Target,
    lambda: f64,
) -> Result<(ControlTrajectory, f64), OptimError> {
    let (j, traj) = evaluate_j(tables, cfg, y0, u, y_d, lambda)?;
    let g = gradient_from_state(tables, cfg, u, &traj, y_d, lambda)?;
    Ok((g, j))
}

/// Gradient at `u` reusing an already computed state trajectory.
pub fn gradient_from_state(
    tables: &Tables,
    cfg: &SolverConfig,
    u: &ControlTrajectory,
    traj: &crate::state::Trajectory,
    y_d: &Target,
    lambda: f64,
) -> Result<ControlTrajectory, OptimError> {
    let dev = ForcingSeries::tracking_deviation(traj, y_d);
    let p = solve_adjoint(tables, cfg, traj, &dev)?.p;
    let n_intervals = u.n_intervals();
    let dtc = u.interval_len();
    let mut g = u.scaled(lambda);
    for i in 0..n_intervals {
        let seg = interval_integral(&p, i, n_intervals);
        for (c, s) in g.values_mut()[i].coeff_mut().iter_mut().zip(&seg) {
            *c += s / dtc;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OptimStatus {
    Converged,
    IterLimit,
    LineSearchFail,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterRecord {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "gradNorm")]
    pub grad_norm: f64,
    #[serde(rename = "viResidual")]
    pub vi_residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptimReport {
    pub status: OptimStatus,
    pub iterates: Vec<IterRecord>,
    pub final_u: ControlTrajectory,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub tol_vi: f64,
    pub max_shrinks: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            armijo_c1: 1e-4,
            shrink: 0.5,
            tol_vi: 1e-6,
            max_shrinks: 40,
        }
    }
}

/// Projected gradient with Armijo backtracking on the projection arc.
///
/// Trial steps reuse the previous accepted scale and start from a
/// Barzilai-Borwein estimate once two gradients are available; the sufficient
/// decrease test tolerates the small continuous-adjoint gradient
/// inconsistency because it compares J values only.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    tables: &Tables,
    cfg: &SolverConfig,
    y0: &SpectralField,
    y_d: &Target,
    set: &AdmissibleSet,
    lambda: f64,
    n_intervals: usize,
    opts: &OptimOptions,
) -> Result<OptimReport, OptimError> {
    if lambda < 0.0 {
        return Err(OptimError::Setup("lambda must be nonnegative".into()));
    }
    if lambda == 0.0 && !matches!(set, AdmissibleSet::Ball { .. }) {
        return Err(OptimError::Setup(
            "lambda = 0 requires a ball constraint to stay well-posed".into(),
        ));
    }
    set.validate(n_intervals, tables.n_modes())?;
    let cfgn = cfg.n_steps();
    if cfgn % n_intervals != 0 {
        return Err(OptimError::Setup(format!(
            "control intervals ({n_intervals}) must divide the step count ({cfgn})"
        )));
    }

    let mut u = project_admissible(
        &ControlTrajectory::zeros(cfg.t_final, n_intervals, cfg.k_trunc),
        set,
    );
    let (mut j, mut traj) = evaluate_j(tables, cfg, y0, &u, y_d, lambda)?;
    let mut g = gradient_from_state(tables, cfg, &u, &traj, y_d, lambda)?;
    let mut iterates = Vec::new();
    let mut step = 1.0 / g.norm_l2q().max(1e-12);
    let mut prev: Option<(ControlTrajectory, ControlTrajectory)> = None;

    for iter in 0..=opts.max_iter {
        let vi = vi_residual(&u, &g, set);
        iterates.push(IterRecord {
            j,
            grad_norm: g.norm_l2q(),
            vi_residual: vi,
            step: if iter == 0 { 0.0 } else { step },
        });
        if vi >= -opts.tol_vi * (1.0 + j.abs()) {
            return Ok(OptimReport {
                status: OptimStatus::Converged,
                iterates,
                final_u: u,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        if let Some((pu, pg)) = &prev {
            let mut du = u.clone();
            du.axpy(-1.0, pu);
            let mut dg = g.clone();
            dg.axpy(-1.0, pg);
            let denom = du.inner(&dg);
            if denom > 1e-300 {
                step = du.inner(&du) / denom;
            }
        }
        step = step.clamp(1e-12, 1e12);

        let mut accepted = false;
        let mut trial = step;
        for _shrink in 0..opts.max_shrinks {
            let mut cand = u.clone();
            cand.axpy(-trial, &g);
            let cand = project_admissible(&cand, set);
            let mut diff = cand.clone();
            diff.axpy(-1.0, &u);
            let step_sq = diff.inner(&diff);
            if step_sq == 0.0 {
                // projection pinned the iterate; nothing to move
                break;
            }
            let (j_new, traj_new) = evaluate_j(tables, cfg, y0, &cand, y_d, lambda)?;
            if j_new <= j - opts.armijo_c1 / trial * step_sq {
                prev = Some((u.clone(), g.clone()));
                u = cand;
                j = j_new;
                traj = traj_new;
                step = trial;
                accepted = true;
                break;
            }
            trial *= opts.shrink;
        }
        if !accepted {
            return Err(OptimError::LineSearchFail {
                iter,
                shrinks: opts.max_shrinks,
            });
        }
        g = gradient_from_state(tables, cfg, &u, &traj, y_d, lambda)?;
    }
    Ok(OptimReport {
        status: OptimStatus::IterLimit,
        iterates,
        final_u: u,
    })
}
