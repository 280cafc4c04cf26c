//! Linearized forward solves, adjoint backward solves (via time reversal),
//! and the duality / differentiability diagnostics built on them.

use crate::error::SolveError;
use crate::forms::{adjoint_nonlinear, linearized_nonlinear};
use crate::spectral::{SpectralField, Tables};
use crate::state::{energy, ControlTrajectory, Scheme, SolverConfig, Trajectory};
use crate::timeq::simpson;
use serde::Serialize;

/// Linearized solve output; z(0) = 0 by construction.
#[derive(Debug, Clone)]
pub struct LinearizedRun {
    pub z: Trajectory,
}

/// Adjoint solve output; p(T) = 0 by construction.
#[derive(Debug, Clone)]
pub struct AdjointRun {
    pub p: Trajectory,
}

/// Right-hand side data for the adjoint equation.
#[derive(Debug, Clone)]
pub enum ForcingSeries {
    /// Field held constant over [0,T].
    Constant(SpectralField),
    /// One field per trajectory snapshot, linearly interpolated in between.
    Snapshots(Vec<SpectralField>),
}

impl ForcingSeries {
    pub fn tracking_deviation(y: &Trajectory, y_d: &Target) -> ForcingSeries {
        let fields = y
            .snapshots()
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let mut dev = s.clone();
                match y_d {
                    Target::Field(f) => dev.axpy(-1.0, f),
                    Target::Trajectory(t) => dev.axpy(-1.0, t.snapshot(n)),
                }
                dev
            })
            .collect();
        ForcingSeries::Snapshots(fields)
    }

    fn interp_into(&self, t: f64, dt: f64, out: &mut [f64]) {
        match self {
            ForcingSeries::Constant(f) => out.copy_from_slice(f.coeff()),
            ForcingSeries::Snapshots(fields) => {
                let n = fields.len() - 1;
                let s = (t / dt).clamp(0.0, n as f64);
                let i = (s.floor() as usize).min(n.saturating_sub(1));
                let theta = s - i as f64;
                let a = fields[i].coeff();
                let b = fields[i + 1].coeff();
                for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
                    *o = (1.0 - theta) * x + theta * y;
                }
            }
        }
    }

    fn at_snapshot(&self, n: usize) -> &SpectralField {
        match self {
            ForcingSeries::Constant(f) => f,
            ForcingSeries::Snapshots(fields) => &fields[n],
        }
    }

    fn reversed(&self) -> ForcingSeries {
        match self {
            ForcingSeries::Constant(f) => ForcingSeries::Constant(f.clone()),
            ForcingSeries::Snapshots(fields) => {
                let mut rev = fields.clone();
                rev.reverse();
                ForcingSeries::Snapshots(rev)
            }
        }
    }
}

/// Tracking target: a fixed field or a full reference trajectory.
#[derive(Debug, Clone)]
pub enum Target {
    Field(SpectralField),
    Trajectory(Trajectory),
}

impl Target {
    pub fn at(&self, n: usize) -> &SpectralField {
        match self {
            Target::Field(f) => f,
            Target::Trajectory(t) => t.snapshot(n),
        }
    }
}

fn check_sensitivity_cfg(cfg: &SolverConfig) -> Result<(), SolveError> {
    cfg.validate()?;
    if cfg.scheme != Scheme::Rk4 {
        return Err(SolveError::Config(
            "sensitivity solves use the RK4 scheme".into(),
        ));
    }
    Ok(())
}

/// Integrates the linearized system around frozen trajectories y1, y2 with
/// source w; frozen coefficients are linearly interpolated at stage times.
pub fn solve_linearized(
    tables: &Tables,
    cfg: &SolverConfig,
    y1: &Trajectory,
    y2: &Trajectory,
    w: &ControlTrajectory,
) -> Result<LinearizedRun, SolveError> {
    check_sensitivity_cfg(cfg)?;
    let n_steps = cfg.n_steps();
    if y1.n_steps() != n_steps || y2.n_steps() != n_steps {
        return Err(SolveError::Config(
            "frozen trajectories do not share the configured time grid".into(),
        ));
    }
    if n_steps % w.n_intervals() != 0 {
        return Err(SolveError::Config(
            "direction intervals must divide the number of steps".into(),
        ));
    }
    let nm = tables.n_modes();
    let basis = tables.basis();
    let same_frozen = std::ptr::eq(y1, y2);
    let mut y1buf = SpectralField::zeros(cfg.k_trunc);
    let mut y2buf = SpectralField::zeros(cfg.k_trunc);

    let rhs = |t: f64, c: &[f64], wv: &[f64], out: &mut [f64], y1buf: &mut SpectralField, y2buf: &mut SpectralField| {
        y1.interp_into(t, y1buf.coeff_mut());
        if same_frozen {
            y2buf.coeff_mut().copy_from_slice(y1buf.coeff());
        } else {
            y2.interp_into(t, y2buf.coeff_mut());
        }
        let zf = SpectralField::from_coeffs(cfg.k_trunc, c.to_vec());
        let l = linearized_nonlinear(tables, &zf, y1buf, y2buf);
        for j in 0..c.len() {
            out[j] =
                (wv[j] - cfg.nu * basis.lambda()[j] * c[j] - l.coeff()[j]) / basis.mass_factor()[j];
        }
    };

    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(SpectralField::zeros(cfg.k_trunc));
    let mut c = vec![0.0; nm];
    let mut k1 = vec![0.0; nm];
    let mut k2 = vec![0.0; nm];
    let mut k3 = vec![0.0; nm];
    let mut k4 = vec![0.0; nm];
    let mut tmp = vec![0.0; nm];
    for n in 0..n_steps {
        let t = n as f64 * cfg.dt;
        let wv = w.value(w.interval_of_step(n, n_steps)).coeff().to_vec();
        rhs(t, &c, &wv, &mut k1, &mut y1buf, &mut y2buf);
        for j in 0..nm {
            tmp[j] = c[j] + 0.5 * cfg.dt * k1[j];
        }
        rhs(t + 0.5 * cfg.dt, &tmp, &wv, &mut k2, &mut y1buf, &mut y2buf);
        for j in 0..nm {
            tmp[j] = c[j] + 0.5 * cfg.dt * k2[j];
        }
        rhs(t + 0.5 * cfg.dt, &tmp, &wv, &mut k3, &mut y1buf, &mut y2buf);
        for j in 0..nm {
            tmp[j] = c[j] + cfg.dt * k3[j];
        }
        rhs(t + cfg.dt, &tmp, &wv, &mut k4, &mut y1buf, &mut y2buf);
        for j in 0..nm {
            c[j] += cfg.dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::BlowUp { step: n });
        }
        snapshots.push(SpectralField::from_coeffs(cfg.k_trunc, c.clone()));
    }
    Ok(LinearizedRun {
        z: Trajectory::new(cfg.dt, snapshots),
    })
}

/// Integrates the adjoint equation backward from p(T) = 0 by solving the
/// time-reversed initial value problem with the forward scheme.
pub fn solve_adjoint(
    tables: &Tables,
    cfg: &SolverConfig,
    y: &Trajectory,
    f: &ForcingSeries,
) -> Result<AdjointRun, SolveError> {
    check_sensitivity_cfg(cfg)?;
    let n_steps = cfg.n_steps();
    if y.n_steps() != n_steps {
        return Err(SolveError::Config(
            "state trajectory does not share the configured time grid".into(),
        ));
    }
    if let ForcingSeries::Snapshots(fields) = f {
        if fields.len() != n_steps + 1 {
            return Err(SolveError::Config(
                "forcing series length must match the trajectory".into(),
            ));
        }
    }
    let y_rev = y.reversed();
    let f_rev = f.reversed();
    let nm = tables.n_modes();
    let basis = tables.basis();
    let mut ybuf = SpectralField::zeros(cfg.k_trunc);
    let mut fbuf = vec![0.0; nm];

    let rhs = |t: f64, c: &[f64], out: &mut [f64], ybuf: &mut SpectralField, fbuf: &mut [f64]| {
        y_rev.interp_into(t, ybuf.coeff_mut());
        f_rev.interp_into(t, cfg.dt, fbuf);
        let pf = SpectralField::from_coeffs(cfg.k_trunc, c.to_vec());
        let a = adjoint_nonlinear(tables, &pf, ybuf);
        for j in 0..c.len() {
            out[j] =
                (fbuf[j] - cfg.nu * basis.lambda()[j] * c[j] - a.coeff()[j]) / basis.mass_factor()[j];
        }
    };

    let mut psi = Vec::with_capacity(n_steps + 1);
    psi.push(SpectralField::zeros(cfg.k_trunc));
    let mut c = vec![0.0; nm];
    let mut k1 = vec![0.0; nm];
    let mut k2 = vec![0.0; nm];
    let mut k3 = vec![0.0; nm];
    let mut k4 = vec![0.0; nm];
    let mut tmp = vec![0.0; nm];
    for n in 0..n_steps {
        let t = n as f64 * cfg.dt;
        rhs(t, &c, &mut k1, &mut ybuf, &mut fbuf);
        for j in 0..nm {
            tmp[j] = c[j] + 0.5 * cfg.dt * k1[j];
        }
        rhs(t + 0.5 * cfg.dt, &tmp, &mut k2, &mut ybuf, &mut fbuf);
        for j in 0..nm {
            tmp[j] = c[j] + 0.5 * cfg.dt * k2[j];
        }
        rhs(t + 0.5 * cfg.dt, &tmp, &mut k3, &mut ybuf, &mut fbuf);
        for j in 0..nm {
            tmp[j] = c[j] + cfg.dt * k3[j];
        }
        rhs(t + cfg.dt, &tmp, &mut k4, &mut ybuf, &mut fbuf);
        for j in 0..nm {
            c[j] += cfg.dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::BlowUp { step: n });
        }
        psi.push(SpectralField::from_coeffs(cfg.k_trunc, c.clone()));
    }
    psi.reverse();
    Ok(AdjointRun {
        p: Trajectory::new(cfg.dt, psi),
    })
}

/// Integral of p over control interval i, one value per mode.
///
/// Simpson panels keep the pairing quadrature at the scheme's order, so the
/// duality gap measures discretization of the coupled terms rather than of
/// the pairing itself.
pub fn interval_integral(p: &Trajectory, i: usize, n_intervals: usize) -> Vec<f64> {
    let n_steps = p.n_steps();
    let per = n_steps / n_intervals;
    let lo = i * per;
    let nm = p.snapshot(0).coeff().len();
    let mut out = vec![0.0; nm];
    let mut series = vec![0.0; per + 1];
    for j in 0..nm {
        for (s, val) in series.iter_mut().enumerate() {
            *val = p.snapshot(lo + s).coeff()[j];
        }
        out[j] = simpson(&series, p.dt());
    }
    out
}

/// Time integral of (u(t), traj(t)) for a piecewise-constant u.
pub fn pair_control_trajectory(u: &ControlTrajectory, traj: &Trajectory) -> f64 {
    let n_intervals = u.n_intervals();
    let mut acc = 0.0;
    for i in 0..n_intervals {
        let seg = interval_integral(traj, i, n_intervals);
        acc += u
            .value(i)
            .coeff()
            .iter()
            .zip(&seg)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    acc
}

/// Time integral of (f(t), traj(t)) for a forcing series.
pub fn pair_forcing_trajectory(f: &ForcingSeries, traj: &Trajectory) -> f64 {
    let series: Vec<f64> = traj
        .snapshots()
        .iter()
        .enumerate()
        .map(|(n, s)| f.at_snapshot(n).dot(s))
        .collect();
    simpson(&series, traj.dt())
}

/// Duality report for int (w,p) dt = int (f,z) dt.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub int_wp: f64,
    pub int_fz: f64,
    pub gap: f64,
}

/// Normalized Green-duality gap with y1 = y2 = y frozen.
pub fn greens_gap(
    tables: &Tables,
    cfg: &SolverConfig,
    w: &ControlTrajectory,
    f: &ForcingSeries,
    y: &Trajectory,
) -> Result<GapReport, SolveError> {
    let z = solve_linearized(tables, cfg, y, y, w)?.z;
    let p = solve_adjoint(tables, cfg, y, f)?.p;
    let int_wp = pair_control_trajectory(w, &p);
    let int_fz = pair_forcing_trajectory(f, &z);
    let denom = int_wp.abs().max(int_fz.abs()).max(1e-300);
    Ok(GapReport {
        int_wp,
        int_fz,
        gap: (int_wp - int_fz).abs() / denom,
    })
}

/// One row of the directional-derivative slope table.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeRow {
    pub rho: f64,
    pub j_perturbed: f64,
    pub remainder: f64,
    pub remainder_over_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeTable {
    pub j_base: f64,
    /// directional derivative from the linearized solve
    pub dj_linearized: f64,
    /// directional derivative from the adjoint route
    pub dj_adjoint: f64,
    pub rows: Vec<SlopeRow>,
}

/// Tracking functional J = 1/2 ||y_u - y_d||^2 + lambda/2 ||u||^2 with the
/// trapezoid rule in time, plus the state trajectory it came from.
pub fn evaluate_j(
    tables: &Tables,
    cfg: &SolverConfig,
    y0: &SpectralField,
    u: &ControlTrajectory,
    y_d: &Target,
    lambda: f64,
) -> Result<(f64, Trajectory), SolveError> {
    let traj = crate::state::simulate(tables, cfg, y0, u)?;
    let series: Vec<f64> = traj
        .snapshots()
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let d = y_d.at(n);
            s.coeff()
                .iter()
                .zip(d.coeff())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    let tracking = 0.5 * crate::timeq::trapezoid(&series, traj.dt());
    let control = 0.5 * lambda * u.inner(u);
    Ok((tracking + control, traj))
}

/// Slope test for the expansion J(u + rho w) = J(u) + rho DJ + o(rho).
#[allow(clippy::too_many_arguments)]
pub fn gateaux_check(
    tables: &Tables,
    cfg: &SolverConfig,
    y0: &SpectralField,
    u: &ControlTrajectory,
    w: &ControlTrajectory,
    rhos: &[f64],
    y_d: &Target,
    lambda: f64,
) -> Result<SlopeTable, SolveError> {
    if rhos.iter().any(|r| !(0.0..1.0).contains(r) || *r == 0.0) {
        return Err(SolveError::Config(
            "perturbation sizes must lie in (0,1)".into(),
        ));
    }
    let (j_base, y_u) = evaluate_j(tables, cfg, y0, u, y_d, lambda)?;
    let z = solve_linearized(tables, cfg, &y_u, &y_u, w)?.z;
    let dev = ForcingSeries::tracking_deviation(&y_u, y_d);
    let dj_linearized = pair_forcing_trajectory(&dev, &z) + lambda * u.inner(w);

    let p = solve_adjoint(tables, cfg, &y_u, &dev)?.p;
    let mut dj_adjoint = lambda * u.inner(w);
    let n_intervals = u.n_intervals();
    for i in 0..n_intervals {
        let seg = interval_integral(&p, i, n_intervals);
        dj_adjoint += w
            .value(i)
            .coeff()
            .iter()
            .zip(&seg)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }

    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let mut u_rho = u.clone();
        u_rho.axpy(rho, w);
        let (j_rho, _) = evaluate_j(tables, cfg, y0, &u_rho, y_d, lambda)?;
        let remainder = (j_rho - j_base - rho * dj_linearized).abs();
        rows.push(SlopeRow {
            rho,
            j_perturbed: j_rho,
            remainder,
            remainder_over_rho: remainder / rho,
        });
    }
    Ok(SlopeTable {
        j_base,
        dj_linearized,
        dj_adjoint,
        rows,
    })
}

/// Per-step residuals of the linearized energy identity
/// d/dt E(z) + 2 nu ||Dz||^2 = (w,z) - (curl sigma(z) x y1, z).
pub fn linearized_energy_residuals(
    tables: &Tables,
    cfg: &SolverConfig,
    run: &LinearizedRun,
    y1: &Trajectory,
    w: &ControlTrajectory,
) -> Vec<f64> {
    let basis = tables.basis();
    let n_steps = run.z.n_steps();
    let mut out = Vec::with_capacity(n_steps);
    let mut y1buf = SpectralField::zeros(run.z.snapshot(0).k_trunc());
    for n in 0..n_steps {
        let a = run.z.snapshot(n);
        let b = run.z.snapshot(n + 1);
        let mut mid = a.clone();
        mid.axpy(1.0, b);
        let mid = mid.scaled(0.5);
        let t_mid = (n as f64 + 0.5) * run.z.dt();
        y1.interp_into(t_mid, y1buf.coeff_mut());
        let wv = w.value(w.interval_of_step(n, n_steps));
        let de = (energy(tables, b) - energy(tables, a)) / run.z.dt();
        let mut diss = 0.0;
        for j in 0..mid.coeff().len() {
            diss += cfg.nu * basis.lambda()[j] * mid.coeff()[j] * mid.coeff()[j];
        }
        let work = wv.dot(&mid);
        // (curl sigma(z) x y1, z): isolate the first linearized summand
        let coupling = linearized_nonlinear(tables, &mid, &y1buf, &SpectralField::zeros(mid.k_trunc()))
            .dot(&mid);
        out.push(de + diss - work + coupling);
    }
    out
}

pub fn linearized_energy_residual(
    tables: &Tables,
    cfg: &SolverConfig,
    run: &LinearizedRun,
    y1: &Trajectory,
    w: &ControlTrajectory,
) -> f64 {
    linearized_energy_residuals(tables, cfg, run, y1, w)
        .into_iter()
        .fold(0.0, |acc, r| acc.max(r.abs()))
}

/// Per-step residuals of the adjoint energy identity in reversed time;
/// the coupling tested against psi collapses to (curl sigma(psi) x ytilde, psi).
pub fn adjoint_energy_residuals(
    tables: &Tables,
    cfg: &SolverConfig,
    run: &AdjointRun,
    y: &Trajectory,
    f: &ForcingSeries,
) -> Vec<f64> {
    let basis = tables.basis();
    let n_steps = run.p.n_steps();
    let psi = run.p.reversed();
    let y_rev = y.reversed();
    let f_rev = f.reversed();
    let nm = psi.snapshot(0).coeff().len();
    let mut out = Vec::with_capacity(n_steps);
    let mut ybuf = SpectralField::zeros(psi.snapshot(0).k_trunc());
    let mut fbuf = vec![0.0; nm];
    for n in 0..n_steps {
        let a = psi.snapshot(n);
        let b = psi.snapshot(n + 1);
        let mut mid = a.clone();
        mid.axpy(1.0, b);
        let mid = mid.scaled(0.5);
        let t_mid = (n as f64 + 0.5) * psi.dt();
        y_rev.interp_into(t_mid, ybuf.coeff_mut());
        f_rev.interp_into(t_mid, psi.dt(), &mut fbuf);
        let de = (energy(tables, b) - energy(tables, a)) / psi.dt();
        let mut diss = 0.0;
        let mut work = 0.0;
        for j in 0..nm {
            diss += cfg.nu * basis.lambda()[j] * mid.coeff()[j] * mid.coeff()[j];
            work += fbuf[j] * mid.coeff()[j];
        }
        let coupling = adjoint_nonlinear(tables, &mid, &ybuf).dot(&mid);
        out.push(de + diss - work + coupling);
    }
    out
}

pub fn adjoint_energy_residual(
    tables: &Tables,
    cfg: &SolverConfig,
    run: &AdjointRun,
    y: &Trajectory,
    f: &ForcingSeries,
) -> f64 {
    adjoint_energy_residuals(tables, cfg, run, y, f)
        .into_iter()
        .fold(0.0, |acc, r| acc.max(r.abs()))
}

/// Ratio ||y_{u2} - y_{u1}||_{Linf L2} / ||u2 - u1||_{2,Q} for one pair.
pub fn lipschitz_ratio(
    tables: &Tables,
    cfg: &SolverConfig,
    y0: &SpectralField,
    u1: &ControlTrajectory,
    u2: &ControlTrajectory,
) -> Result<f64, SolveError> {
    let t1 = crate::state::simulate(tables, cfg, y0, u1)?;
    let t2 = crate::state::simulate(tables, cfg, y0, u2)?;
    let mut sup = 0.0_f64;
    for (a, b) in t1.snapshots().iter().zip(t2.snapshots()) {
        let d: f64 = a
            .coeff()
            .iter()
            .zip(b.coeff())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        sup = sup.max(d.sqrt());
    }
    let mut du = u2.clone();
    du.axpy(-1.0, u1);
    Ok(sup / du.norm_l2q().max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::{random_control, random_field, rng_from_seed};
    use crate::state::simulate;

    fn cfg(dt: f64) -> SolverConfig {
        SolverConfig {
            nu: 0.1,
            alpha: 0.5,
            t_final: 1.0,
            k_trunc: 4,
            dt,
            scheme: Scheme::Rk4,
        }
    }

    #[test]
    fn zero_direction_gives_zero_solution() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-2);
        let mut rng = rng_from_seed(1);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let y = simulate(&tables, &c, &y0, &u).unwrap();
        let w = ControlTrajectory::zeros(1.0, 4, 4);
        let run = solve_linearized(&tables, &c, &y, &y, &w).unwrap();
        for s in run.z.snapshots() {
            assert!(s.coeff().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn linearized_initial_condition_is_zero() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-2);
        let mut rng = rng_from_seed(2);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let y = simulate(&tables, &c, &y0, &u).unwrap();
        let w = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let run = solve_linearized(&tables, &c, &y, &y, &w).unwrap();
        assert!(run.z.snapshot(0).coeff().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adjoint_zero_forcing_and_terminal_condition() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-2);
        let mut rng = rng_from_seed(3);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let y = simulate(&tables, &c, &y0, &u).unwrap();
        let f = ForcingSeries::Constant(SpectralField::zeros(4));
        let run = solve_adjoint(&tables, &c, &y, &f).unwrap();
        for s in run.p.snapshots() {
            assert!(s.coeff().iter().all(|v| *v == 0.0));
        }
        let n = run.p.n_steps();
        assert!(run.p.snapshot(n).coeff().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adjoint_closed_form_for_zero_state() {
        // y = 0, f = g*e_{1,1} constant: p_j(t) = g(1 - e^{-r(T-t)}) / (nu lam)
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-3);
        let y = Trajectory::zeros(c.dt, c.n_steps(), 4);
        let g = 0.8;
        let f = ForcingSeries::Constant(SpectralField::single_mode(4, 1, 1, g));
        let run = solve_adjoint(&tables, &c, &y, &f).unwrap();
        let idx = tables.basis().index_of(1, 1);
        let lam = 2.0;
        let r = c.nu * lam / (1.0 + c.alpha * lam);
        for &n in &[0usize, 250, 777] {
            let t = n as f64 * c.dt;
            let want = g * (1.0 - (-r * (c.t_final - t)).exp()) / (c.nu * lam);
            let got = run.p.snapshot(n).coeff()[idx];
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                "t={t} got {got} want {want}"
            );
        }
    }

    #[test]
    fn linearized_approximates_state_difference() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1.0 / 256.0);
        let mut rng = rng_from_seed(17);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u1 = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let dir = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let err_at = |rho: f64| {
            let mut u2 = u1.clone();
            u2.axpy(rho, &dir);
            let y_a = simulate(&tables, &c, &y0, &u1).unwrap();
            let y_b = simulate(&tables, &c, &y0, &u2).unwrap();
            let mut w = dir.clone();
            w = w.scaled(rho);
            let run = solve_linearized(&tables, &c, &y_a, &y_b, &w).unwrap();
            // z solved with frozen (y_u1, y_u2) reproduces the difference of
            // the two nonlinear solves up to time-discretization error
            let mut worst = 0.0_f64;
            for n in 0..=c.n_steps() {
                let mut diff = y_b.snapshot(n).clone();
                diff.axpy(-1.0, y_a.snapshot(n));
                diff.axpy(-1.0, run.z.snapshot(n));
                worst = worst.max(diff.norm_l2());
            }
            worst / rho
        };
        // the frozen-pair linearized equation is exact in the continuum, so
        // the scaled error does not grow as rho shrinks
        let e1 = err_at(1e-1);
        let e2 = err_at(1e-2);
        assert!(e2 <= e1 * 1.5 + 1e-9, "e1 {e1} e2 {e2}");

        // first-order consistency of the Gateaux derivative
        let y_u = simulate(&tables, &c, &y0, &u1).unwrap();
        let run = solve_linearized(&tables, &c, &y_u, &y_u, &dir).unwrap();
        let fd_err = |rho: f64| {
            let mut u2 = u1.clone();
            u2.axpy(rho, &dir);
            let y_b = simulate(&tables, &c, &y0, &u2).unwrap();
            let mut worst = 0.0_f64;
            for n in 0..=c.n_steps() {
                let mut diff = y_b.snapshot(n).clone();
                diff.axpy(-1.0, y_u.snapshot(n));
                let mut zr = run.z.snapshot(n).scaled(rho);
                zr.axpy(-1.0, &diff);
                worst = worst.max(zr.norm_l2() / rho);
            }
            worst
        };
        let r1 = fd_err(2e-1);
        let r2 = fd_err(1e-1);
        let rate = r1 / r2;
        assert!(rate > 1.6, "expected O(rho) remainder, rate {rate}");
    }

    #[test]
    fn greens_gap_zero_inputs() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-2);
        let mut rng = rng_from_seed(4);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let y = simulate(&tables, &c, &y0, &u).unwrap();
        let w = ControlTrajectory::zeros(1.0, 4, 4);
        let f = ForcingSeries::Constant(SpectralField::zeros(4));
        let rep = greens_gap(&tables, &c, &w, &f, &y).unwrap();
        assert_eq!(rep.int_wp, 0.0);
        assert_eq!(rep.int_fz, 0.0);
    }

    #[test]
    fn greens_gap_zero_state_machine_precision() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-3);
        let mut rng = rng_from_seed(5);
        let w = random_control(tables.basis(), &mut rng, 20, 1.0, 1.0);
        let f = ForcingSeries::Constant(random_field(tables.basis(), &mut rng, 1.0));
        let y = Trajectory::zeros(c.dt, c.n_steps(), 4);
        let rep = greens_gap(&tables, &c, &w, &f, &y).unwrap();
        assert!(rep.gap <= 1e-10, "gap {}", rep.gap);
    }

    #[test]
    fn greens_gap_small_and_first_order() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let mut rng = rng_from_seed(6);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 20, 1.0, 2.0);
        let w = random_control(tables.basis(), &mut rng, 20, 1.0, 1.0);
        let fconst = random_field(tables.basis(), &mut rng, 1.0);
        let gap_at = |dt: f64| {
            let c = cfg(dt);
            let y = simulate(&tables, &c, &y0, &u).unwrap();
            let f = ForcingSeries::Snapshots(
                (0..=c.n_steps())
                    .map(|n| fconst.scaled((1.7 * n as f64 * dt).cos()))
                    .collect(),
            );
            greens_gap(&tables, &c, &w, &f, &y).unwrap().gap
        };
        let g1 = gap_at(1e-3);
        let g2 = gap_at(5e-4);
        assert!(g1 <= 1e-3, "gap {g1}");
        assert!(g1 / g2 >= 1.8, "ratio {}", g1 / g2);
    }

    #[test]
    fn gateaux_trivial_direction() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1e-2);
        let mut rng = rng_from_seed(7);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let w = ControlTrajectory::zeros(1.0, 4, 4);
        let y_d = Target::Field(SpectralField::zeros(4));
        let table = gateaux_check(&tables, &c, &y0, &u, &w, &[1e-1, 1e-2], &y_d, 1e-3).unwrap();
        for row in &table.rows {
            assert!(row.remainder.abs() < 1e-13);
        }
    }

    #[test]
    fn gateaux_slopes_and_cross_route() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1.0 / 512.0);
        let mut rng = rng_from_seed(8);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 8, 1.0, 1.0);
        let w = random_control(tables.basis(), &mut rng, 8, 1.0, 2.0);
        let y_d = Target::Field(SpectralField::zeros(4));
        let table =
            gateaux_check(&tables, &c, &y0, &u, &w, &[1e-1, 1e-2, 1e-3], &y_d, 1e-3).unwrap();
        let s: Vec<f64> = table.rows.iter().map(|r| r.remainder_over_rho).collect();
        assert!(s[0] > s[1] && s[1] > s[2], "slopes {s:?}");
        for pair in s.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((5.0..=20.0).contains(&ratio), "ratio {ratio}");
        }
        let rel = (table.dj_linearized - table.dj_adjoint).abs()
            / table.dj_linearized.abs().max(1e-300);
        assert!(rel <= 1e-3, "cross-route {rel}");
    }

    #[test]
    fn energy_identity_residuals_converge() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let mut rng = rng_from_seed(9);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let w = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let fconst = random_field(tables.basis(), &mut rng, 1.0);
        let res = |dt: f64| {
            let c = cfg(dt);
            let y = simulate(&tables, &c, &y0, &u).unwrap();
            let zrun = solve_linearized(&tables, &c, &y, &y, &w).unwrap();
            let lin = linearized_energy_residual(&tables, &c, &zrun, &y, &w);
            let f = ForcingSeries::Constant(fconst.clone());
            let prun = solve_adjoint(&tables, &c, &y, &f).unwrap();
            let adj = adjoint_energy_residual(&tables, &c, &prun, &y, &f);
            (lin, adj)
        };
        let (l1, a1) = res(1.0 / 128.0);
        let (l2, a2) = res(1.0 / 256.0);
        assert!(l1 / l2 >= 3.0, "linearized ratio {}", l1 / l2);
        assert!(a1 / a2 >= 3.0, "adjoint ratio {}", a1 / a2);
    }

    #[test]
    fn lipschitz_ratios_are_stable() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let c = cfg(1.0 / 128.0);
        let mut rng = rng_from_seed(10);
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let mut ratios = Vec::new();
        for _ in 0..5 {
            let u1 = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
            let u2 = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
            let r = lipschitz_ratio(&tables, &c, &y0, &u1, &u2).unwrap();
            assert!(r.is_finite());
            ratios.push(r);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 10.0, "spread {}", max / min);
    }
}
