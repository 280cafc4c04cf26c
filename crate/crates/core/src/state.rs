//! Time integration of the Galerkin state system and its runtime diagnostics.
//!
//! With the diagonal mass 1 + alpha*lambda the system per mode reads
//!   (1 + alpha lambda_j) zeta_j' = u_j - nu lambda_j zeta_j - N_j(zeta),
//! where N is the projected nonlinear coupling. Explicit RK4 is the default;
//! the decay rate nu*lambda/(1+alpha*lambda) is bounded by nu/alpha for
//! alpha > 0, so the system is non-stiff there. CNAB2 covers alpha = 0.

use crate::error::{EstimateViolation, SolveError};
use crate::forms::state_nonlinear;
use crate::spectral::{curl, curl_sigma, SpectralField, Tables};
use crate::timeq::trapezoid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
    Cnab2,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Rk4
    }
}

/// Physical and discretization parameters of a run.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub nu: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub k_trunc: usize,
    pub dt: f64,
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.nu > 0.0) {
            return Err(SolveError::Config(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(SolveError::Config(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(SolveError::Config(format!(
                "T must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.dt > 0.0) || self.dt > self.t_final {
            return Err(SolveError::Config(format!(
                "dt must lie in (0, T], got dt {} with T {}",
                self.dt, self.t_final
            )));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(SolveError::Config(format!(
                "dt {} must divide T {} into whole steps",
                self.dt, self.t_final
            )));
        }
        if self.k_trunc < 1 {
            return Err(SolveError::Config("K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Snapshots on the uniform time grid t_n = n dt.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dt: f64,
    snapshots: Vec<SpectralField>,
}

impl Trajectory {
    pub fn new(dt: f64, snapshots: Vec<SpectralField>) -> Self {
        assert!(!snapshots.is_empty());
        Self { dt, snapshots }
    }

    pub fn zeros(dt: f64, n_steps: usize, k_trunc: usize) -> Self {
        Self {
            dt,
            snapshots: vec![SpectralField::zeros(k_trunc); n_steps + 1],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn snapshot(&self, n: usize) -> &SpectralField {
        &self.snapshots[n]
    }

    pub fn snapshots(&self) -> &[SpectralField] {
        &self.snapshots
    }

    pub fn last(&self) -> &SpectralField {
        self.snapshots.last().unwrap()
    }

    /// Linear interpolation of coefficients at time t (clamped to the grid).
    pub fn interp_into(&self, t: f64, out: &mut [f64]) {
        let n = self.n_steps();
        let s = (t / self.dt).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(1));
        let theta = s - i as f64;
        let a = self.snapshots[i].coeff();
        let b = self.snapshots[i + 1].coeff();
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o = (1.0 - theta) * x + theta * y;
        }
    }

    /// Reversed-time view: snapshot sequence of t -> y(T - t).
    pub fn reversed(&self) -> Trajectory {
        let mut snapshots = self.snapshots.clone();
        snapshots.reverse();
        Trajectory {
            dt: self.dt,
            snapshots,
        }
    }
}

/// Piecewise-constant-in-time control over N_c equal intervals of [0,T].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    t_final: f64,
    values: Vec<SpectralField>,
}

impl ControlTrajectory {
    pub fn new(t_final: f64, values: Vec<SpectralField>) -> Self {
        assert!(!values.is_empty(), "need at least one control interval");
        Self { t_final, values }
    }

    pub fn zeros(t_final: f64, n_intervals: usize, k_trunc: usize) -> Self {
        Self::new(
            t_final,
            vec![SpectralField::zeros(k_trunc); n_intervals.max(1)],
        )
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn interval_len(&self) -> f64 {
        self.t_final / self.values.len() as f64
    }

    pub fn values(&self) -> &[SpectralField] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [SpectralField] {
        &mut self.values
    }

    pub fn value(&self, i: usize) -> &SpectralField {
        &self.values[i]
    }

    /// Right-continuous evaluation at time t.
    pub fn value_at(&self, t: f64) -> &SpectralField {
        let i = ((t / self.interval_len()).floor() as usize).min(self.values.len() - 1);
        &self.values[i]
    }

    /// Interval index owning step n of an n_steps grid; steps never straddle
    /// breakpoints because n_steps is a multiple of the interval count.
    pub fn interval_of_step(&self, n: usize, n_steps: usize) -> usize {
        n * self.values.len() / n_steps
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// L2(Q) inner product of two controls on the same grid.
    pub fn inner(&self, other: &ControlTrajectory) -> f64 {
        let dtc = self.interval_len();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.dot(b) * dtc)
            .sum()
    }

    pub fn norm_l2q(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> ControlTrajectory {
        ControlTrajectory {
            t_final: self.t_final,
            values: self.values.iter().map(|v| v.scaled(s)).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &ControlTrajectory) {
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            v.axpy(a, o);
        }
    }
}

/// Galerkin projection of initial data given as grid samples.
///
/// Exactly reproduces spectral inputs of order <= K and Helmholtz-projects
/// everything else.
pub fn project_initial(
    tables: &Tables,
    v1: &[f64],
    v2: &[f64],
) -> Result<SpectralField, SolveError> {
    if v1.iter().chain(v2).any(|v| !v.is_finite()) {
        return Err(SolveError::Config("initial samples are not finite".into()));
    }
    crate::spectral::analyze_velocity(tables, v1, v2)
        .map_err(|e| SolveError::Config(e.to_string()))
}

/// Right-hand side zeta' = (u - nu lambda zeta - N(zeta)) / (1 + alpha lambda).
pub fn rhs(tables: &Tables, nu: f64, state: &SpectralField, u: &SpectralField) -> SpectralField {
    let mut out = SpectralField::zeros(tables.k_trunc());
    rhs_into(tables, nu, state.coeff(), u.coeff(), out.coeff_mut());
    out
}

fn rhs_into(tables: &Tables, nu: f64, state: &[f64], u: &[f64], out: &mut [f64]) {
    let field = SpectralField::from_coeffs(tables.k_trunc(), state.to_vec());
    let n = state_nonlinear(tables, &field);
    let basis = tables.basis();
    for j in 0..state.len() {
        out[j] = (u[j] - nu * basis.lambda()[j] * state[j] - n.coeff()[j]) / basis.mass_factor()[j];
    }
}

fn all_finite(c: &[f64]) -> bool {
    c.iter().all(|v| v.is_finite())
}

/// Advances the state system from y0 under the control u.
pub fn simulate(
    tables: &Tables,
    cfg: &SolverConfig,
    y0: &SpectralField,
    u: &ControlTrajectory,
) -> Result<Trajectory, SolveError> {
    cfg.validate()?;
    if cfg.k_trunc != tables.k_trunc() {
        return Err(SolveError::Config(
            "config truncation does not match tables".into(),
        ));
    }
    let n_steps = cfg.n_steps();
    if n_steps % u.n_intervals() != 0 {
        return Err(SolveError::Config(format!(
            "control intervals ({}) must divide the number of steps ({})",
            u.n_intervals(),
            n_steps
        )));
    }
    if !y0.is_finite() || !u.is_finite() {
        return Err(SolveError::Config("non-finite input data".into()));
    }
    let nm = tables.n_modes();
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(y0.clone());
    let mut c = y0.coeff().to_vec();
    match cfg.scheme {
        Scheme::Rk4 => {
            let mut k1 = vec![0.0; nm];
            let mut k2 = vec![0.0; nm];
            let mut k3 = vec![0.0; nm];
            let mut k4 = vec![0.0; nm];
            let mut tmp = vec![0.0; nm];
            for n in 0..n_steps {
                let uv = u.value(u.interval_of_step(n, n_steps)).coeff();
                let dt = cfg.dt;
                rhs_into(tables, cfg.nu, &c, uv, &mut k1);
                for j in 0..nm {
                    tmp[j] = c[j] + 0.5 * dt * k1[j];
                }
                rhs_into(tables, cfg.nu, &tmp, uv, &mut k2);
                for j in 0..nm {
                    tmp[j] = c[j] + 0.5 * dt * k2[j];
                }
                rhs_into(tables, cfg.nu, &tmp, uv, &mut k3);
                for j in 0..nm {
                    tmp[j] = c[j] + dt * k3[j];
                }
                rhs_into(tables, cfg.nu, &tmp, uv, &mut k4);
                for j in 0..nm {
                    c[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
                if !all_finite(&c) {
                    return Err(SolveError::BlowUp { step: n });
                }
                snapshots.push(SpectralField::from_coeffs(cfg.k_trunc, c.clone()));
            }
        }
        Scheme::Cnab2 => {
            // Crank-Nicolson on the diffusion, Adams-Bashforth 2 on the rest;
            // first step uses AB1.
            let basis = tables.basis();
            let mut g_prev = vec![0.0; nm];
            let mut g_cur = vec![0.0; nm];
            for n in 0..n_steps {
                let uv = u.value(u.interval_of_step(n, n_steps)).coeff();
                let field = SpectralField::from_coeffs(cfg.k_trunc, c.clone());
                let nl = state_nonlinear(tables, &field);
                for j in 0..nm {
                    g_cur[j] = uv[j] - nl.coeff()[j];
                }
                for j in 0..nm {
                    let mu = basis.mass_factor()[j];
                    let h = cfg.nu * basis.lambda()[j] * cfg.dt / 2.0;
                    let g = if n == 0 {
                        g_cur[j]
                    } else {
                        1.5 * g_cur[j] - 0.5 * g_prev[j]
                    };
                    c[j] = ((mu - h) * c[j] + cfg.dt * g) / (mu + h);
                }
                g_prev.copy_from_slice(&g_cur);
                if !all_finite(&c) {
                    return Err(SolveError::BlowUp { step: n });
                }
                snapshots.push(SpectralField::from_coeffs(cfg.k_trunc, c.clone()));
            }
        }
    }
    Ok(Trajectory::new(cfg.dt, snapshots))
}

/// Modal energy E = (1/2)(||y||^2 + 2 alpha ||Dy||^2) = (1/2) sum (1+al*lam) c^2.
pub fn energy(tables: &Tables, f: &SpectralField) -> f64 {
    0.5 * f
        .coeff()
        .iter()
        .zip(tables.basis().mass_factor())
        .map(|(c, mf)| mf * c * c)
        .sum::<f64>()
}

/// Per-step energy-identity residuals and the quantities behind them.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    /// E at every snapshot.
    pub energy: Vec<f64>,
    /// Residual of dE/dt + 2 nu ||Dy||^2 - (u,y) at each step midpoint.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
}

pub fn energy_ledger(
    tables: &Tables,
    traj: &Trajectory,
    u: &ControlTrajectory,
    cfg: &SolverConfig,
) -> EnergyLedger {
    let n_steps = traj.n_steps();
    let basis = tables.basis();
    let energy: Vec<f64> = traj.snapshots().iter().map(|s| self::energy(tables, s)).collect();
    let mut residuals = Vec::with_capacity(n_steps);
    let mut max_abs = 0.0_f64;
    for n in 0..n_steps {
        let a = traj.snapshot(n).coeff();
        let b = traj.snapshot(n + 1).coeff();
        let uv = u.value(u.interval_of_step(n, n_steps)).coeff();
        let mut diss = 0.0;
        let mut work = 0.0;
        for j in 0..a.len() {
            let mid = 0.5 * (a[j] + b[j]);
            diss += cfg.nu * basis.lambda()[j] * mid * mid; // 2 nu ||Dy||^2
            work += uv[j] * mid;
        }
        let r = (energy[n + 1] - energy[n]) / traj.dt() + diss - work;
        max_abs = max_abs.max(r.abs());
        residuals.push(r);
    }
    EnergyLedger {
        energy,
        residuals,
        max_abs_residual: max_abs,
    }
}

/// L2 residual of the curl-transport identity on the retained modes at each
/// step midpoint.
///
/// Along exact Galerkin trajectories the resolved-mode residual is zero; what
/// remains measures time discretization error and vanishes at scheme order.
pub fn curl_transport_residual(
    tables: &Tables,
    traj: &Trajectory,
    u: &ControlTrajectory,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, SolveError> {
    if !(cfg.alpha > 0.0) {
        return Err(SolveError::Config(
            "curl-transport diagnostic requires alpha > 0".into(),
        ));
    }
    let basis = tables.basis();
    let nm = tables.n_modes();
    let np = tables.grid().n_points();
    let n_steps = traj.n_steps();
    let mut out = Vec::with_capacity(n_steps);
    let mut om = vec![0.0; np];
    let mut g1 = vec![0.0; np];
    let mut g2 = vec![0.0; np];
    let mut v1 = vec![0.0; np];
    let mut v2 = vec![0.0; np];
    let mut transport_hat = vec![0.0; nm];
    for n in 0..n_steps {
        let a = traj.snapshot(n);
        let b = traj.snapshot(n + 1);
        let uv = u.value(u.interval_of_step(n, n_steps)).coeff();
        let mut mid = SpectralField::zeros(cfg.k_trunc);
        for j in 0..nm {
            mid.coeff_mut()[j] = 0.5 * (a.coeff()[j] + b.coeff()[j]);
        }
        let w_mid = curl_sigma(basis, &mid);
        tables.synth_scalar(&w_mid, &mut om);
        tables.synth_scalar_grad(&w_mid, &mut g1, &mut g2);
        tables.synth_values(&mid, &mut v1, &mut v2);
        let transport: Vec<f64> = (0..np).map(|p| v1[p] * g1[p] + v2[p] * g2[p]).collect();
        tables.project_scalar(&transport, &mut transport_hat);
        let curl_y_mid = curl(basis, &mid);
        let nu_over_alpha = cfg.nu / cfg.alpha;
        let mut ss = 0.0;
        for j in 0..nm {
            let wdot = (b.coeff()[j] - a.coeff()[j]) / traj.dt()
                * basis.mass_factor()[j]
                * basis.sqrt_lambda()[j];
            let r = wdot + nu_over_alpha * w_mid.coeff()[j] + transport_hat[j]
                - basis.sqrt_lambda()[j] * uv[j]
                - nu_over_alpha * curl_y_mid.coeff()[j];
            ss += r * r;
        }
        out.push(ss.sqrt());
    }
    Ok(out)
}

/// Both sides of the explicit-constant a priori bounds plus the generic-
/// constant ratios, over a full trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct AprioriReport {
    /// sup(||y||^2 + 2a||Dy||^2 summands) + 2||Dy||_{2,Q}^2
    pub energy_lhs: f64,
    /// 4 (||y0||^2 + 2a||Dy0||^2 + ||u||_{L1 L2}^2)
    pub energy_rhs: f64,
    /// sup ||curl sigma(y)||^2
    pub curl_sigma_lhs: f64,
    /// 2||curl sigma(y0)||^2 + 2 sup||curl y||^2 + 4 ||curl u||_{L1 L2}^2
    pub curl_sigma_rhs: f64,
    /// generic-constant ratio of the H3 recovery bound (recorded only)
    pub h3_ratio: f64,
    /// generic-constant ratio of the time-derivative bound (recorded only)
    pub time_derivative_ratio: f64,
}

pub fn apriori_monitor(
    tables: &Tables,
    traj: &Trajectory,
    u: &ControlTrajectory,
    cfg: &SolverConfig,
) -> Result<AprioriReport, EstimateViolation> {
    let basis = tables.basis();
    let alpha = cfg.alpha;
    let dtc = u.interval_len();

    let mut sup_l2sq = 0.0_f64;
    let mut sup_2a_dsq = 0.0_f64;
    let mut sup_curl_sigma_sq = 0.0_f64;
    let mut sup_curl_sq = 0.0_f64;
    let mut sup_h1 = 0.0_f64;
    let mut sup_h3 = 0.0_f64;
    let mut dnorm2_series = Vec::with_capacity(traj.snapshots().len());
    let mut h2sq_series = Vec::with_capacity(traj.snapshots().len());
    for s in traj.snapshots() {
        let n = crate::spectral::norms(basis, s);
        sup_l2sq = sup_l2sq.max(n.l2 * n.l2);
        sup_2a_dsq = sup_2a_dsq.max(2.0 * alpha * n.dnorm * n.dnorm);
        sup_curl_sigma_sq = sup_curl_sigma_sq.max(n.curl_sigma_norm * n.curl_sigma_norm);
        let curl_sq = 2.0 * n.dnorm * n.dnorm; // ||curl y||^2 = sum lam c^2
        sup_curl_sq = sup_curl_sq.max(curl_sq);
        sup_h1 = sup_h1.max((n.l2 * n.l2 + 2.0 * n.dnorm * n.dnorm).sqrt());
        sup_h3 = sup_h3.max(n.h3proxy);
        dnorm2_series.push(n.dnorm * n.dnorm);
        h2sq_series.push(n.h2proxy * n.h2proxy);
    }

    let n0 = crate::spectral::norms(basis, traj.snapshot(0));
    let u_l1_l2: f64 = u.values().iter().map(|v| dtc * v.norm_l2()).sum();
    let w0 = n0.curl_sigma_norm;
    let curl_u_l1: f64 = u
        .values()
        .iter()
        .map(|v| dtc * crate::spectral::curl(basis, v).norm_l2())
        .sum();

    let dy_2q_sq = trapezoid(&dnorm2_series, traj.dt());
    let energy_lhs = sup_l2sq + sup_2a_dsq + 2.0 * dy_2q_sq;
    let energy_rhs = 4.0
        * (n0.l2 * n0.l2 + 2.0 * alpha * n0.dnorm * n0.dnorm + u_l1_l2 * u_l1_l2);

    let curl_sigma_lhs = sup_curl_sigma_sq;
    let curl_sigma_rhs = 2.0 * w0 * w0 + 2.0 * sup_curl_sq + 4.0 * curl_u_l1 * curl_u_l1;

    let h3_ratio = if alpha > 0.0 {
        alpha * sup_h3 / (sup_h1 + sup_curl_sigma_sq.sqrt()).max(1e-300)
    } else {
        f64::NAN
    };

    // time-derivative quantities from forward differences of snapshots
    let n_steps = traj.n_steps();
    let mut dtl2 = 0.0;
    let mut dtd = 0.0;
    for n in 0..n_steps {
        let a = traj.snapshot(n).coeff();
        let b = traj.snapshot(n + 1).coeff();
        for j in 0..a.len() {
            let d = (b[j] - a[j]) / traj.dt();
            dtl2 += d * d * traj.dt();
            dtd += 0.5 * basis.lambda()[j] * d * d * traj.dt();
        }
    }
    let u_2q_sq: f64 = u.values().iter().map(|v| dtc * v.dot(v)).sum();
    let y_l2h2_sq = trapezoid(&h2sq_series, traj.dt());
    let td_den = u_2q_sq + (cfg.nu * cfg.nu + sup_curl_sigma_sq) * y_l2h2_sq;
    let time_derivative_ratio = (dtl2 + alpha * dtd) / td_den.max(1e-300);

    let slack = 1e-9;
    if energy_lhs > energy_rhs + slack * energy_rhs.max(1.0) {
        return Err(EstimateViolation {
            which: "energy-bound",
            lhs: energy_lhs,
            rhs: energy_rhs,
        });
    }
    if alpha > 0.0 && curl_sigma_lhs > curl_sigma_rhs + slack * curl_sigma_rhs.max(1.0) {
        return Err(EstimateViolation {
            which: "curl-sigma-bound",
            lhs: curl_sigma_lhs,
            rhs: curl_sigma_rhs,
        });
    }
    Ok(AprioriReport {
        energy_lhs,
        energy_rhs,
        curl_sigma_lhs,
        curl_sigma_rhs,
        h3_ratio,
        time_derivative_ratio,
    })
}

/// Max over steps and modes of the discrete weak-form residual tested
/// against each basis mode at the step midpoint.
pub fn weak_form_residual(
    tables: &Tables,
    traj: &Trajectory,
    u: &ControlTrajectory,
    cfg: &SolverConfig,
) -> f64 {
    let basis = tables.basis();
    let nm = tables.n_modes();
    let n_steps = traj.n_steps();
    let mut worst = 0.0_f64;
    for n in 0..n_steps {
        let a = traj.snapshot(n).coeff();
        let b = traj.snapshot(n + 1).coeff();
        let uv = u.value(u.interval_of_step(n, n_steps)).coeff();
        let mut mid = SpectralField::zeros(cfg.k_trunc);
        for j in 0..nm {
            mid.coeff_mut()[j] = 0.5 * (a[j] + b[j]);
        }
        let nl = state_nonlinear(tables, &mid);
        for j in 0..nm {
            let r = basis.mass_factor()[j] * (b[j] - a[j]) / traj.dt()
                + cfg.nu * basis.lambda()[j] * mid.coeff()[j]
                + nl.coeff()[j]
                - uv[j];
            worst = worst.max(r.abs());
        }
    }
    worst
}
