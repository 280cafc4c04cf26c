//! Seeded verification batteries behind the `verify` command.
//!
//! Every check is deterministic in the seed: repeated runs produce
//! byte-identical reports. The checks run independently and may execute in
//! parallel; `SGFLOW_THREADS` caps the pool size. Results are sorted by check
//! name so aggregation order never shows in the output.

use crate::forms::{
    adjoint_coupling_b_route, adjoint_coupling_modal, adjoint_nonlinear, linearized_nonlinear,
    state_coupling_b_route, state_coupling_pointwise, state_nonlinear, trilinear_b,
};
use crate::optimizer::{
    gradient, optimize, project_admissible, vi_residual, AdmissibleSet, OptimOptions, OptimStatus,
};
use crate::randfield::{random_control, random_field, rng_from_seed};
use crate::sensitivity::{
    evaluate_j, gateaux_check, greens_gap, lipschitz_ratio, solve_adjoint, solve_linearized,
    ForcingSeries, Target,
};
use crate::spectral::{norms, SpectralField, Tables};
use crate::state::{
    apriori_monitor, curl_transport_residual, energy_ledger, simulate, weak_form_residual,
    ControlTrajectory, Scheme, SolverConfig, Trajectory,
};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

/// Direction of the pass condition: measured <= threshold or measured >= threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub threshold: f64,
    pub comparison: Comparison,
}

impl CheckResult {
    fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        CheckResult {
            check: name.to_string(),
            status: if measured <= threshold {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            measured,
            threshold,
            comparison: Comparison::AtMost,
        }
    }

    fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        CheckResult {
            check: name.to_string(),
            status: if measured >= threshold {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            measured,
            threshold,
            comparison: Comparison::AtLeast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Forms,
    State,
    Sensitivity,
    Optimizer,
}

impl Suite {
    pub fn parse(name: &str) -> Option<Suite> {
        match name {
            "all" => Some(Suite::All),
            "forms" => Some(Suite::Forms),
            "state" => Some(Suite::State),
            "sensitivity" => Some(Suite::Sensitivity),
            "optimizer" => Some(Suite::Optimizer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub seed: u64,
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.check.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn base_cfg(k: usize, dt: f64) -> SolverConfig {
    SolverConfig {
        nu: 0.1,
        alpha: 0.5,
        t_final: 1.0,
        k_trunc: k,
        dt,
        scheme: Scheme::Rk4,
    }
}

type CheckFn = Box<dyn Fn(u64) -> Vec<CheckResult> + Send + Sync>;

fn single(f: impl Fn(u64) -> CheckResult + Send + Sync + 'static) -> CheckFn {
    Box::new(move |seed| vec![f(seed)])
}

fn checks_for(suite: Suite) -> Vec<CheckFn> {
    let mut list: Vec<CheckFn> = Vec::new();
    if matches!(suite, Suite::All | Suite::Forms) {
        list.push(single(forms_trilinear_identity));
        list.push(single(forms_adjoint_identity));
        list.push(single(forms_skew_symmetry));
        list.push(single(forms_energy_neutrality));
        list.push(single(forms_duality));
    }
    if matches!(suite, Suite::All | Suite::State) {
        list.push(single(state_single_mode_decay));
        list.push(single(state_energy_ledger_halving));
        list.push(single(state_curl_transport_halving));
        list.push(single(state_curl_transport_single_mode));
        list.push(single(state_apriori_battery));
        list.push(single(state_weak_form_halving));
    }
    if matches!(suite, Suite::All | Suite::Sensitivity) {
        list.push(Box::new(sens_greens_gap_battery));
        list.push(single(sens_greens_gap_zero_state));
        list.push(Box::new(sens_gateaux_battery));
        list.push(single(sens_lipschitz_spread));
        list.push(single(sens_endpoint_conditions));
        list.push(single(sens_linearized_energy_halving));
        list.push(single(sens_adjoint_energy_halving));
    }
    if matches!(suite, Suite::All | Suite::Optimizer) {
        list.push(single(opt_fd_gradient));
        list.push(Box::new(opt_recovery_battery));
        list.push(single(opt_lambda_sweep));
        list.push(single(opt_projection_properties));
        list.push(single(opt_vi_nonpositive));
        list.push(single(opt_scale_invariance));
    }
    list
}

/// Runs the requested suite with the given seed.
pub fn run_suite(suite: Suite, seed: u64) -> VerifyReport {
    let checks = checks_for(suite);
    let threads = std::env::var("SGFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n >= 1);
    let mut results: Vec<CheckResult> = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool");
            pool.install(|| run_parallel(&checks, seed))
        }
        None => run_parallel(&checks, seed),
    };
    results.sort_by(|a, b| a.check.cmp(&b.check));
    let all_passed = results.iter().all(|c| c.status == CheckStatus::Pass);
    VerifyReport {
        suite: suite_name(suite).to_string(),
        seed,
        all_passed,
        checks: results,
    }
}

fn run_parallel(checks: &[CheckFn], seed: u64) -> Vec<CheckResult> {
    use rayon::prelude::*;
    checks.par_iter().flat_map_iter(|c| c(seed)).collect()
}

fn suite_name(suite: Suite) -> &'static str {
    match suite {
        Suite::All => "all",
        Suite::Forms => "forms",
        Suite::State => "state",
        Suite::Sensitivity => "sensitivity",
        Suite::Optimizer => "optimizer",
    }
}

// ---------------------------------------------------------------- forms

fn forms_trilinear_identity(seed: u64) -> CheckResult {
    let tables = Tables::new(6, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x01));
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let y = random_field(tables.basis(), &mut rng, 1.0);
        let z = random_field(tables.basis(), &mut rng, 1.0);
        let phi = random_field(tables.basis(), &mut rng, 1.0);
        let lhs = state_coupling_pointwise(&tables, &y, &z, &phi);
        let rhs = state_coupling_b_route(&tables, &y, &z, &phi);
        let scale = norms(tables.basis(), &y).curl_sigma_norm * z.norm_l2() * phi.norm_l2();
        worst = worst.max((lhs - rhs).abs() / scale.max(1e-30));
    }
    CheckResult::at_most(
        "forms/trilinear-identity-pointwise-vs-convective",
        worst,
        1e-11,
    )
}

fn forms_adjoint_identity(seed: u64) -> CheckResult {
    let tables = Tables::new(6, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x02));
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let y = random_field(tables.basis(), &mut rng, 1.0);
        let z = random_field(tables.basis(), &mut rng, 1.0);
        let modal = adjoint_coupling_modal(&tables, &y, &z);
        let scale = norms(tables.basis(), &y).curl_sigma_norm * z.norm_l2();
        for j in 0..tables.n_modes() {
            let mode = tables.basis().mode(j);
            let ej = SpectralField::single_mode(6, mode.k, mode.m, 1.0);
            let want = adjoint_coupling_b_route(&tables, &y, &z, &ej);
            worst = worst.max((modal[j] - want).abs() / scale.max(1e-30));
        }
    }
    CheckResult::at_most(
        "forms/adjoint-identity-streamfunction-vs-convective",
        worst,
        1e-10,
    )
}

fn forms_skew_symmetry(seed: u64) -> CheckResult {
    let tables = Tables::new(6, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x03));
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let y = random_field(tables.basis(), &mut rng, 1.0);
        let z = random_field(tables.basis(), &mut rng, 1.0);
        let b = trilinear_b(&tables, &y, &z, &z);
        let scale = y.norm_l2() * z.norm_l2() * z.norm_l2();
        worst = worst.max(b.abs() / scale.max(1e-30));
    }
    CheckResult::at_most("forms/skew-symmetry", worst, 1e-12)
}

fn forms_energy_neutrality(seed: u64) -> CheckResult {
    let tables = Tables::new(6, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x04));
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let y = random_field(tables.basis(), &mut rng, 1.0);
        let n = state_nonlinear(&tables, &y);
        let scale = norms(tables.basis(), &y).curl_sigma_norm * y.norm_l2() * y.norm_l2();
        worst = worst.max(n.dot(&y).abs() / scale.max(1e-30));
    }
    CheckResult::at_most("forms/energy-neutrality", worst, 1e-12)
}

fn forms_duality(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x05));
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let y = random_field(tables.basis(), &mut rng, 1.0);
        let z = random_field(tables.basis(), &mut rng, 1.0);
        let p = random_field(tables.basis(), &mut rng, 1.0);
        let lhs = linearized_nonlinear(&tables, &z, &y, &y).dot(&p);
        let rhs = adjoint_nonlinear(&tables, &p, &y).dot(&z);
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    CheckResult::at_most("forms/linearized-adjoint-duality", worst, 1e-10)
}

// ---------------------------------------------------------------- state

fn state_single_mode_decay(_seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1e-3);
    let y0 = SpectralField::single_mode(4, 1, 1, 1.0);
    let u = ControlTrajectory::zeros(1.0, 1, 4);
    let traj = simulate(&tables, &cfg, &y0, &u).unwrap();
    let got = traj.last().coeff()[tables.basis().index_of(1, 1)];
    let want = (-0.1_f64).exp();
    CheckResult::at_most(
        "state/single-mode-decay",
        ((got - want) / want).abs(),
        1e-8,
    )
}

fn seeded_state_run(seed: u64) -> (Tables, SpectralField, ControlTrajectory) {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut y0 = SpectralField::zeros(4);
    y0.coeff_mut()[tables.basis().index_of(1, 1)] = 1.0;
    y0.coeff_mut()[tables.basis().index_of(2, 1)] = 0.5;
    let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
    (tables, y0, u)
}

fn state_energy_ledger_halving(seed: u64) -> CheckResult {
    let (tables, y0, u) = seeded_state_run(seed.wrapping_add(0x10));
    let res = |dt: f64| {
        let cfg = base_cfg(4, dt);
        let traj = simulate(&tables, &cfg, &y0, &u).unwrap();
        energy_ledger(&tables, &traj, &u, &cfg).max_abs_residual
    };
    let ratio = res(1.0 / 128.0) / res(1.0 / 256.0);
    CheckResult::at_most(
        "state/energy-ledger-halving-offset-from-4",
        (ratio - 4.0).abs(),
        0.5,
    )
}

fn state_curl_transport_halving(seed: u64) -> CheckResult {
    let (tables, y0, u) = seeded_state_run(seed.wrapping_add(0x10));
    let res = |dt: f64| {
        let cfg = base_cfg(4, dt);
        let traj = simulate(&tables, &cfg, &y0, &u).unwrap();
        curl_transport_residual(&tables, &traj, &u, &cfg)
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max)
    };
    let ratio = res(1.0 / 256.0) / res(1.0 / 128.0);
    CheckResult::at_most("state/curl-transport-halving", ratio, 0.6)
}

fn state_curl_transport_single_mode(_seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1e-3);
    let y0 = SpectralField::single_mode(4, 1, 1, 1.0);
    let u = ControlTrajectory::zeros(1.0, 1, 4);
    let traj = simulate(&tables, &cfg, &y0, &u).unwrap();
    let max = curl_transport_residual(&tables, &traj, &u, &cfg)
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max);
    CheckResult::at_most("state/curl-transport-single-mode", max, 1e-8)
}

fn state_apriori_battery(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1.0 / 256.0);
    let mut worst = f64::NEG_INFINITY;
    for run in 0..20 {
        let mut rng = rng_from_seed(seed.wrapping_add(0x20 + run));
        let y0 = random_field(tables.basis(), &mut rng, 1.0);
        let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let traj = simulate(&tables, &cfg, &y0, &u).unwrap();
        match apriori_monitor(&tables, &traj, &u, &cfg) {
            Ok(rep) => {
                worst = worst
                    .max((rep.energy_lhs - rep.energy_rhs) / rep.energy_rhs.max(1.0))
                    .max((rep.curl_sigma_lhs - rep.curl_sigma_rhs) / rep.curl_sigma_rhs.max(1.0));
            }
            Err(v) => {
                worst = worst.max((v.lhs - v.rhs) / v.rhs.max(1.0));
            }
        }
    }
    CheckResult::at_most("state/apriori-estimate-battery-margin", worst, 1e-9)
}

fn state_weak_form_halving(seed: u64) -> CheckResult {
    let (tables, y0, u) = seeded_state_run(seed.wrapping_add(0x11));
    let res = |dt: f64| {
        let cfg = base_cfg(4, dt);
        let traj = simulate(&tables, &cfg, &y0, &u).unwrap();
        weak_form_residual(&tables, &traj, &u, &cfg)
    };
    let ratio = res(1.0 / 128.0) / res(1.0 / 256.0);
    CheckResult::at_least("state/weak-form-residual-halving", ratio, 3.0)
}

// ---------------------------------------------------------- sensitivity

fn gap_instance(seed: u64, dt: f64, zero_state: bool) -> f64 {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, dt);
    let mut rng = rng_from_seed(seed);
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let u = random_control(tables.basis(), &mut rng, 20, 1.0, 2.0);
    let w = random_control(tables.basis(), &mut rng, 20, 1.0, 1.0);
    let fconst = random_field(tables.basis(), &mut rng, 1.0);
    let y = if zero_state {
        Trajectory::zeros(cfg.dt, cfg.n_steps(), 4)
    } else {
        simulate(&tables, &cfg, &y0, &u).unwrap()
    };
    let f = if zero_state {
        ForcingSeries::Constant(fconst)
    } else {
        ForcingSeries::Snapshots(
            (0..=cfg.n_steps())
                .map(|n| fconst.scaled((1.7 * n as f64 * dt).cos()))
                .collect(),
        )
    };
    greens_gap(&tables, &cfg, &w, &f, &y).unwrap().gap
}

fn sens_greens_gap_battery(seed: u64) -> Vec<CheckResult> {
    let g1 = gap_instance(seed.wrapping_add(0x30), 1e-3, false);
    let g2 = gap_instance(seed.wrapping_add(0x30), 5e-4, false);
    vec![
        CheckResult::at_most("sensitivity/greens-gap", g1, 1e-3),
        CheckResult::at_least("sensitivity/greens-gap-halving", g1 / g2, 1.8),
    ]
}

fn sens_greens_gap_zero_state(seed: u64) -> CheckResult {
    let gap = gap_instance(seed.wrapping_add(0x31), 1e-3, true);
    CheckResult::at_most("sensitivity/greens-gap-zero-state", gap, 1e-10)
}

fn gateaux_instance(seed: u64) -> crate::sensitivity::SlopeTable {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1.0 / 512.0);
    let mut rng = rng_from_seed(seed);
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let u = random_control(tables.basis(), &mut rng, 8, 1.0, 1.0);
    let w = random_control(tables.basis(), &mut rng, 8, 1.0, 2.0);
    let y_d = Target::Field(SpectralField::zeros(4));
    gateaux_check(
        &tables,
        &cfg,
        &y0,
        &u,
        &w,
        &[1e-1, 1e-2, 1e-3],
        &y_d,
        1e-3,
    )
    .unwrap()
}

fn sens_gateaux_battery(seed: u64) -> Vec<CheckResult> {
    let table = gateaux_instance(seed.wrapping_add(0x32));
    let slopes: Vec<f64> = table.rows.iter().map(|r| r.remainder_over_rho).collect();
    let ratios: Vec<f64> = slopes.windows(2).map(|w| w[0] / w[1]).collect();
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let rel = (table.dj_linearized - table.dj_adjoint).abs()
        / table.dj_linearized.abs().max(1e-300);
    vec![
        CheckResult::at_least("sensitivity/gateaux-slope-ratio-min", min, 5.0),
        CheckResult::at_most("sensitivity/gateaux-slope-ratio-max", max, 20.0),
        CheckResult::at_most("sensitivity/dj-adjoint-vs-linearized", rel, 1e-3),
    ]
}

fn sens_lipschitz_spread(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1.0 / 128.0);
    let mut rng = rng_from_seed(seed.wrapping_add(0x33));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for _ in 0..10 {
        let u1 = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let u2 = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
        let r = lipschitz_ratio(&tables, &cfg, &y0, &u1, &u2).unwrap();
        if !r.is_finite() {
            return CheckResult::at_most("sensitivity/lipschitz-monitor-spread", f64::NAN, 10.0);
        }
        lo = lo.min(r);
        hi = hi.max(r);
    }
    CheckResult::at_most("sensitivity/lipschitz-monitor-spread", hi / lo, 10.0)
}

fn sens_endpoint_conditions(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1.0 / 64.0);
    let mut rng = rng_from_seed(seed.wrapping_add(0x34));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
    let w = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
    let y = simulate(&tables, &cfg, &y0, &u).unwrap();
    let z = solve_linearized(&tables, &cfg, &y, &y, &w).unwrap().z;
    let f = ForcingSeries::Constant(random_field(tables.basis(), &mut rng, 1.0));
    let p = solve_adjoint(&tables, &cfg, &y, &f).unwrap().p;
    let z0: f64 = z.snapshot(0).norm_l2();
    let pt: f64 = p.snapshot(p.n_steps()).norm_l2();
    CheckResult::at_most("sensitivity/initial-terminal-conditions", z0.max(pt), 0.0)
}

fn sens_linearized_energy_halving(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x35));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
    let w = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
    let res = |dt: f64| {
        let cfg = base_cfg(4, dt);
        let y = simulate(&tables, &cfg, &y0, &u).unwrap();
        let run = solve_linearized(&tables, &cfg, &y, &y, &w).unwrap();
        crate::sensitivity::linearized_energy_residual(&tables, &cfg, &run, &y, &w)
    };
    let ratio = res(1.0 / 128.0) / res(1.0 / 256.0);
    CheckResult::at_least("sensitivity/linearized-energy-identity-halving", ratio, 3.0)
}

fn sens_adjoint_energy_halving(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x36));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let u = random_control(tables.basis(), &mut rng, 4, 1.0, 1.0);
    let fconst = random_field(tables.basis(), &mut rng, 1.0);
    let res = |dt: f64| {
        let cfg = base_cfg(4, dt);
        let y = simulate(&tables, &cfg, &y0, &u).unwrap();
        let f = ForcingSeries::Constant(fconst.clone());
        let run = solve_adjoint(&tables, &cfg, &y, &f).unwrap();
        crate::sensitivity::adjoint_energy_residual(&tables, &cfg, &run, &y, &f)
    };
    let ratio = res(1.0 / 128.0) / res(1.0 / 256.0);
    CheckResult::at_least("sensitivity/adjoint-energy-identity-halving", ratio, 3.0)
}

// ------------------------------------------------------------ optimizer

fn opt_fd_gradient(seed: u64) -> CheckResult {
    let tables = Tables::new(4, 0.5, None).unwrap();
    let cfg = base_cfg(4, 1.0 / 1024.0);
    let mut rng = rng_from_seed(seed.wrapping_add(0x40));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let u = random_control(tables.basis(), &mut rng, 16, 1.0, 1.0);
    let y_d = Target::Field(SpectralField::zeros(4));
    let lambda = 1e-3;
    let (g, _) = gradient(&tables, &cfg, &y0, &u, &y_d, lambda).unwrap();
    let rho = 1e-4;
    let mut worst = 0.0_f64;
    for k in 0..5u64 {
        let mut drr = rng_from_seed(seed.wrapping_add(0x41 + k));
        let w = random_control(tables.basis(), &mut drr, 16, 1.0, 1.0);
        let mut up = u.clone();
        up.axpy(rho, &w);
        let mut um = u.clone();
        um.axpy(-rho, &w);
        let (jp, _) = evaluate_j(&tables, &cfg, &y0, &up, &y_d, lambda).unwrap();
        let (jm, _) = evaluate_j(&tables, &cfg, &y0, &um, &y_d, lambda).unwrap();
        let fd = (jp - jm) / (2.0 * rho);
        let an = g.inner(&w);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-300));
    }
    CheckResult::at_most("optimizer/gradient-vs-central-differences", worst, 1e-3)
}

struct RecoveryOutcome {
    report: crate::optimizer::OptimReport,
    tables: Tables,
    cfg: SolverConfig,
    y0: SpectralField,
    y_d: Target,
    lambda: f64,
}

fn recovery_instance(seed: u64) -> RecoveryOutcome {
    let tables = Tables::new(4, 0.5, None).unwrap();
    // fine steps keep the continuous-adjoint gradient mismatch well below
    // the converged gradient magnitude, so the final-iterate FD check stays
    // meaningful
    let cfg = base_cfg(4, 1.0 / 2048.0);
    let mut rng = rng_from_seed(seed.wrapping_add(0x50));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    // a control held constant in time drives the state coherently, so the
    // tracking signal dominates the lambda floor of the objective
    let u_field = random_field(tables.basis(), &mut rng, 1.5);
    let u_star = ControlTrajectory::new(1.0, vec![u_field; 8]);
    let y_d_traj = simulate(&tables, &cfg, &y0, &u_star).unwrap();
    let set = AdmissibleSet::Ball {
        radius: 2.0 * u_star.norm_l2q(),
    };
    let y_d = Target::Trajectory(y_d_traj);
    let report = optimize(
        &tables,
        &cfg,
        &y0,
        &y_d,
        &set,
        1e-3,
        8,
        &OptimOptions::default(),
    )
    .unwrap();
    RecoveryOutcome {
        report,
        tables,
        cfg,
        y0,
        y_d,
        lambda: 1e-3,
    }
}

fn opt_recovery_battery(seed: u64) -> Vec<CheckResult> {
    let out = recovery_instance(seed);
    let j0 = out.report.iterates[0].j;
    let last = out.report.iterates.last().unwrap();
    let normalized_vi = last.vi_residual / (1.0 + last.j.abs());
    let converged = out.report.status == OptimStatus::Converged;
    let vi_measured = if converged {
        normalized_vi
    } else {
        f64::NEG_INFINITY
    };
    let worst_jump = out
        .report
        .iterates
        .windows(2)
        .map(|w| w[1].j - w[0].j)
        .fold(f64::NEG_INFINITY, f64::max);
    vec![
        CheckResult::at_most("optimizer/synthetic-recovery-objective", last.j / j0, 0.1),
        CheckResult::at_least("optimizer/synthetic-recovery-vi-residual", vi_measured, -1e-6),
        CheckResult::at_most("optimizer/synthetic-recovery-monotone", worst_jump, 0.0),
        CheckResult::at_most(
            "optimizer/synthetic-recovery-iterations",
            (out.report.iterates.len() - 1) as f64,
            200.0,
        ),
        opt_recovery_fd_at_final(seed, &out),
    ]
}

fn opt_recovery_fd_at_final(seed: u64, out: &RecoveryOutcome) -> CheckResult {
    let u = &out.report.final_u;
    let (g, _) = gradient(&out.tables, &out.cfg, &out.y0, u, &out.y_d, out.lambda).unwrap();
    let rho = 1e-4;
    let mut worst = 0.0_f64;
    for k in 0..3u64 {
        let mut drr = rng_from_seed(seed.wrapping_add(0x60 + k));
        let w = random_control(out.tables.basis(), &mut drr, u.n_intervals(), 1.0, 1.0);
        let mut up = u.clone();
        up.axpy(rho, &w);
        let mut um = u.clone();
        um.axpy(-rho, &w);
        let (jp, _) = evaluate_j(&out.tables, &out.cfg, &out.y0, &up, &out.y_d, out.lambda).unwrap();
        let (jm, _) = evaluate_j(&out.tables, &out.cfg, &out.y0, &um, &out.y_d, out.lambda).unwrap();
        let fd = (jp - jm) / (2.0 * rho);
        let an = g.inner(&w);
        // at the converged iterate the directional derivative can sit at the
        // optimizer's own gradient resolution; compare against that floor
        let (_, j) = evaluate_j(&out.tables, &out.cfg, &out.y0, u, &out.y_d, out.lambda)
            .map(|(j, t)| (t, j))
            .unwrap();
        let floor = 1e-6 * (1.0 + j.abs()) * w.norm_l2q();
        let denom = an.abs().max(floor);
        worst = worst.max((fd - an).abs() / denom);
    }
    CheckResult::at_most("optimizer/gradient-fd-at-final-iterate", worst, 1e-3)
}

fn opt_lambda_sweep(seed: u64) -> CheckResult {
    let tables = Tables::new(3, 0.5, None).unwrap();
    let cfg = base_cfg(3, 1.0 / 128.0);
    let mut rng = rng_from_seed(seed.wrapping_add(0x70));
    let y0 = random_field(tables.basis(), &mut rng, 1.0);
    let y_d = Target::Field(random_field(tables.basis(), &mut rng, 3.0));
    let set = AdmissibleSet::Ball { radius: 50.0 };
    let mut ctrl_norms = Vec::new();
    for lambda in [10.0, 100.0, 1000.0] {
        let rep = optimize(
            &tables,
            &cfg,
            &y0,
            &y_d,
            &set,
            lambda,
            4,
            &OptimOptions::default(),
        )
        .unwrap();
        ctrl_norms.push(rep.final_u.norm_l2q());
    }
    let worst_ratio = ctrl_norms
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    CheckResult::at_most("optimizer/lambda-sweep-shrinks-control", worst_ratio, 1.0)
}

fn opt_projection_properties(seed: u64) -> CheckResult {
    let tables = Tables::new(3, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x71));
    let mut worst = 0.0_f64;
    for set in [
        AdmissibleSet::Ball { radius: 0.4 },
        AdmissibleSet::uniform_box(3, tables.n_modes(), -0.05, 0.05),
    ] {
        for _ in 0..25 {
            let a = random_control(tables.basis(), &mut rng, 3, 1.0, 2.0);
            let b = random_control(tables.basis(), &mut rng, 3, 1.0, 2.0);
            let pa = project_admissible(&a, &set);
            let ppa = project_admissible(&pa, &set);
            let mut idem = pa.clone();
            idem.axpy(-1.0, &ppa);
            worst = worst.max(idem.norm_l2q());
            let pb = project_admissible(&b, &set);
            let mut dp = pa.clone();
            dp.axpy(-1.0, &pb);
            let mut dab = a.clone();
            dab.axpy(-1.0, &b);
            worst = worst.max(dp.norm_l2q() - dab.norm_l2q());
        }
    }
    CheckResult::at_most("optimizer/projection-idempotent-nonexpansive", worst, 1e-12)
}

fn opt_vi_nonpositive(seed: u64) -> CheckResult {
    let tables = Tables::new(3, 0.5, None).unwrap();
    let mut rng = rng_from_seed(seed.wrapping_add(0x72));
    let mut worst = f64::NEG_INFINITY;
    for set in [
        AdmissibleSet::Ball { radius: 1.0 },
        AdmissibleSet::uniform_box(3, tables.n_modes(), -0.4, 0.4),
    ] {
        for _ in 0..50 {
            let u = project_admissible(&random_control(tables.basis(), &mut rng, 3, 1.0, 1.0), &set);
            let g = random_control(tables.basis(), &mut rng, 3, 1.0, 1.0);
            worst = worst.max(vi_residual(&u, &g, &set));
        }
    }
    CheckResult::at_most("optimizer/vi-residual-nonpositive", worst, 1e-15)
}

fn opt_scale_invariance(seed: u64) -> CheckResult {
    // single-mode data keep every iterate on one mode, where the dynamics are
    // exactly linear; doubling all data must exactly double the minimizer
    let tables = Tables::new(2, 0.5, None).unwrap();
    let cfg = base_cfg(2, 1.0 / 64.0);
    let mut rng = rng_from_seed(seed.wrapping_add(0x73));
    let y0 = SpectralField::single_mode(2, 1, 1, 0.6);
    let mut u_star = ControlTrajectory::zeros(1.0, 4, 2);
    for v in u_star.values_mut() {
        v.coeff_mut()[tables.basis().index_of(1, 1)] = rng.random_range(-1.0..=1.0);
    }
    // fixed iteration budget: the update rule is exactly covariant under
    // doubling of the data, so both paths track each other step for step
    let opts = OptimOptions {
        tol_vi: 0.0,
        max_iter: 25,
        ..OptimOptions::default()
    };
    let run = |scale: f64| {
        let y0s = y0.scaled(scale);
        let us = u_star.scaled(scale);
        let y_d = simulate(&tables, &cfg, &y0s, &us).unwrap();
        let set = AdmissibleSet::Ball {
            radius: 2.0 * us.norm_l2q(),
        };
        optimize(
            &tables,
            &cfg,
            &y0s,
            &Target::Trajectory(y_d),
            &set,
            1e-3,
            4,
            &opts,
        )
        .unwrap()
        .final_u
    };
    let u1 = run(1.0);
    let u2 = run(2.0);
    let mut diff = u2.clone();
    diff.axpy(-2.0, &u1);
    let rel = diff.norm_l2q() / u2.norm_l2q().max(1e-300);
    CheckResult::at_most("optimizer/ball-argmin-scale-invariance", rel, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!(Suite::parse("all"), Some(Suite::All));
        assert_eq!(Suite::parse("forms"), Some(Suite::Forms));
        assert_eq!(Suite::parse("nope"), None);
    }

    #[test]
    fn forms_suite_passes_and_is_deterministic() {
        let a = run_suite(Suite::Forms, 42);
        assert!(a.all_passed, "failed: {:?}", a.failed_checks());
        let b = run_suite(Suite::Forms, 42);
        assert_eq!(a.to_json(), b.to_json());
    }
}
