//! Divergence-free Stokes eigenbasis on the square (0,pi)^2 with free-slip
//! boundary conditions, plus the transforms and norms built on it.
//!
//! Mode (k,m) has streamfunction (2/pi) sin(k x1) sin(m x2) and velocity
//! e = lambda^{-1/2} (d2 phi, -d1 phi) with lambda = k^2 + m^2. The basis is
//! L2-orthonormal, exactly divergence-free, tangent to the boundary, and
//! satisfies -Laplace(e) = lambda e with zero tangential stress on each side.
//!
//! Quadrature uses the midpoint tensor grid x_i = (i - 1/2) pi / M with the
//! uniform weight pi/M. Every integrand this crate produces is, per direction,
//! an even trigonometric polynomial; the midpoint rule integrates cos(q x)
//! exactly for 0 <= q <= 2M-1, so with M >= 2K+2 all quadratic-nonlinearity
//! integrals against basis modes (degree <= 3K) are exact to roundoff.

use crate::error::SpectralError;
use std::f64::consts::PI;

/// Wavenumber pair of a basis mode, both components in 1..=K.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndex {
    pub k: usize,
    pub m: usize,
}

impl ModeIndex {
    pub fn lambda(&self) -> f64 {
        (self.k * self.k + self.m * self.m) as f64
    }
}

/// Direction flag for `apply_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaDir {
    Forward,
    Inverse,
}

/// Eigenvalues and the diagonal sigma multipliers of the truncated basis.
///
/// Modes are stored k-major: index = (k-1)*K + (m-1).
#[derive(Debug, Clone)]
pub struct BasisTable {
    k_trunc: usize,
    alpha: f64,
    lambda: Vec<f64>,
    mass_factor: Vec<f64>,
    sqrt_lambda: Vec<f64>,
}

impl BasisTable {
    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_modes(&self) -> usize {
        self.k_trunc * self.k_trunc
    }

    pub fn mode(&self, idx: usize) -> ModeIndex {
        ModeIndex {
            k: idx / self.k_trunc + 1,
            m: idx % self.k_trunc + 1,
        }
    }

    pub fn index_of(&self, k: usize, m: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.k_trunc && m >= 1 && m <= self.k_trunc);
        (k - 1) * self.k_trunc + (m - 1)
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sqrt_lambda(&self) -> &[f64] {
        &self.sqrt_lambda
    }

    /// 1 + alpha * lambda per mode, the diagonal of sigma in this basis.
    pub fn mass_factor(&self) -> &[f64] {
        &self.mass_factor
    }
}

/// Builds the eigenvalue/multiplier table for truncation `K` and elastic
/// parameter `alpha`.
pub fn build_basis(k_trunc: usize, alpha: f64) -> Result<BasisTable, SpectralError> {
    if k_trunc < 1 {
        return Err(SpectralError::InvalidTruncation(k_trunc));
    }
    if !(alpha >= 0.0) {
        return Err(SpectralError::NegativeAlpha(alpha));
    }
    let n = k_trunc * k_trunc;
    let mut lambda = Vec::with_capacity(n);
    for k in 1..=k_trunc {
        for m in 1..=k_trunc {
            lambda.push((k * k + m * m) as f64);
        }
    }
    let mass_factor = lambda.iter().map(|l| 1.0 + alpha * l).collect();
    let sqrt_lambda = lambda.iter().map(|l: &f64| l.sqrt()).collect();
    Ok(BasisTable {
        k_trunc,
        alpha,
        lambda,
        mass_factor,
        sqrt_lambda,
    })
}

/// Real coefficients of a velocity field over the eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    k_trunc: usize,
    coeff: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(k_trunc: usize) -> Self {
        Self {
            k_trunc,
            coeff: vec![0.0; k_trunc * k_trunc],
        }
    }

    pub fn from_coeffs(k_trunc: usize, coeff: Vec<f64>) -> Self {
        assert_eq!(coeff.len(), k_trunc * k_trunc);
        Self { k_trunc, coeff }
    }

    /// Field with a single excited mode.
    pub fn single_mode(k_trunc: usize, k: usize, m: usize, c: f64) -> Self {
        let mut f = Self::zeros(k_trunc);
        f.coeff[(k - 1) * k_trunc + (m - 1)] = c;
        f
    }

    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    pub fn coeff(&self) -> &[f64] {
        &self.coeff
    }

    pub fn coeff_mut(&mut self) -> &mut [f64] {
        &mut self.coeff
    }

    pub fn is_finite(&self) -> bool {
        self.coeff.iter().all(|c| c.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            k_trunc: self.k_trunc,
            coeff: self.coeff.iter().map(|c| c * s).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (c, o) in self.coeff.iter_mut().zip(&other.coeff) {
            *c += a * o;
        }
    }

    /// l2 norm of the coefficient vector; equals the L2 norm of the field.
    pub fn norm_l2(&self) -> f64 {
        self.coeff.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeff
            .iter()
            .zip(&other.coeff)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Real coefficients over the normalized streamfunction modes
/// (2/pi) sin(k x1) sin(m x2); holds scalar curls.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSpectral {
    k_trunc: usize,
    coeff: Vec<f64>,
}

impl ScalarSpectral {
    pub fn zeros(k_trunc: usize) -> Self {
        Self {
            k_trunc,
            coeff: vec![0.0; k_trunc * k_trunc],
        }
    }

    pub fn from_coeffs(k_trunc: usize, coeff: Vec<f64>) -> Self {
        assert_eq!(coeff.len(), k_trunc * k_trunc);
        Self { k_trunc, coeff }
    }

    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    pub fn coeff(&self) -> &[f64] {
        &self.coeff
    }

    pub fn coeff_mut(&mut self) -> &mut [f64] {
        &mut self.coeff
    }

    pub fn norm_l2(&self) -> f64 {
        self.coeff.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Midpoint collocation grid on (0,pi) per direction.
#[derive(Debug, Clone)]
pub struct GridSpec {
    m_points: usize,
    nodes: Vec<f64>,
    weight: f64,
}

impl GridSpec {
    /// Grid with `m_points` nodes per direction, validated against the
    /// truncation so quadratic-nonlinearity integrals stay exact.
    pub fn new(m_points: usize, k_trunc: usize) -> Result<Self, SpectralError> {
        let need = 2 * k_trunc + 2;
        if m_points < need {
            return Err(SpectralError::GridTooCoarse {
                need,
                got: m_points,
            });
        }
        let nodes = (1..=m_points)
            .map(|i| (i as f64 - 0.5) * PI / m_points as f64)
            .collect();
        Ok(Self {
            m_points,
            nodes,
            weight: PI / m_points as f64,
        })
    }

    pub fn for_truncation(k_trunc: usize) -> Self {
        Self::new(2 * k_trunc + 2, k_trunc).expect("2K+2 always satisfies the bound")
    }

    pub fn m_points(&self) -> usize {
        self.m_points
    }

    pub fn n_points(&self) -> usize {
        self.m_points * self.m_points
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Uniform quadrature weight per node (1D); the tensor weight is its square.
    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// Basis table, grid, and the per-mode node tables used by the transforms.
///
/// Everything here is immutable after construction and safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct Tables {
    basis: BasisTable,
    grid: GridSpec,
    // mode-major [n_modes * n_points] tables over the tensor grid
    e1: Vec<f64>,
    e2: Vec<f64>,
    d1e1: Vec<f64>,
    d2e1: Vec<f64>,
    d1e2: Vec<f64>,
    d2e2: Vec<f64>,
    phi: Vec<f64>,
    d1phi: Vec<f64>,
    d2phi: Vec<f64>,
}

impl Tables {
    pub fn new(k_trunc: usize, alpha: f64, m_points: Option<usize>) -> Result<Self, SpectralError> {
        let basis = build_basis(k_trunc, alpha)?;
        let grid = match m_points {
            Some(m) => GridSpec::new(m, k_trunc)?,
            None => GridSpec::for_truncation(k_trunc),
        };
        let n = basis.n_modes();
        let np = grid.n_points();
        let mp = grid.m_points();
        let mut e1 = vec![0.0; n * np];
        let mut e2 = vec![0.0; n * np];
        let mut d1e1 = vec![0.0; n * np];
        let mut d2e1 = vec![0.0; n * np];
        let mut d1e2 = vec![0.0; n * np];
        let mut d2e2 = vec![0.0; n * np];
        let mut phi = vec![0.0; n * np];
        let mut d1phi = vec![0.0; n * np];
        let mut d2phi = vec![0.0; n * np];
        let norm = 2.0 / PI;
        for idx in 0..n {
            let ModeIndex { k, m } = basis.mode(idx);
            let lam = basis.lambda[idx];
            let a = norm / lam.sqrt();
            let (kf, mf) = (k as f64, m as f64);
            for (i, &x1) in grid.nodes().iter().enumerate() {
                let (s1, c1) = (kf * x1).sin_cos();
                for (j, &x2) in grid.nodes().iter().enumerate() {
                    let (s2, c2) = (mf * x2).sin_cos();
                    let p = idx * np + i * mp + j;
                    e1[p] = a * mf * s1 * c2;
                    e2[p] = -a * kf * c1 * s2;
                    d1e1[p] = a * kf * mf * c1 * c2;
                    d2e1[p] = -a * mf * mf * s1 * s2;
                    d1e2[p] = a * kf * kf * s1 * s2;
                    d2e2[p] = -a * kf * mf * c1 * c2;
                    phi[p] = norm * s1 * s2;
                    d1phi[p] = norm * kf * c1 * s2;
                    d2phi[p] = norm * mf * s1 * c2;
                }
            }
        }
        Ok(Self {
            basis,
            grid,
            e1,
            e2,
            d1e1,
            d2e1,
            d1e2,
            d2e2,
            phi,
            d1phi,
            d2phi,
        })
    }

    pub fn basis(&self) -> &BasisTable {
        &self.basis
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn k_trunc(&self) -> usize {
        self.basis.k_trunc
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    fn check_field(&self, f: &SpectralField) -> Result<(), SpectralError> {
        if f.k_trunc != self.basis.k_trunc {
            return Err(SpectralError::TruncationMismatch {
                field: f.k_trunc,
                table: self.basis.k_trunc,
            });
        }
        Ok(())
    }

    /// Velocity components on the tensor grid; buffers must hold M*M values.
    pub fn synth_values(&self, f: &SpectralField, v1: &mut [f64], v2: &mut [f64]) {
        let np = self.grid.n_points();
        v1.fill(0.0);
        v2.fill(0.0);
        for (idx, &c) in f.coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let t1 = &self.e1[idx * np..(idx + 1) * np];
            let t2 = &self.e2[idx * np..(idx + 1) * np];
            for p in 0..np {
                v1[p] += c * t1[p];
                v2[p] += c * t2[p];
            }
        }
    }

    /// Scalar streamfunction-basis synthesis on the grid.
    pub fn synth_scalar(&self, s: &ScalarSpectral, out: &mut [f64]) {
        let np = self.grid.n_points();
        out.fill(0.0);
        for (idx, &c) in s.coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let t = &self.phi[idx * np..(idx + 1) * np];
            for p in 0..np {
                out[p] += c * t[p];
            }
        }
    }

    /// Gradient of a streamfunction-basis scalar on the grid.
    pub fn synth_scalar_grad(&self, s: &ScalarSpectral, g1: &mut [f64], g2: &mut [f64]) {
        let np = self.grid.n_points();
        g1.fill(0.0);
        g2.fill(0.0);
        for (idx, &c) in s.coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let t1 = &self.d1phi[idx * np..(idx + 1) * np];
            let t2 = &self.d2phi[idx * np..(idx + 1) * np];
            for p in 0..np {
                g1[p] += c * t1[p];
                g2[p] += c * t2[p];
            }
        }
    }

    /// Quadrature projection of grid samples onto every velocity mode.
    pub fn project_velocity(&self, v1: &[f64], v2: &[f64], out: &mut [f64]) {
        let np = self.grid.n_points();
        let w2 = self.grid.weight() * self.grid.weight();
        for (idx, o) in out.iter_mut().enumerate() {
            let t1 = &self.e1[idx * np..(idx + 1) * np];
            let t2 = &self.e2[idx * np..(idx + 1) * np];
            let mut acc = 0.0;
            for p in 0..np {
                acc += v1[p] * t1[p] + v2[p] * t2[p];
            }
            *o = acc * w2;
        }
    }

    /// Quadrature projection of grid samples onto every streamfunction mode.
    pub fn project_scalar(&self, s: &[f64], out: &mut [f64]) {
        let np = self.grid.n_points();
        let w2 = self.grid.weight() * self.grid.weight();
        for (idx, o) in out.iter_mut().enumerate() {
            let t = &self.phi[idx * np..(idx + 1) * np];
            let mut acc = 0.0;
            for p in 0..np {
                acc += s[p] * t[p];
            }
            *o = acc * w2;
        }
    }

    /// Tensor-grid quadrature of a pointwise product series.
    pub fn quad(&self, integrand: &[f64]) -> f64 {
        let w2 = self.grid.weight() * self.grid.weight();
        integrand.iter().sum::<f64>() * w2
    }
}

/// Pointwise velocity and first-derivative samples over the tensor grid.
#[derive(Debug, Clone)]
pub struct VelocitySamples {
    pub m_points: usize,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub d1v1: Vec<f64>,
    pub d2v1: Vec<f64>,
    pub d1v2: Vec<f64>,
    pub d2v2: Vec<f64>,
}

/// Evaluates a spectral field and its gradient on the collocation grid.
///
/// Exact evaluation of the closed-form trigonometric expressions; no
/// truncation beyond the field's own.
pub fn synthesize_velocity(tables: &Tables, f: &SpectralField) -> VelocitySamples {
    tables.check_field(f).expect("matching truncation");
    let np = tables.grid.n_points();
    let mut s = VelocitySamples {
        m_points: tables.grid.m_points(),
        v1: vec![0.0; np],
        v2: vec![0.0; np],
        d1v1: vec![0.0; np],
        d2v1: vec![0.0; np],
        d1v2: vec![0.0; np],
        d2v2: vec![0.0; np],
    };
    for (idx, &c) in f.coeff.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let r = idx * np..(idx + 1) * np;
        let (e1, e2) = (&tables.e1[r.clone()], &tables.e2[r.clone()]);
        let (d1e1, d2e1) = (&tables.d1e1[r.clone()], &tables.d2e1[r.clone()]);
        let (d1e2, d2e2) = (&tables.d1e2[r.clone()], &tables.d2e2[r]);
        for p in 0..np {
            s.v1[p] += c * e1[p];
            s.v2[p] += c * e2[p];
            s.d1v1[p] += c * d1e1[p];
            s.d2v1[p] += c * d2e1[p];
            s.d1v2[p] += c * d1e2[p];
            s.d2v2[p] += c * d2e2[p];
        }
    }
    s
}

/// Quadrature analysis of grid samples back to basis coefficients.
///
/// Realizes the Helmholtz projection restricted to the truncation: gradients
/// and non-tangent content are annihilated. For samples synthesized from a
/// field of order <= K this inverts `synthesize_velocity` to roundoff.
pub fn analyze_velocity(
    tables: &Tables,
    v1: &[f64],
    v2: &[f64],
) -> Result<SpectralField, SpectralError> {
    let np = tables.grid.n_points();
    if v1.len() != np || v2.len() != np {
        return Err(SpectralError::SampleShape {
            need: np,
            got: v1.len().min(v2.len()),
        });
    }
    let mut out = SpectralField::zeros(tables.k_trunc());
    tables.project_velocity(v1, v2, out.coeff_mut());
    Ok(out)
}

/// Applies sigma(y) = y - alpha * Laplace(y), diagonal in this basis.
pub fn apply_sigma(basis: &BasisTable, f: &SpectralField, dir: SigmaDir) -> SpectralField {
    assert_eq!(basis.k_trunc, f.k_trunc, "truncation mismatch");
    let coeff = f
        .coeff
        .iter()
        .zip(&basis.mass_factor)
        .map(|(c, mf)| match dir {
            SigmaDir::Forward => c * mf,
            SigmaDir::Inverse => c / mf,
        })
        .collect();
    SpectralField {
        k_trunc: f.k_trunc,
        coeff,
    }
}

/// Scalar curl of sigma(f): coefficient (1+alpha*lambda) * sqrt(lambda) on the
/// streamfunction mode.
pub fn curl_sigma(basis: &BasisTable, f: &SpectralField) -> ScalarSpectral {
    assert_eq!(basis.k_trunc, f.k_trunc, "truncation mismatch");
    let coeff = f
        .coeff
        .iter()
        .zip(basis.mass_factor.iter().zip(&basis.sqrt_lambda))
        .map(|(c, (mf, sl))| c * mf * sl)
        .collect();
    ScalarSpectral {
        k_trunc: f.k_trunc,
        coeff,
    }
}

/// Plain scalar curl (vorticity) of f.
pub fn curl(basis: &BasisTable, f: &SpectralField) -> ScalarSpectral {
    assert_eq!(basis.k_trunc, f.k_trunc, "truncation mismatch");
    let coeff = f
        .coeff
        .iter()
        .zip(&basis.sqrt_lambda)
        .map(|(c, sl)| c * sl)
        .collect();
    ScalarSpectral {
        k_trunc: f.k_trunc,
        coeff,
    }
}

/// The norm bundle used by the a priori estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    /// ||y||_2
    pub l2: f64,
    /// ||Dy||_2, from 2||Dy||_2^2 = sum lambda c^2
    pub dnorm: f64,
    /// (sum lambda^2 c^2)^{1/2} = ||A y||_2
    pub h2proxy: f64,
    /// (sum lambda^3 c^2)^{1/2}
    pub h3proxy: f64,
    /// (sum (1+alpha lambda)^2 lambda c^2)^{1/2} = ||curl sigma(y)||_2
    pub curl_sigma_norm: f64,
}

pub fn norms(basis: &BasisTable, f: &SpectralField) -> Norms {
    assert_eq!(basis.k_trunc, f.k_trunc, "truncation mismatch");
    let mut l2 = 0.0;
    let mut d2 = 0.0;
    let mut h2 = 0.0;
    let mut h3 = 0.0;
    let mut cs = 0.0;
    for (idx, &c) in f.coeff.iter().enumerate() {
        let c2 = c * c;
        let lam = basis.lambda[idx];
        let mf = basis.mass_factor[idx];
        l2 += c2;
        d2 += lam * c2;
        h2 += lam * lam * c2;
        h3 += lam * lam * lam * c2;
        cs += mf * mf * lam * c2;
    }
    Norms {
        l2: l2.sqrt(),
        dnorm: (0.5 * d2).sqrt(),
        h2proxy: h2.sqrt(),
        h3proxy: h3.sqrt(),
        curl_sigma_norm: cs.sqrt(),
    }
}

/// Closed-form point evaluation of the velocity (diagnostic path).
pub fn eval_velocity_at(f: &SpectralField, x1: f64, x2: f64) -> (f64, f64) {
    let kt = f.k_trunc;
    let norm = 2.0 / PI;
    let mut v = (0.0, 0.0);
    for (idx, &c) in f.coeff.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let k = (idx / kt + 1) as f64;
        let m = (idx % kt + 1) as f64;
        let a = c * norm / (k * k + m * m).sqrt();
        v.0 += a * m * (k * x1).sin() * (m * x2).cos();
        v.1 -= a * k * (k * x1).cos() * (m * x2).sin();
    }
    v
}

/// Closed-form velocity gradient at a point: (d1v1, d2v1, d1v2, d2v2).
pub fn eval_velocity_grad_at(f: &SpectralField, x1: f64, x2: f64) -> (f64, f64, f64, f64) {
    let kt = f.k_trunc;
    let norm = 2.0 / PI;
    let mut g = (0.0, 0.0, 0.0, 0.0);
    for (idx, &c) in f.coeff.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let k = (idx / kt + 1) as f64;
        let m = (idx % kt + 1) as f64;
        let a = c * norm / (k * k + m * m).sqrt();
        let (s1, c1) = (k * x1).sin_cos();
        let (s2, c2) = (m * x2).sin_cos();
        g.0 += a * k * m * c1 * c2;
        g.1 -= a * m * m * s1 * s2;
        g.2 += a * k * k * s1 * s2;
        g.3 -= a * k * m * c1 * c2;
    }
    g
}

/// Closed-form point evaluation of a streamfunction-basis scalar.
pub fn eval_scalar_at(s: &ScalarSpectral, x1: f64, x2: f64) -> f64 {
    let kt = s.k_trunc;
    let norm = 2.0 / PI;
    let mut v = 0.0;
    for (idx, &c) in s.coeff.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let k = (idx / kt + 1) as f64;
        let m = (idx % kt + 1) as f64;
        v += c * norm * (k * x1).sin() * (m * x2).sin();
    }
    v
}

/// Worst boundary traces of y.n, (n.Dy).tau and curl y over the four sides,
/// sampled at the grid abscissae extended to the boundary.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryTrace {
    pub max_normal: f64,
    pub max_tangential_stress: f64,
    pub max_curl: f64,
}

pub fn boundary_trace(tables: &Tables, f: &SpectralField) -> BoundaryTrace {
    let w = curl(tables.basis(), f);
    let mut tr = BoundaryTrace {
        max_normal: 0.0,
        max_tangential_stress: 0.0,
        max_curl: 0.0,
    };
    let mut visit = |x1: f64, x2: f64, side: u8| {
        let (v1, v2) = eval_velocity_at(f, x1, x2);
        let (_d1v1, d2v1, d1v2, _d2v2) = eval_velocity_grad_at(f, x1, x2);
        // n, tau per side; (n.Dy).tau reduces to D12 on every flat side
        let normal = match side {
            0 | 1 => v1, // x1 = 0 or pi
            _ => v2,     // x2 = 0 or pi
        };
        let d12 = 0.5 * (d2v1 + d1v2);
        tr.max_normal = tr.max_normal.max(normal.abs());
        tr.max_tangential_stress = tr.max_tangential_stress.max(d12.abs());
        tr.max_curl = tr.max_curl.max(eval_scalar_at(&w, x1, x2).abs());
    };
    for &t in tables.grid.nodes() {
        visit(0.0, t, 0);
        visit(PI, t, 1);
        visit(t, 0.0, 2);
        visit(t, PI, 3);
    }
    tr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::{random_field, rng_from_seed};
    use proptest::prelude::*;

    fn quad_inner(tables: &Tables, a: &SpectralField, b: &SpectralField) -> f64 {
        // independent grid-quadrature inner product
        let np = tables.grid().n_points();
        let mut a1 = vec![0.0; np];
        let mut a2 = vec![0.0; np];
        let mut b1 = vec![0.0; np];
        let mut b2 = vec![0.0; np];
        tables.synth_values(a, &mut a1, &mut a2);
        tables.synth_values(b, &mut b1, &mut b2);
        let prod: Vec<f64> = (0..np).map(|p| a1[p] * b1[p] + a2[p] * b2[p]).collect();
        tables.quad(&prod)
    }

    #[test]
    fn build_basis_table_values() {
        let b = build_basis(2, 0.5).unwrap();
        let idx = b.index_of(1, 1);
        assert_eq!(b.lambda()[idx], 2.0);
        assert_eq!(b.mass_factor()[idx], 2.0);

        let b4 = build_basis(4, 0.0).unwrap();
        assert_eq!(b4.n_modes(), 16);
        assert_eq!(b4.lambda()[b4.index_of(2, 3)], 13.0);
    }

    #[test]
    fn build_basis_rejects_bad_inputs() {
        assert!(build_basis(0, 0.5).is_err());
        assert!(build_basis(2, -1.0).is_err());
    }

    #[test]
    fn lambda_strictly_increasing_in_each_index() {
        let b = build_basis(5, 0.1).unwrap();
        for k in 1..=5usize {
            for m in 1..=5usize {
                let lam = b.lambda()[b.index_of(k, m)];
                if k > 1 {
                    assert!(lam > b.lambda()[b.index_of(k - 1, m)]);
                }
                if m > 1 {
                    assert!(lam > b.lambda()[b.index_of(k, m - 1)]);
                }
            }
        }
        // and along the diagonal
        for k in 2..=5usize {
            assert!(b.lambda()[b.index_of(k, k)] > b.lambda()[b.index_of(k - 1, k - 1)]);
        }
    }

    #[test]
    fn first_mode_vanishes_at_center() {
        let f = SpectralField::single_mode(2, 1, 1, 1.0);
        let (v1, v2) = eval_velocity_at(&f, PI / 2.0, PI / 2.0);
        assert!(v1.abs() < 1e-15 && v2.abs() < 1e-15);
    }

    #[test]
    fn synthesize_zero_and_linearity() {
        let tables = Tables::new(3, 0.5, None).unwrap();
        let z = synthesize_velocity(&tables, &SpectralField::zeros(3));
        assert!(z.v1.iter().chain(&z.v2).all(|v| *v == 0.0));

        let mut rng = rng_from_seed(1);
        let f1 = random_field(tables.basis(), &mut rng, 1.0);
        let f2 = random_field(tables.basis(), &mut rng, 1.0);
        let mut comb = f1.scaled(2.5);
        comb.axpy(-1.25, &f2);
        let sa = synthesize_velocity(&tables, &comb);
        let s1 = synthesize_velocity(&tables, &f1);
        let s2 = synthesize_velocity(&tables, &f2);
        for p in 0..tables.grid().n_points() {
            let want = 2.5 * s1.v1[p] - 1.25 * s2.v1[p];
            assert!((sa.v1[p] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let n = tables.n_modes();
        for i in 0..n {
            let mi = tables.basis().mode(i);
            let fi = SpectralField::single_mode(4, mi.k, mi.m, 1.0);
            for j in i..n {
                let mj = tables.basis().mode(j);
                let fj = SpectralField::single_mode(4, mj.k, mj.m, 1.0);
                let g = quad_inner(&tables, &fi, &fj);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12, "gram[{i},{j}] = {g}");
            }
        }
    }

    #[test]
    fn analyze_annihilates_gradient_field() {
        // grad(psi^2) = 2 psi grad(psi) for a single streamfunction mode
        let tables = Tables::new(4, 0.5, None).unwrap();
        let np = tables.grid().n_points();
        let s = ScalarSpectral::from_coeffs(4, {
            let mut c = vec![0.0; 16];
            c[tables.basis().index_of(2, 1)] = 1.0;
            c
        });
        let mut psi = vec![0.0; np];
        let mut g1 = vec![0.0; np];
        let mut g2 = vec![0.0; np];
        tables.synth_scalar(&s, &mut psi);
        tables.synth_scalar_grad(&s, &mut g1, &mut g2);
        let v1: Vec<f64> = (0..np).map(|p| 2.0 * psi[p] * g1[p]).collect();
        let v2: Vec<f64> = (0..np).map(|p| 2.0 * psi[p] * g2[p]).collect();
        let out = analyze_velocity(&tables, &v1, &v2).unwrap();
        assert!(out.coeff().iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn analyze_annihilates_constant_field() {
        let tables = Tables::new(3, 0.2, None).unwrap();
        let np = tables.grid().n_points();
        let v1 = vec![0.7; np];
        let v2 = vec![0.0; np];
        let out = analyze_velocity(&tables, &v1, &v2).unwrap();
        assert!(out.coeff().iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn sigma_on_first_mode() {
        let b = build_basis(2, 0.5).unwrap();
        let f = SpectralField::single_mode(2, 1, 1, 1.0);
        let s = apply_sigma(&b, &f, SigmaDir::Forward);
        assert_eq!(s.coeff()[b.index_of(1, 1)], 2.0);

        let b0 = build_basis(2, 0.0).unwrap();
        let s0 = apply_sigma(&b0, &f, SigmaDir::Forward);
        assert_eq!(s0, f);
    }

    #[test]
    fn curl_sigma_first_mode() {
        let b = build_basis(2, 0.5).unwrap();
        let f = SpectralField::single_mode(2, 1, 1, 1.0);
        let w = curl_sigma(&b, &f);
        let want = 2.0 * 2.0_f64.sqrt();
        assert!((w.coeff()[b.index_of(1, 1)] - want).abs() < 1e-15);

        let b0 = build_basis(2, 0.0).unwrap();
        let w0 = curl_sigma(&b0, &f);
        assert!((w0.coeff()[b0.index_of(1, 1)] - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn norms_of_unit_mode_and_dnorm_oracle() {
        let tables = Tables::new(3, 0.5, None).unwrap();
        let f = SpectralField::single_mode(3, 1, 1, 1.0);
        let n = norms(tables.basis(), &f);
        assert!((n.l2 - 1.0).abs() < 1e-15);
        assert!((n.h2proxy - 2.0).abs() < 1e-15);

        // 2||De||^2 = lambda by grid quadrature of |Dy|^2
        let mut rng = rng_from_seed(9);
        let g = random_field(tables.basis(), &mut rng, 1.0);
        let s = synthesize_velocity(&tables, &g);
        let np = tables.grid().n_points();
        let integrand: Vec<f64> = (0..np)
            .map(|p| {
                let d11 = s.d1v1[p];
                let d22 = s.d2v2[p];
                let d12 = 0.5 * (s.d2v1[p] + s.d1v2[p]);
                d11 * d11 + d22 * d22 + 2.0 * d12 * d12
            })
            .collect();
        let dnorm2 = tables.quad(&integrand);
        let want: f64 = g
            .coeff()
            .iter()
            .zip(tables.basis().lambda())
            .map(|(c, l)| l * c * c)
            .sum();
        assert!((2.0 * dnorm2 - want).abs() < 1e-12 * want.max(1.0));
    }

    #[test]
    fn h2_equivalence_monitor() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let mut rng = rng_from_seed(4);
        let f = random_field(tables.basis(), &mut rng, 1.0);
        let n = norms(tables.basis(), &f);
        assert!(n.h2proxy <= n.l2 + n.h2proxy + 1e-15);
    }

    #[test]
    fn eigenrelation_via_closed_form_laplacian() {
        // -Laplace(e_km) sampled from independently written trig expressions
        let tables = Tables::new(3, 0.0, None).unwrap();
        let np = tables.grid().n_points();
        let mp = tables.grid().m_points();
        for idx in 0..tables.n_modes() {
            let ModeIndex { k, m } = tables.basis().mode(idx);
            let lam = (k * k + m * m) as f64;
            let a = (2.0 / PI) / lam.sqrt();
            let (kf, mf) = (k as f64, m as f64);
            let mut l1 = vec![0.0; np];
            let mut l2 = vec![0.0; np];
            for (i, &x1) in tables.grid().nodes().iter().enumerate() {
                for (j, &x2) in tables.grid().nodes().iter().enumerate() {
                    // e1 = a m sin(k x1) cos(m x2): d11 + d22 = -(k^2+m^2) e1
                    let e1 = a * mf * (kf * x1).sin() * (mf * x2).cos();
                    let e2 = -a * kf * (kf * x1).cos() * (mf * x2).sin();
                    l1[i * mp + j] = -(kf * kf + mf * mf) * e1;
                    l2[i * mp + j] = -(kf * kf + mf * mf) * e2;
                }
            }
            let neg: Vec<f64> = l1.iter().map(|v| -v).collect();
            let neg2: Vec<f64> = l2.iter().map(|v| -v).collect();
            let proj = analyze_velocity(&tables, &neg, &neg2).unwrap();
            for (jdx, &c) in proj.coeff().iter().enumerate() {
                let want = if jdx == idx { lam } else { 0.0 };
                assert!((c - want).abs() < 1e-12, "mode {idx} against {jdx}");
            }
            // Lemma-type specialization: analyze(Laplace e) + lambda e = 0
            let proj_l = analyze_velocity(&tables, &l1, &l2).unwrap();
            for (jdx, &c) in proj_l.coeff().iter().enumerate() {
                let want = if jdx == idx { -lam } else { 0.0 };
                assert!((c - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_conditions_hold() {
        let tables = Tables::new(4, 0.5, None).unwrap();
        let mut rng = rng_from_seed(11);
        let f = random_field(tables.basis(), &mut rng, 1.0);
        let tr = boundary_trace(&tables, &f);
        let scale = f.norm_l2();
        // sin(k*0) vanishes exactly; at x = pi the trace is limited by the
        // representation of pi itself
        assert!(tr.max_normal <= 1e-13 * scale.max(1.0));
        assert!(tr.max_tangential_stress <= 1e-12 * scale.max(1.0));
        assert!(tr.max_curl <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn parseval_against_quadrature() {
        let tables = Tables::new(5, 0.3, None).unwrap();
        let mut rng = rng_from_seed(2);
        let f = random_field(tables.basis(), &mut rng, 1.0);
        let p = f.coeff().iter().map(|c| c * c).sum::<f64>();
        let q = quad_inner(&tables, &f, &f);
        assert!((p - q).abs() <= 1e-14 * p.max(1.0));
    }

    #[test]
    fn grid_rejects_undersized_m() {
        assert!(GridSpec::new(9, 4).is_err());
        assert!(GridSpec::new(10, 4).is_ok());
    }

    proptest! {
        #[test]
        fn analyze_synthesize_roundtrip(seed in 0u64..500) {
            let tables = Tables::new(6, 0.5, None).unwrap();
            let mut rng = rng_from_seed(seed);
            let f = random_field(tables.basis(), &mut rng, 1.0);
            let s = synthesize_velocity(&tables, &f);
            let back = analyze_velocity(&tables, &s.v1, &s.v2).unwrap();
            let scale = f.norm_l2().max(1e-30);
            for (a, b) in back.coeff().iter().zip(f.coeff()) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn sigma_roundtrip(seed in 0u64..500, alpha in 0.0f64..4.0) {
            let basis = build_basis(5, alpha).unwrap();
            let mut rng = rng_from_seed(seed);
            let f = random_field(&basis, &mut rng, 1.0);
            let fwd = apply_sigma(&basis, &f, SigmaDir::Forward);
            let back = apply_sigma(&basis, &fwd, SigmaDir::Inverse);
            for (a, b) in back.coeff().iter().zip(f.coeff()) {
                prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
    }
}
