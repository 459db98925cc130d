//! Conservative finite differences for the controlled Fokker–Planck equation
//! `ρ_t = νρ_xx + (ρ(W + uα)_x)_x` on `[0, 1]` with zero-flux boundaries.
//!
//! Nodes are `x_i = ih`, `h = 1/J`. Face fluxes use an arithmetic mean of
//! `ρ` for the drift; the boundary faces carry zero flux and the boundary
//! nodes own half cells, so the trapezoid mass `Σ w_i ρ_i` is conserved
//! exactly by both the drift–diffusion operator `A_h` and the control
//! operator `Bα_h ρ = (ρα_x)_x`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, AuditReport, BoundSeries};
use crate::error::{IssError, Result};
use crate::signals::Signal;

/// Smallest admissible `J`.
pub const MIN_CELLS: usize = 16;
/// Iteration cap of the eigen-solver.
pub const EIGEN_MAX_ITER: usize = 10_000;

/// Tridiagonal matrix; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    fn zeros(n: usize) -> Self {
        Tridiag { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `a·self + b·other + c·I`.
    fn combine(&self, a: f64, other: &Tridiag, b: f64, c: f64) -> Tridiag {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        let mut t = Tridiag {
            lower: mix(&self.lower, &other.lower),
            diag: mix(&self.diag, &other.diag),
            upper: mix(&self.upper, &other.upper),
        };
        t.diag.iter_mut().for_each(|d| *d += c);
        t
    }

    /// Entry `(i, j)` (zero off the band).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[i]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            0.0
        }
    }

    /// Gaussian elimination with partial pivoting (one extra superdiagonal
    /// of fill-in).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(IssError::contract("tridiagonal solve: dimension mismatch"));
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        // Row i holds (d, u1, u2) at columns (i, i+1, i+2).
        let mut d = self.diag.clone();
        let mut u1 = self.upper.clone();
        let mut u2 = vec![0.0; n];
        let mut l = self.lower.clone();
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if l[i + 1].abs() > d[i].abs() {
                // Swap rows i and i+1.
                std::mem::swap(&mut d[i], &mut l[i + 1]);
                let (ui, di1) = (u1[i], d[i + 1]);
                u1[i] = di1;
                d[i + 1] = ui;
                if i + 2 < n {
                    u2[i] = u1[i + 1];
                    u1[i + 1] = 0.0;
                }
                b.swap(i, i + 1);
            }
            if d[i] == 0.0 || !d[i].is_finite() || d[i].abs() <= 1e-300 * scale.max(1.0) {
                return Err(IssError::numeric("singular tridiagonal system (reduce dt)"));
            }
            let f = l[i + 1] / d[i];
            d[i + 1] -= f * u1[i];
            if i + 2 < n {
                u1[i + 1] -= f * u2[i];
            }
            b[i + 1] -= f * b[i];
        }
        if n > 0 && (d[n - 1] == 0.0 || !d[n - 1].is_finite()) {
            return Err(IssError::numeric("singular tridiagonal system (reduce dt)"));
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * x[i + 2];
            }
            x[i] = v / d[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IssError::numeric("tridiagonal solve produced non-finite values"));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FPModel {
    pub cells: usize,
    pub nu: f64,
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub a_h: Tridiag,
    pub b_alpha_h: Tridiag,
    /// Exact kernel vector of `A_h`, normalized to unit trapezoid mass.
    pub rho_inf: Vec<f64>,
}

fn flux_operator(nu: f64, pot: &[f64], h: f64) -> Tridiag {
    let n = pot.len();
    let mut a = Tridiag::zeros(n);
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    // F_{i+1/2} = c_plus ρ_{i+1} − c_minus ρ_i.
    for i in 0..n - 1 {
        let dw = pot[i + 1] - pot[i];
        let c_plus = (nu + 0.5 * dw) / h;
        let c_minus = (nu - 0.5 * dw) / h;
        let (wi, wj) = (weight(i), weight(i + 1));
        // Row i gains +F, row i+1 gains −F.
        a.upper[i] += c_plus / wi;
        a.diag[i] -= c_minus / wi;
        a.diag[i + 1] -= c_plus / wj;
        a.lower[i + 1] += c_minus / wj;
    }
    a
}

/// Second-order one-sided slope at both ends, and the tolerance
/// `1e-10 + h² max|D²α|` that a smooth profile with zero end slope meets.
fn boundary_slopes(alpha: &[f64], h: f64) -> (f64, f64, f64) {
    let n = alpha.len();
    let left = (-3.0 * alpha[0] + 4.0 * alpha[1] - alpha[2]) / (2.0 * h);
    let right = (3.0 * alpha[n - 1] - 4.0 * alpha[n - 2] + alpha[n - 3]) / (2.0 * h);
    let d2 = (1..n - 1)
        .map(|i| ((alpha[i + 1] - 2.0 * alpha[i] + alpha[i - 1]) / (h * h)).abs())
        .fold(0.0, f64::max);
    (left, right, 1e-10 + h * h * d2)
}

/// Assembles `A_h` and `Bα_h` from node samples of `W` and `α`.
pub fn build_model(nu: f64, w: &[f64], alpha: &[f64], cells: usize) -> Result<FPModel> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(IssError::domain("nu must be > 0"));
    }
    if cells < MIN_CELLS {
        return Err(IssError::domain(format!("J must be >= {MIN_CELLS}")));
    }
    if w.len() != cells + 1 || alpha.len() != cells + 1 {
        return Err(IssError::domain("W and alpha need J + 1 node samples"));
    }
    if w.iter().chain(alpha).any(|v| !v.is_finite()) {
        return Err(IssError::domain("W and alpha samples must be finite"));
    }
    let h = 1.0 / cells as f64;
    let (left, right, tol) = boundary_slopes(alpha, h);
    if left.abs() > tol || right.abs() > tol {
        return Err(IssError::contract(format!(
            "alpha must have zero normal slope at both ends (got {left:.3e}, {right:.3e})"
        )));
    }
    // Zero face flux gives ρ_{i+1}(ν + ΔW/2) = ρ_i(ν − ΔW/2).
    let mut rho = vec![1.0; cells + 1];
    for i in 0..cells {
        let dw = w[i + 1] - w[i];
        if 0.5 * dw.abs() >= nu {
            return Err(IssError::domain(
                "cell Peclet number |ΔW|/(2ν) must be < 1; refine the grid",
            ));
        }
        rho[i + 1] = rho[i] * (nu - 0.5 * dw) / (nu + 0.5 * dw);
    }
    let mass = trapezoid(&rho, h);
    rho.iter_mut().for_each(|v| *v /= mass);
    Ok(FPModel {
        cells,
        nu,
        w: w.to_vec(),
        alpha: alpha.to_vec(),
        a_h: flux_operator(nu, w, h),
        b_alpha_h: flux_operator(0.0, alpha, h),
        rho_inf: rho,
    })
}

/// Samples `f` at the `J + 1` nodes.
pub fn sample_nodes(cells: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..=cells).map(|i| f(i as f64 / cells as f64)).collect()
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

impl FPModel {
    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        sample_nodes(self.cells, |x| x)
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        (0..=self.cells)
            .map(|i| if i == 0 || i == self.cells { 0.5 * h } else { h })
            .collect()
    }

    pub fn integrate(&self, v: &[f64]) -> f64 {
        trapezoid(v, self.h())
    }

    /// Trapezoid-weighted `L²` norm.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.weights().iter().zip(v).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
    }

    /// `L²(1/ρ∞)` norm, in which `A_h` is self-adjoint.
    pub fn energy_norm(&self, v: &[f64]) -> f64 {
        self.weights()
            .iter()
            .zip(v.iter().zip(&self.rho_inf))
            .map(|(w, (x, r))| w * x * x / r)
            .sum::<f64>()
            .sqrt()
    }

    /// `max_j |Σ_i w_i M_ij| / max|M|` for `A_h` and `Bα_h`.
    pub fn column_sum_defect(&self) -> (f64, f64) {
        let w = self.weights();
        let defect = |m: &Tridiag| {
            let n = m.len();
            let scale = m.diag.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(
                m.upper.iter().chain(&m.lower).fold(0.0f64, |a, v| a.max(v.abs())),
            );
            if scale == 0.0 {
                return 0.0;
            }
            (0..n)
                .map(|j| {
                    let lo = j.saturating_sub(1);
                    let hi = (j + 1).min(n - 1);
                    (lo..=hi).map(|i| w[i] * m.get(i, j)).sum::<f64>().abs()
                })
                .fold(0.0, f64::max)
                / scale
        };
        (defect(&self.a_h), defect(&self.b_alpha_h))
    }

    pub fn density(&self, values: Vec<f64>) -> Result<DensityField> {
        DensityField::new(values, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub mass: f64,
}

impl DensityField {
    pub fn new(values: Vec<f64>, m: &FPModel) -> Result<Self> {
        if values.len() != m.cells + 1 {
            return Err(IssError::domain("density needs J + 1 node values"));
        }
        let mass = m.integrate(&values);
        if !mass.is_finite() {
            return Err(IssError::numeric("density mass is not finite"));
        }
        Ok(DensityField { values, mass })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Signed transients are allowed but flagged through this.
    pub fn has_negative(&self) -> bool {
        self.min_value() < 0.0
    }
}

/// `ρ∞ ∝ e^{−W/ν}` sampled at the nodes with its `A_h` residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDensity {
    pub density: DensityField,
    /// `‖A_h ρ∞‖` (trapezoid `L²`).
    pub residual: f64,
    /// `residual / h²`.
    pub residual_constant: f64,
}

pub fn stationary_density(m: &FPModel) -> Result<StationaryDensity> {
    let mut v: Vec<f64> = m.w.iter().map(|w| (-w / m.nu).exp()).collect();
    let mass = m.integrate(&v);
    v.iter_mut().for_each(|x| *x /= mass);
    let residual = kernel_residual(m, &v);
    let h = m.h();
    Ok(StationaryDensity {
        density: m.density(v)?,
        residual,
        residual_constant: residual / (h * h),
    })
}

/// The exact discrete kernel vector of `A_h` with unit mass.
pub fn discrete_stationary_density(m: &FPModel) -> DensityField {
    DensityField { values: m.rho_inf.clone(), mass: m.integrate(&m.rho_inf) }
}

/// `‖A_h ρ‖` in the trapezoid `L²` norm.
pub fn kernel_residual(m: &FPModel, rho: &[f64]) -> f64 {
    m.l2_norm(&m.a_h.apply(rho))
}

/// One Crank–Nicolson step of `ρ' = (A_h + u Bα_h) ρ`.
pub fn step(m: &FPModel, rho: &DensityField, u: f64, dt: f64) -> Result<DensityField> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(IssError::domain("dt must be > 0"));
    }
    if !u.is_finite() {
        return Err(IssError::domain("control value must be finite"));
    }
    let explicit = m.a_h.combine(0.5 * dt, &m.b_alpha_h, 0.5 * dt * u, 1.0);
    let implicit = m.a_h.combine(-0.5 * dt, &m.b_alpha_h, -0.5 * dt * u, 1.0);
    let rhs = explicit.apply(&rho.values);
    let next = implicit.solve(&rhs)?;
    m.density(next)
}

/// `y − (∫y) ρ∞` with the discrete `ρ∞`.
pub fn project_p(m: &FPModel, y: &DensityField) -> DensityField {
    let mass = y.mass;
    let values: Vec<f64> = y.values.iter().zip(&m.rho_inf).map(|(v, r)| v - mass * r).collect();
    let mass = m.integrate(&values);
    DensityField { values, mass }
}

/// `‖Ã − Ãᵀ‖_F / ‖Ã‖_F` for `Ã = M A_h M⁻¹`,
/// `M = diag(√w_i e^{W_i/(2ν)})` (`w` the trapezoid weights).
pub fn symmetry_defect(m: &FPModel) -> f64 {
    let w = m.weights();
    let d: Vec<f64> = w.iter().zip(&m.w).map(|(wi, wv)| wi.sqrt() * (wv / (2.0 * m.nu)).exp()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    let a = &m.a_h;
    for i in 0..a.len() {
        den += a.diag[i] * a.diag[i];
        if i + 1 < a.len() {
            let up = d[i] * a.upper[i] / d[i + 1];
            let lo = d[i + 1] * a.lower[i + 1] / d[i];
            den += up * up + lo * lo;
            num += 2.0 * (up - lo) * (up - lo);
        }
    }
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    /// `|λ₁|`.
    pub omega: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    /// `|λ₀| / ‖Ã‖_∞`.
    pub lambda0_scaled: f64,
    /// Angle (radians) between the computed kernel vector and the samples
    /// of `√w e^{−W/(2ν)}`.
    pub e0_check: f64,
    /// See [`symmetry_defect`].
    pub symmetry_defect: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    let c = dot(a, b) / (na * nb);
    let s = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x / na - c.signum() * y / nb).powi(2))
        .sum::<f64>()
        .sqrt();
    // Chord length s = 2 sin(θ/2) between the sign-aligned unit vectors.
    2.0 * (0.5 * s).min(1.0).asin()
}

/// Inverse iteration with shift `σ`, orthogonalized against `deflate`.
fn inverse_iteration(s: &Tridiag, sigma: f64, deflate: Option<&[f64]>) -> Result<(f64, Vec<f64>, usize)> {
    let n = s.len();
    let shifted = s.combine(1.0, s, 0.0, -sigma);
    let project = |v: &mut Vec<f64>| {
        if let Some(q) = deflate {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    };
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin() * 0.5).collect();
    project(&mut v);
    normalize(&mut v);
    let mut lambda = dot(&v, &s.apply(&v));
    for it in 1..=EIGEN_MAX_ITER {
        let mut next = shifted.solve(&v)?;
        project(&mut next);
        normalize(&mut next);
        if dot(&next, &v) < 0.0 {
            next.iter_mut().for_each(|x| *x = -*x);
        }
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let new_lambda = dot(&next, &s.apply(&next));
        v = next;
        let settled = (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs().max(sigma.abs());
        lambda = new_lambda;
        if change <= 1e-12 || (change <= 1e-10 && settled) {
            return Ok((lambda, v, it));
        }
    }
    Err(IssError::numeric(format!(
        "eigen-iteration did not converge in {EIGEN_MAX_ITER} iterations"
    )))
}

/// The two largest eigenvalues of `A_h` through its symmetric similarity
/// transform `D A_h D⁻¹`, `D = diag(√(w_i/ρ∞_i))` (exact for the discrete
/// kernel). Shifted inverse iteration finds `λ₀ ≈ 0`; a second run deflated
/// against the computed kernel vector finds `λ₁`.
pub fn spectral_gap(m: &FPModel) -> Result<SpectralGap> {
    let a = &m.a_h;
    let n = a.len();
    let mut s = Tridiag::zeros(n);
    s.diag.clone_from(&a.diag);
    for i in 0..n - 1 {
        let e = (a.upper[i] * a.lower[i + 1]).max(0.0).sqrt();
        s.upper[i] = e;
        s.lower[i + 1] = e;
    }
    let norm_inf = (0..n)
        .map(|i| s.diag[i].abs() + s.upper[i].abs() + if i > 0 { s.lower[i].abs() } else { 0.0 })
        .fold(0.0, f64::max);
    let sigma = m.nu;
    let (lambda0, v0, it0) = inverse_iteration(&s, sigma, None)?;
    let (lambda1, _, it1) = inverse_iteration(&s, sigma, Some(&v0))?;
    let w = m.weights();
    let analytic: Vec<f64> = w.iter().zip(&m.w).map(|(wi, wv)| wi.sqrt() * (-wv / (2.0 * m.nu)).exp()).collect();
    Ok(SpectralGap {
        omega: lambda1.abs(),
        lambda0,
        lambda1,
        lambda0_scaled: lambda0.abs() / norm_inf,
        e0_check: angle(&v0, &analytic),
        symmetry_defect: symmetry_defect(m),
        iterations: it0 + it1,
    })
}

/// Time series of a Fokker–Planck run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpTrajectory {
    pub times: Vec<f64>,
    /// `‖ρ(t) − ρ∞‖` (trapezoid `L²`, discrete `ρ∞`).
    pub deviations: Vec<f64>,
    /// `∫₀ᵗ u(s)² ds`.
    pub input_energy: Vec<f64>,
    pub max_mass_drift: f64,
    pub min_value: f64,
    pub final_density: DensityField,
}

/// Steps CN from `t = 0` to `t_end` with steps of at most `dt`, splitting at
/// the breakpoints of `u` so that the frozen control is exact. `u` is read
/// as zero outside its domain.
pub fn simulate_fp(m: &FPModel, rho0: &DensityField, u: &Signal, t_end: f64, dt: f64) -> Result<FpTrajectory> {
    if u.dim() != 1 {
        return Err(IssError::domain("the Fokker-Planck control is scalar"));
    }
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(IssError::domain("t_end and dt must be > 0"));
    }
    if rho0.values.len() != m.cells + 1 {
        return Err(IssError::domain("initial density has wrong length"));
    }
    let steps = (t_end / dt).ceil() as usize;
    let mut marks: Vec<f64> = (0..=steps).map(|k| (k as f64 * dt).min(t_end)).collect();
    marks.extend(u.breakpoints_between(0.0, t_end));
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * t_end);

    let mass0 = rho0.mass;
    let dev = |r: &DensityField| {
        let d: Vec<f64> = r.values.iter().zip(&m.rho_inf).map(|(a, b)| a - b).collect();
        m.l2_norm(&d)
    };
    let mut rho = rho0.clone();
    let mut out = FpTrajectory {
        times: vec![0.0],
        deviations: vec![dev(&rho)],
        input_energy: vec![0.0],
        max_mass_drift: 0.0,
        min_value: rho.min_value(),
        final_density: rho0.clone(),
    };
    let mut energy = 0.0;
    for pair in marks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mid = 0.5 * (a + b);
        let uv = u.value_at(mid).map_or(0.0, |v| v[0]);
        rho = step(m, &rho, uv, b - a)?;
        energy += uv * uv * (b - a);
        out.times.push(b);
        out.deviations.push(dev(&rho));
        out.input_energy.push(energy);
        out.max_mass_drift = out.max_mass_drift.max((rho.mass - mass0).abs());
        out.min_value = out.min_value.min(rho.min_value());
    }
    out.final_density = rho;
    Ok(out)
}

/// Right-hand side `C e^{−ωt}(d₀ + d₀²) + γ(∫₀ᵗ u²)` on the trajectory grid;
/// overflow of `γ` yields `+∞`.
pub fn fp_bound_series(traj: &FpTrajectory, omega: f64, c: f64) -> Result<BoundSeries> {
    if !(omega > 0.0) {
        return Err(IssError::domain("omega must be > 0"));
    }
    let d0 = traj.deviations[0];
    let values = traj
        .times
        .iter()
        .zip(&traj.input_energy)
        .map(|(&t, &r)| {
            let g = match bounds::gamma_fp(c, r) {
                Ok(g) => g,
                Err(e) if e.is_numeric() => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(c * (-omega * t).exp() * (d0 + d0 * d0) + g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundSeries { times: traj.times.clone(), values })
}

/// Smallest `C` (to 1e-9 relative) for which the trajectory satisfies the
/// bound at every recorded time; `0` for an identically zero deviation.
pub fn minimal_constant(traj: &FpTrajectory, omega: f64) -> Result<f64> {
    if traj.deviations.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let holds = |c: f64| -> Result<bool> {
        let b = fp_bound_series(traj, omega, c)?;
        Ok(traj.deviations.iter().zip(&b.values).all(|(x, r)| x <= r))
    };
    let (mut lo, mut hi) = (1e-12, 1.0);
    while !holds(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(IssError::numeric("no bound constant below 1e12 fits the run"));
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `margin · max` of the per-run minimal constants.
pub fn fit_constant(training: &[FpTrajectory], omega: f64, margin: f64) -> Result<f64> {
    if training.is_empty() || !(margin >= 1.0) {
        return Err(IssError::domain("need at least one training run and margin >= 1"));
    }
    let mut c = 0.0f64;
    for t in training {
        c = c.max(minimal_constant(t, omega)?);
    }
    Ok(margin * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpIssRun {
    pub omega: f64,
    pub c: f64,
    pub report: AuditReport,
    pub trajectory: FpTrajectory,
}

/// Simulates, computes `ω` by [`spectral_gap`] and audits the run against
/// [`fp_bound_series`] with relative tolerance `tol`.
pub fn run_fp_iss_experiment(
    m: &FPModel,
    rho0: &DensityField,
    u: &Signal,
    t_end: f64,
    dt: f64,
    fit_c: f64,
    tol: f64,
) -> Result<FpIssRun> {
    if (rho0.mass - 1.0).abs() > 1e-10 {
        return Err(IssError::domain(format!("initial mass must be 1 (got {})", rho0.mass)));
    }
    let gap = spectral_gap(m)?;
    let trajectory = simulate_fp(m, rho0, u, t_end, dt)?;
    let bound = fp_bound_series(&trajectory, gap.omega, fit_c)?;
    let report = bounds::audit_series(&trajectory.times, &trajectory.deviations, &bound, tol)?;
    Ok(FpIssRun { omega: gap.omega, c: fit_c, report, trajectory })
}

/// Least-squares slope of `−ln(deviation)` against `t` over `[t_a, t_b]`.
pub fn decay_exponent(traj: &FpTrajectory, t_a: f64, t_b: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.deviations)
        .filter(|(t, d)| **t >= t_a && **t <= t_b && **d > 0.0)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(IssError::domain("decay window holds fewer than two samples"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(t, l)| (t - mt) * (l - ml)).sum();
    let den: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    Ok(-num / den)
}

/// Seeded initial density `ρ∞(1 + Σ_k a_k cos(kπx))`, `k = 1..modes`,
/// `|a_k| ≤ amplitude/k`, renormalized to unit trapezoid mass.
pub fn random_density(m: &FPModel, seed: u64, modes: usize, amplitude: f64) -> Result<DensityField> {
    let mut rng = crate::rng::seeded(seed, 1);
    let coeffs: Vec<f64> = (1..=modes).map(|k| rng.symmetric(amplitude / k as f64)).collect();
    let x = m.nodes();
    let mut v: Vec<f64> = x
        .iter()
        .zip(&m.rho_inf)
        .map(|(&xi, &r)| {
            let s: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * xi).cos())
                .sum();
            r * (1.0 + s)
        })
        .collect();
    let mass = m.integrate(&v);
    v.iter_mut().for_each(|x| *x /= mass);
    m.density(v)
}

/// CSV with columns `x, rho`.
pub fn write_density_csv<W: Write>(m: &FPModel, rho: &DensityField, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| IssError::data(format!("csv: {e}"));
    wr.write_record(["x", "rho"]).map_err(err)?;
    for (x, r) in m.nodes().iter().zip(&rho.values) {
        wr.write_record([crate::format_float(*x), crate::format_float(*r)]).map_err(err)?;
    }
    wr.flush().map_err(|e| IssError::data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orlicz::Interval;
    use crate::signals::random_signal;
    use std::f64::consts::PI;

    fn cos_model(cells: usize, nu: f64) -> FPModel {
        let w = sample_nodes(cells, |x| 0.5 * (2.0 * PI * x).cos());
        let a = sample_nodes(cells, |x| (PI * x).cos());
        build_model(nu, &w, &a, cells).unwrap()
    }

    fn flat_model(cells: usize, nu: f64) -> FPModel {
        let a = sample_nodes(cells, |x| (PI * x).cos());
        build_model(nu, &vec![0.0; cells + 1], &a, cells).unwrap()
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        // Zero leading pivot forces a row swap.
        let t = Tridiag {
            lower: vec![0.0, 2.0, 1.0, -1.0],
            diag: vec![0.0, 1.0, 4.0, 2.0],
            upper: vec![3.0, -1.0, 0.5, 0.0],
        };
        let b = [1.0, 2.0, 3.0, 4.0];
        let x = t.solve(&b).unwrap();
        let back = t.apply(&x);
        for (p, q) in back.iter().zip(&b) {
            assert!((p - q).abs() < 1e-13);
        }
        let dense = nalgebra::DMatrix::from_fn(4, 4, |i, j| t.get(i, j));
        let xd = dense.lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for (p, q) in x.iter().zip(xd.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
        let singular = Tridiag { lower: vec![0.0; 2], diag: vec![0.0; 2], upper: vec![0.0; 2] };
        assert!(matches!(singular.solve(&[1.0, 1.0]), Err(IssError::Numeric(_))));
    }

    #[test]
    fn flat_potential_gives_neumann_laplacian() {
        let m = flat_model(32, 0.7);
        let h = m.h();
        assert!((m.a_h.diag[5] + 2.0 * 0.7 / (h * h)).abs() < 1e-9);
        assert!((m.a_h.upper[5] - 0.7 / (h * h)).abs() < 1e-9);
        assert!((m.a_h.upper[0] - 2.0 * 0.7 / (h * h)).abs() < 1e-9);
        let ones = vec![1.0; 33];
        assert!(m.a_h.apply(&ones).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn operators_conserve_mass() {
        let m = cos_model(128, 0.5);
        let (a, b) = m.column_sum_defect();
        assert!(a <= 1e-13 && b <= 1e-13, "{a} {b}");
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let a = sample_nodes(32, |x| (PI * x).cos());
        assert!(build_model(1.0, &vec![0.0; 33], &a, 15).is_err());
        assert!(build_model(0.0, &vec![0.0; 33], &a, 32).is_err());
        let sloped = sample_nodes(32, |x| x);
        assert!(matches!(
            build_model(1.0, &vec![0.0; 33], &sloped, 32),
            Err(IssError::Contract(_))
        ));
        let steep = sample_nodes(32, |x| 100.0 * x);
        assert!(build_model(0.1, &steep, &a, 32).is_err());
    }

    #[test]
    fn stationary_density_examples() {
        let flat = flat_model(64, 1.0);
        let s = stationary_density(&flat).unwrap();
        assert!(s.density.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(s.residual < 1e-10);

        let nu = 0.5;
        let cells = 1024;
        let w = sample_nodes(cells, |x| x);
        let a = sample_nodes(cells, |x| (PI * x).cos());
        let m = build_model(nu, &w, &a, cells).unwrap();
        let s = stationary_density(&m).unwrap();
        let norm = (1.0 / nu) / (1.0 - (-1.0 / nu).exp());
        for (x, r) in m.nodes().iter().zip(&s.density.values) {
            let exact = (-x / nu).exp() * norm;
            assert!((r - exact).abs() <= 1e-6 * exact);
        }
    }

    #[test]
    fn stationary_residual_is_second_order() {
        let r: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&j| stationary_density(&cos_model(j, 1.0)).unwrap().residual)
            .collect();
        for pair in r.windows(2) {
            let slope = (pair[0] / pair[1]).log2();
            assert!((1.8..=2.2).contains(&slope), "slope {slope}");
        }
    }

    #[test]
    fn discrete_kernel_is_exact() {
        let m = cos_model(128, 0.5);
        let rho = discrete_stationary_density(&m);
        assert!((rho.mass - 1.0).abs() < 1e-14);
        assert!(kernel_residual(&m, &rho.values) < 1e-9);
        let next = step(&m, &rho, 0.0, 1e-2).unwrap();
        for (a, b) in next.values.iter().zip(&rho.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn steps_conserve_mass() {
        let m = cos_model(128, 0.5);
        let mut rho = random_density(&m, 5, 6, 0.5).unwrap();
        let m0 = rho.mass;
        let mut rng = crate::rng::seeded(9, 0);
        for _ in 0..1000 {
            rho = step(&m, &rho, rng.symmetric(3.0), 1e-3).unwrap();
            assert!((rho.mass - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn crank_nicolson_is_second_order() {
        let m = cos_model(64, 0.5);
        let rho0 = random_density(&m, 2, 4, 0.5).unwrap();
        let u = random_signal(3, 1, Interval::new(0.0, 0.5).unwrap(), 4, 2.0).unwrap();
        let end = |dt: f64| simulate_fp(&m, &rho0, &u, 0.5, dt).unwrap().final_density.values;
        let (a, b, c) = (end(0.02), end(0.01), end(0.005));
        let diff = |x: &[f64], y: &[f64]| {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            m.l2_norm(&d)
        };
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn projection_laws() {
        let m = cos_model(64, 0.5);
        let rho_inf = discrete_stationary_density(&m);
        assert!(project_p(&m, &rho_inf).values.iter().all(|v| v.abs() < 1e-14));
        let y = random_density(&m, 1, 5, 0.8).unwrap();
        let p = project_p(&m, &y);
        let pp = project_p(&m, &p);
        for ((a, b), (v, r)) in p.values.iter().zip(&pp.values).zip(y.values.iter().zip(&rho_inf.values)) {
            assert!((a - b).abs() < 1e-12);
            assert!((a - (v - r)).abs() < 1e-12);
        }
        let b = m.density(m.b_alpha_h.apply(&y.values)).unwrap();
        let pb = project_p(&m, &b);
        let scale = b.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for (x, z) in pb.values.iter().zip(&b.values) {
            assert!((x - z).abs() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn gap_of_flat_potential() {
        let j = 256;
        let g = spectral_gap(&flat_model(j, 1.0)).unwrap();
        let jf = j as f64;
        let exact = 2.0 * jf * jf * (1.0 - (PI / jf).cos());
        assert!((g.omega - exact).abs() <= 1e-8 * exact, "{} vs {exact}", g.omega);
        assert!((g.omega - PI * PI).abs() <= 0.02 * PI * PI);
        assert!(g.lambda0_scaled <= 1e-8);
        assert!(g.e0_check <= 1e-6);
        assert!(g.symmetry_defect < 1e-14);
    }

    #[test]
    fn gap_matches_dense_eigensolver() {
        let m = cos_model(48, 0.5);
        let g = spectral_gap(&m).unwrap();
        let n = m.cells + 1;
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| m.a_h.get(i, j));
        let mut eig: Vec<f64> = dense.complex_eigenvalues().iter().map(|z| z.re).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!(eig[0].abs() < 1e-8 * eig[n - 1].abs());
        assert!((g.omega + eig[1]).abs() <= 1e-8 * g.omega, "{} vs {}", g.omega, eig[1]);
        assert!(g.e0_check < 1e-2);
    }

    #[test]
    fn symmetry_defect_shrinks_with_refinement() {
        let a = symmetry_defect(&cos_model(64, 0.5));
        let b = symmetry_defect(&cos_model(128, 0.5));
        assert!(b < a && a < 1e-2, "{a} {b}");
    }

    #[test]
    fn free_decay_is_monotone_and_matches_gap() {
        let m = cos_model(128, 0.5);
        let g = spectral_gap(&m).unwrap();
        let rho0 = random_density(&m, 1, 4, 0.6).unwrap();
        let zero = Signal::zeros(1, Interval::new(0.0, 6.0 / g.omega).unwrap()).unwrap();
        let tr = simulate_fp(&m, &rho0, &zero, 6.0 / g.omega, 1e-3).unwrap();
        let mut rho = rho0.clone();
        let mut prev = f64::INFINITY;
        for _ in 0..500 {
            let d: Vec<f64> = rho.values.iter().zip(&m.rho_inf).map(|(a, b)| a - b).collect();
            let e = m.energy_norm(&d);
            assert!(e <= prev + 1e-12);
            prev = e;
            rho = step(&m, &rho, 0.0, 1e-3).unwrap();
        }
        let k = decay_exponent(&tr, 1.0 / g.omega, 5.0 / g.omega).unwrap();
        assert!((k - g.omega).abs() <= 0.1 * g.omega, "{k} vs {}", g.omega);
    }

    #[test]
    fn experiment_at_equilibrium_is_trivial() {
        let m = cos_model(64, 0.5);
        let rho = discrete_stationary_density(&m);
        let zero = Signal::zeros(1, Interval::new(0.0, 1.0).unwrap()).unwrap();
        let run = run_fp_iss_experiment(&m, &rho, &zero, 1.0, 1e-2, 1.0, 1e-6).unwrap();
        assert!(run.report.pass);
        assert!(run.trajectory.deviations.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn fitted_constant_is_tight() {
        let m = cos_model(64, 0.5);
        let g = spectral_gap(&m).unwrap();
        let rho0 = random_density(&m, 4, 4, 0.5).unwrap();
        let u = random_signal(4, 1, Interval::new(0.0, 1.0).unwrap(), 5, 1.0).unwrap();
        let tr = simulate_fp(&m, &rho0, &u, 1.0, 1e-2).unwrap();
        let c = minimal_constant(&tr, g.omega).unwrap();
        let ok = |c: f64| {
            let b = fp_bound_series(&tr, g.omega, c).unwrap();
            bounds::audit_series(&tr.times, &tr.deviations, &b, 0.0).unwrap().pass
        };
        assert!(ok(c) && !ok(c * (1.0 - 1e-6)));
    }

    #[test]
    fn density_csv_layout() {
        let m = flat_model(16, 1.0);
        let mut buf = Vec::new();
        write_density_csv(&m, &discrete_stationary_density(&m), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 18);
        assert!(text.starts_with("x,rho\n"));
    }
}
