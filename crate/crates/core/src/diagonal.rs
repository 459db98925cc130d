//! The diagonal bilinear system `x_n' = λ_n x_n + u(t) μ_n x_n`.
//!
//! `example3_model(N)` truncates the family `λ_n = −2ⁿ`, `μ_n = 2ⁿ/n`, whose
//! control operator is admissible for the Orlicz space built on
//! `Φ̃(x) = x ln ln(x + e)` but for no `L^p`. The functions here supply a
//! closed-form oracle for the solver, per-mode admissibility constants, and
//! numerical evidence (not proof) for the non-admissibility.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundParams;
use crate::error::{IssError, Result};
use crate::mild_solver::SystemModel;
use crate::orlicz::Interval;
use crate::signals::Signal;

/// `C = ln 2 + ln(2e)` in `k_n = ln(Cn)/n`.
pub fn kn_constant() -> f64 {
    2.0 * std::f64::consts::LN_2 + 1.0
}

/// Largest truncation accepted by [`example3_model`].
pub const MAX_MODES: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalModel {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Diagonal of `B₂` (defaults to `mu`).
    pub b2: Vec<f64>,
    pub log_domain: bool,
}

impl DiagonalModel {
    /// Log-domain evaluation is switched on when `|λ_n|` spans more than
    /// eight decades.
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() || lambda.len() != mu.len() {
            return Err(IssError::domain("lambda and mu must be nonempty and of equal length"));
        }
        if lambda.iter().chain(&mu).any(|v| !v.is_finite()) {
            return Err(IssError::domain("lambda and mu must be finite"));
        }
        let mags: Vec<f64> = lambda.iter().map(|l| l.abs()).filter(|&l| l > 0.0).collect();
        let span = mags.iter().copied().fold(0.0, f64::max)
            / mags.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(DiagonalModel {
            b2: mu.clone(),
            lambda,
            mu,
            log_domain: span > 1e8,
        })
    }

    pub fn with_b2(mut self, b2: Vec<f64>) -> Result<Self> {
        if b2.len() != self.lambda.len() || b2.iter().any(|v| !v.is_finite()) {
            return Err(IssError::domain("b2 must be finite with one entry per mode"));
        }
        self.b2 = b2;
        Ok(self)
    }

    pub fn modes(&self) -> usize {
        self.lambda.len()
    }
}

/// `λ_n = −2ⁿ`, `μ_n = 2ⁿ/n`, `n = 1..N`; log-domain for `N > 30`.
pub fn example3_model(n_modes: usize) -> Result<DiagonalModel> {
    if !(1..=MAX_MODES).contains(&n_modes) {
        return Err(IssError::domain(format!(
            "example3 truncation must be in 1..={MAX_MODES}, got {n_modes}"
        )));
    }
    let lambda: Vec<f64> = (1..=n_modes).map(|n| -(2f64.powi(n as i32))).collect();
    let mu: Vec<f64> = (1..=n_modes).map(|n| 2f64.powi(n as i32) / n as f64).collect();
    let mut m = DiagonalModel::new(lambda, mu)?;
    m.log_domain = n_modes > 30;
    Ok(m)
}

impl SystemModel for DiagonalModel {
    fn id(&self) -> String {
        format!("diagonal[{}]", self.modes())
    }

    fn dim(&self) -> usize {
        self.modes()
    }

    fn input_dims(&self) -> (usize, usize) {
        (1, self.modes())
    }

    fn apply_semigroup(&self, t: f64, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.lambda).map(|(v, l)| v * (l * t).exp()).collect()
    }

    fn apply_b1(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.mu).map(|(v, m)| v * m).collect()
    }

    fn apply_b2(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.b2).map(|(a, b)| a * b).collect()
    }

    fn bilinear(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * u[0]).collect()
    }

    fn bilinear_bound(&self) -> f64 {
        1.0
    }

    fn lipschitz(&self, _radius: f64) -> f64 {
        1.0
    }

    fn growth_type(&self) -> (f64, f64) {
        (1.0, self.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0))
    }

    /// `sup_{τ≤1} ‖T(τ)B‖` for `B ∈ {B₁, B₂}`, the `L¹` admissibility
    /// constant over horizons up to one.
    fn admissibility_surrogate(&self) -> f64 {
        self.lambda
            .iter()
            .zip(self.mu.iter().zip(&self.b2))
            .map(|(l, (m, b))| m.abs().max(b.abs()) * l.exp().max(1.0))
            .fold(0.0, f64::max)
    }
}

fn scalar_integral(u: &Signal, t: f64) -> Result<f64> {
    if u.dim() != 1 {
        return Err(IssError::domain("the diagonal closed form needs a scalar input"));
    }
    if t.is_nan() || t < 0.0 {
        return Err(IssError::domain("t must be >= 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    u.integrate_component(0, Interval::new(0.0, t)?)
}

/// `(ln|x_n(t)|, sign x_n(t))` with
/// `x_n(t) = exp(λ_n t + μ_n ∫₀ᵗ u) x₀ₙ`.
pub fn closed_form_log(m: &DiagonalModel, x0: &[f64], u: &Signal, t: f64) -> Result<Vec<(f64, f64)>> {
    if x0.len() != m.modes() {
        return Err(IssError::domain("initial state has wrong dimension"));
    }
    let iu = scalar_integral(u, t)?;
    Ok(x0
        .iter()
        .zip(m.lambda.iter().zip(&m.mu))
        .map(|(&x, (&l, &mu))| {
            if x == 0.0 {
                (f64::NEG_INFINITY, 0.0)
            } else {
                (x.abs().ln() + l * t + mu * iu, x.signum())
            }
        })
        .collect())
}

/// Closed-form state at time `t` (exact integral of piecewise-constant `u`).
pub fn closed_form_solution(m: &DiagonalModel, x0: &[f64], u: &Signal, t: f64) -> Result<Vec<f64>> {
    if m.log_domain {
        let logs = closed_form_log(m, x0, u, t)?;
        return logs
            .into_iter()
            .map(|(lx, s)| {
                let v = s * lx.exp();
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(IssError::numeric("closed-form state overflows f64"))
                }
            })
            .collect();
    }
    let iu = scalar_integral(u, t)?;
    if x0.len() != m.modes() {
        return Err(IssError::domain("initial state has wrong dimension"));
    }
    x0.iter()
        .zip(m.lambda.iter().zip(&m.mu))
        .map(|(&x, (&l, &mu))| {
            let v = (l * t + mu * iu).exp() * x;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(IssError::numeric(
                    "closed-form exponent overflows; use a log-domain model",
                ))
            }
        })
        .collect()
}

/// Upper bound `|b| √((1 − e^{2λt}) / (2|λ|))` on the `L²` admissibility
/// constant of the scalar mode `x' = λx + b u` over `[0, t]`
/// (Cauchy–Schwarz; equality for `u(s) ∝ e^{λ(t−s)}`).
pub fn mode_admissibility_l2(lam: f64, b: f64, t: f64) -> Result<f64> {
    mode_admissibility_lp(lam, b, t, 2.0)
}

/// Hölder bound `|b| ‖e^{λ(t−·)}‖_{L^q(0,t)}` with `1/p + 1/q = 1` on the
/// `L^p` admissibility constant of a scalar mode.
pub fn mode_admissibility_lp(lam: f64, b: f64, t: f64, p: f64) -> Result<f64> {
    Ok(mode_admissibility_lp_log(lam, b, t, p)?.exp())
}

/// Natural log of [`mode_admissibility_lp`] (`−∞` for `b = 0`).
pub fn mode_admissibility_lp_log(lam: f64, b: f64, t: f64, p: f64) -> Result<f64> {
    if !(lam < 0.0) || !lam.is_finite() {
        return Err(IssError::domain(format!("mode needs lambda < 0, got {lam}")));
    }
    if !(p >= 1.0) {
        return Err(IssError::domain("p must be >= 1"));
    }
    if !(t > 0.0) {
        return Err(IssError::domain("t must be > 0"));
    }
    if b == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let lb = b.abs().ln();
    if p == 1.0 {
        return Ok(lb);
    }
    let q = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    let inner = (-(q * lam * t).exp_m1()).ln() - (q * lam.abs()).ln();
    Ok(lb + inner / q)
}

/// Lower bound on the `L²` constant from the piecewise-constant input equal
/// to the cell averages of the extremal `e^{λ(t−s)}` on `cells` equal cells:
/// `|b| √(Σ len · avg²)`.
pub fn mode_admissibility_l2_lower(lam: f64, b: f64, t: f64, cells: usize) -> Result<f64> {
    if !(lam < 0.0) || !(t > 0.0) || cells == 0 {
        return Err(IssError::domain("need lambda < 0, t > 0 and cells >= 1"));
    }
    let len = t / cells as f64;
    let mut sum = 0.0;
    for i in 0..cells {
        let (a, c) = (i as f64 * len, (i + 1) as f64 * len);
        // ∫_a^c e^{λ(t−s)} ds
        let integral = ((lam * (t - c)).exp() - (lam * (t - a)).exp()) / lam.abs();
        let avg = integral / len;
        sum += len * avg * avg;
    }
    Ok(b.abs() * sum.sqrt())
}

/// `ln` of `2^{2n/(p−2)} / n^{4p/(p−2)}`.
pub fn carleson_series_log(p: f64, n: u32) -> Result<f64> {
    if !(p > 2.0) || !p.is_finite() {
        return Err(IssError::domain("the series term needs p > 2"));
    }
    if n == 0 {
        return Err(IssError::domain("n must be >= 1"));
    }
    let nf = n as f64;
    Ok(2.0 * nf / (p - 2.0) * std::f64::consts::LN_2 - 4.0 * p / (p - 2.0) * nf.ln())
}

/// `2^{2n/(p−2)} / n^{4p/(p−2)}` (`+∞` once it exceeds `f64`).
pub fn carleson_series_term(p: f64, n: u32) -> Result<f64> {
    Ok(carleson_series_log(p, n)?.exp())
}

/// `k_n = ln(Cn)/n`.
pub fn kn(n: u32) -> f64 {
    (kn_constant() * n as f64).ln() / n as f64
}

/// `Φ̃(x) = x ln ln(x + e)`.
fn loglog(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x + std::f64::consts::E).ln().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnReport {
    pub n: u32,
    pub t: f64,
    pub integral: f64,
    pub k_n: f64,
    /// `1 − e^{−2ⁿt}`.
    pub proof_bound: f64,
    pub pass: bool,
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let cells = cells + cells % 2;
    let h = (b - a) / cells as f64;
    let mut sum = f(a) + f(b);
    for i in 1..cells {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Checks `∫₀ᵗ Φ̃((2ⁿ/(k_n n)) e^{−2ⁿs}) ds ≤ 1`.
///
/// With `σ = 2ⁿs` the integral is `2⁻ⁿ ∫₀^{2ⁿt} Φ̃(A e^{−σ}) dσ`,
/// `A = 2ⁿ/ln(Cn)`. The σ-range is cut at `ln A + 40`, beyond which the
/// integrand is below `e^{−40}`; composite Simpson with `quad_cells` and
/// `2·quad_cells` cells must agree to `1e-4` relative.
pub fn verify_kn_bound(n: u32, t: f64, quad_cells: usize) -> Result<KnReport> {
    if n < 2 {
        return Err(IssError::domain("verify_kn_bound needs n >= 2"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(IssError::domain("t must be > 0"));
    }
    if quad_cells < 2 {
        return Err(IssError::domain("quad_cells must be >= 2"));
    }
    let two_n = 2f64.powi(n as i32);
    let k_n = kn(n);
    let amp = two_n / (k_n * n as f64);
    let s_max = (two_n * t).min(amp.ln().max(0.0) + 40.0);
    let f = |s: f64| loglog(amp * (-s).exp());
    let coarse = simpson(f, 0.0, s_max, quad_cells) / two_n;
    let fine = simpson(f, 0.0, s_max, 2 * quad_cells) / two_n;
    if (coarse - fine).abs() > 1e-4 * fine.abs().max(1e-300) {
        return Err(IssError::numeric(format!(
            "k_n quadrature not converged for n = {n}: {coarse} vs {fine}"
        )));
    }
    Ok(KnReport {
        n,
        t,
        integral: fine,
        k_n,
        proof_bound: -(-two_n * t).exp_m1(),
        pass: fine <= 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n_modes: usize,
    pub value: f64,
    pub log10_value: f64,
}

/// For each `N`, `sup_{n≤N}` of the per-mode `L^p` constants
/// `μ_n ‖e^{λ_n(t−·)}‖_{L^q(0,t)}` of the example family, computed in the
/// log domain. For `p = 2` and large `t` the `n`-th mode gives
/// `2^{(n−1)/2}/n`. Growth of the column is evidence of non-admissibility.
pub fn lp_admissibility_scan(p: f64, n_list: &[usize], t: f64) -> Result<Vec<ScanRow>> {
    let max_n = n_list.iter().copied().max().unwrap_or(0);
    if n_list.contains(&0) {
        return Err(IssError::domain("truncations must be >= 1"));
    }
    let mut logs = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let ln2n = n as f64 * std::f64::consts::LN_2;
        let lam = -(ln2n.exp());
        let log_mu = ln2n - (n as f64).ln();
        let base = mode_admissibility_lp_log(lam, 1.0, t, p)?;
        logs.push(log_mu + base);
    }
    let mut prefix = Vec::with_capacity(max_n);
    let mut best = f64::NEG_INFINITY;
    for &l in &logs {
        best = best.max(l);
        prefix.push(best);
    }
    Ok(n_list
        .iter()
        .map(|&n| {
            let l = prefix[n - 1];
            ScanRow {
                n_modes: n,
                value: l.exp(),
                log10_value: l / std::f64::consts::LN_10,
            }
        })
        .collect())
}

/// CSV with columns `N, value, log10_value`.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| IssError::data(format!("csv: {e}"));
    wr.write_record(["N", "value", "log10_value"]).map_err(err)?;
    for r in rows {
        wr.write_record([
            r.n_modes.to_string(),
            crate::format_float(r.value),
            crate::format_float(r.log10_value),
        ])
        .map_err(err)?;
    }
    wr.flush().map_err(|e| IssError::data(e.to_string()))
}

/// `G(z) = ∫₀^z ln ln(y + e) dy`, so that for `a > 0`
/// `∫₀^∞ Φ̃(c e^{−aσ}) dσ = G(c)/a`.
fn loglog_primitive(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    simpson(|y| (y + std::f64::consts::E).ln().ln(), 0.0, z, 4096)
}

/// Exact `Φ̃`-Luxemburg norm over `(0, ∞)` of `μ_n e^{−a σ}` with
/// `a = 2ⁿ − shift > 0`: the `k` solving `G(μ_n/k) = a`.
pub fn shifted_mode_norm(n: u32, shift: f64) -> Result<f64> {
    let two_n = 2f64.powi(n as i32);
    let a = two_n - shift;
    if !(a > 0.0) {
        return Err(IssError::domain("shifted mode is not decaying"));
    }
    let mu = two_n / n as f64;
    // G is increasing; bisect on z = μ/k.
    let (mut lo, mut hi) = (0.0, 1.0);
    while loglog_primitive(hi) < a {
        lo = hi;
        hi *= 2.0;
        if hi > 1e200 {
            return Err(IssError::numeric("mode norm bracket overflow"));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if loglog_primitive(mid) < a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Smaller z means larger k; using lo keeps the returned norm an upper bound.
    Ok(mu / lo)
}

/// Per-mode kernel bound for the semigroup `e^{(ω/2)t}T(t)` with `ω = 2`:
/// for `n ≥ 2` the proof's `k_n` rescaled to the shifted decay rate,
/// `k_n 2ⁿ/(2ⁿ − 1)`; for `n = 1`, where `ln(C) < 1` and the proof's chain
/// does not apply, the exact norm from [`shifted_mode_norm`].
pub fn shifted_kappa(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(IssError::domain("modes start at n = 1"));
    }
    if n == 1 {
        return shifted_mode_norm(1, 1.0);
    }
    let two_n = 2f64.powi(n as i32);
    Ok(kn(n) * two_n / (two_n - 1.0))
}

/// Bound parameters for `example3_model(N)`: `M = 1`, `ω = 2`, `m = 1`,
/// `C_B1 = C_B2 = 2 ‖κ‖_{ℓ²}` over the truncation, where the factor 2 comes
/// from the generalized Hölder inequality.
pub fn example3_bound_params(n_modes: usize) -> Result<BoundParams> {
    let mut sq = 0.0;
    for n in 1..=n_modes as u32 {
        let k = shifted_kappa(n)?;
        sq += k * k;
    }
    let c = 2.0 * sq.sqrt();
    BoundParams::new(1.0, 2.0, 1.0, c, c)
}
