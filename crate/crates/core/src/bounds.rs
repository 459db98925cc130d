//! Comparison functions of the bilinear ISS estimate and trajectory audits.
//!
//! With `(M, ω)` the type of the semigroup, `m` the bound of `F`, and
//! `C_B1`, `C_B2` admissibility constants with respect to `e^{(ω/2)t}T(t)`:
//!
//! ```text
//! β(s, t) = M e^{-ωt} s + ½ M² e^{-ωt} s² sup_{r∈[0,t]} e^{-ωr}
//! γ₁(s)   = 4 m² s² e^{4ms}
//! γ₂(s)   = s + ½ s²
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{IssError, Result};
use crate::orlicz::{self, Interval, YoungFunction, DEFAULT_TOL};
use crate::signals::{Signal, EXP_GUARD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    #[serde(rename = "M")]
    pub semigroup_bound: f64,
    #[serde(rename = "omega")]
    pub decay_rate: f64,
    #[serde(rename = "m")]
    pub bilinear_bound: f64,
    #[serde(rename = "C_B1")]
    pub c_b1: f64,
    #[serde(rename = "C_B2")]
    pub c_b2: f64,
}

impl BoundParams {
    pub fn new(m_sg: f64, omega: f64, m: f64, c_b1: f64, c_b2: f64) -> Result<Self> {
        let p = BoundParams {
            semigroup_bound: m_sg,
            decay_rate: omega,
            bilinear_bound: m,
            c_b1,
            c_b2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.semigroup_bound,
            self.decay_rate,
            self.bilinear_bound,
            self.c_b1,
            self.c_b2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(IssError::domain("bound parameters must be finite"));
        }
        if self.semigroup_bound < 1.0 {
            return Err(IssError::domain("semigroup bound M must be >= 1"));
        }
        if self.bilinear_bound <= 0.0 {
            return Err(IssError::domain("bilinear bound m must be > 0"));
        }
        if self.c_b1 < 0.0 || self.c_b2 < 0.0 {
            return Err(IssError::domain("admissibility constants must be >= 0"));
        }
        Ok(())
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        return Err(IssError::domain(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

pub fn beta(p: &BoundParams, s: f64, t: f64) -> Result<f64> {
    nonneg("s", s)?;
    nonneg("t", t)?;
    let w = p.decay_rate;
    let decay = (-w * t).exp();
    let sup = if w >= 0.0 { 1.0 } else { decay };
    let m = p.semigroup_bound;
    Ok(m * decay * s + 0.5 * m * m * decay * s * s * sup)
}

pub fn gamma1(p: &BoundParams, s: f64) -> Result<f64> {
    nonneg("s", s)?;
    let m = p.bilinear_bound;
    let e = 4.0 * m * s;
    if e > EXP_GUARD {
        return Err(IssError::numeric(format!("gamma1 overflows: 4ms = {e}")));
    }
    Ok(4.0 * m * m * s * s * e.exp())
}

pub fn gamma2(s: f64) -> Result<f64> {
    nonneg("s", s)?;
    Ok(s + 0.5 * s * s)
}

/// `γ(r) = C r e^{C√r} + C√r + C r` of the Fokker–Planck estimate.
pub fn gamma_fp(c: f64, r: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(IssError::domain("gamma_fp needs C > 0"));
    }
    nonneg("r", r)?;
    let sr = r.sqrt();
    if c * sr > EXP_GUARD {
        return Err(IssError::numeric("gamma_fp overflows"));
    }
    Ok(c * r * (c * sr).exp() + c * sr + c * r)
}

/// Norm of `u` on `[0, t]`, treating `u` as zero outside its domain.
pub fn input_norm(phi: &YoungFunction, u: &Signal, t: f64) -> Result<f64> {
    nonneg("t", t)?;
    let dom = u.domain();
    let a = dom.t0;
    let b = t.min(dom.t1);
    if b <= a {
        return Ok(0.0);
    }
    orlicz::luxemburg_norm(phi, u, Interval::new(a, b)?, DEFAULT_TOL)
}

/// Right-hand side of the uniform estimate (requires `ω > 0`):
/// `β(‖x₀‖, t) + γ₁(C_B1‖u₁‖_Φ) + γ₂(C_B2‖u₂‖_Ψ)`, norms over `[0, t]`.
pub fn iss_rhs(
    p: &BoundParams,
    x0_norm: f64,
    u1: &Signal,
    u2: &Signal,
    phi: &YoungFunction,
    psi: &YoungFunction,
    t: f64,
) -> Result<f64> {
    if !(p.decay_rate > 0.0) {
        return Err(IssError::contract(
            "the uniform estimate needs omega > 0; use iss_rhs_timevarying",
        ));
    }
    let n1 = input_norm(phi, u1, t)?;
    let n2 = input_norm(psi, u2, t)?;
    Ok(beta(p, x0_norm, t)? + gamma1(p, p.c_b1 * n1)? + gamma2(p.c_b2 * n2)?)
}

/// Right-hand side with the exponentially weighted `u₂` term
/// `γ₂(C_B2 e^{-ωt/2} ‖e^{(ω/2)·}u₂‖_Ψ)`; valid for any sign of `ω`, with the
/// `C` fields read as the constants for horizon `t`.
pub fn iss_rhs_timevarying(
    p: &BoundParams,
    x0_norm: f64,
    u1: &Signal,
    u2: &Signal,
    phi: &YoungFunction,
    psi: &YoungFunction,
    t: f64,
) -> Result<f64> {
    let n1 = input_norm(phi, u1, t)?;
    let half = 0.5 * p.decay_rate;
    let dom = u2.domain();
    let b = t.min(dom.t1);
    let n2 = if b <= dom.t0 {
        0.0
    } else {
        let iv = Interval::new(dom.t0, b)?;
        let weighted = u2.restrict(iv)?.exp_weight(half)?;
        if (half * t).abs() > EXP_GUARD {
            return Err(IssError::numeric("exponential weight overflows"));
        }
        (-half * t).exp() * orlicz::luxemburg_norm(psi, &weighted, iv, DEFAULT_TOL)?
    };
    Ok(beta(p, x0_norm, t)? + gamma1(p, p.c_b1 * n1)? + gamma2(p.c_b2 * n2)?)
}

/// Points of the ε search grid in [`linf_bound_constant`].
const EPS_GRID: usize = 241;

/// Largest `ε` on a log grid in `[1e-12, 1]` with `Ψ(ε) ≤ ε`. Since
/// `Ψ(x)/x` is non-decreasing for a convex `Ψ` with `Ψ(0) = 0`, this gives
/// `Ψ(x) ≤ x` on all of `(0, ε]`.
pub fn linf_epsilon(psi: &YoungFunction) -> Result<f64> {
    let grid = orlicz::geometric_grid(1e-12, 1.0, EPS_GRID);
    grid.iter()
        .rev()
        .copied()
        .find(|&e| psi.eval_unchecked(e) <= e)
        .ok_or_else(|| IssError::numeric("no epsilon >= 1e-12 with Psi(x) <= x"))
}

/// `C = max{1/ε, 2/ω}`, so that
/// `e^{-ωt/2}‖e^{(ω/2)·}u₂‖_{E_Ψ(0,t)} ≤ C‖u₂‖_∞` for all `t`.
pub fn linf_bound_constant(psi: &YoungFunction, omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(IssError::domain("linf_bound_constant needs omega > 0"));
    }
    let eps = linf_epsilon(psi)?;
    Ok((1.0 / eps).max(2.0 / omega))
}

/// Bound values on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl BoundSeries {
    pub fn from_fn(times: &[f64], mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Ok(BoundSeries { times: times.to_vec(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `max_t (‖x(t)‖ − rhs(t))`.
    pub max_violation: f64,
    /// `min_t rhs(t)/‖x(t)‖` over points with `‖x(t)‖ > 0`; `None` when the
    /// trajectory is identically zero.
    pub min_slack_ratio: Option<f64>,
    pub worst_time: f64,
    pub n_points: usize,
    pub pass: bool,
}

/// Compares state norms with bound values on a shared grid. A point passes
/// when `‖x(t)‖ − rhs(t) ≤ tol·(1 + rhs(t))`; the audit passes when every
/// point does.
pub fn audit_series(times: &[f64], norms: &[f64], bound: &BoundSeries, tol: f64) -> Result<AuditReport> {
    if times.is_empty() {
        return Err(IssError::contract("audit needs at least one time point"));
    }
    if norms.len() != times.len() {
        return Err(IssError::contract("norms and times differ in length"));
    }
    if bound.times.len() != times.len() || bound.times.iter().zip(times).any(|(a, b)| a != b) {
        return Err(IssError::contract("trajectory and bound grids differ"));
    }
    if !(tol >= 0.0) {
        return Err(IssError::domain("audit tolerance must be >= 0"));
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst_time = times[0];
    let mut min_ratio: Option<f64> = None;
    let mut pass = true;
    for ((&t, &x), &r) in times.iter().zip(norms).zip(&bound.values) {
        if x.is_nan() || r.is_nan() {
            return Err(IssError::numeric(format!("NaN in audit at t = {t}")));
        }
        let v = x - r;
        if v > max_violation {
            max_violation = v;
            worst_time = t;
        }
        if v > tol * (1.0 + r) {
            pass = false;
        }
        if x > 0.0 {
            let ratio = r / x;
            min_ratio = Some(min_ratio.map_or(ratio, |m| m.min(ratio)));
        }
    }
    Ok(AuditReport {
        max_violation,
        min_slack_ratio: min_ratio,
        worst_time,
        n_points: times.len(),
        pass,
    })
}

/// Audits a solver trajectory against a bound series on the same grid.
pub fn audit(
    traj: &crate::mild_solver::Trajectory,
    bound: &BoundSeries,
    tol: f64,
) -> Result<AuditReport> {
    audit_series(&traj.grid, &traj.norms, bound, tol)
}

/// [`iss_rhs`] on a time grid; an overflowing comparison function makes the
/// bound `+∞` at that time.
#[allow(clippy::too_many_arguments)]
pub fn iss_bound_series(
    p: &BoundParams,
    x0_norm: f64,
    u1: &Signal,
    u2: &Signal,
    phi: &YoungFunction,
    psi: &YoungFunction,
    times: &[f64],
) -> Result<BoundSeries> {
    BoundSeries::from_fn(times, |t| match iss_rhs(p, x0_norm, u1, u2, phi, psi, t) {
        Err(e) if e.is_numeric() => Ok(f64::INFINITY),
        other => other,
    })
}

/// Audits a trajectory started at `x0` against [`iss_bound_series`].
#[allow(clippy::too_many_arguments)]
pub fn audit_iss(
    traj: &crate::mild_solver::Trajectory,
    p: &BoundParams,
    x0_norm: f64,
    u1: &Signal,
    u2: &Signal,
    phi: &YoungFunction,
    psi: &YoungFunction,
    tol: f64,
) -> Result<AuditReport> {
    let bound = iss_bound_series(p, x0_norm, u1, u2, phi, psi, &traj.grid)?;
    audit(traj, &bound, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::random_signal;

    fn params(m_sg: f64, w: f64, m: f64, c1: f64, c2: f64) -> BoundParams {
        BoundParams::new(m_sg, w, m, c1, c2).unwrap()
    }

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(BoundParams::new(0.5, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(BoundParams::new(1.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundParams::new(1.0, 1.0, 1.0, -1.0, 1.0).is_err());
        assert!(BoundParams::new(1.0, -1.0, 1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn params_json_names() {
        let p = params(1.0, 2.0, 1.0, 3.0, 4.0);
        let js = serde_json::to_value(p).unwrap();
        assert_eq!(js["M"], 1.0);
        assert_eq!(js["omega"], 2.0);
        assert_eq!(js["C_B2"], 4.0);
    }

    #[test]
    fn beta_examples() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(beta(&p, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(beta(&p, 2.0, 0.0).unwrap(), 4.0);
        let q = params(2.0, 0.5, 1.0, 1.0, 1.0);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let b = beta(&q, 1.3, 0.5 * k as f64).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn beta_negative_rate_uses_growing_sup() {
        let p = params(1.0, -1.0, 1.0, 0.0, 0.0);
        let t: f64 = 0.7;
        let e = t.exp();
        assert!((beta(&p, 1.0, t).unwrap() - (e + 0.5 * e * e)).abs() < 1e-14);
    }

    #[test]
    fn beta_kl_in_s() {
        let p = params(1.5, 0.3, 1.0, 1.0, 1.0);
        for t in [0.0, 1.0, 10.0] {
            let mut prev = -1.0;
            for k in 0..100 {
                let b = beta(&p, 0.1 * k as f64, t).unwrap();
                assert!(b > prev);
                prev = b;
            }
        }
    }

    #[test]
    fn gamma_examples() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(gamma1(&p, 0.0).unwrap(), 0.0);
        assert!((gamma1(&p, 1.0).unwrap() - 4.0 * 4f64.exp()).abs() < 1e-12);
        assert!(matches!(gamma1(&p, 200.0), Err(IssError::Numeric(_))));
        assert_eq!(gamma2(0.0).unwrap(), 0.0);
        assert_eq!(gamma2(2.0).unwrap(), 4.0);
        assert_eq!(gamma2(1.0).unwrap(), 1.5);
        assert_eq!(gamma_fp(1.0, 0.0).unwrap(), 0.0);
        assert!((gamma_fp(1.0, 1.0).unwrap() - (std::f64::consts::E + 2.0)).abs() < 1e-14);
        assert!(gamma_fp(0.0, 1.0).is_err());
    }

    #[test]
    fn class_k_infinity_on_grid() {
        let p = params(1.0, 1.0, 0.7, 1.0, 1.0);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for k in 1..200 {
            let s = 0.2 * k as f64;
            let (x, y, z) = (gamma1(&p, s).unwrap(), gamma2(s).unwrap(), gamma_fp(2.0, s).unwrap());
            assert!(x > a && y > b && z > c);
            (a, b, c) = (x, y, z);
        }
    }

    #[test]
    fn iss_rhs_examples() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.0);
        let zero = Signal::zeros(1, iv(0.0, 1.0)).unwrap();
        let one = Signal::constant(iv(0.0, 1.0), &[1.0]).unwrap();
        let pw = YoungFunction::Power(2.0);
        let v = iss_rhs(&p, 1.0, &zero, &one, &pw, &pw, 1.0).unwrap();
        let e = (-1f64).exp();
        assert!((v - (e + 0.5 * e + 1.5)).abs() < 1e-10);

        let only_b = iss_rhs(&p, 0.7, &zero, &zero, &pw, &pw, 0.5).unwrap();
        assert_eq!(only_b, beta(&p, 0.7, 0.5).unwrap());

        let u1 = random_signal(3, 1, iv(0.0, 1.0), 8, 0.5).unwrap();
        let g = iss_rhs(&p, 0.0, &u1, &zero, &pw, &pw, 1.0).unwrap();
        let n = orlicz::luxemburg_norm(&pw, &u1, iv(0.0, 1.0), DEFAULT_TOL).unwrap();
        assert!((g - gamma1(&p, n).unwrap()).abs() < 1e-12);

        let bad = params(1.0, 0.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            iss_rhs(&bad, 1.0, &zero, &zero, &pw, &pw, 1.0),
            Err(IssError::Contract(_))
        ));
    }

    #[test]
    fn timevarying_agrees_without_u2() {
        let p = params(1.0, 1.0, 1.0, 0.5, 2.0);
        let u1 = random_signal(9, 1, iv(0.0, 2.0), 8, 0.5).unwrap();
        let zero = Signal::zeros(1, iv(0.0, 2.0)).unwrap();
        let pw = YoungFunction::Power(2.0);
        let a = iss_rhs(&p, 1.2, &u1, &zero, &pw, &pw, 1.5).unwrap();
        let b = iss_rhs_timevarying(&p, 1.2, &u1, &zero, &pw, &pw, 1.5).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert_eq!(
            iss_rhs_timevarying(&p, 1.2, &u1, &u1, &pw, &pw, 0.0).unwrap(),
            beta(&p, 1.2, 0.0).unwrap()
        );
    }

    #[test]
    fn timevarying_never_exceeds_uniform_form() {
        // Monotonicity of the norm gives
        // e^{-ωt/2}‖e^{(ω/2)·}u₂‖ ≤ ‖u₂‖ when ω > 0.
        let p = params(1.0, 1.5, 1.0, 0.3, 1.7);
        let pw = YoungFunction::PowerOverP(2.0);
        for c in [0.1, 1.0, 3.0] {
            let u2 = Signal::constant_cells(iv(0.0, 3.0), 30, &[c]).unwrap();
            let zero = Signal::zeros(1, iv(0.0, 3.0)).unwrap();
            for t in [0.5, 1.0, 3.0] {
                let tv = iss_rhs_timevarying(&p, 0.4, &zero, &u2, &pw, &pw, t).unwrap();
                let un = iss_rhs(&p, 0.4, &zero, &u2, &pw, &pw, t).unwrap();
                assert!(tv <= un * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn input_terms_monotone_in_time() {
        let p = params(1.0, 1.0, 0.5, 0.4, 0.9);
        let u1 = random_signal(12, 2, iv(0.0, 2.0), 10, 1.0).unwrap().extend_by_zero(4.0);
        let u2 = random_signal(13, 1, iv(0.0, 2.0), 10, 1.0).unwrap().extend_by_zero(4.0);
        let (phi, psi) = (YoungFunction::LogLog, YoungFunction::Power(2.0));
        let mut prev = 0.0;
        for k in 0..=40 {
            let v = iss_rhs(&p, 0.0, &u1, &u2, &phi, &psi, 0.1 * k as f64).unwrap();
            assert!(v + 1e-12 >= prev);
            prev = v;
        }
    }

    #[test]
    fn linf_constant_examples() {
        let pw = YoungFunction::Power(2.0);
        assert_eq!(linf_epsilon(&pw).unwrap(), 1.0);
        assert_eq!(linf_bound_constant(&pw, 2.0).unwrap(), 1.0);
        assert!(linf_bound_constant(&pw, 1e-9).unwrap() >= 1.999e9);
        assert!(linf_bound_constant(&pw, 0.0).is_err());
        // Ψ(x) = 10x on [0, 1e-13] then steeper: no admissible ε.
        let steep = YoungFunction::tabulated(vec![[0.0, 0.0], [1.0, 10.0]], Default::default()).unwrap();
        assert!(matches!(linf_epsilon(&steep), Err(IssError::Numeric(_))));
    }

    #[test]
    fn linf_constant_sweep() {
        let omega = 0.8;
        for psi in [YoungFunction::Power(2.0), YoungFunction::LogLog, YoungFunction::PowerOverP(3.0)] {
            let c = linf_bound_constant(&psi, omega).unwrap();
            for seed in 0..200u64 {
                let t = 0.5 + (seed % 7) as f64;
                let u = random_signal(seed, 2, iv(0.0, t), 5 + (seed % 11) as usize, 2.0).unwrap();
                let lhs = (-0.5 * omega * t).exp()
                    * orlicz::luxemburg_norm(&psi, &u.exp_weight(0.5 * omega).unwrap(), u.domain(), DEFAULT_TOL)
                        .unwrap();
                let linf = u.lp_norm(f64::INFINITY, u.domain()).unwrap();
                assert!(lhs <= c * linf * (1.0 + 1e-10), "{} seed {seed}", psi.label());
            }
        }
    }

    #[test]
    fn audit_zero_trajectory_passes() {
        let times = vec![0.0, 0.5, 1.0];
        let bound = BoundSeries { times: times.clone(), values: vec![0.0; 3] };
        let r = audit_series(&times, &[0.0; 3], &bound, 1e-6).unwrap();
        assert!(r.pass && r.max_violation <= 0.0 && r.min_slack_ratio.is_none());
        assert_eq!(r.n_points, 3);
    }

    #[test]
    fn audit_detects_violation_and_grid_mismatch() {
        let times = vec![0.0, 1.0, 2.0];
        let bound = BoundSeries { times: times.clone(), values: vec![1.0, 1.0, 1.0] };
        let r = audit_series(&times, &[0.5, 1.5, 0.9], &bound, 1e-6).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_time, 1.0);
        assert!((r.max_violation - 0.5).abs() < 1e-15);
        assert!((r.min_slack_ratio.unwrap() - 1.0 / 1.5).abs() < 1e-15);
        let ok = audit_series(&times, &[0.5, 1.0 + 1e-7, 0.9], &bound, 1e-6).unwrap();
        assert!(ok.pass);
        let other = BoundSeries { times: vec![0.0, 1.0, 2.5], values: vec![1.0; 3] };
        assert!(matches!(
            audit_series(&times, &[0.0; 3], &other, 1e-6),
            Err(IssError::Contract(_))
        ));
    }

    #[test]
    fn audit_report_json() {
        let times = vec![0.0];
        let bound = BoundSeries { times: times.clone(), values: vec![2.0] };
        let r = audit_series(&times, &[1.0], &bound, 1e-6).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        for key in ["max_violation", "min_slack_ratio", "worst_time", "n_points", "pass"] {
            assert!(js.get(key).is_some(), "{key}");
        }
    }
}
