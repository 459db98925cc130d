//! Young functions and Luxemburg norms of piecewise-constant signals.
//!
//! For a Young function `Φ` the Luxemburg norm of `u` on `I` is
//! `inf{k > 0 : ∫_I Φ(‖u(s)‖/k) ds ≤ 1}`. Because signals are piecewise
//! constant the integral is an exact finite sum, and the infimum is found by
//! bracketing plus bisection on `k`.

use serde::{Deserialize, Serialize};

use crate::error::{IssError, Result};
use crate::signals::{self, Signal};

/// Default relative tolerance for Luxemburg-norm bisection.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Knot count of numerically tabulated complementary functions.
pub const LEGENDRE_KNOTS: usize = 512;

const BRACKET_GUARD: f64 = 1e300;
const CONJ_SLOPE_MIN: f64 = 1e-6;
const CONJ_SLOPE_MAX: f64 = 1e8;

/// A time interval `[t0, t1]` with `0 ≤ t0 < t1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub t0: f64,
    pub t1: f64,
}

impl Interval {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !t0.is_finite() || !t1.is_finite() || t0 < 0.0 || t1 <= t0 {
            return Err(IssError::domain(format!(
                "invalid interval [{t0}, {t1}]: need 0 <= t0 < t1"
            )));
        }
        Ok(Interval { t0, t1 })
    }

    pub fn length(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.t0 <= other.t0 && other.t1 <= self.t1
    }
}

/// Extension of a tabulated Young function beyond its last knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Continue with the slope of the last segment.
    #[default]
    Linear,
    /// `Φ(s) = ∞` past the last knot.
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawYoung", into = "RawYoung")]
pub enum YoungFunction {
    /// `s^p`.
    Power(f64),
    /// `s^p / p`.
    PowerOverP(f64),
    /// `s · ln(ln(s + e))`.
    LogLog,
    /// `s`; Orlicz norms reduce to the `L¹` norm.
    Identity,
    /// Piecewise-linear interpolation of `(s, Φ(s))` knots starting at `(0, 0)`.
    Tabulated { knots: Vec<[f64; 2]>, tail: Tail },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawYoung {
    Power { p: f64 },
    PowerOverP { p: f64 },
    LogLog,
    Identity,
    Tabulated {
        knots: Vec<[f64; 2]>,
        #[serde(default)]
        tail: Tail,
    },
}

impl TryFrom<RawYoung> for YoungFunction {
    type Error = IssError;

    fn try_from(raw: RawYoung) -> Result<Self> {
        match raw {
            RawYoung::Power { p } => YoungFunction::power(p),
            RawYoung::PowerOverP { p } => YoungFunction::power_over_p(p),
            RawYoung::LogLog => Ok(YoungFunction::LogLog),
            RawYoung::Identity => Ok(YoungFunction::Identity),
            RawYoung::Tabulated { knots, tail } => YoungFunction::tabulated(knots, tail),
        }
    }
}

impl From<YoungFunction> for RawYoung {
    fn from(y: YoungFunction) -> Self {
        match y {
            YoungFunction::Power(p) => RawYoung::Power { p },
            YoungFunction::PowerOverP(p) => RawYoung::PowerOverP { p },
            YoungFunction::LogLog => RawYoung::LogLog,
            YoungFunction::Identity => RawYoung::Identity,
            YoungFunction::Tabulated { knots, tail } => RawYoung::Tabulated { knots, tail },
        }
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !p.is_finite() || p <= 1.0 {
        return Err(IssError::domain(format!("exponent must be finite and > 1, got {p}")));
    }
    Ok(())
}

impl YoungFunction {
    pub fn power(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(YoungFunction::Power(p))
    }

    pub fn power_over_p(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(YoungFunction::PowerOverP(p))
    }

    /// Validated tabulated Young function. A missing `(0, 0)` knot is
    /// prepended; knots must be strictly increasing in `s`, non-negative,
    /// non-decreasing and convex.
    pub fn tabulated(mut knots: Vec<[f64; 2]>, tail: Tail) -> Result<Self> {
        if knots.iter().flatten().any(|v| !v.is_finite()) {
            return Err(IssError::data("non-finite knot in tabulated Young function"));
        }
        match knots.first() {
            None => return Err(IssError::data("tabulated Young function needs knots")),
            Some(k) if k[0] < 0.0 => return Err(IssError::data("knots must have s >= 0")),
            Some(k) if k[0] == 0.0 && k[1] != 0.0 => {
                return Err(IssError::data("tabulated Young function must vanish at 0"))
            }
            Some(k) if k[0] > 0.0 => knots.insert(0, [0.0, 0.0]),
            _ => {}
        }
        if knots.len() < 2 {
            return Err(IssError::data("tabulated Young function needs two knots"));
        }
        let mut prev_slope = 0.0f64;
        for w in knots.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(IssError::data("knot abscissae must be strictly increasing"));
            }
            let slope = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
            if slope < -1e-12 * w[1][1].abs().max(1.0) {
                return Err(IssError::data("tabulated Young function must be non-decreasing"));
            }
            if slope < prev_slope - 1e-9 * prev_slope.abs().max(1e-300) {
                return Err(IssError::data("tabulated Young function must be convex"));
            }
            prev_slope = prev_slope.max(slope);
        }
        Ok(YoungFunction::Tabulated { knots, tail })
    }

    /// Short name used in reports.
    pub fn label(&self) -> String {
        match self {
            YoungFunction::Power(p) => format!("power({p})"),
            YoungFunction::PowerOverP(p) => format!("power_over_p({p})"),
            YoungFunction::LogLog => "log_log".into(),
            YoungFunction::Identity => "identity".into(),
            YoungFunction::Tabulated { knots, .. } => format!("tabulated({} knots)", knots.len()),
        }
    }

    /// `Φ(s)`; negative `s` is a domain error.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 {
            return Err(IssError::domain(format!("Young function argument must be >= 0, got {s}")));
        }
        Ok(self.eval_unchecked(s))
    }

    /// `Φ(s)` for `s ≥ 0` (including `+∞`).
    pub(crate) fn eval_unchecked(&self, s: f64) -> f64 {
        match self {
            YoungFunction::Power(p) => s.powf(*p),
            YoungFunction::PowerOverP(p) => s.powf(*p) / p,
            YoungFunction::LogLog => {
                if s == 0.0 {
                    0.0
                } else {
                    s * (s + std::f64::consts::E).ln().ln()
                }
            }
            YoungFunction::Identity => s,
            YoungFunction::Tabulated { knots, tail } => tab_eval(knots, *tail, s),
        }
    }

    /// Right derivative `Φ'(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            YoungFunction::Power(p) => p * s.powf(p - 1.0),
            YoungFunction::PowerOverP(p) => s.powf(p - 1.0),
            YoungFunction::LogLog => {
                let l = (s + std::f64::consts::E).ln();
                l.ln() + s / ((s + std::f64::consts::E) * l)
            }
            YoungFunction::Identity => 1.0,
            YoungFunction::Tabulated { knots, tail } => {
                let n = knots.len();
                if s >= knots[n - 1][0] {
                    return match tail {
                        Tail::Infinite => f64::INFINITY,
                        Tail::Linear => seg_slope(knots, n - 2),
                    };
                }
                let j = knots.partition_point(|k| k[0] <= s);
                seg_slope(knots, j.max(1) - 1)
            }
        }
    }
}

fn seg_slope(knots: &[[f64; 2]], i: usize) -> f64 {
    (knots[i + 1][1] - knots[i][1]) / (knots[i + 1][0] - knots[i][0])
}

fn tab_eval(knots: &[[f64; 2]], tail: Tail, s: f64) -> f64 {
    let n = knots.len();
    let last = knots[n - 1];
    if s >= last[0] {
        if s == last[0] {
            return last[1];
        }
        return match tail {
            Tail::Infinite => f64::INFINITY,
            Tail::Linear => last[1] + seg_slope(knots, n - 2) * (s - last[0]),
        };
    }
    let j = knots.partition_point(|k| k[0] <= s).max(1);
    let (a, b) = (knots[j - 1], knots[j]);
    a[1] + (b[1] - a[1]) * (s - a[0]) / (b[0] - a[0])
}

/// `Φ(s)`.
pub fn eval_young(phi: &YoungFunction, s: f64) -> Result<f64> {
    phi.eval(s)
}

/// The complementary Young function `Φ̃(s) = sup_{t≥0}(st − Φ(t))`.
///
/// `PowerOverP(p)` maps to `PowerOverP(p/(p−1))`. Tabulated inputs get their
/// exact piecewise-linear conjugate. `Power` and `LogLog` get a numerical
/// Legendre table (see [`legendre_table`]). `Identity` has no complementary
/// Young function.
pub fn complementary(phi: &YoungFunction) -> Result<YoungFunction> {
    match phi {
        YoungFunction::PowerOverP(p) => YoungFunction::power_over_p(p / (p - 1.0)),
        YoungFunction::Identity => Err(IssError::unsupported(
            "the identity Young function has no complementary Young function",
        )),
        YoungFunction::Tabulated { knots, tail } => tabulated_conjugate(knots, *tail),
        YoungFunction::Power(_) | YoungFunction::LogLog => legendre_table(phi),
    }
}

/// Numerical Legendre transform of a smooth Young function as a tabulated
/// function with [`LEGENDRE_KNOTS`] knots.
///
/// Knots sit on a log grid of slopes `s` from `1e-6` up to `1e8` (or the
/// largest slope `Φ'` reaches before `Φ` overflows); each value is
/// [`legendre_value`]. Linear interpolation between points on a convex graph
/// overestimates `Φ̃`, and the tail is infinite, so norms computed with the
/// table are upper bounds of the exact ones.
pub fn legendre_table(phi: &YoungFunction) -> Result<YoungFunction> {
    if matches!(phi, YoungFunction::Identity) {
        return Err(IssError::unsupported("identity has no Legendre transform"));
    }
    let finite = |t: f64| {
        let d = phi.derivative(t);
        d.is_finite() && phi.eval_unchecked(t).is_finite() && (t * d).is_finite()
    };
    let mut t_max = 1.0;
    while t_max * 10.0 <= BRACKET_GUARD && finite(t_max * 10.0) {
        t_max *= 10.0;
    }
    let s_hi = phi.derivative(t_max).min(CONJ_SLOPE_MAX);
    let s_lo = CONJ_SLOPE_MIN.max(phi.derivative(0.0));
    if !(s_hi > s_lo) {
        return Err(IssError::numeric("Young function slope range too narrow to tabulate"));
    }
    let mut knots = vec![[0.0, 0.0]];
    for s in geometric_grid(s_lo, s_hi, LEGENDRE_KNOTS) {
        let v = legendre_value(phi, s)?;
        let last = knots[knots.len() - 1];
        if v.is_finite() && s > last[0] && v >= last[1] {
            knots.push([s, v]);
        }
    }
    YoungFunction::tabulated(knots, Tail::Infinite)
}

fn tabulated_conjugate(knots: &[[f64; 2]], tail: Tail) -> Result<YoungFunction> {
    let n = knots.len();
    let mut out: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    let mut push = |y: f64, v: f64| {
        let last = out[out.len() - 1];
        if y > last[0] {
            out.push([y, v.max(last[1])]);
        }
    };
    for i in 0..n - 1 {
        let m = seg_slope(knots, i);
        push(m, m * knots[i][0] - knots[i][1]);
    }
    let conj_tail = match tail {
        Tail::Linear => Tail::Infinite,
        Tail::Infinite => {
            let m = seg_slope(knots, n - 2) + 1.0;
            push(m, m * knots[n - 1][0] - knots[n - 1][1]);
            Tail::Linear
        }
    };
    if out.len() < 2 {
        return Err(IssError::unsupported(
            "tabulated function is linear; its conjugate is not a Young function",
        ));
    }
    YoungFunction::tabulated(out, conj_tail)
}

/// Pointwise `Φ̃(s)`: closed form for `PowerOverP`, exact for tabulated
/// inputs, and [`legendre_value`] otherwise.
pub fn conjugate_value(phi: &YoungFunction, s: f64) -> Result<f64> {
    match phi {
        YoungFunction::PowerOverP(p) => {
            if s.is_nan() || s < 0.0 {
                return Err(IssError::domain("conjugate argument must be >= 0"));
            }
            let q = p / (p - 1.0);
            Ok(s.powf(q) / q)
        }
        YoungFunction::Tabulated { .. } => complementary(phi)?.eval(s),
        _ => legendre_value(phi, s),
    }
}

/// `sup_{t≥0}(st − Φ(t))` evaluated at the root of `Φ'(t) = s`, found by
/// bisection. Returns `+∞` when `Φ'` stays below `s` up to `t = 1e300`.
pub fn legendre_value(phi: &YoungFunction, s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(IssError::domain("conjugate argument must be >= 0"));
    }
    if let YoungFunction::Identity = phi {
        return Err(IssError::unsupported("identity has no Legendre transform"));
    }
    if s == 0.0 || phi.derivative(0.0) >= s {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phi.derivative(hi) < s {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_GUARD {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..2000 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if phi.derivative(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok((s * t - phi.eval_unchecked(t)).max(0.0))
}

/// Luxemburg norm of `u` on `iv`.
///
/// Bisection stops once the bracket width is at most `tol · k`; the upper end
/// is returned, so `∫Φ(‖u‖/k) ≤ 1` holds for the returned `k`.
pub fn luxemburg_norm(phi: &YoungFunction, u: &Signal, iv: Interval, tol: f64) -> Result<f64> {
    let pieces = u.pieces(iv)?;
    luxemburg_from_pieces(phi, &pieces, tol)
}

/// Luxemburg norm of a piecewise-constant scalar given as
/// `(length, magnitude)` pairs.
pub fn luxemburg_from_pieces(phi: &YoungFunction, pieces: &[(f64, f64)], tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(IssError::domain(format!("tolerance must be positive, got {tol}")));
    }
    if pieces
        .iter()
        .any(|&(l, a)| !l.is_finite() || !a.is_finite() || l < 0.0)
    {
        return Err(IssError::data("non-finite or negative piece in norm computation"));
    }
    let amax = pieces.iter().map(|&(_, a)| a.abs()).fold(0.0, f64::max);
    if amax == 0.0 {
        return Ok(0.0);
    }
    if let YoungFunction::Identity = phi {
        return Ok(pieces.iter().map(|&(l, a)| l * a.abs()).sum());
    }
    // Work with magnitudes scaled into [0, 1] so the result is homogeneous
    // up to rounding.
    let scaled: Vec<(f64, f64)> = pieces
        .iter()
        .filter(|&&(l, a)| l > 0.0 && a != 0.0)
        .map(|&(l, a)| (l, a.abs() / amax))
        .collect();
    let modular = |k: f64| -> f64 {
        let s: f64 = scaled.iter().map(|&(l, b)| l * phi.eval_unchecked(b / k)).sum();
        if s.is_nan() {
            f64::INFINITY
        } else {
            s
        }
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    if modular(1.0) <= 1.0 {
        loop {
            lo *= 0.5;
            if lo < 1.0 / BRACKET_GUARD {
                return Err(IssError::numeric("Luxemburg bracket not found (norm underflows)"));
            }
            if modular(lo) > 1.0 {
                break;
            }
            hi = lo;
        }
    } else {
        loop {
            hi *= 2.0;
            if hi > BRACKET_GUARD / amax.max(1.0) {
                return Err(IssError::numeric("Luxemburg bracket not found (norm overflows)"));
            }
            if modular(hi) <= 1.0 {
                break;
            }
            lo = hi;
        }
    }
    for _ in 0..500 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if modular(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi * amax)
}

/// Lower bound of the dual (Orlicz) form `sup{∫‖u‖|v| : ∫Φ̃(|v|) ≤ 1}`.
///
/// Up to `budget` piecewise-constant test functions `w` on the grid of `u`
/// are tried, each rescaled by its `Φ̃`-Luxemburg norm. The candidates, in
/// order: `w = ‖u‖`, `w = 1`, `w = Φ'(‖u‖/k)` with `k` the Luxemburg norm of
/// `u`, then powers `‖u‖^α`, then indicators of single cells.
pub fn dual_norm_lower_bound(
    phi: &YoungFunction,
    u: &Signal,
    iv: Interval,
    budget: usize,
) -> Result<f64> {
    if budget == 0 {
        return Err(IssError::domain("dual norm budget must be at least 1"));
    }
    let psi = complementary(phi)?;
    let pieces = u.pieces(iv)?;
    if pieces.iter().all(|&(_, a)| a == 0.0) {
        return Ok(0.0);
    }
    let k_lux = luxemburg_from_pieces(phi, &pieces, DEFAULT_TOL)?;
    let mut candidates: Vec<Vec<f64>> = vec![
        pieces.iter().map(|&(_, a)| a).collect(),
        vec![1.0; pieces.len()],
        pieces.iter().map(|&(_, a)| phi.derivative(a / k_lux)).collect(),
    ];
    for alpha in [0.5, 2.0, 0.25, 3.0, 1.5, 4.0] {
        candidates.push(pieces.iter().map(|&(_, a)| a.powf(alpha)).collect());
    }
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&i, &j| (pieces[j].0 * pieces[j].1).total_cmp(&(pieces[i].0 * pieces[i].1)));
    for i in order {
        let mut w = vec![0.0; pieces.len()];
        w[i] = 1.0;
        candidates.push(w);
    }
    let mut best = 0.0f64;
    for w in candidates.into_iter().take(budget) {
        if w.iter().any(|x| !x.is_finite()) {
            continue;
        }
        let wp: Vec<(f64, f64)> = pieces.iter().zip(&w).map(|(&(l, _), &x)| (l, x)).collect();
        let kw = luxemburg_from_pieces(&psi, &wp, DEFAULT_TOL)?;
        if kw == 0.0 {
            continue;
        }
        let pairing: f64 = pieces.iter().zip(&w).map(|(&(l, a), &x)| l * a * x).sum();
        best = best.max(pairing / kw);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta2Report {
    pub satisfied: bool,
    /// Largest observed `Φ(2s)/Φ(s)` (may be `+∞`).
    pub k: f64,
}

/// Number of points in the default Δ₂ grid.
pub const DELTA2_POINTS: usize = 200;
/// Upper end of the default Δ₂ grid.
pub const DELTA2_S_MAX: f64 = 1e6;

/// Empirical Δ₂ check: `K = max Φ(2s)/Φ(s)` over the grid, and a
/// divergence test comparing the largest ratio on the upper half of the grid
/// with the lower half. `grid = None` uses 200 geometric points from
/// `max(s0, 1e-6)` to `1e6`.
pub fn check_delta2(phi: &YoungFunction, s0: f64, grid: Option<&[f64]>) -> Result<Delta2Report> {
    if s0.is_nan() || s0 < 0.0 {
        return Err(IssError::domain("s0 must be >= 0"));
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = geometric_grid(s0.max(1e-6), DELTA2_S_MAX.max(s0.max(1e-6)), DELTA2_POINTS);
            &owned
        }
    };
    if grid.is_empty() {
        return Err(IssError::domain("Δ₂ grid must be nonempty"));
    }
    if grid.iter().any(|&s| !(s >= s0) || !s.is_finite()) {
        return Err(IssError::domain("Δ₂ grid points must lie in [s0, ∞)"));
    }
    let mut ratios = Vec::with_capacity(grid.len());
    let mut satisfied = true;
    for &s in grid {
        let a = phi.eval_unchecked(s);
        let b = phi.eval_unchecked(2.0 * s);
        let r = if a == 0.0 {
            if b > 0.0 {
                satisfied = false;
                f64::INFINITY
            } else {
                continue;
            }
        } else {
            b / a
        };
        if !r.is_finite() {
            satisfied = false;
        }
        ratios.push(if r.is_nan() { f64::INFINITY } else { r });
    }
    let k = ratios.iter().copied().fold(0.0, f64::max);
    if ratios.len() >= 2 {
        let half = ratios.len() / 2;
        let lower = ratios[..half].iter().copied().fold(0.0, f64::max);
        let upper = ratios[half..].iter().copied().fold(0.0, f64::max);
        if upper > lower * (1.0 + 1e-6) {
            satisfied = false;
        }
    }
    Ok(Delta2Report { satisfied: satisfied && k.is_finite(), k })
}

pub(crate) fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 || a == b {
        return vec![a; n.min(1)];
    }
    let r = (b / a).ln();
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a * (r * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Both sides of the generalized Hölder inequality
/// `∫‖u‖‖v‖ ≤ 2‖u‖_Φ ‖v‖_Φ̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderPair {
    pub lhs: f64,
    pub rhs: f64,
}

impl HolderPair {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

pub fn holder_pair(u: &Signal, v: &Signal, phi: &YoungFunction, iv: Interval) -> Result<HolderPair> {
    let psi = complementary(phi)?;
    let lhs = signals::inner_abs(u, v, iv)?;
    let nu = luxemburg_norm(phi, u, iv, DEFAULT_TOL)?;
    let nv = luxemburg_norm(&psi, v, iv, DEFAULT_TOL)?;
    Ok(HolderPair { lhs, rhs: 2.0 * nu * nv })
}

/// Norm of `u` on `[t, t + delta]`; zero for `delta = 0`.
pub fn small_interval_norm(phi: &YoungFunction, u: &Signal, t: f64, delta: f64) -> Result<f64> {
    if delta.is_nan() || delta < 0.0 {
        return Err(IssError::domain("delta must be >= 0"));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    luxemburg_norm(phi, u, Interval::new(t, t + delta)?, DEFAULT_TOL)
}
