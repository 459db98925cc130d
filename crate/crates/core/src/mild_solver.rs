//! Picard iteration of the variation-of-constants formula
//! `x(t) = T(t − t₀)x₀ + ∫_{t₀}^t T(t − s)[B₁F(x(s), u₁(s)) + B₂u₂(s)] ds`
//! on finite-dimensional models.
//!
//! The convolution uses the composite trapezoid rule on a node grid
//! `{t₀ + k·h} ∪ {signal breakpoints}`, with the semigroup applied exactly:
//! across a cell of width `h`,
//! `x_{j+1} = T(h)(x_j + (h/2) g_j) + (h/2) g_{j+1}` where `g` is evaluated on
//! the previous iterate. Each subinterval `[t_i, t_i + δ]` is iterated until
//! successive iterates agree to `tol`, with `δ` chosen from the local
//! existence conditions:
//!
//! 1. `e^{ω_g δ} ≤ 2`,
//! 2. `m C ‖u₁‖_{Φ, [t_i, t_i+δ]} ≤ 1/2`,
//! 3. `C ‖u₂‖_{Ψ, [t_i, t_i+δ]} ≤ M_g`,
//! 4. `C L_k ‖u₁‖_{Φ, [t_i, t_i+δ]} < 1` with `k = 4 M_g ‖x(t_i)‖ + 2 M_g`,
//!
//! where `‖T(t)‖ ≤ M_g e^{ω_g t}` and `C` is the model's admissibility
//! surrogate. Condition 3 only bounds the invariant ball; it is enforced
//! anyway.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{IssError, Result};
use crate::orlicz::{self, YoungFunction};
use crate::signals::Signal;
use crate::{euclid_norm, rng};

/// A finite-dimensional system `x' = Ax + B₁F(x, u₁) + B₂u₂`.
pub trait SystemModel: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    /// Dimensions of `u₁` and `u₂`.
    fn input_dims(&self) -> (usize, usize);
    /// `T(t)x`.
    fn apply_semigroup(&self, t: f64, x: &[f64]) -> Vec<f64>;
    fn apply_b1(&self, y: &[f64]) -> Vec<f64>;
    fn apply_b2(&self, v: &[f64]) -> Vec<f64>;
    /// `F(x, u₁)`.
    fn bilinear(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// `m` with `‖F(x, u)‖ ≤ m‖x‖‖u‖`.
    fn bilinear_bound(&self) -> f64;
    /// `L_k` with `‖F(x, u) − F(y, u)‖ ≤ L_k ‖u‖ ‖x − y‖` on the ball of
    /// radius `k`.
    fn lipschitz(&self, radius: f64) -> f64;
    /// `(M_g, ω_g)` with `‖T(t)‖ ≤ M_g e^{ω_g t}` and `ω_g ≥ 0`.
    fn growth_type(&self) -> (f64, f64);
    /// Upper bound on the admissibility constant of `B₁` and `B₂` with
    /// respect to the step norms over horizons up to one.
    fn admissibility_surrogate(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Sup-norm stopping tolerance of the Picard iteration.
    pub tol: f64,
    /// Target quadrature cell width.
    pub quad_step: f64,
    pub blowup_threshold: f64,
    pub max_iter: usize,
    /// Young function for the `u₁` step conditions.
    pub step_phi: YoungFunction,
    /// Young function for the `u₂` step condition.
    pub step_psi: YoungFunction,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            quad_step: 1.0 / 16384.0,
            blowup_threshold: 1e12,
            max_iter: 200,
            step_phi: YoungFunction::Identity,
            step_psi: YoungFunction::Identity,
        }
    }
}

/// Smallest admissible subinterval or cell width.
pub const DELTA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Complete,
    BlowUp { t_max_estimate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model_id: String,
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub quad_step: f64,
    pub n_points: usize,
    #[serde(flatten)]
    pub status: SolveStatus,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    pub fn final_time(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Index of the grid point equal to `t` (within `1e-12` relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let slack = 1e-12 * t.abs().max(1.0);
        let i = self.grid.partition_point(|&g| g < t - slack);
        (i < self.grid.len() && (self.grid[i] - t).abs() <= slack).then_some(i)
    }

    /// Every `stride`-th point plus the last one.
    pub fn thinned(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let n = self.grid.len();
        let keep: Vec<usize> = (0..n).filter(|i| i % stride == 0 || *i == n - 1).collect();
        Trajectory {
            grid: keep.iter().map(|&i| self.grid[i]).collect(),
            states: keep.iter().map(|&i| self.states[i].clone()).collect(),
            norms: keep.iter().map(|&i| self.norms[i]).collect(),
            status: self.status,
        }
    }

    /// CSV with columns `t, norm` and, if requested, `x_1..x_n`.
    pub fn write_csv<W: Write>(&self, w: W, full_state: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let dim = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string(), "norm".to_string()];
        if full_state {
            header.extend((1..=dim).map(|k| format!("x_{k}")));
        }
        let csv_err = |e: csv::Error| IssError::data(format!("csv: {e}"));
        wr.write_record(&header).map_err(csv_err)?;
        for ((t, x), n) in self.grid.iter().zip(&self.states).zip(&self.norms) {
            let mut row = vec![crate::format_float(*t), crate::format_float(*n)];
            if full_state {
                row.extend(x.iter().map(|&v| crate::format_float(v)));
            }
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| IssError::data(e.to_string()))
    }

    pub fn metadata(&self, model_id: &str, seeds: &[u64], opts: &SolverOptions) -> TrajectoryMeta {
        TrajectoryMeta {
            model_id: model_id.to_string(),
            seeds: seeds.to_vec(),
            tol: opts.tol,
            quad_step: opts.quad_step,
            n_points: self.grid.len(),
            status: self.status,
        }
    }
}

/// First grid time whose state norm exceeds `threshold`.
pub fn detect_blowup(traj: &Trajectory, threshold: f64) -> Option<f64> {
    traj.grid
        .iter()
        .zip(&traj.norms)
        .find(|(_, &n)| n > threshold || n.is_nan())
        .map(|(&t, _)| t)
}

/// Solves on `[0, t_end]` with default options and the given tolerance.
pub fn solve_mild(
    model: &dyn SystemModel,
    x0: &[f64],
    u1: &Signal,
    u2: &Signal,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory> {
    let opts = SolverOptions { tol, ..SolverOptions::default() };
    solve_mild_from(model, 0.0, x0, u1, u2, t_end, &opts)
}

/// Solves on `[t0, t_end]` starting from `x(t0) = x0`. The node grid is
/// anchored at multiples of `opts.quad_step`, so a restart at a node time
/// reuses the nodes of an uninterrupted solve.
pub fn solve_mild_from(
    model: &dyn SystemModel,
    t0: f64,
    x0: &[f64],
    u1: &Signal,
    u2: &Signal,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    check_inputs(model, t0, x0, u1, u2, t_end, opts)?;
    let mut nodes = node_grid(t0, t_end, opts.quad_step, u1, u2);

    let mut traj = Trajectory {
        grid: vec![t0],
        states: vec![x0.to_vec()],
        norms: vec![euclid_norm(x0)],
        status: SolveStatus::Complete,
    };
    if traj.norms[0] > opts.blowup_threshold {
        traj.status = SolveStatus::BlowUp { t_max_estimate: t0 };
        return Ok(traj);
    }

    let mut i = 0;
    while i + 1 < nodes.len() {
        let xi = traj.states[traj.states.len() - 1].clone();
        let delta = select_step(model, u1, u2, nodes[i], euclid_norm(&xi), t_end, opts)?;
        let target = nodes[i] + delta;
        let mut j = nodes.partition_point(|&t| t <= target * (1.0 + 1e-14)) - 1;
        if j <= i {
            nodes.insert(i + 1, target);
            j = i + 1;
        }
        let segment = loop {
            match picard(model, &nodes[i..=j], &xi, u1, u2, opts) {
                Some(seg) => break seg,
                None if j > i + 1 => j = i + (j - i) / 2,
                None => {
                    let mid = 0.5 * (nodes[i] + nodes[i + 1]);
                    if nodes[i + 1] - nodes[i] < 2.0 * DELTA_FLOOR {
                        return Err(IssError::numeric(format!(
                            "Picard iteration does not contract at t = {} (|x| = {:.3e}) \
                             even on cells below {DELTA_FLOOR:e}",
                            nodes[i],
                            euclid_norm(&xi)
                        )));
                    }
                    nodes.insert(i + 1, mid);
                    j = i + 1;
                }
            }
        };
        for (k, x) in segment.into_iter().enumerate().skip(1) {
            let n = euclid_norm(&x);
            traj.grid.push(nodes[i + k]);
            traj.states.push(x);
            traj.norms.push(n);
            if !(n <= opts.blowup_threshold) {
                traj.status = SolveStatus::BlowUp { t_max_estimate: nodes[i + k] };
                return Ok(traj);
            }
        }
        i = j;
    }
    Ok(traj)
}

fn check_inputs(
    model: &dyn SystemModel,
    t0: f64,
    x0: &[f64],
    u1: &Signal,
    u2: &Signal,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<()> {
    if !(opts.tol > 0.0) || !(opts.quad_step > 0.0) || opts.max_iter == 0 {
        return Err(IssError::domain("tol, quad_step and max_iter must be positive"));
    }
    if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(IssError::domain(format!("need t0 < t_end, got [{t0}, {t_end}]")));
    }
    if x0.len() != model.dim() {
        return Err(IssError::domain("initial state has wrong dimension"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IssError::data("non-finite initial state"));
    }
    let (d1, d2) = model.input_dims();
    for (u, d, name) in [(u1, d1, "u1"), (u2, d2, "u2")] {
        if u.dim() != d {
            return Err(IssError::domain(format!("{name} has dimension {}, model expects {d}", u.dim())));
        }
        let dom = u.domain();
        let slack = 1e-12 * t_end.abs().max(1.0);
        if dom.t0 > t0 + slack || dom.t1 < t_end - slack {
            return Err(IssError::domain(format!(
                "{name} is defined on [{}, {}], shorter than [{t0}, {t_end}]",
                dom.t0, dom.t1
            )));
        }
    }
    Ok(())
}

fn node_grid(t0: f64, t_end: f64, h: f64, u1: &Signal, u2: &Signal) -> Vec<f64> {
    let k0 = (t0 / h).floor() as i64 + 1;
    let k1 = (t_end / h).ceil() as i64;
    let mut nodes: Vec<f64> = std::iter::once(t0)
        .chain((k0..k1).map(|k| k as f64 * h).filter(|&t| t > t0 && t < t_end))
        .chain(u1.breakpoints_between(t0, t_end))
        .chain(u2.breakpoints_between(t0, t_end))
        .chain(std::iter::once(t_end))
        .collect();
    nodes.sort_by(f64::total_cmp);
    let scale = 1e-13 * t_end.abs().max(1.0);
    nodes.dedup_by(|b, a| (*b - *a).abs() <= scale);
    let n = nodes.len();
    nodes[n - 1] = t_end;
    nodes
}

fn clipped_norm(phi: &YoungFunction, u: &Signal, t: f64, delta: f64) -> Result<f64> {
    let d = delta.min(u.domain().t1 - t);
    if d <= 0.0 {
        return Ok(0.0);
    }
    orlicz::small_interval_norm(phi, u, t, d)
}

/// Largest `δ` in `(0, min(1, t_end − t))` meeting the local existence
/// conditions at `t` for a state of norm `r`.
pub fn select_step(
    model: &dyn SystemModel,
    u1: &Signal,
    u2: &Signal,
    t: f64,
    r: f64,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let (mg, wg) = model.growth_type();
    let mut dmax = (t_end - t).min(1.0);
    if wg > 0.0 {
        dmax = dmax.min(std::f64::consts::LN_2 / wg);
    }
    let c = model.admissibility_surrogate();
    let m = model.bilinear_bound();
    let lk = model.lipschitz(4.0 * mg * r + 2.0 * mg);
    let ok = |d: f64| -> Result<bool> {
        let n1 = clipped_norm(&opts.step_phi, u1, t, d)?;
        let n2 = clipped_norm(&opts.step_psi, u2, t, d)?;
        Ok(m * c * n1 <= 0.5 && c * n2 <= mg && c * lk * n1 < 1.0)
    };
    if ok(dmax)? {
        return Ok(dmax);
    }
    let (mut lo, mut hi) = (0.0, dmax);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    if lo < DELTA_FLOOR {
        return Err(IssError::numeric(format!(
            "step conditions force delta below {DELTA_FLOOR:e} at t = {t}"
        )));
    }
    Ok(lo)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Picard iteration on the nodes `s`; `None` if it has not converged after
/// `max_iter` sweeps.
fn picard(
    model: &dyn SystemModel,
    s: &[f64],
    x0: &[f64],
    u1: &Signal,
    u2: &Signal,
    opts: &SolverOptions,
) -> Option<Vec<Vec<f64>>> {
    let cells = s.len() - 1;
    let mut u1c = Vec::with_capacity(cells);
    let mut b2u2 = Vec::with_capacity(cells);
    for w in s.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        u1c.push(u1.value_at(mid).expect("checked domain").to_vec());
        b2u2.push(model.apply_b2(u2.value_at(mid).expect("checked domain")));
    }
    let forcing = |x: &[f64], c: usize| -> Vec<f64> {
        let mut g = model.apply_b1(&model.bilinear(x, &u1c[c]));
        axpy(&mut g, 1.0, &b2u2[c]);
        g
    };

    // Free response T(s - s_0)x_0, applied directly rather than compounded.
    let free: Vec<Vec<f64>> = s.iter().map(|&t| model.apply_semigroup(t - s[0], x0)).collect();
    let mut old = free.clone();

    for _ in 0..opts.max_iter {
        let mut new: Vec<Vec<f64>> = Vec::with_capacity(s.len());
        new.push(x0.to_vec());
        let mut conv = vec![0.0; x0.len()];
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for c in 0..cells {
            let h = s[c + 1] - s[c];
            axpy(&mut conv, 0.5 * h, &forcing(&old[c], c));
            conv = model.apply_semigroup(h, &conv);
            axpy(&mut conv, 0.5 * h, &forcing(&old[c + 1], c));
            let mut next = free[c + 1].clone();
            axpy(&mut next, 1.0, &conv);
            let d: Vec<f64> = next.iter().zip(&old[c + 1]).map(|(a, b)| a - b).collect();
            diff = diff.max(euclid_norm(&d));
            scale = scale.max(euclid_norm(&next));
            new.push(next);
        }
        if !diff.is_finite() {
            return None;
        }
        let tol = opts.tol.max(16.0 * f64::EPSILON * scale);
        old = new;
        if diff <= tol {
            return Some(old);
        }
    }
    None
}

/// Probes the structural assumptions of a model: `T(0) = I`, the semigroup
/// law within `1e-10` relative, and `‖F(x, u)‖ ≤ m‖x‖‖u‖`.
pub fn check_model_contract(model: &dyn SystemModel, seed: u64, probes: usize) -> Result<()> {
    let mut r = rng::seeded(seed, 7);
    let n = model.dim();
    let (d1, _) = model.input_dims();
    for _ in 0..probes {
        let x: Vec<f64> = (0..n).map(|_| r.symmetric(1.0)).collect();
        let u: Vec<f64> = (0..d1).map(|_| r.symmetric(2.0)).collect();
        let (a, b) = (r.uniform(0.0, 0.5), r.uniform(0.0, 0.5));
        let nx = euclid_norm(&x);

        let id = model.apply_semigroup(0.0, &x);
        let e: Vec<f64> = id.iter().zip(&x).map(|(p, q)| p - q).collect();
        if euclid_norm(&e) > 1e-14 * nx {
            return Err(IssError::contract(format!("{}: T(0) is not the identity", model.id())));
        }

        let direct = model.apply_semigroup(a + b, &x);
        let composed = model.apply_semigroup(a, &model.apply_semigroup(b, &x));
        let e: Vec<f64> = direct.iter().zip(&composed).map(|(p, q)| p - q).collect();
        if euclid_norm(&e) > 1e-10 * euclid_norm(&direct).max(1e-300) {
            return Err(IssError::contract(format!("{}: semigroup law violated", model.id())));
        }

        let f = model.bilinear(&x, &u);
        if euclid_norm(&f) > model.bilinear_bound() * nx * euclid_norm(&u) * (1.0 + 1e-12) {
            return Err(IssError::contract(format!("{}: |F(x,u)| exceeds m|x||u|", model.id())));
        }
    }
    Ok(())
}
