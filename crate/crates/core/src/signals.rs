//! Piecewise-constant, vector-valued time signals.
//!
//! A [`Signal`] stores strictly increasing breakpoints `t_0 < … < t_n` and one
//! vector per cell `[t_i, t_{i+1})`. All norms and integrals of signals are
//! therefore exact sums of rectangle terms.

use serde::{Deserialize, Serialize};

use crate::error::{IssError, Result};
use crate::orlicz::Interval;
use crate::rng;

/// Slack used when checking that an interval lies inside a signal domain.
const DOMAIN_SLACK: f64 = 1e-12;

/// Largest exponent accepted by [`Signal::exp_weight`].
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalEnvelope", into = "SignalEnvelope")]
pub struct Signal {
    grid: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

/// JSON form of a signal: `{dim, grid, values: [[v_1..v_d], …]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalEnvelope {
    pub dim: usize,
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TryFrom<SignalEnvelope> for Signal {
    type Error = IssError;

    fn try_from(env: SignalEnvelope) -> Result<Self> {
        let sig = Signal::new(env.grid, env.values)?;
        if sig.dim != env.dim {
            return Err(IssError::data(format!(
                "envelope dim {} does not match value width {}",
                env.dim, sig.dim
            )));
        }
        Ok(sig)
    }
}

impl From<Signal> for SignalEnvelope {
    fn from(sig: Signal) -> Self {
        let values = (0..sig.cells()).map(|i| sig.cell(i).to_vec()).collect();
        SignalEnvelope { dim: sig.dim, grid: sig.grid, values }
    }
}

impl Signal {
    /// Builds a signal from breakpoints and one vector per cell.
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map(|v| v.len()).unwrap_or(0);
        if values.iter().any(|v| v.len() != dim) {
            return Err(IssError::data("cell vectors have differing dimensions"));
        }
        let flat = values.into_iter().flatten().collect();
        Self::from_flat(grid, flat, dim)
    }

    /// Builds a signal from breakpoints and row-major cell values.
    pub fn from_flat(grid: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(IssError::data("signal dimension must be at least 1"));
        }
        if grid.len() < 2 {
            return Err(IssError::data("signal grid needs at least two breakpoints"));
        }
        if grid.iter().any(|t| !t.is_finite()) {
            return Err(IssError::data("non-finite breakpoint"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IssError::data("signal grid must be strictly increasing"));
        }
        if values.len() != (grid.len() - 1) * dim {
            return Err(IssError::data(format!(
                "expected {} values for {} cells of dimension {}, got {}",
                (grid.len() - 1) * dim,
                grid.len() - 1,
                dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IssError::data("non-finite signal sample"));
        }
        Ok(Signal { grid, values, dim })
    }

    /// Signal with a single cell on `iv` holding `value`.
    pub fn constant(iv: Interval, value: &[f64]) -> Result<Self> {
        Self::constant_cells(iv, 1, value)
    }

    /// Constant signal split into `cells` equal cells.
    pub fn constant_cells(iv: Interval, cells: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(iv, cells, value.len(), |_| value.to_vec())
    }

    pub fn zeros(dim: usize, iv: Interval) -> Result<Self> {
        Self::constant(iv, &vec![0.0; dim])
    }

    /// Uniform-grid signal whose cell values are `f(midpoint)`.
    pub fn from_fn(
        iv: Interval,
        cells: usize,
        dim: usize,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        if cells == 0 {
            return Err(IssError::domain("a signal needs at least one cell"));
        }
        let grid = uniform_grid(iv, cells);
        let mut values = Vec::with_capacity(cells * dim);
        for w in grid.windows(2) {
            let v = f(0.5 * (w[0] + w[1]));
            if v.len() != dim {
                return Err(IssError::data("generator returned wrong dimension"));
            }
            values.extend(v);
        }
        Self::from_flat(grid, values, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_norm(&self, i: usize) -> f64 {
        crate::euclid_norm(self.cell(i))
    }

    pub fn domain(&self) -> Interval {
        Interval {
            t0: self.grid[0],
            t1: self.grid[self.grid.len() - 1],
        }
    }

    /// Index of the cell containing `t` (right-continuous; the right end of
    /// the domain belongs to the last cell).
    pub fn cell_index(&self, t: f64) -> Option<usize> {
        let dom = self.domain();
        if t < dom.t0 - slack(dom.t0) || t > dom.t1 + slack(dom.t1) {
            return None;
        }
        let idx = self.grid.partition_point(|&g| g <= t);
        Some(idx.saturating_sub(1).min(self.cells() - 1))
    }

    /// Value of the signal at `t`, or `None` outside the domain.
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        self.cell_index(t).map(|i| self.cell(i))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn check_within(&self, iv: Interval) -> Result<()> {
        let dom = self.domain();
        if iv.t0 < dom.t0 - slack(dom.t0) || iv.t1 > dom.t1 + slack(dom.t1) {
            return Err(IssError::domain(format!(
                "interval [{}, {}] is not inside the signal domain [{}, {}]",
                iv.t0, iv.t1, dom.t0, dom.t1
            )));
        }
        Ok(())
    }

    /// `(overlap length, cell norm)` for every cell meeting `iv` with positive
    /// length.
    pub fn pieces(&self, iv: Interval) -> Result<Vec<(f64, f64)>> {
        self.check_within(iv)?;
        Ok(self
            .overlaps(iv.t0, iv.t1)
            .map(|(i, len)| (len, self.cell_norm(i)))
            .collect())
    }

    fn overlaps(&self, a: f64, b: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let first = self.grid.partition_point(|&g| g <= a).saturating_sub(1);
        (first..self.cells())
            .take_while(move |&i| self.grid[i] < b)
            .filter_map(move |i| {
                let len = self.grid[i + 1].min(b) - self.grid[i].max(a);
                (len > 0.0).then_some((i, len))
            })
    }

    /// Same values on `iv`, grid clipped to `iv`.
    pub fn restrict(&self, iv: Interval) -> Result<Signal> {
        self.check_within(iv)?;
        let a = iv.t0.max(self.grid[0]);
        let b = iv.t1.min(self.grid[self.grid.len() - 1]);
        let mut grid = vec![a];
        let mut values = Vec::new();
        for (i, _) in self.overlaps(a, b) {
            grid.push(self.grid[i + 1].min(b));
            values.extend_from_slice(self.cell(i));
        }
        Signal::from_flat(grid, values, self.dim)
    }

    /// Multiplies every cell by `e^{rate · midpoint(cell)}`.
    ///
    /// This is the midpoint rule for the continuous weight `e^{rate·s}`; on a
    /// cell of width `h` the weight differs from its cell average by a factor
    /// `1 + rate²h²/24 + O(h⁴)`.
    pub fn exp_weight(&self, rate: f64) -> Result<Signal> {
        let tmax = self.grid[0].abs().max(self.grid[self.grid.len() - 1].abs());
        if (rate * tmax).abs() > EXP_GUARD {
            return Err(IssError::numeric(format!(
                "exponential weight e^({rate}·t) overflows on this domain"
            )));
        }
        let mut out = self.clone();
        for i in 0..self.cells() {
            let mid = 0.5 * (self.grid[i] + self.grid[i + 1]);
            let w = (rate * mid).exp();
            for v in &mut out.values[i * self.dim..(i + 1) * self.dim] {
                *v *= w;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Signal {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Appends a zero cell so the domain ends at `t_end` (no-op if it already
    /// does).
    pub fn extend_by_zero(&self, t_end: f64) -> Signal {
        let end = self.grid[self.grid.len() - 1];
        if t_end <= end {
            return self.clone();
        }
        let mut out = self.clone();
        out.grid.push(t_end);
        out.values.extend(std::iter::repeat_n(0.0, self.dim));
        out
    }

    /// Exact `∫_iv u_k(s) ds` of component `k`.
    pub fn integrate_component(&self, k: usize, iv: Interval) -> Result<f64> {
        if k >= self.dim {
            return Err(IssError::domain("component index out of range"));
        }
        self.check_within(iv)?;
        Ok(self
            .overlaps(iv.t0, iv.t1)
            .map(|(i, len)| len * self.cell(i)[k])
            .sum())
    }

    /// All breakpoints strictly inside `(a, b)`.
    pub fn breakpoints_between(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.grid.iter().copied().filter(move |&t| t > a && t < b)
    }

    /// Exact `L^p` norm on `iv` (`p = ∞` gives the essential supremum).
    pub fn lp_norm(&self, p: f64, iv: Interval) -> Result<f64> {
        lp_norm(self, p, iv)
    }

    /// CSV with columns `t_start, t_end, v_1..v_d`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t_start".to_string(), "t_end".to_string()];
        header.extend((1..=self.dim).map(|k| format!("v_{k}")));
        wr.write_record(&header).map_err(io_err)?;
        for i in 0..self.cells() {
            let mut row = vec![
                crate::format_float(self.grid[i]),
                crate::format_float(self.grid[i + 1]),
            ];
            row.extend(self.cell(i).iter().map(|&v| crate::format_float(v)));
            wr.write_record(&row).map_err(io_err)?;
        }
        wr.flush().map_err(|e| IssError::data(e.to_string()))?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Signal::write_csv`]. Consecutive rows
    /// must share their boundary time.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Signal> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(io_err)?.clone();
        if headers.len() < 3 || &headers[0] != "t_start" || &headers[1] != "t_end" {
            return Err(IssError::data("expected header t_start,t_end,v_1.."));
        }
        let dim = headers.len() - 2;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(io_err)?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| IssError::data(format!("bad number in signal CSV: {e}")))?;
            if nums.len() != dim + 2 {
                return Err(IssError::data("ragged signal CSV row"));
            }
            match grid.last() {
                None => grid.push(nums[0]),
                Some(&prev) if prev == nums[0] => {}
                Some(_) => return Err(IssError::data("signal CSV cells are not contiguous")),
            }
            grid.push(nums[1]);
            values.extend_from_slice(&nums[2..]);
        }
        Signal::from_flat(grid, values, dim)
    }
}

fn io_err(e: csv::Error) -> IssError {
    IssError::data(format!("csv: {e}"))
}

fn slack(t: f64) -> f64 {
    DOMAIN_SLACK * t.abs().max(1.0)
}

pub(crate) fn uniform_grid(iv: Interval, cells: usize) -> Vec<f64> {
    let len = iv.length();
    (0..=cells)
        .map(|i| {
            if i == cells {
                iv.t1
            } else {
                iv.t0 + len * (i as f64) / (cells as f64)
            }
        })
        .collect()
}

/// Deterministic random signal: `cells` equal cells on `iv`, each component
/// uniform in `[-amplitude, amplitude)`, drawn from the ChaCha8 stream of
/// `seed` (see [`crate::rng`]).
pub fn random_signal(
    seed: u64,
    d: usize,
    iv: Interval,
    cells: usize,
    amplitude: f64,
) -> Result<Signal> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(IssError::domain("amplitude must be finite and non-negative"));
    }
    let mut stream = rng::seeded(seed, 0);
    Signal::from_fn(iv, cells, d, |_| (0..d).map(|_| stream.symmetric(amplitude)).collect())
}

/// Exact `L^p(iv)` norm of `‖u(·)‖` for a piecewise-constant signal.
pub fn lp_norm(u: &Signal, p: f64, iv: Interval) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(IssError::domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    let pieces = u.pieces(iv)?;
    let amax = pieces.iter().map(|&(_, a)| a).fold(0.0, f64::max);
    if amax == 0.0 {
        return Ok(0.0);
    }
    if p.is_infinite() {
        return Ok(amax);
    }
    let sum: f64 = pieces.iter().map(|&(len, a)| len * (a / amax).powf(p)).sum();
    Ok(amax * sum.powf(1.0 / p))
}

/// `∫_iv ‖u(s)‖ ‖v(s)‖ ds` on the merged breakpoint grid.
pub fn inner_abs(u: &Signal, v: &Signal, iv: Interval) -> Result<f64> {
    u.check_within(iv)?;
    v.check_within(iv)?;
    let mut cuts: Vec<f64> = std::iter::once(iv.t0)
        .chain(u.breakpoints_between(iv.t0, iv.t1))
        .chain(v.breakpoints_between(iv.t0, iv.t1))
        .chain(std::iter::once(iv.t1))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let (Some(a), Some(b)) = (u.value_at(mid), v.value_at(mid)) else {
            continue;
        };
        total += (w[1] - w[0]) * crate::euclid_norm(a) * crate::euclid_norm(b);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Signal::from_flat(vec![0.0, 0.0], vec![1.0], 1).is_err());
        assert!(Signal::from_flat(vec![0.0, 1.0], vec![f64::NAN], 1).is_err());
        assert!(Signal::from_flat(vec![0.0, 1.0], vec![1.0, 2.0], 1).is_err());
        assert!(Signal::from_flat(vec![0.0, 1.0], vec![], 0).is_err());
    }

    #[test]
    fn restrict_full_domain_is_identity() {
        let u = random_signal(1, 2, iv(0.0, 2.0), 7, 1.0).unwrap();
        assert_eq!(u.restrict(u.domain()).unwrap(), u);
    }

    #[test]
    fn restrict_constant() {
        let u = Signal::constant(iv(0.0, 2.0), &[1.0]).unwrap();
        let r = u.restrict(iv(0.0, 1.0)).unwrap();
        assert_eq!(r, Signal::constant(iv(0.0, 1.0), &[1.0]).unwrap());
    }

    #[test]
    fn restrict_outside_domain_fails() {
        let u = Signal::constant(iv(0.0, 1.0), &[1.0]).unwrap();
        assert!(matches!(u.restrict(iv(0.5, 1.5)), Err(IssError::Domain(_))));
    }

    #[test]
    fn exp_weight_zero_rate_is_identity() {
        let u = random_signal(5, 3, iv(0.0, 1.0), 4, 2.0).unwrap();
        assert_eq!(u.exp_weight(0.0).unwrap(), u);
    }

    #[test]
    fn exp_weight_single_cell() {
        let u = Signal::constant(iv(0.0, 1.0), &[1.0]).unwrap();
        let w = u.exp_weight(4f64.ln()).unwrap();
        assert!((w.cell(0)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exp_weight_overflow_guard() {
        let u = Signal::constant(iv(0.0, 10.0), &[1.0]).unwrap();
        assert!(matches!(u.exp_weight(71.0), Err(IssError::Numeric(_))));
        assert!(u.exp_weight(69.0).is_ok());
    }

    #[test]
    fn exp_weight_composes() {
        let u = random_signal(11, 2, iv(0.0, 3.0), 9, 1.0).unwrap();
        let ab = u.exp_weight(0.3).unwrap().exp_weight(-1.1).unwrap();
        let direct = u.exp_weight(0.3 - 1.1).unwrap();
        for i in 0..u.cells() {
            for (x, y) in ab.cell(i).iter().zip(direct.cell(i)) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn random_signal_is_deterministic() {
        let a = random_signal(99, 2, iv(0.0, 1.0), 10, 1.5).unwrap();
        let b = random_signal(99, 2, iv(0.0, 1.0), 10, 1.5).unwrap();
        assert_eq!(a, b);
        let c = random_signal(100, 2, iv(0.0, 1.0), 10, 1.5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_signal_zero_amplitude() {
        let a = random_signal(3, 4, iv(0.0, 1.0), 5, 0.0).unwrap();
        assert!(a.is_zero());
    }

    #[test]
    fn random_signal_linf_bound() {
        for seed in 0..20 {
            let d = 1 + (seed as usize % 4);
            let a = random_signal(seed, d, iv(0.0, 1.0), 50, 0.7).unwrap();
            let linf = a.lp_norm(f64::INFINITY, a.domain()).unwrap();
            assert!(linf <= 0.7 * (d as f64).sqrt());
        }
    }

    #[test]
    fn lp_norm_examples() {
        let u = Signal::constant(iv(0.0, 4.0), &[1.0]).unwrap();
        assert!((u.lp_norm(2.0, u.domain()).unwrap() - 2.0).abs() < 1e-15);
        let v = Signal::constant(iv(0.0, 1.0), &[3.0]).unwrap();
        assert_eq!(v.lp_norm(f64::INFINITY, v.domain()).unwrap(), 3.0);
        assert!(matches!(v.lp_norm(0.5, v.domain()), Err(IssError::Domain(_))));
    }

    #[test]
    fn lp_norm_uses_vector_norm() {
        let u = Signal::constant(iv(0.0, 1.0), &[3.0, 4.0]).unwrap();
        assert!((u.lp_norm(1.0, u.domain()).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn lp_norm_monotone_in_interval() {
        let u = random_signal(8, 2, iv(0.0, 5.0), 13, 1.0).unwrap();
        let mut prev = 0.0;
        for k in 1..=20 {
            let n = u.lp_norm(3.0, iv(0.0, 0.25 * k as f64)).unwrap();
            assert!(n + 1e-15 >= prev);
            prev = n;
        }
    }

    #[test]
    fn integrate_component_partial_cells() {
        let u = Signal::from_flat(vec![0.0, 1.0, 3.0], vec![2.0, -1.0], 1).unwrap();
        let v = u.integrate_component(0, iv(0.5, 2.0)).unwrap();
        assert!((v - (0.5 * 2.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn inner_abs_merges_grids() {
        let u = Signal::from_flat(vec![0.0, 0.5, 1.0], vec![1.0, 2.0], 1).unwrap();
        let v = Signal::from_flat(vec![0.0, 0.25, 1.0], vec![4.0, -1.0], 1).unwrap();
        // [0,.25]: 1*4, [.25,.5]: 1*1, [.5,1]: 2*1
        let expect = 0.25 * 4.0 + 0.25 * 1.0 + 0.5 * 2.0;
        assert!((inner_abs(&u, &v, iv(0.0, 1.0)).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn value_at_is_right_continuous() {
        let u = Signal::from_flat(vec![0.0, 1.0, 2.0], vec![1.0, 2.0], 1).unwrap();
        assert_eq!(u.value_at(1.0).unwrap(), &[2.0]);
        assert_eq!(u.value_at(2.0).unwrap(), &[2.0]);
        assert!(u.value_at(2.5).is_none());
    }

    #[test]
    fn csv_round_trip() {
        let u = random_signal(21, 3, iv(0.0, 1.5), 6, 2.0).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_start,t_end,v_1,v_2,v_3"));
        assert_eq!(Signal::read_csv(buf.as_slice()).unwrap(), u);
    }

    #[test]
    fn json_envelope_round_trip() {
        let u = random_signal(2, 2, iv(0.0, 1.0), 3, 1.0).unwrap();
        let js = serde_json::to_string(&u).unwrap();
        assert!(js.contains("\"dim\":2"));
        let back: Signal = serde_json::from_str(&js).unwrap();
        assert_eq!(back, u);
        let bad = r#"{"dim":3,"grid":[0,1],"values":[[1,2]]}"#;
        assert!(serde_json::from_str::<Signal>(bad).is_err());
    }
}
