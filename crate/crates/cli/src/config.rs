//! Run configuration: the JSON document accepted by `isslab run`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use isslab_core::diagonal::{example3_model, DiagonalModel};
use isslab_core::fokker_planck::{build_model, sample_nodes, FPModel};
use isslab_core::signals::random_signal;
use isslab_core::{Interval, Signal, YoungFunction};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    OrliczNorm,
    SimulateDiagonal,
    SimulateFp,
    AuditIss,
    AdmissibilityScan,
    FpGap,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::OrliczNorm => "orlicz-norm",
            CommandKind::SimulateDiagonal => "simulate-diagonal",
            CommandKind::SimulateFp => "simulate-fp",
            CommandKind::AuditIss => "audit-iss",
            CommandKind::AdmissibilityScan => "admissibility-scan",
            CommandKind::FpGap => "fp-gap",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn params<T: for<'de> Deserialize<'de>>(&self) -> Result<T, CliError> {
        let v = if self.params.is_null() { serde_json::json!({}) } else { self.params.clone() };
        serde_json::from_value(v)
            .map_err(|e| CliError::Config(format!("params for {}: {e}", self.command.name())))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Config(format!("{} uses random inputs and needs a seed", self.command.name()))
        })
    }
}

fn interval(iv: [f64; 2]) -> Result<Interval, CliError> {
    Ok(Interval::new(iv[0], iv[1])?)
}

/// A spatial profile given as an expression in `x` (with `pi` and `e`
/// bound) or as `J + 1` node samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Expr(String),
    Samples(Vec<f64>),
}

impl Profile {
    pub fn sample(&self, cells: usize, name: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Profile::Samples(v) => {
                if v.len() != cells + 1 {
                    return Err(CliError::Config(format!(
                        "{name}: expected {} samples, got {}",
                        cells + 1,
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
            Profile::Expr(src) => {
                use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
                let tree = evalexpr::build_operator_tree::<DefaultNumericTypes>(src)
                    .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                let set = |ctx: &mut HashMapContext<DefaultNumericTypes>, k: &str, v: f64| {
                    ctx.set_value(k.into(), Value::Float(v))
                        .map_err(|e| CliError::Config(format!("{name}: {e}")))
                };
                set(&mut ctx, "pi", std::f64::consts::PI)?;
                set(&mut ctx, "e", std::f64::consts::E)?;
                let xs = sample_nodes(cells, |x| x);
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    set(&mut ctx, "x", x)?;
                    let v = tree
                        .eval_number_with_context(&ctx)
                        .map_err(|e| CliError::Config(format!("{name} at x = {x}: {e}")))?;
                    out.push(v);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpModelSpec {
    pub nu: f64,
    #[serde(rename = "J")]
    pub cells: usize,
    #[serde(rename = "W")]
    pub w: Profile,
    pub alpha: Profile,
}

impl FpModelSpec {
    pub fn build(&self) -> Result<FPModel, CliError> {
        let w = self.w.sample(self.cells, "W")?;
        let a = self.alpha.sample(self.cells, "alpha")?;
        Ok(build_model(self.nu, &w, &a, self.cells)?)
    }

    pub fn with_cells(&self, cells: usize) -> FpModelSpec {
        FpModelSpec { cells, ..self.clone() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiagonalSpec {
    Example3 {
        example3: usize,
    },
    Explicit {
        lambda: Vec<f64>,
        mu: Vec<f64>,
        #[serde(default)]
        b2: Option<Vec<f64>>,
    },
}

impl Default for DiagonalSpec {
    fn default() -> Self {
        DiagonalSpec::Example3 { example3: 8 }
    }
}

impl DiagonalSpec {
    pub fn build(&self) -> Result<DiagonalModel, CliError> {
        Ok(match self {
            DiagonalSpec::Example3 { example3 } => example3_model(*example3)?,
            DiagonalSpec::Explicit { lambda, mu, b2 } => {
                let m = DiagonalModel::new(lambda.clone(), mu.clone())?;
                match b2 {
                    Some(b) => m.with_b2(b.clone())?,
                    None => m,
                }
            }
        })
    }

    pub fn example3_modes(&self) -> Option<usize> {
        match self {
            DiagonalSpec::Example3 { example3 } => Some(*example3),
            DiagonalSpec::Explicit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub cells: usize,
    pub amplitude: f64,
    pub interval: [f64; 2],
    /// Number of independent draws (seeds `seed, seed + 1, ...`).
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

/// A piecewise-constant input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Constant {
        constant: Vec<f64>,
        interval: [f64; 2],
    },
    Random {
        random: RandomSpec,
    },
    Explicit(Signal),
}

impl SignalSpec {
    /// Expands into concrete signals; random draws use `seed + k`.
    pub fn realize(&self, seed: Option<u64>) -> Result<Vec<Signal>, CliError> {
        match self {
            SignalSpec::Constant { constant, interval: iv } => {
                Ok(vec![Signal::constant(interval(*iv)?, constant)?])
            }
            SignalSpec::Explicit(s) => Ok(vec![s.clone()]),
            SignalSpec::Random { random: r } => {
                let seed = seed.ok_or_else(|| CliError::Config("random signals need a seed".into()))?;
                (0..r.count as u64)
                    .map(|k| {
                        Ok(random_signal(
                            seed.wrapping_add(k),
                            r.dim,
                            interval(r.interval)?,
                            r.cells,
                            r.amplitude,
                        )?)
                    })
                    .collect()
            }
        }
    }

    pub fn single(&self, seed: Option<u64>, name: &str) -> Result<Signal, CliError> {
        let mut v = self.realize(seed)?;
        if v.len() != 1 {
            return Err(CliError::Config(format!("{name} must describe exactly one signal")));
        }
        Ok(v.remove(0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrliczParams {
    pub young: YoungFunction,
    pub signals: Vec<SignalSpec>,
    #[serde(default)]
    pub interval: Option<[f64; 2]>,
    #[serde(default = "default_norm_tol")]
    pub tol: f64,
}

fn default_norm_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDiagonalParams {
    #[serde(default)]
    pub model: DiagonalSpec,
    /// Defaults to a seeded draw in `[-1, 1]ⁿ`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Defaults to a seeded input with 16 cells and amplitude 1.
    #[serde(default)]
    pub u1: Option<SignalSpec>,
    /// Defaults to zero.
    #[serde(default)]
    pub u2: Option<SignalSpec>,
    pub t_end: f64,
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    #[serde(default)]
    pub quad_step: Option<f64>,
    #[serde(default)]
    pub blowup_threshold: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "yes")]
    pub compare_closed_form: bool,
}

fn default_solver_tol() -> f64 {
    1e-10
}

fn default_stride() -> usize {
    64
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    #[serde(rename = "M")]
    pub semigroup_bound: f64,
    pub omega: f64,
    pub m: f64,
    pub c_b1: f64,
    pub c_b2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedCase {
    /// 1-based mode carrying the unit initial state.
    pub mode: usize,
    /// Constant input level.
    pub level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AuditParams {
    Diagonal {
        #[serde(default)]
        model: DiagonalSpec,
        #[serde(default = "default_cases")]
        cases: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_cells")]
        cells: usize,
        #[serde(default = "default_horizon")]
        t_end: f64,
        #[serde(default = "default_audit_tol")]
        tol: f64,
        /// Multiplies `C_B1` and `C_B2` (`0.5` gives the negative control).
        #[serde(default = "default_scale")]
        c_scale: f64,
        /// Required for models other than `example3`.
        #[serde(default)]
        bound: Option<BoundSpec>,
        /// Norm of `u₁`; defaults to the conjugate of `x ln ln(x + e)`.
        #[serde(default)]
        phi: Option<YoungFunction>,
        #[serde(default)]
        psi: Option<YoungFunction>,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        forced: Vec<ForcedCase>,
    },
    FokkerPlanck {
        model: FpModelSpec,
        #[serde(default = "default_training")]
        training: usize,
        #[serde(default = "default_validation")]
        validation: usize,
        #[serde(default = "default_margin")]
        margin: f64,
        /// Skips fitting when given.
        #[serde(default)]
        c: Option<f64>,
        #[serde(default = "default_horizon")]
        t_end: f64,
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default = "default_fp_amplitude")]
        amplitude: f64,
        #[serde(default = "default_fp_cells")]
        cells: usize,
        #[serde(default = "default_modes")]
        density_modes: usize,
        #[serde(default = "default_density_amplitude")]
        density_amplitude: f64,
        #[serde(default = "default_audit_tol")]
        tol: f64,
    },
}

fn default_cases() -> usize {
    50
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_cells() -> usize {
    16
}
fn default_horizon() -> f64 {
    2.0
}
fn default_audit_tol() -> f64 {
    1e-6
}
fn default_scale() -> f64 {
    1.0
}
fn default_training() -> usize {
    10
}
fn default_validation() -> usize {
    20
}
fn default_margin() -> f64 {
    1.5
}
fn default_dt() -> f64 {
    1e-3
}
fn default_fp_amplitude() -> f64 {
    2.0
}
fn default_fp_cells() -> usize {
    20
}
fn default_modes() -> usize {
    6
}
fn default_density_amplitude() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_scan_t")]
    pub t: f64,
    #[serde(default = "default_carleson_p")]
    pub carleson_p: Vec<f64>,
    #[serde(default = "default_carleson_n")]
    pub carleson_n_max: u32,
    #[serde(default = "default_kn_range")]
    pub kn_range: [u32; 2],
    #[serde(default = "default_scan_t")]
    pub kn_t: f64,
    #[serde(default = "default_quad_cells")]
    pub quad_cells: usize,
}

fn default_p() -> f64 {
    2.0
}
fn default_n_list() -> Vec<usize> {
    (1..=60).collect()
}
fn default_scan_t() -> f64 {
    1.0
}
fn default_carleson_p() -> Vec<f64> {
    vec![2.5, 3.0, 4.0, 8.0]
}
fn default_carleson_n() -> u32 {
    200
}
fn default_kn_range() -> [u32; 2] {
    [2, 20]
}
fn default_quad_cells() -> usize {
    4000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensitySpec {
    Named(DensityName),
    Random { random: RandomDensity },
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityName {
    /// The discrete equilibrium.
    Stationary,
    /// `ρ∞(1 + ½cos πx)`, renormalized.
    CosinePerturbation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDensity {
    pub modes: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFpParams {
    pub model: FpModelSpec,
    pub rho0: DensitySpec,
    /// Defaults to a seeded input with 20 cells and amplitude 2.
    #[serde(default)]
    pub u: Option<SignalSpec>,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_fp_stride")]
    pub stride: usize,
}

fn default_fp_stride() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpGapParams {
    pub model: FpModelSpec,
    /// Grids for the stationary-residual order; defaults to `J/4, J/2, J`.
    #[serde(default)]
    pub refine: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub decay: bool,
    #[serde(default = "default_dt")]
    pub dt: f64,
}
