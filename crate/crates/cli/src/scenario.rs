//! Scenario configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use kinex_core::fluid::{BoundaryCondition, Reconstruction};
use kinex_core::kinetic::Interpolation;
use kinex_core::{Kernel, KernelKind, MassLaw, PrimitiveState, Velocity};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    CollideDemo,
    Qeval,
    RelaxDsmc,
    RelaxBgk,
    #[serde(rename = "euler_1d")]
    Euler1d,
    #[serde(rename = "nsme_1d")]
    Nsme1d,
    ChapmanEnskog,
    ThermoVerify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub c: f64,
}

/// Mass law: either a γ_m = c m^a e^{bm} family or an explicit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    #[serde(rename = "M_max")]
    pub m_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

impl Default for LawSpec {
    fn default() -> Self {
        Self { m_max: 2, family: Some(FamilySpec { a: 0.0, b: 0.0, c: 1.0 }), table: None }
    }
}

impl LawSpec {
    pub fn build(&self, n: usize) -> Result<MassLaw, CliError> {
        let law = match (&self.family, &self.table) {
            (Some(f), None) => MassLaw::family(self.m_max, f.a, f.b, f.c, n),
            (None, Some(t)) => {
                if t.len() != self.m_max {
                    return Err(CliError::Validation(format!(
                        "law.table has {} entries but M_max = {}",
                        t.len(),
                        self.m_max
                    )));
                }
                MassLaw::new(t.clone(), n)
            }
            _ => return Err(CliError::Validation("law needs exactly one of `family` or `table`".into())),
        };
        law.map_err(|e| CliError::Validation(format!("law: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "maxwell")]
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub c_b: f64,
    #[serde(default)]
    pub omega_exp: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { kind: KernelKind::Maxwell, c_b: 1.0, omega_exp: 0.0 }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel, CliError> {
        let k = Kernel { kind: self.kind, c_b: self.c_b, omega_exp: self.omega_exp };
        k.validate().map_err(|e| CliError::Validation(format!("kernel: {e}")))?;
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default = "periodic")]
    pub bc: BoundaryCondition,
    #[serde(default = "minmod")]
    pub reconstruction: Reconstruction,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { cells: default_cells(), length: 1.0, bc: BoundaryCondition::Periodic, reconstruction: Reconstruction::Minmod }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    #[serde(default = "default_vmax")]
    pub v_max: f64,
    #[serde(default = "default_nv")]
    pub n_v: usize,
    #[serde(default = "default_n_omega")]
    pub n_omega: usize,
    #[serde(default = "geometric")]
    pub interpolation: Interpolation,
}

impl Default for VelocitySpec {
    fn default() -> Self {
        Self { v_max: default_vmax(), n_v: default_nv(), n_omega: default_n_omega(), interpolation: Interpolation::Geometric }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "one_usize")]
    pub shards: usize,
    #[serde(default = "default_bins")]
    pub entropy_bins: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { particles: default_particles(), shards: 1, entropy_bins: default_bins() }
    }
}

/// Fluid fields with u given as up to three components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub rho: f64,
    #[serde(default)]
    pub u: Vec<f64>,
    pub theta: f64,
    #[serde(default)]
    pub beta: f64,
}

impl StateSpec {
    pub fn to_prim(&self, n: usize) -> Result<PrimitiveState, CliError> {
        if self.u.len() > n {
            return Err(CliError::Validation(format!("state velocity has {} components, n = {n}", self.u.len())));
        }
        Ok(PrimitiveState { rho: self.rho, u: kinex_core::collision::velocity(&self.u), theta: self.theta, beta: self.beta })
    }
}

/// Initial fluid data: a Riemann problem or a smooth periodic wave
/// base·(1 + amplitude·sin 2πx/L) on ρ and Θ with a cosine velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Riemann { left: StateSpec, right: StateSpec, x0: f64 },
    Wave { base: StateSpec, amplitude: f64 },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Wave { base: StateSpec { rho: 1.0, u: vec![], theta: 1.0, beta: 0.0 }, amplitude: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollideSpec {
    pub m: u32,
    pub m1: u32,
    pub v: Vec<f64>,
    pub v1: Vec<f64>,
    pub m_out: u32,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub experiment: Experiment,
    #[serde(default = "two")]
    pub n: usize,
    #[serde(default)]
    pub law: LawSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub velocity: VelocitySpec,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collide: Option<CollideSpec>,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub threads: usize,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn two() -> usize {
    2
}
fn maxwell() -> KernelKind {
    KernelKind::Maxwell
}
fn periodic() -> BoundaryCondition {
    BoundaryCondition::Periodic
}
fn minmod() -> Reconstruction {
    Reconstruction::Minmod
}
fn geometric() -> Interpolation {
    Interpolation::Geometric
}
fn default_cells() -> usize {
    200
}
fn default_vmax() -> f64 {
    6.0
}
fn default_nv() -> usize {
    16
}
fn default_n_omega() -> usize {
    16
}
fn default_particles() -> usize {
    10_000
}
fn default_bins() -> usize {
    12
}
fn default_cfl() -> f64 {
    0.45
}
fn default_t_end() -> f64 {
    0.2
}
fn default_output() -> PathBuf {
    PathBuf::from("kinex-out")
}

impl Scenario {
    /// Cross-field checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !(1..=3).contains(&self.n) {
            return bad(format!("n = {} must be 1, 2 or 3", self.n));
        }
        self.law.build(self.n)?;
        self.kernel.build()?;
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl = {} must lie in (0, 1]", self.cfl));
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps = {} must be nonnegative", self.eps));
        }
        if !(self.t_end > 0.0) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt = {dt} must be positive"));
            }
        }
        if self.grid.cells < 2 || !(self.grid.length > 0.0) {
            return bad("grid needs at least 2 cells and a positive length".into());
        }
        if self.velocity.n_v < 4 || self.velocity.n_v % 2 != 0 || !(self.velocity.v_max > 0.0) || self.velocity.n_omega == 0 {
            return bad("velocity grid needs an even n_v >= 4, v_max > 0 and n_omega >= 1".into());
        }
        if self.ensemble.particles < 100 || self.ensemble.shards == 0 || self.ensemble.entropy_bins == 0 {
            return bad("ensemble needs >= 100 particles, >= 1 shard and >= 1 entropy bin".into());
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        match &self.initial {
            InitialSpec::Riemann { left, right, x0 } => {
                left.to_prim(self.n)?;
                right.to_prim(self.n)?;
                if !(*x0 > 0.0 && *x0 < self.grid.length) {
                    return bad(format!("initial.x0 = {x0} must lie inside the domain"));
                }
            }
            InitialSpec::Wave { base, amplitude } => {
                base.to_prim(self.n)?;
                if !(amplitude.abs() < 1.0) {
                    return bad(format!("initial.amplitude = {amplitude} must satisfy |amplitude| < 1"));
                }
            }
        }
        if self.experiment == Experiment::CollideDemo && self.collide.is_none() {
            return bad("collide_demo needs a `collide` block".into());
        }
        Ok(())
    }

    pub fn law(&self) -> MassLaw {
        self.law.build(self.n).expect("validated")
    }

    pub fn kernel_value(&self) -> Kernel {
        self.kernel.build().expect("validated")
    }

    /// Initial primitive state of cell `i`.
    pub fn initial_state(&self, x: f64) -> PrimitiveState {
        match &self.initial {
            InitialSpec::Riemann { left, right, x0 } => {
                if x < *x0 { left } else { right }.to_prim(self.n).expect("validated")
            }
            InitialSpec::Wave { base, amplitude } => {
                let p = base.to_prim(self.n).expect("validated");
                let k = 2.0 * std::f64::consts::PI / self.grid.length;
                let mut u = p.u;
                u[0] += amplitude * (k * x).cos();
                PrimitiveState { rho: p.rho * (1.0 + amplitude * (k * x).sin()), u, theta: p.theta * (1.0 + amplitude * (k * x + 1.0).sin()), beta: p.beta + amplitude * (k * x).cos() }
            }
        }
    }

    pub fn base_state(&self) -> PrimitiveState {
        match &self.initial {
            InitialSpec::Riemann { left, .. } => left.to_prim(self.n).expect("validated"),
            InitialSpec::Wave { base, .. } => base.to_prim(self.n).expect("validated"),
        }
    }
}

/// Parses and validates a scenario document; errors carry the key path and
/// the line/column reported by the JSON reader.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scn: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse(format!("at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
    })?;
    scn.validate()?;
    Ok(scn)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario_str(&text)
}

pub fn velocity_from(c: &[f64]) -> Velocity {
    kinex_core::collision::velocity(c)
}
