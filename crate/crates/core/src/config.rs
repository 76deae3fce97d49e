//! Run configuration: one JSON document with a schema version.
//!
//! Deserialization errors and validation errors both carry a JSON pointer to
//! the offending key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{builtin_flow, FlowField};
use crate::forms::FormField;
use crate::grid::{AxisSpec, Grid, GridSpec, Metric, Support};
use crate::hamiltonian::{stationary_density, HamiltonianSet};
use crate::spectral::{Observable, SolveMode, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

fn config_err(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    /// isotropic diffusion `Θ`, or one entry per axis
    pub theta: ThetaConfig,
    pub flow: FlowConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub jobs: Jobs,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// directory relative paths resolve against; set by [`RunConfig::load`]
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Circle,
    Line,
    Torus,
    Square,
    /// explicit `axes` list
    Axes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeCount {
    One(usize),
    PerAxis(Vec<usize>),
}

/// `circle {nodes}`, `line {nodes, lo, hi}`, `torus {nodes}`,
/// `square {nodes, lo, hi}` or `axes {axes}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kind: GridKind,
    #[serde(default)]
    pub nodes: Option<NodeCount>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub axes: Option<Vec<AxisSpec>>,
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        let need_nodes = || -> Result<&NodeCount> { self.nodes.as_ref().ok_or_else(|| config_err("/grid/nodes", "missing")) };
        let single = || -> Result<usize> {
            match need_nodes()? {
                NodeCount::One(n) => Ok(*n),
                NodeCount::PerAxis(_) => Err(config_err("/grid/nodes", "expected a single node count")),
            }
        };
        let range = || -> Result<(f64, f64)> {
            let lo = self.lo.ok_or_else(|| config_err("/grid/lo", "missing"))?;
            let hi = self.hi.ok_or_else(|| config_err("/grid/hi", "missing"))?;
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(config_err("/grid/hi", format!("needs finite lo < hi, got [{lo}, {hi}]")));
            }
            Ok((lo, hi))
        };
        let unused = |present: bool, key: &str| -> Result<()> {
            if present {
                Err(config_err(&format!("/grid/{key}"), format!("not used by a {:?} grid", self.kind)))
            } else {
                Ok(())
            }
        };
        let periodic = self.kind == GridKind::Circle || self.kind == GridKind::Torus;
        if self.kind != GridKind::Axes {
            unused(self.axes.is_some(), "axes")?;
        }
        if periodic {
            unused(self.lo.is_some(), "lo")?;
            unused(self.hi.is_some(), "hi")?;
        }
        Ok(match self.kind {
            GridKind::Circle => GridSpec::circle(single()?),
            GridKind::Line => {
                let (lo, hi) = range()?;
                GridSpec::line(single()?, lo, hi)
            }
            GridKind::Square => {
                let (lo, hi) = range()?;
                GridSpec::square(single()?, lo, hi)
            }
            GridKind::Torus => match need_nodes()? {
                NodeCount::One(n) => GridSpec::torus(*n, *n),
                NodeCount::PerAxis(v) if v.len() == 2 => GridSpec::torus(v[0], v[1]),
                NodeCount::PerAxis(_) => return Err(config_err("/grid/nodes", "a torus takes one or two node counts")),
            },
            GridKind::Axes => {
                unused(self.nodes.is_some(), "nodes")?;
                unused(self.lo.is_some(), "lo")?;
                unused(self.hi.is_some(), "hi")?;
                GridSpec {
                    axes: self.axes.clone().ok_or_else(|| config_err("/grid/axes", "missing"))?,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaConfig {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// catalog name, or `zero`
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// node table `node, A^1, ..., A^D`
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "d_tol_zero")]
    pub tol_zero: f64,
    #[serde(default = "d_eps")]
    pub eps_gamma: f64,
    #[serde(default = "d_eps")]
    pub eps_e: f64,
    /// marginal floor relative to its maximum
    #[serde(default = "d_eps_div")]
    pub eps_div: f64,
    #[serde(default = "d_eps")]
    pub pair: f64,
}

fn d_tol_zero() -> f64 {
    1e-8
}
fn d_eps() -> f64 {
    1e-6
}
fn d_eps_div() -> f64 {
    1e-12
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            tol_zero: d_tol_zero(),
            eps_gamma: d_eps(),
            eps_e: d_eps(),
            eps_div: d_eps_div(),
            pair: d_eps(),
        }
    }
}

impl ToleranceConfig {
    pub fn spectral(&self) -> Tolerances {
        Tolerances {
            tol_zero: self.tol_zero,
            eps_gamma: self.eps_gamma,
            eps_e: self.eps_e,
            pair: self.pair,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jobs {
    #[serde(default)]
    pub spectrum: SpectrumJob,
    #[serde(default)]
    pub index: IndexJob,
    #[serde(default)]
    pub partition: PartitionJob,
    #[serde(default)]
    pub evolve: EvolveJob,
    #[serde(default)]
    pub simulate: SimulateJob,
    #[serde(default)]
    pub nicolai: NicolaiJob,
    #[serde(default)]
    pub cpd: CpdJob,
    #[serde(default)]
    pub correlate: CorrelateJob,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumJob {
    #[serde(default = "d_mode")]
    pub mode: ModeChoice,
    /// eigenvalues per sector in iterative mode
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_shift")]
    pub shift: f64,
    /// `Θ` values for the gap sweep (empty: no sweep)
    #[serde(default)]
    pub theta_sweep: Vec<f64>,
}

fn d_mode() -> ModeChoice {
    ModeChoice::Auto
}
fn d_k() -> usize {
    12
}
fn d_shift() -> f64 {
    -1.0
}

impl Default for SpectrumJob {
    fn default() -> Self {
        Self {
            mode: d_mode(),
            k: d_k(),
            shift: d_shift(),
            theta_sweep: Vec::new(),
        }
    }
}

impl SpectrumJob {
    pub fn solve_mode(&self, h: &HamiltonianSet) -> SolveMode {
        match self.mode {
            ModeChoice::Auto => match SolveMode::auto(h, self.k) {
                SolveMode::Iterative { k, .. } => SolveMode::Iterative { k, shift: self.shift },
                m => m,
            },
            ModeChoice::Dense => SolveMode::Dense,
            ModeChoice::Iterative => SolveMode::Iterative {
                k: self.k,
                shift: self.shift,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexJob {
    #[serde(default = "d_index_t")]
    pub t: Vec<f64>,
    /// allowed spread of `W(T)` across `t`
    #[serde(default = "d_index_const")]
    pub constancy: f64,
}

fn d_index_t() -> Vec<f64> {
    vec![0.5, 2.0]
}
fn d_index_const() -> f64 {
    1e-8
}

impl Default for IndexJob {
    fn default() -> Self {
        Self {
            t: d_index_t(),
            constancy: d_index_const(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionJob {
    #[serde(default = "d_partition_t")]
    pub t: Vec<f64>,
    /// relative tolerance against the harmonic closed form, used for a 1D
    /// OU flow on a truncated line
    #[serde(default = "d_partition_ref")]
    pub harmonic_tolerance: f64,
}

fn d_partition_t() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn d_partition_ref() -> f64 {
    0.02
}

impl Default for PartitionJob {
    fn default() -> Self {
        Self {
            t: d_partition_t(),
            harmonic_tolerance: d_partition_ref(),
        }
    }
}

/// Initial or reference density (top degree).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityConfig {
    Uniform,
    /// normalized mass in the cell containing `point`
    Delta { point: Vec<f64> },
    /// normal density sampled at cell centers; `rho` correlates two axes
    Gaussian {
        center: Vec<f64>,
        width: Vec<f64>,
        #[serde(default)]
        rho: f64,
    },
    /// the top-sector zero mode
    Stationary,
    /// FormField CSV
    Csv { path: PathBuf },
}

impl DensityConfig {
    pub fn build(&self, h: &HamiltonianSet, base: &Path) -> Result<FormField> {
        let grid = h.grid();
        let dim = grid.dim();
        let check_len = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != dim {
                return Err(Error::InvalidArgument(format!("{what} has {} entries, grid has {dim} axes", v.len())));
            }
            Ok(())
        };
        let f = match self {
            DensityConfig::Uniform => FormField::from_fn(grid, dim, |_, _| 1.0)?,
            DensityConfig::Delta { point } => {
                check_len(point, "delta point")?;
                let cell = grid
                    .top_cell_at(point)
                    .ok_or_else(|| Error::InvalidArgument(format!("delta point {point:?} is off the grid")))?;
                let mut f = FormField::zeros(grid, dim)?;
                f.values_mut()[cell] = 1.0;
                f
            }
            DensityConfig::Gaussian { center, width, rho } => {
                check_len(center, "gaussian center")?;
                check_len(width, "gaussian width")?;
                if width.iter().any(|w| !(*w > 0.0)) || !(rho.abs() < 1.0) || (dim == 1 && *rho != 0.0) {
                    return Err(Error::InvalidArgument("gaussian needs widths > 0 and |rho| < 1 (2D only)".into()));
                }
                FormField::from_fn(grid, dim, |_, x| {
                    let z: Vec<f64> = (0..dim).map(|k| (x[k] - center[k]) / width[k]).collect();
                    let q = if dim == 2 {
                        (z[0] * z[0] - 2.0 * rho * z[0] * z[1] + z[1] * z[1]) / (1.0 - rho * rho)
                    } else {
                        z[0] * z[0]
                    };
                    (-0.5 * q).exp()
                })?
            }
            DensityConfig::Stationary => return stationary_density(h),
            DensityConfig::Csv { path } => {
                let file = std::fs::File::open(base.join(path))?;
                return FormField::read_csv(grid, dim, file);
            }
        };
        let mass = f.integral();
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument("initial density has no mass on the grid".into()));
        }
        let vals: Vec<f64> = f.values().iter().map(|v| v / mass).collect();
        FormField::from_values(grid, dim, vals)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveJob {
    #[serde(default = "d_evolve_t")]
    pub t: f64,
    #[serde(default = "d_evolve_dt")]
    pub dt: f64,
    #[serde(default = "d_evolve_init")]
    pub initial: DensityConfig,
    /// Richardson local error tolerance
    #[serde(default = "d_evolve_tol")]
    pub step_tol: f64,
    #[serde(default = "d_log_every")]
    pub log_every: usize,
    /// allowed mass drift per unit time
    #[serde(default = "d_drift")]
    pub mass_drift: f64,
    /// if set, the final L¹ distance to the zero mode must not exceed this
    #[serde(default)]
    pub zero_mode_l1: Option<f64>,
}

fn d_evolve_t() -> f64 {
    1.0
}
fn d_evolve_dt() -> f64 {
    0.01
}
fn d_evolve_init() -> DensityConfig {
    DensityConfig::Uniform
}
fn d_evolve_tol() -> f64 {
    1e-8
}
fn d_log_every() -> usize {
    1
}
fn d_drift() -> f64 {
    1e-10
}

impl Default for EvolveJob {
    fn default() -> Self {
        Self {
            t: d_evolve_t(),
            dt: d_evolve_dt(),
            initial: d_evolve_init(),
            step_tol: d_evolve_tol(),
            log_every: d_log_every(),
            mass_drift: d_drift(),
            zero_mode_l1: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_sim_steps")]
    pub steps: usize,
    #[serde(default = "d_sim_dt")]
    pub dt: f64,
    /// starting point (default: grid center)
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default = "d_stability")]
    pub stability: f64,
    /// if set, the L¹ distance between histogram and zero mode must not
    /// exceed this
    #[serde(default)]
    pub zero_mode_l1: Option<f64>,
}

fn d_samples() -> usize {
    10_000
}
fn d_sim_steps() -> usize {
    1000
}
fn d_sim_dt() -> f64 {
    0.005
}
fn d_stability() -> f64 {
    0.1
}

impl Default for SimulateJob {
    fn default() -> Self {
        Self {
            samples: d_samples(),
            steps: d_sim_steps(),
            dt: d_sim_dt(),
            init: None,
            stability: d_stability(),
            zero_mode_l1: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NicolaiJob {
    #[serde(default = "d_draws")]
    pub draws: usize,
    #[serde(default = "d_nic_steps")]
    pub steps: usize,
    #[serde(default = "d_sim_dt")]
    pub dt: f64,
    /// scan brackets over the domain
    #[serde(default = "d_brackets")]
    pub brackets: usize,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
    #[serde(default = "d_stability")]
    pub stability: f64,
}

fn d_draws() -> usize {
    20
}
fn d_nic_steps() -> usize {
    200
}
fn d_brackets() -> usize {
    10_000
}

impl Default for NicolaiJob {
    fn default() -> Self {
        Self {
            draws: d_draws(),
            steps: d_nic_steps(),
            dt: d_sim_dt(),
            brackets: d_brackets(),
            range: None,
            stability: d_stability(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpdJob {
    /// conditioning axis
    #[serde(default)]
    pub known: usize,
    #[serde(default = "d_cpd_density")]
    pub density: DensityConfig,
    #[serde(default = "d_evolve_t")]
    pub t: f64,
    #[serde(default = "d_cpd_dt")]
    pub dt: f64,
    #[serde(default = "d_cpd_samples")]
    pub samples: usize,
    /// fraction of cells allowed below the marginal floor
    #[serde(default = "d_cpd_ill")]
    pub max_below_floor: f64,
    /// wedge factorization residual allowed at `t = 0`
    #[serde(default = "d_cpd_fact")]
    pub factorization: f64,
}

fn d_cpd_density() -> DensityConfig {
    DensityConfig::Stationary
}
fn d_cpd_dt() -> f64 {
    0.05
}
fn d_cpd_samples() -> usize {
    5
}
fn d_cpd_ill() -> f64 {
    0.01
}
fn d_cpd_fact() -> f64 {
    1e-10
}

impl Default for CpdJob {
    fn default() -> Self {
        Self {
            known: 0,
            density: d_cpd_density(),
            t: d_evolve_t(),
            dt: d_cpd_dt(),
            samples: d_cpd_samples(),
            max_below_floor: d_cpd_ill(),
            factorization: d_cpd_fact(),
        }
    }
}

/// Multiplicative or degree-changing observable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableConfig {
    Identity,
    GhostNumber,
    /// `e^{ikφ^axis}`
    Fourier { axis: usize, k: f64 },
    /// `(φ^axis)^p`
    Power { axis: usize, p: i32 },
}

impl ObservableConfig {
    pub fn build(&self, grid: &Grid, support: Support) -> Result<Observable> {
        let check = |axis: usize| -> Result<()> {
            if axis >= grid.dim() {
                return Err(Error::InvalidArgument(format!("observable axis {axis} out of range")));
            }
            Ok(())
        };
        Ok(match *self {
            ObservableConfig::Identity => Observable::identity(grid, support),
            ObservableConfig::GhostNumber => Observable::ghost_number(grid, support),
            ObservableConfig::Fourier { axis, k } => {
                check(axis)?;
                Observable::multiply(grid, support, move |x| num_complex::Complex64::from_polar(1.0, k * x[axis]))
            }
            ObservableConfig::Power { axis, p } => {
                check(axis)?;
                Observable::multiply(grid, support, move |x| num_complex::Complex64::new(x[axis].powi(p), 0.0))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateJob {
    /// default: `e^{−iφ}` on periodic axis 0, `φ` otherwise
    #[serde(default)]
    pub o1: Option<ObservableConfig>,
    /// default: `e^{iφ}` on periodic axis 0, `φ` otherwise
    #[serde(default)]
    pub o2: Option<ObservableConfig>,
    #[serde(default = "d_corr_t")]
    pub t: Vec<f64>,
}

fn d_corr_t() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.25).collect()
}

impl Default for CorrelateJob {
    fn default() -> Self {
        Self {
            o1: None,
            o2: None,
            t: d_corr_t(),
        }
    }
}

fn positive(pointer: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(pointer, format!("must be a finite number > 0, got {v}")))
    }
}

fn positive_count(pointer: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(config_err(pointer, "must be ≥ 1"))
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl RunConfig {
    /// Parse and validate; errors carry a JSON pointer.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| config_err("/", format!("not valid JSON: {e}")))?;
        // checked first so that an old document is not reported field by field
        match value.get("schema_version") {
            None => return Err(config_err("/schema_version", "missing schema version")),
            Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
                return Err(config_err(
                    "/schema_version",
                    format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"),
                ))
            }
            _ => {}
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let pointer = json_pointer(e.path());
            config_err(&pointer, e.into_inner().to_string())
        })?;
        cfg.validate_values()?;
        cfg.grid.spec()?;
        Ok(cfg)
    }

    /// Read from disk; relative paths in the document resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("/", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate_files()?;
        Ok(cfg)
    }

    fn validate_values(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_zero", t.tol_zero),
            ("eps_gamma", t.eps_gamma),
            ("eps_e", t.eps_e),
            ("eps_div", t.eps_div),
            ("pair", t.pair),
        ] {
            positive(&format!("/tolerances/{name}"), v)?;
        }
        match &self.theta {
            ThetaConfig::Isotropic(v) => positive("/theta", *v)?,
            ThetaConfig::Diagonal(vs) => {
                for (i, v) in vs.iter().enumerate() {
                    positive(&format!("/theta/{i}"), *v)?;
                }
            }
        }
        match (&self.flow.name, &self.flow.csv) {
            (Some(_), Some(_)) => return Err(config_err("/flow", "give either `name` or `csv`, not both")),
            (None, None) => return Err(config_err("/flow", "needs a catalog `name` or a `csv` path")),
            (None, Some(_)) if !self.flow.params.is_empty() => {
                return Err(config_err("/flow/params", "parameters apply to catalog flows only"))
            }
            _ => {}
        }
        let j = &self.jobs;
        for (i, v) in j.index.t.iter().enumerate() {
            positive(&format!("/jobs/index/t/{i}"), *v)?;
        }
        positive("/jobs/index/constancy", j.index.constancy)?;
        for (i, v) in j.partition.t.iter().enumerate() {
            positive(&format!("/jobs/partition/t/{i}"), *v)?;
        }
        positive("/jobs/partition/harmonic_tolerance", j.partition.harmonic_tolerance)?;
        positive_count("/jobs/spectrum/k", j.spectrum.k)?;
        for (i, v) in j.spectrum.theta_sweep.iter().enumerate() {
            positive(&format!("/jobs/spectrum/theta_sweep/{i}"), *v)?;
        }
        positive("/jobs/evolve/t", j.evolve.t)?;
        positive("/jobs/evolve/dt", j.evolve.dt)?;
        positive("/jobs/evolve/step_tol", j.evolve.step_tol)?;
        positive("/jobs/evolve/mass_drift", j.evolve.mass_drift)?;
        if let Some(v) = j.evolve.zero_mode_l1 {
            positive("/jobs/evolve/zero_mode_l1", v)?;
        }
        positive_count("/jobs/simulate/samples", j.simulate.samples)?;
        positive_count("/jobs/simulate/steps", j.simulate.steps)?;
        positive("/jobs/simulate/dt", j.simulate.dt)?;
        positive("/jobs/simulate/stability", j.simulate.stability)?;
        if let Some(v) = j.simulate.zero_mode_l1 {
            positive("/jobs/simulate/zero_mode_l1", v)?;
        }
        positive_count("/jobs/nicolai/draws", j.nicolai.draws)?;
        positive_count("/jobs/nicolai/steps", j.nicolai.steps)?;
        positive_count("/jobs/nicolai/brackets", j.nicolai.brackets)?;
        positive("/jobs/nicolai/dt", j.nicolai.dt)?;
        positive("/jobs/nicolai/stability", j.nicolai.stability)?;
        if let Some([a, b]) = j.nicolai.range {
            if !(a < b) {
                return Err(config_err("/jobs/nicolai/range", "needs lo < hi"));
            }
        }
        positive("/jobs/cpd/t", j.cpd.t)?;
        positive("/jobs/cpd/dt", j.cpd.dt)?;
        positive_count("/jobs/cpd/samples", j.cpd.samples)?;
        positive("/jobs/cpd/max_below_floor", j.cpd.max_below_floor)?;
        positive("/jobs/cpd/factorization", j.cpd.factorization)?;
        for (i, v) in j.correlate.t.iter().enumerate() {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(config_err(&format!("/jobs/correlate/t/{i}"), "correlation times must be ≥ 0"));
            }
        }
        Ok(())
    }

    fn validate_files(&self) -> Result<()> {
        let exists = |pointer: &str, p: &Path| -> Result<()> {
            let full = self.base_dir.join(p);
            if full.is_file() {
                Ok(())
            } else {
                Err(config_err(pointer, format!("file {} does not exist", full.display())))
            }
        };
        if let Some(p) = &self.flow.csv {
            exists("/flow/csv", p)?;
        }
        if let DensityConfig::Csv { path } = &self.jobs.evolve.initial {
            exists("/jobs/evolve/initial/path", path)?;
        }
        if let DensityConfig::Csv { path } = &self.jobs.cpd.density {
            exists("/jobs/cpd/density/path", path)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::build(&self.grid.spec()?).map_err(|e| config_err("/grid", e.to_string()))
    }

    pub fn metric(&self, grid: &Grid) -> Result<Metric> {
        self.metric_with(grid, &self.theta)
    }

    pub fn metric_with(&self, grid: &Grid, theta: &ThetaConfig) -> Result<Metric> {
        let m = match theta {
            ThetaConfig::Isotropic(v) => Metric::isotropic(grid.dim(), *v),
            ThetaConfig::Diagonal(vs) => {
                if vs.len() != grid.dim() {
                    return Err(config_err(
                        "/theta",
                        format!("{} entries for a {}-axis grid", vs.len(), grid.dim()),
                    ));
                }
                let mut g = vec![0.0; vs.len() * vs.len()];
                for (i, v) in vs.iter().enumerate() {
                    g[i * vs.len() + i] = *v;
                }
                Metric::new(grid.dim(), g)
            }
        };
        m.map_err(|e| config_err("/theta", e.to_string()))
    }

    /// Scalar `Θ` for one-axis pipelines.
    pub fn theta_scalar(&self) -> Result<f64> {
        match &self.theta {
            ThetaConfig::Isotropic(v) => Ok(*v),
            ThetaConfig::Diagonal(vs) if vs.len() == 1 => Ok(vs[0]),
            ThetaConfig::Diagonal(_) => Err(config_err("/theta", "this job needs a single Θ")),
        }
    }

    pub fn flow(&self, grid: &Grid) -> Result<FlowField> {
        let f = match (&self.flow.name, &self.flow.csv) {
            (Some(name), None) if name == "zero" => {
                if !self.flow.params.is_empty() {
                    return Err(config_err("/flow/params", "the zero flow takes no parameters"));
                }
                Ok(FlowField::zero(grid))
            }
            (Some(name), None) => builtin_flow(grid, name, &self.flow.params),
            (None, Some(path)) => FlowField::from_csv(grid, &self.base_dir.join(path)),
            _ => unreachable!("checked by validation"),
        };
        f.map_err(|e| {
            let pointer = match &e {
                Error::FlowParameter { name, .. } => format!("/flow/params/{name}"),
                Error::UnknownFlow(_) => "/flow/name".to_string(),
                _ if self.flow.csv.is_some() => "/flow/csv".to_string(),
                _ => "/flow".to_string(),
            };
            config_err(&pointer, e.to_string())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIRCLE: &str = r#"{
        "schema_version": 1,
        "grid": {"kind": "circle", "nodes": 32},
        "theta": 0.5,
        "flow": {"name": "circle-drive", "params": {"v": 0.7, "b": 0.5}}
    }"#;

    fn pointer_of(text: &str) -> String {
        match RunConfig::from_json(text) {
            Err(Error::Config { pointer, .. }) => pointer,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let c = RunConfig::from_json(CIRCLE).unwrap();
        assert_eq!(c.jobs.partition.t, vec![0.5, 1.0, 2.0]);
        assert_eq!(c.tolerances.tol_zero, 1e-8);
        let g = c.grid().unwrap();
        assert_eq!(g.nodes(0), 32);
        c.flow(&g).unwrap();
    }

    #[test]
    fn errors_point_at_the_key() {
        assert_eq!(pointer_of(&CIRCLE.replace("\"nodes\": 32", "\"nodes\": \"many\"")), "/grid/nodes");
        assert_eq!(pointer_of(&CIRCLE.replace("\"schema_version\": 1,", "")), "/schema_version");
        assert_eq!(pointer_of(&CIRCLE.replace("\"schema_version\": 1", "\"schema_version\": 7")), "/schema_version");
        let neg = CIRCLE.replace("\"theta\": 0.5,", "\"theta\": 0.5, \"tolerances\": {\"tol_zero\": -1},");
        assert_eq!(pointer_of(&neg), "/tolerances/tol_zero");
        assert_eq!(pointer_of(&CIRCLE.replace("\"nodes\": 32", "\"nodes\": 32, \"lo\": 0")), "/grid/lo");
        let typo = CIRCLE.replace("\"theta\": 0.5,", "\"theta\": 0.5, \"jobs\": {\"index\": {\"T\": [1]}},");
        assert_eq!(pointer_of(&typo), "/jobs/index/T");
        let bad_t = CIRCLE.replace("\"theta\": 0.5,", "\"theta\": 0.5, \"jobs\": {\"partition\": {\"t\": [1, -2]}},");
        assert_eq!(pointer_of(&bad_t), "/jobs/partition/t/1");
    }

    #[test]
    fn flow_parameter_errors_point_at_the_parameter() {
        let c = RunConfig::from_json(&CIRCLE.replace("\"v\": 0.7", "\"v\": 700")).unwrap();
        match c.flow(&c.grid().unwrap()) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/flow/params/v"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_flow_table_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let text = CIRCLE.replace(
            r#""flow": {"name": "circle-drive", "params": {"v": 0.7, "b": 0.5}}"#,
            r#""flow": {"csv": "nowhere.csv"}"#,
        );
        std::fs::write(&path, text).unwrap();
        match RunConfig::load(&path) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/flow/csv"),
            other => panic!("{other:?}"),
        }
    }
}
