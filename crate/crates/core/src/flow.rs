//! Flow vector fields `A^i` sampled at grid nodes, plus the builtin catalog.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Topology};

/// Analytic catalog flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum BuiltinFlow {
    /// `A^i = ω_i φ^i`
    Ou { omega: Vec<f64> },
    /// `A = φ³ − aφ`
    DoubleWell { a: f64 },
    /// `A = v + b sin φ`
    CircleDrive { v: f64, b: f64 },
    /// `A^x = v_x + s sin y`, `A^y = v_y`
    TorusShear { vx: f64, vy: f64, s: f64 },
    /// `A = ∇V` with `V = a cos x + b cos y + c cos(x − y)`
    TorusGradient { a: f64, b: f64, c: f64 },
}

impl BuiltinFlow {
    pub fn catalog_name(&self) -> &'static str {
        match self {
            BuiltinFlow::Ou { .. } => "ou",
            BuiltinFlow::DoubleWell { .. } => "double-well",
            BuiltinFlow::CircleDrive { .. } => "circle-drive",
            BuiltinFlow::TorusShear { .. } => "torus-shear",
            BuiltinFlow::TorusGradient { .. } => "torus-gradient",
        }
    }

    pub fn is_gradient(&self) -> bool {
        // every 1D flow is a gradient; shear is not
        !matches!(self, BuiltinFlow::TorusShear { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            BuiltinFlow::Ou { omega } => omega.len(),
            BuiltinFlow::DoubleWell { .. } | BuiltinFlow::CircleDrive { .. } => 1,
            BuiltinFlow::TorusShear { .. } | BuiltinFlow::TorusGradient { .. } => 2,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Allocation-free [`eval`](Self::eval).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            BuiltinFlow::Ou { omega } => {
                for ((o, w), p) in out.iter_mut().zip(omega).zip(x) {
                    *o = w * p;
                }
            }
            BuiltinFlow::DoubleWell { a } => out[0] = x[0] * x[0] * x[0] - a * x[0],
            BuiltinFlow::CircleDrive { v, b } => out[0] = v + b * x[0].sin(),
            BuiltinFlow::TorusShear { vx, vy, s } => {
                out[0] = vx + s * x[1].sin();
                out[1] = *vy;
            }
            BuiltinFlow::TorusGradient { a, b, c } => {
                let cross = c * (x[0] - x[1]).sin();
                out[0] = -a * x[0].sin() - cross;
                out[1] = -b * x[1].sin() + cross;
            }
        }
    }

    /// `∂A^i/∂φ^i` (diagonal of the Jacobian).
    pub fn diag_derivative(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BuiltinFlow::Ou { omega } => omega.clone(),
            BuiltinFlow::DoubleWell { a } => vec![3.0 * x[0] * x[0] - a],
            BuiltinFlow::CircleDrive { b, .. } => vec![b * x[0].cos()],
            BuiltinFlow::TorusShear { .. } => vec![0.0, 0.0],
            BuiltinFlow::TorusGradient { a, b, c } => {
                let cc = c * (x[0] - x[1]).cos();
                vec![-a * x[0].cos() - cc, -b * x[1].cos() - cc]
            }
        }
    }
}

/// Where a flow came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlowSource {
    Builtin(BuiltinFlow),
    Table { path: String },
    Zero,
}

#[derive(Debug, Clone)]
pub struct FlowField {
    grid: Grid,
    /// `components[i][node]`
    components: Vec<Vec<f64>>,
    source: FlowSource,
}

const RANGE_OMEGA: &str = "(0, 100]";
const RANGE_A: &str = "[-10, 10]";
const RANGE_GENERIC: &str = "[-100, 100]";

fn param(
    params: &BTreeMap<String, f64>,
    name: &str,
    default: f64,
    range: &'static str,
    ok: impl Fn(f64) -> bool,
) -> Result<f64> {
    let value = params.get(name).copied().unwrap_or(default);
    if !value.is_finite() || !ok(value) {
        return Err(Error::FlowParameter {
            name: name.to_string(),
            value,
            range,
        });
    }
    Ok(value)
}

fn generic(v: f64) -> bool {
    (-100.0..=100.0).contains(&v)
}

/// Build a catalog flow by name. Unknown parameter names are rejected.
pub fn builtin_flow(grid: &Grid, name: &str, params: &BTreeMap<String, f64>) -> Result<FlowField> {
    let allowed: &[&str] = match name {
        "ou" => &["omega0", "omega1"],
        "double-well" => &["a"],
        "circle-drive" => &["v", "b"],
        "torus-shear" => &["vx", "vy", "s"],
        "torus-gradient" => &["a", "b", "c"],
        other => return Err(Error::UnknownFlow(other.to_string())),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidFlow(format!(
            "flow `{name}` has no parameter `{bad}` (expected one of {allowed:?})"
        )));
    }
    let flow = match name {
        "ou" => {
            let w0 = param(params, "omega0", 1.0, RANGE_OMEGA, |v| v > 0.0 && v <= 100.0)?;
            let mut omega = vec![w0];
            if grid.dim() == 2 {
                omega.push(param(params, "omega1", w0, RANGE_OMEGA, |v| v > 0.0 && v <= 100.0)?);
            } else if params.contains_key("omega1") {
                return Err(Error::InvalidFlow("omega1 needs a two-axis grid".into()));
            }
            BuiltinFlow::Ou { omega }
        }
        "double-well" => BuiltinFlow::DoubleWell {
            a: param(params, "a", 1.0, RANGE_A, |v| (-10.0..=10.0).contains(&v))?,
        },
        "circle-drive" => BuiltinFlow::CircleDrive {
            v: param(params, "v", 0.0, RANGE_GENERIC, generic)?,
            b: param(params, "b", 0.0, RANGE_GENERIC, generic)?,
        },
        "torus-shear" => BuiltinFlow::TorusShear {
            vx: param(params, "vx", 0.0, RANGE_GENERIC, generic)?,
            vy: param(params, "vy", 0.0, RANGE_GENERIC, generic)?,
            s: param(params, "s", 0.0, RANGE_GENERIC, generic)?,
        },
        _ => BuiltinFlow::TorusGradient {
            a: param(params, "a", 0.0, RANGE_GENERIC, generic)?,
            b: param(params, "b", 0.0, RANGE_GENERIC, generic)?,
            c: param(params, "c", 0.0, RANGE_GENERIC, generic)?,
        },
    };
    FlowField::from_builtin(grid, flow)
}

fn check_topology(grid: &Grid, flow: &BuiltinFlow) -> Result<()> {
    let name = flow.catalog_name();
    if grid.dim() != flow.dim() {
        return Err(Error::InvalidFlow(format!(
            "`{name}` needs a {}-axis grid, got {}",
            flow.dim(),
            grid.dim()
        )));
    }
    let want = match flow {
        BuiltinFlow::Ou { .. } | BuiltinFlow::DoubleWell { .. } => Topology::Truncated,
        _ => Topology::Periodic,
    };
    for k in 0..grid.dim() {
        let ax = grid.axis(k);
        if ax.topology != want {
            return Err(Error::InvalidFlow(format!(
                "`{name}` needs {want:?} axes, axis {k} is {:?}",
                ax.topology
            )));
        }
        if want == Topology::Periodic && (ax.extent - TAU).abs() > 1e-12 {
            return Err(Error::InvalidFlow(format!(
                "`{name}` is 2π-periodic; axis {k} extent is {}",
                ax.extent
            )));
        }
    }
    Ok(())
}

impl FlowField {
    pub fn from_builtin(grid: &Grid, flow: BuiltinFlow) -> Result<Self> {
        check_topology(grid, &flow)?;
        let mut components = vec![Vec::with_capacity(grid.node_count()); grid.dim()];
        for node in 0..grid.node_count() {
            for (k, v) in flow.eval(&grid.node_position(node)).into_iter().enumerate() {
                components[k].push(v);
            }
        }
        Self::from_parts(grid, components, FlowSource::Builtin(flow))
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.node_count()]; grid.dim()],
            source: FlowSource::Zero,
        }
    }

    /// Node samples given directly; `components[i][node]`.
    pub fn from_parts(grid: &Grid, components: Vec<Vec<f64>>, source: FlowSource) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::InvalidFlow(format!(
                "{} components for a {}-axis grid",
                components.len(),
                grid.dim()
            )));
        }
        for (k, c) in components.iter().enumerate() {
            if c.len() != grid.node_count() {
                return Err(Error::InvalidFlow(format!(
                    "component {k} has {} samples, grid has {} nodes",
                    c.len(),
                    grid.node_count()
                )));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidFlow(format!("component {k} not finite at node {i}")));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            components,
            source,
        })
    }

    /// CSV table with columns `node, A^1, ..., A^D`. A header row is optional.
    pub fn from_csv(grid: &Grid, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let n = grid.node_count();
        let mut components = vec![vec![f64::NAN; n]; grid.dim()];
        let mut seen = vec![false; n];
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let Ok(node) = rec.get(0).unwrap_or("").parse::<usize>() else {
                if line == 0 {
                    continue;
                }
                return Err(Error::InvalidFlow(format!("row {}: bad node index", line + 1)));
            };
            if rec.len() != grid.dim() + 1 {
                return Err(Error::InvalidFlow(format!(
                    "row {}: expected {} columns, got {}",
                    line + 1,
                    grid.dim() + 1,
                    rec.len()
                )));
            }
            if node >= n || seen[node] {
                return Err(Error::InvalidFlow(format!(
                    "row {}: node index {node} out of range or repeated",
                    line + 1
                )));
            }
            seen[node] = true;
            for k in 0..grid.dim() {
                components[k][node] = rec[k + 1].parse::<f64>().map_err(|e| {
                    Error::InvalidFlow(format!("row {}: column {}: {e}", line + 1, k + 2))
                })?;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidFlow(format!("table has no row for node {missing}")));
        }
        Self::from_parts(
            grid,
            components,
            FlowSource::Table {
                path: path.display().to_string(),
            },
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn source(&self) -> &FlowSource {
        &self.source
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn at_node(&self, axis: usize, node: usize) -> f64 {
        self.components[axis][node]
    }

    pub fn is_gradient(&self) -> bool {
        match &self.source {
            FlowSource::Builtin(b) => b.is_gradient(),
            FlowSource::Zero => true,
            FlowSource::Table { .. } => self.grid.dim() == 1,
        }
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "source": self.source,
            "gradient": self.is_gradient(),
        })
    }

    /// Flow at an arbitrary point: analytic for catalog flows, multilinear
    /// interpolation of node samples otherwise.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Allocation-free [`eval`](Self::eval) for catalog and zero flows.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.source {
            FlowSource::Builtin(b) => b.eval_into(x, out),
            FlowSource::Zero => out.fill(0.0),
            FlowSource::Table { .. } => out.copy_from_slice(&self.interpolate(x)),
        }
    }

    /// `∂A^i/∂φ^i` at a point.
    pub fn diag_derivative(&self, x: &[f64]) -> Vec<f64> {
        match &self.source {
            FlowSource::Builtin(b) => b.diag_derivative(x),
            FlowSource::Zero => vec![0.0; self.grid.dim()],
            FlowSource::Table { .. } => (0..self.grid.dim())
                .map(|k| {
                    let h = self.grid.spacing()[k];
                    let (i, _) = self.bracket(k, x[k]);
                    let mut lo = x.to_vec();
                    let mut hi = x.to_vec();
                    lo[k] = self.grid.node_coord(k, i);
                    hi[k] = lo[k] + h;
                    (self.interpolate(&hi)[k] - self.interpolate(&lo)[k]) / h
                })
                .collect(),
        }
    }

    /// Lower node and fractional offset along `axis`; wraps periodic axes and
    /// clamps truncated ones.
    fn bracket(&self, axis: usize, x: f64) -> (usize, f64) {
        let g = &self.grid;
        let ax = g.axis(axis);
        let s = (x - ax.origin) / g.spacing()[axis];
        match ax.topology {
            Topology::Periodic => {
                let s = s.rem_euclid(ax.nodes as f64);
                let i = (s.floor() as usize).min(ax.nodes - 1);
                (i, s - i as f64)
            }
            Topology::Truncated => {
                let s = s.clamp(0.0, (ax.nodes - 1) as f64);
                let i = (s.floor() as usize).min(ax.nodes - 2);
                (i, s - i as f64)
            }
        }
    }

    fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let dim = g.dim();
        let br: Vec<_> = (0..dim).map(|k| self.bracket(k, x[k])).collect();
        let mut out = vec![0.0; dim];
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let coords: Vec<usize> = (0..dim)
                .map(|k| {
                    let (i, f) = br[k];
                    if corner >> k & 1 == 1 {
                        w *= f;
                        (i + 1) % g.nodes(k)
                    } else {
                        w *= 1.0 - f;
                        i
                    }
                })
                .collect();
            let node = g.node_index(&coords);
            for (k, o) in out.iter_mut().enumerate() {
                *o += w * self.components[k][node];
            }
        }
        out
    }

    /// For a decoupled flow (`A^axis` depends only on `φ^axis`), the 1D flow on
    /// that axis. Returns `None` when the component varies across other axes.
    pub fn axis_factor(&self, axis: usize) -> Result<Option<FlowField>> {
        let g = &self.grid;
        let sub = g.axis_grid(axis)?;
        let mut line = Vec::with_capacity(g.nodes(axis));
        for i in 0..g.nodes(axis) {
            let mut first = None;
            for node in 0..g.node_count() {
                if g.node_coords(node)[axis] != i {
                    continue;
                }
                let v = self.components[axis][node];
                match first {
                    None => first = Some(v),
                    Some(f) if f != v => return Ok(None),
                    _ => {}
                }
            }
            line.push(first.unwrap_or(0.0));
        }
        let source = match &self.source {
            FlowSource::Builtin(BuiltinFlow::Ou { omega }) => FlowSource::Builtin(BuiltinFlow::Ou {
                omega: vec![omega[axis]],
            }),
            FlowSource::Zero => FlowSource::Zero,
            // sampled values only; a 1D table keeps interpolation consistent
            _ => FlowSource::Table {
                path: format!("factor of axis {axis}"),
            },
        };
        FlowField::from_parts(&sub, vec![line], source).map(Some)
    }
}
