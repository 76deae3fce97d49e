//! Uniform cubical phase-space grids (line, circle, torus, truncated square)
//! and the constant noise-induced metric.
//!
//! # Cell ordering
//!
//! Cells of degree `n` are grouped by multi-index (strictly increasing axis
//! lists, in lexicographic order). Within a multi-index, cells are listed by
//! base node in row-major order with axis 0 varying fastest. A cell spans one
//! edge along each axis of its multi-index and sits on a node along every
//! other axis.
//!
//! # Decay constraint
//!
//! On a truncated axis, cochain coefficients attached to the two boundary
//! nodes (along that axis, for cells that do not extend along it) are held at
//! zero. Operators built with [`Support::Decay`] act only on the remaining
//! "active" cells; [`Support::Full`] keeps every cell.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Periodic,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub topology: Topology,
    pub nodes: usize,
    pub extent: f64,
    #[serde(default)]
    pub origin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

impl GridSpec {
    pub fn circle(nodes: usize) -> Self {
        Self {
            axes: vec![AxisSpec {
                topology: Topology::Periodic,
                nodes,
                extent: std::f64::consts::TAU,
                origin: 0.0,
            }],
        }
    }

    /// Truncated line covering `[lo, hi]` with nodes on both ends.
    pub fn line(nodes: usize, lo: f64, hi: f64) -> Self {
        Self {
            axes: vec![AxisSpec {
                topology: Topology::Truncated,
                nodes,
                extent: hi - lo,
                origin: lo,
            }],
        }
    }

    pub fn torus(nx: usize, ny: usize) -> Self {
        let c = Self::circle(nx).axes[0].clone();
        let mut d = c.clone();
        d.nodes = ny;
        Self { axes: vec![c, d] }
    }

    pub fn square(nodes: usize, lo: f64, hi: f64) -> Self {
        let a = Self::line(nodes, lo, hi).axes[0].clone();
        Self {
            axes: vec![a.clone(), a],
        }
    }
}

/// Which cells carry cochain coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Decay,
    Full,
}

/// Placement of one multi-index component inside a degree's cell list.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLayout {
    pub axes: Vec<usize>,
    /// first admissible base coordinate per axis
    pub lo: Vec<usize>,
    /// number of admissible base coordinates per axis
    pub count: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl ComponentLayout {
    pub fn contains_axis(&self, axis: usize) -> bool {
        self.axes.contains(&axis)
    }

    /// Base coordinates of the `local`-th cell of this component.
    pub fn coords(&self, local: usize) -> Vec<usize> {
        let mut rem = local;
        self.count
            .iter()
            .zip(&self.lo)
            .map(|(&c, &lo)| {
                let v = rem % c;
                rem /= c;
                lo + v
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorLayout {
    pub degree: usize,
    pub support: Support,
    pub components: Vec<ComponentLayout>,
    pub len: usize,
}

impl SectorLayout {
    pub fn component_index(&self, axes: &[usize]) -> Option<usize> {
        self.components.iter().position(|c| c.axes == axes)
    }

    /// (component, local) pair for a flat index.
    pub fn locate(&self, index: usize) -> (usize, usize) {
        let c = self
            .components
            .iter()
            .position(|c| index < c.offset + c.len)
            .expect("index out of range");
        (c, index - self.components[c].offset)
    }
}

#[derive(Debug)]
struct GridInner {
    spec: GridSpec,
    spacing: Vec<f64>,
    // indexed by degree
    full: Vec<SectorLayout>,
    decay: Vec<SectorLayout>,
}

/// Immutable discretized phase space; cheap to clone.
#[derive(Debug, Clone)]
pub struct Grid(Arc<GridInner>);

/// All strictly increasing `n`-subsets of `0..d`, lexicographic.
pub fn multi_indices(d: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i + 1, d, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, n, &mut Vec::new(), &mut out);
    out
}

impl Grid {
    pub fn build(spec: &GridSpec) -> Result<Self> {
        let dim = spec.axes.len();
        if dim == 0 {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        if dim > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} not supported (maximum 2)"
            )));
        }
        for (i, ax) in spec.axes.iter().enumerate() {
            if ax.nodes < 8 {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: {} nodes, need at least 8",
                    ax.nodes
                )));
            }
            if !(ax.extent > 0.0) || !ax.extent.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: extent must be positive, got {}",
                    ax.extent
                )));
            }
            if !ax.origin.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {i}: origin not finite")));
            }
        }
        let spacing = spec
            .axes
            .iter()
            .map(|ax| match ax.topology {
                Topology::Periodic => ax.extent / ax.nodes as f64,
                Topology::Truncated => ax.extent / (ax.nodes - 1) as f64,
            })
            .collect();
        let layouts = |support| -> Vec<SectorLayout> {
            (0..=dim)
                .map(|n| Self::sector_layout(spec, n, support))
                .collect()
        };
        Ok(Grid(Arc::new(GridInner {
            spec: spec.clone(),
            spacing,
            full: layouts(Support::Full),
            decay: layouts(Support::Decay),
        })))
    }

    fn sector_layout(spec: &GridSpec, n: usize, support: Support) -> SectorLayout {
        let dim = spec.axes.len();
        let mut offset = 0;
        let components = multi_indices(dim, n)
            .into_iter()
            .map(|axes| {
                let (lo, count): (Vec<_>, Vec<_>) = spec
                    .axes
                    .iter()
                    .enumerate()
                    .map(|(k, ax)| {
                        let along = axes.contains(&k);
                        match (ax.topology, along, support) {
                            (Topology::Periodic, _, _) => (0, ax.nodes),
                            (Topology::Truncated, true, _) => (0, ax.nodes - 1),
                            (Topology::Truncated, false, Support::Full) => (0, ax.nodes),
                            (Topology::Truncated, false, Support::Decay) => (1, ax.nodes - 2),
                        }
                    })
                    .unzip();
                let len = count.iter().product();
                let c = ComponentLayout {
                    axes,
                    lo,
                    count,
                    offset,
                    len,
                };
                offset += len;
                c
            })
            .collect();
        SectorLayout {
            degree: n,
            support,
            components,
            len: offset,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.0.spec
    }

    pub fn dim(&self) -> usize {
        self.0.spec.axes.len()
    }

    pub fn axis(&self, k: usize) -> &AxisSpec {
        &self.0.spec.axes[k]
    }

    pub fn nodes(&self, k: usize) -> usize {
        self.axis(k).nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.0.spacing
    }

    pub fn is_periodic(&self, k: usize) -> bool {
        self.axis(k).topology == Topology::Periodic
    }

    pub fn is_compact(&self) -> bool {
        (0..self.dim()).all(|k| self.is_periodic(k))
    }

    /// Quadrature weight of one cell coefficient (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn layout(&self, degree: usize, support: Support) -> &SectorLayout {
        match support {
            Support::Full => &self.0.full[degree],
            Support::Decay => &self.0.decay[degree],
        }
    }

    /// Number of degree-`n` cells (all placements, ignoring constraints).
    pub fn cell_count(&self, degree: usize) -> usize {
        self.layout(degree, Support::Full).len
    }

    pub fn active_count(&self, degree: usize, support: Support) -> usize {
        self.layout(degree, support).len
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=self.dim())
            .map(|n| {
                let c = self.cell_count(n) as i64;
                if n % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .sum()
    }

    /// Full-layout index of the top-degree cell containing `x`; `None` off a
    /// truncated axis.
    pub fn top_cell_at(&self, x: &[f64]) -> Option<usize> {
        let dim = self.dim();
        let layout = self.layout(dim, Support::Full);
        let mut coords = Vec::with_capacity(dim);
        for (k, &xk) in x.iter().enumerate() {
            let ax = self.axis(k);
            let s = ((xk - ax.origin) / self.spacing()[k]).floor();
            let c = match ax.topology {
                Topology::Periodic => s.rem_euclid(ax.nodes as f64) as isize,
                Topology::Truncated => {
                    if s < 0.0 || s >= (ax.nodes - 1) as f64 {
                        return None;
                    }
                    s as isize
                }
            };
            coords.push(c);
        }
        self.cell_index(layout, 0, &coords)
    }

    /// Alternating count of active cells; the Euler characteristic of the
    /// complex a support selects.
    pub fn support_euler_characteristic(&self, support: Support) -> i64 {
        (0..=self.dim())
            .map(|n| {
                let c = self.active_count(n, support) as i64;
                if n % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .sum()
    }

    pub fn node_coord(&self, axis: usize, i: usize) -> f64 {
        self.axis(axis).origin + i as f64 * self.spacing()[axis]
    }

    /// Total node count (all nodes, boundary included).
    pub fn node_count(&self) -> usize {
        self.0.spec.axes.iter().map(|a| a.nodes).product()
    }

    pub fn node_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (k, &c) in coords.iter().enumerate() {
            idx += c * stride;
            stride *= self.nodes(k);
        }
        idx
    }

    pub fn node_coords(&self, index: usize) -> Vec<usize> {
        let mut rem = index;
        (0..self.dim())
            .map(|k| {
                let v = rem % self.nodes(k);
                rem /= self.nodes(k);
                v
            })
            .collect()
    }

    pub fn node_position(&self, index: usize) -> Vec<f64> {
        self.node_coords(index)
            .iter()
            .enumerate()
            .map(|(k, &c)| self.node_coord(k, c))
            .collect()
    }

    /// Physical center of a cell given its component axes and base node.
    pub fn cell_center(&self, axes: &[usize], base: &[usize]) -> Vec<f64> {
        base.iter()
            .enumerate()
            .map(|(k, &c)| {
                let shift = if axes.contains(&k) { 0.5 } else { 0.0 };
                self.axis(k).origin + (c as f64 + shift) * self.spacing()[k]
            })
            .collect()
    }

    /// Wrap (periodic) or bounds-check (truncated) a base coordinate along
    /// `axis` for a component that extends (`along`) or not along it.
    pub fn resolve(&self, axis: usize, coord: isize, along: bool) -> Option<usize> {
        let n = self.nodes(axis) as isize;
        match self.axis(axis).topology {
            Topology::Periodic => Some(coord.rem_euclid(n) as usize),
            Topology::Truncated => {
                let max = if along { n - 1 } else { n };
                (0..max).contains(&coord).then_some(coord as usize)
            }
        }
    }

    /// Flat index in `layout` of the cell of component `comp` at `coords`,
    /// or `None` if the cell is absent or constrained.
    pub fn cell_index(&self, layout: &SectorLayout, comp: usize, coords: &[isize]) -> Option<usize> {
        let c = &layout.components[comp];
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.dim() {
            let v = self.resolve(k, coords[k], c.axes.contains(&k))?;
            if v < c.lo[k] || v >= c.lo[k] + c.count[k] {
                return None;
            }
            idx += (v - c.lo[k]) * stride;
            stride *= c.count[k];
        }
        Some(c.offset + idx)
    }

    /// One-dimensional grid for a single axis of this grid.
    pub fn axis_grid(&self, axis: usize) -> Result<Grid> {
        Grid::build(&GridSpec {
            axes: vec![self.axis(axis).clone()],
        })
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.spec() == other.spec()
    }

    pub fn ordering_description(&self) -> String {
        "cells grouped by degree, then by increasing multi-index (lexicographic), \
         then by base node row-major with axis 0 fastest; truncated-axis boundary \
         nodes excluded from active sets of components not extending along that axis"
            .to_string()
    }
}

/// Constant symmetric positive-definite metric `g^{ij}` (noise covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    dim: usize,
    g: Vec<f64>,
}

impl Metric {
    pub fn isotropic(dim: usize, theta: f64) -> Result<Self> {
        let mut g = vec![0.0; dim * dim];
        for i in 0..dim {
            g[i * dim + i] = theta;
        }
        Self::new(dim, g)
    }

    /// Row-major `dim × dim` matrix.
    pub fn new(dim: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != dim * dim {
            return Err(Error::InvalidMetric(format!(
                "expected {} entries, got {}",
                dim * dim,
                g.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMetric("non-finite entry".into()));
        }
        for i in 0..dim {
            for j in 0..i {
                if (g[i * dim + j] - g[j * dim + i]).abs() > 1e-14 * (g[i * dim + j].abs() + 1.0) {
                    return Err(Error::InvalidMetric("matrix is not symmetric".into()));
                }
            }
        }
        let m = Metric { dim, g };
        if m.cholesky().is_none() {
            return Err(Error::InvalidMetric("matrix is not positive definite".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.dim + j]
    }

    pub fn diagonal(&self) -> Option<Vec<f64>> {
        let off = (0..self.dim)
            .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
            .any(|(i, j)| i != j && self.entry(i, j) != 0.0);
        (!off).then(|| (0..self.dim).map(|i| self.entry(i, i)).collect())
    }

    /// Lower-triangular vielbein `e` with `g = e eᵀ`.
    pub fn vielbein(&self) -> Vec<f64> {
        self.cholesky().expect("validated at construction")
    }

    /// `det e = √det g`.
    pub fn vielbein_det(&self) -> f64 {
        let e = self.vielbein();
        (0..self.dim).map(|i| e[i * self.dim + i]).product()
    }

    fn cholesky(&self) -> Option<Vec<f64>> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                if i == j {
                    let v = self.g[i * n + i] - s;
                    if !(v > 0.0) {
                        return None;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = (self.g[i * n + j] - s) / l[j * n + j];
                }
            }
        }
        Some(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubical_counts() {
        let c = Grid::build(&GridSpec::circle(16)).unwrap();
        assert_eq!((c.cell_count(0), c.cell_count(1)), (16, 16));
        let l = Grid::build(&GridSpec::line(16, -1.0, 1.0)).unwrap();
        assert_eq!((l.cell_count(0), l.cell_count(1)), (16, 15));
        let t = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        assert_eq!((t.cell_count(0), t.cell_count(1), t.cell_count(2)), (64, 128, 64));
    }

    #[test]
    fn euler_bookkeeping() {
        assert_eq!(Grid::build(&GridSpec::circle(9)).unwrap().euler_characteristic(), 0);
        assert_eq!(Grid::build(&GridSpec::torus(8, 11)).unwrap().euler_characteristic(), 0);
        assert_eq!(Grid::build(&GridSpec::line(20, 0.0, 1.0)).unwrap().euler_characteristic(), 1);
        assert_eq!(Grid::build(&GridSpec::square(9, 0.0, 1.0)).unwrap().euler_characteristic(), 1);
    }

    #[test]
    fn periodic_spacing_tiles_extent() {
        let g = Grid::build(&GridSpec::torus(8, 12)).unwrap();
        for k in 0..2 {
            let total = g.spacing()[k] * g.nodes(k) as f64;
            assert!((total - std::f64::consts::TAU).abs() < 1e-14);
        }
    }

    #[test]
    fn decay_support_drops_boundary_nodes_only() {
        let g = Grid::build(&GridSpec::line(16, 0.0, 1.0)).unwrap();
        assert_eq!(g.active_count(0, Support::Decay), 14);
        assert_eq!(g.active_count(1, Support::Decay), 15);
        let s = Grid::build(&GridSpec::square(10, 0.0, 1.0)).unwrap();
        assert_eq!(s.active_count(0, Support::Decay), 64);
        assert_eq!(s.active_count(1, Support::Decay), 2 * 9 * 8);
        assert_eq!(s.active_count(2, Support::Decay), 81);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Grid::build(&GridSpec::circle(4)).is_err());
        let mut s = GridSpec::circle(16);
        s.axes[0].extent = 0.0;
        assert!(matches!(Grid::build(&s), Err(Error::InvalidGrid(_))));
        let mut s = GridSpec::torus(8, 8);
        s.axes.push(s.axes[0].clone());
        assert!(Grid::build(&s).is_err());
    }

    #[test]
    fn spec_round_trip_reproduces_ordering() {
        let g = Grid::build(&GridSpec::torus(8, 9)).unwrap();
        let json = serde_json::to_string(g.spec()).unwrap();
        let h = Grid::build(&serde_json::from_str(&json).unwrap()).unwrap();
        for n in 0..=2 {
            for s in [Support::Full, Support::Decay] {
                assert_eq!(g.layout(n, s), h.layout(n, s));
            }
        }
        assert_eq!(json, serde_json::to_string(h.spec()).unwrap());
    }

    #[test]
    fn metric_validation() {
        assert!(Metric::isotropic(2, 0.5).is_ok());
        assert!(Metric::isotropic(1, 0.0).is_err());
        assert!(Metric::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(Metric::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        let m = Metric::new(2, vec![4.0, 0.0, 0.0, 9.0]).unwrap();
        assert!((m.vielbein_det() - 6.0).abs() < 1e-14);
        assert_eq!(m.diagonal(), Some(vec![4.0, 9.0]));
    }
}
