//! Observables assembled from a small operator alphabet, stored as complex
//! blocks between ghost sectors.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exterior::interior_product_at;
use crate::flow::{FlowField, FlowSource};
use crate::grid::{Grid, Support};
use crate::sparse::ComplexCsr;

#[derive(Debug, Clone)]
pub struct Block {
    pub from: usize,
    pub to: usize,
    pub matrix: ComplexCsr,
}

#[derive(Debug, Clone)]
pub struct Observable {
    grid: Grid,
    support: Support,
    pub blocks: Vec<Block>,
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

impl Observable {
    fn new(grid: &Grid, support: Support, blocks: Vec<Block>) -> Self {
        Self {
            grid: grid.clone(),
            support,
            blocks,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn identity(grid: &Grid, support: Support) -> Self {
        Self::diagonal(grid, support, |_, _| c(1.0))
    }

    fn diagonal(grid: &Grid, support: Support, f: impl Fn(usize, &[f64]) -> Complex64) -> Self {
        let blocks = (0..=grid.dim())
            .map(|n| {
                let layout = grid.layout(n, support);
                let mut diag = Vec::with_capacity(layout.len);
                for comp in &layout.components {
                    for local in 0..comp.len {
                        diag.push(f(n, &grid.cell_center(&comp.axes, &comp.coords(local))));
                    }
                }
                Block {
                    from: n,
                    to: n,
                    matrix: ComplexCsr::from_diagonal(&diag),
                }
            })
            .collect();
        Self::new(grid, support, blocks)
    }

    /// Multiplication by `f(x)` evaluated at cell centers, in every degree.
    pub fn multiply(grid: &Grid, support: Support, f: impl Fn(&[f64]) -> Complex64) -> Self {
        Self::diagonal(grid, support, |_, x| f(x))
    }

    /// Ghost-number operator: degree `n` acts as `n`.
    pub fn ghost_number(grid: &Grid, support: Support) -> Self {
        Self::diagonal(grid, support, |n, _| c(n as f64))
    }

    /// `dφ^i ∧ ·` with the face-averaging of the wedge product.
    pub fn wedge_dphi(grid: &Grid, support: Support, axis: usize) -> Result<Self> {
        check_axis(grid, axis)?;
        let mut blocks = Vec::new();
        for n in 0..grid.dim() {
            let src = grid.layout(n, support);
            let dst = grid.layout(n + 1, support);
            let mut t = Vec::new();
            for comp in dst.components.iter().filter(|c| c.axes.contains(&axis)) {
                let m = comp.axes.iter().position(|&a| a == axis).unwrap();
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let mut sub = comp.axes.clone();
                sub.remove(m);
                let ci = src.component_index(&sub).unwrap();
                for local in 0..comp.len {
                    let base: Vec<isize> = comp.coords(local).iter().map(|&v| v as isize).collect();
                    let mut up = base.clone();
                    up[axis] += 1;
                    for q in [&base, &up] {
                        if let Some(col) = grid.cell_index(src, ci, q) {
                            t.push((comp.offset + local, col, c(sign * 0.5)));
                        }
                    }
                }
            }
            blocks.push(Block {
                from: n,
                to: n + 1,
                matrix: ComplexCsr::from_triplets(dst.len, src.len, &t),
            });
        }
        Ok(Self::new(grid, support, blocks))
    }

    /// Contraction with the coordinate vector field `∂/∂φ^i`.
    pub fn contract(grid: &Grid, support: Support, axis: usize) -> Result<Self> {
        check_axis(grid, axis)?;
        let comps = (0..grid.dim())
            .map(|k| vec![if k == axis { 1.0 } else { 0.0 }; grid.node_count()])
            .collect();
        let unit = FlowField::from_parts(
            grid,
            comps,
            FlowSource::Table {
                path: format!("unit field along axis {axis}"),
            },
        )?;
        let blocks = (1..=grid.dim())
            .map(|n| Block {
                from: n,
                to: n - 1,
                matrix: interior_product_at(grid, &unit, n, support).matrix.to_complex(),
            })
            .collect();
        Ok(Self::new(grid, support, blocks))
    }

    /// Centered difference `∂/∂φ^i` applied to every coefficient array.
    pub fn derivative(grid: &Grid, support: Support, axis: usize) -> Result<Self> {
        check_axis(grid, axis)?;
        let h = grid.spacing()[axis];
        let blocks = (0..=grid.dim())
            .map(|n| {
                let layout = grid.layout(n, support);
                let mut t = Vec::new();
                for (ci, comp) in layout.components.iter().enumerate() {
                    for local in 0..comp.len {
                        let base: Vec<isize> = comp.coords(local).iter().map(|&v| v as isize).collect();
                        for (shift, w) in [(1isize, 0.5 / h), (-1, -0.5 / h)] {
                            let mut q = base.clone();
                            q[axis] += shift;
                            if let Some(col) = grid.cell_index(layout, ci, &q) {
                                t.push((comp.offset + local, col, c(w)));
                            }
                        }
                    }
                }
                Block {
                    from: n,
                    to: n,
                    matrix: ComplexCsr::from_triplets(layout.len, layout.len, &t),
                }
            })
            .collect();
        Ok(Self::new(grid, support, blocks))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Observable) -> Result<Self> {
        self.check_compatible(other)?;
        let mut blocks: Vec<Block> = Vec::new();
        for b in &other.blocks {
            for a in self.blocks.iter().filter(|a| a.from == b.to) {
                let m = a.matrix.matmul(&b.matrix);
                match blocks.iter_mut().find(|x| x.from == b.from && x.to == a.to) {
                    Some(x) => x.matrix = x.matrix.add(&m),
                    None => blocks.push(Block {
                        from: b.from,
                        to: a.to,
                        matrix: m,
                    }),
                }
            }
        }
        blocks.sort_by_key(|b| (b.from, b.to));
        Ok(Self::new(&self.grid, self.support, blocks))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                from: b.from,
                to: b.to,
                matrix: b.matrix.scale(s),
            })
            .collect();
        Self::new(&self.grid, self.support, blocks)
    }

    pub fn add(&self, other: &Observable) -> Result<Self> {
        self.check_compatible(other)?;
        let mut blocks = self.blocks.clone();
        for b in &other.blocks {
            match blocks.iter_mut().find(|x| x.from == b.from && x.to == b.to) {
                Some(x) => x.matrix = x.matrix.add(&b.matrix),
                None => blocks.push(b.clone()),
            }
        }
        blocks.sort_by_key(|b| (b.from, b.to));
        Ok(Self::new(&self.grid, self.support, blocks))
    }

    pub fn block(&self, from: usize, to: usize) -> Option<&ComplexCsr> {
        self.blocks.iter().find(|b| b.from == from && b.to == to).map(|b| &b.matrix)
    }

    /// `lᵀ O r` for `r` in sector `from`, `l` in sector `to`.
    pub fn element(&self, from: usize, to: usize, l: &[Complex64], r: &[Complex64]) -> Complex64 {
        match self.block(from, to) {
            Some(m) => crate::numeric::cdot(l, &m.mul_vec(r)),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub(crate) fn check_compatible(&self, other: &Observable) -> Result<()> {
        if !self.grid.same_as(&other.grid) || self.support != other.support {
            return Err(Error::GridMismatch("observables built on different grids".into()));
        }
        Ok(())
    }
}

fn check_axis(grid: &Grid, axis: usize) -> Result<()> {
    if axis >= grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for a {}-axis grid",
            grid.dim()
        )));
    }
    Ok(())
}
