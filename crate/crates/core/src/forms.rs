//! Cochains (discrete differential forms) on a [`Grid`].
//!
//! A `FormField` stores one coefficient per degree-`n` cell of the full
//! complex, in the grid's cell ordering. Coefficients are densities: the
//! integral of a top form is `Σ c · h₁⋯h_D`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, Support};

#[derive(Debug, Clone)]
pub struct FormField {
    grid: Grid,
    degree: usize,
    values: Vec<f64>,
}

/// JSON header written next to a form's CSV dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormHeader {
    pub grid: GridSpec,
    pub degree: usize,
    pub cells: usize,
    pub ordering: String,
}

impl FormField {
    pub fn zeros(grid: &Grid, degree: usize) -> Result<Self> {
        check_degree(grid, degree)?;
        Ok(Self {
            grid: grid.clone(),
            degree,
            values: vec![0.0; grid.cell_count(degree)],
        })
    }

    pub fn from_values(grid: &Grid, degree: usize, values: Vec<f64>) -> Result<Self> {
        check_degree(grid, degree)?;
        if values.len() != grid.cell_count(degree) {
            return Err(Error::Degree(format!(
                "degree {degree} needs {} coefficients, got {}",
                grid.cell_count(degree),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("coefficient {i} is not finite")));
        }
        Ok(Self {
            grid: grid.clone(),
            degree,
            values,
        })
    }

    /// Sample `f(axes, center)` at every cell center.
    pub fn from_fn(grid: &Grid, degree: usize, f: impl Fn(&[usize], &[f64]) -> f64) -> Result<Self> {
        check_degree(grid, degree)?;
        let layout = grid.layout(degree, Support::Full);
        let mut values = Vec::with_capacity(layout.len);
        for c in &layout.components {
            for local in 0..c.len {
                values.push(f(&c.axes, &grid.cell_center(&c.axes, &c.coords(local))));
            }
        }
        Self::from_values(grid, degree, values)
    }

    /// Constant unit coefficient on component `axes` (e.g. `dφ^i` or `dx∧dy`).
    pub fn unit(grid: &Grid, axes: &[usize]) -> Result<Self> {
        Self::from_fn(grid, axes.len(), |a, _| if a == axes { 1.0 } else { 0.0 })
    }

    /// Embed an operator-space vector; constrained cells are zero.
    pub fn from_active(grid: &Grid, degree: usize, support: Support, active: &[f64]) -> Result<Self> {
        check_degree(grid, degree)?;
        let layout = grid.layout(degree, support);
        if active.len() != layout.len {
            return Err(Error::Degree(format!(
                "active vector has {} entries, sector has {}",
                active.len(),
                layout.len
            )));
        }
        let full = grid.layout(degree, Support::Full);
        let mut values = vec![0.0; full.len];
        for (ci, c) in layout.components.iter().enumerate() {
            for local in 0..c.len {
                let coords: Vec<isize> = c.coords(local).iter().map(|&v| v as isize).collect();
                let target = grid.cell_index(full, ci, &coords).expect("active cell exists");
                values[target] = active[c.offset + local];
            }
        }
        Self::from_values(grid, degree, values)
    }

    /// Coefficients on the cells carried by `support`, in operator order.
    pub fn to_active(&self, support: Support) -> Vec<f64> {
        let layout = self.grid.layout(self.degree, support);
        let full = self.grid.layout(self.degree, Support::Full);
        let mut out = Vec::with_capacity(layout.len);
        for (ci, c) in layout.components.iter().enumerate() {
            for local in 0..c.len {
                let coords: Vec<isize> = c.coords(local).iter().map(|&v| v as isize).collect();
                out.push(self.values[self.grid.cell_index(full, ci, &coords).unwrap()]);
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn component(&self, axes: &[usize]) -> Option<&[f64]> {
        let layout = self.grid.layout(self.degree, Support::Full);
        let c = &layout.components[layout.component_index(axes)?];
        Some(&self.values[c.offset..c.offset + c.len])
    }

    /// Coefficient at a full-complex cell, `None` if the cell does not exist.
    pub fn at(&self, axes: &[usize], coords: &[isize]) -> Option<f64> {
        let full = self.grid.layout(self.degree, Support::Full);
        let ci = full.component_index(axes)?;
        self.grid.cell_index(full, ci, coords).map(|i| self.values[i])
    }

    /// Quadrature `Σ c · vol` over all cells.
    pub fn integral(&self) -> f64 {
        crate::numeric::kahan_sum(self.values.iter().copied()) * self.grid.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        crate::numeric::kahan_sum(self.values.iter().map(|v| v.abs())) * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_same_grid(&self, other: &FormField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("forms live on different grids".into()))
        }
    }

    pub fn header(&self) -> FormHeader {
        FormHeader {
            grid: self.grid.spec().clone(),
            degree: self.degree,
            cells: self.values.len(),
            ordering: self.grid.ordering_description(),
        }
    }

    /// CSV rows `cell,multi_index,coefficient`; multi-index axes joined by `;`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["cell", "multi_index", "coefficient"])?;
        let layout = self.grid.layout(self.degree, Support::Full);
        for c in &layout.components {
            let mi = c.axes.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";");
            for local in 0..c.len {
                let idx = c.offset + local;
                out.write_record([
                    idx.to_string(),
                    mi.clone(),
                    crate::report::fmt_f64(self.values[idx]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(grid: &Grid, degree: usize, r: R) -> Result<Self> {
        check_degree(grid, degree)?;
        let layout = grid.layout(degree, Support::Full);
        let mut values = vec![f64::NAN; layout.len];
        let mut reader = csv::Reader::from_reader(r);
        for rec in reader.records() {
            let rec = rec?;
            let bad = |m: &str| Error::InvalidArgument(format!("form CSV: {m}"));
            let idx: usize = rec.get(0).ok_or_else(|| bad("missing cell"))?.parse().map_err(|_| bad("cell index"))?;
            if idx >= layout.len {
                return Err(bad("cell index out of range"));
            }
            let (ci, _) = layout.locate(idx);
            let mi = rec.get(1).unwrap_or("");
            let axes: Vec<usize> = if mi.is_empty() {
                Vec::new()
            } else {
                mi.split(';').map(|s| s.parse().map_err(|_| bad("multi-index"))).collect::<Result<_>>()?
            };
            if axes != layout.components[ci].axes {
                return Err(bad("multi-index does not match cell"));
            }
            values[idx] = rec.get(2).ok_or_else(|| bad("missing coefficient"))?.parse().map_err(|_| bad("coefficient"))?;
        }
        Self::from_values(grid, degree, values)
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        crate::report::write_json(&dir.join(format!("{stem}.json")), &self.header())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let header: FormHeader =
            serde_json::from_reader(std::fs::File::open(dir.join(format!("{stem}.json")))?)?;
        let grid = Grid::build(&header.grid)?;
        Self::read_csv(&grid, header.degree, std::fs::File::open(dir.join(format!("{stem}.csv")))?)
    }
}

/// Ghost number of a form: its degree.
pub fn ghost_number(f: &FormField) -> usize {
    f.degree()
}

fn check_degree(grid: &Grid, degree: usize) -> Result<()> {
    if degree > grid.dim() {
        Err(Error::Degree(format!(
            "degree {degree} exceeds dimension {}",
            grid.dim()
        )))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_round_trip_zeroes_constrained_cells() {
        let g = Grid::build(&GridSpec::square(9, -1.0, 1.0)).unwrap();
        for n in 0..=2 {
            let f = FormField::from_fn(&g, n, |a, x| 1.0 + a.len() as f64 + x[0] * x[1]).unwrap();
            let act = f.to_active(Support::Decay);
            let back = FormField::from_active(&g, n, Support::Decay, &act).unwrap();
            assert_eq!(back.to_active(Support::Decay), act);
            let full = FormField::from_active(&g, n, Support::Full, &f.to_active(Support::Full)).unwrap();
            assert_eq!(full.values(), f.values());
        }
        let f = FormField::from_fn(&g, 0, |_, _| 1.0).unwrap();
        let back = FormField::from_active(&g, 0, Support::Decay, &f.to_active(Support::Decay)).unwrap();
        assert_eq!(back.at(&[], &[0, 4]), Some(0.0));
        assert_eq!(back.at(&[], &[4, 4]), Some(1.0));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Grid::build(&GridSpec::torus(8, 9)).unwrap();
        let f = FormField::from_fn(&g, 1, |a, x| (a[0] as f64 + 1.0) * (x[0] - 0.3 * x[1]).sin() / 3.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        f.save(dir.path(), "psi").unwrap();
        let h = FormField::load(dir.path(), "psi").unwrap();
        assert_eq!(h.values(), f.values());
        assert_eq!(h.degree(), 1);
        let text = std::fs::read_to_string(dir.path().join("psi.csv")).unwrap();
        assert!(text.starts_with("cell,multi_index,coefficient\n0,0,"));
    }

    #[test]
    fn ghost_numbers() {
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        assert_eq!(ghost_number(&FormField::zeros(&g, 0).unwrap()), 0);
        assert_eq!(ghost_number(&FormField::zeros(&g, 1).unwrap()), 1);
        assert_eq!(ghost_number(&FormField::unit(&g, &[0, 1]).unwrap()), 2);
        assert!(FormField::zeros(&g, 3).is_err());
    }
}
