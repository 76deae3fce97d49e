//! Operator dictionary on cochains: `d`, `d†`, `ι_A`, `L_A`, wedge, pairing.
//!
//! Operators act on active-cell vectors of a [`Support`]. With
//! [`Support::Decay`] the boundary-node constraint of truncated axes is built
//! in; the constrained subspace is invariant under `d`, so `d∘d = 0` holds in
//! either support.

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::forms::FormField;
use crate::grid::{multi_indices, Grid, Metric, Support};
use crate::sparse::RealCsr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpTag {
    D,
    Codifferential,
    Interior,
    Lie,
    Hamiltonian,
    Current,
    Observable,
}

/// Real matrix between two ghost sectors.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub tag: OpTag,
    pub from: usize,
    pub to: usize,
    pub support: Support,
    pub matrix: RealCsr,
}

impl SectorOperator {
    pub fn new(grid: &Grid, tag: OpTag, from: usize, to: usize, support: Support, matrix: RealCsr) -> Self {
        assert_eq!(matrix.ncols(), grid.active_count(from, support), "domain shape");
        assert_eq!(matrix.nrows(), grid.active_count(to, support), "codomain shape");
        Self {
            tag,
            from,
            to,
            support,
            matrix,
        }
    }

    pub fn apply(&self, f: &FormField) -> Result<FormField> {
        if f.degree() != self.from {
            return Err(Error::Degree(format!(
                "operator acts on degree {}, form has degree {}",
                self.from,
                f.degree()
            )));
        }
        let y = self.matrix.mul_vec(&f.to_active(self.support));
        FormField::from_active(f.grid(), self.to, self.support, &y)
    }
}

/// Position of `axis` in the sorted list `axes ∪ {axis}`.
fn insert_position(axes: &[usize], axis: usize) -> usize {
    axes.iter().filter(|&&a| a < axis).count()
}

fn with_axis(axes: &[usize], axis: usize) -> Vec<usize> {
    let mut j = axes.to_vec();
    j.insert(insert_position(axes, axis), axis);
    j
}

fn sign(m: usize) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Coboundary `d_n` (degree `n → n+1`) for `n = 0..D-1`.
pub fn ext_derivative(grid: &Grid, support: Support) -> Vec<SectorOperator> {
    (0..grid.dim()).map(|n| ext_derivative_at(grid, n, support)).collect()
}

pub fn ext_derivative_at(grid: &Grid, n: usize, support: Support) -> SectorOperator {
    let src = grid.layout(n, support);
    let dst = grid.layout(n + 1, support);
    let h = grid.spacing();
    let mut t = Vec::new();
    for c in &dst.components {
        for local in 0..c.len {
            let row = c.offset + local;
            let base: Vec<isize> = c.coords(local).iter().map(|&v| v as isize).collect();
            for (m, &i) in c.axes.iter().enumerate() {
                let mut sub = c.axes.clone();
                sub.remove(m);
                let ci = src.component_index(&sub).unwrap();
                let s = sign(m) / h[i];
                let mut up = base.clone();
                up[i] += 1;
                if let Some(col) = grid.cell_index(src, ci, &up) {
                    t.push((row, col, s));
                }
                if let Some(col) = grid.cell_index(src, ci, &base) {
                    t.push((row, col, -s));
                }
            }
        }
    }
    let m = RealCsr::from_triplets(dst.len, src.len, &t);
    SectorOperator::new(grid, OpTag::D, n, n + 1, support, m)
}

/// Diagonal of the metric-weighted cell inner product in degree `n`:
/// `vol · Π_{i∈I} g^{ii}` per cell of component `I`.
pub fn mass_diagonal(grid: &Grid, metric: &Metric, n: usize, support: Support) -> Result<Vec<f64>> {
    let g = metric.diagonal().ok_or_else(|| {
        Error::InvalidMetric("codifferential needs a diagonal metric".into())
    })?;
    if g.len() != grid.dim() {
        return Err(Error::InvalidMetric(format!(
            "metric is {}-dimensional, grid has {} axes",
            g.len(),
            grid.dim()
        )));
    }
    let vol = grid.cell_volume();
    let layout = grid.layout(n, support);
    let mut out = Vec::with_capacity(layout.len);
    for c in &layout.components {
        let w = vol * c.axes.iter().map(|&i| g[i]).product::<f64>();
        out.extend(std::iter::repeat_n(w, c.len));
    }
    Ok(out)
}

/// `d†_{n+1} = M_n⁻¹ d_nᵀ M_{n+1}` (degree `n+1 → n`), for `n = 0..D-1`.
pub fn codifferential(grid: &Grid, metric: &Metric, support: Support) -> Result<Vec<SectorOperator>> {
    let d = ext_derivative(grid, support);
    d.iter()
        .map(|dn| codifferential_from(grid, metric, dn))
        .collect()
}

pub fn codifferential_from(grid: &Grid, metric: &Metric, dn: &SectorOperator) -> Result<SectorOperator> {
    let n = dn.from;
    let m0 = mass_diagonal(grid, metric, n, dn.support)?;
    let m1 = mass_diagonal(grid, metric, n + 1, dn.support)?;
    let inv: Vec<f64> = m0.iter().map(|w| 1.0 / w).collect();
    let m = dn.matrix.transpose().scale_cols(&m1).scale_rows(&inv);
    Ok(SectorOperator::new(grid, OpTag::Codifferential, n + 1, n, dn.support, m))
}

fn check_flow(grid: &Grid, flow: &FlowField) -> Result<()> {
    if flow.grid().same_as(grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch("flow sampled on a different grid".into()))
    }
}

/// Average of `A^i` over the corner nodes of a cell.
fn cell_average(grid: &Grid, flow: &FlowField, axis: usize, axes: &[usize], base: &[usize]) -> f64 {
    let mut acc = 0.0;
    let corners = 1usize << axes.len();
    for mask in 0..corners {
        let mut node = base.to_vec();
        for (b, &k) in axes.iter().enumerate() {
            if mask >> b & 1 == 1 {
                node[k] = (node[k] + 1) % grid.nodes(k);
            }
        }
        acc += flow.at_node(axis, grid.node_index(&node));
    }
    acc / corners as f64
}

/// Contraction `ι_A` (degree `n → n−1`) for `n = 1..D`; element `k` maps
/// degree `k+1` to `k`.
pub fn interior_product(grid: &Grid, flow: &FlowField, support: Support) -> Result<Vec<SectorOperator>> {
    check_flow(grid, flow)?;
    Ok((0..grid.dim())
        .map(|n| interior_product_at(grid, flow, n + 1, support))
        .collect())
}

pub fn interior_product_at(grid: &Grid, flow: &FlowField, from: usize, support: Support) -> SectorOperator {
    let src = grid.layout(from, support);
    let dst = grid.layout(from - 1, support);
    let mut t = Vec::new();
    for c in &dst.components {
        for local in 0..c.len {
            let row = c.offset + local;
            let base_u = c.coords(local);
            let base: Vec<isize> = base_u.iter().map(|&v| v as isize).collect();
            for i in (0..grid.dim()).filter(|i| !c.axes.contains(i)) {
                let j = with_axis(&c.axes, i);
                let m = insert_position(&c.axes, i);
                let ci = src.component_index(&j).unwrap();
                let a = sign(m) * cell_average(grid, flow, i, &c.axes, &base_u) / 2.0;
                let mut down = base.clone();
                down[i] -= 1;
                for q in [&down, &base] {
                    if let Some(col) = grid.cell_index(src, ci, q) {
                        t.push((row, col, a));
                    }
                }
            }
        }
    }
    let m = RealCsr::from_triplets(dst.len, src.len, &t);
    SectorOperator::new(grid, OpTag::Interior, from, from - 1, support, m)
}

/// Cartan formula `L_A = dι_A + ι_A d`, one operator per degree `0..=D`.
pub fn lie_derivative(grid: &Grid, flow: &FlowField, support: Support) -> Result<Vec<SectorOperator>> {
    let d = ext_derivative(grid, support);
    let iota = interior_product(grid, flow, support)?;
    Ok(cartan(grid, &d, &iota, OpTag::Lie, support))
}

/// `X_n = d_{n−1} Y_n + Y_{n+1} d_n` per degree, where `y[k]` maps degree
/// `k+1 → k`.
pub(crate) fn cartan(grid: &Grid, d: &[SectorOperator], y: &[SectorOperator], tag: OpTag, support: Support) -> Vec<SectorOperator> {
    let dim = grid.dim();
    (0..=dim)
        .map(|n| {
            let len = grid.active_count(n, support);
            let mut m = RealCsr::zeros(len, len);
            if n > 0 {
                m = m.add(&d[n - 1].matrix.matmul(&y[n - 1].matrix));
            }
            if n < dim {
                m = m.add(&y[n].matrix.matmul(&d[n].matrix));
            }
            SectorOperator::new(grid, tag, n, n, support, m)
        })
        .collect()
}

/// Sign of the shuffle that sorts `a ++ b` (disjoint, each sorted).
fn shuffle_sign(a: &[usize], b: &[usize]) -> f64 {
    let inversions: usize = a.iter().map(|x| b.iter().filter(|y| *y < x).count()).sum();
    sign(inversions)
}

/// Average of a form's component `axes` over the faces of the cell
/// `(cell_axes, base)` that carry that component.
fn face_average(f: &FormField, axes: &[usize], cell_axes: &[usize], base: &[usize]) -> f64 {
    let extra: Vec<usize> = cell_axes.iter().copied().filter(|a| !axes.contains(a)).collect();
    let mut acc = 0.0;
    let count = 1usize << extra.len();
    for mask in 0..count {
        let mut q: Vec<isize> = base.iter().map(|&v| v as isize).collect();
        for (b, &k) in extra.iter().enumerate() {
            if mask >> b & 1 == 1 {
                q[k] += 1;
            }
        }
        acc += f.at(axes, &q).expect("face of an existing cell");
    }
    acc / count as f64
}

/// Antisymmetrized product with face-averaging interpolation.
pub fn wedge(a: &FormField, b: &FormField) -> Result<FormField> {
    a.check_same_grid(b)?;
    let grid = a.grid();
    let (p, q) = (a.degree(), b.degree());
    if p + q > grid.dim() {
        return Err(Error::Degree(format!(
            "wedge of degrees {p} and {q} exceeds dimension {}",
            grid.dim()
        )));
    }
    let layout = grid.layout(p + q, Support::Full);
    let mut values = Vec::with_capacity(layout.len);
    for c in &layout.components {
        let splits: Vec<(Vec<usize>, Vec<usize>, f64)> = multi_indices(c.axes.len(), p)
            .into_iter()
            .map(|pos| {
                let ia: Vec<usize> = pos.iter().map(|&k| c.axes[k]).collect();
                let ib: Vec<usize> = c.axes.iter().copied().filter(|x| !ia.contains(x)).collect();
                let s = shuffle_sign(&ia, &ib);
                (ia, ib, s)
            })
            .collect();
        for local in 0..c.len {
            let base = c.coords(local);
            let mut acc = 0.0;
            for (ia, ib, s) in &splits {
                acc += s * face_average(a, ia, &c.axes, &base) * face_average(b, ib, &c.axes, &base);
            }
            values.push(acc);
        }
    }
    FormField::from_values(grid, p + q, values)
}

/// `∫ a∧b` for complementary degrees.
pub fn pairing(a: &FormField, b: &FormField) -> Result<f64> {
    let dim = a.grid().dim();
    if a.degree() + b.degree() != dim {
        return Err(Error::Degree(format!(
            "pairing needs complementary degrees, got {} and {} in dimension {dim}",
            a.degree(),
            b.degree()
        )));
    }
    Ok(wedge(a, b)?.integral())
}

/// Metric-weighted inner product `⟨α, β⟩` of two same-degree active vectors.
pub fn inner_product(grid: &Grid, metric: &Metric, n: usize, support: Support, a: &[f64], b: &[f64]) -> Result<f64> {
    let w = mass_diagonal(grid, metric, n, support)?;
    Ok(crate::numeric::kahan_sum(
        a.iter().zip(b).zip(&w).map(|((x, y), w)| x * y * w),
    ))
}

/// Kernel dimensions of the Hodge Laplacian `dd† + d†d` per degree, counted
/// as eigenvalues of the symmetrized form `≤ rel_tol · max`.
pub fn hodge_betti(grid: &Grid, metric: &Metric, support: Support, rel_tol: f64) -> Result<Vec<usize>> {
    let d = ext_derivative(grid, support);
    let masses: Vec<Vec<f64>> = (0..=grid.dim())
        .map(|n| mass_diagonal(grid, metric, n, support))
        .collect::<Result<_>>()?;
    (0..=grid.dim())
        .map(|n| {
            let len = grid.active_count(n, support);
            // M_n Δ_n = d_nᵀ M_{n+1} d_n + M_n d_{n−1} M_{n−1}⁻¹ d_{n−1}ᵀ M_n
            let mut s = RealCsr::zeros(len, len);
            if n < grid.dim() {
                let dn = &d[n].matrix;
                s = s.add(&dn.transpose().scale_cols(&masses[n + 1]).matmul(dn));
            }
            if n > 0 {
                let dp = &d[n - 1].matrix;
                let inv: Vec<f64> = masses[n - 1].iter().map(|w| 1.0 / w).collect();
                let left = dp.scale_rows(&masses[n]).scale_cols(&inv);
                s = s.add(&left.matmul(&dp.transpose().scale_cols(&masses[n])));
            }
            // similarity to a symmetric matrix: M^{-1/2} (MΔ) M^{-1/2}
            let r: Vec<f64> = masses[n].iter().map(|w| 1.0 / w.sqrt()).collect();
            let sym = s.scale_rows(&r).scale_cols(&r).to_dense();
            let ev = sym
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Eigen(format!("{e:?}")))?;
            let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(ev.iter().filter(|v| v.abs() <= rel_tol * max.max(f64::MIN_POSITIVE)).count())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{BuiltinFlow, FlowSource};
    use crate::grid::GridSpec;
    use std::f64::consts::TAU;

    fn circle(n: usize) -> Grid {
        Grid::build(&GridSpec::circle(n)).unwrap()
    }

    #[test]
    fn d_of_constant_vanishes() {
        let g = circle(16);
        let one = FormField::from_fn(&g, 0, |_, _| 1.0).unwrap();
        let d = ext_derivative_at(&g, 0, Support::Full);
        assert!(d.apply(&one).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn d_sin_approximates_cos() {
        let g = circle(256);
        let f = FormField::from_fn(&g, 0, |_, x| x[0].sin()).unwrap();
        let df = ext_derivative_at(&g, 0, Support::Full).apply(&f).unwrap();
        // forward difference is centered at edge midpoints
        let exact = FormField::from_fn(&g, 1, |_, x| x[0].cos()).unwrap();
        let err = df.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let h = TAU / 256.0;
        assert!(err <= h, "err {err}");
    }

    #[test]
    fn nilpotent_on_torus_and_square() {
        for spec in [GridSpec::torus(8, 9), GridSpec::square(9, -1.0, 1.0)] {
            let g = Grid::build(&spec).unwrap();
            for s in [Support::Full, Support::Decay] {
                let d = ext_derivative(&g, s);
                assert!(d[1].matrix.matmul(&d[0].matrix).is_zero());
            }
        }
    }

    #[test]
    fn codifferential_of_cos_is_theta_sin() {
        let theta = 0.7;
        let g = circle(256);
        let m = Metric::isotropic(1, theta).unwrap();
        let ds = &codifferential(&g, &m, Support::Full).unwrap()[0];
        let f = FormField::from_fn(&g, 1, |_, x| x[0].cos()).unwrap();
        let out = ds.apply(&f).unwrap();
        let h = TAU / 256.0;
        for (i, v) in out.values().iter().enumerate() {
            let x = i as f64 * h;
            assert!((v - theta * x.sin()).abs() <= theta * h);
        }
    }

    #[test]
    fn non_diagonal_metric_rejected() {
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        let m = Metric::new(2, vec![1.0, 0.2, 0.2, 1.0]).unwrap();
        assert!(matches!(codifferential(&g, &m, Support::Full), Err(Error::InvalidMetric(_))));
    }

    #[test]
    fn unit_drive_contracts_dphi_to_one() {
        let g = circle(16);
        let a = FlowField::from_builtin(&g, BuiltinFlow::CircleDrive { v: 1.0, b: 0.0 }).unwrap();
        let iota = &interior_product(&g, &a, Support::Full).unwrap()[0];
        let out = iota.apply(&FormField::unit(&g, &[0]).unwrap()).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn torus_contraction_of_area_form() {
        // brute force: ι_A(f dx∧dy) = A^x f dy − A^y f dx with averaged samples
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        let n = 8;
        let ax: Vec<f64> = (0..64).map(|k| (k as f64 * 0.37).sin()).collect();
        let ay: Vec<f64> = (0..64).map(|k| (k as f64 * 0.11).cos()).collect();
        let flow = FlowField::from_parts(&g, vec![ax.clone(), ay.clone()], FlowSource::Zero).unwrap();
        let f: Vec<f64> = (0..64).map(|k| 1.0 + (k % 7) as f64).collect();
        let form = FormField::from_values(&g, 2, f.clone()).unwrap();
        let out = interior_product(&g, &flow, Support::Full).unwrap()[1].apply(&form).unwrap();
        let id = |i: usize, j: usize| (i % n) + n * (j % n);
        for j in 0..n {
            for i in 0..n {
                let p = id(i, j);
                let ay_e = (ay[p] + ay[id(i + 1, j)]) / 2.0;
                let want_x = -ay_e * (f[id(i, j + n - 1)] + f[p]) / 2.0;
                let ax_e = (ax[p] + ax[id(i, j + 1)]) / 2.0;
                let want_y = ax_e * (f[id(i + n - 1, j)] + f[p]) / 2.0;
                assert!((out.values()[p] - want_x).abs() < 1e-15);
                assert!((out.values()[64 + p] - want_y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lie_derivative_of_sin_is_cos() {
        let g = circle(256);
        let a = FlowField::from_builtin(&g, BuiltinFlow::CircleDrive { v: 1.0, b: 0.0 }).unwrap();
        let l = &lie_derivative(&g, &a, Support::Full).unwrap()[0];
        let one = FormField::from_fn(&g, 0, |_, _| 1.0).unwrap();
        assert!(l.apply(&one).unwrap().max_abs() < 1e-12);
        let out = l.apply(&FormField::from_fn(&g, 0, |_, x| x[0].sin()).unwrap()).unwrap();
        let h = TAU / 256.0;
        for (i, v) in out.values().iter().enumerate() {
            assert!((v - (i as f64 * h).cos()).abs() <= h);
        }
    }

    #[test]
    fn wedge_examples() {
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        let one = FormField::from_fn(&g, 0, |_, _| 1.0).unwrap();
        let beta = FormField::from_fn(&g, 1, |a, x| x[a[0]].sin() + 2.0).unwrap();
        assert_eq!(wedge(&one, &beta).unwrap().values(), beta.values());
        let dx = FormField::unit(&g, &[0]).unwrap();
        assert!(wedge(&dx, &dx).unwrap().values().iter().all(|&v| v == 0.0));
        let f = FormField::from_fn(&g, 1, |a, x| if a == [0] { x[0].cos() + 2.0 } else { 0.0 }).unwrap();
        let gy = FormField::from_fn(&g, 1, |a, x| if a == [1] { x[1].sin() } else { 0.0 }).unwrap();
        let w = wedge(&f, &gy).unwrap();
        let h = g.spacing()[0];
        for (k, v) in w.values().iter().enumerate() {
            let (i, j) = (k % 8, k / 8);
            let want = ((i as f64 + 0.5) * h).cos() + 2.0;
            let want = want * ((j as f64 + 0.5) * h).sin();
            assert!((v - want).abs() < 1e-14);
        }
        assert!(wedge(&w, &one).is_ok());
        assert!(wedge(&w, &dx).is_err());
    }

    #[test]
    fn pairing_examples() {
        let g = circle(64);
        let rho = FormField::from_fn(&g, 1, |_, _| 1.0 / TAU).unwrap();
        let one = FormField::from_fn(&g, 0, |_, _| 1.0).unwrap();
        assert!((pairing(&rho, &one).unwrap() - 1.0).abs() < 1e-14);
        let l = Grid::build(&GridSpec::line(2001, -8.0, 8.0)).unwrap();
        let s = 0.8f64;
        let gauss = FormField::from_fn(&l, 1, |_, x| (-x[0] * x[0] / (2.0 * s * s)).exp()).unwrap();
        let one = FormField::from_fn(&l, 0, |_, _| 1.0).unwrap();
        let exact = s * TAU.sqrt();
        assert!((pairing(&gauss, &one).unwrap() - exact).abs() < 1e-6);
        assert!(pairing(&one, &one).is_err());
    }

    #[test]
    fn hodge_betti_numbers() {
        let m1 = Metric::isotropic(1, 1.0).unwrap();
        let m2 = Metric::isotropic(2, 0.5).unwrap();
        assert_eq!(hodge_betti(&circle(16), &m1, Support::Full, 1e-10).unwrap(), vec![1, 1]);
        let t = Grid::build(&GridSpec::torus(8, 10)).unwrap();
        assert_eq!(hodge_betti(&t, &m2, Support::Full, 1e-10).unwrap(), vec![1, 2, 1]);
        // compactly supported cohomology of the line
        let l = Grid::build(&GridSpec::line(16, -1.0, 1.0)).unwrap();
        assert_eq!(hodge_betti(&l, &m1, Support::Decay, 1e-10).unwrap(), vec![0, 1]);
    }
}
