//! Conditional probability densities as forms on a two-dimensional grid.
//!
//! For a split into an unknown axis `u` and a known axis `k`, the marginal
//! `P_mrg = M(φ^k) dφ^k` integrates the total density over `u`, and the
//! conditional `P_cnd = c dφ^u` is the quotient `P_tot / M`. Because the
//! wedge product averages each factor over the two faces of a cell, the
//! quotient is stored on the `u`-edges as the face values whose averages
//! reproduce it; the remaining alternating freedom is fixed by a least-squares
//! fit to the node-interpolated quotient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{ext_derivative_at, wedge};
use crate::forms::FormField;
use crate::grid::{Grid, Metric, Support, Topology};
use crate::hamiltonian::{evolve_with, EvolveOptions, HamiltonianSet};
use crate::numeric::{kahan_sum, norm2};

#[derive(Debug, Clone)]
pub struct CpdBundle {
    pub total: FormField,
    pub marginal: FormField,
    pub conditional: FormField,
    pub known: usize,
    pub unknown: usize,
    /// division floor `ε_div`
    pub floor: f64,
    /// fraction of known-axis cells whose marginal is below the floor
    pub below_floor: f64,
    /// `max |recombine − P_tot| / max |P_tot|` over cells with marginal above the floor
    pub residual: f64,
}

impl CpdBundle {
    /// `P_cnd ∧ P_mrg`, with the orientation sign of the split applied so the
    /// result is comparable to `P_tot`.
    pub fn recombine(&self) -> Result<FormField> {
        recombine(&self.conditional, &self.marginal, self.unknown, self.known)
    }
}

fn recombine(cond: &FormField, marg: &FormField, unknown: usize, known: usize) -> Result<FormField> {
    let mut w = wedge(cond, marg)?;
    if unknown > known {
        w.values_mut().iter_mut().for_each(|v| *v = -*v);
    }
    Ok(w)
}

fn check_split(grid: &Grid, known: &[usize]) -> Result<(usize, usize)> {
    if grid.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "factorization needs a 2D grid, got dimension {}",
            grid.dim()
        )));
    }
    match known {
        [k] if *k < 2 => Ok((1 - k, *k)),
        _ => Err(Error::InvalidArgument(format!(
            "known axes must be a single axis of a 2D grid, got {known:?}"
        ))),
    }
}

/// Total density coefficient at top cell `(c_u, c_k)`.
fn top(p: &FormField, u: usize, cu: usize, ck: usize) -> f64 {
    let mut q = [0isize; 2];
    q[u] = cu as isize;
    q[1 - u] = ck as isize;
    p.at(&[0, 1], &q).expect("top cell")
}

/// Cells along an axis.
fn cells(grid: &Grid, axis: usize) -> usize {
    match grid.axis(axis).topology {
        Topology::Periodic => grid.nodes(axis),
        Topology::Truncated => grid.nodes(axis) - 1,
    }
}

/// Face values `a_n` (nodes along the known axis) with `(a_n + a_{n+1})/2 = r_n`.
fn face_values(r: &[f64], periodic: bool) -> Vec<f64> {
    let cells = r.len();
    let nodes = if periodic { cells } else { cells + 1 };
    let target: Vec<f64> = (0..nodes)
        .map(|n| {
            if periodic {
                0.5 * (r[(n + cells - 1) % cells] + r[n % cells])
            } else if n == 0 {
                r[0]
            } else if n == cells {
                r[cells - 1]
            } else {
                0.5 * (r[n - 1] + r[n])
            }
        })
        .collect();
    let mut a = vec![0.0; nodes];
    if periodic && nodes % 2 == 1 {
        a[0] = (0..cells).map(|n| if n % 2 == 0 { r[n] } else { -r[n] }).sum();
        for n in 0..nodes - 1 {
            a[n + 1] = 2.0 * r[n] - a[n];
        }
        return a;
    }
    for n in 0..nodes - 1 {
        a[n + 1] = 2.0 * r[n] - a[n];
    }
    let alt = |n: usize| if n % 2 == 0 { 1.0 } else { -1.0 };
    let t = (0..nodes).map(|n| alt(n) * (target[n] - a[n])).sum::<f64>() / nodes as f64;
    a.iter_mut().enumerate().for_each(|(n, v)| *v += t * alt(n));
    a
}

/// Axis-aligned split of a top-degree density, with the marginal floor at
/// `1e-12 · max M` and at most 1% of cells below it.
pub fn factorize(total: &FormField, known: &[usize]) -> Result<CpdBundle> {
    factorize_with(total, known, 1e-12, 0.01)
}

/// [`factorize`] with an explicit relative floor `eps_div` and allowed
/// fraction of cells below it.
pub fn factorize_with(total: &FormField, known: &[usize], eps_div: f64, max_below: f64) -> Result<CpdBundle> {
    if !(eps_div > 0.0) || !(max_below >= 0.0) {
        return Err(Error::InvalidArgument("eps_div must be > 0 and the allowed fraction ≥ 0".into()));
    }
    let grid = total.grid().clone();
    let (u, k) = check_split(&grid, known)?;
    if total.degree() != 2 {
        return Err(Error::Degree(format!("total density must be a 2-form, got degree {}", total.degree())));
    }
    let (nu, nk) = (cells(&grid, u), cells(&grid, k));
    let hu = grid.spacing()[u];
    let marg: Vec<f64> = (0..nk)
        .map(|ck| kahan_sum((0..nu).map(|cu| top(total, u, cu, ck))) * hu)
        .collect();
    let mmax = marg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = eps_div * mmax;
    let below = marg.iter().filter(|&&m| m <= floor).count();
    let below_floor = below as f64 / nk as f64;
    if below_floor > max_below {
        return Err(Error::IllConditioned {
            fraction: 100.0 * below_floor,
        });
    }

    let marginal = FormField::from_fn(&grid, 1, |_, _| 0.0)?;
    let mut marginal = marginal;
    let mut conditional = FormField::zeros(&grid, 1)?;
    let full = grid.layout(1, Support::Full);
    let ck_comp = full.component_index(&[k]).unwrap();
    let cu_comp = full.component_index(&[u]).unwrap();
    {
        let c = &full.components[ck_comp];
        let vals = marginal.values_mut();
        for local in 0..c.len {
            let coords = c.coords(local);
            vals[c.offset + local] = marg[coords[k]];
        }
    }
    let periodic_k = grid.is_periodic(k);
    let faces: Vec<Vec<f64>> = (0..nu)
        .map(|cu| {
            let r: Vec<f64> = (0..nk)
                .map(|ck| if marg[ck] > floor { top(total, u, cu, ck) / marg[ck] } else { 0.0 })
                .collect();
            face_values(&r, periodic_k)
        })
        .collect();
    {
        let c = &full.components[cu_comp];
        let vals = conditional.values_mut();
        for local in 0..c.len {
            let coords = c.coords(local);
            vals[c.offset + local] = faces[coords[u]][coords[k]];
        }
    }
    let mut bundle = CpdBundle {
        total: total.clone(),
        marginal,
        conditional,
        known: k,
        unknown: u,
        floor,
        below_floor,
        residual: 0.0,
    };
    bundle.residual = support_residual(&bundle.recombine()?, total, u, &marg, floor);
    Ok(bundle)
}

fn support_residual(recombined: &FormField, total: &FormField, u: usize, marg: &[f64], floor: f64) -> f64 {
    let grid = total.grid();
    let scale = total.max_abs().max(f64::MIN_POSITIVE);
    let nu = cells(grid, u);
    let mut worst = 0.0f64;
    for (ck, m) in marg.iter().enumerate() {
        if *m <= floor {
            continue;
        }
        for cu in 0..nu {
            worst = worst.max((top(recombined, u, cu, ck) - top(total, u, cu, ck)).abs());
        }
    }
    worst / scale
}

/// `‖dP‖ / ‖P‖` on coefficient arrays; zero for top-degree forms.
pub fn marginal_closedness(p: &FormField) -> f64 {
    let grid = p.grid();
    if p.degree() >= grid.dim() {
        return 0.0;
    }
    let nrm = norm2(p.values());
    if nrm == 0.0 {
        return 0.0;
    }
    let d = ext_derivative_at(grid, p.degree(), Support::Full);
    norm2(&d.matrix.mul_vec(p.values())) / nrm
}

/// Axis-aligned box of cells: `lo[a]..hi[a]` along the chain axes, node
/// `lo[b]` along the others.
#[derive(Debug, Clone, Serialize)]
pub struct Chain {
    pub axes: Vec<usize>,
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl Chain {
    pub fn rectangle(lo: [usize; 2], hi: [usize; 2]) -> Self {
        Self {
            axes: vec![0, 1],
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    /// `(sign, face)` pairs of the boundary.
    pub fn boundary(&self) -> Vec<(f64, Chain)> {
        let mut out = Vec::new();
        for (m, &a) in self.axes.iter().enumerate() {
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            let axes: Vec<usize> = self.axes.iter().copied().filter(|&x| x != a).collect();
            let mut hi_face = self.clone();
            hi_face.axes = axes.clone();
            hi_face.lo[a] = self.hi[a];
            hi_face.hi[a] = self.hi[a];
            let mut lo_face = self.clone();
            lo_face.axes = axes;
            lo_face.hi[a] = self.lo[a];
            out.push((s, hi_face));
            out.push((-s, lo_face));
        }
        out
    }
}

/// `∫_c ω` for a form whose degree matches the chain dimension.
pub fn integrate(form: &FormField, chain: &Chain) -> Result<f64> {
    let grid = form.grid();
    if form.degree() != chain.axes.len() {
        return Err(Error::Degree(format!(
            "{}-form integrated over a {}-chain",
            form.degree(),
            chain.axes.len()
        )));
    }
    let dim = grid.dim();
    let vol: f64 = chain.axes.iter().map(|&a| grid.spacing()[a]).product();
    let ranges: Vec<std::ops::Range<usize>> = (0..dim)
        .map(|a| if chain.axes.contains(&a) { chain.lo[a]..chain.hi[a] } else { chain.lo[a]..chain.lo[a] + 1 })
        .collect();
    let mut terms = Vec::new();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    if ranges.iter().any(|r| r.is_empty()) {
        return Ok(0.0);
    }
    loop {
        let q: Vec<isize> = idx.iter().map(|&v| v as isize).collect();
        // cells outside the active complex carry no coefficient
        terms.push(form.at(&chain.axes, &q).unwrap_or(0.0));
        let mut a = 0;
        loop {
            if a == dim {
                return Ok(kahan_sum(terms) * vol);
            }
            idx[a] += 1;
            if idx[a] < ranges[a].end {
                break;
            }
            idx[a] = ranges[a].start;
            a += 1;
        }
    }
}

/// `∫_{∂c} ψ`.
pub fn integrate_boundary(form: &FormField, chain: &Chain) -> Result<f64> {
    let parts: Result<Vec<f64>> = chain
        .boundary()
        .iter()
        .map(|(s, face)| integrate(form, face).map(|v| s * v))
        .collect();
    Ok(kahan_sum(parts?))
}

/// `max|ψ| · |∂c|` as a magnitude for relative Stokes gaps.
fn boundary_magnitude(form: &FormField, chain: &Chain) -> Result<f64> {
    let grid = form.grid();
    let measure: f64 = chain
        .boundary()
        .iter()
        .map(|(_, f)| {
            f.axes
                .iter()
                .map(|&a| (f.hi[a] - f.lo[a]) as f64 * grid.spacing()[a])
                .product::<f64>()
        })
        .sum();
    Ok(form.max_abs() * measure)
}

/// A deterministic catalog of sub-rectangles of a 2D grid.
pub fn chain_catalog(grid: &Grid) -> Vec<Chain> {
    let (a, b) = (cells(grid, 0), cells(grid, 1));
    let mut out = vec![
        Chain::rectangle([0, 0], [a, b]),
        Chain::rectangle([0, 0], [a / 2, b / 2]),
        Chain::rectangle([a / 4, b / 4], [3 * a / 4, 3 * b / 4]),
        Chain::rectangle([1, 2], [a - 1, (b / 3 + 2).min(b)]),
        Chain::rectangle([a / 3, 0], [a / 3 + 1, b]),
        Chain::rectangle([a / 2, b / 2], [a / 2 + 1, b / 2 + 1]),
    ];
    out.retain(|c| c.lo[0] < c.hi[0] && c.lo[1] < c.hi[1]);
    out
}

/// One-dimensional Hamiltonians for each axis of a decoupled flow.
pub fn factor_hamiltonians(total: &HamiltonianSet) -> Result<Vec<HamiltonianSet>> {
    let grid = total.grid();
    let diag = total
        .metric()
        .diagonal()
        .ok_or_else(|| Error::InvalidMetric("factor Hamiltonians need a diagonal metric".into()))?;
    (0..grid.dim())
        .map(|axis| {
            let flow = total.flow().axis_factor(axis)?.ok_or_else(|| {
                Error::InvalidArgument(format!("flow component {axis} depends on other axes"))
            })?;
            HamiltonianSet::build(flow.grid(), &Metric::isotropic(1, diag[axis])?, &flow, total.support())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CpdTolerances {
    /// factorization residual growth per unit time
    pub factorization_rate: f64,
    /// Stokes gap at `t = 0`, relative
    pub stokes_exact: f64,
    /// Stokes gap growth per unit time, relative
    pub stokes_rate: f64,
}

impl Default for CpdTolerances {
    fn default() -> Self {
        Self {
            factorization_rate: 1e-8,
            stokes_exact: 1e-12,
            stokes_rate: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CpdSample {
    pub time: f64,
    pub factorization: f64,
    pub stokes: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CpdCheck {
    pub samples: Vec<CpdSample>,
    pub factorization_rate: f64,
    pub stokes_initial: f64,
    pub stokes_rate: f64,
    pub chains: usize,
    pub passed: bool,
    /// `(check, time, measured)` for every breached tolerance
    pub breaches: Vec<(String, f64, f64)>,
}

/// Top-degree 1D density of `total` integrated over `other`.
fn axis_density(total: &FormField, axis: usize) -> Vec<f64> {
    let grid = total.grid();
    let other = 1 - axis;
    let h = grid.spacing()[other];
    (0..cells(grid, axis))
        .map(|c| kahan_sum((0..cells(grid, other)).map(|o| top(total, axis, c, o))) * h)
        .collect()
}

/// Rebuild a product density from evolved factor densities.
fn product_bundle(grid: &Grid, fu: &[f64], fk: &[f64], u: usize, k: usize, mass: f64) -> Result<(FormField, FormField)> {
    let full = grid.layout(1, Support::Full);
    let mut cond = FormField::zeros(grid, 1)?;
    let mut marg = FormField::zeros(grid, 1)?;
    let cu = &full.components[full.component_index(&[u]).unwrap()];
    let ck = &full.components[full.component_index(&[k]).unwrap()];
    for local in 0..cu.len {
        cond.values_mut()[cu.offset + local] = fu[cu.coords(local)[u]] / mass;
    }
    for local in 0..ck.len {
        marg.values_mut()[ck.offset + local] = fk[ck.coords(local)[k]];
    }
    Ok((cond, marg))
}

/// Evolve `P_tot` with the full Hamiltonian and its axis factors with their
/// own 1D top-sector Hamiltonians, sampling the factorization residual and
/// the Stokes gap `∫_c e^{−tH}(dψ) − ∫_{∂c} e^{−tH}ψ` at `samples` equally
/// spaced times. `ψ` runs over the bundle's conditional and marginal.
pub fn evolve_and_check(
    bundle: &CpdBundle,
    total: &HamiltonianSet,
    factors: &[HamiltonianSet],
    t: f64,
    dt: f64,
    samples: usize,
    opts: EvolveOptions,
    tol: CpdTolerances,
) -> Result<CpdCheck> {
    let grid = total.grid();
    if !bundle.total.grid().same_as(grid) || factors.len() != 2 {
        return Err(Error::GridMismatch("bundle, Hamiltonian and factors must share one 2D grid".into()));
    }
    let (u, k) = (bundle.unknown, bundle.known);
    for axis in [u, k] {
        if factors[axis].dim() != 1 || factors[axis].grid().spec().axes[0] != grid.spec().axes[axis] {
            return Err(Error::GridMismatch(format!("factor {axis} does not match grid axis {axis}")));
        }
    }
    if samples == 0 || !(t > 0.0) {
        return Err(Error::InvalidArgument("need t > 0 and at least one sample".into()));
    }
    let support = total.support();
    let project = |f: &FormField| FormField::from_active(grid, f.degree(), support, &f.to_active(support));
    let mass = bundle.total.integral();
    let mut p = project(&bundle.total)?;
    let mut fu = axis_density(&bundle.total, u);
    let mut fk = axis_density(&bundle.total, k);
    let psis: Vec<FormField> = [&bundle.conditional, &bundle.marginal]
        .iter()
        .map(|f| project(f))
        .collect::<Result<_>>()?;
    let d1 = ext_derivative_at(grid, 1, Support::Full);
    let mut psi_t: Vec<FormField> = psis.clone();
    let mut dpsi_t: Vec<FormField> = psis
        .iter()
        .map(|f| FormField::from_values(grid, 2, d1.matrix.mul_vec(f.values())))
        .collect::<Result<_>>()?;
    let chains = chain_catalog(grid);
    let mags: Vec<Vec<f64>> = psis
        .iter()
        .map(|f| chains.iter().map(|c| boundary_magnitude(f, c).map(|m| m.max(f64::MIN_POSITIVE))).collect())
        .collect::<Result<_>>()?;
    let stokes_gap = |psi: &[FormField], dpsi: &[FormField]| -> Result<f64> {
        let mut worst = 0.0f64;
        for (j, (a, b)) in psi.iter().zip(dpsi).enumerate() {
            for (c, chain) in chains.iter().enumerate() {
                let gap = (integrate(b, chain)? - integrate_boundary(a, chain)?).abs() / mags[j][c];
                worst = worst.max(gap);
            }
        }
        Ok(worst)
    };
    let factor_residual = |p: &FormField, fu: &[f64], fk: &[f64]| -> Result<f64> {
        let (c, m) = product_bundle(grid, fu, fk, u, k, mass)?;
        let r = recombine(&c, &m, u, k)?;
        let scale = bundle.total.max_abs().max(f64::MIN_POSITIVE);
        Ok(r.values().iter().zip(p.values()).fold(0.0f64, |w, (a, b)| w.max((a - b).abs())) / scale)
    };

    let stokes_initial = stokes_gap(&psi_t, &dpsi_t)?;
    let f0 = factor_residual(&p, &fu, &fk)?;
    let mut out = vec![CpdSample {
        time: 0.0,
        factorization: f0,
        stokes: stokes_initial,
    }];
    let mut breaches = Vec::new();
    if stokes_initial > tol.stokes_exact {
        breaches.push(("stokes-exact".to_string(), 0.0, stokes_initial));
    }
    let seg = t / samples as f64;
    let line = |axis: usize, v: &[f64]| FormField::from_values(factors[axis].grid(), 1, v.to_vec());
    let (mut fac_rate, mut stokes_rate) = (0.0f64, 0.0f64);
    for s in 1..=samples {
        let time = seg * s as f64;
        p = evolve_with(total, &p, seg, dt, opts)?.field;
        fu = evolve_with(&factors[u], &line(u, &fu)?, seg, dt, opts)?.field.values().to_vec();
        fk = evolve_with(&factors[k], &line(k, &fk)?, seg, dt, opts)?.field.values().to_vec();
        for j in 0..psi_t.len() {
            psi_t[j] = evolve_with(total, &psi_t[j], seg, dt, opts)?.field;
            dpsi_t[j] = evolve_with(total, &dpsi_t[j], seg, dt, opts)?.field;
        }
        let fr = factor_residual(&p, &fu, &fk)?;
        let st = stokes_gap(&psi_t, &dpsi_t)?;
        let (r1, r2) = ((fr - f0).max(0.0) / time, (st - stokes_initial).max(0.0) / time);
        fac_rate = fac_rate.max(r1);
        stokes_rate = stokes_rate.max(r2);
        if r1 > tol.factorization_rate {
            breaches.push(("factorization-rate".to_string(), time, r1));
        }
        if r2 > tol.stokes_rate {
            breaches.push(("stokes-rate".to_string(), time, r2));
        }
        out.push(CpdSample {
            time,
            factorization: fr,
            stokes: st,
        });
    }
    Ok(CpdCheck {
        samples: out,
        factorization_rate: fac_rate,
        stokes_initial,
        stokes_rate,
        chains: chains.len(),
        passed: breaches.is_empty(),
        breaches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::pairing;
    use crate::flow::{builtin_flow, FlowField, FlowSource};
    use crate::grid::GridSpec;
    use std::collections::BTreeMap;

    fn torus(n: usize) -> Grid {
        Grid::build(&GridSpec::torus(n, n)).unwrap()
    }

    fn f(x: f64) -> f64 {
        1.0 + 0.5 * x.sin()
    }

    fn g(y: f64) -> f64 {
        2.0 + (2.0 * y).cos()
    }

    #[test]
    fn product_density_factors() {
        let grid = torus(16);
        let p = FormField::from_fn(&grid, 2, |_, c| f(c[0]) * g(c[1])).unwrap();
        for known in [1usize, 0] {
            let b = factorize(&p, &[known]).unwrap();
            assert!(b.residual <= 1e-10, "{}", b.residual);
            assert!(b.conditional.values().iter().all(|&v| v >= 0.0));
            assert!(marginal_closedness(&b.marginal) <= 1e-12);
            assert!(marginal_closedness(&b.conditional) <= 1e-12);
        }
        let b = factorize(&p, &[1]).unwrap();
        // conditional is f(x)/∫f, marginal g(y)·∫f
        let fx: Vec<f64> = (0..16).map(|i| f(grid.cell_center(&[0], &[i, 0])[0])).collect();
        let total_f: f64 = fx.iter().sum::<f64>() * grid.spacing()[0];
        for i in 0..16 {
            let c = b.conditional.at(&[0], &[i as isize, 3]).unwrap();
            assert!((c - fx[i] / total_f).abs() < 1e-13);
        }
    }

    #[test]
    fn uniform_density_gives_uniform_factors() {
        let grid = torus(12);
        let p = FormField::from_fn(&grid, 2, |_, _| 1.0).unwrap();
        let b = factorize(&p, &[1]).unwrap();
        let c0 = b.conditional.values()[0];
        let m0 = b.marginal.values().iter().copied().fold(0.0, f64::max);
        assert!(b.conditional.component(&[0]).unwrap().iter().all(|&v| (v - c0).abs() < 1e-14));
        assert!(b.marginal.component(&[1]).unwrap().iter().all(|&v| (v - m0).abs() < 1e-14));
    }

    #[test]
    fn correlated_density_on_square_and_odd_torus() {
        let sq = Grid::build(&GridSpec::square(17, -2.0, 2.0)).unwrap();
        let corr = |c: &[f64]| (-(c[0] * c[0] + c[1] * c[1] - 1.2 * c[0] * c[1])).exp();
        let p = FormField::from_fn(&sq, 2, |_, c| corr(c)).unwrap();
        let b = factorize(&p, &[1]).unwrap();
        assert!(b.residual <= 1e-10, "{}", b.residual);
        let t = torus(15);
        let p = FormField::from_fn(&t, 2, |_, c| 1.5 + (c[0] - c[1]).sin()).unwrap();
        let b = factorize(&p, &[0]).unwrap();
        assert!(b.residual <= 1e-10, "{}", b.residual);
    }

    #[test]
    fn vanishing_marginal_is_ill_conditioned() {
        let grid = torus(16);
        let p = FormField::from_fn(&grid, 2, |_, c| if c[1] < 1.0 { 0.0 } else { 1.0 }).unwrap();
        assert!(matches!(factorize(&p, &[1]), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn closedness_detects_cross_dependence() {
        let grid = torus(16);
        let closed = FormField::from_fn(&grid, 1, |a, c| if a == [1] { g(c[1]) } else { 0.0 }).unwrap();
        assert!(marginal_closedness(&closed) == 0.0);
        let open = FormField::from_fn(&grid, 1, |a, c| if a == [1] { f(c[0]) } else { 0.0 }).unwrap();
        assert!(marginal_closedness(&open) > 0.1);
        let uniform = FormField::unit(&Grid::build(&GridSpec::circle(16)).unwrap(), &[0]).unwrap();
        assert_eq!(marginal_closedness(&uniform), 0.0);
    }

    #[test]
    fn stokes_is_exact_on_rectangles() {
        let grid = torus(10);
        let psi = FormField::from_fn(&grid, 1, |a, c| if a == [0] { (c[0] + 2.0 * c[1]).sin() } else { c[0].cos() * c[1].sin() }).unwrap();
        let d = ext_derivative_at(&grid, 1, Support::Full);
        let dpsi = FormField::from_values(&grid, 2, d.matrix.mul_vec(psi.values())).unwrap();
        for c in chain_catalog(&grid) {
            let lhs = integrate(&dpsi, &c).unwrap();
            let rhs = integrate_boundary(&psi, &c).unwrap();
            assert!((lhs - rhs).abs() <= 1e-13, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn closed_non_exact_pair_is_nondegenerate() {
        let grid = torus(8);
        let dx = FormField::unit(&grid, &[0]).unwrap();
        let dy = FormField::unit(&grid, &[1]).unwrap();
        assert!(pairing(&dx, &dy).unwrap().abs() > 1.0);
    }

    #[test]
    fn decoupled_ou_preserves_factorization() {
        let grid = Grid::build(&GridSpec::square(24, -5.0, 5.0)).unwrap();
        let p: BTreeMap<String, f64> = [("omega0".to_string(), 1.0), ("omega1".to_string(), 0.7)].into();
        let flow = builtin_flow(&grid, "ou", &p).unwrap();
        let h = HamiltonianSet::build(&grid, &Metric::isotropic(2, 1.0).unwrap(), &flow, Support::Decay).unwrap();
        let factors = factor_hamiltonians(&h).unwrap();
        let dens = FormField::from_fn(&grid, 2, |_, c| (-(c[0] - 0.5).powi(2)).exp() * (-(c[1] + 0.3).powi(2) / 2.0).exp()).unwrap();
        let b = factorize(&dens, &[1]).unwrap();
        let r = evolve_and_check(&b, &h, &factors, 1.0, 0.05, 2, EvolveOptions::default(), CpdTolerances::default()).unwrap();
        assert!(r.passed, "{:?}", r.breaches);
    }

    #[test]
    fn coupled_flow_is_reported() {
        let grid = torus(12);
        let p: BTreeMap<String, f64> = [("vx".to_string(), 0.3), ("vy".to_string(), 0.2), ("s".to_string(), 1.0)].into();
        let flow = builtin_flow(&grid, "torus-shear", &p).unwrap();
        let h = HamiltonianSet::build(&grid, &Metric::isotropic(2, 0.5).unwrap(), &flow, Support::Decay).unwrap();
        assert!(factor_hamiltonians(&h).is_err());
        let factors: Vec<HamiltonianSet> = (0..2)
            .map(|axis| {
                let sub = grid.axis_grid(axis).unwrap();
                let v = if axis == 0 { 0.3 } else { 0.2 };
                let fl = FlowField::from_parts(&sub, vec![vec![v; 12]], FlowSource::Table { path: "drift".into() }).unwrap();
                HamiltonianSet::build(&sub, &Metric::isotropic(1, 0.5).unwrap(), &fl, Support::Decay).unwrap()
            })
            .collect();
        let dens = FormField::from_fn(&grid, 2, |_, c| f(c[0]) * g(c[1])).unwrap();
        let b = factorize(&dens, &[1]).unwrap();
        let r = evolve_and_check(&b, &h, &factors, 1.0, 0.05, 2, EvolveOptions::default(), CpdTolerances::default()).unwrap();
        assert!(r.samples[0].factorization < 1e-12);
        assert!(r.samples.last().unwrap().factorization > 1e-4);
        assert!(!r.passed);
    }
}
