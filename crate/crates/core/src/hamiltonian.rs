//! Current operator `ĵ = d†/2 − ι_A`, the per-sector Fokker–Planck
//! Hamiltonians `H_n = dĵ + ĵd`, and implicit-midpoint evolution.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{cartan, codifferential_from, ext_derivative, interior_product, OpTag, SectorOperator};
use crate::flow::FlowField;
use crate::forms::FormField;
use crate::grid::{Grid, Metric, Support};
use crate::linsolve::SparseLu;
use crate::numeric::{kahan_sum, norm2};
use crate::sparse::{relative_residual, RealCsr};

/// `ĵ_{n+1}` (degree `n+1 → n`) for `n = 0..D-1`.
pub fn build_current(grid: &Grid, metric: &Metric, flow: &FlowField, support: Support) -> Result<Vec<SectorOperator>> {
    let d = ext_derivative(grid, support);
    let iota = interior_product(grid, flow, support)?;
    current_from(grid, metric, &d, &iota)
}

fn current_from(grid: &Grid, metric: &Metric, d: &[SectorOperator], iota: &[SectorOperator]) -> Result<Vec<SectorOperator>> {
    d.iter()
        .zip(iota)
        .map(|(dn, io)| {
            let ds = codifferential_from(grid, metric, dn)?;
            let m = ds.matrix.combine(0.5, &io.matrix, -1.0);
            Ok(SectorOperator::new(grid, OpTag::Current, dn.from + 1, dn.from, dn.support, m))
        })
        .collect()
}

/// Assembled operators for all ghost sectors of one (grid, metric, flow).
#[derive(Debug, Clone)]
pub struct HamiltonianSet {
    grid: Grid,
    metric: Metric,
    flow: FlowField,
    support: Support,
    /// `d[n]`: degree `n → n+1`
    pub d: Vec<SectorOperator>,
    /// `current[n]`: degree `n+1 → n`
    pub current: Vec<SectorOperator>,
    /// `h[n]`: degree `n → n`
    pub h: Vec<SectorOperator>,
}

pub fn build_hamiltonian(grid: &Grid, metric: &Metric, flow: &FlowField) -> Result<HamiltonianSet> {
    HamiltonianSet::build(grid, metric, flow, Support::Decay)
}

impl HamiltonianSet {
    pub fn build(grid: &Grid, metric: &Metric, flow: &FlowField, support: Support) -> Result<Self> {
        if metric.dim() != grid.dim() {
            return Err(Error::InvalidMetric(format!(
                "metric is {}-dimensional, grid has {} axes",
                metric.dim(),
                grid.dim()
            )));
        }
        let d = ext_derivative(grid, support);
        let iota = interior_product(grid, flow, support)?;
        let current = current_from(grid, metric, &d, &iota)?;
        let h = cartan(grid, &d, &current, OpTag::Hamiltonian, support);
        Ok(Self {
            grid: grid.clone(),
            metric: metric.clone(),
            flow: flow.clone(),
            support,
            d,
            current,
            h,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn flow(&self) -> &FlowField {
        &self.flow
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn sector(&self, n: usize) -> &RealCsr {
        &self.h[n].matrix
    }

    pub fn sector_len(&self, n: usize) -> usize {
        self.h[n].matrix.nrows()
    }

    /// Largest entry of `d_{n+1} d_n` over all `n` (exactly zero expected).
    pub fn nilpotency_residual(&self) -> f64 {
        self.d
            .windows(2)
            .map(|w| w[1].matrix.matmul(&w[0].matrix).max_abs())
            .fold(0.0, f64::max)
    }

    /// `max_n ‖H_{n+1}d_n − d_nH_n‖ / max(‖H_{n+1}d_n‖, ‖d_nH_n‖)` (Frobenius).
    pub fn intertwining_residual(&self) -> f64 {
        (0..self.dim())
            .map(|n| {
                let a = self.h[n + 1].matrix.matmul(&self.d[n].matrix);
                let b = self.d[n].matrix.matmul(&self.h[n].matrix);
                relative_residual(&a, &b)
            })
            .fold(0.0, f64::max)
    }

    /// `max_n ‖H_n − (d ĵ + ĵ d)‖` recomputed from the stored factors.
    pub fn factorization_residual(&self) -> f64 {
        let again = cartan(&self.grid, &self.d, &self.current, OpTag::Hamiltonian, self.support);
        again
            .iter()
            .zip(&self.h)
            .map(|(a, b)| a.matrix.sub(&b.matrix).max_abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Accepted local error relative to the state's max norm.
    pub tol: f64,
    /// Maximum number of step halvings after a rejection.
    pub max_depth: u32,
    /// Divergence threshold on norm growth.
    pub divergence: f64,
    /// Log every this many base steps (0 disables logging).
    pub log_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_depth: 16,
            divergence: 1e6,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogRow {
    pub time: f64,
    pub mass: f64,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub field: FormField,
    pub log: Vec<LogRow>,
    pub rejected_steps: usize,
    pub max_error_estimate: f64,
}

/// Implicit midpoint stepping of `∂ψ/∂t = −H_n ψ` with fixed base step `dt`
/// (rounded so that steps tile `[0, t]`).
///
/// Each sub-step is compared with two half steps; the Richardson
/// combination is kept when the estimate is within tolerance, otherwise the
/// sub-step is halved (down to `dt / 2^max_depth`). After a run of accepted
/// sub-steps the size is doubled again.
pub fn evolve(h: &HamiltonianSet, psi: &FormField, t: f64, dt: f64) -> Result<Evolution> {
    evolve_with(h, psi, t, dt, EvolveOptions::default())
}

struct Stepper<'a> {
    m: &'a RealCsr,
    dt: f64,
    lus: Mutex<HashMap<u32, std::sync::Arc<SparseLu<f64>>>>,
}

impl Stepper<'_> {
    fn lu(&self, level: u32) -> Result<std::sync::Arc<SparseLu<f64>>> {
        let mut map = self.lus.lock().unwrap();
        if let Some(lu) = map.get(&level) {
            return Ok(lu.clone());
        }
        let tau = self.dt / f64::powi(2.0, level as i32);
        let lu = std::sync::Arc::new(SparseLu::shifted(self.m, 1.0, tau / 2.0)?);
        map.insert(level, lu.clone());
        Ok(lu)
    }

    fn midpoint(&self, y: &[f64], level: u32) -> Result<Vec<f64>> {
        let tau = self.dt / f64::powi(2.0, level as i32);
        let hy = self.m.mul_vec(y);
        let rhs: Vec<f64> = y.iter().zip(&hy).map(|(a, b)| a - tau / 2.0 * b).collect();
        self.lu(level)?.solve(&rhs)
    }
}

pub fn evolve_with(h: &HamiltonianSet, psi: &FormField, t: f64, dt: f64, opts: EvolveOptions) -> Result<Evolution> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be ≥ 0, got {t}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {dt}")));
    }
    if !psi.grid().same_as(h.grid()) {
        return Err(Error::GridMismatch("form and Hamiltonian grids differ".into()));
    }
    let n = psi.degree();
    let top = n == h.dim();
    let vol = h.grid().cell_volume();
    let mass = |y: &[f64]| if top { kahan_sum(y.iter().copied()) * vol } else { f64::NAN };
    let mut y = psi.to_active(h.support());
    let norm0 = norm2(&y);
    let steps = if t == 0.0 { 0 } else { (t / dt).ceil() as usize };
    let step = if steps == 0 { dt } else { t / steps as f64 };
    let stepper = Stepper {
        m: h.sector(n),
        dt: step,
        lus: Mutex::new(HashMap::new()),
    };
    let mut log = vec![LogRow {
        time: 0.0,
        mass: mass(&y),
        norm: norm0,
    }];
    let mut rejected = 0;
    let mut max_est = 0.0f64;

    // one attempted step at `level`: Richardson-combined result and estimate
    let attempt = |y: &[f64], level: u32| -> Result<(Vec<f64>, f64)> {
        let full = stepper.midpoint(y, level)?;
        let half = stepper.midpoint(&stepper.midpoint(y, level + 1)?, level + 1)?;
        let scale = y.iter().chain(&half).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let est = full.iter().zip(&half).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 3.0 / scale;
        Ok((half.iter().zip(&full).map(|(b, a)| b + (b - a) / 3.0).collect(), est))
    };
    // the sub-step level persists across base steps; after a run of accepted
    // steps it is coarsened again when the position allows
    let units = 1u64 << opts.max_depth;
    let mut level = 0u32;
    let mut streak = 0;
    for k in 0..steps {
        let time = k as f64 * step;
        let mut pos = 0u64;
        while pos < units {
            let (next, est) = attempt(&y, level)?;
            if est <= opts.tol {
                y = next;
                max_est = max_est.max(est);
                pos += units >> level;
                streak += 1;
                if streak >= 4 && level > 0 && pos % (units >> (level - 1)) == 0 {
                    level -= 1;
                    streak = 0;
                }
            } else {
                if level >= opts.max_depth {
                    return Err(Error::StepRejected {
                        time: time + step * pos as f64 / units as f64,
                        estimate: est,
                        tolerance: opts.tol,
                    });
                }
                rejected += 1;
                level += 1;
                streak = 0;
            }
        }
        let norm = norm2(&y);
        if norm0 > 0.0 && norm > opts.divergence * norm0 {
            return Err(Error::Diverged {
                time: time + step,
                growth: norm / norm0,
            });
        }
        if opts.log_every > 0 && ((k + 1) % opts.log_every == 0 || k + 1 == steps) {
            log.push(LogRow {
                time: (k + 1) as f64 * step,
                mass: mass(&y),
                norm,
            });
        }
    }
    Ok(Evolution {
        field: FormField::from_active(psi.grid(), n, h.support(), &y)?,
        log,
        rejected_steps: rejected,
        max_error_estimate: max_est,
    })
}

/// Unit-mass zero mode of the top sector, by inverse iteration with a tiny
/// shift. Fails when the sector has no (numerically) null direction.
pub fn stationary_density(h: &HamiltonianSet) -> Result<FormField> {
    let n = h.dim();
    let m = h.sector(n);
    let scale = m.inf_norm().max(1.0);
    let lu = SparseLu::shifted(m, 1e-10 * scale, 1.0)?;
    let mut y = vec![1.0; m.nrows()];
    for _ in 0..4 {
        y = lu.solve(&y)?;
        let s = norm2(&y);
        y.iter_mut().for_each(|v| *v /= s);
    }
    let resid = norm2(&m.mul_vec(&y)) / scale;
    if resid > 1e-8 {
        return Err(Error::Solve(format!("top sector has no zero mode (residual {resid:.3e})")));
    }
    let f = FormField::from_active(h.grid(), n, h.support(), &y)?;
    let mass = f.integral();
    let vals: Vec<f64> = f.values().iter().map(|v| v / mass).collect();
    FormField::from_values(h.grid(), n, vals)
}

/// Largest cell Péclet number `h_i |A^i| / g_ii` over the nodes. Above 1 the
/// averaged interior product flips the sign of neighbour couplings: gradient
/// flows then lose their real spectrum and eigenvalues beyond the low end
/// become too ill-conditioned to pair.
pub fn cell_peclet(flow: &FlowField, metric: &Metric) -> f64 {
    let grid = flow.grid();
    (0..grid.dim())
        .map(|i| {
            let h = grid.spacing()[i];
            let g = metric.entry(i, i);
            flow.component(i).iter().map(|a| h * a.abs() / g).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest `|mass(t) − mass(0)| / (|mass(0)| · t)` over an evolution log.
pub fn mass_drift_rate(log: &[LogRow]) -> f64 {
    let m0 = log[0].mass;
    log.iter()
        .skip(1)
        .map(|r| (r.mass - m0).abs() / (m0.abs().max(f64::MIN_POSITIVE) * r.time.max(1.0)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{builtin_flow, BuiltinFlow};
    use crate::grid::GridSpec;
    use std::collections::BTreeMap;

    fn ou_line(n: usize, ext: f64) -> (Grid, Metric, FlowField) {
        let g = Grid::build(&GridSpec::line(n, -ext, ext)).unwrap();
        let f = FlowField::from_builtin(&g, BuiltinFlow::Ou { omega: vec![1.0] }).unwrap();
        (g, Metric::isotropic(1, 1.0).unwrap(), f)
    }

    #[test]
    fn stationary_density_is_gaussian() {
        let (g, m, f) = ou_line(256, 6.0);
        let h = build_hamiltonian(&g, &m, &f).unwrap();
        let p = stationary_density(&h).unwrap();
        assert!((p.integral() - 1.0).abs() < 1e-12);
        let want = FormField::from_fn(&g, 1, |_, x| (-x[0] * x[0]).exp() / std::f64::consts::PI.sqrt()).unwrap();
        let l1: f64 = p.values().iter().zip(want.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() * g.cell_volume();
        assert!(l1 < 1e-3, "{l1}");
        assert!(norm2(&h.sector(1).mul_vec(&p.to_active(h.support()))) < 1e-10);
    }

    #[test]
    fn zero_flow_current_is_half_codifferential() {
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        let m = Metric::isotropic(2, 0.3).unwrap();
        let j = build_current(&g, &m, &FlowField::zero(&g), Support::Full).unwrap();
        let ds = crate::exterior::codifferential(&g, &m, Support::Full).unwrap();
        for (a, b) in j.iter().zip(&ds) {
            assert_eq!(a.matrix, b.matrix.scale(0.5));
        }
    }

    #[test]
    fn current_annihilates_gaussian() {
        let (g, m, f) = ou_line(400, 6.0);
        let j = &build_current(&g, &m, &f, Support::Decay).unwrap()[0];
        let rho = FormField::from_fn(&g, 1, |_, x| (-x[0] * x[0]).exp()).unwrap();
        let out = j.apply(&rho).unwrap();
        let h = g.spacing()[0];
        let rel = norm2(out.values()) / norm2(rho.values());
        assert!(rel <= 2.0 * h * h, "rel {rel}, h² {}", h * h);
    }

    #[test]
    fn structure_identities() {
        let p: BTreeMap<String, f64> = [("s".to_string(), 0.5), ("vx".to_string(), 0.3)].into();
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        let f = builtin_flow(&g, "torus-shear", &p).unwrap();
        let h = build_hamiltonian(&g, &Metric::isotropic(2, 0.5).unwrap(), &f).unwrap();
        assert_eq!(h.nilpotency_residual(), 0.0);
        assert!(h.intertwining_residual() <= 1e-12);
        assert_eq!(h.factorization_residual(), 0.0);
    }

    #[test]
    fn zero_flow_is_symmetric_psd() {
        let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
        let m = Metric::isotropic(2, 1.0).unwrap();
        let h = build_hamiltonian(&g, &m, &FlowField::zero(&g)).unwrap();
        for s in &h.h {
            assert!(s.matrix.is_symmetric(1e-12));
        }
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let (g, m, f) = ou_line(64, 6.0);
        let h = build_hamiltonian(&g, &m, &f).unwrap();
        let psi = FormField::from_fn(&g, 1, |_, x| (-(x[0] - 1.0).powi(2)).exp()).unwrap();
        let out = evolve(&h, &psi, 0.0, 0.1).unwrap();
        assert_eq!(out.field.values(), psi.values());
        assert!(evolve(&h, &psi, -1.0, 0.1).is_err());
        assert!(evolve(&h, &psi, 1.0, 0.0).is_err());
    }

    #[test]
    fn semigroup_and_mass() {
        let (g, m, f) = ou_line(128, 6.0);
        let h = build_hamiltonian(&g, &m, &f).unwrap();
        let psi = FormField::from_fn(&g, 1, |_, x| (-(x[0] - 1.0).powi(2)).exp()).unwrap();
        let a = evolve(&h, &psi, 0.7, 0.01).unwrap();
        let b1 = evolve(&h, &psi, 0.3, 0.01).unwrap();
        let b = evolve(&h, &b1.field, 0.4, 0.01).unwrap();
        let diff = a.field.values().iter().zip(b.field.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6 * a.field.max_abs(), "diff {diff}");
        assert!(mass_drift_rate(&a.log) <= 1e-10);
    }
}
