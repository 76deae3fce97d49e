//! Euler–Maruyama ensembles of `∂_t φ = −A(φ) + e ξ` for cross-checking
//! operator results.
//!
//! Every sample draws from its own ChaCha8 stream selected by the sample
//! index, so ensembles do not depend on the thread count or on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::forms::FormField;
use crate::grid::{Grid, Metric, Topology};
use crate::numeric::kahan_sum;
use crate::par::{map_chunks, Execution};

/// Brownian increments `ΔW` on a uniform time grid, `steps × channels`,
/// step-major.
#[derive(Debug, Clone, Serialize)]
pub struct NoisePath {
    pub steps: usize,
    pub dt: f64,
    pub channels: usize,
    pub seed: u64,
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn generate(steps: usize, dt: f64, channels: usize, seed: u64) -> Result<Self> {
        if steps == 0 || channels == 0 || !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise path needs steps ≥ 1, channels ≥ 1, dt > 0 (got {steps}, {channels}, {dt})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = dt.sqrt();
        let increments = (0..steps * channels)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            steps,
            dt,
            channels,
            seed,
            increments,
        })
    }

    pub fn increment(&self, step: usize, channel: usize) -> f64 {
        self.increments[step * self.channels + channel]
    }

    pub fn total_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Brownian-bridge refinement to `dt/2`: each increment is split into two
    /// halves that sum back to it. The original path is preserved exactly.
    pub fn refine(&self, seed: u64) -> NoisePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (self.dt / 4.0).sqrt();
        let mut increments = vec![0.0; 2 * self.increments.len()];
        for k in 0..self.steps {
            for c in 0..self.channels {
                let w = self.increment(k, c);
                let a = w / 2.0 + s * rng.sample::<f64, _>(StandardNormal);
                increments[2 * k * self.channels + c] = a;
                increments[(2 * k + 1) * self.channels + c] = w - a;
            }
        }
        NoisePath {
            steps: 2 * self.steps,
            dt: self.dt / 2.0,
            channels: self.channels,
            seed,
            increments,
        }
    }

    /// Empirical mean and variance of all increments.
    pub fn moments(&self) -> (f64, f64) {
        let n = self.increments.len() as f64;
        let mean = kahan_sum(self.increments.iter().copied()) / n;
        let var = kahan_sum(self.increments.iter().map(|w| (w - mean).powi(2))) / n;
        (mean, var)
    }
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    /// Initial point, one coordinate per axis.
    pub init: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
    /// Largest accepted `dt · max|∂A^i/∂φ^i|` over the grid nodes.
    pub stability: f64,
}

impl SimulateOptions {
    pub fn new(init: Vec<f64>, steps: usize, dt: f64, samples: usize, seed: u64) -> Self {
        Self {
            init,
            steps,
            dt,
            samples,
            seed,
            stability: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AxisMoments {
    pub axis: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    /// mean unwrapped displacement per unit time, periodic axes only
    pub winding_rate: Option<f64>,
    pub winding_stderr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryEnsemble {
    pub samples: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub integrator: &'static str,
    /// samples that left ten times the extent of a truncated axis
    pub blown_up: Vec<usize>,
    /// samples that ended outside the truncated extent
    pub outside: usize,
    /// normalized mass per top-degree cell, in the grid's cell order
    pub histogram: Vec<f64>,
    pub moments: Vec<AxisMoments>,
    #[serde(skip)]
    grid: Grid,
}

impl TrajectoryEnsemble {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Histogram as a top-degree density form (coefficient = mass / cell volume).
    pub fn density(&self) -> Result<FormField> {
        let vol = self.grid.cell_volume();
        FormField::from_values(
            &self.grid,
            self.grid.dim(),
            self.histogram.iter().map(|m| m / vol).collect(),
        )
    }
}

/// Partial sums for one chunk of samples; merged in chunk order.
struct Partial {
    counts: Vec<u64>,
    blown: Vec<usize>,
    outside: usize,
    // per axis: Σx, Σx², Σx³, Σx⁴ of final positions; Σr, Σr² of winding rate
    sums: Vec<[f64; 6]>,
    kept: usize,
}

/// Top-degree cell holding `x`, or `None` outside a truncated extent.
/// Euler–Maruyama ensemble `φ_{k+1} = φ_k − δt A(φ_k) + e ΔW_k`.
///
/// Periodic coordinates are wrapped only when binning; the unwrapped
/// displacement gives the winding rate. A sample is flagged and stopped when
/// a truncated coordinate strays beyond ten extents from the axis center.
pub fn simulate(flow: &FlowField, metric: &Metric, opts: &SimulateOptions, exec: Execution) -> Result<TrajectoryEnsemble> {
    let grid = flow.grid().clone();
    let dim = grid.dim();
    if metric.dim() != dim || opts.init.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: grid {dim}, metric {}, initial point {}",
            metric.dim(),
            opts.init.len()
        )));
    }
    if opts.samples == 0 || opts.steps == 0 || !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::InvalidArgument("samples ≥ 1, steps ≥ 1 and dt > 0 required".into()));
    }
    let stiff = (0..grid.node_count())
        .flat_map(|i| flow.diag_derivative(&grid.node_position(i)))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if opts.dt * stiff > opts.stability {
        return Err(Error::InvalidArgument(format!(
            "dt·max|∂A| = {:.3e} exceeds the stability bound {}",
            opts.dt * stiff,
            opts.stability
        )));
    }
    let e = metric.vielbein();
    let bounds: Vec<Option<(f64, f64)>> = (0..dim)
        .map(|k| {
            let ax = grid.axis(k);
            (ax.topology == Topology::Truncated).then(|| {
                let center = ax.origin + ax.extent / 2.0;
                (center, 10.0 * ax.extent)
            })
        })
        .collect();
    let cells = grid.cell_count(dim);
    let total_time = opts.steps as f64 * opts.dt;

    let run_chunk = |range: std::ops::Range<usize>| -> Partial {
        let mut p = Partial {
            counts: vec![0; cells],
            blown: Vec::new(),
            outside: 0,
            sums: vec![[0.0; 6]; dim],
            kept: 0,
        };
        let mut comp = vec![[0.0; 6]; dim];
        let mut x = vec![0.0; dim];
        let mut dw = vec![0.0; dim];
        let mut a = vec![0.0; dim];
        let sdt = opts.dt.sqrt();
        for sample in range {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(sample as u64);
            x.copy_from_slice(&opts.init);
            let mut blown = false;
            'steps: for _ in 0..opts.steps {
                flow.eval_into(&x, &mut a);
                for w in dw.iter_mut() {
                    *w = sdt * rng.sample::<f64, _>(StandardNormal);
                }
                for i in 0..dim {
                    let noise: f64 = (0..=i).map(|j| e[i * dim + j] * dw[j]).sum();
                    x[i] += -opts.dt * a[i] + noise;
                }
                for (k, b) in bounds.iter().enumerate() {
                    if let Some((c, r)) = b {
                        if !x[k].is_finite() || (x[k] - c).abs() > *r {
                            blown = true;
                            break 'steps;
                        }
                    }
                }
            }
            if blown {
                p.blown.push(sample);
                continue;
            }
            p.kept += 1;
            match grid.top_cell_at(&x) {
                Some(c) => p.counts[c] += 1,
                None => p.outside += 1,
            }
            for k in 0..dim {
                let rate = (x[k] - opts.init[k]) / total_time;
                let terms = [x[k], x[k].powi(2), x[k].powi(3), x[k].powi(4), rate, rate * rate];
                for (j, t) in terms.iter().enumerate() {
                    // Neumaier accumulation per moment
                    let s = p.sums[k][j];
                    let sum = s + t;
                    comp[k][j] += if s.abs() >= t.abs() { (s - sum) + t } else { (t - sum) + s };
                    p.sums[k][j] = sum;
                }
            }
        }
        for k in 0..dim {
            for j in 0..6 {
                p.sums[k][j] += comp[k][j];
            }
        }
        p
    };

    let parts = map_chunks(exec, opts.samples, 1024, run_chunk);
    let mut counts = vec![0u64; cells];
    let mut blown_up = Vec::new();
    let mut outside = 0;
    let mut kept = 0;
    let mut sums: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); 6]; dim];
    for p in parts {
        counts.iter_mut().zip(&p.counts).for_each(|(a, b)| *a += b);
        blown_up.extend(p.blown);
        outside += p.outside;
        kept += p.kept;
        for k in 0..dim {
            for j in 0..6 {
                sums[k][j].push(p.sums[k][j]);
            }
        }
    }
    let binned: u64 = counts.iter().sum();
    let histogram = if binned == 0 {
        vec![0.0; cells]
    } else {
        counts.iter().map(|&c| c as f64 / binned as f64).collect()
    };
    let n = kept as f64;
    let moments = (0..dim)
        .map(|k| {
            let m: Vec<f64> = (0..6).map(|j| kahan_sum(sums[k][j].iter().copied()) / n).collect();
            let mean = m[0];
            let var = (m[1] - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            let m4c = m[3] - 4.0 * mean * m[2] + 6.0 * mean * mean * m[1] - 3.0 * mean.powi(4);
            let periodic = grid.is_periodic(k);
            let rate_var = (m[5] - m[4] * m[4]).max(0.0);
            AxisMoments {
                axis: k,
                mean,
                mean_stderr: (var / n).sqrt(),
                variance: var,
                variance_stderr: ((m4c - var * var).max(0.0) / n).sqrt(),
                winding_rate: periodic.then_some(m[4]),
                winding_stderr: periodic.then(|| (rate_var / n).sqrt()),
            }
        })
        .collect();
    Ok(TrajectoryEnsemble {
        samples: opts.samples,
        steps: opts.steps,
        dt: opts.dt,
        seed: opts.seed,
        integrator: "euler-maruyama",
        blown_up,
        outside,
        histogram,
        moments,
        grid,
    })
}

/// L¹ distance between the ensemble histogram and a top-degree density,
/// both normalized to unit mass.
pub fn compare_density(ensemble: &TrajectoryEnsemble, psi: &FormField) -> Result<f64> {
    let grid = ensemble.grid();
    if !psi.grid().same_as(grid) {
        return Err(Error::BinningMismatch("density and histogram use different grids".into()));
    }
    if psi.degree() != grid.dim() {
        return Err(Error::BinningMismatch(format!(
            "density has degree {}, histogram bins top-degree cells ({})",
            psi.degree(),
            grid.dim()
        )));
    }
    if psi.values().len() != ensemble.histogram.len() {
        return Err(Error::BinningMismatch("cell counts differ".into()));
    }
    let total = kahan_sum(psi.values().iter().copied());
    if total == 0.0 || !total.is_finite() {
        return Err(Error::InvalidArgument("density has zero total mass".into()));
    }
    Ok(kahan_sum(
        psi.values()
            .iter()
            .zip(&ensemble.histogram)
            .map(|(p, h)| (p / total - h).abs()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::BuiltinFlow;
    use crate::grid::GridSpec;

    fn ou_line(n: usize) -> FlowField {
        let g = Grid::build(&GridSpec::line(n, -6.0, 6.0)).unwrap();
        FlowField::from_builtin(&g, BuiltinFlow::Ou { omega: vec![1.0] }).unwrap()
    }

    #[test]
    fn noise_moments_within_statistical_bounds() {
        let p = NoisePath::generate(20000, 0.01, 1, 3).unwrap();
        let (m, v) = p.moments();
        let n = 20000.0f64;
        assert!(m.abs() < 5.0 * (0.01 / n).sqrt());
        assert!((v - 0.01).abs() < 5.0 * 0.01 * (2.0 / n).sqrt());
    }

    #[test]
    fn refinement_preserves_coarse_increments() {
        let p = NoisePath::generate(50, 0.02, 2, 1).unwrap();
        let r = p.refine(9);
        assert_eq!(r.steps, 100);
        for k in 0..50 {
            for c in 0..2 {
                let s = r.increment(2 * k, c) + r.increment(2 * k + 1, c);
                assert!((s - p.increment(k, c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_limit_follows_exponential() {
        let f = ou_line(64);
        let m = Metric::isotropic(1, 1e-300).unwrap();
        let dt = 1e-3;
        let opts = SimulateOptions::new(vec![1.0], 1000, dt, 4, 0);
        let e = simulate(&f, &m, &opts, Execution::Sequential).unwrap();
        let exact = (-1.0f64).exp();
        assert!((e.moments[0].mean - exact).abs() < dt);
    }

    #[test]
    fn histogram_is_normalized_and_seed_deterministic() {
        let f = ou_line(64);
        let m = Metric::isotropic(1, 1.0).unwrap();
        let opts = SimulateOptions::new(vec![0.0], 200, 0.01, 3000, 42);
        let a = simulate(&f, &m, &opts, Execution::Parallel).unwrap();
        let b = simulate(&f, &m, &opts, Execution::Sequential).unwrap();
        assert!((kahan_sum(a.histogram.iter().copied()) - 1.0).abs() < 1e-12);
        assert_eq!(a.histogram, b.histogram);
        assert_eq!(a.moments[0].mean.to_bits(), b.moments[0].mean.to_bits());
        assert!(compare_density(&a, &a.density().unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn constant_drive_winds_at_its_velocity() {
        let g = Grid::build(&GridSpec::circle(32)).unwrap();
        let f = FlowField::from_builtin(&g, BuiltinFlow::CircleDrive { v: 1.0, b: 0.0 }).unwrap();
        let m = Metric::isotropic(1, 1.0).unwrap();
        let opts = SimulateOptions::new(vec![0.0], 500, 0.01, 4000, 7);
        let e = simulate(&f, &m, &opts, Execution::Parallel).unwrap();
        let (rate, se) = (e.moments[0].winding_rate.unwrap(), e.moments[0].winding_stderr.unwrap());
        // φ̇ = −A + noise, so the drive v turns the phase backwards
        assert!((rate + 1.0).abs() < 3.0 * se, "{rate} ± {se}");
        // diffusion alone: Var(φ_T)/T² = Θ/T
        assert!((se - (1.0f64 / 5.0 / 4000.0).sqrt()).abs() < 0.1 * se);
    }

    #[test]
    fn stiff_step_rejected() {
        let f = ou_line(64);
        let m = Metric::isotropic(1, 1.0).unwrap();
        let opts = SimulateOptions::new(vec![0.0], 10, 0.5, 10, 0);
        assert!(simulate(&f, &m, &opts, Execution::Sequential).is_err());
    }

    #[test]
    fn runaway_samples_are_flagged() {
        let g = Grid::build(&GridSpec::line(64, -1.0, 1.0)).unwrap();
        // linear repulsion: A = −φ pushes samples out exponentially
        let comps = vec![(0..64).map(|i| -g.node_position(i)[0]).collect()];
        let f = FlowField::from_parts(&g, comps, crate::flow::FlowSource::Table { path: "repel".into() }).unwrap();
        let m = Metric::isotropic(1, 0.1).unwrap();
        let opts = SimulateOptions::new(vec![0.5], 4000, 0.01, 8, 1);
        let e = simulate(&f, &m, &opts, Execution::Sequential).unwrap();
        assert!(!e.blown_up.is_empty());
    }
}
