//! Time-periodic solutions of a one-dimensional SDE at a fixed noise
//! realization, counted with the signs of their Jacobians.
//!
//! The loop equations are
//! `F_k = (φ_{k+1} − φ_k)/δt + A(φ_k) − √Θ ξ_k = 0` for `k = 0..K−1` with
//! `φ_K ≡ φ_0` (modulo the period on a circle) and `ξ_k = ΔW_k/δt`. Solving
//! them explicitly gives the time-`T` map `G(φ_0)`, whose fixed points are the
//! solutions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::grid::Topology;
use crate::par::{map_slice, Execution};
use crate::sde::NoisePath;

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Number of brackets over the initial-condition range.
    pub brackets: usize,
    /// Scan range; the grid extent when `None`.
    pub range: Option<(f64, f64)>,
    /// Largest accepted `δt · max|A′|`.
    pub stability: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            brackets: 10_000,
            range: None,
            stability: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicSolution {
    pub phi0: f64,
    /// number of times the loop wraps the circle (0 on a line)
    pub wraps: i64,
    /// `φ_k`, `k = 0..K−1` (wrapped into the axis range on a circle)
    pub loop_values: Vec<f64>,
    /// `G′(φ_0)` from the variational recursion
    pub monodromy: f64,
    /// `sign(1 − G′)`
    pub sign: i32,
    /// sign from the determinant of `δF_k/δφ_j`, orientation-corrected
    pub det_sign: i32,
    /// `max_k |F_k|`
    pub residual: f64,
    /// `|φ_K − φ_0 − wraps·period|`
    pub closure: f64,
}

struct Loop<'a> {
    flow: &'a FlowField,
    noise: &'a NoisePath,
    amp: f64,
}

impl Loop<'_> {
    fn a(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.flow.eval_into(&[x], &mut out);
        out[0]
    }

    fn da(&self, x: f64) -> f64 {
        self.flow.diag_derivative(&[x])[0]
    }

    /// `G(φ₀)` alone.
    fn value(&self, phi0: f64) -> f64 {
        let dt = self.noise.dt;
        let mut x = phi0;
        for k in 0..self.noise.steps {
            x += -dt * self.a(x) + self.amp * self.noise.increment(k, 0);
            if !x.is_finite() {
                return f64::NAN;
            }
        }
        x
    }

    /// `(G(φ₀), G′(φ₀))`.
    fn map(&self, phi0: f64) -> (f64, f64) {
        let dt = self.noise.dt;
        let mut x = phi0;
        let mut g = 1.0;
        for k in 0..self.noise.steps {
            g *= 1.0 - dt * self.da(x);
            x += -dt * self.a(x) + self.amp * self.noise.increment(k, 0);
            if !x.is_finite() {
                return (f64::NAN, f64::NAN);
            }
        }
        (x, g)
    }

    fn path(&self, phi0: f64) -> Vec<f64> {
        let dt = self.noise.dt;
        let mut out = Vec::with_capacity(self.noise.steps + 1);
        let mut x = phi0;
        out.push(x);
        for k in 0..self.noise.steps {
            x += -dt * self.a(x) + self.amp * self.noise.increment(k, 0);
            out.push(x);
        }
        out
    }

    fn residuals(&self, path: &[f64], shift: f64) -> f64 {
        let dt = self.noise.dt;
        let k_max = self.noise.steps;
        (0..k_max)
            .map(|k| {
                let next = if k + 1 == k_max { path[0] + shift } else { path[k + 1] };
                let xi = self.noise.increment(k, 0) / dt;
                ((next - path[k]) / dt + self.a(path[k]) - self.amp * xi).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Determinant of the cyclic bidiagonal matrix with `diag[k]` at `(k, k)` and
/// `sup[k]` at `(k, k+1 mod K)`, by elimination. Returns `(sign, ln|det|)`.
pub fn cyclic_bidiagonal_det(diag: &[f64], sup: &[f64]) -> Result<(i32, f64)> {
    let k = diag.len();
    if k == 0 || sup.len() != k {
        return Err(Error::InvalidArgument("cyclic matrix needs K ≥ 1 matching diagonals".into()));
    }
    if k == 1 {
        let v = diag[0] + sup[0];
        return Ok((sign_of(v), v.abs().ln()));
    }
    let mut sign = 1;
    let mut log = 0.0;
    // the last row starts with sup[K−1] in column 0; sweep it to the right
    let mut c = sup[k - 1];
    for j in 0..k - 1 {
        let d = diag[j];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::InvalidArgument(format!("zero pivot at row {j}")));
        }
        sign *= sign_of(d);
        log += d.abs().ln();
        c = -c * sup[j] / d;
    }
    let p = diag[k - 1] + c;
    if !p.is_finite() {
        return Err(Error::InvalidArgument("determinant overflow".into()));
    }
    Ok((sign * sign_of(p), log + p.abs().ln()))
}

fn sign_of(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Entries of `δF_k/δφ_j` along a loop: `(diag, sup)`.
fn loop_jacobian(lp: &Loop, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dt = lp.noise.dt;
    let diag = values.iter().map(|&x| -1.0 / dt + lp.da(x)).collect();
    let sup = vec![1.0 / dt; values.len()];
    (diag, sup)
}

fn check_flow(flow: &FlowField, noise: &NoisePath, scan: &ScanOptions) -> Result<()> {
    let g = flow.grid();
    if g.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "periodic-solution counting needs a 1D flow, got dimension {}",
            g.dim()
        )));
    }
    if noise.channels != 1 {
        return Err(Error::InvalidArgument("noise path must have one channel".into()));
    }
    if scan.brackets < 2 {
        return Err(Error::InvalidArgument("scan needs at least 2 brackets".into()));
    }
    let stiff = (0..g.node_count())
        .map(|i| flow.diag_derivative(&g.node_position(i))[0].abs())
        .fold(0.0, f64::max);
    if noise.dt * stiff > scan.stability {
        return Err(Error::InvalidArgument(format!(
            "δt·max|A′| = {:.3e} exceeds the stability bound {}",
            noise.dt * stiff,
            scan.stability
        )));
    }
    Ok(())
}

/// All fixed points of the time-`T` map, located by sign-change scanning and
/// bisection, then polished by Newton steps.
pub fn find_solutions(flow: &FlowField, theta: f64, noise: &NoisePath, scan: &ScanOptions) -> Result<Vec<PeriodicSolution>> {
    check_flow(flow, noise, scan)?;
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("Θ must be ≥ 0, got {theta}")));
    }
    let ax = flow.grid().axis(0).clone();
    let periodic = ax.topology == Topology::Periodic;
    let period = if periodic { ax.extent } else { 0.0 };
    let (lo, hi) = scan.range.unwrap_or((ax.origin, ax.origin + ax.extent));
    let lp = Loop {
        flow,
        noise,
        amp: theta.sqrt(),
    };
    let n = scan.brackets;
    let width = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + width * i as f64).collect();
    let f: Vec<f64> = xs.iter().map(|&x| lp.value(x) - x).collect();

    // integer shifts m with a sign change of f − m·period on [a, b)
    let crossings = |fa: f64, fb: f64| -> Vec<i64> {
        if !fa.is_finite() || !fb.is_finite() {
            return vec![];
        }
        let levels: Vec<i64> = if periodic {
            let (u, v) = (fa.min(fb) / period, fa.max(fb) / period);
            (u.ceil() as i64..=v.floor() as i64).collect()
        } else {
            vec![0]
        };
        levels
            .into_iter()
            .filter(|&m| {
                let (ga, gb) = (fa - m as f64 * period, fb - m as f64 * period);
                ga == 0.0 || ga * gb < 0.0
            })
            .collect()
    };

    let mut out = Vec::new();
    for i in 0..n {
        for m in crossings(f[i], f[i + 1]) {
            let shift = m as f64 * period;
            let g = |x: f64| lp.value(x) - x - shift;
            // refinement: the bracket must hold exactly one crossing
            let sub = 8;
            let mut count = 0;
            let mut prev = g(xs[i]);
            for s in 1..=sub {
                let x = xs[i] + width * s as f64 / sub as f64;
                let cur = if s == sub { f[i + 1] - shift } else { g(x) };
                if prev == 0.0 || prev * cur < 0.0 {
                    count += 1;
                }
                prev = cur;
            }
            if count != 1 {
                return Err(Error::ScanResolution(format!(
                    "bracket [{:.6e}, {:.6e}] holds {count} crossings after refinement",
                    xs[i],
                    xs[i + 1]
                )));
            }
            let (mut a, mut b) = (xs[i], xs[i + 1]);
            let mut ga = g(a);
            if ga != 0.0 {
                for _ in 0..200 {
                    if b - a <= 1e-12 * a.abs().max(1.0) {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    let gm = g(mid);
                    if gm == 0.0 {
                        a = mid;
                        b = mid;
                        break;
                    }
                    if ga * gm < 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        ga = gm;
                    }
                }
            }
            let mut x = 0.5 * (a + b);
            // Newton polish, kept only while it reduces the closure error
            for _ in 0..3 {
                let (gx, dg) = lp.map(x);
                let r = gx - x - shift;
                let step = r / (dg - 1.0);
                let y = x - step;
                if step.is_finite() && (lp.value(y) - y - shift).abs() < r.abs() {
                    x = y;
                } else {
                    break;
                }
            }
            let (gx, monodromy) = lp.map(x);
            let path = lp.path(x);
            let closure = (gx - x - shift).abs();
            let residual = lp.residuals(&path, shift);
            let values: Vec<f64> = path[..noise.steps]
                .iter()
                .map(|&v| if periodic { ax.origin + (v - ax.origin).rem_euclid(period) } else { v })
                .collect();
            let (diag, sup) = loop_jacobian(&lp, &path[..noise.steps]);
            let (dsign, _) = cyclic_bidiagonal_det(&diag, &sup)?;
            // det δF/δφ = (−1)^K δt^{−K} (G′ − 1)
            let orient = if noise.steps % 2 == 1 { 1 } else { -1 };
            out.push(PeriodicSolution {
                phi0: values[0],
                wraps: m,
                loop_values: values,
                monodromy,
                sign: sign_of(1.0 - monodromy),
                det_sign: orient * dsign,
                residual,
                closure,
            });
        }
    }
    Ok(out)
}

/// `N⁺ − N⁻`; fails when the two sign computations disagree on a solution.
pub fn winding_number(solutions: &[PeriodicSolution]) -> Result<i64> {
    let mut total = 0i64;
    for s in solutions {
        if s.sign != s.det_sign || s.sign == 0 {
            return Err(Error::SignMismatch { phi0: s.phi0 });
        }
        total += s.sign as i64;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VielbeinCheck {
    pub agrees: bool,
    pub sign_f: i32,
    pub sign_xi: i32,
    /// `ln(det δF/δφ / det δξ/δφ)`; equals `K ln √Θ` for a constant metric
    pub log_ratio: f64,
}

/// Compare `sign det(δξ/δφ)` with `sign det(δF/δφ)` along a solution, building
/// both matrices from the loop values.
pub fn vielbein_sign_check(flow: &FlowField, theta: f64, noise: &NoisePath, solution: &PeriodicSolution) -> Result<VielbeinCheck> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!("Θ must be > 0, got {theta}")));
    }
    let lp = Loop {
        flow,
        noise,
        amp: theta.sqrt(),
    };
    let (diag, sup) = loop_jacobian(&lp, &solution.loop_values);
    let e = theta.sqrt();
    let diag_xi: Vec<f64> = diag.iter().map(|v| v / e).collect();
    let sup_xi: Vec<f64> = sup.iter().map(|v| v / e).collect();
    let (sf, lf) = cyclic_bidiagonal_det(&diag, &sup)?;
    let (sx, lx) = cyclic_bidiagonal_det(&diag_xi, &sup_xi)?;
    Ok(VielbeinCheck {
        agrees: sf == sx,
        sign_f: sf,
        sign_xi: sx,
        log_ratio: lf - lx,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawSummary {
    pub seed: u64,
    pub n_plus: usize,
    pub n_minus: usize,
    pub winding: i64,
    /// winding number recomputed on the Brownian-bridge refinement to `δt/2`
    pub winding_half_step: i64,
    pub solutions: Vec<PeriodicSolution>,
}

/// Solutions and winding numbers for a set of noise draws, each with its own
/// seed; draws run concurrently.
pub fn winding_survey(
    flow: &FlowField,
    theta: f64,
    seeds: &[u64],
    steps: usize,
    dt: f64,
    scan: &ScanOptions,
    exec: Execution,
) -> Result<Vec<DrawSummary>> {
    map_slice(exec, seeds, |&seed| -> Result<DrawSummary> {
        let noise = NoisePath::generate(steps, dt, 1, seed)?;
        let solutions = find_solutions(flow, theta, &noise, scan)?;
        let winding = winding_number(&solutions)?;
        let fine = noise.refine(seed ^ 0x9e37_79b9_7f4a_7c15);
        let winding_half_step = winding_number(&find_solutions(flow, theta, &fine, scan)?)?;
        Ok(DrawSummary {
            seed,
            n_plus: solutions.iter().filter(|s| s.sign > 0).count(),
            n_minus: solutions.iter().filter(|s| s.sign < 0).count(),
            winding,
            winding_half_step,
            solutions,
        })
    })
    .into_iter()
    .collect()
}
