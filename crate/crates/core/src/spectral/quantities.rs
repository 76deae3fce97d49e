//! Traces and expectation values over a classified spectrum.

use num_complex::Complex64;
use serde::Serialize;

use super::{Class, Observable, SpectrumReport};
use crate::error::{Error, Result};
use crate::numeric::kahan_sum_complex;

/// Agreement required between the two Witten-index evaluations.
pub const WITTEN_AGREEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct WittenIndex {
    pub t: f64,
    /// `Re Σ_n (−1)^n Σ e^{−TE}`
    pub trace: f64,
    /// imaginary part of the same sum
    pub trace_im: f64,
    /// `Σ_n (−1)^n N_θ(n)`
    pub count: i64,
    pub residual: f64,
    /// trace computed from a partial spectrum
    pub partial: bool,
}

fn boltzmann(report: &SpectrumReport, n: usize, t: f64) -> Complex64 {
    kahan_sum_complex(report.records[n].iter().map(|r| (-t * r.value).exp()))
}

/// Witten index by spectral trace and by alternating theta count.
pub fn witten_index(report: &SpectrumReport, t: f64) -> Result<WittenIndex> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("T must be > 0, got {t}")));
    }
    let per: Vec<Complex64> = (0..=report.dim()).map(|n| boltzmann(report, n, t)).collect();
    let sum = kahan_sum_complex(per.iter().enumerate().map(|(n, z)| if n % 2 == 0 { *z } else { -*z }));
    let count: i64 = report
        .theta_counts
        .iter()
        .enumerate()
        .map(|(n, &c)| if n % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum();
    let partial = !report.complete();
    let residual = (sum.re - count as f64).abs();
    if !partial && residual > WITTEN_AGREEMENT {
        let unpaired: Vec<String> = report
            .all_records()
            .filter(|r| r.class == Class::Unclassified)
            .take(12)
            .map(|r| format!("sector {} #{} E={:.6e}{:+.6e}i", r.sector, r.index, r.value.re, r.value.im))
            .collect();
        return Err(Error::WittenMismatch {
            trace: sum.re,
            count,
            unpaired: if unpaired.is_empty() { "none".into() } else { unpaired.join(", ") },
        });
    }
    Ok(WittenIndex {
        t,
        trace: sum.re,
        trace_im: sum.im,
        count,
        residual,
        partial,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionValue {
    pub t: f64,
    pub z: f64,
    pub z_im: f64,
    /// computed from a partial spectrum: a lower bound only
    pub lower_bound: bool,
}

/// `Z(T) = Σ e^{−TE}` over every sector.
pub fn partition_function(report: &SpectrumReport, t: f64) -> Result<PartitionValue> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("T must be > 0, got {t}")));
    }
    let z = kahan_sum_complex((0..=report.dim()).map(|n| boltzmann(report, n, t)));
    Ok(PartitionValue {
        t,
        z: z.re,
        z_im: z.im,
        lower_bound: !report.complete(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Finite(f64),
    /// restrict to the ground states
    Infinite,
}

/// States with `Re E ≤ min Re E + tol` as `(sector, index)`.
pub fn ground_states(report: &SpectrumReport) -> Vec<(usize, usize)> {
    let min = report.all_records().map(|r| r.value.re).fold(f64::INFINITY, f64::min);
    let tol = report.tol_zero_global();
    report
        .all_records()
        .filter(|r| r.value.re <= min + tol)
        .map(|r| (r.sector, r.index))
        .collect()
}

fn check_obs(report: &SpectrumReport, obs: &Observable) -> Result<()> {
    if !obs.grid().same_as(&report.grid) || obs.support() != report.support {
        return Err(Error::GridMismatch("observable and spectrum use different grids".into()));
    }
    Ok(())
}

/// `Z⁻¹ Σ_α lᵀ_α O r_α e^{−TE_α}`, or the ground-state average as `T → ∞`.
pub fn expectation_value(report: &SpectrumReport, obs: &Observable, temp: Temperature) -> Result<Complex64> {
    check_obs(report, obs)?;
    let element = |n: usize, i: usize| {
        let s = report.sector(n);
        obs.element(n, n, &s.left[i], &s.right[i])
    };
    match temp {
        Temperature::Finite(t) => {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidArgument(format!("T must be > 0, got {t}")));
            }
            let mut num = Vec::new();
            let mut den = Vec::new();
            for r in report.all_records() {
                let w = (-t * r.value).exp();
                num.push(w * element(r.sector, r.index));
                den.push(w);
            }
            Ok(kahan_sum_complex(num) / kahan_sum_complex(den))
        }
        Temperature::Infinite => {
            let g = ground_states(report);
            let total = kahan_sum_complex(g.iter().map(|&(n, i)| element(n, i)));
            Ok(total / g.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Correlation {
    pub t: Vec<f64>,
    pub values: Vec<Complex64>,
    /// `γ` in `C ∝ e^{−(γ + iω)t}` from a least-squares fit of `ln|C|`
    pub decay_rate: Option<f64>,
    /// `ω` from the unwrapped phase
    pub frequency: Option<f64>,
}

fn slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}

/// Ground-state two-time correlation `⟨O₁(t) O₂(0)⟩` by spectral sums.
pub fn correlate(report: &SpectrumReport, o1: &Observable, o2: &Observable, ts: &[f64]) -> Result<Correlation> {
    check_obs(report, o1)?;
    check_obs(report, o2)?;
    if let Some(bad) = ts.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("correlation times must be ≥ 0, got {bad}")));
    }
    let ground = ground_states(report);
    // (weight, exponent) terms
    let mut terms: Vec<(Complex64, Complex64)> = Vec::new();
    for &(n, g) in &ground {
        let sg = report.sector(n);
        let eg = report.records[n][g].value;
        for b2 in o2.blocks.iter().filter(|b| b.from == n) {
            let m = b2.to;
            let Some(b1) = o1.block(m, n) else { continue };
            let v = b2.matrix.mul_vec(&sg.right[g]);
            let sm = report.sector(m);
            for (beta, rec) in report.records[m].iter().enumerate() {
                let a = crate::numeric::cdot(&sm.left[beta], &v);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let b = crate::numeric::cdot(&sg.left[g], &b1.mul_vec(&sm.right[beta]));
                terms.push((a * b, rec.value - eg));
            }
        }
    }
    let norm = ground.len().max(1) as f64;
    let values: Vec<Complex64> = ts
        .iter()
        .map(|&t| kahan_sum_complex(terms.iter().map(|(w, de)| w * (-t * de).exp())) / norm)
        .collect();

    let usable: Vec<usize> = (0..ts.len()).filter(|&i| values[i].norm() > 1e-300).collect();
    let x: Vec<f64> = usable.iter().map(|&i| ts[i]).collect();
    let logs: Vec<f64> = usable.iter().map(|&i| values[i].norm().ln()).collect();
    let mut phase: Vec<f64> = Vec::with_capacity(usable.len());
    for &i in &usable {
        let p = values[i].arg();
        let p = match phase.last() {
            Some(&prev) => {
                let mut q = p;
                while q - prev > std::f64::consts::PI {
                    q -= std::f64::consts::TAU;
                }
                while q - prev < -std::f64::consts::PI {
                    q += std::f64::consts::TAU;
                }
                q
            }
            None => p,
        };
        phase.push(p);
    }
    Ok(Correlation {
        t: ts.to_vec(),
        values,
        decay_rate: slope(&x, &logs).map(|s| -s),
        frequency: slope(&x, &phase).map(|s| -s),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Breaking {
    pub broken: bool,
    /// smallest real part among non-zero modes
    pub gap: Option<f64>,
    pub min_re: f64,
    pub rationale: String,
}

/// Flags breaking when a mode has `|Re E| ≤ εΓ` with `|Im E| > εE`, or when
/// some `Re E < −εΓ`.
pub fn breaking_diagnosis(report: &SpectrumReport, eps_gamma: f64, eps_e: f64) -> Breaking {
    let min_re = report.all_records().map(|r| r.value.re).fold(f64::INFINITY, f64::min);
    let gap = report
        .all_records()
        .filter(|r| r.value.norm() > report.tol_zero_abs[r.sector])
        .map(|r| r.value.re)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let resonance = report
        .all_records()
        .find(|r| r.value.re.abs() <= eps_gamma && r.value.im.abs() > eps_e);
    let (broken, rationale) = if let Some(r) = resonance {
        (
            true,
            format!(
                "sector {} mode {} has Re E = {:.3e} with Im E = {:.3e}",
                r.sector, r.index, r.value.re, r.value.im
            ),
        )
    } else if min_re < -eps_gamma {
        (true, format!("negative decay rate: min Re E = {min_re:.6e}"))
    } else {
        (
            false,
            match gap {
                Some(g) => format!("all non-zero modes decay; gap = {g:.6e}"),
                None => "only zero modes present".to_string(),
            },
        )
    };
    Breaking {
        broken,
        gap,
        min_re,
        rationale,
    }
}
