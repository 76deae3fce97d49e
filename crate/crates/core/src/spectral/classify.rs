//! Theta / paired / unclassified labelling of eigenstates.

use std::collections::HashMap;

use num_complex::Complex64;

use super::{Class, EigenRecord, RawSpectrum, SpectrumReport, Tolerances};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSet;
use crate::numeric::cnorm2;
use crate::sparse::ComplexCsr;

/// `‖H v − E v‖ / (‖H‖∞ ‖v‖)`.
fn eigen_residual(h: &ComplexCsr, hnorm: f64, e: Complex64, v: &[Complex64]) -> f64 {
    let hv = h.mul_vec(v);
    let r: Vec<Complex64> = hv.iter().zip(v).map(|(a, b)| a - e * b).collect();
    cnorm2(&r) / (hnorm * cnorm2(v)).max(f64::MIN_POSITIVE)
}

/// Label every eigenstate.
///
/// A state is theta when `|E| ≤ tol`, `d r ≈ 0` and `lᵀ d ≈ 0`. A state with
/// `d r ≠ 0` is paired-lower and its image must lie in the eigenspace of the
/// next sector with the same eigenvalue; a violation is an error when that
/// sector was solved completely. A non-zero state with `d r ≈ 0` that is hit
/// by some lower state is paired-upper.
pub fn classify(raw: RawSpectrum, h: &HamiltonianSet, tol: Tolerances) -> Result<SpectrumReport> {
    let dim = h.dim();
    let d: Vec<ComplexCsr> = h.d.iter().map(|op| op.matrix.to_complex()).collect();
    let dnorm: Vec<f64> = h.d.iter().map(|op| op.matrix.inf_norm().max(f64::MIN_POSITIVE)).collect();
    let hs: Vec<ComplexCsr> = h.h.iter().map(|op| op.matrix.to_complex()).collect();
    let hnorm: Vec<f64> = h.h.iter().map(|op| op.matrix.inf_norm().max(f64::MIN_POSITIVE)).collect();
    let tol_abs: Vec<f64> = raw
        .sectors
        .iter()
        .map(|s| {
            let m = s.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
            tol.tol_zero * if m > 0.0 { m } else { 1.0 }
        })
        .collect();

    let mut records: Vec<Vec<EigenRecord>> = Vec::with_capacity(dim + 1);
    // (upper sector, upper index) -> lower index
    let mut hits: HashMap<(usize, usize), usize> = HashMap::new();
    let mut max_mismatch = 0.0f64;

    for n in 0..=dim {
        let s = &raw.sectors[n];
        let mut recs = Vec::with_capacity(s.values.len());
        for (i, &e) in s.values.iter().enumerate() {
            let r = &s.right[i];
            let (d_image, dr) = if n < dim {
                let dr = d[n].mul_vec(r);
                (cnorm2(&dr) / (dnorm[n] * cnorm2(r)), Some(dr))
            } else {
                (0.0, None)
            };
            let left_closed = if n > 0 && !s.defective[i] {
                let l = &s.left[i];
                let ld = d[n - 1].vec_mul(l);
                cnorm2(&ld) / (dnorm[n - 1] * cnorm2(l).max(f64::MIN_POSITIVE)) <= tol.tol_zero
            } else {
                n == 0 || !s.defective[i]
            };
            let zero = e.norm() <= tol_abs[n];
            let annihilated = d_image <= tol.tol_zero;
            let mut class = Class::Unclassified;
            let mut partner = None;
            if zero && annihilated && left_closed {
                class = Class::Theta;
            } else if !annihilated {
                let dr = dr.expect("non-top sector");
                let up = &raw.sectors[n + 1];
                let mtol = tol_abs[n].max(tol_abs[n + 1]);
                let cands: Vec<usize> = (0..up.values.len()).filter(|&j| (up.values[j] - e).norm() <= mtol).collect();
                if cands.is_empty() {
                    if up.complete {
                        return Err(Error::PairingViolation {
                            sector: n,
                            index: i,
                            re: e.re,
                            im: e.im,
                            residual: f64::INFINITY,
                        });
                    }
                } else {
                    let resid = eigen_residual(&hs[n + 1], hnorm[n + 1], e, &dr);
                    if resid > tol.pair {
                        if up.complete {
                            return Err(Error::PairingViolation {
                                sector: n,
                                index: i,
                                re: e.re,
                                im: e.im,
                                residual: resid,
                            });
                        }
                    } else {
                        let best = *cands
                            .iter()
                            .max_by(|&&a, &&b| {
                                let ov = |j: usize| -> f64 {
                                    up.right[j].iter().zip(&dr).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
                                };
                                ov(a).total_cmp(&ov(b))
                            })
                            .unwrap();
                        class = Class::PairedLower;
                        partner = Some(best);
                        max_mismatch = max_mismatch.max((up.values[best] - e).norm());
                        hits.entry((n + 1, best)).or_insert(i);
                    }
                }
            } else if !zero {
                if let Some(&lower) = hits.get(&(n, i)) {
                    class = Class::PairedUpper;
                    partner = Some(lower);
                } else if n > 0 {
                    // annihilated, non-zero, not hit directly: accept any
                    // lower paired state with the same eigenvalue cluster
                    let low = &records[n - 1];
                    if let Some(x) = low.iter().find(|x: &&EigenRecord| {
                        x.class == Class::PairedLower && (x.value - e).norm() <= tol_abs[n].max(tol_abs[n - 1])
                    }) {
                        class = Class::PairedUpper;
                        partner = Some(x.index);
                    }
                }
            }
            recs.push(EigenRecord {
                sector: n,
                index: i,
                value: e,
                class,
                partner,
                defective: s.defective[i],
                d_image,
            });
        }
        records.push(recs);
    }

    let theta_counts = records.iter().map(|rs| rs.iter().filter(|r| r.class == Class::Theta).count()).collect();
    let zero_counts = records
        .iter()
        .zip(&tol_abs)
        .map(|(rs, &t)| rs.iter().filter(|r| r.value.norm() <= t).count())
        .collect();
    Ok(SpectrumReport {
        grid: h.grid().clone(),
        support: h.support(),
        raw,
        records,
        tolerances: tol,
        tol_zero_abs: tol_abs,
        theta_counts,
        zero_counts,
        max_pair_mismatch: max_mismatch,
    })
}
