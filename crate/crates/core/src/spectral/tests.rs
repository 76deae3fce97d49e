use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;

use super::*;
use crate::flow::{builtin_flow, BuiltinFlow, FlowField};
use crate::grid::{Grid, GridSpec, Metric};
use crate::hamiltonian::{build_hamiltonian, HamiltonianSet};

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn circle(n: usize, theta: f64, v: f64, b: f64) -> HamiltonianSet {
    let g = Grid::build(&GridSpec::circle(n)).unwrap();
    let f = builtin_flow(&g, "circle-drive", &params(&[("v", v), ("b", b)])).unwrap();
    build_hamiltonian(&g, &Metric::isotropic(1, theta).unwrap(), &f).unwrap()
}

fn ou(n: usize, ext: f64, omega: f64, theta: f64) -> HamiltonianSet {
    let g = Grid::build(&GridSpec::line(n, -ext, ext)).unwrap();
    let f = FlowField::from_builtin(&g, BuiltinFlow::Ou { omega: vec![omega] }).unwrap();
    build_hamiltonian(&g, &Metric::isotropic(1, theta).unwrap(), &f).unwrap()
}

fn report(h: &HamiltonianSet) -> SpectrumReport {
    analyze(h, SolveMode::Dense, Tolerances::default(), Execution::Parallel).unwrap()
}

fn sorted_re(s: &SectorSpectrum) -> Vec<f64> {
    let mut v: Vec<f64> = s.values.iter().map(|z| z.re).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn free_circle_matches_circulant_formula() {
    let (n, theta) = (16, 0.8);
    let r = report(&circle(n, theta, 0.0, 0.0));
    let h = TAU / n as f64;
    let mut want: Vec<f64> = (0..n).map(|k| theta * (1.0 - (TAU * k as f64 / n as f64).cos()) / (h * h)).collect();
    want.sort_by(f64::total_cmp);
    let got = sorted_re(r.sector(0));
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10 * want[n - 1], "{a} vs {b}");
    }
    assert!(r.sector(0).values.iter().all(|z| z.im.abs() < 1e-10 && z.re > -1e-10));
    assert_eq!(r.theta_counts, vec![1, 1]);
    assert!(r.biorthogonality_residual() < 1e-8);
}

#[test]
fn ou_spectrum_and_partition_function() {
    let r = report(&ou(512, 6.0, 1.0, 1.0));
    let s0 = sorted_re(r.sector(0));
    let s1 = sorted_re(r.sector(1));
    for k in 0..5 {
        assert!((s0[k] - (k + 1) as f64).abs() < 0.02 * (k + 1) as f64, "sector 0: {:?}", &s0[..5]);
        assert!((s1[k + 1] - (k + 1) as f64).abs() < 0.02 * (k + 1) as f64);
    }
    assert!(s1[0].abs() < 1e-8);
    assert_eq!(r.theta_counts, vec![0, 1]);
    for t in [0.5, 1.0, 2.0] {
        let z = partition_function(&r, t).unwrap();
        let coth = 1.0 / (t / 2.0f64).tanh();
        assert!((z.z - coth).abs() / coth < 0.02, "Z({t}) = {} vs {coth}", z.z);
        let w = witten_index(&r, t).unwrap();
        assert!(z.z >= w.trace.abs());
        assert!((w.trace.abs() - 1.0).abs() < 1e-2);
    }
    let b = breaking_diagnosis(&r, 1e-6, 1e-6);
    assert!(!b.broken);
    assert!((b.gap.unwrap() - 1.0).abs() < 0.02);
    let late = partition_function(&r, 50.0 / b.gap.unwrap()).unwrap();
    let zeros: usize = r.zero_counts.iter().sum();
    assert!((late.z - zeros as f64).abs() < 1e-6);
}

#[test]
fn ou_expectations() {
    let h = ou(256, 6.0, 1.0, 1.0);
    let r = report(&h);
    let g = h.grid();
    let one = Observable::identity(g, h.support());
    let e = expectation_value(&r, &one, Temperature::Infinite).unwrap();
    assert!((e - 1.0).norm() < 1e-10);
    let e = expectation_value(&r, &one, Temperature::Finite(1.0)).unwrap();
    assert!((e - 1.0).norm() < 1e-8);
    let gh = Observable::ghost_number(g, h.support());
    assert!((expectation_value(&r, &gh, Temperature::Infinite).unwrap() - 1.0).norm() < 1e-10);
    let phi2 = Observable::multiply(g, h.support(), |x| Complex64::new(x[0] * x[0], 0.0));
    let v = expectation_value(&r, &phi2, Temperature::Infinite).unwrap();
    assert!((v.re - 0.5).abs() < 0.01, "variance {v}");
}

#[test]
fn circle_pairing_and_index() {
    let r = report(&circle(64, 0.5, 0.7, 0.5));
    assert!(r.max_pair_mismatch <= 1e-8, "{}", r.max_pair_mismatch);
    assert!(r.conjugation_residual() <= 1e-8);
    let s1 = &r.sector(1).values;
    for rec in &r.records[0] {
        if rec.class == Class::PairedLower {
            let nearest = s1.iter().map(|z| (z - rec.value).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest <= 1e-8);
        }
    }
    let w1 = witten_index(&r, 0.5).unwrap();
    let w2 = witten_index(&r, 2.0).unwrap();
    assert!(w1.trace.abs() <= 1e-6 && w1.count == 0);
    assert!((w1.trace - w2.trace).abs() <= 1e-8);
    assert!(r.biorthogonality_residual() < 1e-8);
}

#[test]
fn gradient_circle_is_real() {
    let r = report(&circle(64, 0.5, 0.0, 0.8));
    for s in &r.raw.sectors {
        assert!(s.values.iter().all(|z| z.im.abs() <= 1e-8));
    }
    let a = sorted_re(r.sector(0));
    let b = sorted_re(r.sector(1));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8 * a[a.len() - 1].max(1.0));
    }
}

#[test]
fn torus_hodge_thetas() {
    let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
    let h = build_hamiltonian(&g, &Metric::isotropic(2, 1.0).unwrap(), &FlowField::zero(&g)).unwrap();
    let r = report(&h);
    assert_eq!(r.theta_counts, vec![1, 2, 1]);
    assert_eq!(witten_index(&r, 1.0).unwrap().count, 0);
    let b = breaking_diagnosis(&r, 1e-6, 1e-6);
    assert!(!b.broken);
}

#[test]
fn torus_shear_index_vanishes() {
    let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
    let f = builtin_flow(&g, "torus-shear", &params(&[("vx", 0.7), ("vy", 0.3), ("s", 0.5)])).unwrap();
    let r = report(&build_hamiltonian(&g, &Metric::isotropic(2, 0.5).unwrap(), &f).unwrap());
    let w = witten_index(&r, 0.5).unwrap();
    assert!(w.trace.abs() <= 1e-6);
    assert_eq!(w.count, 0);
}

#[test]
fn circle_drive_correlation_and_gap_trend() {
    let v = 1.0;
    let mut gaps = Vec::new();
    for theta in [0.4, 0.2, 0.1] {
        let h = circle(64, theta, v, 0.0);
        let r = report(&h);
        let b = breaking_diagnosis(&r, 1e-6, 1e-6);
        assert!(!b.broken);
        gaps.push((theta, b.gap.unwrap()));
        let g = h.grid();
        let o1 = Observable::multiply(g, h.support(), |x| Complex64::from_polar(1.0, -x[0]));
        let o2 = Observable::multiply(g, h.support(), |x| Complex64::from_polar(1.0, x[0]));
        let ts: Vec<f64> = (1..=20).map(|k| k as f64 * 0.25).collect();
        let c = correlate(&r, &o1, &o2, &ts).unwrap();
        let gamma = c.decay_rate.unwrap();
        let omega = c.frequency.unwrap();
        assert!((gamma - theta / 2.0).abs() <= 0.02 * theta / 2.0, "γ {gamma}");
        assert!((omega.abs() - v).abs() <= 0.02 * v, "ω {omega}");
        let c0 = correlate(&r, &o1, &o2, &[0.0]).unwrap().values[0];
        let prod = o1.compose(&o2).unwrap();
        let stat = expectation_value(&r, &prod, Temperature::Infinite).unwrap();
        assert!((c0 - stat).norm() < 1e-10);
    }
    let slope = (gaps[0].1 - gaps[2].1) / (gaps[0].0 - gaps[2].0);
    assert!((slope - 0.5).abs() <= 0.05 * 0.5, "slope {slope}");
    // same-sign observables have no overlap with the ground state
    let h = circle(32, 0.4, 1.0, 0.0);
    let r = report(&h);
    let o = Observable::multiply(h.grid(), h.support(), |x| Complex64::from_polar(1.0, x[0]));
    let c = correlate(&r, &o, &o, &[0.5]).unwrap();
    assert!(c.values[0].norm() < 1e-12);
    assert!(correlate(&r, &o, &o, &[-1.0]).is_err());
}

#[test]
fn ou_correlation_decays_at_omega() {
    let h = ou(256, 6.0, 1.0, 1.0);
    let r = report(&h);
    let phi = Observable::multiply(h.grid(), h.support(), |x| Complex64::new(x[0], 0.0));
    let ts: Vec<f64> = (1..=10).map(|k| k as f64 * 0.3).collect();
    let c = correlate(&r, &phi, &phi, &ts).unwrap();
    assert!((c.decay_rate.unwrap() - 1.0).abs() <= 0.02);
}

#[test]
fn iterative_matches_dense_lowest() {
    let h = ou(400, 6.0, 1.0, 1.0);
    let dense = report(&h);
    let it = analyze(&h, SolveMode::Iterative { k: 6, shift: -0.5 }, Tolerances::default(), Execution::Sequential).unwrap();
    assert!(!it.complete());
    for n in 0..2 {
        let a = sorted_re(dense.sector(n));
        let b = sorted_re(it.sector(n));
        for k in 0..6 {
            assert!((a[k] - b[k]).abs() < 1e-7, "sector {n}: {} vs {}", a[k], b[k]);
        }
    }
    assert_eq!(it.theta_counts, vec![0, 1]);
    assert!(partition_function(&it, 1.0).unwrap().lower_bound);
}

#[test]
fn execution_modes_agree() {
    let h = circle(32, 0.5, 0.7, 0.5);
    let a = eigensolve(&h, SolveMode::Dense, Execution::Parallel).unwrap();
    let b = eigensolve(&h, SolveMode::Dense, Execution::Sequential).unwrap();
    for (x, y) in a.sectors.iter().zip(&b.sectors) {
        assert_eq!(x.values, y.values);
    }
}

#[test]
fn degenerate_clusters_have_true_eigenvectors() {
    let g = Grid::build(&GridSpec::torus(8, 8)).unwrap();
    let f = builtin_flow(&g, "torus-shear", &params(&[("vx", 0.7), ("vy", 0.3), ("s", 0.5)])).unwrap();
    let h = build_hamiltonian(&g, &Metric::isotropic(2, 0.5).unwrap(), &f).unwrap();
    let raw = eigensolve(&h, SolveMode::Dense, Execution::Sequential).unwrap();
    for s in &raw.sectors {
        assert!(s.max_residual < 1e-12, "sector {}: {}", s.degree, s.max_residual);
    }
}
