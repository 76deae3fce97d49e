//! Property tests for structural invariants that hold for every grid, flow
//! and input, each checked against an oracle written out here.

use std::collections::BTreeMap;

use fpsusy::cpd::{factorize, integrate, integrate_boundary, Chain};
use fpsusy::exterior::{ext_derivative, wedge};
use fpsusy::hamiltonian::{evolve, mass_drift_rate};
use fpsusy::nicolai::cyclic_bidiagonal_det;
use fpsusy::report::fmt_f64;
use fpsusy::sde::NoisePath;
use fpsusy::{build_hamiltonian, builtin_flow, FormField, Grid, GridSpec, Metric, Support};
use proptest::prelude::*;

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn random_form(grid: &Grid, degree: usize, seed: &[f64]) -> FormField {
    let n = grid.cell_count(degree);
    FormField::from_values(grid, degree, (0..n).map(|i| seed[i % seed.len()] * (1.0 + (i as f64).sin())).collect()).unwrap()
}

/// Dense determinant by partial-pivot elimination.
fn dense_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn d_squared_vanishes(n in 8usize..14, vals in prop::collection::vec(-5.0f64..5.0, 1..16), full in any::<bool>()) {
        let grid = Grid::build(&GridSpec::square(n, -2.0, 2.0)).unwrap();
        let support = if full { Support::Full } else { Support::Decay };
        let d = ext_derivative(&grid, support);
        let f = FormField::from_active(&grid, 0, support, &random_form(&grid, 0, &vals).to_active(support)).unwrap();
        let dd = d[1].apply(&d[0].apply(&f).unwrap()).unwrap();
        prop_assert!(dd.max_abs() <= 1e-12 * f.max_abs().max(1.0));
    }

    #[test]
    fn hamiltonian_commutes_with_d_on_the_circle(v in -3.0f64..3.0, b in -2.0f64..2.0, theta in 0.1f64..4.0, n in 8usize..40) {
        let grid = Grid::build(&GridSpec::circle(n)).unwrap();
        let flow = builtin_flow(&grid, "circle-drive", &params(&[("v", v), ("b", b)])).unwrap();
        let h = build_hamiltonian(&grid, &Metric::isotropic(1, theta).unwrap(), &flow).unwrap();
        prop_assert!(h.nilpotency_residual() <= 1e-12);
        prop_assert!(h.intertwining_residual() <= 1e-12);
    }

    #[test]
    fn hamiltonian_commutes_with_d_on_the_torus(vx in -2.0f64..2.0, s in -2.0f64..2.0, a in -1.0f64..1.0, c in -1.0f64..1.0, theta in 0.2f64..3.0) {
        let grid = Grid::build(&GridSpec::torus(8, 9)).unwrap();
        let metric = Metric::isotropic(2, theta).unwrap();
        for flow in [
            builtin_flow(&grid, "torus-shear", &params(&[("vx", vx), ("vy", 0.3), ("s", s)])).unwrap(),
            builtin_flow(&grid, "torus-gradient", &params(&[("a", a), ("b", 0.5), ("c", c)])).unwrap(),
        ] {
            let h = build_hamiltonian(&grid, &metric, &flow).unwrap();
            prop_assert!(h.nilpotency_residual() <= 1e-12);
            prop_assert!(h.intertwining_residual() <= 1e-12);
        }
    }

    #[test]
    fn wedge_is_graded_commutative(vals in prop::collection::vec(-3.0f64..3.0, 2..12), n in 8usize..12) {
        let grid = Grid::build(&GridSpec::torus(n, n + 1)).unwrap();
        let a = random_form(&grid, 1, &vals);
        let rev: Vec<f64> = vals.iter().rev().map(|v| v + 0.5).collect();
        let b = random_form(&grid, 1, &rev);
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        for (x, y) in ab.values().iter().zip(ba.values()) {
            prop_assert!((x + y).abs() <= 1e-12);
        }
        let f = random_form(&grid, 0, &vals);
        let fa = wedge(&f, &a).unwrap();
        let af = wedge(&a, &f).unwrap();
        for (x, y) in fa.values().iter().zip(af.values()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn stokes_holds_exactly_on_rectangles(vals in prop::collection::vec(-3.0f64..3.0, 1..20), lo0 in 0usize..4, lo1 in 0usize..4, w0 in 1usize..5, w1 in 1usize..5) {
        let grid = Grid::build(&GridSpec::torus(10, 10)).unwrap();
        let psi = random_form(&grid, 1, &vals);
        let dpsi = ext_derivative(&grid, Support::Full)[1].apply(&psi).unwrap();
        let chain = Chain::rectangle([lo0, lo1], [lo0 + w0, lo1 + w1]);
        let lhs = integrate(&dpsi, &chain).unwrap();
        let rhs = integrate_boundary(&psi, &chain).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn product_densities_factorize(w0 in 0.5f64..3.0, w1 in 0.5f64..3.0, c0 in -0.5f64..0.5, known in 0usize..2) {
        let grid = Grid::build(&GridSpec::torus(12, 12)).unwrap();
        let p = FormField::from_fn(&grid, 2, |_, x| (1.2 + (x[0] - c0).cos() * w0 / 3.0) * (1.1 + (2.0 * x[1]).sin() * w1 / 3.0)).unwrap();
        let bundle = factorize(&p, &[known]).unwrap();
        prop_assert!(bundle.residual <= 1e-10);
    }

    #[test]
    fn cyclic_determinant_matches_dense_elimination(diag in prop::collection::vec(-2.0f64..2.0, 1..9), seed in -2.0f64..2.0) {
        let k = diag.len();
        let sup: Vec<f64> = (0..k).map(|i| seed + 0.3 * i as f64).collect();
        let mut m = vec![vec![0.0; k]; k];
        for i in 0..k {
            m[i][i] += diag[i];
            m[i][(i + 1) % k] += sup[i];
        }
        let det = dense_det(m);
        prop_assume!(det.abs() > 1e-9);
        let (sign, logabs) = cyclic_bidiagonal_det(&diag, &sup).unwrap();
        prop_assert_eq!(sign, if det > 0.0 { 1 } else { -1 });
        prop_assert!((logabs - det.abs().ln()).abs() <= 1e-9);
    }

    #[test]
    fn bridge_refinement_preserves_the_coarse_path(steps in 1usize..200, seed in any::<u64>(), dt in 0.001f64..0.1) {
        let coarse = NoisePath::generate(steps, dt, 1, seed).unwrap();
        let fine = coarse.refine(seed.wrapping_add(1));
        prop_assert_eq!(fine.steps, 2 * steps);
        for k in 0..steps {
            let sum = fine.increment(2 * k, 0) + fine.increment(2 * k + 1, 0);
            prop_assert!((sum - coarse.increment(k, 0)).abs() <= 1e-15);
        }
    }

    #[test]
    fn floats_round_trip_through_reports(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn evolution_conserves_mass(center in -1.5f64..1.5, width in 0.3f64..1.5, omega in 0.5f64..2.0) {
        let grid = Grid::build(&GridSpec::line(64, -5.0, 5.0)).unwrap();
        let flow = builtin_flow(&grid, "ou", &params(&[("omega0", omega)])).unwrap();
        let h = build_hamiltonian(&grid, &Metric::isotropic(1, 1.0).unwrap(), &flow).unwrap();
        let psi = FormField::from_fn(&grid, 1, |_, x| (-(x[0] - center).powi(2) / (2.0 * width * width)).exp()).unwrap();
        let run = evolve(&h, &psi, 1.0, 0.05).unwrap();
        prop_assert!(mass_drift_rate(&run.log) <= 1e-10);
    }
}
