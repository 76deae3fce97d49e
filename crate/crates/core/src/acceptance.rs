//! The ten acceptance criteria, each a self-contained numerical experiment
//! with its tolerances fixed here.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::cpd::{evolve_and_check, factor_hamiltonians, factorize, CpdTolerances};
use crate::error::{Error, Result};
use crate::exterior::hodge_betti;
use crate::flow::{builtin_flow, BuiltinFlow, FlowField};
use crate::forms::FormField;
use crate::grid::{Grid, GridSpec, Metric};
use crate::hamiltonian::{build_hamiltonian, cell_peclet, evolve_with, mass_drift_rate, stationary_density, EvolveOptions, HamiltonianSet};
use crate::nicolai::{find_solutions, vielbein_sign_check, ScanOptions};
use crate::par::{map_slice, Execution};
use crate::sde::{compare_density, simulate, NoisePath, SimulateOptions};
use crate::spectral::{
    analyze, breaking_diagnosis, correlate, partition_function, witten_index, Observable, SolveMode, SpectrumReport,
    Tolerances,
};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured ≤ tolerance` (NaN fails).
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    /// wall-clock limit in seconds, where one applies
    pub time_budget: Option<f64>,
    /// measured wall-clock time; kept out of serialized reports
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AcceptanceOptions {
    pub exec: Execution,
    /// base seed for Monte Carlo and noise draws
    pub seed: u64,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            exec: Execution::Parallel,
            seed: 20_240_601,
        }
    }
}

pub const TITLES: [&str; 10] = [
    "harmonic partition function",
    "Witten index equals Euler characteristic",
    "exact discrete supersymmetry algebra",
    "spectral pairing",
    "Hodge zero-mode counts",
    "top-sector conservation and convergence",
    "Monte Carlo cross-validation",
    "Nicolai winding invariance",
    "conditional probability algebra",
    "gap and correlation trend",
];

pub fn run_criterion(id: u32, opts: &AcceptanceOptions) -> CriterionResult {
    assert!((1..=10).contains(&id), "criteria are numbered 1 to 10");
    let start = Instant::now();
    let (outcome, budget) = match id {
        1 => (harmonic_partition(opts), Some(30.0)),
        2 => (index_is_euler(opts), None),
        3 => (exact_algebra(), None),
        4 => (spectral_pairing(opts), None),
        5 => (hodge_counts(opts), None),
        6 => (conservation(), None),
        7 => (monte_carlo(opts), None),
        8 => (nicolai_invariance(opts), None),
        9 => (cpd_algebra(), None),
        _ => (trend(opts), None),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (checks, error) = match outcome {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let in_budget = budget.is_none_or(|b| seconds <= b);
    CriterionResult {
        id,
        title: TITLES[id as usize - 1],
        passed: error.is_none() && !checks.is_empty() && checks.iter().all(|c| c.passed) && in_budget,
        checks,
        error,
        time_budget: budget,
        seconds,
    }
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionResult> {
    (1..=10).map(|id| run_criterion(id, opts)).collect()
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn dense(h: &HamiltonianSet, exec: Execution) -> Result<SpectrumReport> {
    analyze(h, SolveMode::Dense, Tolerances::default(), exec)
}

fn ou_line(n: usize, ext: f64, omega: f64, theta: f64) -> Result<HamiltonianSet> {
    let g = Grid::build(&GridSpec::line(n, -ext, ext))?;
    let f = FlowField::from_builtin(&g, BuiltinFlow::Ou { omega: vec![omega] })?;
    build_hamiltonian(&g, &Metric::isotropic(1, theta)?, &f)
}

fn circle_drive(n: usize, theta: f64, v: f64, b: f64) -> Result<HamiltonianSet> {
    let g = Grid::build(&GridSpec::circle(n))?;
    let f = builtin_flow(&g, "circle-drive", &params(&[("v", v), ("b", b)]))?;
    build_hamiltonian(&g, &Metric::isotropic(1, theta)?, &f)
}

fn harmonic_partition(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let r = dense(&ou_line(512, 6.0, 1.0, 1.0)?, opts.exec)?;
    [0.5, 1.0, 2.0]
        .iter()
        .map(|&t| {
            let z = partition_function(&r, t)?;
            let exact = 1.0 / (t / 2.0f64).tanh();
            Ok(Check::at_most(format!("|Z({t}) − coth(T/2)| / coth(T/2)"), (z.z - exact).abs() / exact, 0.02))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Expect {
    Zero,
    UnitMagnitude,
}

/// Index test matrix: label, Hamiltonian, expected index.
fn index_matrix() -> Result<Vec<(String, HamiltonianSet, Expect)>> {
    let mut out = Vec::new();
    let circle = Grid::build(&GridSpec::circle(64))?;
    let torus = Grid::build(&GridSpec::torus(10, 10))?;
    // resolved so that the cell Péclet number stays below 1 down to Θ = 0.25
    let ou = Grid::build(&GridSpec::line(320, -5.0, 5.0))?;
    let dw = Grid::build(&GridSpec::line(400, -2.5, 2.5))?;
    let flows: Vec<(String, FlowField, Expect)> = vec![
        ("circle v=0.7 b=0.5".into(), builtin_flow(&circle, "circle-drive", &params(&[("v", 0.7), ("b", 0.5)]))?, Expect::Zero),
        ("circle v=1".into(), builtin_flow(&circle, "circle-drive", &params(&[("v", 1.0)]))?, Expect::Zero),
        ("circle b=0.8".into(), builtin_flow(&circle, "circle-drive", &params(&[("b", 0.8)]))?, Expect::Zero),
        (
            "torus shear".into(),
            builtin_flow(&torus, "torus-shear", &params(&[("vx", 0.7), ("vy", 0.3), ("s", 0.5)]))?,
            Expect::Zero,
        ),
        (
            "torus gradient".into(),
            builtin_flow(&torus, "torus-gradient", &params(&[("a", 0.5), ("b", 0.3), ("c", 0.2)]))?,
            Expect::Zero,
        ),
        ("line OU".into(), builtin_flow(&ou, "ou", &params(&[("omega0", 1.0)]))?, Expect::UnitMagnitude),
        ("line double-well".into(), builtin_flow(&dw, "double-well", &params(&[("a", 1.0)]))?, Expect::UnitMagnitude),
    ];
    for (label, flow, expect) in flows {
        for theta in [0.25, 1.0, 4.0] {
            let g = flow.grid();
            let h = build_hamiltonian(g, &Metric::isotropic(g.dim(), theta)?, &flow)?;
            out.push((format!("{label} Θ={theta}"), h, expect));
        }
    }
    Ok(out)
}

fn index_is_euler(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let matrix = index_matrix()?;
    let peclet = matrix
        .iter()
        .filter(|(_, _, e)| *e == Expect::UnitMagnitude)
        .map(|(_, h, _)| cell_peclet(h.flow(), h.metric()))
        .fold(0.0, f64::max);
    let rows: Vec<Result<(Expect, f64, f64, f64)>> = map_slice(opts.exec, &matrix, |(label, h, expect)| {
        let r = dense(h, Execution::Sequential).map_err(|e| Error::InvalidArgument(format!("{label}: {e}")))?;
        let a = witten_index(&r, 0.5).map_err(|e| Error::InvalidArgument(format!("{label}: {e}")))?;
        let b = witten_index(&r, 2.0).map_err(|e| Error::InvalidArgument(format!("{label}: {e}")))?;
        Ok((*expect, a.trace, (a.trace - b.trace).abs(), a.residual.max(b.residual)))
    });
    let (mut compact, mut line, mut drift, mut agree) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for row in rows {
        let (expect, w, d, res) = row?;
        match expect {
            Expect::Zero => compact = compact.max(w.abs()),
            Expect::UnitMagnitude => line = line.max((w.abs() - 1.0).abs()),
        }
        drift = drift.max(d);
        agree = agree.max(res);
    }
    Ok(vec![
        Check::at_most("circle and torus: max |W|", compact, 1e-6),
        Check::at_most("OU and double-well: max ||W| − 1|", line, 1e-2),
        Check::at_most("max |W(0.5) − W(2)|", drift, 1e-8),
        Check::at_most("max |trace − zero-mode count|", agree, 1e-6),
        Check::at_most("line grids: max cell Péclet number h|A|/Θ", peclet, 1.0),
    ])
}

fn exact_algebra() -> Result<Vec<Check>> {
    let mut hs: Vec<HamiltonianSet> = index_matrix()?.into_iter().map(|(_, h, _)| h).collect();
    for spec in [GridSpec::circle(64), GridSpec::torus(10, 10)] {
        let g = Grid::build(&spec)?;
        hs.push(build_hamiltonian(&g, &Metric::isotropic(g.dim(), 1.0)?, &FlowField::zero(&g))?);
    }
    let sq = Grid::build(&GridSpec::square(16, -5.0, 5.0))?;
    let f = builtin_flow(&sq, "ou", &params(&[("omega0", 1.0), ("omega1", 2.0)]))?;
    hs.push(build_hamiltonian(&sq, &Metric::new(2, vec![1.0, 0.0, 0.0, 2.0])?, &f)?);
    let nil = hs.iter().map(|h| h.nilpotency_residual()).fold(0.0, f64::max);
    let comm = hs.iter().map(|h| h.intertwining_residual()).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most(format!("max |d∘d| over {} configurations", hs.len()), nil, 1e-12),
        Check::at_most("max ‖Hd − dH‖_F / ‖Hd‖_F", comm, 1e-12),
    ])
}

fn spectral_pairing(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let r = dense(&circle_drive(64, 0.5, 0.7, 0.5)?, opts.exec)?;
    let upper = &r.sector(1).values;
    let mut worst = 0.0f64;
    let mut paired = 0;
    for rec in &r.records[0] {
        if rec.d_image > r.tolerances.tol_zero {
            paired += 1;
            let nearest = upper.iter().map(|z| (z - rec.value).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    Ok(vec![
        Check::at_most(format!("max distance to sector-1 spectrum ({paired} states)"), worst, 1e-8),
        Check::at_most("conjugation closure", r.conjugation_residual(), 1e-8),
    ])
}

fn hodge_counts(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (label, spec, want) in [
        ("circle", GridSpec::circle(64), vec![1usize, 1]),
        ("torus", GridSpec::torus(12, 12), vec![1, 2, 1]),
    ] {
        let g = Grid::build(&spec)?;
        let m = Metric::isotropic(g.dim(), 1.0)?;
        let h = build_hamiltonian(&g, &m, &FlowField::zero(&g))?;
        let r = dense(&h, opts.exec)?;
        let betti = hodge_betti(&g, &m, h.support(), r.tolerances.tol_zero)?;
        let miss = |got: &[usize]| got.iter().zip(&want).map(|(a, b)| a.abs_diff(*b)).sum::<usize>() as f64;
        checks.push(Check::at_most(format!("{label}: theta counts {:?} vs {want:?}", r.theta_counts), miss(&r.theta_counts), 0.0));
        checks.push(Check::at_most(format!("{label}: Hodge null spaces {betti:?} vs {want:?}"), miss(&betti), 0.0));
    }
    Ok(checks)
}

fn conservation() -> Result<Vec<Check>> {
    let h = ou_line(256, 6.0, 1.0, 1.0)?;
    let g = h.grid().clone();
    let psi = FormField::from_fn(&g, 1, |_, x| (-2.0 * (x[0] - 1.0).powi(2)).exp())?;
    let mass = psi.integral();
    let psi = FormField::from_values(&g, 1, psi.values().iter().map(|v| v / mass).collect())?;
    let run = evolve_with(&h, &psi, 10.0, 0.01, EvolveOptions::default())?;
    let zero = stationary_density(&h)?;
    let l1 = run
        .field
        .values()
        .iter()
        .zip(zero.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * g.cell_volume();
    Ok(vec![
        Check::at_most("mass drift per unit time", mass_drift_rate(&run.log), 1e-10),
        Check::at_most("L¹ to zero mode at t = 10/ω₀", l1, 1e-4),
    ])
}

fn monte_carlo(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let h = ou_line(128, 6.0, 1.0, 1.0)?;
    let g = h.grid().clone();
    let metric = h.metric().clone();
    let stat = simulate(h.flow(), &metric, &SimulateOptions::new(vec![0.0], 4000, 0.002, 100_000, opts.seed), opts.exec)?;
    let m = &stat.moments[0];
    let zero = stationary_density(&h)?;
    let l1_stat = compare_density(&stat, &zero)?;

    let x0 = 1.0;
    let mut delta = FormField::zeros(&g, 1)?;
    let cell = g.top_cell_at(&[x0]).expect("start inside the grid");
    delta.values_mut()[cell] = 1.0 / g.cell_volume();
    let start = g.cell_center(&[0], &[cell])[0];
    let fp = evolve_with(&h, &delta, 1.0, 0.01, EvolveOptions::default())?;
    let mc = simulate(h.flow(), &metric, &SimulateOptions::new(vec![start], 500, 0.002, 100_000, opts.seed + 1), opts.exec)?;
    let l1_t = compare_density(&mc, &fp.field)?;
    Ok(vec![
        Check::at_most(
            format!("|var − Θ/2ω₀| (var = {:.5}, stderr {:.2e}) vs 3 stderr", m.variance, m.variance_stderr),
            (m.variance - 0.5).abs(),
            3.0 * m.variance_stderr,
        ),
        Check::at_most("histogram vs zero mode L¹", l1_stat, 0.05),
        Check::at_most("histogram vs evolved density L¹ at t = 1/ω₀", l1_t, 0.07),
    ])
}

#[derive(Default)]
struct DrawStats {
    windings: Vec<i64>,
    sign_mismatch: usize,
    vielbein_mismatch: usize,
    half_step_mismatch: usize,
    solutions: usize,
}

fn nicolai_invariance(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let line = Grid::build(&GridSpec::line(64, -6.0, 6.0))?;
    let well = Grid::build(&GridSpec::line(64, -2.5, 2.5))?;
    let circle = Grid::build(&GridSpec::circle(64))?;
    let cases: Vec<(&str, FlowField, i64)> = vec![
        ("OU", builtin_flow(&line, "ou", &params(&[("omega0", 1.0)]))?, 1),
        ("double-well", builtin_flow(&well, "double-well", &params(&[("a", 1.0)]))?, 1),
        ("circle b sin φ", builtin_flow(&circle, "circle-drive", &params(&[("b", 1.0)]))?, 0),
    ];
    let scan = ScanOptions::default();
    let (steps, dt, draws) = (200, 0.005, 20u64);
    let mut checks = Vec::new();
    let mut variance = 0.0f64;
    let mut totals = DrawStats::default();
    for (ci, (label, flow, want)) in cases.iter().enumerate() {
        let mut worst = 0i64;
        for (ti, theta) in [0.25, 1.0, 4.0].into_iter().enumerate() {
            let seeds: Vec<u64> = (0..draws).map(|i| opts.seed + 1000 * (3 * ci + ti) as u64 + i).collect();
            let per: Vec<Result<DrawStats>> = map_slice(opts.exec, &seeds, |&seed| {
                let noise = NoisePath::generate(steps, dt, 1, seed)?;
                let sols = find_solutions(flow, theta, &noise, &scan)?;
                let mut s = DrawStats {
                    solutions: sols.len(),
                    ..Default::default()
                };
                s.sign_mismatch = sols.iter().filter(|p| p.sign != p.det_sign).count();
                for p in &sols {
                    if !vielbein_sign_check(flow, theta, &noise, p)?.agrees {
                        s.vielbein_mismatch += 1;
                    }
                }
                let w: i64 = sols.iter().map(|p| p.sign as i64).sum();
                let fine = find_solutions(flow, theta, &noise.refine(seed ^ 0x9e37_79b9_7f4a_7c15), &scan)?;
                let wf: i64 = fine.iter().map(|p| p.sign as i64).sum();
                s.half_step_mismatch = usize::from(w != wf);
                s.windings.push(w);
                Ok(s)
            });
            let mut ws = Vec::new();
            for s in per {
                let s = s?;
                ws.extend(&s.windings);
                totals.sign_mismatch += s.sign_mismatch;
                totals.vielbein_mismatch += s.vielbein_mismatch;
                totals.half_step_mismatch += s.half_step_mismatch;
                totals.solutions += s.solutions;
            }
            let mean = ws.iter().sum::<i64>() as f64 / ws.len() as f64;
            variance = variance.max(ws.iter().map(|&w| (w as f64 - mean).powi(2)).sum::<f64>() / ws.len() as f64);
            worst = worst.max(ws.iter().map(|w| (w - want).abs()).max().unwrap_or(0));
        }
        checks.push(Check::at_most(format!("{label}: max |[w.n.] − {want}|"), worst as f64, 0.0));
    }
    checks.push(Check::at_most("max variance of [w.n.] across draws", variance, 0.0));
    checks.push(Check::at_most(
        format!("Jacobian sign disagreements ({} solutions)", totals.solutions),
        totals.sign_mismatch as f64,
        0.0,
    ));
    checks.push(Check::at_most("vielbein sign disagreements", totals.vielbein_mismatch as f64, 0.0));
    checks.push(Check::at_most("draws whose half-step [w.n.] differs", totals.half_step_mismatch as f64, 0.0));
    Ok(checks)
}

fn cpd_algebra() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let torus = Grid::build(&GridSpec::torus(15, 15))?;
    let p = FormField::from_fn(&torus, 2, |_, x| (1.0 + 0.5 * x[0].cos()) * (1.0 + 0.3 * x[1].sin()))?;
    let mut worst = 0.0f64;
    for known in [0, 1] {
        worst = worst.max(factorize(&p, &[known])?.residual);
    }
    let square = Grid::build(&GridSpec::square(24, -5.0, 5.0))?;
    let gauss = |g: &Grid, cx: f64, cy: f64, sx: f64, sy: f64| {
        FormField::from_fn(g, 2, move |_, x| {
            (-0.5 * ((x[0] - cx) / sx).powi(2) - 0.5 * ((x[1] - cy) / sy).powi(2)).exp()
        })
    };
    let q = gauss(&square, 0.5, -0.3, 1.2, 1.5)?;
    for known in [0, 1] {
        worst = worst.max(factorize(&q, &[known])?.residual);
    }
    checks.push(Check::at_most("product density wedge factorization residual", worst, 1e-10));

    let flow = builtin_flow(&square, "ou", &params(&[("omega0", 1.0), ("omega1", 1.0)]))?;
    let h = build_hamiltonian(&square, &Metric::new(2, vec![1.0, 0.0, 0.0, 2.0])?, &flow)?;
    let factors = factor_hamiltonians(&h)?;
    let bundle = factorize(&q, &[1])?;
    let tol = CpdTolerances::default();
    let run = evolve_and_check(&bundle, &h, &factors, 1.0, 0.05, 5, EvolveOptions::default(), tol)?;
    checks.push(Check::at_most("OU×OU factorization drift per unit time", run.factorization_rate, tol.factorization_rate));
    checks.push(Check::at_most(
        format!("Stokes gap at t = 0 ({} chains)", run.chains),
        run.stokes_initial,
        tol.stokes_exact,
    ));
    checks.push(Check::at_most("Stokes gap drift per unit time", run.stokes_rate, tol.stokes_rate));
    Ok(checks)
}

fn trend(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let v = 1.0;
    let thetas = [0.4, 0.2, 0.1];
    let rows: Vec<Result<(f64, f64, f64)>> = map_slice(opts.exec, &thetas, |&theta| {
        let h = circle_drive(64, theta, v, 0.0)?;
        let r = dense(&h, Execution::Sequential)?;
        let gap = breaking_diagnosis(&r, 1e-6, 1e-6)
            .gap
            .ok_or_else(|| Error::InvalidArgument("no non-zero mode".into()))?;
        let g = h.grid();
        let o1 = Observable::multiply(g, h.support(), |x| Complex64::from_polar(1.0, -x[0]));
        let o2 = Observable::multiply(g, h.support(), |x| Complex64::from_polar(1.0, x[0]));
        let ts: Vec<f64> = (1..=20).map(|k| k as f64 * 0.25).collect();
        let c = correlate(&r, &o1, &o2, &ts)?;
        let gamma = c.decay_rate.ok_or_else(|| Error::InvalidArgument("no decay fit".into()))?;
        let omega = c.frequency.ok_or_else(|| Error::InvalidArgument("no frequency fit".into()))?;
        Ok(((gamma - theta / 2.0).abs() / (theta / 2.0), (omega.abs() - v).abs() / v, gap))
    });
    let mut gamma_err = 0.0f64;
    let mut omega_err = 0.0f64;
    let mut gaps = Vec::new();
    for row in rows {
        let (a, b, gap) = row?;
        gamma_err = gamma_err.max(a);
        omega_err = omega_err.max(b);
        gaps.push(gap);
    }
    let n = thetas.len() as f64;
    let mx = thetas.iter().sum::<f64>() / n;
    let my = gaps.iter().sum::<f64>() / n;
    let slope = thetas.iter().zip(&gaps).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / thetas.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok(vec![
        Check::at_most("max relative error of decay rate vs Θ/2", gamma_err, 0.02),
        Check::at_most("max relative error of |frequency| vs v", omega_err, 0.02),
        Check::at_most(format!("relative error of gap slope {slope:.6} vs 1/2"), (slope - 0.5).abs() / 0.5, 0.05),
    ])
}
