//! Job orchestration for the command-line front end: each subcommand runs a
//! pipeline, writes `report.json` and its CSV artifacts, and collects the
//! failed invariants.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::acceptance::{run_criterion, AcceptanceOptions, CriterionResult};
use crate::config::{CorrelateJob, ObservableConfig, RunConfig, ThetaConfig};
use crate::cpd::{evolve_and_check, factor_hamiltonians, factorize_with, marginal_closedness, CpdTolerances};
use crate::error::{Error, Result};
use crate::flow::{BuiltinFlow, FlowField, FlowSource};
use crate::grid::{Grid, Topology};
use crate::hamiltonian::{build_hamiltonian, cell_peclet, evolve_with, mass_drift_rate, stationary_density, EvolveOptions, HamiltonianSet};
use crate::nicolai::{vielbein_sign_check, winding_survey, ScanOptions};
use crate::par::{map_slice, Execution};
use crate::report::{write_csv, write_json, Cell};
use crate::sde::{compare_density, simulate, NoisePath, SimulateOptions};
use crate::spectral::{
    analyze, breaking_diagnosis, correlate, partition_function, witten_index, Class, SpectrumReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Spectrum,
    Index,
    Partition,
    Evolve,
    Simulate,
    Nicolai,
    CpdCheck,
    Correlate,
    All,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::Spectrum,
        Subcommand::Index,
        Subcommand::Partition,
        Subcommand::Evolve,
        Subcommand::Simulate,
        Subcommand::Nicolai,
        Subcommand::CpdCheck,
        Subcommand::Correlate,
        Subcommand::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Spectrum => "spectrum",
            Subcommand::Index => "index",
            Subcommand::Partition => "partition",
            Subcommand::Evolve => "evolve",
            Subcommand::Simulate => "simulate",
            Subcommand::Nicolai => "nicolai",
            Subcommand::CpdCheck => "cpd-check",
            Subcommand::Correlate => "correlate",
            Subcommand::All => "all",
        }
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subcommand `{s}`")))
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol_zero: Option<f64>,
    pub eps_gamma: Option<f64>,
    pub eps_e: Option<f64>,
    pub threads: Option<usize>,
    pub exec: Execution,
}

/// A violated invariant: name, measured value, limit.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub job: String,
    pub invariant: String,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub message: String,
}

#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub failures: Vec<Failure>,
    pub report: Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// 0 when every invariant held, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.passed())
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    exec: Execution,
    job: &'static str,
    failures: Vec<Failure>,
}

impl Ctx<'_> {
    /// Record a failure unless `measured ≤ tolerance`.
    fn check(&mut self, invariant: &str, measured: f64, tolerance: f64) -> Value {
        let passed = measured <= tolerance;
        if !passed {
            self.failures.push(Failure {
                job: self.job.to_string(),
                invariant: invariant.to_string(),
                measured: Some(measured),
                tolerance: Some(tolerance),
                message: format!("{invariant}: measured {measured:.6e} exceeds {tolerance:.6e}"),
            });
        }
        json!({"invariant": invariant, "measured": measured, "tolerance": tolerance, "passed": passed})
    }

    fn fail_error(&mut self, e: &Error) {
        let (invariant, measured) = error_invariant(e);
        self.failures.push(Failure {
            job: self.job.to_string(),
            invariant: invariant.to_string(),
            measured,
            tolerance: None,
            message: e.to_string(),
        });
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn hamiltonian(&self) -> Result<HamiltonianSet> {
        let grid = self.cfg.grid()?;
        let metric = self.cfg.metric(&grid)?;
        let flow = self.cfg.flow(&grid)?;
        build_hamiltonian(&grid, &metric, &flow)
    }

    fn spectrum(&self, h: &HamiltonianSet) -> Result<SpectrumReport> {
        let mode = self.cfg.jobs.spectrum.solve_mode(h);
        analyze(h, mode, self.cfg.tolerances.spectral(), self.exec)
    }
}

/// Invariant name and measured residual for a numerical failure.
fn error_invariant(e: &Error) -> (&'static str, Option<f64>) {
    match e {
        Error::PairingViolation { residual, .. } => ("spectral-pairing", Some(*residual)),
        Error::WittenMismatch { trace, count, .. } => ("witten-method-agreement", Some((trace - *count as f64).abs())),
        Error::NotConverged { max_residual } => ("eigensolver-convergence", Some(*max_residual)),
        Error::StepRejected { estimate, .. } => ("step-error-estimate", Some(*estimate)),
        Error::Diverged { growth, .. } => ("evolution-divergence", Some(*growth)),
        Error::SignMismatch { .. } => ("jacobian-sign-agreement", None),
        Error::ScanResolution(_) => ("scan-resolution", None),
        Error::IllConditioned { fraction } => ("marginal-conditioning", Some(*fraction)),
        Error::BinningMismatch(_) => ("histogram-binning", None),
        Error::Eigen(_) => ("eigensolver", None),
        Error::Solve(_) => ("linear-solve", None),
        _ => ("pipeline", None),
    }
}

fn flow_catalog(flow: &FlowField) -> Option<&BuiltinFlow> {
    match flow.source() {
        FlowSource::Builtin(b) => Some(b),
        _ => None,
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Apply command-line overrides to a loaded config.
pub fn apply_overrides(cfg: &mut RunConfig, opts: &RunOptions) -> Result<()> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let tol = &mut cfg.tolerances;
    for (flag, value, slot) in [
        ("tol_zero", opts.tol_zero, &mut tol.tol_zero),
        ("eps_gamma", opts.eps_gamma, &mut tol.eps_gamma),
        ("eps_e", opts.eps_e, &mut tol.eps_e),
    ] {
        if let Some(v) = value {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config {
                    pointer: format!("/tolerances/{flag}"),
                    message: format!("--{} must be a finite number > 0, got {v}", flag.replace('_', "-")),
                });
            }
            *slot = v;
        }
    }
    Ok(())
}

/// Output directory: `--out` wins, then the config's `output` (relative to
/// the config file), then `out`.
fn output_dir(cfg: Option<&RunConfig>, opts: &RunOptions) -> PathBuf {
    if let Some(o) = &opts.out {
        return o.clone();
    }
    match cfg {
        Some(c) if c.output.is_absolute() => c.output.clone(),
        Some(c) => c.base_dir.join(&c.output),
        None => PathBuf::from("out"),
    }
}

/// Run one subcommand. `Err` is reserved for configuration and I/O problems;
/// numerical failures land in [`Outcome::failures`].
pub fn run(cmd: Subcommand, cfg: Option<&RunConfig>, opts: &RunOptions) -> Result<Outcome> {
    let started = unix_seconds();
    let clock = Instant::now();
    let out = output_dir(cfg, opts);
    std::fs::create_dir_all(&out)?;
    let mut timings = serde_json::Map::new();
    let mut results = serde_json::Map::new();
    let mut failures = Vec::new();

    let jobs: Vec<Subcommand> = match cmd {
        Subcommand::All => Subcommand::ALL[..8].to_vec(),
        c => vec![c],
    };
    if let Some(cfg) = cfg {
        for job in jobs {
            let grid = cfg.grid()?;
            // in `all`, pipelines that do not apply to the grid are skipped
            let skip = match job {
                Subcommand::Nicolai => (grid.dim() != 1).then_some("needs a one-axis grid"),
                Subcommand::CpdCheck => (grid.dim() != 2).then_some("needs a two-axis grid"),
                _ => None,
            };
            if let (Some(reason), Subcommand::All) = (skip, cmd) {
                results.insert(job.as_str().into(), json!({"skipped": reason}));
                continue;
            }
            let t0 = Instant::now();
            let mut ctx = Ctx {
                cfg,
                out: out.clone(),
                exec: opts.exec,
                job: job.as_str(),
                failures: Vec::new(),
            };
            let value = match run_job(job, &mut ctx) {
                Ok(v) => v,
                Err(e @ Error::Config { .. }) => return Err(e),
                Err(e) => {
                    ctx.fail_error(&e);
                    json!({"error": e.to_string()})
                }
            };
            timings.insert(job.as_str().into(), json!(t0.elapsed().as_secs_f64()));
            results.insert(job.as_str().into(), value);
            failures.extend(ctx.failures);
        }
    } else if cmd != Subcommand::All {
        return Err(Error::Config {
            pointer: "/".into(),
            message: format!("`{}` needs --config", cmd.as_str()),
        });
    }

    if cmd == Subcommand::All {
        let aopts = AcceptanceOptions {
            exec: opts.exec,
            seed: opts.seed.unwrap_or(AcceptanceOptions::default().seed),
        };
        let mut criteria: Vec<CriterionResult> = Vec::new();
        for id in 1..=10 {
            let r = run_criterion(id, &aopts);
            timings.insert(format!("criterion-{id}"), json!(r.seconds));
            if !r.passed {
                failures.push(criterion_failure(&r));
            }
            criteria.push(r);
        }
        write_json(&out.join("acceptance.json"), &criteria)?;
        results.insert(
            "acceptance".into(),
            json!({
                "passed": criteria.iter().filter(|c| c.passed).count(),
                "failed": criteria.iter().filter(|c| !c.passed).count(),
                "criteria": criteria,
            }),
        );
    }

    let report = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "subcommand": cmd.as_str(),
        "config": cfg,
        "results": Value::Object(results),
        "failures": failures,
        "passed": failures.is_empty(),
    });
    write_json(&out.join("report.json"), &report)?;
    let meta = json!({
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "timings": Value::Object(timings),
        "version": env!("CARGO_PKG_VERSION"),
        "execution": opts.exec,
        "parallel_build": cfg!(feature = "parallel"),
        "threads": opts.threads,
        "arguments": std::env::args().collect::<Vec<_>>(),
    });
    write_json(&out.join("metadata.json"), &meta)?;
    Ok(Outcome {
        out_dir: out,
        failures,
        report,
    })
}

fn criterion_failure(r: &CriterionResult) -> Failure {
    let worst = r.checks.iter().find(|c| !c.passed);
    Failure {
        job: "all".into(),
        invariant: format!("acceptance-criterion-{}", r.id),
        measured: worst.map(|c| c.measured),
        tolerance: worst.map(|c| c.tolerance),
        message: match (worst, &r.error) {
            (_, Some(e)) => format!("{}: {e}", r.title),
            (Some(c), None) => format!("{}: {} = {:.6e} exceeds {:.6e}", r.title, c.name, c.measured, c.tolerance),
            (None, None) => format!("{}: over its time budget", r.title),
        },
    }
}

fn run_job(job: Subcommand, ctx: &mut Ctx) -> Result<Value> {
    match job {
        Subcommand::Spectrum => spectrum_job(ctx),
        Subcommand::Index => index_job(ctx),
        Subcommand::Partition => partition_job(ctx),
        Subcommand::Evolve => evolve_job(ctx),
        Subcommand::Simulate => simulate_job(ctx),
        Subcommand::Nicolai => nicolai_job(ctx),
        Subcommand::CpdCheck => cpd_job(ctx),
        Subcommand::Correlate => correlate_job(ctx),
        Subcommand::All => unreachable!("expanded by run"),
    }
}

fn class_counts(r: &SpectrumReport) -> Value {
    let mut m = serde_json::Map::new();
    for c in [Class::Theta, Class::PairedLower, Class::PairedUpper, Class::Unclassified] {
        m.insert(c.as_str().into(), json!(r.all_records().filter(|x| x.class == c).count()));
    }
    Value::Object(m)
}

fn write_spectrum_csv(path: &Path, r: &SpectrumReport) -> Result<()> {
    let rows: Vec<Vec<Cell>> = r
        .all_records()
        .map(|rec| {
            vec![
                Cell::from(rec.sector),
                Cell::F(rec.value.re),
                Cell::F(rec.value.im),
                Cell::from(rec.class.as_str()),
                rec.partner.map_or(Cell::from(""), Cell::from),
            ]
        })
        .collect();
    write_csv(path, &["sector", "re", "im", "class", "partner"], &rows)
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}

fn spectrum_job(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.hamiltonian()?;
    let nil = ctx.check("nilpotency", h.nilpotency_residual(), 1e-12);
    let comm = ctx.check("intertwining", h.intertwining_residual(), 1e-12);
    let r = ctx.spectrum(&h)?;
    write_spectrum_csv(&ctx.path("spectrum.csv"), &r)?;
    let tol = ctx.cfg.tolerances.clone();
    let b = breaking_diagnosis(&r, tol.eps_gamma, tol.eps_e);
    let mut invariants = vec![nil, comm];
    if r.complete() {
        invariants.push(ctx.check("conjugation-closure", r.conjugation_residual(), tol.pair * r.scale().max(1.0)));
    }
    let mut windex = Vec::new();
    for &t in &ctx.cfg.jobs.index.t {
        windex.push(witten_index(&r, t)?);
    }
    let mut zs = Vec::new();
    for &t in &ctx.cfg.jobs.partition.t {
        zs.push(partition_function(&r, t)?);
    }

    let mut sweep = Value::Null;
    if !ctx.cfg.jobs.spectrum.theta_sweep.is_empty() {
        let grid = h.grid().clone();
        let flow = h.flow().clone();
        let thetas = ctx.cfg.jobs.spectrum.theta_sweep.clone();
        let cfg = ctx.cfg;
        let rows: Vec<Result<(f64, Option<f64>, bool)>> = map_slice(ctx.exec, &thetas, |&theta| {
            let metric = cfg.metric_with(&grid, &ThetaConfig::Isotropic(theta))?;
            let hs = build_hamiltonian(&grid, &metric, &flow)?;
            let rs = analyze(&hs, cfg.jobs.spectrum.solve_mode(&hs), cfg.tolerances.spectral(), Execution::Sequential)?;
            let bs = breaking_diagnosis(&rs, cfg.tolerances.eps_gamma, cfg.tolerances.eps_e);
            Ok((theta, bs.gap, bs.broken))
        });
        let rows: Vec<(f64, Option<f64>, bool)> = rows.into_iter().collect::<Result<_>>()?;
        write_csv(
            &ctx.path("gap_sweep.csv"),
            &["theta", "gap", "broken"],
            &rows
                .iter()
                .map(|(t, g, br)| vec![Cell::F(*t), g.map_or(Cell::from(""), Cell::F), Cell::from(br.to_string())])
                .collect::<Vec<_>>(),
        )?;
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|(t, g, _)| g.map(|g| (*t, g))).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        sweep = json!({
            "rows": rows.iter().map(|(t, g, br)| json!({"theta": t, "gap": g, "broken": br})).collect::<Vec<_>>(),
            "slope": least_squares_slope(&xs, &ys),
        });
    }

    Ok(json!({
        "mode": r.raw.mode,
        "complete": r.complete(),
        "sector_dims": r.raw.sectors.iter().map(|s| s.dim).collect::<Vec<_>>(),
        "theta_counts": r.theta_counts,
        "zero_counts": r.zero_counts,
        "classes": class_counts(&r),
        "max_pair_mismatch": r.max_pair_mismatch,
        "conjugation_residual": r.conjugation_residual(),
        "biorthogonality_residual": r.biorthogonality_residual(),
        "max_eigen_residual": r.raw.sectors.iter().map(|s| s.max_residual).collect::<Vec<_>>(),
        "witten_index": windex,
        "partition": zs,
        "gap": b.gap,
        "broken": b.broken,
        "breaking_rationale": b.rationale,
        "cell_peclet": cell_peclet(h.flow(), h.metric()),
        "tolerances": tol,
        "tol_zero_abs": r.tol_zero_abs,
        "gap_sweep": sweep,
        "invariants": invariants,
    }))
}

fn index_job(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.hamiltonian()?;
    let r = ctx.spectrum(&h)?;
    let chi = h.grid().support_euler_characteristic(h.support());
    let mut values = Vec::new();
    for &t in &ctx.cfg.jobs.index.t {
        values.push(witten_index(&r, t)?);
    }
    let mut invariants = Vec::new();
    if r.complete() {
        let agree = values.iter().map(|w| w.residual).fold(0.0, f64::max);
        invariants.push(ctx.check("witten-method-agreement", agree, crate::spectral::WITTEN_AGREEMENT));
        let first = values.first().map_or(0.0, |w| w.trace);
        let spread = values.iter().map(|w| (w.trace - first).abs()).fold(0.0, f64::max);
        invariants.push(ctx.check("witten-t-independence", spread, ctx.cfg.jobs.index.constancy));
        let count = values.first().map_or(0, |w| w.count);
        invariants.push(ctx.check("witten-euler-characteristic", (count - chi).abs() as f64, 0.0));
    }
    Ok(json!({
        "complete": r.complete(),
        "euler_characteristic": chi,
        "theta_counts": r.theta_counts,
        "values": values,
        "invariants": invariants,
    }))
}

/// Harmonic reference for a one-axis OU flow on a truncated line.
fn harmonic_omega(flow: &FlowField) -> Option<f64> {
    let g = flow.grid();
    match flow_catalog(flow) {
        Some(BuiltinFlow::Ou { omega }) if g.dim() == 1 && g.axis(0).topology == Topology::Truncated => Some(omega[0]),
        _ => None,
    }
}

fn partition_job(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.hamiltonian()?;
    let r = ctx.spectrum(&h)?;
    let omega = harmonic_omega(h.flow());
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut worst: Option<f64> = None;
    for &t in &ctx.cfg.jobs.partition.t {
        let z = partition_function(&r, t)?;
        let exact = omega.map(|w| 1.0 / (t * w / 2.0).tanh());
        if let Some(e) = exact {
            let rel = (z.z - e).abs() / e;
            worst = Some(worst.map_or(rel, |w: f64| w.max(rel)));
        }
        rows.push(vec![
            Cell::F(t),
            Cell::F(z.z),
            Cell::F(z.z_im),
            Cell::from(z.lower_bound.to_string()),
            exact.map_or(Cell::from(""), Cell::F),
        ]);
        values.push(json!({"t": t, "z": z.z, "z_im": z.z_im, "lower_bound": z.lower_bound, "harmonic": exact}));
    }
    write_csv(&ctx.path("partition.csv"), &["t", "z", "z_im", "lower_bound", "harmonic"], &rows)?;
    let mut invariants = Vec::new();
    if let Some(w) = worst {
        invariants.push(ctx.check("partition-harmonic-reference", w, ctx.cfg.jobs.partition.harmonic_tolerance));
    }
    Ok(json!({
        "complete": r.complete(),
        "values": values,
        "harmonic_omega": omega,
        "invariants": invariants,
    }))
}

fn l1_between(a: &crate::forms::FormField, b: &crate::forms::FormField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.grid().cell_volume()
}

fn evolve_job(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.hamiltonian()?;
    let job = ctx.cfg.jobs.evolve.clone();
    let psi = job.initial.build(&h, &ctx.cfg.base_dir)?;
    let opts = EvolveOptions {
        tol: job.step_tol,
        log_every: job.log_every,
        ..EvolveOptions::default()
    };
    let run = evolve_with(&h, &psi, job.t, job.dt, opts)?;
    write_csv(
        &ctx.path("evolution_log.csv"),
        &["time", "mass", "norm"],
        &run.log.iter().map(|r| vec![Cell::F(r.time), Cell::F(r.mass), Cell::F(r.norm)]).collect::<Vec<_>>(),
    )?;
    run.field.save(&ctx.out, "evolved")?;
    let drift = mass_drift_rate(&run.log);
    let mut invariants = vec![ctx.check("mass-drift", drift, job.mass_drift)];
    let zero = stationary_density(&h).ok();
    let l1 = zero.as_ref().map(|z| l1_between(&run.field, z));
    if let Some(tol) = job.zero_mode_l1 {
        match l1 {
            Some(v) => invariants.push(ctx.check("zero-mode-l1", v, tol)),
            None => invariants.push(ctx.check("zero-mode-l1", f64::INFINITY, tol)),
        }
    }
    Ok(json!({
        "t": job.t,
        "dt": job.dt,
        "rejected_steps": run.rejected_steps,
        "max_error_estimate": run.max_error_estimate,
        "initial_mass": run.log.first().map(|r| r.mass),
        "final_mass": run.log.last().map(|r| r.mass),
        "mass_drift_rate": drift,
        "zero_mode_l1": l1,
        "invariants": invariants,
    }))
}

fn simulate_job(ctx: &mut Ctx) -> Result<Value> {
    let grid = ctx.cfg.grid()?;
    let metric = ctx.cfg.metric(&grid)?;
    let flow = ctx.cfg.flow(&grid)?;
    let job = ctx.cfg.jobs.simulate.clone();
    let init = job
        .init
        .clone()
        .unwrap_or_else(|| (0..grid.dim()).map(|k| grid.axis(k).origin + grid.axis(k).extent / 2.0).collect());
    let mut opts = SimulateOptions::new(init, job.steps, job.dt, job.samples, ctx.cfg.seed);
    opts.stability = job.stability;
    let ens = simulate(&flow, &metric, &opts, ctx.exec)?;
    write_csv(
        &ctx.path("histogram.csv"),
        &["cell", "mass"],
        &ens.histogram.iter().enumerate().map(|(i, m)| vec![Cell::from(i), Cell::F(*m)]).collect::<Vec<_>>(),
    )?;
    let moments = json!({
        "samples": ens.samples,
        "steps": ens.steps,
        "dt": ens.dt,
        "seed": ens.seed,
        "integrator": ens.integrator,
        "blown_up": ens.blown_up.len(),
        "outside": ens.outside,
        "axes": ens.moments,
    });
    write_json(&ctx.path("moments.json"), &moments)?;
    let mut invariants = Vec::new();
    let binned: f64 = ens.histogram.iter().sum();
    if binned > 0.0 {
        invariants.push(ctx.check("histogram-normalization", (binned - 1.0).abs(), 1e-12));
    }
    let h = build_hamiltonian(&grid, &metric, &flow)?;
    let l1 = stationary_density(&h).ok().map(|z| compare_density(&ens, &z)).transpose()?;
    if let Some(tol) = job.zero_mode_l1 {
        invariants.push(ctx.check("histogram-zero-mode-l1", l1.unwrap_or(f64::INFINITY), tol));
    }
    // the OU variance is only asserted once the ensemble has relaxed
    if let (Some(w), ThetaConfig::Isotropic(theta)) = (harmonic_omega(&flow), &ctx.cfg.theta) {
        if job.steps as f64 * job.dt * w >= 10.0 {
            let m = &ens.moments[0];
            invariants.push(ctx.check(
                "ou-stationary-variance",
                (m.variance - theta / (2.0 * w)).abs(),
                3.0 * m.variance_stderr,
            ));
        }
    }
    Ok(json!({
        "moments": moments,
        "zero_mode_l1": l1,
        "invariants": invariants,
    }))
}

fn nicolai_job(ctx: &mut Ctx) -> Result<Value> {
    let grid = ctx.cfg.grid()?;
    if grid.dim() != 1 {
        return Err(Error::Config {
            pointer: "/grid".into(),
            message: "nicolai needs a one-axis grid".into(),
        });
    }
    let theta = ctx.cfg.theta_scalar()?;
    let flow = ctx.cfg.flow(&grid)?;
    let job = ctx.cfg.jobs.nicolai.clone();
    let scan = ScanOptions {
        brackets: job.brackets,
        range: job.range.map(|[a, b]| (a, b)),
        stability: job.stability,
    };
    let seeds: Vec<u64> = (0..job.draws as u64).map(|i| ctx.cfg.seed.wrapping_add(i)).collect();
    let draws = winding_survey(&flow, theta, &seeds, job.steps, job.dt, &scan, ctx.exec)?;
    write_csv(
        &ctx.path("winding.csv"),
        &["seed", "n_plus", "n_minus", "winding", "winding_half_step"],
        &draws
            .iter()
            .map(|d| {
                vec![
                    Cell::from(d.seed),
                    Cell::from(d.n_plus),
                    Cell::from(d.n_minus),
                    Cell::from(d.winding),
                    Cell::from(d.winding_half_step),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let mut vielbein_mismatch = 0usize;
    for d in &draws {
        let noise = NoisePath::generate(job.steps, job.dt, 1, d.seed)?;
        let mut checks = Vec::new();
        for s in &d.solutions {
            let c = vielbein_sign_check(&flow, theta, &noise, s)?;
            vielbein_mismatch += usize::from(!c.agrees);
            checks.push(c);
        }
        write_json(
            &ctx.path(&format!("solutions/solutions_{}.json", d.seed)),
            &json!({"seed": d.seed, "winding": d.winding, "solutions": d.solutions, "vielbein": checks}),
        )?;
    }
    let ws: Vec<f64> = draws.iter().map(|d| d.winding as f64).collect();
    let mean = ws.iter().sum::<f64>() / ws.len() as f64;
    let variance = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / ws.len() as f64;
    let half = draws.iter().filter(|d| d.winding != d.winding_half_step).count();
    let chi = grid.support_euler_characteristic(crate::grid::Support::Decay);
    let mut invariants = vec![
        ctx.check("winding-variance", variance, 0.0),
        ctx.check("half-step-agreement", half as f64, 0.0),
        ctx.check("vielbein-sign-agreement", vielbein_mismatch as f64, 0.0),
    ];
    if let Some(w) = draws.first().map(|d| d.winding) {
        invariants.push(ctx.check("winding-euler-characteristic", (w.abs() - chi.abs()).abs() as f64, 0.0));
    }
    Ok(json!({
        "draws": draws.iter().map(|d| json!({
            "seed": d.seed, "n_plus": d.n_plus, "n_minus": d.n_minus,
            "winding": d.winding, "winding_half_step": d.winding_half_step,
        })).collect::<Vec<_>>(),
        "mean_winding": mean,
        "euler_characteristic": chi,
        "invariants": invariants,
    }))
}

fn cpd_job(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.hamiltonian()?;
    if h.dim() != 2 {
        return Err(Error::Config {
            pointer: "/grid".into(),
            message: "cpd-check needs a two-axis grid".into(),
        });
    }
    let job = ctx.cfg.jobs.cpd.clone();
    if job.known > 1 {
        return Err(Error::Config {
            pointer: "/jobs/cpd/known".into(),
            message: "known axis must be 0 or 1".into(),
        });
    }
    let total = job.density.build(&h, &ctx.cfg.base_dir)?;
    let bundle = factorize_with(&total, &[job.known], ctx.cfg.tolerances.eps_div, job.max_below_floor)?;
    let mut invariants = vec![ctx.check("wedge-factorization", bundle.residual, job.factorization)];
    let closed_m = marginal_closedness(&bundle.marginal);
    let closed_t = marginal_closedness(&bundle.total);
    let evolution = match factor_hamiltonians(&h) {
        Ok(factors) => {
            let tol = CpdTolerances::default();
            let run = evolve_and_check(&bundle, &h, &factors, job.t, job.dt, job.samples, EvolveOptions::default(), tol)?;
            invariants.push(ctx.check("factorization-drift", run.factorization_rate, tol.factorization_rate));
            invariants.push(ctx.check("stokes-initial", run.stokes_initial, tol.stokes_exact));
            invariants.push(ctx.check("stokes-drift", run.stokes_rate, tol.stokes_rate));
            serde_json::to_value(&run)?
        }
        Err(e) => json!({"skipped": e.to_string()}),
    };
    let report = json!({
        "known": bundle.known,
        "unknown": bundle.unknown,
        "floor": bundle.floor,
        "below_floor": bundle.below_floor,
        "factorization_residual": bundle.residual,
        "closedness": {"marginal": closed_m, "total": closed_t},
        "evolution": evolution,
        "invariants": invariants,
    });
    write_json(&ctx.path("cpd_report.json"), &report)?;
    Ok(report)
}

fn default_observables(grid: &Grid, job: &CorrelateJob) -> (ObservableConfig, ObservableConfig) {
    let periodic = grid.is_periodic(0);
    let pick = |given: &Option<ObservableConfig>, k: f64| {
        given.clone().unwrap_or(if periodic {
            ObservableConfig::Fourier { axis: 0, k }
        } else {
            ObservableConfig::Power { axis: 0, p: 1 }
        })
    };
    (pick(&job.o1, -1.0), pick(&job.o2, 1.0))
}

fn correlate_job(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.hamiltonian()?;
    let r = ctx.spectrum(&h)?;
    let job = ctx.cfg.jobs.correlate.clone();
    let (c1, c2) = default_observables(h.grid(), &job);
    let o1 = c1.build(h.grid(), h.support())?;
    let o2 = c2.build(h.grid(), h.support())?;
    let c = correlate(&r, &o1, &o2, &job.t)?;
    write_csv(
        &ctx.path("correlation.csv"),
        &["t", "re", "im"],
        &c.t.iter().zip(&c.values).map(|(t, v)| vec![Cell::F(*t), Cell::F(v.re), Cell::F(v.im)]).collect::<Vec<_>>(),
    )?;
    let mut invariants = Vec::new();
    // pure drift on a circle: decay Θ/2 and frequency v for the k = ±1 pair
    if let (Some(BuiltinFlow::CircleDrive { v, b }), ThetaConfig::Isotropic(theta)) = (flow_catalog(h.flow()), &ctx.cfg.theta) {
        let unit_pair = matches!((&c1, &c2), (ObservableConfig::Fourier { k: a, .. }, ObservableConfig::Fourier { k: b2, .. }) if *a == -1.0 && *b2 == 1.0);
        if *b == 0.0 && *v != 0.0 && unit_pair {
            let gamma = c.decay_rate.unwrap_or(f64::NAN);
            let omega = c.frequency.unwrap_or(f64::NAN);
            invariants.push(ctx.check("decay-rate", (gamma - theta / 2.0).abs() / (theta / 2.0), 0.02));
            invariants.push(ctx.check("frequency", (omega.abs() - v.abs()).abs() / v.abs(), 0.02));
        }
    }
    Ok(json!({
        "o1": c1,
        "o2": c2,
        "decay_rate": c.decay_rate,
        "frequency": c.frequency,
        "values": c.t.iter().zip(&c.values).map(|(t, v)| json!({"t": t, "re": v.re, "im": v.im})).collect::<Vec<_>>(),
        "invariants": invariants,
    }))
}
