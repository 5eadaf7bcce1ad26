use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{debug, info};
use qadmm::backend::{
    bench_admm, bench_quartic, crossover, hardware_workers, write_bench_csv, BenchEvent, BenchReport,
};
use qadmm::model::{write_residual_history_csv, write_trajectories_csv, ProblemFile, SolutionSummary};
use qadmm::phev::{
    build_phev_problem, generate_scenarios, plan, simulate_with, ClosedLoopConfig, DriveCycle, NoiseParams,
    PowertrainModel, PredictedSoc, Realization, VehicleParams,
};
use qadmm::{Backend, SolveStatus};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    BenchAdmmArgs, BenchBackends, BenchQuarticArgs, Command, PhevSimArgs, Precision, SolveArgs, SolverFlags,
};
use crate::manifest::{FileDigest, RunManifest};
use crate::range::parse_sweep;

/// Exit code for a run that hit a non-finite iterate.
pub const EXIT_NUMERICAL: u8 = 3;

/// What a finished run reports back for its manifest.
pub struct RunOutcome {
    pub status: String,
    pub exit_code: u8,
    pub resolved: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
}

pub fn status_exit_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIterations => 2,
        SolveStatus::Error => EXIT_NUMERICAL,
    }
}

fn status_name(status: SolveStatus) -> String {
    serde_json::to_value(status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Runs `command`, filling in any defaults it resolves along the way so the
/// stored command repeats the run exactly.
pub fn dispatch(command: &mut Command) -> Result<RunOutcome> {
    if let Some(dir) = command.out_dir_mut() {
        fs::create_dir_all(&*dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    }
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::BenchQuartic(a) => cmd_bench_quartic(a),
        Command::BenchAdmm(a) => cmd_bench_admm(a),
        Command::PhevSim(a) => cmd_phev_sim(a),
        Command::Rerun(_) => bail!("a manifest cannot record a rerun"),
    }
}

pub fn write_manifest(command: &Command, outcome: &RunOutcome, out_dir: &Path) -> Result<PathBuf> {
    let outputs = outcome.outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: command.name().into(),
        command: command.clone(),
        resolved: outcome.resolved.clone(),
        inputs: outcome.inputs.clone(),
        outputs,
        hardware_workers: hardware_workers(),
        status: outcome.status.clone(),
        exit_code: outcome.exit_code,
    };
    manifest.write(out_dir)
}

/// Loads a manifest, checks its inputs are unchanged, and returns the command
/// to run.
pub fn rerun_command(manifest: &Path, out_dir: Option<PathBuf>) -> Result<Command> {
    let m = RunManifest::read(manifest)?;
    for input in &m.inputs {
        let now = FileDigest::of(&input.path)?;
        if now.sha256 != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let mut command = m.command;
    if let (Some(dir), Some(slot)) = (out_dir, command.out_dir_mut()) {
        *slot = dir;
    }
    Ok(command)
}

fn load_problem(path: &Path) -> Result<ProblemFile> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read problem file {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        anyhow!("{}: field `{}`: {}", path.display(), field, e.into_inner())
    })
}

/// Absolute form of an input path, so a manifest works from any directory.
fn absolute(path: &mut PathBuf) {
    if let Ok(p) = fs::canonicalize(&*path) {
        *path = p;
    }
}

fn cmd_solve(a: &mut SolveArgs) -> Result<RunOutcome> {
    absolute(&mut a.problem);
    let file = load_problem(&a.problem)?;
    let p = file.to_problem::<f64>().with_context(|| format!("invalid problem {}", a.problem.display()))?;
    p.ensure_valid().with_context(|| format!("invalid problem {}", a.problem.display()))?;

    let scale = p.scale();
    let s = &mut a.solver;
    s.rbar.get_or_insert(1e-6 * scale);
    s.sigbar.get_or_insert(1e-6 * scale);
    s.resolve_workers();
    let cfg = s.config(s.rbar.unwrap_or_default(), s.sigbar.unwrap_or_default());
    info!("solving m={} n={} q={} on {}", p.dims.m, p.dims.n, p.dims.q, cfg.backend);

    let sol = qadmm::solve(&p, &cfg)?;
    info!("{:?} after {} iterations, objective {}", sol.status, sol.iterations, sol.objective);

    let dir = &a.out_dir;
    let paths = [dir.join("solution.json"), dir.join("trajectories.csv"), dir.join("residuals.csv")];
    write_json(&paths[0], &SolutionSummary::from_solution(&sol))?;
    write_trajectories_csv(create(&paths[1])?, &sol.x)?;
    write_residual_history_csv(create(&paths[2])?, &sol.history)?;

    Ok(RunOutcome {
        status: status_name(sol.status),
        exit_code: status_exit_code(sol.status),
        resolved: json!({ "r_bar": cfg.r_bar, "sigma_bar": cfg.sigma_bar, "scale": scale, "backend": cfg.backend }),
        inputs: vec![FileDigest::of(&a.problem)?],
        outputs: paths.to_vec(),
    })
}

fn log_event(e: BenchEvent) {
    if let BenchEvent::TimerStop { rep, elapsed_ms } = e {
        debug!("rep {rep}: {elapsed_ms:.3} ms");
    }
}

fn cmd_bench_quartic(a: &mut BenchQuarticArgs) -> Result<RunOutcome> {
    let sizes = parse_sweep(&a.sizes).with_context(|| format!("invalid --sizes `{}`", a.sizes))?;
    let workers = *a.workers.get_or_insert_with(|| Backend::parallel_from_env().workers);
    let mut backends = Vec::new();
    if a.backend != BenchBackends::Parallel {
        backends.push(Backend::serial());
    }
    if a.backend != BenchBackends::Serial {
        let b = Backend::parallel(workers);
        backends.push(a.chunk_size.map_or(b, |c| b.with_chunk_size(c)));
    }

    let mut reports: Vec<BenchReport> = Vec::new();
    for &n in &sizes {
        let mut checksums = Vec::new();
        for &b in &backends {
            let r = match a.precision {
                Precision::F64 => bench_quartic::<f64>(n, b, a.seed, a.reps, &mut log_event)?,
                Precision::F32 => bench_quartic::<f32>(n, b, a.seed, a.reps, &mut log_event)?,
            };
            info!("N={n} {}: mean {:.3} ms", b, r.mean_ms);
            checksums.push(r.checksum);
            reports.push(r);
        }
        if checksums.windows(2).any(|w| w[0].to_bits() != w[1].to_bits()) {
            bail!("backends disagree on the minimizers for N={n}: checksums {checksums:?}");
        }
    }

    let dir = &a.out_dir;
    let paths = [dir.join("bench_quartic.csv"), dir.join("bench_quartic.json")];
    write_bench_csv(create(&paths[0])?, &reports)?;
    let cross = crossover(&reports);
    write_json(
        &paths[1],
        &json!({ "hardware_workers": hardware_workers(), "crossover": cross, "reports": reports }),
    )?;
    Ok(RunOutcome {
        status: "completed".into(),
        exit_code: 0,
        resolved: json!({ "sizes": sizes, "backends": backends, "crossover": cross }),
        inputs: Vec::new(),
        outputs: paths.to_vec(),
    })
}

/// Thresholds for a solve over the whole cycle from the model's initial state.
fn phev_thresholds(flags: &SolverFlags, model: &PowertrainModel, rel: f64, floor: f64) -> (f64, f64) {
    let mut cl = ClosedLoopConfig::new(1, 0);
    cl.r_bar_rel = rel;
    cl.r_bar_floor = floor;
    let r = flags.rbar.unwrap_or_else(|| cl.r_bar(model.e0() - model.en(), model.e_max()));
    (r, flags.sigbar.unwrap_or(cl.sigma_bar))
}

fn cmd_bench_admm(a: &mut BenchAdmmArgs) -> Result<RunOutcome> {
    let qs = parse_sweep(&a.q).with_context(|| format!("invalid --q `{}`", a.q))?;
    if a.horizon < 2 {
        bail!("--horizon must be at least 2");
    }
    let model = PowertrainModel::default();
    let (r_bar, sigma_bar) = phev_thresholds(&a.solver, &model, 1e-6, 0.01);
    a.solver.rbar = Some(r_bar);
    a.solver.sigbar = Some(sigma_bar);
    a.solver.resolve_workers();
    let cfg = a.solver.config(r_bar, sigma_bar);
    let cycle = DriveCycle::synthetic(a.horizon, a.solver.seed, &VehicleParams::default());

    let mut reports = Vec::new();
    for &q in &qs {
        let scen = generate_scenarios(&cycle, q, &NoiseParams::default(), a.solver.seed, 0)?;
        let p = build_phev_problem(&scen, &model, model.e0())?;
        let r = bench_admm(&p, &cfg, cfg.backend, a.reps, &mut log_event)?;
        info!("q={q}: {} iterations, mean {:.1} ms", r.iterations.unwrap_or(0), r.mean_ms);
        reports.push(r);
    }

    let dir = &a.out_dir;
    let paths = [dir.join("bench_admm.csv"), dir.join("bench_admm.json")];
    write_bench_csv(create(&paths[0])?, &reports)?;
    write_json(&paths[1], &json!({ "hardware_workers": hardware_workers(), "horizon": a.horizon, "reports": reports }))?;
    Ok(RunOutcome {
        status: "completed".into(),
        exit_code: 0,
        resolved: json!({ "q": qs, "r_bar": r_bar, "sigma_bar": sigma_bar, "backend": cfg.backend }),
        inputs: Vec::new(),
        outputs: paths.to_vec(),
    })
}

fn cmd_phev_sim(a: &mut PhevSimArgs) -> Result<RunOutcome> {
    if a.solver.rbar.is_some() {
        bail!("phev-sim sets the primal threshold per step; use --rbar-rel and --rbar-floor");
    }
    let mut inputs = Vec::new();
    if let Some(path) = a.cycle.as_mut() {
        absolute(path);
    }
    let cycle = match (&a.cycle, a.synthetic) {
        (Some(path), _) => {
            let f = File::open(path).with_context(|| format!("cannot open drive cycle {}", path.display()))?;
            let c = DriveCycle::from_csv(f).with_context(|| format!("invalid drive cycle {}", path.display()))?;
            inputs.push(FileDigest::of(path)?);
            c
        }
        (None, true) => DriveCycle::synthetic(a.length, a.solver.seed, &VehicleParams::default()),
        (None, false) => bail!("give a drive cycle with --cycle or pass --synthetic"),
    };
    if a.q == 0 {
        bail!("--q must be at least 1");
    }

    let model = PowertrainModel { battery_voltage: a.battery_voltage, ..PowertrainModel::default() };
    model.validate()?;
    let noise = if a.zero_noise {
        NoiseParams::zero()
    } else {
        NoiseParams {
            demand_sigma_w: a.demand_sigma,
            speed_sigma_rpm: a.speed_sigma,
            cutoff_hz: a.cutoff_hz,
            stop_shift_max: a.stop_shift,
            ..NoiseParams::default()
        }
    };
    let sigma_bar = *a.solver.sigbar.get_or_insert(1e-2);
    a.solver.resolve_workers();
    let cfg = ClosedLoopConfig {
        q: a.q,
        seed: a.solver.seed,
        noise,
        solver: a.solver.config(1.0, sigma_bar),
        r_bar_rel: a.rbar_rel,
        r_bar_floor: a.rbar_floor,
        sigma_bar,
        realization: if a.held_out { Realization::HeldOut } else { Realization::Base },
        warm_start: a.warm_start,
        max_steps: a.steps,
    };
    let resolved = json!({
        "e_max_j": model.e_max(),
        "e0_j": model.e0(),
        "en_j": model.en(),
        "cycle_len": cycle.len(),
        "noise": noise,
        "backend": cfg.solver.backend,
    });

    let dir = a.out_dir.clone();
    let mut outputs = Vec::new();
    if a.synthetic {
        let path = dir.join("cycle.csv");
        cycle.write_csv(create(&path)?)?;
        outputs.push(path);
    }
    let soc_path = dir.join("predicted_soc.csv");

    if a.plan_only {
        let (_, sol) = plan(&cycle, &model, &cfg)?;
        PredictedSoc::from_solution(&model, &sol, model.e0()).write_csv(create(&soc_path)?)?;
        let plan_path = dir.join("plan.json");
        write_json(&plan_path, &SolutionSummary::from_solution(&sol))?;
        outputs.extend([soc_path, plan_path]);
        return Ok(RunOutcome {
            status: status_name(sol.status),
            exit_code: status_exit_code(sol.status),
            resolved,
            inputs,
            outputs,
        });
    }

    let mut first = None;
    let log = simulate_with(&cycle, &model, &cfg, &mut |t, out| {
        if t == 0 {
            first = Some(PredictedSoc::from_solution(&model, &out.solution, model.e0()));
        }
        if (t + 1) % 60 == 0 {
            info!("t={} s: {} iterations", t + 1, out.solution.iterations);
        }
    })?;
    if let Some(table) = first {
        table.write_csv(create(&soc_path)?)?;
        outputs.push(soc_path);
    }
    let log_path = dir.join("phev_log.csv");
    let summary_path = dir.join("phev_summary.json");
    log.write_csv(create(&log_path)?)?;
    let summary = log.summary();
    write_json(&summary_path, &summary)?;
    outputs.extend([log_path, summary_path]);
    info!(
        "terminal SoC {:.4} (target {:.4}), fuel {:.3} MJ",
        summary.terminal_soc,
        summary.en_j / summary.e_max_j,
        summary.total_fuel_j / 1e6
    );

    let converged = log.all_converged();
    Ok(RunOutcome {
        status: if converged { "converged".into() } else { "max-iterations".into() },
        exit_code: if converged { 0 } else { 2 },
        resolved,
        inputs,
        outputs,
    })
}

