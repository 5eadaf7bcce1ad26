use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qadmm::admm::DEFAULT_ADAPT_UNTIL;
use qadmm::backend::hardware_workers;
use qadmm::{Backend, PenaltyParams, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "qadmm", version, about = "Scenario-based robust allocation solver, benchmarks and PHEV simulator")]
pub struct Cli {
    /// more log output (-v info, -vv debug); RUST_LOG takes precedence
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Solve a problem file
    Solve(SolveArgs),
    /// Time the quartic kernel over a sweep of batch sizes
    BenchQuartic(BenchQuarticArgs),
    /// Time full solves of the PHEV instance over a sweep of scenario counts
    BenchAdmm(BenchAdmmArgs),
    /// Closed-loop PHEV energy management
    PhevSim(PhevSimArgs),
    /// Repeat the run recorded in a manifest
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::BenchQuartic(_) => "bench-quartic",
            Command::BenchAdmm(_) => "bench-admm",
            Command::PhevSim(_) => "phev-sim",
            Command::Rerun(_) => "rerun",
        }
    }

    pub fn out_dir_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            Command::Solve(a) => Some(&mut a.out_dir),
            Command::BenchQuartic(a) => Some(&mut a.out_dir),
            Command::BenchAdmm(a) => Some(&mut a.out_dir),
            Command::PhevSim(a) => Some(&mut a.out_dir),
            Command::Rerun(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    Serial,
    Parallel,
}

/// Solver settings shared by every subcommand that runs ADMM.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverFlags {
    #[arg(long, default_value_t = 1e-4)]
    pub rho1: f64,
    #[arg(long, default_value_t = 2e-6)]
    pub rho2: f64,
    #[arg(long, default_value_t = 5e-6)]
    pub rho3: f64,
    #[arg(long, default_value_t = 5e-6)]
    pub rho4: f64,
    /// penalty adaptation factor
    #[arg(long, default_value_t = 1.1)]
    pub tau: f64,
    /// primal residual threshold
    #[arg(long)]
    pub rbar: Option<f64>,
    /// dual residual threshold
    #[arg(long)]
    pub sigbar: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10)]
    pub check_every: usize,
    /// keep the penalties fixed
    #[arg(long)]
    pub no_adapt: bool,
    /// stop adapting penalties after this many iterations
    #[arg(long, default_value_t = DEFAULT_ADAPT_UNTIL)]
    pub adapt_until: usize,
    /// adapt penalties for the whole run
    #[arg(long, conflicts_with = "adapt_until")]
    pub no_adapt_limit: bool,
    #[arg(long, value_enum, default_value_t = BackendArg::Serial)]
    pub backend: BackendArg,
    /// parallel worker count; defaults to QADMM_WORKERS or the host's cores
    #[arg(long)]
    pub workers: Option<usize>,
    /// cells per parallel work unit
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// minimize each x-update exactly over its box instead of clamping
    #[arg(long)]
    pub exact_box_min: bool,
    /// leave scaled duals unchanged when a penalty is adapted
    #[arg(long)]
    pub no_dual_rescale: bool,
}

impl SolverFlags {
    /// Fills `workers` so the stored flags fully determine the backend.
    pub fn resolve_workers(&mut self) {
        if self.workers.is_none() {
            self.workers = Some(match self.backend {
                BackendArg::Serial => 1,
                BackendArg::Parallel => Backend::parallel_from_env().workers,
            });
        }
    }

    pub fn backend(&self) -> Backend {
        let b = match self.backend {
            BackendArg::Serial => Backend::serial(),
            BackendArg::Parallel => Backend::parallel(self.workers.unwrap_or_else(hardware_workers)),
        };
        match self.chunk_size {
            Some(c) => b.with_chunk_size(c),
            None => b,
        }
    }

    pub fn config(&self, r_bar: f64, sigma_bar: f64) -> SolverConfig<f64> {
        SolverConfig {
            rho: PenaltyParams {
                rho1: self.rho1,
                rho2: self.rho2,
                rho3: self.rho3,
                rho4: self.rho4,
                tau: self.tau,
                ..PenaltyParams::default()
            },
            r_bar,
            sigma_bar,
            max_iter: self.max_iter,
            check_every: self.check_every,
            adapt_rho: !self.no_adapt,
            adapt_until: if self.no_adapt_limit { None } else { Some(self.adapt_until) },
            rescale_duals_on_adapt: !self.no_dual_rescale,
            exact_box_min: self.exact_box_min,
            seed: self.seed,
            backend: self.backend(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// problem JSON
    pub problem: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchBackends {
    Serial,
    Parallel,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchQuarticArgs {
    /// batch sizes: `a..b` (1-2-5 steps), comma lists, or both
    #[arg(long, default_value = "1e3..1e6")]
    pub sizes: String,
    #[arg(long, value_enum, default_value_t = BenchBackends::Both)]
    pub backend: BenchBackends,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchAdmmArgs {
    /// scenario counts: `a..b` (1-2-5 steps), comma lists, or both
    #[arg(long, default_value = "5..100")]
    pub q: String,
    /// length of the synthetic cycle in seconds
    #[arg(long, default_value_t = 600)]
    pub horizon: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PhevSimArgs {
    /// drive cycle CSV with columns t_s,demand_W,speed_rpm
    #[arg(long, conflicts_with = "synthetic")]
    pub cycle: Option<PathBuf>,
    /// generate the drive cycle from the seed
    #[arg(long)]
    pub synthetic: bool,
    /// synthetic cycle length in seconds
    #[arg(long, default_value_t = 600)]
    pub length: usize,
    #[arg(long, default_value_t = 10)]
    pub q: usize,
    /// stop after this many supervisory steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// single open-loop solve from the initial state
    #[arg(long)]
    pub plan_only: bool,
    /// scenarios equal the base cycle
    #[arg(long)]
    pub zero_noise: bool,
    #[arg(long, default_value_t = 250.0)]
    pub demand_sigma: f64,
    #[arg(long, default_value_t = 50.0)]
    pub speed_sigma: f64,
    #[arg(long, default_value_t = 0.02)]
    pub cutoff_hz: f64,
    /// largest stop-boundary shift in seconds
    #[arg(long, default_value_t = 5)]
    pub stop_shift: usize,
    /// drive the loop with a held-out noisy realization instead of the base cycle
    #[arg(long)]
    pub held_out: bool,
    #[arg(long)]
    pub warm_start: bool,
    /// per-step primal threshold relative to the remaining energy budget
    #[arg(long, default_value_t = 1e-6)]
    pub rbar_rel: f64,
    /// floor on the budget used for the threshold, as a fraction of capacity
    #[arg(long, default_value_t = 0.01)]
    pub rbar_floor: f64,
    /// nominal pack voltage used to turn Ah into J
    #[arg(long, default_value_t = 350.0)]
    pub battery_voltage: f64,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// write here instead of the recorded output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
