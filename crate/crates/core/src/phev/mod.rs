//! Plug-in hybrid supervisory control: engine and motor share the wheel
//! power demand, the battery energy budget is the capacity constraint, and a
//! shrinking-horizon loop re-plans every second.

mod control;
mod cycle;
mod powertrain;
mod scenarios;

use thiserror::Error;

pub use control::{
    apply_split, plan, realized_cycle, simulate_shrinking_horizon, simulate_with, supervisory_step, ClosedLoopConfig,
    PredictedSoc, Realization, SimulationLog, SimulationSummary, StepOutcome, StepRecord, VehicleState,
};
pub use cycle::{DriveCycle, VehicleParams};
pub use powertrain::{build_phev_problem, BatteryLoss, FuelMap, PowertrainModel};
pub use scenarios::{
    generate_scenarios, low_pass, shift_stops, stop_segments, white_noise, DriveScenarioSet, NoiseParams,
};

#[derive(Debug, Error)]
pub enum PhevError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("initial battery energy {e0} J is below the terminal target {en} J")]
    Infeasible { e0: f64, en: f64 },
    #[error(transparent)]
    Solver(#[from] crate::admm::AdmmError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
