use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{build_phev_problem, generate_scenarios, DriveCycle, DriveScenarioSet, NoiseParams, PhevError, PowertrainModel};
use crate::admm::{solve_warm, SolverConfig, WarmStart};
use crate::model::{AllocationProblem, Solution, SolveStatus};
use crate::rng::{stream_rng, Stream};

/// Which demand sequence the closed loop is driven by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realization {
    /// the unperturbed base cycle
    Base,
    /// one extra noisy copy drawn from its own stream
    HeldOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    pub q: usize,
    pub seed: u64,
    pub noise: NoiseParams,
    /// penalties, iteration limits and backend; thresholds are set per step
    pub solver: SolverConfig<f64>,
    /// `r̄ = r_bar_rel · max(ΔE, r_bar_floor · E_max)`
    pub r_bar_rel: f64,
    pub r_bar_floor: f64,
    pub sigma_bar: f64,
    pub realization: Realization,
    /// start each solve from the previous one, shifted by a step
    pub warm_start: bool,
    /// stop after this many supervisory steps
    pub max_steps: Option<usize>,
}

impl ClosedLoopConfig {
    pub fn new(q: usize, seed: u64) -> Self {
        let mut solver = SolverConfig::new(1.0, 1e-2);
        solver.seed = seed;
        Self {
            q,
            seed,
            noise: NoiseParams::default(),
            solver,
            r_bar_rel: 1e-6,
            r_bar_floor: 0.01,
            sigma_bar: 1e-2,
            realization: Realization::Base,
            warm_start: false,
            max_steps: None,
        }
    }

    pub fn r_bar(&self, delta_e: f64, e_max: f64) -> f64 {
        self.r_bar_rel * delta_e.max(self.r_bar_floor * e_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub t: usize,
    pub energy_j: f64,
    /// split applied at the previous step
    pub last_split: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub engine_w: f64,
    pub motor_w: f64,
    pub r_bar: f64,
    /// the solve did not converge and the previous split was reused
    pub fallback: bool,
    /// the instance that was solved
    pub problem: AllocationProblem<f64>,
    pub solution: Solution<f64>,
    pub warm: WarmStart<f64>,
    pub solve_ms: f64,
}

/// One pass of the supervisory controller: instance for the remaining
/// horizon, ADMM solve, first-step consensus powers.
pub fn supervisory_step(
    state: &VehicleState,
    scenarios: &DriveScenarioSet,
    model: &PowertrainModel,
    config: &ClosedLoopConfig,
    warm: Option<WarmStart<f64>>,
) -> Result<StepOutcome, PhevError> {
    if scenarios.horizon() == 0 {
        return Err(PhevError::InvalidInput("remaining horizon is empty".into()));
    }
    let e0 = state.energy_j.max(model.en());
    let mut problem = build_phev_problem(scenarios, model, e0)?;
    if state.energy_j < model.en() {
        // below target: the remaining plan has to put the deficit back
        problem.capacity[1] = state.energy_j - model.en();
        if !problem.validate().is_empty() {
            problem.capacity[1] = 0.0;
        }
    }
    let delta_e = e0 - model.en();
    let mut solver = config.solver.clone();
    solver.r_bar = config.r_bar(delta_e, model.e_max());
    solver.sigma_bar = config.sigma_bar;
    let warm = warm.filter(|w| w.state.dims == problem.dims);
    let started = Instant::now();
    let (solution, next) = solve_warm(&problem, &solver, warm)?;
    let solve_ms = started.elapsed().as_secs_f64() * 1e3;

    let converged = solution.status == SolveStatus::Converged;
    let (engine_w, motor_w) = if converged {
        (solution.x1[0], solution.x1[1])
    } else {
        log::warn!(
            "step {}: solver stopped with status {:?} after {} iterations (r = {:.3e}, sigma = {:.3e}); reusing previous split",
            state.t,
            solution.status,
            solution.iterations,
            solution.final_r,
            solution.final_sigma
        );
        state.last_split.unwrap_or((0.0, 0.0))
    };
    Ok(StepOutcome {
        engine_w,
        motor_w,
        r_bar: solver.r_bar,
        fallback: !converged,
        problem,
        solution,
        warm: next,
        solve_ms,
    })
}

/// Clamps a requested split into the powertrain limits and the battery's
/// energy window, then lets the engine cover any shortfall.
pub fn apply_split(model: &PowertrainModel, energy_j: f64, demand_w: f64, engine_w: f64, motor_w: f64) -> (f64, f64) {
    let e_max = model.e_max();
    let g = model.battery.quadratic();
    // invert g on its increasing branch: largest |x| with g(x) = target
    let inverse = |target: f64| -> f64 {
        if g.a2 == 0.0 {
            return target;
        }
        let disc = (g.a1 * g.a1 + 4.0 * g.a2 * target).max(0.0);
        (-g.a1 + disc.sqrt()) / (2.0 * g.a2)
    };
    let mut motor = motor_w.clamp(model.motor_min_w, model.motor_max_w);
    if g.eval(motor) > energy_j {
        motor = inverse(energy_j);
    }
    if g.eval(motor) < energy_j - e_max {
        motor = inverse(energy_j - e_max);
    }
    let mut engine = engine_w.clamp(0.0, model.engine_max_w);
    if engine + motor < demand_w {
        engine = (demand_w - motor).min(model.engine_max_w);
    }
    (engine, motor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub engine_w: f64,
    pub motor_w: f64,
    /// realized demand after regeneration processing
    pub demand_w: f64,
    /// battery energy after the step
    pub energy_j: f64,
    /// cumulative fuel energy
    pub fuel_j: f64,
    pub iterations: usize,
    pub r: f64,
    pub sigma: f64,
    pub r_bar: f64,
    pub solve_ms: f64,
    pub status: SolveStatus,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub e_max_j: f64,
    pub e0_j: f64,
    pub en_j: f64,
    pub battery_voltage: f64,
    pub q: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub terminal_energy_j: f64,
    pub terminal_soc: f64,
    pub en_j: f64,
    pub e_max_j: f64,
    pub total_fuel_j: f64,
    pub mean_solve_ms: f64,
    pub total_iterations: usize,
    pub non_converged_steps: Vec<usize>,
    pub battery_voltage_assumed: f64,
}

impl SimulationLog {
    pub fn terminal_energy(&self) -> f64 {
        self.steps.last().map_or(self.e0_j, |s| s.energy_j)
    }

    pub fn all_converged(&self) -> bool {
        self.steps.iter().all(|s| s.status == SolveStatus::Converged)
    }

    pub fn summary(&self) -> SimulationSummary {
        let n = self.steps.len().max(1) as f64;
        SimulationSummary {
            steps: self.steps.len(),
            terminal_energy_j: self.terminal_energy(),
            terminal_soc: self.terminal_energy() / self.e_max_j,
            en_j: self.en_j,
            e_max_j: self.e_max_j,
            total_fuel_j: self.steps.last().map_or(0.0, |s| s.fuel_j),
            mean_solve_ms: self.steps.iter().map(|s| s.solve_ms).sum::<f64>() / n,
            total_iterations: self.steps.iter().map(|s| s.iterations).sum(),
            non_converged_steps: self
                .steps
                .iter()
                .filter(|s| s.status != SolveStatus::Converged)
                .map(|s| s.t)
                .collect(),
            battery_voltage_assumed: self.battery_voltage,
        }
    }

    /// `t,x1_engine_W,x1_motor_W,demand_W,soc_J,fuel_cost,iterations,r,sigma,solve_ms`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PhevError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "t",
            "x1_engine_W",
            "x1_motor_W",
            "demand_W",
            "soc_J",
            "fuel_cost",
            "iterations",
            "r",
            "sigma",
            "solve_ms",
        ])?;
        for s in &self.steps {
            w.write_record(&[
                s.t.to_string(),
                s.engine_w.to_string(),
                s.motor_w.to_string(),
                s.demand_w.to_string(),
                s.energy_j.to_string(),
                s.fuel_j.to_string(),
                s.iterations.to_string(),
                s.r.to_string(),
                s.sigma.to_string(),
                format!("{:.3}", s.solve_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The demand and speed the vehicle actually experiences.
pub fn realized_cycle(base: &DriveCycle, noise: &NoiseParams, seed: u64, realization: Realization) -> DriveCycle {
    match realization {
        Realization::Base => base.clone(),
        Realization::HeldOut => {
            let mut rng = stream_rng(seed, Stream::Realization);
            let warped = super::shift_stops(base, noise.stop_shift_max, &mut rng);
            let pole = noise.filter_pole();
            let dn = super::low_pass(&super::white_noise(base.len(), noise.demand_sigma_w, &mut rng), pole);
            let wn = super::low_pass(&super::white_noise(base.len(), noise.speed_sigma_rpm, &mut rng), pole);
            DriveCycle {
                demand: warped.demand.iter().zip(&dn).map(|(y, e)| y + e).collect(),
                speed: warped.speed.iter().zip(&wn).map(|(w, e)| (w + e).max(0.0)).collect(),
            }
        }
    }
}

/// Shrinking-horizon closed loop over `base`: at each second, scenarios for
/// the remaining horizon, one supervisory step, the applied split against the
/// realized demand, and the battery energy update `E ← E − g(motor)·1 s`.
pub fn simulate_shrinking_horizon(
    base: &DriveCycle,
    model: &PowertrainModel,
    config: &ClosedLoopConfig,
) -> Result<SimulationLog, PhevError> {
    simulate_with(base, model, config, &mut |_, _| {})
}

/// As [`simulate_shrinking_horizon`], calling `on_step(t, outcome)` after
/// every supervisory solve.
pub fn simulate_with(
    base: &DriveCycle,
    model: &PowertrainModel,
    config: &ClosedLoopConfig,
    on_step: &mut dyn FnMut(usize, &StepOutcome),
) -> Result<SimulationLog, PhevError> {
    if base.len() < 2 {
        return Err(PhevError::InvalidInput("cycle must have at least 2 samples".into()));
    }
    model.validate()?;
    let realized = realized_cycle(base, &config.noise, config.seed, config.realization);
    let steps = config.max_steps.map_or(base.len(), |s| s.min(base.len()));
    let mut state = VehicleState { t: 0, energy_j: model.e0(), last_split: None };
    let mut log = SimulationLog {
        e_max_j: model.e_max(),
        e0_j: model.e0(),
        en_j: model.en(),
        battery_voltage: model.battery_voltage,
        q: config.q,
        seed: config.seed,
        steps: Vec::with_capacity(steps),
    };
    let mut fuel = 0.0;
    let mut warm: Option<WarmStart<f64>> = None;
    for t in 0..steps {
        state.t = t;
        let mut scen = generate_scenarios(&base.tail(t), config.q, &config.noise, config.seed, t)?;
        scen.pin_first_step(realized.demand[t], realized.speed[t]);
        let out = supervisory_step(&state, &scen, model, config, warm.take())?;
        on_step(t, &out);
        if config.warm_start {
            warm = out.warm.shifted();
        }
        let demand = model.process_demand(realized.demand[t]);
        let (engine, motor) = apply_split(model, state.energy_j, demand, out.engine_w, out.motor_w);
        state.energy_j -= model.battery_power(motor);
        fuel += model.fuel_power(engine, realized.speed[t]);
        state.last_split = Some((engine, motor));
        log::debug!(
            "t={t} engine={engine:.1} W motor={motor:.1} W energy={:.1} J iterations={}",
            state.energy_j,
            out.solution.iterations
        );
        log.steps.push(StepRecord {
            t,
            engine_w: engine,
            motor_w: motor,
            demand_w: demand,
            energy_j: state.energy_j,
            fuel_j: fuel,
            iterations: out.solution.iterations,
            r: out.solution.final_r,
            sigma: out.solution.final_sigma,
            r_bar: out.r_bar,
            solve_ms: out.solve_ms,
            status: out.solution.status,
            fallback: out.fallback,
        });
    }
    Ok(log)
}

/// Battery energy along each scenario's planned motor trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSoc {
    pub e_max_j: f64,
    /// `energy[j][k]` before step `k`; `n + 1` entries per scenario
    pub energy: Vec<Vec<f64>>,
}

impl PredictedSoc {
    pub fn from_solution(model: &PowertrainModel, sol: &Solution<f64>, e0: f64) -> Self {
        let d = sol.x.dims;
        let energy = (0..d.q)
            .map(|j| {
                let mut e = e0;
                let mut row = Vec::with_capacity(d.n + 1);
                row.push(e);
                for k in 0..d.n {
                    e -= model.battery_power(sol.x.get(1, j, k));
                    row.push(e);
                }
                row
            })
            .collect();
        Self { e_max_j: model.e_max(), energy }
    }

    /// Long format `k,j,energy_J,soc` with 1-based scenario index.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PhevError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["k", "j", "energy_J", "soc"])?;
        for (j, row) in self.energy.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                w.write_record(&[k.to_string(), (j + 1).to_string(), e.to_string(), (e / self.e_max_j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Open-loop plan for the whole cycle from `model.e0()` with `q` scenarios.
pub fn plan(
    base: &DriveCycle,
    model: &PowertrainModel,
    config: &ClosedLoopConfig,
) -> Result<(AllocationProblem<f64>, Solution<f64>), PhevError> {
    let mut scen = generate_scenarios(base, config.q, &config.noise, config.seed, 0)?;
    let realized = realized_cycle(base, &config.noise, config.seed, config.realization);
    scen.pin_first_step(realized.demand[0], realized.speed[0]);
    let problem = build_phev_problem(&scen, model, model.e0())?;
    let mut solver = config.solver.clone();
    solver.r_bar = config.r_bar(model.e0() - model.en(), model.e_max());
    solver.sigma_bar = config.sigma_bar;
    let sol = crate::admm::solve(&problem, &solver)?;
    Ok((problem, sol))
}
