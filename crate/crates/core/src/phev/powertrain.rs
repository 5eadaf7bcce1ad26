use serde::{Deserialize, Serialize};

use super::{DriveScenarioSet, PhevError};
use crate::model::{AllocationProblem, Dims, Quadratic};

/// Engine fuel power as a quadratic in engine power at a given speed:
/// `a2 = k2·(1 + ω/ω_ref)`, `a1 = k1`, `a0 = k0·ω/ω_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelMap {
    pub k2: f64,
    pub k1: f64,
    /// idle fuel power at `omega_ref` (W)
    pub k0: f64,
    pub omega_ref: f64,
}

impl Default for FuelMap {
    fn default() -> Self {
        // peak efficiency ≈ 35% near 14 kW at 2000 rpm
        Self { k2: 5e-6, k1: 2.55, k0: 2000.0, omega_ref: 2000.0 }
    }
}

impl FuelMap {
    pub fn at(&self, omega_rpm: f64) -> Quadratic<f64> {
        let r = omega_rpm / self.omega_ref;
        Quadratic::new(self.k2 * (1.0 + r), self.k1, self.k0 * r)
    }
}

/// Internal battery power for motor power `x`: `x + kb·x²/p_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryLoss {
    pub kb: f64,
    pub p_ref: f64,
}

impl Default for BatteryLoss {
    fn default() -> Self {
        Self { kb: 0.05, p_ref: 50e3 }
    }
}

impl BatteryLoss {
    pub fn quadratic(&self) -> Quadratic<f64> {
        Quadratic::new(self.kb / self.p_ref, 1.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowertrainModel {
    pub engine_max_w: f64,
    pub motor_min_w: f64,
    pub motor_max_w: f64,
    pub battery_ah: f64,
    /// assumed nominal pack voltage; the capacity in Ah alone does not fix the energy
    pub battery_voltage: f64,
    /// informational; the synthetic cycle uses its own vehicle parameters
    pub vehicle_mass_kg: f64,
    pub regen_fraction: f64,
    pub e0_fraction: f64,
    pub en_fraction: f64,
    pub fuel: FuelMap,
    pub battery: BatteryLoss,
}

impl Default for PowertrainModel {
    fn default() -> Self {
        Self {
            engine_max_w: 100e3,
            motor_min_w: -50e3,
            motor_max_w: 50e3,
            battery_ah: 21.5,
            battery_voltage: 350.0,
            vehicle_mass_kg: 1900.0,
            regen_fraction: 0.4,
            e0_fraction: 0.6,
            en_fraction: 0.5,
            fuel: FuelMap::default(),
            battery: BatteryLoss::default(),
        }
    }
}

impl PowertrainModel {
    /// Usable battery energy (J).
    pub fn e_max(&self) -> f64 {
        self.battery_ah * 3600.0 * self.battery_voltage
    }

    pub fn e0(&self) -> f64 {
        self.e0_fraction * self.e_max()
    }

    pub fn en(&self) -> f64 {
        self.en_fraction * self.e_max()
    }

    /// Negative (braking) demand keeps only the recoverable fraction.
    pub fn process_demand(&self, y: f64) -> f64 {
        if y < 0.0 {
            self.regen_fraction * y
        } else {
            y
        }
    }

    pub fn fuel_power(&self, engine_w: f64, omega_rpm: f64) -> f64 {
        self.fuel.at(omega_rpm).eval(engine_w)
    }

    pub fn battery_power(&self, motor_w: f64) -> f64 {
        self.battery.quadratic().eval(motor_w)
    }

    pub fn validate(&self) -> Result<(), PhevError> {
        let ok = self.engine_max_w > 0.0
            && self.motor_min_w <= 0.0
            && self.motor_max_w > 0.0
            && self.battery_ah > 0.0
            && self.battery_voltage > 0.0
            && (0.0..=1.0).contains(&self.regen_fraction)
            && (0.0..=1.0).contains(&self.en_fraction)
            && (self.en_fraction..=1.0).contains(&self.e0_fraction)
            && self.fuel.k2 >= 0.0
            && self.fuel.omega_ref > 0.0
            && self.battery.kb >= 0.0
            && self.battery.p_ref > 0.0;
        if ok {
            Ok(())
        } else {
            Err(PhevError::InvalidInput(format!("inconsistent powertrain parameters: {self:?}")))
        }
    }
}

/// Two-resource instance over the scenario horizon: resource 1 is the engine
/// (fuel cost, no capacity), resource 2 the motor (no cost, battery energy
/// capacity `e0 − En`).
pub fn build_phev_problem(
    scenarios: &DriveScenarioSet,
    model: &PowertrainModel,
    e0: f64,
) -> Result<AllocationProblem<f64>, PhevError> {
    model.validate()?;
    let en = model.en();
    if !(e0 >= en) {
        return Err(PhevError::Infeasible { e0, en });
    }
    if e0 > model.e_max() {
        return Err(PhevError::InvalidInput(format!("initial energy {e0} J exceeds capacity {} J", model.e_max())));
    }
    let (q, n) = (scenarios.q(), scenarios.horizon());
    if q == 0 || n == 0 {
        return Err(PhevError::InvalidInput("empty scenario set".into()));
    }
    let dims = Dims::new(2, n, q);
    let mut p = AllocationProblem::zeros(dims);
    let battery = model.battery.quadratic();
    for j in 0..q {
        for k in 0..n {
            p.demand[dims.scen(j, k)] = model.process_demand(scenarios.demand[j][k]);
            p.cost.set(dims.cell(0, j, k), model.fuel.at(scenarios.speed[j][k]));
            p.loss.set(dims.cell(1, j, k), battery);
        }
    }
    for k in 0..n {
        p.lo[dims.bound(0, k)] = 0.0;
        p.hi[dims.bound(0, k)] = model.engine_max_w;
        p.lo[dims.bound(1, k)] = model.motor_min_w;
        p.hi[dims.bound(1, k)] = model.motor_max_w;
    }
    p.capacity = vec![f64::INFINITY, e0 - en];
    Ok(p)
}
