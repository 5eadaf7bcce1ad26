use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PhevError;
use crate::rng::{stream_rng, Stream};

/// Demand power (W) and engine speed (rpm), one sample per second.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    pub demand: Vec<f64>,
    pub speed: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CycleRow {
    t_s: f64,
    #[serde(rename = "demand_W")]
    demand_w: f64,
    speed_rpm: f64,
}

impl DriveCycle {
    pub fn new(demand: Vec<f64>, speed: Vec<f64>) -> Result<Self, PhevError> {
        if demand.len() != speed.len() {
            return Err(PhevError::InvalidInput(format!(
                "cycle has {} demand samples but {} speed samples",
                demand.len(),
                speed.len()
            )));
        }
        if let Some(k) = demand.iter().chain(&speed).position(|v| !v.is_finite()) {
            return Err(PhevError::InvalidInput(format!("non-finite cycle sample at index {}", k % demand.len().max(1))));
        }
        if let Some(k) = speed.iter().position(|&w| w < 0.0) {
            return Err(PhevError::InvalidInput(format!("negative engine speed at t = {k} s")));
        }
        Ok(Self { demand, speed })
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    /// Samples from `start` to the end.
    pub fn tail(&self, start: usize) -> Self {
        Self { demand: self.demand[start..].to_vec(), speed: self.speed[start..].to_vec() }
    }

    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.len());
        Self { demand: self.demand[..len].to_vec(), speed: self.speed[..len].to_vec() }
    }

    /// Reads `t_s,demand_W,speed_rpm` rows; `t_s` must step by one second.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, PhevError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let (mut demand, mut speed) = (Vec::new(), Vec::new());
        for (k, row) in rdr.deserialize::<CycleRow>().enumerate() {
            let row = row.map_err(|e| PhevError::InvalidInput(format!("cycle CSV: {e}")))?;
            if (row.t_s - k as f64).abs() > 1e-9 {
                return Err(PhevError::InvalidInput(format!(
                    "cycle CSV row {}: expected t_s = {k}, found {}",
                    k + 1,
                    row.t_s
                )));
            }
            demand.push(row.demand_w);
            speed.push(row.speed_rpm);
        }
        Self::new(demand, speed)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PhevError> {
        let mut w = csv::Writer::from_writer(writer);
        for k in 0..self.len() {
            w.serialize(CycleRow { t_s: k as f64, demand_w: self.demand[k], speed_rpm: self.speed[k] })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Stop-and-go cycle built from micro-trips (stop, accelerate, cruise,
    /// brake), with road-load demand for a vehicle of `vehicle.mass_kg`.
    pub fn synthetic(n: usize, seed: u64, vehicle: &VehicleParams) -> Self {
        let mut rng = stream_rng(seed, Stream::SyntheticCycle);
        let mut v_trace = Vec::with_capacity(n + 1);
        while v_trace.len() < n + 1 {
            let stop = rng.gen_range(5..=20);
            v_trace.extend(std::iter::repeat_n(0.0, stop));
            let target: f64 = rng.gen_range(8.0..28.0);
            let accel: f64 = rng.gen_range(0.6..1.2);
            let mut v = 0.0;
            while v < target {
                v = (v + accel).min(target);
                v_trace.push(v);
            }
            let cruise = rng.gen_range(20..80);
            for _ in 0..cruise {
                v = (v + rng.gen_range(-0.3..0.3)).clamp(0.8 * target, 1.1 * target);
                v_trace.push(v);
            }
            let decel: f64 = rng.gen_range(0.6..1.2);
            while v > 0.0 {
                v = (v - decel).max(0.0);
                v_trace.push(v);
            }
        }
        let mut demand = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        for k in 0..n {
            let (v0, v1) = (v_trace[k], v_trace[k + 1]);
            demand.push(vehicle.road_load(v0, v1 - v0));
            speed.push(vehicle.engine_speed(v0));
        }
        Self { demand, speed }
    }
}

/// Longitudinal vehicle model used only to synthesize cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub drag_area_m2: f64,
    pub rolling_coeff: f64,
    pub air_density: f64,
    pub idle_rpm: f64,
    pub max_rpm: f64,
    /// speed at which the engine reaches `max_rpm`
    pub top_speed_mps: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass_kg: 1900.0,
            drag_area_m2: 0.7,
            rolling_coeff: 0.01,
            air_density: 1.2,
            idle_rpm: 800.0,
            max_rpm: 3000.0,
            top_speed_mps: 30.0,
        }
    }
}

impl VehicleParams {
    /// Wheel power (W) at speed `v` (m/s) with acceleration `a` (m/s²).
    pub fn road_load(&self, v: f64, a: f64) -> f64 {
        if v == 0.0 && a == 0.0 {
            return 0.0;
        }
        let v_mid = v + 0.5 * a;
        let force = self.mass_kg * a
            + 0.5 * self.air_density * self.drag_area_m2 * v_mid * v_mid
            + self.rolling_coeff * self.mass_kg * 9.81;
        force * v_mid
    }

    pub fn engine_speed(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            self.idle_rpm + (self.max_rpm - self.idle_rpm) * (v / self.top_speed_mps).clamp(0.0, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_cycle_is_reproducible_and_bounded() {
        let veh = VehicleParams::default();
        let a = DriveCycle::synthetic(2000, 3, &veh);
        assert_eq!(a, DriveCycle::synthetic(2000, 3, &veh));
        assert_ne!(a, DriveCycle::synthetic(2000, 4, &veh));
        assert_eq!(a.len(), 2000);
        assert!(a.demand.iter().all(|p| p.abs() < 150e3));
        assert!(a.speed.iter().all(|&w| w == 0.0 || (800.0..=3000.0).contains(&w)));
        assert_eq!(a.demand[0], 0.0);
        assert!(a.demand.iter().any(|&p| p < 0.0));
        assert!(a.demand.iter().cloned().fold(0.0, f64::max) > 30e3);
    }

    #[test]
    fn csv_round_trip() {
        let c = DriveCycle::new(vec![0.0, 1500.5, -200.0], vec![0.0, 900.0, 850.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,demand_W,speed_rpm\n"));
        assert_eq!(DriveCycle::from_csv(text.as_bytes()).unwrap(), c);
    }

    #[test]
    fn malformed_cycles_are_rejected() {
        assert!(DriveCycle::new(vec![0.0], vec![]).is_err());
        assert!(DriveCycle::new(vec![0.0], vec![-1.0]).is_err());
        let bad = "t_s,demand_W,speed_rpm\n0,1,1\n2,1,1\n";
        assert!(DriveCycle::from_csv(bad.as_bytes()).is_err());
    }
}
