use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DriveCycle, PhevError};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// standard deviation of the white demand noise before filtering (W)
    pub demand_sigma_w: f64,
    /// standard deviation of the white speed noise before filtering (rpm)
    pub speed_sigma_rpm: f64,
    pub cutoff_hz: f64,
    pub dt_s: f64,
    /// largest shift of a stop boundary, in samples
    pub stop_shift_max: usize,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { demand_sigma_w: 250.0, speed_sigma_rpm: 50.0, cutoff_hz: 0.02, dt_s: 1.0, stop_shift_max: 5 }
    }
}

impl NoiseParams {
    /// No noise and no stop shifting: every scenario equals the base cycle.
    pub fn zero() -> Self {
        Self { demand_sigma_w: 0.0, speed_sigma_rpm: 0.0, stop_shift_max: 0, ..Self::default() }
    }

    /// Pole of the first-order low-pass filter.
    pub fn filter_pole(&self) -> f64 {
        (-2.0 * std::f64::consts::PI * self.cutoff_hz * self.dt_s).exp()
    }
}

/// `q` perturbed copies of a cycle, indexed `[j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveScenarioSet {
    pub demand: Vec<Vec<f64>>,
    pub speed: Vec<Vec<f64>>,
    pub seed: u64,
    /// supervisory step the noise streams belong to
    pub step: usize,
    pub noise: NoiseParams,
}

impl DriveScenarioSet {
    pub fn q(&self) -> usize {
        self.demand.len()
    }

    pub fn horizon(&self) -> usize {
        self.demand.first().map_or(0, |d| d.len())
    }

    /// Overwrites the first sample of every scenario, which is known when
    /// the controller acts.
    pub fn pin_first_step(&mut self, demand: f64, speed: f64) {
        for (d, w) in self.demand.iter_mut().zip(self.speed.iter_mut()) {
            d[0] = demand;
            w[0] = speed;
        }
    }
}

/// `y[k] = a·y[k−1] + (1−a)·u[k]`, starting from `y[−1] = 0`.
pub fn low_pass(input: &[f64], pole: f64) -> Vec<f64> {
    let mut state = 0.0;
    input
        .iter()
        .map(|&u| {
            state = pole * state + (1.0 - pole) * u;
            state
        })
        .collect()
}

pub fn white_noise(n: usize, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Maximal runs of exactly-zero demand, as half-open `[start, end)` ranges.
pub fn stop_segments(demand: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < demand.len() {
        if demand[k] == 0.0 {
            let start = k;
            while k < demand.len() && demand[k] == 0.0 {
                k += 1;
            }
            out.push((start, k));
        } else {
            k += 1;
        }
    }
    out
}

/// Moves every interior stop boundary by a random offset in
/// `[−max_shift, max_shift]` and resamples the cycle along the induced
/// piecewise-linear time warp. Length and endpoints are preserved.
pub fn shift_stops(base: &DriveCycle, max_shift: usize, rng: &mut impl Rng) -> DriveCycle {
    let n = base.len();
    if max_shift == 0 || n < 3 {
        return base.clone();
    }
    let s = max_shift as i64;
    // anchors map new time → old time
    let mut anchors: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for (start, end) in stop_segments(&base.demand) {
        for edge in [start, end] {
            if edge == 0 || edge >= n {
                continue;
            }
            let last = anchors.last().expect("non-empty").0 as i64;
            let moved = (edge as i64 + rng.gen_range(-s..=s)).clamp(last + 1, n as i64 - 1);
            if moved > last {
                anchors.push((moved as f64, edge as f64));
            }
        }
    }
    anchors.push(((n - 1) as f64, (n - 1) as f64));
    anchors.dedup_by(|b, a| b.0 <= a.0);

    let sample = |series: &[f64], old: f64| -> f64 {
        let lo = old.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let w = old - lo as f64;
        series[lo] * (1.0 - w) + series[hi] * w
    };
    let mut seg = 0;
    let (mut demand, mut speed) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for t in 0..n {
        let t = t as f64;
        while seg + 2 < anchors.len() && anchors[seg + 1].0 <= t {
            seg += 1;
        }
        let ((n0, o0), (n1, o1)) = (anchors[seg], anchors[seg + 1]);
        let old = if n1 > n0 { o0 + (t - n0) * (o1 - o0) / (n1 - n0) } else { o0 };
        let old = old.clamp(0.0, (n - 1) as f64);
        demand.push(sample(&base.demand, old));
        speed.push(sample(&base.speed, old));
    }
    DriveCycle { demand, speed }
}

/// `q` scenarios around `base`, each from its own streams for `(step, j)`.
pub fn generate_scenarios(
    base: &DriveCycle,
    q: usize,
    noise: &NoiseParams,
    seed: u64,
    step: usize,
) -> Result<DriveScenarioSet, PhevError> {
    if q < 1 {
        return Err(PhevError::InvalidInput("scenario count q must be at least 1".into()));
    }
    if base.is_empty() {
        return Err(PhevError::InvalidInput("base cycle is empty".into()));
    }
    if !(noise.demand_sigma_w >= 0.0 && noise.speed_sigma_rpm >= 0.0 && noise.cutoff_hz > 0.0 && noise.dt_s > 0.0) {
        return Err(PhevError::InvalidInput("noise parameters must be non-negative with positive cutoff".into()));
    }
    let n = base.len();
    let pole = noise.filter_pole();
    let scenarios: Vec<(Vec<f64>, Vec<f64>)> = (0..q)
        .into_par_iter()
        .map(|j| {
            let warped = shift_stops(base, noise.stop_shift_max, &mut stream_rng(seed, Stream::StopShift { step, j }));
            let dn = low_pass(
                &white_noise(n, noise.demand_sigma_w, &mut stream_rng(seed, Stream::DemandNoise { step, j })),
                pole,
            );
            let wn = low_pass(
                &white_noise(n, noise.speed_sigma_rpm, &mut stream_rng(seed, Stream::SpeedNoise { step, j })),
                pole,
            );
            let demand = warped.demand.iter().zip(&dn).map(|(y, e)| y + e).collect();
            let speed = warped.speed.iter().zip(&wn).map(|(w, e)| (w + e).max(0.0)).collect();
            (demand, speed)
        })
        .collect();
    let (demand, speed) = scenarios.into_iter().unzip();
    Ok(DriveScenarioSet { demand, speed, seed, step, noise: *noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> DriveCycle {
        let demand: Vec<f64> = (0..60).map(|k| if (10..20).contains(&k) || k >= 50 { 0.0 } else { 1000.0 + k as f64 }).collect();
        let speed = demand.iter().map(|&d| if d == 0.0 { 0.0 } else { 1500.0 }).collect();
        DriveCycle::new(demand, speed).unwrap()
    }

    #[test]
    fn zero_noise_reproduces_base() {
        let b = base();
        let s = generate_scenarios(&b, 3, &NoiseParams::zero(), 1, 0).unwrap();
        for j in 0..3 {
            assert_eq!(s.demand[j], b.demand);
            assert_eq!(s.speed[j], b.speed);
        }
    }

    #[test]
    fn q_must_be_positive() {
        assert!(matches!(generate_scenarios(&base(), 0, &NoiseParams::default(), 1, 0), Err(PhevError::InvalidInput(_))));
    }

    #[test]
    fn segments_are_found() {
        assert_eq!(stop_segments(&base().demand), vec![(10, 20), (50, 60)]);
    }

    #[test]
    fn stop_shift_moves_boundaries_and_keeps_length() {
        let b = base();
        let mut moved = false;
        for seed in 0..20 {
            let w = shift_stops(&b, 5, &mut stream_rng(seed, Stream::StopShift { step: 0, j: 0 }));
            assert_eq!(w.len(), b.len());
            assert_eq!(w.demand[0], b.demand[0]);
            let segs = stop_segments(&w.demand);
            assert!(!segs.is_empty());
            for (s, e) in &segs {
                assert!(e > s);
            }
            let first = segs[0];
            assert!((first.0 as i64 - 10).abs() <= 5 + 1);
            moved |= first != (10, 20);
        }
        assert!(moved);
    }

    #[test]
    fn filter_has_unit_dc_gain() {
        let out = low_pass(&vec![1.0; 400], NoiseParams::default().filter_pole());
        assert!((out[399] - 1.0).abs() < 1e-12);
        assert!(out[0] < 0.2);
    }
}
