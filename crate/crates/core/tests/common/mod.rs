//! Independent reference computations shared by the integration suites.
//!
//! Nothing in here calls into the closed-form solver; the oracles use only
//! polynomial evaluation, grids, golden-section search and projected gradient.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Horner evaluation of `a x⁴ + b x³ + c x² + d x + e`.
pub fn poly4(c: [f64; 5], x: f64) -> f64 {
    (((c[0] * x + c[1]) * x + c[2]) * x + c[3]) * x + c[4]
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { x1 } else { x2 }
}

/// Dense grid over `[lo, hi]` followed by golden-section refinement around
/// every discrete local minimum of the grid. Returns the best point found.
pub fn grid_golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = (xs[0], fs[0]);
    for i in 0..points {
        let left_ok = i == 0 || fs[i] <= fs[i - 1];
        let right_ok = i + 1 == points || fs[i] <= fs[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(points - 1)];
        let x = golden_section(&f, a, b, 80);
        for cand in [x, xs[i]] {
            let v = f(cand);
            if v < best.1 {
                best = (cand, v);
            }
        }
    }
    best
}

/// Bracket containing every real root of `x³ + bx² + cx + d` (Cauchy bound).
pub fn cauchy_bracket(b: f64, c: f64, d: f64) -> f64 {
    1.0 + b.abs().max(c.abs()).max(d.abs())
}

/// Random quartic coefficients, uniform on [-10, 10] with `a >= 0.1`.
pub fn random_quartic(rng: &mut impl Rng) -> [f64; 5] {
    let mut a = rng.gen_range(-10.0..10.0);
    while a < 0.1 {
        a = rng.gen_range(-10.0..10.0);
    }
    [
        a,
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
    ]
}

/// Grid + golden-section global minimum of a quartic with positive leading
/// coefficient, searched over a bracket holding all stationary points.
pub fn quartic_oracle(c: [f64; 5], points: usize) -> (f64, f64) {
    let b = 3.0 * c[1] / (4.0 * c[0]);
    let cc = c[2] / (2.0 * c[0]);
    let d = c[3] / (4.0 * c[0]);
    let r = cauchy_bracket(b, cc, d);
    grid_golden_min(|x| poly4(c, x), -r, r, points)
}

/// Number of distinct real roots of a monic cubic from the classical
/// discriminant `18bcd - 4b³d + b²c² - 4c³ - 27d²`.
pub fn discriminant_root_count(b: f64, c: f64, d: f64) -> (usize, f64) {
    let disc = 18.0 * b * c * d - 4.0 * b.powi(3) * d + b * b * c * c - 4.0 * c.powi(3) - 27.0 * d * d;
    (if disc > 0.0 { 3 } else { 1 }, disc)
}

/// Sign changes of a monic cubic on a uniform grid over its root bracket.
pub fn sign_change_count(b: f64, c: f64, d: f64, points: usize) -> usize {
    let r = cauchy_bracket(b, c, d);
    let h = 2.0 * r / (points - 1) as f64;
    let f = |x: f64| ((x + b) * x + c) * x + d;
    let mut count = 0;
    let mut prev = f(-r);
    for i in 1..points {
        let v = f(-r + h * i as f64);
        if (prev < 0.0 && v >= 0.0) || (prev > 0.0 && v <= 0.0) {
            count += 1;
        }
        if v != 0.0 {
            prev = v;
        }
    }
    count
}

/// Small dense instance of the robust allocation problem used by the solver
/// oracles. Indices: cost/loss `[i][j][k]`, demand `[j][k]`, bounds `[i][k]`.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub demand: Vec<Vec<f64>>,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
    pub cost: Vec<Vec<Vec<[f64; 3]>>>,
    pub loss: Vec<Vec<Vec<[f64; 3]>>>,
}

fn quad(c: [f64; 3], x: f64) -> f64 {
    (c[0] * x + c[1]) * x + c[2]
}

fn dquad(c: [f64; 3], x: f64) -> f64 {
    2.0 * c[0] * x + c[1]
}

impl SmallInstance {
    /// Random convex instance that is strictly feasible by construction: a
    /// consensus-respecting allocation covering 110% of demand is drawn
    /// first and capacities are set above its losses.
    pub fn random(rng: &mut impl Rng, m: usize, n: usize, q: usize) -> Self {
        let demand: Vec<Vec<f64>> =
            (0..q).map(|_| (0..n).map(|_| rng.gen_range(0.5..3.0)).collect()).collect();
        let weights: Vec<f64> = {
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| 1.1 * v / s).collect()
        };
        let lo = vec![vec![0.0; n]; m];
        let hi: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(4.0..6.0)).collect()).collect();
        let cost: Vec<Vec<Vec<[f64; 3]>>> = (0..m)
            .map(|_| {
                (0..q)
                    .map(|_| {
                        (0..n)
                            .map(|_| [rng.gen_range(0.5..2.0), rng.gen_range(-0.5..1.0), rng.gen_range(0.0..1.0)])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let loss: Vec<Vec<Vec<[f64; 3]>>> = (0..m)
            .map(|_| {
                (0..q)
                    .map(|_| {
                        (0..n)
                            .map(|_| [rng.gen_range(0.0..0.3), rng.gen_range(0.5..1.0), 0.0])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let first_max = (0..q).map(|j| demand[j][0]).fold(f64::MIN, f64::max);
        let capacity = (0..m)
            .map(|i| {
                let need = (0..q)
                    .map(|j| {
                        (0..n)
                            .map(|k| {
                                let y = if k == 0 { first_max } else { demand[j][k] };
                                quad(loss[i][j][k], weights[i] * y)
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::MIN, f64::max);
                need * rng.gen_range(1.05..1.4)
            })
            .collect();
        Self { m, n, q, demand, lo, hi, capacity, cost, loss }
    }

    pub fn scale(&self) -> f64 {
        1.0 + self.demand.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn objective(&self, x: &[Vec<Vec<f64>>]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.m {
            for j in 0..self.q {
                for k in 0..self.n {
                    total += quad(self.cost[i][j][k], x[i][j][k]);
                }
            }
        }
        total / self.q as f64
    }

    /// (max demand shortfall, max capacity excess, max box violation).
    pub fn violations(&self, x: &[Vec<Vec<f64>>]) -> (f64, f64, f64) {
        let mut demand: f64 = f64::MIN;
        let mut capacity: f64 = f64::MIN;
        let mut bx: f64 = 0.0;
        for j in 0..self.q {
            for k in 0..self.n {
                let s: f64 = (0..self.m).map(|i| x[i][j][k]).sum();
                demand = demand.max(self.demand[j][k] - s);
            }
            for i in 0..self.m {
                let used: f64 = (0..self.n).map(|k| quad(self.loss[i][j][k], x[i][j][k])).sum();
                capacity = capacity.max(used - self.capacity[i]);
                for k in 0..self.n {
                    bx = bx.max(self.lo[i][k] - x[i][j][k]).max(x[i][j][k] - self.hi[i][k]);
                }
            }
        }
        (demand, capacity, bx)
    }

    /// Independent solution by the method of multipliers with a projected
    /// gradient inner solver. The consensus constraint is eliminated by
    /// sharing one first-step variable per resource across scenarios.
    pub fn projected_gradient_oracle(&self) -> (f64, Vec<Vec<Vec<f64>>>) {
        let (m, n, q) = (self.m, self.n, self.q);
        // variable layout: per resource, [x1, then (j, k>=1)]
        let per = 1 + q * (n - 1);
        let idx = |i: usize, j: usize, k: usize| -> usize {
            if k == 0 { i * per } else { i * per + 1 + j * (n - 1) + (k - 1) }
        };
        let unpack = |v: &[f64]| -> Vec<Vec<Vec<f64>>> {
            (0..m).map(|i| (0..q).map(|j| (0..n).map(|k| v[idx(i, j, k)]).collect()).collect()).collect()
        };
        let lo: Vec<f64> = (0..m * per)
            .map(|t| {
                let i = t / per;
                let r = t % per;
                let k = if r == 0 { 0 } else { 1 + (r - 1) % (n - 1).max(1) };
                self.lo[i][k]
            })
            .collect();
        let hi: Vec<f64> = (0..m * per)
            .map(|t| {
                let i = t / per;
                let r = t % per;
                let k = if r == 0 { 0 } else { 1 + (r - 1) % (n - 1).max(1) };
                self.hi[i][k]
            })
            .collect();
        let mut v: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut mult_d = vec![0.0; q * n];
        let mut mult_c = vec![0.0; m * q];
        let mut pen = 10.0;

        // augmented Lagrangian for inequalities g(v) <= 0:
        // (pen/2) Σ max(0, g + mult/pen)² - Σ mult²/(2 pen)
        let eval = |v: &[f64], md: &[f64], mc: &[f64], pen: f64, grad: Option<&mut Vec<f64>>| -> f64 {
            let x = unpack(v);
            let mut val = self.objective(&x);
            let mut gx = vec![vec![vec![0.0; n]; q]; m];
            for i in 0..m {
                for j in 0..q {
                    for k in 0..n {
                        gx[i][j][k] += dquad(self.cost[i][j][k], x[i][j][k]) / q as f64;
                    }
                }
            }
            for j in 0..q {
                for k in 0..n {
                    let s: f64 = (0..m).map(|i| x[i][j][k]).sum();
                    let t = (self.demand[j][k] - s + md[j * n + k] / pen).max(0.0);
                    val += 0.5 * pen * t * t;
                    for i in 0..m {
                        gx[i][j][k] -= pen * t;
                    }
                }
            }
            for i in 0..m {
                for j in 0..q {
                    let used: f64 = (0..n).map(|k| quad(self.loss[i][j][k], x[i][j][k])).sum();
                    let t = (used - self.capacity[i] + mc[i * q + j] / pen).max(0.0);
                    val += 0.5 * pen * t * t;
                    for k in 0..n {
                        gx[i][j][k] += pen * t * dquad(self.loss[i][j][k], x[i][j][k]);
                    }
                }
            }
            if let Some(g) = grad {
                g.iter_mut().for_each(|e| *e = 0.0);
                for i in 0..m {
                    for j in 0..q {
                        for k in 0..n {
                            g[idx(i, j, k)] += gx[i][j][k];
                        }
                    }
                }
            }
            val
        };

        let mut grad = vec![0.0; v.len()];
        for _outer in 0..60 {
            // projected gradient with Armijo backtracking
            let mut step = 1.0;
            for _ in 0..20000 {
                let f0 = eval(&v, &mult_d, &mult_c, pen, Some(&mut grad));
                let moved = loop {
                    let cand: Vec<f64> = v
                        .iter()
                        .zip(&grad)
                        .enumerate()
                        .map(|(t, (x, g))| (x - step * g).max(lo[t]).min(hi[t]))
                        .collect();
                    let f1 = eval(&cand, &mult_d, &mult_c, pen, None);
                    let dec: f64 = cand.iter().zip(&v).zip(&grad).map(|((c, x), g)| g * (x - c)).sum();
                    if f1 <= f0 - 0.5 * dec || step < 1e-14 {
                        let moved = cand.iter().zip(&v).map(|(c, x)| (c - x).abs()).fold(0.0, f64::max);
                        v = cand;
                        break moved;
                    }
                    step *= 0.5;
                };
                step = (step * 2.0).min(1.0);
                if moved < 1e-13 {
                    break;
                }
            }
            let x = unpack(&v);
            for j in 0..q {
                for k in 0..n {
                    let s: f64 = (0..m).map(|i| x[i][j][k]).sum();
                    let e = &mut mult_d[j * n + k];
                    *e = (*e + pen * (self.demand[j][k] - s)).max(0.0);
                }
            }
            for i in 0..m {
                for j in 0..q {
                    let used: f64 = (0..n).map(|k| quad(self.loss[i][j][k], x[i][j][k])).sum();
                    let e = &mut mult_c[i * q + j];
                    *e = (*e + pen * (used - self.capacity[i])).max(0.0);
                }
            }
            let (dv, cv, _) = self.violations(&x);
            if dv.max(cv) < 1e-11 && _outer > 10 {
                break;
            }
            pen = (pen * 2.0).min(1e6);
        }
        let x = unpack(&v);
        (self.objective(&x), x)
    }
}

impl SmallInstance {
    pub fn to_problem(&self) -> qadmm::Problem {
        qadmm::model::ProblemFile {
            m: self.m,
            n: self.n,
            q: self.q,
            demand: self.demand.clone(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            capacity: self.capacity.iter().map(|&c| Some(c)).collect(),
            cost: self.cost.clone(),
            loss: self.loss.clone(),
        }
        .to_problem()
        .expect("well-formed instance")
    }

    pub fn nested(&self, x: &qadmm::Trajectories<f64>) -> Vec<Vec<Vec<f64>>> {
        (0..self.m)
            .map(|i| (0..self.q).map(|j| (0..self.n).map(|k| x.get(i, j, k)).collect()).collect())
            .collect()
    }
}
