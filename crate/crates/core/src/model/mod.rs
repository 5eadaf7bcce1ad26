//! Problem data for scenario-based robust resource allocation.
//!
//! `m` resources meet a demand over an `n`-step horizon in each of `q`
//! sampled scenarios:
//!
//! ```text
//!   min  (1/q) Σ_{i,j,k} f_k^(i,j)(x_k^(i,j))
//!   s.t. Σ_i x_k^(i,j) ≥ y_k^(j)                 (demand, per j, k)
//!        Σ_k g_k^(i,j)(x_k^(i,j)) ≤ c^(i)        (capacity, per i, j)
//!        lo_k^(i) ≤ x_k^(i,j) ≤ hi_k^(i)         (box)
//!        x_1^(i,j) = x_1^(i)                      (first-step consensus)
//! ```
//!
//! Per-cell arrays use a dense `(i, j, k)` layout with `k` fastest, so one
//! `(i, j)` trajectory is a contiguous slice.

mod file;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use file::{
    write_residual_history_csv, write_trajectories_csv, ProblemFile, SolutionSummary,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension { what: String, expected: usize, found: usize },
    #[error("problem failed validation: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// `a2·x² + a1·x + a0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratic<T> {
    pub a2: T,
    pub a1: T,
    pub a0: T,
}

impl<T: Scalar> Quadratic<T> {
    pub fn new(a2: T, a1: T, a0: T) -> Self {
        Self { a2, a1, a0 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (self.a2 * x + self.a1) * x + self.a0
    }

    #[inline]
    pub fn derivative(&self, x: T) -> T {
        (self.a2 + self.a2) * x + self.a1
    }

    pub fn is_convex(&self) -> bool {
        self.a2 >= T::zero()
    }

    pub fn is_finite(&self) -> bool {
        self.a2.is_finite() && self.a1.is_finite() && self.a0.is_finite()
    }

    /// Minimum over `[lo, hi]` of a convex quadratic.
    pub fn min_on(&self, lo: T, hi: T) -> T {
        let x = if self.a2 > T::zero() {
            (-self.a1 / (self.a2 + self.a2)).max(lo).min(hi)
        } else if self.a1 >= T::zero() {
            lo
        } else {
            hi
        };
        self.eval(x)
    }
}

/// Problem dimensions and flat index helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// resources (index i)
    pub m: usize,
    /// horizon steps (index k)
    pub n: usize,
    /// scenarios (index j)
    pub q: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize, q: usize) -> Self {
        Self { m, n, q }
    }

    /// Flat index of `(i, j, k)` in an `(m, q, n)` array.
    #[inline]
    pub fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.q + j) * self.n + k
    }

    /// Flat index of `(j, k)` in a `(q, n)` array.
    #[inline]
    pub fn scen(&self, j: usize, k: usize) -> usize {
        j * self.n + k
    }

    /// Flat index of `(i, j)` in an `(m, q)` array.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> usize {
        i * self.q + j
    }

    /// Flat index of `(i, k)` in an `(m, n)` array.
    #[inline]
    pub fn bound(&self, i: usize, k: usize) -> usize {
        i * self.n + k
    }

    pub fn cells(&self) -> usize {
        self.m * self.q * self.n
    }
}

/// Dense `(m, q, n)` field of quadratic coefficients stored as three arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticField<T> {
    pub a2: Vec<T>,
    pub a1: Vec<T>,
    pub a0: Vec<T>,
}

impl<T: Scalar> QuadraticField<T> {
    pub fn zeros(len: usize) -> Self {
        Self { a2: vec![T::zero(); len], a1: vec![T::zero(); len], a0: vec![T::zero(); len] }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> Quadratic<T>) -> Self {
        let mut out = Self::zeros(len);
        for c in 0..len {
            out.set(c, f(c));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.a2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a2.is_empty()
    }

    #[inline]
    pub fn get(&self, c: usize) -> Quadratic<T> {
        Quadratic::new(self.a2[c], self.a1[c], self.a0[c])
    }

    pub fn set(&mut self, c: usize, v: Quadratic<T>) {
        self.a2[c] = v.a2;
        self.a1[c] = v.a1;
        self.a0[c] = v.a0;
    }

    #[inline]
    pub fn eval(&self, c: usize, x: T) -> T {
        (self.a2[c] * x + self.a1[c]) * x + self.a0[c]
    }
}

/// A robust allocation problem instance. Construct freely, then call
/// [`AllocationProblem::validate`]; the solver refuses invalid instances.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem<T> {
    pub dims: Dims,
    /// `y_k^(j)`, shape `(q, n)`
    pub demand: Vec<T>,
    /// lower box bounds, shape `(m, n)`
    pub lo: Vec<T>,
    /// upper box bounds, shape `(m, n)`
    pub hi: Vec<T>,
    /// `c^(i)`; `+∞` omits the capacity constraint for that resource.
    pub capacity: Vec<T>,
    /// `f_k^(i,j)`, shape `(m, q, n)`
    pub cost: QuadraticField<T>,
    /// `g_k^(i,j)`, shape `(m, q, n)`
    pub loss: QuadraticField<T>,
}

/// One violated invariant. Indices are reported 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension(&'static str),
    Length { field: &'static str, expected: usize, found: usize },
    NonFinite { field: &'static str, index: usize },
    NonconvexCost { i: usize, j: usize, k: usize },
    NonconvexLoss { i: usize, j: usize, k: usize },
    InvertedBounds { i: usize, k: usize },
    InvalidCapacity { i: usize },
    DemandAboveBounds { j: usize, k: usize, demand: f64, limit: f64 },
    CapacityUnattainable { i: usize, j: usize, min_use: f64, capacity: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension(d) => write!(f, "dimension {d} must be at least 1"),
            Violation::Length { field, expected, found } => {
                write!(f, "{field} has {found} entries, expected {expected}")
            }
            Violation::NonFinite { field, index } => {
                write!(f, "non-finite value in {field} at flat index {index}")
            }
            Violation::NonconvexCost { i, j, k } => write!(f, "nonconvex cost at ({i},{j},{k})"),
            Violation::NonconvexLoss { i, j, k } => write!(f, "nonconvex loss at ({i},{j},{k})"),
            Violation::InvertedBounds { i, k } => write!(f, "inverted bounds at ({i},{k})"),
            Violation::InvalidCapacity { i } => write!(f, "capacity of resource {i} is NaN or -inf"),
            Violation::DemandAboveBounds { j, k, demand, limit } => write!(
                f,
                "demand {demand} exceeds combined upper bounds {limit} at ({j},{k})"
            ),
            Violation::CapacityUnattainable { i, j, min_use, capacity } => write!(
                f,
                "capacity {capacity} of resource {i} below minimum achievable use {min_use} in scenario {j}"
            ),
        }
    }
}

impl<T: Scalar> AllocationProblem<T> {
    /// Problem with zero costs and losses, unit boxes, zero demand and
    /// unbounded capacities; fill in the fields afterwards.
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            demand: vec![T::zero(); dims.q * dims.n],
            lo: vec![T::zero(); dims.m * dims.n],
            hi: vec![T::one(); dims.m * dims.n],
            capacity: vec![T::infinity(); dims.m],
            cost: QuadraticField::zeros(dims.cells()),
            loss: QuadraticField::zeros(dims.cells()),
        }
    }

    /// Every violated invariant. Dimension problems short-circuit the
    /// per-cell checks, which would otherwise index out of range.
    pub fn validate(&self) -> Vec<Violation> {
        let Dims { m, n, q } = self.dims;
        let mut out = Vec::new();
        for (name, v) in [("m", m), ("n", n), ("q", q)] {
            if v == 0 {
                out.push(Violation::EmptyDimension(name));
            }
        }
        let cells = self.dims.cells();
        let lengths: [(&'static str, usize, usize); 9] = [
            ("demand", q * n, self.demand.len()),
            ("lo", m * n, self.lo.len()),
            ("hi", m * n, self.hi.len()),
            ("capacity", m, self.capacity.len()),
            ("cost.a2", cells, self.cost.a2.len()),
            ("cost.a1", cells, self.cost.a1.len()),
            ("cost.a0", cells, self.cost.a0.len()),
            ("loss.a2", cells, self.loss.a2.len()),
            ("loss.a1", cells, self.loss.a1.len()),
        ];
        for (field, expected, found) in lengths {
            if expected != found {
                out.push(Violation::Length { field, expected, found });
            }
        }
        if self.loss.a0.len() != cells {
            out.push(Violation::Length { field: "loss.a0", expected: cells, found: self.loss.a0.len() });
        }
        if !out.is_empty() {
            return out;
        }

        let finite_fields: [(&'static str, &[T]); 9] = [
            ("demand", &self.demand),
            ("lo", &self.lo),
            ("hi", &self.hi),
            ("cost.a2", &self.cost.a2),
            ("cost.a1", &self.cost.a1),
            ("cost.a0", &self.cost.a0),
            ("loss.a2", &self.loss.a2),
            ("loss.a1", &self.loss.a1),
            ("loss.a0", &self.loss.a0),
        ];
        for (field, values) in finite_fields {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFinite { field, index });
            }
        }
        for (i, c) in self.capacity.iter().enumerate() {
            if c.is_nan() || *c == T::neg_infinity() {
                out.push(Violation::InvalidCapacity { i: i + 1 });
            }
        }
        for i in 0..m {
            for j in 0..q {
                for k in 0..n {
                    let c = self.dims.cell(i, j, k);
                    if self.cost.a2[c] < T::zero() {
                        out.push(Violation::NonconvexCost { i: i + 1, j: j + 1, k: k + 1 });
                    }
                    if self.loss.a2[c] < T::zero() {
                        out.push(Violation::NonconvexLoss { i: i + 1, j: j + 1, k: k + 1 });
                    }
                }
            }
        }
        let mut bounds_ok = true;
        for i in 0..m {
            for k in 0..n {
                let b = self.dims.bound(i, k);
                if self.lo[b] > self.hi[b] {
                    bounds_ok = false;
                    out.push(Violation::InvertedBounds { i: i + 1, k: k + 1 });
                }
            }
        }
        if !bounds_ok {
            return out;
        }
        for j in 0..q {
            for k in 0..n {
                let limit = (0..m).fold(T::zero(), |acc, i| acc + self.hi[self.dims.bound(i, k)]);
                let y = self.demand[self.dims.scen(j, k)];
                if y > limit {
                    out.push(Violation::DemandAboveBounds {
                        j: j + 1,
                        k: k + 1,
                        demand: y.as_f64(),
                        limit: limit.as_f64(),
                    });
                }
            }
        }
        for i in 0..m {
            let cap = self.capacity[i];
            if !cap.is_finite() {
                continue;
            }
            for j in 0..q {
                let min_use = (0..n).fold(T::zero(), |acc, k| {
                    let b = self.dims.bound(i, k);
                    let g = self.loss.get(self.dims.cell(i, j, k));
                    if g.is_convex() { acc + g.min_on(self.lo[b], self.hi[b]) } else { acc }
                });
                if min_use > cap {
                    out.push(Violation::CapacityUnattainable {
                        i: i + 1,
                        j: j + 1,
                        min_use: min_use.as_f64(),
                        capacity: cap.as_f64(),
                    });
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() { Ok(()) } else { Err(ModelError::Invalid(v)) }
    }

    fn check_traj(&self, x: &Trajectories<T>) -> Result<(), ModelError> {
        if x.dims != self.dims || x.data.len() != self.dims.cells() {
            return Err(ModelError::Dimension {
                what: "trajectories".into(),
                expected: self.dims.cells(),
                found: x.data.len(),
            });
        }
        Ok(())
    }

    /// Empirical-mean cost `(1/q) Σ_{i,j,k} f_k^(i,j)(x_k^(i,j))`.
    pub fn objective_value(&self, x: &Trajectories<T>) -> Result<T, ModelError> {
        let total = self.scenario_costs(x)?.into_iter().fold(T::zero(), |a, b| a + b);
        Ok(total / T::from_usize(self.dims.q).unwrap())
    }

    /// `Σ_{i,k} f_k^(i,j)` for each scenario `j`.
    pub fn scenario_costs(&self, x: &Trajectories<T>) -> Result<Vec<T>, ModelError> {
        self.check_traj(x)?;
        let Dims { m, n, q } = self.dims;
        Ok((0..q)
            .map(|j| {
                let mut s = T::zero();
                for i in 0..m {
                    for k in 0..n {
                        let c = self.dims.cell(i, j, k);
                        s = s + self.cost.eval(c, x.data[c]);
                    }
                }
                s
            })
            .collect())
    }

    /// Worst-scenario cost, reported after the fact; the solver itself
    /// always minimizes the empirical mean.
    pub fn max_scenario_cost(&self, x: &Trajectories<T>) -> Result<T, ModelError> {
        Ok(self.scenario_costs(x)?.into_iter().fold(T::neg_infinity(), T::max))
    }

    /// Constraint violations of the robust problem, per scenario.
    pub fn nominal_feasibility_check(&self, x: &Trajectories<T>) -> Result<FeasibilityReport<T>, ModelError> {
        self.check_traj(x)?;
        let Dims { m, n, q } = self.dims;
        let d = self.dims;
        let scenarios = (0..q)
            .map(|j| {
                let mut demand = T::neg_infinity();
                for k in 0..n {
                    let supplied = (0..m).fold(T::zero(), |a, i| a + x.data[d.cell(i, j, k)]);
                    demand = demand.max(self.demand[d.scen(j, k)] - supplied);
                }
                let mut capacity = T::neg_infinity();
                let mut bounds = T::zero();
                for i in 0..m {
                    let used = (0..n).fold(T::zero(), |a, k| {
                        let c = d.cell(i, j, k);
                        a + self.loss.eval(c, x.data[c])
                    });
                    capacity = capacity.max(used - self.capacity[i]);
                    for k in 0..n {
                        let v = x.data[d.cell(i, j, k)];
                        let b = d.bound(i, k);
                        bounds = bounds.max(self.lo[b] - v).max(v - self.hi[b]);
                    }
                }
                ScenarioViolation { demand, capacity, bounds }
            })
            .collect();
        Ok(FeasibilityReport { scenarios })
    }

    /// Largest absolute demand value, or 1; a natural tolerance scale.
    pub fn scale(&self) -> T {
        self.demand.iter().fold(T::one(), |a, y| a.max(y.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioViolation<T> {
    /// `max_k (y_k − Σ_i x_k)`
    pub demand: T,
    /// `max_i (Σ_k g_k(x_k) − c^(i))`; `−∞` when every capacity is unbounded
    pub capacity: T,
    /// largest distance outside any box, 0 when inside
    pub bounds: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport<T> {
    pub scenarios: Vec<ScenarioViolation<T>>,
}

impl<T: Scalar> FeasibilityReport<T> {
    pub fn max_demand(&self) -> T {
        self.scenarios.iter().fold(T::neg_infinity(), |a, s| a.max(s.demand))
    }

    pub fn max_capacity(&self) -> T {
        self.scenarios.iter().fold(T::neg_infinity(), |a, s| a.max(s.capacity))
    }

    pub fn max_bounds(&self) -> T {
        self.scenarios.iter().fold(T::zero(), |a, s| a.max(s.bounds))
    }

    pub fn max_violation(&self) -> T {
        self.max_demand().max(self.max_capacity()).max(self.max_bounds())
    }

    pub fn is_feasible(&self, tol: T) -> bool {
        self.max_violation() <= tol
    }
}

/// Per-cell values `x_k^(i,j)` in `(m, q, n)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories<T> {
    pub dims: Dims,
    pub data: Vec<T>,
}

impl<T: Scalar> Trajectories<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self { dims, data: vec![T::zero(); dims.cells()] }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut out = Self::zeros(dims);
        for i in 0..dims.m {
            for j in 0..dims.q {
                for k in 0..dims.n {
                    out.data[dims.cell(i, j, k)] = f(i, j, k);
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.dims.cell(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let c = self.dims.cell(i, j, k);
        self.data[c] = v;
    }

    /// Contiguous trajectory of resource `i` in scenario `j`.
    pub fn row(&self, i: usize, j: usize) -> &[T] {
        let start = self.dims.cell(i, j, 0);
        &self.data[start..start + self.dims.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// an iterate became non-finite; the solution holds the failing iterate
    Error,
}

/// One residual check of the solve loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord<T> {
    pub iter: usize,
    pub r: T,
    pub sigma: T,
    pub rho: [T; 4],
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    /// consensus first-step allocations `x_1^(i)`
    pub x1: Vec<T>,
    pub x: Trajectories<T>,
    /// slack `s_k^(j)`, shape `(q, n)`
    pub s: Vec<T>,
    pub z: Trajectories<T>,
    /// `h^(i,j)`, shape `(m, q)`
    pub h: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub final_r: T,
    pub final_sigma: T,
    pub status: SolveStatus,
    pub history: Vec<ResidualRecord<T>>,
    pub final_rho: [T; 4],
}

impl<T: Scalar> Solution<T> {
    /// `max_{i,j} |x_1^(i,j) − x_1^(i)|`
    pub fn consensus_gap(&self) -> T {
        let d = self.x.dims;
        let mut gap = T::zero();
        for i in 0..d.m {
            for j in 0..d.q {
                gap = gap.max((self.x.get(i, j, 0) - self.x1[i]).abs());
            }
        }
        gap
    }
}
