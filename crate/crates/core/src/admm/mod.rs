//! Scenario-decomposed ADMM for the multi-resource allocation problem.

mod state;
pub mod update;

use std::time::Instant;

use thiserror::Error;

pub use state::SolverState;
pub use update::{
    adapt_rho, build_x_update_quartic, compute_residuals, update_duals, update_h, update_s, update_x,
    update_x1, update_z, x_update_coeffs, ConsensusTerm, RhoChange,
};

use crate::backend::{Backend, BackendError, Executor};
use crate::model::{AllocationProblem, ModelError, ResidualRecord, Solution, SolveStatus, Trajectories};
use crate::quartic::QuarticError;
use crate::scalar::Scalar;

/// Penalty parameters `ρ1..ρ4` and the adaptation factor `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams<T> {
    /// loss coupling `z = g(x)`
    pub rho1: T,
    /// capacity coupling `h = 1ᵀz`
    pub rho2: T,
    /// demand coupling `s = Σx − y`
    pub rho3: T,
    /// first-step consensus
    pub rho4: T,
    pub tau: T,
    pub hi_ratio: T,
    pub lo_ratio: T,
}

impl<T: Scalar> Default for PenaltyParams<T> {
    fn default() -> Self {
        Self {
            rho1: T::lit(1e-4),
            rho2: T::lit(2e-6),
            rho3: T::lit(5e-6),
            rho4: T::lit(5e-6),
            tau: T::lit(1.1),
            hi_ratio: T::lit(1.2),
            lo_ratio: T::lit(0.8),
        }
    }
}

impl<T: Scalar> PenaltyParams<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.rho1, self.rho2, self.rho3, self.rho4]
    }

    pub fn validate(&self) -> Result<(), AdmmError> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        for (name, v) in [("rho1", self.rho1), ("rho2", self.rho2), ("rho3", self.rho3), ("rho4", self.rho4)] {
            if !ok(v) {
                return Err(AdmmError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.tau.is_finite() && self.tau > T::one()) {
            return Err(AdmmError::Config(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.lo_ratio > T::zero() && self.lo_ratio <= self.hi_ratio && self.hi_ratio.is_finite()) {
            return Err(AdmmError::Config("adaptation ratios must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

/// Iteration after which penalties are frozen by default. Residual balancing
/// that never stops can settle into a limit cycle instead of converging.
pub const DEFAULT_ADAPT_UNTIL: usize = 5_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub rho: PenaltyParams<T>,
    pub r_bar: T,
    pub sigma_bar: T,
    pub max_iter: usize,
    pub check_every: usize,
    pub adapt_rho: bool,
    /// no adaptation after this many iterations; `None` adapts throughout
    pub adapt_until: Option<usize>,
    pub rescale_duals_on_adapt: bool,
    pub exact_box_min: bool,
    pub seed: u64,
    pub backend: Backend,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(r_bar: T, sigma_bar: T) -> Self {
        Self {
            rho: PenaltyParams::default(),
            r_bar,
            sigma_bar,
            max_iter: 200_000,
            check_every: 10,
            adapt_rho: true,
            adapt_until: Some(DEFAULT_ADAPT_UNTIL),
            rescale_duals_on_adapt: true,
            exact_box_min: false,
            seed: 0,
            backend: Backend::serial(),
        }
    }

    pub fn validate(&self) -> Result<(), AdmmError> {
        self.rho.validate()?;
        if !(self.r_bar.is_finite() && self.r_bar > T::zero()) {
            return Err(AdmmError::Config(format!("r_bar must be positive, got {}", self.r_bar)));
        }
        if !(self.sigma_bar.is_finite() && self.sigma_bar > T::zero()) {
            return Err(AdmmError::Config(format!("sigma_bar must be positive, got {}", self.sigma_bar)));
        }
        if self.check_every == 0 {
            return Err(AdmmError::Config("check_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error(transparent)]
    Problem(#[from] ModelError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("x-update failed at (i={i}, j={j}, k={k}): {source}")]
    Kernel {
        i: usize,
        j: usize,
        k: usize,
        flat: usize,
        #[source]
        source: QuarticError,
    },
    #[error("warm-start state has dimensions {found:?}, problem has {expected:?}")]
    WarmStartShape { expected: crate::model::Dims, found: crate::model::Dims },
}

/// Iterates and penalties carried from one solve into the next.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart<T> {
    pub state: SolverState<T>,
    pub rho: PenaltyParams<T>,
}

impl<T: Scalar> WarmStart<T> {
    /// Shifts the horizon by one step; `None` once a single step remains.
    pub fn shifted(&self) -> Option<Self> {
        Some(Self { state: self.state.shifted()?, rho: self.rho })
    }
}

pub fn solve<T: Scalar>(p: &AllocationProblem<T>, config: &SolverConfig<T>) -> Result<Solution<T>, AdmmError> {
    solve_warm(p, config, None).map(|(s, _)| s)
}

/// Solves from `warm` when given (its `x` is clamped into the boxes first),
/// else from the default initialization. Returns the final iterates too.
pub fn solve_warm<T: Scalar>(
    p: &AllocationProblem<T>,
    config: &SolverConfig<T>,
    warm: Option<WarmStart<T>>,
) -> Result<(Solution<T>, WarmStart<T>), AdmmError> {
    let exec = Executor::new(config.backend)?;
    solve_with_executor(p, config, warm, &exec)
}

/// As [`solve_warm`], on a caller-owned executor; `config.backend` is ignored.
pub fn solve_with_executor<T: Scalar>(
    p: &AllocationProblem<T>,
    config: &SolverConfig<T>,
    warm: Option<WarmStart<T>>,
    exec: &Executor,
) -> Result<(Solution<T>, WarmStart<T>), AdmmError> {
    p.ensure_valid()?;
    config.validate()?;
    let d = p.dims;
    let (mut st, mut rho) = match warm {
        Some(w) => {
            if w.state.dims != d {
                return Err(AdmmError::WarmStartShape { expected: d, found: w.state.dims });
            }
            let mut st = w.state;
            for i in 0..d.m {
                for j in 0..d.q {
                    for k in 0..d.n {
                        let b = d.bound(i, k);
                        let c = d.cell(i, j, k);
                        st.x[c] = st.x[c].max(p.lo[b]).min(p.hi[b]);
                    }
                }
            }
            st.iter = 0;
            st.save_prev();
            (st, w.rho)
        }
        None => (SolverState::initial(p), config.rho),
    };

    let start = Instant::now();
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let (mut r, mut sigma) = (T::infinity(), T::infinity());

    while st.iter < config.max_iter {
        let check = (st.iter + 1) % config.check_every == 0 || st.iter + 1 == config.max_iter;
        if check {
            st.save_prev();
        }
        update_x(&mut st, p, &rho, config, exec)?;
        update_z(&mut st, p, &rho, exec);
        update_x1(&mut st);
        update_h(&mut st, p, exec);
        update_s(&mut st, p, exec);
        update_duals(&mut st, p, exec);
        st.iter += 1;

        if !st.is_finite() {
            status = SolveStatus::Error;
            break;
        }
        if check {
            (r, sigma) = compute_residuals(&st, p, &rho, exec);
            history.push(ResidualRecord {
                iter: st.iter,
                r,
                sigma,
                rho: rho.as_array(),
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            });
            if r < config.r_bar && sigma < config.sigma_bar {
                status = SolveStatus::Converged;
                break;
            }
            if config.adapt_rho && config.adapt_until.is_none_or(|n| st.iter <= n) {
                adapt_rho(&mut rho, r, sigma, config, &mut st);
            }
        }
    }
    if config.max_iter == 0 {
        (r, sigma) = compute_residuals(&st, p, &rho, exec);
    }

    let x = Trajectories { dims: d, data: st.x.clone() };
    let objective = if status == SolveStatus::Error { T::nan() } else { p.objective_value(&x)? };
    let solution = Solution {
        x1: st.x1.clone(),
        x,
        s: st.s.clone(),
        z: Trajectories { dims: d, data: st.z.clone() },
        h: st.h.clone(),
        objective,
        iterations: st.iter,
        final_r: r,
        final_sigma: sigma,
        status,
        history,
        final_rho: rho.as_array(),
    };
    Ok((solution, WarmStart { state: st, rho }))
}
