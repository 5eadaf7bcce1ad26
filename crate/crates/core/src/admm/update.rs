//! Augmented-Lagrangian updates, in the order the solve loop applies them.

use super::{AdmmError, PenaltyParams, SolverConfig, SolverState};
use crate::backend::Executor;
use crate::model::{AllocationProblem, Quadratic};
use crate::quartic::{minimize, minimize_quartic_on_interval, QuarticCoeffs};
use crate::scalar::Scalar;

/// First-step consensus data entering the `k = 1` x-update.
#[derive(Debug, Clone, Copy)]
pub struct ConsensusTerm<T> {
    pub x1: T,
    pub nu: T,
}

/// Expanded coefficients of
/// `J(x) = f(x)/q + (ρ1/2)(θ − g(x))² + (ρ3/2)(φ − x)² [+ (ρ4/2)(x1 − x + ν)²]`.
pub fn x_update_coeffs<T: Scalar>(
    cost: Quadratic<T>,
    loss: Quadratic<T>,
    theta: T,
    phi: T,
    consensus: Option<ConsensusTerm<T>>,
    q: T,
    rho: &PenaltyParams<T>,
) -> QuarticCoeffs<T> {
    let half = T::lit(0.5);
    let (b2, b1) = (loss.a2, loss.a1);
    let e = theta - loss.a0;
    let r1 = rho.rho1;
    let mut a = half * r1 * b2 * b2;
    let mut b = r1 * b2 * b1;
    let mut c = half * r1 * (b1 * b1 - T::lit(2.0) * b2 * e) + cost.a2 / q + half * rho.rho3;
    let mut d = -r1 * b1 * e + cost.a1 / q - rho.rho3 * phi;
    let mut const_term = cost.a0 / q + half * r1 * e * e + half * rho.rho3 * phi * phi;
    if let Some(ConsensusTerm { x1, nu }) = consensus {
        let w = x1 + nu;
        c = c + half * rho.rho4;
        d = d - rho.rho4 * w;
        const_term = const_term + half * rho.rho4 * w * w;
    }
    // keep exact zeros exact so degenerate cells dispatch to the quadratic path
    if b2 == T::zero() {
        a = T::zero();
        b = T::zero();
    }
    QuarticCoeffs::new(a, b, c, d, const_term)
}

/// Coefficients of the x-update objective for cell `(i, j, k)` at the
/// current state. `Σ_{l≠i}` uses whatever values `x` currently holds.
pub fn build_x_update_quartic<T: Scalar>(
    i: usize,
    j: usize,
    k: usize,
    state: &SolverState<T>,
    p: &AllocationProblem<T>,
    rho: &PenaltyParams<T>,
) -> QuarticCoeffs<T> {
    let d = p.dims;
    let c = d.cell(i, j, k);
    let sc = d.scen(j, k);
    let others = (0..d.m).filter(|&l| l != i).fold(T::zero(), |a, l| a + state.x[d.cell(l, j, k)]);
    let theta = state.z[c] + state.lambda[c];
    let phi = state.s[sc] - others + p.demand[sc] + state.mu[sc];
    let consensus = (k == 0).then(|| ConsensusTerm { x1: state.x1[i], nu: state.nu[d.pair(i, j)] });
    x_update_coeffs(
        p.cost.get(c),
        p.loss.get(c),
        theta,
        phi,
        consensus,
        T::from_usize(d.q).unwrap(),
        rho,
    )
}

/// x-update: resources in sequence, each one's `(j, k)` cells in parallel.
pub fn update_x<T: Scalar>(
    state: &mut SolverState<T>,
    p: &AllocationProblem<T>,
    rho: &PenaltyParams<T>,
    config: &SolverConfig<T>,
    exec: &Executor,
) -> Result<(), AdmmError> {
    let d = p.dims;
    let block = d.q * d.n;
    let q = T::from_usize(d.q).unwrap();
    for i in 0..d.m {
        let (before, rest) = state.x.split_at_mut(i * block);
        let (mine, after) = rest.split_at_mut(block);
        let (before, after) = (&*before, &*after);
        let (z, lambda, s, mu, x1, nu) = (&state.z, &state.lambda, &state.s, &state.mu, &state.x1, &state.nu);
        let exact = config.exact_box_min;
        exec.map_into(mine, |local| {
            let (j, k) = (local / d.n, local % d.n);
            let c = i * block + local;
            let sc = d.scen(j, k);
            let mut others = T::zero();
            for l in 0..i {
                others = others + before[l * block + local];
            }
            for l in 0..d.m - i - 1 {
                others = others + after[l * block + local];
            }
            let consensus = (k == 0).then(|| ConsensusTerm { x1: x1[i], nu: nu[d.pair(i, j)] });
            let coeffs = x_update_coeffs(
                p.cost.get(c),
                p.loss.get(c),
                z[c] + lambda[c],
                s[sc] - others + p.demand[sc] + mu[sc],
                consensus,
                q,
                rho,
            );
            let b = d.bound(i, k);
            let (lo, hi) = (p.lo[b], p.hi[b]);
            if exact {
                minimize_quartic_on_interval(&coeffs, lo, hi)
            } else {
                minimize(&coeffs).map(|x| x.max(lo).min(hi))
            }
        })
        .map_err(|e| {
            let c = i * block + e.cell;
            AdmmError::Kernel { i: i + 1, j: e.cell / d.n + 1, k: e.cell % d.n + 1, flat: c, source: e.error }
        })?;
    }
    Ok(())
}

/// `z^(i,j) = v + ρ2/(ρ1 + nρ2)·(h + p − 1ᵀv)·1` with `v = g(x) − λ`.
pub fn update_z<T: Scalar>(
    state: &mut SolverState<T>,
    p: &AllocationProblem<T>,
    rho: &PenaltyParams<T>,
    exec: &Executor,
) {
    let d = p.dims;
    let n = T::from_usize(d.n).unwrap();
    let w = rho.rho2 / (rho.rho1 + n * rho.rho2);
    let (x, lambda, h, mult) = (&state.x, &state.lambda, &state.h, &state.p);
    exec.map_rows(&mut state.z, d.n, |row, z| {
        let start = row * d.n;
        let mut sum = T::zero();
        for (k, zk) in z.iter_mut().enumerate() {
            let c = start + k;
            *zk = p.loss.eval(c, x[c]) - lambda[c];
            sum = sum + *zk;
        }
        let corr = w * (h[row] + mult[row] - sum);
        z.iter_mut().for_each(|zk| *zk = *zk + corr);
    });
}

/// `x_1^(i) = (1/q) Σ_j (x_1^(i,j) − ν^(i,j))`.
pub fn update_x1<T: Scalar>(state: &mut SolverState<T>) {
    let d = state.dims;
    let q = T::from_usize(d.q).unwrap();
    for i in 0..d.m {
        let sum = (0..d.q).fold(T::zero(), |a, j| a + state.x[d.cell(i, j, 0)] - state.nu[d.pair(i, j)]);
        state.x1[i] = sum / q;
    }
}

/// `h^(i,j) = min(c^(i), 1ᵀz^(i,j) − p^(i,j))`.
pub fn update_h<T: Scalar>(state: &mut SolverState<T>, p: &AllocationProblem<T>, exec: &Executor) {
    let d = p.dims;
    let (z, mult) = (&state.z, &state.p);
    exec.for_each_mut(&mut state.h, |pair, h| {
        let start = pair * d.n;
        let used = z[start..start + d.n].iter().fold(T::zero(), |a, &v| a + v);
        *h = (used - mult[pair]).min(p.capacity[pair / d.q]);
    });
}

/// `s_k^(j) = max(0, Σ_i x_k^(i,j) − y_k^(j) − μ_k^(j))`.
pub fn update_s<T: Scalar>(state: &mut SolverState<T>, p: &AllocationProblem<T>, exec: &Executor) {
    let d = p.dims;
    let (x, mu) = (&state.x, &state.mu);
    exec.for_each_mut(&mut state.s, |sc, s| {
        let (j, k) = (sc / d.n, sc % d.n);
        let sum = (0..d.m).fold(T::zero(), |a, i| a + x[d.cell(i, j, k)]);
        *s = (sum - p.demand[sc] - mu[sc]).max(T::zero());
    });
}

/// Scaled multiplier ascent on all four equality-constraint families.
pub fn update_duals<T: Scalar>(state: &mut SolverState<T>, p: &AllocationProblem<T>, exec: &Executor) {
    let d = p.dims;
    let (x, z, s, h, x1) = (&state.x, &state.z, &state.s, &state.h, &state.x1);
    exec.for_each_mut(&mut state.mu, |sc, mu| {
        let (j, k) = (sc / d.n, sc % d.n);
        let sum = (0..d.m).fold(T::zero(), |a, i| a + x[d.cell(i, j, k)]);
        *mu = *mu + s[sc] - sum + p.demand[sc];
    });
    exec.for_each_mut(&mut state.lambda, |c, l| {
        *l = *l + z[c] - p.loss.eval(c, x[c]);
    });
    exec.for_each_mut(&mut state.nu, |pair, nu| {
        let i = pair / d.q;
        *nu = *nu + x1[i] - x[pair * d.n];
    });
    exec.for_each_mut(&mut state.p, |pair, mult| {
        let start = pair * d.n;
        let used = z[start..start + d.n].iter().fold(T::zero(), |a, &v| a + v);
        *mult = *mult + h[pair] - used;
    });
}

/// Primal residual `r` and dual residual `σ` against the `prev_*` copies.
pub fn compute_residuals<T: Scalar>(
    state: &SolverState<T>,
    p: &AllocationProblem<T>,
    rho: &PenaltyParams<T>,
    exec: &Executor,
) -> (T, T) {
    let d = p.dims;
    let st = state;
    let zero = T::zero();
    let demand = exec.max_reduce(d.q * d.n, zero, |sc| {
        let (j, k) = (sc / d.n, sc % d.n);
        let sum = (0..d.m).fold(T::zero(), |a, i| a + st.x[d.cell(i, j, k)]);
        (st.s[sc] - sum + p.demand[sc]).abs()
    });
    let loss = exec.max_reduce(d.cells(), zero, |c| (st.z[c] - p.loss.eval(c, st.x[c])).abs());
    let pairs = exec.max_reduce(d.m * d.q, zero, |pair| {
        let start = pair * d.n;
        let used = st.z[start..start + d.n].iter().fold(T::zero(), |a, &v| a + v);
        let cap = (st.h[pair] - used).abs();
        let cons = (st.x[start] - st.x1[pair / d.q]).abs();
        cap.max(cons)
    });
    let r = demand.max(loss).max(pairs);

    let dz = exec.max_reduce(d.cells(), zero, |c| (st.z[c] - st.prev_z[c]).abs());
    let dh = exec.max_reduce(d.m * d.q, zero, |pair| (st.h[pair] - st.prev_h[pair]).abs());
    let ds = exec.max_reduce(d.q * d.n, zero, |sc| {
        let (j, k) = (sc / d.n, sc % d.n);
        let dx = (0..d.m).fold(T::zero(), |a, i| {
            let c = d.cell(i, j, k);
            a + st.x[c] - st.prev_x[c]
        });
        ((st.s[sc] - st.prev_s[sc]) - dx).abs()
    });
    let sigma = (rho.rho1 * dz).max(rho.rho2 * dh).max(rho.rho3 * ds);
    (r, sigma)
}

/// Direction of a penalty adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoChange {
    Increased,
    Decreased,
    Unchanged,
}

/// Residual-balancing update of all four penalties; optionally rescales the
/// scaled multipliers so the unscaled ones stay continuous.
pub fn adapt_rho<T: Scalar>(
    rho: &mut PenaltyParams<T>,
    r: T,
    sigma: T,
    config: &SolverConfig<T>,
    state: &mut SolverState<T>,
) -> RhoChange {
    let change = if sigma == T::zero() {
        if r > T::zero() { RhoChange::Increased } else { RhoChange::Unchanged }
    } else {
        // r/σ vs ratio·r̄/σ̄, multiplied through by σ·σ̄ > 0
        let lhs = r * config.sigma_bar;
        let base = config.r_bar * sigma;
        if lhs > rho.hi_ratio * base {
            RhoChange::Increased
        } else if lhs < rho.lo_ratio * base {
            RhoChange::Decreased
        } else {
            RhoChange::Unchanged
        }
    };
    let factor = match change {
        RhoChange::Increased => rho.tau,
        RhoChange::Decreased => T::one() / rho.tau,
        RhoChange::Unchanged => return change,
    };
    rho.rho1 = rho.rho1 * factor;
    rho.rho2 = rho.rho2 * factor;
    rho.rho3 = rho.rho3 * factor;
    rho.rho4 = rho.rho4 * factor;
    if config.rescale_duals_on_adapt {
        // every penalty moved by the same factor, so every ρ_old/ρ_new agrees
        let inv = match change {
            RhoChange::Increased => T::one() / rho.tau,
            _ => rho.tau,
        };
        for v in [&mut state.mu, &mut state.lambda, &mut state.nu, &mut state.p] {
            v.iter_mut().for_each(|e| *e = *e * inv);
        }
    }
    change
}
