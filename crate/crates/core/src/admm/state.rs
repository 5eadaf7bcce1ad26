use crate::model::{AllocationProblem, Dims};
use crate::scalar::Scalar;

/// All primal and scaled dual iterates, flat in the layouts of [`Dims`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    pub dims: Dims,
    /// `x_k^(i,j)`, `(m, q, n)`
    pub x: Vec<T>,
    /// `z_k^(i,j)`, `(m, q, n)`
    pub z: Vec<T>,
    /// demand slack `s_k^(j)`, `(q, n)`
    pub s: Vec<T>,
    /// capacity use `h^(i,j)`, `(m, q)`
    pub h: Vec<T>,
    /// consensus first-step value `x_1^(i)`, `(m)`
    pub x1: Vec<T>,
    /// demand multiplier `μ_k^(j)`, `(q, n)`
    pub mu: Vec<T>,
    /// loss multiplier `λ_k^(i,j)`, `(m, q, n)`
    pub lambda: Vec<T>,
    /// consensus multiplier `ν^(i,j)`, `(m, q)`
    pub nu: Vec<T>,
    /// capacity multiplier `p^(i,j)`, `(m, q)`
    pub p: Vec<T>,
    pub prev_x: Vec<T>,
    pub prev_z: Vec<T>,
    pub prev_s: Vec<T>,
    pub prev_h: Vec<T>,
    pub iter: usize,
}

impl<T: Scalar> SolverState<T> {
    /// Box midpoints for `x`, every other primal consistent with `x`, zero
    /// multipliers.
    pub fn initial(p: &AllocationProblem<T>) -> Self {
        let d = p.dims;
        let half = T::lit(0.5);
        let mut x = vec![T::zero(); d.cells()];
        for i in 0..d.m {
            for j in 0..d.q {
                for k in 0..d.n {
                    let b = d.bound(i, k);
                    x[d.cell(i, j, k)] = half * (p.lo[b] + p.hi[b]);
                }
            }
        }
        let mut st = Self {
            dims: d,
            x,
            z: vec![T::zero(); d.cells()],
            s: vec![T::zero(); d.q * d.n],
            h: vec![T::zero(); d.m * d.q],
            x1: vec![T::zero(); d.m],
            mu: vec![T::zero(); d.q * d.n],
            lambda: vec![T::zero(); d.cells()],
            nu: vec![T::zero(); d.m * d.q],
            p: vec![T::zero(); d.m * d.q],
            prev_x: Vec::new(),
            prev_z: Vec::new(),
            prev_s: Vec::new(),
            prev_h: Vec::new(),
            iter: 0,
        };
        st.sync_auxiliary(p);
        st.save_prev();
        st
    }

    /// Recomputes `z, s, h, x1` from `x` (multipliers untouched).
    pub fn sync_auxiliary(&mut self, p: &AllocationProblem<T>) {
        let d = self.dims;
        for c in 0..d.cells() {
            self.z[c] = p.loss.eval(c, self.x[c]);
        }
        for j in 0..d.q {
            for k in 0..d.n {
                let sum = (0..d.m).fold(T::zero(), |a, i| a + self.x[d.cell(i, j, k)]);
                self.s[d.scen(j, k)] = (sum - p.demand[d.scen(j, k)]).max(T::zero());
            }
        }
        let q = T::from_usize(d.q).unwrap();
        for i in 0..d.m {
            let mut acc = T::zero();
            for j in 0..d.q {
                let start = d.cell(i, j, 0);
                let used = self.z[start..start + d.n].iter().fold(T::zero(), |a, &v| a + v);
                self.h[d.pair(i, j)] = used.min(p.capacity[i]);
                acc = acc + self.x[start];
            }
            self.x1[i] = acc / q;
        }
    }

    pub fn save_prev(&mut self) {
        self.prev_x.clone_from(&self.x);
        self.prev_z.clone_from(&self.z);
        self.prev_s.clone_from(&self.s);
        self.prev_h.clone_from(&self.h);
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.z, &self.s, &self.h, &self.x1, &self.mu, &self.lambda, &self.nu, &self.p]
            .iter()
            .all(|v| v.iter().all(|e| e.is_finite()))
    }

    /// Drops the first horizon step, for warm-starting the next solve of a
    /// shrinking-horizon controller. Per-(i,j) quantities are kept; `x1` is
    /// re-centred on the new first steps.
    pub fn shifted(&self) -> Option<Self> {
        let d = self.dims;
        if d.n < 2 {
            return None;
        }
        let nd = Dims::new(d.m, d.n - 1, d.q);
        let cells = |v: &[T]| -> Vec<T> {
            v.chunks(d.n).flat_map(|row| row[1..].iter().copied()).collect()
        };
        let scen = |v: &[T]| -> Vec<T> { v.chunks(d.n).flat_map(|row| row[1..].iter().copied()).collect() };
        let x = cells(&self.x);
        let q = T::from_usize(d.q).unwrap();
        let x1 = (0..d.m)
            .map(|i| (0..d.q).fold(T::zero(), |a, j| a + x[nd.cell(i, j, 0)]) / q)
            .collect();
        let mut out = Self {
            dims: nd,
            z: cells(&self.z),
            s: scen(&self.s),
            h: self.h.clone(),
            x1,
            mu: scen(&self.mu),
            lambda: cells(&self.lambda),
            nu: vec![T::zero(); d.m * d.q],
            p: self.p.clone(),
            prev_x: Vec::new(),
            prev_z: Vec::new(),
            prev_s: Vec::new(),
            prev_h: Vec::new(),
            iter: 0,
            x,
        };
        out.save_prev();
        Some(out)
    }
}
