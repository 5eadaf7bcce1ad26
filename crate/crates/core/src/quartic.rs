//! Exact minimization of scalar quartic polynomials.
//!
//! The stationary points of `f(x) = Ax⁴ + Bx³ + Cx² + Dx + E` are the roots
//! of the monic cubic `x³ + bx² + cx + d` with `b = 3B/4A`, `c = C/2A` and
//! `d = D/4A`. The sign of `Δ = Q³ + R²` decides, before any root is
//! computed, whether there is one real root (Cardano form) or three
//! (trigonometric form), so no complex arithmetic is ever needed. With three
//! real roots the middle one is a local maximum; the minimizer is whichever of
//! the outer two has the lower objective value.

use std::cmp::Ordering;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuarticError {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("objective is unbounded below (leading coefficient {0})")]
    Unbounded(f64),
    #[error("leading coefficient is degenerate; minimize the quadratic part instead")]
    DegenerateLeading,
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Coefficients of `a·x⁴ + b·x³ + c·x² + d·x + e`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuarticCoeffs<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
}

impl<T: Scalar> QuarticCoeffs<T> {
    pub fn new(a: T, b: T, c: T, d: T, e: T) -> Self {
        Self { a, b, c, d, e }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite()
            && self.b.is_finite()
            && self.c.is_finite()
            && self.d.is_finite()
            && self.e.is_finite()
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (((self.a * x + self.b) * x + self.c) * x + self.d) * x + self.e
    }

    #[inline]
    pub fn derivative(&self, x: T) -> T {
        let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
        ((four * self.a * x + three * self.b) * x + two * self.c) * x + self.d
    }

    #[inline]
    pub fn second_derivative(&self, x: T) -> T {
        let (two, six, twelve) = (T::lit(2.0), T::lit(6.0), T::lit(12.0));
        (twelve * self.a * x + six * self.b) * x + two * self.c
    }

    /// True when the quartic and cubic terms are negligible next to the
    /// quadratic part, measured at the length scale of the quadratic's own
    /// minimizer. Exactly-zero `a` and `b` always count as degenerate.
    pub fn leading_is_degenerate(&self) -> bool {
        if self.a == T::zero() && self.b == T::zero() {
            return true;
        }
        if self.c <= T::zero() {
            return false;
        }
        let x = T::one() + (self.d / (self.c + self.c)).abs();
        let x2 = x * x;
        let high = self.a.abs() * x2 * x2 + self.b.abs() * x2 * x;
        let low = self.c.abs() * x2 + self.d.abs() * x;
        high <= T::lit(T::DEGENERACY_RTOL) * low
    }

    /// Monic cubic whose roots are the stationary points. Requires `a != 0`.
    pub fn reduced_cubic(&self) -> ReducedCubic<T> {
        let four_a = T::lit(4.0) * self.a;
        ReducedCubic {
            b: T::lit(3.0) * self.b / four_a,
            c: self.c / (self.a + self.a),
            d: self.d / four_a,
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s, self.e * s)
    }
}

/// Which closed-form branch produced a set of cubic roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubicBranch {
    /// `Δ > 0`: one real root.
    OneReal,
    /// `Q = R = 0`: a real triple root.
    TripleRoot,
    /// `Δ ≤ 0` otherwise: three real roots (possibly repeated).
    ThreeReal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CubicRoots<T> {
    Single(T),
    Triple(T),
    /// Unsorted, in the order `x_a, x_b, x_c` of the trigonometric form.
    Three([T; 3]),
}

impl<T: Scalar> CubicRoots<T> {
    pub fn branch(&self) -> CubicBranch {
        match self {
            CubicRoots::Single(_) => CubicBranch::OneReal,
            CubicRoots::Triple(_) => CubicBranch::TripleRoot,
            CubicRoots::Three(_) => CubicBranch::ThreeReal,
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        match *self {
            CubicRoots::Single(x) => vec![x],
            CubicRoots::Triple(x) => vec![x; 3],
            CubicRoots::Three(r) => r.to_vec(),
        }
    }
}

/// Monic cubic `x³ + b·x² + c·x + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedCubic<T> {
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> ReducedCubic<T> {
    pub fn new(b: T, c: T, d: T) -> Self {
        Self { b, c, d }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        ((x + self.b) * x + self.c) * x + self.d
    }

    #[inline]
    pub fn q(&self) -> T {
        self.c / T::lit(3.0) - self.b * self.b / T::lit(9.0)
    }

    #[inline]
    pub fn r(&self) -> T {
        self.b * self.c / T::lit(6.0)
            - self.b * self.b * self.b / T::lit(27.0)
            - self.d / T::lit(2.0)
    }

    #[inline]
    pub fn delta(&self) -> T {
        let q = self.q();
        let r = self.r();
        q * q * q + r * r
    }

    /// Real roots by discriminant classification.
    pub fn solve(&self) -> Result<CubicRoots<T>, QuarticError> {
        if !(self.b.is_finite() && self.c.is_finite() && self.d.is_finite()) {
            return Err(QuarticError::NonFinite("cubic solve"));
        }
        let q = self.q();
        let r = self.r();
        let delta = q * q * q + r * r;
        let shift = self.b / T::lit(3.0);

        if delta > T::zero() {
            if r == T::zero() {
                // Q > 0: the lone root sits exactly on the shift
                return Ok(CubicRoots::Single(-shift));
            }
            // S·T = -Q, so the smaller-magnitude cube root is recovered from
            // the larger one instead of from the cancelling sum R ∓ √Δ.
            let sq = delta.sqrt();
            let s = (r + sq.copysign(r)).cbrt();
            let t = if s == T::zero() { T::zero() } else { -q / s };
            return Ok(CubicRoots::Single(s + t - shift));
        }
        if q == T::zero() && r == T::zero() {
            return Ok(CubicRoots::Triple(-shift));
        }

        // Δ ≤ 0 forces Q < 0 here.
        let m = (-q).sqrt();
        let arg = (r / (m * m * m)).max(-T::one()).min(T::one());
        let theta3 = arg.acos() / T::lit(3.0);
        let two_m = m + m;
        let third = T::lit(2.0) * T::PI() / T::lit(3.0);
        Ok(CubicRoots::Three([
            two_m * theta3.cos() - shift,
            two_m * (theta3 + third).cos() - shift,
            two_m * (theta3 + third + third).cos() - shift,
        ]))
    }
}

/// Classifies the cubic `x³ + bx² + cx + d` and returns its real roots.
pub fn classify_and_solve_cubic<T: Scalar>(b: T, c: T, d: T) -> Result<CubicRoots<T>, QuarticError> {
    ReducedCubic::new(b, c, d).solve()
}

fn sort3<T: Scalar>(mut r: [T; 3]) -> [T; 3] {
    r.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    r
}

/// Global minimizer of a quartic with positive leading coefficient.
///
/// Fails with [`QuarticError::DegenerateLeading`] when the quartic term is
/// negligible; use [`minimize`] to get the quadratic fallback automatically.
pub fn minimize_quartic<T: Scalar>(q: &QuarticCoeffs<T>) -> Result<T, QuarticError> {
    if !q.is_finite() {
        return Err(QuarticError::NonFinite("quartic minimization"));
    }
    if q.leading_is_degenerate() {
        return Err(QuarticError::DegenerateLeading);
    }
    if q.a <= T::zero() {
        return Err(QuarticError::Unbounded(q.a.as_f64()));
    }
    let cubic = q.reduced_cubic();
    match cubic.solve()? {
        CubicRoots::Single(x) | CubicRoots::Triple(x) => Ok(x),
        CubicRoots::Three(roots) => {
            let [x1, _, x3] = sort3(roots);
            let (b, c, d) = (cubic.b, cubic.c, cubic.d);
            let (x1_2, x3_2) = (x1 * x1, x3 * x3);
            // (f(x1) - f(x3)) / 4A
            let df = (x1_2 * x1_2 - x3_2 * x3_2) / T::lit(4.0)
                + b / T::lit(3.0) * (x1_2 * x1 - x3_2 * x3)
                + c / T::lit(2.0) * (x1_2 - x3_2)
                + d * (x1 - x3);
            Ok(if df > T::zero() { x3 } else { x1 })
        }
    }
}

/// Minimizer of `a2·x² + a1·x`.
pub fn minimize_quadratic<T: Scalar>(a2: T, a1: T) -> Result<T, QuarticError> {
    if !(a2.is_finite() && a1.is_finite()) {
        return Err(QuarticError::NonFinite("quadratic minimization"));
    }
    if a2 <= T::zero() {
        return Err(QuarticError::Unbounded(a2.as_f64()));
    }
    Ok(-a1 / (a2 + a2))
}

/// Global minimizer of a quartic, falling back to the quadratic vertex when
/// the leading terms are degenerate.
pub fn minimize<T: Scalar>(q: &QuarticCoeffs<T>) -> Result<T, QuarticError> {
    if !q.is_finite() {
        return Err(QuarticError::NonFinite("quartic minimization"));
    }
    if q.leading_is_degenerate() {
        minimize_quadratic(q.c, q.d)
    } else {
        minimize_quartic(q)
    }
}

/// Real stationary points of `f`, of whatever effective degree it has.
pub fn stationary_points<T: Scalar>(q: &QuarticCoeffs<T>) -> Result<Vec<T>, QuarticError> {
    if !q.is_finite() {
        return Err(QuarticError::NonFinite("stationary points"));
    }
    if q.leading_is_degenerate() {
        return Ok(if q.c != T::zero() {
            vec![-q.d / (q.c + q.c)]
        } else {
            Vec::new()
        });
    }
    if q.a != T::zero() {
        return Ok(q.reduced_cubic().solve()?.to_vec());
    }
    // f' = 3B x² + 2C x + D with B ≠ 0.
    let (qa, qb, qc) = (T::lit(3.0) * q.b, q.c + q.c, q.d);
    let disc = qb * qb - T::lit(4.0) * qa * qc;
    if disc < T::zero() {
        return Ok(Vec::new());
    }
    let t = -(qb + disc.sqrt().copysign(qb)) / T::lit(2.0);
    let mut out = vec![t / qa];
    if t != T::zero() {
        out.push(qc / t);
    }
    Ok(out)
}

/// Minimizer of `f` over `[lo, hi]`, chosen among the endpoints and the
/// clamped stationary points. Ties go to the smallest candidate.
pub fn minimize_quartic_on_interval<T: Scalar>(
    q: &QuarticCoeffs<T>,
    lo: T,
    hi: T,
) -> Result<T, QuarticError> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(QuarticError::NonFinite("interval bounds"));
    }
    if lo > hi {
        return Err(QuarticError::InvalidInterval { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    let mut candidates = vec![lo, hi];
    candidates.extend(stationary_points(q)?.into_iter().map(|x| x.max(lo).min(hi)));
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));

    let mut best = candidates[0];
    let mut best_val = q.eval(best);
    for &x in &candidates[1..] {
        let v = q.eval(x);
        if v < best_val {
            best = x;
            best_val = v;
        }
    }
    Ok(best)
}
