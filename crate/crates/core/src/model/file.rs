use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{
    AllocationProblem, Dims, ModelError, Quadratic, QuadraticField, ResidualRecord, Solution,
    SolveStatus, Trajectories,
};
use crate::scalar::Scalar;

/// On-disk problem layout. Nested arrays are indexed `demand[j][k]`,
/// `lo[i][k]`, `hi[i][k]`, `cost[i][j][k] = [a2, a1, a0]`. A `null`
/// capacity means the capacity constraint is omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub demand: Vec<Vec<f64>>,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
    pub capacity: Vec<Option<f64>>,
    pub cost: Vec<Vec<Vec<[f64; 3]>>>,
    pub loss: Vec<Vec<Vec<[f64; 3]>>>,
}

fn expect_len(what: impl FnOnce() -> String, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Dimension { what: what(), expected, found })
    }
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }

    /// Checks every nested length against `(m, n, q)` and converts.
    pub fn to_problem<T: Scalar>(&self) -> Result<AllocationProblem<T>, ModelError> {
        let dims = Dims::new(self.m, self.n, self.q);
        let Dims { m, n, q } = dims;
        let t = T::lit;

        expect_len(|| "demand".into(), q, self.demand.len())?;
        for (j, row) in self.demand.iter().enumerate() {
            expect_len(|| format!("demand[{j}]"), n, row.len())?;
        }
        for (name, rows) in [("lo", &self.lo), ("hi", &self.hi)] {
            expect_len(|| name.into(), m, rows.len())?;
            for (i, row) in rows.iter().enumerate() {
                expect_len(|| format!("{name}[{i}]"), n, row.len())?;
            }
        }
        expect_len(|| "capacity".into(), m, self.capacity.len())?;
        for (name, field) in [("cost", &self.cost), ("loss", &self.loss)] {
            expect_len(|| name.into(), m, field.len())?;
            for (i, per_i) in field.iter().enumerate() {
                expect_len(|| format!("{name}[{i}]"), q, per_i.len())?;
                for (j, per_j) in per_i.iter().enumerate() {
                    expect_len(|| format!("{name}[{i}][{j}]"), n, per_j.len())?;
                }
            }
        }

        let field = |src: &Vec<Vec<Vec<[f64; 3]>>>| {
            let mut out = QuadraticField::zeros(dims.cells());
            for i in 0..m {
                for j in 0..q {
                    for k in 0..n {
                        let [a2, a1, a0] = src[i][j][k];
                        out.set(dims.cell(i, j, k), Quadratic::new(t(a2), t(a1), t(a0)));
                    }
                }
            }
            out
        };
        Ok(AllocationProblem {
            dims,
            demand: self.demand.iter().flatten().map(|&v| t(v)).collect(),
            lo: self.lo.iter().flatten().map(|&v| t(v)).collect(),
            hi: self.hi.iter().flatten().map(|&v| t(v)).collect(),
            capacity: self.capacity.iter().map(|c| c.map_or(T::infinity(), t)).collect(),
            cost: field(&self.cost),
            loss: field(&self.loss),
        })
    }

    pub fn from_problem<T: Scalar>(p: &AllocationProblem<T>) -> Self {
        let d = p.dims;
        let f = |v: T| v.as_f64();
        let nested = |src: &QuadraticField<T>| {
            (0..d.m)
                .map(|i| {
                    (0..d.q)
                        .map(|j| {
                            (0..d.n)
                                .map(|k| {
                                    let c = src.get(d.cell(i, j, k));
                                    [f(c.a2), f(c.a1), f(c.a0)]
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        Self {
            m: d.m,
            n: d.n,
            q: d.q,
            demand: p.demand.chunks(d.n.max(1)).map(|r| r.iter().map(|&v| f(v)).collect()).collect(),
            lo: p.lo.chunks(d.n.max(1)).map(|r| r.iter().map(|&v| f(v)).collect()).collect(),
            hi: p.hi.chunks(d.n.max(1)).map(|r| r.iter().map(|&v| f(v)).collect()).collect(),
            capacity: p.capacity.iter().map(|&c| if c.is_finite() { Some(f(c)) } else { None }).collect(),
            cost: nested(&p.cost),
            loss: nested(&p.loss),
        }
    }
}

/// JSON summary written next to the trajectory tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub status: SolveStatus,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub iterations: usize,
    pub objective: f64,
    pub final_r: f64,
    pub final_sigma: f64,
    pub consensus_gap: f64,
    pub x1: Vec<f64>,
    pub final_rho: [f64; 4],
}

impl SolutionSummary {
    pub fn from_solution<T: Scalar>(s: &Solution<T>) -> Self {
        let d = s.x.dims;
        Self {
            status: s.status,
            m: d.m,
            n: d.n,
            q: d.q,
            iterations: s.iterations,
            objective: s.objective.as_f64(),
            final_r: s.final_r.as_f64(),
            final_sigma: s.final_sigma.as_f64(),
            consensus_gap: s.consensus_gap().as_f64(),
            x1: s.x1.iter().map(|v| v.as_f64()).collect(),
            final_rho: s.final_rho.map(|v| v.as_f64()),
        }
    }
}

/// Writes `i,j,k,x` rows (1-based indices).
pub fn write_trajectories_csv<T: Scalar, W: Write>(mut w: W, x: &Trajectories<T>) -> io::Result<()> {
    writeln!(w, "i,j,k,x")?;
    let d = x.dims;
    for i in 0..d.m {
        for j in 0..d.q {
            for k in 0..d.n {
                writeln!(w, "{},{},{},{}", i + 1, j + 1, k + 1, x.get(i, j, k).as_f64())?;
            }
        }
    }
    Ok(())
}

pub fn write_residual_history_csv<T: Scalar, W: Write>(
    mut w: W,
    history: &[ResidualRecord<T>],
) -> io::Result<()> {
    writeln!(w, "iter,r,sigma,rho1,rho2,rho3,rho4,elapsed_ms")?;
    for h in history {
        let [r1, r2, r3, r4] = h.rho.map(|v| v.as_f64());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.3}",
            h.iter,
            h.r.as_f64(),
            h.sigma.as_f64(),
            r1,
            r2,
            r3,
            r4,
            h.elapsed_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProblemFile {
        ProblemFile {
            m: 1,
            n: 2,
            q: 1,
            demand: vec![vec![1.0, 2.0]],
            lo: vec![vec![0.0, 0.0]],
            hi: vec![vec![5.0, 5.0]],
            capacity: vec![None],
            cost: vec![vec![vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.5]]]],
            loss: vec![vec![vec![[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]]],
        }
    }

    #[test]
    fn null_capacity_is_unbounded_and_round_trips() {
        let f = sample();
        let p: AllocationProblem<f64> = f.to_problem().unwrap();
        assert_eq!(p.capacity, vec![f64::INFINITY]);
        assert_eq!(p.cost.get(p.dims.cell(0, 0, 1)), Quadratic::new(2.0, 0.0, 0.5));
        let back = ProblemFile::from_problem(&p);
        assert_eq!(back, f);
        let json = f.to_json();
        assert_eq!(ProblemFile::from_json(&json).unwrap(), f);
    }

    #[test]
    fn nested_length_errors_name_the_field() {
        let mut f = sample();
        f.cost[0][0].pop();
        match f.to_problem::<f64>() {
            Err(ModelError::Dimension { what, expected: 2, found: 1 }) => assert_eq!(what, "cost[0][0]"),
            other => panic!("{other:?}"),
        }
        let mut f = sample();
        f.demand[0].push(3.0);
        assert!(f.to_problem::<f64>().is_err());
    }

    #[test]
    fn trajectory_csv_layout() {
        let dims = Dims::new(1, 2, 1);
        let x = Trajectories { dims, data: vec![0.5, 1.0] };
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &x).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j,k,x\n1,1,1,0.5\n1,1,2,1\n");
    }
}
