//! Timing harnesses for the quartic kernel and for whole ADMM solves.
//!
//! Only the work between the start and stop events is timed; coefficient
//! generation and problem setup happen outside that bracket.

use std::io::{self, Write};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Backend, BackendError, BackendKind, Executor};
use crate::admm::{solve_with_executor, AdmmError, SolverConfig};
use crate::model::AllocationProblem;
use crate::quartic::{minimize_quartic, QuarticCoeffs, QuarticError};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

pub const MIN_REPETITIONS: usize = 10;

/// Instrumentation points, reported in the order they happen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchEvent {
    SetupStart { rep: usize },
    SetupEnd { rep: usize },
    TimerStart { rep: usize },
    TimerStop { rep: usize, elapsed_ms: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// quartic count `N`, or scenario count `q` for ADMM runs
    pub size: usize,
    pub backend: BackendKind,
    pub workers: usize,
    pub reps: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// ADMM iterations of the last repetition
    pub iterations: Option<usize>,
    /// sum of the minimizers of the last repetition, for cross-backend checks
    pub checksum: f64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least {MIN_REPETITIONS} repetitions are required, got {0}")]
    TooFewRepetitions(usize),
    #[error("benchmark size must be at least 1")]
    EmptySize,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("quartic kernel failed at cell {cell}: {error}")]
    Quartic { cell: usize, error: QuarticError },
    #[error(transparent)]
    Admm(#[from] AdmmError),
}

/// `n` quartics with coefficients uniform in [−10, 10]; `A` is redrawn until
/// it is at least 0.1.
pub fn random_quartics<T: Scalar>(n: usize, rng: &mut impl Rng) -> Vec<QuarticCoeffs<T>> {
    (0..n)
        .map(|_| {
            let mut a: f64 = rng.gen_range(-10.0..=10.0);
            while a < 0.1 {
                a = rng.gen_range(-10.0..=10.0);
            }
            let mut c = || T::lit(rng.gen_range(-10.0..=10.0));
            QuarticCoeffs::new(T::lit(a), c(), c(), c(), c())
        })
        .collect()
}

/// Order-fixed sum, so equal inputs give equal bits.
pub fn checksum<T: Scalar>(values: &[T]) -> f64 {
    values.iter().map(|v| v.as_f64()).sum()
}

fn summarize(size: usize, backend: Backend, times: &[f64], iterations: Option<usize>, checksum: f64) -> BenchReport {
    let reps = times.len();
    BenchReport {
        size,
        backend: backend.kind,
        workers: backend.worker_count(),
        reps,
        mean_ms: times.iter().sum::<f64>() / reps as f64,
        min_ms: times.iter().cloned().fold(f64::INFINITY, f64::min),
        max_ms: times.iter().cloned().fold(0.0, f64::max),
        iterations,
        checksum,
    }
}

/// Generate `n` quartics, start the clock, minimize all of them on `backend`,
/// stop the clock; repeated `reps` times with fresh coefficients.
pub fn bench_quartic<T: Scalar>(
    n: usize,
    backend: Backend,
    seed: u64,
    reps: usize,
    hook: &mut dyn FnMut(BenchEvent),
) -> Result<BenchReport, BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(reps));
    }
    if n == 0 {
        return Err(BenchError::EmptySize);
    }
    let exec = Executor::new(backend)?;
    let mut rng = stream_rng(seed, Stream::QuarticBench);
    let mut out = vec![T::zero(); n];
    let mut times = Vec::with_capacity(reps);
    for rep in 0..reps {
        hook(BenchEvent::SetupStart { rep });
        let coeffs = random_quartics::<T>(n, &mut rng);
        hook(BenchEvent::SetupEnd { rep });

        hook(BenchEvent::TimerStart { rep });
        let t1 = Instant::now();
        exec.map_into(&mut out, |c| minimize_quartic(&coeffs[c]))
            .map_err(|e| BenchError::Quartic { cell: e.cell, error: e.error })?;
        let elapsed_ms = t1.elapsed().as_secs_f64() * 1e3;
        hook(BenchEvent::TimerStop { rep, elapsed_ms });
        times.push(elapsed_ms);
    }
    Ok(summarize(n, backend, &times, None, checksum(&out)))
}

/// Times `reps` cold solves of `p`. Problem construction and worker-pool
/// start-up happen before the first timer start.
pub fn bench_admm<T: Scalar>(
    p: &AllocationProblem<T>,
    config: &SolverConfig<T>,
    backend: Backend,
    reps: usize,
    hook: &mut dyn FnMut(BenchEvent),
) -> Result<BenchReport, BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(reps));
    }
    hook(BenchEvent::SetupStart { rep: 0 });
    let exec = Executor::new(backend)?;
    p.ensure_valid().map_err(AdmmError::from)?;
    hook(BenchEvent::SetupEnd { rep: 0 });
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for rep in 0..reps {
        hook(BenchEvent::TimerStart { rep });
        let t1 = Instant::now();
        let (sol, _) = solve_with_executor(p, config, None, &exec)?;
        let elapsed_ms = t1.elapsed().as_secs_f64() * 1e3;
        hook(BenchEvent::TimerStop { rep, elapsed_ms });
        times.push(elapsed_ms);
        last = Some(sol);
    }
    let sol = last.expect("reps >= 1");
    Ok(summarize(p.dims.q, backend, &times, Some(sol.iterations), checksum(&sol.x.data)))
}

/// Smallest size from which the parallel mean stays below the serial mean,
/// given reports for both backends over the same sizes.
pub fn crossover(reports: &[BenchReport]) -> Option<usize> {
    let mut sizes: Vec<usize> = reports.iter().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mean = |size: usize, kind: BackendKind| {
        reports.iter().find(|r| r.size == size && r.backend == kind).map(|r| r.mean_ms)
    };
    let faster: Vec<(usize, bool)> = sizes
        .iter()
        .filter_map(|&s| Some((s, mean(s, BackendKind::Parallel)? < mean(s, BackendKind::Serial)?)))
        .collect();
    let tail = faster.iter().rev().take_while(|(_, f)| *f).count();
    if tail == 0 {
        None
    } else {
        Some(faster[faster.len() - tail].0)
    }
}

pub fn write_bench_csv<W: Write>(mut w: W, reports: &[BenchReport]) -> io::Result<()> {
    writeln!(w, "size,backend,workers,reps,mean_ms,min_ms,max_ms,iterations")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6},{}",
            r.size,
            r.backend,
            r.workers,
            r.reps,
            r.mean_ms,
            r.min_ms,
            r.max_ms,
            r.iterations.map(|i| i.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, Quadratic};

    fn report(size: usize, kind: BackendKind, mean_ms: f64) -> BenchReport {
        BenchReport {
            size,
            backend: kind,
            workers: 1,
            reps: 10,
            mean_ms,
            min_ms: mean_ms,
            max_ms: mean_ms,
            iterations: None,
            checksum: 0.0,
        }
    }

    #[test]
    fn generated_leading_coefficients_are_bounded_below() {
        let mut rng = stream_rng(1, Stream::QuarticBench);
        let q = random_quartics::<f64>(10_000, &mut rng);
        assert!(q.iter().all(|c| c.a >= 0.1 && c.a <= 10.0));
        assert!(q.iter().all(|c| [c.b, c.c, c.d, c.e].iter().all(|v| v.abs() <= 10.0)));
    }

    #[test]
    fn too_few_repetitions_are_rejected() {
        let err = bench_quartic::<f64>(10, Backend::serial(), 0, 9, &mut |_| {}).unwrap_err();
        assert!(matches!(err, BenchError::TooFewRepetitions(9)));
        assert!(matches!(bench_quartic::<f64>(0, Backend::serial(), 0, 10, &mut |_| {}), Err(BenchError::EmptySize)));
    }

    #[test]
    fn single_quartic_is_minimized() {
        let r = bench_quartic::<f64>(1, Backend::serial(), 4, 10, &mut |_| {}).unwrap();
        assert_eq!((r.size, r.reps), (1, 10));
        let mut rng = stream_rng(4, Stream::QuarticBench);
        let mut last = Vec::new();
        for _ in 0..10 {
            last = random_quartics::<f64>(1, &mut rng);
        }
        let x = r.checksum;
        let f = |v: f64| last[0].eval(v);
        for dx in [1e-4, -1e-4, 1e-2, -1e-2] {
            assert!(f(x) <= f(x + dx));
        }
    }

    #[test]
    fn setup_is_outside_the_timed_bracket() {
        let mut events = Vec::new();
        bench_quartic::<f64>(100, Backend::serial(), 0, 10, &mut |e| events.push(e)).unwrap();
        assert_eq!(events.len(), 40);
        for (rep, w) in events.chunks(4).enumerate() {
            assert_eq!(w[0], BenchEvent::SetupStart { rep });
            assert_eq!(w[1], BenchEvent::SetupEnd { rep });
            assert_eq!(w[2], BenchEvent::TimerStart { rep });
            assert!(matches!(w[3], BenchEvent::TimerStop { rep: r, .. } if r == rep));
        }
    }

    #[test]
    fn admm_bench_reports_iterations() {
        let mut p = AllocationProblem::<f64>::zeros(Dims::new(1, 2, 2));
        p.hi = vec![5.0, 5.0];
        p.demand = vec![1.0, 2.0, 1.5, 1.0];
        for c in 0..4 {
            p.cost.set(c, Quadratic::new(1.0, 0.1, 0.0));
        }
        let cfg = SolverConfig::new(1e-6, 1e-6);
        let mut events = Vec::new();
        let r = bench_admm(&p, &cfg, Backend::serial(), 10, &mut |e| events.push(e)).unwrap();
        assert!(r.iterations.unwrap() > 0);
        assert_eq!(r.size, 2);
        assert_eq!(events[0], BenchEvent::SetupStart { rep: 0 });
        assert_eq!(events[1], BenchEvent::SetupEnd { rep: 0 });
        assert_eq!(events.len(), 22);
    }

    #[test]
    fn crossover_is_first_size_of_the_winning_tail() {
        use BackendKind::*;
        let reports = vec![
            report(10, Serial, 1.0),
            report(10, Parallel, 2.0),
            report(100, Serial, 3.0),
            report(100, Parallel, 2.0),
            report(1000, Serial, 5.0),
            report(1000, Parallel, 6.0),
            report(10_000, Serial, 50.0),
            report(10_000, Parallel, 20.0),
        ];
        assert_eq!(crossover(&reports), Some(10_000));
        assert_eq!(crossover(&reports[..6]), None);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        let mut r = report(1000, BackendKind::Parallel, 1.5);
        r.iterations = Some(42);
        write_bench_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "size,backend,workers,reps,mean_ms,min_ms,max_ms,iterations\n1000,parallel,1,10,1.500000,1.500000,1.500000,42\n"
        );
    }
}
