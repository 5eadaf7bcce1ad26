//! Serial and multi-worker execution of per-cell kernels.
//!
//! Kernels are pure functions of a cell index that write only their own
//! output slot, so every schedule produces the same bits. Reductions are
//! restricted to `max`, which is order-independent.

mod bench;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{
    bench_admm, bench_quartic, checksum, crossover, random_quartics, write_bench_csv, BenchError, BenchEvent,
    BenchReport, MIN_REPETITIONS,
};

/// Environment variable that pins the worker count of the default parallel backend.
pub const WORKERS_ENV: &str = "QADMM_WORKERS";

const MIN_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Serial,
    Parallel,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Serial => "serial",
            BackendKind::Parallel => "parallel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backend {
    pub kind: BackendKind,
    /// ignored by the serial backend
    pub workers: usize,
    /// cells per work unit; `None` picks `N / (8·workers)`, at least 1024
    pub chunk_size: Option<usize>,
}

impl Default for Backend {
    fn default() -> Self {
        Self::serial()
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BackendKind::Serial => write!(f, "serial"),
            BackendKind::Parallel => write!(f, "parallel({})", self.workers),
        }
    }
}

impl Backend {
    pub fn serial() -> Self {
        Self { kind: BackendKind::Serial, workers: 1, chunk_size: None }
    }

    pub fn parallel(workers: usize) -> Self {
        Self { kind: BackendKind::Parallel, workers, chunk_size: None }
    }

    /// Parallel backend sized from `QADMM_WORKERS`, else from the host.
    pub fn parallel_from_env() -> Self {
        let workers = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .filter(|&w: &usize| w >= 1)
            .unwrap_or_else(hardware_workers);
        Self::parallel(workers)
    }

    pub fn with_chunk_size(mut self, chunk: usize) -> Self {
        self.chunk_size = Some(chunk);
        self
    }

    pub fn worker_count(&self) -> usize {
        match self.kind {
            BackendKind::Serial => 1,
            BackendKind::Parallel => self.workers,
        }
    }

    pub fn chunk_for(&self, cells: usize) -> usize {
        self.chunk_size
            .unwrap_or_else(|| (cells / (8 * self.worker_count())).max(MIN_CHUNK))
            .max(1)
    }
}

pub fn hardware_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("chunk size must be at least 1")]
    ZeroChunk,
    #[error("failed to start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// A kernel failure, tagged with the lowest failing cell index.
#[derive(Debug, Clone, PartialEq)]
pub struct CellError<E> {
    pub cell: usize,
    pub error: E,
}

impl<E: fmt::Display> fmt::Display for CellError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell {}: {}", self.cell, self.error)
    }
}

impl<E: fmt::Debug + fmt::Display> std::error::Error for CellError<E> {}

/// Runs kernels on a [`Backend`]. Holds the worker pool for parallel runs.
#[derive(Clone)]
pub struct Executor {
    backend: Backend,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl fmt::Debug for Executor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Executor").field("backend", &self.backend).finish()
    }
}

impl Executor {
    pub fn new(backend: Backend) -> Result<Self, BackendError> {
        if backend.chunk_size == Some(0) {
            return Err(BackendError::ZeroChunk);
        }
        let pool = match backend.kind {
            BackendKind::Serial => None,
            BackendKind::Parallel => {
                if backend.workers == 0 {
                    return Err(BackendError::NoWorkers);
                }
                Some(Arc::new(
                    rayon::ThreadPoolBuilder::new().num_threads(backend.workers).build()?,
                ))
            }
        };
        Ok(Self { backend, pool })
    }

    pub fn serial() -> Self {
        Self { backend: Backend::serial(), pool: None }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// `out[c] = kernel(c)` for every cell.
    pub fn map_into<U, E, F>(&self, out: &mut [U], kernel: F) -> Result<(), CellError<E>>
    where
        U: Send,
        E: Send,
        F: Fn(usize) -> Result<U, E> + Sync,
    {
        let run_chunk = |base: usize, chunk: &mut [U]| -> Option<CellError<E>> {
            for (off, slot) in chunk.iter_mut().enumerate() {
                match kernel(base + off) {
                    Ok(v) => *slot = v,
                    Err(error) => return Some(CellError { cell: base + off, error }),
                }
            }
            None
        };
        match &self.pool {
            None => match run_chunk(0, out) {
                Some(e) => Err(e),
                None => Ok(()),
            },
            Some(pool) => {
                let chunk = self.backend.chunk_for(out.len());
                let first = pool.install(|| {
                    out.par_chunks_mut(chunk)
                        .enumerate()
                        .filter_map(|(ci, c)| run_chunk(ci * chunk, c))
                        .min_by_key(|e| e.cell)
                });
                match first {
                    Some(e) => Err(e),
                    None => Ok(()),
                }
            }
        }
    }

    /// Calls `kernel(row, &mut out[row*len..(row+1)*len])` for every row.
    pub fn map_rows<U, F>(&self, out: &mut [U], row_len: usize, kernel: F)
    where
        U: Send,
        F: Fn(usize, &mut [U]) + Sync,
    {
        if row_len == 0 {
            return;
        }
        match &self.pool {
            None => out.chunks_mut(row_len).enumerate().for_each(|(r, c)| kernel(r, c)),
            Some(pool) => {
                let rows_per_unit = (self.backend.chunk_for(out.len()) / row_len).max(1);
                pool.install(|| {
                    out.par_chunks_mut(row_len)
                        .with_min_len(rows_per_unit)
                        .enumerate()
                        .for_each(|(r, c)| kernel(r, c))
                })
            }
        }
    }

    /// Infallible elementwise update.
    pub fn for_each_mut<U, F>(&self, out: &mut [U], f: F)
    where
        U: Send,
        F: Fn(usize, &mut U) + Sync,
    {
        self.map_rows(out, 1, |c, slot| f(c, &mut slot[0]));
    }

    /// `max_c f(c)` over `0..len`, or `floor` when empty.
    pub fn max_reduce<T, F>(&self, len: usize, floor: T, f: F) -> T
    where
        T: num_traits::Float + Send + Sync,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..len).map(f).fold(floor, T::max),
            Some(pool) => {
                let min_len = self.backend.chunk_for(len);
                pool.install(|| {
                    (0..len)
                        .into_par_iter()
                        .with_min_len(min_len)
                        .map(f)
                        .reduce(|| floor, T::max)
                })
            }
        }
    }
}
