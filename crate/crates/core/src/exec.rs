//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is fanned out over rayon.
//! Results are always collected in input order, so the two modes produce
//! identical output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Parallel with an optional thread bound; `None` uses the global pool.
    Parallel(Option<usize>),
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel(None)
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn bounded(threads: usize) -> Self {
        if threads <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel(Some(threads))
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel(bound) => {
                use rayon::prelude::*;
                match bound {
                    None => items.into_par_iter().map(f).collect(),
                    Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                        Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
                        Err(e) => {
                            log::warn!(
                                "could not build a {n}-thread pool ({e}); running sequentially"
                            );
                            items.into_iter().map(f).collect()
                        }
                    },
                }
            }
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel(_) => items.into_iter().map(f).collect(),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.map((0..n).collect(), f)
    }
}
