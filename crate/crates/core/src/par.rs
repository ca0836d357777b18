//! Work distribution for grid scans.
//!
//! With the `parallel` feature (default) independent work units are mapped
//! on a dedicated rayon pool; otherwise, or with one thread, they run in
//! order on the calling thread. Either way results come back in unit order,
//! and every reduction over them is done sequentially by the caller, so the
//! thread count never changes the numbers.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

pub struct Executor {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("threads", &self.threads).finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            threads: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `threads == 0` uses every available core; `threads == 1` is sequential.
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 1 {
            return Ok(Self::sequential());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            Ok(Self {
                threads: pool.current_num_threads(),
                pool: Some(pool),
            })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Self::sequential())
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn is_parallel(&self) -> bool {
        self.threads > 1
    }

    /// Evaluate `f(0..n)` and return the results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}
