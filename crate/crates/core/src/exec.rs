//! Worker pool selection. With the `parallel` feature a dedicated rayon pool
//! of the requested size runs the data-parallel stages; without it, or with a
//! single worker, everything runs on the calling thread.

use crate::error::Result;

pub struct Workers {
    count: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(count: usize) -> Result<Self> {
        let count = count.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = if count > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(count)
                        .thread_name(|i| format!("vcec-worker-{i}"))
                        .build()
                        .map_err(|e| std::io::Error::other(e.to_string()))?,
                )
            } else {
                None
            };
            Ok(Workers { count, pool })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Workers { count })
    }

    pub fn sequential() -> Self {
        Workers {
            count: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        return self.pool.is_some();
        #[cfg(not(feature = "parallel"))]
        false
    }

    /// Runs `op` with this pool's parallelism; `parallel` tells `op` whether
    /// to use data-parallel code paths.
    pub fn run<R: Send>(&self, op: impl FnOnce(bool) -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| op(true));
        }
        op(false)
    }
}

/// Hardware parallelism, or 1 when it cannot be determined.
pub fn available_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
