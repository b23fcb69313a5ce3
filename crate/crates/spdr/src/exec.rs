use rayon::prelude::*;
use spdr_core::exec::Executor;

/// Runs tasks on a rayon pool; results come back in task order, so the
/// thread count never changes an estimate.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = 0` uses every available core.
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        RayonExecutor { pool }
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, count: usize, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(task).collect())
    }
}
