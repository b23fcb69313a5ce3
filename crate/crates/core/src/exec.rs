//! Scheduling of independent tasks.
//!
//! Estimators hand out work as indexed tasks and reduce the results in index
//! order, so any executor that returns results in that order yields
//! bitwise-identical estimates.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Run `task(i)` for `i in 0..count` and return the results ordered by `i`.
    fn map<T, F>(&self, count: usize, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs tasks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, count: usize, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(task).collect()
    }
}
