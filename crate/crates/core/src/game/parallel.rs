//! Trial fan-out. With the `parallel` feature trials run on the rayon pool;
//! without it [`Execution::Parallel`] falls back to a plain loop. Results
//! always come back in trial-index order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

pub fn run_trials<T, F>(count: u64, execution: Execution, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match execution {
        Execution::Sequential => (0..count).map(trial).collect(),
        Execution::Parallel => parallel(count, trial),
    }
}

#[cfg(feature = "parallel")]
fn parallel<T, F>(count: u64, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(trial).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel<T, F>(count: u64, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).map(trial).collect()
}
