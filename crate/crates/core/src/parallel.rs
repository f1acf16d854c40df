//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature (on by default) items are processed on the
//! rayon pool; without it, or when [`Execution::Sequential`] is requested,
//! they run in a plain loop. Results always come back in input order, so
//! reductions over them are deterministic either way.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

pub fn par_map<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
