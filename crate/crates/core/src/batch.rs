//! Data-parallel helpers. With the `parallel` feature (default) work is
//! spread over the rayon pool; without it every mode runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `f` over every item, results in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// `f` over `0..n`, results in index order.
    pub fn map_range<R, F>(self, n: u64, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(u64) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Runs independent headless matches. Results keep the order of `configs`.
pub fn run_batch(
    configs: &[crate::session::SessionConfig],
    exec: Execution,
) -> Vec<Result<crate::session::MatchResult, crate::session::SessionError>> {
    exec.map(configs, |c| crate::session::run_match(c.clone()).map(|(r, _)| r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let v: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x.wrapping_mul(2654435761) % 97;
        assert_eq!(Execution::Sequential.map(&v, f), Execution::Parallel.map(&v, f));
        assert_eq!(
            Execution::Sequential.map_range(500, |i| i * i),
            Execution::Parallel.map_range(500, |i| i * i)
        );
    }
}
