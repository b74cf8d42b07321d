//! Data-parallel helpers. With the `parallel` feature these fan out on a
//! rayon pool; without it every call runs sequentially in order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    /// `jobs = 0` uses rayon's default width.
    Parallel { jobs: usize },
    #[default]
    Auto,
}

impl Parallelism {
    pub fn from_jobs(jobs: usize) -> Self {
        match jobs {
            1 => Parallelism::Sequential,
            n => Parallelism::Parallel { jobs: n },
        }
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map_ordered<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        Parallelism::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Auto => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Parallelism::Parallel { jobs } => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("falling back to sequential execution: {e}");
                    items.iter().map(f).collect()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_every_mode() {
        let xs: Vec<u64> = (0..1000).collect();
        let expect: Vec<u64> = xs.iter().map(|x| x * x).collect();
        for mode in [Parallelism::Sequential, Parallelism::Auto, Parallelism::Parallel { jobs: 3 }] {
            assert_eq!(map_ordered(&xs, mode, |x| x * x), expect);
        }
    }
}
