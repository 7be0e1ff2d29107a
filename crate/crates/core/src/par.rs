//! Data-parallel helpers. With the `parallel` feature the maps run on the
//! rayon pool; without it they fall back to plain iterators. Results are
//! always collected in index order, so reductions downstream see a fixed
//! summation order either way.

/// How a batch of independent work items is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise the same
    /// as `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn map_indices<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => map_indices(n, f),
        }
    }

    pub fn map<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        self.map_indices(items.len(), |i| f(&items[i]))
    }

    /// Applies `f` to every item in place.
    pub fn for_each_mut<S, F>(self, items: &mut [S], f: F)
    where
        S: Send,
        F: Fn(&mut S) + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter_mut().for_each(f),
            Execution::Parallel => for_each_mut(items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn for_each_mut<S: Send, F: Fn(&mut S) + Sync + Send>(items: &mut [S], f: F) {
    use rayon::prelude::*;
    items.par_iter_mut().for_each(f);
}

#[cfg(not(feature = "parallel"))]
fn for_each_mut<S: Send, F: Fn(&mut S) + Sync + Send>(items: &mut [S], f: F) {
    items.iter_mut().for_each(f);
}

#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Whether this build can actually run work concurrently.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
