//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the hot loops fan out over rayon;
//! without it every call runs sequentially. Results are always returned in
//! index order, so both paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How an indexed batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the crate is built without `parallel`.
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
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Like [`Execution::map`] but every job's result is kept, so the
    /// caller can report the first failing index deterministically.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, (usize, E)>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        let results = self.map(n, f);
        let mut out = Vec::with_capacity(n);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => out.push(v),
                Err(e) => return Err((i, e)),
            }
        }
        Ok(out)
    }
}
