//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled, [`Exec::Parallel`] maps over rayon's
//! thread pool. Without it, every execution mode runs on the calling thread.
//! Results always come back in input order, and reductions use a fixed
//! pairwise tree so the floating-point result does not depend on the thread
//! count.

/// Execution mode for batch kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Ordered map over `0..len`.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }
}

/// Pairwise (tree) sum with a fixed association order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Element-wise pairwise sum of equally long vectors.
pub fn pairwise_sum_vecs(vectors: &[Vec<f64>], len: usize) -> Vec<f64> {
    match vectors.len() {
        0 => vec![0.0; len],
        1 => vectors[0].clone(),
        n => {
            let (lo, hi) = vectors.split_at(n / 2);
            let mut a = pairwise_sum_vecs(lo, len);
            let b = pairwise_sum_vecs(hi, len);
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            a
        }
    }
}
