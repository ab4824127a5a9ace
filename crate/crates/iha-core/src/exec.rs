//! Data-parallel execution helpers.
//!
//! With the default `parallel` feature the helpers fan work out over rayon;
//! without it they run the same closures sequentially. Callers must keep
//! per-item work independent and combine results in index order, so outputs
//! are bit-identical across thread counts and across the two feature builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cap the global worker pool. Returns false when the build is sequential or
/// a pool already exists.
#[cfg(feature = "parallel")]
pub fn init_thread_pool(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn init_thread_pool(_threads: usize) -> bool {
    false
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible variant of [`map_indexed`]; returns the first error by index.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Chunk size used for deterministic gradient reductions. Fixed (never
/// derived from the thread count) so sums associate identically everywhere.
pub const REDUCE_CHUNK: usize = 64;

/// Work below this many chunks runs sequentially; the fan-out overhead would
/// dominate otherwise. The reduction tree is the same either way.
const MIN_PAR_CHUNKS: usize = 4;

/// Sum vectors produced per index, chunking the index range so the
/// floating-point reduction tree is independent of thread count. Each chunk
/// gets its own workspace from `init`, and `f(i, workspace, out)` adds item
/// `i`'s contribution into `out` (which arrives zeroed per chunk).
pub fn accumulate_vectors_with<S, I, F>(n: usize, dim: usize, init: I, f: F) -> Vec<f64>
where
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(usize, &mut S, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let run_chunk = |c: usize| {
        let mut acc = vec![0.0; dim];
        let mut workspace = init();
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        for i in start..end {
            f(i, &mut workspace, &mut acc);
        }
        acc
    };
    let partials: Vec<Vec<f64>> = if chunks >= MIN_PAR_CHUNKS {
        map_indexed(chunks, run_chunk)
    } else {
        (0..chunks).map(run_chunk).collect()
    };
    let mut total = vec![0.0; dim];
    for p in partials {
        for (t, v) in total.iter_mut().zip(&p) {
            *t += v;
        }
    }
    total
}

/// [`accumulate_vectors_with`] without a per-chunk workspace.
pub fn accumulate_vectors<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    accumulate_vectors_with(n, dim, || (), |i, _, out| f(i, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn try_map_indexed_propagates_errors() {
        let r: Result<Vec<usize>, &str> =
            try_map_indexed(10, |i| if i == 3 { Err("boom") } else { Ok(i) });
        assert_eq!(r, Err("boom"));
    }

    #[test]
    fn accumulate_matches_sequential_sum() {
        let n = 1000;
        let got = accumulate_vectors(n, 2, |i, out| {
            out[0] += i as f64;
            out[1] += 1.0;
        });
        // same chunked reduction, done by hand
        let mut want = vec![0.0; 2];
        for c in 0..n.div_ceil(REDUCE_CHUNK) {
            let mut part = [0.0; 2];
            for i in c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(n) {
                part[0] += i as f64;
                part[1] += 1.0;
            }
            want[0] += part[0];
            want[1] += part[1];
        }
        assert_eq!(got, want);
    }
}
