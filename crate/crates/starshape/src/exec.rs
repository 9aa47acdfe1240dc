//! Sequential/parallel execution fan-out.
//!
//! Every verification sweep in the crate maps a pure function over an index
//! range and folds the results in index order. Routing the map through this
//! module keeps the `parallel` feature a pure throughput switch: the fold
//! order is fixed, so sums, minima and report contents are bitwise identical
//! with and without rayon.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..len`, parallel when the feature is on.
///
/// Results come back in index order (parallel collection preserves it), so
/// any subsequent reduction is deterministic.
pub fn map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Sequential map, available unconditionally (used by benches to compare
/// against the parallel path, and by callers that are already inside a
/// parallel region).
pub fn map_seq<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// Parallel map, only with the feature; benches compare it to `map_seq`.
#[cfg(feature = "parallel")]
pub fn map_par<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}

/// Fallible map; the first error in index order wins, again so that the
/// reported failure does not depend on thread scheduling.
pub fn try_map<T, F>(len: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> crate::Result<T> + Sync + Send,
{
    let results = map(len, f);
    results.into_iter().collect()
}

/// Chunked deterministic sum: splits `0..len` into fixed-size chunks,
/// sums each chunk sequentially, then folds the chunk sums in order.
/// The chunking (not the thread count) defines the rounding pattern.
pub fn sum_chunked<F>(len: usize, chunk: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk);
    let partials = map(n_chunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(len);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    });
    partials.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_index_order() {
        let v = map(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
        assert_eq!(v, map_seq(100, |i| i * i));
    }

    #[test]
    fn chunked_sum_matches_sequential_fold() {
        let f = |i: usize| (i as f64).sqrt() * 0.1;
        let s = sum_chunked(10_000, 256, f);
        let mut expect = 0.0;
        let partial: Vec<f64> = (0..40).map(|c| (c * 256..((c + 1) * 256).min(10_000)).map(f).sum()).collect();
        for p in partial {
            expect += p;
        }
        assert_eq!(s, expect);
    }

    #[test]
    fn try_map_reports_first_error_by_index() {
        let r = try_map(50, |i| {
            if i % 7 == 3 {
                Err(crate::Error::validation(format!("bad {i}")))
            } else {
                Ok(i)
            }
        });
        let msg = r.unwrap_err().to_string();
        assert!(msg.contains("bad 3"), "{msg}");
    }
}
