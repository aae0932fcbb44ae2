//! Deterministic parallel map-reduce over sample indices.
//!
//! Indices are cut into fixed-size chunks independent of the thread count;
//! each chunk folds sequentially, then chunk results are merged by a
//! pairwise tree in index order. The result is bit-identical for any pool size.

use rayon::prelude::*;

pub const DEFAULT_CHUNK: usize = 256;

pub fn chunked_reduce<A, I, F, M>(count: usize, chunk: usize, init: I, fold: F, merge: M) -> Option<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
    M: Fn(A, A) -> A + Sync,
{
    let chunk = chunk.max(1);
    let n_chunks = count.div_ceil(chunk);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let lo = c * chunk;
            let hi = (lo + chunk).min(count);
            for i in lo..hi {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    tree_merge(partials, &merge)
}

fn tree_merge<A, M: Fn(A, A) -> A>(mut items: Vec<A>, merge: &M) -> Option<A> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Run `f` inside a pool of `workers` threads, or the global pool when `None`.
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: Option<usize>, f: F) -> T {
    match workers {
        Some(w) if w > 0 => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_sum_is_pool_size_invariant() {
        let run = |w| {
            with_workers(Some(w), || {
                chunked_reduce(10_000, 64, || 0.0_f64, |a, i| *a += 1.0 / (i as f64 + 1.0), |a, b| a + b).unwrap()
            })
        };
        let one = run(1);
        assert_eq!(one.to_bits(), run(3).to_bits());
        assert_eq!(one.to_bits(), run(8).to_bits());
    }

    #[test]
    fn empty_range_gives_none() {
        assert!(chunked_reduce(0, 8, || 0, |_, _| {}, |a, b| a + b).is_none());
    }
}
