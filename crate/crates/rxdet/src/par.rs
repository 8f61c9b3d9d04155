//! Data-parallel building blocks with a sequential fallback.
//!
//! Every parallel loop in this crate owns a disjoint slice of the output and
//! iterates its own reduction dimension in a fixed order, so results are
//! bit-identical whether the `parallel` feature is on or off, and for any
//! thread count. Nothing here performs a cross-task floating-point
//! reduction.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Run `f` inside a dedicated pool of `threads` workers (no-op wrapper in
/// sequential builds). Thread count never changes results, only speed.
#[cfg(feature = "parallel")]
pub fn run_with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn run_with_threads<R>(_threads: usize, f: impl FnOnce() -> R) -> R {
    f()
}

/// Map `f` over indexed items, preserving order in the output.
#[cfg(feature = "parallel")]
pub fn map_indexed<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(usize, &I) -> O + Send + Sync,
{
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    F: Fn(usize, &I) -> O,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Sequential variant, always available so benchmarks can compare both.
pub fn map_indexed_seq<I, O, F>(items: &[I], mut f: F) -> Vec<O>
where
    F: FnMut(usize, &I) -> O,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Produce `count` values from an indexed generator.
#[cfg(feature = "parallel")]
pub fn build_indexed<O, F>(count: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Send + Sync,
{
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn build_indexed<O, F>(count: usize, f: F) -> Vec<O>
where
    F: Fn(usize) -> O,
{
    (0..count).map(f).collect()
}

pub fn build_indexed_seq<O, F>(count: usize, f: F) -> Vec<O>
where
    F: Fn(usize) -> O,
{
    (0..count).map(f).collect()
}

/// Run `f` over equal-sized disjoint chunks of `data`, passing the chunk
/// index. Panics if `data.len()` is not a multiple of `chunk`.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    assert_eq!(data.len() % chunk, 0);
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    assert_eq!(data.len() % chunk, 0);
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u32> = (0..100).collect();
        let ys = map_indexed(&xs, |i, x| i as u32 + x);
        let zs = map_indexed_seq(&xs, |i, x| i as u32 + x);
        assert_eq!(ys, zs);
    }

    #[test]
    fn chunks_are_disjoint() {
        let mut v = vec![0usize; 12];
        for_each_chunk_mut(&mut v, 3, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(v, [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }
}
