//! Thin switch between rayon and plain iterators.
//!
//! Everything that fans out goes through these helpers so the `parallel`
//! feature can be turned off without touching call sites. Results are
//! always collected in index order, so both builds produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, possibly in parallel.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Apply `f` to every element of `items` in place.
#[cfg(feature = "parallel")]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// Fill `out[i] = f(i)` in chunks.
#[cfg(feature = "parallel")]
pub fn fill_chunked<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    out.par_chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(ci, slot)| {
            let base = ci * chunk.max(1);
            for (j, v) in slot.iter_mut().enumerate() {
                *v = f(base + j);
            }
        });
}

#[cfg(not(feature = "parallel"))]
pub fn fill_chunked<T, F>(out: &mut [T], _chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

#[cfg(feature = "parallel")]
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    (a(), b())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_keeps_order() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn fill_chunked_covers_tail() {
        let mut out = vec![0usize; 37];
        fill_chunked(&mut out, 8, |i| i + 1);
        assert_eq!(out, (1..=37).collect::<Vec<_>>());
    }
}
