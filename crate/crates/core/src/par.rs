//! Data-parallel helpers. With the `parallel` feature these run on the
//! rayon pool; without it they fall back to plain sequential iteration.
//! Every helper returns results in input order, so output is identical
//! either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether the crate was built with the rayon backend.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Applies `f(row_index, row)` to each `width`-sized chunk of `data`.
pub fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Sequential counterpart of [`for_each_row`], always available. Used by
/// benchmarks to compare both paths in one build.
pub fn for_each_row_seq<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    if width == 0 {
        return;
    }
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = map(&v, |x| x * 3);
        assert_eq!(out, v.iter().map(|x| x * 3).collect::<Vec<_>>());
        assert_eq!(map_range(5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }

    #[test]
    fn row_helpers_agree() {
        let mut a = vec![0.0; 12];
        let mut b = vec![0.0; 12];
        for_each_row(&mut a, 3, |i, r| r.iter_mut().for_each(|x| *x = i as f64));
        for_each_row_seq(&mut b, 3, |i, r| r.iter_mut().for_each(|x| *x = i as f64));
        assert_eq!(a, b);
    }
}
