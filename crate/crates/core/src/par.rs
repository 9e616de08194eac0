//! Data-parallel helpers. With the `parallel` feature these run on the rayon
//! pool; without it they fall back to plain iterators. Output order always
//! follows input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

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
        map_sequential(items, f)
    }
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Run `f` on every item, stopping at the first error (which error is
/// reported is unspecified when several items fail in parallel).
pub fn try_for_each<T, E, F>(items: &[T], f: F) -> Result<(), E>
where
    T: Sync,
    E: Send,
    F: Fn(&T) -> Result<(), E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().try_for_each(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().try_for_each(f)
    }
}

/// Fold items into per-chunk accumulators and merge them. `merge` must be
/// associative and `identity` its neutral element; integer tallies satisfy
/// this exactly, so the result does not depend on how work was split.
pub fn fold<T, A, Id, Fo, Me>(items: &[T], identity: Id, fold: Fo, merge: Me) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    Fo: Fn(A, &T) -> A + Sync + Send,
    Me: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().fold(&identity, &fold).reduce(&identity, &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = &merge;
        items.iter().fold(identity(), fold)
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
