//! Order-preserving map over a slice, parallel when the `parallel` feature is
//! on and sequential otherwise. Results are identical either way; callers rely
//! on that for deterministic output.

#[cfg(feature = "parallel")]
pub(crate) fn pmap<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn pmap<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    items.iter().map(f).collect()
}
