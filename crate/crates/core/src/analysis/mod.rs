//! Statistical experiments built on the integrator.
//!
//! Paths fan out over the rayon pool in fixed-size chunks; each chunk folds
//! its paths in index order and the chunk results are merged in chunk
//! order, so every experiment is bit-reproducible at any thread count.

pub mod contraction;
pub mod empirical;
pub mod lambda;
pub mod moments;
pub mod stats;

use rayon::prelude::*;

use crate::error::Result;

pub use contraction::{contraction_experiment, fit_decay_rate, ContractionResult, DecayFit};
pub use empirical::{empirical_qt, invariant_experiment, ks_band, measure_distance, EmpiricalMeasure, InvariantResult};
pub use lambda::{solve_lambda_star, LambdaStar};
pub use moments::{moment_bound, moment_experiment, MomentRow};

/// Paths per work unit.
pub const PATH_CHUNK: usize = 32;

/// Deterministic parallel fold over path indices `0..paths`.
pub fn fold_paths<A, I, F, G>(paths: usize, init: I, fold: F, merge: G) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) -> Result<()> + Sync,
    G: Fn(&mut A, A),
{
    let chunks = paths.div_ceil(PATH_CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * PATH_CHUNK).min(paths);
            for p in c * PATH_CHUNK..end {
                fold(&mut acc, p as u64)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<A>>>()?;
    let mut iter = parts.into_iter();
    let mut total = iter.next().unwrap_or_else(&init);
    for part in iter {
        merge(&mut total, part);
    }
    Ok(total)
}

/// Grid indices `0, every, 2·every, …` plus the final index.
pub(crate) fn output_indices(steps: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut out: Vec<usize> = (0..=steps).step_by(every).collect();
    if *out.last().unwrap() != steps {
        out.push(steps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_is_ordered_and_complete() {
        let got = fold_paths(
            100,
            Vec::new,
            |v, p| {
                v.push(p);
                Ok(())
            },
            |a, b| a.extend(b),
        )
        .unwrap();
        assert_eq!(got, (0..100).collect::<Vec<u64>>());
    }

    #[test]
    fn fold_propagates_errors() {
        let r = fold_paths(
            10,
            || (),
            |_, p| {
                if p == 7 {
                    Err(crate::Error::Precondition("boom".into()))
                } else {
                    Ok(())
                }
            },
            |_, _| {},
        );
        assert!(r.is_err());
    }

    #[test]
    fn output_grid_includes_end() {
        assert_eq!(output_indices(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(output_indices(8, 4), vec![0, 4, 8]);
    }
}
