//! Multi-threaded trajectory ensembles whose result does not depend on the
//! number of workers.
//!
//! Trajectories are grouped into fixed blocks of consecutive indices. Blocks
//! are computed concurrently in waves and folded into the running sum strictly
//! in block order, which is exactly the order used by the sequential driver,
//! so the floating-point reduction is the same whatever the thread count.

use qdc_core::qsd::{run_block, EnsembleAccumulator, EnsembleSpec};
use qdc_core::Result;
use rayon::prelude::*;

/// Blocks in flight per worker in one wave; bounds the memory held by
/// unmerged block accumulators.
const BLOCKS_PER_WORKER: usize = 2;

/// Runs the ensemble on `workers` threads (all available cores for `None`).
pub fn run_ensemble_parallel(spec: &EnsembleSpec, workers: Option<usize>) -> Result<EnsembleAccumulator> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().expect("thread pool");
    pool.install(|| {
        let n_blocks = spec.n_blocks();
        let wave = (rayon::current_num_threads() * BLOCKS_PER_WORKER).max(1) as u64;
        let mut acc = EnsembleAccumulator::new(spec);
        let mut start = 0;
        while start < n_blocks {
            let end = (start + wave).min(n_blocks);
            let parts: Vec<Result<EnsembleAccumulator>> = (start..end).into_par_iter().map(|b| run_block(spec, b)).collect();
            for part in parts {
                acc.merge(&part?);
            }
            start = end;
        }
        Ok(acc)
    })
}
