//! Scripted drivers that reproduce the desk-scale studies end to end:
//! rotation evil twins, the perturbation-decay oracle, layer-similarity
//! comparisons, and the merge-percentage ablation. Every driver is
//! bit-reproducible under a fixed seed; grid points may run in parallel but
//! reports assemble in grid order.

mod cka_compare;
mod comparison;
mod evil_twin;
mod spearman;
mod synthetic;
mod taylor;
mod trainer;

pub use cka_compare::{run_cka_compare, CkaCompareConfig};
pub use comparison::{
    run_merge_ablation, run_method_comparison, AblationConfig, AblationRow, ComparisonConfig,
    MethodComparison, MethodResult,
};
pub use evil_twin::{run_evil_twin, run_evil_twin_methods, EvilTwinConfig, EvilTwinReport, EvilTwinRow};
pub use spearman::spearman_rho;
pub use synthetic::synthetic_dataset;
pub use taylor::{run_taylor_oracle, TaylorConfig, TaylorPoint};
pub use trainer::{
    accuracy_on_view, gradient_on_view, train, Method, PolicyKind, TrainOptions, TrainState,
};

use crate::data_aug::{load_idx, take_prefix, Dataset};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use std::path::PathBuf;

/// Where a driver's data comes from: MNIST-style IDX files on disk, or the
/// seeded synthetic glyph fallback.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Idx { images: PathBuf, labels: PathBuf },
}

/// Loads the training pool (the first `pool_size` records) and a held-out
/// split (the following `holdout_size` records, never used for gradient
/// updates).
pub fn load_pool(
    source: &DataSource,
    seed: u64,
    pool_size: usize,
    holdout_size: usize,
) -> Result<(Dataset, Dataset)> {
    let total = pool_size + holdout_size;
    let full = match source {
        DataSource::Synthetic => {
            let mut rng = Rng::from_seed(seed).derive(0x5D47);
            synthetic_dataset(&mut rng, total)
        }
        DataSource::Idx { images, labels } => {
            let ds = load_idx(images, labels)?;
            if ds.len() < total {
                return Err(Error::PrefixTooLong {
                    requested: total,
                    available: ds.len(),
                });
            }
            take_prefix(&ds, total)?
        }
    };
    let pool = full.slice(0, pool_size)?;
    let holdout = full.slice(pool_size, total)?;
    Ok((pool, holdout))
}
