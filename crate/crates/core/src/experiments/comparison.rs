//! Method comparison under the random-augmentation policy, and the
//! merge-percentage ablation built on top of it.
//!
//! Every method starts from the same initial weights and consumes the same
//! data and augmentation stream (shuffles, transform draws, and noise come
//! from a shared derivation; method-private randomness is a separate
//! channel). The feature-stability score is the mean diagonal CKA between
//! the mid-training model and the final model on a clean probe batch.

use super::trainer::{accuracy_on_view, train, Method, PolicyKind, TrainOptions, TrainState};
use super::{load_pool, DataSource};
use crate::data_aug::TransformSet;
use crate::diagnostics::cka_matrix;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::numerics::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub source: DataSource,
    pub seed: u64,
    pub tset: TransformSet,
    pub policy: PolicyKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub pool_size: usize,
    pub holdout_size: usize,
    pub probe_size: usize,
    pub methods: Vec<Method>,
}

impl ComparisonConfig {
    pub fn new(source: DataSource, seed: u64) -> Self {
        ComparisonConfig {
            source,
            seed,
            tset: TransformSet::default_set(),
            policy: PolicyKind::Uniform,
            epochs: 5,
            batch_size: 64,
            lr: 0.05,
            hidden: vec![256, 128],
            pool_size: 10_000,
            holdout_size: 2_000,
            probe_size: 512,
            methods: vec![
                Method::Vanilla,
                Method::Replay { fraction: 0.5 },
                Method::Merge { p: 80.0, k: 100 },
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: String,
    /// Held-out accuracy under each transform of the set, in set order.
    pub view_accuracies: Vec<(String, f64)>,
    /// Held-out accuracy on the untransformed images.
    pub clean_accuracy: f64,
    /// Mean over the transform views (clean excluded).
    pub mean_view_accuracy: f64,
    /// Diagonal-mean CKA between the mid-training and final model.
    pub cka_diag_mean: f64,
}

#[derive(Debug, Clone)]
pub struct MethodComparison {
    pub results: Vec<MethodResult>,
}

/// Trains one model per method and evaluates each on every held-out view.
pub fn run_method_comparison(cfg: &ComparisonConfig) -> Result<MethodComparison> {
    if cfg.methods.is_empty() {
        return Err(Error::EmptyInput {
            what: "method list",
        });
    }
    if cfg.probe_size < 2 || cfg.probe_size > cfg.holdout_size {
        return Err(Error::InvalidParameter {
            what: "probe size",
            value: cfg.probe_size as f64,
        });
    }
    let (pool, holdout) = load_pool(&cfg.source, cfg.seed, cfg.pool_size, cfg.holdout_size)?;
    let probe = holdout.slice(0, cfg.probe_size)?;
    let master = Rng::from_seed(cfg.seed);

    let mut arch = vec![pool.pixels_per_image()];
    arch.extend_from_slice(&cfg.hidden);
    arch.push(pool.class_count());
    let shared_init = ModelState::init(&arch, &mut master.derive(0))?;

    let results: Vec<MethodResult> = cfg
        .methods
        .par_iter()
        .map(|method| -> Result<MethodResult> {
            let mut model = shared_init.clone();
            let mut state = TrainState::new(method, cfg.pool_size);
            // All methods draw the same data/augmentation stream.
            let mut rng_data = master.derive(1);
            let mut rng_method = master.derive(2);

            let first = cfg.epochs.div_ceil(2);
            let rest = cfg.epochs - first;
            let mut opts = TrainOptions {
                epochs: first,
                batch_size: cfg.batch_size,
                lr: cfg.lr,
                policy: cfg.policy.clone(),
                method: method.clone(),
            };
            train(
                &mut model,
                &pool,
                &cfg.tset,
                &opts,
                &mut state,
                &mut rng_data,
                &mut rng_method,
            )?;
            let mid = model.clone();
            opts.epochs = rest;
            train(
                &mut model,
                &pool,
                &cfg.tset,
                &opts,
                &mut state,
                &mut rng_data,
                &mut rng_method,
            )?;

            let cka_diag_mean = cka_matrix(&mid, &model, &probe)?.diagonal_mean();

            let mut view_accuracies = Vec::with_capacity(cfg.tset.len());
            for (ti, t) in cfg.tset.iter().enumerate() {
                let mut rng = master.derive(0x100 + ti as u64);
                view_accuracies.push((t.to_string(), accuracy_on_view(&model, &holdout, t, &mut rng)?));
            }
            let clean_accuracy = model.accuracy(&holdout)?;
            let mean_view_accuracy = view_accuracies.iter().map(|(_, a)| a).sum::<f64>()
                / view_accuracies.len() as f64;

            Ok(MethodResult {
                method: method.name().to_string(),
                view_accuracies,
                clean_accuracy,
                mean_view_accuracy,
                cka_diag_mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MethodComparison { results })
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    /// Shared protocol; its `methods` field is ignored.
    pub base: ComparisonConfig,
    pub p_grid: Vec<f64>,
    pub merge_k: u64,
}

impl AblationConfig {
    pub fn new(source: DataSource, seed: u64) -> Self {
        AblationConfig {
            base: ComparisonConfig::new(source, seed),
            p_grid: vec![20.0, 40.0, 60.0, 80.0, 100.0],
            merge_k: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub p: f64,
    pub mean_accuracy: f64,
}

/// Reruns the comparison with the merge method at each percentage of the
/// grid, all under the shared seed.
pub fn run_merge_ablation(cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    if cfg.p_grid.is_empty() {
        return Err(Error::EmptyInput { what: "p grid" });
    }
    cfg.p_grid
        .par_iter()
        .map(|&p| -> Result<AblationRow> {
            let mut run = cfg.base.clone();
            run.methods = vec![Method::Merge { p, k: cfg.merge_k }];
            let comparison = run_method_comparison(&run)?;
            Ok(AblationRow {
                p,
                mean_accuracy: comparison.results[0].mean_view_accuracy,
            })
        })
        .collect()
}
