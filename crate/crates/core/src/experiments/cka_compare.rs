//! Layer-similarity comparison: train on one transform subset, keep a copy,
//! continue the copy on a second disjoint subset under each method, then
//! measure layer-wise CKA between the original and each continuation on a
//! shared clean probe batch. A control continuation retrains on the first
//! subset itself.

use super::trainer::{train, Method, PolicyKind, TrainOptions, TrainState};
use super::{load_pool, DataSource};
use crate::data_aug::TransformSet;
use crate::diagnostics::{cka_matrix, CkaMatrix};
use crate::error::{Error, Result};
use crate::mitigation::ReplayBuffer;
use crate::model::ModelState;
use crate::numerics::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct CkaCompareConfig {
    pub source: DataSource,
    pub seed: u64,
    /// First-phase transforms.
    pub t1: TransformSet,
    /// Second-phase transforms; must not overlap `t1`.
    pub t2: TransformSet,
    pub probe_size: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub pool_size: usize,
    pub holdout_size: usize,
    /// Continuation methods compared against the control.
    pub methods: Vec<Method>,
}

impl CkaCompareConfig {
    pub fn new(source: DataSource, seed: u64) -> Self {
        CkaCompareConfig {
            source,
            seed,
            t1: TransformSet::parse("rotate:45,brightness:0.2").expect("valid default"),
            t2: TransformSet::parse("rotate:-45,gauss_noise:0.1").expect("valid default"),
            probe_size: 512,
            phase1_epochs: 5,
            phase2_epochs: 3,
            batch_size: 64,
            lr: 0.05,
            hidden: vec![256, 128],
            pool_size: 10_000,
            holdout_size: 2_000,
            methods: vec![
                Method::Vanilla,
                Method::Replay { fraction: 0.5 },
                Method::Merge { p: 80.0, k: 100 },
            ],
        }
    }
}

/// Runs the comparison; the result starts with the `control` row followed by
/// one row per configured method, in order.
pub fn run_cka_compare(cfg: &CkaCompareConfig) -> Result<Vec<(String, CkaMatrix)>> {
    if let Some(shared) = cfg.t1.overlaps(&cfg.t2) {
        return Err(Error::OverlappingTransformSets {
            transform: shared.to_string(),
        });
    }
    if cfg.probe_size < 512 {
        return Err(Error::InvalidParameter {
            what: "probe size (need >= 512)",
            value: cfg.probe_size as f64,
        });
    }
    if cfg.holdout_size < cfg.probe_size {
        return Err(Error::InvalidParameter {
            what: "holdout smaller than probe",
            value: cfg.holdout_size as f64,
        });
    }

    let (pool, holdout) = load_pool(&cfg.source, cfg.seed, cfg.pool_size, cfg.holdout_size)?;
    let probe = holdout.slice(0, cfg.probe_size)?;
    let master = Rng::from_seed(cfg.seed);

    let mut arch = vec![pool.pixels_per_image()];
    arch.extend_from_slice(&cfg.hidden);
    arch.push(pool.class_count());
    let mut original = ModelState::init(&arch, &mut master.derive(0))?;

    let replay_capacity = cfg.methods.iter().find_map(|m| match m {
        Method::Replay { fraction } => {
            Some((fraction * cfg.pool_size as f64).round() as usize)
        }
        _ => None,
    });
    let mut phase1_state = TrainState {
        buffer: replay_capacity.map(ReplayBuffer::new),
        store: Default::default(),
        iteration: 0,
    };
    train(
        &mut original,
        &pool,
        &cfg.t1,
        &TrainOptions {
            epochs: cfg.phase1_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            policy: PolicyKind::Uniform,
            method: Method::Vanilla,
        },
        &mut phase1_state,
        &mut master.derive(1),
        &mut master.derive(2),
    )?;

    // Continuations: control on t1, then each method on t2.
    let mut jobs: Vec<(String, &TransformSet, Method)> =
        vec![("control".to_string(), &cfg.t1, Method::Vanilla)];
    for m in &cfg.methods {
        jobs.push((m.name().to_string(), &cfg.t2, m.clone()));
    }

    jobs.par_iter()
        .enumerate()
        .map(|(i, (name, tset, method))| -> Result<(String, CkaMatrix)> {
            let mut retrained = original.clone();
            let buffer = match method {
                Method::Replay { .. } => phase1_state.buffer.clone(),
                _ => None,
            };
            let mut state = TrainState {
                buffer,
                store: Default::default(),
                iteration: 0,
            };
            train(
                &mut retrained,
                &pool,
                tset,
                &TrainOptions {
                    epochs: cfg.phase2_epochs,
                    batch_size: cfg.batch_size,
                    lr: cfg.lr,
                    policy: PolicyKind::Uniform,
                    method: method.clone(),
                },
                &mut state,
                &mut master.derive(0x100 + i as u64),
                &mut master.derive(0x200 + i as u64),
            )?;
            Ok((name.clone(), cka_matrix(&original, &retrained, &probe)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> CkaCompareConfig {
        let mut cfg = CkaCompareConfig::new(DataSource::Synthetic, 11);
        cfg.pool_size = 1200;
        cfg.holdout_size = 512;
        cfg.phase1_epochs = 3;
        cfg.phase2_epochs = 2;
        cfg.methods = vec![Method::Vanilla, Method::Merge { p: 80.0, k: 10 }];
        cfg
    }

    #[test]
    fn control_keeps_features_and_rows_are_ordered() {
        let rows = run_cka_compare(&small_cfg()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].0, "control");
        assert_eq!(rows[1].0, "vanilla");
        assert_eq!(rows[2].0, "merge");
        let control = rows[0].1.diagonal_mean();
        assert!(control > 0.9, "control diagonal mean {control}");
        for (_, grid) in &rows {
            for v in grid.values().as_slice() {
                assert!((-1e-9..=1.0 + 1e-9).contains(v));
            }
        }
    }

    #[test]
    fn overlapping_subsets_are_rejected() {
        let mut cfg = small_cfg();
        cfg.t2 = TransformSet::parse("rotate:45").unwrap();
        match run_cka_compare(&cfg) {
            Err(Error::OverlappingTransformSets { transform }) => {
                assert_eq!(transform, "rotate:45");
            }
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn small_probe_is_rejected() {
        let mut cfg = small_cfg();
        cfg.probe_size = 100;
        assert!(run_cka_compare(&cfg).is_err());
    }
}
