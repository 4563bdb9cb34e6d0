//! The rotation evil-twin study: train on one rotated view, retrain on
//! another, and relate the accuracy drop on the first view to the
//! aggregated gradient sign discrepancy between the two views.
//!
//! Phase 1 (the base view) always trains vanilla, so every mitigation
//! method starts from identical weights and the same `acc_before`; the
//! method under test applies to the retraining phase only. Sign-discrepancy
//! probes are taken at the phase-1 weights on held-out batches: the probe
//! gradient `g1` on the base view, and `k` reference gradients on the
//! second view.

use super::trainer::{accuracy_on_view, gradient_on_view, train, Method, PolicyKind, TrainOptions, TrainState};
use super::{load_pool, spearman_rho, DataSource};
use crate::data_aug::{Transform, TransformSet};
use crate::diagnostics::aggregated_sign_discrepancy;
use crate::error::{Error, Result};
use crate::mitigation::ReplayBuffer;
use crate::model::ModelState;
use crate::numerics::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct EvilTwinConfig {
    pub source: DataSource,
    pub seed: u64,
    /// Rotation of the first training phase, degrees.
    pub base_angle: f64,
    /// Second-phase rotations, one report row each.
    pub angles: Vec<f64>,
    /// Mini-batches aggregated into each sign-discrepancy estimate.
    pub sd_batches: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub pool_size: usize,
    pub holdout_size: usize,
    /// Mitigation applied during retraining.
    pub method: Method,
}

impl EvilTwinConfig {
    pub fn new(source: DataSource, seed: u64) -> Self {
        EvilTwinConfig {
            source,
            seed,
            base_angle: 45.0,
            angles: vec![45.0, 30.0, 15.0, 0.0, -15.0, -30.0, -45.0],
            sd_batches: 10,
            phase1_epochs: 5,
            phase2_epochs: 3,
            batch_size: 64,
            lr: 0.05,
            hidden: vec![256, 128],
            pool_size: 10_000,
            holdout_size: 2_000,
            method: Method::Vanilla,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvilTwinRow {
    pub second_angle_deg: f64,
    pub acc_before: f64,
    pub acc_after: f64,
    pub forgetting: f64,
    pub aggregated_sd: f64,
}

#[derive(Debug, Clone)]
pub struct EvilTwinReport {
    pub rows: Vec<EvilTwinRow>,
    pub spearman_rho: f64,
}

/// Runs the study with the configured method.
pub fn run_evil_twin(cfg: &EvilTwinConfig) -> Result<EvilTwinReport> {
    let mut reports = run_evil_twin_methods(cfg, std::slice::from_ref(&cfg.method))?;
    Ok(reports.remove(0).1)
}

/// Runs the study once per method, sharing the phase-1 model, the probes,
/// and `acc_before` across methods.
pub fn run_evil_twin_methods(
    cfg: &EvilTwinConfig,
    methods: &[Method],
) -> Result<Vec<(Method, EvilTwinReport)>> {
    if cfg.angles.is_empty() {
        return Err(Error::EmptyInput { what: "angle grid" });
    }
    if cfg.sd_batches == 0 {
        return Err(Error::EmptyInput {
            what: "sign-discrepancy batch count",
        });
    }
    let probe_span = (cfg.sd_batches + 1) * cfg.batch_size;
    if cfg.holdout_size < probe_span {
        return Err(Error::InvalidParameter {
            what: "holdout too small for the gradient probes",
            value: cfg.holdout_size as f64,
        });
    }

    let (pool, holdout) = load_pool(&cfg.source, cfg.seed, cfg.pool_size, cfg.holdout_size)?;
    let master = Rng::from_seed(cfg.seed);

    let mut arch = vec![pool.pixels_per_image()];
    arch.extend_from_slice(&cfg.hidden);
    arch.push(pool.class_count());
    let mut model = ModelState::init(&arch, &mut master.derive(0))?;

    // Phase 1: vanilla training on the base rotation. The reservoir fills
    // here when any method will replay, so phase-2 replay draws from the
    // base view's stream.
    let base = Transform::Rotate {
        angle_deg: cfg.base_angle,
    };
    let base_set = TransformSet::new(vec![base.clone()])?;
    let replay_capacity = methods.iter().find_map(|m| match m {
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
    let phase1_opts = TrainOptions {
        epochs: cfg.phase1_epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        policy: PolicyKind::Uniform,
        method: Method::Vanilla,
    };
    train(
        &mut model,
        &pool,
        &base_set,
        &phase1_opts,
        &mut phase1_state,
        &mut master.derive(1),
        &mut master.derive(2),
    )?;

    let acc_before = accuracy_on_view(&model, &holdout, &base, &mut master.derive(3))?;
    let g1 = gradient_on_view(
        &model,
        &holdout,
        0,
        cfg.batch_size,
        &base,
        &mut master.derive(4),
        format!("g1:{base}"),
    )?;

    // Aggregated SD per second angle, measured at the phase-1 weights.
    let sds: Vec<f64> = cfg
        .angles
        .par_iter()
        .enumerate()
        .map(|(i, &angle)| -> Result<f64> {
            let second = Transform::Rotate { angle_deg: angle };
            let mut rng = master.derive(0x500 + i as u64);
            let grads = (0..cfg.sd_batches)
                .map(|b| {
                    let start = (b + 1) * cfg.batch_size;
                    gradient_on_view(
                        &model,
                        &holdout,
                        start,
                        start + cfg.batch_size,
                        &second,
                        &mut rng,
                        format!("g2:{second}:batch{b}"),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregated_sign_discrepancy(&g1, &grads)?.aggregated())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(methods.len());
    for method in methods {
        let rows: Vec<EvilTwinRow> = cfg
            .angles
            .par_iter()
            .enumerate()
            .map(|(i, &angle)| -> Result<EvilTwinRow> {
                let second = Transform::Rotate { angle_deg: angle };
                let second_set = TransformSet::new(vec![second])?;
                let mut retrained = model.clone();
                let buffer = match method {
                    Method::Replay { .. } => phase1_state.buffer.clone(),
                    _ => None,
                };
                let mut state = TrainState {
                    buffer,
                    store: Default::default(),
                    iteration: 0,
                };
                let opts = TrainOptions {
                    epochs: cfg.phase2_epochs,
                    batch_size: cfg.batch_size,
                    lr: cfg.lr,
                    policy: PolicyKind::Uniform,
                    method: method.clone(),
                };
                train(
                    &mut retrained,
                    &pool,
                    &second_set,
                    &opts,
                    &mut state,
                    &mut master.derive(0x1000 + i as u64),
                    &mut master.derive(0x2000 + i as u64),
                )?;
                let acc_after =
                    accuracy_on_view(&retrained, &holdout, &base, &mut master.derive(0x3000 + i as u64))?;
                Ok(EvilTwinRow {
                    second_angle_deg: angle,
                    acc_before,
                    acc_after,
                    forgetting: acc_before - acc_after,
                    aggregated_sd: sds[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let forgetting: Vec<f64> = rows.iter().map(|r| r.forgetting).collect();
        let rho = spearman_rho(&sds, &forgetting)?;
        out.push((
            method.clone(),
            EvilTwinReport {
                rows,
                spearman_rho: rho,
            },
        ));
    }
    Ok(out)
}
