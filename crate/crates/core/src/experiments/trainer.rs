//! Shared minibatch training loop used by every driver and the CLI.
//!
//! Randomness is split into two channels so that methods are comparable:
//! `rng_data` drives epoch shuffles, per-step transform selection, and noise
//! application (identical across methods under the uniform policy), while
//! `rng_method` drives method-private choices (reservoir pushes, replay
//! sampling). Weight merging consumes no randomness at all.
//!
//! One transform is drawn per step and applied to the whole minibatch.
//! Replay-enabled runs push every fresh augmented sample into the reservoir
//! and, once the buffer is warm, build each training batch from half fresh
//! and half replayed records (sampling happens before pushing, so a batch
//! never replays itself).

use crate::data_aug::{
    policy_targeted, policy_uniform, sample_transform, Dataset, PolicyDistribution, Transform,
    TransformSet,
};
use crate::error::{Error, Result};
use crate::mitigation::{merge_step, replay_push, replay_sample, ReplayBuffer, ReplayRecord, SnapshotStore};
use crate::model::{GradientVector, ModelState};
use crate::numerics::{Matrix, Rng};

/// Training regime: plain SGD, SGD with exemplar replay, or SGD with
/// drift-ranked weight merging (`FullAverage` is the unmasked special case).
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Vanilla,
    Replay { fraction: f64 },
    Merge { p: f64, k: u64 },
    FullAverage { k: u64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Replay { .. } => "replay",
            Method::Merge { .. } => "merge",
            Method::FullAverage { .. } => "full-average",
        }
    }

    fn merge_params(&self) -> Option<(f64, u64)> {
        match *self {
            Method::Merge { p, k } => Some((p, k)),
            Method::FullAverage { k } => Some((100.0, k)),
            _ => None,
        }
    }
}

/// How each step's transform is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Uniform,
    /// Softmax of `-beta * loss`, with the losses measured on the current
    /// minibatch under each transform.
    Targeted { beta: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub policy: PolicyKind,
    pub method: Method,
}

/// State that survives across `train` calls: the replay reservoir, the merge
/// snapshot, and the global step counter driving the merge schedule.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub buffer: Option<ReplayBuffer>,
    pub store: SnapshotStore,
    pub iteration: u64,
}

impl TrainState {
    /// Fresh state for a method; replay methods get a reservoir sized as
    /// `fraction` of the pool.
    pub fn new(method: &Method, pool_size: usize) -> Self {
        let buffer = match method {
            Method::Replay { fraction } => Some(ReplayBuffer::new(
                (fraction * pool_size as f64).round() as usize,
            )),
            _ => None,
        };
        TrainState {
            buffer,
            store: SnapshotStore::new(),
            iteration: 0,
        }
    }
}

fn view_batch(
    pool: &Dataset,
    indices: &[usize],
    transform: &Transform,
    input_size: usize,
    rng: &mut Rng,
) -> Result<(Vec<Matrix>, Matrix, Vec<usize>)> {
    let mut images = Vec::with_capacity(indices.len());
    let mut data = Vec::with_capacity(indices.len() * input_size);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let img = transform.apply(pool.image(i), rng);
        data.extend_from_slice(img.as_slice());
        images.push(img);
        labels.push(pool.label(i));
    }
    let batch = Matrix::from_vec(indices.len(), input_size, data)?;
    Ok((images, batch, labels))
}

/// Runs `opts.epochs` of minibatch SGD over the pool, mutating the model and
/// the carried state in place.
pub fn train(
    model: &mut ModelState,
    pool: &Dataset,
    tset: &TransformSet,
    opts: &TrainOptions,
    state: &mut TrainState,
    rng_data: &mut Rng,
    rng_method: &mut Rng,
) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyInput {
            what: "training pool",
        });
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidParameter {
            what: "batch size",
            value: 0.0,
        });
    }
    let input_size = model.input_size();
    let uniform = policy_uniform(tset.len())?;

    if let Some((p, k)) = opts.method.merge_params() {
        if state.iteration == 0 {
            merge_step(model, &mut state.store, k, p, 0)?;
        }
    }

    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for epoch in 0..opts.epochs {
        rng_data.shuffle(&mut indices);
        for chunk in indices.chunks(opts.batch_size) {
            let policy: PolicyDistribution = match opts.policy {
                PolicyKind::Uniform => uniform.clone(),
                PolicyKind::Targeted { beta } => {
                    let mut losses = Vec::with_capacity(tset.len());
                    for t in tset.iter() {
                        let (_, probe, labels) =
                            view_batch(pool, chunk, t, input_size, rng_data)?;
                        losses.push(model.loss(&probe, &labels)?);
                    }
                    policy_targeted(&losses, beta)?
                }
            };
            let (aug_id, transform) = sample_transform(rng_data, tset, &policy)?;
            let (fresh_images, fresh_batch, fresh_labels) =
                view_batch(pool, chunk, transform, input_size, rng_data)?;

            // Replay mix: half fresh, half sampled from the reservoir.
            let mut batch = fresh_batch;
            let mut labels = fresh_labels.clone();
            if matches!(opts.method, Method::Replay { .. }) {
                if let Some(buffer) = &state.buffer {
                    let half = chunk.len() / 2;
                    if half > 0 && buffer.len() >= half {
                        let replayed = replay_sample(buffer, rng_method, half)?;
                        let keep = chunk.len() - half;
                        let mut data = Vec::with_capacity(chunk.len() * input_size);
                        let mut mixed_labels = Vec::with_capacity(chunk.len());
                        for (img, &label) in fresh_images.iter().zip(&fresh_labels).take(keep) {
                            data.extend_from_slice(img.as_slice());
                            mixed_labels.push(label);
                        }
                        for rec in &replayed {
                            data.extend_from_slice(rec.image.as_slice());
                            mixed_labels.push(rec.label);
                        }
                        batch = Matrix::from_vec(chunk.len(), input_size, data)?;
                        labels = mixed_labels;
                    }
                }
            }
            if let Some(buffer) = &mut state.buffer {
                for (img, &label) in fresh_images.into_iter().zip(&fresh_labels) {
                    replay_push(
                        buffer,
                        ReplayRecord {
                            image: img,
                            label,
                            aug_id,
                        },
                        rng_method,
                    );
                }
            }

            let tag = format!("aug={transform};epoch={epoch};iter={}", state.iteration);
            let (_, grad) = model.loss_and_grad(&batch, &labels, tag)?;
            model.sgd_step(&grad, opts.lr)?;
            state.iteration += 1;

            if let Some((p, k)) = opts.method.merge_params() {
                merge_step(model, &mut state.store, k, p, state.iteration)?;
            }
        }
    }
    Ok(())
}

/// Accuracy on the dataset viewed through one transform.
pub fn accuracy_on_view(
    model: &ModelState,
    ds: &Dataset,
    transform: &Transform,
    rng: &mut Rng,
) -> Result<f64> {
    model.accuracy(&transformed_dataset(ds, transform, rng)?)
}

/// Loss gradient on records `[start, end)` viewed through one transform.
pub fn gradient_on_view(
    model: &ModelState,
    ds: &Dataset,
    start: usize,
    end: usize,
    transform: &Transform,
    rng: &mut Rng,
    tag: impl Into<String>,
) -> Result<GradientVector> {
    let indices: Vec<usize> = (start..end).collect();
    let (_, batch, labels) = view_batch(ds, &indices, transform, model.input_size(), rng)?;
    let (_, grad) = model.loss_and_grad(&batch, &labels, tag)?;
    Ok(grad)
}

fn transformed_dataset(ds: &Dataset, transform: &Transform, rng: &mut Rng) -> Result<Dataset> {
    let images: Vec<Matrix> = (0..ds.len())
        .map(|i| transform.apply(ds.image(i), rng))
        .collect();
    Dataset::new(images, ds.labels().to_vec(), ds.class_count())
}

impl ModelState {
    /// Mean cross-entropy without the gradient (policy probing).
    pub fn loss(&self, batch: &Matrix, labels: &[usize]) -> Result<f64> {
        let (logits, _) = self.forward(batch)?;
        if labels.len() != logits.rows() || labels.is_empty() {
            return Err(Error::LengthMismatch {
                what: "labels vs batch rows",
                expected: logits.rows(),
                got: labels.len(),
            });
        }
        let mut loss = 0.0;
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            loss += max + sum.ln() - row[labels[r]];
        }
        Ok(loss / logits.rows() as f64)
    }
}
