//! Forgetting countermeasures: drift-ranked selective weight merging and
//! exemplar replay memory.
//!
//! Merging keeps a snapshot of the flattened weights, ranks parameters by
//! absolute drift since that snapshot, and averages the top p% back toward
//! it. After each merge the stored snapshot is replaced with the merged
//! weights, so it is always the state from k iterations earlier. The mask
//! cardinality is round(p*N/100) with a floor of one parameter; ranking is
//! global over the flat vector and ties break toward the lower index.

use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::numerics::{argsort_desc, Matrix, Rng};

/// Stored flat parameter copy plus the step index at capture.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub params: Vec<f64>,
    pub iteration: u64,
}

/// Holder for the merge snapshot across training steps.
#[derive(Debug, Clone, Default)]
pub struct SnapshotStore {
    snapshot: Option<Snapshot>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        SnapshotStore::default()
    }

    pub fn snapshot(&self) -> Option<&Snapshot> {
        self.snapshot.as_ref()
    }

    pub fn set(&mut self, params: Vec<f64>, iteration: u64) {
        self.snapshot = Some(Snapshot { params, iteration });
    }
}

/// Binary parameter-selection mask with its target percentage.
#[derive(Debug, Clone)]
pub struct MergeMask {
    bits: Vec<u8>,
    p: f64,
}

impl MergeMask {
    /// Builds a mask from raw 0/1 bits; other byte values are rejected.
    /// The percentage is derived from the bit counts.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyInput { what: "mask bits" });
        }
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidParameter {
                what: "mask bits (must be 0 or 1)",
                value: f64::from(bad),
            });
        }
        let ones = bits.iter().filter(|&&b| b == 1).count();
        let p = 100.0 * ones as f64 / bits.len() as f64;
        Ok(MergeMask { bits, p })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn selected_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// Per-parameter absolute difference between current and snapshot weights.
pub fn drift(theta: &[f64], theta_s: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != theta_s.len() {
        return Err(Error::LengthMismatch {
            what: "drift inputs",
            expected: theta.len(),
            got: theta_s.len(),
        });
    }
    Ok(theta
        .iter()
        .zip(theta_s)
        .map(|(a, b)| (a - b).abs())
        .collect())
}

/// Mask selecting the round(p*N/100) largest drift entries (minimum one);
/// ties keep the lower index.
pub fn top_p_mask(d: &[f64], p: f64) -> Result<MergeMask> {
    if !(p > 0.0 && p <= 100.0) || p.is_nan() {
        return Err(Error::InvalidParameter {
            what: "merge percentage p (must be in (0, 100])",
            value: p,
        });
    }
    if d.is_empty() {
        return Err(Error::EmptyInput {
            what: "drift vector",
        });
    }
    let n = d.len();
    let count = ((p * n as f64 / 100.0).round() as usize).clamp(1, n);
    let order = argsort_desc(d)?;
    let mut bits = vec![0u8; n];
    for &i in order.iter().take(count) {
        bits[i] = 1;
    }
    Ok(MergeMask { bits, p })
}

/// Selective averaging: masked coordinates become the midpoint
/// (theta + theta_s) / 2, unmasked coordinates pass through untouched.
pub fn selective_merge(theta: &[f64], theta_s: &[f64], mask: &MergeMask) -> Result<Vec<f64>> {
    if theta.len() != theta_s.len() {
        return Err(Error::LengthMismatch {
            what: "merge inputs",
            expected: theta.len(),
            got: theta_s.len(),
        });
    }
    if mask.bits.len() != theta.len() {
        return Err(Error::LengthMismatch {
            what: "merge mask",
            expected: theta.len(),
            got: mask.bits.len(),
        });
    }
    Ok(theta
        .iter()
        .zip(theta_s)
        .zip(&mask.bits)
        .map(|((&t, &s), &m)| if m == 1 { midpoint(t, s) } else { t })
        .collect())
}

/// Unmasked weight average; the p = 100 merge reduces to exactly this.
pub fn full_average(theta: &[f64], theta_s: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != theta_s.len() {
        return Err(Error::LengthMismatch {
            what: "merge inputs",
            expected: theta.len(),
            got: theta_s.len(),
        });
    }
    Ok(theta
        .iter()
        .zip(theta_s)
        .map(|(&t, &s)| midpoint(t, s))
        .collect())
}

#[inline]
fn midpoint(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

/// One scheduler tick: at iteration 0 captures the initial snapshot; at
/// positive multiples of `k` merges the live model toward the snapshot
/// (drift ranking, top-p mask, selective averaging) and stores the merged
/// weights as the new snapshot. Other iterations leave the model untouched.
/// A percentage of exactly 100 uses the unmasked average so the two code
/// paths agree bit for bit.
pub fn merge_step(
    model: &mut ModelState,
    store: &mut SnapshotStore,
    k: u64,
    p: f64,
    iteration: u64,
) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            what: "merge interval k (must be >= 1)",
            value: 0.0,
        });
    }
    if iteration == 0 {
        store.set(model.flat_params(), 0);
        return Ok(());
    }
    if iteration % k != 0 {
        return Ok(());
    }
    let theta = model.flat_params();
    let merged = match store.snapshot() {
        Some(snap) => {
            if p == 100.0 {
                full_average(&theta, &snap.params)?
            } else {
                let d = drift(&theta, &snap.params)?;
                let mask = top_p_mask(&d, p)?;
                selective_merge(&theta, &snap.params, &mask)?
            }
        }
        // No snapshot captured yet (merge enabled mid-run): start one now.
        None => {
            store.set(theta, iteration);
            return Ok(());
        }
    };
    model.set_flat_params(&merged)?;
    store.set(merged, iteration);
    Ok(())
}

/// One stored replay record: an augmented image, its label, and which
/// transform produced it.
#[derive(Debug, Clone)]
pub struct ReplayRecord {
    pub image: Matrix,
    pub label: usize,
    pub aug_id: usize,
}

/// Reservoir-sampled memory of past augmented samples. At capacity, each
/// stream element replaces a random slot with probability capacity/seen,
/// keeping the buffer a uniform sample of the whole stream.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    records: Vec<ReplayRecord>,
    seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            records: Vec::with_capacity(capacity.min(1 << 20)),
            seen: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn get(&self, i: usize) -> &ReplayRecord {
        &self.records[i]
    }
}

/// Reservoir push (Algorithm R).
pub fn replay_push(buf: &mut ReplayBuffer, record: ReplayRecord, rng: &mut Rng) {
    buf.seen += 1;
    if buf.capacity == 0 {
        return;
    }
    if buf.records.len() < buf.capacity {
        buf.records.push(record);
    } else {
        let j = rng.index(buf.seen as usize);
        if j < buf.capacity {
            buf.records[j] = record;
        }
    }
}

/// Uniform sample of `m` records without replacement.
pub fn replay_sample<'a>(
    buf: &'a ReplayBuffer,
    rng: &mut Rng,
    m: usize,
) -> Result<Vec<&'a ReplayRecord>> {
    if buf.is_empty() {
        return Err(Error::EmptyInput {
            what: "replay buffer",
        });
    }
    if m > buf.len() {
        return Err(Error::LengthMismatch {
            what: "replay sample size vs buffer",
            expected: buf.len(),
            got: m,
        });
    }
    // Partial Fisher-Yates over an index vector.
    let mut idx: Vec<usize> = (0..buf.len()).collect();
    for i in 0..m {
        let j = i + rng.index(buf.len() - i);
        idx.swap(i, j);
    }
    Ok(idx[..m].iter().map(|&i| buf.get(i)).collect())
}
