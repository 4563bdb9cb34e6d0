//! Feed-forward classifier with exact manual backpropagation.
//!
//! The network is a stack of dense layers with ReLU on hidden layers and
//! identity on the output; training minimizes mean softmax cross-entropy.
//! Parameters expose a single canonical flat order used by every consumer
//! (gradients, checkpoints, snapshots, merging): for each layer, the weight
//! matrix row-major (rows = fan-in, cols = fan-out), then the bias vector.
//! ReLU's derivative at exactly zero is taken as zero.

use crate::data_aug::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{gauss, matmul, Matrix, Rng};

#[derive(Debug, Clone)]
struct Layer {
    weight: Matrix, // fan_in x fan_out
    bias: Vec<f64>,
}

/// Layer parameters of the classifier plus the flattened-view bookkeeping.
#[derive(Debug, Clone)]
pub struct ModelState {
    layers: Vec<Layer>,
    layer_sizes: Vec<usize>,
}

/// Flattened loss gradient with free-form provenance.
#[derive(Debug, Clone)]
pub struct GradientVector {
    values: Vec<f64>,
    tag: String,
}

impl GradientVector {
    pub fn new(values: Vec<f64>, tag: impl Into<String>) -> Self {
        GradientVector {
            values,
            tag: tag.into(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Post-activation outputs of every layer for one forward pass
/// (batch x layer_width each).
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    layers: Vec<Matrix>,
}

impl ActivationTrace {
    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}

impl ModelState {
    /// He-initialized model: weights ~ N(0, 2/fan_in), biases zero.
    pub fn init(layer_sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidLayerSizes {
                sizes: layer_sizes.to_vec(),
            });
        }
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            layers.push(Layer {
                weight: gauss(rng, fan_in, fan_out, 0.0, std)?,
                bias: vec![0.0; fan_out],
            });
        }
        Ok(ModelState {
            layers,
            layer_sizes: layer_sizes.to_vec(),
        })
    }

    /// Rebuilds a model from its layer sizes and canonical flat parameters.
    pub fn from_flat(layer_sizes: &[usize], params: &[f64]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidLayerSizes {
                sizes: layer_sizes.to_vec(),
            });
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        let mut model = ModelState {
            layers,
            layer_sizes: layer_sizes.to_vec(),
        };
        model.set_flat_params(params)?;
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Total parameter count N.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    /// Forward pass returning logits and the per-layer activation trace.
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ActivationTrace)> {
        if batch.cols() != self.input_size() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: (batch.rows(), batch.cols()),
                right: (self.input_size(), self.output_size()),
            });
        }
        let last = self.layers.len() - 1;
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut act = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&act, &layer.weight)?;
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for (v, b) in row.iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            act = if i < last { z.map(|v| v.max(0.0)) } else { z };
            trace.push(act.clone());
        }
        Ok((act, ActivationTrace { layers: trace }))
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient in
    /// canonical flat order.
    pub fn loss_and_grad(
        &self,
        batch: &Matrix,
        labels: &[usize],
        tag: impl Into<String>,
    ) -> Result<(f64, GradientVector)> {
        if labels.len() != batch.rows() {
            return Err(Error::LengthMismatch {
                what: "labels vs batch rows",
                expected: batch.rows(),
                got: labels.len(),
            });
        }
        if batch.rows() == 0 {
            return Err(Error::EmptyInput { what: "batch" });
        }
        let classes = self.output_size();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidDataset {
                reason: format!("label {bad} >= class count {classes}"),
            });
        }

        let (logits, trace) = self.forward(batch)?;
        let b = batch.rows() as f64;

        // Softmax with max subtraction; dZ = (P - Y) / B.
        let mut loss = 0.0;
        let mut dz = Matrix::zeros(logits.rows(), classes);
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - row[labels[r]];
            for c in 0..classes {
                let p = (row[c] - max).exp() / sum;
                let y = if c == labels[r] { 1.0 } else { 0.0 };
                dz.set(r, c, (p - y) / b);
            }
        }
        loss /= b;

        // Backpropagate: dW_l = A_{l-1}^T dZ_l, db_l = colsum(dZ_l),
        // dZ_{l-1} = (dZ_l W_l^T) * 1[A_{l-1} > 0].
        let l = self.layers.len();
        let mut grads_w: Vec<Matrix> = Vec::with_capacity(l);
        let mut grads_b: Vec<Vec<f64>> = Vec::with_capacity(l);
        let mut dz = dz;
        for li in (0..l).rev() {
            let input: &Matrix = if li == 0 { batch } else { &trace.layers[li - 1] };
            grads_w.push(matmul(&input.transpose(), &dz)?);
            let mut db = vec![0.0; dz.cols()];
            for r in 0..dz.rows() {
                for (acc, v) in db.iter_mut().zip(dz.row(r)) {
                    *acc += v;
                }
            }
            grads_b.push(db);
            if li > 0 {
                let mut da = matmul(&dz, &self.layers[li].weight.transpose())?;
                let prev = &trace.layers[li - 1];
                for (v, &a) in da.as_mut_slice().iter_mut().zip(prev.as_slice()) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
                dz = da;
            }
        }
        grads_w.reverse();
        grads_b.reverse();

        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads_w.iter().zip(&grads_b) {
            flat.extend_from_slice(gw.as_slice());
            flat.extend_from_slice(gb);
        }
        Ok((loss, GradientVector::new(flat, tag)))
    }

    /// In-place SGD update through the flat view. `lr = 0` is a no-op;
    /// negative or non-finite rates are rejected.
    pub fn sgd_step(&mut self, grad: &GradientVector, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::InvalidParameter {
                what: "learning rate",
                value: lr,
            });
        }
        if grad.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "gradient vs parameter count",
                expected: self.param_count(),
                got: grad.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for (w, g) in layer
                .weight
                .as_mut_slice()
                .iter_mut()
                .zip(&grad.values[offset..])
            {
                *w -= lr * g;
            }
            offset += layer.weight.rows() * layer.weight.cols();
            for (b, g) in layer.bias.iter_mut().zip(&grad.values[offset..]) {
                *b -= lr * g;
            }
            offset += layer.bias.len();
        }
        Ok(())
    }

    /// Parameters in canonical flat order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(layer.weight.as_slice());
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    /// Writes parameters back from canonical flat order.
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "flat parameters",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let wlen = layer.weight.rows() * layer.weight.cols();
            layer
                .weight
                .as_mut_slice()
                .copy_from_slice(&params[offset..offset + wlen]);
            offset += wlen;
            let blen = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + blen]);
            offset += blen;
        }
        Ok(())
    }

    /// Argmax-match fraction on a dataset; ties resolve to the lowest class
    /// index. Empty datasets are rejected.
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyInput { what: "dataset" });
        }
        if ds.class_count() > self.output_size() {
            return Err(Error::InvalidDataset {
                reason: format!(
                    "dataset has {} classes but model outputs {}",
                    ds.class_count(),
                    self.output_size()
                ),
            });
        }
        let chunk = 512;
        let mut correct = 0usize;
        let mut start = 0;
        while start < ds.len() {
            let end = (start + chunk).min(ds.len());
            let batch = images_to_batch(ds, start, end, self.input_size())?;
            let (logits, _) = self.forward(&batch)?;
            for r in 0..logits.rows() {
                if argmax_lowest(logits.row(r)) == ds.label(start + r) {
                    correct += 1;
                }
            }
            start = end;
        }
        Ok(correct as f64 / ds.len() as f64)
    }
}

/// Flattens dataset records [start, end) into a batch matrix.
pub fn images_to_batch(ds: &Dataset, start: usize, end: usize, input_size: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity((end - start) * input_size);
    for i in start..end {
        let img = ds.image(i);
        if img.rows() * img.cols() != input_size {
            return Err(Error::LengthMismatch {
                what: "image pixels vs model input",
                expected: input_size,
                got: img.rows() * img.cols(),
            });
        }
        data.extend_from_slice(img.as_slice());
    }
    Matrix::from_vec(end - start, input_size, data)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(seed: u64) -> ModelState {
        ModelState::init(&[6, 5, 4, 3], &mut Rng::from_seed(seed)).unwrap()
    }

    fn random_batch(rng: &mut Rng, rows: usize, cols: usize, classes: usize) -> (Matrix, Vec<usize>) {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform()).collect();
        let labels: Vec<usize> = (0..rows).map(|_| rng.index(classes)).collect();
        (Matrix::from_vec(rows, cols, data).unwrap(), labels)
    }

    #[test]
    fn init_param_count_formula() {
        let m = ModelState::init(&[784, 256, 128, 10], &mut Rng::from_seed(0)).unwrap();
        assert_eq!(m.param_count(), 235_146);
        assert_eq!(m.flat_params().len(), 235_146);
    }

    #[test]
    fn init_deterministic_and_biases_zero() {
        let a = ModelState::init(&[20, 10, 5], &mut Rng::from_seed(3)).unwrap();
        let b = ModelState::init(&[20, 10, 5], &mut Rng::from_seed(3)).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        for layer in &a.layers {
            assert!(layer.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(ModelState::init(&[5], &mut Rng::from_seed(0)).is_err());
        assert!(ModelState::init(&[5, 0, 3], &mut Rng::from_seed(0)).is_err());
    }

    #[test]
    fn forward_zero_model_gives_zero_logits() {
        let mut m = tiny_model(1);
        let n = m.param_count();
        m.set_flat_params(&vec![0.0; n]).unwrap();
        let batch = Matrix::from_vec(2, 6, vec![0.3; 12]).unwrap();
        let (logits, _) = m.forward(&batch).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rows_are_independent() {
        let m = tiny_model(2);
        let mut rng = Rng::from_seed(7);
        let (batch, _) = random_batch(&mut rng, 32, 6, 3);
        let (logits, _) = m.forward(&batch).unwrap();
        let single = Matrix::from_vec(1, 6, batch.row(13).to_vec()).unwrap();
        let (one, _) = m.forward(&single).unwrap();
        assert_eq!(one.row(0), logits.row(13));
    }

    #[test]
    fn forward_trace_hidden_layers_non_negative() {
        let m = tiny_model(3);
        let mut rng = Rng::from_seed(8);
        let (batch, _) = random_batch(&mut rng, 16, 6, 3);
        let (_, trace) = m.forward(&batch).unwrap();
        assert_eq!(trace.layer_count(), 3);
        for hidden in &trace.layers()[..2] {
            assert!(hidden.as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn forward_shape_mismatch_errors() {
        let m = tiny_model(4);
        let batch = Matrix::zeros(2, 7);
        assert!(m.forward(&batch).is_err());
    }

    #[test]
    fn uniform_logits_loss_is_ln_classes() {
        let mut m = tiny_model(5);
        let n = m.param_count();
        m.set_flat_params(&vec![0.0; n]).unwrap();
        let batch = Matrix::from_vec(4, 6, vec![0.5; 24]).unwrap();
        let (loss, _) = m.loss_and_grad(&batch, &[0, 1, 2, 0], "t").unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_rows_leave_loss_unchanged() {
        let m = tiny_model(6);
        let mut rng = Rng::from_seed(9);
        let (batch, labels) = random_batch(&mut rng, 8, 6, 3);
        let (loss, _) = m.loss_and_grad(&batch, &labels, "t").unwrap();
        let mut doubled = batch.as_slice().to_vec();
        doubled.extend_from_slice(batch.as_slice());
        let doubled = Matrix::from_vec(16, 6, doubled).unwrap();
        let mut labels2 = labels.clone();
        labels2.extend_from_slice(&labels);
        let (loss2, _) = m.loss_and_grad(&doubled, &labels2, "t").unwrap();
        assert!((loss - loss2).abs() < 1e-12);
    }

    /// Central finite differences, the independent oracle for backprop.
    fn finite_difference_grad(
        model: &ModelState,
        batch: &Matrix,
        labels: &[usize],
        h: f64,
    ) -> Vec<f64> {
        let base = model.flat_params();
        let mut grad = vec![0.0; base.len()];
        let mut probe = model.clone();
        for i in 0..base.len() {
            let mut params = base.clone();
            params[i] = base[i] + h;
            probe.set_flat_params(&params).unwrap();
            let (lp, _) = probe.loss_and_grad(batch, labels, "fd").unwrap();
            params[i] = base[i] - h;
            probe.set_flat_params(&params).unwrap();
            let (lm, _) = probe.loss_and_grad(batch, labels, "fd").unwrap();
            grad[i] = (lp - lm) / (2.0 * h);
        }
        grad
    }

    /// Max over parameters of |a-b| / max(|a|, |b|, 1e-6).
    pub(crate) fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    /// Model with every parameter (biases included) random and nonzero.
    /// He-init zero biases put fully-dead rows exactly on the ReLU kink,
    /// where central differences are invalid; a generic random point keeps
    /// all pre-activations away from zero.
    pub(crate) fn random_point_model(sizes: &[usize], seed: u64) -> ModelState {
        let mut m = ModelState::init(sizes, &mut Rng::from_seed(seed)).unwrap();
        let mut rng = Rng::from_seed(seed ^ 0xA5A5);
        let params: Vec<f64> = (0..m.param_count())
            .map(|_| rng.normal(0.0, 0.6))
            .collect();
        m.set_flat_params(&params).unwrap();
        m
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let m = random_point_model(&[6, 5, 4, 3], 10);
        let mut rng = Rng::from_seed(11);
        let (batch, labels) = random_batch(&mut rng, 5, 6, 3);
        let (_, bp) = m.loss_and_grad(&batch, &labels, "bp").unwrap();
        let fd = finite_difference_grad(&m, &batch, &labels, 1e-5);
        let err = max_rel_err(bp.values(), &fd);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn sgd_step_edge_cases() {
        let mut m = tiny_model(12);
        let before = m.flat_params();
        let n = m.param_count();
        let mut rng = Rng::from_seed(13);
        let (batch, labels) = random_batch(&mut rng, 4, 6, 3);
        let (_, grad) = m.loss_and_grad(&batch, &labels, "t").unwrap();

        m.sgd_step(&grad, 0.0).unwrap();
        assert_eq!(m.flat_params(), before);

        m.sgd_step(&GradientVector::new(vec![0.0; n], "zero"), 0.1)
            .unwrap();
        assert_eq!(m.flat_params(), before);

        assert!(m.sgd_step(&grad, -0.1).is_err());
        assert!(m
            .sgd_step(&GradientVector::new(vec![0.0; n - 1], "short"), 0.1)
            .is_err());
    }

    #[test]
    fn sgd_step_reduces_loss_for_small_lr() {
        let mut m = tiny_model(14);
        let mut rng = Rng::from_seed(15);
        let (batch, labels) = random_batch(&mut rng, 8, 6, 3);
        let (before, grad) = m.loss_and_grad(&batch, &labels, "t").unwrap();
        m.sgd_step(&grad, 0.05).unwrap();
        let (after, _) = m.loss_and_grad(&batch, &labels, "t").unwrap();
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn flat_round_trip_is_identity() {
        let m = tiny_model(16);
        let flat = m.flat_params();
        let mut other = tiny_model(99);
        other.set_flat_params(&flat).unwrap();
        assert_eq!(other.flat_params(), flat);
        assert_eq!(m.flat_params(), flat); // order stable across calls
    }

    fn balanced_dataset(samples_per_class: usize, classes: usize) -> Dataset {
        let mut rng = Rng::from_seed(20);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..samples_per_class {
                let data: Vec<f64> = (0..36).map(|_| rng.uniform()).collect();
                images.push(Matrix::from_vec(6, 6, data).unwrap());
                labels.push(c);
            }
        }
        Dataset::new(images, labels, classes).unwrap()
    }

    #[test]
    fn accuracy_constant_logits_tie_break() {
        let mut m = ModelState::init(&[36, 8, 10], &mut Rng::from_seed(21)).unwrap();
        let n = m.param_count();
        m.set_flat_params(&vec![0.0; n]).unwrap();
        let ds = balanced_dataset(5, 10);
        // All logits tie; the lowest class index wins, so accuracy equals
        // the share of class 0.
        assert!((m.accuracy(&ds).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn accuracy_perfect_memorizer() {
        let ds = balanced_dataset(10, 5); // 50 random samples
        let mut m = ModelState::init(&[36, 128, 64, 5], &mut Rng::from_seed(22)).unwrap();
        let batch = images_to_batch(&ds, 0, ds.len(), 36).unwrap();
        let labels: Vec<usize> = ds.labels().to_vec();
        for _ in 0..500 {
            let (_, grad) = m.loss_and_grad(&batch, &labels, "fit").unwrap();
            m.sgd_step(&grad, 0.2).unwrap();
        }
        assert_eq!(m.accuracy(&ds).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_empty_dataset_errors() {
        let m = tiny_model(23);
        let ds = Dataset::new(vec![], vec![], 3).unwrap();
        assert!(m.accuracy(&ds).is_err());
    }
}
