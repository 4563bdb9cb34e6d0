//! Forgetting and interference measurements: gradient cosine alignment,
//! sign discrepancy, and linear centered kernel alignment between layer
//! representations.
//!
//! Sign convention: zero is its own sign, so a coordinate where one gradient
//! is zero and the other is not counts as discrepant, and SD(g, g) = 0
//! exactly. CKA is the linear (dot-product kernel) variant on
//! column-centered features with the biased estimator.

use crate::data_aug::Dataset;
use crate::error::{Error, Result};
use crate::model::{images_to_batch, GradientVector, ModelState};
use crate::numerics::{matmul, Matrix};

/// Sign discrepancies of one gradient against `k` reference batches.
#[derive(Debug, Clone)]
pub struct SdReport {
    per_batch: Vec<f64>,
    aggregated: f64,
}

impl SdReport {
    pub fn per_batch(&self) -> &[f64] {
        &self.per_batch
    }

    pub fn aggregated(&self) -> f64 {
        self.aggregated
    }

    pub fn k(&self) -> usize {
        self.per_batch.len()
    }
}

/// Layer-by-layer CKA similarities between two models.
#[derive(Debug, Clone)]
pub struct CkaMatrix {
    values: Matrix,
    labels_a: Vec<String>,
    labels_b: Vec<String>,
}

impl CkaMatrix {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels_a(&self) -> &[String] {
        &self.labels_a
    }

    pub fn labels_b(&self) -> &[String] {
        &self.labels_b
    }

    /// Mean of the diagonal: similarity between corresponding layers.
    pub fn diagonal_mean(&self) -> f64 {
        let l = self.values.rows().min(self.values.cols());
        (0..l).map(|i| self.values.get(i, i)).sum::<f64>() / l as f64
    }
}

/// Cosine similarity between two gradients. Zero-norm input is rejected:
/// the quantity is undefined there. The result is clamped to [-1, 1].
pub fn cosine_alignment(g1: &GradientVector, g2: &GradientVector) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(Error::LengthMismatch {
            what: "gradient vectors",
            expected: g1.len(),
            got: g2.len(),
        });
    }
    cosine(g1.values(), g2.values())
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let n1 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 {
        return Err(Error::ZeroNorm { which: "first" });
    }
    if n2 == 0.0 {
        return Err(Error::ZeroNorm { which: "second" });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of coordinates whose signs differ between the two gradients.
pub fn sign_discrepancy(g1: &GradientVector, g2: &GradientVector) -> Result<f64> {
    if g1.is_empty() || g2.is_empty() {
        return Err(Error::EmptyInput {
            what: "gradient vector",
        });
    }
    if g1.len() != g2.len() {
        return Err(Error::LengthMismatch {
            what: "gradient vectors",
            expected: g1.len(),
            got: g2.len(),
        });
    }
    let mismatched = g1
        .values()
        .iter()
        .zip(g2.values())
        .filter(|(&a, &b)| sign(a) != sign(b))
        .count();
    Ok(mismatched as f64 / g1.len() as f64)
}

/// Mean sign discrepancy of `g1` against each of `k` reference gradients.
pub fn aggregated_sign_discrepancy(
    g1: &GradientVector,
    grads: &[GradientVector],
) -> Result<SdReport> {
    if grads.is_empty() {
        return Err(Error::EmptyInput {
            what: "reference gradient list",
        });
    }
    let per_batch: Vec<f64> = grads
        .iter()
        .map(|g| sign_discrepancy(g1, g))
        .collect::<Result<_>>()?;
    let aggregated = per_batch.iter().sum::<f64>() / per_batch.len() as f64;
    Ok(SdReport {
        per_batch,
        aggregated,
    })
}

fn column_center(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut means = vec![0.0; x.cols()];
    for r in 0..n {
        for (m, v) in means.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut out = x.clone();
    for r in 0..n {
        for (v, m) in out.row_mut(r).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

fn frobenius(x: &Matrix) -> f64 {
    x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Linear CKA between two feature matrices (rows = probe samples, columns =
/// features). Returns 0 when either centered matrix is all-zero.
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch {
            op: "linear_cka",
            left: (x.rows(), x.cols()),
            right: (y.rows(), y.cols()),
        });
    }
    if x.rows() < 2 {
        return Err(Error::InvalidParameter {
            what: "linear_cka row count (need >= 2)",
            value: x.rows() as f64,
        });
    }
    let xc = column_center(x);
    let yc = column_center(y);
    let cross = matmul(&xc.transpose(), &yc)?;
    let xx = matmul(&xc.transpose(), &xc)?;
    let yy = matmul(&yc.transpose(), &yc)?;
    let denom = frobenius(&xx) * frobenius(&yy);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let hsic = cross.as_slice().iter().map(|v| v * v).sum::<f64>();
    Ok(hsic / denom)
}

/// Layer-by-layer CKA grid between two models on one shared probe batch.
/// Entry (i, j) compares layer i of `model_a` with layer j of `model_b`;
/// the diagonal is the similarity between corresponding layers.
pub fn cka_matrix(model_a: &ModelState, model_b: &ModelState, probe: &Dataset) -> Result<CkaMatrix> {
    if model_a.layer_sizes().len() != model_b.layer_sizes().len() {
        return Err(Error::LengthMismatch {
            what: "model layer counts",
            expected: model_a.layer_sizes().len(),
            got: model_b.layer_sizes().len(),
        });
    }
    if probe.len() < 2 {
        return Err(Error::InvalidParameter {
            what: "probe size (need >= 2)",
            value: probe.len() as f64,
        });
    }
    let batch = images_to_batch(probe, 0, probe.len(), model_a.input_size())?;
    let (_, trace_a) = model_a.forward(&batch)?;
    let batch_b = images_to_batch(probe, 0, probe.len(), model_b.input_size())?;
    let (_, trace_b) = model_b.forward(&batch_b)?;

    let l = trace_a.layer_count();
    let mut values = Matrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            values.set(i, j, linear_cka(&trace_a.layers()[i], &trace_b.layers()[j])?);
        }
    }
    let labels = |_m: &ModelState| -> Vec<String> {
        (1..=l).map(|i| format!("layer{i}")).collect()
    };
    Ok(CkaMatrix {
        values,
        labels_a: labels(model_a),
        labels_b: labels(model_b),
    })
}

/// First-order form of the perturbed gradient: `g_x + M * delta`, where `M`
/// is the N x D matrix of mixed second-order derivatives.
pub fn taylor_gradient(g_x: &GradientVector, m: &Matrix, delta: &[f64]) -> Result<GradientVector> {
    if m.rows() != g_x.len() || m.cols() != delta.len() {
        return Err(Error::ShapeMismatch {
            op: "taylor_gradient",
            left: (m.rows(), m.cols()),
            right: (g_x.len(), delta.len()),
        });
    }
    let mut out = g_x.values().to_vec();
    for (r, o) in out.iter_mut().enumerate() {
        let row = m.row(r);
        *o += row.iter().zip(delta).map(|(a, d)| a * d).sum::<f64>();
    }
    Ok(GradientVector::new(out, format!("{}+taylor", g_x.tag())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gauss, Rng};

    fn gv(values: Vec<f64>) -> GradientVector {
        GradientVector::new(values, "test")
    }

    #[test]
    fn cosine_basic_values() {
        let g = gv(vec![1.0, 2.0, -3.0]);
        let neg = gv(vec![-1.0, -2.0, 3.0]);
        assert_eq!(cosine_alignment(&g, &g).unwrap(), 1.0);
        assert_eq!(cosine_alignment(&g, &neg).unwrap(), -1.0);
        let e1 = gv(vec![1.0, 0.0]);
        let e2 = gv(vec![0.0, 1.0]);
        assert_eq!(cosine_alignment(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_norm_is_an_error() {
        let g = gv(vec![1.0, 2.0]);
        let z = gv(vec![0.0, 0.0]);
        assert!(matches!(
            cosine_alignment(&g, &z),
            Err(Error::ZeroNorm { which: "second" })
        ));
        assert!(matches!(
            cosine_alignment(&z, &g),
            Err(Error::ZeroNorm { which: "first" })
        ));
    }

    #[test]
    fn cosine_invariant_to_positive_scaling() {
        let mut rng = Rng::from_seed(1);
        for _ in 0..20 {
            let a: Vec<f64> = (0..16).map(|_| rng.normal(0.0, 1.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.normal(0.0, 1.0)).collect();
            let base = cosine_alignment(&gv(a.clone()), &gv(b.clone())).unwrap();
            let scaled =
                cosine_alignment(&gv(a.iter().map(|v| v * 7.5).collect()), &gv(b)).unwrap();
            assert!((base - scaled).abs() < 1e-12);
        }
    }

    #[test]
    fn sd_examples() {
        let a = gv(vec![1.0, -2.0, 3.0, 0.0]);
        assert_eq!(sign_discrepancy(&a, &a).unwrap(), 0.0);
        let flipped = gv(vec![-1.0, 2.0, -3.0, 5.0]);
        let full = gv(vec![1.0, 2.0, 3.0, 4.0]);
        let neg = gv(vec![-1.0, -2.0, -3.0, -4.0]);
        assert_eq!(sign_discrepancy(&full, &neg).unwrap(), 1.0);
        let b = gv(vec![1.0, 2.0, -3.0, 0.0]);
        assert_eq!(sign_discrepancy(&a, &b).unwrap(), 0.5);
        assert_eq!(sign_discrepancy(&a, &flipped).unwrap(), 1.0); // 0 vs nonzero counts
    }

    #[test]
    fn sd_symmetry_range_and_rescale_invariance() {
        let mut rng = Rng::from_seed(2);
        for _ in 0..50 {
            let n = 1 + rng.index(32);
            let a: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
            let sd_ab = sign_discrepancy(&gv(a.clone()), &gv(b.clone())).unwrap();
            let sd_ba = sign_discrepancy(&gv(b.clone()), &gv(a.clone())).unwrap();
            assert_eq!(sd_ab, sd_ba);
            assert!((0.0..=1.0).contains(&sd_ab));
            // positive per-coordinate rescaling leaves signs unchanged
            let scale: Vec<f64> = (0..n).map(|_| 0.01 + rng.uniform() * 5.0).collect();
            let a2: Vec<f64> = a.iter().zip(&scale).map(|(v, s)| v * s).collect();
            assert_eq!(
                sign_discrepancy(&gv(a2), &gv(b)).unwrap(),
                sd_ab
            );
        }
    }

    #[test]
    fn sd_empty_errors() {
        assert!(sign_discrepancy(&gv(vec![]), &gv(vec![])).is_err());
    }

    #[test]
    fn aggregated_sd_reduces_and_averages() {
        let g1 = gv(vec![1.0, 1.0, 1.0, 1.0, 1.0]);
        let single = vec![gv(vec![1.0, -1.0, 1.0, 1.0, 1.0])];
        let rep = aggregated_sign_discrepancy(&g1, &single).unwrap();
        assert_eq!(rep.k(), 1);
        assert_eq!(rep.aggregated(), 0.2);

        let same = vec![g1.clone(), g1.clone(), g1.clone()];
        assert_eq!(aggregated_sign_discrepancy(&g1, &same).unwrap().aggregated(), 0.0);

        // per-batch SDs 0.2, 0.4, 0.6 -> mean 0.4
        let batches = vec![
            gv(vec![1.0, -1.0, 1.0, 1.0, 1.0]),
            gv(vec![1.0, -1.0, -1.0, 1.0, 1.0]),
            gv(vec![1.0, -1.0, -1.0, -1.0, 1.0]),
        ];
        let rep = aggregated_sign_discrepancy(&g1, &batches).unwrap();
        assert_eq!(rep.per_batch(), &[0.2, 0.4, 0.6]);
        assert!((rep.aggregated() - 0.4).abs() < 1e-15);

        assert!(aggregated_sign_discrepancy(&g1, &[]).is_err());
    }

    /// Random orthogonal matrix as a product of two Householder reflections.
    fn random_orthogonal(rng: &mut Rng, n: usize) -> Matrix {
        let mut q = Matrix::identity(n);
        for _ in 0..2 {
            let v: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            let mut h = Matrix::identity(n);
            for r in 0..n {
                for c in 0..n {
                    h.set(r, c, h.get(r, c) - 2.0 * v[r] * v[c] / norm2);
                }
            }
            q = matmul(&q, &h).unwrap();
        }
        q
    }

    #[test]
    fn cka_self_similarity_is_one() {
        let mut rng = Rng::from_seed(3);
        let x = gauss(&mut rng, 50, 8, 0.0, 1.0).unwrap();
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cka_invariances() {
        let mut rng = Rng::from_seed(4);
        for _ in 0..20 {
            let x = gauss(&mut rng, 40, 6, 0.0, 1.0).unwrap();
            let y = gauss(&mut rng, 40, 9, 0.0, 1.0).unwrap();
            let base = linear_cka(&x, &y).unwrap();

            let r = random_orthogonal(&mut rng, 6);
            let rotated = matmul(&x, &r).unwrap();
            assert!((linear_cka(&rotated, &y).unwrap() - base).abs() < 1e-8);

            let scaled = x.map(|v| v * -3.25);
            assert!((linear_cka(&scaled, &y).unwrap() - base).abs() < 1e-8);
        }
    }

    #[test]
    fn cka_independent_features_score_low() {
        // Monte-Carlo baseline: unrelated features give near-zero CKA.
        let mut rng = Rng::from_seed(5);
        let x = gauss(&mut rng, 2000, 64, 0.0, 1.0).unwrap();
        let y = gauss(&mut rng, 2000, 64, 0.0, 1.0).unwrap();
        let v = linear_cka(&x, &y).unwrap();
        assert!(v < 0.1, "independent CKA {v}");
    }

    #[test]
    fn cka_zero_matrix_and_errors() {
        let z = Matrix::zeros(10, 4);
        let mut rng = Rng::from_seed(6);
        let x = gauss(&mut rng, 10, 4, 0.0, 1.0).unwrap();
        assert_eq!(linear_cka(&z, &x).unwrap(), 0.0);
        let y = gauss(&mut rng, 9, 4, 0.0, 1.0).unwrap();
        assert!(linear_cka(&x, &y).is_err());
        let one = gauss(&mut rng, 1, 4, 0.0, 1.0).unwrap();
        assert!(linear_cka(&one, &one).is_err());
    }

    fn probe_dataset(rng: &mut Rng, n: usize) -> Dataset {
        let images: Vec<Matrix> = (0..n)
            .map(|_| {
                let data: Vec<f64> = (0..16).map(|_| rng.uniform()).collect();
                Matrix::from_vec(4, 4, data).unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.index(3)).collect();
        Dataset::new(images, labels, 3).unwrap()
    }

    #[test]
    fn cka_matrix_same_model_diagonal_is_one() {
        let mut rng = Rng::from_seed(7);
        let m = ModelState::init(&[16, 12, 8, 3], &mut rng).unwrap();
        let probe = probe_dataset(&mut rng, 64);
        let grid = cka_matrix(&m, &m, &probe).unwrap();
        for i in 0..3 {
            assert!((grid.values().get(i, i) - 1.0).abs() < 1e-9);
        }
        for v in grid.values().as_slice() {
            assert!((-1e-9..=1.0 + 1e-9).contains(v));
        }
        assert!((grid.diagonal_mean() - 1.0).abs() < 1e-9);
        assert_eq!(grid.labels_a(), &["layer1", "layer2", "layer3"]);
    }

    #[test]
    fn cka_matrix_rejects_tiny_probe_and_layer_mismatch() {
        let mut rng = Rng::from_seed(8);
        let a = ModelState::init(&[16, 12, 8, 3], &mut rng).unwrap();
        let b = ModelState::init(&[16, 8, 3], &mut rng).unwrap();
        let tiny = probe_dataset(&mut rng, 1);
        let probe = probe_dataset(&mut rng, 16);
        assert!(cka_matrix(&a, &a, &tiny).is_err());
        assert!(cka_matrix(&a, &b, &probe).is_err());
    }

    #[test]
    fn taylor_gradient_zero_cases() {
        let g = gv(vec![1.0, -2.0, 3.0]);
        let m = Matrix::zeros(3, 2);
        let out = taylor_gradient(&g, &m, &[5.0, -7.0]).unwrap();
        assert_eq!(out.values(), g.values());

        let mut rng = Rng::from_seed(9);
        let m = gauss(&mut rng, 3, 2, 0.0, 1.0).unwrap();
        let out = taylor_gradient(&g, &m, &[0.0, 0.0]).unwrap();
        assert_eq!(out.values(), g.values());
    }

    #[test]
    fn taylor_gradient_exact_on_quadratic_loss() {
        // L = 0.5 * ||theta - x||^2 has g = theta - x, so the gradient at
        // x + delta is g_x - delta: the first-order form with M = -I is exact.
        let mut rng = Rng::from_seed(10);
        let theta: Vec<f64> = (0..8).map(|_| rng.normal(0.0, 1.0)).collect();
        let x: Vec<f64> = (0..8).map(|_| rng.normal(0.0, 1.0)).collect();
        let delta: Vec<f64> = (0..8).map(|_| rng.normal(0.0, 0.5)).collect();
        let g_x: Vec<f64> = theta.iter().zip(&x).map(|(t, xv)| t - xv).collect();
        let exact: Vec<f64> = g_x.iter().zip(&delta).map(|(g, d)| g - d).collect();
        let neg_identity = Matrix::identity(8).map(|v| -v);
        let taylor = taylor_gradient(&gv(g_x), &neg_identity, &delta).unwrap();
        assert_eq!(taylor.values(), exact.as_slice());
    }

    #[test]
    fn taylor_gradient_shape_errors() {
        let g = gv(vec![1.0, 2.0]);
        let m = Matrix::zeros(3, 2);
        assert!(taylor_gradient(&g, &m, &[0.0, 0.0]).is_err());
        let m = Matrix::zeros(2, 3);
        assert!(taylor_gradient(&g, &m, &[0.0, 0.0]).is_err());
    }
}
