//! Dense f64 matrices and seeded random generation.
//!
//! Everything downstream (augmentation, the classifier, the diagnostics)
//! works on [`Matrix`] values and draws randomness through [`Rng`], which
//! wraps ChaCha8: a counter-based, portably specified stream cipher RNG,
//! so a seed produces the same stream on every platform. No operation in
//! this crate touches global RNG state.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data; the length must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Applies `f` to every entry, returning a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Matrix product with f64 accumulation. Errors when `a.cols != b.rows`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: (a.rows, a.cols),
            right: (b.rows, b.cols),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    let bc = b.cols;
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * bc..(i + 1) * bc];
        for (k, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[k * bc..(k + 1) * bc];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Seeded random generator backing every stochastic operation in the crate.
///
/// The stream is ChaCha8 seeded through `seed_from_u64`; normal variates come
/// from the ziggurat sampler. Identical seeds give identical streams.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent generator derived from this one's seed and a stream tag.
    /// Derivation is a SplitMix64 mix of the two, so distinct tags yield
    /// decorrelated streams and the result does not depend on how much of
    /// this generator has already been consumed.
    pub fn derive(&self, tag: u64) -> Self {
        Rng::from_seed(splitmix64(self.seed ^ splitmix64(tag)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// One normal variate.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        // Normal::new accepts std = 0 and returns the mean.
        Normal::new(mean, std)
            .expect("finite mean and non-negative std checked by callers")
            .sample(&mut self.inner)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix of i.i.d. normal entries. `std = 0` yields a constant matrix of
/// `mean`; negative `std` is an error.
pub fn gauss(rng: &mut Rng, rows: usize, cols: usize, mean: f64, std: f64) -> Result<Matrix> {
    if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
        return Err(Error::InvalidParameter {
            what: "gauss std (must be finite and >= 0)",
            value: std,
        });
    }
    let normal = Normal::new(mean, std).expect("validated above");
    let data = (0..rows * cols)
        .map(|_| normal.sample(&mut rng.inner))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Indices of `values` in stable descending order: ties keep the lower index
/// first. NaN entries are rejected.
pub fn argsort_desc(values: &[f64]) -> Result<Vec<usize>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            what: "argsort input",
        });
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // sort_by is stable, so equal values keep ascending index order.
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("NaN rejected"));
    Ok(idx)
}
