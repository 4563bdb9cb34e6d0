//! Monte-Carlo oracle for the perturbation-variance effect on gradient
//! alignment, on the toy loss L(theta; x) = 0.5 * ||A theta - x||^2.
//!
//! The gradient there is A^T (A theta - x), so the gradient at the perturbed
//! input x + delta is exactly g_x - A^T delta: the first-order form with
//! M = -A^T is not an approximation on this loss. For each sigma the driver
//! estimates E[cos(g_x, g_x - A^T delta)] with delta ~ N(0, sigma^2 I).

use crate::diagnostics::cosine;
use crate::error::{Error, Result};
use crate::numerics::{matmul, Matrix, Rng};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct TaylorConfig {
    pub seed: u64,
    pub sigma_grid: Vec<f64>,
    pub samples: usize,
    pub dim: usize,
    /// Scale of the default A = a_scale * I.
    pub a_scale: f64,
    /// Explicit square A, overriding the scaled identity.
    pub a_matrix: Option<Matrix>,
}

impl TaylorConfig {
    pub fn new(seed: u64) -> Self {
        TaylorConfig {
            seed,
            sigma_grid: vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0],
            samples: 100_000,
            dim: 64,
            a_scale: 1.0,
            a_matrix: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaylorPoint {
    pub sigma: f64,
    pub mean_cos: f64,
    pub std_err: f64,
}

/// Estimates the mean gradient cosine for every sigma on the grid.
pub fn run_taylor_oracle(cfg: &TaylorConfig) -> Result<Vec<TaylorPoint>> {
    if cfg.sigma_grid.is_empty() {
        return Err(Error::EmptyInput { what: "sigma grid" });
    }
    if cfg.sigma_grid.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter {
            what: "sigma (must be finite and >= 0)",
            value: f64::NAN,
        });
    }
    if cfg.samples < 2 {
        return Err(Error::InvalidParameter {
            what: "sample count (need >= 2)",
            value: cfg.samples as f64,
        });
    }

    // With an explicit A the dimension comes from the matrix.
    let (dim, a_t) = match &cfg.a_matrix {
        Some(a) => {
            if a.rows() != a.cols() {
                return Err(Error::ShapeMismatch {
                    op: "taylor oracle A",
                    left: (a.rows(), a.cols()),
                    right: (a.cols(), a.rows()),
                });
            }
            (a.rows(), Some(a.transpose()))
        }
        None => (cfg.dim, None),
    };
    if dim == 0 {
        return Err(Error::EmptyInput { what: "dimension" });
    }

    let master = Rng::from_seed(cfg.seed);
    let mut rng_init = master.derive(0);
    let theta: Vec<f64> = (0..dim).map(|_| rng_init.normal(0.0, 1.0)).collect();
    let x: Vec<f64> = (0..dim).map(|_| rng_init.normal(0.0, 1.0)).collect();

    // g_x = A^T (A theta - x)
    let g_x: Vec<f64> = match (&cfg.a_matrix, &a_t) {
        (Some(a), Some(at)) => {
            let theta_col = Matrix::from_vec(dim, 1, theta.clone())?;
            let residual = matmul(a, &theta_col)?;
            let residual: Vec<f64> = residual
                .as_slice()
                .iter()
                .zip(&x)
                .map(|(r, xv)| r - xv)
                .collect();
            matmul(at, &Matrix::from_vec(dim, 1, residual)?)?
                .as_slice()
                .to_vec()
        }
        _ => theta
            .iter()
            .zip(&x)
            .map(|(t, xv)| cfg.a_scale * (cfg.a_scale * t - xv))
            .collect(),
    };

    cfg.sigma_grid
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| -> Result<TaylorPoint> {
            let mut rng = master.derive(0x10 + i as u64);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            let mut delta = vec![0.0; dim];
            let mut g2 = vec![0.0; dim];
            for _ in 0..cfg.samples {
                for d in delta.iter_mut() {
                    *d = rng.normal(0.0, 1.0) * sigma;
                }
                match &a_t {
                    Some(at) => {
                        for r in 0..dim {
                            let dot: f64 =
                                at.row(r).iter().zip(&delta).map(|(a, d)| a * d).sum();
                            g2[r] = g_x[r] - dot;
                        }
                    }
                    None => {
                        for ((g, gx), d) in g2.iter_mut().zip(&g_x).zip(&delta) {
                            *g = gx - cfg.a_scale * d;
                        }
                    }
                }
                let c = cosine(&g_x, &g2)?;
                sum += c;
                sumsq += c * c;
            }
            let n = cfg.samples as f64;
            let mean = sum / n;
            let var = ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0);
            Ok(TaylorPoint {
                sigma,
                mean_cos: mean,
                std_err: (var / n).sqrt(),
            })
        })
        .collect()
}
