//! Run configuration: defaults, flat key-value (de)serialization, and the
//! typed accessors drivers consume.
//!
//! Configuration resolves in three layers: built-in defaults, then an
//! optional `key = value` config file, then command-line flags (flags win).
//! The fully resolved config is echoed into the output directory as
//! `config.txt`; feeding that file back through `--config` reproduces the
//! run byte for byte.

use crate::data_aug::TransformSet;
use crate::error::{Error, Result};
use crate::experiments::{DataSource, Method, PolicyKind};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Subcommand that produced the echo; informational on reload.
    pub command: String,
    pub seed: u64,
    /// Directory holding `train-images-idx3-ubyte[.gz]` and
    /// `train-labels-idx1-ubyte[.gz]`.
    pub data_dir: Option<PathBuf>,
    pub synthetic: bool,
    pub transforms: String,
    pub policy: String,
    pub beta: f64,
    pub method: String,
    pub replay_fraction: f64,
    pub merge_p: f64,
    pub merge_k: u64,
    pub epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: String,
    pub pool_size: usize,
    pub holdout_size: usize,
    pub base_angle: f64,
    pub angles: String,
    pub sd_batches: usize,
    pub sigma_grid: String,
    pub mc_samples: usize,
    pub taylor_dim: usize,
    pub a_scale: f64,
    pub probe_size: usize,
    pub t1: String,
    pub t2: String,
    pub p_grid: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            seed: 7,
            data_dir: None,
            synthetic: false,
            transforms: TransformSet::default_set().spec_string(),
            policy: "uniform".to_string(),
            beta: 1.0,
            method: "vanilla".to_string(),
            replay_fraction: 0.5,
            merge_p: 80.0,
            merge_k: 100,
            epochs: 5,
            phase2_epochs: 3,
            batch_size: 64,
            lr: 0.05,
            hidden: "256,128".to_string(),
            pool_size: 10_000,
            holdout_size: 2_000,
            base_angle: 45.0,
            angles: "45,30,15,0,-15,-30,-45".to_string(),
            sd_batches: 10,
            sigma_grid: "0,0.1,0.5,1,2,5".to_string(),
            mc_samples: 100_000,
            taylor_dim: 64,
            a_scale: 1.0,
            probe_size: 512,
            t1: "rotate:45,brightness:0.2".to_string(),
            t2: "rotate:-45,gauss_noise:0.1".to_string(),
            p_grid: "20,40,60,80,100".to_string(),
        }
    }
}

macro_rules! kv_fields {
    ($macro_cb:ident) => {
        $macro_cb!(command, string);
        $macro_cb!(seed, parse);
        $macro_cb!(data_dir, path);
        $macro_cb!(synthetic, parse);
        $macro_cb!(transforms, string);
        $macro_cb!(policy, string);
        $macro_cb!(beta, parse);
        $macro_cb!(method, string);
        $macro_cb!(replay_fraction, parse);
        $macro_cb!(merge_p, parse);
        $macro_cb!(merge_k, parse);
        $macro_cb!(epochs, parse);
        $macro_cb!(phase2_epochs, parse);
        $macro_cb!(batch_size, parse);
        $macro_cb!(lr, parse);
        $macro_cb!(hidden, string);
        $macro_cb!(pool_size, parse);
        $macro_cb!(holdout_size, parse);
        $macro_cb!(base_angle, parse);
        $macro_cb!(angles, string);
        $macro_cb!(sd_batches, parse);
        $macro_cb!(sigma_grid, string);
        $macro_cb!(mc_samples, parse);
        $macro_cb!(taylor_dim, parse);
        $macro_cb!(a_scale, parse);
        $macro_cb!(probe_size, parse);
        $macro_cb!(t1, string);
        $macro_cb!(t2, string);
        $macro_cb!(p_grid, string);
    };
}

impl RunConfig {
    /// Serializes every field as `key = value`, one per line, in declaration
    /// order. The output parses back through [`RunConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($field:ident, path) => {
                let value = self
                    .$field
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default();
                writeln!(out, "{} = {}", stringify!($field), value).unwrap();
            };
            ($field:ident, $_kind:ident) => {
                writeln!(out, "{} = {}", stringify!($field), self.$field).unwrap();
            };
        }
        kv_fields!(emit);
        out
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are an error.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                reason: format!("line {}: expected `key = value`, got {raw:?}", lineno + 1),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set_kv(key, value).map_err(|e| Error::Config {
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        }
        Ok(cfg)
    }

    fn set_kv(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! apply {
            ($field:ident, string) => {
                if key == stringify!($field) {
                    self.$field = value.to_string();
                    return Ok(());
                }
            };
            ($field:ident, path) => {
                if key == stringify!($field) {
                    self.$field = if value.is_empty() {
                        None
                    } else {
                        Some(PathBuf::from(value))
                    };
                    return Ok(());
                }
            };
            ($field:ident, parse) => {
                if key == stringify!($field) {
                    self.$field = value.parse().map_err(|_| Error::Config {
                        reason: format!("bad value {value:?} for {}", stringify!($field)),
                    })?;
                    return Ok(());
                }
            };
        }
        kv_fields!(apply);
        Err(Error::Config {
            reason: format!("unknown config key {key:?}"),
        })
    }

    /// Resolves the dataset source: an explicit data directory wins, then
    /// the synthetic flag; neither is an error.
    pub fn data_source(&self) -> Result<DataSource> {
        if let Some(dir) = &self.data_dir {
            let pick = |base: &str| {
                let plain = dir.join(base);
                if plain.exists() {
                    plain
                } else {
                    dir.join(format!("{base}.gz"))
                }
            };
            return Ok(DataSource::Idx {
                images: pick("train-images-idx3-ubyte"),
                labels: pick("train-labels-idx1-ubyte"),
            });
        }
        if self.synthetic {
            return Ok(DataSource::Synthetic);
        }
        Err(Error::MissingDataset)
    }

    pub fn transform_set(&self) -> Result<TransformSet> {
        TransformSet::parse(&self.transforms)
    }

    pub fn t1_set(&self) -> Result<TransformSet> {
        TransformSet::parse(&self.t1)
    }

    pub fn t2_set(&self) -> Result<TransformSet> {
        TransformSet::parse(&self.t2)
    }

    pub fn hidden_sizes(&self) -> Result<Vec<usize>> {
        parse_list(&self.hidden, "hidden")
    }

    pub fn angle_list(&self) -> Result<Vec<f64>> {
        parse_list(&self.angles, "angles")
    }

    pub fn sigma_list(&self) -> Result<Vec<f64>> {
        parse_list(&self.sigma_grid, "sigma_grid")
    }

    pub fn p_list(&self) -> Result<Vec<f64>> {
        parse_list(&self.p_grid, "p_grid")
    }

    pub fn policy_kind(&self) -> Result<PolicyKind> {
        match self.policy.as_str() {
            "uniform" => Ok(PolicyKind::Uniform),
            "targeted" => Ok(PolicyKind::Targeted { beta: self.beta }),
            other => Err(Error::Config {
                reason: format!("unknown policy {other:?} (expected uniform|targeted)"),
            }),
        }
    }

    pub fn method_kind(&self) -> Result<Method> {
        match self.method.as_str() {
            "vanilla" => Ok(Method::Vanilla),
            "replay" => Ok(Method::Replay {
                fraction: self.replay_fraction,
            }),
            "merge" => Ok(Method::Merge {
                p: self.merge_p,
                k: self.merge_k,
            }),
            "full-average" => Ok(Method::FullAverage { k: self.merge_k }),
            other => Err(Error::Config {
                reason: format!(
                    "unknown method {other:?} (expected vanilla|replay|merge|full-average)"
                ),
            }),
        }
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim().parse::<T>().map_err(|_| Error::Config {
                reason: format!("bad {what} entry {s:?}"),
            })
        })
        .collect()
}
