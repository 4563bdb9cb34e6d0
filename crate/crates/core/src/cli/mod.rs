//! Command-line entry point: configuration resolution, driver dispatch,
//! checkpoint persistence, and CSV report emission.
//!
//! Exit codes: 0 success, 1 runtime failure (one-line diagnostic on
//! stderr), 2 usage error. Every run echoes its fully resolved
//! configuration to `<out>/config.txt`; rerunning with `--config` on that
//! echo reproduces the outputs byte for byte.

mod checkpoint;
mod config;
mod csv;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::RunConfig;
pub use csv::{fmt_sig9, write_csv, CsvValue};

use crate::error::Result;
use crate::experiments::{
    accuracy_on_view, run_cka_compare, run_evil_twin, run_merge_ablation, run_taylor_oracle,
    train, AblationConfig, CkaCompareConfig, ComparisonConfig, EvilTwinConfig, Method,
    TaylorConfig, TrainOptions, TrainState,
};
use crate::experiments::load_pool;
use crate::model::ModelState;
use crate::numerics::Rng;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "augforget",
    version,
    about = "Measure augmentation-induced forgetting and mitigate it with selective weight merging"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one classifier; writes a checkpoint and per-view metrics
    Train(RunArgs),
    /// Rotation forgetting study: accuracy drop vs. gradient sign discrepancy
    EvilTwin(RunArgs),
    /// Monte-Carlo oracle for alignment decay under input perturbations
    Taylor(RunArgs),
    /// Layer-similarity (CKA) comparison of continuation methods
    Cka(RunArgs),
    /// Merge-percentage ablation
    Ablate(RunArgs),
    /// Print version, defaults, and data resolution
    Info,
}

#[derive(Args)]
struct RunArgs {
    /// Output directory; created if missing
    #[arg(long)]
    out: PathBuf,
    /// Config file of `key = value` lines; explicit flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory with IDX files (falls back to $AUGFORGET_DATA)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use the seeded synthetic glyph dataset
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    transforms: Option<String>,
    /// uniform | targeted
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// vanilla | replay | merge | full-average
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    replay_fraction: Option<f64>,
    #[arg(long)]
    merge_p: Option<f64>,
    #[arg(long)]
    merge_k: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    phase2_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    holdout_size: Option<usize>,
    #[arg(long)]
    base_angle: Option<f64>,
    #[arg(long)]
    angles: Option<String>,
    #[arg(long)]
    sd_batches: Option<usize>,
    #[arg(long)]
    sigma_grid: Option<String>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    taylor_dim: Option<usize>,
    #[arg(long)]
    a_scale: Option<f64>,
    #[arg(long)]
    probe_size: Option<usize>,
    #[arg(long)]
    t1: Option<String>,
    #[arg(long)]
    t2: Option<String>,
    #[arg(long)]
    p_grid: Option<String>,
}

impl RunArgs {
    /// Defaults <- config file <- flags, then the environment fallback for
    /// the data directory.
    fn resolve(&self, command: &str) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| crate::error::Error::io(path, e))?;
                RunConfig::from_kv(&text)?
            }
            None => RunConfig::default(),
        };
        cfg.command = command.to_string();

        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        over!(
            transforms, policy, method, hidden, angles, sigma_grid, t1, t2, p_grid
        );
        macro_rules! over_copy {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        over_copy!(
            seed, beta, replay_fraction, merge_p, merge_k, epochs, phase2_epochs, batch_size,
            lr, pool_size, holdout_size, base_angle, sd_batches, mc_samples, taylor_dim,
            a_scale, probe_size
        );
        if let Some(dir) = &self.data_dir {
            cfg.data_dir = Some(dir.clone());
        }
        if self.synthetic {
            cfg.synthetic = true;
        }
        if cfg.data_dir.is_none() && !cfg.synthetic {
            if let Ok(dir) = std::env::var("AUGFORGET_DATA") {
                if !dir.is_empty() {
                    cfg.data_dir = Some(PathBuf::from(dir));
                }
            }
        }
        Ok(cfg)
    }

    fn prepare(&self, command: &str) -> Result<RunConfig> {
        let cfg = self.resolve(command)?;
        std::fs::create_dir_all(&self.out).map_err(|e| crate::error::Error::io(&self.out, e))?;
        let echo = self.out.join("config.txt");
        std::fs::write(&echo, cfg.to_kv()).map_err(|e| crate::error::Error::io(&echo, e))?;
        Ok(cfg)
    }
}

/// Parses `argv` and runs the matching driver. Returns the process exit
/// code instead of exiting, so tests can call it in-process.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    2
                }
            };
        }
    };
    let outcome = match &cli.command {
        Cmd::Train(args) => args.prepare("train").and_then(|cfg| cmd_train(&cfg, &args.out)),
        Cmd::EvilTwin(args) => args
            .prepare("evil-twin")
            .and_then(|cfg| cmd_evil_twin(&cfg, &args.out)),
        Cmd::Taylor(args) => args
            .prepare("taylor")
            .and_then(|cfg| cmd_taylor(&cfg, &args.out)),
        Cmd::Cka(args) => args.prepare("cka").and_then(|cfg| cmd_cka(&cfg, &args.out)),
        Cmd::Ablate(args) => args
            .prepare("ablate")
            .and_then(|cfg| cmd_ablate(&cfg, &args.out)),
        Cmd::Info => cmd_info(),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_train(cfg: &RunConfig, out: &std::path::Path) -> Result<()> {
    let source = cfg.data_source()?;
    let tset = cfg.transform_set()?;
    let method = cfg.method_kind()?;
    let (pool, holdout) = load_pool(&source, cfg.seed, cfg.pool_size, cfg.holdout_size)?;
    let master = Rng::from_seed(cfg.seed);

    let mut arch = vec![pool.pixels_per_image()];
    arch.extend(cfg.hidden_sizes()?);
    arch.push(pool.class_count());
    let mut model = ModelState::init(&arch, &mut master.derive(0))?;
    let mut state = TrainState::new(&method, cfg.pool_size);
    train(
        &mut model,
        &pool,
        &tset,
        &TrainOptions {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            policy: cfg.policy_kind()?,
            method,
        },
        &mut state,
        &mut master.derive(1),
        &mut master.derive(2),
    )?;

    save_checkpoint(&out.join("model.ckpt"), &model)?;

    let mut rows = Vec::with_capacity(tset.len() + 1);
    for (ti, t) in tset.iter().enumerate() {
        let acc = accuracy_on_view(&model, &holdout, t, &mut master.derive(0x100 + ti as u64))?;
        rows.push(vec![CsvValue::Text(t.to_string()), CsvValue::Float(acc)]);
    }
    rows.push(vec![
        CsvValue::Text("clean".to_string()),
        CsvValue::Float(model.accuracy(&holdout)?),
    ]);
    write_csv(&out.join("metrics.csv"), &["view", "accuracy"], &rows)?;
    println!(
        "train: {} params, checkpoint and metrics written to {}",
        model.param_count(),
        out.display()
    );
    Ok(())
}

fn cmd_evil_twin(cfg: &RunConfig, out: &std::path::Path) -> Result<()> {
    let mut ec = EvilTwinConfig::new(cfg.data_source()?, cfg.seed);
    ec.base_angle = cfg.base_angle;
    ec.angles = cfg.angle_list()?;
    ec.sd_batches = cfg.sd_batches;
    ec.phase1_epochs = cfg.epochs;
    ec.phase2_epochs = cfg.phase2_epochs;
    ec.batch_size = cfg.batch_size;
    ec.lr = cfg.lr;
    ec.hidden = cfg.hidden_sizes()?;
    ec.pool_size = cfg.pool_size;
    ec.holdout_size = cfg.holdout_size;
    ec.method = cfg.method_kind()?;

    let report = run_evil_twin(&ec)?;
    let rows: Vec<Vec<CsvValue>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                CsvValue::Float(r.second_angle_deg),
                CsvValue::Float(r.acc_before),
                CsvValue::Float(r.acc_after),
                CsvValue::Float(r.forgetting),
                CsvValue::Float(r.aggregated_sd),
            ]
        })
        .collect();
    write_csv(
        &out.join("evil_twin.csv"),
        &["angle", "acc_before", "acc_after", "forgetting", "aggregated_sd"],
        &rows,
    )?;
    println!("evil-twin: spearman_rho = {}", fmt_sig9(report.spearman_rho));
    Ok(())
}

fn cmd_taylor(cfg: &RunConfig, out: &std::path::Path) -> Result<()> {
    let tc = TaylorConfig {
        seed: cfg.seed,
        sigma_grid: cfg.sigma_list()?,
        samples: cfg.mc_samples,
        dim: cfg.taylor_dim,
        a_scale: cfg.a_scale,
        a_matrix: None,
    };
    let points = run_taylor_oracle(&tc)?;
    let rows: Vec<Vec<CsvValue>> = points
        .iter()
        .map(|p| {
            vec![
                CsvValue::Float(p.sigma),
                CsvValue::Float(p.mean_cos),
                CsvValue::Float(p.std_err),
            ]
        })
        .collect();
    write_csv(&out.join("taylor.csv"), &["sigma", "mean_cos", "stderr"], &rows)?;
    println!("taylor: {} grid points written", points.len());
    Ok(())
}

fn cmd_cka(cfg: &RunConfig, out: &std::path::Path) -> Result<()> {
    let mut cc = CkaCompareConfig::new(cfg.data_source()?, cfg.seed);
    cc.t1 = cfg.t1_set()?;
    cc.t2 = cfg.t2_set()?;
    cc.probe_size = cfg.probe_size;
    cc.phase1_epochs = cfg.epochs;
    cc.phase2_epochs = cfg.phase2_epochs;
    cc.batch_size = cfg.batch_size;
    cc.lr = cfg.lr;
    cc.hidden = cfg.hidden_sizes()?;
    cc.pool_size = cfg.pool_size;
    cc.holdout_size = cfg.holdout_size;
    cc.methods = vec![
        Method::Vanilla,
        Method::Replay {
            fraction: cfg.replay_fraction,
        },
        Method::Merge {
            p: cfg.merge_p,
            k: cfg.merge_k,
        },
    ];

    for (name, grid) in run_cka_compare(&cc)? {
        let mut header: Vec<&str> = vec![""];
        header.extend(grid.labels_b().iter().map(|s| s.as_str()));
        let rows: Vec<Vec<CsvValue>> = grid
            .labels_a()
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let mut row = vec![CsvValue::Text(label.clone())];
                for j in 0..grid.values().cols() {
                    row.push(CsvValue::Float(grid.values().get(i, j)));
                }
                row
            })
            .collect();
        write_csv(&out.join(format!("cka_{name}.csv")), &header, &rows)?;
        println!("cka: {name} diagonal mean = {}", fmt_sig9(grid.diagonal_mean()));
    }
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, out: &std::path::Path) -> Result<()> {
    let mut ac = AblationConfig::new(cfg.data_source()?, cfg.seed);
    ac.base = ComparisonConfig {
        source: cfg.data_source()?,
        seed: cfg.seed,
        tset: cfg.transform_set()?,
        policy: cfg.policy_kind()?,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        hidden: cfg.hidden_sizes()?,
        pool_size: cfg.pool_size,
        holdout_size: cfg.holdout_size,
        probe_size: cfg.probe_size,
        methods: vec![],
    };
    ac.p_grid = cfg.p_list()?;
    ac.merge_k = cfg.merge_k;

    let rows: Vec<Vec<CsvValue>> = run_merge_ablation(&ac)?
        .iter()
        .map(|r| vec![CsvValue::Float(r.p), CsvValue::Float(r.mean_accuracy)])
        .collect();
    write_csv(&out.join("ablation.csv"), &["p", "accuracy"], &rows)?;
    println!("ablate: {} grid points written", rows.len());
    Ok(())
}

fn cmd_info() -> Result<()> {
    let defaults = RunConfig::default();
    println!("augforget {}", env!("CARGO_PKG_VERSION"));
    println!("default transform set: {}", defaults.transforms);
    println!("default architecture: 784,{},10", defaults.hidden);
    println!(
        "data resolution: --data-dir, then $AUGFORGET_DATA ({}), then --synthetic",
        std::env::var("AUGFORGET_DATA").unwrap_or_else(|_| "unset".to_string())
    );
    println!(
        "defaults: seed={} epochs={} batch={} lr={} method={} merge_p={} merge_k={} replay_fraction={}",
        defaults.seed,
        defaults.epochs,
        defaults.batch_size,
        defaults.lr,
        defaults.method,
        defaults.merge_p,
        defaults.merge_k,
        defaults.replay_fraction
    );
    Ok(())
}
