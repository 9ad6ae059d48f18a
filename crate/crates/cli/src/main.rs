use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use arisnoma::harness::export::{self, read_learning_curve, read_metric_rows, write_metrics, write_trace, Manifest};
use arisnoma::harness::run::{evaluate_policy, evaluate_random, train_policy, SweepOutput, TrainedPolicy};
use arisnoma::harness::{oracle_search, run_sweep, Controller, ExperimentConfig, Mode};
use arisnoma::hppo::checkpoint::write_learning_curve;
use arisnoma::hppo::{Checkpoint, IterationRecord};
use arisnoma::seed::{derive_seed, SWEEP_REALIZATIONS};

/// Active/passive RIS-assisted NOMA simulator, H-PPO trainer and experiment harness.
#[derive(Parser)]
#[command(name = "arisnoma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an H-PPO policy and write its checkpoint and learning curve.
    Train(Common),
    /// Greedy evaluation of a checkpoint against the random policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Sweep transmit power or panel size with the configured controller.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Evaluate this checkpoint at every point instead of training per point.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Exhaustive search over the quantized configuration space.
    Oracle(Common),
    /// Regenerate figure series from an earlier run directory.
    Export {
        #[command(flatten)]
        common: Common,
        /// Run directory containing metrics.csv.
        #[arg(long)]
        from: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in starting point: default, reference or tiny.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// ARIS_NOMA, PRIS_NOMA, ARIS_OMA or PRIS_OMA.
    #[arg(long)]
    mode: Option<Mode>,
    /// Dotted-path override, e.g. `scenario.radio.p_t_dbm=10`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
            (Some(p), None) => ExperimentConfig::load(p)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        cfg = cfg.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn finish(cfg: &ExperimentConfig, command: &str, files: Vec<PathBuf>) -> Result<()> {
    let rel = files
        .iter()
        .map(|f| f.strip_prefix(&cfg.out_dir).unwrap_or(f).to_string_lossy().into_owned())
        .collect();
    Manifest::new(cfg, command, rel)?.save(&cfg.out_dir.join("manifest.json"))?;
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_train(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    ensure_dir(&cfg.out_dir)?;
    let p = train_policy(&cfg, &cfg.resolved_scenario(), &cfg.mode.to_string())?;
    let ck = cfg.out_dir.join("policy.json");
    let curve = cfg.out_dir.join("learning_curve.csv");
    p.checkpoint.save(&ck)?;
    write_learning_curve(&curve, &p.curve)?;
    if let (Some(first), Some(last)) = (p.curve.first(), p.curve.last()) {
        println!(
            "iterations {}: mean episode reward {:.3} -> {:.3}",
            p.curve.len(),
            first.mean_episode_reward,
            last.mean_episode_reward
        );
    }
    finish(&cfg, "train", vec![ck, curve])
}

fn cmd_evaluate(c: &Common, checkpoint: &Path) -> Result<()> {
    let cfg = c.load()?;
    ensure_dir(&cfg.out_dir)?;
    let ck = Checkpoint::load(checkpoint)?;
    let trained = evaluate_policy(&ck, &cfg, cfg.episodes)?;
    let random = evaluate_random(&cfg, cfg.episodes)?;
    let metrics = cfg.out_dir.join("metrics.csv");
    write_metrics(&metrics, &[trained.row.clone(), random.row.clone()])?;
    let mut files = vec![metrics];
    let tdir = cfg.out_dir.join("traces");
    ensure_dir(&tdir)?;
    for t in trained.traces.iter().chain(&random.traces) {
        let p = tdir.join(format!("{}.csv", t.label));
        write_trace(&p, &t.slots)?;
        files.push(p);
    }
    println!(
        "trained {:.4} bps/Hz, random {:.4} bps/Hz over {} episodes",
        trained.row.mean_sum_rate, random.row.mean_sum_rate, cfg.episodes
    );
    finish(&cfg, "evaluate", files)
}

fn cmd_sweep(c: &Common, checkpoint: Option<&Path>) -> Result<()> {
    let mut cfg = c.load()?;
    if let Some(p) = checkpoint {
        cfg.sweep.controller = Controller::Trained;
        cfg.sweep.checkpoint = Some(p.to_path_buf());
    }
    let out = run_sweep(&cfg)?;
    for r in &out.rows {
        println!(
            "{} {} {}: sum rate {:.4}, outage {:.3}, EE {:.1} bit/J",
            r.mode, r.variable, r.value, r.mean_sum_rate, r.outage, r.energy_efficiency
        );
    }
    export::export(&out, &cfg, "sweep", &cfg.out_dir)?;
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_oracle(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    ensure_dir(&cfg.out_dir)?;
    let scenario = cfg.resolved_scenario();
    let path = cfg.out_dir.join("oracle.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["realization", "seed", "sum_rate", "index", "uav_x", "uav_y", "phases", "lambdas", "amplification"])?;
    for r in 0..cfg.realizations {
        let seed = derive_seed(cfg.seed, SWEEP_REALIZATIONS, r as u64);
        let o = oracle_search(&scenario, &cfg.oracle, seed)?;
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        w.write_record([
            r.to_string(),
            seed.to_string(),
            o.sum_rate.to_string(),
            o.index.to_string(),
            o.uav.0.to_string(),
            o.uav.1.to_string(),
            join(&o.phases),
            join(&o.lambdas),
            o.amplification.as_deref().map(join).unwrap_or_else(|| "bypass".into()),
        ])?;
    }
    w.flush()?;
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.sweep.controller = Controller::Oracle;
    sweep_cfg.sweep.values = vec![scenario.radio.p_t_dbm];
    sweep_cfg.sweep.variable = arisnoma::harness::SweepVariable::PtDbm;
    let out = run_sweep(&sweep_cfg)?;
    let metrics = cfg.out_dir.join("metrics.csv");
    write_metrics(&metrics, &out.rows)?;
    if let Some(r) = out.rows.first() {
        println!("oracle mean sum rate {:.4} bps/Hz over {} realizations", r.mean_sum_rate, r.realizations);
    }
    finish(&cfg, "oracle", vec![path, metrics])
}

fn cmd_export(c: &Common, from: &Path) -> Result<()> {
    let mut cfg = match Manifest::load(&from.join("manifest.json")) {
        Ok(m) if c.config.is_none() && c.preset.is_none() => m.config.with_overrides(&c.overrides)?,
        _ => c.load()?,
    };
    cfg.out_dir = c.out.clone().unwrap_or_else(|| from.to_path_buf());
    let rows = read_metric_rows(&from.join("metrics.csv"))?;
    let mut policies = Vec::new();
    let pol = from.join("policies");
    if pol.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(&pol)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for p in names {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(label) = name.strip_suffix("_curve.csv") {
                let ck = Checkpoint::load(&pol.join(format!("{label}.json")))?;
                let curve = read_learning_curve(&p)?
                    .into_iter()
                    .map(|(iteration, r)| IterationRecord {
                        iteration,
                        mean_episode_reward: r,
                        mean_step_reward: f64::NAN,
                        mean_sum_rate: f64::NAN,
                        policy_loss_d: f64::NAN,
                        policy_loss_c: f64::NAN,
                        value_loss: f64::NAN,
                        entropy: f64::NAN,
                        approx_kl: f64::NAN,
                        clip_fraction: f64::NAN,
                    })
                    .collect();
                policies.push(TrainedPolicy {
                    label: label.to_string(),
                    checkpoint: ck,
                    curve,
                });
            }
        }
    }
    let figs = cfg.out_dir.join("figures");
    ensure_dir(&figs)?;
    let out = SweepOutput {
        rows,
        traces: Vec::new(),
        policies,
    };
    let files = export::write_figures(&figs, &out)?;
    finish(&cfg, "export", files)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Evaluate { common, checkpoint } => cmd_evaluate(common, checkpoint),
        Command::Sweep { common, checkpoint } => cmd_sweep(common, checkpoint.as_deref()),
        Command::Oracle(c) => cmd_oracle(c),
        Command::Export { common, from } => cmd_export(common, from),
    }
}
