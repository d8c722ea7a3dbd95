//! `slicectl`: simulate, train and evaluate admission policies from the
//! command line. Every command prints a JSON summary on stdout; failures
//! print `{"error": {"kind", "message"}}` on stderr and exit nonzero.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use slice_admission::agents::TrainLog;
use slice_admission::baselines;
use slice_admission::dt::{self, DtHyper, DtModel, Split, TraceDataset};
use slice_admission::harness::{self, EvalOptions, ExperimentConfig};
use slice_admission::neural::Checkpoint;
use slice_admission::oracle;
use slice_admission::sim::write_trace_csv;
use slice_admission::{Env, EnvConfig, Error};

#[derive(Parser)]
#[command(name = "slicectl", version, about = "Admission control for a sliced network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Environment config (TOML); the built-in reference config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Experiment settings (TOML); flags below override it.
    #[arg(long)]
    experiment: Option<PathBuf>,
    #[arg(long = "seeds", visible_alias = "seed", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    record_interval: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a baseline policy per seed and write metrics and epoch logs.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "greedy")]
        policy: String,
        /// Also write the event trace of each seed.
        #[arg(long)]
        trace: bool,
    },
    /// Record (state, action) pairs of a policy as a training dataset.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "greedy")]
        policy: String,
        #[arg(long, visible_alias = "seeds", default_value_t = 0)]
        seed: u64,
        #[arg(long, visible_alias = "epochs", default_value_t = 100_000)]
        samples: usize,
    },
    /// Fit a replica to a collected dataset.
    TrainDt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, visible_alias = "seeds", default_value_t = 0)]
        seed: u64,
        /// Maximum training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Actor-critic training, warm-started from a replica unless `--scratch`.
    TrainA2c {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        scratch: bool,
        /// Saved replica to start from.
        #[arg(long, conflicts_with = "scratch")]
        dt: Option<PathBuf>,
        /// Policy to replicate when no replica is given.
        #[arg(long, conflicts_with = "scratch")]
        dt_source: Option<String>,
        /// Critic-only epochs before joint training (warm-started runs).
        #[arg(long)]
        epochs_critic: Option<u64>,
        /// Joint epochs; same as `--epochs`.
        #[arg(long, conflicts_with = "epochs")]
        epochs_joint: Option<u64>,
    },
    /// Dueling DQN training.
    TrainDqn {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Cumulative reward of frozen policies (baseline names or checkpoints).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, num_args = 1..)]
        policy: Vec<String>,
        #[arg(long = "seeds", visible_alias = "seed", value_delimiter = ',', default_values_t = [1u64, 2, 3, 4])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = harness::EVAL_EPOCHS)]
        epochs: u64,
        #[arg(long, default_value_t = 0)]
        warmup: u64,
    },
    /// Cross-seed mean and spread band of per-seed metrics files.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        /// Window length in epochs; defaults to the files' record interval.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value = "aggregate.csv")]
        name: String,
    },
    /// Check the SMDP/MDP equivalence and renewal estimates on a small instance.
    OracleVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        queue_cap: usize,
        #[arg(long, default_value_t = 5)]
        policies: usize,
        #[arg(long, visible_alias = "seeds", default_value_t = 0)]
        seed: u64,
        /// Embedded events per renewal estimate (0 skips it).
        #[arg(long, default_value_t = 1_000_000)]
        renewal_events: usize,
    },
    /// Early-training utilization of logs `--a` relative to logs `--b`.
    Compare {
        #[arg(long, required = true, num_args = 1..)]
        a: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        b: Vec<PathBuf>,
        #[arg(long, default_value_t = harness::EARLY_HORIZON)]
        horizon: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn env_config(common: &Common) -> anyhow::Result<EnvConfig> {
    let cfg = match &common.config {
        Some(p) => EnvConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => EnvConfig::reference(),
    };
    cfg.validate()?;
    std::fs::create_dir_all(&common.out_dir)?;
    Ok(cfg)
}

fn experiment(run: &RunArgs, method: &str) -> anyhow::Result<ExperimentConfig> {
    let mut exp = match &run.experiment {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    exp.method = method.to_string();
    if let Some(s) = &run.seeds {
        exp.seeds = s.clone();
    }
    if let Some(e) = run.epochs {
        exp.epochs = e;
    }
    if let Some(r) = run.record_interval {
        exp.record_interval = r;
        if exp.window % r != 0 {
            exp.window = r;
        }
    }
    exp.validate()?;
    Ok(exp)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    match cli.command {
        Command::Simulate { run, policy, trace } => {
            let cfg = env_config(&run.common)?;
            let exp = experiment(&run, &policy)?;
            let summary = harness::run_experiment(&cfg, &exp, &run.common.out_dir)?;
            let mut traces = Vec::new();
            if trace {
                for &seed in &exp.seeds {
                    let mut env = Env::new(cfg.clone(), seed)?;
                    env.enable_trace();
                    let mut p = baselines::by_name(&policy, &cfg, seed)?;
                    for _ in 0..exp.epochs {
                        env.step_with(&mut p)?;
                    }
                    let path = run.common.out_dir.join(format!("{policy}-seed{seed}-trace.csv"));
                    write_trace_csv(BufWriter::new(File::create(&path)?), cfg.num_slices(), env.trace())?;
                    traces.push(path);
                }
            }
            Ok(json!({ "summary": summary, "traces": traces }))
        }
        Command::Collect {
            common,
            policy,
            seed,
            samples,
        } => {
            let cfg = env_config(&common)?;
            let mut env = Env::new(cfg.clone(), seed)?;
            let mut p = baselines::by_name(&policy, &cfg, seed)?;
            let ds = dt::collect(&mut env, &mut p, samples)?;
            let path = common.out_dir.join(format!("dataset-{policy}-seed{seed}.csv"));
            ds.save(&path)?;
            Ok(json!({ "dataset": path, "sidecar": TraceDataset::sidecar_path(&path), "meta": ds.meta() }))
        }
        Command::TrainDt {
            common,
            dataset,
            seed,
            epochs,
            lr,
        } => {
            let cfg = env_config(&common)?;
            let ds = TraceDataset::load(&dataset)?;
            if ds.config_hash != cfg.hash() {
                return Err(Error::Config(format!(
                    "dataset was collected under config {}, not {}",
                    ds.config_hash,
                    cfg.hash()
                ))
                .into());
            }
            let mut hyper = DtHyper { seed, ..DtHyper::default() };
            if let Some(e) = epochs {
                hyper.max_epochs = e;
            }
            if let Some(lr) = lr {
                hyper.lr = lr;
            }
            let model = dt::train_dt(&ds, &cfg, &hyper, |_| {})?;
            let test = dt::accuracy(&model, &cfg, &ds.split(Split::Test))?;
            let stem = format!("dt-{}", ds.policy);
            let ck_path = common.out_dir.join(format!("{stem}.json"));
            let mut ck = Checkpoint::new(DtModel::KIND, model.clone());
            ck.meta.insert("config_hash".into(), cfg.hash().into());
            ck.save(&ck_path)?;
            let hist_path = common.out_dir.join(format!("{stem}-history.csv"));
            let mut w = csv::Writer::from_path(&hist_path)?;
            for s in &model.history {
                w.serialize(s)?;
            }
            w.flush()?;
            Ok(json!({
                "checkpoint": ck_path,
                "history": hist_path,
                "epochs_run": model.epochs_run,
                "best_epoch": model.best_epoch,
                "best_val_loss": model.best_val_loss,
                "test_accuracy": test,
            }))
        }
        Command::TrainA2c {
            run,
            scratch,
            dt,
            dt_source,
            epochs_critic,
            epochs_joint,
        } => {
            let cfg = env_config(&run.common)?;
            let mut run = run;
            run.epochs = run.epochs.or(epochs_joint);
            let method = if scratch { "scratch-a2c" } else { "dt-assisted" };
            let mut exp = experiment(&run, method)?;
            if dt.is_some() {
                exp.dt_checkpoint = dt;
            }
            if let Some(src) = dt_source {
                exp.dt_source = src;
            }
            if let Some(e) = epochs_critic {
                exp.a2c.critic_epochs = e;
            }
            exp.validate()?;
            Ok(json!({ "summary": harness::run_experiment(&cfg, &exp, &run.common.out_dir)? }))
        }
        Command::TrainDqn { run } => {
            let cfg = env_config(&run.common)?;
            let exp = experiment(&run, "dqn")?;
            Ok(json!({ "summary": harness::run_experiment(&cfg, &exp, &run.common.out_dir)? }))
        }
        Command::Eval {
            common,
            policy,
            seeds,
            epochs,
            warmup,
        } => {
            let cfg = env_config(&common)?;
            let opts = EvalOptions { epochs, warmup };
            let reports = policy
                .iter()
                .map(|spec| harness::eval_cumulative_reward(|s| harness::policy_from_spec(spec, &cfg, s), &cfg, &seeds, opts))
                .collect::<Result<Vec<_>, _>>()?;
            let out = json!({ "reports": reports });
            write_json(&common.out_dir.join("eval.json"), &out)?;
            Ok(out)
        }
        Command::Aggregate {
            common,
            files,
            window,
            name,
        } => {
            std::fs::create_dir_all(&common.out_dir)?;
            let runs = files
                .iter()
                .map(|f| {
                    harness::read_metrics(File::open(f).with_context(|| format!("opening {}", f.display()))?)
                        .map_err(anyhow::Error::from)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let interval = runs.iter().flatten().map(|r| r.epochs).next().unwrap_or(1);
            let group = match window {
                Some(w) if w == 0 || w % interval != 0 => {
                    return Err(Error::Alignment(format!("window {w} is not a multiple of the record interval {interval}")).into())
                }
                Some(w) => w / interval,
                None => 1,
            };
            let coarse: Vec<_> = runs.iter().map(|r| harness::coarsen(r, group)).collect();
            let rows = harness::aggregate(&coarse)?;
            let hash = runs.iter().flatten().map(|r| r.config_hash.clone()).next().unwrap_or_default();
            let path = common.out_dir.join(name);
            harness::write_aggregate(BufWriter::new(File::create(&path)?), &hash, &rows)?;
            Ok(json!({ "output": path, "windows": rows.len(), "seeds": runs.len() }))
        }
        Command::OracleVerify {
            common,
            queue_cap,
            policies,
            seed,
            renewal_events,
        } => {
            let cfg = match &common.config {
                Some(_) => env_config(&common)?,
                None => {
                    std::fs::create_dir_all(&common.out_dir)?;
                    oracle::small_instance()
                }
            };
            let report = oracle::verify(&cfg, queue_cap, policies, seed, renewal_events)?;
            let value = json!({
                "report": report,
                "max_transform_error": report.max_transform_error(),
            });
            write_json(&common.out_dir.join("oracle-report.json"), &value)?;
            Ok(value)
        }
        Command::Compare { a, b, horizon, out_dir } => {
            let read = |files: &[PathBuf]| -> anyhow::Result<Vec<TrainLog>> {
                files
                    .iter()
                    .map(|f| Ok(TrainLog::read_csv(File::open(f).with_context(|| format!("opening {}", f.display()))?)?))
                    .collect()
            };
            let (la, lb) = (read(&a)?, read(&b)?);
            if la.is_empty() || lb.is_empty() {
                bail!(Error::Usage("both sides need at least one log".into()));
            }
            let out = json!(harness::compare_early_utilization(&la, &lb, horizon)?);
            std::fs::create_dir_all(&out_dir)?;
            write_json(&out_dir.join("compare.json"), &out)?;
            Ok(out)
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<Error>().map(Error::kind))
        .or_else(|| e.chain().find_map(|c| c.downcast_ref::<std::io::Error>().map(|_| "io")))
        .or_else(|| e.chain().find_map(|c| c.downcast_ref::<csv::Error>().map(|_| "csv")))
        .unwrap_or("internal")
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(error_kind(&e), format!("{e:#}"), 1),
    }
}
