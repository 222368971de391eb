use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use super::experiments::{
    ensure_dir, export_convergence, export_sweep, resolve_delta_params, resolve_params, run_benchmark,
    run_convergence, run_delta_sweep, run_k_sweep, save_history_csv,
};
use super::spec::{ExperimentSpec, Sweep};
use super::configure_threads;
use crate::error::{JcasError, Result};
use crate::metrics::to_db;
use crate::optimizer::{init_state, solve, StepMode};
use crate::scenario::{load_dataset, save_dataset, Dataset, SplitTag};
use crate::training::{load_checkpoint_for, save_checkpoint, train, Checkpoint, TrainConfig, TrainMeta};

#[derive(Parser, Debug)]
#[command(
    name = "jcas",
    version,
    about = "Max-min fair beamforming for joint communications and sensing",
    after_help = "Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.\n\
                  JCAS_THREADS caps the worker threads used by sweeps and training."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment description (JSON). Defaults to the desk preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed: test seeds start here, training seeds follow them.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the experiment's `output_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Trained parameters for the unfolded mode.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Train a checkpoint into the output directory when none is given.
    #[arg(long)]
    train_first: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    FixedBeta,
    Backtracking,
    Unfolded,
}

impl From<ModeArg> for StepMode {
    fn from(m: ModeArg) -> StepMode {
        match m {
            ModeArg::FixedBeta => StepMode::FixedStep,
            ModeArg::Backtracking => StepMode::Backtracking,
            ModeArg::Unfolded => StepMode::Unfolded,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train.json and test.json datasets.
    Gen(Common),
    /// Train the unfolded solver; writes checkpoint.json and train_history.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.json/test.json from `gen` (generated otherwise).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Solve one scenario of a dataset and write its trace CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Mean utility versus outer layer for every mode.
    Convergence(RunArgs),
    /// Minimum SINR/SCNR versus the number of users.
    SweepK(RunArgs),
    /// Communications-sensing trade-off versus the weight delta.
    SweepDelta(RunArgs),
    /// Sequential run-time benchmark versus the number of users.
    Bench(RunArgs),
}

fn load_spec(common: &Common, name: &str, default_sweep: Sweep) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => {
            let mut s = ExperimentSpec::desk(name, "jcas_out");
            s.sweep = default_sweep;
            s
        }
    };
    if let Some(seed) = common.seed {
        spec.reseed(seed);
    }
    if let Some(out) = &common.out {
        spec.output_dir = out.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn load_run_spec(args: &RunArgs, name: &str, default_sweep: Sweep) -> Result<ExperimentSpec> {
    let mut spec = load_spec(&args.common, name, default_sweep)?;
    if let Some(path) = &args.checkpoint {
        spec.checkpoint = Some(path.clone());
    }
    if args.train_first {
        spec.train_first = true;
    }
    Ok(spec)
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run_gen(common: &Common) -> Result<()> {
    let spec = load_spec(common, "gen", Sweep::None)?;
    ensure_dir(&spec.output_dir)?;
    let train = Dataset::generate(&spec.system, &spec.train_seeds, SplitTag::Train)?;
    let test = Dataset::generate(&spec.system, &spec.seeds, SplitTag::Test)?;
    let (tp, sp) = (spec.output_dir.join("train.json"), spec.output_dir.join("test.json"));
    save_dataset(&train, &tp)?;
    save_dataset(&test, &sp)?;
    println!("train: {} scenarios, sha256 {}", train.len(), train.digest());
    println!("test: {} scenarios, sha256 {}", test.len(), test.digest());
    report(&[tp, sp]);
    Ok(())
}

fn run_train(common: &Common, data: Option<&Path>) -> Result<()> {
    let spec = load_spec(common, "train", Sweep::None)?;
    let (train_set, test_set) = match data {
        Some(dir) => (load_dataset(dir.join("train.json"))?, load_dataset(dir.join("test.json"))?),
        None => super::experiments::datasets(&spec)?,
    };
    let cfg = spec.train.clone().unwrap_or_else(TrainConfig::desk);
    let (params, history) = train(&train_set, Some(&test_set), &cfg, &spec.solver)?;
    for e in &history.epochs {
        println!(
            "epoch {:>3}  train loss {:>10.5}  test mean h {:>8.4}",
            e.epoch, e.train_loss, e.test_mean_h
        );
    }
    if let Some(why) = &history.aborted {
        eprintln!("training stopped early: {why}");
    }
    println!("kept parameters from epoch {}", history.best_epoch);
    ensure_dir(&spec.output_dir)?;
    let ckpt = Checkpoint::new(
        &params,
        TrainMeta {
            epochs: cfg.epochs,
            seed: cfg.seed,
            dataset_digest: train_set.digest(),
        },
    );
    let (cp, hp) = (
        spec.output_dir.join("checkpoint.json"),
        spec.output_dir.join("train_history.csv"),
    );
    save_checkpoint(&ckpt, &cp)?;
    save_history_csv(&history, &hp)?;
    report(&[cp, hp]);
    Ok(())
}

fn run_solve(common: &Common, dataset: &Path, index: usize, mode: StepMode, checkpoint: Option<&Path>) -> Result<()> {
    let spec = load_spec(common, "solve", Sweep::None)?;
    let ds = load_dataset(dataset)?;
    let scn = ds.scenarios.get(index).ok_or_else(|| {
        JcasError::InvalidConfig(format!("--index {index} out of range for {} scenarios", ds.len()))
    })?;
    let solver = match mode {
        StepMode::Unfolded => {
            let mut s = spec.solver.clone();
            s.mode = mode;
            s
        }
        _ => spec.solver.baseline(mode),
    };
    let params = match (mode, checkpoint.or(spec.checkpoint.as_deref())) {
        (StepMode::Unfolded, Some(path)) => Some(load_checkpoint_for(path, &solver)?),
        (StepMode::Unfolded, None) => return Err(JcasError::MissingCheckpoint),
        _ => None,
    };
    let init = init_state(scn)?;
    let sol = solve(scn, &solver, params.as_ref(), &init)?;
    let last = sol
        .trace
        .last()
        .ok_or_else(|| JcasError::InvalidConfig("empty trace".into()))?;
    println!("mode        {}", mode.label());
    println!("layers      {}", sol.trace.len());
    println!("final h     {:.6}", last.h);
    println!("min SINR    {:.3} dB", to_db(last.min_sinr));
    println!("min SCNR    {:.3} dB", to_db(last.min_scnr));
    ensure_dir(&spec.output_dir)?;
    let path = spec.output_dir.join(format!("trace_{}_{index}.csv", mode.label()));
    sol.trace.save_csv(&path)?;
    report(&[path]);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen(common) => run_gen(&common),
        Command::Train { common, data } => run_train(&common, data.as_deref()),
        Command::Solve {
            common,
            dataset,
            index,
            mode,
            checkpoint,
        } => run_solve(&common, &dataset, index, mode.into(), checkpoint.as_deref()),
        Command::Convergence(args) => {
            let spec = load_run_spec(&args, "convergence", Sweep::None)?;
            let params = resolve_params(&spec)?;
            let table = run_convergence(&spec, Some(&params))?;
            report(&export_convergence(&table, &spec.output_dir)?.files);
            Ok(())
        }
        Command::SweepK(args) => {
            let spec = load_run_spec(&args, "sweep_k", Sweep::Users(vec![2, 4, 8]))?;
            let params = resolve_params(&spec)?;
            let table = run_k_sweep(&spec, Some(&params))?;
            report(&export_sweep(&table, &spec.output_dir, "sweep_k")?.files);
            Ok(())
        }
        Command::SweepDelta(args) => {
            let spec = load_run_spec(&args, "sweep_delta", Sweep::Delta(vec![0.1, 1.0, 10.0, 100.0]))?;
            let params = resolve_delta_params(&spec)?;
            let table = run_delta_sweep(&spec, &params)?;
            report(&export_sweep(&table, &spec.output_dir, "sweep_delta")?.files);
            Ok(())
        }
        Command::Bench(args) => {
            let spec = load_run_spec(&args, "bench", Sweep::Users(vec![6, 8, 10, 12]))?;
            let params = resolve_params(&spec)?;
            let table = run_benchmark(&spec, Some(&params))?;
            for s in table.summary() {
                println!(
                    "K={:<3} {:<13} I_w={}  mean {:>9.3} ms  median {:>9.3} ms  layers {:>6.1}",
                    s.value,
                    s.mode,
                    s.i_w,
                    1e3 * s.mean_runtime_s,
                    1e3 * s.median_runtime_s,
                    s.mean_layers
                );
            }
            report(&export_sweep(&table, &spec.output_dir, "bench")?.files);
            Ok(())
        }
    }
}

/// Parses `args` (program name first) and runs the command.
///
/// Returns the process exit status: 0 on success, 1 on usage errors and
/// 2 on runtime failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
