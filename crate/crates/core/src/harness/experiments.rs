use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::plot::LinePlot;
use super::spec::{ExperimentSpec, ModeRun, Sweep};
use super::table::{mean, ConvergencePoint, ConvergenceTable, ResultRow, ResultTable};
use crate::error::{JcasError, Result};
use crate::metrics::{to_db, BeamformerState};
use crate::optimizer::{init_state, solve, SolverConfig, StepMode};
use crate::scenario::{generate_scenario, Dataset, Scenario, SplitTag, SystemConfig};
use crate::training::{
    load_checkpoint_for, save_checkpoint, train, Checkpoint, TrainConfig, TrainHistory, TrainMeta,
    UnfoldedParams,
};

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| JcasError::io(dir, e))
}

/// Output of a training run.
#[derive(Clone, Debug)]
pub struct Trained {
    pub params: UnfoldedParams,
    pub history: TrainHistory,
    pub checkpoint: Checkpoint,
}

/// Training and test splits of the experiment at the system's own `K`.
pub fn datasets(spec: &ExperimentSpec) -> Result<(Dataset, Dataset)> {
    let train = Dataset::generate(&spec.system, &spec.train_seeds, SplitTag::Train)?;
    let test = Dataset::generate(&spec.system, &spec.seeds, SplitTag::Test)?;
    Ok((train, test))
}

/// Trains unfolded parameters for `solver` on the experiment's training split.
pub fn train_for(spec: &ExperimentSpec, solver: &SolverConfig) -> Result<Trained> {
    if spec.train_seeds.is_empty() {
        return Err(JcasError::InvalidConfig("training needs train_seeds".into()));
    }
    let cfg = spec.train.clone().unwrap_or_else(TrainConfig::desk);
    let (train_set, test_set) = datasets(spec)?;
    let (params, history) = train(&train_set, Some(&test_set), &cfg, solver)?;
    let checkpoint = Checkpoint::new(
        &params,
        TrainMeta {
            epochs: cfg.epochs,
            seed: cfg.seed,
            dataset_digest: train_set.digest(),
        },
    );
    Ok(Trained {
        params,
        history,
        checkpoint,
    })
}

pub fn save_history_csv(history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| JcasError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    for r in &history.epochs {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| JcasError::io(path, e))?;
    Ok(())
}

fn train_and_save(spec: &ExperimentSpec, solver: &SolverConfig, stem: &str) -> Result<UnfoldedParams> {
    ensure_dir(&spec.output_dir)?;
    let t = train_for(spec, solver)?;
    save_checkpoint(&t.checkpoint, spec.output_dir.join(format!("{stem}.json")))?;
    save_history_csv(&t.history, spec.output_dir.join(format!("{stem}_history.csv")))?;
    Ok(t.params)
}

/// Loads the experiment's checkpoint, or trains one into `output_dir` when
/// `train_first` is set.
pub fn resolve_params(spec: &ExperimentSpec) -> Result<UnfoldedParams> {
    match (&spec.checkpoint, spec.train_first) {
        (Some(path), _) => load_checkpoint_for(path, &spec.solver),
        (None, true) => train_and_save(spec, &spec.solver, "checkpoint"),
        (None, false) => Err(JcasError::MissingCheckpoint),
    }
}

/// Parameters for a delta sweep: one per δ when `per_delta_checkpoints` is
/// set (and training is requested), otherwise a single shared set.
pub fn resolve_delta_params(spec: &ExperimentSpec) -> Result<Vec<UnfoldedParams>> {
    match (&spec.sweep, spec.per_delta_checkpoints && spec.checkpoint.is_none() && spec.train_first) {
        (Sweep::Delta(deltas), true) => deltas
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let mut solver = spec.solver.clone();
                solver.delta = d;
                train_and_save(spec, &solver, &format!("checkpoint_delta{i}"))
            })
            .collect(),
        _ => Ok(vec![resolve_params(spec)?]),
    }
}

struct Prepared {
    scenario: Scenario,
    init: BeamformerState,
}

fn prepare(system: &SystemConfig, seeds: &[u64]) -> Result<Vec<Prepared>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let scenario = generate_scenario(system, seed)?;
            let init = init_state(&scenario)?;
            Ok(Prepared { scenario, init })
        })
        .collect()
}

fn solve_cell(
    cell: &Prepared,
    run: ModeRun,
    solver: &SolverConfig,
    params: Option<&UnfoldedParams>,
    value: f64,
) -> Result<ResultRow> {
    let start = Instant::now();
    let sol = solve(&cell.scenario, solver, params, &cell.init)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let last = sol
        .trace
        .last()
        .ok_or_else(|| JcasError::InvalidConfig("solver produced an empty trace".into()))?;
    Ok(ResultRow {
        mode: run.label().to_string(),
        i_w: run.i_w,
        value,
        seed: cell.scenario.seed,
        final_h: last.h,
        min_sinr_db: to_db(last.min_sinr),
        min_scnr_db: to_db(last.min_scnr),
        layers: sol.trace.len(),
        runtime_s,
    })
}

/// Mean utility versus outer layer for the fixed-step, backtracking and
/// unfolded (one group per `unfolded_i_w`) solvers, at every δ of a delta
/// sweep or at the solver's δ otherwise. All modes run `L_out` layers.
pub fn run_convergence(spec: &ExperimentSpec, params: Option<&UnfoldedParams>) -> Result<ConvergenceTable> {
    spec.validate()?;
    let params = params.ok_or(JcasError::MissingCheckpoint)?;
    let deltas = match &spec.sweep {
        Sweep::Delta(ds) => ds.clone(),
        _ => vec![spec.solver.delta],
    };
    let cells = prepare(&spec.system, &spec.seeds)?;
    let mut jobs = Vec::new();
    for run in spec.curve_modes() {
        for &delta in &deltas {
            for cell in &cells {
                jobs.push((run, delta, cell));
            }
        }
    }
    let traces: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(run, delta, cell)| {
            let mut solver = run.solver(&spec.solver);
            solver.delta = delta;
            solver.stop = None;
            let p = (run.mode == StepMode::Unfolded).then_some(params);
            Ok(solve(&cell.scenario, &solver, p, &cell.init)?.trace.h_values())
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    for (group, chunk) in traces.chunks(cells.len()).enumerate() {
        let (run, delta, _) = jobs[group * cells.len()];
        for layer in 0..spec.solver.schedule.l_out {
            let hs: Vec<f64> = chunk.iter().map(|t| t[layer]).collect();
            points.push(ConvergencePoint {
                mode: run.label().to_string(),
                i_w: run.i_w,
                delta,
                layer: layer + 1,
                mean_h: mean(&hs),
            });
        }
    }
    Ok(ConvergenceTable { points })
}

/// Solves fresh test scenarios at every `K` of the sweep with all modes,
/// reusing one set of unfolded parameters throughout.
pub fn run_k_sweep(spec: &ExperimentSpec, params: Option<&UnfoldedParams>) -> Result<ResultTable> {
    spec.validate()?;
    let ks = match &spec.sweep {
        Sweep::Users(ks) => ks.clone(),
        _ => vec![spec.system.k],
    };
    let params = params.ok_or(JcasError::MissingCheckpoint)?;
    let mut cells = Vec::new();
    for &k in &ks {
        cells.push((k, prepare(&spec.system.with_users(k), &spec.seeds)?));
    }
    let mut jobs = Vec::new();
    for run in spec.sweep_modes() {
        for (k, prepared) in &cells {
            for cell in prepared {
                jobs.push((run, *k as f64, cell));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(run, value, cell)| {
            let p = (run.mode == StepMode::Unfolded).then_some(params);
            solve_cell(cell, run, &run.solver(&spec.solver), p, value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable::new("K", rows))
}

/// Solves the test scenarios at every δ of the sweep. `params` holds either
/// one shared parameter set or one per δ.
pub fn run_delta_sweep(spec: &ExperimentSpec, params: &[UnfoldedParams]) -> Result<ResultTable> {
    spec.validate()?;
    let deltas = match &spec.sweep {
        Sweep::Delta(ds) => ds.clone(),
        _ => vec![spec.solver.delta],
    };
    let pick = |i: usize| -> Result<&UnfoldedParams> {
        match params.len() {
            0 => Err(JcasError::MissingCheckpoint),
            1 => Ok(&params[0]),
            n if n == deltas.len() => Ok(&params[i]),
            n => Err(JcasError::InvalidConfig(format!(
                "{n} parameter sets for {} delta values",
                deltas.len()
            ))),
        }
    };
    let cells = prepare(&spec.system, &spec.seeds)?;
    let mut jobs = Vec::new();
    for run in spec.sweep_modes() {
        for (i, &delta) in deltas.iter().enumerate() {
            let p = (run.mode == StepMode::Unfolded).then(|| pick(i)).transpose()?;
            for cell in &cells {
                jobs.push((run, i, delta, p, cell));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(run, _, delta, p, cell)| {
            let mut solver = run.solver(&spec.solver);
            solver.delta = delta;
            solve_cell(cell, run, &solver, p, delta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable::new("delta", rows))
}

/// Wall-clock per solve, strictly sequential on the calling thread.
///
/// Baselines run until the stop rule fires (or its layer cap); the unfolded
/// groups run their fixed schedule. One discarded solve per mode and `K`
/// warms caches before timing.
pub fn run_benchmark(spec: &ExperimentSpec, params: Option<&UnfoldedParams>) -> Result<ResultTable> {
    spec.validate()?;
    let ks = match &spec.sweep {
        Sweep::Users(ks) => ks.clone(),
        _ => vec![spec.system.k],
    };
    let params = params.ok_or(JcasError::MissingCheckpoint)?;
    let mut rows = Vec::new();
    for &k in &ks {
        let system = spec.system.with_users(k);
        let cells = spec
            .seeds
            .iter()
            .map(|&seed| {
                let scenario = generate_scenario(&system, seed)?;
                let init = init_state(&scenario)?;
                Ok(Prepared { scenario, init })
            })
            .collect::<Result<Vec<_>>>()?;
        for run in spec.curve_modes() {
            let mut solver = run.solver(&spec.solver);
            let p = match run.mode {
                StepMode::Unfolded => Some(params),
                _ => {
                    solver.stop = Some(spec.stop_rule());
                    None
                }
            };
            solve(&cells[0].scenario, &solver, p, &cells[0].init)?;
            for cell in &cells {
                rows.push(solve_cell(cell, run, &solver, p, k as f64)?);
            }
        }
    }
    Ok(ResultTable::new("K", rows))
}

/// Paths written by an export.
#[derive(Clone, Debug, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

pub fn convergence_plot(table: &ConvergenceTable) -> LinePlot {
    let mut plot = LinePlot::new("Mean utility per outer layer", "outer layer", "mean h");
    let curves = table.curves();
    let many_deltas = curves.iter().any(|c| c.2 != curves[0].2);
    for (mode, i_w, delta) in curves.iter().cloned() {
        let mut name = series_name(&mode, i_w);
        if many_deltas {
            name.push_str(&format!(" delta={delta}"));
        }
        let ys = table.curve(&mode, i_w, delta);
        plot.push(name, ys.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect());
    }
    plot
}

/// Writes `convergence.csv` and the SVG rendered from it.
pub fn export_convergence(table: &ConvergenceTable, dir: &Path) -> Result<Written> {
    ensure_dir(dir)?;
    let csv = dir.join("convergence.csv");
    let svg = dir.join("convergence.svg");
    table.save_csv(&csv)?;
    render_convergence_svg(&csv, &svg)?;
    Ok(Written { files: vec![csv, svg] })
}

pub fn render_convergence_svg(csv: &Path, svg: &Path) -> Result<()> {
    convergence_plot(&ConvergenceTable::load_csv(csv)?).save(svg)
}

fn series_name(mode: &str, i_w: usize) -> String {
    if mode == StepMode::Unfolded.label() {
        format!("{mode} I_w={i_w}")
    } else {
        mode.to_string()
    }
}

fn groups(table: &ResultTable) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for r in &table.rows {
        let key = (r.mode.clone(), r.i_w);
        if !out.contains(&key) {
            out.push(key);
        }
    }
    out
}

/// Plots derived from a sweep table, keyed by file stem suffix.
pub fn sweep_plots(table: &ResultTable) -> Vec<(&'static str, LinePlot)> {
    let axis = table.axis.as_str();
    let mut sinr = LinePlot::new("Mean minimum SINR", axis, "min SINR [dB]");
    let mut scnr = LinePlot::new("Mean minimum SCNR", axis, "min SCNR [dB]");
    let mut time = LinePlot::new("Mean run time per solve", axis, "time [ms]");
    let mut tradeoff = LinePlot::new("Communications-sensing trade-off", "min SINR [dB]", "min SCNR [dB]");
    for (mode, i_w) in groups(table) {
        let s = table.series(&mode, i_w);
        let name = series_name(&mode, i_w);
        sinr.push(name.clone(), s.iter().map(|r| (r.value, r.mean_min_sinr_db)).collect());
        scnr.push(name.clone(), s.iter().map(|r| (r.value, r.mean_min_scnr_db)).collect());
        time.push(name.clone(), s.iter().map(|r| (r.value, 1e3 * r.mean_runtime_s)).collect());
        tradeoff.push(name, s.iter().map(|r| (r.mean_min_sinr_db, r.mean_min_scnr_db)).collect());
    }
    match axis {
        "delta" => vec![("tradeoff", tradeoff), ("sinr", sinr), ("scnr", scnr)],
        _ => vec![("sinr", sinr), ("scnr", scnr), ("runtime", time)],
    }
}

/// Writes `{stem}.csv`, `{stem}_summary.csv` and one SVG per plot, each
/// rendered from the written CSV.
pub fn export_sweep(table: &ResultTable, dir: &Path, stem: &str) -> Result<Written> {
    ensure_dir(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let summary = dir.join(format!("{stem}_summary.csv"));
    table.save_csv(&csv)?;
    table.save_summary_csv(&summary)?;
    let mut files = vec![csv.clone(), summary];
    files.extend(render_sweep_svgs(&table.axis, &csv, dir, stem)?);
    Ok(Written { files })
}

pub fn render_sweep_svgs(axis: &str, csv: &Path, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let table = ResultTable::load_csv(axis, csv)?;
    let mut out = Vec::new();
    for (suffix, plot) in sweep_plots(&table) {
        let path = dir.join(format!("{stem}_{suffix}.svg"));
        plot.save(&path)?;
        out.push(path);
    }
    Ok(out)
}
