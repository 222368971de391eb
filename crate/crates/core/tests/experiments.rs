mod common;

use common::*;
use jcas::harness::experiments::{convergence_plot, render_convergence_svg, render_sweep_svgs};
use jcas::harness::{
    export_convergence, export_sweep, run_benchmark, run_convergence, run_delta_sweep, run_k_sweep, ExperimentSpec,
    ResultTable, Sweep,
};
use jcas::metrics::surrogate_objective;
use jcas::optimizer::{init_state, solve, solve_observed, Schedule, SolveEvent, SolverConfig, StepMode};
use jcas::scenario::{Dataset, SplitTag, SystemConfig};
use jcas::training::{estimate_gradient, training_loss, Estimator};
use jcas::{JcasError, UnfoldedParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_spec(dir: &std::path::Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::desk("small", dir);
    spec.seeds = vec![900, 901, 902, 903];
    spec.solver.schedule = Schedule::new(8, 3, 2);
    spec
}

fn params(spec: &ExperimentSpec) -> UnfoldedParams {
    UnfoldedParams::initial(spec.solver.schedule)
}

#[test]
fn every_mode_improves_on_average() {
    let solver = SolverConfig::desk();
    let p = UnfoldedParams::initial(solver.schedule);
    for (mode, cfg) in [
        (StepMode::FixedStep, solver.baseline(StepMode::FixedStep)),
        (StepMode::Backtracking, solver.baseline(StepMode::Backtracking)),
        (StepMode::Unfolded, solver.clone()),
    ] {
        let (mut first, mut last) = (0.0, 0.0);
        for seed in 0..20 {
            let scn = desk(seed);
            let init = init_state(&scn).unwrap();
            let params = (mode == StepMode::Unfolded).then_some(&p);
            let trace = solve(&scn, &cfg, params, &init).unwrap().trace;
            assert_eq!(trace.len(), 50);
            first += trace.records[0].h;
            last += trace.last().unwrap().h;
        }
        assert!(last > first, "{mode:?}: mean h {} -> {}", first / 20.0, last / 20.0);
    }
}

#[test]
fn unfolded_with_constant_table_reproduces_fixed_step() {
    let mut solver = SolverConfig::desk();
    solver.schedule = Schedule::new(10, 3, 1);
    let p = UnfoldedParams::constant(solver.schedule, solver.fixed_beta, solver.mu_c);
    let fixed = solver.baseline(StepMode::FixedStep);
    for seed in 0..3 {
        let scn = desk(seed);
        let init = init_state(&scn).unwrap();
        let a = solve(&scn, &solver, Some(&p), &init).unwrap();
        let b = solve(&scn, &fixed, None, &init).unwrap();
        assert_eq!(a.state.w, b.state.w);
        assert_eq!(a.trace.h_values(), b.trace.h_values());
    }
}

#[test]
fn baselines_stop_early_but_unfolded_runs_its_schedule() {
    let mut solver = SolverConfig::desk();
    solver.stop = Some(Default::default());
    let scn = desk(3);
    let init = init_state(&scn).unwrap();
    let fixed = solve(&scn, &solver.baseline(StepMode::FixedStep), None, &init).unwrap();
    assert!(fixed.trace.len() > 5 && fixed.trace.len() <= 500);
    let p = UnfoldedParams::initial(solver.schedule);
    let unfolded = solve(&scn, &solver, Some(&p), &init).unwrap();
    assert_eq!(unfolded.trace.len(), 50);
}

#[test]
fn spsa_agrees_with_finite_differences_on_a_small_schedule() {
    let mut solver = SolverConfig::desk();
    solver.schedule = Schedule::new(1, 2, 1);
    let scenarios = Dataset::generate(&SystemConfig::desk(), &[1, 2, 3, 4], SplitTag::Train)
        .unwrap()
        .scenarios;
    let base = UnfoldedParams::constant(solver.schedule, 0.05, 2.0);
    assert_eq!(base.dim(), 4);
    let loss = |v: &[f64]| training_loss(&base.with_vector(v), &scenarios, &solver);
    let phi = base.to_vector();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fd = estimate_gradient(loss, &phi, Estimator::ForwardFd, 1e-6, 1, &mut rng).unwrap();
    let spsa = estimate_gradient(loss, &phi, Estimator::Spsa, 1e-4, 400, &mut rng).unwrap();
    let dot: f64 = fd.iter().zip(&spsa).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = dot / (norm(&fd) * norm(&spsa));
    assert!(cos > 0.9, "cosine {cos}: fd {fd:?} spsa {spsa:?}");
}

#[test]
fn convergence_has_four_curve_groups_and_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let p = params(&spec);
    let table = run_convergence(&spec, Some(&p)).unwrap();
    let curves = table.curves();
    assert_eq!(curves.len(), 4);
    assert_eq!(
        curves.iter().map(|c| (c.0.as_str(), c.1)).collect::<Vec<_>>(),
        vec![("fixed_beta", 1), ("backtracking", 1), ("unfolded", 2), ("unfolded", 4)]
    );
    assert!(curves.iter().all(|c| table.curve(&c.0, c.1, c.2).len() == 8));

    let out1 = dir.path().join("one");
    let out2 = dir.path().join("two");
    export_convergence(&table, &out1).unwrap();
    export_convergence(&run_convergence(&spec, Some(&p)).unwrap(), &out2).unwrap();
    for f in ["convergence.csv", "convergence.svg"] {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f}");
    }

    // The SVG is a pure function of the CSV.
    let svg = out1.join("convergence.svg");
    let before = std::fs::read(&svg).unwrap();
    std::fs::remove_file(&svg).unwrap();
    render_convergence_svg(&out1.join("convergence.csv"), &svg).unwrap();
    assert_eq!(std::fs::read(&svg).unwrap(), before);
    assert_eq!(convergence_plot(&table).series.len(), 4);
}

#[test]
fn single_layer_schedule_gives_single_point_curves() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    spec.solver.schedule = Schedule::new(1, 3, 2);
    let table = run_convergence(&spec, Some(&params(&spec))).unwrap();
    assert_eq!(table.points.len(), 4);
    export_convergence(&table, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "mode,i_w,delta,layer,mean_h");
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn unfolded_runs_need_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    assert!(matches!(run_convergence(&spec, None), Err(JcasError::MissingCheckpoint)));
    assert!(matches!(run_k_sweep(&spec, None), Err(JcasError::MissingCheckpoint)));
    assert!(matches!(run_delta_sweep(&spec, &[]), Err(JcasError::MissingCheckpoint)));
    assert!(matches!(run_benchmark(&spec, None), Err(JcasError::MissingCheckpoint)));
    let mut no_ckpt = spec.clone();
    no_ckpt.train_first = false;
    assert!(matches!(
        jcas::harness::resolve_params(&no_ckpt),
        Err(JcasError::MissingCheckpoint)
    ));
}

#[test]
fn k_sweep_grid_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    spec.sweep = Sweep::Users(vec![2, 4]);
    let p = params(&spec);
    let a = run_k_sweep(&spec, Some(&p)).unwrap();
    a.check_complete().unwrap();
    assert_eq!(a.rows.len(), 3 * 2 * spec.seeds.len());
    let b = run_k_sweep(&spec, Some(&p)).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());

    spec.sweep = Sweep::Users(vec![3]);
    let single = run_k_sweep(&spec, Some(&p)).unwrap();
    let summary = single.summary();
    assert_eq!(summary.len(), 3);
    assert!(summary.iter().all(|s| s.value == 3.0 && s.seeds == spec.seeds.len()));

    let files = export_sweep(&a, dir.path(), "k").unwrap().files;
    assert_eq!(files.len(), 5);
    let back = ResultTable::load_csv("K", dir.path().join("k.csv")).unwrap();
    assert_eq!(back, a);
    let svg = dir.path().join("k_sinr.svg");
    let before = std::fs::read(&svg).unwrap();
    std::fs::remove_file(&svg).unwrap();
    render_sweep_svgs("K", &dir.path().join("k.csv"), dir.path(), "k").unwrap();
    assert_eq!(std::fs::read(&svg).unwrap(), before);
}

#[test]
fn delta_sweep_degenerate_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    spec.sweep = Sweep::Delta(vec![0.0, 1.0, 1.0, 10.0]);
    let table = run_delta_sweep(&spec, &[params(&spec)]).unwrap();
    let unfolded = table.series("unfolded", 2);
    // Duplicated values pool into one cell with twice the seeds.
    assert_eq!(unfolded.len(), 3);
    assert_eq!(unfolded[1].seeds, 2 * spec.seeds.len());
    let rows: Vec<_> = table.rows.iter().filter(|r| r.mode == "unfolded" && r.value == 1.0).collect();
    let (first, second) = rows.split_at(spec.seeds.len());
    for (a, b) in first.iter().zip(second) {
        assert_eq!((a.seed, a.final_h, a.min_sinr_db), (b.seed, b.final_h, b.min_sinr_db));
    }
    // Without the sensing term the worst user does best.
    assert!(unfolded[0].mean_min_sinr_db >= unfolded[1].mean_min_sinr_db);
    assert!(unfolded[0].mean_min_sinr_db >= unfolded[2].mean_min_sinr_db);

    let wrong = vec![params(&spec); 2];
    assert!(matches!(run_delta_sweep(&spec, &wrong), Err(JcasError::InvalidConfig(_))));
}

#[test]
fn benchmark_single_cell_has_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(dir.path());
    spec.seeds = vec![900];
    spec.unfolded_i_w = vec![2];
    let table = run_benchmark(&spec, Some(&params(&spec))).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.iter().all(|r| r.runtime_s > 0.0));
    let unfolded = table.rows.iter().find(|r| r.mode == "unfolded").unwrap();
    assert_eq!(unfolded.layers, 8);
}

/// Armijo steps raise the surrogate at the layer's auxiliaries and combiner.
/// The utility itself can drop between layers as the softmin weights move.
#[test]
fn backtracking_layers_never_lower_their_surrogate() {
    let cfg = SolverConfig::desk().baseline(StepMode::Backtracking);
    for seed in 0..20 {
        let scn = desk(seed);
        let init = init_state(&scn).unwrap();
        let mut w_prev = init.w.clone();
        let (mut aux, mut f) = (None, None);
        let mut worst = 0.0f64;
        solve_observed(&scn, &cfg, None, &init, &mut |e| match e {
            SolveEvent::Aux { aux: a, .. } => aux = Some(a.clone()),
            SolveEvent::Combiner { f: next, .. } => f = Some(next.clone()),
            SolveEvent::Precoder { w, .. } => {
                if let (Some(a), Some(f)) = (&aux, &f) {
                    let before = surrogate_objective(&scn, &w_prev, f, a, cfg.delta).unwrap();
                    let after = surrogate_objective(&scn, w, f, a, cfg.delta).unwrap();
                    worst = worst.max(before - after);
                }
                w_prev = w.clone();
            }
        })
        .unwrap();
        assert!(worst <= 1e-12, "seed {seed}: surrogate fell by {worst:e}");
    }
}
