//! One antenna, one user, one target: the solver against an exhaustive grid.

use jcas::metrics::utility_h;
use jcas::{generate_scenario, init_state, solve, CMatrix, SolverConfig, StepMode, SystemConfig};

fn main() -> jcas::Result<()> {
    let mut cfg = SystemConfig::desk();
    cfg.nt = 1;
    cfg.nr = 1;
    cfg.m = 1;
    cfg.c = 0;
    let cfg = cfg.with_users(1);
    let solver = SolverConfig::desk().baseline(StepMode::Backtracking);

    for seed in 0..5 {
        let scn = generate_scenario(&cfg, seed)?;
        let sol = solve(&scn, &solver, None, &init_state(&scn)?)?;
        let got = sol.trace.last().expect("at least one layer").h;

        // The utility ignores phases and the combiner scale, so a real grid
        // over |w| suffices.
        let wmax = scn.config.pt.sqrt();
        let f = CMatrix::from_real_diag(&[1.0]);
        let mut best = f64::NEG_INFINITY;
        for i in 1..=20_000 {
            let w = CMatrix::from_real_diag(&[wmax * i as f64 / 20_000.0]);
            best = best.max(utility_h(&scn, &w, &f, solver.delta)?);
        }
        println!("seed {seed}: solver {got:.8}  grid {best:.8}  gap {:.1e}", best - got);
    }
    Ok(())
}
