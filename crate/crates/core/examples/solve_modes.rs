//! Solves one scenario with each step-size rule and prints the end points.
//!
//! cargo run --release --example solve_modes -- 1003

use jcas::metrics::{scnr_sense, sinr_comm, to_db};
use jcas::{generate_scenario, init_state, solve, SolverConfig, StepMode, SystemConfig, UnfoldedParams};

fn main() -> jcas::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1003);
    let scn = generate_scenario(&SystemConfig::desk(), seed)?;
    let init = init_state(&scn)?;
    let solver = SolverConfig::desk();
    // Untrained parameters: the fixed step and softmin temperature of the baseline.
    let params = UnfoldedParams::initial(solver.schedule);

    println!("{:<13} {:>6} {:>9} {:>13} {:>13}", "mode", "layers", "h", "min SINR dB", "min SCNR dB");
    for mode in [StepMode::FixedStep, StepMode::Backtracking, StepMode::Unfolded] {
        let (cfg, p) = match mode {
            StepMode::Unfolded => (solver.clone(), Some(&params)),
            _ => (solver.baseline(mode), None),
        };
        let sol = solve(&scn, &cfg, p, &init)?;
        let last = sol.trace.last().expect("at least one layer");
        let sinr = sinr_comm(&scn, &sol.state.w)?;
        let scnr = scnr_sense(&scn, &sol.state.w, &sol.state.f)?;
        println!(
            "{:<13} {:>6} {:>9.4} {:>13.2} {:>13.2}",
            mode.label(),
            sol.trace.len(),
            last.h,
            to_db(sinr.iter().copied().fold(f64::INFINITY, f64::min)),
            to_db(scnr.iter().copied().fold(f64::INFINITY, f64::min)),
        );
    }
    Ok(())
}
