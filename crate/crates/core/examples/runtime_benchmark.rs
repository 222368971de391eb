//! Sequential wall-clock comparison of the three modes.
//!
//! Baselines run with the relative-change stop rule; the unfolded solver
//! always runs its full schedule.
//!
//! cargo run --release --example runtime_benchmark

use jcas::harness::{run_benchmark, ExperimentSpec, Sweep};
use jcas::UnfoldedParams;

fn main() -> jcas::Result<()> {
    let mut spec = ExperimentSpec::desk("bench", "jcas_out/bench");
    spec.sweep = Sweep::Users(vec![6, 8, 10, 12]);
    spec.unfolded_i_w = vec![2];
    let params = UnfoldedParams::initial(spec.solver.schedule);
    let table = run_benchmark(&spec, Some(&params))?;
    for s in table.summary() {
        println!(
            "K={:<3} {:<13} median {:>8.3} ms  mean layers {:>6.1}",
            s.value,
            s.mode,
            1e3 * s.median_runtime_s,
            s.mean_layers
        );
    }
    Ok(())
}
