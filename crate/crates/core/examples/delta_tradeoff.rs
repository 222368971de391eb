//! Communications versus sensing as the sensing weight delta varies.
//!
//! cargo run --release --example delta_tradeoff

use jcas::harness::{export_sweep, run_delta_sweep, ExperimentSpec, Sweep};
use jcas::UnfoldedParams;

fn main() -> jcas::Result<()> {
    let mut spec = ExperimentSpec::desk("delta", "jcas_out/delta");
    spec.sweep = Sweep::Delta(vec![0.0, 0.1, 1.0, 10.0, 100.0]);
    let params = UnfoldedParams::initial(spec.solver.schedule);
    let table = run_delta_sweep(&spec, &[params])?;
    println!("{:>7} {:<13} {:>10} {:>10}", "delta", "mode", "SINR dB", "SCNR dB");
    for s in table.summary() {
        println!("{:>7} {:<13} {:>10.2} {:>10.2}", s.value, s.mode, s.mean_min_sinr_db, s.mean_min_scnr_db);
    }
    export_sweep(&table, &spec.output_dir, "sweep_delta")?;
    Ok(())
}
