//! Worst-user SINR and worst-target SCNR as the number of users grows.
//!
//! cargo run --release --example k_sweep

use jcas::harness::{export_sweep, run_k_sweep, ExperimentSpec, Sweep};

fn main() -> jcas::Result<()> {
    let mut spec = ExperimentSpec::desk("k_sweep", "jcas_out/k_sweep");
    spec.sweep = Sweep::Users(vec![2, 4, 8]);
    // Trains once on the desk split; pass a checkpoint through the CLI to skip this.
    let params = jcas::harness::resolve_params(&spec)?;
    let table = run_k_sweep(&spec, Some(&params))?;
    println!("{:>3} {:<13} {:>12} {:>12}", "K", "mode", "SINR dB", "SCNR dB");
    for s in table.summary() {
        println!("{:>3} {:<13} {:>12.2} {:>12.2}", s.value, s.mode, s.mean_min_sinr_db, s.mean_min_scnr_db);
    }
    export_sweep(&table, &spec.output_dir, "sweep_k")?;
    Ok(())
}
