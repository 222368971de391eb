//! Mean utility per outer layer for every mode, written as CSV and SVG.
//!
//! Untrained unfolded parameters are used unless a checkpoint path is given.
//!
//! cargo run --release --example convergence -- [checkpoint.json]

use jcas::harness::{export_convergence, run_convergence, ExperimentSpec};
use jcas::training::load_checkpoint_for;
use jcas::UnfoldedParams;

fn main() -> jcas::Result<()> {
    let spec = ExperimentSpec::desk("convergence", "jcas_out/convergence");
    let params = match std::env::args().nth(1) {
        Some(path) => load_checkpoint_for(path, &spec.solver)?,
        None => UnfoldedParams::initial(spec.solver.schedule),
    };
    let table = run_convergence(&spec, Some(&params))?;
    for (mode, i_w, delta) in table.curves() {
        let curve = table.curve(&mode, i_w, delta);
        let (first, last) = (curve[0], curve[curve.len() - 1]);
        println!("{mode:<13} I_w={i_w}  mean h {first:.4} -> {last:.4}");
    }
    for f in export_convergence(&table, &spec.output_dir)?.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
