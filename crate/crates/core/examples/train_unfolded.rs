//! Trains the unfolded step sizes on a small split and saves a checkpoint.
//!
//! cargo run --release --example train_unfolded -- /tmp/jcas_ckpt.json

use jcas::scenario::SplitTag;
use jcas::training::{save_checkpoint, Checkpoint, TrainMeta};
use jcas::{train, Dataset, SolverConfig, SystemConfig, TrainConfig, UnfoldedParams};

fn main() -> jcas::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "checkpoint.json".into());
    let cfg = SystemConfig::desk();
    let train_set = Dataset::generate(&cfg, &(0..60).collect::<Vec<_>>(), SplitTag::Train)?;
    let test_set = Dataset::generate(&cfg, &(1000..1020).collect::<Vec<_>>(), SplitTag::Test)?;

    let solver = SolverConfig::desk();
    let mut tc = TrainConfig::desk();
    tc.epochs = 5;
    let (params, history) = train(&train_set, Some(&test_set), &tc, &solver)?;
    for e in &history.epochs {
        println!("epoch {:>2}  loss {:>9.5}  test mean h {:.4}", e.epoch, e.train_loss, e.test_mean_h);
    }
    println!("kept epoch {}", history.best_epoch);

    let first = UnfoldedParams::initial(solver.schedule);
    println!("layer  beta[.][0] before -> after");
    for (l, (a, b)) in first.beta.iter().zip(&params.beta).enumerate().step_by(10) {
        println!("{l:>5}  {:.4} -> {:.4}", a[0], b[0]);
    }
    println!("mu_c {:.2} -> {:.2}, mu_s {:.2} -> {:.2}", first.mu_c, params.mu_c, first.mu_s, params.mu_s);

    let meta = TrainMeta {
        epochs: tc.epochs,
        seed: tc.seed,
        dataset_digest: train_set.digest(),
    };
    save_checkpoint(&Checkpoint::new(&params, meta), &out)?;
    println!("wrote {out}");
    Ok(())
}
