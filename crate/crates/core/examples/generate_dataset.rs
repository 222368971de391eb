//! Generates a small train/test pair and shows that regeneration is exact.
//!
//! cargo run --release --example generate_dataset -- /tmp/jcas_data

use jcas::scenario::{load_dataset, save_dataset, SplitTag};
use jcas::{Dataset, SystemConfig};

fn main() -> jcas::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "jcas_data".into());
    std::fs::create_dir_all(&dir).expect("create output directory");
    let cfg = SystemConfig::desk();

    let train = Dataset::generate(&cfg, &(0..100).collect::<Vec<_>>(), SplitTag::Train)?;
    let test = Dataset::generate(&cfg, &(1000..1020).collect::<Vec<_>>(), SplitTag::Test)?;
    let path = format!("{dir}/test.json");
    save_dataset(&train, format!("{dir}/train.json"))?;
    save_dataset(&test, &path)?;

    let scn = &test.scenarios[0];
    println!("Nt={} Nr={} K={} M={} C={}", scn.nt(), scn.nr(), scn.k(), scn.m(), scn.config.c);
    println!("train sha256 {}", train.digest());
    println!("test  sha256 {}", test.digest());

    let again = Dataset::generate(&cfg, &test.scenarios.iter().map(|s| s.seed).collect::<Vec<_>>(), SplitTag::Test)?;
    assert_eq!(again, load_dataset(&path)?);
    println!("regenerated test split matches {path}");
    Ok(())
}
