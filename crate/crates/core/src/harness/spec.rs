use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::optimizer::{Schedule, SolverConfig, StepMode, StopRule};
use crate::scenario::{read_json, write_json, SystemConfig};
use crate::training::TrainConfig;

/// Axis an experiment sweeps over.
///
/// In JSON: `{"K": [2, 4, 8]}`, `{"delta": [0.1, 1.0]}` or `"none"`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Sweep {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "K")]
    Users(Vec<usize>),
    #[serde(rename = "delta")]
    Delta(Vec<f64>),
}

impl Sweep {
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::Users(_) => "K",
            Sweep::Delta(_) => "delta",
        }
    }
}

/// Everything needed to rerun an experiment from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: SystemConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub sweep: Sweep,
    /// Evaluation scenario seeds.
    pub seeds: Vec<u64>,
    /// Training scenario seeds, disjoint from `seeds`.
    #[serde(default)]
    pub train_seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Trained parameters for the unfolded mode.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Train (and save) a checkpoint when none is given.
    #[serde(default)]
    pub train_first: bool,
    /// With a delta sweep and `train_first`, train one checkpoint per δ
    /// instead of sharing the one trained at `solver.delta`.
    #[serde(default)]
    pub per_delta_checkpoints: bool,
    /// `I_w` values of the unfolded curves in convergence and benchmark runs.
    #[serde(default = "default_unfolded_i_w")]
    pub unfolded_i_w: Vec<usize>,
}

fn default_unfolded_i_w() -> Vec<usize> {
    vec![2, 4]
}

/// One curve group: a step rule and its precoder repeat count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeRun {
    pub mode: StepMode,
    pub i_w: usize,
}

impl ModeRun {
    pub fn baseline(mode: StepMode) -> Self {
        ModeRun { mode, i_w: 1 }
    }

    pub fn unfolded(i_w: usize) -> Self {
        ModeRun {
            mode: StepMode::Unfolded,
            i_w,
        }
    }

    pub fn label(&self) -> &'static str {
        self.mode.label()
    }

    /// `base` with this mode and `I_w` applied.
    pub fn solver(&self, base: &SolverConfig) -> SolverConfig {
        let mut s = base.clone();
        s.mode = self.mode;
        s.schedule.i_w = self.i_w;
        s
    }
}

impl ExperimentSpec {
    /// Desk-scale experiment: 100 training and 20 test scenarios, 10 epochs.
    pub fn desk(name: &str, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            system: SystemConfig::desk(),
            solver: SolverConfig::desk(),
            train: Some(TrainConfig::desk()),
            sweep: Sweep::None,
            seeds: (1000..1020).collect(),
            train_seeds: (0..100).collect(),
            output_dir: output_dir.into(),
            checkpoint: None,
            train_first: true,
            per_delta_checkpoints: false,
            unfolded_i_w: default_unfolded_i_w(),
        }
    }

    /// Full-size preset: 16 antennas, `L_out = 150`, 500/100 scenarios and
    /// 30 epochs.
    pub fn full_scale(name: &str, output_dir: impl Into<PathBuf>) -> Self {
        let mut spec = Self::desk(name, output_dir);
        spec.system = SystemConfig::full_scale();
        spec.solver.schedule = Schedule::new(150, 3, 2);
        spec.seeds = (10_000..10_100).collect();
        spec.train_seeds = (0..500).collect();
        if let Some(t) = spec.train.as_mut() {
            t.epochs = 30;
        }
        spec
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: ExperimentSpec = read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path.as_ref())
    }

    /// Replaces the seeds with consecutive runs starting at `base`: test
    /// seeds first, then training seeds. The training RNG seed becomes `base`.
    pub fn reseed(&mut self, base: u64) {
        let n_test = self.seeds.len() as u64;
        let n_train = self.train_seeds.len() as u64;
        self.seeds = (base..base + n_test).collect();
        self.train_seeds = (base + n_test..base + n_test + n_train).collect();
        if let Some(t) = self.train.as_mut() {
            t.seed = base;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JcasError::InvalidConfig(m));
        self.system.validate()?;
        self.solver.validate()?;
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let test: HashSet<u64> = self.seeds.iter().copied().collect();
        if test.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let train: HashSet<u64> = self.train_seeds.iter().copied().collect();
        if train.len() != self.train_seeds.len() {
            return bad("train_seeds must be distinct".into());
        }
        if let Some(s) = train.intersection(&test).next() {
            return bad(format!("seed {s} appears in both seeds and train_seeds"));
        }
        match &self.sweep {
            Sweep::Users(ks) if ks.is_empty() || ks.contains(&0) => {
                return bad("K sweep needs a nonempty list of positive values".into())
            }
            Sweep::Delta(ds) if ds.is_empty() || ds.iter().any(|d| !(*d >= 0.0)) => {
                return bad("delta sweep needs a nonempty list of values >= 0".into())
            }
            _ => {}
        }
        if self.unfolded_i_w.is_empty() || self.unfolded_i_w.contains(&0) {
            return bad("unfolded_i_w needs positive entries".into());
        }
        Ok(())
    }

    /// Baselines and the unfolded mode at the solver's own `I_w`.
    pub fn sweep_modes(&self) -> Vec<ModeRun> {
        vec![
            ModeRun::baseline(StepMode::FixedStep),
            ModeRun::baseline(StepMode::Backtracking),
            ModeRun::unfolded(self.solver.schedule.i_w),
        ]
    }

    /// Baselines plus one unfolded group per entry of `unfolded_i_w`.
    pub fn curve_modes(&self) -> Vec<ModeRun> {
        let mut modes = vec![
            ModeRun::baseline(StepMode::FixedStep),
            ModeRun::baseline(StepMode::Backtracking),
        ];
        modes.extend(self.unfolded_i_w.iter().map(|&i| ModeRun::unfolded(i)));
        modes
    }

    pub fn stop_rule(&self) -> StopRule {
        self.solver.stop.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_json_forms() {
        let k: Sweep = serde_json::from_str(r#"{"K":[2,4,8]}"#).unwrap();
        assert_eq!(k, Sweep::Users(vec![2, 4, 8]));
        let d: Sweep = serde_json::from_str(r#"{"delta":[0.5]}"#).unwrap();
        assert_eq!(d, Sweep::Delta(vec![0.5]));
        let n: Sweep = serde_json::from_str(r#""none""#).unwrap();
        assert_eq!(n, Sweep::None);
    }

    #[test]
    fn validation_rejects_bad_seeds_and_sweeps() {
        let mut s = ExperimentSpec::desk("t", "out");
        s.validate().unwrap();
        s.seeds = vec![1, 1];
        assert!(s.validate().is_err());
        s.seeds = vec![0];
        assert!(s.validate().is_err(), "overlaps train seeds");
        s.seeds = vec![5000];
        s.sweep = Sweep::Users(vec![]);
        assert!(s.validate().is_err());
        s.sweep = Sweep::Delta(vec![-1.0]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn reseed_keeps_splits_disjoint() {
        let mut s = ExperimentSpec::desk("t", "out");
        s.reseed(7);
        assert_eq!(s.seeds[0], 7);
        assert_eq!(s.train_seeds[0], 27);
        s.validate().unwrap();
    }
}
