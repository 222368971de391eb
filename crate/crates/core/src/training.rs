//! Learning the unfolded solver's step sizes and softmin temperatures.
//!
//! The loss is the negated, layer-weighted utility of the unrolled solve
//! (`λ_ℓ = 1/ℓ`) averaged over a batch. Gradients come from a black-box
//! estimator (SPSA, or forward differences for tiny schedules) and feed a
//! first/second-moment smoothed update.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::metrics::BeamformerState;
use crate::optimizer::{init_state, solve, Schedule, SolverConfig, StepMode};
use crate::scenario::{read_json, write_json, Dataset, Scenario};

/// Trainable parameters `{μ_s, μ_c, β_{ℓ,i}}` of the unfolded solver.
#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedParams {
    pub mu_s: f64,
    pub mu_c: f64,
    /// `L_out × L_in` step sizes.
    pub beta: Vec<Vec<f64>>,
    pub schedule: Schedule,
}

impl UnfoldedParams {
    pub const BETA_FLOOR: f64 = 1e-5;
    pub const INITIAL_BETA: f64 = 0.01;
    pub const INITIAL_MU: f64 = 10.0;

    /// `β_{ℓ,i} = 0.01` and `μ_s = μ_c = 10`.
    pub fn initial(schedule: Schedule) -> Self {
        Self::constant(schedule, Self::INITIAL_BETA, Self::INITIAL_MU)
    }

    pub fn constant(schedule: Schedule, beta: f64, mu: f64) -> Self {
        UnfoldedParams {
            mu_s: mu,
            mu_c: mu,
            beta: vec![vec![beta; schedule.l_in]; schedule.l_out],
            schedule,
        }
    }

    /// Number of trainable scalars, `L_out · L_in + 2`.
    pub fn dim(&self) -> usize {
        2 + self.schedule.l_out * self.schedule.l_in
    }

    /// `[μ_s, μ_c, β row-major]`
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.mu_s);
        v.push(self.mu_c);
        v.extend(self.beta.iter().flatten());
        v
    }

    pub fn with_vector(&self, v: &[f64]) -> Self {
        assert_eq!(v.len(), self.dim(), "parameter vector length");
        let l_in = self.schedule.l_in;
        UnfoldedParams {
            mu_s: v[0],
            mu_c: v[1],
            beta: (0..self.schedule.l_out)
                .map(|l| v[2 + l * l_in..2 + (l + 1) * l_in].to_vec())
                .collect(),
            schedule: self.schedule,
        }
    }

    /// Enforces `μ ≥ 0` and `β ≥ 1e-5`.
    pub fn clamp(&mut self) {
        self.mu_s = self.mu_s.max(0.0);
        self.mu_c = self.mu_c.max(0.0);
        for b in self.beta.iter_mut().flatten() {
            *b = b.max(Self::BETA_FLOOR);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.schedule;
        if self.beta.len() != s.l_out || self.beta.iter().any(|r| r.len() != s.l_in) {
            return Err(JcasError::dims(format!("beta table does not match schedule {s}")));
        }
        if !(self.mu_s >= 0.0 && self.mu_c >= 0.0) {
            return Err(JcasError::InvalidConfig("temperatures must be >= 0".into()));
        }
        if self.beta.iter().flatten().any(|&b| !(b >= Self::BETA_FLOOR) || !b.is_finite()) {
            return Err(JcasError::InvalidConfig(format!(
                "step sizes must be finite and >= {}",
                Self::BETA_FLOOR
            )));
        }
        Ok(())
    }

    /// The step table fixes `L_out` and `L_in`; `I_w` may differ.
    pub fn check_compatible(&self, schedule: &Schedule) -> Result<()> {
        if self.schedule.l_out != schedule.l_out || self.schedule.l_in != schedule.l_in {
            return Err(JcasError::ScheduleMismatch {
                expected: schedule.to_string(),
                found: self.schedule.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Spsa,
    ForwardFd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub estimator: Estimator,
    pub learning_rate: f64,
    pub spsa_perturb: f64,
    /// SPSA perturbations averaged per step.
    #[serde(default = "one")]
    pub probes: usize,
    pub seed: u64,
    /// When false, `μ_s` and `μ_c` stay at their initial values.
    #[serde(default = "yes")]
    pub train_mu: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            estimator: Estimator::Spsa,
            learning_rate: 1e-3,
            spsa_perturb: 1e-3,
            probes: 4,
            seed: 0,
            train_mu: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.probes == 0 {
            return Err(JcasError::InvalidConfig("batch_size and probes must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.spsa_perturb > 0.0) {
            return Err(JcasError::InvalidConfig(
                "learning_rate and spsa_perturb must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Scenarios paired with their solver initializations.
pub struct Batch {
    scenarios: Vec<Scenario>,
    inits: Vec<BeamformerState>,
}

impl Batch {
    pub fn new(scenarios: &[Scenario]) -> Result<Self> {
        let inits = scenarios.par_iter().map(init_state).collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            scenarios: scenarios.to_vec(),
            inits,
        })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Batch {
        Batch {
            scenarios: idx.iter().map(|&i| self.scenarios[i].clone()).collect(),
            inits: idx.iter().map(|&i| self.inits[i].clone()).collect(),
        }
    }

    /// Per-scenario `Σ_ℓ h_ℓ / ℓ`, in scenario order.
    pub fn weighted_utilities(&self, params: &UnfoldedParams, solver: &SolverConfig) -> Result<Vec<f64>> {
        let cfg = unfolded_config(solver, params);
        self.scenarios
            .par_iter()
            .zip(&self.inits)
            .map(|(scn, init)| {
                let sol = solve(scn, &cfg, Some(params), init)?;
                Ok(sol
                    .trace
                    .records
                    .iter()
                    .map(|r| r.h / r.layer as f64)
                    .sum())
            })
            .collect()
    }

    /// Final-layer utility per scenario.
    pub fn final_utilities(&self, params: &UnfoldedParams, solver: &SolverConfig) -> Result<Vec<f64>> {
        let cfg = unfolded_config(solver, params);
        self.scenarios
            .par_iter()
            .zip(&self.inits)
            .map(|(scn, init)| {
                let sol = solve(scn, &cfg, Some(params), init)?;
                Ok(sol.trace.last().map_or(f64::NAN, |r| r.h))
            })
            .collect()
    }

    pub fn loss(&self, params: &UnfoldedParams, solver: &SolverConfig) -> Result<f64> {
        if self.is_empty() {
            return Err(JcasError::InvalidConfig("empty training batch".into()));
        }
        let terms = self.weighted_utilities(params, solver)?;
        // Summed in scenario order for a deterministic result.
        let total: f64 = terms.iter().sum();
        Ok(-total / terms.len() as f64)
    }
}

fn unfolded_config(solver: &SolverConfig, params: &UnfoldedParams) -> SolverConfig {
    let mut cfg = solver.clone();
    cfg.mode = StepMode::Unfolded;
    cfg.schedule.l_out = params.schedule.l_out;
    cfg.schedule.l_in = params.schedule.l_in;
    cfg.stop = None;
    cfg
}

/// `−(1/B) Σ_b Σ_ℓ (1/ℓ) h(W^[ℓ], F^[ℓ])` over the batch.
pub fn training_loss(params: &UnfoldedParams, batch: &[Scenario], solver: &SolverConfig) -> Result<f64> {
    Batch::new(batch)?.loss(params, solver)
}

/// Black-box gradient estimate of `loss` at `phi`.
///
/// SPSA averages `probes` Rademacher perturbations, each costing two loss
/// evaluations at `φ ± cΔ`. Forward differences cost `dim + 1` evaluations.
pub fn estimate_gradient<F, R>(
    loss: F,
    phi: &[f64],
    estimator: Estimator,
    c: f64,
    probes: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    let n = phi.len();
    let mut grad = vec![0.0; n];
    match estimator {
        Estimator::Spsa => {
            let probes = probes.max(1);
            for _ in 0..probes {
                let delta: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
                let plus: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + c * d).collect();
                let minus: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p - c * d).collect();
                let diff = (loss(&plus)? - loss(&minus)?) / (2.0 * c);
                if !diff.is_finite() {
                    return Err(non_finite());
                }
                for (g, d) in grad.iter_mut().zip(&delta) {
                    *g += diff * d;
                }
            }
            for g in &mut grad {
                *g /= probes as f64;
            }
        }
        Estimator::ForwardFd => {
            let base = loss(phi)?;
            let mut probe = phi.to_vec();
            for i in 0..n {
                probe[i] = phi[i] + c;
                grad[i] = (loss(&probe)? - base) / c;
                probe[i] = phi[i];
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(non_finite());
            }
        }
    }
    Ok(grad)
}

fn non_finite() -> JcasError {
    JcasError::NonFinite {
        layer: 0,
        completed: Box::default(),
    }
}

/// Adam-style moment smoothing.
#[derive(Clone, Debug)]
pub struct MomentUpdate {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl MomentUpdate {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        MomentUpdate {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, phi: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..phi.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            phi[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss over the whole training split with the epoch's final parameters.
    pub train_loss: f64,
    /// Mean final-layer utility over the test split (NaN without one).
    pub test_mean_h: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Entry 0 is the initialization.
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Set when a non-finite solve stopped training early.
    pub aborted: Option<String>,
}

/// Trains the unfolded parameters on `train`.
///
/// Returns the parameters with the lowest full-training-set loss seen at an
/// epoch boundary (the initialization included), so the result never scores
/// worse on the training split than the starting point.
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    solver: &SolverConfig,
) -> Result<(UnfoldedParams, TrainHistory)> {
    cfg.validate()?;
    solver.validate()?;
    if train_set.is_empty() {
        return Err(JcasError::InvalidConfig("training split is empty".into()));
    }
    let full = Batch::new(&train_set.scenarios)?;
    let test = test_set
        .filter(|d| !d.is_empty())
        .map(|d| Batch::new(&d.scenarios))
        .transpose()?;

    let mut params = UnfoldedParams::initial(solver.schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = MomentUpdate::new(params.dim(), cfg.learning_rate);
    let mut history = TrainHistory::default();

    let evaluate = |p: &UnfoldedParams, epoch: usize| -> Result<EpochRecord> {
        let train_loss = full.loss(p, solver)?;
        let test_mean_h = match &test {
            Some(t) => {
                let h = t.final_utilities(p, solver)?;
                h.iter().sum::<f64>() / h.len() as f64
            }
            None => f64::NAN,
        };
        Ok(EpochRecord {
            epoch,
            train_loss,
            test_mean_h,
        })
    };

    history.epochs.push(evaluate(&params, 0)?);
    let mut best = (params.clone(), history.epochs[0].train_loss);

    let mut order: Vec<usize> = (0..full.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = full.subset(chunk);
            let base = params.clone();
            let loss = |v: &[f64]| {
                let mut p = base.with_vector(v);
                p.clamp();
                batch.loss(&p, solver)
            };
            let phi = params.to_vector();
            let grad = match estimate_gradient(loss, &phi, cfg.estimator, cfg.spsa_perturb, cfg.probes, &mut rng) {
                Ok(g) => g,
                Err(e @ JcasError::NonFinite { .. }) => {
                    history.aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let mut grad = grad;
            if !cfg.train_mu {
                grad[0] = 0.0;
                grad[1] = 0.0;
            }
            let mut next = phi;
            opt.step(&mut next, &grad);
            params = params.with_vector(&next);
            params.clamp();
        }
        let record = match evaluate(&params, epoch) {
            Ok(r) => r,
            Err(e @ JcasError::NonFinite { .. }) => {
                history.aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if record.train_loss < best.1 {
            best = (params.clone(), record.train_loss);
            history.best_epoch = epoch;
        }
        history.epochs.push(record);
    }
    Ok((best.0, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub seed: u64,
    pub dataset_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub mu_s: f64,
    pub mu_c: f64,
    pub beta: Vec<Vec<f64>>,
    pub schedule: Schedule,
    pub train_meta: TrainMeta,
}

impl Checkpoint {
    pub fn new(params: &UnfoldedParams, train_meta: TrainMeta) -> Self {
        Checkpoint {
            mu_s: params.mu_s,
            mu_c: params.mu_c,
            beta: params.beta.clone(),
            schedule: params.schedule,
            train_meta,
        }
    }

    pub fn params(&self) -> UnfoldedParams {
        UnfoldedParams {
            mu_s: self.mu_s,
            mu_c: self.mu_c,
            beta: self.beta.clone(),
            schedule: self.schedule,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_json(ckpt, path.as_ref())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let ckpt: Checkpoint = read_json(path)?;
    ckpt.params().validate().map_err(|e| JcasError::Format {
        path: path.to_path_buf(),
        field: "beta".into(),
        message: e.to_string(),
    })?;
    Ok(ckpt)
}

/// Loads a checkpoint and checks it against the solver's schedule.
pub fn load_checkpoint_for(path: impl AsRef<Path>, solver: &SolverConfig) -> Result<UnfoldedParams> {
    let params = load_checkpoint(path)?.params();
    params.check_compatible(&solver.schedule)?;
    Ok(params)
}
