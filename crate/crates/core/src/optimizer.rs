//! Alternating optimization of the precoder and combiner.
//!
//! Each outer layer refreshes the softmin weights and quadratic-transform
//! auxiliaries from the previous iterate, recomputes the combiner in closed
//! form and then runs projected gradient steps on the convex precoder
//! subproblem `g(W)`. The step size comes from one of three rules: a fixed
//! `β`, projected Armijo backtracking, or a trained per-layer table.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::metrics::{
    check_f, check_w, echo_products, softmin_weights, surrogate_terms_from, utility_from_rates,
    weighted_surrogate, AuxState, BeamformerState, CommTerms, RateVector, SensingTerms,
};
use crate::numerics::{
    fro_inner, fro_norm, hermitian_solve, max_generalized_eigvec, CMatrix, HermitianMatrix, C64, ONE,
};
use crate::scenario::Scenario;
use crate::training::UnfoldedParams;

/// Layer counts of the unrolled solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(rename = "L_out")]
    pub l_out: usize,
    #[serde(rename = "L_in")]
    pub l_in: usize,
    #[serde(rename = "I_w")]
    pub i_w: usize,
}

impl Schedule {
    pub fn new(l_out: usize, l_in: usize, i_w: usize) -> Self {
        Schedule { l_out, l_in, i_w }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(L_out={}, L_in={}, I_w={})", self.l_out, self.l_in, self.i_w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    FixedStep,
    Backtracking,
    Unfolded,
}

impl StepMode {
    pub fn label(self) -> &'static str {
        match self {
            StepMode::FixedStep => "fixed_beta",
            StepMode::Backtracking => "backtracking",
            StepMode::Unfolded => "unfolded",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Rescale every antenna row to power exactly `Pt/Nt`.
    #[default]
    BoundaryNormalize,
    /// Euclidean projection: only rows above `Pt/Nt` are scaled down.
    TrueProjection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backtracking {
    pub beta0: f64,
    pub shrink: f64,
    pub armijo_c: f64,
    pub max_halvings: usize,
}

impl Default for Backtracking {
    fn default() -> Self {
        Backtracking {
            beta0: 1.0,
            shrink: 0.5,
            armijo_c: 1e-4,
            max_halvings: 30,
        }
    }
}

/// Run-until-converged rule for the baseline modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once `|h_ℓ − h_{ℓ−window}| ≤ rel_tol · |h_ℓ|`.
    pub rel_tol: f64,
    pub window: usize,
    pub max_layers: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            rel_tol: 1e-5,
            window: 5,
            max_layers: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub delta: f64,
    pub schedule: Schedule,
    pub mode: StepMode,
    pub fixed_beta: f64,
    #[serde(default)]
    pub backtracking: Backtracking,
    #[serde(default)]
    pub projection: ProjectionMode,
    /// Softmin temperatures for the baseline modes; the unfolded mode takes
    /// them from its parameters.
    pub mu_c: f64,
    pub mu_s: f64,
    #[serde(default)]
    pub stop: Option<StopRule>,
}

impl SolverConfig {
    /// Unfolded solver with `L_out = 50`, `L_in = 3`, `I_w = 2`, `δ = 1`.
    pub fn desk() -> Self {
        SolverConfig {
            delta: 1.0,
            schedule: Schedule::new(50, 3, 2),
            mode: StepMode::Unfolded,
            fixed_beta: 0.01,
            backtracking: Backtracking::default(),
            projection: ProjectionMode::BoundaryNormalize,
            mu_c: 10.0,
            mu_s: 10.0,
            stop: None,
        }
    }

    /// Baseline configuration: same layers with `I_w = 1`.
    pub fn baseline(&self, mode: StepMode) -> Self {
        let mut cfg = self.clone();
        cfg.mode = mode;
        cfg.schedule.i_w = 1;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JcasError::InvalidConfig(m));
        if !(self.delta >= 0.0) {
            return bad(format!("delta = {} must be >= 0", self.delta));
        }
        if self.schedule.l_out == 0 || self.schedule.i_w == 0 {
            return bad(format!("schedule {} needs L_out, I_w >= 1", self.schedule));
        }
        if !(self.fixed_beta > 0.0) || !(self.mu_c >= 0.0) || !(self.mu_s >= 0.0) {
            return bad("step size must be > 0 and temperatures >= 0".into());
        }
        let b = &self.backtracking;
        if !(b.beta0 > 0.0) || !(b.shrink > 0.0 && b.shrink < 1.0) || !(b.armijo_c > 0.0) {
            return bad("backtracking needs beta0 > 0, shrink in (0,1), c > 0".into());
        }
        Ok(())
    }
}

/// Quantities defining the precoder subproblem `g(W)`.
#[derive(Clone, Debug)]
pub struct GradientPieces {
    /// `K × Nt`
    pub x: CMatrix,
    /// `Nt × Nt`, positive semidefinite.
    pub y: HermitianMatrix,
    /// Diagonal of `Σ₁`.
    pub sigma1: Vec<C64>,
    /// Diagonal of `Σ₂`, real and nonnegative.
    pub sigma2: Vec<f64>,
}

impl GradientPieces {
    pub fn sigma1_matrix(&self) -> CMatrix {
        let k = self.sigma1.len();
        CMatrix::from_fn(k, k, |i, j| if i == j { self.sigma1[i] } else { C64::new(0.0, 0.0) })
    }

    pub fn sigma2_matrix(&self) -> CMatrix {
        CMatrix::from_real_diag(&self.sigma2)
    }

    /// `g(W) = tr(A W Wᴴ) − 2 Re tr(Wᴴ B)`.
    pub fn quadratic(&self, h: &CMatrix) -> Result<QuadraticModel> {
        let k = self.sigma1.len();
        if h.cols() != k || h.rows() != self.y.dim() || self.x.shape() != (k, h.rows()) {
            return Err(JcasError::dims("gradient pieces do not match the channel matrix"));
        }
        // A = Y + H Σ₂ Hᴴ
        let h_s2 = CMatrix::from_fn(h.rows(), k, |i, j| h[(i, j)] * self.sigma2[j]);
        let a = self.y.as_matrix() + &h_s2.matmul(&h.adjoint());
        // B = H Σ₁ + Xᴴ
        let h_s1 = CMatrix::from_fn(h.rows(), k, |i, j| h[(i, j)] * self.sigma1[j]);
        let b = &h_s1 + &self.x.adjoint();
        Ok(QuadraticModel {
            a: HermitianMatrix::hermitian_part(&a).into_matrix(),
            b,
        })
    }
}

/// `g(W) = Re tr(Wᴴ A W) − 2 Re tr(Wᴴ B)` with gradient `2(AW − B)`.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    pub a: CMatrix,
    pub b: CMatrix,
}

impl QuadraticModel {
    pub fn value(&self, w: &CMatrix) -> f64 {
        let aw = self.a.matmul(w);
        fro_inner(w, &aw).re - 2.0 * fro_inner(w, &self.b).re
    }

    pub fn gradient(&self, w: &CMatrix) -> CMatrix {
        (&self.a.matmul(w) - &self.b).scale_real(2.0)
    }
}

/// Softmin weights and auxiliaries that make the surrogate tight at `(W, F)`.
pub fn update_aux(scn: &Scenario, w: &CMatrix, f: &CMatrix, mu_c: f64, mu_s: f64) -> Result<AuxState> {
    let comm = CommTerms::new(scn, w)?;
    let sense = SensingTerms::new(scn, w, f)?;
    Ok(aux_from_terms(&comm, &sense, mu_c, mu_s))
}

fn aux_from_terms(comm: &CommTerms, sense: &SensingTerms, mu_c: f64, mu_s: f64) -> AuxState {
    let (k_users, m_targets) = (comm.total.len(), sense.total.len());
    let xi_c: Vec<f64> = (0..k_users).map(|k| comm.sinr(k)).collect();
    let xi_s: Vec<f64> = (0..m_targets).map(|m| sense.scnr(m)).collect();
    let r_c: Vec<f64> = xi_c.iter().map(|x| x.ln_1p()).collect();
    let r_s: Vec<f64> = xi_s.iter().map(|x| x.ln_1p()).collect();
    let theta_c = (0..k_users)
        .map(|k| comm.hw[(k, k)] * ((1.0 + xi_c[k]).sqrt() / comm.total[k]))
        .collect();
    let theta_s = CMatrix::from_fn(m_targets, k_users, |m, k| {
        sense.signal[(m, k)] * ((1.0 + xi_s[m]).sqrt() / sense.total[m])
    });
    AuxState {
        z_c: softmin_weights(&r_c, mu_c),
        z_s: softmin_weights(&r_s, mu_s),
        xi_c,
        xi_s,
        theta_c,
        theta_s,
    }
}

/// `Σ_{j=1}^{M+C} G_j W Wᴴ G_jᴴ + Nr σ_s² I` from the products `G_j W`.
fn echo_covariance(scn: &Scenario, gw: &[CMatrix]) -> HermitianMatrix {
    let nr = scn.nr();
    let mut q = CMatrix::identity(nr).scale_real(nr as f64 * scn.config.sigma_s2);
    for p in gw {
        q.axpy(ONE, &p.matmul(&p.adjoint()));
    }
    HermitianMatrix::hermitian_part(&q)
}

const THETA_FLOOR: f64 = 1e-14;

/// Closed-form combiner maximizing every `O_sm` for fixed `W` and auxiliaries.
pub fn update_combiner(scn: &Scenario, w: &CMatrix, aux: &AuxState) -> Result<CMatrix> {
    check_w(scn, w)?;
    combiner_from_products(scn, &echo_products(scn, w), aux)
}

fn combiner_from_products(scn: &Scenario, gw: &[CMatrix], aux: &AuxState) -> Result<CMatrix> {
    let q = echo_covariance(scn, gw);
    let mut rhs = CMatrix::zeros(scn.nr(), scn.m());
    for m in 0..scn.m() {
        let th = aux.theta_s.row(m);
        let th2: f64 = th.iter().map(C64::norm_sqr).sum();
        if th2.sqrt() <= THETA_FLOOR {
            return Err(JcasError::ZeroTheta(m));
        }
        let th_h: Vec<C64> = th.iter().map(|x| x.conj()).collect();
        let col = gw[m].mul_vec(&th_h);
        let coef = (1.0 + aux.xi_s[m]).sqrt() / th2;
        rhs.set_column(m, &col.iter().map(|x| x * coef).collect::<Vec<_>>());
    }
    hermitian_solve(&q, &rhs)
}

/// `X`, `Y`, `Σ₁`, `Σ₂` of the precoder subproblem.
pub fn gradient_pieces(scn: &Scenario, aux: &AuxState, f: &CMatrix, delta: f64) -> Result<GradientPieces> {
    check_f(scn, f)?;
    if aux.theta_s.shape() != (scn.m(), scn.k()) || aux.theta_c.len() != scn.k() {
        return Err(JcasError::dims("auxiliary state does not match scenario"));
    }
    let (nt, nr) = (scn.nt(), scn.nr());

    let mut x = CMatrix::zeros(scn.k(), nt);
    let mut p = CMatrix::zeros(nr, nr);
    for m in 0..scn.m() {
        let fm = f.column(m);
        let th = aux.theta_s.row(m);
        let th2: f64 = th.iter().map(C64::norm_sqr).sum();
        // θ_smᴴ f_mᴴ G_m = outer(conj θ_sm, G_mᴴ f_m)
        let th_conj: Vec<C64> = th.iter().map(|z| z.conj()).collect();
        let gf = scn.g[m].adjoint().mul_vec(&fm);
        let coef = delta * aux.z_s[m] * (1.0 + aux.xi_s[m]).sqrt();
        x.axpy(C64::new(coef, 0.0), &CMatrix::outer(&th_conj, &gf));
        p.axpy(C64::new(aux.z_s[m] * th2, 0.0), &CMatrix::outer(&fm, &fm));
    }
    let mut y = CMatrix::zeros(nt, nt);
    for g in &scn.g {
        y.axpy(C64::new(delta, 0.0), &g.adjoint_matmul(&p.matmul(g)));
    }

    let sigma1 = (0..scn.k())
        .map(|k| aux.theta_c[k] * (aux.z_c[k] * (1.0 + aux.xi_c[k]).sqrt()))
        .collect();
    let sigma2 = (0..scn.k())
        .map(|k| aux.z_c[k] * aux.theta_c[k].norm_sqr())
        .collect();
    Ok(GradientPieces {
        x,
        y: HermitianMatrix::hermitian_part(&y),
        sigma1,
        sigma2,
    })
}

/// `∇_W g = 2(Y + HΣ₂Hᴴ)W − 2(HΣ₁ + Xᴴ)`
pub fn grad_w(pieces: &GradientPieces, h: &CMatrix, w: &CMatrix) -> Result<CMatrix> {
    if w.shape() != h.shape() {
        return Err(JcasError::dims(format!(
            "precoder {:?} vs channel {:?}",
            w.shape(),
            h.shape()
        )));
    }
    Ok(pieces.quadratic(h)?.gradient(w))
}

/// Maps `W` onto the per-antenna power set.
pub fn project_s(w: &CMatrix, pt: f64, mode: ProjectionMode) -> CMatrix {
    let nt = w.rows();
    let cap = pt / nt as f64;
    let floor = 1e-12 * cap;
    let scales: Vec<f64> = (0..nt)
        .map(|n| {
            let p = w.row_power(n);
            match mode {
                ProjectionMode::BoundaryNormalize => (cap / p.max(floor)).sqrt(),
                ProjectionMode::TrueProjection if p > cap => (cap / p).sqrt(),
                ProjectionMode::TrueProjection => 1.0,
            }
        })
        .collect();
    CMatrix::from_fn(nt, w.cols(), |i, j| w[(i, j)] * scales[i])
}

const GRAD_FLOOR: f64 = 1e-14;

/// `Π_S(W − β ∇/‖∇‖_F)`; a vanishing gradient leaves `Π_S(W)`.
pub fn pgd_step(w: &CMatrix, grad: &CMatrix, beta: f64, pt: f64, mode: ProjectionMode) -> CMatrix {
    let gn = fro_norm(grad);
    if gn <= GRAD_FLOOR || beta == 0.0 {
        return project_s(w, pt, mode);
    }
    let mut next = w.clone();
    next.axpy(C64::new(-beta / gn, 0.0), grad);
    project_s(&next, pt, mode)
}

/// Projected Armijo search along the normalized negative gradient.
///
/// Returns the accepted iterate, or `W` itself when no trial step passes.
pub fn backtracking_step(
    model: &QuadraticModel,
    w: &CMatrix,
    pt: f64,
    mode: ProjectionMode,
    rule: &Backtracking,
) -> (CMatrix, Option<f64>) {
    let grad = model.gradient(w);
    let gn = fro_norm(&grad);
    if gn <= GRAD_FLOOR {
        return (w.clone(), None);
    }
    let g0 = model.value(w);
    let mut beta = rule.beta0;
    for _ in 0..=rule.max_halvings {
        let cand = pgd_step(w, &grad, beta, pt, mode);
        if model.value(&cand) <= g0 - rule.armijo_c * beta * gn {
            return (cand, Some(beta));
        }
        beta *= rule.shrink;
    }
    (w.clone(), None)
}

/// MRT precoder and per-target max-SCNR combiner.
pub fn init_state(scn: &Scenario) -> Result<BeamformerState> {
    scn.validate()?;
    let w = project_s(&scn.h, scn.config.pt, ProjectionMode::BoundaryNormalize);
    let mut f = CMatrix::zeros(scn.nr(), scn.m());
    let gw = echo_products(scn, &w);
    for m in 0..scn.m() {
        let signal = HermitianMatrix::hermitian_part(&gw[m].matmul(&gw[m].adjoint()));
        let others: Vec<CMatrix> = (0..gw.len()).filter(|&j| j != m).map(|j| gw[j].clone()).collect();
        let interference = echo_covariance(scn, &others);
        let eig = max_generalized_eigvec(&signal, &interference)?;
        f.set_column(m, &eig.vector);
    }
    Ok(BeamformerState { w, f })
}

/// One outer layer of the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: usize,
    pub h: f64,
    /// Linear.
    pub min_sinr: f64,
    /// Linear.
    pub min_scnr: f64,
    pub surrogate: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterTrace {
    pub records: Vec<LayerRecord>,
}

#[derive(Serialize)]
struct TraceRow {
    layer: usize,
    h: f64,
    min_sinr_db: f64,
    min_scnr_db: f64,
    surrogate: f64,
    elapsed_s: f64,
}

impl IterTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h).collect()
    }

    pub fn last(&self) -> Option<&LayerRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.records {
            wtr.serialize(TraceRow {
                layer: r.layer,
                h: r.h,
                min_sinr_db: crate::metrics::to_db(r.min_sinr),
                min_scnr_db: crate::metrics::to_db(r.min_scnr),
                surrogate: r.surrogate,
                elapsed_s: r.elapsed_s,
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| JcasError::io(path, e))?;
        self.write_csv(file)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub state: BeamformerState,
    pub trace: IterTrace,
}

/// Callbacks fired during a solve.
#[derive(Debug)]
pub enum SolveEvent<'a> {
    Aux { layer: usize, aux: &'a AuxState },
    Combiner { layer: usize, f: &'a CMatrix },
    Precoder { layer: usize, w: &'a CMatrix },
}

pub fn solve(
    scn: &Scenario,
    cfg: &SolverConfig,
    params: Option<&UnfoldedParams>,
    init: &BeamformerState,
) -> Result<Solution> {
    solve_observed(scn, cfg, params, init, &mut |_| {})
}

enum StepRule<'a> {
    Fixed(f64),
    Armijo(&'a Backtracking),
    Learned(&'a UnfoldedParams),
}

/// Runs the solver and reports every auxiliary, combiner and precoder
/// iterate to `observer`.
pub fn solve_observed(
    scn: &Scenario,
    cfg: &SolverConfig,
    params: Option<&UnfoldedParams>,
    init: &BeamformerState,
    observer: &mut dyn FnMut(SolveEvent<'_>),
) -> Result<Solution> {
    cfg.validate()?;
    check_w(scn, &init.w)?;
    check_f(scn, &init.f)?;

    let (rule, mu_c, mu_s) = match cfg.mode {
        StepMode::FixedStep => (StepRule::Fixed(cfg.fixed_beta), cfg.mu_c, cfg.mu_s),
        StepMode::Backtracking => (StepRule::Armijo(&cfg.backtracking), cfg.mu_c, cfg.mu_s),
        StepMode::Unfolded => {
            let p = params.ok_or(JcasError::MissingCheckpoint)?;
            p.check_compatible(&cfg.schedule)?;
            (StepRule::Learned(p), p.mu_c, p.mu_s)
        }
    };
    let stop = match cfg.mode {
        StepMode::Unfolded => None,
        _ => cfg.stop,
    };
    let layers = stop.map_or(cfg.schedule.l_out, |s| s.max_layers);
    let Schedule { l_in, i_w, .. } = cfg.schedule;

    let pt = scn.config.pt;
    let start = Instant::now();
    let mut w = project_s(&init.w, pt, cfg.projection);
    let mut f = init.f.clone();
    observer(SolveEvent::Precoder { layer: 0, w: &w });
    let mut trace = IterTrace::default();

    // Terms at the current (W, F), shared by the diagnostics of one layer
    // and the auxiliary and combiner updates of the next.
    let mut gw = echo_products(scn, &w);
    let mut comm = CommTerms::new(scn, &w)?;
    let mut sense = SensingTerms::from_products(scn, &gw, &f)?;

    for layer in 1..=layers {
        let aux = aux_from_terms(&comm, &sense, mu_c, mu_s);
        observer(SolveEvent::Aux { layer, aux: &aux });
        f = combiner_from_products(scn, &gw, &aux)?;
        observer(SolveEvent::Combiner { layer, f: &f });

        let model = gradient_pieces(scn, &aux, &f, cfg.delta)?.quadratic(&scn.h)?;
        for _ in 0..i_w {
            for i in 0..l_in {
                w = match rule {
                    StepRule::Fixed(beta) => pgd_step(&w, &model.gradient(&w), beta, pt, cfg.projection),
                    StepRule::Learned(p) => {
                        pgd_step(&w, &model.gradient(&w), p.beta[layer - 1][i], pt, cfg.projection)
                    }
                    StepRule::Armijo(bt) => backtracking_step(&model, &w, pt, cfg.projection, bt).0,
                };
                observer(SolveEvent::Precoder { layer, w: &w });
            }
        }

        if !w.is_finite() || !f.is_finite() {
            return Err(JcasError::NonFinite {
                layer,
                completed: Box::new(trace),
            });
        }

        gw = echo_products(scn, &w);
        comm = CommTerms::new(scn, &w)?;
        sense = SensingTerms::from_products(scn, &gw, &f)?;
        let sinr: Vec<f64> = (0..scn.k()).map(|k| comm.sinr(k)).collect();
        let scnr: Vec<f64> = (0..scn.m()).map(|m| sense.scnr(m)).collect();
        let rates = RateVector {
            r_c: sinr.iter().map(|x| x.ln_1p()).collect(),
            r_s: scnr.iter().map(|x| x.ln_1p()).collect(),
        };
        let h = utility_from_rates(&rates, cfg.delta);
        let (o_c, o_s) = surrogate_terms_from(&comm, &sense, &aux);
        let surrogate = weighted_surrogate(&o_c, &o_s, &aux, cfg.delta);
        if !h.is_finite() {
            return Err(JcasError::NonFinite {
                layer,
                completed: Box::new(trace),
            });
        }
        trace.records.push(LayerRecord {
            layer,
            h,
            min_sinr: sinr.iter().copied().fold(f64::INFINITY, f64::min),
            min_scnr: scnr.iter().copied().fold(f64::INFINITY, f64::min),
            surrogate,
            elapsed_s: start.elapsed().as_secs_f64(),
        });

        if let Some(s) = stop {
            let n = trace.records.len();
            if n > s.window {
                let now = trace.records[n - 1].h;
                let then = trace.records[n - 1 - s.window].h;
                if (now - then).abs() <= s.rel_tol * now.abs() {
                    break;
                }
            }
        }
    }

    Ok(Solution {
        state: BeamformerState { w, f },
        trace,
    })
}
