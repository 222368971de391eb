//! Performance functionals: user SINR, target SCNR, rates, the max-min
//! utility, softmin weights and the quadratic-transform surrogate.
//!
//! All logarithms are natural, so rates are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::numerics::{dot, vec_norm, CMatrix, C64};
use crate::scenario::Scenario;

/// Precoder `W` (`Nt × K`) and combiner `F` (`Nr × M`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformerState {
    pub w: CMatrix,
    pub f: CMatrix,
}

impl BeamformerState {
    /// `max_n [W Wᴴ]_nn / (Pt/Nt)`; at most `1 + 1e-9` for a feasible precoder.
    pub fn max_row_power_ratio(&self, pt: f64) -> f64 {
        let cap = pt / self.w.rows() as f64;
        (0..self.w.rows())
            .map(|n| self.w.row_power(n) / cap)
            .fold(0.0, f64::max)
    }
}

/// Softmin weights and quadratic-transform auxiliaries.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxState {
    pub z_c: Vec<f64>,
    pub z_s: Vec<f64>,
    pub xi_c: Vec<f64>,
    pub xi_s: Vec<f64>,
    pub theta_c: Vec<C64>,
    /// `M × K`, row `m` is `θ_sm`.
    pub theta_s: CMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateVector {
    pub r_c: Vec<f64>,
    pub r_s: Vec<f64>,
}

pub(crate) fn check_w(scn: &Scenario, w: &CMatrix) -> Result<()> {
    if w.shape() != (scn.nt(), scn.k()) {
        return Err(JcasError::dims(format!(
            "precoder is {:?}, expected ({}, {})",
            w.shape(),
            scn.nt(),
            scn.k()
        )));
    }
    Ok(())
}

pub(crate) fn check_f(scn: &Scenario, f: &CMatrix) -> Result<()> {
    if f.shape() != (scn.nr(), scn.m()) {
        return Err(JcasError::dims(format!(
            "combiner is {:?}, expected ({}, {})",
            f.shape(),
            scn.nr(),
            scn.m()
        )));
    }
    Ok(())
}

/// Per-user link terms: `Hᴴ W` and its row energies plus noise.
pub(crate) struct CommTerms {
    /// `[k, j] = h_kᴴ w_j`
    pub hw: CMatrix,
    /// `Σ_j |h_kᴴ w_j|² + σ²_ck`
    pub total: Vec<f64>,
}

impl CommTerms {
    pub fn new(scn: &Scenario, w: &CMatrix) -> Result<Self> {
        check_w(scn, w)?;
        let hw = scn.h.adjoint_matmul(w);
        let total = (0..scn.k())
            .map(|k| hw.row_power(k) + scn.config.sigma_c2[k])
            .collect();
        Ok(CommTerms { hw, total })
    }

    pub fn sinr(&self, k: usize) -> f64 {
        let s = self.hw[(k, k)].norm_sqr();
        s / (self.total[k] - s)
    }
}

/// `G_j W` for every target and clutter response.
pub(crate) fn echo_products(scn: &Scenario, w: &CMatrix) -> Vec<CMatrix> {
    scn.g.iter().map(|g| g.matmul(w)).collect()
}

/// Per-target echo terms for a combiner.
pub(crate) struct SensingTerms {
    /// Row `m` is `f_mᴴ G_m W`.
    pub signal: CMatrix,
    /// `Σ_{j=1}^{M+C} ‖f_mᴴ G_j W‖² + Nr σ_s² ‖f_m‖²`
    pub total: Vec<f64>,
}

impl SensingTerms {
    pub fn new(scn: &Scenario, w: &CMatrix, f: &CMatrix) -> Result<Self> {
        check_w(scn, w)?;
        check_f(scn, f)?;
        Self::from_products(scn, &echo_products(scn, w), f)
    }

    /// Terms from precomputed `G_j W` products (see [`echo_products`]).
    pub fn from_products(scn: &Scenario, gw: &[CMatrix], f: &CMatrix) -> Result<Self> {
        let noise = scn.nr() as f64 * scn.config.sigma_s2;
        let mut signal = CMatrix::zeros(scn.m(), scn.k());
        let mut total = Vec::with_capacity(scn.m());
        for m in 0..scn.m() {
            let fm = f.column(m);
            let fnorm = vec_norm(&fm);
            if fnorm == 0.0 {
                return Err(JcasError::ZeroCombiner(m));
            }
            let mut acc = noise * fnorm * fnorm;
            for (j, gwj) in gw.iter().enumerate() {
                let row = gwj.left_mul_adjoint(&fm);
                acc += row.iter().map(C64::norm_sqr).sum::<f64>();
                if j == m {
                    for (k, x) in row.into_iter().enumerate() {
                        signal[(m, k)] = x;
                    }
                }
            }
            total.push(acc);
        }
        Ok(SensingTerms { signal, total })
    }

    pub fn scnr(&self, m: usize) -> f64 {
        let s = self.signal.row_power(m);
        s / (self.total[m] - s)
    }
}

/// `γ_ck = |h_kᴴw_k|² / (Σ_{j≠k} |h_kᴴw_j|² + σ²_ck)`
pub fn sinr_comm(scn: &Scenario, w: &CMatrix) -> Result<Vec<f64>> {
    let t = CommTerms::new(scn, w)?;
    Ok((0..scn.k()).map(|k| t.sinr(k)).collect())
}

/// `γ_sm = ‖f_mᴴG_mW‖² / (Σ_{j≠m} ‖f_mᴴG_jW‖² + Nr σ_s² ‖f_m‖²)`
pub fn scnr_sense(scn: &Scenario, w: &CMatrix, f: &CMatrix) -> Result<Vec<f64>> {
    let t = SensingTerms::new(scn, w, f)?;
    Ok((0..scn.m()).map(|m| t.scnr(m)).collect())
}

pub fn rates(scn: &Scenario, w: &CMatrix, f: &CMatrix) -> Result<RateVector> {
    Ok(RateVector {
        r_c: sinr_comm(scn, w)?.into_iter().map(f64::ln_1p).collect(),
        r_s: scnr_sense(scn, w, f)?.into_iter().map(f64::ln_1p).collect(),
    })
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `min_k log(1+γ_ck) + δ · min_m log(1+γ_sm)`
pub fn utility_h(scn: &Scenario, w: &CMatrix, f: &CMatrix, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(JcasError::InvalidConfig(format!("delta = {delta} must be >= 0")));
    }
    let r = rates(scn, w, f)?;
    Ok(utility_from_rates(&r, delta))
}

pub(crate) fn utility_from_rates(r: &RateVector, delta: f64) -> f64 {
    min_of(&r.r_c) + delta * min_of(&r.r_s)
}

/// Exponentially weighted softmin, `z_i ∝ exp(−μ r_i)`.
///
/// Exponents are shifted by the smallest rate so the largest term is `1`.
pub fn softmin_weights(r: &[f64], mu: f64) -> Vec<f64> {
    let r_min = min_of(r);
    let e: Vec<f64> = r.iter().map(|&x| (-mu * (x - r_min)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Quadratic-transform terms `(O_c, O_s)` for fixed auxiliaries.
pub fn surrogate_terms(
    scn: &Scenario,
    w: &CMatrix,
    f: &CMatrix,
    aux: &AuxState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_aux(scn, aux)?;
    let comm = CommTerms::new(scn, w)?;
    let sense = SensingTerms::new(scn, w, f)?;
    Ok(surrogate_terms_from(&comm, &sense, aux))
}

pub(crate) fn surrogate_terms_from(comm: &CommTerms, sense: &SensingTerms, aux: &AuxState) -> (Vec<f64>, Vec<f64>) {
    let o_c = (0..aux.xi_c.len())
        .map(|k| {
            let xi = aux.xi_c[k];
            let th = aux.theta_c[k];
            xi.ln_1p() + 2.0 * (1.0 + xi).sqrt() * (comm.hw[(k, k)] * th.conj()).re
                - xi
                - th.norm_sqr() * comm.total[k]
        })
        .collect();

    let o_s = (0..aux.xi_s.len())
        .map(|m| {
            let xi = aux.xi_s[m];
            let th = aux.theta_s.row(m);
            // f_mᴴ G_m W θ_smᴴ = Σ_k signal[m,k] · conj(θ_smk)
            let cross: C64 = dot(th, sense.signal.row(m));
            let th2: f64 = th.iter().map(C64::norm_sqr).sum();
            xi.ln_1p() + 2.0 * (1.0 + xi).sqrt() * cross.re - xi - th2 * sense.total[m]
        })
        .collect();

    (o_c, o_s)
}

/// `Σ_k z_ck O_ck + δ Σ_m z_sm O_sm`
pub fn surrogate_objective(
    scn: &Scenario,
    w: &CMatrix,
    f: &CMatrix,
    aux: &AuxState,
    delta: f64,
) -> Result<f64> {
    let (o_c, o_s) = surrogate_terms(scn, w, f, aux)?;
    Ok(weighted_surrogate(&o_c, &o_s, aux, delta))
}

pub(crate) fn weighted_surrogate(o_c: &[f64], o_s: &[f64], aux: &AuxState, delta: f64) -> f64 {
    let comm: f64 = aux.z_c.iter().zip(o_c).map(|(z, o)| z * o).sum();
    let sense: f64 = aux.z_s.iter().zip(o_s).map(|(z, o)| z * o).sum();
    comm + delta * sense
}

fn check_aux(scn: &Scenario, aux: &AuxState) -> Result<()> {
    let (k, m) = (scn.k(), scn.m());
    if aux.z_c.len() != k
        || aux.xi_c.len() != k
        || aux.theta_c.len() != k
        || aux.z_s.len() != m
        || aux.xi_s.len() != m
        || aux.theta_s.shape() != (m, k)
    {
        return Err(JcasError::dims("auxiliary state does not match scenario"));
    }
    Ok(())
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SystemConfig;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Scenario with hand-set channels and unit noise.
    fn manual(nt: usize, nr: usize, h: CMatrix, g: Vec<CMatrix>, m: usize) -> Scenario {
        let k = h.cols();
        let mut cfg = SystemConfig::desk().with_users(k);
        cfg.nt = nt;
        cfg.nr = nr;
        cfg.m = m;
        cfg.c = g.len() - m;
        cfg.sigma_s2 = 1.0;
        cfg.sigma_c2 = vec![1.0; k];
        let n = g.len();
        Scenario {
            config: cfg,
            h,
            g,
            user_angles: vec![0.0; k],
            target_angles: vec![0.0; m],
            clutter_angles: vec![0.0; n - m],
            d_c: vec![1.0; k],
            d_s: vec![1.0; n],
            alpha_s: vec![c(1.0); n],
            seed: 0,
        }
    }

    fn scalar_g() -> Vec<CMatrix> {
        vec![CMatrix::identity(1)]
    }

    #[test]
    fn sinr_single_user() {
        let h = CMatrix::column_vector(&[c(1.0), c(0.0)]);
        let scn = manual(2, 1, h, scalar_g_2x(), 1);
        let w = CMatrix::column_vector(&[c(2.0), c(0.0)]);
        assert_eq!(sinr_comm(&scn, &w).unwrap(), vec![4.0]);
    }

    fn scalar_g_2x() -> Vec<CMatrix> {
        vec![CMatrix::from_rows(&[vec![c(1.0), c(0.0)]]).unwrap()]
    }

    #[test]
    fn sinr_orthogonal_users() {
        let scn = manual(2, 1, CMatrix::identity(2), scalar_g_2x(), 1);
        assert_eq!(sinr_comm(&scn, &CMatrix::identity(2)).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn sinr_with_interference() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_rows(&[vec![c(r), c(0.0)], vec![c(r), c(1.0)]]).unwrap();
        let scn = manual(2, 1, h, scalar_g_2x(), 1);
        let g = sinr_comm(&scn, &CMatrix::identity(2)).unwrap();
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scnr_scalar_chain() {
        let scn = manual(1, 1, CMatrix::identity(1), scalar_g(), 1);
        let w = CMatrix::from_rows(&[vec![c(2.0)]]).unwrap();
        let f = CMatrix::identity(1);
        assert_eq!(scnr_sense(&scn, &w, &f).unwrap(), vec![4.0]);
        let f2 = f.scale(C64::new(-3.0, 0.5));
        assert!((scnr_sense(&scn, &w, &f2).unwrap()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scnr_rejects_zero_combiner_and_bad_shapes() {
        let scn = manual(1, 1, CMatrix::identity(1), scalar_g(), 1);
        let w = CMatrix::identity(1);
        assert!(matches!(
            scnr_sense(&scn, &w, &CMatrix::zeros(1, 1)),
            Err(JcasError::ZeroCombiner(0))
        ));
        assert!(matches!(
            scnr_sense(&scn, &CMatrix::zeros(2, 1), &w),
            Err(JcasError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn utility_cases() {
        // γ = e − 1 for both links gives log(1+γ) = 1.
        let e1 = std::f64::consts::E - 1.0;
        let scn = manual(1, 1, CMatrix::identity(1), scalar_g(), 1);
        let w = CMatrix::from_rows(&[vec![c(e1.sqrt())]]).unwrap();
        let f = CMatrix::identity(1);
        let h = utility_h(&scn, &w, &f, 2.5).unwrap();
        assert!((h - 3.5).abs() < 1e-12);
        let h0 = utility_h(&scn, &w, &f, 0.0).unwrap();
        assert!((h0 - 1.0).abs() < 1e-12);
        assert!(utility_h(&scn, &w, &f, -1.0).is_err());
    }

    #[test]
    fn softmin_cases() {
        let z = softmin_weights(&[0.3, 0.3, 0.3], 7.0);
        assert!(z.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let z = softmin_weights(&[0.1, 5.0, 2.0, 9.0], 0.0);
        assert!(z.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let z = softmin_weights(&[0.0, 10.0], 10.0);
        assert!(z[0] >= 1.0 - 1e-40 && z[1] <= 1e-40);
        let z = softmin_weights(&[1e3, 2e3], 1e6);
        assert!(z.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn surrogate_vanishes_for_zero_aux() {
        let scn = manual(1, 1, CMatrix::identity(1), scalar_g(), 1);
        let aux = AuxState {
            z_c: vec![1.0],
            z_s: vec![1.0],
            xi_c: vec![0.0],
            xi_s: vec![0.0],
            theta_c: vec![c(0.0)],
            theta_s: CMatrix::zeros(1, 1),
        };
        let w = CMatrix::identity(1);
        let (oc, os) = surrogate_terms(&scn, &w, &w, &aux).unwrap();
        assert_eq!((oc, os), (vec![0.0], vec![0.0]));
        assert_eq!(surrogate_objective(&scn, &w, &w, &aux, 3.0).unwrap(), 0.0);
    }
}
