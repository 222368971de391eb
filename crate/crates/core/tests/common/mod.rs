//! Reference implementations shared by the integration and acceptance tests.
//! Everything here is written from the model definitions with plain loops and
//! avoids the library's own intermediate terms.
#![allow(dead_code)]

use jcas::numerics::{CMatrix, C64};
use jcas::scenario::{complex_gaussian, generate_scenario, Scenario, SystemConfig};
use jcas::AuxState;
use rand::Rng;

pub fn desk(seed: u64) -> Scenario {
    generate_scenario(&SystemConfig::desk(), seed).unwrap()
}

/// Gaussian precoder with every antenna row scaled to a random power in
/// `[0.1, 1] · Pt/Nt`.
pub fn random_precoder<R: Rng>(scn: &Scenario, rng: &mut R) -> CMatrix {
    let (nt, k) = (scn.nt(), scn.k());
    let cap = scn.config.pt / nt as f64;
    let mut w = CMatrix::from_fn(nt, k, |_, _| complex_gaussian(rng));
    for i in 0..nt {
        let p: f64 = (0..k).map(|j| w[(i, j)].norm_sqr()).sum();
        let target = cap * rng.gen_range(0.1..=1.0);
        let s = (target / p).sqrt();
        for j in 0..k {
            w[(i, j)] *= s;
        }
    }
    w
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// `h_kᴴ w_j` by explicit summation.
fn link(scn: &Scenario, w: &CMatrix, k: usize, j: usize) -> C64 {
    (0..scn.nt()).map(|n| scn.h[(n, k)].conj() * w[(n, j)]).sum()
}

/// `f_mᴴ G_i w_k` by explicit summation.
fn echo(scn: &Scenario, w: &CMatrix, f: &CMatrix, m: usize, i: usize, k: usize) -> C64 {
    let g = &scn.g[i];
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..scn.nr() {
        let gw: C64 = (0..scn.nt()).map(|n| g[(r, n)] * w[(n, k)]).sum();
        acc += f[(r, m)].conj() * gw;
    }
    acc
}

pub fn naive_sinr(scn: &Scenario, w: &CMatrix) -> Vec<f64> {
    (0..scn.k())
        .map(|k| {
            let s = link(scn, w, k, k).norm_sqr();
            let i: f64 = (0..scn.k()).filter(|&j| j != k).map(|j| link(scn, w, k, j).norm_sqr()).sum();
            s / (i + scn.config.sigma_c2[k])
        })
        .collect()
}

pub fn naive_scnr(scn: &Scenario, w: &CMatrix, f: &CMatrix) -> Vec<f64> {
    let n_scat = scn.g.len();
    (0..scn.m())
        .map(|m| {
            let s: f64 = (0..scn.k()).map(|k| echo(scn, w, f, m, m, k).norm_sqr()).sum();
            let mut i = 0.0;
            for j in (0..n_scat).filter(|&j| j != m) {
                i += (0..scn.k()).map(|k| echo(scn, w, f, m, j, k).norm_sqr()).sum::<f64>();
            }
            let fnorm2: f64 = (0..scn.nr()).map(|r| f[(r, m)].norm_sqr()).sum();
            s / (i + scn.nr() as f64 * scn.config.sigma_s2 * fnorm2)
        })
        .collect()
}

pub fn naive_utility(scn: &Scenario, w: &CMatrix, f: &CMatrix, delta: f64) -> f64 {
    let rc = naive_sinr(scn, w).into_iter().map(f64::ln_1p).fold(f64::INFINITY, f64::min);
    let rs = naive_scnr(scn, w, f).into_iter().map(f64::ln_1p).fold(f64::INFINITY, f64::min);
    rc + delta * rs
}

/// `Σ_k z_ck log(1+γ_ck) + δ Σ_m z_sm log(1+γ_sm)`.
pub fn z_weighted_rates(scn: &Scenario, w: &CMatrix, f: &CMatrix, aux: &AuxState, delta: f64) -> f64 {
    let c: f64 = naive_sinr(scn, w).iter().zip(&aux.z_c).map(|(g, z)| z * g.ln_1p()).sum();
    let s: f64 = naive_scnr(scn, w, f).iter().zip(&aux.z_s).map(|(g, z)| z * g.ln_1p()).sum();
    c + delta * s
}

/// Sensing surrogate term of target `m` written out from its definition.
pub fn naive_o_sm(scn: &Scenario, w: &CMatrix, f: &CMatrix, aux: &AuxState, m: usize) -> f64 {
    let xi = aux.xi_s[m];
    let mut cross = C64::new(0.0, 0.0);
    let mut th2 = 0.0;
    for k in 0..scn.k() {
        cross += echo(scn, w, f, m, m, k) * aux.theta_s[(m, k)].conj();
        th2 += aux.theta_s[(m, k)].norm_sqr();
    }
    let mut total = 0.0;
    for j in 0..scn.g.len() {
        total += (0..scn.k()).map(|k| echo(scn, w, f, m, j, k).norm_sqr()).sum::<f64>();
    }
    let fnorm2: f64 = (0..scn.nr()).map(|r| f[(r, m)].norm_sqr()).sum();
    total += scn.nr() as f64 * scn.config.sigma_s2 * fnorm2;
    xi.ln_1p() + 2.0 * (1.0 + xi).sqrt() * cross.re - xi - th2 * total
}

/// Central-difference Wirtinger-style gradient `∂φ/∂Re x + j ∂φ/∂Im x`.
pub fn fd_gradient(phi: impl Fn(&CMatrix) -> f64, x: &CMatrix, step: f64) -> CMatrix {
    let (r, c) = x.shape();
    let mut out = CMatrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let mut d = [0.0; 2];
            for (part, unit) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)].into_iter().enumerate() {
                let mut plus = x.clone();
                plus[(i, j)] += unit * step;
                let mut minus = x.clone();
                minus[(i, j)] -= unit * step;
                d[part] = (phi(&plus) - phi(&minus)) / (2.0 * step);
            }
            out[(i, j)] = C64::new(d[0], d[1]);
        }
    }
    out
}

pub fn fro(a: &CMatrix) -> f64 {
    a.as_slice().iter().map(C64::norm_sqr).sum::<f64>().sqrt()
}

pub fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
    fro(&(a - b)) / fro(b)
}

/// One-sided sign test: `P(X ≥ wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for x in wins..=n {
        let mut c = 1.0f64;
        for i in 0..x {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        p += c * 0.5f64.powi(n as i32);
    }
    p
}

/// Sample coefficient of variation.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}

/// Scalar system: one antenna on each side, one user, one target, no clutter.
pub fn scalar_config() -> SystemConfig {
    let mut cfg = SystemConfig::desk();
    cfg.nt = 1;
    cfg.nr = 1;
    cfg.m = 1;
    cfg.c = 0;
    cfg.with_users(1)
}
