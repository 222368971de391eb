//! Problem instances: Rician user channels, line-of-sight target and clutter
//! responses, path-gain bookkeeping and deterministic seeding.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::numerics::{CMatrix, C64};

/// Sign convention of the distance exponent in the path-gain model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGainLaw {
    /// `ζ₀ · d^(−ε)`: gain falls off with distance.
    #[default]
    Decay,
    /// `ζ₀ · d^(+ε)`, the formula taken literally.
    Literal,
}

/// Affine-Gaussian distance model `mean + std · η`, `η ~ N(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceModel {
    pub mean_m: f64,
    pub std_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub nt: usize,
    pub nr: usize,
    pub k: usize,
    pub m: usize,
    pub c: usize,
    /// Transmit power budget, linear mW.
    pub pt: f64,
    /// Radar noise power, linear mW.
    pub sigma_s2: f64,
    /// Per-user noise powers, linear mW (length `k`).
    pub sigma_c2: Vec<f64>,
    /// Linear Rician factor.
    pub rician_kappa: f64,
    pub zeta0_db: f64,
    pub eps_c: f64,
    pub eps_s: f64,
    #[serde(default)]
    pub path_gain_law: PathGainLaw,
    pub angle_range_deg: f64,
    pub min_sep_deg: f64,
    pub user_distance: DistanceModel,
    pub sensing_distance: DistanceModel,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemConfig {
    /// Small array used by the test suite and the examples:
    /// `Nt = Nr = 8`, `K = 4`, `M = C = 2`.
    ///
    /// Powers are in normalized units: `Pt = 1 mW` keeps `‖W‖_F = 1`, so a
    /// unit-normalized gradient step of `β` moves the precoder by a fraction
    /// `β` of its norm. Noise at −120 dBm gives roughly 39 dB single-antenna
    /// user SNR at 100 m and keeps the sensing SCNR near 0 dB at 10 m.
    pub fn desk() -> Self {
        let k = 4;
        SystemConfig {
            nt: 8,
            nr: 8,
            k,
            m: 2,
            c: 2,
            pt: 1.0,
            sigma_s2: db_to_linear(-120.0),
            sigma_c2: vec![db_to_linear(-120.0); k],
            rician_kappa: db_to_linear(3.0),
            zeta0_db: -30.0,
            eps_c: 3.0,
            eps_s: 2.0,
            path_gain_law: PathGainLaw::Decay,
            angle_range_deg: 60.0,
            min_sep_deg: 10.0,
            user_distance: DistanceModel {
                mean_m: 100.0,
                std_m: 20.0,
            },
            sensing_distance: DistanceModel {
                mean_m: 10.0,
                std_m: 2.0,
            },
        }
    }

    /// Full-size array (`Nt = Nr = 16`) at the nominal power levels:
    /// noise at −80 dBm and `Pt/σ² = 20 dB`.
    pub fn full_scale() -> Self {
        let mut cfg = Self::desk();
        cfg.nt = 16;
        cfg.nr = 16;
        cfg.sigma_s2 = db_to_linear(-80.0);
        cfg.pt = db_to_linear(-60.0);
        cfg.sigma_c2 = vec![cfg.sigma_s2; cfg.k];
        cfg
    }

    /// Same system with `k` users; per-user noise takes the first user's value.
    pub fn with_users(&self, k: usize) -> Self {
        let mut cfg = self.clone();
        let noise = self.sigma_c2.first().copied().unwrap_or(self.sigma_s2);
        cfg.k = k;
        cfg.sigma_c2 = vec![noise; k];
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(JcasError::InvalidConfig(msg));
        if self.nt == 0 || self.nr == 0 || self.k == 0 || self.m == 0 {
            return bad(format!(
                "nt={}, nr={}, k={}, m={} must all be >= 1",
                self.nt, self.nr, self.k, self.m
            ));
        }
        if self.sigma_c2.len() != self.k {
            return bad(format!(
                "sigma_c2 has {} entries for k={}",
                self.sigma_c2.len(),
                self.k
            ));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.pt) || !positive(self.sigma_s2) || !self.sigma_c2.iter().all(|&s| positive(s)) {
            return bad("power budget and noise powers must be positive".into());
        }
        if !(self.rician_kappa >= 0.0) {
            return bad(format!("rician_kappa = {} must be >= 0", self.rician_kappa));
        }
        if !(self.min_sep_deg >= 0.0) || !(self.angle_range_deg >= 0.0) {
            return bad("angular sector and separation must be >= 0".into());
        }
        Ok(())
    }
}

/// Half-wavelength ULA steering vector, unit norm, phase reference at element 0.
pub fn steering_vector(n: usize, phi: f64) -> Vec<C64> {
    let amp = 1.0 / (n as f64).sqrt();
    let s = phi.sin();
    (0..n)
        .map(|i| C64::from_polar(amp, PI * i as f64 * s))
        .collect()
}

/// Linear path gain `10^(ζ₀/10) · d^(∓ε)`.
pub fn path_gain(zeta0_db: f64, d: f64, eps: f64, law: PathGainLaw) -> Result<f64> {
    if !(d > 0.0) {
        return Err(JcasError::NonPositiveDistance(d));
    }
    let exponent = match law {
        PathGainLaw::Decay => -eps,
        PathGainLaw::Literal => eps,
    };
    Ok(db_to_linear(zeta0_db) * d.powf(exponent))
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician channel `h = √ζ_c (√(κ/(1+κ)) √Nt a_t + √(1/(1+κ)) g)`.
pub fn make_user_channel<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    angle: f64,
    d: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let zeta = path_gain(cfg.zeta0_db, d, cfg.eps_c, cfg.path_gain_law)?;
    let kappa = cfg.rician_kappa;
    let (los_w, nlos_w) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    let a = steering_vector(cfg.nt, angle);
    let sqrt_nt = (cfg.nt as f64).sqrt();
    let amp = zeta.sqrt();
    Ok(a
        .into_iter()
        .map(|ai| {
            let scatter = if nlos_w > 0.0 { complex_gaussian(rng) } else { C64::new(0.0, 0.0) };
            (ai * (los_w * sqrt_nt) + scatter * nlos_w) * amp
        })
        .collect())
}

/// Rank-one response `G = ζ_s α a_r(φ) a_t(φ)ᴴ`, size `Nr × Nt`.
pub fn make_response_matrix(cfg: &SystemConfig, angle: f64, d: f64, alpha: C64) -> Result<CMatrix> {
    let zeta = path_gain(cfg.zeta0_db, d, cfg.eps_s, cfg.path_gain_law)?;
    let ar = steering_vector(cfg.nr, angle);
    let at = steering_vector(cfg.nt, angle);
    Ok(CMatrix::outer(&ar, &at).scale(alpha * zeta))
}

/// One problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    /// `Nt × K`, column `k` is `h_k`.
    pub h: CMatrix,
    /// `M + C` matrices of size `Nr × Nt`; targets first, then clutter.
    pub g: Vec<CMatrix>,
    pub user_angles: Vec<f64>,
    pub target_angles: Vec<f64>,
    pub clutter_angles: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_s: Vec<f64>,
    pub alpha_s: Vec<C64>,
    pub seed: u64,
}

impl Scenario {
    pub fn nt(&self) -> usize {
        self.config.nt
    }

    pub fn nr(&self) -> usize {
        self.config.nr
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    /// Targets plus clutter.
    pub fn scatterers(&self) -> usize {
        self.config.m + self.config.c
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cfg = &self.config;
        let n = cfg.m + cfg.c;
        if self.h.shape() != (cfg.nt, cfg.k) {
            return Err(JcasError::dims(format!(
                "h is {:?}, expected ({}, {})",
                self.h.shape(),
                cfg.nt,
                cfg.k
            )));
        }
        if self.g.len() != n || self.g.iter().any(|g| g.shape() != (cfg.nr, cfg.nt)) {
            return Err(JcasError::dims(format!(
                "expected {n} response matrices of size {}x{}",
                cfg.nr, cfg.nt
            )));
        }
        let lens = [
            ("user_angles", self.user_angles.len(), cfg.k),
            ("target_angles", self.target_angles.len(), cfg.m),
            ("clutter_angles", self.clutter_angles.len(), cfg.c),
            ("d_c", self.d_c.len(), cfg.k),
            ("d_s", self.d_s.len(), n),
            ("alpha_s", self.alpha_s.len(), n),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(JcasError::dims(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if !self.h.is_finite() || !self.g.iter().all(CMatrix::is_finite) {
            return Err(JcasError::InvalidConfig("non-finite channel entry".into()));
        }
        Ok(())
    }
}

const SEPARATION_TRIES: usize = 1000;
const SEPARATION_RESTARTS: usize = 1000;

fn sample_separated<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    range_deg: f64,
    min_sep_deg: f64,
) -> Result<Vec<f64>> {
    let infeasible = || JcasError::SeparationInfeasible {
        count,
        min_sep_deg,
        range_deg,
    };
    if count > 1 && (count - 1) as f64 * min_sep_deg >= 2.0 * range_deg && min_sep_deg > 0.0 {
        return Err(infeasible());
    }
    'restart: for _ in 0..SEPARATION_RESTARTS {
        let mut placed: Vec<f64> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut ok = false;
            for _ in 0..SEPARATION_TRIES {
                let cand = uniform_deg(rng, range_deg);
                if placed.iter().all(|&p| (p - cand).abs() >= min_sep_deg) {
                    placed.push(cand);
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue 'restart;
            }
        }
        return Ok(placed);
    }
    Err(infeasible())
}

fn uniform_deg<R: Rng + ?Sized>(rng: &mut R, range_deg: f64) -> f64 {
    if range_deg == 0.0 {
        0.0
    } else {
        rng.gen_range(-range_deg..=range_deg)
    }
}

fn draw_distance<R: Rng + ?Sized>(rng: &mut R, model: DistanceModel) -> f64 {
    let eta: f64 = rng.sample(StandardNormal);
    (model.mean_m + model.std_m * eta).max(1.0)
}

/// Draws one scenario; a pure function of `(cfg, seed)`.
pub fn generate_scenario(cfg: &SystemConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_scatter = cfg.m + cfg.c;

    let user_deg: Vec<f64> = (0..cfg.k).map(|_| uniform_deg(&mut rng, cfg.angle_range_deg)).collect();
    let scatter_deg = sample_separated(&mut rng, n_scatter, cfg.angle_range_deg, cfg.min_sep_deg)?;
    let d_c: Vec<f64> = (0..cfg.k).map(|_| draw_distance(&mut rng, cfg.user_distance)).collect();
    let d_s: Vec<f64> = (0..n_scatter)
        .map(|_| draw_distance(&mut rng, cfg.sensing_distance))
        .collect();
    let alpha_s: Vec<C64> = (0..n_scatter).map(|_| complex_gaussian(&mut rng)).collect();

    let user_angles: Vec<f64> = user_deg.iter().map(|d| d.to_radians()).collect();
    let scatter_angles: Vec<f64> = scatter_deg.iter().map(|d| d.to_radians()).collect();

    let mut h = CMatrix::zeros(cfg.nt, cfg.k);
    for k in 0..cfg.k {
        let hk = make_user_channel(cfg, user_angles[k], d_c[k], &mut rng)?;
        h.set_column(k, &hk);
    }
    let g = (0..n_scatter)
        .map(|i| make_response_matrix(cfg, scatter_angles[i], d_s[i], alpha_s[i]))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        config: cfg.clone(),
        h,
        g,
        user_angles,
        target_angles: scatter_angles[..cfg.m].to_vec(),
        clutter_angles: scatter_angles[cfg.m..].to_vec(),
        d_c,
        d_s,
        alpha_s,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: SystemConfig,
    pub split_tag: SplitTag,
    pub scenarios: Vec<Scenario>,
}

impl Dataset {
    pub fn generate(cfg: &SystemConfig, seeds: &[u64], split_tag: SplitTag) -> Result<Self> {
        let scenarios = seeds
            .iter()
            .map(|&s| generate_scenario(cfg, s))
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset {
            config: cfg.clone(),
            split_tag,
            scenarios,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let mut seen = HashSet::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate()?;
            let (a, b) = (&s.config, &self.config);
            if (a.nt, a.nr, a.k, a.m, a.c) != (b.nt, b.nr, b.k, b.m, b.c) {
                return Err(JcasError::dims(format!(
                    "scenario {i} dimensions differ from the dataset config"
                )));
            }
            if !seen.insert(s.seed) {
                return Err(JcasError::InvalidConfig(format!("duplicate scenario seed {}", s.seed)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the serialized dataset, hex encoded.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_json(ds, path.as_ref())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let ds: Dataset = read_json(path)?;
    ds.validate().map_err(|e| JcasError::Format {
        path: path.to_path_buf(),
        field: "scenarios".into(),
        message: e.to_string(),
    })?;
    Ok(ds)
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| JcasError::io(parent, e))?;
    }
    let text = serde_json::to_string(value).map_err(|e| JcasError::Format {
        path: path.to_path_buf(),
        field: String::new(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| JcasError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| JcasError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| JcasError::Format {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}
