//! Process-variation fields and the leakage / conductivity maps derived from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{fft2_inplace, FieldMap, Unit};
use crate::kv::KvFile;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationParams {
    pub sigma_sys: f64,
    pub sigma_rand: f64,
    /// Correlation distance as a fraction of the die edge.
    pub corr_range: f64,
    pub seed: u64,
}

impl VariationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sys >= 0.0 && self.sigma_rand >= 0.0) {
            return Err(Error::Invalid("variation sigmas must be >= 0".into()));
        }
        if !(self.corr_range > 0.0 && self.corr_range <= 1.0) {
            return Err(Error::Invalid(format!(
                "corr_range {} outside (0, 1]",
                self.corr_range
            )));
        }
        Ok(())
    }
}

impl Default for VariationParams {
    fn default() -> Self {
        Self { sigma_sys: 0.1, sigma_rand: 0.05, corr_range: 0.5, seed: 1 }
    }
}

// Independent ChaCha streams per physical quantity so that, e.g., the
// oxide-thickness field does not alias the gate-length field for one seed.
pub const STREAM_L: u64 = 1;
pub const STREAM_TOX: u64 = 3;
pub const STREAM_K: u64 = 5;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Spherical correlogram, `d` and `phi` in the same length unit.
pub fn spherical_rho(d: f64, phi: f64) -> f64 {
    if d >= phi {
        0.0
    } else {
        let x = d / phi;
        1.0 - 1.5 * x + 0.5 * x * x * x
    }
}

pub fn gen_systematic_map(params: &VariationParams, n: usize, pitch: f64) -> Result<FieldMap> {
    gen_systematic_map_stream(params, n, pitch, 0)
}

/// Zero-mean Gaussian field with spherical correlation, by spectral synthesis:
/// white noise on a 2n torus is filtered by the square root of the
/// correlogram's spectrum, then one n×n quadrant is kept. The torus is twice
/// the die, so correlation lengths up to the full die edge do not wrap.
pub fn gen_systematic_map_stream(
    params: &VariationParams,
    n: usize,
    pitch: f64,
    stream: u64,
) -> Result<FieldMap> {
    params.validate()?;
    if n < 2 {
        return Err(Error::Invalid(format!("grid side {n} < 2")));
    }
    if params.sigma_sys == 0.0 {
        return Ok(FieldMap::zeros(n, pitch, Unit::Response));
    }
    let m = 2 * n;
    let phi = params.corr_range * n as f64;
    let mut spectrum: Vec<Complex64> = Vec::with_capacity(m * m);
    for i in 0..m {
        let di = i.min(m - i) as f64;
        for j in 0..m {
            let dj = j.min(m - j) as f64;
            spectrum.push(Complex64::new(spherical_rho((di * di + dj * dj).sqrt(), phi), 0.0));
        }
    }
    fft2_inplace(&mut spectrum, m, false);
    // clip tiny negative lobes from the discrete spectrum
    let amp: Vec<f64> = spectrum.iter().map(|c| c.re.max(0.0)).collect();
    let var: f64 = amp.iter().sum::<f64>() / (m * m) as f64;

    let mut r = rng(params.seed, 2 * stream);
    let mut w: Vec<Complex64> = (0..m * m)
        .map(|_| Complex64::new(StandardNormal.sample(&mut r), 0.0))
        .collect();
    fft2_inplace(&mut w, m, false);
    for (c, a) in w.iter_mut().zip(&amp) {
        *c *= a.sqrt();
    }
    fft2_inplace(&mut w, m, true);
    let s = params.sigma_sys / var.sqrt();
    Ok(FieldMap::from_fn(n, pitch, Unit::Response, |i, j| w[i * m + j].re * s))
}

pub fn gen_random_map(params: &VariationParams, n: usize, pitch: f64) -> Result<FieldMap> {
    gen_random_map_stream(params, n, pitch, 0)
}

pub fn gen_random_map_stream(
    params: &VariationParams,
    n: usize,
    pitch: f64,
    stream: u64,
) -> Result<FieldMap> {
    params.validate()?;
    if n < 2 {
        return Err(Error::Invalid(format!("grid side {n} < 2")));
    }
    let mut r = rng(params.seed, 2 * stream + 1);
    let sigma = params.sigma_rand;
    let values = (0..n * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            sigma * z
        })
        .collect();
    FieldMap::new(n, pitch, Unit::Response, values)
}

/// Fractional deviation field (systematic + random) for one physical parameter.
pub fn gen_parameter_map(
    params: &VariationParams,
    n: usize,
    pitch: f64,
    stream: u64,
) -> Result<FieldMap> {
    let sys = gen_systematic_map_stream(params, n, pitch, stream)?;
    let rnd = gen_random_map_stream(params, n, pitch, stream)?;
    sys.add(&rnd)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageBaseline {
    pub p_leak0: FieldMap,
    pub mu: f64,
    pub p_var: FieldMap,
    pub beta: f64,
}

impl LeakageBaseline {
    /// Split a leakage map into mean and zero-mean part; `p_leak0` is rebuilt
    /// as `mu + p_var` so the identity holds bit-for-bit.
    pub fn from_map(p: &FieldMap, beta: f64) -> Result<Self> {
        if p.values().iter().any(|v| *v < 0.0) {
            return Err(Error::Invalid("leakage must be non-negative".into()));
        }
        let mu = p.mean();
        let p_var = p.map(|v| v - mu).with_unit(Unit::Watts);
        let p_leak0 = p_var.map(|v| mu + v);
        Ok(Self { p_leak0, mu, p_var, beta })
    }

    /// No variation: `p_var` is exactly zero (the mean of a filled map can
    /// round away from the fill value).
    pub fn uniform(n: usize, pitch: f64, mu: f64, beta: f64) -> Self {
        Self {
            p_leak0: FieldMap::filled(n, pitch, Unit::Watts, mu),
            mu,
            p_var: FieldMap::zeros(n, pitch, Unit::Watts),
            beta,
        }
    }
}

pub const DEFAULT_EXPONENT_CAP: f64 = 10.0;

/// `P_leak0 = P_nom · exp(β_L ΔL + β_tox Δt_ox)` per cell.
pub fn leakage_baseline(
    nominal_leak: &FieldMap,
    d_l: &FieldMap,
    d_tox: &FieldMap,
    beta_l: f64,
    beta_tox: f64,
    beta: f64,
    exponent_cap: f64,
) -> Result<LeakageBaseline> {
    nominal_leak.check_same(d_l)?;
    nominal_leak.check_same(d_tox)?;
    if nominal_leak.values().iter().any(|v| *v < 0.0) {
        return Err(Error::Invalid("nominal leakage must be non-negative".into()));
    }
    let mut out = nominal_leak.clone().with_unit(Unit::Watts);
    for (k, v) in out.values_mut().iter_mut().enumerate() {
        let e = beta_l * d_l.values()[k] + beta_tox * d_tox.values()[k];
        if e.abs() > exponent_cap {
            return Err(Error::Overflow(e));
        }
        *v *= e.exp();
    }
    LeakageBaseline::from_map(&out, beta)
}

/// `(1 + β ΔT) · P_leak0`.
pub fn leakage_at_temperature(base: &LeakageBaseline, d_t: &FieldMap) -> Result<FieldMap> {
    base.p_leak0.zip_with(d_t, |p, t| (1.0 + base.beta * t) * p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityMap {
    pub k_map: FieldMap,
    pub k_nominal: f64,
}

impl ConductivityMap {
    pub fn uniform(n: usize, pitch: f64, k: f64) -> Self {
        Self { k_map: FieldMap::filled(n, pitch, Unit::Response, k), k_nominal: k }
    }
}

pub const DEFAULT_K_CAP: f64 = 0.3;

/// Per-cell conductivity `k_nom·(1 + r)`, `r` white Gaussian with std
/// `dopant_spread`, clamped to `±cap`.
pub fn conductivity_map(
    k_nominal: f64,
    params: &VariationParams,
    dopant_spread: f64,
    cap: f64,
    n: usize,
    pitch: f64,
) -> Result<ConductivityMap> {
    if !(k_nominal > 0.0) {
        return Err(Error::Invalid("nominal conductivity must be positive".into()));
    }
    if dopant_spread < 0.0 || !(0.0..1.0).contains(&cap) {
        return Err(Error::Invalid("dopant spread must be >= 0 and cap in [0, 1)".into()));
    }
    let mut r = rng(params.seed, 2 * STREAM_K + 1);
    let values = (0..n * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            k_nominal * (1.0 + (dopant_spread * z).clamp(-cap, cap))
        })
        .collect();
    Ok(ConductivityMap {
        k_map: FieldMap::new(n, pitch, Unit::Response, values)?,
        k_nominal,
    })
}

/// Linearized `κ(ΔT) = k0'·(1 − c·ΔT)`.
pub fn conductivity_at_temperature(k0p: f64, c: f64, d_t: f64) -> Result<f64> {
    let k = k0p * (1.0 - c * d_t);
    if k <= 0.0 {
        return Err(Error::Invalid(format!(
            "conductivity {k} <= 0 at dT = {d_t} (outside linearization range)"
        )));
    }
    Ok(k)
}

pub fn conductivity_field_at_temperature(k: &FieldMap, c: f64, d_t: &FieldMap) -> Result<FieldMap> {
    k.check_same(d_t)?;
    let mut out = k.clone();
    for (o, t) in out.values_mut().iter_mut().zip(d_t.values()) {
        *o = conductivity_at_temperature(*o, c, *t)?;
    }
    Ok(out)
}

/// Least-squares slope `c` such that `(T/T_amb)^−η ≈ 1 − c·(T − T_amb)` over
/// `[t_lo, t_hi]` kelvin, anchored at ambient. Returns `(c, max relative error)`.
pub fn fit_linear_c(eta: f64, ambient: f64, t_lo: f64, t_hi: f64) -> (f64, f64) {
    let samples = 241;
    let ts: Vec<f64> = (0..samples)
        .map(|k| t_lo + (t_hi - t_lo) * k as f64 / (samples - 1) as f64)
        .collect();
    let ratio = |t: f64| (t / ambient).powf(-eta);
    let (mut num, mut den) = (0.0, 0.0);
    for &t in &ts {
        let dt = t - ambient;
        num += (1.0 - ratio(t)) * dt;
        den += dt * dt;
    }
    let c = num / den;
    let err = ts
        .iter()
        .map(|&t| ((1.0 - c * (t - ambient)) / ratio(t) - 1.0).abs())
        .fold(0.0, f64::max);
    (c, err)
}

/// Everything needed to draw a chip's leakage and conductivity maps.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationConfig {
    pub params: VariationParams,
    /// Leakage–temperature coefficient (1/K).
    pub beta: f64,
    /// Leakage sensitivity to gate length (1/m); negative: longer gates leak less.
    pub beta_l: f64,
    /// Leakage sensitivity to oxide thickness (1/m).
    pub beta_tox: f64,
    pub l_nominal: f64,
    pub tox_nominal: f64,
    /// Nominal leakage per cell at ambient (W).
    pub leak_nominal: f64,
    pub dopant_spread: f64,
    pub k_cap: f64,
    /// Power-law exponent of silicon conductivity, used only to fit `c`.
    pub eta: f64,
    /// Seed of the conductivity map; kept apart from `params.seed` so Monte
    /// Carlo over leakage leaves the chip's conductivity untouched.
    pub k_seed: u64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            params: VariationParams::default(),
            beta: 0.0275,
            beta_l: -7.0e7,
            beta_tox: -1.12e9,
            l_nominal: 32e-9,
            tox_nominal: 1.2e-9,
            leak_nominal: 0.005,
            dopant_spread: 0.02,
            k_cap: DEFAULT_K_CAP,
            eta: 1.3,
            k_seed: 11,
        }
    }
}

impl VariationConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.params.seed = seed;
        c
    }

    /// Same config with both sigmas scaled (the high-variance case uses 2).
    pub fn scaled_sigma(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.params.sigma_sys *= s;
        c.params.sigma_rand *= s;
        c
    }

    pub fn leakage(&self, n: usize, pitch: f64) -> Result<LeakageBaseline> {
        let d_l = gen_parameter_map(&self.params, n, pitch, STREAM_L)?.scale(self.l_nominal);
        let d_tox = gen_parameter_map(&self.params, n, pitch, STREAM_TOX)?.scale(self.tox_nominal);
        let nominal = FieldMap::filled(n, pitch, Unit::Watts, self.leak_nominal);
        leakage_baseline(
            &nominal,
            &d_l,
            &d_tox,
            self.beta_l,
            self.beta_tox,
            self.beta,
            DEFAULT_EXPONENT_CAP,
        )
    }

    pub fn conductivity(&self, k_nominal: f64, n: usize, pitch: f64) -> Result<ConductivityMap> {
        let p = VariationParams { seed: self.k_seed, ..self.params };
        conductivity_map(k_nominal, &p, self.dopant_spread, self.k_cap, n, pitch)
    }

    /// `c` of the linearized conductivity over 40–100 °C.
    pub fn fit_c(&self, ambient: f64) -> f64 {
        fit_linear_c(self.eta, ambient, 313.15, 373.15).0
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("sigma_sys", self.params.sigma_sys);
        kv.set("sigma_rand", self.params.sigma_rand);
        kv.set("corr_range", self.params.corr_range);
        kv.set("seed", self.params.seed);
        kv.set("beta", self.beta);
        kv.set("beta_L", self.beta_l);
        kv.set("beta_tox", self.beta_tox);
        kv.set("L_nominal", self.l_nominal);
        kv.set("tox_nominal", self.tox_nominal);
        kv.set("leak_nominal", self.leak_nominal);
        kv.set("dopant_spread", self.dopant_spread);
        kv.set("k_cap", self.k_cap);
        kv.set("eta", self.eta);
        kv.set("k_seed", self.k_seed);
        kv
    }

    /// Missing keys keep their defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut c = Self::default();
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parse_opt($key)? {
                    $field = v;
                }
            };
        }
        take!("sigma_sys", c.params.sigma_sys);
        take!("sigma_rand", c.params.sigma_rand);
        take!("corr_range", c.params.corr_range);
        take!("seed", c.params.seed);
        take!("beta", c.beta);
        take!("beta_L", c.beta_l);
        take!("beta_tox", c.beta_tox);
        take!("L_nominal", c.l_nominal);
        take!("tox_nominal", c.tox_nominal);
        take!("leak_nominal", c.leak_nominal);
        take!("dopant_spread", c.dopant_spread);
        take!("k_cap", c.k_cap);
        take!("eta", c.eta);
        take!("k_seed", c.k_seed);
        c.params.validate()?;
        Ok(c)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}
