//! Calibrated Green's functions: the baseline impulse response from the
//! oracle, the leakage/conductivity-modified deterministic kernel, the random
//! (variation) correction and the transient tensor.
//!
//! All kernels live on the mirrored 2n×2n grid, centered at (n, n). Spectra
//! are taken after moving the kernel origin to index (0, 0).

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    center_to_origin, crop_center, fft2_inplace, mirror_pad, origin_to_center, FieldMap, Unit,
};
use crate::kv::{parse_f64_list, KvFile};
use crate::oracle::{Oracle, SolveOptions};
use crate::stack::ChipStack;
use crate::variation::{ConductivityMap, LeakageBaseline};

/// Magnitude floor for spectral denominators; below it the closed form is
/// treated as thermal runaway.
pub const DENOM_FLOOR: f64 = 1e-6;

pub fn kernel_spectrum(k: &FieldMap) -> Vec<Complex64> {
    let o = center_to_origin(k);
    let mut s: Vec<Complex64> = o.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut s, k.n(), false);
    s
}

pub fn kernel_from_spectrum(s: &[Complex64], m: usize, pitch: f64, unit: Unit) -> FieldMap {
    let mut buf = s.to_vec();
    fft2_inplace(&mut buf, m, true);
    let o = FieldMap::new(m, pitch, unit, buf.iter().map(|c| c.re).collect())
        .expect("finite spectrum gives finite kernel");
    origin_to_center(&o)
}

fn field_spectrum(f: &FieldMap) -> Vec<Complex64> {
    let mut s: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut s, f.n(), false);
    s
}

/// Mirror-pad `p`, multiply by the kernel spectrum, invert, crop to the die.
pub fn apply_kernel(spectrum: &[Complex64], p: &FieldMap) -> Result<FieldMap> {
    let m = 2 * p.n();
    if spectrum.len() != m * m {
        return Err(Error::shape(m * m, spectrum.len()));
    }
    let mut s = field_spectrum(&mirror_pad(p));
    for (a, b) in s.iter_mut().zip(spectrum) {
        *a *= b;
    }
    fft2_inplace(&mut s, m, true);
    let full = FieldMap::new(m, p.pitch(), Unit::Kelvin, s.iter().map(|c| c.re).collect())?;
    crop_center(&full, p.n())
}

#[derive(Debug, Clone)]
pub struct Baseline {
    /// 2n×2n kernel centered at (n, n).
    pub f_sp0: FieldMap,
    /// Mean over the outermost ring of the die-sized window around the source.
    pub phi: f64,
    /// Far-corner value of the mirrored kernel.
    pub kappa_inf: f64,
}

/// Steady impulse response on the mirrored periodic grid (effects off).
pub fn extract_baseline(stack: &ChipStack, k: &ConductivityMap) -> Result<Baseline> {
    let oracle = Oracle::mirrored(stack, k)?;
    let f_sp0 = oracle.impulse_response()?;
    Ok(baseline_from_kernel(f_sp0))
}

pub fn baseline_from_kernel(f_sp0: FieldMap) -> Baseline {
    let m = f_sp0.n();
    let n = m / 2;
    let window = crop_center(&f_sp0, n).expect("kernel is 2n wide");
    let mut ring = Vec::with_capacity(4 * n);
    for t in 0..n {
        ring.push(window.get(0, t));
        ring.push(window.get(n - 1, t));
        if t > 0 && t < n - 1 {
            ring.push(window.get(t, 0));
            ring.push(window.get(t, n - 1));
        }
    }
    let phi = ring.iter().sum::<f64>() / ring.len() as f64;
    let kappa_inf = f_sp0.get(0, 0);
    Baseline { f_sp0, phi, kappa_inf }
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    /// Slope of `f_peak(κ)/f_peak(k0) − 1` against `k0 − κ` (per W/(m·K)).
    pub c_prime: f64,
    pub fit_r2: f64,
    /// (conductivity, peak response) per sweep point.
    pub sweep: Vec<(f64, f64)>,
    /// Worst relative error of the linear reconstruction over the sweep.
    pub max_rel_err: f64,
}

/// Fit `f_peak(κ) = f_peak(k0)·(1 + c′(k0 − κ))` from peak responses and
/// compose `α = c′·c·k0`.
pub fn fit_alpha_from_sweep(k0: f64, sweep: &[(f64, f64)], c: f64) -> Result<(f64, CalibrationReport)> {
    if sweep.len() < 4 {
        return Err(Error::Calibration(format!("sweep has {} points, need >= 4", sweep.len())));
    }
    let f0 = sweep
        .iter()
        .find(|(k, _)| (*k - k0).abs() <= 1e-12 * k0)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::Calibration("sweep must include the nominal conductivity".into()))?;
    let xs: Vec<f64> = sweep.iter().map(|(k, _)| k0 - k).collect();
    let ys: Vec<f64> = sweep.iter().map(|(_, f)| f / f0 - 1.0).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx <= 1e-24 * k0 * k0 {
        return Err(Error::Calibration("degenerate conductivity sweep".into()));
    }
    let c_prime = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c_prime * x).powi(2)).sum();
    let fit_r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 0.0 };
    let max_rel_err = sweep
        .iter()
        .zip(&xs)
        .map(|((_, f), x)| (f0 * (1.0 + c_prime * x) / f - 1.0).abs())
        .fold(0.0, f64::max);
    let report = CalibrationReport { c_prime, fit_r2, sweep: sweep.to_vec(), max_rel_err };
    if fit_r2 < 0.95 {
        return Err(Error::Calibration(format!("fit r² {fit_r2:.3} < 0.95")));
    }
    Ok((c_prime * c * k0, report))
}

/// Default sweep: the linearized conductivity at die rises of 0, 20, 40, 55 K
/// (ambient 45 °C, so this spans the 40–100 °C linearization window).
pub fn default_sweep(k0: f64, c: f64) -> Vec<f64> {
    [0.0, 20.0, 40.0, 55.0].iter().map(|dt| k0 * (1.0 - c * dt)).collect()
}

/// Run uniform-conductivity impulse responses across `sweep` and fit α.
pub fn fit_alpha(stack: &ChipStack, sweep: &[f64], c: f64) -> Result<(f64, CalibrationReport)> {
    let k0 = stack.die().conductivity;
    let mut pts = Vec::with_capacity(sweep.len());
    for &kv in sweep {
        let k = ConductivityMap::uniform(stack.n, stack.pitch(), kv);
        let f = Oracle::mirrored(stack, &k)?.impulse_response()?;
        pts.push((kv, f.max()));
    }
    fit_alpha_from_sweep(k0, &pts, c)
}

/// Lemma I shift `f_sp0 − κ∞ + f_sp0(center)`.
pub fn make_g_shift(f_sp0: &FieldMap, kappa_inf: f64, center_value: f64) -> FieldMap {
    f_sp0.map(|v| v - kappa_inf + center_value)
}

/// `Q = P_var − P_var(far corner) + P_var(center)`.
pub fn q_rand(p_var: &FieldMap) -> FieldMap {
    let (c, _) = p_var.center();
    let far = p_var.get(0, 0);
    let mid = p_var.get(c, c);
    p_var.map(|v| v - far + mid)
}

/// Spectral pieces of the deterministic closed form, kept for reuse by the
/// random and transient constructions.
#[derive(Debug, Clone)]
pub struct DetSpectra {
    pub sp0: Vec<Complex64>,
    pub den: Vec<Complex64>,
    pub det: Vec<Complex64>,
    /// Uniform leakage-only rise `μΣf/(1 − μβΣf)` used for the background
    /// conductivity shift.
    pub t0_uniform: f64,
}

/// Deterministic modified kernel:
///
/// `F(f_det) = F(f) / (1 − ½α·F((f−φ)∘f)/F(f) − α·T0u·F(f−φ)/F(f) − μβF(f))`
///
/// The three denominator terms are, in order: the source's own heating of
/// the local conductivity (the ½ is the first-order Kirchhoff-transform
/// factor for k = k0(1 − cT)), the conductivity drop from the uniform
/// leakage background T0u, and the leakage–temperature loop. Both α terms
/// act on the local part f − φ of the kernel; see the README for why the
/// global constant is excluded.
pub fn deterministic_greens(base: &Baseline, alpha: f64, beta: f64, mu: f64) -> Result<DetSpectra> {
    let f = &base.f_sp0;
    let m = f.n();
    let sp0 = kernel_spectrum(f);
    let sum_f = sp0[0].re;
    let loop_gain = mu * beta * sum_f;
    if 1.0 - loop_gain < DENOM_FLOOR {
        return Err(Error::Runaway { min_abs: 1.0 - loop_gain, floor: DENOM_FLOOR });
    }
    let t0_uniform = mu * sum_f / (1.0 - loop_gain);
    let (den, det) = if alpha == 0.0 {
        let den: Vec<Complex64> = sp0.iter().map(|s| Complex64::new(1.0, 0.0) - mu * beta * s).collect();
        let det = sp0.iter().zip(&den).map(|(s, d)| s / d).collect();
        (den, det)
    } else {
        let local = f.map(|v| v - base.phi);
        let loc = kernel_spectrum(&local);
        let selfm = kernel_spectrum(&crate::grid::hadamard(&local, f)?);
        let peak = sum_f.abs();
        let mut den = Vec::with_capacity(m * m);
        for k in 0..m * m {
            if sp0[k].norm() < 1e-13 * peak {
                return Err(Error::Calibration(format!("kernel spectrum vanishes at bin {k}")));
            }
            let d = Complex64::new(1.0, 0.0)
                - 0.5 * alpha * selfm[k] / sp0[k]
                - alpha * t0_uniform * loc[k] / sp0[k]
                - mu * beta * sp0[k];
            den.push(d);
        }
        let det = sp0.iter().zip(&den).map(|(s, d)| s / d).collect();
        (den, det)
    };
    let min_abs = den.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
    if min_abs < DENOM_FLOOR {
        return Err(Error::Runaway { min_abs, floor: DENOM_FLOOR });
    }
    Ok(DetSpectra { sp0, den, det, t0_uniform })
}

/// Literal reading of the deterministic closed form with the Lemma I shift
/// placed on the spectral grid and `F(μ)` the transform of the constant map.
/// Returns the denominator; exposed for diagnostics only.
pub fn literal_denominator(base: &Baseline, g_sp0: &FieldMap, alpha: f64, beta: f64, mu: f64) -> Vec<Complex64> {
    let m = base.f_sp0.n();
    let sp0 = kernel_spectrum(&base.f_sp0);
    let g = center_to_origin(g_sp0);
    let f_mu = mu * (m * m) as f64;
    (0..m * m)
        .map(|k| {
            let fm = if k == 0 { f_mu } else { 0.0 };
            Complex64::new(1.0, 0.0) - alpha * g.values()[k] * (1.0 + fm) - mu * beta * sp0[k]
        })
        .collect()
}

/// Random (variation) correction of a deterministic die profile:
///
/// `T_rand = F⁻¹[ β·F(f)·F(P_var ∘ T_det) / den ]`
///
/// i.e. the extra leakage `β P_var T_det` that the deterministic solution
/// induces, propagated through the same closed-loop denominator.
pub fn random_correction(det: &DetSpectra, beta: f64, p_var: &FieldMap, t_det: &FieldMap) -> Result<FieldMap> {
    if beta == 0.0 {
        return Ok(FieldMap::zeros(t_det.n(), t_det.pitch(), Unit::Kelvin));
    }
    let src = crate::grid::hadamard(p_var, t_det)?;
    let mult: Vec<Complex64> = det.sp0.iter().zip(&det.den).map(|(s, d)| beta * s / d).collect();
    apply_kernel(&mult, &src)
}

/// Transient kernel spectrum at time `t`:
/// `F(T_ss)·(1 − exp(−t / (C·F(T_ss))))`.
pub fn transient_spectrum(steady: &[Complex64], c_cell: f64, t: f64) -> Result<Vec<Complex64>> {
    if t < 0.0 {
        return Err(Error::Invalid(format!("negative time {t}")));
    }
    steady
        .iter()
        .map(|s| {
            let tau = c_cell * s;
            if !(tau.re > 0.0) {
                return Err(Error::Calibration(format!("non-positive time constant {tau}")));
            }
            Ok(s * (Complex64::new(1.0, 0.0) - (-t / tau).exp()))
        })
        .collect()
}

/// Transient Green's function as a centered 2n kernel; tiny negative ringing
/// (below 1e-9 of the peak) is clamped to zero.
pub fn transient_greens(steady: &[Complex64], m: usize, pitch: f64, c_cell: f64, t: f64) -> Result<FieldMap> {
    let s = transient_spectrum(steady, c_cell, t)?;
    let k = kernel_from_spectrum(&s, m, pitch, Unit::Response);
    let floor = 1e-9 * k.max().abs();
    Ok(k.map(|v| if v < 0.0 && v > -floor { 0.0 } else { v }))
}

/// Least-squares `C` for the α = 0 transient form against center-cell
/// samples `(t, rise)` of the response to 1 W at the die center.
/// Returns `(C, relative RMS residual)`.
pub fn fit_capacitance_samples(kernel: &FieldMap, samples: &[(f64, f64)], guess: f64) -> Result<(f64, f64)> {
    if samples.is_empty() || !(guess > 0.0) {
        return Err(Error::Calibration("need samples and a positive guess".into()));
    }
    let m = kernel.n();
    let n = m / 2;
    let spectrum = kernel_spectrum(kernel);
    let src = FieldMap::impulse(n, kernel.pitch(), Unit::Watts, n / 2, n / 2);
    let src_spec = field_spectrum(&mirror_pad(&src));
    // response at the die center = mirrored index (n, n)
    let phase: Vec<Complex64> = (0..m * m)
        .map(|k| {
            let (u, v) = ((k / m) as f64, (k % m) as f64);
            let ang = 2.0 * std::f64::consts::PI * (u * n as f64 + v * n as f64) / m as f64;
            Complex64::from_polar(1.0 / (m * m) as f64, ang) * src_spec[k] * spectrum[k]
        })
        .collect();
    let center_at = |c: f64, t: f64| -> f64 {
        phase
            .iter()
            .zip(&spectrum)
            .map(|(p, s)| (p * (1.0 - (-t / (c * s)).exp())).re)
            .sum()
    };
    let cost = |lc: f64| -> f64 {
        let c = lc.exp();
        samples.iter().map(|(t, y)| (center_at(c, *t) - y).powi(2)).sum()
    };
    // golden section in log C over two decades either side of the guess
    let (mut a, mut b) = (guess.ln() - 4.6, guess.ln() + 4.6);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..120 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2);
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let c = (0.5 * (a + b)).exp();
    let peak = samples.iter().map(|(_, y)| y.abs()).fold(0.0, f64::max);
    let rms = (cost(c.ln()) / samples.len() as f64).sqrt() / peak.max(f64::MIN_POSITIVE);
    if rms > 0.10 {
        return Err(Error::Calibration(format!("capacitance fit residual {rms:.3} > 10%")));
    }
    Ok((c, rms))
}

/// Oracle transient of 1 W held at the die center (effects off), sampled
/// every 0.1 ms over 5 ms, fitted for the per-cell capacitance.
pub fn fit_capacitance(stack: &ChipStack, k: &ConductivityMap, kernel: &FieldMap) -> Result<(f64, f64)> {
    let oracle = Oracle::new(stack, k)?;
    let opts = SolveOptions { dt: 5e-6, ..SolveOptions::default() };
    let sample_dt = 1e-4;
    let maps = oracle.impulse_response_transient(sample_dt, 5e-3, None, &opts, None)?;
    let c = stack.n / 2;
    let samples: Vec<(f64, f64)> = maps
        .iter()
        .enumerate()
        .map(|(i, f)| ((i + 1) as f64 * sample_dt, f.get(c, c)))
        .collect();
    let guess = stack.die_cell_capacitance().max(1e-15);
    fit_capacitance_samples(kernel, &samples, guess)
}

/// 100 samples over (0, 10] ms.
pub fn default_t_samples() -> Vec<f64> {
    (1..=100).map(|i| i as f64 * 1e-4).collect()
}

#[derive(Debug, Clone)]
pub struct GreensSet {
    pub n: usize,
    pub pitch: f64,
    pub f_sp0: FieldMap,
    pub phi: f64,
    pub kappa_inf: f64,
    pub g_sp0: FieldMap,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub f_det: FieldMap,
    /// Random part of the response to 1 W at the die center for `p_var`.
    pub f_rand: FieldMap,
    pub p_var: FieldMap,
    /// Per-cell die heat capacity (J/K).
    pub c_cell: f64,
    pub t_samples: Vec<f64>,
    pub tran_tensor: Vec<FieldMap>,
    pub spectra: DetSpectra,
    pub report: Option<CalibrationReport>,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub c: f64,
    pub sweep: Option<Vec<f64>>,
    /// Use this α instead of fitting (skips the sweep).
    pub alpha: Option<f64>,
    /// Use this capacitance instead of fitting.
    pub c_cell: Option<f64>,
    pub t_samples: Vec<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            c: crate::DEFAULT_C,
            sweep: None,
            alpha: None,
            c_cell: None,
            t_samples: default_t_samples(),
        }
    }
}

impl GreensSet {
    /// Full calibration against the oracle.
    pub fn calibrate(
        stack: &ChipStack,
        k: &ConductivityMap,
        leak: &LeakageBaseline,
        opts: &CalibrationOptions,
    ) -> Result<Self> {
        let base = extract_baseline(stack, k)?;
        let (alpha, report) = match opts.alpha {
            Some(a) => (a, None),
            None => {
                let sweep = opts
                    .sweep
                    .clone()
                    .unwrap_or_else(|| default_sweep(stack.die().conductivity, opts.c));
                let (a, r) = fit_alpha(stack, &sweep, opts.c)?;
                (a, Some(r))
            }
        };
        let c_cell = match opts.c_cell {
            Some(c) => c,
            None => fit_capacitance(stack, k, &base.f_sp0)?.0,
        };
        let mut gs = Self::from_parts(base, alpha, leak, c_cell, opts.t_samples.clone())?;
        gs.report = report;
        Ok(gs)
    }

    pub fn from_parts(
        base: Baseline,
        alpha: f64,
        leak: &LeakageBaseline,
        c_cell: f64,
        t_samples: Vec<f64>,
    ) -> Result<Self> {
        let m = base.f_sp0.n();
        let n = m / 2;
        let pitch = base.f_sp0.pitch();
        let center = base.f_sp0.get(n, n);
        let g_sp0 = make_g_shift(&base.f_sp0, base.kappa_inf, center);
        let spectra = deterministic_greens(&base, alpha, leak.beta, leak.mu)?;
        let f_det = kernel_from_spectrum(&spectra.det, m, pitch, Unit::Response);
        let mut gs = Self {
            n,
            pitch,
            f_sp0: base.f_sp0,
            phi: base.phi,
            kappa_inf: base.kappa_inf,
            g_sp0,
            alpha,
            beta: leak.beta,
            mu: leak.mu,
            f_det,
            f_rand: FieldMap::zeros(n, pitch, Unit::Response),
            p_var: leak.p_var.clone(),
            c_cell,
            t_samples,
            tran_tensor: Vec::new(),
            spectra,
            report: None,
        };
        gs.f_rand = gs.random_greens(&leak.p_var)?;
        gs.tran_tensor = gs
            .t_samples
            .iter()
            .map(|&t| transient_greens(&gs.spectra.det, m, pitch, c_cell, t))
            .collect::<Result<_>>()?;
        Ok(gs)
    }

    pub fn baseline(&self) -> Baseline {
        Baseline { f_sp0: self.f_sp0.clone(), phi: self.phi, kappa_inf: self.kappa_inf }
    }

    /// Same kernel and calibration for a different leakage baseline; the
    /// deterministic part is rebuilt only if the mean leakage changed.
    pub fn with_leakage(&self, leak: &LeakageBaseline) -> Result<Self> {
        if leak.mu == self.mu && leak.beta == self.beta {
            let mut gs = self.clone();
            gs.p_var = leak.p_var.clone();
            gs.f_rand = gs.random_greens(&leak.p_var)?;
            return Ok(gs);
        }
        let mut gs = Self::from_parts(self.baseline(), self.alpha, leak, self.c_cell, self.t_samples.clone())?;
        gs.report = self.report.clone();
        Ok(gs)
    }

    /// The leakage baseline this set was built for.
    pub fn leakage(&self) -> LeakageBaseline {
        LeakageBaseline {
            p_leak0: self.p_var.map(|v| v + self.mu),
            mu: self.mu,
            p_var: self.p_var.clone(),
            beta: self.beta,
        }
    }

    pub fn center(&self) -> (usize, usize) {
        (self.n / 2, self.n / 2)
    }

    /// Deterministic die response to a power map.
    pub fn deterministic_profile(&self, p: &FieldMap) -> Result<FieldMap> {
        self.check(p)?;
        apply_kernel(&self.spectra.det, p)
    }

    /// f_rand for a variation map: the random correction of the die response
    /// to 1 W at the center.
    pub fn random_greens(&self, p_var: &FieldMap) -> Result<FieldMap> {
        self.check(p_var)?;
        let (c, _) = self.center();
        let imp = FieldMap::impulse(self.n, self.pitch, Unit::Watts, c, c);
        let t_det = apply_kernel(&self.spectra.det, &imp)?;
        Ok(random_correction(&self.spectra, self.beta, p_var, &t_det)?.with_unit(Unit::Response))
    }

    pub fn random_profile(&self, p_var: &FieldMap, t_det: &FieldMap) -> Result<FieldMap> {
        self.check(p_var)?;
        random_correction(&self.spectra, self.beta, p_var, t_det)
    }

    /// Transient kernel spectrum at any t (the sampled tensor is a cache of
    /// this at `t_samples`).
    pub fn transient_spectrum(&self, t: f64) -> Result<Vec<Complex64>> {
        transient_spectrum(&self.spectra.det, self.c_cell, t)
    }

    pub fn transient_kernel(&self, t: f64) -> Result<FieldMap> {
        transient_greens(&self.spectra.det, 2 * self.n, self.pitch, self.c_cell, t)
    }

    /// Fraction of the steady center response reached at time t.
    pub fn saturation(&self, t: f64) -> Result<f64> {
        let (c, _) = self.center();
        let imp = FieldMap::impulse(self.n, self.pitch, Unit::Watts, c, c);
        let now = apply_kernel(&self.transient_spectrum(t)?, &imp)?.get(c, c);
        let fin = apply_kernel(&self.spectra.det, &imp)?.get(c, c);
        Ok(now / fin)
    }

    /// Slowest spectral time constant (s).
    pub fn max_time_constant(&self) -> f64 {
        self.spectra
            .det
            .iter()
            .map(|s| self.c_cell * s.re)
            .fold(0.0, f64::max)
    }

    fn check(&self, p: &FieldMap) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::shape(format!("{0}x{0}", self.n), format!("{0}x{0}", p.n())));
        }
        Ok(())
    }

    /// Directory of map files plus `manifest.txt`. The transient tensor is
    /// regenerated from f_det and C on load rather than stored.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.f_sp0.write(&dir.join("f_sp0.map"))?;
        self.g_sp0.write(&dir.join("g_sp0.map"))?;
        self.f_det.write(&dir.join("f_det.map"))?;
        self.f_rand.write(&dir.join("f_rand.map"))?;
        self.p_var.write(&dir.join("p_var.map"))?;
        let mut kv = KvFile::default();
        kv.set("n", self.n);
        kv.set("alpha", format!("{:e}", self.alpha));
        kv.set("beta", format!("{:e}", self.beta));
        kv.set("mu", format!("{:e}", self.mu));
        kv.set("C", format!("{:e}", self.c_cell));
        kv.set("phi", format!("{:e}", self.phi));
        kv.set("kappa_inf", format!("{:e}", self.kappa_inf));
        let ts: Vec<String> = self.t_samples.iter().map(|t| format!("{t:e}")).collect();
        kv.set("t_samples", ts.join(","));
        if let Some(r) = &self.report {
            kv.set("c_prime", format!("{:e}", r.c_prime));
            kv.set("fit_r2", r.fit_r2);
        }
        std::fs::write(dir.join("manifest.txt"), kv.to_text())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KvFile::read(&dir.join("manifest.txt"))?;
        let f_sp0 = FieldMap::read(&dir.join("f_sp0.map"))?;
        let p_var = FieldMap::read(&dir.join("p_var.map"))?;
        let base = baseline_from_kernel(f_sp0);
        let mu: f64 = kv.require("mu")?;
        let beta: f64 = kv.require("beta")?;
        // keep the stored split as-is rather than re-deriving mu from the map
        let leak = LeakageBaseline { p_leak0: p_var.map(|v| v + mu), mu, p_var, beta };
        let t_samples = parse_f64_list(kv.get("t_samples").unwrap_or(""), &kv.name)?;
        let mut gs = Self::from_parts(base, kv.require("alpha")?, &leak, kv.require("C")?, t_samples)?;
        if let (Some(cp), Some(r2)) = (kv.parse_opt::<f64>("c_prime")?, kv.parse_opt::<f64>("fit_r2")?) {
            gs.report = Some(CalibrationReport { c_prime: cp, fit_r2: r2, sweep: Vec::new(), max_rel_err: f64::NAN });
        }
        Ok(gs)
    }
}
