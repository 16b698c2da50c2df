//! Full-chip temperature from a calibrated [`GreensSet`]: steady composition,
//! step responses, windowed time-varying superposition, error metrics and
//! Monte Carlo sweeps.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greens::{apply_kernel, GreensSet};
use crate::grid::{fft2_inplace, mirror_pad, FieldMap, Unit};
use crate::variation::VariationConfig;

#[derive(Debug, Clone)]
pub struct PowerTrace {
    pub dt: f64,
    pub frames: Vec<FieldMap>,
}

impl PowerTrace {
    pub fn new(dt: f64, frames: Vec<FieldMap>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("trace dt {dt} must be > 0")));
        }
        if frames.is_empty() {
            return Err(Error::Invalid("empty power trace".into()));
        }
        let n = frames[0].n();
        for f in &frames {
            if f.n() != n {
                return Err(Error::shape(n, f.n()));
            }
            if f.values().iter().any(|v| *v < 0.0) {
                return Err(Error::Invalid("trace power must be >= 0".into()));
            }
        }
        Ok(Self { dt, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// End time of every frame.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.frames.len()).map(|k| k as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    /// Deterministic convolution plus the random correction.
    Full,
    /// Deterministic part only (the f_rand-omission ablation).
    NoRandom,
}

#[derive(Debug, Clone)]
pub struct ThermalResult {
    /// Rise above ambient, one map per timestamp (a single map for steady).
    pub rise: Vec<FieldMap>,
    pub times: Vec<f64>,
    pub scenario: String,
    pub seed: Option<u64>,
    pub elapsed: Duration,
    /// Cells whose tiny negative ringing was clamped to zero.
    pub clamped: usize,
    /// Most negative value left after clamping (0 if none).
    pub worst_negative: f64,
}

impl ThermalResult {
    pub fn steady(rise: FieldMap) -> Self {
        Self::series(vec![rise], vec![f64::INFINITY])
    }

    pub fn series(rise: Vec<FieldMap>, times: Vec<f64>) -> Self {
        let mut r = Self {
            rise,
            times,
            scenario: String::new(),
            seed: None,
            elapsed: Duration::ZERO,
            clamped: 0,
            worst_negative: 0.0,
        };
        r.clamp_ringing();
        r
    }

    pub fn map(&self) -> &FieldMap {
        &self.rise[0]
    }

    pub fn absolute(&self, ambient: f64) -> Vec<FieldMap> {
        self.rise.iter().map(|f| f.map(|v| v + ambient)).collect()
    }

    /// Values in (−1e-9·peak, 0) become 0; anything more negative is kept
    /// and reported through `worst_negative`.
    fn clamp_ringing(&mut self) {
        for f in &mut self.rise {
            let floor = 1e-9 * f.max().abs();
            for v in f.values_mut() {
                if *v < 0.0 {
                    if *v > -floor {
                        *v = 0.0;
                        self.clamped += 1;
                    } else if *v < self.worst_negative {
                        self.worst_negative = *v;
                    }
                }
            }
        }
    }

    /// Passes when no negative beyond the ringing floor survived.
    pub fn validate(&self) -> Result<()> {
        if self.worst_negative < 0.0 {
            return Err(Error::Invalid(format!(
                "negative temperature rise {:.3e} K",
                self.worst_negative
            )));
        }
        Ok(())
    }
}

fn check_grid(gs: &GreensSet, p: &FieldMap) -> Result<()> {
    if p.n() != gs.n {
        return Err(Error::shape(format!("{0}x{0}", gs.n), format!("{0}x{0}", p.n())));
    }
    Ok(())
}

/// Steady rise: `f_det ★ P_dyn` on the mirrored grid, plus the random
/// correction driven by that deterministic profile.
pub fn steady_profile(gs: &GreensSet, p_dyn: &FieldMap, p_var: &FieldMap, comp: Composition) -> Result<ThermalResult> {
    let start = Instant::now();
    check_grid(gs, p_dyn)?;
    check_grid(gs, p_var)?;
    let det = gs.deterministic_profile(p_dyn)?;
    let rise = match comp {
        Composition::Full => det.add(&gs.random_profile(p_var, &det)?)?,
        Composition::NoRandom => det,
    };
    let mut r = ThermalResult::steady(rise);
    r.elapsed = start.elapsed();
    Ok(r)
}

/// Rise above ambient including the leakage-only baseline T0.
///
/// T0 is the leakage map pushed through the leakage loop with α = 0: the
/// α terms of f_det describe how the T0 background and a source's own
/// heating soften the die under *dynamic* power, and applying them to the
/// (smooth) leakage source itself double-counts the background.
pub fn total_profile(gs: &GreensSet, p_dyn: &FieldMap, comp: Composition) -> Result<ThermalResult> {
    let start = Instant::now();
    let leak = gs.leakage();
    let g0 = if gs.alpha == 0.0 {
        gs.clone()
    } else {
        GreensSet::from_parts(gs.baseline(), 0.0, &leak, gs.c_cell, Vec::new())?
    };
    let t0 = steady_profile(&g0, &leak.p_leak0, &leak.p_var, comp)?;
    let rise = steady_profile(gs, p_dyn, &leak.p_var, comp)?;
    let mut r = ThermalResult::steady(t0.map().add(rise.map())?);
    r.elapsed = start.elapsed();
    Ok(r)
}

/// Rise at each time after `p_dyn` is switched on at t = 0 from rest.
pub fn step_response(
    gs: &GreensSet,
    p_dyn: &FieldMap,
    p_var: &FieldMap,
    times: &[f64],
    comp: Composition,
) -> Result<ThermalResult> {
    let start = Instant::now();
    check_grid(gs, p_dyn)?;
    check_grid(gs, p_var)?;
    if let Some(t) = times.iter().find(|t| **t < 0.0) {
        return Err(Error::Invalid(format!("negative time {t}")));
    }
    let rand_ss = match comp {
        Composition::Full => Some(gs.random_profile(p_var, &gs.deterministic_profile(p_dyn)?)?),
        Composition::NoRandom => None,
    };
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let te = clamp_time(gs, t);
        let det = apply_kernel(&gs.transient_spectrum(te)?, p_dyn)?;
        let map = match &rand_ss {
            Some(r) => det.add(&r.scale(gs.saturation(te)?))?,
            None => det,
        };
        out.push(map);
    }
    let mut r = ThermalResult::series(out, times.to_vec());
    r.elapsed = start.elapsed();
    Ok(r)
}

/// Ages beyond the sampled range use the last sample (held saturation).
fn clamp_time(gs: &GreensSet, t: f64) -> f64 {
    match gs.t_samples.last() {
        Some(&tmax) if t > tmax => tmax,
        _ => t,
    }
}

/// Window length covering 5 ms of history.
pub fn default_window(dt: f64) -> usize {
    ((5e-3 / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Windowed superposition of step responses:
///
/// `T(t_n) = Σ_{i=1..k} f_tran(t_i) ★ (P_{n−i+1} − P_{n−i}) + f_tran(∞) ★ P_{n−k}`
///
/// with `t_i = i·dt` and the chip at rest before the first frame. Output is
/// the rise at the end of every frame.
pub fn time_varying_profile(
    gs: &GreensSet,
    trace: &PowerTrace,
    k_window: usize,
    p_var: &FieldMap,
    comp: Composition,
) -> Result<ThermalResult> {
    let start = Instant::now();
    if trace.is_empty() {
        return Err(Error::Invalid("empty power trace".into()));
    }
    if k_window < 1 {
        return Err(Error::Invalid("k_window must be >= 1".into()));
    }
    check_grid(gs, &trace.frames[0])?;
    check_grid(gs, p_var)?;
    if let [t0, t1, ..] = gs.t_samples[..] {
        let spacing = t1 - t0;
        let r = trace.dt / spacing;
        if (r - r.round()).abs() > 1e-6 || r.round() < 1.0 {
            return Err(Error::Invalid(format!(
                "trace dt {} is not a multiple of the transient sample spacing {}",
                trace.dt, spacing
            )));
        }
    }
    let n = gs.n;
    let m = 2 * n;
    let mm = m * m;
    let spectra: Vec<Vec<Complex64>> = trace
        .frames
        .iter()
        .map(|f| {
            let mut s: Vec<Complex64> = mirror_pad(f).values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft2_inplace(&mut s, m, false);
            s
        })
        .collect();
    let k = k_window.min(trace.len());
    let kernels: Vec<Vec<Complex64>> = (1..=k)
        .map(|i| gs.transient_spectrum(clamp_time(gs, i as f64 * trace.dt)))
        .collect::<Result<_>>()?;
    let sat: Vec<f64> = (1..=k)
        .map(|i| gs.saturation(clamp_time(gs, i as f64 * trace.dt)))
        .collect::<Result<_>>()?;
    let steady = &gs.spectra.det;
    let zero = vec![Complex64::new(0.0, 0.0); mm];
    let frame = |j: isize| -> &Vec<Complex64> {
        if j < 0 {
            &zero
        } else {
            &spectra[j as usize]
        }
    };
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = vec![Complex64::new(0.0, 0.0); mm];
    let mut acc_sat = vec![Complex64::new(0.0, 0.0); mm];
    for nidx in 0..trace.len() as isize {
        let old = frame(nidx - k as isize);
        for q in 0..mm {
            acc[q] = steady[q] * old[q];
            acc_sat[q] = old[q];
        }
        for i in 1..=k as isize {
            let (a, b) = (frame(nidx - i + 1), frame(nidx - i));
            let ker = &kernels[(i - 1) as usize];
            let s = sat[(i - 1) as usize];
            for q in 0..mm {
                let d = a[q] - b[q];
                acc[q] += ker[q] * d;
                acc_sat[q] += s * d;
            }
        }
        let det = inverse_crop(&acc, n, gs.pitch)?;
        let map = match comp {
            Composition::Full => {
                let mut s: Vec<Complex64> = acc_sat.iter().zip(steady).map(|(a, b)| a * b).collect();
                fft2_inplace(&mut s, m, true);
                let full = FieldMap::new(m, gs.pitch, Unit::Kelvin, s.iter().map(|c| c.re).collect())?;
                let sat_det = crate::grid::crop_center(&full, n)?;
                det.add(&gs.random_profile(p_var, &sat_det)?)?
            }
            Composition::NoRandom => det,
        };
        out.push(map);
    }
    let mut r = ThermalResult::series(out, trace.times());
    r.elapsed = start.elapsed();
    Ok(r)
}

fn inverse_crop(spectrum: &[Complex64], n: usize, pitch: f64) -> Result<FieldMap> {
    let m = 2 * n;
    let mut s = spectrum.to_vec();
    fft2_inplace(&mut s, m, true);
    let full = FieldMap::new(m, pitch, Unit::Kelvin, s.iter().map(|c| c.re).collect())?;
    crate::grid::crop_center(&full, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub mae: f64,
    pub max_err: f64,
    /// 100·mae / max reference rise.
    pub pct_of_max_rise: f64,
    /// 100·max_err / max reference rise.
    pub max_pct: f64,
    pub hotspot_hit: bool,
}

impl ErrorReport {
    pub fn to_kv_text(&self) -> String {
        format!(
            "mae = {:.6e}\nmax_err = {:.6e}\npct_of_max_rise = {:.6}\nmax_pct = {:.6}\nhotspot_hit = {}\n",
            self.mae, self.max_err, self.pct_of_max_rise, self.max_pct, self.hotspot_hit
        )
    }
}

/// Argmax cells coincide within a one-cell (8-neighbour) radius.
pub fn hotspot_hit(a: &FieldMap, b: &FieldMap) -> bool {
    let (ai, aj) = a.argmax();
    let (bi, bj) = b.argmax();
    ai.abs_diff(bi) <= 1 && aj.abs_diff(bj) <= 1
}

pub fn error_metrics(calc: &FieldMap, reference: &FieldMap) -> Result<ErrorReport> {
    calc.check_same(reference)?;
    let n = calc.values().len() as f64;
    let (mut sum, mut mx) = (0.0, 0.0f64);
    for (a, b) in calc.values().iter().zip(reference.values()) {
        let e = (a - b).abs();
        sum += e;
        mx = mx.max(e);
    }
    let mae = sum / n;
    let peak = reference.max();
    let scale = if peak > 0.0 { 100.0 / peak } else { f64::NAN };
    Ok(ErrorReport {
        mae,
        max_err: mx,
        pct_of_max_rise: mae * scale,
        max_pct: mx * scale,
        hotspot_hit: hotspot_hit(calc, reference),
    })
}

/// Per-timestamp reports for two series of equal length.
pub fn error_series(calc: &ThermalResult, reference: &[FieldMap]) -> Result<Vec<ErrorReport>> {
    if calc.rise.len() != reference.len() {
        return Err(Error::shape(reference.len(), calc.rise.len()));
    }
    calc.rise.iter().zip(reference).map(|(a, b)| error_metrics(a, b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub max_rise: f64,
    pub mean_rise: f64,
    pub runtime: Duration,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub runs: Vec<RunRecord>,
    pub mean_max: f64,
    pub std_max: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Physical bound on any rise; anything above is treated as runaway.
pub const RUNAWAY_RISE: f64 = 500.0;

impl MonteCarloSummary {
    fn from_runs(runs: Vec<RunRecord>) -> Self {
        let mut ok: Vec<f64> = runs.iter().filter(|r| r.error.is_none()).map(|r| r.max_rise).collect();
        let nrm = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / nrm;
        let var = if ok.len() > 1 {
            ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nrm - 1.0)
        } else {
            0.0
        };
        ok.sort_by(|a, b| a.total_cmp(b));
        let pct = |p: f64| -> f64 {
            if ok.is_empty() {
                return f64::NAN;
            }
            let x = p * (ok.len() - 1) as f64;
            let (lo, hi) = (x.floor() as usize, x.ceil() as usize);
            ok[lo] + (ok[hi] - ok[lo]) * (x - lo as f64)
        };
        Self { mean_max: mean, std_max: var.sqrt(), p05: pct(0.05), p50: pct(0.5), p95: pct(0.95), runs }
    }

    /// `seed,max_rise,mean_rise` rows; deterministic for a fixed seed list.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("seed,max_rise,mean_rise\n");
        for r in &self.runs {
            match &r.error {
                None => s.push_str(&format!("{},{:.12e},{:.12e}\n", r.seed, r.max_rise, r.mean_rise)),
                Some(e) => s.push_str(&format!("{},error,{}\n", r.seed, e.replace(',', ";"))),
            }
        }
        s
    }

    /// `seed,runtime_ms` rows (wall-clock, not reproducible).
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("seed,runtime_ms\n");
        for r in &self.runs {
            s.push_str(&format!("{},{:.3}\n", r.seed, r.runtime.as_secs_f64() * 1e3));
        }
        s
    }
}

/// One steady solve per seed. Each seed draws a fresh leakage map; the
/// kernel f_sp0 and α, C of `base` are reused (the conductivity map is a
/// property of `base`), and f_det is rebuilt only when the mean leakage
/// differs. Per-seed failures are recorded, not propagated.
pub fn monte_carlo(
    base: &GreensSet,
    variation: &VariationConfig,
    p_dyn: &FieldMap,
    seeds: &[u64],
) -> Result<MonteCarloSummary> {
    monte_carlo_jobs(base, variation, p_dyn, seeds, 1)
}

/// [`monte_carlo`] on up to `jobs` threads. Seeds are split into contiguous
/// chunks and records come back in seed-list order, so results do not depend
/// on the thread count.
pub fn monte_carlo_jobs(
    base: &GreensSet,
    variation: &VariationConfig,
    p_dyn: &FieldMap,
    seeds: &[u64],
    jobs: usize,
) -> Result<MonteCarloSummary> {
    if seeds.is_empty() {
        return Err(Error::Invalid("n_runs must be >= 1".into()));
    }
    check_grid(base, p_dyn)?;
    let jobs = jobs.clamp(1, seeds.len());
    let chunk = seeds.len().div_ceil(jobs);
    let runs: Vec<RunRecord> = std::thread::scope(|sc| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| sc.spawn(move || part.iter().map(|&s| one_run(base, variation, p_dyn, s)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("monte carlo worker panicked"))
            .collect()
    });
    Ok(MonteCarloSummary::from_runs(runs))
}

fn one_run(base: &GreensSet, variation: &VariationConfig, p_dyn: &FieldMap, seed: u64) -> RunRecord {
    let start = Instant::now();
    let res = (|| -> Result<(f64, f64)> {
        let leak = variation.with_seed(seed).leakage(base.n, base.pitch)?;
        let gs = base.with_leakage(&leak)?;
        let r = steady_profile(&gs, p_dyn, &leak.p_var, Composition::Full)?;
        let (mx, mean) = (r.map().max(), r.map().mean());
        if !(mx.is_finite() && mx < RUNAWAY_RISE) {
            return Err(Error::Invalid(format!("max rise {mx} outside physical bounds")));
        }
        Ok((mx, mean))
    })();
    let runtime = start.elapsed();
    match res {
        Ok((max_rise, mean_rise)) => RunRecord { seed, max_rise, mean_rise, runtime, error: None },
        Err(e) => RunRecord { seed, max_rise: f64::NAN, mean_rise: f64::NAN, runtime, error: Some(e.to_string()) },
    }
}
