//! Square grid containers and the spectral/real-space operators built on them.
//!
//! Transform convention: forward is unnormalized with an `exp(-i..)` kernel,
//! inverse carries the `1/m²` factor. Every spectral formula downstream is a
//! ratio or product of spectra under this one convention.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Watts,
    Kelvin,
    /// Kelvin per watt (Green's function samples).
    Response,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Watts => "watts",
            Unit::Kelvin => "kelvin",
            Unit::Response => "response",
        })
    }
}

impl FromStr for Unit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "watts" | "W" => Ok(Unit::Watts),
            "kelvin" | "K" => Ok(Unit::Kelvin),
            "response" | "K/W" => Ok(Unit::Response),
            other => Err(Error::parse("unit", format!("unknown unit '{other}'"))),
        }
    }
}

/// n×n real field over the die, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    n: usize,
    pitch: f64,
    unit: Unit,
    values: Vec<f64>,
}

impl FieldMap {
    pub fn new(n: usize, pitch: f64, unit: Unit, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("grid side {n} < 2")));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Invalid(format!("pitch {pitch} must be positive")));
        }
        if values.len() != n * n {
            return Err(Error::shape(n * n, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite entry {v}")));
        }
        Ok(Self { n, pitch, unit, values })
    }

    pub fn zeros(n: usize, pitch: f64, unit: Unit) -> Self {
        Self::filled(n, pitch, unit, 0.0)
    }

    pub fn filled(n: usize, pitch: f64, unit: Unit, v: f64) -> Self {
        assert!(n >= 2 && pitch > 0.0);
        Self { n, pitch, unit, values: vec![v; n * n] }
    }

    pub fn from_fn(n: usize, pitch: f64, unit: Unit, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        Self::new(n, pitch, unit, values).expect("from_fn produced an invalid map")
    }

    /// Unit source of 1 at `(i, j)`.
    pub fn impulse(n: usize, pitch: f64, unit: Unit, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, pitch, unit);
        m.set(i, j, 1.0);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn pitch(&self) -> f64 {
        self.pitch
    }
    pub fn unit(&self) -> Unit {
        self.unit
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn center(&self) -> (usize, usize) {
        (self.n / 2, self.n / 2)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row/column of the largest entry (first one in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best / self.n, best % self.n)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn zip_with(&self, other: &FieldMap, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (o, b) in out.values.iter_mut().zip(&other.values) {
            *o = f(*o, *b);
        }
        Ok(out)
    }

    pub fn add(&self, other: &FieldMap) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &FieldMap) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn check_same(&self, other: &FieldMap) -> Result<()> {
        if self.n != other.n {
            return Err(Error::shape(
                format!("{0}x{0}", self.n),
                format!("{0}x{0}", other.n),
            ));
        }
        Ok(())
    }

    /// Text format: header `n pitch unit`, then n rows of n values.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {:e} {}\n", self.n, self.pitch, self.unit);
        for row in self.values.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.15e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, "empty map file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(Error::parse(source_name, "header must be 'n pitch unit'"));
        }
        let n: usize = h[0]
            .parse()
            .map_err(|_| Error::parse(source_name, format!("bad n '{}'", h[0])))?;
        let pitch: f64 = h[1]
            .parse()
            .map_err(|_| Error::parse(source_name, format!("bad pitch '{}'", h[1])))?;
        let unit: Unit = h[2].parse()?;
        let mut values = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(source_name, format!("row {row}: bad value '{tok}'"))
                })?;
                values.push(v);
            }
            if values.len() - before != n {
                return Err(Error::parse(
                    source_name,
                    format!("row {row} has {} values, expected {n}", values.len() - before),
                ));
            }
        }
        FieldMap::new(n, pitch, unit, values).map_err(|e| Error::parse(source_name, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Sign and scaling in force for a [`SpectralMap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convention {
    pub exponent_sign: i8,
    pub forward_scale: f64,
    pub inverse_scale: f64,
}

impl Convention {
    pub fn for_side(m: usize) -> Self {
        Self {
            exponent_sign: -1,
            forward_scale: 1.0,
            inverse_scale: 1.0 / (m * m) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap {
    pub m: usize,
    pub coeffs: Vec<Complex64>,
    pub convention: Convention,
    /// Carried through so the inverse can rebuild a [`FieldMap`].
    pub pitch: f64,
    pub unit: Unit,
}

impl SpectralMap {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.coeffs[u * self.m + v]
    }
}

/// In-place 2-D DFT of a row-major m×m buffer.
pub fn fft2_inplace(data: &mut [Complex64], m: usize, inverse: bool) {
    assert_eq!(data.len(), m * m);
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    fft.process(data);
    transpose(data, m);
    fft.process(data);
    transpose(data, m);
    if inverse {
        let s = 1.0 / (m * m) as f64;
        data.iter_mut().for_each(|c| *c *= s);
    }
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

pub fn forward_transform(f: &FieldMap) -> SpectralMap {
    let m = f.n;
    let mut coeffs: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut coeffs, m, false);
    SpectralMap {
        m,
        coeffs,
        convention: Convention::for_side(m),
        pitch: f.pitch,
        unit: f.unit,
    }
}

/// Inverse transform; the imaginary residue of a real-field spectrum is discarded.
pub fn inverse_transform(s: &SpectralMap) -> FieldMap {
    let mut buf = s.coeffs.clone();
    fft2_inplace(&mut buf, s.m, true);
    FieldMap {
        n: s.m,
        pitch: s.pitch,
        unit: s.unit,
        values: buf.iter().map(|c| c.re).collect(),
    }
}

/// Circular convolution `(f ★ g)[x] = Σ_y f[y]·g[x−y]` via the spectral product.
pub fn convolve(f: &FieldMap, g: &FieldMap) -> Result<FieldMap> {
    f.check_same(g)?;
    if f.pitch != g.pitch {
        return Err(Error::Invalid(format!(
            "pitch mismatch {} vs {}",
            f.pitch, g.pitch
        )));
    }
    let mut a = forward_transform(f);
    let b = forward_transform(g);
    for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
        *x *= y;
    }
    Ok(inverse_transform(&a).with_unit(f.unit))
}

pub fn hadamard(f: &FieldMap, g: &FieldMap) -> Result<FieldMap> {
    f.zip_with(g, |a, b| a * b)
}

/// Source index on the n-wide die for padded index `k` (0..2n).
#[inline]
fn mirror_index(k: usize, n: usize) -> usize {
    let q = n / 2;
    if k < q {
        q - 1 - k
    } else if k < q + n {
        k - q
    } else {
        2 * n - 1 - (k - q)
    }
}

/// 2n×2n method-of-images extension. The die sits at offset n/2 in both
/// directions and is reflected about each of its edges; the result is one
/// period of the even extension, so circular convolution on it sees
/// adiabatic die edges.
pub fn mirror_pad(f: &FieldMap) -> FieldMap {
    let n = f.n;
    let m = 2 * n;
    let mut values = Vec::with_capacity(m * m);
    for i in 0..m {
        let si = mirror_index(i, n);
        for j in 0..m {
            values.push(f.values[si * n + mirror_index(j, n)]);
        }
    }
    FieldMap { n: m, pitch: f.pitch, unit: f.unit, values }
}

/// Inverse of [`mirror_pad`]: the n×n die block of a 2n×2n map.
pub fn crop_center(f: &FieldMap, n: usize) -> Result<FieldMap> {
    if f.n != 2 * n {
        return Err(Error::shape(format!("{0}x{0}", 2 * n), format!("{0}x{0}", f.n)));
    }
    let q = n / 2;
    let m = f.n;
    let mut values = Vec::with_capacity(n * n);
    for i in q..q + n {
        values.extend_from_slice(&f.values[i * m + q..i * m + q + n]);
    }
    Ok(FieldMap { n, pitch: f.pitch, unit: f.unit, values })
}

/// Move a kernel whose origin sits at the center cell (m/2, m/2) to index
/// (0, 0), so that circular convolution with it does not translate.
pub fn center_to_origin(f: &FieldMap) -> FieldMap {
    let m = f.n;
    let h = m / 2;
    FieldMap::from_fn(m, f.pitch, f.unit, |i, j| f.get((i + h) % m, (j + h) % m))
}

/// Inverse of [`center_to_origin`].
pub fn origin_to_center(f: &FieldMap) -> FieldMap {
    let m = f.n;
    let h = m - m / 2;
    FieldMap::from_fn(m, f.pitch, f.unit, |i, j| f.get((i + h) % m, (j + h) % m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub value: Vec<f64>,
}

impl RadialProfile {
    pub fn new(r: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if r.len() != value.len() {
            return Err(Error::shape(r.len(), value.len()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("radii must be strictly increasing".into()));
        }
        if value.iter().chain(&r).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite radial sample".into()));
        }
        Ok(Self { r, value })
    }

    /// Sample `f` at `count` evenly spaced radii over `[0, r_max]`.
    pub fn sample(f: impl Fn(f64) -> f64, r_max: f64, count: usize) -> Self {
        let dr = r_max / (count - 1) as f64;
        let r: Vec<f64> = (0..count).map(|k| k as f64 * dr).collect();
        let value = r.iter().map(|&x| f(x)).collect();
        Self { r, value }
    }
}

/// Annulus-averaged profile plus the spread inside each annulus.
#[derive(Debug, Clone)]
pub struct BinnedProfile {
    pub profile: RadialProfile,
    pub max_deviation: Vec<f64>,
}

/// `∫₀^{r_max} f(r) J₀(s r) r dr` by the trapezoid rule on the samples.
pub fn hankel_transform(p: &RadialProfile, s_grid: &[f64]) -> Result<RadialProfile> {
    if p.r.is_empty() {
        return Err(Error::Invalid("empty radial profile".into()));
    }
    if s_grid.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Invalid("spatial frequencies must be finite and >= 0".into()));
    }
    let value = s_grid
        .iter()
        .map(|&s| {
            let g = |k: usize| p.value[k] * bessel_j0(s * p.r[k]) * p.r[k];
            (1..p.r.len())
                .map(|k| 0.5 * (g(k) + g(k - 1)) * (p.r[k] - p.r[k - 1]))
                .sum()
        })
        .collect();
    // s_grid need not be increasing, so skip RadialProfile::new validation
    Ok(RadialProfile { r: s_grid.to_vec(), value })
}

/// Bessel function of the first kind, order 0. Power series below x = 12,
/// Hankel asymptotic expansion above; absolute error below 1e-10.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        let y = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= -y / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > 5 {
                break;
            }
        }
        sum
    } else {
        // |a_k| = (1·9·…·(2k−1)²) / (k! 8^k); for order 0, a_k carries (−1)^k
        let mut p = 0.0;
        let mut q = 0.0;
        let mut a = 1.0;
        let mut last = f64::INFINITY;
        for k in 0..60usize {
            if k > 0 {
                let kk = k as f64;
                a *= (2.0 * kk - 1.0).powi(2) / (8.0 * kk);
            }
            let t = a / x.powi(k as i32);
            if t > last {
                break;
            }
            last = t;
            let mut sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 1 {
                sign = -sign;
            }
            if k % 2 == 0 {
                p += sign * t;
            } else {
                q += sign * t;
            }
            if t < 1e-17 {
                break;
            }
        }
        let chi = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Average `f` over one-pitch-wide annuli around its center cell.
pub fn radial_profile_of(f: &FieldMap) -> BinnedProfile {
    let (ci, cj) = f.center();
    let mut sum_r = Vec::<f64>::new();
    let mut sum_v = Vec::<f64>::new();
    let mut members: Vec<Vec<f64>> = Vec::new();
    for i in 0..f.n {
        for j in 0..f.n {
            let di = i as f64 - ci as f64;
            let dj = j as f64 - cj as f64;
            let r = (di * di + dj * dj).sqrt();
            let b = r.round() as usize;
            if b >= members.len() {
                sum_r.resize(b + 1, 0.0);
                sum_v.resize(b + 1, 0.0);
                members.resize(b + 1, Vec::new());
            }
            sum_r[b] += r;
            sum_v[b] += f.get(i, j);
            members[b].push(f.get(i, j));
        }
    }
    let mut r = Vec::new();
    let mut value = Vec::new();
    let mut dev = Vec::new();
    for b in 0..members.len() {
        let c = members[b].len();
        if c == 0 {
            continue;
        }
        let mean = sum_v[b] / c as f64;
        r.push(sum_r[b] / c as f64 * f.pitch);
        value.push(mean);
        dev.push(members[b].iter().map(|v| (v - mean).abs()).fold(0.0, f64::max));
    }
    BinnedProfile {
        profile: RadialProfile { r, value },
        max_deviation: dev,
    }
}
