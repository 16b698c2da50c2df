//! Binary PPM heatmaps. The color ramp is normalized to the map's own range,
//! so maps that differ by a constant give the same pixels; the range is kept
//! as a legend in a header comment.

use std::path::Path;

use gtherm::FieldMap;

// dark → purple → red → orange → pale yellow
const STOPS: [[f64; 3]; 5] = [
    [0.0, 0.0, 4.0],
    [87.0, 16.0, 110.0],
    [188.0, 55.0, 84.0],
    [249.0, 142.0, 9.0],
    [252.0, 255.0, 164.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapImage {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    /// RGB triples, row-major.
    pub pixels: Vec<u8>,
}

impl HeatmapImage {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!(
            "P6\n# min={:.6e} max={:.6e}\n{} {}\n255\n",
            self.min, self.max, self.width, self.height
        )
        .into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let k = 3 * (y * self.width + x);
        [self.pixels[k], self.pixels[k + 1], self.pixels[k + 2]]
    }
}

pub fn color(u: f64) -> [u8; 3] {
    let u = u.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (u.floor() as usize).min(STOPS.len() - 2);
    let w = u - i as f64;
    let mut c = [0u8; 3];
    for ch in 0..3 {
        c[ch] = (STOPS[i][ch] * (1.0 - w) + STOPS[i + 1][ch] * w).round() as u8;
    }
    c
}

/// Each cell becomes a `scale`×`scale` block; row 0 of the map is the top.
pub fn render(f: &FieldMap, scale: usize) -> Result<HeatmapImage, String> {
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err("map has non-finite values".into());
    }
    let scale = scale.max(1);
    let (lo, hi) = (f.min(), f.max());
    let span = hi - lo;
    let n = f.n();
    let side = n * scale;
    let mut pixels = Vec::with_capacity(3 * side * side);
    for y in 0..side {
        for x in 0..side {
            let v = f.get(y / scale, x / scale);
            let u = if span > 0.0 { (v - lo) / span } else { 0.0 };
            pixels.extend_from_slice(&color(u));
        }
    }
    Ok(HeatmapImage { width: side, height: side, min: lo, max: hi, pixels })
}

pub fn render_heatmap(f: &FieldMap, path: &Path, scale: usize) -> std::io::Result<HeatmapImage> {
    let img = render(f, scale).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    std::fs::write(path, img.to_ppm())?;
    Ok(img)
}
