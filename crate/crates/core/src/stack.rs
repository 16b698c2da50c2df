use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{parse_f64_list, KvFile};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub thickness: f64,
    pub conductivity: f64,
    /// J/(m³·K)
    pub heat_capacity: f64,
}

/// Layered package, die first. `sink_resistance` is the lumped spreader-top
/// to ambient resistance of the whole die footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipStack {
    pub die_edge: f64,
    pub layers: Vec<Layer>,
    pub ambient: f64,
    pub sink_resistance: f64,
    pub n: usize,
}

/// Die volumetric heat capacity. Small compared to bulk silicon on purpose:
/// with the passive layers carrying no capacitance, this places the slowest
/// die time constant just under 1 ms so transients settle inside 10 ms.
pub const DIE_HEAT_CAPACITY: f64 = 1.0e5;

impl ChipStack {
    pub fn table2(n: usize) -> Self {
        Self {
            die_edge: 10e-3,
            layers: vec![
                Layer {
                    name: "die".into(),
                    thickness: 0.15e-3,
                    conductivity: 130.0,
                    heat_capacity: DIE_HEAT_CAPACITY,
                },
                Layer {
                    name: "tim".into(),
                    thickness: 0.02e-3,
                    conductivity: 4.0,
                    heat_capacity: 0.0,
                },
                Layer {
                    name: "spreader".into(),
                    thickness: 3.5e-3,
                    conductivity: 400.0,
                    heat_capacity: 0.0,
                },
            ],
            ambient: 318.15,
            sink_resistance: 0.25,
            n,
        }
    }

    pub fn pitch(&self) -> f64 {
        self.die_edge / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.pitch() * self.pitch()
    }

    pub fn die(&self) -> &Layer {
        &self.layers[0]
    }

    /// Heat capacity of one die cell (J/K).
    pub fn die_cell_capacitance(&self) -> f64 {
        let d = self.die();
        d.heat_capacity * d.thickness * self.cell_area()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Invalid(format!("n = {} < 2", self.n)));
        }
        if !(self.die_edge > 0.0 && self.ambient > 0.0 && self.sink_resistance >= 0.0) {
            return Err(Error::Invalid("die edge, ambient must be > 0, sink >= 0".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Invalid("stack has no layers".into()));
        }
        for l in &self.layers {
            if !(l.thickness > 0.0 && l.conductivity > 0.0 && l.heat_capacity >= 0.0) {
                return Err(Error::Invalid(format!("layer '{}' has non-positive property", l.name)));
            }
        }
        Ok(())
    }

    pub fn scale_heat_capacity(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.layers.iter_mut().for_each(|l| l.heat_capacity *= s);
        out
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("die_edge", self.die_edge);
        kv.set("n", self.n);
        kv.set("ambient", self.ambient);
        kv.set("sink_resistance", self.sink_resistance);
        for l in &self.layers {
            kv.set(
                "layer",
                format!("{} {} {} {}", l.name, l.thickness, l.conductivity, l.heat_capacity),
            );
        }
        kv
    }

    /// Missing keys fall back to [`ChipStack::table2`]; any `layer` line
    /// replaces the default layer list.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let n = kv.parse_opt("n")?.unwrap_or(64);
        let mut s = Self::table2(n);
        if let Some(v) = kv.parse_opt("die_edge")? {
            s.die_edge = v;
        }
        if let Some(v) = kv.parse_opt("ambient")? {
            s.ambient = v;
        }
        if let Some(v) = kv.parse_opt("sink_resistance")? {
            s.sink_resistance = v;
        }
        let mut layers = Vec::new();
        for line in kv.get_all("layer") {
            let mut it = line.split_whitespace();
            let name = it
                .next()
                .ok_or_else(|| Error::parse(&kv.name, "empty layer line"))?;
            let rest = parse_f64_list(&it.collect::<Vec<_>>().join(" "), &kv.name)?;
            if rest.len() != 3 {
                return Err(Error::parse(
                    &kv.name,
                    "layer = name thickness conductivity heat_capacity",
                ));
            }
            layers.push(Layer {
                name: name.to_string(),
                thickness: rest[0],
                conductivity: rest[1],
                heat_capacity: rest[2],
            });
        }
        if !layers.is_empty() {
            s.layers = layers;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}
