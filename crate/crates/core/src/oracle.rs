//! Finite-difference reference solver: a 7-point resistor network over the
//! layered stack, Jacobi-preconditioned conjugate gradients for the linear
//! solves, and an outer fixed point for leakage(T) and conductivity(T).

use crate::error::{Error, Result};
use crate::grid::{mirror_pad, FieldMap, Unit};
use crate::solver::PowerTrace;
use crate::stack::ChipStack;
use crate::variation::{ConductivityMap, LeakageBaseline};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Insulated die edges (the physical package).
    Adiabatic,
    /// Wrap-around lateral links; used on the mirrored 2n grid to obtain a
    /// translation-invariant kernel.
    Periodic,
}

#[derive(Debug, Clone, Copy)]
pub struct NetworkConfig {
    pub boundary: Boundary,
    pub lateral: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { boundary: Boundary::Adiabatic, lateral: true }
    }
}

/// Conductance matrix in CSR form (diagonal included) plus per-node sink
/// conductance and heat capacity. Node order is (layer, row, col).
#[derive(Debug, Clone)]
pub struct ThermalNetwork {
    pub side: usize,
    pub layers: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
    pub diag: Vec<f64>,
    pub sink: Vec<f64>,
    pub cap: Vec<f64>,
}

impl ThermalNetwork {
    pub fn nodes(&self) -> usize {
        self.diag.len()
    }

    pub fn die_nodes(&self) -> usize {
        self.side * self.side
    }

    /// `y = (G + diag(extra)) x`
    pub fn matvec(&self, x: &[f64], extra: Option<&[f64]>, y: &mut [f64]) {
        for r in 0..self.nodes() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            if let Some(e) = extra {
                s += e[r] * x[r];
            }
            y[r] = s;
        }
    }

    /// Off-diagonal entries of row `r` as (column, conductance) pairs.
    pub fn links(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .filter(move |&k| self.col[k] != r)
            .map(move |k| (self.col[k], -self.val[k]))
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

pub fn assemble(stack: &ChipStack, k_die: &FieldMap) -> Result<ThermalNetwork> {
    assemble_with(stack, k_die, NetworkConfig::default())
}

/// Build the network for a die conductivity map of side `m` (m = n for the
/// package, m = 2n for the mirrored periodic grid). The sink share per cell
/// always refers to the physical n×n die footprint.
pub fn assemble_with(stack: &ChipStack, k_die: &FieldMap, cfg: NetworkConfig) -> Result<ThermalNetwork> {
    stack.validate()?;
    let m = k_die.n();
    if k_die.values().iter().any(|k| !(*k > 0.0)) {
        return Err(Error::Invalid("non-positive die conductivity".into()));
    }
    let nl = stack.layers.len();
    let area = stack.cell_area();
    let per = m * m;
    let nodes = nl * per;
    let idx = |l: usize, i: usize, j: usize| l * per + i * m + j;
    let kval = |l: usize, i: usize, j: usize| {
        if l == 0 {
            k_die.get(i, j)
        } else {
            stack.layers[l].conductivity
        }
    };
    let top = &stack.layers[nl - 1];
    let n_die = stack.n as f64;
    let sink_g = 1.0 / (top.thickness / (2.0 * top.conductivity * area) + stack.sink_resistance * n_die * n_die);

    let mut row_ptr = Vec::with_capacity(nodes + 1);
    let mut col = Vec::with_capacity(nodes * 7);
    let mut val = Vec::with_capacity(nodes * 7);
    let mut diag = vec![0.0; nodes];
    let mut sink = vec![0.0; nodes];
    let mut cap = vec![0.0; nodes];
    row_ptr.push(0);

    for l in 0..nl {
        let t = stack.layers[l].thickness;
        let cv = stack.layers[l].heat_capacity;
        for i in 0..m {
            for j in 0..m {
                let me = idx(l, i, j);
                let k0 = kval(l, i, j);
                let mut nb: Vec<(usize, f64)> = Vec::with_capacity(6);
                if l > 0 {
                    let t2 = stack.layers[l - 1].thickness;
                    let r = t / (2.0 * k0 * area) + t2 / (2.0 * kval(l - 1, i, j) * area);
                    nb.push((idx(l - 1, i, j), 1.0 / r));
                }
                if cfg.lateral {
                    let mut lat = |ii: Option<usize>, jj: Option<usize>| {
                        if let (Some(ii), Some(jj)) = (ii, jj) {
                            // width/length = 1 for square cells
                            nb.push((idx(l, ii, jj), harmonic(k0, kval(l, ii, jj)) * t));
                        }
                    };
                    let wrap = cfg.boundary == Boundary::Periodic;
                    let up = if i > 0 { Some(i - 1) } else if wrap { Some(m - 1) } else { None };
                    let down = if i + 1 < m { Some(i + 1) } else if wrap { Some(0) } else { None };
                    let left = if j > 0 { Some(j - 1) } else if wrap { Some(m - 1) } else { None };
                    let right = if j + 1 < m { Some(j + 1) } else if wrap { Some(0) } else { None };
                    lat(up, Some(j));
                    lat(Some(i), left);
                    lat(Some(i), right);
                    lat(down, Some(j));
                }
                if l + 1 < nl {
                    let t2 = stack.layers[l + 1].thickness;
                    let r = t / (2.0 * k0 * area) + t2 / (2.0 * kval(l + 1, i, j) * area);
                    nb.push((idx(l + 1, i, j), 1.0 / r));
                }
                let mut d = 0.0;
                for &(c, g) in &nb {
                    col.push(c);
                    val.push(-g);
                    d += g;
                }
                if l == nl - 1 {
                    sink[me] = sink_g;
                    d += sink_g;
                }
                col.push(me);
                val.push(d);
                diag[me] = d;
                cap[me] = cv * t * area;
                row_ptr.push(col.len());
            }
        }
    }
    Ok(ThermalNetwork { side: m, layers: nl, row_ptr, col, val, diag, sink, cap })
}

#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned CG on `(G + diag(extra)) x = b`, warm-started from `x`.
pub fn pcg(
    net: &ThermalNetwork,
    extra: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let nn = net.nodes();
    let dinv: Vec<f64> = (0..nn)
        .map(|r| 1.0 / (net.diag[r] + extra.map_or(0.0, |e| e[r])))
        .collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; nn];
    net.matvec(x, extra, &mut r);
    for k in 0..nn {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; nn];
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    for it in 0..max_iter {
        if res < rel_tol {
            return Ok(CgStats { iterations: it, residual: res });
        }
        net.matvec(&p, extra, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let a = rz / pap;
        for k in 0..nn {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        for k in 0..nn {
            z[k] = r[k] * dinv[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..nn {
            p[k] = z[k] + beta * p[k];
        }
    }
    if res < rel_tol {
        return Ok(CgStats { iterations: max_iter, residual: res });
    }
    Err(Error::NonConvergence { stage: "oracle CG", iters: max_iter, residual: res })
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub temp_dep_conductivity: bool,
    pub temp_dep_leakage: bool,
    pub leakage: Option<LeakageBaseline>,
    /// Die conductivity temperature coefficient (1/K) for `k0(1 − cΔT)`.
    pub c: f64,
    pub max_iters: usize,
    /// Outer fixed-point tolerance on max |ΔT| (K).
    pub tol: f64,
    /// Relative residual target of each linear solve.
    pub inner_tol: f64,
    pub max_cg: usize,
    /// Transient substep (s); must divide the trace interval.
    pub dt: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            temp_dep_conductivity: false,
            temp_dep_leakage: false,
            leakage: None,
            c: 0.0,
            max_iters: 100,
            tol: 0.01,
            inner_tol: 1e-10,
            max_cg: 50_000,
            dt: 5e-6,
        }
    }
}

impl SolveOptions {
    /// Leakage(T) and conductivity(T) both on.
    pub fn all_effects(leak: LeakageBaseline, c: f64) -> Self {
        Self {
            temp_dep_conductivity: true,
            temp_dep_leakage: true,
            leakage: Some(leak),
            c,
            ..Self::default()
        }
    }

    fn nonlinear(&self) -> bool {
        self.temp_dep_conductivity && self.c != 0.0
            || self.temp_dep_leakage && self.leakage.as_ref().is_some_and(|l| l.beta != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.max_iters >= 1 && self.dt > 0.0) {
            return Err(Error::Invalid("tol > 0, max_iters >= 1, dt > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SteadySolution {
    pub rise: FieldMap,
    /// All node rises, for warm starts and transient initial states.
    pub nodes: Vec<f64>,
    pub iterations: usize,
    /// Power injected in the final linear solve (W).
    pub power_in: f64,
    /// Heat leaving through the sink (W).
    pub heat_out: f64,
    pub last_delta: f64,
}

impl SteadySolution {
    pub fn energy_imbalance(&self) -> f64 {
        (self.power_in - self.heat_out).abs() / self.power_in.abs().max(f64::MIN_POSITIVE)
    }
}

/// Reference solver bound to one stack and die conductivity map.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub stack: ChipStack,
    pub k_die: FieldMap,
    pub config: NetworkConfig,
}

impl Oracle {
    pub fn new(stack: &ChipStack, k: &ConductivityMap) -> Result<Self> {
        if k.k_map.n() != stack.n {
            return Err(Error::shape(stack.n, k.k_map.n()));
        }
        Ok(Self { stack: stack.clone(), k_die: k.k_map.clone(), config: NetworkConfig::default() })
    }

    /// Mirrored 2n×2n periodic version of the package, whose response to a
    /// single source is the shift-invariant kernel of the method of images.
    pub fn mirrored(stack: &ChipStack, k: &ConductivityMap) -> Result<Self> {
        let mut o = Self::new(stack, k)?;
        o.k_die = mirror_pad(&k.k_map);
        o.config.boundary = Boundary::Periodic;
        Ok(o)
    }

    pub fn side(&self) -> usize {
        self.k_die.n()
    }

    fn network_at(&self, die_rise: Option<&[f64]>, opts: &SolveOptions) -> Result<ThermalNetwork> {
        match die_rise {
            Some(t) if opts.temp_dep_conductivity && opts.c != 0.0 => {
                let mut k = self.k_die.clone();
                for (kv, tv) in k.values_mut().iter_mut().zip(t) {
                    *kv = crate::variation::conductivity_at_temperature(*kv, opts.c, *tv)?;
                }
                assemble_with(&self.stack, &k, self.config)
            }
            _ => assemble_with(&self.stack, &self.k_die, self.config),
        }
    }

    fn check_power(&self, p: &FieldMap) -> Result<()> {
        if p.n() != self.side() {
            return Err(Error::shape(self.side(), p.n()));
        }
        if p.values().iter().any(|v| *v < 0.0) {
            return Err(Error::Invalid("power must be non-negative".into()));
        }
        Ok(())
    }

    fn rhs(&self, p_dyn: &FieldMap, die_rise: &[f64], opts: &SolveOptions, nodes: usize) -> Vec<f64> {
        let mut b = vec![0.0; nodes];
        b[..p_dyn.values().len()].copy_from_slice(p_dyn.values());
        if let Some(leak) = &opts.leakage {
            let beta = if opts.temp_dep_leakage { leak.beta } else { 0.0 };
            for (k, p0) in leak.p_leak0.values().iter().enumerate() {
                b[k] += p0 * (1.0 + beta * die_rise[k]);
            }
        }
        b
    }

    pub fn steady_solve(&self, p_dyn: &FieldMap, opts: &SolveOptions) -> Result<SteadySolution> {
        self.steady_solve_from(p_dyn, opts, None)
    }

    /// Outer fixed point: refresh leakage and conductivity from the current
    /// die temperature, re-solve, stop when max |ΔT| < tol.
    pub fn steady_solve_from(
        &self,
        p_dyn: &FieldMap,
        opts: &SolveOptions,
        warm: Option<&[f64]>,
    ) -> Result<SteadySolution> {
        opts.validate()?;
        self.check_power(p_dyn)?;
        if let Some(l) = &opts.leakage {
            if l.p_leak0.n() != self.side() {
                return Err(Error::shape(self.side(), l.p_leak0.n()));
            }
        }
        let per = self.side() * self.side();
        let mut x = match warm {
            Some(w) => w.to_vec(),
            None => vec![0.0; per * self.stack.layers.len()],
        };
        let mut die: Vec<f64> = x[..per].to_vec();
        let mut last_delta = f64::INFINITY;
        for it in 1..=opts.max_iters {
            let net = self.network_at(Some(&die), opts)?;
            let b = self.rhs(p_dyn, &die, opts, net.nodes());
            pcg(&net, None, &b, &mut x, opts.inner_tol, opts.max_cg)?;
            last_delta = x[..per]
                .iter()
                .zip(&die)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            die.copy_from_slice(&x[..per]);
            if !opts.nonlinear() || last_delta < opts.tol {
                let power_in: f64 = b.iter().sum();
                let heat_out: f64 = net.sink.iter().zip(&x).map(|(g, t)| g * t).sum();
                return Ok(SteadySolution {
                    rise: FieldMap::new(self.side(), self.stack.pitch(), Unit::Kelvin, die)?,
                    nodes: x,
                    iterations: it,
                    power_in,
                    heat_out,
                    last_delta,
                });
            }
        }
        Err(Error::NonConvergence {
            stage: "oracle outer fixed point",
            iters: opts.max_iters,
            residual: last_delta,
        })
    }

    /// Backward-Euler stepping of `C dT/dt = −G(T) T + P(T)`. Each frame of
    /// the trace is held for `trace.dt` and split into substeps of `opts.dt`;
    /// leakage and conductivity are refreshed inside every substep by a short
    /// fixed point. Returns die rises at the end of every frame.
    pub fn transient_solve(
        &self,
        trace: &PowerTrace,
        opts: &SolveOptions,
        initial: Option<&[f64]>,
    ) -> Result<Vec<FieldMap>> {
        opts.validate()?;
        let sub = (trace.dt / opts.dt).round();
        if sub < 1.0 || ((sub * opts.dt - trace.dt) / trace.dt).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "oracle dt {} does not subdivide trace dt {}",
                opts.dt, trace.dt
            )));
        }
        let sub = sub as usize;
        let per = self.side() * self.side();
        let nodes = per * self.stack.layers.len();
        let mut x = match initial {
            Some(s) if s.len() == nodes => s.to_vec(),
            Some(s) => return Err(Error::shape(nodes, s.len())),
            None => vec![0.0; nodes],
        };
        let base = self.network_at(None, opts)?;
        let cdt: Vec<f64> = base.cap.iter().map(|c| c / opts.dt).collect();
        let mut out = Vec::with_capacity(trace.frames.len());
        for frame in &trace.frames {
            self.check_power(frame)?;
            for _ in 0..sub {
                let prev = x.clone();
                let mut die: Vec<f64> = x[..per].to_vec();
                let mut converged = false;
                for _ in 0..opts.max_iters {
                    let net = if opts.temp_dep_conductivity && opts.c != 0.0 {
                        self.network_at(Some(&die), opts)?
                    } else {
                        base.clone()
                    };
                    let mut b = self.rhs(frame, &die, opts, nodes);
                    for k in 0..nodes {
                        b[k] += cdt[k] * prev[k];
                    }
                    pcg(&net, Some(&cdt), &b, &mut x, opts.inner_tol, opts.max_cg)?;
                    let d = x[..per]
                        .iter()
                        .zip(&die)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    die.copy_from_slice(&x[..per]);
                    if !opts.nonlinear() || d < opts.tol {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::NonConvergence {
                        stage: "oracle transient step",
                        iters: opts.max_iters,
                        residual: f64::NAN,
                    });
                }
            }
            out.push(FieldMap::new(self.side(), self.stack.pitch(), Unit::Kelvin, x[..per].to_vec())?);
        }
        Ok(out)
    }

    /// Steady response to 1 W at the center cell, temperature effects off.
    pub fn impulse_response(&self) -> Result<FieldMap> {
        let c = self.side() / 2;
        let p = FieldMap::impulse(self.side(), self.stack.pitch(), Unit::Watts, c, c);
        let opts = SolveOptions::default();
        Ok(self.steady_solve(&p, &opts)?.rise.with_unit(Unit::Response))
    }

    /// Transient response to 1 W at the center: held from t = 0 when
    /// `pulse_width` is `None`, otherwise switched off after `pulse_width`.
    /// Sampled every `sample_dt` up to `t_end`.
    pub fn impulse_response_transient(
        &self,
        sample_dt: f64,
        t_end: f64,
        pulse_width: Option<f64>,
        opts: &SolveOptions,
        initial: Option<&[f64]>,
    ) -> Result<Vec<FieldMap>> {
        let c = self.side() / 2;
        let on = FieldMap::impulse(self.side(), self.stack.pitch(), Unit::Watts, c, c);
        let off = FieldMap::zeros(self.side(), self.stack.pitch(), Unit::Watts);
        let steps = (t_end / sample_dt).round() as usize;
        let frames = (1..=steps)
            .map(|k| match pulse_width {
                Some(w) if (k as f64 - 0.5) * sample_dt > w => off.clone(),
                _ => on.clone(),
            })
            .collect();
        let trace = PowerTrace::new(sample_dt, frames)?;
        self.transient_solve(&trace, opts, initial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variation::ConductivityMap;

    #[test]
    fn row_sums_are_sink_terms() {
        let st = ChipStack::table2(6);
        let k = ConductivityMap::uniform(6, st.pitch(), 130.0);
        let net = assemble(&st, &k.k_map).unwrap();
        for r in 0..net.nodes() {
            let s: f64 = (net.row_ptr[r]..net.row_ptr[r + 1]).map(|k| net.val[k]).sum();
            assert!((s - net.sink[r]).abs() < 1e-12 * net.diag[r]);
        }
    }

    #[test]
    fn matrix_symmetric() {
        let st = ChipStack::table2(5);
        let k = FieldMap::from_fn(5, st.pitch(), Unit::Response, |i, j| 100.0 + (i * 5 + j) as f64);
        let net = assemble(&st, &k).unwrap();
        for r in 0..net.nodes() {
            for (c, g) in net.links(r) {
                let back = net.links(c).find(|(cc, _)| *cc == r).unwrap().1;
                assert!((g - back).abs() < 1e-15 * g);
            }
        }
    }
}
