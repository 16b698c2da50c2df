//! The five steady-state test cases and the oracle reference they are
//! scored against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{FieldMap, Unit};
use crate::oracle::{Oracle, SolveOptions};
use crate::solver::PowerTrace;
use crate::stack::ChipStack;
use crate::variation::{ConductivityMap, LeakageBaseline, VariationConfig};

/// Seed of the high-variance case. Chosen (by scanning seeds 1..=64) so that
/// the leakage pattern, not the dynamic power, decides where the hottest
/// cell is: two equally powered blocks, and the leakier one wins.
pub const HIGH_VAR_SEED: u64 = 29;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: &'static str,
    pub p_dyn: FieldMap,
    pub variation: VariationConfig,
}

fn block(p: &mut FieldMap, rows: (usize, usize), cols: (usize, usize), v: f64) {
    let n = p.n();
    let s = |x: usize| x * n / 64;
    for i in s(rows.0)..s(rows.1) {
        for j in s(cols.0)..s(cols.1) {
            p.set(i, j, v);
        }
    }
}

/// Four functional blocks on a 2 mW/cell background (coordinates for n = 64,
/// rescaled otherwise).
pub fn floorplan(n: usize, pitch: f64) -> FieldMap {
    let mut p = FieldMap::zeros(n, pitch, Unit::Watts);
    block(&mut p, (5, 20), (8, 30), 0.02);
    block(&mut p, (30, 45), (10, 25), 0.03);
    block(&mut p, (40, 60), (35, 60), 0.012);
    block(&mut p, (10, 25), (40, 55), 0.025);
    p.map(|v| v + 0.002)
}

/// Floorplan with the two hottest blocks at equal density.
pub fn twin_block_floorplan(n: usize, pitch: f64) -> FieldMap {
    let mut p = floorplan(n, pitch);
    block(&mut p, (10, 25), (40, 55), 0.032);
    block(&mut p, (30, 45), (10, 25), 0.032);
    p
}

/// Eight small 2×2 hot spots at 0.25 W/cell.
pub fn stress(n: usize, pitch: f64) -> FieldMap {
    let mut p = FieldMap::zeros(n, pitch, Unit::Watts);
    for (i, j) in [(12, 12), (12, 50), (50, 14), (48, 48), (30, 30), (20, 34), (40, 24), (34, 52)] {
        block(&mut p, (i, i + 2), (j, j + 2), 0.25);
    }
    p
}

pub fn uniform(n: usize, pitch: f64, total: f64) -> FieldMap {
    FieldMap::filled(n, pitch, Unit::Watts, total / (n * n) as f64)
}

/// Alternate cells at `per_cell` W; half the cells are on.
pub fn checkerboard(n: usize, pitch: f64, per_cell: f64) -> FieldMap {
    FieldMap::from_fn(n, pitch, Unit::Watts, |i, j| if (i + j) % 2 == 1 { per_cell } else { 0.0 })
}

pub fn suite(n: usize, pitch: f64) -> Vec<Scenario> {
    let v = VariationConfig::default();
    vec![
        Scenario { id: "tc1_floorplan", p_dyn: floorplan(n, pitch), variation: v.with_seed(3) },
        Scenario { id: "tc2_stress", p_dyn: stress(n, pitch), variation: v.with_seed(4) },
        Scenario {
            id: "tc3_highvar",
            p_dyn: twin_block_floorplan(n, pitch),
            variation: v.scaled_sigma(2.0).with_seed(HIGH_VAR_SEED),
        },
        Scenario { id: "tc4_uniform", p_dyn: uniform(n, pitch, 204.8), variation: v.with_seed(5) },
        Scenario {
            id: "tc5_checker",
            p_dyn: checkerboard(n, pitch, 51.2 / (n * n / 2) as f64),
            variation: v.with_seed(6),
        },
    ]
}

/// Oracle rise caused by `p_dyn`, measured from the leakage-only state T0.
#[derive(Debug, Clone)]
pub struct Reference {
    pub rise: FieldMap,
    /// Die temperature above ambient with leakage alone.
    pub t0: FieldMap,
    pub iterations: usize,
}

pub fn reference(
    stack: &ChipStack,
    k: &ConductivityMap,
    leak: &LeakageBaseline,
    c: f64,
    p_dyn: &FieldMap,
) -> Result<Reference> {
    let oracle = Oracle::new(stack, k)?;
    let mut opts = SolveOptions::all_effects(leak.clone(), c);
    opts.tol = 1e-7;
    let zero = FieldMap::zeros(p_dyn.n(), p_dyn.pitch(), Unit::Watts);
    let s0 = oracle.steady_solve(&zero, &opts)?;
    let s1 = oracle.steady_solve_from(p_dyn, &opts, Some(&s0.nodes))?;
    Ok(Reference {
        rise: s1.rise.sub(&s0.rise)?,
        t0: s0.rise,
        iterations: s1.iterations,
    })
}

/// Floorplan workload with each block's activity redrawn every frame,
/// uniformly in [0.1, 1.5] of its nominal density; the background stays on.
pub fn random_trace(n: usize, pitch: f64, steps: usize, dt: f64, seed: u64) -> Result<PowerTrace> {
    let blocks = [
        ((5, 20), (8, 30), 0.02),
        ((30, 45), (10, 25), 0.03),
        ((40, 60), (35, 60), 0.012),
        ((10, 25), (40, 55), 0.025),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..steps)
        .map(|_| {
            let mut p = FieldMap::zeros(n, pitch, Unit::Watts);
            for (r, c, v) in blocks {
                let a: f64 = rng.random_range(0.1..1.5);
                block(&mut p, r, c, v * a);
            }
            p.map(|v| v + 0.002)
        })
        .collect();
    PowerTrace::new(dt, frames)
}
