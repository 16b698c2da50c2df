//! Acceptance run at n = 64 on the Table 2 stack. Prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 7`.
//!
//! The oracle transients dominate the runtime (several minutes on one core).

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use gtherm::grid::*;
use gtherm::scenario::{self, Reference};
use gtherm::solver::*;
use gtherm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 64;

struct Ctx {
    stack: ChipStack,
    k: ConductivityMap,
    leak: LeakageBaseline,
    gs: GreensSet,
    oracle: Oracle,
}

impl Ctx {
    fn new() -> Result<Self> {
        let stack = ChipStack::table2(N);
        let v = VariationConfig::default();
        let k = v.conductivity(130.0, N, stack.pitch())?;
        let leak = v.leakage(N, stack.pitch())?;
        let t = Instant::now();
        let gs = GreensSet::calibrate(&stack, &k, &leak, &CalibrationOptions::default())?;
        println!(
            "calibration: alpha={:.6e} C={:.4e} J/K tau_max={:.3} ms ({:.1} s)",
            gs.alpha,
            gs.c_cell,
            gs.max_time_constant() * 1e3,
            t.elapsed().as_secs_f64()
        );
        let oracle = Oracle::new(&stack, &k)?;
        Ok(Self { stack, k, leak, gs, oracle })
    }

    fn pitch(&self) -> f64 {
        self.stack.pitch()
    }

    fn opts(&self) -> SolveOptions {
        SolveOptions::all_effects(self.leak.clone(), DEFAULT_C)
    }

    /// Leakage-only steady state of the calibration chip: the initial
    /// condition of every oracle transient.
    fn rest(&self) -> Result<oracle::SteadySolution> {
        let mut o = self.opts();
        o.tol = 1e-7;
        self.oracle.steady_solve(&FieldMap::zeros(N, self.pitch(), Unit::Watts), &o)
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs(a: &FieldMap, b: &FieldMap) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mean_abs(a: &FieldMap, b: &FieldMap) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.values().len() as f64
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn c1_steady(ctx: &Ctx, refs: &mut Vec<(String, Reference, LeakageBaseline, FieldMap)>) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for sc in scenario::suite(N, ctx.pitch()) {
        let leak = sc.variation.leakage(N, ctx.pitch())?;
        let g = ctx.gs.with_leakage(&leak)?;
        let calc = steady_profile(&g, &sc.p_dyn, &leak.p_var, Composition::Full)?;
        let r = scenario::reference(&ctx.stack, &ctx.k, &leak, DEFAULT_C, &sc.p_dyn)?;
        let e = error_metrics(calc.map(), &r.rise)?;
        let ok = e.pct_of_max_rise <= 2.5 && e.max_pct <= 4.0;
        pass &= ok;
        println!(
            "  {:<14} max_rise={:7.2} K  mae={:.3}%  max={:.3}%  hotspot_hit={}  green={:.2} ms",
            sc.id,
            r.rise.max(),
            e.pct_of_max_rise,
            e.max_pct,
            e.hotspot_hit,
            calc.elapsed.as_secs_f64() * 1e3
        );
        parts.push(format!("{} {:.2}/{:.2}", sc.id.split('_').next().unwrap_or(""), e.pct_of_max_rise, e.max_pct));
        refs.push((sc.id.to_string(), r, leak, sc.p_dyn.clone()));
    }
    Ok(outcome(pass, format!("mae/max % [{}] (limits 2.5/4)", parts.join(", "))))
}

fn c2_random_value(ctx: &Ctx, refs: &[(String, Reference, LeakageBaseline, FieldMap)]) -> Result<Outcome> {
    let (_, r, leak, p) = refs.iter().find(|(id, ..)| id.starts_with("tc3")).expect("tc3 in suite");
    let g = ctx.gs.with_leakage(leak)?;
    let full = error_metrics(steady_profile(&g, p, &leak.p_var, Composition::Full)?.map(), &r.rise)?;
    let bare = error_metrics(steady_profile(&g, p, &leak.p_var, Composition::NoRandom)?.map(), &r.rise)?;
    let ratio = bare.mae / full.mae;
    let reduction = 1.0 - full.mae / bare.mae;
    Ok(outcome(
        ratio >= 2.0 && full.hotspot_hit && !bare.hotspot_hit,
        format!(
            "mae {:.3}% -> {:.3}% without f_rand (x{ratio:.2}, f_rand removes {:.0}%); hotspot_hit full={} no-rand={}",
            full.pct_of_max_rise,
            bare.pct_of_max_rise,
            reduction * 100.0,
            full.hotspot_hit,
            bare.hotspot_hit
        ),
    ))
}

fn c3_transient_impulse(ctx: &Ctx, rest: &oracle::SteadySolution) -> Result<Outcome> {
    let (c, _) = ctx.gs.center();
    let imp = FieldMap::impulse(N, ctx.pitch(), Unit::Watts, c, c);
    let mut so = ctx.opts();
    so.tol = 1e-7;
    let steady = ctx.oracle.steady_solve_from(&imp, &so, Some(&rest.nodes))?.rise.sub(&rest.rise)?;
    let peak = steady.max();
    let t = Instant::now();
    let tr = ctx.oracle.impulse_response_transient(1e-4, 1e-2, None, &ctx.opts(), Some(&rest.nodes))?;
    let oracle_s = t.elapsed().as_secs_f64();
    let times = ctx.gs.t_samples.clone();
    let g = step_response(&ctx.gs, &imp, &ctx.leak.p_var, &times, Composition::Full)?;
    let mut worst = (0.0f64, 0.0);
    for (i, o) in tr.iter().enumerate() {
        let e = max_abs(&g.rise[i], &o.sub(&rest.rise)?) / peak * 100.0;
        if e > worst.0 {
            worst = (e, times[i]);
        }
    }
    Ok(outcome(
        worst.0 < 3.0 && tr.len() == 100,
        format!(
            "{} timestamps, worst {:.3}% of steady peak at t={:.1} ms (limit 3%; oracle {oracle_s:.0} s)",
            tr.len(),
            worst.0,
            worst.1 * 1e3
        ),
    ))
}

/// Returns the oracle step maps as well, for the backward-Euler check.
fn c4_step(ctx: &Ctx, rest: &oracle::SteadySolution) -> Result<(Outcome, Vec<FieldMap>)> {
    let p = scenario::floorplan(N, ctx.pitch());
    let mut so = ctx.opts();
    so.tol = 1e-7;
    let peak = ctx.oracle.steady_solve_from(&p, &so, Some(&rest.nodes))?.rise.sub(&rest.rise)?.max();
    let trace = PowerTrace::new(5e-4, vec![p.clone(); 10])?;
    let o = ctx.oracle.transient_solve(&trace, &ctx.opts(), Some(&rest.nodes))?;
    let times = [0.5e-3, 1e-3, 2e-3, 5e-3];
    let g = step_response(&ctx.gs, &p, &ctx.leak.p_var, &times, Composition::Full)?;
    let mut errs = Vec::new();
    for (t, gi) in times.iter().zip(&g.rise) {
        let idx = (t / 5e-4).round() as usize - 1;
        errs.push(max_abs(gi, &o[idx].sub(&rest.rise)?) / peak * 100.0);
    }
    let pass = errs.iter().all(|e| *e < 5.0);
    let txt: Vec<String> = times.iter().zip(&errs).map(|(t, e)| format!("{:.1}ms {:.2}%", t * 1e3, e)).collect();
    let rises = o.iter().map(|f| f.sub(&rest.rise)).collect::<Result<_>>()?;
    Ok((outcome(pass, format!("max error [{}] of max rise (limit 5%)", txt.join(", "))), rises))
}

fn c5_trace(ctx: &Ctx, rest: &oracle::SteadySolution) -> Result<Outcome> {
    let dt = 1e-4;
    let trace = scenario::random_trace(N, ctx.pitch(), 150, dt, 7)?;
    let t = Instant::now();
    let o = ctx.oracle.transient_solve(&trace, &ctx.opts(), Some(&rest.nodes))?;
    let oracle_s = t.elapsed().as_secs_f64();
    let g = time_varying_profile(&ctx.gs, &trace, default_window(dt), &ctx.leak.p_var, Composition::Full)?;
    let rises: Vec<FieldMap> = o.iter().map(|x| x.sub(&rest.rise)).collect::<Result<_>>()?;
    let top = rises.iter().map(|r| r.max()).fold(0.0, f64::max);
    let avg = g.rise.iter().zip(&rises).map(|(a, b)| mean_abs(a, b)).sum::<f64>() / rises.len() as f64;
    let worst = g.rise.iter().zip(&rises).map(|(a, b)| max_abs(a, b)).fold(0.0, f64::max);
    Ok(outcome(
        avg / top * 100.0 <= 5.0,
        format!(
            "150 x 0.1 ms: average error {:.3}% of max rise {:.1} K (limit 5%), worst cell {:.2}%; green {:.0} ms, oracle {oracle_s:.0} s",
            avg / top * 100.0,
            top,
            worst / top * 100.0,
            g.elapsed.as_secs_f64() * 1e3
        ),
    ))
}

fn c6_window(ctx: &Ctx) -> Result<Outcome> {
    // 1 ms frames: the 5-frame window covers the 5 ms the kernel needs
    let dt = 1e-3;
    let trace = scenario::random_trace(N, ctx.pitch(), 150, dt, 8)?;
    let a = time_varying_profile(&ctx.gs, &trace, 5, &ctx.leak.p_var, Composition::Full)?;
    let b = time_varying_profile(&ctx.gs, &trace, trace.len(), &ctx.leak.p_var, Composition::Full)?;
    let top = b.rise.iter().map(|r| r.max()).fold(0.0, f64::max);
    let d = a.rise.iter().zip(&b.rise).map(|(x, y)| max_abs(x, y)).fold(0.0, f64::max);
    Ok(outcome(
        d / top * 100.0 <= 1.0,
        format!("k=5 vs k=150 at dt=1 ms: max difference {:.4}% of max rise (limit 1%)", d / top * 100.0),
    ))
}

/// Leakage-heavy floorplan (twice the nominal leakage, more leakage than
/// dynamic power). Each model predicts total rise above ambient and is
/// scored against the oracle with every effect on.
fn c7_ablation(ctx: &Ctx) -> Result<Outcome> {
    let mut v = VariationConfig::default().with_seed(21);
    v.leak_nominal *= 2.0;
    let leak = v.leakage(N, ctx.pitch())?;
    let p = scenario::floorplan(N, ctx.pitch());
    let mut so = SolveOptions::all_effects(leak.clone(), DEFAULT_C);
    so.tol = 1e-7;
    let reference = ctx.oracle.steady_solve(&p, &so)?.rise;
    let mut no_t = leak.clone();
    no_t.beta = 0.0;
    let models = [
        ("no effects", 0.0, LeakageBaseline::uniform(N, ctx.pitch(), leak.mu, 0.0)),
        ("+leak var", 0.0, no_t),
        ("+leak(T)", 0.0, leak.clone()),
        ("+k(T) (full)", ctx.gs.alpha, leak.clone()),
    ];
    let mut errs = Vec::new();
    for (name, alpha, l) in models {
        let g = GreensSet::from_parts(ctx.gs.baseline(), alpha, &l, ctx.gs.c_cell, Vec::new())?;
        let calc = total_profile(&g, &p, Composition::Full)?;
        let e = error_metrics(calc.map(), &reference)?;
        println!(
            "  {name:<13} max={:7.3}%  mae={:7.3}%  hotspot_hit={}",
            e.max_pct, e.pct_of_max_rise, e.hotspot_hit
        );
        errs.push(e.max_pct);
    }
    let strict = errs.windows(2).all(|w| w[0] > w[1]);
    Ok(outcome(
        strict,
        format!(
            "max error % of max rise {:.2} > {:.2} > {:.2} > {:.2} (leakage {:.1} W, dynamic {:.1} W)",
            errs[0],
            errs[1],
            errs[2],
            errs[3],
            leak.p_leak0.sum(),
            p.sum()
        ),
    ))
}

fn c8_transforms() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut txt = Vec::new();

    let t = Instant::now();
    let f = FieldMap::from_fn(N, 1.0, Unit::Kelvin, |_, _| rng.random_range(-1.0..1.0));
    let back = inverse_transform(&forward_transform(&f));
    let rt = max_abs(&back, &f) / f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rt_s = t.elapsed().as_secs_f64();
    pass &= rt < 1e-10 && rt_s < 10.0;
    txt.push(format!("round trip {rt:.1e} ({rt_s:.3} s)"));

    let t = Instant::now();
    let a = FieldMap::from_fn(32, 1.0, Unit::Kelvin, |_, _| rng.random_range(0.0..1.0));
    let b = FieldMap::from_fn(32, 1.0, Unit::Kelvin, |_, _| rng.random_range(0.0..1.0));
    let fast = convolve(&a, &b)?;
    let direct = FieldMap::from_fn(32, 1.0, Unit::Kelvin, |i, j| {
        let mut s = 0.0;
        for p in 0..32 {
            for q in 0..32 {
                s += a.get(p, q) * b.get((i + 32 - p) % 32, (j + 32 - q) % 32);
            }
        }
        s
    });
    let ct = max_abs(&fast, &direct) / direct.max();
    let ct_s = t.elapsed().as_secs_f64();
    pass &= ct < 1e-9 && ct_s < 10.0;
    txt.push(format!("convolution {ct:.1e} ({ct_s:.3} s)"));

    let t = Instant::now();
    let h = 1e-4;
    let theorem = |f: &dyn Fn(f64) -> f64, m: usize, freqs: usize| -> Result<f64> {
        let c = m / 2;
        let map = FieldMap::from_fn(m, h, Unit::Response, |i, j| {
            let (di, dj) = (i as f64 - c as f64, j as f64 - c as f64);
            f(h * (di * di + dj * dj).sqrt())
        });
        let spec = forward_transform(&center_to_origin(&map));
        let prof = RadialProfile::sample(f, h * m as f64, 40_001);
        let omegas: Vec<f64> = (0..freqs).map(|u| 2.0 * PI * u as f64 / (m as f64 * h)).collect();
        let hk = hankel_transform(&prof, &omegas)?;
        Ok((0..freqs)
            .map(|u| {
                let radial = 2.0 * PI * hk.value[u];
                (h * h * spec.get(u, 0).re - radial).abs() / radial.abs()
            })
            .fold(0.0, f64::max))
    };
    let sig = 4.0 * h;
    let eg = theorem(&|r| (-r * r / (2.0 * sig * sig)).exp(), 128, 12)?;
    let ex = theorem(&|r| (-r / (20.0 * h)).exp(), 512, 7)?;
    let th_s = t.elapsed().as_secs_f64();
    pass &= eg < 1e-4 && ex < 1e-4 && th_s < 10.0;
    txt.push(format!("Theorem I gaussian {eg:.1e}, exponential {ex:.1e} ({th_s:.2} s)"));
    Ok(outcome(pass, txt.join("; ")))
}

fn c9_reductions(ctx: &Ctx) -> Result<Outcome> {
    let base = ctx.gs.baseline();
    let l0 = LeakageBaseline { beta: 0.0, ..ctx.leak.clone() };
    let g = GreensSet::from_parts(base, 0.0, &l0, ctx.gs.c_cell, Vec::new())?;
    let peak = g.f_sp0.max();
    let det = max_abs(&g.f_det, &g.f_sp0) / peak;
    let uni = LeakageBaseline::uniform(N, ctx.pitch(), ctx.leak.mu, ctx.leak.beta);
    let zero_var = ctx.gs.with_leakage(&uni)?;
    let rand_zero = zero_var.f_rand.values().iter().all(|v| *v == 0.0);
    let t0_zero = ctx.gs.transient_kernel(0.0)?.values().iter().all(|v| *v == 0.0);
    let late = ctx.gs.transient_kernel(10.0 * ctx.gs.max_time_constant())?;
    let inf = max_abs(&late, &ctx.gs.f_det) / ctx.gs.f_det.max();
    Ok(outcome(
        det <= 1e-9 && rand_zero && t0_zero && inf <= 1e-3,
        format!(
            "f_det-f_sp0 {det:.1e} (1e-9); f_rand==0 {rand_zero}; transient(0)==0 {t0_zero}; transient(10 tau) vs steady {inf:.1e} (1e-3)"
        ),
    ))
}

fn c10_oracle(ctx: &Ctx, refs: &[(String, Reference, LeakageBaseline, FieldMap)], step: &[FieldMap]) -> Result<Outcome> {
    // energy balance and fixed-point iterations on every scenario
    let mut worst_balance = 0.0f64;
    let mut worst_iters = 0;
    for (_, _, leak, p) in refs {
        let s = ctx.oracle.steady_solve(p, &SolveOptions::all_effects(leak.clone(), DEFAULT_C))?;
        worst_balance = worst_balance.max(s.energy_imbalance());
        worst_iters = worst_iters.max(s.iterations);
    }
    let ref_iters = refs.iter().map(|(_, r, ..)| r.iterations).max().unwrap_or(0);

    // 1D series resistance with lateral conduction off
    let mut o = Oracle::new(&ctx.stack, &ConductivityMap::uniform(N, ctx.pitch(), 130.0))?;
    o.config.lateral = false;
    let total = 100.0;
    let cells = (N * N) as f64;
    let p = FieldMap::filled(N, ctx.pitch(), Unit::Watts, total / cells);
    let s = o.steady_solve(&p, &SolveOptions::default())?;
    let a = ctx.stack.cell_area();
    let l = &ctx.stack.layers;
    let r_cell = l[0].thickness / (2.0 * l[0].conductivity * a)
        + l[1].thickness / (l[1].conductivity * a)
        + l[2].thickness / (l[2].conductivity * a)
        + ctx.stack.sink_resistance * cells;
    let want = total / cells * r_cell;
    let series = s.rise.values().iter().map(|v| (v / want - 1.0).abs()).fold(0.0, f64::max);

    // backward Euler on the floorplan step: no cell ever cools
    let mut monotone = step.first().is_some_and(|f| f.min() >= -1e-9);
    for w in step.windows(2) {
        monotone &= w[1].values().iter().zip(w[0].values()).all(|(b, a)| *b >= a - 1e-9);
    }
    Ok(outcome(
        worst_balance <= 1e-6 && series <= 5e-3 && monotone && worst_iters < 50 && ref_iters < 50,
        format!(
            "energy imbalance {worst_balance:.1e}; series-resistance error {:.3}%; BE step monotone {monotone}; fixed-point iterations {worst_iters} (tol 0.01 K), {ref_iters} (tol 1e-7 K)",
            series * 100.0
        ),
    ))
}

fn c11_speed(ctx: &Ctx, refs: &[(String, Reference, LeakageBaseline, FieldMap)]) -> Result<Outcome> {
    let (_, _, leak, p) = &refs[0];
    let g = ctx.gs.with_leakage(leak)?;
    let opts = SolveOptions::all_effects(leak.clone(), DEFAULT_C);
    let mut tg = Vec::new();
    let mut to = Vec::new();
    for _ in 0..10 {
        let t = Instant::now();
        std::hint::black_box(steady_profile(&g, p, &leak.p_var, Composition::Full)?);
        tg.push(t.elapsed());
        let t = Instant::now();
        std::hint::black_box(ctx.oracle.steady_solve(p, &opts)?);
        to.push(t.elapsed());
    }
    let (mg, mo) = (median(tg), median(to));
    let speedup = mo.as_secs_f64() / mg.as_secs_f64();
    Ok(outcome(
        speedup >= 100.0,
        format!(
            "median of 10: green {:.2} ms, oracle {:.0} ms -> {speedup:.0}x (floor 100x)",
            mg.as_secs_f64() * 1e3,
            mo.as_secs_f64() * 1e3
        ),
    ))
}

fn c12_monte_carlo(ctx: &Ctx) -> Result<Outcome> {
    let v = VariationConfig::default();
    let p = scenario::floorplan(N, ctx.pitch());
    let seeds: Vec<u64> = (1000..1100).collect();
    let t = Instant::now();
    let a = monte_carlo(&ctx.gs, &v, &p, &seeds)?;
    let b = monte_carlo(&ctx.gs, &v, &p, &seeds)?;
    let secs = t.elapsed().as_secs_f64();
    let same = a.results_csv() == b.results_csv();
    let failed = a.runs.iter().filter(|r| r.error.is_some()).count();
    Ok(outcome(
        same && failed == 0 && secs / 2.0 < 600.0,
        format!(
            "100 runs x2 byte-identical {same}; {failed} failed; {:.1} s per sweep; max rise mean {:.2} K std {:.3} K",
            secs / 2.0,
            a.mean_max,
            a.std_max
        ),
    ))
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let start = Instant::now();
    let ctx = Ctx::new().expect("calibration");
    let rest = ctx.rest().expect("leakage-only steady state");

    let names = [
        "steady-state accuracy",
        "random-component value",
        "transient Green's function",
        "step response",
        "time-varying trace",
        "window equivalence",
        "ablation ordering",
        "transform suite",
        "reduction identities",
        "oracle self-validation",
        "relative speed",
        "Monte Carlo determinism",
    ];
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut refs = Vec::new();
    let mut step = Vec::new();
    let mut run = |k: u32, f: &mut dyn FnMut() -> Result<Outcome>| {
        if !on(k) {
            return;
        }
        let t = Instant::now();
        let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        println!(
            "criterion {k:>2} {}: {} ({:.1} s)",
            names[k as usize - 1],
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        results.push((k, o));
    };
    // 2, 10 and 11 reuse the scenario references from 1
    let need_refs = on(1) || on(2) || on(10) || on(11);
    run(1, &mut || {
        if need_refs {
            c1_steady(&ctx, &mut refs)
        } else {
            Ok(outcome(true, String::new()))
        }
    });
    if refs.is_empty() && need_refs {
        let mut tmp = Vec::new();
        let _ = c1_steady(&ctx, &mut tmp);
        refs = tmp;
    }
    run(2, &mut || c2_random_value(&ctx, &refs));
    run(3, &mut || c3_transient_impulse(&ctx, &rest));
    run(4, &mut || {
        let (o, s) = c4_step(&ctx, &rest)?;
        step = s;
        Ok(o)
    });
    run(5, &mut || c5_trace(&ctx, &rest));
    run(6, &mut || c6_window(&ctx));
    run(7, &mut || c7_ablation(&ctx));
    run(8, &mut c8_transforms);
    run(9, &mut || c9_reductions(&ctx));
    run(10, &mut || {
        if step.is_empty() {
            step = c4_step(&ctx, &rest)?.1;
        }
        c10_oracle(&ctx, &refs, &step)
    });
    run(11, &mut || c11_speed(&ctx, &refs));
    run(12, &mut || c12_monte_carlo(&ctx));

    println!();
    println!("acceptance summary ({:.0} s):", start.elapsed().as_secs_f64());
    let mut failed = 0;
    for (k, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!("{} [{k:>2}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, names[*k as usize - 1], o.detail);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
