use std::collections::BTreeMap;
use std::sync::OnceLock;

use gtherm::greens::*;
use gtherm::grid::{center_to_origin, forward_transform, hadamard, mirror_pad};
use gtherm::scenario;
use gtherm::{ChipStack, ConductivityMap, FieldMap, GreensSet, LeakageBaseline, Unit, VariationConfig};

const N: usize = 16;

fn stack() -> ChipStack {
    ChipStack::table2(N)
}

/// Mean leakage per cell at this grid, same total as the 64×64 default.
fn mu() -> f64 {
    0.005 * (64.0 * 64.0) / (N * N) as f64
}

fn uniform_k() -> ConductivityMap {
    ConductivityMap::uniform(N, stack().pitch(), 130.0)
}

fn calibrated() -> &'static GreensSet {
    static GS: OnceLock<GreensSet> = OnceLock::new();
    GS.get_or_init(|| {
        let st = stack();
        let leak = LeakageBaseline::uniform(N, st.pitch(), mu(), 0.0275);
        GreensSet::calibrate(&st, &uniform_k(), &leak, &CalibrationOptions::default()).unwrap()
    })
}

fn varied_leak(seed: u64) -> LeakageBaseline {
    let st = stack();
    let l = VariationConfig::default().with_seed(seed).leakage(N, st.pitch()).unwrap();
    LeakageBaseline::from_map(&l.p_leak0.scale((64.0 * 64.0) / (N * N) as f64), l.beta).unwrap()
}

fn rel_close(a: &FieldMap, b: &FieldMap, tol: f64) -> f64 {
    let peak = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / peak;
    assert!(worst <= tol, "worst relative deviation {worst:e} > {tol:e}");
    worst
}

#[test]
fn baseline_shape() {
    let base = extract_baseline(&stack(), &uniform_k()).unwrap();
    let f = &base.f_sp0;
    let m = f.n();
    assert_eq!(m, 2 * N);
    assert_eq!(f.argmax(), (N, N));
    assert!(f.values().iter().all(|v| *v >= 0.0));
    assert!(base.kappa_inf < 0.05 * f.get(N, N), "{} vs {}", base.kappa_inf, f.get(N, N));
    assert!(base.phi > base.kappa_inf && base.phi < f.get(N, N));

    // Rotations/reflections of the lattice map the source onto itself, so
    // those orbits must agree tightly. Equal radius alone also pairs
    // lattice-inequivalent cells such as (5,0)/(3,4); there the 5-point
    // stencil's anisotropy shows up at the 1e-3 level.
    let spread = |key: &dyn Fn(usize, usize) -> (usize, usize)| {
        let mut groups: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for i in 0..m {
            for j in 0..m {
                let e = groups.entry(key(i.abs_diff(N), j.abs_diff(N))).or_insert((f64::INFINITY, f64::NEG_INFINITY));
                e.0 = e.0.min(f.get(i, j));
                e.1 = e.1.max(f.get(i, j));
            }
        }
        groups.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max) / f.get(N, N)
    };
    let orbit = spread(&|a, b| (a.min(b), a.max(b)));
    let radial = spread(&|a, b| (a * a + b * b, 0));
    println!("orbit deviation {orbit:e}, equal-radius deviation {radial:e}");
    assert!(orbit < 1e-4);
    assert!(radial < 1e-3);
}

#[test]
fn alpha_fit_on_table2_stack() {
    let st = stack();
    let c = gtherm::DEFAULT_C;
    let (alpha, rep) = fit_alpha(&st, &default_sweep(130.0, c), c).unwrap();
    assert!(rep.sweep.len() >= 4);
    assert!((0.0..=1.0).contains(&rep.fit_r2) && rep.fit_r2 > 0.95);
    // Eq. 11 reconstruction at every sweep point
    assert!(rep.max_rel_err < 0.02, "{}", rep.max_rel_err);
    assert!(alpha > 0.0);
    let (a0, _) = fit_alpha(&st, &default_sweep(130.0, 0.0004), 0.0).unwrap();
    assert_eq!(a0, 0.0);
    let flat = vec![130.0; 4];
    assert!(matches!(fit_alpha(&st, &flat, c), Err(gtherm::Error::Calibration(_))));
}

#[test]
fn g_shift_and_q_rand_examples() {
    let flat = FieldMap::filled(8, 1.0, Unit::Response, 2.5);
    assert_eq!(make_g_shift(&flat, 2.5, 2.5), flat);
    let base = extract_baseline(&stack(), &uniform_k()).unwrap();
    let center = base.f_sp0.get(N, N);
    let g = make_g_shift(&base.f_sp0, base.kappa_inf, center);
    assert!((g.get(N, N) - (2.0 * center - base.kappa_inf)).abs() < 1e-12 * center);
    assert_eq!(calibrated().g_sp0, g);

    let zero = FieldMap::zeros(8, 1.0, Unit::Watts);
    assert_eq!(q_rand(&zero), zero);
    let cst = FieldMap::filled(8, 1.0, Unit::Watts, -0.3);
    assert_eq!(q_rand(&cst), cst);
    let p = FieldMap::from_fn(8, 1.0, Unit::Watts, |i, j| (i as f64 - 3.5) * 0.01 + (j as f64) * 0.002);
    let q = q_rand(&p);
    assert!((q.get(4, 4) - (2.0 * p.get(4, 4) - p.get(0, 0))).abs() < 1e-15);
}

#[test]
fn deterministic_reductions() {
    let base = extract_baseline(&stack(), &uniform_k()).unwrap();
    let m = 2 * N;
    let s = deterministic_greens(&base, 0.0, 0.0, 0.3).unwrap();
    let f = kernel_from_spectrum(&s.det, m, base.f_sp0.pitch(), Unit::Response);
    rel_close(&f, &base.f_sp0, 1e-9);

    let (beta, mu) = (0.0275, 0.02);
    let s = deterministic_greens(&base, 0.0, beta, mu).unwrap();
    for (d, f0) in s.det.iter().zip(&s.sp0) {
        let want = f0 / (1.0 - mu * beta * f0);
        assert!((d - want).norm() <= 1e-12 * want.norm());
    }

    // loop gain μβΣf ≥ 1 → runaway
    let sum_f = base.f_sp0.sum();
    let r = deterministic_greens(&base, 0.0, beta, 1.01 / (beta * sum_f));
    assert!(matches!(r, Err(gtherm::Error::Runaway { .. })), "{r:?}");
}

#[test]
fn calibrated_set_invariants() {
    let gs = calibrated();
    // f_det ≥ f_sp0 with positive feedback
    for (d, f) in gs.f_det.values().iter().zip(gs.f_sp0.values()) {
        assert!(d >= &(f * (1.0 - 1e-12)));
    }
    // Term V: αβ·peak² small next to the peak
    let peak = gs.f_sp0.max();
    assert!(gs.alpha * gs.beta * peak * peak < 0.01 * peak);
    // p_var = 0 ⇒ f_rand = 0
    assert!(gs.f_rand.values().iter().all(|v| *v == 0.0));
    let st = stack();
    let again = GreensSet::from_parts(gs.baseline(), gs.alpha, &LeakageBaseline::uniform(N, st.pitch(), mu(), 0.0275), gs.c_cell, gs.t_samples.clone()).unwrap();
    assert_eq!(again.f_det, gs.f_det);
}

#[test]
fn f_det_center_matches_oracle_with_effects() {
    let gs = calibrated();
    let st = stack();
    let leak = LeakageBaseline::uniform(N, st.pitch(), mu(), 0.0275);
    let (c, _) = gs.center();
    let imp = FieldMap::impulse(N, st.pitch(), Unit::Watts, c, c);
    let r = scenario::reference(&st, &uniform_k(), &leak, gtherm::DEFAULT_C, &imp).unwrap();
    let got = gs.deterministic_profile(&imp).unwrap().get(c, c);
    let want = r.rise.get(c, c);
    let rel = (got / want - 1.0).abs();
    println!("f_det(center) {got:.5} oracle {want:.5} rel {rel:.4}");
    assert!(rel < 0.03);
}

#[test]
fn f_rand_tracks_p_var() {
    let gs = calibrated();
    let a = gs.with_leakage(&varied_leak(1)).unwrap();
    let b = gs.with_leakage(&varied_leak(1)).unwrap();
    let c = gs.with_leakage(&varied_leak(2)).unwrap();
    assert_eq!(a.f_rand, b.f_rand);
    assert_eq!(a.f_det, b.f_det);
    assert_ne!(a.f_rand, c.f_rand);
    assert!(a.f_rand.values().iter().any(|v| *v != 0.0));

    // α = β = 0 ⇒ f_rand = 0 for any p_var
    let mut l = varied_leak(1);
    l.beta = 0.0;
    let z = GreensSet::from_parts(gs.baseline(), 0.0, &l, gs.c_cell, vec![1e-4]).unwrap();
    assert!(z.f_rand.values().iter().all(|v| *v == 0.0));
    rel_close(&z.f_det, &z.f_sp0, 1e-9);
}

#[test]
fn transient_kernel_limits_and_monotonicity() {
    let gs = calibrated();
    let k0 = gs.transient_kernel(0.0).unwrap();
    assert!(k0.values().iter().all(|v| *v == 0.0));
    let late = gs.transient_kernel(10.0 * gs.max_time_constant()).unwrap();
    rel_close(&late, &gs.f_det, 1e-3);
    assert!(gs.transient_kernel(-1.0).is_err());
    assert!(matches!(
        transient_spectrum(&[num_complex::Complex64::new(-1.0, 0.0)], 1e-6, 1e-3),
        Err(gtherm::Error::Calibration(_))
    ));

    assert_eq!(gs.tran_tensor.len(), 100);
    let bound = gs.f_det.map(|v| v * (1.0 + 1e-6));
    for w in gs.tran_tensor.windows(2) {
        for ((a, b), ub) in w[0].values().iter().zip(w[1].values()).zip(bound.values()) {
            assert!(b >= &(a - 1e-12 * gs.f_det.max()));
            assert!(b <= &(ub + 1e-12 * gs.f_det.max()));
        }
    }
}

#[test]
fn capacitance_fit_recovers_single_rc() {
    // one-node network: kernel is R at the source, response R(1 − e^{−t/RC})
    let m = 2 * N;
    let (r, c) = (2.0, 3e-4);
    let mut k = FieldMap::zeros(m, 1e-3, Unit::Response);
    k.set(N, N, r);
    let samples: Vec<(f64, f64)> = (1..=50).map(|i| {
        let t = i as f64 * 1e-4;
        (t, r * (1.0 - (-t / (r * c)).exp()))
    }).collect();
    let (fit, rms) = fit_capacitance_samples(&k, &samples, 1e-4).unwrap();
    assert!((fit / c - 1.0).abs() < 0.01, "{fit}");
    assert!(rms < 1e-6);
    // 63.2 % of the steady value at t = RC
    let y = r * (1.0 - (-(r * fit) / (r * c)).exp());
    assert!((y / r - 0.632).abs() < 0.05 * 0.632);

    // samples that no exponential fits → calibration error
    let bad: Vec<(f64, f64)> = (1..=20).map(|i| (i as f64 * 1e-4, if i % 2 == 0 { 2.0 } else { 0.0 })).collect();
    assert!(fit_capacitance_samples(&k, &bad, 1e-4).is_err());
}

#[test]
fn capacitance_scales_with_heat_capacity() {
    let st = stack();
    let base = extract_baseline(&st, &uniform_k()).unwrap();
    let (c1, rms) = fit_capacitance(&st, &uniform_k(), &base.f_sp0).unwrap();
    let (c2, _) = fit_capacitance(&st.scale_heat_capacity(2.0), &uniform_k(), &base.f_sp0).unwrap();
    println!("C = {c1:e} (rms {rms:.4}), doubled {c2:e}");
    assert!((c2 / c1 - 2.0).abs() < 0.1);
    assert!((c1 / calibrated().c_cell - 1.0).abs() < 1e-9);
}

#[test]
fn save_load_round_trip() {
    let gs = calibrated().with_leakage(&varied_leak(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    gs.save(dir.path()).unwrap();
    let back = GreensSet::load(dir.path()).unwrap();
    assert_eq!(back.n, gs.n);
    assert_eq!(back.alpha, gs.alpha);
    assert_eq!(back.c_cell, gs.c_cell);
    assert_eq!(back.t_samples, gs.t_samples);
    rel_close(&back.f_det, &gs.f_det, 1e-12);
    rel_close(&back.f_rand, &gs.f_rand, 1e-9);
    rel_close(&back.tran_tensor[37], &gs.tran_tensor[37], 1e-12);
    assert!(GreensSet::load(&dir.path().join("missing")).is_err());
}

#[test]
fn shape_mismatch_rejected() {
    let gs = calibrated();
    let p = FieldMap::zeros(N + 2, gs.pitch, Unit::Watts);
    assert!(gs.deterministic_profile(&p).is_err());
    assert!(gs.random_greens(&p).is_err());
}

/// Lemma I as literally stated: `F(f_sp0 ∘ T) ≈ F(T) ∘ g_sp0` at low
/// frequencies for a smooth oracle temperature map. The deterministic kernel
/// does not rest on this identity (see `deterministic_greens`), and on this
/// stack it does not hold; run with `--ignored` to see the figures.
#[test]
#[ignore]
fn lemma_one_literal_identity() {
    let gs = calibrated();
    let st = stack();
    let oracle = gtherm::Oracle::new(&st, &uniform_k()).unwrap();
    let p = scenario::floorplan(N, st.pitch());
    let t = oracle.steady_solve(&p, &Default::default()).unwrap().rise;
    let tm = mirror_pad(&t);
    let lhs = forward_transform(&hadamard(&gs.f_sp0, &tm).unwrap());
    let rhs_t = forward_transform(&tm);
    let g = center_to_origin(&gs.g_sp0);
    let mut worst = 0.0f64;
    for u in 0..3 {
        for v in 0..3 {
            let a = lhs.get(u, v);
            let b = rhs_t.get(u, v) * g.get(u, v);
            let rel = (a - b).norm() / a.norm();
            println!("({u},{v}) lhs {a:.4e} rhs {b:.4e} rel {rel:.3}");
            worst = worst.max(rel);
        }
    }
    assert!(worst < 0.10, "worst low-frequency relative gap {worst:.3}");
}
