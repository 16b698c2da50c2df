//! `gtherm` command-line front end.

pub mod config;
pub mod error;
pub mod heatmap;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gtherm::greens::CalibrationOptions;
use gtherm::kv::{parse_f64_list, KvFile};
use gtherm::oracle::{Oracle, SolveOptions};
use gtherm::scenario;
use gtherm::solver::{
    default_window, error_metrics, monte_carlo_jobs, step_response, steady_profile, time_varying_profile, total_profile,
    Composition, PowerTrace,
};
use gtherm::{FieldMap, GreensSet, Unit};

use config::{load_stack, load_variation, Scenario};
use error::{At, CliError};

#[derive(Parser, Debug)]
#[command(name = "gtherm", version, about = "Green's-function chip thermal solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Scenario file; its entries fill in flags that were not given.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Override a stack or variation key (repeatable), e.g. --set seed=7
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Worker threads for Monte Carlo.
    #[arg(long, default_value_t = 1, global = true)]
    pub jobs: usize,
    /// Skip PPM heatmaps.
    #[arg(long, global = true)]
    pub no_images: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a Green's-function set against the oracle.
    Calibrate {
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long)]
        variation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use this α instead of fitting it.
        #[arg(long)]
        alpha: Option<f64>,
        /// Use this per-cell heat capacity (J/K) instead of fitting it.
        #[arg(long)]
        c_cell: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Steady temperature of one power map.
    Steady {
        #[arg(long)]
        greens: Option<PathBuf>,
        #[arg(long)]
        power: Option<PathBuf>,
        /// Draw the leakage map from this file instead of the calibrated one.
        #[arg(long)]
        variation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop the random component.
        #[arg(long)]
        no_rand: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Rise after switching a power map on at t = 0.
    Step {
        #[arg(long)]
        greens: Option<PathBuf>,
        #[arg(long)]
        power: Option<PathBuf>,
        /// Comma-separated seconds.
        #[arg(long)]
        times: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_rand: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Temperature along a power trace (a directory of .map frames).
    Trace {
        #[arg(long)]
        greens: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        /// Frames of history kept; defaults to 5 ms worth.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_rand: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference reference (steady, or a trace with --trace).
    Oracle {
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long)]
        variation: Option<PathBuf>,
        #[arg(long)]
        power: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Temperature-independent leakage.
        #[arg(long)]
        no_leak_t: bool,
        /// Temperature-independent conductivity.
        #[arg(long)]
        no_k_t: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Steady solves over many variation seeds.
    Montecarlo {
        #[arg(long)]
        greens: Option<PathBuf>,
        #[arg(long)]
        variation: Option<PathBuf>,
        /// Power map; the built-in floorplan if omitted.
        #[arg(long)]
        power: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// One seed per line; otherwise seeds 1..=runs.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the five-scenario suite against the oracle and check error bounds.
    Validate {
        /// Working directory for scenario inputs, references and reports.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        greens: Option<PathBuf>,
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long)]
        variation: Option<PathBuf>,
        /// MAE bound, percent of max rise.
        #[arg(long, default_value_t = 2.5)]
        mae_pct: f64,
        /// Max-error bound, percent of max rise.
        #[arg(long, default_value_t = 4.0)]
        max_pct: f64,
        #[command(flatten)]
        common: Common,
    },
}

struct Ctx<'a> {
    common: &'a Common,
    sc: Scenario,
}

impl Ctx<'_> {
    fn info(&self, msg: impl AsRef<str>) {
        if self.common.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let out = self.sc.require_path(flag, "out")?;
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", out.display())))?;
        Ok(out)
    }

    fn write_map(&self, f: &FieldMap, dir: &Path, stem: &str) -> Result<(), CliError> {
        f.write(&dir.join(format!("{stem}.map"))).at("write")?;
        if !self.common.no_images {
            heatmap::render_heatmap(f, &dir.join(format!("{stem}.ppm")), 4).at("heatmap")?;
        }
        Ok(())
    }
}

fn read_map(path: &Path, stage: &'static str) -> Result<FieldMap, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("{} does not exist", path.display())));
    }
    FieldMap::read(path).at(stage)
}

fn read_trace(dir: &Path, dt: f64) -> Result<PowerTrace, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read trace dir {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "map"))
        .collect();
    files.sort();
    let frames = files.iter().map(|p| read_map(p, "trace")).collect::<Result<Vec<_>, _>>()?;
    PowerTrace::new(dt, frames).at("trace")
}

fn load_greens(ctx: &Ctx, flag: &Option<PathBuf>) -> Result<GreensSet, CliError> {
    let dir = ctx.sc.require_path(flag, "greens")?;
    if !dir.join("manifest.txt").exists() {
        return Err(CliError::Config(format!("{} is not a Green's-function directory", dir.display())));
    }
    GreensSet::load(&dir).at("load-greens")
}

fn timing(offline_ms: f64, online_ms: f64) {
    println!("timing offline_ms={offline_ms:.3} online_ms={online_ms:.3}");
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn composition(no_rand: bool) -> Composition {
    if no_rand {
        Composition::NoRandom
    } else {
        Composition::Full
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Calibrate { stack, variation, out, alpha, c_cell, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("calibrate")?;
            let st = load_stack(ctx.sc.path(stack, "stack").as_deref(), &common.overrides)?;
            let var = load_variation(ctx.sc.path(variation, "variation").as_deref(), &common.overrides)?;
            let out = ctx.out_dir(out)?;
            let t = Instant::now();
            let k = var.conductivity(st.die().conductivity, st.n, st.pitch()).at("variation")?;
            let leak = var.leakage(st.n, st.pitch()).at("variation")?;
            let opts = CalibrationOptions {
                c: var.fit_c(st.ambient),
                alpha: *alpha,
                c_cell: *c_cell,
                ..Default::default()
            };
            ctx.info(format!("calibrating n={} c={:.6e}", st.n, opts.c));
            let gs = GreensSet::calibrate(&st, &k, &leak, &opts).at("calibrate")?;
            let offline = ms(t);
            gs.save(&out).at("write")?;
            std::fs::write(out.join("stack.txt"), st.to_kv().to_text()).at("write")?;
            std::fs::write(out.join("variation.txt"), var.to_kv().to_text()).at("write")?;
            k.k_map.write(&out.join("k_die.map")).at("write")?;
            leak.p_leak0.write(&out.join("p_leak0.map")).at("write")?;
            if !common.no_images {
                heatmap::render_heatmap(&gs.f_det, &out.join("f_det.ppm"), 2).at("heatmap")?;
            }
            println!("alpha={:.6e} C={:.6e} tau_max={:.6e}", gs.alpha, gs.c_cell, gs.max_time_constant());
            if let Some(r) = &gs.report {
                println!("c_prime={:.6e} fit_r2={:.6}", r.c_prime, r.fit_r2);
            }
            timing(offline, 0.0);
        }
        Command::Steady { greens, power, variation, out, no_rand, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("steady")?;
            let p = read_map(&ctx.sc.require_path(power, "power")?, "power")?;
            let out = ctx.out_dir(out)?;
            let t = Instant::now();
            let mut gs = load_greens(&ctx, greens)?;
            if let Some(v) = ctx.sc.path(variation, "variation") {
                let var = load_variation(Some(&v), &common.overrides)?;
                let leak = var.leakage(gs.n, gs.pitch).at("variation")?;
                gs = gs.with_leakage(&leak).at("greens")?;
            }
            let offline = ms(t);
            let t = Instant::now();
            let r = steady_profile(&gs, &p, &gs.p_var, composition(*no_rand)).at("steady")?;
            let online = ms(t);
            r.validate().at("steady")?;
            // rise above ambient including the leakage-only baseline
            let total = total_profile(&gs, &p, composition(*no_rand)).at("steady")?;
            ctx.write_map(r.map(), &out, "rise")?;
            ctx.write_map(total.map(), &out, "total")?;
            println!(
                "max_rise={:.6e} mean_rise={:.6e} max_total={:.6e}",
                r.map().max(),
                r.map().mean(),
                total.map().max()
            );
            timing(offline, online);
        }
        Command::Step { greens, power, times, out, no_rand, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("step")?;
            let p = read_map(&ctx.sc.require_path(power, "power")?, "power")?;
            let times = match times.clone().or_else(|| ctx.sc.get("times").map(str::to_string)) {
                Some(s) => parse_f64_list(&s, "--times").at("config")?,
                None => vec![0.5e-3, 1e-3, 2e-3, 5e-3],
            };
            let out = ctx.out_dir(out)?;
            let t = Instant::now();
            let gs = load_greens(&ctx, greens)?;
            let offline = ms(t);
            let t = Instant::now();
            let r = step_response(&gs, &p, &gs.p_var, &times, composition(*no_rand)).at("step")?;
            let online = ms(t);
            r.validate().at("step")?;
            for (i, (f, tt)) in r.rise.iter().zip(&times).enumerate() {
                ctx.write_map(f, &out, &format!("rise_{i:04}"))?;
                println!("t={tt:.6e} max_rise={:.6e}", f.max());
            }
            timing(offline, online);
        }
        Command::Trace { greens, trace, dt, window, out, no_rand, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("trace")?;
            let dt = ctx.sc.value(*dt, "dt")?.unwrap_or(1e-3);
            let tr = read_trace(&ctx.sc.require_path(trace, "trace")?, dt)?;
            let window = ctx.sc.value(*window, "window")?.unwrap_or_else(|| default_window(dt));
            let out = ctx.out_dir(out)?;
            let t = Instant::now();
            let gs = load_greens(&ctx, greens)?;
            let offline = ms(t);
            let t = Instant::now();
            let r = time_varying_profile(&gs, &tr, window, &gs.p_var, composition(*no_rand)).at("trace")?;
            let online = ms(t);
            r.validate().at("trace")?;
            for (i, f) in r.rise.iter().enumerate() {
                ctx.write_map(f, &out, &format!("rise_{i:04}"))?;
            }
            println!("frames={} window={} max_rise={:.6e}", r.rise.len(), window,
                r.rise.iter().map(FieldMap::max).fold(f64::MIN, f64::max));
            timing(offline, online);
        }
        Command::Oracle { stack, variation, power, trace, dt, out, no_leak_t, no_k_t, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("oracle")?;
            let st = load_stack(ctx.sc.path(stack, "stack").as_deref(), &common.overrides)?;
            let var = load_variation(ctx.sc.path(variation, "variation").as_deref(), &common.overrides)?;
            let out = ctx.out_dir(out)?;
            let k = var.conductivity(st.die().conductivity, st.n, st.pitch()).at("variation")?;
            let leak = var.leakage(st.n, st.pitch()).at("variation")?;
            let mut opts = SolveOptions::all_effects(leak, var.fit_c(st.ambient));
            opts.temp_dep_leakage = !no_leak_t;
            opts.temp_dep_conductivity = !no_k_t;
            let oracle = Oracle::new(&st, &k).at("oracle")?;
            let zero = FieldMap::zeros(st.n, st.pitch(), Unit::Watts);
            let t = Instant::now();
            let s0 = oracle.steady_solve(&zero, &opts).at("oracle")?;
            ctx.write_map(&s0.rise, &out, "t0")?;
            if let Some(tdir) = ctx.sc.path(trace, "trace") {
                let dt = ctx.sc.value(*dt, "dt")?.unwrap_or(1e-3);
                let tr = read_trace(&tdir, dt)?;
                let frames = oracle.transient_solve(&tr, &opts, Some(&s0.nodes)).at("oracle")?;
                for (i, f) in frames.iter().enumerate() {
                    ctx.write_map(&f.sub(&s0.rise).at("oracle")?, &out, &format!("rise_{i:04}"))?;
                }
                println!("frames={}", frames.len());
            } else {
                let p = read_map(&ctx.sc.require_path(power, "power")?, "power")?;
                let s1 = oracle.steady_solve_from(&p, &opts, Some(&s0.nodes)).at("oracle")?;
                let rise = s1.rise.sub(&s0.rise).at("oracle")?;
                ctx.write_map(&rise, &out, "rise")?;
                println!(
                    "max_rise={:.6e} iterations={} energy_imbalance={:.3e}",
                    rise.max(),
                    s1.iterations,
                    s1.energy_imbalance()
                );
            }
            timing(0.0, ms(t));
        }
        Command::Montecarlo { greens, variation, power, runs, seeds, out, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("montecarlo")?;
            let var = load_variation(ctx.sc.path(variation, "variation").as_deref(), &common.overrides)?;
            let out = ctx.out_dir(out)?;
            let t = Instant::now();
            let gs = load_greens(&ctx, greens)?;
            let offline = ms(t);
            let p = match ctx.sc.path(power, "power") {
                Some(path) => read_map(&path, "power")?,
                None => scenario::floorplan(gs.n, gs.pitch),
            };
            let seed_list: Vec<u64> = match ctx.sc.path(seeds, "seeds") {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                    text.split_whitespace()
                        .map(|s| s.parse().map_err(|_| CliError::Config(format!("bad seed '{s}'"))))
                        .collect::<Result<_, _>>()?
                }
                None => {
                    let n = ctx.sc.value(*runs, "runs")?.unwrap_or(100);
                    (1..=n as u64).collect()
                }
            };
            let seed_list = match ctx.sc.value(*runs, "runs")? {
                Some(n) if n < seed_list.len() => seed_list[..n].to_vec(),
                _ => seed_list,
            };
            if seed_list.is_empty() {
                return Err(CliError::Config("no Monte Carlo runs requested".into()));
            }
            let t = Instant::now();
            let summary = monte_carlo_jobs(&gs, &var, &p, &seed_list, common.jobs).at("montecarlo")?;
            let online = ms(t);
            std::fs::write(out.join("results.csv"), summary.results_csv()).at("write")?;
            std::fs::write(out.join("timing.csv"), summary.timing_csv()).at("write")?;
            let mut kv = KvFile::default();
            kv.set("runs", summary.runs.len());
            kv.set("failed", summary.runs.iter().filter(|r| r.error.is_some()).count());
            kv.set("mean_max", format!("{:.12e}", summary.mean_max));
            kv.set("std_max", format!("{:.12e}", summary.std_max));
            kv.set("p05", format!("{:.12e}", summary.p05));
            kv.set("p50", format!("{:.12e}", summary.p50));
            kv.set("p95", format!("{:.12e}", summary.p95));
            std::fs::write(out.join("summary.txt"), kv.to_text()).at("write")?;
            print!("{}", kv.to_text());
            timing(offline, online);
        }
        Command::Validate { suite, greens, stack, variation, mae_pct, max_pct, common } => {
            let ctx = Ctx { common, sc: Scenario::load(common.scenario.as_deref())? };
            ctx.sc.check_mode("validate")?;
            let dir = ctx.sc.require_path(suite, "suite")?;
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
            let st = load_stack(ctx.sc.path(stack, "stack").as_deref(), &common.overrides)?;
            let var = load_variation(ctx.sc.path(variation, "variation").as_deref(), &common.overrides)?;
            let c = var.fit_c(st.ambient);
            let k = var.conductivity(st.die().conductivity, st.n, st.pitch()).at("variation")?;
            let t = Instant::now();
            let gs = match ctx.sc.path(greens, "greens") {
                Some(g) => GreensSet::load(&g).at("load-greens")?,
                None => {
                    let leak = var.leakage(st.n, st.pitch()).at("variation")?;
                    let opts = CalibrationOptions { c, ..Default::default() };
                    let gs = GreensSet::calibrate(&st, &k, &leak, &opts).at("calibrate")?;
                    gs.save(&dir.join("greens")).at("write")?;
                    gs
                }
            };
            if gs.n != st.n {
                return Err(CliError::Config(format!("Green's set is {0}x{0}, stack is {1}x{1}", gs.n, st.n)));
            }
            let offline = ms(t);
            let mut online = 0.0;
            let mut failures = Vec::new();
            for case in scenario::suite(st.n, st.pitch()) {
                let cdir = dir.join(case.id);
                std::fs::create_dir_all(&cdir).at("write")?;
                // suite cases keep their own seeds; overrides still apply to the rest
                let cv = suite_variation(&case.variation, &var);
                let leak = cv.leakage(st.n, st.pitch()).at("variation")?;
                case.p_dyn.write(&cdir.join("power.map")).at("write")?;
                std::fs::write(cdir.join("variation.txt"), cv.to_kv().to_text()).at("write")?;
                let ref_path = cdir.join("reference.map");
                let reference = if ref_path.exists() {
                    FieldMap::read(&ref_path).at("reference")?
                } else {
                    let r = scenario::reference(&st, &k, &leak, c, &case.p_dyn).at("oracle")?;
                    r.rise.write(&ref_path).at("write")?;
                    r.rise
                };
                let g = gs.with_leakage(&leak).at("greens")?;
                let tt = Instant::now();
                let r = steady_profile(&g, &case.p_dyn, &leak.p_var, Composition::Full).at("steady")?;
                online += ms(tt);
                ctx.write_map(r.map(), &cdir, "rise")?;
                let rep = error_metrics(r.map(), &reference).at("validate")?;
                std::fs::write(cdir.join("report.txt"), rep.to_kv_text()).at("write")?;
                let ok = rep.pct_of_max_rise <= *mae_pct && rep.max_pct <= *max_pct;
                println!(
                    "{} {} mae_pct={:.4} max_pct={:.4} hotspot_hit={}",
                    case.id,
                    if ok { "PASS" } else { "FAIL" },
                    rep.pct_of_max_rise,
                    rep.max_pct,
                    rep.hotspot_hit
                );
                if !ok {
                    failures.push(case.id);
                }
            }
            timing(offline, online);
            if !failures.is_empty() {
                return Err(CliError::Validation(format!("outside error bounds: {}", failures.join(" "))));
            }
        }
    }
    Ok(())
}

/// Suite cases fix seed and sigma scaling; everything else comes from the
/// user's variation config.
fn suite_variation(case: &gtherm::VariationConfig, user: &gtherm::VariationConfig) -> gtherm::VariationConfig {
    let scale = case.params.sigma_sys / gtherm::VariationConfig::default().params.sigma_sys;
    user.scaled_sigma(scale).with_seed(case.params.seed)
}
