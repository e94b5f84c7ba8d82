use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use rotflow::bryant::{
    build_zstar, check_asymptotics, choose_params, horizontal_transform, solve_soliton, unit_grid, verify_subsolution, ZTable,
};
use rotflow::cap::build_cap_table;
use rotflow::flow::{replay, run, write_atomic, RunConfig};
use rotflow::monitors::{anderson_chow_suite, hi_algebra_suite, MonitorReport};
use rotflow::profile::read_profile;

#[derive(Parser)]
#[command(name = "rotflow", version, about = "Rotationally symmetric Ricci flow with surgery")]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print only the final status line
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the configured initial data with surgery and monitors
    Run,
    /// Solve the steady soliton ODE and report its asymptotics
    Bryant {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 200.0)]
        r_max: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Choose barrier parameters, tabulate z_* and check subsolution residuals
    Barriers {
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Snapshot CSV to build the initial horizontal profile from; defaults to the soliton's own B(2u)
        #[arg(long, requires = "t_blowup")]
        snapshot: Option<PathBuf>,
        /// Blow-up time used with --snapshot
        #[arg(long)]
        t_blowup: Option<f64>,
    },
    /// Build and validate the standard cap table
    Cap {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2001)]
        grid: usize,
    },
    /// Randomized curvature-algebra suites
    Check {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
        dims: Vec<usize>,
    },
    /// Recompute monitors from a run directory and compare with the stored reports
    Replay {
        /// Run directory; defaults to --out
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.cmd {
        Cmd::Run => cmd_run(cli),
        Cmd::Bryant { n, r_max, tol } => cmd_bryant(cli, &out, *n, *r_max, *tol),
        Cmd::Barriers { n, snapshot, t_blowup } => cmd_barriers(cli, &out, *n, snapshot.as_deref(), *t_blowup),
        Cmd::Cap { n, grid } => cmd_cap(cli, &out, *n, *grid),
        Cmd::Check { samples, dims } => cmd_check(cli, *samples, dims),
        Cmd::Replay { dir } => cmd_replay(cli, dir.as_deref().unwrap_or(&out)),
    }
}

fn print_reports(reports: &[MonitorReport]) {
    for r in reports {
        let status = if r.pass { "pass" } else { "FAIL" };
        println!("  {:<22} {status}  margin {:+.4e}  samples {}", r.name, r.margin, r.samples);
    }
}

fn cmd_run(cli: &Cli) -> Result<u8> {
    let path = cli.config.as_ref().context("`run` needs --config <path>")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let outcome = run(&cfg)?;
    let s = &outcome.summary;
    if !cli.quiet {
        print_reports(&outcome.reports);
        println!("{}", serde_json::to_string_pretty(s)?);
    }
    println!(
        "exit {}: t = {:.6}, {} surgeries, {} alive, {} steps -> {}",
        s.exit_code,
        s.t_final,
        s.surgeries,
        s.alive.len(),
        s.steps,
        cfg.output_dir.display()
    );
    Ok(s.exit_code as u8)
}

fn cmd_bryant(cli: &Cli, out: &Path, n: usize, r_max: f64, tol: f64) -> Result<u8> {
    let bp = solve_soliton(n, r_max, tol)?;
    let asym = check_asymptotics(&bp);
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join(format!("bryant_n{n}.csv")), &bp.to_csv())?;
    let report = json!({
        "n": n,
        "nodes": bp.len(),
        "r_max": bp.r_max(),
        "R0": bp.r0_curvature,
        "first_integral_drift": bp.conservation_drift,
        "b2": bp.b2,
        "c2": bp.c2,
        "c2_spread": bp.c2_residual,
        "asymptotics": asym,
    });
    write_atomic(&out.join(format!("bryant_n{n}.json")), &serde_json::to_string_pretty(&report)?)?;
    if !cli.quiet {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    println!("bryant n = {n}: R(0) = {:.10}, asymptotics {}", bp.r0_curvature, if asym.pass { "settled" } else { "NOT settled" });
    Ok(if asym.pass { 0 } else { 2 })
}

fn cmd_barriers(cli: &Cli, out: &Path, n: usize, snapshot: Option<&Path>, t_blowup: Option<f64>) -> Result<u8> {
    let bp = solve_soliton(n, 200.0, 1e-11)?;
    let grid = unit_grid(1000);
    let z0 = match (snapshot, t_blowup) {
        (Some(path), Some(t)) => {
            let p = read_profile(path)?;
            if p.n != n {
                bail!("snapshot has n = {}, expected {n}", p.n);
            }
            horizontal_transform(&p, t)?.resample(&grid)?
        }
        _ => ZTable { z: grid.iter().map(|&u| bp.b_table.value(2.0 * u)).collect(), u: grid.clone() },
    };
    let params = choose_params(&z0, &bp)?;
    std::fs::create_dir_all(out)?;
    let mut tables = Vec::new();
    let mut tau = params.tau0;
    while tau <= params.tau_bar + 1e-9 {
        let zs = build_zstar(&params, &bp, tau)?;
        write_atomic(&out.join(format!("zstar_tau{tau:.2}.csv")), &zs.table.to_csv())?;
        tables.push(json!({
            "tau": tau, "u1": zs.u1, "u2": zs.u2,
            "cross_low": zs.cross_low, "cross_high": zs.cross_high,
            "ext_band_max": zs.ext_band_max,
        }));
        tau += 1.0;
    }
    let u: Vec<f64> = (1..=99).map(|k| 0.01 * k as f64).collect();
    let taus: Vec<f64> = (0..=10).map(|k| params.tau0 + 0.5 * k as f64).collect();
    let sub = verify_subsolution(&params, &bp, &u, &taus);
    let report = json!({ "params": params, "zstar": tables, "subsolution": sub });
    write_atomic(&out.join("barriers.json"), &serde_json::to_string_pretty(&report)?)?;
    if !cli.quiet {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    println!(
        "barriers n = {n}: A1 = {:.4}, A3 = {:.4}, D = {:.4}, tau0 = {:.2}; max residual {:+.3e} (interior) {:+.3e} (exterior)",
        params.a1, params.a3, params.d, params.tau0, sub.int_max, sub.ext_max
    );
    Ok(if sub.pass { 0 } else { 2 })
}

fn cmd_cap(cli: &Cli, out: &Path, n: usize, grid: usize) -> Result<u8> {
    let cap = build_cap_table(n, grid)?;
    let valid = cap.validate();
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join(format!("cap_n{n}.csv")), &cap.to_csv())?;
    if !cli.quiet {
        println!("{}", serde_json::to_string_pretty(&json!({ "n": n, "k": cap.k, "D": cap.d, "sigma": cap.sigma, "A": cap.a_const, "B": cap.b_const }))?);
    }
    match valid {
        Ok(()) => {
            println!("cap n = {n}: valid, sigma = {:.4}", cap.sigma);
            Ok(0)
        }
        Err(e) => {
            println!("cap n = {n}: INVALID: {e}");
            Ok(2)
        }
    }
}

fn cmd_check(cli: &Cli, samples: usize, dims: &[usize]) -> Result<u8> {
    let seed = cli.seed.unwrap_or(0);
    let mut reports = Vec::new();
    for &n in dims {
        let (identity, cases) = hi_algebra_suite(n, samples, seed);
        reports.push((n, identity));
        reports.push((n, cases));
        reports.push((n, anderson_chow_suite(n, samples, seed)));
    }
    let failed = reports.iter().filter(|r| !r.1.pass).count();
    if !cli.quiet {
        for (n, r) in &reports {
            println!("n = {n}: {:<24} {}  margin {:+.3e}  samples {}", r.name, if r.pass { "pass" } else { "FAIL" }, r.margin, r.samples);
        }
    }
    println!("check: {} suites, {failed} failed", reports.len());
    Ok(if failed == 0 { 0 } else { 2 })
}

fn cmd_replay(cli: &Cli, dir: &Path) -> Result<u8> {
    let reports = replay(dir)?;
    let stored: Option<Vec<MonitorReport>> = std::fs::read_to_string(dir.join("monitors.json"))
        .ok()
        .map(|s| serde_json::from_str(&s))
        .transpose()?;
    if !cli.quiet {
        print_reports(&reports);
    }
    let failed = reports.iter().any(|r| !r.pass);
    match stored {
        Some(s) if s != reports => {
            println!("replay: recomputed monitors differ from {}", dir.join("monitors.json").display());
            Ok(1)
        }
        Some(_) => {
            println!("replay: {} monitors reproduced exactly", reports.len());
            Ok(if failed { 2 } else { 0 })
        }
        None => {
            println!("replay: {} monitors recomputed (no stored reports to compare)", reports.len());
            Ok(if failed { 2 } else { 0 })
        }
    }
}
