use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde_json::{json, Value};

use frwcap::bench::{bench_scaling, BenchOptions};
use frwcap::compare::{compare_row, maxwell_check};
use frwcap::report::{load_config, strip_timings, CommandEcho, Report};
use frwcap::suites::{run_validation, ValidateOptions};
use frwcap_core::engine::{extract_with_cache, CapacitanceResult, Config, Mode, Terminal};
use frwcap_core::geometry::{parse_structure_with_margin, Structure};
use frwcap_core::oracle::{reference_row, OracleOptions};
use frwcap_core::sgf::SgfCache;

#[derive(Parser, Debug)]
#[command(name = "frwcap", version, about = "Floating random walk capacitance extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; RAYON_NUM_THREADS applies when unset.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract the master conductor's capacitance row.
    Extract(EngineArgs),
    /// Check MicroWalk and the SGF solver against exact lattice quantities.
    ValidateSgf(ValidateArgs),
    /// Time MicroWalk transits and FDM solves across lattice sizes.
    BenchScaling(BenchArgs),
    /// Extract and compare with the full-domain finite-difference reference.
    OracleCompare(CompareArgs),
}

#[derive(Args, Debug, Default)]
struct EngineArgs {
    /// Structure file (JSON).
    #[arg(long)]
    structure: Option<PathBuf>,
    /// Engine configuration: a bare config or an earlier report to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lattice cells per cube edge [default: 24].
    #[arg(long)]
    grid_n: Option<usize>,
    /// MicroWalk-E cube expansion factor [default: 5].
    #[arg(long)]
    expansion: Option<f64>,
    /// fdm, mw, mwe, hybrid-mw or hybrid-mwe [default: hybrid-mwe].
    #[arg(long)]
    mode: Option<Mode>,
    /// Relative standard error target [default: 0.01].
    #[arg(long)]
    tol: Option<f64>,
    /// [default: 10000]
    #[arg(long)]
    min_walks: Option<u64>,
    /// [default: 10000000]
    #[arg(long)]
    max_walks: Option<u64>,
    /// Walks per batch between convergence checks [default: 1024].
    #[arg(long)]
    batch: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// SGF cache file, loaded if present and rewritten afterwards.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Leave wall-clock timings out of the report.
    #[arg(long)]
    omit_timings: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    grids: usize,
    /// MicroWalk exits per grid.
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 10)]
    step_grids: usize,
    #[arg(long, default_value_t = 100_000)]
    step_samples: u64,
    #[arg(long, default_value_t = 0.01)]
    tv_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 32)]
    fdm_max_n: usize,
    /// Random Exp(0.1) dielectric blocks; 0 keeps the permittivity uniform.
    #[arg(long, default_value_t = 0)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Reference cells across the thinnest conductor.
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    /// Largest acceptable average relative error.
    #[arg(long, default_value_t = 0.05)]
    max_err: f64,
}

enum Failure {
    Usage(String),
    Threshold,
}

impl From<frwcap_core::Error> for Failure {
    fn from(e: frwcap_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl EngineArgs {
    fn resolve(&self) -> Result<(Config, PathBuf), Failure> {
        let (mut cfg, echoed) = match &self.config {
            Some(p) => load_config(p)?,
            None => (Config::default(), None),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag { cfg.$field = v; }
            )*};
        }
        set!(grid_n => grid_n, expansion => expansion, mode => mode, tol => rel_std_tol,
             min_walks => min_walks, max_walks => max_walks, batch => batch, seed => seed);
        cfg.validate()?;
        let structure = self
            .structure
            .clone()
            .or(echoed.map(PathBuf::from))
            .ok_or_else(|| Failure::Usage("--structure is required".into()))?;
        Ok((cfg, structure))
    }
}

fn load_structure(path: &Path, cfg: &Config) -> Result<Structure, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_structure_with_margin(&text, cfg.world_margin).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run_extract(args: &EngineArgs) -> Result<(CapacitanceResult, Config, PathBuf), Failure> {
    let (cfg, path) = args.resolve()?;
    let s = load_structure(&path, &cfg)?;
    let cache = SgfCache::with_capacity(cfg.grid_n, cfg.cache_capacity);
    if let Some(p) = args.cache.as_deref().filter(|p| p.exists()) {
        match cache.load(p) {
            Ok(k) => log::info!("loaded {k} cached SGFs from {}", p.display()),
            Err(e) => log::warn!("ignoring cache {}: {e}", p.display()),
        }
    }
    let result = extract_with_cache(&s, &cfg, &cache)?;
    if let Some(p) = &args.cache {
        cache.save(p)?;
    }
    Ok((result, cfg, path))
}

fn terminal_name(t: Terminal) -> String {
    match t {
        Terminal::Conductor(id) => format!("conductor {id}"),
        Terminal::Ground => "ground".into(),
    }
}

fn summarize(r: &CapacitanceResult) {
    eprintln!("master conductor {}", r.master);
    for e in &r.entries {
        eprintln!("  {:<14} {:>13.6e} F  +- {:.2e}", terminal_name(e.terminal), e.value, e.std_err);
    }
    let d = &r.dispatch;
    let pct = |a: u64, b: u64| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    let (f, s) = (d.first.total(), d.subsequent.total());
    eprintln!(
        "  {} walks, converged: {}, first hops {:.1}% stratified, later hops {:.1}% cached",
        r.walks,
        r.converged,
        pct(d.first.stratified, f),
        pct(d.subsequent.cached_stratified, s)
    );
    eprintln!("  T_MW {:.2} s, T_total {:.2} s", r.timings.micro_walk_s, r.timings.total_s);
}

fn result_value(r: &CapacitanceResult, omit_timings: bool) -> Value {
    let mut v = json!({ "capacitance": r, "maxwell": maxwell_check(r, 3.0) });
    if omit_timings {
        strip_timings(&mut v);
    }
    v
}

fn run(cli: &Cli, echo: CommandEcho) -> Result<Report, Failure> {
    match &cli.command {
        Command::Extract(args) => {
            let (result, cfg, path) = run_extract(args)?;
            summarize(&result);
            let mut report = Report::new(echo, result_value(&result, args.omit_timings));
            report.structure = Some(path.display().to_string());
            report.config = Some(cfg);
            report.passed = result.converged;
            Ok(report)
        }
        Command::ValidateSgf(a) => {
            let opts = ValidateOptions {
                n: a.n,
                grids: a.grids,
                samples: a.samples,
                step_grids: a.step_grids,
                step_samples: a.step_samples,
                tv_limit: a.tv_limit,
                seed: a.seed,
                ..ValidateOptions::default()
            };
            let v = run_validation(&opts)?;
            for c in &v.checks {
                eprintln!("  {:<32} {:>12.4e}  limit {:.1e}  {}", c.name, c.value, c.limit, if c.passed { "ok" } else { "FAIL" });
            }
            let passed = v.passed;
            let mut report = Report::new(echo, serde_json::to_value(v).expect("serializable"));
            report.passed = passed;
            Ok(report)
        }
        Command::BenchScaling(a) => {
            let opts = BenchOptions {
                n_list: a.n_list.clone(),
                reps: a.reps,
                fdm_max_n: a.fdm_max_n,
                blocks: a.blocks,
                seed: a.seed,
                ..BenchOptions::default()
            };
            let b = bench_scaling(&opts)?;
            eprintln!("  {:>4} {:>12} {:>14} {:>14} {:>14} {:>9}", "N", "E(tau)", "MW s/transit", "FDM s/transit", "FDM s/SGF", "speedup");
            for r in &b.rows {
                eprintln!(
                    "  {:>4} {:>12.2} {:>14.3e} {:>14} {:>14} {:>9}",
                    r.n,
                    r.expected_steps,
                    r.microwalk_s,
                    r.fdm_row_s.map_or("-".into(), |t| format!("{t:.3e}")),
                    r.fdm_sgf_s.map_or("-".into(), |t| format!("{t:.3e}")),
                    r.speedup.map_or("-".into(), |s| format!("{s:.1}"))
                );
            }
            let show = |s: Option<f64>| s.map_or("-".into(), |v| format!("{v:.3}"));
            eprintln!(
                "  slopes: E(tau) {}, MicroWalk {}, FDM {}",
                show(b.slope_expected_steps),
                show(b.slope_microwalk),
                show(b.slope_fdm)
            );
            Ok(Report::new(echo, serde_json::to_value(b).expect("serializable")))
        }
        Command::OracleCompare(a) => {
            let (result, cfg, path) = run_extract(&a.engine)?;
            summarize(&result);
            let s = load_structure(&path, &cfg)?;
            let opts = OracleOptions { resolution: a.resolution, ..OracleOptions::default() };
            let reference = reference_row(&s, &opts)?;
            let cmp = compare_row(&result, &reference, a.max_err)?;
            for e in &cmp.entries {
                eprintln!(
                    "  conductor {:<4} frw {:>13.6e}  reference {:>13.6e}  rel err {:.2}%",
                    e.id,
                    e.value,
                    e.reference,
                    100.0 * e.rel_err
                );
            }
            eprintln!("  Err_avg {:.3}% (limit {:.1}%)", 100.0 * cmp.err_avg, 100.0 * cmp.max_err);
            let mut results = result_value(&result, a.engine.omit_timings);
            results["reference"] = json!({
                "resolution": reference.resolution,
                "cells": reference.cells,
                "residual": reference.residual,
                "row": reference.row(result.master),
            });
            let passed = cmp.passed;
            results["comparison"] = serde_json::to_value(cmp).expect("serializable");
            let mut report = Report::new(echo, results);
            report.structure = Some(path.display().to_string());
            report.config = Some(cfg);
            report.passed = passed;
            Ok(report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let name = match &cli.command {
        Command::Extract(_) => "extract",
        Command::ValidateSgf(_) => "validate-sgf",
        Command::BenchScaling(_) => "bench-scaling",
        Command::OracleCompare(_) => "oracle-compare",
    };
    let echo = CommandEcho { name: name.into(), args: std::env::args().skip(1).collect() };
    let outcome = run(&cli, echo).and_then(|report| {
        report.emit(cli.out.as_deref())?;
        if report.passed {
            Ok(())
        } else {
            Err(Failure::Threshold)
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Threshold) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_defaults_match_config_defaults() {
        let args = EngineArgs { structure: Some("x.json".into()), ..EngineArgs::default() };
        assert_eq!(args.resolve().ok().unwrap().0, Config::default());
    }

    #[test]
    fn flags_override() {
        let cli = Cli::try_parse_from([
            "frwcap", "extract", "--structure", "a.json", "--mode", "hybrid-mw", "--grid-n", "12", "--tol", "0.02",
        ])
        .unwrap();
        let Command::Extract(a) = cli.command else { panic!() };
        let cfg = a.resolve().ok().unwrap().0;
        assert_eq!((cfg.mode, cfg.grid_n, cfg.rel_std_tol), (Mode::HybridMw, 12, 0.02));
        assert!(Cli::try_parse_from(["frwcap", "extract", "--mode", "bogus"]).is_err());
    }
}
