//! `slidenav`: run, check and verify navigation scenarios.
//!
//! Exit codes: 0 ok, 1 usage or parse error, 2 infeasible, 3 verdict
//! failure, 4 inconclusive.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use slidenav::controller::SignVariant;
use slidenav::feasibility::{self, FeasibilityReport};
use slidenav::scenario::Scenario;
use slidenav::sim::{self, RunOutcome, Trace};
use slidenav::trace;
use slidenav::verify::{self, Verdict, VerifyReport};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VERDICT: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Parser)]
#[command(name = "slidenav", version, about = "Sliding-mode obstacle avoidance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace, CSV, summary and SVG.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the obstacle assumptions and gain conditions.
    Check {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Print the largest admissible delta for the configured gamma.
        #[arg(long)]
        suggest_delta: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Verify the avoidance guarantees and kinematic identities on a trace.
    Verify {
        trace: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run, check and verify several scenarios in parallel.
    Batch {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Copy)]
struct Overrides {
    /// Integration step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Run horizon (s).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
}

#[derive(ValueEnum, Clone, Copy)]
enum Variant {
    Normal,
    Reversed,
}

fn load_scenario(path: &Path, o: Overrides) -> Result<Scenario> {
    let mut sc = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dt) = o.dt {
        sc.run.dt = dt;
    }
    if let Some(h) = o.horizon {
        sc.run.horizon = h;
    }
    if let Some(v) = o.variant {
        sc.controller.sign_variant = match v {
            Variant::Normal => SignVariant::Normal,
            Variant::Reversed => SignVariant::Reversed,
        };
    }
    sc.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(sc)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn summary_json(outcome: &RunOutcome, sc: &Scenario) -> serde_json::Value {
    let t = &outcome.trace;
    let engagements = t.launch_states().len();
    json!({
        "scenario": sc.name,
        "hash": sc.hash(),
        "dt": sc.run.dt,
        "horizon": sc.run.horizon,
        "termination": t.termination,
        "reached_target": outcome.reached_target(),
        "steps": t.samples.len(),
        "min_distance": t.min_distance(),
        "avoidance_engagements": engagements,
        "events": t.events,
    })
}

fn cmd_run(path: &Path, o: Overrides, out: &Path) -> Result<u8> {
    let sc = load_scenario(path, o)?;
    let outcome = sim::run(&sc)?;
    fs::create_dir_all(out)?;
    let stem = out.join(&sc.name);
    let trace_path = stem.with_extension("trace");
    trace::save_trace(&outcome.trace, &trace_path)?;
    write_file(&stem.with_extension("csv"), trace::write_csv(&outcome.trace))?;
    let summary = summary_json(&outcome, &sc);
    write_file(&stem.with_extension("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let obstacle = sc.build_obstacle()?;
    write_file(&stem.with_extension("svg"), svg::render(&outcome.trace, &obstacle))?;
    println!(
        "{}: {:?}, min d = {:.6} m, {} steps; trace {}",
        sc.name,
        outcome.termination,
        outcome.trace.min_distance(),
        outcome.trace.samples.len(),
        trace_path.display()
    );
    Ok(EXIT_OK)
}

/// Feasibility report, with launching motions harvested from a simulation.
fn feasibility_report(sc: &Scenario) -> Result<FeasibilityReport> {
    let launches = match sim::run(sc) {
        Ok(outcome) => outcome.trace.launch_states(),
        Err(e) => {
            eprintln!("warning: simulation for launch states failed: {e}");
            Vec::new()
        }
    };
    Ok(feasibility::check_scenario(sc, &launches)?)
}

fn print_check(r: &FeasibilityReport) {
    let m = &r.margins;
    println!("{}: feasibility {}", r.scenario, if r.pass { "PASS" } else { "FAIL" });
    println!("  grid: {} s-samples x {} t-samples; {}", r.grid_s, r.grid_t, r.horizon_note);
    println!("  curvature margin {:.6} (floor {})", r.curvature.margin, r.curvature.margin_floor);
    println!(
        "  lambda_v {:.6}  lambda_a {:.6}  eps_v {:.6}  eta_v {:.6}  eta_a {:.6}",
        m.lambda_v, m.lambda_a, m.eps_v, m.eta_v, m.eta_a
    );
    println!("  z_star {:.6} (cap {:.6})", r.z_star.z_star, r.z_star.cap);
    let mc = &r.main_condition;
    println!(
        "  v_star {:.6}: first slack {:.6}, second lhs {:.6}",
        mc.v_star, mc.first_slack, mc.second_lhs
    );
    println!("  {}", r.launches.note);
    for f in &r.failures {
        println!("  violated: {f}");
    }
    for ineq in [&m.normal, &m.acceleration, &m.tangential] {
        if ineq.pass {
            continue;
        }
        println!("  {}: worst slack {:.6}", ineq.name, ineq.worst_slack);
        if let Some(p) = &ineq.worst {
            print!("    worst at s={:.4} t={:.3}", p.s, p.t);
            if p.d.is_finite() {
                print!(" d={} sign={}", p.d, p.sign);
            }
            println!();
        }
    }
    if let Some(p) = r.curvature.worst.filter(|_| !r.curvature.pass) {
        println!("  curvature worst at s={:.4} t={:.3}", p.s, p.t);
    }
}

fn cmd_check(path: &Path, o: Overrides, suggest: bool, out: &Path) -> Result<u8> {
    let sc = load_scenario(path, o)?;
    let report = feasibility_report(&sc)?;
    fs::create_dir_all(out)?;
    write_file(&out.join(format!("{}.check.json", sc.name)), serde_json::to_string_pretty(&report)?)?;
    print_check(&report);
    if suggest {
        println!(
            "suggested delta: {:.6} (supremum {:.6} for gamma = {})",
            report.main_condition.suggested_delta, report.main_condition.delta_sup, sc.controller.gamma
        );
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn verify_exit(report: &VerifyReport) -> u8 {
    match &report.verdict {
        Verdict::Inconclusive { .. } => EXIT_INCONCLUSIVE,
        Verdict::Complete(v) if v.pass && report.identities_ok => EXIT_OK,
        Verdict::Complete(_) => EXIT_VERDICT,
    }
}

fn print_verify(r: &VerifyReport) {
    match &r.verdict {
        Verdict::Inconclusive { reason } => println!("{}: inconclusive ({reason})", r.scenario),
        Verdict::Complete(v) => {
            let flag = |b: bool| if b { "ok" } else { "FAILED" };
            println!("{}: verdict {}", r.scenario, if v.pass { "PASS" } else { "FAIL" });
            println!("  capture at t = {:.3} s (chatter estimate {:.3e})", v.t_capture, v.chatter);
            println!("  safety {}: min d {:.6} >= d_safe {}", flag(v.safety_ok), v.min_d, v.d_safe);
            println!("  corridor {}: d in [{:.6}, {:.6}] after capture", flag(v.corridor_ok), v.corridor_min, v.corridor_max);
            println!(
                "  convergence {}: |d - d0| = {:.3e} (tol {:.3e}), |d_dot| = {:.3e} (tol {:.3e})",
                flag(v.convergence_ok),
                v.final_d_error,
                v.tol_d_error,
                v.final_d_dot.abs(),
                v.tol_d_dot
            );
            println!("  overtaking {}: s_dot in [{:.6}, {:.6}]", flag(v.overtaking_ok), v.s_dot_min, v.s_dot_max);
            if let Some(f) = &v.exp_fit {
                println!("  exponential rate {:.4} vs gamma {} ({} points)", f.rate, f.gamma, f.points);
            }
        }
    }
    for res in [&r.velocity, &r.ddot, &r.sdot, &r.speed] {
        println!(
            "  {} {}: max residual {:.3e} (tol {:.0e}), {} evaluated, {} excluded",
            res.name,
            if res.pass { "ok" } else { "FAILED" },
            res.max,
            res.tolerance,
            res.evaluated,
            res.excluded
        );
    }
}

fn cmd_verify(path: &Path, out: &Path) -> Result<u8> {
    let t = trace::load_trace(path).with_context(|| format!("loading {}", path.display()))?;
    let report = verify::verify_trace(&t)?;
    fs::create_dir_all(out)?;
    write_file(&out.join(format!("{}.verify.json", report.scenario)), serde_json::to_string_pretty(&report)?)?;
    print_verify(&report);
    Ok(verify_exit(&report))
}

struct BatchRow {
    name: String,
    code: u8,
    line: String,
}

fn batch_one(path: &Path, o: Overrides, out: &Path) -> BatchRow {
    let name = path.display().to_string();
    let result = (|| -> Result<BatchRow> {
        let sc = load_scenario(path, o)?;
        let outcome = sim::run(&sc)?;
        let tr: &Trace = &outcome.trace;
        trace::save_trace(tr, out.join(format!("{}.trace", sc.name)))?;
        let check = feasibility::check_scenario(&sc, &tr.launch_states())?;
        let verify = verify::verify_trace(tr)?;
        let vcode = verify_exit(&verify);
        let code = if !check.pass { EXIT_INFEASIBLE } else { vcode };
        Ok(BatchRow {
            name: sc.name.clone(),
            code,
            line: format!(
                "{:<16} {:<32} feasibility {:<4} verdict {:<12} min d {:.4}",
                sc.name,
                format!("{:?}", outcome.termination),
                if check.pass { "pass" } else { "FAIL" },
                match verify.verdict.passed() {
                    Some(true) if verify.identities_ok => "pass",
                    Some(_) => "FAIL",
                    None => "inconclusive",
                },
                tr.min_distance()
            ),
        })
    })();
    result.unwrap_or_else(|e| BatchRow { name: name.clone(), code: EXIT_USAGE, line: format!("{name}: error: {}", error_message(&e)) })
}

fn cmd_batch(paths: &[PathBuf], o: Overrides, out: &Path) -> Result<u8> {
    fs::create_dir_all(out)?;
    let rows: Vec<BatchRow> = paths.par_iter().map(|p| batch_one(p, o, out)).collect();
    for r in &rows {
        println!("{}", r.line);
    }
    let summary: Vec<_> = rows.iter().map(|r| json!({"scenario": r.name, "exit": r.code})).collect();
    write_file(&out.join("batch.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(rows.iter().map(|r| r.code).max().unwrap_or(EXIT_OK))
}

/// Error chain joined with `: `, skipping causes already quoted by their parent.
fn error_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { scenario, overrides, out } => cmd_run(scenario, *overrides, out),
        Command::Check { scenario, overrides, suggest_delta, out } => cmd_check(scenario, *overrides, *suggest_delta, out),
        Command::Verify { trace, out } => cmd_verify(trace, out),
        Command::Batch { scenarios, overrides, out } => cmd_batch(scenarios, *overrides, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", error_message(&e));
            ExitCode::from(EXIT_USAGE)
        }
    }
}
