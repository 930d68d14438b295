//! Shipped scenarios end to end: load, simulate, write, read back, replay
//! and verify.

use std::path::{Path, PathBuf};

use slidenav::controller::ModeKind;
use slidenav::feasibility;
use slidenav::scenario::Scenario;
use slidenav::sim::{self, Termination};
use slidenav::trace::{self, ReplayError, ReplayVerdict};
use slidenav::verify::{self, Verdict};

const SHIPPED: [&str; 5] = ["static_disc", "moving_disc", "fast_obstacle", "mistuned", "open_field"];

fn path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn load(name: &str) -> Scenario {
    Scenario::load(path(name)).unwrap()
}

#[test]
fn shipped_scenarios_validate_and_round_trip() {
    for name in SHIPPED {
        let sc = load(name);
        assert_eq!(sc.name, name);
        sc.validate().unwrap();
        let again = Scenario::parse(&sc.to_canonical_string()).unwrap();
        assert_eq!(again, sc, "{name}");
        assert_eq!(again.hash(), sc.hash());
    }
}

#[test]
fn shipped_obstacles_pass_map_validation() {
    for name in SHIPPED {
        let sc = load(name);
        let o = sc.build_obstacle().unwrap();
        o.validate(sc.run.horizon, 100, 50).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn open_field_is_a_straight_pursuit() {
    let sc = load("open_field");
    let out = sim::run(&sc).unwrap();
    assert!(out.reached_target());
    assert!(out.trace.samples.iter().all(|s| s.mode == ModeKind::Pursuit && s.input.u == 0.0));
    assert!(out.trace.samples.iter().all(|s| s.state.y.abs() < 1e-12));
    let report = verify::verify_trace(&out.trace).unwrap();
    assert!(matches!(report.verdict, Verdict::Inconclusive { .. }));
    assert!(report.identities_ok);
}

#[test]
fn static_disc_engages_once_and_stays_safe() {
    let sc = load("static_disc");
    let out = sim::run(&sc).unwrap();
    assert!(out.reached_target(), "{:?}", out.termination);
    assert_eq!(out.trace.launch_states().len(), 1);
    assert!(out.trace.min_distance() >= sc.controller.d_safe);
    let report = verify::verify_trace(&out.trace).unwrap();
    assert_eq!(report.verdict.passed(), Some(true));
    assert!(report.identities_ok);
}

#[test]
fn runs_are_deterministic_and_replay_exactly() {
    let mut sc = load("static_disc");
    sc.run.horizon = 12.0;
    let a = sim::run(&sc).unwrap().trace;
    let b = sim::run(&sc).unwrap().trace;
    assert_eq!(a, b);

    let text = trace::write_trace(&a);
    let back = trace::read_trace(&text).unwrap();
    assert_eq!(back, a);
    assert_eq!(trace::replay(&back, &sc).unwrap(), ReplayVerdict::Match);

    let mut other = sc.clone();
    other.run.dt = 5e-4;
    assert!(matches!(trace::replay(&back, &other), Err(ReplayError::DtMismatch { .. })));
}

#[test]
fn csv_mirrors_the_trace() {
    let mut sc = load("static_disc");
    sc.run.horizon = 2.0;
    let t = sim::run(&sc).unwrap().trace;
    let csv = trace::write_csv(&t);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[..3], ["t", "x", "y"]);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), t.samples.len());
    let last: Vec<f64> = rows.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last.len(), header.len());
    let s = t.samples.last().unwrap();
    assert_eq!((last[0], last[1], last[2]), (s.state.t, s.state.x, s.state.y));
}

#[test]
fn fast_obstacle_is_flagged_and_collides() {
    let sc = load("fast_obstacle");
    let out = sim::run(&sc).unwrap();
    assert!(matches!(out.termination, Termination::Collision { .. }));
    let report = feasibility::check_scenario(&sc, &out.trace.launch_states()).unwrap();
    assert!(!report.pass);
    assert!(!report.margins.normal.pass);
    assert!(report.margins.lambda_v >= 1.0);
}

#[test]
fn mistuned_gain_breaks_the_main_condition() {
    let sc = load("mistuned");
    let out = sim::run(&sc).unwrap();
    let report = feasibility::check_scenario(&sc, &out.trace.launch_states()).unwrap();
    assert!(report.margins.pass);
    assert!(!report.main_condition.first_pass);
    assert!(report.main_condition.v_star > report.z_star.z_star);
    assert!(report.failures.iter().any(|f| f == feasibility::GAIN_INEQUALITY_1));
}

#[test]
fn moving_disc_meets_the_obstacle_assumptions() {
    let mut sc = load("moving_disc");
    // A coarser time grid keeps this quick; the acceptance suite uses the shipped one.
    sc.check.grid_dt = 1.0;
    let report = feasibility::check_scenario(&sc, &[]).unwrap();
    assert!(report.curvature.pass);
    assert!(report.margins.pass, "{:?}", report.failures);
    assert!(report.main_condition.pass, "{:?}", report.main_condition);
    assert!(report.margins.lambda_v > 0.0);
}
