use std::path::PathBuf;
use std::process::Command;

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_poisop")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn so3_is_poisson() {
    let (code, out, _) = run(&["check-poisson", &data("so3.pv")]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some("POISSON: yes"));
}

#[test]
fn failing_jacobi_is_reported_with_its_residual() {
    let (code, out, _) = run(&["check-poisson", &data("not_poisson.pv")]);
    assert_eq!(code, 1);
    assert!(out.starts_with("POISSON: no\n"));
    assert!(out.contains("-2*∂x*∂y*∂z"), "{}", out);
    assert!(out.contains("jacobiator (x, y, z): -2"), "{}", out);
}

#[test]
fn symplectomorphism_graph_both_ways() {
    let (code, out, _) = run(&["check-graph", &data("symplecto.pv")]);
    assert_eq!(code, 0);
    assert!(out.contains("BRACKET PRESERVING: yes"));
    assert!(out.contains("GRAPH COISOTROPIC: yes"));
    let (code, out, _) = run(&["check-graph", &data("symplecto.pv"), "--flip"]);
    assert_eq!(code, 1);
    assert!(out.contains("GRAPH COISOTROPIC: no"));
    assert!(out.contains("witness: {x - u, y - v} ↦ 2"), "{}", out);
}

#[test]
fn coisotropic_verdicts() {
    for mode in ["strict", "transferred"] {
        let (code, out, _) = run(&["check-coisotropic", &data("lagrangian.pv"), "--mode", mode]);
        assert_eq!(code, 0, "{}", out);
        assert!(out.starts_with("COISOTROPIC: yes\n"));
    }
    let (code, out, _) = run(&["check-coisotropic", &data("point.pv")]);
    assert_eq!(code, 1);
    assert!(out.contains("{x, y} = 1 leaves the ideal"), "{}", out);
}

#[test]
fn mixed_structure_of_a_lagrangian() {
    let (code, out, _) = run(&["mixed-structure", &data("lagrangian.pv")]);
    assert_eq!(code, 0, "{}", out);
    assert!(out.starts_with("MIXED: yes\n"));
}

#[test]
fn schouten_of_two_structures() {
    let (code, out, _) = run(&["schouten", &data("pair.pv")]);
    assert_eq!(code, 0);
    assert_eq!(out, "[p, r] = 0\n");
}

#[test]
fn cobar_suite_passes() {
    let (code, out, _) = run(&["cobar-check", "coP", "1", "--cap", "4"]);
    assert_eq!(code, 0);
    assert!(out.contains("d²=0: PASS (all generators)"), "{}", out);
    let (code, _, _) = run(&["cobar-check", "coComm", "1", "--suspend", "-1", "--cap-arity", "4"]);
    assert_eq!(code, 0);
}

#[test]
fn brace_suite_passes() {
    let (code, out, _) = run(&["brace-check", "coP", "1", "--cap", "3"]);
    assert_eq!(code, 0, "{}", out);
}

#[test]
fn swiss_cheese_suite() {
    let (code, out, _) = run(&["sc-check", "0", "--cap", "3"]);
    assert_eq!(code, 0);
    assert!(out.contains("d²=0: PASS"));
    let (code, out, _) = run(&["sc-check", "1", "--curved", "--cap", "3"]);
    assert_eq!(code, 1);
    assert!(out.contains("type (8): d₂d₄ + d₄d₂        0"), "{}", out);
}

#[test]
fn center_ranks_match() {
    let (code, out, _) = run(&["center-ranks", "1", "--degree-window", "0..1"]);
    assert_eq!(code, 0, "{}", out);
    assert!(out.ends_with("ranks: PASS\n"));
}

#[test]
fn parse_errors_exit_two_with_line_numbers() {
    let (code, out, err) = run(&["check-poisson", &data("bad.pv")]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("line 4"), "{}", err);
    let (code, _, err) = run(&["check-poisson", &data("symplecto.pv")]);
    assert_eq!(code, 2);
    assert!(err.contains("task"), "{}", err);
    let (code, _, _) = run(&["cobar-check", "coFoo", "1"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn reports_are_byte_stable() {
    let dir = std::env::temp_dir().join(format!("poisop-report-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut outs = Vec::new();
    for i in 0..2 {
        let path = dir.join(format!("r{}.txt", i));
        let p = path.to_string_lossy().into_owned();
        let (_, out, _) = run(&["check-graph", &data("symplecto.pv"), "--flip", "--report", &p]);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), out);
        outs.push(out);
    }
    assert_eq!(outs[0], outs[1]);
    let a = run(&["sc-check", "1", "--curved", "--cap", "3"]).1;
    let b = run(&["sc-check", "1", "--curved", "--cap", "3"]).1;
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir).unwrap();
}
