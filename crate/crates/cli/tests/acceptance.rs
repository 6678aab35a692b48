//! Acceptance criteria 1-9, run one after another so the wall-clock limits
//! are measured without competing work. Prints one PASS/FAIL line each.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

use loop_morse::index::normalization_table;
use loop_morse_cli::config::RunConfig;
use loop_morse_cli::pipeline::{self, Stage};
use loop_morse_cli::report::Report;

const SYSTEMS: [&str; 3] = ["pendulum.json", "flat_circle.json", "torus2.json"];
const FREDHOLM_EXPECTED: [i64; 13] = [-1, 1, -1, 1, -1, 1, 0, 0, 0, 1, -1, 2, -2];
const KERNEL_ANGLE: f64 = 1e-3;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).unwrap()
}

fn run_stage(name: &str, stage: Stage) -> Report {
    pipeline::run(&load(name), stage).unwrap_or_else(|e| panic!("{name}: {e}")).report
}

fn binary(args: &[&str], config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_loop-morse"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

fn check_passed(r: &Report, name: &str) -> bool {
    r.checks.iter().any(|c| c.name == name && c.passed)
}

fn detail(r: &Report, name: &str) -> String {
    r.checks.iter().find(|c| c.name == name).map_or("missing".into(), |c| c.detail.clone())
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn limit(ok: bool, elapsed: Duration, max: Duration, detail: String) -> Outcome {
    let within = elapsed < max;
    Outcome { passed: ok && within, detail: format!("{detail}; {:.1} s (limit {} s)", elapsed.as_secs_f64(), max.as_secs()) }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let table = normalization_table().unwrap();
    let bad: Vec<String> = table.iter().filter(|r| !r.holds()).map(|r| format!("{} gave {}", r.case, r.computed)).collect();
    let cz = table.iter().filter(|r| r.case.starts_with("cz")).count();
    let rmi = table.len() - cz;
    limit(
        bad.is_empty() && cz >= 10 && rmi >= 3,
        start.elapsed(),
        Duration::from_secs(1),
        if bad.is_empty() { format!("{cz} Conley-Zehnder and {rmi} Maslov values exact") } else { bad.join("; ") },
    )
}

fn criterion_2(dir: &Path) -> Outcome {
    let start = Instant::now();
    let out = dir.join("fredholm");
    let code = binary(&["fredholm"], &config_path("fredholm.json"), &out);
    let elapsed = start.elapsed();
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let rows = r["fredholm"].as_array().unwrap();
    let mut problems = Vec::new();
    if rows.len() != FREDHOLM_EXPECTED.len() {
        problems.push(format!("{} operators", rows.len()));
    }
    for (row, want) in rows.iter().zip(FREDHOLM_EXPECTED) {
        let name = row["name"].as_str().unwrap();
        if row["predicted"].as_i64() != Some(want) || row["index"].as_i64() != Some(want) {
            problems.push(format!("{name}: predicted {} numeric {} expected {want}", row["predicted"], row["index"]));
        }
        if row["stable"] != Value::Bool(true) {
            problems.push(format!("{name}: unstable under refinement"));
        }
        if let Some(a) = row["kernel_angle"].as_f64() {
            if a >= KERNEL_ANGLE {
                problems.push(format!("{name}: kernel angle {a:.2e}"));
            }
        }
    }
    limit(
        code == 0 && problems.is_empty(),
        elapsed,
        Duration::from_secs(120),
        if problems.is_empty() { format!("{} operators, exit {code}", rows.len()) } else { problems.join("; ") },
    )
}

fn sorted_indices(r: &Report, class: Option<&[i64]>) -> Vec<usize> {
    let mut v: Vec<usize> =
        r.generators.iter().filter(|g| class.is_none_or(|c| g.class == c)).map(|g| g.morse_index).collect();
    v.sort_unstable();
    v
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let reports: Vec<Report> = SYSTEMS.iter().map(|s| run_stage(s, Stage::Indices)).collect();
    let elapsed = start.elapsed();
    let mut problems = Vec::new();
    for (name, r) in SYSTEMS.iter().zip(&reports) {
        for g in &r.generators {
            if g.maslov != Some(g.morse_index as i64) {
                problems.push(format!("{name}: generator {} has m = {} and mu = {:?}", g.id, g.morse_index, g.maslov));
            }
        }
    }
    if sorted_indices(&reports[0], None) != [0, 1] {
        problems.push(format!("pendulum indices {:?}", sorted_indices(&reports[0], None)));
    }
    let circle = &reports[1];
    let mut classes: Vec<Vec<i64>> = circle.generators.iter().map(|g| g.class.clone()).collect();
    classes.dedup();
    if classes.len() < 5 || classes.iter().any(|c| sorted_indices(circle, Some(c)) != [0]) {
        problems.push(format!("flat circle: {} classes, indices {:?}", classes.len(), sorted_indices(circle, None)));
    }
    if sorted_indices(&reports[2], None) != [0, 1, 1, 2] {
        problems.push(format!("torus indices {:?}", sorted_indices(&reports[2], None)));
    }
    let count: usize = reports.iter().map(|r| r.generators.len()).sum();
    limit(
        problems.is_empty(),
        elapsed,
        Duration::from_secs(120),
        if problems.is_empty() { format!("m = mu on {count} generators") } else { problems.join("; ") },
    )
}

fn criterion_4(full: &[Report]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in SYSTEMS.iter().zip(full) {
        ok &= r.config.checks.duality_loops >= 1000;
        ok &= check_passed(r, "duality gap is nonnegative") && check_passed(r, "duality gap vanishes on Legendre lifts");
        ok &= r.generators.iter().all(|g| g.action_gap < 1e-6);
        parts.push(format!("{name}: {}", detail(r, "duality gap is nonnegative")));
    }
    Outcome { passed: ok, detail: parts.join("; ") }
}

fn criterion_5(full: &[Report]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in SYSTEMS.iter().zip(full) {
        ok &= r.config.checks.variations >= 100 && check_passed(r, "second variation of A is bounded by that of E");
        parts.push(format!("{name}: {}", detail(r, "second variation of A is bounded by that of E")));
    }
    Outcome { passed: ok, detail: parts.join("; ") }
}

fn criterion_6(full: &[Report], elapsed: Duration) -> Outcome {
    let mut problems = Vec::new();
    for (name, r) in SYSTEMS.iter().zip(full) {
        for check in [
            "boundary squares to zero",
            "flow lines decrease the action",
            "flow lines stay in their homotopy class",
            "homology matches the catalog",
        ] {
            if !check_passed(r, check) {
                problems.push(format!("{name}: {check}: {}", detail(r, check)));
            }
        }
        if r.config.resolution.n_t != 64 {
            problems.push(format!("{name}: N_t = {}", r.config.resolution.n_t));
        }
    }
    let betti = |r: &Report| r.complex.iter().map(|c| c.betti.clone()).collect::<Vec<_>>();
    if betti(&full[0]) != [vec![1, 1]] {
        problems.push(format!("pendulum Betti {:?}", betti(&full[0])));
    }
    if betti(&full[1]).len() < 5 || betti(&full[1]).iter().any(|b| b != &[1]) {
        problems.push(format!("flat circle Betti {:?}", betti(&full[1])));
    }
    if betti(&full[2]) != [vec![1, 2, 1]] {
        problems.push(format!("torus Betti {:?}", betti(&full[2])));
    }
    // the bottom loop (index 1) flows to the top loop (index 0) along two
    // lines of opposite sign
    let pendulum = &full[0];
    let pairs: Vec<_> = pendulum.complex.iter().flat_map(|c| c.pairs.iter()).collect();
    let realized = pairs.len() == 1 && {
        let p = pairs[0];
        p.count == 0
            && p.lines == 2
            && p.signs.iter().sum::<i32>() == 0
            && pendulum.generators[p.source].morse_index == 1
            && pendulum.generators[p.target].morse_index == 0
    };
    if !realized {
        problems.push(format!("pendulum connecting orbits {pairs:?}"));
    }
    limit(
        problems.is_empty(),
        elapsed,
        Duration::from_secs(600),
        if problems.is_empty() {
            format!("Betti {:?}, {:?}, {:?}", betti(&full[0]), betti(&full[1]), betti(&full[2]))
        } else {
            problems.join("; ")
        },
    )
}

fn criterion_7(full: &[Report]) -> Outcome {
    let rows: Vec<_> = full[0].complex.iter().flat_map(|c| c.sublevels.iter()).collect();
    let ok = rows.iter().any(|s| s.below == 0.25 && s.betti == [1]) && rows.iter().all(|s| Some(&s.betti) == s.expected_betti.as_ref());
    Outcome { passed: ok, detail: format!("pendulum sublevels {:?}", rows.iter().map(|s| (s.below, &s.betti)).collect::<Vec<_>>()) }
}

fn criterion_8(full: &[Report]) -> Outcome {
    let mut ok = true;
    for r in full {
        ok &= (r.config.flow.metric_perturbation - 0.1).abs() < 1e-12;
        ok &= check_passed(r, "homology is independent of the flow metric");
        ok &= !r.complex.is_empty() && r.complex.iter().all(|c| c.perturbed_betti.as_ref() == Some(&c.betti));
    }
    Outcome { passed: ok, detail: "metric perturbed by 10%, Betti tables compared class by class".into() }
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["pendulum.json", "torus2.json"] {
        let cfg = config_path(name);
        let (a, b) = (dir.join(format!("{name}.1")), dir.join(format!("{name}.4")));
        let codes = (binary(&["verify-all", "--threads", "1"], &cfg, &a), binary(&["verify-all", "--threads", "4"], &cfg, &b));
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        let same = !ta.is_empty() && ta == tb;
        ok &= same && codes == (0, 0);
        parts.push(format!("{name}: {} files, identical = {same}, exit codes {codes:?}", ta.len()));
    }
    Outcome { passed: ok, detail: parts.join("; ") }
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    let mut record = |n: usize, o: Outcome| {
        println!("criterion {n}: {} {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o.passed));
    };
    record(1, criterion_1());
    record(2, criterion_2(dir.path()));
    record(3, criterion_3());
    let start = Instant::now();
    let full: Vec<Report> = SYSTEMS.iter().map(|s| run_stage(s, Stage::VerifyAll)).collect();
    let elapsed = start.elapsed();
    record(4, criterion_4(&full));
    record(5, criterion_5(&full));
    record(6, criterion_6(&full, elapsed));
    record(7, criterion_7(&full));
    record(8, criterion_8(&full));
    record(9, criterion_9(dir.path()));
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
