//! Report documents and the files they are written to.
//!
//! Everything written here is a pure function of the configuration and the
//! seed: no timings, thread counts or paths.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use loop_morse::orbits::Quarantined;

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorRow {
    pub id: usize,
    pub class: Vec<i64>,
    pub periodic: bool,
    pub action: f64,
    pub lift_action: f64,
    pub action_gap: f64,
    pub morse_index: usize,
    pub maslov: Option<i64>,
    pub nondeg_margin: f64,
    pub residual: f64,
    pub hamilton_residual: f64,
    /// Morse index after each extra halving of the step.
    pub refined_indices: Vec<usize>,
}

/// The lift correspondence as a matrix: rows are generators sorted by `E`,
/// columns are their Legendre lifts sorted by `A`.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub class: Vec<i64>,
    pub periodic: bool,
    pub rows: Vec<usize>,
    pub columns: Vec<usize>,
    pub matrix: Vec<Vec<i64>>,
    pub lower_triangular: bool,
    pub unit_diagonal: bool,
    pub max_action_gap: f64,
    pub indices_equal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCount {
    pub source: usize,
    pub target: usize,
    pub lines: usize,
    pub signs: Vec<i32>,
    pub count: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SublevelRow {
    pub below: f64,
    pub betti: Vec<usize>,
    pub expected_betti: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: Vec<i64>,
    pub periodic: bool,
    /// Generator ids by degree.
    pub graded: Vec<Vec<usize>>,
    pub boundary: Vec<Vec<Vec<i64>>>,
    pub boundary_files: Vec<String>,
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<String>>,
    pub expected_betti: Option<Vec<usize>>,
    pub perturbed_betti: Option<Vec<usize>>,
    pub pairs: Vec<PairCount>,
    pub sublevels: Vec<SublevelRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FredholmRow {
    pub name: String,
    pub kind: String,
    pub predicted: Option<i64>,
    pub ker: Option<usize>,
    pub coker: Option<usize>,
    pub index: Option<i64>,
    pub refined_ker: Option<usize>,
    pub refined_coker: Option<usize>,
    pub kernel_angle: Option<f64>,
    pub gap_ratio: Option<f64>,
    pub min_limit_margin: Option<f64>,
    pub stable: bool,
    pub passed: bool,
    pub error: Option<String>,
    pub matrix_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub stage: String,
    pub system: Option<String>,
    pub config: RunConfig,
    pub generators: Vec<GeneratorRow>,
    pub quarantined: Vec<Quarantined>,
    pub dropped_seeds: usize,
    pub certificate: Vec<Certificate>,
    pub complex: Vec<ClassReport>,
    pub flow_lines: usize,
    pub fredholm: Vec<FredholmRow>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl Report {
    pub fn new(stage: &str, system: Option<String>, config: RunConfig) -> Self {
        Report {
            tool: format!("loop-morse {}", env!("CARGO_PKG_VERSION")),
            stage: stage.to_string(),
            system,
            config,
            generators: Vec::new(),
            quarantined: Vec::new(),
            dropped_seeds: 0,
            certificate: Vec::new(),
            complex: Vec::new(),
            flow_lines: 0,
            fredholm: Vec::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            passed: true,
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), passed, detail: detail.into() });
        self.passed &= passed;
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Extra text files written next to the report, relative to the output
/// directory.
#[derive(Debug, Clone, Default)]
pub struct Attachments {
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

fn class_tag(class: &[i64]) -> String {
    if class.is_empty() {
        return "trivial".into();
    }
    class.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("_")
}

pub fn boundary_file_name(periodic: bool, class: &[i64], degree: usize) -> String {
    format!("boundary/{}_{}_d{degree}.txt", if periodic { "loop" } else { "path" }, class_tag(class))
}

fn generator_csv(rows: &[GeneratorRow]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "class",
        "periodic",
        "action",
        "lift_action",
        "action_gap",
        "morse_index",
        "maslov",
        "nondeg_margin",
        "residual",
        "hamilton_residual",
    ])?;
    for g in rows {
        w.write_record([
            g.id.to_string(),
            class_tag(&g.class),
            g.periodic.to_string(),
            format!("{:e}", g.action),
            format!("{:e}", g.lift_action),
            format!("{:e}", g.action_gap),
            g.morse_index.to_string(),
            g.maslov.map_or(String::new(), |m| m.to_string()),
            format!("{:e}", g.nondeg_margin),
            format!("{:e}", g.residual),
            format!("{:e}", g.hamilton_residual),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    String::from_utf8(bytes).map_err(io::Error::other)
}

/// Write `report.json`, `generators.csv` and the attachments under `dir`.
/// Returns the paths written, in order.
pub fn emit_report(dir: &Path, report: &Report, attachments: &Attachments) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    json.push('\n');
    let path = dir.join("report.json");
    fs::write(&path, json)?;
    written.push(path);
    let path = dir.join("generators.csv");
    fs::write(&path, generator_csv(&report.generators)?)?;
    written.push(path);
    for (name, text) in &attachments.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn emit_error(dir: &Path, record: &ErrorRecord) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("error.json");
    let mut json = serde_json::to_string_pretty(record).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(&path, json)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_valid() {
        let cfg = RunConfig::parse("{}").unwrap();
        let r = Report::new("orbits", None, cfg);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(dir.path(), &r, &Attachments::default()).unwrap();
        assert_eq!(files.len(), 2);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(v["generators"].as_array().unwrap().len(), 0);
        let csv = fs::read_to_string(&files[1]).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn boundary_names() {
        assert_eq!(boundary_file_name(true, &[0, 0], 1), "boundary/loop_0_0_d1.txt");
        assert_eq!(boundary_file_name(false, &[-2], 0), "boundary/path_-2_d0.txt");
        assert_eq!(boundary_file_name(false, &[], 2), "boundary/path_trivial_d2.txt");
    }
}
