//! Orchestration: find orbits, compute indices, assemble the complex, take
//! homology, run the verification checks.
//!
//! Every parallel step collects in task order, and every random draw comes
//! from a stream keyed by its task id, so the report does not depend on the
//! number of workers.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;

use loop_morse::catalog::{BoundaryClass, ReferenceSystem};
use loop_morse::fredholm::{self, GapPolicy, TruncatedCROperator};
use loop_morse::index::{normalization_table, verify_index_theorem};
use loop_morse::lagrangian::PhysicalLagrangian;
use loop_morse::loops::{PhaseLoop, PhaseVariation};
use loop_morse::morse::{self, ClassKey, FlowMetric, MorseComplexData};
use loop_morse::orbits::{find_bvp_solutions, find_periodic_orbits, morse_index, polish, CriticalPoint, OrbitSearch};
use loop_morse::rng::{self, Stage as RngStage};
use loop_morse::Error;

use crate::config::{ConfigError, ResolvedSystem, RunConfig};
use crate::report::{
    boundary_file_name, Attachments, Certificate, ClassReport, FredholmRow, GeneratorRow, PairCount, Report,
    SublevelRow,
};

/// Duality gap allowed on random loops (it is nonnegative in exact arithmetic).
pub const DUALITY_FLOOR: f64 = -1e-8;
/// `|E - A|` allowed on a Legendre lift; the gap itself must be below
/// `LIFT_GAP`.
pub const ACTION_EQUALITY: f64 = 1e-6;
pub const LIFT_GAP: f64 = 1e-8;
/// Slack in `d^2 A <= d^2 E`.
pub const SECOND_VARIATION_SLACK: f64 = 1e-6;
pub const SECOND_VARIATION_STEP: f64 = 1e-4;
/// Generators within this of a sublevel value count as on it, not below.
pub const SUBLEVEL_TOL: f64 = 1e-6;
/// Relative agreement of computed and catalog actions.
pub const CATALOG_ACTION_TOL: f64 = 1e-3;
const FLOW_ENERGY_DEFECT: f64 = 1e-4;
const RANDOM_MODES: usize = 3;
const RANDOM_AMPLITUDE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Orbits,
    Indices,
    Complex,
    Homology,
    VerifyAll,
    Fredholm,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Orbits => "orbits",
            Stage::Indices => "indices",
            Stage::Complex => "complex",
            Stage::Homology => "homology",
            Stage::VerifyAll => "verify-all",
            Stage::Fredholm => "fredholm",
        }
    }

    /// Whether the system pipeline runs up to and including `step`.
    fn reaches(self, step: Stage) -> bool {
        self != Stage::Fredholm && self >= step
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Numerical(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Numerical(e)
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Integration(_) => "integration",
        Error::Escape { .. } => "escape",
        Error::Frame(_) => "frame",
        Error::Convexity(_) => "convexity",
        Error::Degenerate(_) => "degenerate",
        Error::Resolution(_) => "resolution",
        Error::InconsistentPair(_) => "inconsistent_pair",
        Error::Consistency(_) => "consistency",
        Error::BoundarySquare(_) => "boundary_square",
        Error::Indeterminate(_) => "indeterminate",
        Error::Numerical(_) => "numerical",
        Error::Invalid(_) => "invalid",
        Error::UnknownSystem(_) => "unknown_system",
    }
}

pub struct Outcome {
    pub report: Report,
    pub attachments: Attachments,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            3
        }
    }
}

pub fn run(cfg: &RunConfig, stage: Stage) -> Result<Outcome, RunError> {
    let resolved = cfg.resolve();
    let mut report = Report::new(stage.name(), resolved.as_ref().map(|s| s.name.clone()), cfg.clone());
    let mut attachments = Attachments::default();
    if stage != Stage::Fredholm {
        let sys = resolved.ok_or_else(|| {
            RunError::Config(ConfigError {
                line: None,
                message: "no system: set `system`, or both `lagrangian` and `boundary`".into(),
            })
        })?;
        system_pipeline(cfg, stage, &sys, &mut report, &mut attachments)?;
    }
    if stage == Stage::Fredholm || (stage == Stage::VerifyAll && cfg.fredholm.enabled) {
        fredholm_suite(cfg, &mut report, &mut attachments);
    }
    Ok(Outcome { report, attachments })
}

fn search(sys: &ResolvedSystem, cfg: &RunConfig) -> Result<Vec<OrbitSearch>, Error> {
    let l = &sys.lagrangian;
    let sc = cfg.search();
    match &sys.boundary {
        BoundaryClass::Periodic { windings } => windings.par_iter().map(|w| find_periodic_orbits(l, w, &sc)).collect(),
        BoundaryClass::Fixed { q0, targets } => {
            let q0 = nalgebra_vec(q0);
            targets.par_iter().map(|t| find_bvp_solutions(l, &q0, &nalgebra_vec(t), &sc)).collect()
        }
    }
}

fn nalgebra_vec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn system_pipeline(
    cfg: &RunConfig,
    stage: Stage,
    sys: &ResolvedSystem,
    report: &mut Report,
    attachments: &mut Attachments,
) -> Result<(), RunError> {
    let l = &sys.lagrangian;
    let mut generators = Vec::new();
    for s in search(sys, cfg)? {
        generators.extend(s.generators);
        report.quarantined.extend(s.quarantined);
        report.dropped_seeds += s.dropped;
    }
    report.generators = generators.iter().enumerate().map(|(id, g)| generator_row(id, g)).collect();
    if report.dropped_seeds > 0 {
        report.warnings.push(format!("{} seeds did not converge", report.dropped_seeds));
    }
    report.check(
        "no degenerate critical points",
        report.quarantined.is_empty(),
        format!("{} generators, {} quarantined", generators.len(), report.quarantined.len()),
    );
    if let Some(reference) = &sys.reference {
        check_catalog_generators(reference, &generators, report);
    }

    if !stage.reaches(Stage::Indices) {
        return Ok(());
    }
    let indices = generators
        .par_iter()
        .map(|g| verify_index_theorem(l, g, cfg.resolution.index_samples, cfg.resolution.flow_steps))
        .collect::<Result<Vec<_>, _>>()?;
    let refined = generators
        .par_iter()
        .map(|g| refined_indices(l, g, cfg.resolution.refinement_levels))
        .collect::<Result<Vec<_>, _>>()?;
    let lifts = generators.par_iter().map(|g| g.path.lift(l)).collect::<Result<Vec<_>, _>>()?;
    let mut mismatched = Vec::new();
    for (i, row) in report.generators.iter_mut().enumerate() {
        row.maslov = Some(indices[i].maslov);
        row.refined_indices = refined[i].clone();
        row.lift_action = lifts[i].action(l)?;
        row.action_gap = (row.action - row.lift_action).abs();
        if !indices[i].equal || refined[i].iter().any(|&m| m != row.morse_index) {
            mismatched.push(i);
        }
    }
    report.check(
        "morse index equals maslov index",
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("m = mu on all {} generators", generators.len())
        } else {
            format!("mismatch at generators {mismatched:?}")
        },
    );
    let table = normalization_table()?;
    let bad: Vec<String> = table.iter().filter(|r| !r.holds()).map(|r| format!("{}: {}", r.case, r.computed)).collect();
    report.check("index normalizations", bad.is_empty(), if bad.is_empty() { format!("{} cases", table.len()) } else { bad.join("; ") });
    report.certificate = certificates(l, &generators, &lifts, &report.generators)?;
    let cert_ok = report.certificate.iter().all(|c| c.lower_triangular && c.unit_diagonal && c.indices_equal)
        && report.certificate.iter().all(|c| c.max_action_gap < ACTION_EQUALITY);
    report.check(
        "triangular lift correspondence",
        cert_ok,
        format!("{} classes, largest |E - A| {:.2e}", report.certificate.len(), max_gap(&report.certificate)),
    );

    if !stage.reaches(Stage::Complex) {
        return Ok(());
    }
    let data = if let Some(reason) = unsupported_complex(&generators) {
        report.warnings.push(format!("Morse complex skipped: {reason}"));
        None
    } else {
        match morse::assemble_complex(l, generators.clone(), &cfg.flow_config(FlowMetric::STANDARD)) {
            Ok(d) => {
                report.check("boundary squares to zero", true, "exact integer check in every class");
                Some(d)
            }
            Err(e @ Error::BoundarySquare(_)) => {
                report.check("boundary squares to zero", false, e.to_string());
                None
            }
            Err(e) => return Err(e.into()),
        }
    };
    if let Some(data) = &data {
        report.flow_lines = data.lines.len();
        report.warnings.extend(data.warnings.iter().cloned());
        check_flow_lines(data, report);
        for c in &data.classes {
            let mut boundary_files = Vec::new();
            for (k, b) in c.boundary.iter().enumerate() {
                let name = boundary_file_name(c.key.periodic, &c.key.class, k);
                attachments.files.push((name.clone(), b.to_text()));
                boundary_files.push(name);
            }
            report.complex.push(ClassReport {
                class: c.key.class.clone(),
                periodic: c.key.periodic,
                graded: c.graded.clone(),
                boundary: c.boundary.iter().map(|b| (0..b.rows).map(|r| (0..b.cols).map(|j| b.get(r, j)).collect()).collect()).collect(),
                boundary_files,
                betti: Vec::new(),
                torsion: Vec::new(),
                expected_betti: None,
                perturbed_betti: None,
                pairs: pair_counts(data, &c.key),
                sublevels: Vec::new(),
            });
        }
        if sys.reference.as_ref().is_some_and(|r| r.zero_differential) {
            let nonzero: Vec<(usize, usize)> = report
                .complex
                .iter()
                .flat_map(|c| c.pairs.iter())
                .filter(|p| p.count != 0)
                .map(|p| (p.source, p.target))
                .collect();
            report.check(
                "connecting orbits cancel in pairs",
                nonzero.is_empty(),
                if nonzero.is_empty() { "every signed count is 0".to_string() } else { format!("nonzero counts at {nonzero:?}") },
            );
        }
    }

    if !stage.reaches(Stage::Homology) {
        return Ok(());
    }
    if let Some(data) = &data {
        homology_checks(cfg, sys, data, report)?;
    }

    if !stage.reaches(Stage::VerifyAll) {
        return Ok(());
    }
    duality_checks(cfg, l, &generators, &lifts, report)?;
    Ok(())
}

fn generator_row(id: usize, g: &CriticalPoint) -> GeneratorRow {
    GeneratorRow {
        id,
        class: g.class.clone(),
        periodic: g.is_periodic(),
        action: g.action,
        lift_action: g.lift_action,
        action_gap: (g.action - g.lift_action).abs(),
        morse_index: g.morse_index,
        maslov: None,
        nondeg_margin: g.nondeg_margin,
        residual: g.residual,
        hamilton_residual: g.hamilton_residual,
        refined_indices: Vec::new(),
    }
}

fn max_gap(c: &[Certificate]) -> f64 {
    c.iter().map(|c| c.max_action_gap).fold(0.0, f64::max)
}

fn check_catalog_generators(reference: &ReferenceSystem, generators: &[CriticalPoint], report: &mut Report) {
    let mut problems = Vec::new();
    for expected in &reference.classes {
        let mut found: Vec<(usize, f64)> =
            generators.iter().filter(|g| g.class == expected.class).map(|g| (g.morse_index, g.action)).collect();
        found.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut want: Vec<(usize, f64)> = expected.generators.iter().map(|g| (g.index, g.action)).collect();
        want.sort_by(|a, b| a.1.total_cmp(&b.1));
        let agree = found.len() == want.len()
            && found.iter().zip(&want).all(|(f, w)| {
                f.0 == w.0 && (f.1 - w.1).abs() <= CATALOG_ACTION_TOL * w.1.abs().max(1.0)
            });
        if !agree {
            problems.push(format!("class {:?}: found (index, action) {found:?}, expected {want:?}", expected.class));
        }
    }
    for g in generators {
        if reference.class(&g.class).is_none() {
            problems.push(format!("generator in unexpected class {:?}", g.class));
        }
    }
    problems.dedup();
    report.check(
        "generators match the catalog",
        problems.is_empty(),
        if problems.is_empty() { format!("{} classes", reference.classes.len()) } else { problems.join("; ") },
    );
}

/// Morse index after each extra halving of the step, re-polished at the new
/// resolution.
fn refined_indices(l: &PhysicalLagrangian, g: &CriticalPoint, levels: usize) -> Result<Vec<usize>, Error> {
    let mut path = g.path.clone();
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        path = polish(l, &path.refine(), 1e-10, 50)?;
        out.push(morse_index(l, &path)?);
    }
    Ok(out)
}

fn order_key(action: f64, id: usize) -> (i64, usize) {
    ((action * 1e8).round() as i64, id)
}

/// Per class: rows are the generators sorted by `E`, columns their Legendre
/// lifts sorted by `A`, and the entry is 1 where the column projects to the
/// row. The correspondence is lower triangular with unit diagonal when the
/// two orders agree.
fn certificates(
    l: &PhysicalLagrangian,
    generators: &[CriticalPoint],
    lifts: &[PhaseLoop],
    rows: &[GeneratorRow],
) -> Result<Vec<Certificate>, Error> {
    let mut groups: BTreeMap<ClassKey, Vec<usize>> = BTreeMap::new();
    for (i, g) in generators.iter().enumerate() {
        groups.entry(ClassKey::of(g)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (key, members) in groups {
        let mut by_e = members.clone();
        by_e.sort_by_key(|&i| order_key(generators[i].action, i));
        let lift_actions: BTreeMap<usize, f64> =
            members.iter().map(|&i| lifts[i].action(l).map(|a| (i, a))).collect::<Result<_, _>>()?;
        let mut by_a = members.clone();
        by_a.sort_by_key(|&j| order_key(lift_actions[&j], j));
        let projects = |x: &PhaseLoop, q: &CriticalPoint| {
            x.q.nodes.iter().zip(&q.path.nodes).all(|(a, b)| (a - b).amax() <= 1e-12)
        };
        let matrix: Vec<Vec<i64>> = by_e
            .iter()
            .map(|&i| by_a.iter().map(|&j| i64::from(projects(&lifts[j], &generators[i]))).collect())
            .collect();
        let n = by_e.len();
        let lower_triangular = (0..n).all(|r| (r + 1..n).all(|c| matrix[r][c] == 0));
        let unit_diagonal = (0..n).all(|r| matrix[r][r].abs() == 1);
        let max_action_gap =
            by_e.iter().map(|&i| (generators[i].action - lift_actions[&i]).abs()).fold(0.0, f64::max);
        let indices_equal = by_e.iter().all(|&i| rows[i].maslov == Some(rows[i].morse_index as i64));
        out.push(Certificate {
            class: key.class,
            periodic: key.periodic,
            rows: by_e,
            columns: by_a,
            matrix,
            lower_triangular,
            unit_diagonal,
            max_action_gap,
            indices_equal,
        });
    }
    Ok(out)
}

/// The flow runs in chart coordinates, so fixed-end generators of one class
/// must share both chart endpoints.
fn unsupported_complex(generators: &[CriticalPoint]) -> Option<String> {
    let mut first: BTreeMap<ClassKey, &CriticalPoint> = BTreeMap::new();
    for g in generators.iter().filter(|g| !g.is_periodic()) {
        let f = *first.entry(ClassKey::of(g)).or_insert(g);
        let n = g.path.intervals();
        let same = (&g.path.nodes[0] - &f.path.nodes[0]).amax() <= 1e-12
            && (&g.path.nodes[n] - &f.path.nodes[n]).amax() <= 1e-12;
        if !same {
            return Some(format!(
                "paths in class {:?} end at different chart lifts of the target; the flow cannot join them",
                g.class
            ));
        }
    }
    None
}

fn check_flow_lines(data: &MorseComplexData, report: &mut Report) {
    let g = &data.generators;
    let mut bad_filtration = Vec::new();
    let mut bad_class = Vec::new();
    let mut worst_defect: f64 = 0.0;
    for (i, f) in data.lines.iter().enumerate() {
        if !(g[f.target].action < g[f.source].action && f.energy_drop > 0.0 && f.strictly_decreasing()) {
            bad_filtration.push(i);
        }
        if ClassKey::of(&g[f.source]) != ClassKey::of(&g[f.target]) {
            bad_class.push(i);
        }
        worst_defect = worst_defect.max(f.energy_identity_defect());
    }
    report.check(
        "flow lines decrease the action",
        bad_filtration.is_empty() && worst_defect < FLOW_ENERGY_DEFECT,
        format!("{} lines, violations {bad_filtration:?}, largest energy defect {worst_defect:.2e}", data.lines.len()),
    );
    report.check(
        "flow lines stay in their homotopy class",
        bad_class.is_empty(),
        format!("violations {bad_class:?}"),
    );
}

fn pair_counts(data: &MorseComplexData, key: &ClassKey) -> Vec<PairCount> {
    let mut pairs: BTreeMap<(usize, usize), Vec<i32>> = BTreeMap::new();
    for f in &data.lines {
        if ClassKey::of(&data.generators[f.source]) == *key {
            pairs.entry((f.source, f.target)).or_default().push(f.sign);
        }
    }
    pairs
        .into_iter()
        .map(|((source, target), signs)| PairCount {
            source,
            target,
            lines: signs.len(),
            count: signs.iter().map(|&s| s as i64).sum(),
            signs,
        })
        .collect()
}

fn trimmed(v: &[usize]) -> Vec<usize> {
    let end = v.iter().rposition(|&x| x != 0).map_or(0, |i| i + 1);
    v[..end].to_vec()
}

fn homology_checks(
    cfg: &RunConfig,
    sys: &ResolvedSystem,
    data: &MorseComplexData,
    report: &mut Report,
) -> Result<(), RunError> {
    let hom = morse::homology(data)?;
    let mut mismatches = Vec::new();
    let mut sublevel_mismatches = Vec::new();
    for (c, h) in report.complex.iter_mut().zip(&hom) {
        c.betti = trimmed(&h.homology.betti);
        c.torsion = h.homology.torsion.iter().map(|t| t.iter().map(|d| d.to_string()).collect()).collect();
        let Some(expected) = sys.reference.as_ref().and_then(|r| r.class(&c.class)) else { continue };
        c.expected_betti = Some(trimmed(&expected.betti));
        if c.expected_betti.as_ref() != Some(&c.betti) || c.torsion.iter().any(|t| !t.is_empty()) {
            mismatches.push(format!("class {:?}: {:?} vs {:?}", c.class, c.betti, expected.betti));
        }
        for s in &expected.sublevels {
            let sub = morse::filtered_subcomplex(data, s.below - SUBLEVEL_TOL);
            let sub_hom = morse::homology(&sub)?;
            let betti = sub_hom
                .iter()
                .find(|x| x.key.class == c.class && x.key.periodic == c.periodic)
                .map_or(Vec::new(), |x| trimmed(&x.homology.betti));
            if betti != trimmed(&s.betti) {
                sublevel_mismatches.push(format!("class {:?} below {}: {betti:?} vs {:?}", c.class, s.below, s.betti));
            }
            c.sublevels.push(SublevelRow { below: s.below, betti, expected_betti: Some(trimmed(&s.betti)) });
        }
    }
    if let Some(reference) = &sys.reference {
        for expected in &reference.classes {
            if !report.complex.iter().any(|c| c.class == expected.class) {
                mismatches.push(format!("class {:?} has no generators", expected.class));
            }
        }
        report.check(
            "homology matches the catalog",
            mismatches.is_empty(),
            if mismatches.is_empty() { format!("{} classes", reference.classes.len()) } else { mismatches.join("; ") },
        );
        if reference.classes.iter().any(|c| !c.sublevels.is_empty()) {
            report.check(
                "sublevel homology matches the catalog",
                sublevel_mismatches.is_empty(),
                if sublevel_mismatches.is_empty() {
                    let rows: Vec<String> = report
                        .complex
                        .iter()
                        .flat_map(|c| c.sublevels.iter().map(|s| format!("below {}: {:?}", s.below, s.betti)))
                        .collect();
                    rows.join(", ")
                } else {
                    sublevel_mismatches.join("; ")
                },
            );
        }
    }
    if cfg.checks.robustness {
        let metric = FlowMetric::perturbed(cfg.flow.metric_perturbation);
        let perturbed = morse::assemble_complex(&sys.lagrangian, data.generators.clone(), &cfg.flow_config(metric));
        let (same, detail) = match perturbed.and_then(|d| morse::homology(&d)) {
            Ok(ph) => {
                let mut same = ph.len() == report.complex.len();
                for (c, h) in report.complex.iter_mut().zip(&ph) {
                    let b = trimmed(&h.homology.betti);
                    same &= b == c.betti && h.key.class == c.class;
                    c.perturbed_betti = Some(b);
                }
                (same, format!("metric perturbed by {}", cfg.flow.metric_perturbation))
            }
            Err(e @ Error::BoundarySquare(_)) => (false, e.to_string()),
            Err(e) => return Err(e.into()),
        };
        report.check("homology is independent of the flow metric", same, detail);
    }
    Ok(())
}

fn duality_checks(
    cfg: &RunConfig,
    l: &PhysicalLagrangian,
    generators: &[CriticalPoint],
    lifts: &[PhaseLoop],
    report: &mut Report,
) -> Result<(), RunError> {
    if generators.is_empty() {
        report.warnings.push("duality checks skipped: no generators".into());
        return Ok(());
    }
    let seed = cfg.seeds.seed;
    let gaps = (0..cfg.checks.duality_loops)
        .into_par_iter()
        .map(|k| {
            let base = &lifts[k % lifts.len()];
            let mut rng = rng::stream(seed, RngStage::Checks, k as u64);
            let v = PhaseVariation::random_trig(&base.q, &mut rng, RANDOM_MODES, RANDOM_AMPLITUDE);
            base.displaced(&v, 1.0).duality_gap(l)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    report.check(
        "duality gap is nonnegative",
        gaps.is_empty() || min_gap >= DUALITY_FLOOR,
        format!("{} random phase loops, smallest gap {min_gap:.3e}", gaps.len()),
    );
    let lift_gaps = lifts.iter().map(|x| x.duality_gap(l)).collect::<Result<Vec<_>, _>>()?;
    let worst_lift = lift_gaps.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let worst_action = report.generators.iter().map(|g| g.action_gap).fold(0.0, f64::max);
    report.check(
        "duality gap vanishes on Legendre lifts",
        worst_lift < LIFT_GAP && worst_action < ACTION_EQUALITY,
        format!("largest lift gap {worst_lift:.3e}, largest |E - A| {worst_action:.3e}"),
    );

    let per = cfg.checks.variations;
    let offset = cfg.checks.duality_loops as u64;
    let excess = (0..generators.len() * per)
        .into_par_iter()
        .map(|k| {
            let x = &lifts[k / per];
            let mut rng = rng::stream(seed, RngStage::Checks, offset + k as u64);
            let v = PhaseVariation::random_trig(&x.q, &mut rng, RANDOM_MODES, RANDOM_AMPLITUDE);
            let (a, e) = x.second_variations(l, &v, SECOND_VARIATION_STEP)?;
            Ok(a - e)
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    let worst = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report.check(
        "second variation of A is bounded by that of E",
        excess.is_empty() || worst <= SECOND_VARIATION_SLACK,
        format!("{} variations, largest d2A - d2E {worst:.3e}", excess.len()),
    );
    Ok(())
}

fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn fredholm_row(name: &str, op: &TruncatedCROperator, dump: bool) -> (FredholmRow, Option<(String, String)>) {
    let mut row = FredholmRow {
        name: name.to_string(),
        kind: format!("{:?}", op.kind),
        predicted: None,
        ker: None,
        coker: None,
        index: None,
        refined_ker: None,
        refined_coker: None,
        kernel_angle: None,
        gap_ratio: None,
        min_limit_margin: None,
        stable: false,
        passed: false,
        error: None,
        matrix_file: None,
    };
    match fredholm::evaluate(name, op, GapPolicy::default()) {
        Ok(r) => {
            row.predicted = Some(r.predicted);
            row.ker = Some(r.base.dim_ker);
            row.coker = Some(r.base.dim_coker);
            row.index = Some(r.base.index);
            row.refined_ker = Some(r.refined.dim_ker);
            row.refined_coker = Some(r.refined.dim_coker);
            row.kernel_angle = r.kernel_angle;
            row.gap_ratio = Some(r.base.gap_ratio.min(r.refined.gap_ratio));
            row.min_limit_margin = r.margins.iter().map(|m| m.margin).reduce(f64::min);
            row.stable = r.stable;
            row.passed = r.passed();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    let mut file = None;
    if dump {
        match op.assemble() {
            Ok(m) => {
                let path = format!("fredholm/{}.txt", slug(name));
                row.matrix_file = Some(path.clone());
                file = Some((path, m.to_triplets()));
            }
            Err(e) => {
                row.error.get_or_insert_with(|| e.to_string());
                row.passed = false;
            }
        }
    }
    (row, file)
}

fn fredholm_suite(cfg: &RunConfig, report: &mut Report, attachments: &mut Attachments) {
    let suite = fredholm::acceptance_suite();
    let rows: Vec<_> =
        suite.par_iter().map(|(name, op)| fredholm_row(name, op, cfg.fredholm.dump_matrices)).collect();
    for (row, file) in rows {
        attachments.files.extend(file);
        report.fredholm.push(row);
    }
    let failed: Vec<&str> = report.fredholm.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    let detail = if failed.is_empty() {
        format!("{} operators: numeric index equals predicted, stable under refinement", report.fredholm.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    report.check("fredholm suite", failed.is_empty(), detail);
}
