//! Run configuration: one JSON document shared by every subcommand.

use std::fmt;
use std::path::Path;

use loop_morse::catalog::{self, BoundaryClass, ReferenceSystem};
use loop_morse::lagrangian::PhysicalLagrangian;
use loop_morse::morse::{FlowConfig, FlowMetric};
use loop_morse::orbits::SearchConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Intervals of the discrete loops.
    pub n_t: usize,
    /// Extra halvings of the step at which every generator index is rechecked.
    pub refinement_levels: usize,
    pub index_samples: usize,
    pub flow_steps: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { n_t: 64, refinement_levels: 0, index_samples: 128, flow_steps: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub seed: u64,
    pub count: usize,
    pub grid_per_dim: usize,
    pub fourier_modes: usize,
    pub amplitude: f64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { seed: 0, count: 24, grid_per_dim: 4, fourier_modes: 3, amplitude: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub r0: f64,
    pub armijo: f64,
    pub gradient_tol: f64,
    pub match_tol: f64,
    pub max_steps: usize,
    pub sphere_samples: usize,
    pub max_depth: usize,
    /// Relative size of the metric perturbation used by the robustness check.
    pub metric_perturbation: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        let f = FlowConfig::default();
        FlowParams {
            r0: f.r0,
            armijo: f.armijo,
            gradient_tol: f.gradient_tol,
            match_tol: f.match_tol,
            max_steps: f.max_steps,
            sphere_samples: f.sphere_samples,
            max_depth: f.max_depth,
            metric_perturbation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    pub duality_loops: usize,
    pub variations: usize,
    pub robustness: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks { duality_loops: 1000, variations: 100, robustness: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FredholmToggle {
    pub enabled: bool,
    /// Write every assembled matrix as sparse triplets.
    pub dump_matrices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of a catalog system; supplies the Lagrangian, the boundary class
    /// and the expected homology.
    #[serde(default)]
    pub system: Option<String>,
    /// Explicit Lagrangian, overriding the catalog one.
    #[serde(default)]
    pub lagrangian: Option<PhysicalLagrangian>,
    #[serde(default)]
    pub boundary: Option<BoundaryClass>,
    #[serde(default = "default_bound")]
    pub action_bound: f64,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub fredholm: FredholmToggle,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_bound() -> f64 {
    1e3
}

/// A rejected configuration, with the 1-based line it points at.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line of the first occurrence of `"key"` in the document.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// The system the run is about, after applying overrides.
#[derive(Debug, Clone)]
pub struct ResolvedSystem {
    pub name: String,
    pub lagrangian: PhysicalLagrangian,
    pub boundary: BoundaryClass,
    pub reference: Option<ReferenceSystem>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError { line: Some(e.line()), message: e.to_string() })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let fail = |key: &str, msg: String| Err(ConfigError { line: line_of(text, key), message: msg });
        let r = &self.resolution;
        if !(4..=4096).contains(&r.n_t) {
            return fail("n_t", format!("n_t = {} is outside [4, 4096]", r.n_t));
        }
        if r.refinement_levels > 3 {
            return fail("refinement_levels", format!("refinement_levels = {} is outside [0, 3]", r.refinement_levels));
        }
        if !(16..=8192).contains(&r.index_samples) {
            return fail("index_samples", format!("index_samples = {} is outside [16, 8192]", r.index_samples));
        }
        if r.flow_steps < r.index_samples || r.flow_steps > 1 << 20 {
            return fail("flow_steps", format!("flow_steps = {} must lie in [index_samples, 2^20]", r.flow_steps));
        }
        if !(self.action_bound.is_finite() && self.action_bound > 0.0) {
            return fail("action_bound", format!("action_bound = {} must be positive and finite", self.action_bound));
        }
        let s = &self.seeds;
        if !(1..=64).contains(&s.grid_per_dim) {
            return fail("grid_per_dim", format!("grid_per_dim = {} is outside [1, 64]", s.grid_per_dim));
        }
        if s.count > 10_000 {
            return fail("count", format!("seed count {} exceeds 10000", s.count));
        }
        if s.fourier_modes > 32 {
            return fail("fourier_modes", format!("fourier_modes = {} exceeds 32", s.fourier_modes));
        }
        if !(s.amplitude >= 0.0 && s.amplitude <= 10.0) {
            return fail("amplitude", format!("amplitude = {} is outside [0, 10]", s.amplitude));
        }
        let f = &self.flow;
        for (key, v, lo, hi) in [
            ("r0", f.r0, 1e-8, 1e-1),
            ("armijo", f.armijo, 1e-8, 0.5),
            ("gradient_tol", f.gradient_tol, 1e-14, 1e-3),
            ("match_tol", f.match_tol, 1e-10, 1e-1),
            ("metric_perturbation", f.metric_perturbation, 0.0, 0.5),
        ] {
            if !(v >= lo && v <= hi) {
                return fail(key, format!("{key} = {v} is outside [{lo:e}, {hi:e}]"));
            }
        }
        if !(1..=10_000_000).contains(&f.max_steps) {
            return fail("max_steps", format!("max_steps = {} is outside [1, 1e7]", f.max_steps));
        }
        if !(4..=4096).contains(&f.sphere_samples) {
            return fail("sphere_samples", format!("sphere_samples = {} is outside [4, 4096]", f.sphere_samples));
        }
        if !(1..=60).contains(&f.max_depth) {
            return fail("max_depth", format!("max_depth = {} is outside [1, 60]", f.max_depth));
        }
        if self.checks.duality_loops > 1_000_000 || self.checks.variations > 1_000_000 {
            return fail("checks", "check sample counts may not exceed 1e6".into());
        }
        if let Some(name) = &self.system {
            if catalog::lookup(name).is_err() {
                return fail("system", format!("unknown reference system `{name}`; known: {}", catalog::NAMES.join(", ")));
            }
        }
        if let Some(l) = &self.lagrangian {
            l.validate().or_else(|e| fail("lagrangian", e.to_string()))?;
        }
        if self.lagrangian.is_some() != self.boundary.is_some() && self.system.is_none() {
            return fail(
                if self.lagrangian.is_some() { "lagrangian" } else { "boundary" },
                "an explicit system needs both `lagrangian` and `boundary`".into(),
            );
        }
        if let Some(b) = &self.boundary {
            let n = self.lagrangian.as_ref().map(|l| l.manifold.dim()).or_else(|| {
                self.system.as_ref().and_then(|s| catalog::lookup(s).ok()).map(|r| r.manifold.dim())
            });
            let ok = match (b, n) {
                (BoundaryClass::Periodic { windings }, Some(n)) => {
                    !windings.is_empty() && windings.iter().all(|w| w.len() == n || w.is_empty())
                }
                (BoundaryClass::Fixed { q0, targets }, Some(n)) => {
                    q0.len() == n && !targets.is_empty() && targets.iter().all(|t| t.len() == n)
                }
                (_, None) => true,
            };
            if !ok {
                return fail("boundary", "boundary data do not match the manifold dimension".into());
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Option<ResolvedSystem> {
        let reference = self.system.as_ref().and_then(|s| catalog::lookup(s).ok());
        let lagrangian = self.lagrangian.clone().or_else(|| reference.as_ref().map(|r| r.lagrangian()))?;
        let boundary = self.boundary.clone().or_else(|| reference.as_ref().map(|r| r.boundary.clone()))?;
        // Expectations only apply to the unmodified reference system.
        let overridden = self.lagrangian.is_some() || self.boundary.is_some();
        Some(ResolvedSystem {
            name: self.system.clone().unwrap_or_else(|| "custom".into()),
            lagrangian,
            boundary,
            reference: if overridden { None } else { reference },
        })
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            resolution: self.resolution.n_t,
            grid_per_dim: self.seeds.grid_per_dim,
            random_seeds: self.seeds.count,
            fourier_modes: self.seeds.fourier_modes,
            amplitude: self.seeds.amplitude,
            seed: self.seeds.seed,
            action_bound: self.action_bound,
            flow_steps: self.resolution.flow_steps,
            ..SearchConfig::default()
        }
    }

    pub fn flow_config(&self, metric: FlowMetric) -> FlowConfig {
        let f = &self.flow;
        FlowConfig {
            r0: f.r0,
            armijo: f.armijo,
            gradient_tol: f.gradient_tol,
            match_tol: f.match_tol,
            max_steps: f.max_steps,
            sphere_samples: f.sphere_samples,
            max_depth: f.max_depth,
            metric,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_catalog_resolution() {
        let cfg = RunConfig::parse(r#"{ "system": "pendulum-omega-pi" }"#).unwrap();
        assert_eq!(cfg.resolution.n_t, 64);
        let sys = cfg.resolve().unwrap();
        assert!(sys.reference.is_some());
        assert!(matches!(sys.boundary, BoundaryClass::Periodic { .. }));
    }

    #[test]
    fn range_errors_point_at_the_line() {
        let text = "{\n  \"system\": \"pendulum-omega-pi\",\n  \"resolution\": {\n    \"n_t\": 2\n  }\n}";
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.line, Some(4));
        assert!(err.message.contains("n_t"));
    }

    #[test]
    fn syntax_and_unknown_fields_are_rejected() {
        let err = RunConfig::parse("{\n  \"system\": \"pendulum-omega-pi\",\n  \"sytem\": 1\n}").unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = RunConfig::parse("{\n  \"system\": \"nowhere\"\n}").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(RunConfig::parse("{ \"system\": ").is_err());
    }

    #[test]
    fn explicit_system_needs_a_boundary() {
        let text = r#"{ "lagrangian": { "manifold": { "kind": "flat_torus", "n": 1 }, "v": { "kind": "trig", "terms": [] } } }"#;
        assert!(RunConfig::parse(text).is_err());
    }
}
