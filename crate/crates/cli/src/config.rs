//! Scenario configuration: schema, loading and cross-field validation.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use nullwave::nullform::classify_nonlinearity;
use nullwave::obsets::{ObsConfig, ObservationRegion};
use nullwave::wavesolver::{Grid, GridSpec, Manufactured, SolveOptions, SourceTerm};
use nullwave::{MetricSpec, NonlinearTerm, QuadraticForm, ScalarField};
use serde::{Deserialize, Serialize};
use serde_json::error::Category;

use crate::CliError;

/// Numerical thresholds used by the subcommand checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Entrywise mismatch between a form and its reconstructed decomposition.
    pub decomposition: f64,
    /// Absolute bound on `A`, `B` over null-sum quadruples.
    pub cancellation: f64,
    /// Relative spread of `A / g*(ζ,ζ)` and `B / g*(ζ,ζ)` around their constants.
    pub proportionality: f64,
    /// Relative error of the conformal `P` ratio.
    pub conformal: f64,
    pub order4: f64,
    pub order2: f64,
    /// Leak outside the discrete causal future, relative to `sup |f|`.
    pub causality: f64,
    /// Distance of cone-exact earliest points from the light cone.
    pub cone: f64,
    /// Drift of `g(γ', γ')` along traced geodesics.
    pub conservation: f64,
    /// Accepted band for observed convergence orders; not scaled.
    pub order_band: [f64; 2],
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            decomposition: 1e-10,
            cancellation: 1e-9,
            proportionality: 1e-8,
            conformal: 1e-10,
            order4: 0.1,
            order2: 0.05,
            causality: 1e-10,
            cone: 1e-8,
            conservation: 1e-6,
            order_band: [1.7, 2.3],
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, s: f64) -> Tolerances {
        Tolerances {
            decomposition: self.decomposition * s,
            cancellation: self.cancellation * s,
            proportionality: self.proportionality * s,
            conformal: self.conformal * s,
            order4: self.order4 * s,
            order2: self.order2 * s,
            causality: self.causality * s,
            cone: self.cone * s,
            conservation: self.conservation * s,
            order_band: self.order_band,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Quadruples per `interact` batch.
    pub count: usize,
    /// Draws allowed to the witness search.
    pub attempts: usize,
    /// Witness threshold on `|P| / ‖quad‖²`.
    pub threshold: f64,
    pub require_null_sum: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            count: 200,
            attempts: 100,
            threshold: 1e-4,
            require_null_sum: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalConfig {
    pub gamma: ScalarField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub refinements: u32,
    /// Mixed-difference step; the solver default applies when absent.
    pub delta: Option<f64>,
    pub zero_interaction_check: bool,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            refinements: 2,
            delta: None,
            zero_interaction_check: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicConfig {
    /// Defaults to the base point.
    pub start: Option<Vec<f64>>,
    /// Initial velocities.
    pub directions: Vec<Vec<f64>>,
    pub s_max: f64,
    pub h: f64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        GeodesicConfig {
            start: None,
            directions: Vec::new(),
            s_max: 1.0,
            h: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    /// Defaults to the standard box for the metric's dimension.
    pub region: Option<ObservationRegion>,
    pub sources: Vec<Vec<f64>>,
    pub settings: ObsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub resolutions: usize,
    /// Manufactured linear study when present, nonlinear self-convergence
    /// otherwise.
    pub manufactured: Option<Manufactured>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            resolutions: 3,
            manufactured: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub metric: MetricSpec,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the resolved config embedded in reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub nonlinearity: Option<NonlinearTerm>,
    /// Extra forms for `decompose`.
    #[serde(default)]
    pub forms: Vec<QuadraticForm>,
    #[serde(default)]
    pub base_point: Option<Vec<f64>>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub conformal: ConformalConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub sources: Option<SourceTerm>,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub geodesics: GeodesicConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

impl ScenarioConfig {
    pub fn base_point(&self) -> Vec<f64> {
        if let Some(p) = &self.base_point {
            return p.clone();
        }
        let mut p = vec![0.0; self.metric.dim()];
        if matches!(self.metric, MetricSpec::UltrastaticSphere) {
            p[1] = FRAC_PI_2;
        }
        p
    }

    pub fn region(&self) -> ObservationRegion {
        self.observation
            .region
            .clone()
            .unwrap_or_else(|| ObservationRegion::standard(self.metric.spatial_dim()))
    }

    pub fn nonlinearity(&self) -> NonlinearTerm {
        self.nonlinearity.clone().unwrap_or_else(NonlinearTerm::zero)
    }
}

/// Reads and parses a config; syntax and schema errors carry line/column.
pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => CliError::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message,
            },
            Category::Data => CliError::Schema {
                path: path.to_path_buf(),
                line,
                column,
                message,
            },
        }
    })
}

/// Outcome of the cross-field checks.
#[derive(Debug, Default)]
pub struct Validation {
    pub errors: Vec<String>,
    /// Assumption-(A) violations of the nonlinearity.
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Validation {
    let mut v = Validation::default();
    let m = &cfg.metric;
    let dim = m.dim();
    let bp = cfg.base_point();
    if bp.len() != dim {
        v.errors
            .push(format!("base_point has {} coordinates, metric needs {dim}", bp.len()));
    }
    for (k, f) in cfg.forms.iter().enumerate() {
        if let Err(e) = f.check(m) {
            v.errors.push(format!("forms[{k}]: {e}"));
        }
    }
    if let Some(nl) = &cfg.nonlinearity {
        match nl.check(m) {
            Err(e) => v.errors.push(format!("nonlinearity: {e}")),
            Ok(()) if bp.len() == dim => {
                let rep = classify_nonlinearity(nl, m, &[bp.clone()], 200, cfg.seed);
                v.warnings.extend(rep.violations);
            }
            Ok(()) => {}
        }
    }
    let grid = cfg.grid.as_ref().map(|spec| Grid::new(m, spec));
    if let Some(Err(e)) = &grid {
        v.errors.push(format!("grid: {e}"));
    }
    if let Some(src) = &cfg.sources {
        match &grid {
            Some(Ok(g)) => {
                if let Err(e) = src.check(m, g, cfg.solver.amplitude_cap) {
                    v.errors.push(format!("sources: {e}"));
                }
            }
            None => v.errors.push("sources given without a grid".into()),
            Some(Err(_)) => {}
        }
    }
    if cfg.observation.region.is_some() || !cfg.observation.sources.is_empty() {
        if let Err(e) = cfg.region().resolve(m) {
            v.errors.push(format!("observation.region: {e}"));
        }
        for (k, q) in cfg.observation.sources.iter().enumerate() {
            if q.len() != dim {
                v.errors.push(format!(
                    "observation.sources[{k}] has {} coordinates, metric needs {dim}",
                    q.len()
                ));
            }
        }
    }
    if let Some(s) = &cfg.geodesics.start {
        if s.len() != dim {
            v.errors
                .push(format!("geodesics.start has {} coordinates, metric needs {dim}", s.len()));
        }
    }
    for (k, d) in cfg.geodesics.directions.iter().enumerate() {
        if d.len() != dim {
            v.errors.push(format!(
                "geodesics.directions[{k}] has {} components, metric needs {dim}",
                d.len()
            ));
        }
    }
    if !(cfg.geodesics.h > 0.0 && cfg.geodesics.s_max > 0.0) {
        v.errors.push("geodesics: h and s_max must be positive".into());
    }
    if cfg.convergence.resolutions < 3 {
        v.errors.push("convergence.resolutions must be at least 3".into());
    }
    if let Some(d) = cfg.expansion.delta {
        if !(d > 0.0) {
            v.errors.push("expansion.delta must be positive".into());
        }
    }
    v
}
