//! Scenario files: a strict, versioned JSON schema and the builder that
//! turns a parsed document into a validated [`Scenario`].
//!
//! Parsing is strict — unknown fields are rejected with a JSON-pointer-ish
//! path — and every cross-section shape constraint is checked before a run
//! starts. Documented defaults (integration step/horizon, estimator
//! initializations, analysis tolerances) are filled in and echoed back into
//! the resolved document that lands in the trace metadata sidecar, so a
//! recorded run always states the exact configuration it used.
//!
//! Overrides use dotted paths (`--set controller.delta=0.05`,
//! `--set plants.0.disturbance.kind=none`). Setting a `kind` field replaces
//! the whole tagged object, which is how a disturbance is switched off
//! without dragging its old parameters along.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::control::{ControllerConfig, InitialEstimates, Law, SignMode};
use crate::error::{Diagnostic, Error, Result};
use crate::game::{CertifyMethod, GameSpec};
use crate::graph::{SwitchingSchedule, Timeline};
use crate::plant::{DisturbanceKind, DisturbanceSpec, PlantSpec, Regressor};
use crate::sim::{Integration, Method, Plant, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Fallback seed for any seeded component that omits its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub game: GameSection,
    pub schedule: ScheduleSection,
    pub plants: Vec<PlantSection>,
    pub controller: ControllerSection,
    #[serde(default)]
    pub integration: IntegrationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub dims: Vec<usize>,
    pub cost: CostSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSection {
    #[serde(alias = "LinearQuadratic")]
    LinearQuadratic(LqCost),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqCost {
    /// Row-major `n × n` matrix.
    pub m: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// Adjacency matrices, row `i` column `j` holding `a_ij`.
    pub graphs: Vec<Vec<Vec<f64>>>,
    pub timeline: TimelineSection,
    /// Joint-connectivity window `nu`.
    pub window: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineSection {
    #[serde(alias = "Periodic")]
    Periodic(PeriodicTimeline),
    #[serde(alias = "Scripted")]
    Scripted(ScriptedTimeline),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicTimeline {
    /// Indices into `graphs`, cycled forever.
    pub order: Vec<usize>,
    pub dwell: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedTimeline {
    pub entries: Vec<ScriptedEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedEntry {
    pub start: f64,
    pub graph: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub order: usize,
    pub dim: usize,
    /// `order - 1` Hurwitz poles; reals or `[re, im]` pairs.
    #[serde(default)]
    pub poles: Vec<PoleSpec>,
    #[serde(default)]
    pub regressor: RegressorSection,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    /// `ξ_i(0)`, length `dim × order`; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoleSpec {
    Real(f64),
    Complex([f64; 2]),
}

impl PoleSpec {
    fn to_complex(&self) -> Complex<f64> {
        match self {
            PoleSpec::Real(re) => Complex::new(*re, 0.0),
            PoleSpec::Complex([re, im]) => Complex::new(*re, *im),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSection {
    #[default]
    #[serde(alias = "Zero")]
    Zero,
    #[serde(alias = "SinOfState")]
    SinOfState(ScaleParam),
    #[serde(alias = "BoundedRational")]
    BoundedRational(ScaleParam),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleParam {
    pub scale: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSection {
    #[default]
    #[serde(alias = "None")]
    None,
    #[serde(alias = "Sinusoid")]
    Sinusoid(SinusoidParams),
    #[serde(alias = "SquareWave")]
    SquareWave(SquareWaveParams),
    #[serde(alias = "PiecewiseConstantRandom")]
    PiecewiseConstantRandom(PcrParams),
    #[serde(alias = "Exosystem")]
    Exosystem(ExosystemParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidParams {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareWaveParams {
    pub amplitude: f64,
    pub period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcrParams {
    pub amplitude: f64,
    pub dwell: f64,
    /// Falls back to the scenario seed when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemParams {
    pub s: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
    pub v0: Vec<f64>,
    pub declared_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub law: LawSection,
    pub delta: f64,
    pub k: Vec<f64>,
    #[serde(default)]
    pub kappa: Vec<f64>,
    /// One entry per player: a vector is diagonal shorthand, nested arrays
    /// a full matrix.
    #[serde(default)]
    pub lambda: Vec<LambdaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_mode: Option<SignModeSection>,
    #[serde(default)]
    pub init: InitSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LawSection {
    #[serde(alias = "PerfectInfo")]
    PerfectInfo,
    #[serde(alias = "SingleIntegratorConsensus")]
    SingleIntegratorConsensus,
    #[serde(alias = "AdaptiveImperfect")]
    AdaptiveImperfect,
    #[serde(alias = "AdaptiveDisturbanceRejection")]
    AdaptiveDisturbanceRejection,
}

impl From<LawSection> for Law {
    fn from(l: LawSection) -> Law {
        match l {
            LawSection::PerfectInfo => Law::PerfectInfo,
            LawSection::SingleIntegratorConsensus => Law::SingleIntegratorConsensus,
            LawSection::AdaptiveImperfect => Law::AdaptiveImperfect,
            LawSection::AdaptiveDisturbanceRejection => Law::AdaptiveDisturbanceRejection,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSection {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignModeSection {
    #[serde(alias = "Exact")]
    Exact,
    #[serde(alias = "Smoothed")]
    Smoothed(SmoothedParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothedParams {
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    /// Omitted means `γ̂_i(0) = γ_i(0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    #[serde(default = "default_step", alias = "step")]
    pub h: f64,
    #[serde(default = "default_horizon", alias = "T")]
    pub horizon: f64,
    #[serde(default = "default_method")]
    pub method: MethodSection,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_step() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    50.0
}
fn default_method() -> MethodSection {
    MethodSection::Rk4
}
fn default_stride() -> usize {
    1
}

impl Default for IntegrationSection {
    fn default() -> Self {
        IntegrationSection {
            h: default_step(),
            horizon: default_horizon(),
            method: default_method(),
            stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodSection {
    #[serde(alias = "Euler")]
    Euler,
    #[serde(alias = "RK4", alias = "Rk4")]
    Rk4,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_ne: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_xs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_cap_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_increase_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<u8>,
}

/// Parse a scenario document strictly. Syntax errors carry line/column;
/// schema violations carry the offending field path.
pub fn parse_str(text: &str) -> Result<ScenarioFile> {
    // two-phase parse so schema errors can cite a field path
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    from_value(value)
}

/// Strictly deserialize an already-parsed document.
pub fn from_value(value: serde_json::Value) -> Result<ScenarioFile> {
    let deserializer = value.clone();
    let mut track = serde_path_to_error::Track::new();
    let path_de = serde_path_to_error::Deserializer::new(&deserializer, &mut track);
    let file: ScenarioFile = ScenarioFile::deserialize(path_de).map_err(|e| {
        Error::Validation(vec![Diagnostic {
            path: track.path().to_string(),
            message: e.to_string(),
        }])
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Validation(vec![Diagnostic {
            path: "schema_version".into(),
            message: format!("expected {SCHEMA_VERSION}, got {}", file.schema_version),
        }]));
    }
    Ok(file)
}

pub fn load_file(path: &std::path::Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

/// Apply one dotted-path override to a JSON document. Values parse as JSON
/// first and fall back to strings; assigning to a `kind` field swaps the
/// tagged object wholesale.
pub fn apply_override(root: &mut serde_json::Value, path: &str, raw: &str) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(Error::input(format!("malformed override path '{path}'")));
    }
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));

    let mut cursor = root;
    for (ix, seg) in segments.iter().enumerate() {
        let last = ix + 1 == segments.len();
        if last {
            if *seg == "kind" {
                // replace the tagged union rather than leaving stale params
                *cursor = serde_json::json!({ "kind": value });
            } else {
                match cursor {
                    serde_json::Value::Object(map) => {
                        map.insert(seg.to_string(), value);
                    }
                    serde_json::Value::Array(arr) => {
                        let i: usize = seg.parse().map_err(|_| {
                            Error::input(format!("'{seg}' is not an array index in '{path}'"))
                        })?;
                        let slot = arr.get_mut(i).ok_or_else(|| {
                            Error::input(format!("index {i} out of bounds in '{path}'"))
                        })?;
                        *slot = value;
                    }
                    _ => {
                        return Err(Error::input(format!(
                            "cannot set '{seg}' on a scalar in '{path}'"
                        )))
                    }
                }
            }
            return Ok(());
        }
        cursor = match cursor {
            serde_json::Value::Object(map) => map
                .entry(seg.to_string())
                .or_insert_with(|| serde_json::json!({})),
            serde_json::Value::Array(arr) => {
                let i: usize = seg.parse().map_err(|_| {
                    Error::input(format!("'{seg}' is not an array index in '{path}'"))
                })?;
                arr.get_mut(i)
                    .ok_or_else(|| Error::input(format!("index {i} out of bounds in '{path}'")))?
            }
            _ => {
                return Err(Error::input(format!("cannot descend into '{seg}' in '{path}'")));
            }
        };
    }
    unreachable!("loop returns on the last segment");
}

/// Parse with `key=value` overrides applied between the two phases.
pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<ScenarioFile> {
    let mut value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    for (path, raw) in overrides {
        apply_override(&mut value, path, raw)?;
    }
    from_value(value)
}

impl ScenarioFile {
    /// The document with all documented defaults made explicit; this is what
    /// lands in the metadata sidecar.
    pub fn resolved_value(&self, seed_override: Option<u64>) -> serde_json::Value {
        let mut file = self.clone();
        if let Some(seed) = seed_override {
            file.seed = Some(seed);
        } else if file.seed.is_none() {
            file.seed = Some(0);
        }
        if file.analysis.is_none() {
            file.analysis = Some(AnalysisSection::default());
        }
        serde_json::to_value(&file).expect("scenario files serialize")
    }

    /// Build and validate the runnable scenario. `seed_override` (the CLI
    /// `--seed` flag) takes precedence over the file-level seed for any
    /// seeded component that omits its own.
    pub fn build(&self, seed_override: Option<u64>) -> Result<Scenario> {
        let mut diags: Vec<Diagnostic> = Vec::new();
        let seed = seed_override.or(self.seed).unwrap_or(0);

        let n: usize = self.game.dims.iter().sum();
        let game = match &self.game.cost {
            CostSection::LinearQuadratic(lq) => {
                let rows = lq.m.len();
                let rect = lq.m.iter().all(|row| row.len() == rows);
                if rows != n || !rect {
                    diags.push(Diagnostic {
                        path: "game.cost.m".into(),
                        message: format!("must be a {n}x{n} row-major matrix"),
                    });
                    None
                } else if lq.r.len() != n {
                    diags.push(Diagnostic {
                        path: "game.cost.r".into(),
                        message: format!("must have length {n}"),
                    });
                    None
                } else {
                    let m = DMatrix::from_fn(n, n, |i, j| lq.m[i][j]);
                    let r = DVector::from_vec(lq.r.clone());
                    match GameSpec::linear_quadratic(self.game.dims.clone(), m, r) {
                        Ok(g) => Some(g),
                        Err(e) => {
                            diags.push(Diagnostic { path: "game".into(), message: e.to_string() });
                            None
                        }
                    }
                }
            }
        };

        let nodes = self.game.dims.len();
        let mut graphs = Vec::with_capacity(self.schedule.graphs.len());
        for (p, g) in self.schedule.graphs.iter().enumerate() {
            let ok = g.len() == nodes && g.iter().all(|row| row.len() == nodes);
            if !ok {
                diags.push(Diagnostic {
                    path: format!("schedule.graphs.{p}"),
                    message: format!("must be {nodes}x{nodes}"),
                });
                continue;
            }
            graphs.push(DMatrix::from_fn(nodes, nodes, |i, j| g[i][j]));
        }
        let timeline = match &self.schedule.timeline {
            TimelineSection::Periodic(p) => {
                Timeline::Periodic { order: p.order.clone(), dwell: p.dwell }
            }
            TimelineSection::Scripted(s) => Timeline::Scripted {
                entries: s.entries.iter().map(|e| (e.start, e.graph)).collect(),
            },
        };
        let schedule = if graphs.len() == self.schedule.graphs.len() {
            match SwitchingSchedule::new(graphs, timeline, self.schedule.window) {
                Ok(s) => Some(s),
                Err(e) => {
                    diags.push(Diagnostic { path: "schedule".into(), message: e.to_string() });
                    None
                }
            }
        } else {
            None
        };

        let mut plants = Vec::with_capacity(self.plants.len());
        for (i, ps) in self.plants.iter().enumerate() {
            match build_plant(ps, seed) {
                Ok(p) => plants.push(p),
                Err(e) => diags.push(Diagnostic {
                    path: format!("plants.{i}"),
                    message: e.to_string(),
                }),
            }
        }

        let law: Law = self.controller.law.into();
        let mut lambda = Vec::with_capacity(self.controller.lambda.len());
        for (i, l) in self.controller.lambda.iter().enumerate() {
            match l {
                LambdaSection::Diagonal(d) => {
                    lambda.push(DMatrix::from_fn(d.len(), d.len(), |a, b| {
                        if a == b {
                            d[a]
                        } else {
                            0.0
                        }
                    }));
                }
                LambdaSection::Full(rows) => {
                    let m = rows.len();
                    if rows.iter().any(|r| r.len() != m) {
                        diags.push(Diagnostic {
                            path: format!("controller.lambda.{i}"),
                            message: "full lambda matrix must be square".into(),
                        });
                        lambda.push(DMatrix::zeros(0, 0));
                    } else {
                        lambda.push(DMatrix::from_fn(m, m, |a, b| rows[a][b]));
                    }
                }
            }
        }
        let needs_adaptation =
            matches!(law, Law::AdaptiveImperfect | Law::AdaptiveDisturbanceRejection);
        if needs_adaptation && self.controller.lambda.is_empty() {
            // all-zero-parameter plants need no adaptation gains
            let any_params = self.plants.iter().any(|p| !p.theta.is_empty());
            if any_params {
                diags.push(Diagnostic {
                    path: "controller.lambda".into(),
                    message: "adaptive laws require one lambda entry per player".into(),
                });
            } else {
                lambda = self.plants.iter().map(|_| DMatrix::zeros(0, 0)).collect();
            }
        }
        let sign_mode = match &self.controller.sign_mode {
            None => SignMode::Exact,
            Some(SignModeSection::Exact) => SignMode::Exact,
            Some(SignModeSection::Smoothed(p)) => SignMode::Smoothed { epsilon: p.epsilon },
        };
        let to_dvecs = |v: &Option<Vec<Vec<f64>>>| -> Option<Vec<DVector<f64>>> {
            v.as_ref().map(|vs| vs.iter().map(|x| DVector::from_vec(x.clone())).collect())
        };
        let controller = ControllerConfig {
            law,
            delta: self.controller.delta,
            k: self.controller.k.clone(),
            kappa: self.controller.kappa.clone(),
            lambda,
            sign_mode,
            init: InitialEstimates {
                gamma_hat: to_dvecs(&self.controller.init.gamma_hat),
                z: to_dvecs(&self.controller.init.z),
                theta_hat: to_dvecs(&self.controller.init.theta_hat),
                d_hat: self.controller.init.d_hat.clone(),
            },
        };

        let integration = Integration {
            step: self.integration.h,
            horizon: self.integration.horizon,
            method: match self.integration.method {
                MethodSection::Euler => Method::Euler,
                MethodSection::Rk4 => Method::Rk4,
            },
            stride: self.integration.stride,
        };

        let mut analysis = AnalysisConfig::defaults_for(law);
        if let Some(a) = &self.analysis {
            if let Some(v) = a.tol_ne {
                analysis.tol_ne = v;
            }
            if let Some(v) = a.tol_xs {
                analysis.tol_xs = v;
            }
            if let Some(w) = a.fit_window {
                analysis.fit_window = (w[0], w[1]);
            }
            analysis.rate_max = a.rate_max.or(analysis.rate_max);
            if let Some(v) = a.bound_cap_factor {
                analysis.bound_cap_factor = v;
            }
            analysis.v_increase_tol = a.v_increase_tol.or(analysis.v_increase_tol);
            analysis.theorem = a.theorem.or(analysis.theorem);
        }

        let (Some(game), Some(schedule)) = (game, schedule) else {
            return Err(Error::Validation(diags));
        };
        if plants.len() != self.plants.len() {
            return Err(Error::Validation(diags));
        }
        let certificate = match game.certify(CertifyMethod::Exact) {
            Ok(c) => c,
            Err(e) => {
                diags.push(Diagnostic { path: "game.cost".into(), message: e.to_string() });
                return Err(Error::Validation(diags));
            }
        };
        if !diags.is_empty() {
            return Err(Error::Validation(diags));
        }

        let scenario =
            Scenario::new(game, certificate, schedule, plants, controller, integration, analysis)?;
        Ok(scenario.with_resolved(self.resolved_value(seed_override)))
    }
}

fn build_plant(ps: &PlantSection, fallback_seed: u64) -> Result<Plant> {
    let regressor = match &ps.regressor {
        RegressorSection::Zero => Regressor::Zero,
        RegressorSection::SinOfState(p) => Regressor::SinOfState { scale: p.scale },
        RegressorSection::BoundedRational(p) => Regressor::BoundedRational { scale: p.scale },
    };
    let disturbance = match &ps.disturbance {
        DisturbanceSection::None => DisturbanceSpec::none(),
        DisturbanceSection::Sinusoid(p) => DisturbanceSpec::new(
            DisturbanceKind::Sinusoid {
                amplitude: p.amplitude,
                frequency: p.frequency,
                phase: p.phase,
            },
            p.declared_bound,
        )?,
        DisturbanceSection::SquareWave(p) => DisturbanceSpec::new(
            DisturbanceKind::SquareWave { amplitude: p.amplitude, period: p.period },
            p.declared_bound,
        )?,
        DisturbanceSection::PiecewiseConstantRandom(p) => DisturbanceSpec::new(
            DisturbanceKind::PiecewiseConstantRandom {
                amplitude: p.amplitude,
                dwell: p.dwell,
                seed: p.seed.unwrap_or(fallback_seed),
            },
            p.declared_bound,
        )?,
        DisturbanceSection::Exosystem(p) => {
            let q = p.s.len();
            if p.s.iter().any(|r| r.len() != q) {
                return Err(Error::construction("exosystem s must be square"));
            }
            let rows = p.output.len();
            if p.output.iter().any(|r| r.len() != q) || p.v0.len() != q {
                return Err(Error::construction("exosystem output/v0 shapes are inconsistent"));
            }
            DisturbanceSpec::new(
                DisturbanceKind::Exosystem {
                    s_matrix: DMatrix::from_fn(q, q, |i, j| p.s[i][j]),
                    output: DMatrix::from_fn(rows, q, |i, j| p.output[i][j]),
                    v0: DVector::from_vec(p.v0.clone()),
                },
                Some(p.declared_bound),
            )?
        }
    };
    let spec = PlantSpec::new(
        ps.order,
        ps.dim,
        regressor,
        DVector::from_vec(ps.theta.clone()),
        disturbance,
    )?;
    let poles: Vec<Complex<f64>> = ps.poles.iter().map(|p| p.to_complex()).collect();
    let initial = ps.initial_state.as_ref().map(|v| DVector::from_vec(v.clone()));
    Plant::new(spec, &poles, initial)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_scenario_json() -> String {
        serde_json::json!({
            "schema_version": 1,
            "game": {
                "dims": [1, 1],
                "cost": { "kind": "linear_quadratic", "m": [[2.0, 1.0], [1.0, 2.0]], "r": [-2.0, -2.0] }
            },
            "schedule": {
                "graphs": [[[0.0, 1.0], [1.0, 0.0]]],
                "timeline": { "kind": "periodic", "order": [0], "dwell": 1.0 },
                "window": 1.0
            },
            "plants": [
                { "order": 1, "dim": 1 },
                { "order": 1, "dim": 1 }
            ],
            "controller": {
                "law": "single_integrator_consensus",
                "delta": 0.5,
                "k": [1.0, 1.0]
            },
            "integration": { "h": 0.01, "horizon": 5.0, "method": "rk4" }
        })
        .to_string()
    }

    #[test]
    fn minimal_scenario_parses_and_builds() {
        let file = parse_str(&minimal_scenario_json()).unwrap();
        let scenario = file.build(None).unwrap();
        assert_eq!(scenario.game.num_players(), 2);
        assert!(scenario.certificate.mu > 0.0);
        assert!(scenario.resolved.is_some());
    }

    #[test]
    fn unknown_fields_are_rejected_with_path() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        v["controller"]["bogus"] = serde_json::json!(1);
        match from_value(v) {
            Err(Error::Validation(diags)) => {
                assert!(diags[0].path.contains("controller"), "path: {}", diags[0].path);
                assert!(diags[0].message.contains("bogus"), "msg: {}", diags[0].message);
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_disturbance_params_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        v["plants"][0]["disturbance"] =
            serde_json::json!({ "kind": "sinusoid", "amplitude": 1.0, "frequency": 1.0, "junk": 3 });
        assert!(from_value(v).is_err());
    }

    #[test]
    fn parse_error_carries_line_and_column() {
        match parse_str("{ not json") {
            Err(Error::Parse(msg)) => assert!(msg.contains("line 1"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        v["schema_version"] = serde_json::json!(99);
        assert!(from_value(v).is_err());
    }

    #[test]
    fn nonpositive_delta_names_the_field() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        v["controller"]["delta"] = serde_json::json!(-0.5);
        let file = from_value(v).unwrap();
        match file.build(None) {
            Err(Error::Validation(diags)) => {
                assert!(
                    diags.iter().any(|d| d.path.starts_with("controller")),
                    "diags: {diags:?}"
                );
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn override_scalar_field() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        apply_override(&mut v, "controller.delta", "0.05").unwrap();
        assert_eq!(v["controller"]["delta"], serde_json::json!(0.05));
        apply_override(&mut v, "plants.1.order", "1").unwrap();
        assert_eq!(v["plants"][1]["order"], serde_json::json!(1));
    }

    #[test]
    fn override_kind_replaces_tagged_object() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        v["plants"][0]["disturbance"] =
            serde_json::json!({ "kind": "square_wave", "amplitude": 1.0, "period": 2.0 });
        apply_override(&mut v, "plants.0.disturbance.kind", "none").unwrap();
        assert_eq!(v["plants"][0]["disturbance"], serde_json::json!({ "kind": "none" }));
        // capitalized alias also parses
        apply_override(&mut v, "plants.0.disturbance.kind", "None").unwrap();
        assert!(from_value(v).is_ok());
    }

    #[test]
    fn override_bad_index_is_error() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        assert!(apply_override(&mut v, "plants.7.order", "1").is_err());
        assert!(apply_override(&mut v, "plants.x.order", "1").is_err());
    }

    #[test]
    fn step_alias_and_resolved_echo() {
        let mut v: serde_json::Value = serde_json::from_str(&minimal_scenario_json()).unwrap();
        v["integration"] = serde_json::json!({ "step": 0.02, "horizon": 1.0 });
        let file = from_value(v).unwrap();
        assert_eq!(file.integration.h, 0.02);
        let resolved = file.resolved_value(Some(7));
        assert_eq!(resolved["seed"], serde_json::json!(7));
        assert_eq!(resolved["integration"]["h"], serde_json::json!(0.02));
    }

    #[test]
    fn pole_specs_accept_reals_and_pairs() {
        let json = serde_json::json!({
            "order": 3, "dim": 1,
            "poles": [[-0.5, 0.866], [-0.5, -0.866]],
            "theta": [1.0],
            "regressor": { "kind": "sin_of_state", "scale": 1.0 }
        });
        let ps: PlantSection = serde_json::from_value(json).unwrap();
        let plant = build_plant(&ps, 0).unwrap();
        assert_eq!(plant.realization.order(), 3);
    }
}
