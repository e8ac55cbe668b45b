//! Experiment configs: a versioned JSON envelope plus one params block per kind.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use corerad::curvature::QuadConfig;
use corerad::dislocation::DislocationParams;
use corerad::flow::FlowConfig;
use corerad::kernels::{Anisotropy, KernelParams};
use corerad::perimeter::{HRule, SweepMode, SweepOptions};
use corerad::shapes::{Coverage, Shape};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PerimeterSweep,
    JointSweep,
    CurvatureSweep,
    AxiomSuite,
    Flow,
    DislocationPreset,
    KernelSelftest,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::PerimeterSweep,
        Kind::JointSweep,
        Kind::CurvatureSweep,
        Kind::AxiomSuite,
        Kind::Flow,
        Kind::DislocationPreset,
        Kind::KernelSelftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::PerimeterSweep => "perimeter-sweep",
            Kind::JointSweep => "joint-sweep",
            Kind::CurvatureSweep => "curvature-sweep",
            Kind::AxiomSuite => "axiom-suite",
            Kind::Flow => "flow",
            Kind::DislocationPreset => "dislocation-preset",
            Kind::KernelSelftest => "kernel-selftest",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Kind::PerimeterSweep => "scaled nonlocal perimeter over a list of core radii, with an affine fit in the scale",
            Kind::JointSweep => "perimeter along a path (r_n, s_n) with s_n > 1, scaled by beta",
            Kind::CurvatureSweep => "nonlocal curvature at boundary points over a list of core radii",
            Kind::AxiomSuite => "randomized monotonicity, translation, symmetry and ball checks of the curvature",
            Kind::Flow => "planar level-set flow driven by the nonlocal curvature",
            Kind::DislocationPreset => "s = 1 dislocation flows against a front-tracking oracle",
            Kind::KernelSelftest => "identities and closed-form values of the kernel constants",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    schema_version: u32,
    kind: Kind,
    #[serde(default)]
    params: Value,
    output_dir: PathBuf,
    #[serde(default)]
    threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub params: Params,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    /// The parsed document, echoed into the manifest and hashed.
    pub raw: Value,
}

#[derive(Debug, Clone)]
pub enum Params {
    PerimeterSweep(PerimeterSweepParams),
    JointSweep(JointSweepParams),
    CurvatureSweep(CurvatureSweepParams),
    AxiomSuite(AxiomSuiteParams),
    Flow(FlowParams),
    DislocationPreset(DislocationPresetParams),
    KernelSelftest(KernelSelftestParams),
}

fn default_coverage() -> Coverage {
    SweepOptions::default().coverage
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerimeterSweepParams {
    pub shape: Shape,
    pub s: f64,
    pub r_list: Vec<f64>,
    #[serde(default)]
    pub h_rule: HRule,
    #[serde(default)]
    pub g: Anisotropy,
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default = "default_coverage")]
    pub coverage: Coverage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// `s_n = 1 + 1/|log r_n|`.
    InverseLog { r_list: Vec<f64> },
    /// `s_n = 1 + log|log r_n| / |log r_n|`.
    Loglog { r_list: Vec<f64> },
    Explicit { points: Vec<(f64, f64)> },
}

impl PathSpec {
    pub fn points(&self) -> Vec<(f64, f64)> {
        match self {
            PathSpec::InverseLog { r_list } => corerad::perimeter::inverse_log_path(r_list),
            PathSpec::Loglog { r_list } => corerad::perimeter::loglog_path(r_list),
            PathSpec::Explicit { points } => points.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSweepParams {
    pub shape: Shape,
    pub path: PathSpec,
    #[serde(default)]
    pub h_rule: HRule,
    #[serde(default)]
    pub g: Anisotropy,
    /// Largest radius of each telescoping chain; the first path radius when absent.
    #[serde(default)]
    pub r_start: Option<f64>,
    #[serde(default = "default_coverage")]
    pub coverage: Coverage,
}

fn default_points() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSweepParams {
    pub shape: Shape,
    pub s: f64,
    pub r_list: Vec<f64>,
    #[serde(default)]
    pub g: Anisotropy,
    /// Boundary points; `n_points` samples along the boundary when absent.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default)]
    pub quad: Option<QuadConfig>,
}

fn default_d() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxiomSuiteParams {
    #[serde(default = "default_d")]
    pub d: usize,
    pub s: f64,
    pub r: f64,
    #[serde(default)]
    pub g: Anisotropy,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    #[serde(default)]
    pub margin: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub shape: Shape,
    pub grid: GridBox,
    pub flow: FlowConfig,
}

fn default_preset_rule() -> HRule {
    HRule::Ratio { ratio: 4.0 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DislocationPresetParams {
    pub dislocation: DislocationParams,
    pub shape: Shape,
    pub r_list: Vec<f64>,
    #[serde(default = "default_preset_rule")]
    pub h_rule: HRule,
    pub t_end: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSelftestParams {
    #[serde(default)]
    pub seed: u64,
}

/// `a.b[2]` style paths from serde become `/a/b/2`.
fn pointer_of(path: &serde_path_to_error::Path, prefix: &str) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    out
}

fn decode<T: DeserializeOwned>(v: Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let pointer = pointer_of(e.path(), prefix);
        CliError::config(pointer, e.into_inner().to_string())
    })
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| CliError::config("", format!("invalid JSON: {e}")))?;
    let env: Envelope = decode(raw.clone(), "")?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(CliError::config("/schema_version", format!("unsupported schema_version {}, expected {SCHEMA_VERSION}", env.schema_version)));
    }
    if env.threads == Some(0) {
        return Err(CliError::config("/threads", "threads must be >= 1"));
    }
    let params = if env.params.is_null() { Value::Object(Default::default()) } else { env.params };
    let params = match env.kind {
        Kind::PerimeterSweep => Params::PerimeterSweep(decode(params, "/params")?),
        Kind::JointSweep => Params::JointSweep(decode(params, "/params")?),
        Kind::CurvatureSweep => Params::CurvatureSweep(decode(params, "/params")?),
        Kind::AxiomSuite => Params::AxiomSuite(decode(params, "/params")?),
        Kind::Flow => Params::Flow(decode(params, "/params")?),
        Kind::DislocationPreset => Params::DislocationPreset(decode(params, "/params")?),
        Kind::KernelSelftest => Params::KernelSelftest(decode(params, "/params")?),
    };
    let cfg = ExperimentConfig { kind: env.kind, params, output_dir: env.output_dir, threads: env.threads, raw };
    cfg.params.validate()?;
    Ok(cfg)
}

fn check_radii(r_list: &[f64], pointer: &str) -> Result<(), CliError> {
    if r_list.is_empty() {
        return Err(CliError::config(pointer, "r_list must not be empty"));
    }
    for (i, r) in r_list.iter().enumerate() {
        if !(*r > 0.0) || !r.is_finite() {
            return Err(CliError::config(format!("{pointer}/{i}"), format!("r must be > 0, got {r}")));
        }
    }
    Ok(())
}

fn check_shape(shape: &Shape) -> Result<(), CliError> {
    shape.validate().map_err(|e| CliError::from_core_at("/params/shape", e))
}

fn check_g(g: &Anisotropy, d: usize) -> Result<(), CliError> {
    g.clone().validated().and_then(|g| g.check_dim(d)).map_err(|e| CliError::from_core_at("/params/g", e))
}

fn check_kernel(d: usize, s: f64, r: f64, pointer: &str) -> Result<(), CliError> {
    KernelParams::new(d, s, r).map(|_| ()).map_err(|e| CliError::from_core_at(pointer, e))
}

fn check_rule(rule: &HRule, r_list: &[f64]) -> Result<(), CliError> {
    for r in r_list {
        rule.check(*r).map_err(|e| CliError::from_core_at("/params/h_rule", e))?;
    }
    Ok(())
}

impl Params {
    /// Semantic checks run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            Params::PerimeterSweep(p) => {
                check_shape(&p.shape)?;
                check_radii(&p.r_list, "/params/r_list")?;
                check_kernel(p.shape.dim(), p.s, p.r_list[0], "/params/s")?;
                check_g(&p.g, p.shape.dim())?;
                check_rule(&p.h_rule, &p.r_list)
            }
            Params::JointSweep(p) => {
                check_shape(&p.shape)?;
                let points = p.path.points();
                let rs: Vec<f64> = points.iter().map(|(r, _)| *r).collect();
                let ptr = match p.path {
                    PathSpec::Explicit { .. } => "/params/path/points",
                    _ => "/params/path/r_list",
                };
                check_radii(&rs, ptr)?;
                for (i, (r, s)) in points.iter().enumerate() {
                    if !(*r < 1.0) {
                        return Err(CliError::config(format!("{ptr}/{i}"), format!("r must be < 1 on a joint path, got {r}")));
                    }
                    if !(*s > 1.0) {
                        return Err(CliError::config(format!("{ptr}/{i}"), format!("s must be > 1 on a joint path, got {s}")));
                    }
                }
                if let Some(r0) = p.r_start {
                    if !(r0 > 0.0 && r0 < 1.0) {
                        return Err(CliError::config("/params/r_start", format!("r_start must lie in (0, 1), got {r0}")));
                    }
                }
                check_g(&p.g, p.shape.dim())?;
                check_rule(&p.h_rule, &rs)
            }
            Params::CurvatureSweep(p) => {
                check_shape(&p.shape)?;
                check_radii(&p.r_list, "/params/r_list")?;
                check_kernel(p.shape.dim(), p.s, p.r_list[0], "/params/s")?;
                check_g(&p.g, p.shape.dim())?;
                match &p.points {
                    Some(pts) if pts.is_empty() => Err(CliError::config("/params/points", "points must not be empty")),
                    Some(pts) => {
                        for (i, x) in pts.iter().enumerate() {
                            if x.len() != p.shape.dim() {
                                return Err(CliError::config(format!("/params/points/{i}"), "point dimension differs from the shape"));
                            }
                        }
                        Ok(())
                    }
                    None if p.n_points == 0 => Err(CliError::config("/params/n_points", "n_points must be >= 1")),
                    None => Ok(()),
                }
            }
            Params::AxiomSuite(p) => {
                check_kernel(p.d, p.s, p.r, "/params")?;
                check_g(&p.g, p.d)
            }
            Params::Flow(p) => {
                check_shape(&p.shape)?;
                p.flow.validate().map_err(|e| CliError::from_core_at("/params/flow", e))?;
                if p.grid.lo.len() != 2 || p.grid.hi.len() != 2 {
                    return Err(CliError::config("/params/grid", "the flow grid is planar"));
                }
                if !(p.grid.h > 0.0) {
                    return Err(CliError::config("/params/grid/h", format!("h must be > 0, got {}", p.grid.h)));
                }
                HRule::Fixed { h: p.grid.h }.check(p.flow.p.r).map_err(|e| CliError::from_core_at("/params/grid/h", e))?;
                Ok(())
            }
            Params::DislocationPreset(p) => {
                check_shape(&p.shape)?;
                p.dislocation.validate().map_err(|e| CliError::from_core_at("/params/dislocation", e))?;
                check_radii(&p.r_list, "/params/r_list")?;
                if !(p.t_end > 0.0) {
                    return Err(CliError::config("/params/t_end", format!("t_end must be > 0, got {}", p.t_end)));
                }
                check_rule(&p.h_rule, &p.r_list)
            }
            Params::KernelSelftest(_) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(kind: &str, params: &str) -> String {
        format!(r#"{{"schema_version": 1, "kind": "{kind}", "output_dir": "out", "params": {params}}}"#)
    }

    #[test]
    fn negative_radius_points_at_entry() {
        let text = doc("perimeter-sweep", r#"{"shape": {"type": "ball", "center": [0, 0], "radius": 1}, "s": 2, "r_list": [0.1, -0.05]}"#);
        match parse(&text) {
            Err(CliError::Config { pointer, message }) => {
                assert_eq!(pointer, "/params/r_list/1");
                assert!(message.contains("r must be > 0"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = doc("kernel-selftest", r#"{"seed": 1, "sed": 2}"#);
        assert!(matches!(parse(&text), Err(CliError::Config { .. })));
        let text = r#"{"schema_version": 1, "kind": "kernel-selftest", "output_dir": "o", "extra": 1}"#;
        assert!(matches!(parse(text), Err(CliError::Config { .. })));
        let text = doc("axiom-suite", r#"{"s": 2, "r": 0.1, "g": {"type": "dislocation", "mu": 1, "poisson": 0.2, "nu": 0}}"#);
        assert!(matches!(parse(&text), Err(CliError::Config { .. })));
    }

    #[test]
    fn nested_type_errors_carry_pointer() {
        let text = doc("flow", r#"{"shape": {"type": "ball", "center": [0, 0], "radius": 0.5}, "grid": {"lo": [-1, -1], "hi": [1, 1], "h": "x"}, "flow": {"p": {"d": 2, "s": 2, "r": 0.1}, "t_end": 0.01, "snapshot_dt": 0.01}}"#);
        match parse(&text) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/params/grid/h"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coarse_grid_is_a_guard() {
        let text = doc("perimeter-sweep", r#"{"shape": {"type": "ball", "center": [0, 0], "radius": 1}, "s": 2, "r_list": [0.1], "h_rule": {"type": "ratio", "ratio": 2}}"#);
        assert!(matches!(parse(&text), Err(CliError::Guard(_))));
    }

    #[test]
    fn dislocation_anisotropy_parses() {
        let text = doc("axiom-suite", r#"{"s": 1, "r": 0.1, "g": {"type": "dislocation", "mu": 1, "poisson": 0.2}}"#);
        let cfg = parse(&text).unwrap();
        let Params::AxiomSuite(p) = cfg.params else { panic!() };
        assert!(matches!(p.g, Anisotropy::Dislocation(_)));
    }

    #[test]
    fn wrong_schema_version() {
        let text = r#"{"schema_version": 2, "kind": "kernel-selftest", "output_dir": "o"}"#;
        match parse(text) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/schema_version"),
            other => panic!("{other:?}"),
        }
    }
}
