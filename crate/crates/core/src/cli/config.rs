//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": { "type": "linear", "dim": 1, "decay": 3.0, "delay_gain": 1.0,
//!              "diffusion": { "state": 0.5 } },
//!   "marks": { "rate": 0.16, "distribution": { "type": "atoms", "points": [[2.5]], "weights": [1.0] } },
//!   "initial": { "type": "constant", "value": [2.0] },
//!   "initial_alt": { "type": "constant", "value": [0.5] },
//!   "simulation": { "delay": 1.0, "step": 0.015625, "horizon": 20.0, "paths": 100, "seed": 7 },
//!   "experiment": { "output_every": 64 }
//! }
//! ```
//!
//! Unknown keys are errors. Defaults: `noise_dim = dim`, all model rates
//! other than `decay` and `delay_gain` zero, no jumps, `paths = 1`,
//! `seed = 0`, `output_every = τ/h`, `burn_in = 50τ`, `stride = τ`,
//! `ks_alpha = 0.01`, `coordinate = 0`, occupation band `10√h`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::history::InitialSegment;
use crate::integrator::SimConfig;
use crate::model::{build_linear_model, LinearDiffusion, LinearModel, LinearModelParams, RateFn};
use crate::randomness::{MarkDistribution, MarkMeasure, MarkMoments};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem tied to a key of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}, key `{}`: {}", self.key, self.message),
            None => write!(f, "config error, key `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Linear {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_dim: Option<usize>,
        decay: RateFn,
        delay_gain: RateFn,
        #[serde(default = "zero_rate")]
        jump_state_gain: RateFn,
        #[serde(default = "zero_rate")]
        jump_delay_gain: RateFn,
        #[serde(default)]
        diffusion: LinearDiffusion,
    },
}

fn zero_rate() -> RateFn {
    RateFn::Constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkDistributionSpec {
    Constant { value: Vec<f64> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarksSpec {
    pub rate: f64,
    pub distribution: MarkDistributionSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Grid steps between output rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<usize>,
    /// Occupation band `ε`; only for a single level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
    /// Step sizes of a local-time refinement sweep, each with `ε = 10√h`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinements: Vec<f64>,
}

/// The file as written, after defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marks: Option<MarksSpec>,
    pub initial: InitialSegment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_alt: Option<InitialSegment>,
    pub simulation: SimConfig,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

/// A validated configuration with the library objects built.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub raw: RunConfig,
    pub params: LinearModelParams,
    pub model: LinearModel,
    pub marks: MarkMeasure,
    pub digest: String,
}

impl LoadedConfig {
    pub fn sim(&self) -> &SimConfig {
        &self.raw.simulation
    }

    pub fn lag(&self) -> usize {
        self.raw.simulation.lag().expect("validated")
    }

    pub fn output_every(&self) -> usize {
        self.raw.experiment.output_every.unwrap_or_else(|| self.lag()).max(1)
    }

    pub fn burn_in(&self) -> f64 {
        self.raw.experiment.burn_in.unwrap_or(50.0 * self.sim().delay)
    }

    pub fn stride(&self) -> f64 {
        self.raw.experiment.stride.unwrap_or(self.sim().delay)
    }

    pub fn ks_alpha(&self) -> f64 {
        self.raw.experiment.ks_alpha.unwrap_or(0.01)
    }

    pub fn coordinate(&self) -> usize {
        self.raw.experiment.coordinate.unwrap_or(0)
    }

    /// The second initial segment, required by two-start experiments.
    pub fn initial_alt(&self) -> Result<&InitialSegment, ConfigError> {
        self.raw
            .initial_alt
            .as_ref()
            .ok_or_else(|| config_error(None, "initial_alt", "this command needs a second initial segment"))
    }
}

/// 1-based line of the first occurrence of `"key"` in the text.
fn find_line(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    let needle = format!("\"{leaf}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

pub(crate) fn config_error(text: Option<&str>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line: text.and_then(|t| find_line(t, key)),
        message: message.into(),
    }
}

fn lib_error(text: &str, section: &str, err: Error) -> ConfigError {
    match err {
        Error::InvalidParameter { name, reason } => {
            let key = format!("{section}.{name}");
            config_error(Some(text), &key, reason)
        }
        other => config_error(Some(text), section, other.to_string()),
    }
}

/// Pull the offending key out of a serde message such as
/// "unknown field `foo`, expected ..." or "missing field `bar`".
fn serde_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(message[start..end].to_string())
}

impl RunConfig {
    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: "<file>".into(),
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: RunConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let key = serde_key(&msg).unwrap_or_else(|| "<json>".into());
        let line = if msg.contains("unknown field") {
            find_line(text, &key).or(Some(e.line()))
        } else {
            Some(e.line())
        };
        ConfigError {
            key,
            line,
            message: msg,
        }
    })?;
    validate(raw, text)
}

fn validate(raw: RunConfig, text: &str) -> Result<LoadedConfig, ConfigError> {
    let t = Some(text);
    if raw.schema_version != SCHEMA_VERSION {
        return Err(config_error(
            t,
            "schema_version",
            format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                raw.schema_version
            ),
        ));
    }
    raw.simulation
        .validate()
        .map_err(|e| lib_error(text, "simulation", e))?;
    let delay = raw.simulation.delay;

    let ModelSpec::Linear {
        dim,
        noise_dim,
        decay,
        delay_gain,
        jump_state_gain,
        jump_delay_gain,
        diffusion,
    } = raw.model.clone();

    let marks = match &raw.marks {
        None => MarkMeasure::none(dim),
        Some(spec) => {
            let dist = match spec.distribution.clone() {
                MarkDistributionSpec::Constant { value } => MarkDistribution::Constant(value),
                MarkDistributionSpec::UniformBox { lower, upper } => MarkDistribution::UniformBox { lower, upper },
                MarkDistributionSpec::Atoms { points, weights } => MarkDistribution::Atoms { points, weights },
            };
            MarkMeasure::new(spec.rate, dist).map_err(|e| lib_error(text, "marks", e))?
        }
    };
    if marks.total_rate() > 0.0 && marks.dim() != dim {
        return Err(config_error(
            t,
            "distribution",
            format!("marks have dimension {}, model.dim is {dim}", marks.dim()),
        ));
    }

    let params = LinearModelParams {
        dim,
        noise_dim: noise_dim.unwrap_or(dim),
        decay,
        delay_gain,
        jump_state_gain,
        jump_delay_gain,
        diffusion,
        mark_moments: if marks.total_rate() > 0.0 {
            marks.moments()
        } else {
            MarkMoments::zero(dim)
        },
        delay,
    };
    let model = build_linear_model(params.clone()).map_err(|e| lib_error(text, "model", e))?;

    for (key, seg) in [
        ("initial", Some(&raw.initial)),
        ("initial_alt", raw.initial_alt.as_ref()),
    ] {
        let Some(seg) = seg else { continue };
        if seg.dim() != dim {
            return Err(config_error(
                t,
                key,
                format!("segment has dimension {}, model.dim is {dim}", seg.dim()),
            ));
        }
        seg.validate(delay).map_err(|e| lib_error(text, key, e))?;
    }

    let exp = &raw.experiment;
    if let Some(0) = exp.output_every {
        return Err(config_error(t, "output_every", "must be at least 1"));
    }
    if let Some(c) = exp.coordinate {
        if c >= dim {
            return Err(config_error(
                t,
                "coordinate",
                format!("coordinate {c} out of range for dimension {dim}"),
            ));
        }
    }
    for (key, v) in [("burn_in", exp.burn_in), ("band", exp.band)] {
        if let Some(v) = v {
            if !(v >= 0.0) || !v.is_finite() || (key == "band" && v == 0.0) {
                return Err(config_error(t, key, format!("invalid value {v}")));
            }
        }
    }
    if let Some(s) = exp.stride {
        if !(s > 0.0) {
            return Err(config_error(t, "stride", format!("stride must be positive, got {s}")));
        }
    }
    if let Some(a) = exp.ks_alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(config_error(t, "ks_alpha", format!("must lie in (0, 1), got {a}")));
        }
    }
    for &h in &exp.refinements {
        crate::history::steps_per_delay(delay, h).map_err(|e| lib_error(text, "refinements", e))?;
    }

    let digest = raw.digest();
    Ok(LoadedConfig {
        raw,
        params,
        model,
        marks,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
  "schema_version": 1,
  "model": { "type": "linear", "dim": 1, "decay": 3.0, "delay_gain": 1.0 },
  "initial": { "type": "constant", "value": [1.0] },
  "simulation": { "delay": 1.0, "step": 0.25, "horizon": 2.0 }
}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.sim().paths, 1);
        assert_eq!(c.sim().seed, 0);
        assert_eq!(c.output_every(), 4);
        assert_eq!(c.burn_in(), 50.0);
        assert_eq!(c.params.noise_dim, 1);
        assert_eq!(c.marks.total_rate(), 0.0);
    }

    #[test]
    fn non_integer_lag_is_rejected_with_key() {
        let text = MINIMAL.replace("\"step\": 0.25", "\"step\": 0.3");
        let err = parse_config(&text).unwrap_err();
        assert!(err.message.contains("τ/h must be an integer"), "{err}");
        assert_eq!(err.key, "simulation.step");
        assert_eq!(err.line, Some(5));
    }

    #[test]
    fn unknown_field_names_key_and_line() {
        let text = MINIMAL.replace("\"horizon\": 2.0", "\"horizon\": 2.0, \"horizn\": 3");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "horizn");
        assert_eq!(err.line, Some(5));
    }

    #[test]
    fn missing_field_names_key() {
        let text = MINIMAL.replace("\"decay\": 3.0, ", "");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "decay");
    }

    #[test]
    fn constraint_violation_names_key() {
        let text = MINIMAL.replace("\"decay\": 3.0", "\"decay\": -1.0");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "model.decay");
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn round_trip_keeps_digest() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(&a.raw.to_json_pretty()).unwrap();
        assert_eq!(a.digest, b.digest);
        let c = parse_config(&MINIMAL.replace("3.0", "3.5")).unwrap();
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn mark_dimension_checked() {
        let text = MINIMAL.replace(
            "\"initial\"",
            "\"marks\": { \"rate\": 1.0, \"distribution\": { \"type\": \"constant\", \"value\": [1.0, 2.0] } },\n  \"initial\"",
        );
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "distribution");
    }
}
