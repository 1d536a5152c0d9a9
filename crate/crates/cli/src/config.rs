use std::path::Path;

use serde::Deserialize;
use tamer::adlv::{LevelParams, Regime};
use tamer::chars::{CharCtx, ValueRing};
use tamer::Field;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub p: u32,
    #[serde(default = "one")]
    pub r: u32,
    #[serde(default)]
    pub modulus_coeffs: Option<Vec<u32>>,
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub ell_prime: Option<u64>,
    #[serde(default = "two")]
    pub test_extension_degree: u32,
    /// Index into the minimal characters of level m.
    #[serde(default)]
    pub chi_index: usize,
    /// Largest |Y| the oracle commands will touch.
    #[serde(default = "budget")]
    pub oracle_budget: usize,
    /// Random U_J elements added to the trace table.
    #[serde(default = "samples")]
    pub samples: usize,
}

fn one() -> u32 {
    1
}
fn two() -> u32 {
    2
}
fn budget() -> usize {
    1_000_000
}
fn samples() -> usize {
    200
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub field: &'static Field,
    pub level: LevelParams,
    pub vr: ValueRing,
}

impl RunConfig {
    pub fn ctx(&self) -> CharCtx {
        CharCtx::new(self.field, self.raw.m, self.vr)
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let raw: RawConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    validate(raw)
}

pub fn validate(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let bad = |e: tamer::Error| ConfigError::Invalid(e.to_string());
    if let Some(mc) = &raw.modulus_coeffs {
        if mc.len() != raw.r as usize + 1 {
            return Err(ConfigError::Invalid(format!("modulus_coeffs: expected {} coefficients, got {}", raw.r + 1, mc.len())));
        }
    }
    if raw.test_extension_degree < 2 {
        return Err(ConfigError::Invalid("test_extension_degree must be at least 2".into()));
    }
    let field = Field::new(raw.p, raw.r, raw.modulus_coeffs.clone()).map_err(bad)?;
    let level = LevelParams::new(field, raw.m, raw.n).map_err(bad)?;
    if level.regime == Regime::General {
        return Err(ConfigError::Invalid(format!("need m = 2n - 1 or n >= m + 1 (m={}, n={})", raw.m, raw.n)));
    }
    let vr = match raw.ell_prime {
        Some(ell) => ValueRing::new(field, raw.m, ell),
        None => ValueRing::auto(field, raw.m),
    }
    .map_err(|e| ConfigError::Invalid(format!("ell_prime: {e}")))?;
    Ok(RunConfig { raw, field, level, vr })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(json: &str) -> RawConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn defaults_filled() {
        let c = validate(raw(r#"{"p":3,"m":1,"n":1}"#)).unwrap();
        assert_eq!(c.raw.r, 1);
        assert_eq!(c.vr.ell, ValueRing::auto(c.field, 1).unwrap().ell);
        assert!(c.vr.ell > 12 && (c.vr.ell - 1) % 12 == 0);
    }

    #[test]
    fn rejections() {
        assert!(validate(raw(r#"{"p":3,"m":1,"n":1,"ell_prime":7}"#)).is_err());
        assert!(validate(raw(r#"{"p":2,"m":1,"n":1}"#)).is_err());
        assert!(validate(raw(r#"{"p":9,"m":1,"n":1}"#)).is_err());
        assert!(validate(raw(r#"{"p":3,"m":2,"n":2}"#)).is_err());
        assert!(validate(raw(r#"{"p":3,"m":3,"n":3}"#)).is_err());
        assert!(serde_json::from_str::<RawConfig>(r#"{"p":3,"m":1}"#).is_err());
        assert!(serde_json::from_str::<RawConfig>(r#"{"p":3,"m":1,"n":1,"q":3}"#).is_err());
    }
}
