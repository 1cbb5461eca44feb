//! Versioned JSON ensemble configuration (`"schema": 1`).
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "mb-laguerre",
//!   "n": 30,
//!   "r": "x",
//!   "theta": 2,
//!   "gamma": 1,
//!   "alpha": 0,
//!   "potential": "x^2 + rho*x",
//!   "support": [0, "inf"],
//!   "scale": null,
//!   "params": { "rho": -1.5 }
//! }
//! ```
//!
//! Exactly one of `potential`, `askey_q`, `potential_table` must be present.
//! `s` defaults to `x^theta`; `r` defaults to `x`. Support endpoints are
//! numbers or the strings `"inf"` / `"-inf"`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BasicMapPair, EnsembleError, EnsembleSpec, Potential, Support, TabulatedPotential};
use crate::expr::Expression;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Number(f64),
    Text(String),
}

impl Endpoint {
    fn resolve(&self, path: &str) -> Result<f64, EnsembleError> {
        match self {
            Endpoint::Number(v) => Ok(*v),
            Endpoint::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(EnsembleError::Config {
                    path: path.into(),
                    message: format!("expected a number, \"inf\" or \"-inf\", got {other:?}"),
                }),
            },
        }
    }

    fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            Endpoint::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            Endpoint::Text("-inf".into())
        } else {
            Endpoint::Number(v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTable {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub n: usize,
    #[serde(default = "default_r")]
    pub r: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<String>,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub askey_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_table: Option<PotentialTable>,
    pub support: [Endpoint; 2],
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn default_r() -> String {
    "x".into()
}

fn one() -> f64 {
    1.0
}

fn field_err(path: &str, err: impl std::fmt::Display) -> EnsembleError {
    EnsembleError::Config {
        path: path.into(),
        message: err.to_string(),
    }
}

impl EnsembleConfig {
    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let cfg: EnsembleConfig = serde_json::from_str(text).map_err(|e| field_err("$", e))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(field_err(
                "schema",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    cfg.schema
                ),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field_err("$", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validate every field and build the spec (every ensemble invariant is checked eagerly).
    pub fn to_spec(&self) -> Result<EnsembleSpec, EnsembleError> {
        let parse = |path: &str, src: &str| -> Result<Expression, EnsembleError> {
            Expression::parse(src).map_err(|e| field_err(path, e))
        };
        let r = parse("r", &self.r)?;
        let s = match &self.s {
            Some(src) => parse("s", src)?,
            None => Expression::power_of_x(self.theta),
        };
        if self.s.is_some() && self.theta != 1.0 {
            if let Some(t) = s.monomial_exponent() {
                if t != self.theta {
                    return Err(field_err(
                        "theta",
                        format!("theta = {} disagrees with s = {}", self.theta, s),
                    ));
                }
            }
        }
        let potential = match (&self.potential, self.askey_q, &self.potential_table) {
            (Some(src), None, None) => Potential::Expr(parse("potential", src)?),
            (None, Some(q), None) => Potential::Askey { q },
            (None, None, Some(t)) => Potential::Tabulated(
                TabulatedPotential::new(t.x.clone(), t.v.clone())
                    .map_err(|e| field_err("potential_table", e))?,
            ),
            _ => {
                return Err(field_err(
                    "potential",
                    "exactly one of potential, askey_q, potential_table is required",
                ))
            }
        };
        let support = Support::new(
            self.support[0].resolve("support[0]")?,
            self.support[1].resolve("support[1]")?,
        )
        .map_err(|e| field_err("support", e))?;
        let name = if self.name.is_empty() {
            "ensemble".to_string()
        } else {
            self.name.clone()
        };
        EnsembleSpec::new(
            name,
            self.n,
            BasicMapPair::new(r, s),
            self.alpha,
            potential,
            support,
            self.params.clone(),
        )?
        .with_gamma(self.gamma)
        .map_err(|e| field_err("gamma", e))?
        .with_scale(self.scale)
        .map_err(|e| field_err("scale", e))
    }

    pub(crate) fn from_spec(spec: &EnsembleSpec) -> Self {
        let (potential, askey_q, potential_table) = match &spec.weight.potential {
            Potential::Expr(e) => (Some(e.to_string()), None, None),
            Potential::Askey { q } => (None, Some(*q), None),
            Potential::Tabulated(t) => (
                None,
                None,
                Some(PotentialTable {
                    x: t.xs().to_vec(),
                    v: t.vs().to_vec(),
                }),
            ),
        };
        let mut params = spec.params.clone();
        if spec.n_param_defaulted {
            params.remove("n");
        }
        Self {
            schema: SCHEMA_VERSION,
            name: spec.name.clone(),
            n: spec.n,
            r: spec.maps.r.to_string(),
            s: Some(spec.maps.s.to_string()),
            theta: spec.maps.monomial_theta().unwrap_or(1.0),
            gamma: spec.gamma,
            alpha: spec.weight.alpha,
            potential,
            askey_q,
            potential_table,
            support: [
                Endpoint::from_f64(spec.support().lo),
                Endpoint::from_f64(spec.support().hi),
            ],
            scale: spec.scale,
            params,
        }
    }
}

impl EnsembleSpec {
    pub fn from_config_json(text: &str) -> Result<Self, EnsembleError> {
        EnsembleConfig::from_json(text)?.to_spec()
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        EnsembleConfig::load(path)?.to_spec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GUE: &str =
        r#"{"schema": 1, "name": "gue", "n": 8, "potential": "x^2", "support": ["-inf", "inf"]}"#;

    #[test]
    fn gue_config_builds_expected_spec() {
        let spec = EnsembleSpec::from_config_json(GUE).unwrap();
        assert_eq!(spec.maps.monomial_theta(), Some(1.0));
        assert!(spec.maps.is_symmetric());
        assert_eq!(spec.support(), Support::real_line());
        assert_eq!(spec.weight.potential.eval_f64(2.0).unwrap(), 4.0);
    }

    #[test]
    fn mb_laguerre_config_round_trips_through_validation() {
        let text = r#"{
            "schema": 1, "name": "mb", "n": 12, "theta": 2, "alpha": 1,
            "potential": "x^2 + rho*x", "support": [0, "inf"], "params": {"rho": -1.0}
        }"#;
        let spec = EnsembleSpec::from_config_json(text).unwrap();
        let cfg = spec.to_config();
        let again = cfg.to_spec().unwrap();
        assert_eq!(spec.maps, again.maps);
        assert_eq!(spec.weight, again.weight);
        assert_eq!(spec.content_hash(), again.content_hash());
        let reparsed = EnsembleConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn schema_violations_name_the_field() {
        let bad_version = GUE.replace("\"schema\": 1", "\"schema\": 7");
        match EnsembleConfig::from_json(&bad_version) {
            Err(EnsembleError::Config { path, .. }) => assert_eq!(path, "schema"),
            other => panic!("{other:?}"),
        }
        let bad_support = GUE.replace("\"-inf\"", "\"minus infinity\"");
        match EnsembleSpec::from_config_json(&bad_support) {
            Err(EnsembleError::Config { path, .. }) => assert_eq!(path, "support[0]"),
            other => panic!("{other:?}"),
        }
        let bad_expr = GUE.replace("x^2", "x^^2");
        match EnsembleSpec::from_config_json(&bad_expr) {
            Err(EnsembleError::Config { path, .. }) => assert_eq!(path, "potential"),
            other => panic!("{other:?}"),
        }
        let two_potentials = GUE.replace("\"potential\"", "\"askey_q\": 0.5, \"potential\"");
        assert!(EnsembleSpec::from_config_json(&two_potentials).is_err());
        let unknown = GUE.replace("\"name\"", "\"colour\": 1, \"name\"");
        assert!(EnsembleConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn critical_and_tabulated_configs() {
        let crit = r#"{"schema": 1, "n": 6, "askey_q": 0.7, "support": [-1, 1]}"#;
        let spec = EnsembleSpec::from_config_json(crit).unwrap();
        assert!(matches!(spec.weight.potential, Potential::Askey { q } if q == 0.7));

        let tab = r#"{"schema": 1, "n": 4, "theta": 2, "gamma": 0.8,
            "potential_table": {"x": [0, 1, 2, 3, 4, 5, 6], "v": [0, 2, 4, 6, 8, 10, 12]},
            "support": [0, 6]}"#;
        let spec = EnsembleSpec::from_config_json(tab).unwrap();
        assert_eq!(spec.gamma, 0.8);
        assert!((spec.weight.potential.eval_f64(2.5).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn explicit_s_map_and_scale() {
        let text = r#"{"schema": 1, "n": 5, "s": "exp(2*x)", "potential": "x^8",
            "support": ["-inf", "inf"], "scale": 0.5}"#;
        let spec = EnsembleSpec::from_config_json(text).unwrap();
        assert_eq!(spec.maps.monomial_theta(), None);
        assert_eq!(spec.scale, Some(0.5));
    }
}
