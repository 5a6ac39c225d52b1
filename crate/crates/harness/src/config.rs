use std::collections::BTreeSet;

use savgo_core::trainer::ExperimentConfig;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Every key a config document may contain: the flat serialized form of
/// [`ExperimentConfig`].
pub fn known_keys() -> BTreeSet<String> {
    match serde_json::to_value(ExperimentConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("ExperimentConfig serializes to an object"),
    }
}

/// Parses and validates a config document. The env id is mandatory; every
/// other key falls back to its default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Schema(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(HarnessError::Schema("config must be a JSON object".into()));
    };
    check_keys(&map)?;
    if !map.contains_key("env") {
        return Err(HarnessError::Schema("missing required key `env`".into()));
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| HarnessError::Schema(e.to_string()))?;
    cfg.validate().map_err(HarnessError::Schema)?;
    Ok(cfg)
}

fn check_keys(map: &Map<String, Value>) -> Result<(), HarnessError> {
    let known = known_keys();
    let unknown: Vec<&str> = map.keys().filter(|k| !known.contains(*k)).map(String::as_str).collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Schema(format!("unknown keys: {}", unknown.join(", "))))
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}

/// The effective config as written next to every run: all keys, defaults
/// applied, ablation flags folded in.
pub fn echo(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(&cfg.effective()).expect("config serializes");
    s.push('\n');
    s
}

/// SHA-256 of the effective config echo, hex encoded.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    Sha256::digest(echo(cfg).as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a comma-separated CLI value list. Whitespace around items is
/// ignored; empty items are rejected.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, HarnessError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(HarnessError::Usage(format!("empty item in list `{s}`")));
    }
    items
        .into_iter()
        .map(|i| i.parse::<T>().map_err(|e| HarnessError::Usage(format!("bad list item `{i}`: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use savgo_core::envs::EnvId;
    use savgo_core::trainer::Algorithm;

    #[test]
    fn minimal_document() {
        let c = parse_config(r#"{"env": "pendulum", "algorithm": "sac", "total_steps": 2000}"#).unwrap();
        assert_eq!((c.env, c.algorithm, c.total_steps), (EnvId::Pendulum, Algorithm::Sac, 2000));
        assert_eq!(c.batch_size, ExperimentConfig::default().batch_size);
    }

    #[test]
    fn flat_geometry_and_kernel_keys() {
        let c = parse_config(r#"{"env": "reacher2d", "lambda": 2.0, "k": 16, "epsilon": 0.1}"#).unwrap();
        assert_eq!((c.geometry.lambda, c.kernel.k, c.kernel.epsilon), (2.0, 16, 0.1));
        assert!(known_keys().contains("rho_max") && known_keys().contains("huber_delta"));
    }

    #[test]
    fn unknown_keys_are_listed() {
        let e = parse_config(r#"{"env": "pendulum", "lamda": 1, "batchsize": 3}"#).unwrap_err().to_string();
        assert!(e.contains("batchsize") && e.contains("lamda"), "{e}");
    }

    #[test]
    fn missing_env_and_invalid_values() {
        assert!(parse_config(r#"{"algorithm": "sac"}"#).unwrap_err().to_string().contains("env"));
        assert!(parse_config(r#"{"env": "mujoco"}"#).is_err());
        assert!(parse_config(r#"{"env": "pendulum", "gamma": 1.0}"#).is_err());
        assert!(parse_config("[1, 2]").is_err());
        assert!(parse_config("{").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = parse_config(r#"{"env": "lqr1d", "seed": 4, "uniform_kernel": true}"#).unwrap();
        let back = parse_config(&echo(&c)).unwrap();
        assert_eq!(back, c.effective());
        assert_eq!(back.kernel.epsilon, 1.0);
        assert_eq!(config_hash(&back), config_hash(&c));
        assert_ne!(config_hash(&c), config_hash(&ExperimentConfig { seed: 5, ..c.clone() }));
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_list::<f64>("0.25, 0.5,1").unwrap(), vec![0.25, 0.5, 1.0]);
        assert_eq!(parse_list::<u64>("7").unwrap(), vec![7]);
        assert!(parse_list::<u64>("1,,2").is_err());
        assert!(parse_list::<u64>("").is_err());
        assert!(parse_list::<u64>("1,x").is_err());
    }
}
