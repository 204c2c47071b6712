//! Run configuration: JSON file plus `--key=value` overrides.

use dmesh::losses::LossWeights;
use dmesh::optimizer::OptConfig;
use dmesh::probability::ProbConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand this config was written for; filled in when absent.
    pub mode: Option<String>,
    pub input: Option<PathBuf>,
    /// Reference mesh for `reconstruct-pc` and `eval`.
    pub gt: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    /// Vertex indices for `probe`.
    pub face: Vec<u32>,
    /// Point counts, dimensions and simplex orders for `bench-oracle`.
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    /// Empty means both d−1 and d.
    pub k: Vec<usize>,
    pub weight_variance: f64,
    pub balanced: bool,
    pub run_prior: bool,
    pub eval_samples: usize,
    pub f1_threshold: f64,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub save_moments: bool,
    /// Fit inputs into [0.1, 0.9]³ before optimizing.
    pub normalize: bool,
    pub prob: ProbConfig,
    pub loss: LossWeights,
    pub opt: OptConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            input: None,
            gt: None,
            output: PathBuf::from("dmesh-out"),
            seed: 0,
            face: Vec::new(),
            n: vec![100, 1000],
            d: vec![2, 3],
            k: Vec::new(),
            weight_variance: 1e-3,
            balanced: true,
            run_prior: true,
            eval_samples: 100_000,
            f1_threshold: 0.01,
            checkpoint_every: 0,
            save_moments: false,
            normalize: true,
            prob: ProbConfig::default(),
            loss: LossWeights::default(),
            opt: OptConfig::default(),
        }
    }
}

const SECTIONS: [&str; 3] = ["prob", "loss", "opt"];

/// Override value: JSON when it parses, a list when comma separated,
/// otherwise a plain string.
fn parse_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        if let Ok(v) = serde_json::from_str::<Value>(&format!("[{raw}]")) {
            return v;
        }
    }
    Value::String(raw.to_string())
}

/// Path of `key` inside the config tree. Bare keys may name a field of
/// one section, e.g. `lr` for `opt.lr`.
fn resolve(tree: &Map<String, Value>, key: &str) -> Result<Vec<String>, String> {
    let key = key.replace('-', "_");
    if key.contains('.') {
        return Ok(key.split('.').map(str::to_string).collect());
    }
    if tree.contains_key(&key) {
        return Ok(vec![key]);
    }
    let hits: Vec<&str> =
        SECTIONS.iter().copied().filter(|s| tree.get(*s).and_then(Value::as_object).is_some_and(|m| m.contains_key(&key))).collect();
    match hits.as_slice() {
        [s] => Ok(vec![s.to_string(), key]),
        [] => Err(format!("unknown config key `{key}`")),
        _ => Err(format!("ambiguous config key `{key}`; use one of {}", hits.iter().map(|s| format!("{s}.{key}")).collect::<Vec<_>>().join(", "))),
    }
}

fn set_path(tree: &mut Value, path: &[String], value: Value) -> Result<(), String> {
    let mut node = tree;
    for (i, part) in path.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| format!("`{}` is not a section", path[..i].join(".")))?;
        if i + 1 == path.len() {
            let value = match (obj.get(part), value) {
                // a single item for a list field
                (Some(Value::Array(_)), v @ (Value::Number(_) | Value::String(_))) => Value::Array(vec![v]),
                (_, v) => v,
            };
            obj.insert(part.clone(), value);
            return Ok(());
        }
        node = obj.entry(part.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Layers `file` (a JSON document) and `overrides` over the defaults.
pub fn build(file: Option<&str>, overrides: &[(String, String)]) -> Result<RunConfig, String> {
    let base: RunConfig = match file {
        Some(text) => serde_json::from_str(text).map_err(|e| format!("config: {e}"))?,
        None => RunConfig::default(),
    };
    let mut tree = serde_json::to_value(&base).map_err(|e| e.to_string())?;
    for (k, v) in overrides {
        let path = resolve(tree.as_object().expect("config serializes to an object"), k)?;
        set_path(&mut tree, &path, parse_value(v))?;
    }
    let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| format!("config: {e}"))?;
    cfg.prob.validate().map_err(|e| e.to_string())?;
    cfg.loss.validate().map_err(|e| e.to_string())?;
    cfg.opt.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Splits `--key=value` and `--key value` pairs; a leading argument
/// without dashes is the config path.
pub fn split_args(args: &[String]) -> Result<(Option<PathBuf>, Vec<(String, String)>), String> {
    let mut path = None;
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        if let Some(body) = a.strip_prefix("--") {
            if let Some((k, v)) = body.split_once('=') {
                pairs.push((k.to_string(), v.to_string()));
            } else if let Some(v) = args.get(i + 1).filter(|v| !v.starts_with("--")) {
                pairs.push((body.to_string(), v.clone()));
                i += 1;
            } else {
                pairs.push((body.to_string(), "true".to_string()));
            }
        } else if path.is_none() && i == 0 {
            path = Some(PathBuf::from(a));
        } else {
            return Err(format!("unexpected argument `{a}`"));
        }
        i += 1;
    }
    Ok((path, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let (_, pairs) = split_args(&s(&["--lr=1e-3", "--n", "100,1000", "--prob.beta", "50", "--save-moments"])).unwrap();
        let c = build(None, &pairs).unwrap();
        assert_eq!(c.opt.lr, 1e-3);
        assert_eq!(c.n, vec![100, 1000]);
        assert_eq!(c.prob.beta, 50.0);
        assert!(c.save_moments);
    }

    #[test]
    fn single_value_for_list() {
        let c = build(None, &[("d".into(), "2".into())]).unwrap();
        assert_eq!(c.d, vec![2]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(build(None, &[("nope".into(), "1".into())]).is_err());
        assert!(build(Some(r#"{"opt": {"nope": 1}}"#), &[]).is_err());
        assert!(build(Some(r#"{"seed": 3}"#), &[]).unwrap().seed == 3);
    }

    #[test]
    fn config_round_trips() {
        let c = build(None, &[("seed".into(), "9".into())]).unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(build(Some(&text), &[]).unwrap(), c);
    }
}
