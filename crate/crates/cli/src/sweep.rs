//! Parameter paths into model and environment documents.
//!
//! `builder.<key>` sets a builder parameter, `mean.<habitat>` an explicit
//! mean, `env.alpha` / `env.beta` the switching rates and
//! `env.means.<state>.<habitat>` a per-state mean (states 1-based). The
//! targeted key must already exist, so a typo is an error, not a new field.

use anyhow::{bail, Context, Result};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Document {
    Model,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamPath {
    pub text: String,
    document: Document,
    keys: Vec<String>,
}

impl ParamPath {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split('.').collect();
        let (document, keys) = match parts.as_slice() {
            ["builder", key] => (Document::Model, vec!["builder".into(), key.to_string()]),
            ["mean", habitat] => (
                Document::Model,
                vec!["mean_offspring".into(), habitat.to_string()],
            ),
            ["env", "alpha"] | ["env", "beta"] => (Document::Environment, vec![parts[1].to_string()]),
            ["env", "means", state, habitat] => {
                let s: usize = state
                    .parse()
                    .ok()
                    .filter(|&s| s >= 1)
                    .with_context(|| format!("state in {text:?} must be a positive integer"))?;
                (
                    Document::Environment,
                    vec!["means".into(), (s - 1).to_string(), habitat.to_string()],
                )
            }
            _ => bail!(
                "invalid parameter path {text:?}; expected builder.<key>, mean.<habitat>, \
                 env.alpha, env.beta or env.means.<state>.<habitat>"
            ),
        };
        if keys.last().is_some_and(|k| k == "family") {
            bail!("the builder family cannot be swept");
        }
        Ok(Self {
            text: text.to_string(),
            document,
            keys,
        })
    }

    pub fn document(&self) -> Document {
        self.document
    }

    /// Writes `value` at the path; the path must exist.
    pub fn set(&self, doc: &mut Value, value: f64) -> Result<()> {
        let mut node = doc;
        for key in &self.keys {
            node = match node {
                Value::Object(map) => map.get_mut(key),
                Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .with_context(|| format!("parameter path {:?} does not exist in the document", self.text))?;
        }
        if !node.is_number() {
            bail!("parameter path {:?} does not hold a number", self.text);
        }
        *node = serde_json::Number::from_f64(value)
            .map(Value::Number)
            .with_context(|| format!("sweep value {value} is not finite"))?;
        Ok(())
    }
}

/// `steps` evenly spaced points from `from` to `to`, both included.
pub fn grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        bail!("--steps must be at least 1");
    }
    if !(from.is_finite() && to.is_finite()) {
        bail!("sweep range must be finite");
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let h = (to - from) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i + 1 == steps { to } else { from + h * i as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn paths_edit_existing_keys_only() {
        let mut env = json!({"kind":"periodic","means":[{"1":10.0,"2":0.99},{"1":0.99,"2":0.05}]});
        ParamPath::parse("env.means.2.1").unwrap().set(&mut env, 0.5).unwrap();
        assert_eq!(env["means"][1]["1"], json!(0.5));
        assert!(ParamPath::parse("env.means.3.1").unwrap().set(&mut env, 0.5).is_err());
        assert!(ParamPath::parse("env.gamma").is_err());
        assert!(ParamPath::parse("env.means.0.1").is_err());
        assert!(ParamPath::parse("builder.family").is_err());
        let mut model = json!({"builder":{"family":"two_patch","M":2.0,"m":0.5,"p":0.5,"q":0.5}});
        ParamPath::parse("builder.q").unwrap().set(&mut model, 0.25).unwrap();
        assert_eq!(model["builder"]["q"], json!(0.25));
        assert!(ParamPath::parse("builder.z").unwrap().set(&mut model, 1.0).is_err());
    }

    #[test]
    fn grid_includes_endpoints() {
        assert_eq!(grid(0.5, 1.0, 3).unwrap(), vec![0.5, 0.75, 1.0]);
        assert_eq!(grid(2.0, 9.0, 1).unwrap(), vec![2.0]);
        assert!(grid(0.0, 1.0, 0).is_err());
    }
}
