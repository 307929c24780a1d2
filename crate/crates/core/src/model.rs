//! JSON model and environment documents.
//!
//! A model document is either explicit,
//! `{"patches":[1,2,2], "dispersal":[[…],…], "mean_offspring":{"1":2.0,"2":0.5}}`,
//! or a builder call, `{"builder":{"family":"cycle_pipeline", …}}`. An
//! environment document is
//! `{"kind":"markov","alpha":0.5,"beta":0.5,"means":[{"1":4.0},{"1":0.05}]}`.
//! Keys are exact and unknown keys are rejected. Habitat labels and patch
//! numbers are 1-based.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::environment::{EnvKind, EnvStart, EnvironmentModel};
use crate::patchgraph::{build_cycle_pipeline, build_motif, build_two_patch, CyclePipeline, Motif, PatchGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitModel {
    patches: Vec<usize>,
    dispersal: Vec<Vec<f64>>,
    mean_offspring: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoPatch {
    #[serde(rename = "M")]
    source_mean: f64,
    #[serde(rename = "m")]
    sink_mean: f64,
    p: f64,
    q: f64,
}

/// Builder family with its parameters, when the model came from a builder.
#[derive(Debug, Clone, PartialEq)]
pub enum BuilderUsed {
    TwoPatch { source_mean: f64, sink_mean: f64, p: f64, q: f64 },
    CyclePipeline(CyclePipeline),
    Motif(Motif),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub graph: PatchGraph,
    pub builder: Option<BuilderUsed>,
    /// The document as parsed, echoed into reports.
    pub document: Value,
}

impl LoadedModel {
    pub fn pipeline(&self) -> Option<&CyclePipeline> {
        match &self.builder {
            Some(BuilderUsed::CyclePipeline(c)) => Some(c),
            _ => None,
        }
    }
}

fn document_error(what: &str, e: serde_json::Error) -> Error {
    Error::Document(format!("{what}: {e}"))
}

/// Parses JSON text, reporting syntax errors with line and column.
pub fn parse_json(text: &str, what: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| document_error(what, e))
}

fn habitat_label(key: &str) -> Result<usize> {
    match key.parse::<usize>() {
        Ok(h) if h >= 1 => Ok(h),
        _ => Err(Error::Document(format!(
            "habitat label {key:?} must be a positive integer"
        ))),
    }
}

fn habitat_map(raw: &BTreeMap<String, f64>) -> Result<BTreeMap<usize, f64>> {
    raw.iter().map(|(k, &v)| Ok((habitat_label(k)?, v))).collect()
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    model_from_value(parse_json(text, "model document")?)
}

pub fn model_from_value(document: Value) -> Result<LoadedModel> {
    let obj = document
        .as_object()
        .ok_or_else(|| Error::Document("model document must be a JSON object".into()))?;
    if let Some(builder) = obj.get("builder") {
        if obj.len() != 1 {
            let extra: Vec<&String> = obj.keys().filter(|k| *k != "builder").collect();
            return Err(Error::Document(format!(
                "unknown keys next to \"builder\": {extra:?}"
            )));
        }
        let (graph, used) = build_from(builder)?;
        return Ok(LoadedModel {
            graph,
            builder: Some(used),
            document,
        });
    }
    let explicit: ExplicitModel =
        serde_json::from_value(document.clone()).map_err(|e| document_error("model document", e))?;
    let means = habitat_map(&explicit.mean_offspring)?;
    let graph = PatchGraph::new(explicit.patches, explicit.dispersal, means)?;
    Ok(LoadedModel {
        graph,
        builder: None,
        document,
    })
}

fn build_from(builder: &Value) -> Result<(PatchGraph, BuilderUsed)> {
    let obj = builder
        .as_object()
        .ok_or_else(|| Error::Document("\"builder\" must be an object".into()))?;
    let family = obj
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Document("builder needs a string \"family\"".into()))?;
    let mut params = obj.clone();
    params.remove("family");
    let params = Value::Object(params);
    match family {
        "two_patch" => {
            let t: TwoPatch = serde_json::from_value(params)
                .map_err(|e| document_error("two_patch builder", e))?;
            let g = build_two_patch(t.source_mean, t.sink_mean, t.p, t.q)?;
            Ok((
                g,
                BuilderUsed::TwoPatch {
                    source_mean: t.source_mean,
                    sink_mean: t.sink_mean,
                    p: t.p,
                    q: t.q,
                },
            ))
        }
        "cycle_pipeline" => {
            let c: CyclePipeline = serde_json::from_value(params)
                .map_err(|e| document_error("cycle_pipeline builder", e))?;
            Ok((build_cycle_pipeline(&c)?, BuilderUsed::CyclePipeline(c)))
        }
        _ => {
            let m: Motif = serde_json::from_value(builder.clone())
                .map_err(|e| document_error("motif builder", e))?;
            Ok((build_motif(&m)?, BuilderUsed::Motif(m)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StartDoc {
    Named(String),
    /// 1-based state number.
    State(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentDoc {
    kind: EnvKind,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    means: Vec<BTreeMap<String, f64>>,
    #[serde(default)]
    start: Option<StartDoc>,
}

pub fn parse_environment(text: &str) -> Result<(EnvironmentModel, Value)> {
    let v = parse_json(text, "environment document")?;
    Ok((environment_from_value(&v)?, v))
}

pub fn environment_from_value(document: &Value) -> Result<EnvironmentModel> {
    let doc: EnvironmentDoc = serde_json::from_value(document.clone())
        .map_err(|e| document_error("environment document", e))?;
    let means: Vec<BTreeMap<usize, f64>> =
        doc.means.iter().map(habitat_map).collect::<Result<_>>()?;
    let state_count = |n: usize| -> Result<()> {
        if means.len() == n {
            Ok(())
        } else {
            Err(Error::Document(format!(
                "{:?} environment needs {n} mean maps, got {}",
                doc.kind,
                means.len()
            )))
        }
    };
    let switching = doc.alpha.is_some() || doc.beta.is_some();
    let env = match doc.kind {
        EnvKind::Constant => {
            if switching {
                return Err(Error::Document("constant environment takes no alpha/beta".into()));
            }
            match means.len() {
                0 => EnvironmentModel::constant(),
                1 => EnvironmentModel::constant_with(means[0].clone()),
                n => {
                    return Err(Error::Document(format!(
                        "constant environment takes at most one mean map, got {n}"
                    )))
                }
            }
        }
        EnvKind::Periodic => {
            if switching {
                return Err(Error::Document("periodic environment takes no alpha/beta".into()));
            }
            state_count(2)?;
            EnvironmentModel::periodic(means[0].clone(), means[1].clone())
        }
        EnvKind::Markov => {
            state_count(2)?;
            let (Some(alpha), Some(beta)) = (doc.alpha, doc.beta) else {
                return Err(Error::Document("markov environment needs alpha and beta".into()));
            };
            EnvironmentModel::markov(means[0].clone(), means[1].clone(), alpha, beta)?
        }
    };
    let env = match doc.start {
        None => env,
        Some(StartDoc::Named(s)) if s == "stationary" => env.with_start(EnvStart::Stationary),
        Some(StartDoc::State(s)) if s >= 1 => env.with_start(EnvStart::State(s - 1)),
        Some(other) => {
            return Err(Error::Document(format!(
                "start must be \"stationary\" or a state number, got {other:?}"
            )))
        }
    };
    env.check()?;
    Ok(env)
}
