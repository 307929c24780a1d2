//! Persistence verdicts.
//!
//! The general criterion compares `m1 · E[Π m(X_i)]`, taken over the first
//! return of the random disperser to a reference source, with 1. Special
//! cases (two habitats, periodic environments) get their own closed forms,
//! which the report module confronts with the spectral route.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::disperser::{self, ReturnValue};
use crate::environment::{EnvKind, EnvironmentModel};
use crate::patchgraph::PatchGraph;
use crate::serde_ext::{ext_real, ext_real_map};
use crate::{Error, Result, CRITICAL_BAND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    Yes,
    No,
    /// Within the critical band; analytically the exact boundary goes
    /// extinct, but the sign is not resolved numerically.
    CriticalIndeterminate,
}

impl Persistence {
    pub fn from_value(value: f64) -> Self {
        if value > 1.0 + CRITICAL_BAND {
            Persistence::Yes
        } else if value < 1.0 - CRITICAL_BAND {
            Persistence::No
        } else {
            Persistence::CriticalIndeterminate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Weighted first return to the reference source.
    General,
    /// `M(1−p) + eMp` for one source habitat and one sink habitat.
    TwoHabitat,
    /// Closed form for two patches in a period-2 environment.
    PeriodicTwoPatch,
    /// First even return on the chain of (patch, parity) states.
    PeriodicGeneral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceVerdict {
    #[serde(with = "ext_real")]
    pub criterion_value: f64,
    pub persists: Persistence,
    pub route: Route,
    #[serde(with = "ext_real_map")]
    pub diagnostics: BTreeMap<String, f64>,
}

impl PersistenceVerdict {
    fn new(value: f64, route: Route) -> Self {
        Self {
            criterion_value: value,
            persists: Persistence::from_value(value),
            route,
            diagnostics: BTreeMap::new(),
        }
    }

    fn from_return(rv: ReturnValue, route: Route) -> Self {
        let mut v = Self::new(rv.value(), route);
        match rv {
            ReturnValue::Finite(_) => {}
            ReturnValue::Divergent { taboo_radius } => {
                v.diagnostics.insert("taboo_radius".into(), taboo_radius);
            }
            ReturnValue::Critical { taboo_radius } => {
                v.persists = Persistence::CriticalIndeterminate;
                v.diagnostics.insert("taboo_radius".into(), taboo_radius);
            }
        }
        v
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// General criterion from the first patch of maximal mean.
///
/// Offspring laws are invisible here, so the degenerate case of exactly one
/// offspring per individual in the reference patch, where nothing ever
/// goes extinct, is not excluded.
pub fn criterion_general(graph: &PatchGraph) -> Result<PersistenceVerdict> {
    graph.ensure_valid()?;
    criterion_general_from(graph, graph.reference_source())
}

/// General criterion from an explicit reference patch (0-based).
pub fn criterion_general_from(graph: &PatchGraph, reference: usize) -> Result<PersistenceVerdict> {
    let rv = disperser::weighted_return_value(graph, &[reference])?;
    Ok(PersistenceVerdict::from_return(rv, Route::General)
        .with("reference_patch", (reference + 1) as f64))
}

/// `M(1−p) + eMp` against 1.
pub fn criterion_two_habitat(big_m: f64, m: f64, p: f64, e: f64) -> Result<PersistenceVerdict> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in [0, 1]")));
    }
    if !(0.0..=1.0 + 1e-12).contains(&e) {
        return Err(Error::InvalidParameter(format!("e = {e} must lie in [0, 1]")));
    }
    let value = big_m * (1.0 - p) + e * big_m * p;
    let mut v = PersistenceVerdict::new(value, Route::TwoHabitat)
        .with("M", big_m)
        .with("m", m)
        .with("p", p)
        .with("e", e);
    if big_m * (1.0 - p) < 1.0 {
        // equivalent renewal form Mpe / (1 − M(1−p))
        v = v.with("renewal_form", big_m * p * e / (1.0 - big_m * (1.0 - p)));
    }
    Ok(v)
}

/// Two-habitat criterion with the depleting rate computed on the graph from
/// the reference source; every other patch must share one sink mean.
pub fn criterion_two_habitat_on(graph: &PatchGraph) -> Result<PersistenceVerdict> {
    graph.ensure_valid()?;
    let reference = graph.reference_source();
    let sources = [reference];
    let e = disperser::depleting_rate(graph, &sources)?;
    let es = disperser::mean_sink_sojourn(graph, &sources)?;
    let p = 1.0 - graph.dispersal()[(reference, reference)];
    let big_m = graph.patch_mean(reference);
    let m = graph.patch_mean(if reference == 0 { 1 } else { 0 });
    let mut v = criterion_two_habitat(big_m, m, p, e)?
        .with("e", e)
        .with("mean_sojourn", es);
    if m < 1.0 && big_m > 1.0 && p > 0.0 {
        let sufficient = sufficient_mean_sojourn(big_m, m, p, es)?;
        v = v.with("sojourn_sufficient", if sufficient { 1.0 } else { 0.0 });
    }
    Ok(v)
}

/// Sufficient condition `E(S) < (M−1) / (Mp(1−m))` for persistence.
pub fn sufficient_mean_sojourn(big_m: f64, m: f64, p: f64, es: f64) -> Result<bool> {
    if !(m < 1.0 && big_m > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "the sojourn condition needs m < 1 < M, got m = {m}, M = {big_m}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1]")));
    }
    Ok(es < (big_m - 1.0) / (big_m * p * (1.0 - m)))
}

/// Closed-form criterion for two patches alternating between `e1` and
/// `e2`: `LHS > min(2, 1 + det)` with
/// `LHS = M1M2(1−p)² + (M1m2 + m1M2)pq + m1m2(1−q)²` (the trace of the
/// two-step mean matrix) and `det = M1M2m1m2(1−p−q)²`.
///
/// `criterion_value` is `LHS / RHS`, so the comparison is again against 1.
pub fn criterion_periodic_two_patch(
    big_m1: f64,
    big_m2: f64,
    m1: f64,
    m2: f64,
    p: f64,
    q: f64,
) -> Result<PersistenceVerdict> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} must lie strictly between 0 and 1"
            )));
        }
    }
    for (name, v) in [("M1", big_m1), ("M2", big_m2), ("m1", m1), ("m2", m2)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be nonnegative")));
        }
    }
    let lhs = big_m1 * big_m2 * (1.0 - p).powi(2)
        + (big_m1 * m2 + m1 * big_m2) * p * q
        + m1 * m2 * (1.0 - q).powi(2);
    let det = big_m1 * big_m2 * m1 * m2 * (1.0 - p - q).powi(2);
    let rhs = (1.0 + det).min(2.0);
    Ok(PersistenceVerdict::new(lhs / rhs, Route::PeriodicTwoPatch)
        .with("lhs", lhs)
        .with("rhs", rhs)
        .with("det", det))
}

/// `m_1(e1) · E[Π m_{X_i}(w_i)]` over the first even return to the
/// reference source, on the doubled chain of `(patch, parity)` states.
pub fn criterion_periodic_general(
    graph: &PatchGraph,
    env: &EnvironmentModel,
) -> Result<PersistenceVerdict> {
    if env.kind() != EnvKind::Periodic {
        return Err(Error::InvalidEnvironment(
            "the periodic criterion needs a periodic environment".into(),
        ));
    }
    graph.ensure_valid()?;
    env.check()?;
    let means = env.patch_means(graph)?;
    let k = graph.num_patches();
    let reference = (0..k)
        .max_by(|&a, &b| {
            means[0][a]
                .partial_cmp(&means[0][b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    criterion_periodic_general_from(graph, env, reference)
}

pub fn criterion_periodic_general_from(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    reference: usize,
) -> Result<PersistenceVerdict> {
    let means = env.patch_means(graph)?;
    let k = graph.num_patches();
    let d = graph.dispersal();
    // state (i, parity) has index i + k·parity; parity 0 means the
    // individual reproduces under e1
    let doubled = DMatrix::from_fn(2 * k, 2 * k, |a, b| {
        if (a < k) != (b < k) {
            d[(a % k, b % k)]
        } else {
            0.0
        }
    });
    let weights: Vec<f64> = (0..2 * k).map(|s| means[s / k][s % k]).collect();
    let rv = disperser::weighted_return_on_chain(&doubled, &weights, reference, &[reference])?;
    Ok(PersistenceVerdict::from_return(rv, Route::PeriodicGeneral)
        .with("reference_patch", (reference + 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth;
    use crate::patchgraph::build_two_patch;
    use approx::assert_relative_eq;

    #[test]
    fn general_two_patch() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        let v = criterion_general(&g).unwrap();
        assert_relative_eq!(v.criterion_value, 4.0 / 3.0, epsilon = 1e-13);
        assert_eq!(v.persists, Persistence::Yes);
    }

    #[test]
    fn general_unit_means_is_critical() {
        let g = build_two_patch(1.0, 1.0, 0.3, 0.6).unwrap();
        let v = criterion_general(&g).unwrap();
        assert_eq!(v.persists, Persistence::CriticalIndeterminate);
    }

    #[test]
    fn general_subcritical_matches_closed_form() {
        let (big_m, p, m, q) = (1.1, 0.99, 0.01, 0.01);
        let g = build_two_patch(big_m, m, p, q).unwrap();
        let v = criterion_general(&g).unwrap();
        let e = m * q / (1.0 - m * (1.0 - q));
        assert_relative_eq!(v.criterion_value, big_m * (1.0 - p) + e * big_m * p, epsilon = 1e-14);
        assert_eq!(v.persists, Persistence::No);
    }

    #[test]
    fn two_habitat_examples() {
        let v = criterion_two_habitat(2.0, 0.5, 0.5, 1.0 / 3.0).unwrap();
        assert_relative_eq!(v.criterion_value, 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(v.persists, Persistence::Yes);
        assert_eq!(criterion_two_habitat(1.2, 0.5, 0.4, 1.0).unwrap().persists, Persistence::Yes);
        let v = criterion_two_habitat(1.8, 0.5, 0.5, 0.0).unwrap();
        assert_relative_eq!(v.criterion_value, 0.9);
        assert_eq!(v.persists, Persistence::No);
    }

    #[test]
    fn renewal_form_agrees_in_sign() {
        let g = build_two_patch(1.5, 0.8, 0.6, 0.3).unwrap();
        let v = criterion_two_habitat_on(&g).unwrap();
        let renewal = v.diagnostics["renewal_form"];
        assert_eq!(v.criterion_value > 1.0, renewal > 1.0);
        assert_relative_eq!(
            v.criterion_value,
            criterion_general(&g).unwrap().criterion_value,
            epsilon = 1e-13
        );
    }

    #[test]
    fn sojourn_threshold() {
        assert!(!sufficient_mean_sojourn(2.0, 0.5, 0.5, 2.0).unwrap());
        assert!(sufficient_mean_sojourn(2.0, 0.5, 0.5, 1.9).unwrap());
        assert!(sufficient_mean_sojourn(2.0, 1.0 - 1e-12, 0.5, 1e6).unwrap());
        assert!(sufficient_mean_sojourn(0.9, 0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn periodic_two_patch_remark_region() {
        // p = q = 1/2 and m1 = m2 = m: persistence iff M1M2 + m(M1+M2) + m² > 4
        for &(big1, big2, m) in &[(3.0, 0.5, 0.9), (2.0, 1.5, 0.3), (4.0, 0.2, 0.6), (1.0, 1.0, 1.2)] {
            let v = criterion_periodic_two_patch(big1, big2, m, m, 0.5, 0.5).unwrap();
            let remark = big1 * big2 + m * (big1 + big2) + m * m > 4.0;
            assert_eq!(v.persists == Persistence::Yes, remark);
        }
    }

    #[test]
    fn periodic_survival_in_sinks() {
        let v = criterion_periodic_two_patch(10.0, 0.05, 0.99, 0.99, 0.5, 0.5).unwrap();
        assert_relative_eq!(v.diagnostics["lhs"], 2.8574, epsilon = 1e-12);
        assert_eq!(v.diagnostics["rhs"], 1.0);
        assert_eq!(v.persists, Persistence::Yes);

        let g = build_two_patch(1.0, 1.0, 0.5, 0.5).unwrap();
        let env = EnvironmentModel::periodic(
            BTreeMap::from([(1, 10.0), (2, 0.99)]),
            BTreeMap::from([(1, 0.05), (2, 0.99)]),
        );
        let general = criterion_periodic_general(&g, &env).unwrap();
        assert_eq!(general.persists, Persistence::Yes);
        let a = crate::environment::two_step_mean_matrix(&g, &env).unwrap();
        assert!(growth::perron_of(a.matrix()).unwrap().rho > 1.0);
    }

    #[test]
    fn periodic_general_degenerate_cases() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.6).unwrap();
        let means = g.mean_offspring().clone();
        let env = EnvironmentModel::periodic(means.clone(), means);
        let periodic = criterion_periodic_general(&g, &env).unwrap();
        let constant = criterion_general(&g).unwrap();
        assert_eq!(periodic.persists, constant.persists);

        let ones = BTreeMap::from([(1, 1.0), (2, 1.0)]);
        let env = EnvironmentModel::periodic(ones.clone(), ones);
        let v = criterion_periodic_general(&g, &env).unwrap();
        assert_eq!(v.persists, Persistence::CriticalIndeterminate);
        assert_relative_eq!(v.criterion_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn verdict_json_round_trip() {
        let g = PatchGraph::new(
            vec![1, 2],
            vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            BTreeMap::from([(1, 2.0), (2, 1.5)]),
        )
        .unwrap();
        let v = criterion_general(&g).unwrap();
        assert_eq!(v.criterion_value, f64::INFINITY);
        let s = serde_json::to_string(&v).unwrap();
        let back: PersistenceVerdict = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
