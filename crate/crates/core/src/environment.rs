//! Environment models and their deterministic mean-matrix algebra.
//!
//! The environment acts on reproduction only: in state `w` a patch of
//! habitat `h` has mean offspring `means_per_state[w][h]`, while dispersal is
//! unchanged. Periodic environments alternate between exactly two states;
//! Markov environments are a two-state chain with switching probabilities
//! `alpha` (e1 → e2) and `beta` (e2 → e1).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::patchgraph::{MeanOffspringMatrix, PatchGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Constant,
    Periodic,
    Markov,
}

/// Where a Markov environment chain starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvStart {
    /// Drawn from the stationary law `(ν, 1−ν)`.
    #[default]
    Stationary,
    /// Fixed start in the given state index (0-based).
    State(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentModel {
    kind: EnvKind,
    means_per_state: Vec<BTreeMap<usize, f64>>,
    alpha: f64,
    beta: f64,
    start: EnvStart,
}

impl EnvironmentModel {
    /// Constant environment using the graph's own means.
    pub fn constant() -> Self {
        Self {
            kind: EnvKind::Constant,
            means_per_state: Vec::new(),
            alpha: 0.0,
            beta: 0.0,
            start: EnvStart::State(0),
        }
    }

    /// Constant environment with explicit habitat means.
    pub fn constant_with(means: BTreeMap<usize, f64>) -> Self {
        Self {
            means_per_state: vec![means],
            ..Self::constant()
        }
    }

    /// Environment alternating `e1, e2, e1, …`, starting in `e1`.
    pub fn periodic(e1: BTreeMap<usize, f64>, e2: BTreeMap<usize, f64>) -> Self {
        Self {
            kind: EnvKind::Periodic,
            means_per_state: vec![e1, e2],
            alpha: 1.0,
            beta: 1.0,
            start: EnvStart::State(0),
        }
    }

    pub fn markov(
        e1: BTreeMap<usize, f64>,
        e2: BTreeMap<usize, f64>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let env = Self {
            kind: EnvKind::Markov,
            means_per_state: vec![e1, e2],
            alpha,
            beta,
            start: EnvStart::Stationary,
        };
        env.check()?;
        Ok(env)
    }

    pub fn with_start(mut self, start: EnvStart) -> Self {
        self.start = start;
        self
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn start(&self) -> EnvStart {
        self.start
    }

    pub fn means_per_state(&self) -> &[BTreeMap<usize, f64>] {
        &self.means_per_state
    }

    pub fn num_states(&self) -> usize {
        match self.kind {
            EnvKind::Constant => 1,
            _ => self.means_per_state.len(),
        }
    }

    /// Stationary probability of `e1`, `ν = β/(α+β)`.
    pub fn nu(&self) -> f64 {
        match self.kind {
            EnvKind::Constant => 1.0,
            EnvKind::Periodic => 0.5,
            EnvKind::Markov => self.beta / (self.alpha + self.beta),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self.kind {
            EnvKind::Constant => {
                if self.means_per_state.len() > 1 {
                    return Err(Error::InvalidEnvironment(
                        "constant environment carries at most one mean map".into(),
                    ));
                }
            }
            EnvKind::Periodic | EnvKind::Markov => {
                if self.means_per_state.len() != 2 {
                    return Err(Error::InvalidEnvironment(format!(
                        "{:?} environment needs exactly 2 states, got {}",
                        self.kind,
                        self.means_per_state.len()
                    )));
                }
            }
        }
        if self.kind == EnvKind::Markov {
            for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::InvalidEnvironment(format!(
                        "{name} = {v} must lie in (0, 1]"
                    )));
                }
            }
        }
        if let EnvStart::State(s) = self.start {
            if s >= self.num_states() {
                return Err(Error::InvalidEnvironment(format!(
                    "start state {s} out of range"
                )));
            }
        }
        for means in &self.means_per_state {
            for (&h, &m) in means {
                if !(m.is_finite() && m >= 0.0) {
                    return Err(Error::InvalidEnvironment(format!(
                        "habitat {h} has invalid mean {m}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Graph with the means of environment state `state`.
    pub fn graph_in_state(&self, graph: &PatchGraph, state: usize) -> Result<PatchGraph> {
        if state >= self.num_states() {
            return Err(Error::InvalidEnvironment(format!(
                "state index {state} out of range (environment has {} states)",
                self.num_states()
            )));
        }
        match self.means_per_state.get(state) {
            None => Ok(graph.clone()),
            Some(means) => {
                let mut merged = graph.mean_offspring().clone();
                merged.extend(means.iter().map(|(&h, &m)| (h, m)));
                Ok(graph.with_means(merged))
            }
        }
    }

    /// Per-patch means in each state, `[state][patch]`.
    pub fn patch_means(&self, graph: &PatchGraph) -> Result<Vec<Vec<f64>>> {
        (0..self.num_states())
            .map(|s| Ok(self.graph_in_state(graph, s)?.patch_means()))
            .collect()
    }
}

/// `A(w)_{ij} = m_i(w) d_ij`.
pub fn env_mean_matrix(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    state: usize,
) -> Result<MeanOffspringMatrix> {
    env.check()?;
    env.graph_in_state(graph, state)?.mean_matrix()
}

/// `a_ij = Σ_k m_i(e1) d_ik m_k(e2) d_kj`, the mean matrix of the process
/// observed every second generation.
pub fn two_step_mean_matrix(
    graph: &PatchGraph,
    env: &EnvironmentModel,
) -> Result<MeanOffspringMatrix> {
    if env.kind() != EnvKind::Periodic {
        return Err(Error::InvalidEnvironment(
            "two-step mean matrix needs a periodic environment".into(),
        ));
    }
    graph.ensure_valid()?;
    env.check()?;
    let means = env.patch_means(graph)?;
    let d = graph.dispersal();
    let k = graph.num_patches();
    Ok(MeanOffspringMatrix(DMatrix::from_fn(k, k, |i, j| {
        (0..k)
            .map(|l| means[0][i] * d[(i, l)] * means[1][l] * d[(l, j)])
            .sum()
    })))
}

/// Lower bound on the log growth rate of a two-patch metapopulation in a
/// two-state Markov environment, from the lineage that sits in the source
/// during `e1` and in the sink during `e2`.
///
/// `source_e1` is the source mean in `e1`, `sink_e2` the sink mean in `e2`;
/// the bound does not involve the other two means. Terms whose probability
/// vanishes with a positive frequency yield `−∞`.
///
/// Sharper bounds follow by letting the tracked lineage linger in the source
/// for a bounded number of `e2` steps and optimizing over that number; they
/// are not implemented.
pub fn markov_env_lower_bound(
    source_e1: f64,
    sink_e2: f64,
    p: f64,
    q: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q), ("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1]")));
        }
    }
    if !(source_e1 > 0.0 && sink_e2 > 0.0) {
        return Err(Error::InvalidParameter("means must be positive".into()));
    }
    let nu = beta / (alpha + beta);
    // weight · log(x) with 0 · log 0 = 0
    let term = |weight: f64, x: f64| if weight == 0.0 { 0.0 } else { weight * x.ln() };
    Ok(nu * source_e1.ln()
        + (1.0 - nu) * sink_e2.ln()
        + term(nu * alpha, p * q)
        + term(nu * (1.0 - alpha), 1.0 - p)
        + term((1.0 - nu) * (1.0 - beta), 1.0 - q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgraph::build_two_patch;
    use approx::assert_relative_eq;

    fn means(source: f64, sink: f64) -> BTreeMap<usize, f64> {
        BTreeMap::from([(1, source), (2, sink)])
    }

    #[test]
    fn two_step_matches_two_patch_expressions() {
        let (m1e1, m1e2, m2e1, m2e2) = (3.0, 0.4, 0.7, 0.9);
        let (p, q) = (0.3, 0.45);
        let g = build_two_patch(1.0, 1.0, p, q).unwrap();
        let env = EnvironmentModel::periodic(means(m1e1, m2e1), means(m1e2, m2e2));
        let a = two_step_mean_matrix(&g, &env).unwrap();
        // source M1 = m1(e1), M2 = m1(e2); sink m1 = m2(e1), m2 = m2(e2)
        let (big1, big2, small1, small2) = (m1e1, m1e2, m2e1, m2e2);
        let a11 = big1 * big2 * (1.0 - p).powi(2) + big1 * small2 * p * q;
        let a12 = big1 * small2 * p * (1.0 - q) + big1 * big2 * (1.0 - p) * p;
        let a21 = small1 * big2 * q * (1.0 - p) + small1 * small2 * (1.0 - q) * q;
        let a22 = small1 * small2 * (1.0 - q).powi(2) + small1 * big2 * q * p;
        assert_relative_eq!(a.entry(0, 0), a11, epsilon = 1e-14);
        assert_relative_eq!(a.entry(0, 1), a12, epsilon = 1e-14);
        assert_relative_eq!(a.entry(1, 0), a21, epsilon = 1e-14);
        assert_relative_eq!(a.entry(1, 1), a22, epsilon = 1e-14);
    }

    #[test]
    fn two_step_degenerate_cases() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.45).unwrap();
        let env = EnvironmentModel::periodic(means(2.0, 0.5), means(2.0, 0.5));
        let a = g.mean_matrix().unwrap().0;
        let two = two_step_mean_matrix(&g, &env).unwrap().0;
        assert!((two - &a * &a).amax() < 1e-14);
        let env = EnvironmentModel::periodic(means(1.0, 1.0), means(1.0, 1.0));
        let d = g.dispersal();
        let two = two_step_mean_matrix(&g, &env).unwrap().0;
        assert!((two - d * d).amax() < 1e-14);
    }

    #[test]
    fn product_of_state_matrices_is_two_step() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.45).unwrap();
        let env = EnvironmentModel::periodic(means(4.0, 0.2), means(0.3, 0.9));
        let a1 = env_mean_matrix(&g, &env, 0).unwrap().0;
        let a2 = env_mean_matrix(&g, &env, 1).unwrap().0;
        let two = two_step_mean_matrix(&g, &env).unwrap().0;
        assert!((two - a1 * a2).amax() < 1e-14);
        assert!(env_mean_matrix(&g, &env, 2).is_err());
    }

    #[test]
    fn constant_env_matrix_is_mean_matrix() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.45).unwrap();
        let a = env_mean_matrix(&g, &EnvironmentModel::constant(), 0).unwrap();
        assert_eq!(a, g.mean_matrix().unwrap());
    }

    #[test]
    fn catastrophic_state_scales_source_row() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.45).unwrap();
        let env = EnvironmentModel::markov(means(4.0, 0.5), means(0.01, 0.5), 0.2, 0.3).unwrap();
        let a = env_mean_matrix(&g, &env, 1).unwrap();
        assert_relative_eq!(a.entry(0, 0), 0.01 * 0.7);
        assert_relative_eq!(a.entry(0, 1), 0.01 * 0.3);
        assert_relative_eq!(a.entry(1, 0), 0.5 * 0.45);
    }

    #[test]
    fn lower_bound_independent_environment() {
        let lb = markov_env_lower_bound(4.0, 0.8, 0.5, 0.5, 0.5, 0.5).unwrap();
        let expect = 0.5 * 4f64.ln()
            + 0.5 * 0.8f64.ln()
            + 0.25 * 0.25f64.ln()
            + 0.25 * 0.5f64.ln()
            + 0.25 * 0.5f64.ln();
        assert_relative_eq!(lb, expect, epsilon = 1e-15);
        assert_relative_eq!(lb, -0.111572, epsilon = 1e-6);
    }

    #[test]
    fn lower_bound_frozen_environment_limit() {
        let (big_m, p) = (3.0, 0.2);
        let lb = markov_env_lower_bound(big_m, 0.8, p, 0.5, 1e-12, 0.5).unwrap();
        assert_relative_eq!(lb, (big_m * (1.0 - p)).ln(), epsilon = 1e-10);
    }

    #[test]
    fn lower_bound_with_certain_dispersal_is_minus_infinity() {
        let lb = markov_env_lower_bound(3.0, 0.8, 1.0, 0.5, 0.5, 0.5).unwrap();
        assert_eq!(lb, f64::NEG_INFINITY);
        // α = 1 removes the log(1 − p) term entirely
        let lb = markov_env_lower_bound(3.0, 0.8, 1.0, 0.5, 1.0, 0.5).unwrap();
        assert!(lb.is_finite());
    }

    #[test]
    fn markov_parameters_checked() {
        assert!(EnvironmentModel::markov(means(1.0, 1.0), means(1.0, 1.0), 0.0, 0.5).is_err());
        let env = EnvironmentModel::markov(means(1.0, 1.0), means(1.0, 1.0), 0.2, 0.6).unwrap();
        assert_relative_eq!(env.nu(), 0.75);
    }
}
