//! Exact analytics of the single random disperser `X`, the Markov chain that
//! follows the dispersal matrix.
//!
//! All quantities are expectations over first-passage excursions and reduce
//! to taboo linear systems on the states avoiding a target set.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::patchgraph::PatchGraph;
use crate::{Error, Result, CRITICAL_BAND};

/// Power-iteration settings used to detect divergent taboo series.
const TABOO_TOL: f64 = 1e-12;
const TABOO_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub u: Vec<f64>,
    /// `‖uD − u‖∞`
    pub residual: f64,
}

/// Stationary law `uD = u`, `Σu = 1`, by a bordered LU solve.
pub fn stationary(graph: &PatchGraph) -> Result<StationaryDistribution> {
    graph.ensure_valid()?;
    stationary_of(graph.dispersal())
}

pub(crate) fn stationary_of(d: &DMatrix<f64>) -> Result<StationaryDistribution> {
    let k = d.nrows();
    let mut system = d.transpose() - DMatrix::identity(k, k);
    for j in 0..k {
        system[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let u = linalg::solve(&system, &rhs)?;
    let total: f64 = u.sum();
    let u: Vec<f64> = u.iter().map(|x| (x / total).max(0.0)).collect();
    let uv = DVector::from_vec(u.clone());
    let residual = (d.transpose() * &uv - &uv).amax();
    Ok(StationaryDistribution { u, residual })
}

/// `m1 · E[Π m(X_i)]` over the excursion until the first return to a set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReturnValue {
    Finite(f64),
    /// The taboo process is itself supercritical; the series is `+∞`.
    Divergent { taboo_radius: f64 },
    /// Taboo spectral radius within the critical band around 1.
    Critical { taboo_radius: f64 },
}

impl ReturnValue {
    /// The extended-real value; `+∞` for divergent and critical cases.
    pub fn value(&self) -> f64 {
        match self {
            ReturnValue::Finite(v) => *v,
            _ => f64::INFINITY,
        }
    }

    pub fn is_critical(&self) -> bool {
        matches!(self, ReturnValue::Critical { .. })
    }
}

fn split_states(k: usize, set: &[usize]) -> Result<(Vec<bool>, Vec<usize>)> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("target patch set is empty".into()));
    }
    let mut member = vec![false; k];
    for &s in set {
        if s >= k {
            return Err(Error::InvalidParameter(format!(
                "patch {} out of range 1..={k}",
                s + 1
            )));
        }
        member[s] = true;
    }
    let outside = (0..k).filter(|&i| !member[i]).collect();
    Ok((member, outside))
}

/// Weighted first-return functional on an arbitrary chain.
///
/// Starting at `start` (which carries its own weight), multiplies the
/// weights of every state visited strictly before the first return to
/// `return_set`. `transition` may be substochastic, reducible or periodic.
pub fn weighted_return_on_chain(
    transition: &DMatrix<f64>,
    weights: &[f64],
    start: usize,
    return_set: &[usize],
) -> Result<ReturnValue> {
    let k = transition.nrows();
    assert_eq!(weights.len(), k);
    let (member, outside) = split_states(k, return_set)?;
    if start >= k {
        return Err(Error::InvalidParameter("start state out of range".into()));
    }
    let direct: f64 = (0..k)
        .filter(|&j| member[j])
        .map(|j| transition[(start, j)])
        .sum();
    if outside.is_empty() {
        return Ok(ReturnValue::Finite(weights[start] * direct));
    }
    let n = outside.len();
    let taboo = DMatrix::from_fn(n, n, |r, c| {
        weights[outside[r]] * transition[(outside[r], outside[c])]
    });
    let radius = linalg::spectral_radius(&taboo, TABOO_TOL, TABOO_MAX_ITER);
    if radius > 1.0 + CRITICAL_BAND {
        return Ok(ReturnValue::Divergent {
            taboo_radius: radius,
        });
    }
    if radius >= 1.0 - CRITICAL_BAND {
        return Ok(ReturnValue::Critical {
            taboo_radius: radius,
        });
    }
    let rhs = DVector::from_fn(n, |r, _| {
        let i = outside[r];
        let into_set: f64 = (0..k).filter(|&j| member[j]).map(|j| transition[(i, j)]).sum();
        weights[i] * into_set
    });
    let system = DMatrix::identity(n, n) - &taboo;
    let w = linalg::solve(&system, &rhs)?;
    let via_outside: f64 = outside
        .iter()
        .enumerate()
        .map(|(r, &j)| transition[(start, j)] * w[r])
        .sum();
    Ok(ReturnValue::Finite(weights[start] * (direct + via_outside)))
}

/// `m1 · E[Π_{i=1}^{T−1} m(X_i)]` where `T` is the first return of the
/// disperser started at `return_set[0]` into `return_set`.
pub fn weighted_return_value(graph: &PatchGraph, return_set: &[usize]) -> Result<ReturnValue> {
    graph.ensure_valid()?;
    let start = *return_set
        .first()
        .ok_or_else(|| Error::InvalidParameter("return set is empty".into()))?;
    weighted_return_on_chain(graph.dispersal(), &graph.patch_means(), start, return_set)
}

struct SinkBlock {
    reference: usize,
    outside: Vec<usize>,
    /// total exit probability of the reference source into non-source patches
    exit: f64,
    block: DMatrix<f64>,
    into_sources: DVector<f64>,
}

fn sink_block(graph: &PatchGraph, source_set: &[usize]) -> Result<SinkBlock> {
    graph.ensure_valid()?;
    let k = graph.num_patches();
    let (member, outside) = split_states(k, source_set)?;
    if outside.is_empty() {
        return Err(Error::InvalidParameter(
            "every patch is in the source set; there are no sinks".into(),
        ));
    }
    let d = graph.dispersal();
    let reference = source_set[0];
    let exit: f64 = outside.iter().map(|&j| d[(reference, j)]).sum();
    if exit <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "reference source {} never disperses into a sink",
            reference + 1
        )));
    }
    let block = linalg::submatrix(d, &outside);
    let into_sources = DVector::from_fn(outside.len(), |r, _| {
        (0..k).filter(|&j| member[j]).map(|j| d[(outside[r], j)]).sum()
    });
    Ok(SinkBlock {
        reference,
        outside,
        exit,
        block,
        into_sources,
    })
}

impl SinkBlock {
    fn average_over_exit(&self, graph: &PatchGraph, values: &DVector<f64>) -> f64 {
        let d = graph.dispersal();
        self.outside
            .iter()
            .enumerate()
            .map(|(r, &j)| d[(self.reference, j)] / self.exit * values[r])
            .sum()
    }
}

/// Depleting rate `e = E(m^S)`, the expected product of sink means over the
/// sojourn `S` in sinks between leaving the reference source (the first
/// entry of `source_set`) and reaching any source.
///
/// All non-source patches must share one mean `m`.
pub fn depleting_rate(graph: &PatchGraph, source_set: &[usize]) -> Result<f64> {
    let sb = sink_block(graph, source_set)?;
    let means: Vec<f64> = sb.outside.iter().map(|&j| graph.patch_mean(j)).collect();
    let m = means[0];
    if means.iter().any(|&x| x != m) {
        return Err(Error::InvalidParameter(
            "non-source patches carry different means; the depleting rate needs one sink mean"
                .into(),
        ));
    }
    if m > 1.0 {
        let radius = linalg::spectral_radius(&sb.block, TABOO_TOL, TABOO_MAX_ITER);
        if m * radius >= 1.0 {
            return Err(Error::Divergent(format!(
                "sink mean {m} times sink-block spectral radius {radius} is at least 1"
            )));
        }
    }
    let n = sb.outside.len();
    let system = DMatrix::identity(n, n) - &sb.block * m;
    let h = linalg::solve(&system, &(&sb.into_sources * m))?;
    Ok(sb.average_over_exit(graph, &h))
}

/// Mean sojourn `E(S)` in sinks between source visits, from the unweighted
/// hitting-time system `(I − D_sink) t = 1`.
pub fn mean_sink_sojourn(graph: &PatchGraph, source_set: &[usize]) -> Result<f64> {
    let sb = sink_block(graph, source_set)?;
    let n = sb.outside.len();
    let system = DMatrix::identity(n, n) - &sb.block;
    let t = linalg::solve(&system, &DVector::from_element(n, 1.0))?;
    Ok(sb.average_over_exit(graph, &t))
}

/// Ordered roots `λ ≥ μ` of `m r x² − (1 − m s) x + m l = 0`, computed
/// without cancellation.
pub fn pipeline_roots(s: f64, l: f64, r: f64, m: f64) -> Result<(f64, f64)> {
    let a = m * r;
    let b = 1.0 - m * s;
    let c = m * l;
    if a <= 0.0 {
        return Err(Error::InvalidParameter(
            "degenerate pipeline quadratic: m r must be positive".into(),
        ));
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 || !disc.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degenerate pipeline quadratic: discriminant {disc} is not positive"
        )));
    }
    // b > 0 here since m s < 1 whenever the discriminant is positive
    let q = 0.5 * (b + disc.sqrt());
    Ok((q / a, c / q))
}

/// Closed-form depleting rate of a source closed by a pipeline of `n`
/// identical sinks of mean `m`.
pub fn pipeline_depleting_rate(
    n: usize,
    left_share: f64,
    right_share: f64,
    s: f64,
    l: f64,
    r: f64,
    m: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("pipeline needs n >= 1".into()));
    }
    if (left_share + right_share - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("L + R must equal 1".into()));
    }
    if (s + l + r - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("s + l + r must equal 1".into()));
    }
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sink mean m = {m} must lie in (0, 1]"
        )));
    }
    let (lambda, mu) = pipeline_roots(s, l, r, m)?;
    let n_i = i32::try_from(n).map_err(|_| Error::InvalidParameter("n too large".into()))?;
    // divide numerator and denominator by λ^{n+1}; t = μ/λ < 1
    let t = mu / lambda;
    let t_n = t.powi(n_i);
    let t_n1 = t_n * t;
    let denom = 1.0 - t_n1;
    let first = (1.0 - t_n) / (lambda * denom) * (left_share + right_share * lambda * mu);
    let inv_lambda_n1 = lambda.powi(-n_i - 1);
    let second = (lambda - mu) * (right_share * inv_lambda_n1 + left_share * mu.powi(n_i) / lambda)
        / denom;
    Ok(first + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgraph::{build_cycle_pipeline, build_two_patch, CyclePipeline, PatchGraph};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    #[test]
    fn stationary_two_patch() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.6).unwrap();
        let st = stationary(&g).unwrap();
        assert_relative_eq!(st.u[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(st.u[1], 1.0 / 3.0, epsilon = 1e-14);
        assert!(st.residual <= 1e-10);
    }

    #[test]
    fn stationary_single_patch_and_doubly_stochastic() {
        let g = PatchGraph::new(vec![1], vec![vec![1.0]], BTreeMap::from([(1, 2.0)])).unwrap();
        assert_eq!(stationary(&g).unwrap().u, vec![1.0]);
        let g = PatchGraph::new(
            vec![1, 2, 2],
            vec![vec![0.2, 0.5, 0.3], vec![0.5, 0.2, 0.3], vec![0.3, 0.3, 0.4]],
            BTreeMap::from([(1, 2.0), (2, 0.5)]),
        )
        .unwrap();
        for x in stationary(&g).unwrap().u {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn stationary_rejects_periodic_chain() {
        let g = PatchGraph::new(
            vec![1, 2],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            BTreeMap::from([(1, 2.0), (2, 0.5)]),
        )
        .unwrap();
        assert!(stationary(&g).is_err());
    }

    #[test]
    fn depleting_rate_two_patch_geometric() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        assert_relative_eq!(depleting_rate(&g, &[0]).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        // e = m q / (1 − m (1 − q))
        let g = build_two_patch(1.7, 0.8, 0.2, 0.35).unwrap();
        let expect = 0.8 * 0.35 / (1.0 - 0.8 * 0.65);
        assert_relative_eq!(depleting_rate(&g, &[0]).unwrap(), expect, epsilon = 1e-15);
    }

    fn always_returning(m: f64) -> PatchGraph {
        PatchGraph::new(
            vec![1, 2],
            vec![vec![0.6, 0.4], vec![1.0, 0.0]],
            BTreeMap::from([(1, 2.0), (2, m)]),
        )
        .unwrap()
    }

    #[test]
    fn depleting_rate_trivial_cases() {
        assert_relative_eq!(depleting_rate(&always_returning(0.7), &[0]).unwrap(), 0.7);
        let g = build_two_patch(2.0, 0.0, 0.5, 0.5).unwrap();
        assert_eq!(depleting_rate(&g, &[0]).unwrap(), 0.0);
    }

    #[test]
    fn depleting_rate_rejects_divergence_and_mixed_sinks() {
        let g = build_two_patch(2.0, 1.5, 0.5, 0.1).unwrap();
        assert!(matches!(depleting_rate(&g, &[0]), Err(Error::Divergent(_))));
        let g = PatchGraph::new(
            vec![1, 2, 3],
            vec![vec![0.4, 0.3, 0.3]; 3],
            BTreeMap::from([(1, 2.0), (2, 0.5), (3, 0.4)]),
        )
        .unwrap();
        assert!(depleting_rate(&g, &[0]).is_err());
    }

    #[test]
    fn mean_sojourn_geometric() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        assert_relative_eq!(mean_sink_sojourn(&g, &[0]).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(
            mean_sink_sojourn(&always_returning(0.5), &[0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pipeline_single_sink_closed_form() {
        let e = pipeline_depleting_rate(1, 0.3, 0.7, 0.2, 0.5, 0.3, 0.5).unwrap();
        assert_relative_eq!(e, 0.4 / 0.9, epsilon = 1e-14);
    }

    #[test]
    fn pipeline_roots_ordered() {
        let (lambda, mu) = pipeline_roots(0.2, 0.3, 0.5, 0.6).unwrap();
        assert!(lambda > 1.0 && mu < 1.0);
        assert_relative_eq!(lambda * mu, 0.3 / 0.5, epsilon = 1e-14);
        assert_relative_eq!(lambda + mu, (1.0 - 0.6 * 0.2) / (0.6 * 0.5), epsilon = 1e-14);
    }

    #[test]
    fn pipeline_degenerate_discriminant() {
        // m = 1, l = r: double root at 1
        assert!(pipeline_depleting_rate(3, 0.5, 0.5, 0.2, 0.4, 0.4, 1.0).is_err());
        assert!(pipeline_depleting_rate(3, 0.5, 0.5, 0.2, 0.8, 0.0, 0.5).is_err());
    }

    #[test]
    fn pipeline_matches_linear_system() {
        for n in [1, 2, 3, 7, 20] {
            let c = CyclePipeline {
                n,
                p: 0.3,
                left_share: 0.35,
                right_share: 0.65,
                s: 0.15,
                l: 0.25,
                r: 0.6,
                source_mean: 2.0,
                sink_mean: 0.7,
            };
            let g = build_cycle_pipeline(&c).unwrap();
            let linear = depleting_rate(&g, &[0]).unwrap();
            let closed = pipeline_depleting_rate(n, 0.35, 0.65, 0.15, 0.25, 0.6, 0.7).unwrap();
            assert_relative_eq!(linear, closed, epsilon = 1e-12);
        }
    }

    #[test]
    fn pipeline_large_n_tends_to_limit() {
        // n → ∞: e → L/λ + R μ
        let (lambda, mu) = pipeline_roots(0.2, 0.3, 0.5, 0.6).unwrap();
        let e = pipeline_depleting_rate(5000, 0.4, 0.6, 0.2, 0.3, 0.5, 0.6).unwrap();
        assert_relative_eq!(e, 0.4 / lambda + 0.6 * mu, epsilon = 1e-12);
    }

    #[test]
    fn weighted_return_two_patch() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        let v = weighted_return_value(&g, &[0]).unwrap();
        assert_relative_eq!(v.value(), 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn weighted_return_unit_means_is_one() {
        let g = build_two_patch(1.0, 1.0, 0.3, 0.8).unwrap();
        assert_relative_eq!(weighted_return_value(&g, &[0]).unwrap().value(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn weighted_return_diverges_with_supercritical_taboo() {
        let g = PatchGraph::new(
            vec![1, 2],
            vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            BTreeMap::from([(1, 2.0), (2, 1.5)]),
        )
        .unwrap();
        match weighted_return_value(&g, &[0]).unwrap() {
            ReturnValue::Divergent { taboo_radius } => {
                assert_relative_eq!(taboo_radius, 1.35, epsilon = 1e-10)
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn weighted_return_critical_band() {
        let g = PatchGraph::new(
            vec![1, 2],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            BTreeMap::from([(1, 2.0), (2, 2.0)]),
        )
        .unwrap();
        assert!(weighted_return_value(&g, &[0]).unwrap().is_critical());
    }
}
