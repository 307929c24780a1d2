//! Growth rate and ancestral occupancy frequencies.
//!
//! Two independent routes are implemented and cross-checked:
//!
//! * **spectral** — the Perron root `ρ` of the mean offspring matrix `A`,
//!   with `φ ∝ left ⊙ right` Perron vectors;
//! * **variational** — `log ρ = max_f { R(f) − I(f) }` over occupancy
//!   frequencies, where `I` is the large-deviations cost of the disperser's
//!   occupancy scheme and `R(f) = Σ f_i log m_i` its reproductive pay-off.
//!   The maximum is computed both through the tilted matrices
//!   `D′_ji = d_ji m_i` and `D″_ji = u_j d_ji / (uD)_i`, and by direct
//!   entropic mirror ascent over the simplex.
//!
//! The variational machinery works on a generic [`WeightedChain`] so the
//! same code serves the constant environment (patch chain) and the periodic
//! environment (chain of oriented edges `(X_2n, X_2n+1)`).

use nalgebra::{DMatrix, DVector};

use crate::disperser;
use crate::environment::{two_step_mean_matrix, EnvKind, EnvironmentModel};
use crate::linalg;
use crate::patchgraph::PatchGraph;
use crate::{Error, Result};

const PERRON_TOL: f64 = 1e-13;
const PERRON_MAX_ITER: usize = 1_000_000;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 100_000;
const ASCENT_MAX_ITER: usize = 10_000;
const ASCENT_INITIAL_STEP: f64 = 0.1;
const ASCENT_MAX_STEP: f64 = 1e4;
const ASCENT_MIN_STEP: f64 = 1e-12;
const ASCENT_GRAD_TOL: f64 = 1e-10;
const ASCENT_STALL_WINDOW: usize = 50;
/// Agreement required between the tilted and direct variational routes.
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub rho: f64,
    /// Left Perron vector, normalized to sum 1.
    pub left: Vec<f64>,
    /// Right Perron vector, normalized to sum 1.
    pub right: Vec<f64>,
    /// `φ_i ∝ left_i · right_i`, summing to 1.
    pub phi: Vec<f64>,
    /// `max(‖left·A − ρ left‖∞, ‖A right − ρ right‖∞)` for the
    /// max-normalized vectors.
    pub residual: f64,
}

fn dominant(a: &DMatrix<f64>) -> Result<linalg::Dominant> {
    match linalg::power_iteration(a, 0.0, PERRON_TOL, PERRON_MAX_ITER / 10) {
        Ok(d) => Ok(d),
        Err(_) => {
            // periodic structure (e.g. left after removing sterile patches)
            let shift = a.row_iter().map(|r| r.sum()).fold(0.0, f64::max).max(1e-300);
            linalg::power_iteration(a, shift, PERRON_TOL, PERRON_MAX_ITER)
        }
    }
}

fn normalized(v: &DVector<f64>) -> Vec<f64> {
    let s = v.sum();
    v.iter().map(|x| (x / s).max(0.0)).collect()
}

/// Perron data of an arbitrary nonnegative matrix.
pub fn perron_of(a: &DMatrix<f64>) -> Result<SpectralData> {
    let right = dominant(a)?;
    if right.value <= 0.0 {
        return Err(Error::InvalidParameter(
            "mean offspring matrix has zero spectral radius".into(),
        ));
    }
    let left = dominant(&a.transpose())?;
    let x = &right.vector;
    let y = &left.vector;
    let rho = (y.transpose() * a * x)[(0, 0)] / y.dot(x);
    let res_r = (a * x - x * rho).amax() / x.amax();
    let res_l = (a.transpose() * y - y * rho).amax() / y.amax();
    let phi_raw = y.component_mul(x);
    Ok(SpectralData {
        rho,
        left: normalized(y),
        right: normalized(x),
        phi: normalized(&phi_raw),
        residual: res_r.max(res_l),
    })
}

/// Perron root and vectors of the mean offspring matrix.
pub fn perron(graph: &PatchGraph) -> Result<SpectralData> {
    let a = graph.mean_matrix()?;
    perron_of(a.matrix())
}

/// A stochastic transition matrix together with per-state reproduction
/// weights (the means of the state's habitat).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChain {
    pub transition: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl WeightedChain {
    pub fn from_graph(graph: &PatchGraph) -> Result<Self> {
        graph.ensure_valid()?;
        Ok(Self {
            transition: graph.dispersal().clone(),
            weights: graph.patch_means(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFunctionValue {
    pub f: Vec<f64>,
    /// `I(f)`, possibly `+∞`.
    pub value: f64,
    /// Normalized (near-)maximizer `u(f)`; zero off the support of `f`.
    pub maximizer_u: Vec<f64>,
    /// `max_j |f_j/u_j − Σ_i d_ji f_i/(uD)_i|` over the support.
    pub residual: f64,
    /// False when the supremum is a limit (boundary `f`, or support split
    /// into several communicating classes) rather than attained by `u ≫ 0`.
    pub attained: bool,
}

fn check_frequency(f: &[f64], k: usize) -> Result<()> {
    if f.len() != k {
        return Err(Error::InvalidParameter(format!(
            "frequency vector has {} entries, expected {k}",
            f.len()
        )));
    }
    if f.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("frequencies must be nonnegative".into()));
    }
    let total: f64 = f.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "frequencies sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Groups `states` (indices into `transition`) into communicating classes of
/// the restricted graph. Returns `None` when some state lies on no cycle.
fn communicating_classes(transition: &DMatrix<f64>, states: &[usize]) -> Option<Vec<Vec<usize>>> {
    let sub = linalg::submatrix(transition, states);
    let reach = linalg::reachability(&sub);
    let n = states.len();
    if (0..n).any(|i| !reach[i][i]) {
        return None;
    }
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..n)
            .filter(|&j| j == i || (reach[i][j] && reach[j][i]))
            .collect();
        for &j in &class {
            assigned[j] = true;
        }
        classes.push(class.into_iter().map(|j| states[j]).collect());
    }
    Some(classes)
}

/// State of the fixed-point iteration `u ← normalize(f_j / Σ_i d_ji f_i/(uD)_i)`
/// on one communicating class.
struct FixedPoint {
    block: DMatrix<f64>,
    f: Vec<f64>,
}

impl FixedPoint {
    fn flow(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| (0..n).map(|k| v[k] * self.block[(k, i)]).sum())
            .collect()
    }

    /// `Σ_i d_ji f_i / (vD)_i` for each `j`.
    fn pullback(&self, vd: &[f64]) -> Vec<f64> {
        let n = vd.len();
        (0..n)
            .map(|j| (0..n).map(|i| self.block[(j, i)] * self.f[i] / vd[i]).sum())
            .collect()
    }

    fn residual(&self, v: &[f64]) -> f64 {
        let vd = self.flow(v);
        let back = self.pullback(&vd);
        (0..v.len())
            .map(|j| (self.f[j] / v[j] - back[j]).abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, v: &[f64]) -> f64 {
        let vd = self.flow(v);
        (0..v.len())
            .map(|j| self.f[j] * (v[j] / vd[j]).ln())
            .sum()
    }

    fn solve(&self, start: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        let n = self.f.len();
        let total: f64 = self.f.iter().sum();
        let mut v: Vec<f64> = match start {
            Some(s) if s.len() == n && s.iter().all(|&x| x > 0.0) => s.to_vec(),
            _ => self.f.iter().map(|x| x / total).collect(),
        };
        let mut residual = f64::INFINITY;
        for _ in 0..FIXED_POINT_MAX_ITER {
            let vd = self.flow(&v);
            let back = self.pullback(&vd);
            residual = (0..n)
                .map(|j| (self.f[j] / v[j] - back[j]).abs())
                .fold(0.0, f64::max);
            if residual <= FIXED_POINT_TOL {
                return Ok((v, residual));
            }
            let mut next: Vec<f64> = (0..n).map(|j| self.f[j] / back[j]).collect();
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= s);
            v = next;
        }
        Err(Error::NoConvergence {
            what: "rate-function fixed point",
            iterations: FIXED_POINT_MAX_ITER,
            residual,
        })
    }
}

fn fixed_point(transition: &DMatrix<f64>, class: &[usize], f: &[f64]) -> FixedPoint {
    FixedPoint {
        block: linalg::submatrix(transition, class),
        f: class.iter().map(|&j| f[j]).collect(),
    }
}

/// `I(f) = sup_{v ≫ 0} Σ f_j log(v_j / (vD)_j)` on an arbitrary stochastic
/// matrix, optionally warm-started from a previous maximizer.
pub fn rate_function_on(
    transition: &DMatrix<f64>,
    f: &[f64],
    warm_start: Option<&[f64]>,
) -> Result<RateFunctionValue> {
    let k = transition.nrows();
    check_frequency(f, k)?;
    let support: Vec<usize> = (0..k).filter(|&j| f[j] > 0.0).collect();
    let Some(classes) = communicating_classes(transition, &support) else {
        return Ok(RateFunctionValue {
            f: f.to_vec(),
            value: f64::INFINITY,
            maximizer_u: vec![0.0; k],
            residual: 0.0,
            attained: false,
        });
    };
    let mut u = vec![0.0; k];
    let mut value = 0.0;
    let mut residual: f64 = 0.0;
    for class in &classes {
        let fp = fixed_point(transition, class, f);
        let start: Option<Vec<f64>> = warm_start.map(|w| class.iter().map(|&j| w[j]).collect());
        let (v, res) = fp.solve(start.as_deref())?;
        value += fp.objective(&v);
        residual = residual.max(res);
        let mass: f64 = class.iter().map(|&j| f[j]).sum();
        for (r, &j) in class.iter().enumerate() {
            u[j] = v[r] * mass;
        }
    }
    Ok(RateFunctionValue {
        f: f.to_vec(),
        value: value.max(0.0),
        maximizer_u: u,
        residual,
        attained: classes.len() == 1 && support.len() == k,
    })
}

pub fn rate_function(graph: &PatchGraph, f: &[f64]) -> Result<RateFunctionValue> {
    graph.ensure_valid()?;
    rate_function_on(graph.dispersal(), f, None)
}

/// `R(f) = Σ f_i log w_i` with `0 · log 0 = 0`; `−∞` when a sterile state
/// carries positive frequency.
pub fn payoff_on(weights: &[f64], f: &[f64]) -> f64 {
    f.iter()
        .zip(weights)
        .map(|(&fi, &w)| {
            if fi == 0.0 {
                0.0
            } else if w == 0.0 {
                f64::NEG_INFINITY
            } else {
                fi * w.ln()
            }
        })
        .sum()
}

pub fn reproductive_payoff(graph: &PatchGraph, f: &[f64]) -> Result<f64> {
    graph.ensure_valid()?;
    check_frequency(f, graph.num_patches())?;
    Ok(payoff_on(&graph.patch_means(), f))
}

/// Maximizer of `R − I` from one variational route.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalRoute {
    /// `max (R − I)`; equals `log ρ` (or `2 log ρ` on the edge chain).
    pub value: f64,
    pub phi: Vec<f64>,
    /// `u(φ)`, the supremum-attaining vector of `I` at `φ`.
    pub maximizer_u: Vec<f64>,
    /// Residual of the first-order identity at `(φ, u)`.
    pub idt_residual: f64,
    pub iterations: usize,
}

fn restricted(chain: &WeightedChain) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let support = chain.support();
    if support.is_empty() {
        return Err(Error::InvalidParameter("every state is sterile".into()));
    }
    let block = linalg::submatrix(&chain.transition, &support);
    let reach = linalg::reachability(&block);
    if reach.iter().any(|row| row.iter().any(|&b| !b)) {
        return Err(Error::Unsupported(
            "removing sterile states disconnects the chain; the variational route needs an \
             irreducible fertile part"
                .into(),
        ));
    }
    Ok((support, block))
}

fn expand(support: &[usize], values: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (r, &j) in support.iter().enumerate() {
        out[j] = values[r];
    }
    out
}

/// Identity residual `max_j |f_j/u_j − Σ_i d_ji f_i/(uD)_i|` on a block.
fn idt_residual(block: &DMatrix<f64>, f: &[f64], u: &[f64]) -> f64 {
    let fp = FixedPoint {
        block: block.clone(),
        f: f.to_vec(),
    };
    fp.residual(u)
}

/// Tilted-matrix route: `u` is the left Perron vector of `D′ = D diag(w)`
/// and `φ` the Perron vector of `D″_ji = u_j d_ji / (uD)_i` at eigenvalue 1.
pub fn tilted_route(chain: &WeightedChain) -> Result<VariationalRoute> {
    let k = chain.len();
    let (support, block) = restricted(chain)?;
    let n = support.len();
    let w: Vec<f64> = support.iter().map(|&j| chain.weights[j]).collect();
    let tilted = DMatrix::from_fn(n, n, |j, i| block[(j, i)] * w[i]);
    let left = dominant(&tilted.transpose())?;
    let u = normalized(&left.vector);
    let ud: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| u[j] * block[(j, i)]).sum())
        .collect();
    // D″ has unit column sums, so φ is the stationary law of D″ᵀ; a direct
    // solve stays accurate when D″ is nearly reducible and power iteration
    // would crawl
    let reweighted_t = DMatrix::from_fn(n, n, |i, j| u[j] * block[(j, i)] / ud[i]);
    let phi = disperser::stationary_of(&reweighted_t)?.u;
    let cost: f64 = (0..n).map(|j| phi[j] * (u[j] / ud[j]).ln()).sum();
    let value = payoff_on(&w, &phi) - cost;
    let residual = idt_residual(&block, &phi, &u);
    Ok(VariationalRoute {
        value,
        phi: expand(&support, &phi, k),
        maximizer_u: expand(&support, &u, k),
        idt_residual: residual,
        iterations: left.iterations,
    })
}

/// Objective, maximizer of `I` and gradient of `R − I` at one frequency.
struct AscentPoint {
    f: Vec<f64>,
    u: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    residual: f64,
}

fn ascent_point(block: &DMatrix<f64>, w: &[f64], f: Vec<f64>, warm: &[f64]) -> Result<AscentPoint> {
    let fp = FixedPoint {
        block: block.clone(),
        f,
    };
    let (u, residual) = fp.solve(Some(warm))?;
    let ud = fp.flow(&u);
    let grad = (0..u.len()).map(|j| (w[j] * ud[j] / u[j]).ln()).collect();
    let value = payoff_on(w, &fp.f) - fp.objective(&u);
    Ok(AscentPoint {
        f: fp.f,
        u,
        value,
        grad,
        residual,
    })
}

fn spread(g: &[f64]) -> f64 {
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Direct maximization of `R − I` by entropic mirror ascent from the
/// stationary law. The gradient at `f` is `log(w_j (uD)_j / u_j)` with
/// `u = u(f)`.
///
/// The step adapts: a trial step `η` is kept when
/// `F(f′) ≥ F(f) + ⟨∇F, f′ − f⟩ − KL(f′‖f)/η` and then doubled, otherwise
/// halved and retried. Stops once the gradient is constant on the support.
pub fn direct_route(chain: &WeightedChain) -> Result<VariationalRoute> {
    let k = chain.len();
    let (support, block) = restricted(chain)?;
    let n = support.len();
    let w: Vec<f64> = support.iter().map(|&j| chain.weights[j]).collect();
    let stationary = disperser::stationary_of(&chain.transition)?;
    let mut f: Vec<f64> = support.iter().map(|&j| stationary.u[j].max(1e-300)).collect();
    let s: f64 = f.iter().sum();
    f.iter_mut().for_each(|x| *x /= s);

    let warm = f.clone();
    let mut point = ascent_point(&block, &w, f, &warm)?;
    let mut step = ASCENT_INITIAL_STEP;
    let mut iterations = 0;
    let mut checkpoint = point.value;
    while iterations < ASCENT_MAX_ITER && spread(&point.grad) > ASCENT_GRAD_TOL {
        iterations += 1;
        // near the optimum the gains drop below the noise of the inner solve
        if iterations % ASCENT_STALL_WINDOW == 0 {
            if point.value - checkpoint <= 1e-13 * point.value.abs().max(1.0) {
                break;
            }
            checkpoint = point.value;
        }
        let top = point.grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut trial: Vec<f64> = (0..n)
            .map(|j| point.f[j] * (step * (point.grad[j] - top)).exp())
            .collect();
        let total: f64 = trial.iter().sum();
        trial.iter_mut().for_each(|x| *x /= total);
        let linear: f64 = (0..n).map(|j| point.grad[j] * (trial[j] - point.f[j])).sum();
        let divergence: f64 = (0..n)
            .filter(|&j| trial[j] > 0.0)
            .map(|j| trial[j] * (trial[j] / point.f[j]).ln())
            .sum();
        // a trial whose inner problem stalls counts as a rejected step
        let candidate = ascent_point(&block, &w, trial, &point.u).ok();
        let slack = 1e-14 * point.value.abs().max(1.0);
        let accepted = candidate
            .as_ref()
            .is_some_and(|c| c.value + slack >= point.value + linear - divergence / step);
        if accepted {
            point = candidate.expect("accepted trials exist");
            step = (2.0 * step).min(ASCENT_MAX_STEP);
        } else {
            step *= 0.5;
            if step < ASCENT_MIN_STEP {
                break;
            }
        }
    }
    Ok(VariationalRoute {
        value: point.value,
        phi: expand(&support, &point.f, k),
        maximizer_u: expand(&support, &point.u, k),
        idt_residual: point.residual,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalGrowth {
    pub log_rho: f64,
    pub phi: Vec<f64>,
    pub tilted: VariationalRoute,
    pub direct: VariationalRoute,
    /// `|tilted.value − direct.value|`
    pub route_delta: f64,
}

fn combine_routes(tilted: VariationalRoute, direct: VariationalRoute) -> Result<VariationalGrowth> {
    let delta = (tilted.value - direct.value).abs();
    if !(delta <= ROUTE_AGREEMENT_TOL) {
        return Err(Error::Inconsistent(format!(
            "variational routes disagree: tilted {} vs direct {} (|Δ| = {delta:e})",
            tilted.value, direct.value
        )));
    }
    Ok(VariationalGrowth {
        log_rho: tilted.value,
        phi: tilted.phi.clone(),
        tilted,
        direct,
        route_delta: delta,
    })
}

/// `log ρ = max { R(f) − I(f) }` with its maximizer `φ`, by both the
/// tilted-matrix and the mirror-ascent routes.
pub fn growth_variational(graph: &PatchGraph) -> Result<VariationalGrowth> {
    let chain = WeightedChain::from_graph(graph)?;
    let tilted = tilted_route(&chain)?;
    let direct = direct_route(&chain)?;
    combine_routes(tilted, direct)
}

/// Chain of oriented edges `(X_2n, X_2n+1)` with weights
/// `m_i(e1) m_j(e2)`; only edges with `d_ij > 0` are states.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeChain {
    pub edges: Vec<(usize, usize)>,
    pub chain: WeightedChain,
}

pub fn edge_chain(graph: &PatchGraph, env: &EnvironmentModel) -> Result<EdgeChain> {
    if env.kind() != EnvKind::Periodic {
        return Err(Error::InvalidEnvironment(
            "the edge chain needs a periodic environment".into(),
        ));
    }
    graph.ensure_valid()?;
    env.check()?;
    let means = env.patch_means(graph)?;
    let d = graph.dispersal();
    let k = graph.num_patches();
    let edges: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|&(i, j)| d[(i, j)] > 0.0)
        .collect();
    let n = edges.len();
    let transition = DMatrix::from_fn(n, n, |a, b| {
        let (_, j) = edges[a];
        let (kk, l) = edges[b];
        d[(j, kk)] * d[(kk, l)]
    });
    let weights = edges.iter().map(|&(i, j)| means[0][i] * means[1][j]).collect();
    Ok(EdgeChain {
        edges,
        chain: WeightedChain { transition, weights },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrowth {
    /// Geometric-mean growth rate per generation.
    pub rho: f64,
    /// `φ_(i,j)` over ordered pairs, `K×K` row-major; zero on absent edges.
    pub phi_pairs: Vec<f64>,
    /// `Σ_i φ_(i,j)`, the marginal of the second coordinate of each pair.
    pub phi_patch: Vec<f64>,
    /// `sqrt` of the Perron root of the two-step mean matrix.
    pub rho_two_step: f64,
    pub variational: VariationalGrowth,
}

pub fn periodic_growth(graph: &PatchGraph, env: &EnvironmentModel) -> Result<PeriodicGrowth> {
    let ec = edge_chain(graph, env)?;
    let k = graph.num_patches();
    let tilted = tilted_route(&ec.chain)?;
    let direct = direct_route(&ec.chain)?;
    let variational = combine_routes(tilted, direct)?;
    let two_step = two_step_mean_matrix(graph, env)?;
    let rho_two_step = perron_of(two_step.matrix())?.rho.sqrt();
    let mut phi_pairs = vec![0.0; k * k];
    let mut phi_patch = vec![0.0; k];
    for (e, &(i, j)) in ec.edges.iter().enumerate() {
        phi_pairs[i * k + j] = variational.phi[e];
        phi_patch[j] += variational.phi[e];
    }
    Ok(PeriodicGrowth {
        rho: (0.5 * variational.log_rho).exp(),
        phi_pairs,
        phi_patch,
        rho_two_step,
        variational,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgraph::{build_cycle_pipeline, build_two_patch, CyclePipeline};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    #[test]
    fn perron_two_patch_closed_form() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        let s = perron(&g).unwrap();
        assert_relative_eq!(s.rho, 1.25, epsilon = 1e-13);
        assert_relative_eq!(s.phi[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(s.phi[1], 0.2, epsilon = 1e-12);
        assert!(s.residual <= 1e-10 * s.rho);
    }

    #[test]
    fn perron_unit_means_is_stationary() {
        let g = build_two_patch(1.0, 1.0, 0.3, 0.6).unwrap();
        let s = perron(&g).unwrap();
        assert_relative_eq!(s.rho, 1.0, epsilon = 1e-13);
        assert_relative_eq!(s.phi[0], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn perron_handles_sterile_sink() {
        let g = build_two_patch(2.0, 0.0, 0.3, 0.6).unwrap();
        let s = perron(&g).unwrap();
        assert_relative_eq!(s.rho, 1.4, epsilon = 1e-13);
        assert_relative_eq!(s.phi[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rate_function_zero_at_stationary() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.6).unwrap();
        let u = disperser::stationary(&g).unwrap().u;
        let rf = rate_function(&g, &u).unwrap();
        assert!(rf.value.abs() <= 1e-12);
        assert!(rf.attained);
    }

    #[test]
    fn rate_function_boundary_face() {
        let (p, q) = (0.3, 0.6);
        let g = build_two_patch(2.0, 0.5, p, q).unwrap();
        let rf = rate_function(&g, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(rf.value, -(1.0f64 - p).ln(), epsilon = 1e-14);
        assert!(!rf.attained);
    }

    #[test]
    fn rate_function_iid_closed_form() {
        // p + q = 1: I(f) = f1 log(f1/q) + f2 log(f2/(1−q))
        let q = 0.35;
        let g = build_two_patch(2.0, 0.5, 1.0 - q, q).unwrap();
        let f = [0.7, 0.3];
        let rf = rate_function(&g, &f).unwrap();
        let expect = f[0] * (f[0] / q).ln() + f[1] * (f[1] / (1.0 - q)).ln();
        assert_relative_eq!(rf.value, expect, epsilon = 1e-12);
        assert!(rf.residual <= 1e-12);
    }

    #[test]
    fn rate_function_infinite_without_cycles_in_support() {
        let g = PatchGraph::new(
            vec![1, 2],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            BTreeMap::from([(1, 2.0), (2, 0.5)]),
        )
        .unwrap();
        assert_eq!(rate_function(&g, &[0.0, 1.0]).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn rate_function_rejects_non_frequencies() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.6).unwrap();
        assert!(rate_function(&g, &[0.5, 0.6]).is_err());
        assert!(rate_function(&g, &[1.0]).is_err());
    }

    #[test]
    fn payoff_examples() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.6).unwrap();
        assert_relative_eq!(reproductive_payoff(&g, &[1.0, 0.0]).unwrap(), 2f64.ln());
        assert_relative_eq!(
            reproductive_payoff(&g, &[0.8, 0.2]).unwrap(),
            0.6 * 2f64.ln(),
            epsilon = 1e-15
        );
        let g = build_two_patch(1.3, 1.3, 0.3, 0.6).unwrap();
        assert_relative_eq!(reproductive_payoff(&g, &[0.4, 0.6]).unwrap(), 1.3f64.ln());
        let g = build_two_patch(1.3, 0.0, 0.3, 0.6).unwrap();
        assert_eq!(reproductive_payoff(&g, &[0.4, 0.6]).unwrap(), f64::NEG_INFINITY);
        assert_relative_eq!(reproductive_payoff(&g, &[1.0, 0.0]).unwrap(), 1.3f64.ln());
    }

    #[test]
    fn variational_two_patch_closed_form() {
        let (big_m, m, q) = (2.0, 0.5, 0.5);
        let g = build_two_patch(big_m, m, 1.0 - q, q).unwrap();
        let v = growth_variational(&g).unwrap();
        assert_relative_eq!(v.log_rho, (q * big_m + (1.0 - q) * m).ln(), epsilon = 1e-12);
        assert_relative_eq!(v.phi[0], q * big_m / (q * big_m + (1.0 - q) * m), epsilon = 1e-12);
        assert!(v.route_delta <= 1e-6);
        assert!(v.tilted.idt_residual <= 1e-9);
    }

    #[test]
    fn variational_equal_means_gives_stationary() {
        let g = build_two_patch(1.4, 1.4, 0.2, 0.7).unwrap();
        let v = growth_variational(&g).unwrap();
        let u = disperser::stationary(&g).unwrap().u;
        assert_relative_eq!(v.phi[0], u[0], epsilon = 1e-10);
        assert_relative_eq!(v.log_rho, 1.4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn variational_matches_spectral_on_pipeline() {
        let c = CyclePipeline {
            n: 4,
            p: 0.3,
            left_share: 0.2,
            right_share: 0.8,
            s: 0.3,
            l: 0.2,
            r: 0.5,
            source_mean: 3.0,
            sink_mean: 0.6,
        };
        let g = build_cycle_pipeline(&c).unwrap();
        let v = growth_variational(&g).unwrap();
        let s = perron(&g).unwrap();
        assert!((v.log_rho - s.rho.ln()).abs() <= 1e-10);
        assert!((v.direct.value - s.rho.ln()).abs() <= 1e-6);
        for (a, b) in v.phi.iter().zip(&s.phi) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn variational_with_sterile_patch() {
        let g = PatchGraph::new(
            vec![1, 2, 3],
            vec![vec![0.5, 0.3, 0.2], vec![0.3, 0.4, 0.3], vec![0.3, 0.3, 0.4]],
            BTreeMap::from([(1, 2.0), (2, 0.5), (3, 0.0)]),
        )
        .unwrap();
        let v = growth_variational(&g).unwrap();
        let s = perron(&g).unwrap();
        assert!((v.log_rho - s.rho.ln()).abs() <= 1e-10);
        assert_eq!(v.phi[2], 0.0);
    }

    #[test]
    fn periodic_two_patch_closed_forms() {
        let q: f64 = 0.4;
        let p = 1.0 - q;
        let (big1, big2, small1, small2) = (3.0, 0.5, 0.8, 0.9);
        let g = build_two_patch(1.0, 1.0, p, q).unwrap();
        let env = EnvironmentModel::periodic(
            BTreeMap::from([(1, big1), (2, small1)]),
            BTreeMap::from([(1, big2), (2, small2)]),
        );
        let pg = periodic_growth(&g, &env).unwrap();
        let expect = ((q * big1 + p * small1) * (q * big2 + p * small2)).sqrt();
        assert_relative_eq!(pg.rho, expect, epsilon = 1e-10);
        assert_relative_eq!(pg.rho_two_step, expect, epsilon = 1e-10);
        let eps = [q, p];
        let m_e1 = [big1, small1];
        let m_e2 = [big2, small2];
        let mut total = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                total += eps[i] * eps[j] * m_e1[i] * m_e2[j];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let expect = eps[i] * eps[j] * m_e1[i] * m_e2[j] / total;
                assert_relative_eq!(pg.phi_pairs[i * 2 + j], expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn periodic_with_equal_states_is_constant() {
        let g = build_two_patch(2.0, 0.5, 0.3, 0.45).unwrap();
        let means = g.mean_offspring().clone();
        let env = EnvironmentModel::periodic(means.clone(), means);
        let pg = periodic_growth(&g, &env).unwrap();
        let s = perron(&g).unwrap();
        assert_relative_eq!(pg.rho, s.rho, epsilon = 1e-10);
    }
}
