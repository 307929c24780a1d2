//! Monte Carlo multitype branching engine.
//!
//! Individuals are exchangeable within a patch, so a generation is stored as
//! aggregated counts: the total offspring of the `Z_n^(i)` parents in patch
//! `i` is drawn in one shot, then split multinomially along row `i` of `D`.
//! The per-generation transfer counts `C_n(i→j)` are kept, which is enough
//! to sample the ancestral line of a uniform survivor exactly, backwards:
//! a uniform individual in patch `j` at generation `n+1` descends from a
//! parent in patch `i` with probability `C_n(i→j) / Z_{n+1}^(j)`, and given
//! its patch that parent is uniform among the patch's residents.
//!
//! Each replicate draws from its own addressed random stream, so outcomes
//! are identical under any thread count.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{EnvKind, EnvStart, EnvironmentModel};
use crate::patchgraph::PatchGraph;
use crate::rng::{self, Domain, StreamRng};
use crate::{Error, Result};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_549_417;

/// Default population cap per replicate.
pub const DEFAULT_CAP: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffspringFamily {
    /// Poisson with the habitat mean.
    #[default]
    Poisson,
    /// Geometric on `{0, 1, …}` with the habitat mean.
    Geometric,
    /// `0` or `2` offspring, `2` with probability `m/2`; needs `m ≤ 2`.
    BernoulliPair,
}

/// Offspring distribution family; the means come from the graph and
/// environment state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OffspringLaw {
    pub family: OffspringFamily,
}

impl OffspringLaw {
    pub fn new(family: OffspringFamily) -> Self {
        Self { family }
    }

    pub fn check_mean(&self, mean: f64) -> Result<()> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::InvalidParameter(format!("offspring mean {mean} is invalid")));
        }
        if self.family == OffspringFamily::BernoulliPair && mean > 2.0 {
            return Err(Error::InvalidParameter(format!(
                "bernoulli_pair offspring cannot have mean {mean} > 2"
            )));
        }
        Ok(())
    }

    /// Total offspring of `parents` independent individuals with the given
    /// mean.
    pub fn sample_total<R: Rng + ?Sized>(&self, rng: &mut R, parents: u64, mean: f64) -> u64 {
        if parents == 0 || mean == 0.0 {
            return 0;
        }
        match self.family {
            OffspringFamily::Poisson => poisson(rng, parents as f64 * mean),
            OffspringFamily::Geometric => {
                // a sum of geometrics is negative binomial, a Gamma-mixed Poisson
                let intensity = Gamma::new(parents as f64, mean)
                    .expect("shape and scale are positive")
                    .sample(rng);
                poisson(rng, intensity)
            }
            OffspringFamily::BernoulliPair => {
                2 * Binomial::new(parents, (mean / 2.0).min(1.0))
                    .expect("probability lies in [0, 1]")
                    .sample(rng)
            }
        }
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("intensity is positive and finite").sample(rng) as u64
}

/// Splits `n` items over the categories of `probs` (summing to 1).
fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64], out: &mut [u64]) {
    let mut left = n;
    let mut mass = 1.0;
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (j, &p) in probs.iter().enumerate() {
        out[j] = 0;
        if left == 0 || p <= 0.0 {
            continue;
        }
        if j == last {
            out[j] = left;
            left = 0;
            continue;
        }
        let share = (p / mass).clamp(0.0, 1.0);
        let x = Binomial::new(left, share).expect("probability lies in [0, 1]").sample(rng);
        out[j] = x;
        left -= x;
        mass -= p;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub generations: usize,
    pub replicates: usize,
    pub seed: u64,
    pub law: OffspringLaw,
    /// Initial counts per patch; empty means one individual in the
    /// reference source.
    pub initial: Vec<u64>,
    /// A replicate whose total population exceeds this is stopped and
    /// marked truncated.
    pub cap: u64,
    pub track_lineage: bool,
}

impl SimConfig {
    pub fn new(generations: usize, replicates: usize, seed: u64) -> Self {
        Self {
            generations,
            replicates,
            seed,
            law: OffspringLaw::default(),
            initial: Vec::new(),
            cap: DEFAULT_CAP,
            track_lineage: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub replicate: usize,
    pub extinct: bool,
    /// First generation with no individual.
    pub extinction_generation: Option<usize>,
    /// Stopped at the population cap.
    pub truncated: bool,
    /// `sizes_per_patch[n][i] = Z_n^(i)` for `n = 0..=last generation`.
    pub sizes_per_patch: Vec<Vec<u64>>,
    /// Patch-visit counts of the ancestral line of one uniform survivor at
    /// the last generation, over ancestors at generations `0..n`; sums to `n`.
    pub lineage_counts: Option<Vec<u64>>,
    /// Environment state in force at each simulated generation.
    pub env_states: Vec<usize>,
}

impl SimOutcome {
    pub fn last_generation(&self) -> usize {
        self.sizes_per_patch.len() - 1
    }

    pub fn total(&self, generation: usize) -> u64 {
        self.sizes_per_patch[generation].iter().sum()
    }

    pub fn survived(&self) -> bool {
        !self.extinct
    }

    /// `|Z_n| / ρ^n` for each recorded generation.
    pub fn normalized_size(&self, rho: f64) -> Vec<f64> {
        self.sizes_per_patch
            .iter()
            .enumerate()
            .map(|(n, z)| z.iter().sum::<u64>() as f64 / rho.powi(n as i32))
            .collect()
    }

    /// `F_i(U_n)` of the sampled survivor.
    pub fn lineage_frequency(&self) -> Option<Vec<f64>> {
        let counts = self.lineage_counts.as_ref()?;
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return None;
        }
        Some(counts.iter().map(|&c| c as f64 / n as f64).collect())
    }
}

/// Sequence of environment states, one per generation.
struct EnvChain<'a> {
    env: &'a EnvironmentModel,
    state: usize,
}

impl<'a> EnvChain<'a> {
    fn start<R: Rng + ?Sized>(env: &'a EnvironmentModel, rng: &mut R) -> Self {
        let state = match (env.kind(), env.start()) {
            (EnvKind::Constant, _) => 0,
            (_, EnvStart::State(s)) => s,
            (EnvKind::Periodic, EnvStart::Stationary) => 0,
            (EnvKind::Markov, EnvStart::Stationary) => {
                if rng.random::<f64>() < env.nu() {
                    0
                } else {
                    1
                }
            }
        };
        Self { env, state }
    }

    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state = match self.env.kind() {
            EnvKind::Constant => 0,
            EnvKind::Periodic => 1 - self.state,
            EnvKind::Markov => {
                let leave = if self.state == 0 {
                    self.env.alpha()
                } else {
                    self.env.beta()
                };
                if rng.random::<f64>() < leave {
                    1 - self.state
                } else {
                    self.state
                }
            }
        };
    }
}

struct Prepared {
    k: usize,
    rows: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    initial: Vec<u64>,
}

fn prepare(graph: &PatchGraph, env: &EnvironmentModel, config: &SimConfig) -> Result<Prepared> {
    graph.ensure_valid()?;
    env.check()?;
    let k = graph.num_patches();
    let means = env.patch_means(graph)?;
    for row in &means {
        for &m in row {
            config.law.check_mean(m)?;
        }
    }
    let initial = if config.initial.is_empty() {
        let mut v = vec![0; k];
        v[graph.reference_source()] = 1;
        v
    } else if config.initial.len() == k {
        config.initial.clone()
    } else {
        return Err(Error::InvalidParameter(format!(
            "initial population has {} entries, expected {k}",
            config.initial.len()
        )));
    };
    Ok(Prepared {
        k,
        rows: graph.dispersal_rows(),
        means,
        initial,
    })
}

fn run_replicate(
    prep: &Prepared,
    env: &EnvironmentModel,
    config: &SimConfig,
    replicate: usize,
) -> SimOutcome {
    let k = prep.k;
    let mut rng = rng::stream(config.seed, Domain::Branching, replicate as u64);
    let mut chain = EnvChain::start(env, &mut rng);
    let mut sizes = vec![prep.initial.clone()];
    let mut transfers: Vec<Vec<u64>> = Vec::new();
    let mut env_states = Vec::new();
    let mut extinct = prep.initial.iter().all(|&z| z == 0);
    let mut extinction_generation = extinct.then_some(0);
    let mut truncated = false;
    let mut split = vec![0u64; k];

    for generation in 0..config.generations {
        if extinct || truncated {
            break;
        }
        if generation > 0 {
            chain.advance(&mut rng);
        }
        env_states.push(chain.state);
        let current = sizes.last().expect("at least the initial generation");
        let mut next = vec![0u64; k];
        let mut moves = vec![0u64; k * k];
        for i in 0..k {
            let births = config
                .law
                .sample_total(&mut rng, current[i], prep.means[chain.state][i]);
            if births == 0 {
                continue;
            }
            multinomial(&mut rng, births, &prep.rows[i], &mut split);
            for j in 0..k {
                moves[i * k + j] = split[j];
                next[j] += split[j];
            }
        }
        let total: u64 = next.iter().sum();
        sizes.push(next);
        if config.track_lineage {
            transfers.push(moves);
        }
        if total == 0 {
            extinct = true;
            extinction_generation = Some(generation + 1);
        } else if total > config.cap {
            truncated = true;
        }
    }

    let lineage_counts = if config.track_lineage && !extinct && sizes.len() > 1 {
        Some(sample_lineage(&mut rng, &sizes, &transfers, k))
    } else {
        None
    };
    SimOutcome {
        replicate,
        extinct,
        extinction_generation,
        truncated,
        sizes_per_patch: sizes,
        lineage_counts,
        env_states,
    }
}

fn pick_weighted<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = u64> + Clone) -> usize {
    let total: u64 = weights.clone().sum();
    let mut target = rng.random_range(0..total);
    for (i, w) in weights.enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    unreachable!("target below the total weight")
}

fn sample_lineage<R: Rng + ?Sized>(
    rng: &mut R,
    sizes: &[Vec<u64>],
    transfers: &[Vec<u64>],
    k: usize,
) -> Vec<u64> {
    let n = sizes.len() - 1;
    let mut counts = vec![0u64; k];
    let mut patch = pick_weighted(rng, sizes[n].iter().copied());
    for generation in (0..n).rev() {
        let moves = &transfers[generation];
        patch = pick_weighted(rng, (0..k).map(|i| moves[i * k + patch]));
        counts[patch] += 1;
    }
    counts
}

/// Independent replicates of the branching process, merged by replicate
/// index.
pub fn simulate_branching(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    config: &SimConfig,
) -> Result<Vec<SimOutcome>> {
    let prep = prepare(graph, env, config)?;
    Ok((0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(&prep, env, config, r))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEstimate {
    pub frequency: Vec<f64>,
    /// Half-width of the 99% normal-approximation interval per patch.
    pub radius: Vec<f64>,
    pub survivors: usize,
}

/// Mean of `F_i(U_n)` over surviving replicates, one survivor each.
pub fn estimate_lineage_frequency(outcomes: &[SimOutcome]) -> Result<LineageEstimate> {
    let samples: Vec<Vec<f64>> = outcomes
        .iter()
        .filter(|o| o.survived())
        .filter_map(|o| o.lineage_frequency())
        .collect();
    if samples.is_empty() {
        return Err(Error::AllExtinct);
    }
    let k = samples[0].len();
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..k)
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n)
        .collect();
    let radius = (0..k)
        .map(|i| {
            if samples.len() < 2 {
                return f64::INFINITY;
            }
            let var = samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
            Z_99 * (var / n).sqrt()
        })
        .collect();
    Ok(LineageEstimate {
        frequency: mean,
        radius,
        survivors: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisperserPath {
    /// `X_0, …, X_steps`.
    pub path: Vec<usize>,
    /// Empirical occupancy over `X_0, …, X_{steps−1}`.
    pub frequencies: Vec<f64>,
}

/// A path of the random disperser started at `start`.
pub fn sample_disperser_path(
    graph: &PatchGraph,
    steps: usize,
    start: usize,
    seed: u64,
) -> Result<DisperserPath> {
    graph.ensure_valid()?;
    let k = graph.num_patches();
    if start >= k {
        return Err(Error::InvalidParameter(format!("start patch {} out of range", start + 1)));
    }
    let cumulative: Vec<Vec<f64>> = graph
        .dispersal_rows()
        .into_iter()
        .map(|row| {
            let mut acc = 0.0;
            row.into_iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    let last_positive: Vec<usize> = graph
        .dispersal_rows()
        .iter()
        .map(|row| row.iter().rposition(|&p| p > 0.0).unwrap_or(0))
        .collect();
    let mut rng: StreamRng = rng::stream(seed, Domain::Disperser, start as u64);
    let mut path = Vec::with_capacity(steps + 1);
    let mut counts = vec![0usize; k];
    let mut x = start;
    path.push(x);
    for _ in 0..steps {
        counts[x] += 1;
        let row = &cumulative[x];
        let r = rng.random::<f64>() * row[k - 1];
        // first patch whose cumulative weight exceeds r has positive weight
        x = row.partition_point(|&c| c <= r).min(last_positive[x]);
        path.push(x);
    }
    let frequencies = counts
        .iter()
        .map(|&c| if steps == 0 { 0.0 } else { c as f64 / steps as f64 })
        .collect();
    Ok(DisperserPath { path, frequencies })
}

/// Gaps between successive visits of `path` to `patch`.
pub fn return_times(path: &[usize], patch: usize) -> Vec<usize> {
    let visits: Vec<usize> = path
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == patch)
        .map(|(t, _)| t)
        .collect();
    visits.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub gamma: f64,
    pub stderr: f64,
    pub per_replicate: Vec<f64>,
}

/// `γ = lim (1/n) log ‖A(w_0) ⋯ A(w_n)‖` with the max-row-sum norm.
///
/// Each replicate renormalizes the running product every step and reports
/// the growth of the log-norm after a burn-in of a tenth of the horizon,
/// which removes the transient of the starting vector.
pub fn estimate_lyapunov(
    graph: &PatchGraph,
    env: &EnvironmentModel,
    horizon: usize,
    replicates: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    graph.ensure_valid()?;
    env.check()?;
    if horizon < 10 || replicates == 0 {
        return Err(Error::InvalidParameter(
            "the Lyapunov estimate needs a horizon of at least 10 and one replicate".into(),
        ));
    }
    let k = graph.num_patches();
    let mats: Vec<nalgebra::DMatrix<f64>> = (0..env.num_states())
        .map(|s| Ok(env.graph_in_state(graph, s)?.mean_matrix_unchecked().into_inner()))
        .collect::<Result<_>>()?;
    let burn_in = horizon / 10;
    let per_replicate: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, Domain::Lyapunov, r as u64);
            let mut chain = EnvChain::start(env, &mut rng);
            let mut product = nalgebra::DMatrix::<f64>::identity(k, k);
            let mut log_norm = 0.0;
            let mut at_burn_in = 0.0;
            for n in 0..horizon {
                if n > 0 {
                    chain.advance(&mut rng);
                }
                product = &product * &mats[chain.state];
                let norm = product
                    .row_iter()
                    .map(|row| row.sum())
                    .fold(0.0, f64::max);
                if norm == 0.0 {
                    return f64::NEG_INFINITY;
                }
                product /= norm;
                log_norm += norm.ln();
                if n + 1 == burn_in {
                    at_burn_in = log_norm;
                }
            }
            (log_norm - at_burn_in) / (horizon - burn_in) as f64
        })
        .collect();
    let n = replicates as f64;
    let gamma = per_replicate.iter().sum::<f64>() / n;
    let stderr = if replicates > 1 && gamma.is_finite() {
        (per_replicate.iter().map(|g| (g - gamma).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        gamma,
        stderr,
        per_replicate,
    })
}
