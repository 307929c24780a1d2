//! Randomized model corpora for property tests, acceptance runs and
//! benchmarks. Every generator is a pure function of its random stream.

use std::collections::BTreeMap;

use rand::Rng;

use crate::growth;
use crate::patchgraph::{build_cycle_pipeline, build_two_patch, CyclePipeline, PatchGraph};
use crate::rng::{self, Domain, StreamRng};

/// Random primitive graph on `k` patches with up to three habitat types.
///
/// The dispersal support contains the cycle `0 → 1 → … → k−1 → 0` and every
/// loop, plus extra edges with probability `density`, so the chain is
/// irreducible and aperiodic. Means are rescaled so the Perron root is
/// uniform in `[0.5, 2]`, which keeps many instances near criticality.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, k: usize, density: f64) -> PatchGraph {
    assert!(k >= 1);
    let types = rng.random_range(1..=k.min(3));
    let mut habitats: Vec<usize> = (0..k).map(|i| if i < types { i + 1 } else { rng.random_range(1..=types) }).collect();
    // shuffle labels over patches
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        habitats.swap(i, j);
    }
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k)
                .map(|j| {
                    let forced = j == i || j == (i + 1) % k;
                    if forced || rng.random::<f64>() < density {
                        rng.random_range(0.05..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            // exact row sums: fold rounding into the diagonal
            let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x).sum();
            row[i] = 1.0 - off;
            row
        })
        .collect();
    let raw: BTreeMap<usize, f64> = (1..=types).map(|h| (h, rng.random_range(0.1..3.0))).collect();
    let g = PatchGraph::new(habitats.clone(), rows.clone(), raw.clone()).expect("shapes are consistent");
    let rho = growth::perron(&g).map(|s| s.rho).unwrap_or(1.0);
    let target = rng.random_range(0.5..2.0);
    let scaled = raw.into_iter().map(|(h, m)| (h, m * target / rho)).collect();
    PatchGraph::new(habitats, rows, scaled).expect("shapes are consistent")
}

/// Random two-patch source/sink instance with `M > 1 ≥ m`.
pub fn random_two_patch<R: Rng + ?Sized>(rng: &mut R) -> PatchGraph {
    let big_m = rng.random_range(1.01..4.0);
    let m = rng.random_range(0.0..1.0);
    let p = rng.random_range(0.02..0.98);
    let q = rng.random_range(0.02..0.98);
    build_two_patch(big_m, m, p, q).expect("parameters lie in range")
}

/// Random pipeline parameters with `n` sinks and a positive discriminant.
pub fn random_pipeline<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CyclePipeline {
    loop {
        let s = rng.random_range(0.02..0.9);
        let split = rng.random_range(0.05..0.95);
        let l = (1.0 - s) * split;
        let left_share = rng.random_range(0.0..1.0);
        let c = CyclePipeline {
            n,
            p: rng.random_range(0.02..0.98),
            left_share,
            right_share: 1.0 - left_share,
            s,
            l,
            r: 1.0 - s - l,
            source_mean: rng.random_range(1.01..4.0),
            sink_mean: rng.random_range(0.05..1.0),
        };
        let disc = (1.0 - c.sink_mean * s).powi(2) - 4.0 * c.sink_mean.powi(2) * c.l * c.r;
        if disc > 1e-6 && c.check().is_ok() {
            return c;
        }
    }
}

/// The shared test corpus: pipelines, two-patch instances, and random
/// graphs on 2 to 10 patches.
pub fn test_corpus(seed: u64, count: usize) -> Vec<PatchGraph> {
    let mut rng: StreamRng = rng::stream(seed, Domain::Corpus, 0);
    (0..count)
        .map(|i| match i % 4 {
            0 => random_two_patch(&mut rng),
            1 => {
                let n = rng.random_range(1..=12);
                build_cycle_pipeline(&random_pipeline(&mut rng, n)).expect("generated parameters are valid")
            }
            _ => {
                let k = rng.random_range(2..=10);
                let density = rng.random_range(0.0..0.6);
                random_graph(&mut rng, k, density)
            }
        })
        .collect()
}
