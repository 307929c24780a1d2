//! Benchmark fixtures shared by the criterion suites.

use metapop::patchgraph::{build_cycle_pipeline, CyclePipeline};
use metapop::PatchGraph;

/// Isotropic pipeline of `n` sinks around one source.
pub fn pipeline(n: usize) -> (CyclePipeline, PatchGraph) {
    let c = CyclePipeline {
        n,
        p: 0.4,
        left_share: 0.5,
        right_share: 0.5,
        s: 0.2,
        l: 0.4,
        r: 0.4,
        source_mean: 2.5,
        sink_mean: 0.7,
    };
    let g = build_cycle_pipeline(&c).expect("fixture parameters are valid");
    (c, g)
}
