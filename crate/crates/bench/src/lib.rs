//! Shared inputs for the benchmarks.

use grcca::synth::PlantedPartition;
use grcca::Graph;

/// A planted-partition graph with `nodes` nodes, average degree about 4 and
/// sparse bag-of-words attributes of width `features`.
pub fn bench_graph(nodes: usize, features: usize, seed: u64) -> Graph {
    let classes = 7;
    PlantedPartition {
        nodes,
        classes,
        p_in: 3.0 * classes as f64 / nodes as f64,
        p_out: 1.0 / nodes as f64,
        features,
        p_topic: 0.04,
        p_noise: 0.008,
    }
    .generate(seed)
    .expect("valid generator settings")
}
