//! Trains on a Cora-sized planted-partition graph and compares linear-probe
//! accuracy of raw attributes, an untrained encoder and the trained encoder.
//!
//! `cargo run --release -p grcca --example synthetic -- [nodes]`

use std::time::Instant;

use grcca::eval::{community_detect, node_classify, ProbeConfig};
use grcca::pipeline::{embed, train};
use grcca::synth::PlantedPartition;
use grcca::{rng, Activation, DenseMatrix, ModelConfig, ModelParams, SplitProtocol, TrainConfig};

fn main() -> grcca::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2708);
    let classes = 7;
    let spec = PlantedPartition {
        nodes: n,
        classes,
        p_in: 3.0 * classes as f64 / n as f64,
        p_out: 1.0 / n as f64,
        features: 1433,
        p_topic: 0.04,
        p_noise: 0.008,
    };
    let g = spec.generate(0)?;
    println!("graph: {} nodes, {} edges, {} attributes", g.n(), g.num_edges(), g.num_features());

    let cfg = TrainConfig::default();
    let start = Instant::now();
    let (params, trace) = train(&g, &cfg)?;
    for r in &trace.epochs {
        println!("epoch {:2}  loss {:.4}  ({:.2} s)", r.epoch, r.loss, r.seconds);
    }
    println!("trained in {:.1} s", start.elapsed().as_secs_f64());

    let labels = g.labels().expect("planted labels");
    let protocol = SplitProtocol::Citation {
        per_class: 20,
        test_size: (n / 2).min(1000),
    };
    let probe = |h: &DenseMatrix| -> grcca::Result<f64> {
        Ok(node_classify(h, labels, protocol, 5, 0, &ProbeConfig::default())?.values["accuracy_mean"])
    };
    let untrained = ModelParams::init(ModelConfig::new(g.num_features(), cfg.dim, Activation::Relu), &mut rng::stream(1, &[]))?;
    let h = embed(&g, &params, cfg.aug.alpha, cfg.aug.eps)?;
    println!("probe accuracy, raw attributes:    {:.3}", probe(g.features())?);
    println!("probe accuracy, untrained encoder: {:.3}", probe(&embed(&g, &untrained, cfg.aug.alpha, cfg.aug.eps)?)?);
    println!("probe accuracy, trained encoder:   {:.3}", probe(&h)?);
    let c = community_detect(&h, labels, 0)?;
    println!("communities: acc {:.3}  nmi {:.3}  ari {:.3}", c.values["acc"], c.values["nmi"], c.values["ari"]);
    Ok(())
}
