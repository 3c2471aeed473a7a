//! Synthetic attributed graphs with planted communities.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::DenseMatrix;
use crate::rng;

/// A stochastic block model with bag-of-words attributes. Node `i` belongs to
/// class `i % classes`. Each class owns an equal block of attribute columns;
/// attributes inside the own block switch on with `p_topic`, the rest with
/// `p_noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub classes: usize,
    /// Edge probability within a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    pub features: usize,
    pub p_topic: f64,
    pub p_noise: f64,
}

impl PlantedPartition {
    /// A small, clearly separable instance.
    pub fn small(nodes: usize, classes: usize) -> Self {
        PlantedPartition {
            nodes,
            classes,
            p_in: (8.0 / nodes as f64 * classes as f64).min(1.0),
            p_out: (0.5 / nodes as f64).min(1.0),
            features: 12 * classes,
            p_topic: 0.3,
            p_noise: 0.03,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Graph> {
        let probs = [("p_in", self.p_in), ("p_out", self.p_out), ("p_topic", self.p_topic), ("p_noise", self.p_noise)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} is outside [0, 1]")));
            }
        }
        if self.classes == 0 || self.features < self.classes || self.nodes < self.classes {
            return Err(Error::param("classes", "need 1 <= classes <= min(nodes, features)"));
        }
        let mut r = rng::stream(seed, &[0x5eed]);
        let c = self.classes;
        let block = self.features / c;
        let x = DenseMatrix::from_fn(self.nodes, self.features, |i, j| {
            let own = (j / block).min(c - 1) == i % c;
            let p = if own { self.p_topic } else { self.p_noise };
            f64::from(r.random::<f64>() < p)
        });
        let mut edges = Vec::new();
        for a in 0..self.nodes {
            for b in a + 1..self.nodes {
                let p = if a % c == b % c { self.p_in } else { self.p_out };
                if r.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }
        let labels = (0..self.nodes).map(|i| (i % c) as i64).collect();
        Graph::new(x, edges, Some(labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels() {
        let g = PlantedPartition::small(60, 3).generate(1).unwrap();
        assert_eq!(g.n(), 60);
        assert_eq!(g.num_features(), 36);
        assert_eq!(g.num_classes(), 3);
        assert!(g.num_edges() > 0);
    }

    #[test]
    fn edges_are_mostly_within_class() {
        let g = PlantedPartition::small(200, 4).generate(2).unwrap();
        let labels = g.labels().unwrap();
        let inside = g.edges().iter().filter(|&&(a, b)| labels[a] == labels[b]).count();
        assert!(inside as f64 > 0.8 * g.num_edges() as f64);
    }

    #[test]
    fn seeded() {
        let spec = PlantedPartition::small(40, 2);
        assert_eq!(spec.generate(5).unwrap(), spec.generate(5).unwrap());
    }
}
