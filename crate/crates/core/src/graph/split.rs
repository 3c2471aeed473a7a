use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

/// Disjoint train / validation / test node sets for the linear probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// How labeled nodes are divided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitProtocol {
    /// `per_class` training nodes per class, then `test_size` test nodes
    /// drawn from the remaining labeled nodes. Used for citation graphs
    /// (20 per class, 1000 test).
    Citation { per_class: usize, test_size: usize },
    /// `per_class` training and `per_class` validation nodes per class; every
    /// other labeled node is a test node. Used for co-purchase and
    /// co-authorship graphs (30 per class).
    CoPurchase { per_class: usize },
}

impl SplitProtocol {
    pub fn citation() -> Self {
        SplitProtocol::Citation {
            per_class: 20,
            test_size: 1000,
        }
    }

    pub fn co_purchase() -> Self {
        SplitProtocol::CoPurchase { per_class: 30 }
    }
}

/// Random class-stratified split of the labeled nodes of `g`. Every class
/// must keep at least one node outside the per-class sets.
pub fn split_nodes(g: &Graph, protocol: SplitProtocol, seed: u64) -> Result<NodeSplit> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::DegenerateSplit("graph has no labels".into()))?;
    split_labels(labels, protocol, seed)
}

/// [`split_nodes`] on a bare label vector; negative labels mark unlabeled nodes.
pub fn split_labels(labels: &[i64], protocol: SplitProtocol, seed: u64) -> Result<NodeSplit> {
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            by_class.entry(l).or_default().push(i);
        }
    }
    if by_class.is_empty() {
        return Err(Error::DegenerateSplit("no labeled nodes".into()));
    }

    let (per_class, reserved) = match protocol {
        SplitProtocol::Citation { per_class, .. } => (per_class, per_class),
        SplitProtocol::CoPurchase { per_class } => (per_class, 2 * per_class),
    };
    if per_class == 0 {
        return Err(Error::param("per_class", "must be at least 1"));
    }
    for (&class, members) in &by_class {
        if members.len() <= reserved {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required: reserved + 1,
            });
        }
    }

    let mut rng = rng::stream(seed, &[rng::tag::SPLIT]);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut rest = Vec::new();
    for members in by_class.values() {
        let mut m = members.clone();
        m.shuffle(&mut rng);
        train.extend_from_slice(&m[..per_class]);
        val.extend_from_slice(&m[per_class..reserved]);
        rest.extend_from_slice(&m[reserved..]);
    }

    let test = match protocol {
        SplitProtocol::Citation { test_size, .. } => {
            if test_size == 0 || test_size > rest.len() {
                return Err(Error::DegenerateSplit(format!(
                    "test size {test_size} but {} nodes remain after the training set",
                    rest.len()
                )));
            }
            rest.shuffle(&mut rng);
            rest.truncate(test_size);
            rest
        }
        SplitProtocol::CoPurchase { .. } => rest,
    };

    train.sort_unstable();
    val.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok(NodeSplit { train, val, test })
}
