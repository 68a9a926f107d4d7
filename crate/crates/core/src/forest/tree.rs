use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bootstrap::BootstrapRecord;
use super::split::{best_split, leaf_value, Sample};
use super::TreeParams;
use crate::dataset::Dataset;

/// Identifier of a leaf within one tree.
pub type LeafId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: LeafId,
    },
}

/// Terminal region of a tree: the in-bag points that built it, with their
/// bootstrap multiplicities, and the value it predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub samples: Vec<(usize, u32)>,
    pub value: f64,
}

impl Leaf {
    /// Total in-bag multiplicity of the leaf (`|M(t)|`).
    pub fn total_multiplicity(&self) -> u64 {
        self.samples.iter().map(|&(_, c)| u64::from(c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Routes `x` to its leaf. Values equal to a threshold go left.
    pub fn leaf_of(&self, x: &[f64]) -> LeafId {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[feature] <= threshold { left } else { right },
                Node::Leaf { leaf } => return leaf,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_of(x)].value
    }

    /// Length of the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((node, d)) = stack.pop() {
            match self.nodes[node] {
                Node::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
                Node::Leaf { .. } => max = max.max(d),
            }
        }
        max
    }

    /// Checks the structural invariants of a deserialized tree.
    pub(crate) fn validate(&self, n_features: usize, n_train: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut seen_leaf = vec![false; self.leaves.len()];
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if node >= self.nodes.len() || std::mem::replace(&mut visited[node], true) {
                return Err(format!("node {node} is out of range or not a tree"));
            }
            match self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features || !threshold.is_finite() {
                        return Err(format!("node {node} has an invalid split"));
                    }
                    stack.push(left);
                    stack.push(right);
                }
                Node::Leaf { leaf } => {
                    if leaf >= self.leaves.len() || std::mem::replace(&mut seen_leaf[leaf], true) {
                        return Err(format!("node {node} references bad leaf {leaf}"));
                    }
                }
            }
        }
        if seen_leaf.iter().any(|s| !s) || visited.iter().any(|v| !v) {
            return Err("tree has unreachable nodes or leaves".into());
        }
        for leaf in &self.leaves {
            if leaf.samples.is_empty() || leaf.samples.iter().any(|&(j, c)| j >= n_train || c == 0) {
                return Err("leaf with invalid in-bag samples".into());
            }
        }
        Ok(())
    }
}

/// Grows one tree greedily on the in-bag points of `record`.
///
/// A node becomes a leaf at `max_depth`, when it has fewer than
/// `min_samples_split` distinct in-bag points, or when no admissible split
/// reduces impurity. Candidate features are drawn without replacement at
/// every node.
pub fn fit_tree<R: Rng + ?Sized>(data: &Dataset, record: &BootstrapRecord, params: &TreeParams, rng: &mut R) -> Tree {
    let p = data.n_features();
    let max_features = params.resolved_max_features(p);
    let root: Vec<Sample> = record
        .in_bag()
        .map(|(index, weight)| Sample { index, weight })
        .collect();

    let mut tree = Tree {
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    // (node slot, samples, depth)
    tree.nodes.push(Node::Leaf { leaf: usize::MAX });
    let mut stack: Vec<(usize, Vec<Sample>, usize)> = vec![(0, root, 0)];
    while let Some((slot, samples, depth)) = stack.pop() {
        let split = if depth < params.max_depth && samples.len() >= params.min_samples_split {
            let candidates = rand::seq::index::sample(rng, p, max_features).into_vec();
            best_split(&samples, data, params.criterion, &candidates, params.min_samples_leaf)
        } else {
            None
        };
        match split {
            Some(s) => {
                let (left, right): (Vec<Sample>, Vec<Sample>) = samples
                    .into_iter()
                    .partition(|smp| data.value(smp.index, s.feature) <= s.threshold);
                let left_slot = tree.nodes.len();
                tree.nodes.push(Node::Leaf { leaf: usize::MAX });
                tree.nodes.push(Node::Leaf { leaf: usize::MAX });
                tree.nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: left_slot,
                    right: left_slot + 1,
                };
                // Right first so the left subtree is expanded first.
                stack.push((left_slot + 1, right, depth + 1));
                stack.push((left_slot, left, depth + 1));
            }
            None => {
                let value = leaf_value(&samples, data.target(), params.criterion);
                let leaf = tree.leaves.len();
                let mut entries: Vec<(usize, u32)> = samples.iter().map(|s| (s.index, s.weight)).collect();
                entries.sort_unstable();
                tree.leaves.push(Leaf {
                    samples: entries,
                    value,
                });
                tree.nodes[slot] = Node::Leaf { leaf };
            }
        }
    }
    tree
}
