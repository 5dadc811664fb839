use serde::{Deserialize, Serialize};

use crate::hexfloat::Hex;

/// One node of a regression tree. Children are indices into [`Tree::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
        /// Loss reduction of this split.
        gain: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Internal { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// Regression tree; node 0 is the root. Navigation: `x[feature] < threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value, cover }] }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Internal { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Features used by any split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Internal { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub(crate) fn to_repr(&self) -> NodeRepr {
        fn go(t: &Tree, i: usize) -> NodeRepr {
            match t.nodes[i] {
                Node::Leaf { value, cover } => NodeRepr::Leaf { leaf: Hex(value), cover: Hex(cover) },
                Node::Internal { feature, threshold, left, right, cover, gain } => NodeRepr::Split {
                    feature,
                    threshold: Hex(threshold),
                    cover: Hex(cover),
                    gain: Hex(gain),
                    left: Box::new(go(t, left)),
                    right: Box::new(go(t, right)),
                },
            }
        }
        go(self, 0)
    }

    pub(crate) fn from_repr(repr: &NodeRepr) -> Self {
        fn go(r: &NodeRepr, nodes: &mut Vec<Node>) -> usize {
            let id = nodes.len();
            match r {
                NodeRepr::Leaf { leaf, cover } => nodes.push(Node::Leaf { value: leaf.0, cover: cover.0 }),
                NodeRepr::Split { feature, threshold, cover, gain, left, right } => {
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    let l = go(left, nodes);
                    let rr = go(right, nodes);
                    nodes[id] = Node::Internal {
                        feature: *feature,
                        threshold: threshold.0,
                        left: l,
                        right: rr,
                        cover: cover.0,
                        gain: gain.0,
                    };
                }
            }
            id
        }
        let mut nodes = Vec::new();
        go(repr, &mut nodes);
        Self { nodes }
    }
}

/// Nested JSON form of a tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum NodeRepr {
    Split {
        feature: usize,
        threshold: Hex,
        cover: Hex,
        gain: Hex,
        left: Box<NodeRepr>,
        right: Box<NodeRepr>,
    },
    Leaf {
        leaf: Hex,
        cover: Hex,
    },
}
