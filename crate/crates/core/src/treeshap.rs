//! Exact interventional Shapley values for boosted trees.
//!
//! For an explain row `x` and a background row `r`, the game is
//! `v(S) = f(x_S, r_{not S})`. Walking a tree, a split on a feature not yet
//! seen on the path either sends `x` and `r` the same way (the feature is
//! irrelevant there) or separates them; then the feature is marked *hot*
//! (follow `x`) on one branch and *cold* (follow `r`) on the other. A leaf
//! with value `v` reached with hot set `H` and cold set `C` contributes
//! `v` exactly to coalitions with `H ⊆ S` and `S ∩ C = ∅`, whose Shapley
//! values are
//!
//! ```text
//! i in H:  +v (|H|-1)! |C|! / (|H|+|C|)!
//! i in C:  -v |H|! (|C|-1)! / (|H|+|C|)!
//! ```
//!
//! Repeated splits on an already-marked feature follow the marked side.
//! Attributions are in raw-score space (log-odds for classification).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::gbdt::{BoostedModel, Node, Tree};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    /// `N' x P` attributions.
    pub values: Matrix,
    /// Mean raw prediction over the background.
    pub base_value: f64,
    pub model_id: String,
    pub background_ids: Vec<usize>,
}

impl ShapMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn with_ids(mut self, model_id: impl Into<String>, background_ids: Vec<usize>) -> Self {
        self.model_id = model_id.into();
        self.background_ids = background_ids;
        self
    }

    /// Largest `|base + sum_j phi_ij - raw(x_i)|` over rows.
    pub fn local_accuracy_error(&self, model: &BoostedModel, x: &Matrix) -> Result<f64> {
        if x.rows() != self.rows() {
            return Err(mismatch("explain rows differ from attribution rows"));
        }
        let raw = model.predict_raw(x)?;
        Ok((0..self.rows())
            .map(|i| (self.base_value + self.values.row(i).iter().sum::<f64>() - raw[i]).abs())
            .fold(0.0, f64::max))
    }
}

/// Shapley weights indexed by `(hot, cold)` counts.
struct Weights {
    hot: Vec<Vec<f64>>,
    cold: Vec<Vec<f64>>,
}

impl Weights {
    fn new(max: usize) -> Self {
        let mut fact = vec![1.0f64; 2 * max + 2];
        for i in 1..fact.len() {
            fact[i] = fact[i - 1] * i as f64;
        }
        let mut hot = vec![vec![0.0; max + 1]; max + 1];
        let mut cold = vec![vec![0.0; max + 1]; max + 1];
        for h in 0..=max {
            for c in 0..=max {
                if h + c == 0 {
                    continue;
                }
                if h > 0 {
                    hot[h][c] = fact[h - 1] * fact[c] / fact[h + c];
                }
                if c > 0 {
                    cold[h][c] = fact[h] * fact[c - 1] / fact[h + c];
                }
            }
        }
        Self { hot, cold }
    }
}

const FREE: u8 = 0;
const HOT: u8 = 1;
const COLD: u8 = 2;

/// Background rows are processed in blocks of up to 64; within a block,
/// bit `b` of a mask stands for background row `b`, so rows that share a
/// path are walked once.
const BLOCK: usize = 64;

/// Per-node masks of the background rows in a block that go left.
fn left_masks(tree: &Tree, block: &[&[f64]]) -> Vec<u64> {
    tree.nodes
        .iter()
        .map(|n| match *n {
            Node::Internal { feature, threshold, .. } => block
                .iter()
                .enumerate()
                .filter(|(_, r)| r[feature] < threshold)
                .fold(0u64, |m, (b, _)| m | 1 << b),
            Node::Leaf { .. } => 0,
        })
        .collect()
}

struct Walk<'a> {
    x: &'a [f64],
    status: Vec<u8>,
    hot: Vec<usize>,
    cold: Vec<usize>,
    w: &'a Weights,
}

impl Walk<'_> {
    fn visit(&mut self, tree: &Tree, masks: &[u64], mut node: usize, mut rows: u64, phi: &mut [f64]) {
        loop {
            match tree.nodes[node] {
                Node::Leaf { value, .. } => {
                    let (h, c) = (self.hot.len(), self.cold.len());
                    if h + c == 0 {
                        return;
                    }
                    let v = value * rows.count_ones() as f64;
                    let wh = v * self.w.hot[h][c];
                    let wc = v * self.w.cold[h][c];
                    for &j in &self.hot {
                        phi[j] += wh;
                    }
                    for &j in &self.cold {
                        phi[j] -= wc;
                    }
                    return;
                }
                Node::Internal { feature, threshold, left, right, .. } => {
                    let xl = self.x[feature] < threshold;
                    let goes_left = masks[node];
                    match self.status[feature] {
                        HOT => node = if xl { left } else { right },
                        COLD => {
                            let l = rows & goes_left;
                            let r = rows & !goes_left;
                            if l != 0 && r != 0 {
                                self.visit(tree, masks, left, l, phi);
                            }
                            (node, rows) = if r == 0 { (left, l) } else { (right, r) };
                        }
                        _ => {
                            let (xn, rn, agree) =
                                if xl { (left, right, rows & goes_left) } else { (right, left, rows & !goes_left) };
                            let split = rows ^ agree;
                            if split != 0 {
                                self.status[feature] = HOT;
                                self.hot.push(feature);
                                self.visit(tree, masks, xn, split, phi);
                                self.hot.pop();
                                self.status[feature] = COLD;
                                self.cold.push(feature);
                                self.visit(tree, masks, rn, split, phi);
                                self.cold.pop();
                                self.status[feature] = FREE;
                            }
                            if agree == 0 {
                                return;
                            }
                            (node, rows) = (xn, agree);
                        }
                    }
                }
            }
        }
    }
}

fn check_inputs(model: &BoostedModel, x: &Matrix, background: &Matrix) -> Result<()> {
    if background.rows() == 0 {
        return Err(invalid("empty background"));
    }
    model.check_cols(x)?;
    model.check_cols(background)
}

/// Background rows in a canonical (lexicographic) order so results do not
/// depend on how the caller ordered them.
fn canonical_background(background: &Matrix) -> Vec<&[f64]> {
    let mut rows: Vec<&[f64]> = background.iter_rows().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

/// Interventional SHAP of every row of `x` against `background`.
pub fn interventional_shap(model: &BoostedModel, x: &Matrix, background: &Matrix) -> Result<ShapMatrix> {
    check_inputs(model, x, background)?;
    let p = model.n_features;
    let bg = canonical_background(background);
    let max_depth = model.trees.iter().map(Tree::depth).max().unwrap_or(0);
    let weights = Weights::new(max_depth.min(p).max(1));
    let scale = model.learning_rate / bg.len() as f64;

    let blocks: Vec<(u64, Vec<Vec<u64>>)> = bg
        .chunks(BLOCK)
        .map(|block| {
            let all = if block.len() == 64 { u64::MAX } else { (1u64 << block.len()) - 1 };
            (all, model.trees.iter().map(|t| left_masks(t, block)).collect())
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; p];
            let mut walk = Walk {
                x: x.row(i),
                status: vec![FREE; p],
                hot: Vec::with_capacity(max_depth),
                cold: Vec::with_capacity(max_depth),
                w: &weights,
            };
            for (all, masks) in &blocks {
                for (tree, m) in model.trees.iter().zip(masks) {
                    walk.visit(tree, m, 0, *all, &mut acc);
                }
            }
            acc.iter_mut().for_each(|v| *v *= scale);
            acc
        })
        .collect();

    let mut values = Matrix::zeros(x.rows(), p);
    for (i, r) in rows.into_iter().enumerate() {
        values.row_mut(i).copy_from_slice(&r);
    }
    let base_value = bg.iter().map(|r| model.predict_raw_row(r)).sum::<f64>() / bg.len() as f64;
    Ok(ShapMatrix { values, base_value, model_id: String::new(), background_ids: Vec::new() })
}

/// Exact Shapley values by enumerating all `2^P` coalitions.
pub fn brute_force_shapley(model: &BoostedModel, x: &[f64], background: &Matrix) -> Result<Vec<f64>> {
    let p = model.n_features;
    if p > 15 {
        return Err(invalid(format!("brute force enumeration limited to 15 features, got {p}")));
    }
    if x.len() != p {
        return Err(mismatch("row length differs from model features"));
    }
    if background.rows() == 0 {
        return Err(invalid("empty background"));
    }
    model.check_cols(background)?;
    let n_sets = 1usize << p;
    let mut v = vec![0.0; n_sets];
    let mut hybrid = vec![0.0; p];
    for (s, vs) in v.iter_mut().enumerate() {
        let mut total = 0.0;
        for r in background.iter_rows() {
            for j in 0..p {
                hybrid[j] = if s >> j & 1 == 1 { x[j] } else { r[j] };
            }
            total += model.predict_raw_row(&hybrid);
        }
        *vs = total / background.rows() as f64;
    }
    let mut fact = vec![1.0f64; p + 1];
    for i in 1..=p {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; p];
    for (j, pj) in phi.iter_mut().enumerate() {
        for s in 0..n_sets {
            if s >> j & 1 == 1 {
                continue;
            }
            let k = s.count_ones() as usize;
            let w = fact[k] * fact[p - k - 1] / fact[p];
            *pj += w * (v[s | 1 << j] - v[s]);
        }
    }
    Ok(phi)
}

/// Element-wise mean of attribution matrices and their base values, summed
/// in ascending `model_id` order.
pub fn consensus_average(matrices: &[ShapMatrix]) -> Result<ShapMatrix> {
    let first = matrices.first().ok_or_else(|| invalid("no matrices to average"))?;
    let (n, p) = (first.rows(), first.cols());
    if matrices.iter().any(|m| m.rows() != n || m.cols() != p) {
        return Err(mismatch("attribution matrices differ in shape"));
    }
    let ordered = sorted_by_id(matrices);
    let k = matrices.len() as f64;
    // mean as first + mean offset, so identical inputs average to themselves exactly
    let x0 = ordered[0];
    let mut values = Matrix::zeros(n, p);
    for m in &ordered {
        for ((acc, v), v0) in values.as_mut_slice().iter_mut().zip(m.values.as_slice()).zip(x0.values.as_slice()) {
            *acc += v - v0;
        }
    }
    for (acc, v0) in values.as_mut_slice().iter_mut().zip(x0.values.as_slice()) {
        *acc = v0 + *acc / k;
    }
    let base_value = x0.base_value + ordered.iter().map(|m| m.base_value - x0.base_value).sum::<f64>() / k;
    Ok(ShapMatrix {
        values,
        base_value,
        model_id: "consensus".into(),
        background_ids: first.background_ids.clone(),
    })
}

pub(crate) fn sorted_by_id(matrices: &[ShapMatrix]) -> Vec<&ShapMatrix> {
    let mut v: Vec<&ShapMatrix> = matrices.iter().collect();
    v.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    v
}

/// Mean absolute attribution per feature.
pub fn global_importance(matrix: &ShapMatrix) -> Vec<f64> {
    let n = matrix.rows().max(1) as f64;
    let mut out = vec![0.0; matrix.cols()];
    for row in matrix.values.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v.abs();
        }
    }
    out.iter_mut().for_each(|v| *v /= n);
    out
}
