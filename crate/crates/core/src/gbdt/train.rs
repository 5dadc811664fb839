use crate::data::Task;
use crate::error::{invalid, mismatch, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

use super::model::{score_raw, BoostedModel};
use super::tree::{Node, Tree};
use super::Hyperparams;

const NO_NODE: u32 = u32::MAX;

/// Training data with per-feature presorted row orders, reusable across
/// many models trained on the same rows.
pub struct Trainer<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    task: Task,
    /// Column-major copy of `x`.
    cols: Vec<Vec<f64>>,
    /// Row indices sorted ascending by each feature's value (stable).
    sorted: Vec<Vec<u32>>,
}

impl<'a> Trainer<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64], task: Task) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(mismatch("training features and target differ in length"));
        }
        if x.rows() == 0 {
            return Err(invalid("empty training set"));
        }
        let cols: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();
        Ok(Self { x, y, task, cols, sorted })
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn base_score(&self) -> f64 {
        let n = self.y.len() as f64;
        let mean = self.y.iter().sum::<f64>() / n;
        match self.task {
            Task::Regression => mean,
            Task::BinaryClassification => {
                let p = mean.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
        }
    }

    /// Boost until `n_estimators_max` or early stopping on `(val_x, val_y)`;
    /// the returned model is truncated to its best validation round.
    pub fn fit(&self, val_x: &Matrix, val_y: &[f64], hp: &Hyperparams, seed: u64) -> Result<BoostedModel> {
        hp.validate()?;
        if val_x.cols() != self.x.cols() || val_x.rows() != val_y.len() {
            return Err(mismatch("validation split does not match training columns"));
        }
        if val_x.rows() == 0 {
            return Err(invalid("empty validation split"));
        }
        let n = self.y.len();
        let p = self.x.cols();
        let base = self.base_score();
        let mut rng = rng::stream(seed);
        let mut f_train = vec![base; n];
        let mut f_val = vec![base; val_y.len()];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::new();
        let mut best_score = f64::NEG_INFINITY;
        let mut best_iter = 0usize;
        let mut last_score = score_raw(self.task, &f_val, val_y)?;
        let n_rows_sampled = ((hp.subsample * n as f64).ceil() as usize).clamp(1, n);
        let n_cols_sampled = ((hp.colsample_bytree * p as f64).ceil() as usize).clamp(1, p);
        let mut builder = TreeBuilder::new(n);

        for round in 0..hp.n_estimators_max {
            let loss = self.gradients(&f_train, &mut grad, &mut hess);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!("non-finite training loss at round {round}")));
            }
            let rows: Option<Vec<usize>> =
                (n_rows_sampled < n).then(|| rng::sample_indices(&mut rng, n, n_rows_sampled));
            let mut features = rng::sample_indices(&mut rng, p, n_cols_sampled);
            features.sort_unstable();

            let tree = builder.build(self, &grad, &hess, rows.as_deref(), &features, hp);
            for (i, f) in f_train.iter_mut().enumerate() {
                *f += hp.learning_rate * tree.eval(self.x.row(i));
            }
            for (i, f) in f_val.iter_mut().enumerate() {
                *f += hp.learning_rate * tree.eval(val_x.row(i));
            }
            trees.push(tree);

            let s = score_raw(self.task, &f_val, val_y)?;
            last_score = s;
            if !s.is_finite() {
                return Err(Error::TrainingDiverged(format!("non-finite validation score at round {round}")));
            }
            if s > best_score {
                best_score = s;
                best_iter = trees.len();
            } else if hp.early_stopping_rounds > 0 && trees.len() - best_iter >= hp.early_stopping_rounds {
                break;
            }
        }
        if trees.is_empty() || hp.early_stopping_rounds == 0 {
            best_iter = trees.len();
            best_score = last_score;
        } else {
            trees.truncate(best_iter);
        }
        Ok(BoostedModel {
            trees,
            learning_rate: hp.learning_rate,
            base_score: base,
            task: self.task,
            n_features: p,
            hyperparams: hp.clone(),
            seed,
            best_iteration: best_iter,
            val_score: best_score,
        })
    }

    /// Fill gradient/hessian of the loss at raw scores `f`; returns the mean loss.
    fn gradients(&self, f: &[f64], g: &mut [f64], h: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        match self.task {
            Task::Regression => {
                for i in 0..f.len() {
                    let r = f[i] - self.y[i];
                    g[i] = r;
                    h[i] = 1.0;
                    loss += 0.5 * r * r;
                }
            }
            Task::BinaryClassification => {
                for i in 0..f.len() {
                    let p = 1.0 / (1.0 + (-f[i]).exp());
                    g[i] = p - self.y[i];
                    h[i] = (p * (1.0 - p)).max(1e-16);
                    let z = f[i];
                    // log(1 + e^z) - y z, stable form
                    loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - self.y[i] * z;
                }
            }
        }
        loss / f.len() as f64
    }
}

/// Train one model from scratch.
pub fn train(
    train_x: &Matrix,
    train_y: &[f64],
    val_x: &Matrix,
    val_y: &[f64],
    task: Task,
    hp: &Hyperparams,
    seed: u64,
) -> Result<BoostedModel> {
    Trainer::new(train_x, train_y, task)?.fit(val_x, val_y, hp, seed)
}

#[inline]
fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

#[inline]
fn leaf_score(g: f64, h: f64, hp: &Hyperparams) -> f64 {
    let d = h + hp.reg_lambda;
    if d <= 0.0 {
        return 0.0;
    }
    let t = soft_threshold(g, hp.reg_alpha);
    t * t / d
}

#[inline]
fn leaf_weight(g: f64, h: f64, hp: &Hyperparams) -> f64 {
    let d = h + hp.reg_lambda;
    if d <= 0.0 {
        0.0
    } else {
        -soft_threshold(g, hp.reg_alpha) / d
    }
}

struct BuildNode {
    g: f64,
    h: f64,
    split: Option<(usize, f64, f64)>, // feature, threshold, gain
    children: Option<(usize, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    gl: f64,
    hl: f64,
}

#[derive(Clone, Copy)]
struct Scan {
    gl: f64,
    hl: f64,
    last: f64,
    seen: bool,
}

/// Level-wise exact greedy builder; scratch buffers are reused across trees.
struct TreeBuilder {
    pos: Vec<u32>,
}

impl TreeBuilder {
    fn new(n: usize) -> Self {
        Self { pos: vec![NO_NODE; n] }
    }

    fn build(
        &mut self,
        data: &Trainer<'_>,
        g: &[f64],
        h: &[f64],
        rows: Option<&[usize]>,
        features: &[usize],
        hp: &Hyperparams,
    ) -> Tree {
        let pos = &mut self.pos;
        pos.iter_mut().for_each(|p| *p = NO_NODE);
        let (mut g0, mut h0) = (0.0, 0.0);
        match rows {
            Some(rs) => {
                let mut sorted_rows = rs.to_vec();
                sorted_rows.sort_unstable();
                for &i in &sorted_rows {
                    pos[i] = 0;
                    g0 += g[i];
                    h0 += h[i];
                }
            }
            None => {
                for i in 0..pos.len() {
                    pos[i] = 0;
                    g0 += g[i];
                    h0 += h[i];
                }
            }
        }
        let mut nodes = vec![BuildNode { g: g0, h: h0, split: None, children: None }];
        let mut active: Vec<usize> = vec![0];
        // slot of an active node id, NO_NODE otherwise
        let mut slot_of: Vec<u32> = vec![0];

        for _depth in 0..hp.max_depth {
            if active.is_empty() {
                break;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
            let mut scans = vec![Scan { gl: 0.0, hl: 0.0, last: 0.0, seen: false }; active.len()];
            let parent_scores: Vec<f64> = active.iter().map(|&id| leaf_score(nodes[id].g, nodes[id].h, hp)).collect();
            for &f in features {
                scans.iter_mut().for_each(|s| *s = Scan { gl: 0.0, hl: 0.0, last: 0.0, seen: false });
                let col = &data.cols[f];
                for &i in &data.sorted[f] {
                    let i = i as usize;
                    let node = pos[i];
                    if node == NO_NODE {
                        continue;
                    }
                    let slot = slot_of[node as usize];
                    if slot == NO_NODE {
                        continue;
                    }
                    let slot = slot as usize;
                    let v = col[i];
                    let sc = &mut scans[slot];
                    if sc.seen && v > sc.last {
                        let parent = &nodes[active[slot]];
                        let (gl, hl) = (sc.gl, sc.hl);
                        let (gr, hr) = (parent.g - gl, parent.h - hl);
                        if hl >= hp.min_child_weight && hr >= hp.min_child_weight {
                            let parent_score = parent_scores[slot];
                            let gain = 0.5 * (leaf_score(gl, hl, hp) + leaf_score(gr, hr, hp) - parent_score);
                            let floor = 1e-12 * parent_score.max(1.0);
                            let better = match best[slot] {
                                None => gain > floor,
                                Some(b) => gain > b.gain,
                            };
                            if better {
                                let mut thr = 0.5 * (sc.last + v);
                                if thr <= sc.last || thr > v {
                                    thr = v;
                                }
                                best[slot] = Some(Candidate { gain, feature: f, threshold: thr, gl, hl });
                            }
                        }
                    }
                    sc.gl += g[i];
                    sc.hl += h[i];
                    sc.last = v;
                    sc.seen = true;
                }
            }

            let mut next_active = Vec::new();
            for (slot, &id) in active.iter().enumerate() {
                if let Some(c) = best[slot] {
                    let (pg, ph) = (nodes[id].g, nodes[id].h);
                    let l = nodes.len();
                    nodes.push(BuildNode { g: c.gl, h: c.hl, split: None, children: None });
                    nodes.push(BuildNode { g: pg - c.gl, h: ph - c.hl, split: None, children: None });
                    nodes[id].split = Some((c.feature, c.threshold, c.gain));
                    nodes[id].children = Some((l, l + 1));
                    next_active.push(l);
                    next_active.push(l + 1);
                }
            }
            // route rows of split nodes; rows of finished leaves are retired
            for i in 0..pos.len() {
                let node = pos[i];
                if node == NO_NODE {
                    continue;
                }
                let bn = &nodes[node as usize];
                match (bn.split, bn.children) {
                    (Some((f, thr, _)), Some((l, r))) => {
                        pos[i] = if data.cols[f][i] < thr { l as u32 } else { r as u32 };
                    }
                    _ => pos[i] = NO_NODE,
                }
            }
            slot_of = vec![NO_NODE; nodes.len()];
            for (s, &id) in next_active.iter().enumerate() {
                slot_of[id] = s as u32;
            }
            active = next_active;
        }

        finalize(&nodes, hp)
    }
}

/// Convert build nodes to a [`Tree`]; internal covers are the exact sum of
/// their children's covers.
fn finalize(nodes: &[BuildNode], hp: &Hyperparams) -> Tree {
    fn go(nodes: &[BuildNode], id: usize, hp: &Hyperparams, out: &mut Vec<Node>) -> (usize, f64) {
        let me = out.len();
        let bn = &nodes[id];
        match (bn.split, bn.children) {
            (Some((feature, threshold, gain)), Some((l, r))) => {
                out.push(Node::Leaf { value: 0.0, cover: 0.0 });
                let (li, lc) = go(nodes, l, hp, out);
                let (ri, rc) = go(nodes, r, hp, out);
                let cover = lc + rc;
                out[me] = Node::Internal { feature, threshold, left: li, right: ri, cover, gain };
                (me, cover)
            }
            _ => {
                out.push(Node::Leaf { value: leaf_weight(bn.g, bn.h, hp), cover: bn.h });
                (me, bn.h)
            }
        }
    }
    let mut out = Vec::with_capacity(nodes.len());
    go(nodes, 0, hp, &mut out);
    Tree { nodes: out }
}
