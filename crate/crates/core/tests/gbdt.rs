use dash_core::data::{split_four_way, DgpKind, DgpSpec, Task, DEFAULT_FRACTIONS};
use dash_core::gbdt::{gain_importance, predict, score, train, BoostedModel, Hyperparams, Node, Trainer, Tree};
use dash_core::metrics::rmse;
use dash_core::Matrix;

fn plain(depth: usize, lr: f64, rounds: usize) -> Hyperparams {
    Hyperparams {
        max_depth: depth,
        learning_rate: lr,
        colsample_bytree: 1.0,
        subsample: 1.0,
        reg_alpha: 0.0,
        reg_lambda: 0.0,
        min_child_weight: 1.0,
        n_estimators_max: rounds,
        early_stopping_rounds: 0,
    }
}

fn linear_data(rho: f64, n: usize, seed: u64, betas: Option<Vec<f64>>) -> (Matrix, Vec<f64>, Matrix, Vec<f64>, Matrix, Vec<f64>) {
    let mut spec = DgpSpec::full_default(DgpKind::Linear, rho, n, seed).unwrap();
    if let Some(b) = betas {
        spec.betas = b;
    }
    let ds = spec.generate().unwrap();
    let sp = split_four_way(n, DEFAULT_FRACTIONS, seed + 1).unwrap();
    let (xt, yt) = ds.subset(&sp.train);
    let (xv, yv) = ds.subset(&sp.val);
    let (xs, ys) = ds.subset(&sp.test);
    (xt, yt, xv, yv, xs, ys)
}

fn check_covers(t: &Tree) {
    for n in &t.nodes {
        if let Node::Internal { left, right, cover, .. } = *n {
            assert_eq!(cover, t.nodes[left].cover() + t.nodes[right].cover());
        }
    }
}

#[test]
fn pure_noise_stops_early() {
    let (xt, yt, xv, yv, _, _) = linear_data(0.5, 3000, 1, Some(vec![0.0; 10]));
    let hp = Hyperparams { learning_rate: 0.1, ..Hyperparams::default() };
    let m = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 3).unwrap();
    assert!(m.n_trees() < 60, "{} trees", m.n_trees());
    let val_rmse = -m.val_score;
    assert!((val_rmse - 0.5).abs() < 0.05, "{val_rmse}");
}

#[test]
fn linear_dgp_mid_grid_rmse() {
    let (xt, yt, xv, yv, xs, ys) = linear_data(0.9, 5000, 7, None);
    let hp = Hyperparams {
        max_depth: 5,
        learning_rate: 0.05,
        colsample_bytree: 0.25,
        subsample: 0.8,
        reg_alpha: 0.1,
        reg_lambda: 1.0,
        min_child_weight: 5.0,
        ..Hyperparams::default()
    };
    let m = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 11).unwrap();
    let r = rmse(&predict(&m, &xs).unwrap(), &ys).unwrap();
    assert!((0.55..=0.80).contains(&r), "test rmse {r}");
}

#[test]
fn stumps_fit_step_function() {
    let n = 200;
    let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap();
    let y: Vec<f64> = (0..n).map(|i| if i < 70 { -1.0 } else if i < 150 { 2.0 } else { 0.5 }).collect();
    let m = train(&x, &y, &x, &y, Task::Regression, &plain(1, 0.3, 500), 0).unwrap();
    let r = rmse(&predict(&m, &x).unwrap(), &y).unwrap();
    assert!(r < 1e-2, "{r}");
}

#[test]
fn prediction_contract() {
    let stump = Tree {
        nodes: vec![
            Node::Internal { feature: 0, threshold: 0.0, left: 1, right: 2, cover: 2.0, gain: 1.0 },
            Node::Leaf { value: -1.0, cover: 1.0 },
            Node::Leaf { value: 1.0, cover: 1.0 },
        ],
    };
    let mut m = BoostedModel {
        trees: vec![],
        learning_rate: 0.5,
        base_score: 0.0,
        task: Task::Regression,
        n_features: 4,
        hyperparams: Hyperparams::default(),
        seed: 0,
        best_iteration: 0,
        val_score: 0.0,
    };
    let x = Matrix::from_rows(&[vec![-3.0, 0.0, 0.0, 0.0]]).unwrap();
    assert_eq!(predict(&m, &x).unwrap(), vec![0.0]);
    m.trees.push(stump);
    assert_eq!(predict(&m, &x).unwrap(), vec![-0.5]);
    assert!(predict(&m, &Matrix::zeros(1, 3)).is_err());
}

#[test]
fn prediction_equals_sum_of_tree_traversals() {
    let (xt, yt, xv, yv, xs, _) = linear_data(0.7, 1500, 3, None);
    let m = train(&xt, &yt, &xv, &yv, Task::Regression, &Hyperparams::default(), 5).unwrap();
    let pred = predict(&m, &xs).unwrap();
    for (i, p) in pred.iter().enumerate() {
        let row = xs.row(i);
        // independent traversal: walk each tree by hand
        let mut total = 0.0;
        for t in &m.trees {
            let mut k = 0;
            let leaf = loop {
                match t.nodes[k] {
                    Node::Leaf { value, .. } => break value,
                    Node::Internal { feature, threshold, left, right, .. } => {
                        k = if row[feature] < threshold { left } else { right }
                    }
                }
            };
            total += leaf;
        }
        assert!((p - (m.base_score + m.learning_rate * total)).abs() < 1e-12);
    }
}

#[test]
fn gain_importance_structure() {
    // stump on feature 3
    let n = 40;
    let mut x = Matrix::zeros(n, 5);
    let mut y = vec![0.0; n];
    for i in 0..n {
        x.set(i, 3, i as f64);
        y[i] = if i < 20 { 0.0 } else { 1.0 };
    }
    let m = train(&x, &y, &x, &y, Task::Regression, &plain(1, 1.0, 1), 0).unwrap();
    assert_eq!(gain_importance(&m), vec![0.0, 0.0, 0.0, 1.0, 0.0]);

    let (xt, yt, xv, yv, _, _) = linear_data(0.9, 1500, 9, None);
    let hp = Hyperparams { colsample_bytree: 0.1, ..Hyperparams::default() };
    let trainer = Trainer::new(&xt, &yt, Task::Regression).unwrap();
    let m = trainer.fit(&xv, &yv, &hp, 4).unwrap();
    let used: std::collections::BTreeSet<usize> = m.trees.iter().flat_map(|t| t.split_features().collect::<Vec<_>>()).collect();
    let imp = gain_importance(&m);
    for (j, v) in imp.iter().enumerate() {
        if *v > 0.0 {
            assert!(used.contains(&j));
        }
    }
    for t in &m.trees {
        let distinct: std::collections::BTreeSet<usize> = t.split_features().collect();
        assert!(distinct.len() <= 5); // ceil(0.1 * 50)
    }
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

/// Best stump by direct SSE reduction on the residuals.
fn oracle_stump(x: &Matrix, r: &[f64]) -> (usize, f64, f64) {
    let n = r.len();
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
    };
    let total = sse(r);
    let mut best = (0, 0.0, 0.0);
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = x.column(f);
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = 0.5 * (w[0] + w[1]);
            let l: Vec<f64> = (0..n).filter(|&i| x.get(i, f) < thr).map(|i| r[i]).collect();
            let rr: Vec<f64> = (0..n).filter(|&i| x.get(i, f) >= thr).map(|i| r[i]).collect();
            let gain = 0.5 * (total - sse(&l) - sse(&rr));
            if gain > best.2 {
                best = (f, thr, gain);
            }
        }
    }
    best
}

#[test]
fn gain_importance_matches_hand_computation() {
    let x = Matrix::from_rows(&[
        vec![1.0, 3.0],
        vec![2.0, 1.0],
        vec![3.0, 2.0],
        vec![4.0, 6.0],
        vec![5.0, 5.0],
        vec![6.0, 4.0],
    ])
    .unwrap();
    let y = vec![1.0, 2.0, 3.0, 10.0, 11.0, 30.0];
    let m = train(&x, &y, &x, &y, Task::Regression, &plain(1, 1.0, 2), 0).unwrap();

    let mean = y.iter().sum::<f64>() / 6.0;
    let mut pred = vec![mean; 6];
    let mut expected = [0.0; 2];
    for _ in 0..2 {
        let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let (f, thr, gain) = oracle_stump(&x, &r);
        expected[f] += gain;
        let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..6 {
            if x.get(i, f) < thr {
                sl += r[i];
                nl += 1.0;
            } else {
                sr += r[i];
                nr += 1.0;
            }
        }
        for i in 0..6 {
            pred[i] += if x.get(i, f) < thr { sl / nl } else { sr / nr };
        }
    }
    let tot = expected[0] + expected[1];
    let imp = gain_importance(&m);
    assert!((imp[0] - expected[0] / tot).abs() < 1e-12, "{imp:?} vs {expected:?}");
    assert!((imp[1] - expected[1] / tot).abs() < 1e-12);
}

#[test]
fn score_examples() {
    let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let y = vec![0.0, 0.0, 1.0, 1.0];
    let m = train(&x, &y, &x, &y, Task::Regression, &plain(2, 1.0, 1), 0).unwrap();
    assert_eq!(score(&m, &x, &y).unwrap(), 0.0);

    let hp = Hyperparams { min_child_weight: 0.1, ..plain(1, 0.5, 5) };
    let c = train(&x, &y, &x, &y, Task::BinaryClassification, &hp, 0).unwrap();
    assert_eq!(score(&c, &x, &y).unwrap(), 1.0);
    assert!(score(&c, &x, &[1.0; 4]).is_err());
    let p = predict(&c, &x).unwrap();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(p[0] < 0.5 && p[3] > 0.5);
}

#[test]
fn training_is_deterministic_and_serializes_exactly() {
    let (xt, yt, xv, yv, _, _) = linear_data(0.9, 1200, 5, None);
    let hp = Hyperparams::default();
    let a = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 77).unwrap();
    let b = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 77).unwrap();
    let ja = a.to_json().unwrap();
    assert_eq!(ja, b.to_json().unwrap());
    let back = BoostedModel::from_json(&ja).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_json().unwrap(), ja);
    let c = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 78).unwrap();
    assert_ne!(c.to_json().unwrap(), ja);
}

#[test]
fn covers_are_consistent() {
    let (xt, yt, xv, yv, _, _) = linear_data(0.9, 1200, 6, None);
    let m = train(&xt, &yt, &xv, &yv, Task::Regression, &Hyperparams { max_depth: 8, ..Hyperparams::default() }, 1).unwrap();
    m.trees.iter().for_each(check_covers);
    let yc: Vec<f64> = yt.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
    let yvc: Vec<f64> = yv.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
    let c = train(&xt, &yc, &xv, &yvc, Task::BinaryClassification, &Hyperparams::default(), 1).unwrap();
    c.trees.iter().for_each(check_covers);
    assert!(c.val_score > 0.8);
}

#[test]
fn training_loss_never_increases() {
    let (xt, yt, xv, yv, _, _) = linear_data(0.9, 1500, 8, None);
    for (lr, depth) in [(0.3, 3), (0.1, 6), (0.01, 4)] {
        let hp = Hyperparams { subsample: 1.0, reg_lambda: 1.0, reg_alpha: 0.1, colsample_bytree: 0.3, ..plain(depth, lr, 80) };
        let m = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 2).unwrap();
        let mut pred = vec![m.base_score; yt.len()];
        let mut prev = f64::INFINITY;
        for t in &m.trees {
            for (i, p) in pred.iter_mut().enumerate() {
                *p += lr * t.eval(xt.row(i));
            }
            let loss = rmse(&pred, &yt).unwrap().powi(2);
            assert!(loss <= prev + 1e-9, "loss rose from {prev} to {loss}");
            prev = loss;
        }
    }
}

#[test]
fn early_stopping_keeps_best_round() {
    let (xt, yt, xv, yv, _, _) = linear_data(0.9, 1500, 10, None);
    let hp = Hyperparams { learning_rate: 0.3, max_depth: 8, early_stopping_rounds: 10, ..Hyperparams::default() };
    let m = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 3).unwrap();
    assert_eq!(m.n_trees(), m.best_iteration);
    // replay every prefix up to the stopping round
    let full = train(&xt, &yt, &xv, &yv, Task::Regression, &Hyperparams { early_stopping_rounds: 0, n_estimators_max: m.best_iteration + 10, ..hp.clone() }, 3).unwrap();
    let mut f = vec![full.base_score; yv.len()];
    let mut scores = vec![];
    for t in &full.trees {
        for (i, v) in f.iter_mut().enumerate() {
            *v += full.learning_rate * t.eval(xv.row(i));
        }
        scores.push(-rmse(&f, &yv).unwrap());
    }
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(scores[m.best_iteration - 1], best);
    assert_eq!(m.val_score, best);
}

#[test]
fn huge_lambda_shrinks_leaves() {
    let (xt, yt, xv, yv, _, _) = linear_data(0.5, 1000, 12, None);
    let hp = Hyperparams { reg_lambda: 1e12, early_stopping_rounds: 0, n_estimators_max: 5, ..Hyperparams::default() };
    let m = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 1).unwrap();
    for t in &m.trees {
        for n in &t.nodes {
            if let Node::Leaf { value, .. } = n {
                assert!(value.abs() < 1e-6);
            }
        }
    }
}

#[test]
fn constant_features_give_single_leaf() {
    let x = Matrix::from_vec(10, 2, vec![1.0; 20]).unwrap();
    let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let m = train(&x, &y, &x, &y, Task::Regression, &plain(4, 0.5, 3), 0).unwrap();
    assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
}

#[test]
fn population_training_time() {
    use dash_core::gbdt::sample_hyperparams;
    let (xt, yt, xv, yv, _, _) = linear_data(0.9, 2000, 13, Some(vec![2.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1, 0.0]));
    let trainer = Trainer::new(&xt, &yt, Task::Regression).unwrap();
    let mut r = dash_core::rng::stream(1);
    let t0 = std::time::Instant::now();
    let mut trees = 0;
    for i in 0..20 {
        let hp = sample_hyperparams(&mut r);
        let m = trainer.fit(&xv, &yv, &hp, i).unwrap();
        trees += m.n_trees();
    }
    eprintln!("20 models, {trees} trees, {:?}", t0.elapsed());
}
