use dash_core::data::{split_four_way, DgpKind, DgpSpec, Task, DEFAULT_FRACTIONS};
use dash_core::gbdt::{train, BoostedModel, Hyperparams, Node, Tree};
use dash_core::rng::{stream, Rng};
use dash_core::treeshap::{brute_force_shapley, consensus_average, global_importance, interventional_shap, ShapMatrix};
use dash_core::Matrix;
use proptest::prelude::*;
use rand::Rng as _;

const GRID: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

fn grow(nodes: &mut Vec<Node>, rng: &mut Rng, p: usize, depth: usize, max_depth: usize) -> (usize, f64) {
    let at = nodes.len();
    if depth == max_depth || rng.random_bool(0.25) {
        nodes.push(Node::Leaf { value: rng.random_range(-2.0..2.0), cover: 1.0 });
        return (at, 1.0);
    }
    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
    let feature = rng.random_range(0..p);
    let threshold = GRID[rng.random_range(0..GRID.len())];
    let (left, lc) = grow(nodes, rng, p, depth + 1, max_depth);
    let (right, rc) = grow(nodes, rng, p, depth + 1, max_depth);
    let cover = lc + rc;
    nodes[at] = Node::Internal { feature, threshold, left, right, cover, gain: 1.0 };
    (at, cover)
}

/// Random ensemble with thresholds on a coarse grid so data ties are common.
fn random_model(rng: &mut Rng, p: usize, max_depth: usize, n_trees: usize) -> BoostedModel {
    let trees = (0..n_trees)
        .map(|_| {
            let mut nodes = Vec::new();
            grow(&mut nodes, rng, p, 0, max_depth);
            Tree { nodes }
        })
        .collect();
    BoostedModel {
        trees,
        learning_rate: rng.random_range(0.05..1.0),
        base_score: rng.random_range(-1.0..1.0),
        task: Task::Regression,
        n_features: p,
        hyperparams: Hyperparams::default(),
        seed: 0,
        best_iteration: n_trees,
        val_score: 0.0,
    }
}

fn random_rows(rng: &mut Rng, n: usize, p: usize) -> Matrix {
    let data = (0..n * p)
        .map(|_| if rng.random_bool(0.5) { GRID[rng.random_range(0..GRID.len())] } else { rng.random_range(-1.5..1.5) })
        .collect();
    Matrix::from_vec(n, p, data).unwrap()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_brute_force(seed in any::<u64>(), p in 1usize..=8, depth in 1usize..=4, n_trees in 1usize..=12, nb in 1usize..=12) {
        let mut rng = stream(seed);
        let model = random_model(&mut rng, p, depth, n_trees);
        let x = random_rows(&mut rng, 4, p);
        let bg = random_rows(&mut rng, nb, p);
        let shap = interventional_shap(&model, &x, &bg).unwrap();
        for i in 0..x.rows() {
            let oracle = brute_force_shapley(&model, x.row(i), &bg).unwrap();
            for (a, b) in shap.values.row(i).iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-9, "row {i}: {a} vs {b}");
            }
        }
        prop_assert!(shap.local_accuracy_error(&model, &x).unwrap() <= 1e-8);
    }

    #[test]
    fn unused_feature_gets_zero(seed in any::<u64>(), p in 2usize..=8) {
        let mut rng = stream(seed);
        let mut model = random_model(&mut rng, p - 1, 4, 8);
        model.n_features = p;
        let x = random_rows(&mut rng, 6, p);
        let bg = random_rows(&mut rng, 10, p);
        let shap = interventional_shap(&model, &x, &bg).unwrap();
        for i in 0..x.rows() {
            prop_assert_eq!(shap.values.get(i, p - 1), 0.0);
        }
    }

    #[test]
    fn additive_across_trees(seed in any::<u64>(), p in 1usize..=6) {
        let mut rng = stream(seed);
        let whole = random_model(&mut rng, p, 3, 10);
        let mut a = whole.clone();
        let mut b = whole.clone();
        a.trees.truncate(4);
        b.trees.drain(..4);
        b.base_score = 0.0;
        let x = random_rows(&mut rng, 5, p);
        let bg = random_rows(&mut rng, 8, p);
        let sw = interventional_shap(&whole, &x, &bg).unwrap();
        let sa = interventional_shap(&a, &x, &bg).unwrap();
        let sb = interventional_shap(&b, &x, &bg).unwrap();
        let mut sum = sa.values.clone();
        for (s, v) in sum.as_mut_slice().iter_mut().zip(sb.values.as_slice()) {
            *s += v;
        }
        prop_assert!(max_abs_diff(&sum, &sw.values) <= 1e-10);
    }

    #[test]
    fn background_order_irrelevant(seed in any::<u64>(), p in 1usize..=6) {
        let mut rng = stream(seed);
        let model = random_model(&mut rng, p, 4, 6);
        let x = random_rows(&mut rng, 5, p);
        let bg = random_rows(&mut rng, 9, p);
        let order: Vec<usize> = (0..9).rev().collect();
        let s1 = interventional_shap(&model, &x, &bg).unwrap();
        let s2 = interventional_shap(&model, &x, &bg.select_rows(&order)).unwrap();
        prop_assert!(max_abs_diff(&s1.values, &s2.values) <= 1e-12);
        prop_assert!((s1.base_value - s2.base_value).abs() <= 1e-12);
    }
}

#[test]
fn backgrounds_spanning_several_blocks_match_brute_force() {
    let mut rng = stream(17);
    let model = random_model(&mut rng, 6, 4, 10);
    let x = random_rows(&mut rng, 3, 6);
    for nb in [63, 64, 65, 130] {
        let bg = random_rows(&mut rng, nb, 6);
        let shap = interventional_shap(&model, &x, &bg).unwrap();
        for i in 0..x.rows() {
            let oracle = brute_force_shapley(&model, x.row(i), &bg).unwrap();
            for (a, b) in shap.values.row(i).iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-9, "nb {nb} row {i}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn trained_model_is_locally_accurate() {
    let spec = DgpSpec::full_default(DgpKind::Nonlinear, 0.9, 800, 4).unwrap();
    let ds = spec.generate().unwrap();
    let sp = split_four_way(800, DEFAULT_FRACTIONS, 5).unwrap();
    let (xt, yt) = ds.subset(&sp.train);
    let (xv, yv) = ds.subset(&sp.val);
    let (xe, _) = ds.subset(&sp.explain);
    let hp = Hyperparams { max_depth: 8, n_estimators_max: 80, ..Hyperparams::default() };
    let model = train(&xt, &yt, &xv, &yv, Task::Regression, &hp, 11).unwrap();
    let bg = xt.select_rows(&(0..40).collect::<Vec<_>>());
    let shap = interventional_shap(&model, &xe, &bg).unwrap();
    assert!(shap.local_accuracy_error(&model, &xe).unwrap() <= 1e-8);
    // base value is the mean background prediction
    let mean_bg = model.predict_raw(&bg).unwrap().iter().sum::<f64>() / 40.0;
    assert!((shap.base_value - mean_bg).abs() <= 1e-12);
}

#[test]
fn single_split_by_hand() {
    // f(x) = 1 if x0 >= 0 else -1, background {-1, 1}: phi_0(x=1) = 1 - 0 = 1
    let tree = Tree {
        nodes: vec![
            Node::Internal { feature: 0, threshold: 0.0, left: 1, right: 2, cover: 2.0, gain: 1.0 },
            Node::Leaf { value: -1.0, cover: 1.0 },
            Node::Leaf { value: 1.0, cover: 1.0 },
        ],
    };
    let model = BoostedModel {
        trees: vec![tree],
        learning_rate: 1.0,
        base_score: 0.0,
        task: Task::Regression,
        n_features: 2,
        hyperparams: Hyperparams::default(),
        seed: 0,
        best_iteration: 1,
        val_score: 0.0,
    };
    let bg = Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![0.0, 5.0], vec![-3.0, 5.0]]).unwrap();
    let s = interventional_shap(&model, &x, &bg).unwrap();
    assert_eq!(s.base_value, 0.0);
    // x0 = 0 goes right (strict less-than)
    assert_eq!(s.values.row(0), &[1.0, 0.0]);
    assert_eq!(s.values.row(1), &[1.0, 0.0]);
    assert_eq!(s.values.row(2), &[-1.0, 0.0]);
}

#[test]
fn consensus_of_copies_is_identity() {
    let mut rng = stream(3);
    let model = random_model(&mut rng, 5, 3, 5);
    let x = random_rows(&mut rng, 7, 5);
    let bg = random_rows(&mut rng, 6, 5);
    let s = interventional_shap(&model, &x, &bg).unwrap();
    let copies: Vec<ShapMatrix> = (0..3).map(|i| s.clone().with_ids(format!("m{i}"), vec![])).collect();
    let c = consensus_average(&copies).unwrap();
    assert_eq!(c.values, s.values);
    let gi = global_importance(&s);
    for j in 0..5 {
        let want = (0..7).map(|i| s.values.get(i, j).abs()).sum::<f64>() / 7.0;
        assert!((gi[j] - want).abs() <= 1e-15);
    }
}

#[test]
fn consensus_is_order_independent() {
    let mut rng = stream(8);
    let x = random_rows(&mut rng, 6, 4);
    let bg = random_rows(&mut rng, 5, 4);
    let mats: Vec<ShapMatrix> = (0..5)
        .map(|i| {
            let m = random_model(&mut rng, 4, 3, 4);
            interventional_shap(&m, &x, &bg).unwrap().with_ids(format!("model-{i:05}"), vec![])
        })
        .collect();
    let a = consensus_average(&mats).unwrap();
    let mut rev = mats.clone();
    rev.reverse();
    let b = consensus_average(&rev).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.base_value.to_bits(), b.base_value.to_bits());
}
