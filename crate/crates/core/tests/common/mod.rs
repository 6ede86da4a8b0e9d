//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use qoe_transfer::dataset::{
    sessions_to_dataset, Dataset, FeatureKind, FeatureSchema, FeatureVector,
};
use qoe_transfer::learners::{Algorithm, DecisionTree, GbtModel, Node, RegressorSpec};
use qoe_transfer::synth::{generate_sessions, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthetic sessions converted to the 9-feature table.
pub fn synthetic_table(n: usize, seed: u64) -> Dataset {
    let sessions = generate_sessions(&SynthParams::with_ratio(n, 353, 97, seed)).unwrap();
    sessions_to_dataset(&sessions, format!("synthetic seed {seed}")).unwrap()
}

/// `d` generic features `f0..` uniform in [0, 10), labels from `label`.
pub fn random_table(n: usize, d: usize, seed: u64, label: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut r = rng(seed);
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let schema = FeatureSchema::from_pairs(names.iter().map(|n| (n.as_str(), FeatureKind::Generic))).unwrap();
    let rows = (0..n)
        .map(|_| {
            let values: Vec<f64> = (0..d).map(|_| r.random_range(0.0..10.0)).collect();
            let label = label(&values).clamp(0.0, 100.0);
            FeatureVector { values, label }
        })
        .collect();
    Dataset::new(schema, rows, "random").unwrap()
}

/// Hyperparameters small enough for property tests.
pub fn quick_spec(algorithm: Algorithm, seed: u64) -> RegressorSpec {
    let overrides: Vec<(&str, f64)> = match algorithm {
        Algorithm::Gbt => vec![("n_rounds", 150.0), ("eta", 0.1)],
        Algorithm::Mlp => vec![("epochs", 30.0)],
        Algorithm::ModelTree => vec![],
    };
    RegressorSpec::new(algorithm, overrides, seed).unwrap()
}

/// Brute-force two-sample KS distance: ECDFs compared at every pooled point.
pub fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|v| **v <= t).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
        .fold(0.0, f64::max)
}

/// Conditional expectation of a tree given the features in `known`
/// (bit mask); unknown features average their children by cover.
pub fn tree_conditional(tree: &DecisionTree, x: &[f64], known: u32, node: usize) -> f64 {
    match &tree.nodes()[node] {
        Node::Leaf { value, .. } => *value,
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
            ..
        } => {
            if known & (1 << feature) != 0 {
                let next = if x[*feature] < *threshold { *left } else { *right };
                tree_conditional(tree, x, known, next)
            } else {
                let cl = tree.nodes()[*left].cover();
                let cr = tree.nodes()[*right].cover();
                (cl * tree_conditional(tree, x, known, *left) + cr * tree_conditional(tree, x, known, *right)) / cover
            }
        }
    }
}

fn ensemble_value(model: &GbtModel, x: &[f64], known: u32) -> f64 {
    model.base_prediction
        + model
            .trees
            .iter()
            .map(|t| model.learning_rate * tree_conditional(t, x, known, 0))
            .sum::<f64>()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by enumerating every coalition of the `d` features.
pub fn exhaustive_shapley(model: &GbtModel, x: &[f64], d: usize) -> Vec<f64> {
    let total = factorial(d);
    (0..d)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0u32..(1 << d) {
                if s & (1 << i) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = factorial(size) * factorial(d - size - 1) / total;
                phi += w * (ensemble_value(model, x, s | (1 << i)) - ensemble_value(model, x, s));
            }
            phi
        })
        .collect()
}

pub fn empty_coalition_value(model: &GbtModel, d: usize) -> f64 {
    ensemble_value(model, &vec![0.0; d], 0)
}

/// A random tree over `d` features in preorder, with consistent covers
/// (internal cover = sum of children). Features may repeat along a path.
pub fn random_tree(r: &mut ChaCha8Rng, d: usize, depth: usize) -> DecisionTree {
    fn grow(r: &mut ChaCha8Rng, d: usize, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        if depth == 0 || r.random::<f64>() < 0.25 {
            nodes.push(Node::Leaf {
                value: r.random_range(-5.0..5.0),
                cover: r.random_range(1..20) as f64,
            });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        let feature = r.random_range(0..d);
        let threshold = r.random_range(0.0..10.0);
        let left = grow(r, d, depth - 1, nodes);
        let right = grow(r, d, depth - 1, nodes);
        let cover = nodes[left].cover() + nodes[right].cover();
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            gain: 1.0,
            cover,
        };
        id
    }
    let mut nodes = Vec::new();
    grow(r, d, depth, &mut nodes);
    DecisionTree::from_nodes(nodes).expect("preorder tree")
}

pub fn random_ensemble(seed: u64, d: usize, n_trees: usize) -> GbtModel {
    let mut r = rng(seed);
    GbtModel {
        base_prediction: r.random_range(20.0..80.0),
        learning_rate: r.random_range(0.05..1.0),
        max_depth: 3,
        trees: (0..n_trees).map(|_| random_tree(&mut r, d, 3)).collect(),
    }
}

/// Best first split by enumerating every feature and midpoint threshold,
/// scoring `G²/(H+λ)` with unit hessians. Returns the feature, the pair of
/// adjacent distinct values the threshold must separate, and the gain.
pub fn brute_force_best_split(
    x: &[Vec<f64>],
    grad: &[f64],
    lambda: f64,
    min_child_weight: f64,
) -> Option<(usize, (f64, f64), f64)> {
    let d = x[0].len();
    let g: f64 = grad.iter().sum();
    let h = grad.len() as f64;
    let parent = g * g / (h + lambda);
    let mut best: Option<(usize, (f64, f64), f64)> = None;
    for j in 0..d {
        let mut values: Vec<f64> = x.iter().map(|r| r[j]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let (mut gl, mut hl) = (0.0, 0.0);
            for (r, gr) in x.iter().zip(grad) {
                if r[j] <= w[0] {
                    gl += gr;
                    hl += 1.0;
                }
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < min_child_weight || hr < min_child_weight {
                continue;
            }
            let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
            if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                best = Some((j, (w[0], w[1]), gain));
            }
        }
    }
    best
}
