//! Second-order gradient boosted regression trees (squared error).
//!
//! Each tree is grown greedily to `max_depth` on the row subsample drawn for
//! that round. A split maximises
//! `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]` and a leaf holds
//! `−G/(H+λ)`; the ensemble output is `base + η Σ_t leaf_t(x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::RegressorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x[feature] < threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        /// Hessian mass of the training rows that reached the node.
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn single_leaf(value: f64, cover: f64) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Builds a tree from preorder nodes. Child indices must point forward.
    pub fn from_nodes(nodes: Vec<Node>) -> Option<Self> {
        if nodes.is_empty() {
            return None;
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                if *left <= i || *right <= i || *left >= nodes.len() || *right >= nodes.len() {
                    return None;
                }
            }
        }
        Some(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Columns eligible for splitting, ascending.
    pub features: Vec<usize>,
}

/// Grows one tree on `rows` of the column-major matrix `columns`.
///
/// `gradients` and `hessians` are indexed by row id (full training set).
/// Ties between equal gains keep the lowest feature index, then the lowest
/// threshold.
pub fn gbt_build_tree(
    columns: &[Vec<f64>],
    gradients: &[f64],
    hessians: &[f64],
    rows: &[usize],
    params: &TreeParams,
) -> DecisionTree {
    let sorted: Vec<Vec<usize>> = params
        .features
        .iter()
        .map(|&f| {
            let mut idx = rows.to_vec();
            idx.sort_by(|&a, &b| columns[f][a].total_cmp(&columns[f][b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    build_presorted(columns, gradients, hessians, sorted, params)
}

fn build_presorted(
    columns: &[Vec<f64>],
    gradients: &[f64],
    hessians: &[f64],
    sorted: Vec<Vec<usize>>,
    params: &TreeParams,
) -> DecisionTree {
    let mut builder = TreeBuilder {
        columns,
        gradients,
        hessians,
        params,
        nodes: Vec::new(),
    };
    if sorted.first().map_or(true, |s| s.is_empty()) {
        return DecisionTree::single_leaf(0.0, 0.0);
    }
    builder.grow(sorted, 0);
    DecisionTree { nodes: builder.nodes }
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    gradients: &'a [f64],
    hessians: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

struct Candidate {
    slot: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let g: f64 = rows.iter().map(|&r| self.gradients[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hessians[r]).sum();
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            value: -g / (h + self.params.lambda),
            cover: h,
        };
        self.nodes.push(leaf);

        if depth >= self.params.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(best) = self.best_split(&sorted, g, h) else {
            return id;
        };
        let feature = self.params.features[best.slot];
        let col = &self.columns[feature];
        let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .into_iter()
            .map(|list| list.into_iter().partition(|&r| col[r] < best.threshold))
            .unzip();
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold: best.threshold,
            left: l,
            right: r,
            gain: best.gain,
            cover: h,
        };
        id
    }

    fn best_split(&self, sorted: &[Vec<usize>], g: f64, h: f64) -> Option<Candidate> {
        let parent = self.score(g, h);
        let mut best: Option<Candidate> = None;
        for (slot, list) in sorted.iter().enumerate() {
            let col = &self.columns[self.params.features[slot]];
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..list.len() - 1 {
                let r = list[w];
                gl += self.gradients[r];
                hl += self.hessians[r];
                let (a, b) = (col[r], col[list[w + 1]]);
                if a >= b {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                if gain > 1e-12 && best.as_ref().map_or(true, |c| gain > c.gain) {
                    best = Some(Candidate {
                        slot,
                        threshold: midpoint(a, b),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// A threshold `t` with `a < t <= b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if a < m && m <= b {
        m
    } else {
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub trees: Vec<DecisionTree>,
}

impl GbtModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut acc = self.base_prediction;
        for t in &self.trees {
            acc += self.learning_rate * t.leaf_value(x);
        }
        acc
    }
}

/// Trains a boosted ensemble; also returns the training RMSE before the
/// first round and after every round.
pub(crate) fn fit_gbt(spec: &RegressorSpec, x: &[Vec<f64>], y: &[f64]) -> (GbtModel, Vec<f64>) {
    let n = y.len();
    let d = x.first().map_or(0, Vec::len);
    let eta = spec.get("eta");
    let max_depth = spec.get_usize("max_depth");
    let subsample = spec.get("subsample");
    let colsample = spec.get("colsample_bytree");
    let n_rounds = spec.get_usize("n_rounds");
    let columns: Vec<Vec<f64>> = (0..d).map(|j| x.iter().map(|r| r[j]).collect()).collect();

    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let hessians = vec![1.0; n];
    let mut gradients = vec![0.0; n];
    let global_order: Vec<Vec<usize>> = (0..d)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| columns[j][a].total_cmp(&columns[j][b]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let rmse = |p: &[f64]| (p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64).sqrt();
    let mut history = Vec::with_capacity(n_rounds + 1);
    history.push(rmse(&pred));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trees = Vec::with_capacity(n_rounds);
    let mut in_sample = vec![true; n];
    for _ in 0..n_rounds {
        for i in 0..n {
            gradients[i] = pred[i] - y[i];
        }
        if subsample < 1.0 {
            for flag in in_sample.iter_mut() {
                *flag = rng.random::<f64>() < subsample;
            }
            if !in_sample.iter().any(|f| *f) {
                in_sample.fill(true);
            }
        }
        let features: Vec<usize> = if colsample < 1.0 && d > 1 {
            let k = ((colsample * d as f64).round() as usize).clamp(1, d);
            let mut all: Vec<usize> = (0..d).collect();
            let (chosen, _) = rand::seq::SliceRandom::partial_shuffle(&mut all[..], &mut rng, k);
            let mut chosen = chosen.to_vec();
            chosen.sort_unstable();
            chosen
        } else {
            (0..d).collect()
        };
        let sorted: Vec<Vec<usize>> = features
            .iter()
            .map(|&j| global_order[j].iter().copied().filter(|&r| in_sample[r]).collect())
            .collect();
        let params = TreeParams {
            max_depth,
            lambda: spec.get("lambda"),
            min_child_weight: spec.get("min_child_weight"),
            features,
        };
        let tree = if d == 0 {
            let rows: Vec<usize> = (0..n).filter(|&r| in_sample[r]).collect();
            let g: f64 = rows.iter().map(|&r| gradients[r]).sum();
            DecisionTree::single_leaf(-g / (rows.len() as f64 + params.lambda), rows.len() as f64)
        } else {
            build_presorted(&columns, &gradients, &hessians, sorted, &params)
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += eta * tree.leaf_value(&x[i]);
        }
        history.push(rmse(&pred));
        trees.push(tree);
    }
    (
        GbtModel {
            base_prediction: base,
            learning_rate: eta,
            max_depth,
            trees,
        },
        history,
    )
}
