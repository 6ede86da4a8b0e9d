//! M5-style model tree: standard-deviation-reduction splits, a
//! least-squares linear model at every node, error-based pruning and
//! smoothing of leaf models toward their ancestors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gbt::midpoint;
use super::spec::RegressorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn constant(dim: usize, value: f64) -> Self {
        LinearModel {
            coefficients: vec![0.0; dim],
            intercept: value,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// Non-zero coefficients plus the intercept.
    pub fn n_params(&self) -> usize {
        1 + self.coefficients.iter().filter(|c| **c != 0.0).count()
    }

    fn blend(&self, weight: f64, other: &LinearModel, other_weight: f64) -> LinearModel {
        let total = weight + other_weight;
        LinearModel {
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(a, b)| (weight * a + other_weight * b) / total)
                .collect(),
            intercept: (weight * self.intercept + other_weight * other.intercept) / total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelTreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_rows: usize,
        model: LinearModel,
    },
    Leaf {
        n_rows: usize,
        /// Least-squares fit on the leaf's own rows.
        model: LinearModel,
        /// Model used for prediction after smoothing along the root path.
        smoothed: LinearModel,
    },
}

impl ModelTreeNode {
    pub fn n_rows(&self) -> usize {
        match self {
            ModelTreeNode::Split { n_rows, .. } | ModelTreeNode::Leaf { n_rows, .. } => *n_rows,
        }
    }

    pub fn model(&self) -> &LinearModel {
        match self {
            ModelTreeNode::Split { model, .. } | ModelTreeNode::Leaf { model, .. } => model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTree {
    pub nodes: Vec<ModelTreeNode>,
    pub min_leaf: usize,
    pub smoothing_k: f64,
    /// Nodes whose regression was singular and fell back to the mean.
    pub fallback_nodes: Vec<usize>,
}

impl ModelTree {
    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let ModelTreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = &self.nodes[i]
        {
            i = if x[*feature] < *threshold { *left } else { *right };
        }
        i
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            ModelTreeNode::Leaf { smoothed, .. } => smoothed.predict(x),
            ModelTreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ModelTreeNode> {
        self.nodes.iter().filter(|n| matches!(n, ModelTreeNode::Leaf { .. }))
    }
}

pub fn count_leaves(model: &ModelTree) -> usize {
    model.leaves().count()
}

/// Feature indices tested by at least one split, ascending.
pub fn decision_feature_indices(model: &ModelTree) -> Vec<usize> {
    let mut f: Vec<usize> = model
        .nodes
        .iter()
        .filter_map(|n| match n {
            ModelTreeNode::Split { feature, .. } => Some(*feature),
            ModelTreeNode::Leaf { .. } => None,
        })
        .collect();
    f.sort_unstable();
    f.dedup();
    f
}

#[derive(Debug, Clone)]
pub struct ModelTreeParams {
    pub min_leaf: usize,
    pub smoothing_k: f64,
    pub sd_fraction: f64,
    pub prune: bool,
    pub pruning_factor: f64,
}

impl ModelTreeParams {
    pub fn from_spec(spec: &RegressorSpec) -> Self {
        ModelTreeParams {
            min_leaf: spec.get_usize("min_leaf"),
            smoothing_k: spec.get("smoothing_k"),
            sd_fraction: spec.get("sd_fraction"),
            prune: spec.get("prune") != 0.0,
            pruning_factor: spec.get("pruning_factor"),
        }
    }
}

impl Default for ModelTreeParams {
    fn default() -> Self {
        ModelTreeParams {
            min_leaf: 4,
            smoothing_k: 15.0,
            sd_fraction: 0.05,
            prune: true,
            pruning_factor: 2.0,
        }
    }
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Least squares with intercept over all columns of `x` restricted to
/// `rows`. Columns constant on `rows` get a zero coefficient. Returns `None`
/// when the remaining design is rank deficient.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> Option<LinearModel> {
    let d = x.first().map_or(0, Vec::len);
    let n = rows.len();
    if n == 0 {
        return None;
    }
    let y_mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let mut active = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..d {
        let first = x[rows[0]][j];
        if rows.iter().all(|&r| x[r][j] == first) {
            continue;
        }
        let m = rows.iter().map(|&r| x[r][j]).sum::<f64>() / n as f64;
        let s = (rows.iter().map(|&r| (x[r][j] - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        active.push(j);
        means.push(m);
        scales.push(s);
    }
    let mut coefficients = vec![0.0; d];
    if active.is_empty() {
        return Some(LinearModel {
            coefficients,
            intercept: y_mean,
        });
    }
    let p = active.len();
    if n <= p {
        return None;
    }
    let a = DMatrix::from_fn(n, p, |i, k| (x[rows[i]][active[k]] - means[k]) / scales[k]);
    let b = DVector::from_fn(n, |i, _| y[rows[i]] - y_mean);
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * s_max.max(1e-300) {
        return None;
    }
    let sol = svd.solve(&b, 0.0).ok()?;
    let mut intercept = y_mean;
    for k in 0..p {
        let c = sol[k] / scales[k];
        coefficients[active[k]] = c;
        intercept -= c * means[k];
    }
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return None;
    }
    Some(LinearModel {
        coefficients,
        intercept,
    })
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ModelTreeParams,
    root_sd: f64,
    nodes: Vec<ModelTreeNode>,
    rows_of: Vec<Vec<usize>>,
    fallback: Vec<usize>,
}

impl Grower<'_> {
    fn linear(&mut self, id: usize, rows: &[usize]) -> LinearModel {
        let d = self.x[0].len();
        match fit_linear(self.x, self.y, rows) {
            Some(m) => m,
            None => {
                self.fallback.push(id);
                let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
                LinearModel::constant(d, mean)
            }
        }
    }

    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let model = self.linear(id, &rows);
        self.nodes.push(ModelTreeNode::Leaf {
            n_rows: rows.len(),
            smoothed: model.clone(),
            model,
        });
        self.rows_of.push(rows.clone());

        let sd = std_dev(rows.iter().map(|&r| self.y[r]));
        if rows.len() < 2 * self.params.min_leaf || sd < self.params.sd_fraction * self.root_sd || sd == 0.0 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, sd) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] < threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        let model = self.nodes[id].model().clone();
        self.nodes[id] = ModelTreeNode::Split {
            feature,
            threshold,
            left,
            right,
            n_rows: rows.len(),
            model,
        };
        id
    }

    fn best_split(&self, rows: &[usize], sd: f64) -> Option<(usize, f64)> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf;
        let d = self.x[0].len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let pop_sd = |s: f64, sq: f64, k: f64| ((sq / k) - (s / k) * (s / k)).max(0.0).sqrt();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..d {
            let mut order = rows.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut s, mut sq) = (0.0, 0.0);
            for i in 0..n - 1 {
                let yv = self.y[order[i]];
                s += yv;
                sq += yv * yv;
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (self.x[order[i]][f], self.x[order[i + 1]][f]);
                if a >= b {
                    continue;
                }
                let sdl = pop_sd(s, sq, nl as f64);
                let sdr = pop_sd(total - s, total_sq - sq, nr as f64);
                let sdr_gain = sd - (nl as f64 / n as f64) * sdl - (nr as f64 / n as f64) * sdr;
                if sdr_gain > 1e-12 * sd.max(1.0) && best.map_or(true, |(g, ..)| sdr_gain > g) {
                    best = Some((sdr_gain, f, midpoint(a, b)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn pruning_multiplier(&self, n: usize, v: usize) -> f64 {
        if n <= v {
            10.0
        } else {
            (n as f64 + self.params.pruning_factor * v as f64) / (n - v) as f64
        }
    }

    fn model_error(&self, id: usize) -> f64 {
        let rows = &self.rows_of[id];
        let model = self.nodes[id].model();
        let mse = rows
            .iter()
            .map(|&r| (model.predict(&self.x[r]) - self.y[r]).powi(2))
            .sum::<f64>()
            / rows.len() as f64;
        mse.sqrt() * self.pruning_multiplier(rows.len(), model.n_params())
    }

    /// Bottom-up pruning; returns the adjusted error of the kept subtree.
    fn prune(&mut self, id: usize) -> f64 {
        let own = self.model_error(id);
        let ModelTreeNode::Split {
            left, right, n_rows, ..
        } = self.nodes[id].clone()
        else {
            return own;
        };
        let el = self.prune(left);
        let er = self.prune(right);
        let nl = self.nodes[left].n_rows() as f64;
        let nr = self.nodes[right].n_rows() as f64;
        let subtree = (nl * el + nr * er) / n_rows as f64;
        // residuals of exact fits are rounding noise; such ties favour the leaf
        if own <= subtree + 1e-9 * self.root_sd {
            let model = self.nodes[id].model().clone();
            self.nodes[id] = ModelTreeNode::Leaf {
                n_rows,
                smoothed: model.clone(),
                model,
            };
            own
        } else {
            subtree
        }
    }

    /// Drops unreachable nodes after pruning, keeping preorder.
    fn compact(&mut self) {
        let mut new_nodes = Vec::new();
        let mut new_rows = Vec::new();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        fn visit(
            g: &Grower<'_>,
            i: usize,
            out: &mut Vec<ModelTreeNode>,
            rows: &mut Vec<Vec<usize>>,
            remap: &mut [usize],
        ) -> usize {
            let id = out.len();
            remap[i] = id;
            out.push(g.nodes[i].clone());
            rows.push(g.rows_of[i].clone());
            if let ModelTreeNode::Split { left, right, .. } = g.nodes[i] {
                let l = visit(g, left, out, rows, remap);
                let r = visit(g, right, out, rows, remap);
                if let ModelTreeNode::Split { left, right, .. } = &mut out[id] {
                    *left = l;
                    *right = r;
                }
            }
            id
        }
        visit(self, 0, &mut new_nodes, &mut new_rows, &mut remap);
        self.fallback = self
            .fallback
            .iter()
            .filter_map(|&i| (remap[i] != usize::MAX).then_some(remap[i]))
            .collect();
        self.fallback.sort_unstable();
        self.nodes = new_nodes;
        self.rows_of = new_rows;
    }

    fn smooth(&mut self) {
        let k = self.params.smoothing_k;
        // ancestors of every node in preorder
        let mut parent = vec![usize::MAX; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let ModelTreeNode::Split { left, right, .. } = n {
                parent[*left] = i;
                parent[*right] = i;
            }
        }
        for i in 0..self.nodes.len() {
            let ModelTreeNode::Leaf { model, .. } = &self.nodes[i] else {
                continue;
            };
            let mut acc = model.clone();
            let mut child = i;
            while k > 0.0 && parent[child] != usize::MAX {
                let p = parent[child];
                let n_below = self.nodes[child].n_rows() as f64;
                acc = acc.blend(n_below, self.nodes[p].model(), k);
                child = p;
            }
            if let ModelTreeNode::Leaf { smoothed, .. } = &mut self.nodes[i] {
                *smoothed = acc;
            }
        }
    }
}

pub fn model_tree_fit_with(x: &[Vec<f64>], y: &[f64], params: &ModelTreeParams) -> ModelTree {
    let rows: Vec<usize> = (0..y.len()).collect();
    let mut g = Grower {
        x,
        y,
        params,
        root_sd: std_dev(y.iter().copied()),
        nodes: Vec::new(),
        rows_of: Vec::new(),
        fallback: Vec::new(),
    };
    g.grow(rows);
    if params.prune {
        g.prune(0);
        g.compact();
    }
    g.smooth();
    ModelTree {
        nodes: g.nodes,
        min_leaf: params.min_leaf,
        smoothing_k: params.smoothing_k,
        fallback_nodes: g.fallback,
    }
}
