//! Path-dependent TreeSHAP for the boosted ensemble.
//!
//! Conditional expectations follow the training cover stored at every
//! node. Per-tree attributions are scaled by the learning rate, so for each
//! row `base_value + Σ φ = prediction`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::{DecisionTree, GbtModel, Node, RegressorModel};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub features: Vec<String>,
    pub base_value: f64,
    /// rows x features
    pub phi: Vec<Vec<f64>>,
    /// Feature values of the explained rows, rows x features.
    pub values: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let lf = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / lf;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / lf;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let one = path[i].one_fraction;
    let zero = path[i].zero_fraction;
    let mut n = path[l].weight;
    let lf = (l + 1) as f64;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = n * lf / ((j + 1) as f64 * one);
            n = t - path[j].weight * zero * (l - j) as f64 / lf;
        } else {
            path[j].weight = path[j].weight * lf / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let one = path[i].one_fraction;
    let zero = path[i].zero_fraction;
    let mut n = path[l].weight;
    let lf = (l + 1) as f64;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = n * lf / ((j + 1) as f64 * one);
            total += t;
            n = path[j].weight - t * zero * (l - j) as f64 / lf;
        } else {
            total += path[j].weight / (zero * (l - j) as f64 / lf);
        }
    }
    total
}

struct Walker<'a> {
    nodes: &'a [Node],
    x: &'a [f64],
    scale: f64,
    phi: &'a mut [f64],
}

impl Walker<'_> {
    fn recurse(&mut self, node: usize, mut path: Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
        extend(&mut path, zero, one, feature);
        match &self.nodes[node] {
            Node::Leaf { value, .. } => {
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let e = path[i];
                    let f = e.feature.expect("non-root path elements carry a feature");
                    self.phi[f] += w * (e.one_fraction - e.zero_fraction) * value * self.scale;
                }
            }
            Node::Split {
                feature: split,
                threshold,
                left,
                right,
                cover,
                ..
            } => {
                let (hot, cold) = if self.x[*split] < *threshold {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                let (mut iz, mut io) = (1.0, 1.0);
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split)) {
                    iz = path[k].zero_fraction;
                    io = path[k].one_fraction;
                    unwind(&mut path, k);
                }
                let share = |c: usize| {
                    if *cover > 0.0 {
                        self.nodes[c].cover() / cover
                    } else {
                        0.5
                    }
                };
                let (hs, cs) = (share(hot), share(cold));
                self.recurse(hot, path.clone(), iz * hs, io, Some(*split));
                self.recurse(cold, path, iz * cs, 0.0, Some(*split));
            }
        }
    }
}

/// Cover-weighted mean leaf value, i.e. the tree's expected output.
pub fn tree_expectation(tree: &DecisionTree) -> f64 {
    fn walk(nodes: &[Node], i: usize) -> f64 {
        match &nodes[i] {
            Node::Leaf { value, .. } => *value,
            Node::Split {
                left, right, cover, ..
            } => {
                if *cover > 0.0 {
                    (nodes[*left].cover() * walk(nodes, *left) + nodes[*right].cover() * walk(nodes, *right)) / cover
                } else {
                    0.5 * (walk(nodes, *left) + walk(nodes, *right))
                }
            }
        }
    }
    walk(tree.nodes(), 0)
}

/// SHAP values of one tree for one row, unscaled.
pub fn tree_shap_row(tree: &DecisionTree, x: &[f64], phi: &mut [f64], scale: f64) {
    let mut w = Walker {
        nodes: tree.nodes(),
        x,
        scale,
        phi,
    };
    w.recurse(0, Vec::with_capacity(16), 1.0, 1.0, None);
}

pub fn gbt_base_value(model: &GbtModel) -> f64 {
    let mut base = model.base_prediction;
    for t in &model.trees {
        base += model.learning_rate * tree_expectation(t);
    }
    base
}

pub fn explain_gbt_row(model: &GbtModel, x: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; x.len()];
    for t in &model.trees {
        tree_shap_row(t, x, &mut phi, model.learning_rate);
    }
    phi
}

pub fn tree_shap(model: &RegressorModel, rows: &Dataset) -> Result<ShapReport> {
    tree_shap_with(model, rows, Execution::default())
}

pub fn tree_shap_with(model: &RegressorModel, rows: &Dataset, exec: Execution) -> Result<ShapReport> {
    let gbt = model.as_gbt().ok_or_else(|| {
        Error::UnsupportedModel(format!("TreeSHAP needs a GBT model, got {}", model.algorithm()))
    })?;
    model.schema.ensure_matches(rows.schema())?;
    let data = rows.rows();
    let phi = exec.map(data.len(), |i| explain_gbt_row(gbt, &data[i].values));
    Ok(ShapReport {
        features: model.schema.names().map(str::to_string).collect(),
        base_value: gbt_base_value(gbt),
        phi,
        values: data.iter().map(|r| r.values.clone()).collect(),
        predictions: data.iter().map(|r| gbt.predict_row(&r.values)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummaryRow {
    pub feature: String,
    pub mean_abs_phi: f64,
    /// Sign of the correlation between feature value and φ: +1, -1 or 0
    /// when undefined.
    pub dominant_sign: i8,
    pub correlation: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa.sqrt() * sbb.sqrt()))
}

/// Features by descending mean |φ|; ties keep schema order.
pub fn shap_summary(report: &ShapReport) -> Result<Vec<ShapSummaryRow>> {
    if report.phi.is_empty() {
        return Err(Error::InvalidArgument("empty SHAP report".into()));
    }
    let n = report.phi.len() as f64;
    let mut rows: Vec<ShapSummaryRow> = report
        .features
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let phi: Vec<f64> = report.phi.iter().map(|r| r[j]).collect();
            let vals: Vec<f64> = report.values.iter().map(|r| r[j]).collect();
            let corr = pearson(&vals, &phi).unwrap_or(0.0);
            ShapSummaryRow {
                feature: name.clone(),
                mean_abs_phi: phi.iter().map(|v| v.abs()).sum::<f64>() / n,
                dominant_sign: if corr > 0.0 {
                    1
                } else if corr < 0.0 {
                    -1
                } else {
                    0
                },
                correlation: corr,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump(feature: usize, threshold: f64, lv: f64, rv: f64, lc: f64, rc: f64) -> DecisionTree {
        DecisionTree::from_nodes(vec![
            Node::Split {
                feature,
                threshold,
                left: 1,
                right: 2,
                gain: 1.0,
                cover: lc + rc,
            },
            Node::Leaf { value: lv, cover: lc },
            Node::Leaf { value: rv, cover: rc },
        ])
        .unwrap()
    }

    #[test]
    fn stump_attribution_by_hand() {
        // E[f] = (3*2 + 1*10)/4 = 4; x goes left: f = 2, φ_0 = 2 - 4
        let t = stump(0, 0.5, 2.0, 10.0, 3.0, 1.0);
        let mut phi = vec![0.0; 2];
        tree_shap_row(&t, &[0.0, 7.0], &mut phi, 1.0);
        assert!((phi[0] + 2.0).abs() < 1e-12);
        assert_eq!(phi[1], 0.0);
        assert_eq!(tree_expectation(&t), 4.0);
    }

    #[test]
    fn summary_orders_and_keeps_ties_stable() {
        let report = ShapReport {
            features: vec!["a".into(), "b".into(), "c".into()],
            base_value: 0.0,
            phi: vec![vec![0.0, 1.0, 0.0], vec![0.0, -2.0, 0.0]],
            values: vec![vec![1.0, 5.0, 1.0], vec![2.0, 6.0, 1.0]],
            predictions: vec![1.0, -2.0],
        };
        let s = shap_summary(&report).unwrap();
        let order: Vec<&str> = s.iter().map(|r| r.feature.as_str()).collect();
        assert_eq!(order, ["b", "a", "c"]);
        assert_eq!(s[0].dominant_sign, -1);
        assert_eq!(s[1].mean_abs_phi, 0.0);
        assert_eq!(s[1].dominant_sign, 0);
    }
}
