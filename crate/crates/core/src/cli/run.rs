use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerConfig, PairConfig, SplitMode};
use crate::analysis::{
    ks_feature_screen_with, mae, run_repetitions, shap_summary, tree_shap_with, FeatureKsResult, Metric,
    MetricReport, R2Kind, ShapReport, ShapSummaryRow,
};
use crate::dataset::{
    content_split, random_split, train_test_split, Dataset, Projection,
};
use crate::error::{Error, Result};
use crate::learners::{count_leaves, decision_features, fit, Algorithm, Predictor, RegressorModel, RegressorSpec};
use crate::par::Execution;
use crate::stacking::{
    argmax_r2, cross_evaluate_with, export_model, import_model, weight_grid, weight_scan_with,
    ModelDocument, ScanPoint, StackedModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub r2: MetricReport,
    pub mae: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentTable {
    pub without_content: MetricPair,
    pub with_content: MetricPair,
}

/// R² per group and on the pooled test predictions of both group models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub g0_rows: usize,
    pub g1_rows: usize,
    pub overall: MetricReport,
    pub g0: MetricReport,
    pub g1: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTable {
    pub random: GroupScores,
    pub content: GroupScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub train_group: String,
    pub features: Projection,
    pub test_group: String,
    pub r2: Option<MetricReport>,
    pub mae: Option<MetricReport>,
    /// Own-group R² minus this cell's R², averaged over repetitions.
    pub delta_r2: Option<f64>,
    pub failed_repetitions: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummaryPoint {
    pub w0: f64,
    pub r2: MetricReport,
    pub mae: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub label: String,
    pub base: String,
    pub local: String,
    pub curve: Vec<ScanSummaryPoint>,
    /// Argmax of the mean curve; ties go to the smaller w0.
    pub best_w0: f64,
    pub best_r2: MetricReport,
    pub local_only_r2: MetricReport,
    pub base_only_r2: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingCheck {
    pub pair: String,
    pub rows: usize,
    pub max_dev_w0_zero: f64,
    pub max_dev_w0_one: f64,
    pub max_affine_dev: f64,
    pub envelope_violations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTreeSummary {
    pub group: String,
    pub features: Projection,
    pub train_rows: usize,
    pub leaves: usize,
    pub decision_features: Vec<String>,
    pub test_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub stage: String,
    pub repetition: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub dataset_rows: usize,
    pub split_mode: SplitMode,
    pub g0_rows: usize,
    pub g1_rows: usize,
    pub content_dependency: ContentTable,
    pub splits: SplitTable,
    pub cross: Vec<CrossRow>,
    pub stacking: Vec<PairResult>,
    pub stacking_checks: Vec<StackingCheck>,
    pub ks: Vec<FeatureKsResult>,
    pub shap: Option<Vec<ShapSummaryRow>>,
    #[serde(skip)]
    pub shap_detail: Option<ShapReport>,
    pub model_trees: Vec<ModelTreeSummary>,
    pub seed_ledger: Vec<LedgerEntry>,
}

const GROUPS: [&str; 2] = ["G0", "G1"];
const PROJECTIONS: [Projection; 2] = [Projection::GenericOnly, Projection::All];

fn fit_on(learner: &LearnerConfig, seed: u64, data: &Dataset) -> Result<RegressorModel> {
    fit(&learner.spec(seed)?, data)
}

fn score(kind: R2Kind, model: &dyn Predictor, test: &Dataset) -> Result<(f64, f64, Vec<f64>)> {
    let rows = test.select(model.input_schema())?;
    let pred = model.predict(&rows)?;
    let y = rows.labels();
    Ok((kind.compute(&y, &pred)?, mae(&y, &pred)?, pred))
}

#[derive(Clone, Copy)]
struct GroupOutcome {
    g0: f64,
    g1: f64,
    overall: f64,
}

/// Trains one all-feature model per group on a train/test split of each
/// group; "overall" pools both groups' test predictions.
fn group_scores(
    cfg: &ExperimentConfig,
    seed: u64,
    groups: [&Dataset; 2],
) -> Result<(GroupOutcome, [(Dataset, Dataset); 2])> {
    let kind = cfg.protocol.r2;
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut r2 = [0.0; 2];
    let mut parts = Vec::new();
    for (g, data) in groups.iter().enumerate() {
        let (train, test) = train_test_split(data, cfg.protocol.train_fraction, seed)?;
        let model = fit_on(&cfg.reference, seed, &train)?;
        let (r, _, p) = score(kind, &model, &test)?;
        r2[g] = r;
        preds.extend(p);
        labels.extend(test.labels());
        parts.push((train, test));
    }
    let overall = kind.compute(&labels, &preds)?;
    let parts: [(Dataset, Dataset); 2] = parts.try_into().map_err(|_| Error::InvalidArgument("groups".into()))?;
    Ok((
        GroupOutcome {
            g0: r2[0],
            g1: r2[1],
            overall,
        },
        parts,
    ))
}

struct RepOutcome {
    full: [(f64, f64); 2],
    random: GroupOutcome,
    content: GroupOutcome,
    /// Indexed like `cross_layout`: Some((r2, mae)) or the cell's error.
    cross: Vec<std::result::Result<(f64, f64), String>>,
    scans: Vec<Vec<ScanPoint>>,
    checks: Vec<StackingCheck>,
}

/// (train group, projection, test group) for every cross cell.
fn cross_layout() -> Vec<(usize, Projection, usize)> {
    let mut v = Vec::new();
    for g in 0..2 {
        for p in PROJECTIONS {
            for t in 0..2 {
                v.push((g, p, t));
            }
        }
    }
    v
}

/// Sends the base model through a ModelDocument, as a remote site would
/// receive it.
fn transfer(base: &RegressorModel, local_schema: &crate::dataset::FeatureSchema, provenance: &str) -> Result<crate::stacking::ImportedModel> {
    let doc = export_model(base, true, provenance)?;
    let text = doc.to_json()?;
    import_model(&ModelDocument::from_json(&text)?, local_schema)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn stacking_check(label: &str, base: &dyn Predictor, local: &dyn Predictor, test: &Dataset, step: f64) -> Result<StackingCheck> {
    let local_pred = local.predict(test)?;
    let base_pred = StackedModel::new(base, local, 0.0)?.base_predictions(test)?;
    let at = |w0: f64| StackedModel::new(base, local, w0)?.predict(test);
    let max_dev_w0_zero = max_abs_diff(&at(0.0)?, &local_pred);
    let max_dev_w0_one = max_abs_diff(&at(1.0)?, &base_pred);
    let mut max_affine_dev: f64 = 0.0;
    let mut envelope_violations = 0;
    for w0 in weight_grid(step)? {
        let stacked = at(w0)?;
        let direct: Vec<f64> = base_pred.iter().zip(&local_pred).map(|(b, l)| w0 * b + (1.0 - w0) * l).collect();
        max_affine_dev = max_affine_dev.max(max_abs_diff(&stacked, &direct));
        envelope_violations += stacked
            .iter()
            .zip(base_pred.iter().zip(&local_pred))
            .filter(|(s, (b, l))| **s < b.min(**l) || **s > b.max(**l))
            .count();
    }
    Ok(StackingCheck {
        pair: label.to_string(),
        rows: test.len(),
        max_dev_w0_zero,
        max_dev_w0_one,
        max_affine_dev,
        envelope_violations,
        passed: max_dev_w0_zero == 0.0 && max_dev_w0_one == 0.0 && max_affine_dev < 1e-12 && envelope_violations == 0,
    })
}

fn repetition(
    cfg: &ExperimentConfig,
    data: &Dataset,
    content: &(Dataset, Dataset),
    g0_size: usize,
    rep: usize,
    seed: u64,
) -> Result<RepOutcome> {
    let kind = cfg.protocol.r2;

    let (train, test) = train_test_split(data, cfg.protocol.train_fraction, seed).map_err(|e| e.in_stage("table3"))?;
    let mut full = [(0.0, 0.0); 2];
    for (i, p) in PROJECTIONS.iter().enumerate() {
        let m = fit_on(&cfg.reference, seed, &train.project(*p)).map_err(|e| e.in_stage("table3"))?;
        let (r, a, _) = score(kind, &m, &test).map_err(|e| e.in_stage("table3"))?;
        full[i] = (r, a);
    }

    let random_groups = random_split(data, g0_size, seed).map_err(|e| e.in_stage("split"))?;
    let (random, random_parts) =
        group_scores(cfg, seed, [&random_groups.0, &random_groups.1]).map_err(|e| e.in_stage("table4"))?;
    let (content_scores, content_parts) =
        group_scores(cfg, seed, [&content.0, &content.1]).map_err(|e| e.in_stage("table4"))?;
    let parts = match cfg.split.mode {
        SplitMode::Content => &content_parts,
        SplitMode::Random => &random_parts,
    };

    let tests: Vec<(&str, &Dataset)> = GROUPS.iter().zip(parts.iter()).map(|(n, p)| (*n, &p.1)).collect();
    let mut cross = Vec::new();
    for g in 0..2 {
        for p in PROJECTIONS {
            let model = fit_on(&cfg.reference, seed, &parts[g].0.project(p)).map_err(|e| e.in_stage("table5"))?;
            for cell in cross_evaluate_with(&model, GROUPS[g], &tests, kind) {
                cross.push(match (cell.r2, cell.mae) {
                    (Some(r), Some(m)) => Ok((r, m)),
                    _ => Err(cell.error.unwrap_or_default()),
                });
            }
        }
    }

    let (g0_train, g1_train, g1_test) = (&parts[0].0, &parts[1].0, &parts[1].1);
    let mut scans = Vec::new();
    let mut checks = Vec::new();
    for pair in &cfg.pairs {
        let label = pair.label();
        let stage = format!("table6:{label}");
        let mut run = || -> Result<()> {
            let base = fit_on(&pair.base, seed, &g0_train.project(pair.base_features))?;
            let local_test = g1_test.project(pair.local_features);
            let local = fit_on(&pair.local, seed, &g1_train.project(pair.local_features))?;
            let imported = transfer(&base, local_test.schema(), &format!("G0 repetition {rep}"))?;
            let scan = weight_scan_with(&imported, &local, &local_test, cfg.stacking.grid_step, kind, Execution::Sequential)?;
            scans.push(scan.points);
            if rep == 0 {
                checks.push(stacking_check(&label, &imported, &local, &local_test, cfg.stacking.grid_step)?);
            }
            Ok(())
        };
        run().map_err(|e| e.in_stage(&stage))?;
    }

    Ok(RepOutcome {
        full,
        random,
        content: content_scores,
        cross,
        scans,
        checks,
    })
}

fn report_of(metric: Metric, samples: impl IntoIterator<Item = f64>) -> MetricReport {
    let v: Vec<f64> = samples.into_iter().collect();
    MetricReport::from_samples(metric, &v)
}

fn group_table(outcomes: &[GroupOutcome], g0_rows: usize, g1_rows: usize) -> GroupScores {
    GroupScores {
        g0_rows,
        g1_rows,
        overall: report_of(Metric::R2, outcomes.iter().map(|o| o.overall)),
        g0: report_of(Metric::R2, outcomes.iter().map(|o| o.g0)),
        g1: report_of(Metric::R2, outcomes.iter().map(|o| o.g1)),
    }
}

fn summarize_pair(pair: &PairConfig, scans: &[&Vec<ScanPoint>]) -> Result<PairResult> {
    let n_points = scans[0].len();
    let curve: Vec<ScanSummaryPoint> = (0..n_points)
        .map(|i| ScanSummaryPoint {
            w0: scans[0][i].w0,
            r2: report_of(Metric::R2, scans.iter().map(|s| s[i].r2)),
            mae: report_of(Metric::Mae, scans.iter().map(|s| s[i].mae)),
        })
        .collect();
    let means: Vec<ScanPoint> = curve
        .iter()
        .map(|p| ScanPoint {
            w0: p.w0,
            r2: p.r2.mean,
            mae: p.mae.mean,
        })
        .collect();
    let best = argmax_r2(&means);
    let best_idx = means.iter().position(|p| p.w0 == best.w0).unwrap_or(0);
    Ok(PairResult {
        label: pair.label(),
        base: pair.base.algorithm()?.tag().to_string(),
        local: pair.local.algorithm()?.tag().to_string(),
        best_w0: best.w0,
        best_r2: curve[best_idx].r2,
        local_only_r2: curve[0].r2,
        base_only_r2: curve[n_points - 1].r2,
        curve,
    })
}

fn model_tree_summaries(cfg: &ExperimentConfig, groups: [&Dataset; 2]) -> Result<Vec<ModelTreeSummary>> {
    let seed = cfg.seed;
    let both = Dataset::concat(&[groups[0], groups[1]], "G0+G1")?;
    let named = [("G0", groups[0]), ("G1", groups[1]), ("G0+G1", &both)];
    let spec = RegressorSpec::with_defaults(Algorithm::ModelTree, seed);
    let mut out = Vec::new();
    for (name, data) in named {
        let (train, test) = train_test_split(data, cfg.protocol.train_fraction, seed)?;
        for p in PROJECTIONS {
            let model = fit(&spec, &train.project(p))?;
            let tree = model.as_model_tree().expect("model tree");
            let test_r2 = score(cfg.protocol.r2, &model, &test).ok().map(|s| s.0);
            out.push(ModelTreeSummary {
                group: name.to_string(),
                features: p,
                train_rows: train.len(),
                leaves: count_leaves(tree),
                decision_features: decision_features(&model)?,
                test_r2,
            });
        }
    }
    Ok(out)
}

/// Runs every experiment stage and assembles the report.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset, exec: Execution) -> Result<RunReport> {
    let content = content_split(data, cfg.split.ti_threshold, cfg.split.si_threshold).map_err(|e| e.in_stage("split"))?;
    let g0_size = cfg.split.g0_size.unwrap_or(content.0.len());
    if g0_size == 0 || g0_size >= data.len() {
        return Err(Error::Config(format!("G0 size {g0_size} leaves an empty group")));
    }
    if content.0.is_empty() || content.1.is_empty() {
        return Err(Error::InvalidArgument("content split leaves an empty group".into()).in_stage("split"));
    }

    let outcomes = run_repetitions(cfg.repetitions, cfg.seed, exec, |seed| {
        repetition(cfg, data, &content, g0_size, (seed - cfg.seed) as usize, seed)
    })?;

    let mut ledger = Vec::new();
    for r in 0..cfg.repetitions {
        let seed = cfg.seed + r as u64;
        let mut stages = vec!["table3".to_string(), "split".into(), "table4".into(), "table5".into()];
        stages.extend(cfg.pairs.iter().map(|p| format!("table6:{}", p.label())));
        for stage in stages {
            ledger.push(LedgerEntry {
                stage,
                repetition: r,
                seed,
            });
        }
    }

    let full = |i: usize| MetricPair {
        r2: report_of(Metric::R2, outcomes.iter().map(|o| o.full[i].0)),
        mae: report_of(Metric::Mae, outcomes.iter().map(|o| o.full[i].1)),
    };
    let content_dependency = ContentTable {
        without_content: full(0),
        with_content: full(1),
    };

    let random: Vec<GroupOutcome> = outcomes.iter().map(|o| o.random).collect();
    let contents: Vec<GroupOutcome> = outcomes.iter().map(|o| o.content).collect();
    let splits = SplitTable {
        random: group_table(&random, g0_size, data.len() - g0_size),
        content: group_table(&contents, content.0.len(), content.1.len()),
    };

    let layout = cross_layout();
    let mut cross = Vec::new();
    for (c, (g, p, t)) in layout.iter().enumerate() {
        let ok: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.cross[c].clone().ok()).collect();
        let error = outcomes.iter().find_map(|o| o.cross[c].clone().err());
        let own = layout.iter().position(|l| *l == (*g, *p, *g)).unwrap();
        let deltas: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| match (&o.cross[own], &o.cross[c]) {
                (Ok(a), Ok(b)) => Some(a.0 - b.0),
                _ => None,
            })
            .collect();
        cross.push(CrossRow {
            train_group: GROUPS[*g].to_string(),
            features: *p,
            test_group: GROUPS[*t].to_string(),
            r2: (!ok.is_empty()).then(|| report_of(Metric::R2, ok.iter().map(|v| v.0))),
            mae: (!ok.is_empty()).then(|| report_of(Metric::Mae, ok.iter().map(|v| v.1))),
            delta_r2: (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64),
            failed_repetitions: outcomes.len() - ok.len(),
            error,
        });
    }

    let mut stacking = Vec::new();
    for (i, pair) in cfg.pairs.iter().enumerate() {
        let scans: Vec<&Vec<ScanPoint>> = outcomes.iter().map(|o| &o.scans[i]).collect();
        stacking.push(summarize_pair(pair, &scans)?);
    }
    let stacking_checks = outcomes[0].checks.clone();

    let (g0, g1) = match cfg.split.mode {
        SplitMode::Content => content.clone(),
        SplitMode::Random => random_split(data, g0_size, cfg.seed)?,
    };
    ledger.push(LedgerEntry {
        stage: "ks".into(),
        repetition: 0,
        seed: cfg.seed,
    });
    let ks = ks_feature_screen_with(&g0, &g1, cfg.protocol.ks_alpha, exec).map_err(|e| e.in_stage("ks"))?;

    let (shap, shap_detail) = if cfg.protocol.shap && cfg.reference.algorithm()? == Algorithm::Gbt {
        ledger.push(LedgerEntry {
            stage: "shap".into(),
            repetition: 0,
            seed: cfg.seed,
        });
        let run = || -> Result<(Vec<ShapSummaryRow>, ShapReport)> {
            let (train, _) = train_test_split(data, cfg.protocol.train_fraction, cfg.seed)?;
            let model = fit_on(&cfg.reference, cfg.seed, &train)?;
            let report = tree_shap_with(&model, data, exec)?;
            Ok((shap_summary(&report)?, report))
        };
        let (s, d) = run().map_err(|e| e.in_stage("shap"))?;
        (Some(s), Some(d))
    } else {
        (None, None)
    };

    ledger.push(LedgerEntry {
        stage: "model_trees".into(),
        repetition: 0,
        seed: cfg.seed,
    });
    let model_trees = model_tree_summaries(cfg, [&g0, &g1]).map_err(|e| e.in_stage("model_trees"))?;

    Ok(RunReport {
        config: cfg.clone(),
        dataset_rows: data.len(),
        split_mode: cfg.split.mode,
        g0_rows: g0.len(),
        g1_rows: g1.len(),
        content_dependency,
        splits,
        cross,
        stacking,
        stacking_checks,
        ks,
        shap,
        shap_detail,
        model_trees,
        seed_ledger: ledger,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_report(r: &MetricReport) -> String {
    format!("{},{:.6},{}", r, r.mean, fmt_opt(r.ci_half_width))
}

/// Renders every report file as (name, contents), in write order.
pub fn render_report(report: &RunReport) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();

    let mut s = String::from("metric,column,value,mean,ci_half_width\n");
    let t = &report.content_dependency;
    for (col, pair) in [("without_content", &t.without_content), ("with_content", &t.with_content)] {
        let _ = writeln!(s, "R2,{col},{}", fmt_report(&pair.r2));
        let _ = writeln!(s, "MAE,{col},{}", fmt_report(&pair.mae));
    }
    files.push(("table3_content_dependency.csv".into(), s));

    let mut s = String::from("split,group,rows,r2,mean,ci_half_width\n");
    for (name, g) in [("random", &report.splits.random), ("content", &report.splits.content)] {
        let _ = writeln!(s, "{name},overall,{},{}", g.g0_rows + g.g1_rows, fmt_report(&g.overall));
        let _ = writeln!(s, "{name},G0,{},{}", g.g0_rows, fmt_report(&g.g0));
        let _ = writeln!(s, "{name},G1,{},{}", g.g1_rows, fmt_report(&g.g1));
    }
    files.push(("table4_splits.csv".into(), s));

    let mut s = String::from(
        "train_group,features,test_group,r2,r2_mean,r2_ci_half_width,mae,mae_mean,mae_ci_half_width,delta_r2,failed_repetitions,error\n",
    );
    for c in &report.cross {
        let feats = match c.features {
            Projection::GenericOnly => "GF",
            Projection::All => "GF+SF",
        };
        let r2 = c.r2.as_ref().map(fmt_report).unwrap_or_else(|| "n/a,n/a,n/a".into());
        let m = c.mae.as_ref().map(fmt_report).unwrap_or_else(|| "n/a,n/a,n/a".into());
        let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{feats},{},{r2},{m},{},{},{err}",
            c.train_group,
            c.test_group,
            fmt_opt(c.delta_r2),
            c.failed_repetitions
        );
    }
    files.push(("table5_cross.csv".into(), s));

    let mut s = String::from("base,local,r2,mean,ci_half_width,optimal_w0,local_only_r2,base_only_r2\n");
    for p in &report.stacking {
        let _ = writeln!(
            s,
            "{},{},{},{:.2},{},{}",
            p.base, p.local, fmt_report(&p.best_r2), p.best_w0, p.local_only_r2, p.base_only_r2
        );
    }
    files.push(("table6_stacking.csv".into(), s));

    for p in &report.stacking {
        let mut s = format!("# weight scan {}: base {} / local {}\n# w0 r2_mean r2_ci mae_mean mae_ci\n", p.label, p.base, p.local);
        for c in &p.curve {
            let _ = writeln!(
                s,
                "{:.4} {:.6} {} {:.6} {}",
                c.w0,
                c.r2.mean,
                fmt_opt(c.r2.ci_half_width),
                c.mae.mean,
                fmt_opt(c.mae.ci_half_width)
            );
        }
        files.push((format!("scan_{}.dat", p.label), s));
    }

    let mut s = String::from("pair,rows,max_dev_w0_zero,max_dev_w0_one,max_affine_dev,envelope_violations,passed\n");
    for c in &report.stacking_checks {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e},{},{}",
            c.pair, c.rows, c.max_dev_w0_zero, c.max_dev_w0_one, c.max_affine_dev, c.envelope_violations, c.passed
        );
    }
    files.push(("stacking_checks.csv".into(), s));

    let mut s = String::from("feature,statistic,p_value,n1,n2,specific_candidate\n");
    for k in &report.ks {
        let _ = writeln!(
            s,
            "{},{:.6},{:e},{},{},{}",
            k.feature, k.result.statistic, k.result.p_value, k.result.n1, k.result.n2, k.specific_candidate
        );
    }
    files.push(("ks.csv".into(), s));

    if let Some(summary) = &report.shap {
        files.push(("shap_summary.csv".into(), shap_summary_csv(summary)));
    }
    if let Some(detail) = &report.shap_detail {
        files.push(("shap_plot.csv".into(), shap_plot_csv(detail)));
    }

    let mut s = String::from("group,features,train_rows,leaves,decision_features,test_r2\n");
    for m in &report.model_trees {
        let feats = match m.features {
            Projection::GenericOnly => "GF",
            Projection::All => "GF+SF",
        };
        let _ = writeln!(
            s,
            "{},{feats},{},{},{},{}",
            m.group,
            m.train_rows,
            m.leaves,
            m.decision_features.join(";"),
            fmt_opt(m.test_r2)
        );
    }
    files.push(("model_trees.csv".into(), s));

    let mut s = String::from("stage,repetition,seed\n");
    for l in &report.seed_ledger {
        let _ = writeln!(s, "{},{},{}", l.stage, l.repetition, l.seed);
    }
    files.push(("seed_ledger.csv".into(), s));

    let mut config = serde_json::to_string_pretty(&report.config)?;
    config.push('\n');
    files.push(("config.json".into(), config));
    let mut full = serde_json::to_string_pretty(report)?;
    full.push('\n');
    files.push(("report.json".into(), full));
    Ok(files)
}

pub fn shap_summary_csv(summary: &[ShapSummaryRow]) -> String {
    let mut s = String::from("rank,feature,mean_abs_phi,dominant_sign,correlation\n");
    for (i, r) in summary.iter().enumerate() {
        let _ = writeln!(s, "{},{},{:.6},{},{:.6}", i + 1, r.feature, r.mean_abs_phi, r.dominant_sign, r.correlation);
    }
    s
}

/// One line per (row, feature): `row_id,feature,feature_value,phi`.
pub fn shap_plot_csv(report: &ShapReport) -> String {
    let mut s = String::from("row_id,feature,feature_value,phi\n");
    for (i, (phi, vals)) in report.phi.iter().zip(&report.values).enumerate() {
        for (j, f) in report.features.iter().enumerate() {
            let _ = writeln!(s, "{i},{f},{},{}", vals[j], phi[j]);
        }
    }
    s
}

fn staging_dir(target: &Path) -> PathBuf {
    let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    target.with_file_name(name)
}

/// Writes all files into a staging directory, then swaps it into place.
/// On failure the staging directory is removed and `dir` is untouched.
pub fn write_report_dir(dir: &Path, files: &[(String, String)]) -> Result<()> {
    let staging = staging_dir(dir);
    let write_all = || -> Result<()> {
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        for (name, contents) in files {
            let p = staging.join(name);
            std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        }
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
    };
    let result = write_all();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_file_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_layout_covers_every_cell_once() {
        let l = cross_layout();
        assert_eq!(l.len(), 8);
        let mut d = l.clone();
        d.dedup();
        assert_eq!(d.len(), 8);
    }

    #[test]
    fn failed_report_write_leaves_no_staging() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let files = vec![("a.csv".to_string(), "x\n".to_string()), ("sub/b.csv".to_string(), "y\n".to_string())];
        assert!(write_report_dir(&dir, &files).is_err());
        assert!(!dir.exists());
        assert!(!staging_dir(&dir).exists());
        write_report_dir(&dir, &files[..1]).unwrap();
        assert_eq!(std::fs::read_to_string(dir.join("a.csv")).unwrap(), "x\n");
    }
}
