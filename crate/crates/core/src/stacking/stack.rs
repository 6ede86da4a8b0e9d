use serde::{Deserialize, Serialize};

use crate::analysis::{mae, R2Kind};
use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::learners::Predictor;
use crate::par::Execution;

/// Default W₀ grid resolution.
pub const DEFAULT_GRID_STEP: f64 = 0.1;

/// Convex combination of a transferred base model and a local model:
/// `y' = w0 * base(x_GF) + w1 * local(x)`, `w1 = 1 - w0`.
pub struct StackedModel<'m> {
    base: &'m dyn Predictor,
    local: &'m dyn Predictor,
    w0: f64,
    w1: f64,
}

impl<'m> StackedModel<'m> {
    pub fn new(base: &'m dyn Predictor, local: &'m dyn Predictor, w0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w0) {
            return Err(Error::InvalidArgument(format!("w0 = {w0} outside [0, 1]")));
        }
        check_base_compatible(base, local)?;
        Ok(StackedModel {
            base,
            local,
            w0,
            w1: 1.0 - w0,
        })
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.w0, self.w1)
    }

    /// The base model's predictions on `rows` (projected onto its schema).
    pub fn base_predictions(&self, rows: &Dataset) -> Result<Vec<f64>> {
        self.base.predict(&rows.select(self.base.input_schema())?)
    }

    pub fn predict(&self, rows: &Dataset) -> Result<Vec<f64>> {
        let local = self.local.predict(rows)?;
        let base = self.base_predictions(rows)?;
        Ok(combine(&base, &local, self.w0))
    }
}

/// The base model's own features must be GENERIC and appear, in the same
/// relative order, among the local schema's generic features.
fn check_base_compatible(base: &dyn Predictor, local: &dyn Predictor) -> Result<()> {
    let bs = base.model_schema();
    let sf = bs.specific_names();
    if !sf.is_empty() {
        return Err(Error::IncompatibleTransfer(format!(
            "base model uses specific features: {}",
            sf.join(", ")
        )));
    }
    let local_generic = local.input_schema().generic();
    let mut it = local_generic.entries().iter();
    for e in bs.entries() {
        if !it.any(|l| l.name == e.name && l.kind == FeatureKind::Generic) {
            return Err(Error::IncompatibleTransfer(format!(
                "base feature `{}` is not among the local generic features (in order)",
                e.name
            )));
        }
    }
    Ok(())
}

/// Elementwise `w0 * base + (1 - w0) * local`, kept inside the envelope of
/// the two inputs.
pub fn combine(base: &[f64], local: &[f64], w0: f64) -> Vec<f64> {
    let w1 = 1.0 - w0;
    base.iter()
        .zip(local)
        .map(|(&a, &b)| (w0 * a + w1 * b).clamp(a.min(b), a.max(b)))
        .collect()
}

pub fn stack_predict(stacked: &StackedModel<'_>, rows: &Dataset) -> Result<Vec<f64>> {
    stacked.predict(rows)
}

/// `{0, step, 2 step, ..., 1}`; the last point is exactly 1.
pub fn weight_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid step {step} outside (0, 0.5]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() < 1e-9 {
        let n = n as usize;
        return Ok((0..=n).map(|i| i as f64 / n as f64).collect());
    }
    let mut g: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|w| *w < 1.0).collect();
    g.push(1.0);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub w0: f64,
    /// NaN when R² is undefined (constant predictions).
    pub r2: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScan {
    pub points: Vec<ScanPoint>,
    /// Highest R²; ties go to the smaller w0.
    pub best: ScanPoint,
}

pub fn weight_scan(base: &dyn Predictor, local: &dyn Predictor, test: &Dataset, grid_step: f64) -> Result<WeightScan> {
    weight_scan_with(base, local, test, grid_step, R2Kind::default(), Execution::default())
}

pub fn weight_scan_with(
    base: &dyn Predictor,
    local: &dyn Predictor,
    test: &Dataset,
    grid_step: f64,
    kind: R2Kind,
    exec: Execution,
) -> Result<WeightScan> {
    let grid = weight_grid(grid_step)?;
    let stacked = StackedModel::new(base, local, 0.0)?;
    let base_pred = stacked.base_predictions(test)?;
    let local_pred = local.predict(test)?;
    let y = test.labels();
    let points = exec.try_map(grid.len(), |i| {
        let w0 = grid[i];
        let pred = combine(&base_pred, &local_pred, w0);
        Ok::<_, Error>(ScanPoint {
            w0,
            r2: kind.compute(&y, &pred).unwrap_or(f64::NAN),
            mae: mae(&y, &pred)?,
        })
    });
    let points = points.map_err(|(_, e)| e)?;
    let best = argmax_r2(&points);
    Ok(WeightScan { points, best })
}

/// First point with the highest R² (NaN never wins unless all are NaN).
pub fn argmax_r2(points: &[ScanPoint]) -> ScanPoint {
    let mut best = points[0];
    for p in &points[1..] {
        if p.r2 > best.r2 || (best.r2.is_nan() && !p.r2.is_nan()) {
            best = *p;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub train_group: String,
    pub test_group: String,
    pub r2: Option<f64>,
    pub mae: Option<f64>,
    /// R² on the training group's own test set minus R² here.
    pub delta_r2: Option<f64>,
    pub error: Option<String>,
}

/// Evaluates `model` on every named test set. Failing cells carry an error
/// message instead of aborting the table.
pub fn cross_evaluate(model: &dyn Predictor, train_group: &str, test_sets: &[(&str, &Dataset)]) -> Vec<CrossCell> {
    cross_evaluate_with(model, train_group, test_sets, R2Kind::default())
}

pub fn cross_evaluate_with(
    model: &dyn Predictor,
    train_group: &str,
    test_sets: &[(&str, &Dataset)],
    kind: R2Kind,
) -> Vec<CrossCell> {
    let eval = |data: &Dataset| -> Result<(f64, f64)> {
        let rows = data.select(model.input_schema())?;
        let pred = model.predict(&rows)?;
        let y = rows.labels();
        Ok((kind.compute(&y, &pred)?, mae(&y, &pred)?))
    };
    let mut cells: Vec<CrossCell> = test_sets
        .iter()
        .map(|(name, data)| {
            let (r2, mae, error) = match eval(data) {
                Ok((r, m)) => (Some(r), Some(m), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            CrossCell {
                train_group: train_group.to_string(),
                test_group: name.to_string(),
                r2,
                mae,
                delta_r2: None,
                error,
            }
        })
        .collect();
    let own = cells.iter().find(|c| c.test_group == train_group).and_then(|c| c.r2);
    if let Some(own) = own {
        for c in &mut cells {
            c.delta_r2 = c.r2.map(|r| own - r);
        }
    }
    cells
}
