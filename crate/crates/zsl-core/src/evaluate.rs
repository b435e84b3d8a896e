//! Calibrated stacking, gamma selection and the zero-shot metrics.
//!
//! Scoring a sample set is embarrassingly parallel over read-only model
//! state; with the `parallel` feature the per-sample and per-gamma loops run
//! on rayon and results are merged in index order, so parallel and
//! sequential execution produce identical output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ClassCatalog, SampleSet};
use crate::error::{Error, Result};
use crate::exec::{map_collect, try_map_collect, ExecMode};
use crate::linalg::Mat;
use crate::model::Model;

/// Harmonic mean of the two per-class accuracies; zero when both vanish.
pub fn harmonic_mean(acc_u: f64, acc_s: f64) -> f64 {
    let sum = acc_u + acc_s;
    if sum > 0.0 {
        2.0 * acc_u * acc_s / sum
    } else {
        0.0
    }
}

/// Subtract the bias constant from every seen-class score.
pub fn calibrated_scores(scores: &[f64], seen_mask: &[bool], gamma: f64) -> Vec<f64> {
    scores
        .iter()
        .zip(seen_mask)
        .map(|(&s, &seen)| if seen { s - gamma } else { s })
        .collect()
}

/// Index of the maximum score; ties break to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Argmax over calibrated scores.
pub fn predict_calibrated(scores: &[f64], seen_mask: &[bool], gamma: f64) -> usize {
    argmax(&calibrated_scores(scores, seen_mask, gamma))
}

/// Mean over the classes in `class_subset` of that class's sample accuracy.
/// Samples labeled outside the subset are ignored. A subset class with no
/// samples is a contract error naming the class.
pub fn per_class_accuracy(
    predictions: &[usize],
    labels: &[usize],
    class_subset: &[usize],
) -> Result<f64> {
    if class_subset.is_empty() {
        return Err(Error::contract("per-class accuracy over an empty class subset"));
    }
    let mut total = 0.0;
    for &class in class_subset {
        let mut count = 0usize;
        let mut correct = 0usize;
        for (&pred, &label) in predictions.iter().zip(labels) {
            if label == class {
                count += 1;
                if pred == label {
                    correct += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::contract(format!(
                "class index {class} has no labeled samples"
            )));
        }
        total += correct as f64 / count as f64;
    }
    Ok(total / class_subset.len() as f64)
}

/// Per-class hit rates for reporting.
fn per_class_rates(
    predictions: &[usize],
    labels: &[usize],
    class_subset: &[usize],
    catalog: &ClassCatalog,
    out: &mut BTreeMap<String, f64>,
) {
    for &class in class_subset {
        let mut count = 0usize;
        let mut correct = 0usize;
        for (&pred, &label) in predictions.iter().zip(labels) {
            if label == class {
                count += 1;
                if pred == label {
                    correct += 1;
                }
            }
        }
        if count > 0 {
            out.insert(catalog.class_id(class).to_string(), correct as f64 / count as f64);
        }
    }
}

/// Evaluation metrics at one calibration constant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc_u: f64,
    pub acc_s: f64,
    pub hm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    pub per_class: BTreeMap<String, f64>,
    pub gamma_used: f64,
}

/// Score every sample of a set against the given classifier rows.
pub fn score_set(
    model: &Model,
    set: &SampleSet,
    classifiers: &Mat,
    mode: ExecMode,
) -> Result<Vec<Vec<f64>>> {
    let indices: Vec<usize> = (0..set.len()).collect();
    try_map_collect(mode, &indices, |&i| {
        let embedding = model.embed(set.features(i))?;
        crate::model::score_classes(&embedding, classifiers)
    })
}

fn check_model_and_catalog(model: &Model, catalog: &ClassCatalog) -> Result<()> {
    if model.embedding_dim() != catalog.n_attrs() {
        return Err(Error::contract(format!(
            "model embedding dim {} does not match catalog attribute dim {}",
            model.embedding_dim(),
            catalog.n_attrs()
        )));
    }
    Ok(())
}

/// Generalized evaluation: calibrated argmax over all classes, per-class
/// accuracy on each shard, harmonic mean of the two.
pub fn evaluate_gzsl(
    model: &Model,
    test_seen: &SampleSet,
    test_unseen: &SampleSet,
    catalog: &ClassCatalog,
    gamma: f64,
    mode: ExecMode,
) -> Result<MetricsReport> {
    check_model_and_catalog(model, catalog)?;
    let classifiers = catalog.attributes();
    let seen_scores = score_set(model, test_seen, classifiers, mode)?;
    let unseen_scores = score_set(model, test_unseen, classifiers, mode)?;
    let seen_mask = catalog.seen_mask();
    let seen_preds: Vec<usize> = seen_scores
        .iter()
        .map(|s| predict_calibrated(s, seen_mask, gamma))
        .collect();
    let unseen_preds: Vec<usize> = unseen_scores
        .iter()
        .map(|s| predict_calibrated(s, seen_mask, gamma))
        .collect();
    let acc_s = per_class_accuracy(&seen_preds, test_seen.labels(), catalog.seen_set())?;
    let acc_u = per_class_accuracy(&unseen_preds, test_unseen.labels(), catalog.unseen_set())?;
    let mut per_class = BTreeMap::new();
    per_class_rates(&seen_preds, test_seen.labels(), catalog.seen_set(), catalog, &mut per_class);
    per_class_rates(
        &unseen_preds,
        test_unseen.labels(),
        catalog.unseen_set(),
        catalog,
        &mut per_class,
    );
    Ok(MetricsReport {
        acc_u,
        acc_s,
        hm: harmonic_mean(acc_u, acc_s),
        t1: None,
        per_class,
        gamma_used: gamma,
    })
}

/// Classical evaluation: argmax restricted to the unseen classifiers,
/// per-class accuracy over unseen classes.
pub fn evaluate_czsl(
    model: &Model,
    test_unseen: &SampleSet,
    catalog: &ClassCatalog,
    mode: ExecMode,
) -> Result<f64> {
    check_model_and_catalog(model, catalog)?;
    let unseen_classifier = catalog.unseen_classifier();
    let scores = score_set(model, test_unseen, &unseen_classifier, mode)?;
    let predictions: Vec<usize> = scores
        .iter()
        .map(|s| catalog.unseen_set()[argmax(s)])
        .collect();
    per_class_accuracy(&predictions, test_unseen.labels(), catalog.unseen_set())
}

/// Gamma grid specification: evenly spaced values from 0 to the seen-score
/// spread of the validation set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { count: 201 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaSweepResult {
    pub grid: Vec<f64>,
    pub hm_curve: Vec<f64>,
    pub acc_u_curve: Vec<f64>,
    pub acc_s_curve: Vec<f64>,
    pub best_gamma: f64,
    pub best_hm: f64,
}

/// Sweep the calibration constant over a grid and keep the harmonic-mean
/// maximizer; ties resolve to the smallest gamma.
pub fn sweep_gamma(
    model: &Model,
    val_seen: &SampleSet,
    val_unseen: &SampleSet,
    catalog: &ClassCatalog,
    grid_spec: &GridSpec,
    mode: ExecMode,
) -> Result<GammaSweepResult> {
    check_model_and_catalog(model, catalog)?;
    if val_seen.is_empty() || val_unseen.is_empty() {
        return Err(Error::contract("gamma sweep needs nonempty validation shards"));
    }
    let classifiers = catalog.attributes();
    let seen_scores = score_set(model, val_seen, classifiers, mode)?;
    let unseen_scores = score_set(model, val_unseen, classifiers, mode)?;
    sweep_gamma_scored(
        &seen_scores,
        val_seen.labels(),
        &unseen_scores,
        val_unseen.labels(),
        catalog,
        grid_spec,
        mode,
    )
}

/// Sweep over precomputed score vectors. Exposed so training loops can score
/// a validation set once per epoch.
pub fn sweep_gamma_scored(
    seen_scores: &[Vec<f64>],
    seen_labels: &[usize],
    unseen_scores: &[Vec<f64>],
    unseen_labels: &[usize],
    catalog: &ClassCatalog,
    grid_spec: &GridSpec,
    mode: ExecMode,
) -> Result<GammaSweepResult> {
    let grid = gamma_grid(seen_scores, unseen_scores, catalog.seen_mask(), grid_spec);
    let seen_mask = catalog.seen_mask();
    let points = map_collect(mode, &grid, |&gamma| {
        let seen_preds: Vec<usize> = seen_scores
            .iter()
            .map(|s| predict_calibrated(s, seen_mask, gamma))
            .collect();
        let unseen_preds: Vec<usize> = unseen_scores
            .iter()
            .map(|s| predict_calibrated(s, seen_mask, gamma))
            .collect();
        let acc_s = per_class_accuracy(&seen_preds, seen_labels, catalog.seen_set());
        let acc_u = per_class_accuracy(&unseen_preds, unseen_labels, catalog.unseen_set());
        match (acc_u, acc_s) {
            (Ok(u), Ok(s)) => Ok((u, s, harmonic_mean(u, s))),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    });
    let mut hm_curve = Vec::with_capacity(grid.len());
    let mut acc_u_curve = Vec::with_capacity(grid.len());
    let mut acc_s_curve = Vec::with_capacity(grid.len());
    for point in points {
        let (u, s, hm) = point?;
        acc_u_curve.push(u);
        acc_s_curve.push(s);
        hm_curve.push(hm);
    }
    let mut best = 0;
    for (i, &hm) in hm_curve.iter().enumerate() {
        if hm > hm_curve[best] {
            best = i;
        }
    }
    Ok(GammaSweepResult {
        best_gamma: grid[best],
        best_hm: hm_curve[best],
        grid,
        hm_curve,
        acc_u_curve,
        acc_s_curve,
    })
}

/// The grid spans [0, max-min of seen-class scores over all validation
/// samples], always includes 0, and is evenly spaced.
fn gamma_grid(
    seen_scores: &[Vec<f64>],
    unseen_scores: &[Vec<f64>],
    seen_mask: &[bool],
    spec: &GridSpec,
) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for scores in seen_scores.iter().chain(unseen_scores) {
        for (&s, &seen) in scores.iter().zip(seen_mask) {
            if seen {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
    }
    let spread = hi - lo;
    if spread <= 0.0 || !spread.is_finite() || spec.count < 2 {
        return vec![0.0];
    }
    (0..spec.count)
        .map(|i| spread * i as f64 / (spec.count - 1) as f64)
        .collect()
}

/// Write the sweep curve as `gamma,hm,acc_u,acc_s`.
pub fn write_sweep_csv(path: &Path, sweep: &GammaSweepResult) -> Result<()> {
    let mut out = String::from("gamma,hm,acc_u,acc_s\n");
    for i in 0..sweep.grid.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            sweep.grid[i], sweep.hm_curve[i], sweep.acc_u_curve[i], sweep.acc_s_curve[i]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
