//! Training-time augmentation.
//!
//! All strategies operate on per-sample attribute representation matrices
//! (one row per attribute: the attention head's representative matrix, or a
//! column view of the toy scorer's 2-D input). The fictitious family also
//! synthesizes new class rows that extend the step's classifier; the plain
//! mixup/cutmix family keeps the classifier and mixes targets instead.

use serde::{Deserialize, Serialize};

use crate::data::ClassCatalog;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    FictitiousDropout,
    /// Masked copies keep their original label; the toy baseline.
    RegularDropout,
    ManifoldMixup,
    MixupAdd,
    MixupFictitious,
    FeaturesCutmix,
    FeaturesCutmixAdd,
    CutmixFictitious,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::FictitiousDropout => "fictitious_dropout",
            Strategy::RegularDropout => "regular_dropout",
            Strategy::ManifoldMixup => "manifold_mixup",
            Strategy::MixupAdd => "mixup_add",
            Strategy::MixupFictitious => "mixup_fictitious",
            Strategy::FeaturesCutmix => "features_cutmix",
            Strategy::FeaturesCutmixAdd => "features_cutmix_add",
            Strategy::CutmixFictitious => "cutmix_fictitious",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        Ok(match s {
            "none" => Strategy::None,
            "fictitious_dropout" => Strategy::FictitiousDropout,
            "regular_dropout" => Strategy::RegularDropout,
            "manifold_mixup" => Strategy::ManifoldMixup,
            "mixup_add" => Strategy::MixupAdd,
            "mixup_fictitious" => Strategy::MixupFictitious,
            "features_cutmix" => Strategy::FeaturesCutmix,
            "features_cutmix_add" => Strategy::FeaturesCutmixAdd,
            "cutmix_fictitious" => Strategy::CutmixFictitious,
            other => return Err(Error::config(format!("unknown strategy {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub strategy: Strategy,
    /// Generated samples per batch.
    pub m: usize,
    /// Probability of dropping an attribute. Mask entries are kept with
    /// probability 1-p.
    pub p: f64,
    /// Beta(alpha, alpha) parameter for mixing coefficients.
    pub mix_alpha: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            strategy: Strategy::None,
            m: 5,
            p: 0.5,
            mix_alpha: 1.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::config("drop probability p must lie strictly in (0, 1)"));
        }
        if self.mix_alpha <= 0.0 || !self.mix_alpha.is_finite() {
            return Err(Error::config("mix_alpha must be positive"));
        }
        Ok(())
    }
}

/// How a generated sample was derived from batch members; drives gradient
/// routing back into the source representations.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceBlend {
    /// Row-masked copy of one source.
    Masked { source: usize, mask: Vec<bool> },
    /// lambda·a + (1-lambda)·b.
    Mixed { a: usize, b: usize, lambda: f64 },
    /// Rows taken from `a` where the flag is set, from `b` elsewhere.
    Stitched { a: usize, b: usize, rows_from_a: Vec<bool> },
}

/// Generated samples that introduce new classes for one training step.
/// The step classifier becomes the seen rows plus `extra_class_rows`.
#[derive(Clone, Debug)]
pub struct FictitiousBatch {
    /// Generated representation matrices, n×f each.
    pub extra_reprs: Vec<Mat>,
    /// m×n fictitious class vectors, appended to the classifier.
    pub extra_class_rows: Mat,
    /// Labels into the extended classifier: N_s .. N_s+m-1.
    pub extra_labels: Vec<usize>,
    /// Primary source batch index per generated sample.
    pub source_indices: Vec<usize>,
    /// Attribute keep-masks; all-true for blend-based strategies.
    pub masks: Vec<Vec<bool>>,
    /// Soft target rows where a strategy mixes labels instead of classes.
    pub soft_targets: Option<Mat>,
    /// Gradient routing per generated sample.
    pub blends: Vec<SourceBlend>,
}

impl FictitiousBatch {
    pub fn len(&self) -> usize {
        self.extra_reprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extra_reprs.is_empty()
    }

    /// Mask consistency and label layout, as stated in the type contract:
    /// a dropped attribute zeroes both the representation row and the class
    /// vector entry, and extra labels are consecutive from `n_seen`.
    pub fn check_invariants(&self, n_seen: usize) -> Result<()> {
        for (i, mask) in self.masks.iter().enumerate() {
            for (j, &keep) in mask.iter().enumerate() {
                if !keep {
                    let row_zero = self.extra_reprs[i].row(j).iter().all(|&v| v == 0.0);
                    let attr_zero = self.extra_class_rows.get(i, j) == 0.0;
                    if !row_zero || !attr_zero {
                        return Err(Error::contract(format!(
                            "mask inconsistency in extra {i}, attribute {j}"
                        )));
                    }
                }
            }
        }
        for (k, &label) in self.extra_labels.iter().enumerate() {
            if label != n_seen + k {
                return Err(Error::contract("extra labels must be consecutive from N_s"));
            }
        }
        Ok(())
    }
}

/// Label-preserving augmentation output over an unchanged classifier.
#[derive(Clone, Debug)]
pub struct MixedBatch {
    pub reprs: Vec<Mat>,
    /// One target row per generated sample; every row sums to 1.
    pub targets: Mat,
    pub blends: Vec<SourceBlend>,
    /// True when the output replaces the batch instead of extending it.
    pub replaces_batch: bool,
}

impl MixedBatch {
    pub fn len(&self) -> usize {
        self.reprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reprs.is_empty()
    }
}

/// mask ⊙ class row.
pub fn masked_class_row(attrs: &[f64], mask: &[bool]) -> Vec<f64> {
    attrs
        .iter()
        .zip(mask)
        .map(|(&a, &keep)| if keep { a } else { 0.0 })
        .collect()
}

/// Zero the rows of a representation matrix where the mask is false.
pub fn masked_repr(repr: &Mat, mask: &[bool]) -> Mat {
    let mut out = repr.clone();
    for (j, &keep) in mask.iter().enumerate() {
        if !keep {
            out.row_mut(j).fill(0.0);
        }
    }
    out
}

/// lambda·a + (1-lambda)·b, elementwise over matching shapes.
pub fn mix_rows(a: &Mat, b: &Mat, lambda: f64) -> Mat {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut out = a.clone();
    for (o, (&x, &y)) in out.data_mut().iter_mut().zip(a.data().iter().zip(b.data())) {
        *o = lambda * x + (1.0 - lambda) * y;
    }
    out
}

/// lambda·a + (1-lambda)·b for vectors.
pub fn mix_vecs(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
        .collect()
}

/// Row j from `a` where the flag is set, from `b` elsewhere.
pub fn stitch_rows(a: &Mat, b: &Mat, rows_from_a: &[bool]) -> Mat {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    assert_eq!(a.rows(), rows_from_a.len());
    let mut out = b.clone();
    for (j, &from_a) in rows_from_a.iter().enumerate() {
        if from_a {
            out.row_mut(j).copy_from_slice(a.row(j));
        }
    }
    out
}

fn draw_keep_mask(n: usize, drop_p: f64, rng: &mut Rng) -> Vec<bool> {
    (0..n).map(|_| !rng.bernoulli(drop_p)).collect()
}

/// Dropout-generated fictitious classes: sample m batch members with
/// replacement, zero a random attribute subset in each copy, and register
/// the identically-masked class vector as a brand-new classifier row.
/// All-zero masks are permitted.
pub fn fictitious_dropout(
    batch_reprs: &[Mat],
    batch_labels: &[usize],
    catalog: &ClassCatalog,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<FictitiousBatch> {
    cfg.validate()?;
    if cfg.m > 0 && batch_reprs.is_empty() {
        return Err(Error::contract("cannot augment an empty batch"));
    }
    let n_attrs = catalog.n_attrs();
    let n_seen = catalog.seen_set().len();
    let mut extra_reprs = Vec::with_capacity(cfg.m);
    let mut class_rows = Vec::with_capacity(cfg.m);
    let mut source_indices = Vec::with_capacity(cfg.m);
    let mut masks = Vec::with_capacity(cfg.m);
    let mut blends = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let source = rng.below(batch_reprs.len());
        let mask = draw_keep_mask(n_attrs, cfg.p, rng);
        extra_reprs.push(masked_repr(&batch_reprs[source], &mask));
        class_rows.push(masked_class_row(
            catalog.attribute_row(batch_labels[source]),
            &mask,
        ));
        source_indices.push(source);
        blends.push(SourceBlend::Masked {
            source,
            mask: mask.clone(),
        });
        masks.push(mask);
    }
    Ok(FictitiousBatch {
        extra_reprs,
        extra_class_rows: if class_rows.is_empty() {
            Mat::zeros(0, n_attrs)
        } else {
            Mat::from_rows(&class_rows)
        },
        extra_labels: (n_seen..n_seen + cfg.m).collect(),
        source_indices,
        masks,
        soft_targets: None,
        blends,
    })
}

/// The toy baseline: masked copies appended to the batch but mapped back to
/// their source's label. Targets are one-hot over the given classifier width.
pub fn regular_dropout(
    batch_reprs: &[Mat],
    batch_active_labels: &[usize],
    active_width: usize,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    cfg.validate()?;
    if cfg.m > 0 && batch_reprs.is_empty() {
        return Err(Error::contract("cannot augment an empty batch"));
    }
    let n_attrs = batch_reprs.first().map_or(0, Mat::rows);
    let mut reprs = Vec::with_capacity(cfg.m);
    let mut targets = Mat::zeros(cfg.m, active_width);
    let mut blends = Vec::with_capacity(cfg.m);
    for k in 0..cfg.m {
        let source = rng.below(batch_reprs.len());
        let mask = draw_keep_mask(n_attrs, cfg.p, rng);
        reprs.push(masked_repr(&batch_reprs[source], &mask));
        targets.set(k, batch_active_labels[source], 1.0);
        blends.push(SourceBlend::Masked { source, mask });
    }
    Ok(MixedBatch {
        reprs,
        targets,
        blends,
        replaces_batch: false,
    })
}

/// Pair the first half of the batch with the second half and replace the
/// batch with the mixed half. An odd trailing sample passes through
/// unchanged; batches smaller than two pass through whole.
pub fn manifold_mixup(
    batch_reprs: &[Mat],
    one_hot_targets: &Mat,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    cfg.validate()?;
    let batch = batch_reprs.len();
    if batch < 2 {
        let mut blends = Vec::new();
        for i in 0..batch {
            blends.push(SourceBlend::Mixed {
                a: i,
                b: i,
                lambda: 1.0,
            });
        }
        return Ok(MixedBatch {
            reprs: batch_reprs.to_vec(),
            targets: one_hot_targets.clone(),
            blends,
            replaces_batch: true,
        });
    }
    let half = batch / 2;
    let mut reprs = Vec::with_capacity(half + batch % 2);
    let mut target_rows = Vec::with_capacity(half + batch % 2);
    let mut blends = Vec::with_capacity(half + batch % 2);
    for i in 0..half {
        let a = i;
        let b = half + i;
        let lambda = rng.beta(cfg.mix_alpha, cfg.mix_alpha);
        reprs.push(mix_rows(&batch_reprs[a], &batch_reprs[b], lambda));
        target_rows.push(mix_vecs(
            one_hot_targets.row(a),
            one_hot_targets.row(b),
            lambda,
        ));
        blends.push(SourceBlend::Mixed { a, b, lambda });
    }
    if batch % 2 == 1 {
        let last = batch - 1;
        reprs.push(batch_reprs[last].clone());
        target_rows.push(one_hot_targets.row(last).to_vec());
        blends.push(SourceBlend::Mixed {
            a: last,
            b: last,
            lambda: 1.0,
        });
    }
    Ok(MixedBatch {
        reprs,
        targets: Mat::from_rows(&target_rows),
        blends,
        replaces_batch: true,
    })
}

/// Mixup that samples m source pairs with replacement and appends the mixed
/// samples; the originals stay in the batch.
pub fn mixup_add(
    batch_reprs: &[Mat],
    one_hot_targets: &Mat,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    cfg.validate()?;
    if cfg.m > 0 && batch_reprs.is_empty() {
        return Err(Error::contract("cannot augment an empty batch"));
    }
    let mut reprs = Vec::with_capacity(cfg.m);
    let mut target_rows = Vec::with_capacity(cfg.m);
    let mut blends = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let a = rng.below(batch_reprs.len());
        let b = rng.below(batch_reprs.len());
        let lambda = rng.beta(cfg.mix_alpha, cfg.mix_alpha);
        reprs.push(mix_rows(&batch_reprs[a], &batch_reprs[b], lambda));
        target_rows.push(mix_vecs(
            one_hot_targets.row(a),
            one_hot_targets.row(b),
            lambda,
        ));
        blends.push(SourceBlend::Mixed { a, b, lambda });
    }
    Ok(MixedBatch {
        reprs,
        targets: if target_rows.is_empty() {
            Mat::zeros(0, one_hot_targets.cols())
        } else {
            Mat::from_rows(&target_rows)
        },
        blends,
        replaces_batch: false,
    })
}

/// Mixup whose generated samples point at brand-new classifier rows built as
/// the same convex combination of the sources' class vectors.
pub fn mixup_fictitious(
    batch_reprs: &[Mat],
    batch_labels: &[usize],
    catalog: &ClassCatalog,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<FictitiousBatch> {
    cfg.validate()?;
    if cfg.m > 0 && batch_reprs.is_empty() {
        return Err(Error::contract("cannot augment an empty batch"));
    }
    let n_attrs = catalog.n_attrs();
    let n_seen = catalog.seen_set().len();
    let mut extra_reprs = Vec::with_capacity(cfg.m);
    let mut class_rows = Vec::with_capacity(cfg.m);
    let mut source_indices = Vec::with_capacity(cfg.m);
    let mut blends = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let a = rng.below(batch_reprs.len());
        let b = rng.below(batch_reprs.len());
        let lambda = rng.beta(cfg.mix_alpha, cfg.mix_alpha);
        extra_reprs.push(mix_rows(&batch_reprs[a], &batch_reprs[b], lambda));
        class_rows.push(mix_vecs(
            catalog.attribute_row(batch_labels[a]),
            catalog.attribute_row(batch_labels[b]),
            lambda,
        ));
        source_indices.push(a);
        blends.push(SourceBlend::Mixed { a, b, lambda });
    }
    Ok(FictitiousBatch {
        extra_reprs,
        extra_class_rows: if class_rows.is_empty() {
            Mat::zeros(0, n_attrs)
        } else {
            Mat::from_rows(&class_rows)
        },
        extra_labels: (n_seen..n_seen + cfg.m).collect(),
        source_indices,
        masks: vec![vec![true; n_attrs]; cfg.m],
        soft_targets: None,
        blends,
    })
}

/// Attribute-wise cutmix: a random attribute subset comes from instance a,
/// the complement from instance b; the target mixes by subset size over the
/// attribute count. Replaces first/second-half pairs, or appends m samples
/// drawn with replacement when `add_to_batch` is set.
pub fn features_cutmix(
    batch_reprs: &[Mat],
    one_hot_targets: &Mat,
    cfg: &AugmentConfig,
    add_to_batch: bool,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    cfg.validate()?;
    let batch = batch_reprs.len();
    if add_to_batch && cfg.m > 0 && batch == 0 {
        return Err(Error::contract("cannot augment an empty batch"));
    }
    let n_attrs = batch_reprs.first().map_or(0, Mat::rows);
    let stitch = |a: usize,
                      b: usize,
                      rng: &mut Rng,
                      reprs: &mut Vec<Mat>,
                      target_rows: &mut Vec<Vec<f64>>,
                      blends: &mut Vec<SourceBlend>| {
        let rows_from_a: Vec<bool> = (0..n_attrs).map(|_| rng.bernoulli(0.5)).collect();
        let taken = rows_from_a.iter().filter(|&&t| t).count();
        let weight = taken as f64 / n_attrs as f64;
        reprs.push(stitch_rows(&batch_reprs[a], &batch_reprs[b], &rows_from_a));
        target_rows.push(mix_vecs(
            one_hot_targets.row(a),
            one_hot_targets.row(b),
            weight,
        ));
        blends.push(SourceBlend::Stitched { a, b, rows_from_a });
    };

    let mut reprs = Vec::new();
    let mut target_rows = Vec::new();
    let mut blends = Vec::new();
    if add_to_batch {
        for _ in 0..cfg.m {
            let a = rng.below(batch);
            let b = rng.below(batch);
            stitch(a, b, rng, &mut reprs, &mut target_rows, &mut blends);
        }
    } else {
        if batch < 2 {
            let mut pass_blends = Vec::new();
            for i in 0..batch {
                pass_blends.push(SourceBlend::Mixed {
                    a: i,
                    b: i,
                    lambda: 1.0,
                });
            }
            return Ok(MixedBatch {
                reprs: batch_reprs.to_vec(),
                targets: one_hot_targets.clone(),
                blends: pass_blends,
                replaces_batch: true,
            });
        }
        let half = batch / 2;
        for i in 0..half {
            stitch(i, half + i, rng, &mut reprs, &mut target_rows, &mut blends);
        }
        if batch % 2 == 1 {
            let last = batch - 1;
            reprs.push(batch_reprs[last].clone());
            target_rows.push(one_hot_targets.row(last).to_vec());
            blends.push(SourceBlend::Mixed {
                a: last,
                b: last,
                lambda: 1.0,
            });
        }
    }
    Ok(MixedBatch {
        reprs,
        targets: if target_rows.is_empty() {
            Mat::zeros(0, one_hot_targets.cols())
        } else {
            Mat::from_rows(&target_rows)
        },
        blends,
        replaces_batch: !add_to_batch,
    })
}

/// Cutmix whose generated samples point at brand-new classifier rows built
/// with the same subset weighting over the sources' class vectors.
pub fn cutmix_fictitious(
    batch_reprs: &[Mat],
    batch_labels: &[usize],
    catalog: &ClassCatalog,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<FictitiousBatch> {
    cfg.validate()?;
    if cfg.m > 0 && batch_reprs.is_empty() {
        return Err(Error::contract("cannot augment an empty batch"));
    }
    let n_attrs = catalog.n_attrs();
    let n_seen = catalog.seen_set().len();
    let mut extra_reprs = Vec::with_capacity(cfg.m);
    let mut class_rows = Vec::with_capacity(cfg.m);
    let mut source_indices = Vec::with_capacity(cfg.m);
    let mut blends = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let a = rng.below(batch_reprs.len());
        let b = rng.below(batch_reprs.len());
        let rows_from_a: Vec<bool> = (0..n_attrs).map(|_| rng.bernoulli(0.5)).collect();
        let taken = rows_from_a.iter().filter(|&&t| t).count();
        let weight = taken as f64 / n_attrs as f64;
        extra_reprs.push(stitch_rows(&batch_reprs[a], &batch_reprs[b], &rows_from_a));
        class_rows.push(mix_vecs(
            catalog.attribute_row(batch_labels[a]),
            catalog.attribute_row(batch_labels[b]),
            weight,
        ));
        source_indices.push(a);
        blends.push(SourceBlend::Stitched { a, b, rows_from_a });
    }
    Ok(FictitiousBatch {
        extra_reprs,
        extra_class_rows: if class_rows.is_empty() {
            Mat::zeros(0, n_attrs)
        } else {
            Mat::from_rows(&class_rows)
        },
        extra_labels: (n_seen..n_seen + cfg.m).collect(),
        source_indices,
        masks: vec![vec![true; n_attrs]; cfg.m],
        soft_targets: None,
        blends,
    })
}

/// The classifier for one fictitious step: the seen attribute rows followed
/// by the generated class rows, N_s+m rows total. The catalog itself is
/// never modified.
pub fn step_classifier(catalog: &ClassCatalog, fictitious: &FictitiousBatch) -> Mat {
    let seen = catalog.seen_classifier();
    let mut rows: Vec<Vec<f64>> = (0..seen.rows()).map(|r| seen.row(r).to_vec()).collect();
    for k in 0..fictitious.extra_class_rows.rows() {
        rows.push(fictitious.extra_class_rows.row(k).to_vec());
    }
    Mat::from_rows(&rows)
}

/// Dump masks for audit: `sample_id,mask_bits` with one row per generated
/// sample, bit 1 marking a kept attribute.
pub fn write_masks_csv(
    path: &std::path::Path,
    sample_ids: &[&str],
    masks: &[Vec<bool>],
) -> Result<()> {
    let mut out = String::from("sample_id,mask_bits\n");
    for (id, mask) in sample_ids.iter().zip(masks) {
        out.push_str(id);
        out.push(',');
        for &keep in mask {
            out.push(if keep { '1' } else { '0' });
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
