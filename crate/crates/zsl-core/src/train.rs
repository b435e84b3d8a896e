//! Batched cross-entropy training with pluggable augmentation, the
//! two-phase freeze/unfreeze schedule and per-epoch calibration telemetry.
//!
//! Parameter updates are sequential by contract, so a fixed (seed, config,
//! data) triple reproduces final parameters bit for bit. Validation sweeps
//! between epochs may run data-parallel; they never touch the model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{
    cutmix_fictitious, features_cutmix, fictitious_dropout, manifold_mixup, mixup_add,
    mixup_fictitious, regular_dropout, step_classifier, AugmentConfig, SourceBlend, Strategy,
};
use crate::data::{ClassCatalog, SampleSet};
use crate::error::{Error, Result};
use crate::evaluate::{sweep_gamma, GridSpec};
use crate::exec::ExecMode;
use crate::linalg::Mat;
use crate::model::{
    attention_backward, attention_forward, cross_entropy, embed_backward, embed_forward,
    embedding_grad, score_classes, shallow_backward, shallow_forward_trace, HeadParams, Model,
    ParamBlocks, ShallowParams, Target,
};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs_frozen: usize,
    pub epochs_finetune: usize,
    pub lr_frozen: f64,
    pub lr_finetune: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_frozen: 30,
            epochs_finetune: 50,
            lr_frozen: 1e-3,
            lr_finetune: 1e-4,
            batch_size: 50,
            optimizer: Optimizer::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_frozen + self.epochs_finetune == 0 {
            return Err(Error::config("training needs at least one epoch"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.lr_frozen <= 0.0
            || self.lr_finetune <= 0.0
            || !self.lr_frozen.is_finite()
            || !self.lr_finetune.is_finite()
        {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.augment.strategy != Strategy::None {
            self.augment.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Frozen,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Frozen => "frozen",
            Phase::Finetune => "finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Phase> {
        match s {
            "frozen" => Ok(Phase::Frozen),
            "finetune" => Ok(Phase::Finetune),
            other => Err(Error::config(format!("unknown phase {other:?}"))),
        }
    }
}

/// One epoch of the forgetting curve.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc_u: f64,
    pub val_acc_s: f64,
    pub val_hm: f64,
    pub best_gamma: f64,
    pub phase: Phase,
}

/// Which parameter blocks a phase updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateScope {
    /// Head blocks only; the feature stage stays frozen.
    HeadOnly,
    All,
}

fn scope_mask(model: &Model, scope: UpdateScope) -> [bool; 4] {
    match (model, scope) {
        // The attention head sits on precomputed features; there is no
        // trainable feature stage to freeze.
        (Model::Head(_), _) => [true; 4],
        (Model::Shallow(_), UpdateScope::All) => [true; 4],
        // Shallow blocks are [w1, b1, w2, b2]; the trunk is (w1, b1).
        (Model::Shallow(_), UpdateScope::HeadOnly) => [false, false, true, true],
    }
}

struct OptState {
    t: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptState {
    fn new<P: ParamBlocks>(params: &P) -> Self {
        let sizes: Vec<usize> = (0..params.n_blocks())
            .map(|b| params.block(b).data().len())
            .collect();
        OptState {
            t: 0,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

fn apply_update<P: ParamBlocks>(
    params: &mut P,
    grads: &P,
    lr: f64,
    optimizer: &Optimizer,
    state: &mut OptState,
    include: &[bool; 4],
) {
    match *optimizer {
        Optimizer::Sgd => {
            for (b, &included) in include.iter().enumerate() {
                if !included {
                    continue;
                }
                let g = grads.block(b).data();
                for (p, &gv) in params.block_mut(b).data_mut().iter_mut().zip(g) {
                    *p -= lr * gv;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let bias1 = 1.0 - beta1.powi(state.t as i32);
            let bias2 = 1.0 - beta2.powi(state.t as i32);
            for (b, &included) in include.iter().enumerate() {
                if !included {
                    continue;
                }
                let g = grads.block(b).data();
                let m = &mut state.first_moment[b];
                let v = &mut state.second_moment[b];
                let p = params.block_mut(b).data_mut();
                for i in 0..g.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

enum GenTarget {
    Hard(usize),
    Soft(Vec<f64>),
}

struct GenItem {
    repr: Mat,
    target: GenTarget,
    blend: SourceBlend,
}

/// The step's classifier, targets and generated samples for one batch under
/// one augmentation strategy.
struct StepPlan {
    classifier: Mat,
    /// Real samples keep their own loss term; false for replace-mode mixing.
    real_in_loss: bool,
    real_targets: Vec<usize>,
    generated: Vec<GenItem>,
}

fn one_hot_targets(active_labels: &[usize], width: usize) -> Mat {
    let mut t = Mat::zeros(active_labels.len(), width);
    for (r, &label) in active_labels.iter().enumerate() {
        t.set(r, label, 1.0);
    }
    t
}

fn build_step_plan(
    reprs: &[Mat],
    catalog_labels: &[usize],
    catalog: &ClassCatalog,
    aug: &AugmentConfig,
    rng: &mut Rng,
) -> Result<StepPlan> {
    let n_seen = catalog.seen_set().len();
    let real_targets: Vec<usize> = catalog_labels
        .iter()
        .map(|&label| {
            catalog.seen_position(label).ok_or_else(|| {
                Error::contract(format!(
                    "training label {} is not a seen class",
                    catalog.class_id(label)
                ))
            })
        })
        .collect::<Result<_>>()?;
    let seen_classifier = catalog.seen_classifier();

    let plan = match aug.strategy {
        Strategy::None => StepPlan {
            classifier: seen_classifier,
            real_in_loss: true,
            real_targets,
            generated: Vec::new(),
        },
        Strategy::FictitiousDropout => {
            let fict = fictitious_dropout(reprs, catalog_labels, catalog, aug, rng)?;
            let classifier = step_classifier(catalog, &fict);
            debug_assert_eq!(classifier.rows(), n_seen + fict.len());
            let generated = fict
                .extra_reprs
                .into_iter()
                .zip(fict.extra_labels)
                .zip(fict.blends)
                .map(|((repr, label), blend)| GenItem {
                    repr,
                    target: GenTarget::Hard(label),
                    blend,
                })
                .collect();
            StepPlan {
                classifier,
                real_in_loss: true,
                real_targets,
                generated,
            }
        }
        Strategy::RegularDropout => {
            let mixed = regular_dropout(reprs, &real_targets, n_seen, aug, rng)?;
            let generated = pack_mixed(mixed.reprs, &mixed.targets, mixed.blends);
            StepPlan {
                classifier: seen_classifier,
                real_in_loss: true,
                real_targets,
                generated,
            }
        }
        Strategy::ManifoldMixup | Strategy::FeaturesCutmix => {
            let one_hot = one_hot_targets(&real_targets, n_seen);
            let mixed = if aug.strategy == Strategy::ManifoldMixup {
                manifold_mixup(reprs, &one_hot, aug, rng)?
            } else {
                features_cutmix(reprs, &one_hot, aug, false, rng)?
            };
            let generated = pack_mixed(mixed.reprs, &mixed.targets, mixed.blends);
            StepPlan {
                classifier: seen_classifier,
                real_in_loss: false,
                real_targets,
                generated,
            }
        }
        Strategy::MixupAdd | Strategy::FeaturesCutmixAdd => {
            let one_hot = one_hot_targets(&real_targets, n_seen);
            let mixed = if aug.strategy == Strategy::MixupAdd {
                mixup_add(reprs, &one_hot, aug, rng)?
            } else {
                features_cutmix(reprs, &one_hot, aug, true, rng)?
            };
            let generated = pack_mixed(mixed.reprs, &mixed.targets, mixed.blends);
            StepPlan {
                classifier: seen_classifier,
                real_in_loss: true,
                real_targets,
                generated,
            }
        }
        Strategy::MixupFictitious | Strategy::CutmixFictitious => {
            let fict = if aug.strategy == Strategy::MixupFictitious {
                mixup_fictitious(reprs, catalog_labels, catalog, aug, rng)?
            } else {
                cutmix_fictitious(reprs, catalog_labels, catalog, aug, rng)?
            };
            let classifier = step_classifier(catalog, &fict);
            debug_assert_eq!(classifier.rows(), n_seen + fict.len());
            let generated = fict
                .extra_reprs
                .into_iter()
                .zip(fict.extra_labels)
                .zip(fict.blends)
                .map(|((repr, label), blend)| GenItem {
                    repr,
                    target: GenTarget::Hard(label),
                    blend,
                })
                .collect();
            StepPlan {
                classifier,
                real_in_loss: true,
                real_targets,
                generated,
            }
        }
    };
    Ok(plan)
}

fn pack_mixed(reprs: Vec<Mat>, targets: &Mat, blends: Vec<SourceBlend>) -> Vec<GenItem> {
    reprs
        .into_iter()
        .enumerate()
        .zip(blends)
        .map(|((k, repr), blend)| GenItem {
            repr,
            target: GenTarget::Soft(targets.row(k).to_vec()),
            blend,
        })
        .collect()
}

/// Route a generated sample's representation gradient back into the source
/// representations it was built from.
fn route_blend_grad(d_repr: &Mat, blend: &SourceBlend, d_sources: &mut [Mat]) {
    match blend {
        SourceBlend::Masked { source, mask } => {
            for (j, &keep) in mask.iter().enumerate() {
                if keep {
                    let dst = d_sources[*source].row_mut(j);
                    for (d, &g) in dst.iter_mut().zip(d_repr.row(j)) {
                        *d += g;
                    }
                }
            }
        }
        SourceBlend::Mixed { a, b, lambda } => {
            d_sources[*a].add_scaled(d_repr, *lambda);
            d_sources[*b].add_scaled(d_repr, 1.0 - lambda);
        }
        SourceBlend::Stitched { a, b, rows_from_a } => {
            for (j, &from_a) in rows_from_a.iter().enumerate() {
                let src = if from_a { *a } else { *b };
                let dst = d_sources[src].row_mut(j);
                for (d, &g) in dst.iter_mut().zip(d_repr.row(j)) {
                    *d += g;
                }
            }
        }
    }
}

/// One augmented batch through the attention head: mean loss plus gradients.
/// Generated samples backpropagate through their sources' attention blocks.
pub(crate) fn head_batch_backward(
    params: &HeadParams,
    features: &[&Mat],
    catalog_labels: &[usize],
    catalog: &ClassCatalog,
    aug: &AugmentConfig,
    rng: &mut Rng,
) -> Result<(f64, HeadParams)> {
    let mut attentions = Vec::with_capacity(features.len());
    let mut reprs = Vec::with_capacity(features.len());
    for feat in features {
        let (attention, repr) = attention_forward(feat, params)?;
        attentions.push(attention);
        reprs.push(repr);
    }
    let plan = build_step_plan(&reprs, catalog_labels, catalog, aug, rng)?;

    let mut grads = HeadParams::zeros(params.dims());
    let mut d_reprs: Vec<Mat> = reprs
        .iter()
        .map(|r| Mat::zeros(r.rows(), r.cols()))
        .collect();
    let mut total_loss = 0.0;
    let mut items = 0usize;

    let consume = |repr: &Mat,
                       target: Target,
                       grads: &mut HeadParams,
                       total_loss: &mut f64|
     -> Result<Mat> {
        let (attr_scores, attr_gates, embedding) = embed_forward(repr, params);
        let scores = score_classes(&embedding, &plan.classifier)?;
        let (loss, d_scores) = cross_entropy(&scores, target)?;
        *total_loss += loss;
        let d_embedding = embedding_grad(&plan.classifier, &d_scores);
        Ok(embed_backward(
            repr,
            &attr_scores,
            &attr_gates,
            &d_embedding,
            params,
            grads,
        ))
    };

    if plan.real_in_loss {
        for (i, repr) in reprs.iter().enumerate() {
            let d_repr = consume(
                repr,
                Target::Hard(plan.real_targets[i]),
                &mut grads,
                &mut total_loss,
            )?;
            d_reprs[i].add_scaled(&d_repr, 1.0);
            items += 1;
        }
    }
    for gen in &plan.generated {
        let target = match &gen.target {
            GenTarget::Hard(label) => Target::Hard(*label),
            GenTarget::Soft(row) => Target::Soft(row),
        };
        let d_repr = consume(&gen.repr, target, &mut grads, &mut total_loss)?;
        route_blend_grad(&d_repr, &gen.blend, &mut d_reprs);
        items += 1;
    }

    for (i, feat) in features.iter().enumerate() {
        attention_backward(feat, &attentions[i], &d_reprs[i], params, &mut grads);
    }

    let inv = 1.0 / items as f64;
    for b in 0..grads.n_blocks() {
        grads.block_mut(b).scale(inv);
    }
    Ok((total_loss * inv, grads))
}

/// One augmented batch through the shallow scorer. Augmentation operates on
/// the 2-D inputs viewed as one-column attribute matrices; generated inputs
/// are leaves, so no gradient routing across samples is needed.
pub(crate) fn shallow_batch_backward(
    params: &ShallowParams,
    features: &[&Mat],
    catalog_labels: &[usize],
    catalog: &ClassCatalog,
    aug: &AugmentConfig,
    rng: &mut Rng,
) -> Result<(f64, ShallowParams)> {
    let reprs: Vec<Mat> = features.iter().map(|f| f.transpose()).collect();
    let plan = build_step_plan(&reprs, catalog_labels, catalog, aug, rng)?;

    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;
    let mut items = 0usize;

    let consume = |input: &[f64],
                       target: Target,
                       grads: &mut ShallowParams,
                       total_loss: &mut f64|
     -> Result<()> {
        let trace = shallow_forward_trace(input, params, &plan.classifier)?;
        let (loss, d_scores) = cross_entropy(&trace.scores, target)?;
        *total_loss += loss;
        let d_embedding = embedding_grad(&plan.classifier, &d_scores);
        shallow_backward(input, &trace, &d_embedding, params, grads);
        Ok(())
    };

    if plan.real_in_loss {
        for (i, feat) in features.iter().enumerate() {
            consume(
                feat.row(0),
                Target::Hard(plan.real_targets[i]),
                &mut grads,
                &mut total_loss,
            )?;
            items += 1;
        }
    }
    for gen in &plan.generated {
        let target = match &gen.target {
            GenTarget::Hard(label) => Target::Hard(*label),
            GenTarget::Soft(row) => Target::Soft(row),
        };
        consume(gen.repr.data(), target, &mut grads, &mut total_loss)?;
        items += 1;
    }

    let inv = 1.0 / items as f64;
    for b in 0..grads.n_blocks() {
        grads.block_mut(b).scale(inv);
    }
    Ok((total_loss * inv, grads))
}

/// Owns a model plus optimizer and randomness state across epochs.
pub struct Trainer {
    pub model: Model,
    cfg: TrainConfig,
    opt_state: OptState,
    shuffle_rng: Rng,
    augment_rng: Rng,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt_state = match &model {
            Model::Head(p) => OptState::new(p),
            Model::Shallow(p) => OptState::new(p),
        };
        let shuffle_rng = Rng::new(cfg.seed);
        let augment_rng = Rng::new(cfg.augment.seed);
        Ok(Trainer {
            model,
            cfg,
            opt_state,
            shuffle_rng,
            augment_rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Clear optimizer moments, e.g. at the phase switch.
    pub fn reset_optimizer(&mut self) {
        self.opt_state = match &self.model {
            Model::Head(p) => OptState::new(p),
            Model::Shallow(p) => OptState::new(p),
        };
    }

    /// One pass over shuffled mini-batches: forward through the model, apply
    /// the augmentation strategy, update parameters in scope. Returns the
    /// mean batch loss. A non-finite loss aborts with a diagnostic.
    pub fn train_epoch(
        &mut self,
        trainset: &SampleSet,
        catalog: &ClassCatalog,
        scope: UpdateScope,
        lr: f64,
    ) -> Result<f64> {
        if trainset.is_empty() {
            return Err(Error::contract("cannot train on an empty sample set"));
        }
        let mut order: Vec<usize> = (0..trainset.len()).collect();
        self.shuffle_rng.shuffle(&mut order);
        let include = scope_mask(&self.model, scope);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.cfg.batch_size) {
            let features: Vec<&Mat> = chunk.iter().map(|&i| trainset.features(i)).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| trainset.label(i)).collect();
            let loss = match &mut self.model {
                Model::Head(params) => {
                    let (loss, grads) = head_batch_backward(
                        params,
                        &features,
                        &labels,
                        catalog,
                        &self.cfg.augment,
                        &mut self.augment_rng,
                    )?;
                    apply_update(params, &grads, lr, &self.cfg.optimizer, &mut self.opt_state, &include);
                    loss
                }
                Model::Shallow(params) => {
                    let (loss, grads) = shallow_batch_backward(
                        params,
                        &features,
                        &labels,
                        catalog,
                        &self.cfg.augment,
                        &mut self.augment_rng,
                    )?;
                    apply_update(params, &grads, lr, &self.cfg.optimizer, &mut self.opt_state, &include);
                    loss
                }
            };
            if !loss.is_finite() {
                return Err(Error::numeric(
                    "training loss is not finite; try a lower learning rate",
                ));
            }
            loss_sum += loss;
            batches += 1;
        }
        Ok(loss_sum / batches as f64)
    }
}

/// Training inputs: one train shard plus the validation shards the per-epoch
/// gamma sweep runs on.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: SampleSet,
    pub val_seen: SampleSet,
    pub val_unseen: SampleSet,
}

/// Two-phase schedule: `epochs_frozen` epochs updating the head only, then
/// `epochs_finetune` epochs updating everything at the fine-tune rate.
/// After every epoch the calibration constant is re-selected on validation
/// and recorded; the record stream is the forgetting curve.
pub fn two_phase_train(
    model: Model,
    data: &TrainData,
    catalog: &ClassCatalog,
    cfg: &TrainConfig,
    grid: &GridSpec,
    mode: ExecMode,
) -> Result<(Model, Vec<EpochRecord>)> {
    let total = cfg.epochs_frozen + cfg.epochs_finetune;
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let mut records = Vec::with_capacity(total);
    for epoch in 1..=total {
        let phase = if epoch <= cfg.epochs_frozen {
            Phase::Frozen
        } else {
            Phase::Finetune
        };
        if epoch == cfg.epochs_frozen + 1 {
            // fresh moments for the newly unfrozen blocks
            trainer.reset_optimizer();
        }
        let (scope, lr) = match phase {
            Phase::Frozen => (UpdateScope::HeadOnly, cfg.lr_frozen),
            Phase::Finetune => (UpdateScope::All, cfg.lr_finetune),
        };
        let train_loss = trainer.train_epoch(&data.train, catalog, scope, lr)?;
        let sweep = sweep_gamma(
            &trainer.model,
            &data.val_seen,
            &data.val_unseen,
            catalog,
            grid,
            mode,
        )?;
        let best = sweep
            .grid
            .iter()
            .position(|&g| g == sweep.best_gamma)
            .unwrap_or(0);
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_acc_u: sweep.acc_u_curve[best],
            val_acc_s: sweep.acc_s_curve[best],
            val_hm: sweep.best_hm,
            best_gamma: sweep.best_gamma,
            phase,
        });
    }
    Ok((trainer.model, records))
}

/// Write the per-epoch telemetry as CSV, one row per epoch.
pub fn write_curves_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_acc_u,val_acc_s,val_hm,best_gamma,phase\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            r.train_loss,
            r.val_acc_u,
            r.val_acc_s,
            r.val_hm,
            r.best_gamma,
            r.phase.as_str()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a telemetry CSV written by [`write_curves_csv`].
pub fn read_curves_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,train_loss,val_acc_u,val_acc_s,val_hm,best_gamma,phase")) => {}
        _ => return Err(Error::format_at(path, 1, "unexpected curves header")),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(Error::format_at(path, idx + 1, "expected 7 cells"));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format_at(path, idx + 1, format!("bad number {s:?}")))
        };
        records.push(EpochRecord {
            epoch: cells[0]
                .parse()
                .map_err(|_| Error::format_at(path, idx + 1, "bad epoch"))?,
            train_loss: parse(cells[1])?,
            val_acc_u: parse(cells[2])?,
            val_acc_s: parse(cells[3])?,
            val_hm: parse(cells[4])?,
            best_gamma: parse(cells[5])?,
            phase: Phase::parse(cells[6])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy, Role, ToyConfig};
    use crate::model::gradcheck::{check_gradients, GradCheckConfig};
    use crate::model::HeadDims;

    fn toy_data(samples: usize) -> crate::data::ToyData {
        generate_toy(&ToyConfig {
            samples_per_class: samples,
            ..ToyConfig::default()
        })
        .unwrap()
    }

    fn shallow_model(seed: u64) -> Model {
        Model::Shallow(ShallowParams::init(2, 32, 2, seed).unwrap())
    }

    fn base_cfg() -> TrainConfig {
        TrainConfig {
            epochs_frozen: 0,
            epochs_finetune: 1,
            lr_frozen: 1e-3,
            lr_finetune: 1e-3,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let data = toy_data(20);
        let mut trainer = Trainer::new(shallow_model(1), base_cfg()).unwrap();
        let before = match &trainer.model {
            Model::Shallow(p) => p.clone(),
            _ => unreachable!(),
        };
        let loss = trainer
            .train_epoch(&data.train, &data.catalog, UpdateScope::All, 0.0)
            .unwrap();
        let after = match &trainer.model {
            Model::Shallow(p) => p.clone(),
            _ => unreachable!(),
        };
        assert_eq!(before, after);
        assert!(loss.is_finite());
    }

    #[test]
    fn equiprobable_init_starts_at_ln_k() {
        // All-zero parameters score every class identically.
        let data = toy_data(20);
        let params = ShallowParams {
            w1: Mat::zeros(2, 8),
            b1: Mat::zeros(1, 8),
            w2: Mat::zeros(8, 2),
            b2: Mat::zeros(1, 2),
        };
        let mut trainer = Trainer::new(Model::Shallow(params), base_cfg()).unwrap();
        let loss = trainer
            .train_epoch(&data.train, &data.catalog, UpdateScope::All, 0.0)
            .unwrap();
        assert_eq!(loss, 2.0f64.ln());
    }

    #[test]
    fn single_sample_is_memorized() {
        let data = toy_data(5);
        let features = vec![data.train.features(0).clone()];
        let labels = vec![data.train.label(0)];
        let single = SampleSet::new(
            vec!["only".into()],
            features,
            labels,
            Role::Train,
            &data.catalog,
        )
        .unwrap();
        let dims = HeadDims {
            n_attrs: 2,
            feat_dim: 2,
            embed_dim: 8,
        };
        let mut cfg = base_cfg();
        cfg.batch_size = 1;
        let mut trainer = Trainer::new(Model::Head(HeadParams::init(dims, 3).unwrap()), cfg).unwrap();
        let mut loss = f64::INFINITY;
        for _ in 0..200 {
            loss = trainer
                .train_epoch(&single, &data.catalog, UpdateScope::All, 0.05)
                .unwrap();
        }
        assert!(loss < 0.01, "loss {loss}");
    }

    #[test]
    fn small_sgd_step_never_increases_batch_loss() {
        let data = toy_data(30);
        let dims = HeadDims {
            n_attrs: 2,
            feat_dim: 2,
            embed_dim: 4,
        };
        let mut rng = Rng::new(5);
        for trial in 0..10 {
            let params = HeadParams::init(dims, trial).unwrap();
            let idx: Vec<usize> = (0..8).map(|_| rng.below(data.train.len())).collect();
            let features: Vec<Mat> = idx.iter().map(|&i| data.train.features(i).clone()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| data.train.label(i)).collect();
            let classifiers = data.catalog.seen_classifier();
            let active: Vec<usize> = labels
                .iter()
                .map(|&l| data.catalog.seen_position(l).unwrap())
                .collect();
            let (loss, grads) =
                crate::model::forward_backward(&features, &active, &classifiers, &params).unwrap();
            let mut stepped = params.clone();
            for b in 0..stepped.n_blocks() {
                let g = grads.block(b).data().to_vec();
                for (p, gv) in stepped.block_mut(b).data_mut().iter_mut().zip(g) {
                    *p -= 1e-6 * gv;
                }
            }
            let loss_after =
                crate::model::batch_loss_head(&features, &active, &classifiers, &stepped).unwrap();
            assert!(
                loss_after <= loss + 1e-12,
                "trial {trial}: {loss} -> {loss_after}"
            );
        }
    }

    #[test]
    fn fictitious_training_never_touches_the_catalog() {
        let data = toy_data(20);
        let attributes_before = data.catalog.attributes().clone();
        let mut cfg = base_cfg();
        cfg.augment.strategy = Strategy::FictitiousDropout;
        cfg.augment.m = 5;
        let mut trainer = Trainer::new(shallow_model(2), cfg).unwrap();
        for _ in 0..3 {
            trainer
                .train_epoch(&data.train, &data.catalog, UpdateScope::All, 1e-3)
                .unwrap();
        }
        assert_eq!(data.catalog.attributes().data(), attributes_before.data());
    }

    #[test]
    fn augmented_head_gradients_match_finite_differences() {
        // Replaying the augmentation rng per loss evaluation freezes the
        // masks, sources and mixing draws, so the whole augmented step is a
        // deterministic function of the parameters.
        let data = toy_data(6);
        let dims = HeadDims {
            n_attrs: 2,
            feat_dim: 2,
            embed_dim: 3,
        };
        // odd batch size also exercises the replace-mode passthrough
        let features: Vec<&Mat> = (0..7).map(|i| data.train.features(i)).collect();
        let labels: Vec<usize> = (0..7).map(|i| data.train.label(i)).collect();
        for strategy in [
            Strategy::FictitiousDropout,
            Strategy::RegularDropout,
            Strategy::ManifoldMixup,
            Strategy::MixupAdd,
            Strategy::MixupFictitious,
            Strategy::FeaturesCutmix,
            Strategy::FeaturesCutmixAdd,
            Strategy::CutmixFictitious,
        ] {
            let aug = AugmentConfig {
                strategy,
                m: 4,
                p: 0.5,
                mix_alpha: 1.0,
                seed: 0,
            };
            let params = HeadParams::init(dims, 17).unwrap();
            let (_, grads) = head_batch_backward(
                &params,
                &features,
                &labels,
                &data.catalog,
                &aug,
                &mut Rng::new(23),
            )
            .unwrap();
            let report = check_gradients(
                &params,
                &grads,
                |p| {
                    head_batch_backward(p, &features, &labels, &data.catalog, &aug, &mut Rng::new(23))
                        .map(|(loss, _)| loss)
                },
                &GradCheckConfig::default(),
            )
            .unwrap();
            assert!(
                report.passed(),
                "{:?}: max rel error {}",
                strategy,
                report.max_rel_error()
            );
        }
    }

    #[test]
    fn multi_region_augmented_gradients_match_finite_differences() {
        // Exercises the gradient routing from generated samples back through
        // their sources' attention softmax when R > 1.
        let mut rng = Rng::new(31);
        let n_classes = 4;
        let n_attrs = 3;
        let class_ids: Vec<String> = (0..n_classes).map(|k| format!("c{k}")).collect();
        let attributes = Mat::from_fn(n_classes, n_attrs, |_, _| rng.normal());
        let catalog = crate::data::ClassCatalog::new(
            class_ids,
            attributes,
            vec![0, 1, 2],
            vec![3],
            None,
        )
        .unwrap();
        let regions = 3;
        let feat_dim = 2;
        let features: Vec<Mat> = (0..5)
            .map(|_| Mat::from_fn(regions, feat_dim, |_, _| rng.normal()))
            .collect();
        let feature_refs: Vec<&Mat> = features.iter().collect();
        let labels = vec![0, 1, 2, 0, 1];
        let dims = HeadDims {
            n_attrs,
            feat_dim,
            embed_dim: 2,
        };
        for strategy in [
            Strategy::FictitiousDropout,
            Strategy::ManifoldMixup,
            Strategy::CutmixFictitious,
        ] {
            let aug = AugmentConfig {
                strategy,
                m: 3,
                p: 0.4,
                mix_alpha: 1.0,
                seed: 0,
            };
            let params = HeadParams::init(dims, 77).unwrap();
            let (_, grads) = head_batch_backward(
                &params,
                &feature_refs,
                &labels,
                &catalog,
                &aug,
                &mut Rng::new(13),
            )
            .unwrap();
            let report = check_gradients(
                &params,
                &grads,
                |p| {
                    head_batch_backward(p, &feature_refs, &labels, &catalog, &aug, &mut Rng::new(13))
                        .map(|(loss, _)| loss)
                },
                &GradCheckConfig::default(),
            )
            .unwrap();
            assert!(
                report.passed(),
                "{:?}: max rel error {}",
                strategy,
                report.max_rel_error()
            );
        }
    }

    #[test]
    fn augmented_shallow_gradients_match_finite_differences() {
        let data = toy_data(6);
        let features: Vec<&Mat> = (0..6).map(|i| data.train.features(i)).collect();
        let labels: Vec<usize> = (0..6).map(|i| data.train.label(i)).collect();
        for strategy in [Strategy::FictitiousDropout, Strategy::RegularDropout] {
            let aug = AugmentConfig {
                strategy,
                m: 4,
                p: 0.5,
                mix_alpha: 1.0,
                seed: 0,
            };
            let params = ShallowParams::init(2, 8, 2, 19).unwrap();
            let (_, grads) = shallow_batch_backward(
                &params,
                &features,
                &labels,
                &data.catalog,
                &aug,
                &mut Rng::new(29),
            )
            .unwrap();
            let report = check_gradients(
                &params,
                &grads,
                |p| {
                    shallow_batch_backward(p, &features, &labels, &data.catalog, &aug, &mut Rng::new(29))
                        .map(|(loss, _)| loss)
                },
                &GradCheckConfig::default(),
            )
            .unwrap();
            assert!(
                report.passed(),
                "{:?}: max rel error {}",
                strategy,
                report.max_rel_error()
            );
        }
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostic() {
        let data = toy_data(10);
        let params = ShallowParams {
            w1: Mat::from_fn(2, 4, |_, _| 1e308),
            b1: Mat::zeros(1, 4),
            w2: Mat::from_fn(4, 2, |_, _| 1e308),
            b2: Mat::zeros(1, 2),
        };
        let mut trainer = Trainer::new(Model::Shallow(params), base_cfg()).unwrap();
        let err = trainer
            .train_epoch(&data.train, &data.catalog, UpdateScope::All, 1e-3)
            .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("learning rate"));
    }

    #[test]
    fn record_stream_covers_both_phases() {
        let data = toy_data(12);
        let cfg = TrainConfig {
            epochs_frozen: 2,
            epochs_finetune: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            train: data.train.clone(),
            val_seen: data.test_seen.clone(),
            val_unseen: data.test_unseen.clone(),
        };
        let (_, records) = two_phase_train(
            shallow_model(4),
            &train_data,
            &data.catalog,
            &cfg,
            &GridSpec { count: 21 },
            ExecMode::Sequential,
        )
        .unwrap();
        assert_eq!(records.len(), 5);
        assert!(records[..2].iter().all(|r| r.phase == Phase::Frozen));
        assert!(records[2..].iter().all(|r| r.phase == Phase::Finetune));
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.epoch, i + 1);
            assert!(r.val_hm >= 0.0 && r.val_hm <= 1.0);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = toy_data(15);
        let cfg = TrainConfig {
            epochs_frozen: 1,
            epochs_finetune: 2,
            batch_size: 8,
            augment: AugmentConfig {
                strategy: Strategy::FictitiousDropout,
                m: 3,
                p: 0.5,
                mix_alpha: 1.0,
                seed: 9,
            },
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            train: data.train.clone(),
            val_seen: data.test_seen.clone(),
            val_unseen: data.test_unseen.clone(),
        };
        let run = || {
            two_phase_train(
                shallow_model(8),
                &train_data,
                &data.catalog,
                &cfg,
                &GridSpec { count: 21 },
                ExecMode::default(),
            )
            .unwrap()
        };
        let (model_a, records_a) = run();
        let (model_b, records_b) = run();
        assert_eq!(records_a, records_b);
        match (model_a, model_b) {
            (Model::Shallow(a), Model::Shallow(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
    }

    #[test]
    fn head_phase_switch_is_only_a_rate_change() {
        // The attention head sits on precomputed features, so the frozen
        // phase already updates every block; with SGD (no optimizer state to
        // reset) a 1+1 two-phase run at equal rates matches two plain epochs.
        let data = toy_data(12);
        let dims = HeadDims {
            n_attrs: 2,
            feat_dim: 2,
            embed_dim: 4,
        };
        let cfg = TrainConfig {
            epochs_frozen: 1,
            epochs_finetune: 1,
            lr_frozen: 1e-2,
            lr_finetune: 1e-2,
            batch_size: 8,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            train: data.train.clone(),
            val_seen: data.test_seen.clone(),
            val_unseen: data.test_unseen.clone(),
        };
        let init = HeadParams::init(dims, 6).unwrap();
        let (two_phase_model, _) = two_phase_train(
            Model::Head(init.clone()),
            &train_data,
            &data.catalog,
            &cfg,
            &GridSpec { count: 11 },
            ExecMode::Sequential,
        )
        .unwrap();

        let mut trainer = Trainer::new(Model::Head(init), cfg).unwrap();
        for _ in 0..2 {
            trainer
                .train_epoch(&data.train, &data.catalog, UpdateScope::All, 1e-2)
                .unwrap();
        }
        match (two_phase_model, trainer.model) {
            (Model::Head(a), Model::Head(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_finetune_epochs_is_plain_head_training() {
        let data = toy_data(10);
        let cfg = TrainConfig {
            epochs_frozen: 3,
            epochs_finetune: 0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            train: data.train.clone(),
            val_seen: data.test_seen.clone(),
            val_unseen: data.test_unseen.clone(),
        };
        let (_, records) = two_phase_train(
            shallow_model(3),
            &train_data,
            &data.catalog,
            &cfg,
            &GridSpec { count: 11 },
            ExecMode::Sequential,
        )
        .unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.phase == Phase::Frozen));
    }

    #[test]
    fn curves_round_trip() {
        let records = vec![
            EpochRecord {
                epoch: 1,
                train_loss: std::f64::consts::LN_2,
                val_acc_u: 0.25,
                val_acc_s: 0.75,
                val_hm: 0.375,
                best_gamma: 0.1234567890123,
                phase: Phase::Frozen,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.5,
                val_acc_u: 0.5,
                val_acc_s: 0.5,
                val_hm: 0.5,
                best_gamma: 0.0,
                phase: Phase::Finetune,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        write_curves_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_acc_u,val_acc_s,val_hm,best_gamma,phase\n"));
        assert_eq!(text.lines().count(), 3);
        let parsed = read_curves_csv(&path).unwrap();
        assert_eq!(parsed, records);
    }
}
