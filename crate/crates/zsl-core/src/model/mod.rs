//! Scoring models: the attribute-attention head and the shallow toy scorer.
//!
//! Both models map a sample to an embedding in attribute space; class scores
//! are inner products of that embedding with fixed per-class attribute rows.
//! Gradients are derived by hand and validated against central finite
//! differences (see [`gradcheck`]).
//!
//! Head forward pass, per sample with region features `X` (R×f):
//!
//! - attention logits `L[i][j] = X[i] · attn_weight · attr_embed[j]`,
//!   column-softmaxed over regions into `A` (R×n)
//! - attribute representatives `H = Aᵀ X` (n×f)
//! - attribute scores `z[j] = attr_embed[j] · score_weight · H[j]`
//! - attribute gates `e[j] = sigmoid(attr_embed[j] · gate_weight · H[j])`
//! - embedding `ψ = z ⊙ e`, class scores `s = classifiers · ψ`

pub mod gradcheck;

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::rng::Rng;

/// Sigmoid with the pre-activation clamped to ±30 so exp never overflows.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

/// Uniform access to a model's parameter matrices, in declaration order.
/// Drives the optimizer, gradient checking and checkpointing.
pub trait ParamBlocks: Clone {
    fn block_names() -> &'static [&'static str];
    fn block(&self, idx: usize) -> &Mat;
    fn block_mut(&mut self, idx: usize) -> &mut Mat;

    fn n_blocks(&self) -> usize {
        Self::block_names().len()
    }

    fn param_count(&self) -> usize {
        (0..self.n_blocks()).map(|b| self.block(b).data().len()).sum()
    }

    fn is_finite(&self) -> bool {
        (0..self.n_blocks()).all(|b| self.block(b).is_finite())
    }
}

/// Dimensions of the attention head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HeadDims {
    /// Number of attributes (n).
    pub n_attrs: usize,
    /// Region feature dimension (f).
    pub feat_dim: usize,
    /// Attribute embedding width (d_v).
    pub embed_dim: usize,
}

/// Learnable parameters of the attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    /// n×d attribute embeddings, one row per attribute.
    pub attr_embed: Mat,
    /// f×d bilinear form between region features and attribute embeddings.
    pub attn_weight: Mat,
    /// d×f bilinear form producing attribute scores.
    pub score_weight: Mat,
    /// d×f bilinear form producing attribute gates.
    pub gate_weight: Mat,
}

impl HeadParams {
    /// Random initialization: bilinear weights are normal with standard
    /// deviation 1/sqrt(fan-in), attribute embeddings standard normal.
    /// Deterministic per seed.
    pub fn init(dims: HeadDims, seed: u64) -> Result<Self> {
        if dims.n_attrs == 0 || dims.feat_dim == 0 || dims.embed_dim == 0 {
            return Err(Error::contract("head dimensions must be positive"));
        }
        let mut rng = Rng::new(seed);
        let sd = 1.0 / (dims.feat_dim as f64).sqrt();
        let attr_embed = Mat::from_fn(dims.n_attrs, dims.embed_dim, |_, _| rng.normal());
        let attn_weight = Mat::from_fn(dims.feat_dim, dims.embed_dim, |_, _| sd * rng.normal());
        let score_weight = Mat::from_fn(dims.embed_dim, dims.feat_dim, |_, _| sd * rng.normal());
        let gate_weight = Mat::from_fn(dims.embed_dim, dims.feat_dim, |_, _| sd * rng.normal());
        Ok(HeadParams {
            attr_embed,
            attn_weight,
            score_weight,
            gate_weight,
        })
    }

    pub fn zeros(dims: HeadDims) -> Self {
        HeadParams {
            attr_embed: Mat::zeros(dims.n_attrs, dims.embed_dim),
            attn_weight: Mat::zeros(dims.feat_dim, dims.embed_dim),
            score_weight: Mat::zeros(dims.embed_dim, dims.feat_dim),
            gate_weight: Mat::zeros(dims.embed_dim, dims.feat_dim),
        }
    }

    pub fn dims(&self) -> HeadDims {
        HeadDims {
            n_attrs: self.attr_embed.rows(),
            feat_dim: self.attn_weight.rows(),
            embed_dim: self.attr_embed.cols(),
        }
    }
}

impl ParamBlocks for HeadParams {
    fn block_names() -> &'static [&'static str] {
        &["attr_embed", "attn_weight", "score_weight", "gate_weight"]
    }

    fn block(&self, idx: usize) -> &Mat {
        match idx {
            0 => &self.attr_embed,
            1 => &self.attn_weight,
            2 => &self.score_weight,
            3 => &self.gate_weight,
            _ => panic!("head has 4 parameter blocks"),
        }
    }

    fn block_mut(&mut self, idx: usize) -> &mut Mat {
        match idx {
            0 => &mut self.attr_embed,
            1 => &mut self.attn_weight,
            2 => &mut self.score_weight,
            3 => &mut self.gate_weight,
            _ => panic!("head has 4 parameter blocks"),
        }
    }
}

/// All intermediate activations of one head forward pass, retained for the
/// manual backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// R×n attention weights; every column sums to 1.
    pub attention: Mat,
    /// n×f attribute visual representatives.
    pub attr_repr: Mat,
    /// Attribute scores z.
    pub attr_scores: Vec<f64>,
    /// Attribute gates e, each in (0, 1).
    pub attr_gates: Vec<f64>,
    /// z ⊙ e, the sample's embedding in attribute space.
    pub embedding: Vec<f64>,
    /// Scores over the active classifier rows.
    pub scores: Vec<f64>,
}

/// Cross-attention between region features and attribute embeddings.
/// Returns the column-stochastic attention matrix (R×n) and the attribute
/// representatives (n×f).
pub fn attention_forward(features: &Mat, params: &HeadParams) -> Result<(Mat, Mat)> {
    let dims = params.dims();
    if features.cols() != dims.feat_dim {
        return Err(Error::contract(format!(
            "features have dim {}, head expects {}",
            features.cols(),
            dims.feat_dim
        )));
    }
    if !features.is_finite() {
        return Err(Error::numeric("non-finite region features"));
    }
    let projected = features.matmul(&params.attn_weight); // R×d
    let logits = projected.matmul_nt(&params.attr_embed); // R×n
    let attention = softmax_columns(&logits);
    let attr_repr = attention.matmul_tn(features); // n×f
    Ok((attention, attr_repr))
}

/// Max-subtracted softmax applied independently to every column.
fn softmax_columns(logits: &Mat) -> Mat {
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut out = Mat::zeros(rows, cols);
    for j in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for i in 0..rows {
            max = max.max(logits.get(i, j));
        }
        let mut sum = 0.0;
        for i in 0..rows {
            let e = (logits.get(i, j) - max).exp();
            out.set(i, j, e);
            sum += e;
        }
        for i in 0..rows {
            out.set(i, j, out.get(i, j) / sum);
        }
    }
    out
}

/// Attribute scores, gates and the final embedding from the representative
/// matrix.
pub fn embed_forward(attr_repr: &Mat, params: &HeadParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = attr_repr.rows();
    let mut attr_scores = Vec::with_capacity(n);
    let mut attr_gates = Vec::with_capacity(n);
    let mut embedding = Vec::with_capacity(n);
    for j in 0..n {
        let rep = attr_repr.row(j);
        let emb = params.attr_embed.row(j);
        let score = dot(emb, &params.score_weight.mat_vec(rep));
        let gate = sigmoid(dot(emb, &params.gate_weight.mat_vec(rep)));
        attr_scores.push(score);
        attr_gates.push(gate);
        embedding.push(score * gate);
    }
    (attr_scores, attr_gates, embedding)
}

/// Inner products of the embedding with every classifier row.
pub fn score_classes(embedding: &[f64], classifiers: &Mat) -> Result<Vec<f64>> {
    if classifiers.cols() != embedding.len() {
        return Err(Error::contract(format!(
            "classifier width {} does not match embedding dim {}",
            classifiers.cols(),
            embedding.len()
        )));
    }
    Ok(classifiers.mat_vec(embedding))
}

/// Full head forward pass with all intermediates retained.
pub fn head_forward(features: &Mat, params: &HeadParams, classifiers: &Mat) -> Result<ForwardTrace> {
    let (attention, attr_repr) = attention_forward(features, params)?;
    let (attr_scores, attr_gates, embedding) = embed_forward(&attr_repr, params);
    let scores = score_classes(&embedding, classifiers)?;
    Ok(ForwardTrace {
        attention,
        attr_repr,
        attr_scores,
        attr_gates,
        embedding,
        scores,
    })
}

/// Target of one sample's cross-entropy term.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Hard(usize),
    /// Full distribution over the active classifier rows; must sum to 1.
    Soft(&'a [f64]),
}

/// Numerically stable softmax cross-entropy. Returns the loss and its
/// gradient with respect to the scores.
pub fn cross_entropy(scores: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
    if scores.is_empty() {
        return Err(Error::contract("cross entropy over an empty score vector"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut probs: Vec<f64> = scores
        .iter()
        .map(|&s| {
            let e = (s - max).exp();
            sum += e;
            e
        })
        .collect();
    let log_norm = max + sum.ln();
    for p in &mut probs {
        *p /= sum;
    }
    match target {
        Target::Hard(label) => {
            if label >= scores.len() {
                return Err(Error::contract(format!(
                    "label {label} out of range for {} classes",
                    scores.len()
                )));
            }
            let loss = log_norm - scores[label];
            probs[label] -= 1.0;
            Ok((loss, probs))
        }
        Target::Soft(weights) => {
            if weights.len() != scores.len() {
                return Err(Error::contract("soft target length mismatch"));
            }
            let loss = weights
                .iter()
                .zip(scores)
                .map(|(&w, &s)| w * (log_norm - s))
                .sum();
            for (p, &w) in probs.iter_mut().zip(weights) {
                *p -= w;
            }
            Ok((loss, probs))
        }
    }
}

/// Gradient of the loss with respect to the embedding, given the score
/// gradient. Classifier rows are constants: no gradient flows into them.
pub fn embedding_grad(classifiers: &Mat, d_scores: &[f64]) -> Vec<f64> {
    classifiers.mat_tvec(d_scores)
}

/// Backward pass of the embedding stage. Accumulates into `grads` and
/// returns the gradient with respect to the representative matrix.
pub fn embed_backward(
    attr_repr: &Mat,
    attr_scores: &[f64],
    attr_gates: &[f64],
    d_embedding: &[f64],
    params: &HeadParams,
    grads: &mut HeadParams,
) -> Mat {
    let n = attr_repr.rows();
    let feat_dim = attr_repr.cols();
    let mut d_repr = Mat::zeros(n, feat_dim);
    for j in 0..n {
        let rep = attr_repr.row(j);
        let emb = params.attr_embed.row(j);
        let gate = attr_gates[j];
        let d_score = d_embedding[j] * gate;
        let d_gate_pre = d_embedding[j] * attr_scores[j] * gate * (1.0 - gate);

        // score path: z_j = emb · score_weight · rep
        let score_proj = params.score_weight.mat_vec(rep);
        let d_emb_row = grads.attr_embed.row_mut(j);
        for (g, &q) in d_emb_row.iter_mut().zip(&score_proj) {
            *g += d_score * q;
        }
        grads.score_weight.add_outer(emb, rep, d_score);
        let back = params.score_weight.mat_tvec(emb);
        for (d, &b) in d_repr.row_mut(j).iter_mut().zip(&back) {
            *d += d_score * b;
        }

        // gate path: e_j = sigmoid(emb · gate_weight · rep)
        let gate_proj = params.gate_weight.mat_vec(rep);
        let d_emb_row = grads.attr_embed.row_mut(j);
        for (g, &q) in d_emb_row.iter_mut().zip(&gate_proj) {
            *g += d_gate_pre * q;
        }
        grads.gate_weight.add_outer(emb, rep, d_gate_pre);
        let back = params.gate_weight.mat_tvec(emb);
        for (d, &b) in d_repr.row_mut(j).iter_mut().zip(&back) {
            *d += d_gate_pre * b;
        }
    }
    d_repr
}

/// Backward pass of the attention stage given the gradient with respect to
/// the representative matrix. Accumulates into `grads`.
pub fn attention_backward(
    features: &Mat,
    attention: &Mat,
    d_repr: &Mat,
    params: &HeadParams,
    grads: &mut HeadParams,
) {
    let (regions, n) = (attention.rows(), attention.cols());
    // d attention = features · d_reprᵀ
    let d_attention = features.matmul_nt(d_repr); // R×n
    // softmax backward, per column
    let mut d_logits = Mat::zeros(regions, n);
    for j in 0..n {
        let mut weighted = 0.0;
        for i in 0..regions {
            weighted += attention.get(i, j) * d_attention.get(i, j);
        }
        for i in 0..regions {
            d_logits.set(i, j, attention.get(i, j) * (d_attention.get(i, j) - weighted));
        }
    }
    let projected = features.matmul(&params.attn_weight); // R×d
    grads.attr_embed.add_scaled(&d_logits.matmul_tn(&projected), 1.0); // n×d
    let d_projected = d_logits.matmul(&params.attr_embed); // R×d
    grads.attn_weight.add_scaled(&features.matmul_tn(&d_projected), 1.0); // f×d
}

/// Mean cross-entropy of a batch, forward only.
pub fn batch_loss_head(
    features: &[Mat],
    labels: &[usize],
    classifiers: &Mat,
    params: &HeadParams,
) -> Result<f64> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::contract("batch features and labels must align and be nonempty"));
    }
    let mut total = 0.0;
    for (feat, &label) in features.iter().zip(labels) {
        let trace = head_forward(feat, params, classifiers)?;
        let (loss, _) = cross_entropy(&trace.scores, Target::Hard(label))?;
        total += loss;
    }
    Ok(total / features.len() as f64)
}

/// Mean cross-entropy over a batch together with gradients for every head
/// parameter, chained by hand through scores, embedding, gates, the
/// representative matrix and the attention softmax.
pub fn forward_backward(
    features: &[Mat],
    labels: &[usize],
    classifiers: &Mat,
    params: &HeadParams,
) -> Result<(f64, HeadParams)> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::contract("batch features and labels must align and be nonempty"));
    }
    let mut grads = HeadParams::zeros(params.dims());
    let mut total = 0.0;
    for (feat, &label) in features.iter().zip(labels) {
        let trace = head_forward(feat, params, classifiers)?;
        let (loss, d_scores) = cross_entropy(&trace.scores, Target::Hard(label))?;
        total += loss;
        let d_embedding = embedding_grad(classifiers, &d_scores);
        let d_repr = embed_backward(
            &trace.attr_repr,
            &trace.attr_scores,
            &trace.attr_gates,
            &d_embedding,
            params,
            &mut grads,
        );
        attention_backward(feat, &trace.attention, &d_repr, params, &mut grads);
    }
    let inv = 1.0 / features.len() as f64;
    for b in 0..grads.n_blocks() {
        grads.block_mut(b).scale(inv);
    }
    Ok((total * inv, grads))
}

// ---------------------------------------------------------------------------
// Shallow toy scorer: one hidden ReLU layer, fixed classifier rows.
// ---------------------------------------------------------------------------

/// Parameters of the shallow scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowParams {
    /// input×hidden first-layer weights.
    pub w1: Mat,
    /// 1×hidden first-layer bias.
    pub b1: Mat,
    /// hidden×output second-layer weights.
    pub w2: Mat,
    /// 1×output second-layer bias.
    pub b2: Mat,
}

impl ShallowParams {
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Result<Self> {
        let sd1 = 1.0 / (input_dim as f64).sqrt();
        let sd2 = 1.0 / (hidden as f64).sqrt();
        Self::init_layer_sds(input_dim, hidden, output_dim, sd1, sd2, seed)
    }

    /// Initialization with explicit per-layer standard deviations. The toy
    /// experiment uses unit-scale draws so the untrained output directions
    /// carry real structure for the baselines to contend with.
    pub fn init_with_sd(
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        sd: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::init_layer_sds(input_dim, hidden, output_dim, sd, sd, seed)
    }

    fn init_layer_sds(
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        sd1: f64,
        sd2: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return Err(Error::contract("shallow dimensions must be positive"));
        }
        let mut rng = Rng::new(seed);
        Ok(ShallowParams {
            w1: Mat::from_fn(input_dim, hidden, |_, _| sd1 * rng.normal()),
            b1: Mat::from_fn(1, hidden, |_, _| sd1 * rng.normal()),
            w2: Mat::from_fn(hidden, output_dim, |_, _| sd2 * rng.normal()),
            b2: Mat::from_fn(1, output_dim, |_, _| sd2 * rng.normal()),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ShallowParams {
            w1: Mat::zeros(self.w1.rows(), self.w1.cols()),
            b1: Mat::zeros(1, self.b1.cols()),
            w2: Mat::zeros(self.w2.rows(), self.w2.cols()),
            b2: Mat::zeros(1, self.b2.cols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

impl ParamBlocks for ShallowParams {
    fn block_names() -> &'static [&'static str] {
        &["w1", "b1", "w2", "b2"]
    }

    fn block(&self, idx: usize) -> &Mat {
        match idx {
            0 => &self.w1,
            1 => &self.b1,
            2 => &self.w2,
            3 => &self.b2,
            _ => panic!("shallow scorer has 4 parameter blocks"),
        }
    }

    fn block_mut(&mut self, idx: usize) -> &mut Mat {
        match idx {
            0 => &mut self.w1,
            1 => &mut self.b1,
            2 => &mut self.w2,
            3 => &mut self.b2,
            _ => panic!("shallow scorer has 4 parameter blocks"),
        }
    }
}

/// Intermediates of one shallow forward pass.
#[derive(Clone, Debug)]
pub struct ShallowTrace {
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub embedding: Vec<f64>,
    pub scores: Vec<f64>,
}

pub fn shallow_forward_trace(
    input: &[f64],
    params: &ShallowParams,
    classifiers: &Mat,
) -> Result<ShallowTrace> {
    if input.len() != params.input_dim() {
        return Err(Error::contract(format!(
            "input dim {} does not match scorer input {}",
            input.len(),
            params.input_dim()
        )));
    }
    let mut pre_activation = params.w1.mat_tvec(input);
    for (p, &b) in pre_activation.iter_mut().zip(params.b1.row(0)) {
        *p += b;
    }
    let hidden: Vec<f64> = pre_activation.iter().map(|&p| p.max(0.0)).collect();
    let mut embedding = params.w2.mat_tvec(&hidden);
    for (e, &b) in embedding.iter_mut().zip(params.b2.row(0)) {
        *e += b;
    }
    let scores = score_classes(&embedding, classifiers)?;
    Ok(ShallowTrace {
        pre_activation,
        hidden,
        embedding,
        scores,
    })
}

/// Shallow forward pass: embedding through one hidden ReLU layer, scores
/// against fixed classifier rows.
pub fn shallow_forward(
    input: &[f64],
    params: &ShallowParams,
    classifiers: &Mat,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = shallow_forward_trace(input, params, classifiers)?;
    Ok((trace.embedding, trace.scores))
}

/// Backward pass of the shallow scorer. Accumulates into `grads`.
pub fn shallow_backward(
    input: &[f64],
    trace: &ShallowTrace,
    d_embedding: &[f64],
    params: &ShallowParams,
    grads: &mut ShallowParams,
) {
    grads.w2.add_outer(&trace.hidden, d_embedding, 1.0);
    for (g, &d) in grads.b2.row_mut(0).iter_mut().zip(d_embedding) {
        *g += d;
    }
    let d_hidden = params.w2.mat_vec(d_embedding);
    let d_pre: Vec<f64> = d_hidden
        .iter()
        .zip(&trace.pre_activation)
        .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
        .collect();
    grads.w1.add_outer(input, &d_pre, 1.0);
    for (g, &d) in grads.b1.row_mut(0).iter_mut().zip(&d_pre) {
        *g += d;
    }
}

/// Mean cross-entropy of a shallow batch, forward only.
pub fn batch_loss_shallow(
    inputs: &[Vec<f64>],
    labels: &[usize],
    classifiers: &Mat,
    params: &ShallowParams,
) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::contract("batch inputs and labels must align and be nonempty"));
    }
    let mut total = 0.0;
    for (input, &label) in inputs.iter().zip(labels) {
        let trace = shallow_forward_trace(input, params, classifiers)?;
        let (loss, _) = cross_entropy(&trace.scores, Target::Hard(label))?;
        total += loss;
    }
    Ok(total / inputs.len() as f64)
}

/// Mean cross-entropy over a shallow batch together with hand-derived
/// gradients for every parameter.
pub fn forward_backward_shallow(
    inputs: &[Vec<f64>],
    labels: &[usize],
    classifiers: &Mat,
    params: &ShallowParams,
) -> Result<(f64, ShallowParams)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::contract("batch inputs and labels must align and be nonempty"));
    }
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for (input, &label) in inputs.iter().zip(labels) {
        let trace = shallow_forward_trace(input, params, classifiers)?;
        let (loss, d_scores) = cross_entropy(&trace.scores, Target::Hard(label))?;
        total += loss;
        let d_embedding = embedding_grad(classifiers, &d_scores);
        shallow_backward(input, &trace, &d_embedding, params, &mut grads);
    }
    let inv = 1.0 / inputs.len() as f64;
    for b in 0..grads.n_blocks() {
        grads.block_mut(b).scale(inv);
    }
    Ok((total * inv, grads))
}

/// A trained or trainable scorer of either kind.
#[derive(Clone, Debug)]
pub enum Model {
    Head(HeadParams),
    Shallow(ShallowParams),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Head(_) => "head",
            Model::Shallow(_) => "shallow",
        }
    }

    /// Width of the embedding this model produces; must equal the catalog's
    /// attribute dimension for scoring.
    pub fn embedding_dim(&self) -> usize {
        match self {
            Model::Head(p) => p.dims().n_attrs,
            Model::Shallow(p) => p.output_dim(),
        }
    }

    /// Map a sample's feature matrix to its attribute-space embedding.
    /// The shallow scorer consumes single-region features as a flat input.
    pub fn embed(&self, features: &Mat) -> Result<Vec<f64>> {
        match self {
            Model::Head(params) => {
                let (_, attr_repr) = attention_forward(features, params)?;
                let (_, _, embedding) = embed_forward(&attr_repr, params);
                Ok(embedding)
            }
            Model::Shallow(params) => {
                if features.rows() != 1 {
                    return Err(Error::contract(
                        "shallow scorer expects single-region features",
                    ));
                }
                let trace_input = features.row(0);
                let mut pre = params.w1.mat_tvec(trace_input);
                for (p, &b) in pre.iter_mut().zip(params.b1.row(0)) {
                    *p += b;
                }
                let hidden: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
                let mut embedding = params.w2.mat_tvec(&hidden);
                for (e, &b) in embedding.iter_mut().zip(params.b2.row(0)) {
                    *e += b;
                }
                Ok(embedding)
            }
        }
    }
}
