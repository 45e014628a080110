//! The full detector: projections, attention blocks and classifier head, with
//! an exact hand-written backward pass.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionBlock, AttentionMode, BlockTrace};
use crate::corpus::Label;
use crate::encoders::{EmbeddingSequence, Projection, ProjectionLayer};
use crate::error::{Error, Result};
use crate::fusion::{softmax2, ClassifierHead, FusedVector, FusionLayout, Segment, SegmentWidths};
use crate::rng::SeededRng;

/// Everything that fixes tensor shapes. Two models with equal contracts can
/// exchange weights; checkpoints carry it in their header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelContract {
    /// Backbone width of title and body embeddings.
    pub text_enc: usize,
    /// Backbone width of image embeddings.
    pub image_enc: usize,
    pub attention_mode: AttentionMode,
    /// Title shares the body projection when set.
    pub tie_title: bool,
    pub layout: FusionLayout,
}

impl ModelContract {
    pub fn new(text_enc: usize, image_enc: usize) -> Self {
        ModelContract {
            text_enc,
            image_enc,
            attention_mode: AttentionMode::Sequence,
            tie_title: false,
            layout: FusionLayout::default(),
        }
    }

    pub fn widths(&self) -> SegmentWidths {
        self.layout.widths
    }

    pub fn fused_dim(&self) -> usize {
        self.layout.dim()
    }
}

/// Backbone features of one article, ready for the trainable part.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleFeatures {
    pub id: String,
    pub label: Label,
    pub title: EmbeddingSequence,
    pub body: EmbeddingSequence,
    /// Single row.
    pub image: EmbeddingSequence,
    pub emotion: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub contract: ModelContract,
    pub seed: u64,
    pub text_proj: ProjectionLayer,
    /// `None` when the title is tied to `text_proj`.
    pub title_proj: Option<ProjectionLayer>,
    pub image_proj: ProjectionLayer,
    pub att_text_title: AttentionBlock,
    pub att_title_text: AttentionBlock,
    pub head: ClassifierHead,
    /// Bumped on every parameter update; forward caches record it.
    pub generation: u64,
}

/// Gradients have exactly the parameter shapes.
pub type Gradients = ModelParams;

/// Borrowed view of one named parameter tensor.
pub struct TensorView<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl ModelParams {
    /// Seeded initialisation. One generator draws, in order: body projection,
    /// title projection (unless tied), image projection, text→title block,
    /// title→text block, classifier head.
    pub fn init(contract: ModelContract, seed: u64) -> Self {
        let w = contract.widths();
        let mut rng = SeededRng::new(seed);
        let text_proj = ProjectionLayer::init(w.text, contract.text_enc, &mut rng);
        let title_proj =
            (!contract.tie_title).then(|| ProjectionLayer::init(w.text, contract.text_enc, &mut rng));
        let image_proj = ProjectionLayer::init(w.image, contract.image_enc, &mut rng);
        let att_text_title = AttentionBlock::init(w.text, &mut rng);
        let att_title_text = AttentionBlock::init(w.text, &mut rng);
        let head = ClassifierHead::init(contract.fused_dim(), &mut rng);
        ModelParams {
            contract,
            seed,
            text_proj,
            title_proj,
            image_proj,
            att_text_title,
            att_title_text,
            head,
            generation: 0,
        }
    }

    pub fn zeros(contract: ModelContract) -> Self {
        let w = contract.widths();
        ModelParams {
            text_proj: ProjectionLayer::zeros(w.text, contract.text_enc),
            title_proj: (!contract.tie_title)
                .then(|| ProjectionLayer::zeros(w.text, contract.text_enc)),
            image_proj: ProjectionLayer::zeros(w.image, contract.image_enc),
            att_text_title: AttentionBlock::zeros(w.text),
            att_title_text: AttentionBlock::zeros(w.text),
            head: ClassifierHead::zeros(contract.fused_dim()),
            contract,
            seed: 0,
            generation: 0,
        }
    }

    pub fn zeros_like(&self) -> Gradients {
        let mut z = ModelParams::zeros(self.contract.clone());
        z.seed = self.seed;
        z
    }

    fn title_layer(&self) -> &ProjectionLayer {
        self.title_proj.as_ref().unwrap_or(&self.text_proj)
    }

    /// Named tensors in canonical (checkpoint) order.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        view2("text_proj.weight", &self.text_proj.weight, &mut out);
        out.push(view1("text_proj.bias", &self.text_proj.bias));
        if let Some(t) = &self.title_proj {
            view2("title_proj.weight", &t.weight, &mut out);
            out.push(view1("title_proj.bias", &t.bias));
        }
        view2("image_proj.weight", &self.image_proj.weight, &mut out);
        out.push(view1("image_proj.bias", &self.image_proj.bias));
        for (names, b) in [
            (BLOCK_NAMES[0], &self.att_text_title),
            (BLOCK_NAMES[1], &self.att_title_text),
        ] {
            view2(names[0], &b.w_q, &mut out);
            view2(names[1], &b.w_k, &mut out);
            view2(names[2], &b.w_v, &mut out);
            view2(names[3], &b.out_w, &mut out);
            out.push(view1(names[4], &b.out_b));
        }
        view2("head.weight", &self.head.weight, &mut out);
        out.push(view1("head.bias", &self.head.bias));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(slice2(&mut self.text_proj.weight));
        out.push(slice1(&mut self.text_proj.bias));
        if let Some(t) = &mut self.title_proj {
            out.push(slice2(&mut t.weight));
            out.push(slice1(&mut t.bias));
        }
        out.push(slice2(&mut self.image_proj.weight));
        out.push(slice1(&mut self.image_proj.bias));
        for b in [&mut self.att_text_title, &mut self.att_title_text] {
            out.push(slice2(&mut b.w_q));
            out.push(slice2(&mut b.w_k));
            out.push(slice2(&mut b.w_v));
            out.push(slice2(&mut b.out_w));
            out.push(slice1(&mut b.out_b));
        }
        out.push(slice2(&mut self.head.weight));
        out.push(slice1(&mut self.head.bias));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) const BLOCK_NAMES: [[&str; 5]; 2] = [
    [
        "att_text_title.w_q",
        "att_text_title.w_k",
        "att_text_title.w_v",
        "att_text_title.out_w",
        "att_text_title.out_b",
    ],
    [
        "att_title_text.w_q",
        "att_title_text.w_k",
        "att_title_text.w_v",
        "att_title_text.out_w",
        "att_title_text.out_b",
    ],
];

fn view2<'a>(name: &'static str, a: &'a Array2<f64>, out: &mut Vec<TensorView<'a>>) {
    out.push(TensorView {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    })
}

fn view1<'a>(name: &'static str, a: &'a Array1<f64>) -> TensorView<'a> {
    TensorView {
        name,
        shape: vec![a.len()],
        data: a.as_slice().expect("standard layout"),
    }
}

fn slice1(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

fn slice2(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    body: Projection,
    title: Projection,
    image: Projection,
    text_title: Option<BlockTrace>,
    title_text: Option<BlockTrace>,
    pub fused: FusedVector,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

/// Forward traces of a batch, tied to the parameter generation that
/// produced them.
#[derive(Debug, Clone)]
pub struct BatchCache {
    generation: u64,
    ids: Vec<String>,
    traces: Vec<ForwardTrace>,
}

impl BatchCache {
    pub fn probs(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.traces.iter().map(|t| t.probs)
    }

    pub fn logits(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.traces.iter().map(|t| t.logits)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

fn check_features(model: &ModelParams, x: &ArticleFeatures) -> Result<()> {
    let c = &model.contract;
    let ctx = |what: &str| format!("{what} of article {}", x.id);
    if x.title.width() != c.text_enc {
        return Err(Error::dims(ctx("title embedding width"), c.text_enc, x.title.width()));
    }
    if x.body.width() != c.text_enc {
        return Err(Error::dims(ctx("body embedding width"), c.text_enc, x.body.width()));
    }
    if x.image.width() != c.image_enc {
        return Err(Error::dims(ctx("image embedding width"), c.image_enc, x.image.width()));
    }
    if x.image.len() != 1 {
        return Err(Error::dims(ctx("image embedding rows"), 1, x.image.len()));
    }
    if x.emotion.len() != c.widths().emotion {
        return Err(Error::dims(ctx("emotion features"), c.widths().emotion, x.emotion.len()));
    }
    Ok(())
}

fn as_row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(Axis(0))
}

pub fn forward(model: &ModelParams, x: &ArticleFeatures) -> Result<ForwardTrace> {
    check_features(model, x)?;
    let layout = &model.contract.layout;
    let body = model.text_proj.project(&x.body)?;
    let title = model.title_layer().project(&x.title)?;
    let image = model.image_proj.project(&x.image)?;

    let (body_rows, title_rows) = attention_inputs(model.contract.attention_mode, &body, &title);
    let text_title = layout
        .contains(Segment::TextTitle)
        .then(|| model.att_text_title.apply(&body_rows, &title_rows))
        .transpose()?;
    let title_text = layout
        .contains(Segment::TitleText)
        .then(|| model.att_title_text.apply(&title_rows, &body_rows))
        .transpose()?;

    let w = model.contract.widths();
    let zeros = vec![0.0; w.text];
    let emotion = &x.emotion.to_vec();
    let att_slice = |t: &Option<BlockTrace>| -> Vec<f64> {
        t.as_ref().map_or_else(|| zeros.clone(), |t| t.output.to_vec())
    };
    let fused = layout.fuse([
        body.pooled.as_slice().expect("contiguous"),
        image.pooled.as_slice().expect("contiguous"),
        emotion,
        &att_slice(&text_title),
        &att_slice(&title_text),
    ])?;
    let logits = model.head.logits(&fused.values)?;
    let probs = softmax2(logits);
    Ok(ForwardTrace {
        body,
        title,
        image,
        text_title,
        title_text,
        fused,
        logits,
        probs,
    })
}

fn attention_inputs(
    mode: AttentionMode,
    body: &Projection,
    title: &Projection,
) -> (Array2<f64>, Array2<f64>) {
    match mode {
        AttentionMode::Sequence => (body.rows.clone(), title.rows.clone()),
        AttentionMode::Scalar => (as_row(&body.pooled), as_row(&title.pooled)),
    }
}

pub fn predict(model: &ModelParams, x: &ArticleFeatures) -> Result<[f64; 2]> {
    Ok(forward(model, x)?.probs)
}

pub fn forward_batch(model: &ModelParams, batch: &[&ArticleFeatures]) -> Result<BatchCache> {
    let traces = batch
        .iter()
        .map(|x| forward(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchCache {
        generation: model.generation,
        ids: batch.iter().map(|x| x.id.clone()).collect(),
        traces,
    })
}

/// `-ln p[label]`, with the probability floored at the smallest positive
/// normal double so the result stays finite.
pub fn loss(probs: [f64; 2], label: Label) -> f64 {
    -probs[label.index()].max(f64::MIN_POSITIVE).ln()
}

/// Cross-entropy from logits via log-sum-exp.
pub fn loss_from_logits(logits: [f64; 2], label: Label) -> f64 {
    let max = logits[0].max(logits[1]);
    let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
    lse - logits[label.index()]
}

/// Mean cross-entropy of a batch.
pub fn batch_loss(model: &ModelParams, batch: &[&ArticleFeatures]) -> Result<f64> {
    let mut total = 0.0;
    for x in batch {
        total += loss_from_logits(forward(model, x)?.logits, x.label);
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of the mean batch cross-entropy with respect to every
/// parameter tensor. `cache` must come from [`forward_batch`] on the same
/// batch and the current parameters.
pub fn backward(model: &ModelParams, batch: &[&ArticleFeatures], cache: &BatchCache) -> Result<Gradients> {
    if cache.generation != model.generation {
        return Err(Error::StaleCache(format!(
            "cache from parameter generation {}, model is at {}",
            cache.generation, model.generation
        )));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if cache.traces.len() != batch.len()
        || cache.ids.iter().zip(batch).any(|(id, x)| *id != x.id)
    {
        return Err(Error::StaleCache("cache was built for a different batch".into()));
    }
    let mut grad = model.zeros_like();
    for (x, trace) in batch.iter().zip(&cache.traces) {
        accumulate_sample(model, x, trace, &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    for t in grad.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(grad)
}

fn accumulate_sample(model: &ModelParams, x: &ArticleFeatures, tr: &ForwardTrace, grad: &mut Gradients) {
    let layout = &model.contract.layout;
    let mode = model.contract.attention_mode;

    let mut d_logits = Array1::from(tr.probs.to_vec());
    d_logits[x.label.index()] -= 1.0;
    grad.head.weight += &Array2::from_shape_fn(grad.head.weight.raw_dim(), |(i, j)| {
        d_logits[i] * tr.fused.values[j]
    });
    grad.head.bias += &d_logits;
    let d_fused = model.head.weight.t().dot(&d_logits);
    let seg = |s: Segment| layout.range(s).map(|r| d_fused.slice(ndarray::s![r]).to_owned());

    let mut d_body_rows = Array2::zeros(tr.body.rows.raw_dim());
    let mut d_title_rows = Array2::zeros(tr.title.rows.raw_dim());
    let mut d_body_pooled = Array1::zeros(tr.body.pooled.len());
    let mut d_title_pooled = Array1::zeros(tr.title.pooled.len());

    if let Some(d) = seg(Segment::Text) {
        d_body_pooled += &d;
    }
    if let Some(d) = seg(Segment::Image) {
        model.image_proj.accumulate_grad(
            x.image.rows(),
            &tr.image,
            &as_row(&d),
            &mut grad.image_proj,
        );
    }

    let (body_in, title_in) = attention_inputs(mode, &tr.body, &tr.title);
    let mut route = |d_query: Array2<f64>, d_kv: Array2<f64>, query_is_body: bool| {
        let (d_b, d_t) = if query_is_body { (d_query, d_kv) } else { (d_kv, d_query) };
        match mode {
            AttentionMode::Sequence => {
                d_body_rows += &d_b;
                d_title_rows += &d_t;
            }
            AttentionMode::Scalar => {
                d_body_pooled += &d_b.row(0);
                d_title_pooled += &d_t.row(0);
            }
        }
    };
    if let (Some(d), Some(t)) = (seg(Segment::TextTitle), &tr.text_title) {
        let (dq, dkv) = model
            .att_text_title
            .backward(&body_in, &title_in, t, &d, &mut grad.att_text_title);
        route(dq, dkv, true);
    }
    if let (Some(d), Some(t)) = (seg(Segment::TitleText), &tr.title_text) {
        let (dq, dkv) = model
            .att_title_text
            .backward(&title_in, &body_in, t, &d, &mut grad.att_title_text);
        route(dq, dkv, false);
    }

    d_body_rows += &(d_body_pooled / tr.body.rows.nrows() as f64);
    d_title_rows += &(d_title_pooled / tr.title.rows.nrows() as f64);

    model
        .text_proj
        .accumulate_grad(x.body.rows(), &tr.body, &d_body_rows, &mut grad.text_proj);
    match (&model.title_proj, &mut grad.title_proj) {
        (Some(layer), Some(g)) => layer.accumulate_grad(x.title.rows(), &tr.title, &d_title_rows, g),
        _ => model
            .text_proj
            .accumulate_grad(x.title.rows(), &tr.title, &d_title_rows, &mut grad.text_proj),
    }
}
