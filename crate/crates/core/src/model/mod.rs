//! The prediction scheme: per-token features (word embedding plus one-hot
//! dependency and POS tags), three multi-scale convolutional encoders
//! (block, e1, e2), inter-block subtract/multiply layers, a relu hidden
//! layer and a softmax head.

mod checkpoint;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, Checkpoint,
    TrainMeta, MAGIC,
};

use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{detect, StructuralBlock};
use crate::corpus::{EmbeddingTable, SentenceInstance, Vocab, DEPREL_CAPACITY, POS_CAPACITY};
use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, NodeId, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_w: usize,
    pub d_pos: usize,
    pub d_dep: usize,
    pub kernel_widths: Vec<usize>,
    pub filters: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub max_block_len: usize,
    pub max_entity_len: usize,
    pub dropout: f64,
    pub freeze_word_embeddings: bool,
    pub include_children: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 100,
            d_pos: POS_CAPACITY,
            d_dep: DEPREL_CAPACITY,
            kernel_widths: vec![2, 3, 4, 5],
            filters: 64,
            hidden_dim: 256,
            num_classes: 0,
            max_block_len: 40,
            max_entity_len: 8,
            dropout: 0.5,
            freeze_word_embeddings: false,
            include_children: true,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Width of one featurized input row.
    pub fn input_dim(&self) -> usize {
        self.d_w + self.d_dep + self.d_pos
    }

    /// Output dimension of one encoder.
    pub fn repr_dim(&self) -> usize {
        self.filters * self.kernel_widths.len()
    }

    /// Dimension of the concatenated representation fed to the hidden layer:
    /// block, e1, e2, b-e1-e2 and e1*e2.
    pub fn concat_dim(&self) -> usize {
        5 * self.repr_dim()
    }

    pub fn max_width(&self) -> usize {
        self.kernel_widths.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_widths.is_empty() {
            return Err(Error::Shape("config: kernel_widths must be non-empty".into()));
        }
        if let Some(&w) = self.kernel_widths.iter().find(|&&w| w == 0 || w > self.max_block_len) {
            return Err(Error::Shape(format!(
                "config: kernel width {w} outside 1..=max_block_len {}",
                self.max_block_len
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Shape("config: num_classes must be set".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Shape("config: dropout must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Featurized token sequence: padded word ids plus a row-aligned one-hot
/// tag matrix (dependency label then POS).
#[derive(Clone, Debug)]
pub struct Features {
    pub word_ids: Vec<usize>,
    pub tags: Tensor,
    pub true_len: usize,
    pub truncated: bool,
}

/// Builds the padded input for one sequence. Rows beyond the true length
/// are zero (padding word id 0, all-zero tags); sequences longer than
/// `max_len` are truncated to a window centered on the entity positions.
pub fn featurize(
    word_ids: &[usize],
    role_ids: &[usize],
    pos_ids: &[usize],
    entity_positions: &[usize],
    cfg: &ModelConfig,
    max_len: usize,
) -> Result<Features> {
    if word_ids.len() != role_ids.len() || word_ids.len() != pos_ids.len() {
        return Err(Error::Shape("featurize: parallel sequences differ in length".into()));
    }
    let len = word_ids.len();
    let (start, kept, truncated) = if len > max_len {
        let center = if entity_positions.is_empty() {
            len / 2
        } else {
            (entity_positions[0] + entity_positions[entity_positions.len() - 1]) / 2
        };
        let start = center
            .saturating_sub(max_len / 2)
            .min(len - max_len);
        (start, max_len, true)
    } else {
        (0, len, false)
    };

    let rows = kept.max(cfg.max_width());
    let tag_dim = cfg.d_dep + cfg.d_pos;
    let mut ids = vec![0usize; rows];
    let mut tags = vec![0.0; rows * tag_dim];
    for r in 0..kept {
        let src = start + r;
        ids[r] = word_ids[src];
        if role_ids[src] >= cfg.d_dep || pos_ids[src] >= cfg.d_pos {
            return Err(Error::Internal(format!(
                "featurize: tag id out of one-hot range (dep {} pos {})",
                role_ids[src], pos_ids[src]
            )));
        }
        tags[r * tag_dim + role_ids[src]] = 1.0;
        tags[r * tag_dim + cfg.d_dep + pos_ids[src]] = 1.0;
    }
    Ok(Features {
        word_ids: ids,
        tags: Tensor::from_vec(&[rows, tag_dim], tags)?,
        true_len: kept,
        truncated,
    })
}

/// Block plus entity sequences for one instance, ready for the forward pass.
#[derive(Clone, Debug)]
pub struct InstanceFeatures {
    pub id: u64,
    pub block: Features,
    pub e1: Features,
    pub e2: Features,
    pub label_id: usize,
}

/// Detects the structural block and featurizes block and entity sequences.
pub fn build_features(
    instance: &SentenceInstance,
    vocab: &Vocab,
    cfg: &ModelConfig,
) -> Result<InstanceFeatures> {
    let block = detect(instance, vocab, cfg.include_children)?;
    let block_feats = featurize(
        &block.word_ids,
        &block.role_ids,
        &block.pos_ids,
        &entity_positions(&block),
        cfg,
        cfg.max_block_len,
    )?;
    let entity = |span: &crate::corpus::Span| -> Result<Features> {
        let mut w = Vec::new();
        let mut r = Vec::new();
        let mut p = Vec::new();
        for pos in span.start..=span.end {
            let tok = &instance.tokens[pos];
            w.push(vocab.word_id(&tok.form));
            r.push(vocab.deprel.get(&tok.deprel).ok_or_else(|| {
                Error::Internal(format!("deprel {:?} missing from vocab", tok.deprel))
            })?);
            p.push(vocab.pos.get(&tok.pos).ok_or_else(|| {
                Error::Internal(format!("POS {:?} missing from vocab", tok.pos))
            })?);
        }
        featurize(&w, &r, &p, &[], cfg, cfg.max_entity_len)
    };
    Ok(InstanceFeatures {
        id: instance.id,
        block: block_feats,
        e1: entity(&instance.e1_span)?,
        e2: entity(&instance.e2_span)?,
        label_id: instance.label_id,
    })
}

fn entity_positions(block: &StructuralBlock) -> Vec<usize> {
    let mut all: Vec<usize> = block
        .e1_positions
        .iter()
        .chain(block.e2_positions.iter())
        .copied()
        .collect();
    all.sort_unstable();
    all
}

/// One encoder's convolution parameters, one kernel stack per width.
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub kernels: Vec<Rc<Tensor>>,
    pub biases: Vec<Rc<Tensor>>,
}

pub const ENCODER_NAMES: [&str; 3] = ["block", "e1", "e2"];

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub word_table: Rc<Tensor>,
    /// block, e1, e2 — in that order.
    pub encoders: Vec<EncoderParams>,
    pub hidden_w: Rc<Tensor>,
    pub hidden_b: Rc<Tensor>,
    pub out_w: Rc<Tensor>,
    pub out_b: Rc<Tensor>,
}

fn xavier(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("xavier shape")
}

impl ModelParams {
    /// Deterministic initialization from the config seed. The word table
    /// comes from `embeddings` when given, otherwise it is drawn uniform.
    pub fn init(cfg: &ModelConfig, vocab_size: usize, embeddings: Option<&EmbeddingTable>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let word_table = match embeddings {
            Some(e) => {
                if e.dim != cfg.d_w {
                    return Err(Error::Shape(format!(
                        "embedding dim {} does not match config d_w {}",
                        e.dim, cfg.d_w
                    )));
                }
                if e.table.shape()[0] != vocab_size {
                    return Err(Error::Shape(format!(
                        "embedding rows {} vs vocab size {vocab_size}",
                        e.table.shape()[0]
                    )));
                }
                e.table.clone()
            }
            None => {
                let mut t = xavier(&mut rng, &[vocab_size, cfg.d_w], cfg.d_w, cfg.d_w);
                // padding row stays zero
                for v in t.data_mut()[..cfg.d_w].iter_mut() {
                    *v = 0.0;
                }
                t
            }
        };
        let d = cfg.input_dim();
        let encoders = (0..3)
            .map(|_| {
                let mut kernels = Vec::new();
                let mut biases = Vec::new();
                for &k in &cfg.kernel_widths {
                    kernels.push(Rc::new(xavier(
                        &mut rng,
                        &[k, d, cfg.filters],
                        k * d,
                        cfg.filters,
                    )));
                    biases.push(Rc::new(Tensor::zeros(&[cfg.filters])));
                }
                EncoderParams { kernels, biases }
            })
            .collect();
        let hidden_w = xavier(
            &mut rng,
            &[cfg.hidden_dim, cfg.concat_dim()],
            cfg.concat_dim(),
            cfg.hidden_dim,
        );
        let out_w = xavier(
            &mut rng,
            &[cfg.num_classes, cfg.hidden_dim],
            cfg.hidden_dim,
            cfg.num_classes,
        );
        Ok(ModelParams {
            word_table: Rc::new(word_table),
            encoders,
            hidden_w: Rc::new(hidden_w),
            hidden_b: Rc::new(Tensor::zeros(&[cfg.hidden_dim])),
            out_w: Rc::new(out_w),
            out_b: Rc::new(Tensor::zeros(&[cfg.num_classes])),
        })
    }

    /// Canonical (name, tensor) flattening; checkpoints, Adam and the
    /// gradient checker all use this order.
    pub fn named(&self) -> Vec<(String, &Rc<Tensor>)> {
        let mut out = vec![("word_table".to_string(), &self.word_table)];
        for (enc, name) in self.encoders.iter().zip(ENCODER_NAMES) {
            for (wi, (k, b)) in enc.kernels.iter().zip(&enc.biases).enumerate() {
                out.push((format!("{name}.conv{wi}.kernels"), k));
                out.push((format!("{name}.conv{wi}.bias"), b));
            }
        }
        out.push(("hidden.w".to_string(), &self.hidden_w));
        out.push(("hidden.b".to_string(), &self.hidden_b));
        out.push(("out.w".to_string(), &self.out_w));
        out.push(("out.b".to_string(), &self.out_b));
        out
    }

    pub fn tensors(&self) -> Vec<Rc<Tensor>> {
        self.named().into_iter().map(|(_, t)| Rc::clone(t)).collect()
    }

    /// Mutable views in canonical order (clones shared storage if a graph
    /// still holds it).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![Rc::make_mut(&mut self.word_table)];
        for enc in &mut self.encoders {
            for (k, b) in enc.kernels.iter_mut().zip(enc.biases.iter_mut()) {
                out.push(Rc::make_mut(k));
                out.push(Rc::make_mut(b));
            }
        }
        out.push(Rc::make_mut(&mut self.hidden_w));
        out.push(Rc::make_mut(&mut self.hidden_b));
        out.push(Rc::make_mut(&mut self.out_w));
        out.push(Rc::make_mut(&mut self.out_b));
        // interleave check: kernels/bias pairs already alternate as in named()
        out
    }

    /// Rebuilds params from tensors in canonical order.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let per_enc = cfg.kernel_widths.len() * 2;
        let expect = 1 + 3 * per_enc + 4;
        if tensors.len() != expect {
            return Err(Error::Shape(format!(
                "expected {expect} parameter tensors, got {}",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter().map(Rc::new);
        let word_table = it.next().unwrap();
        let mut encoders = Vec::new();
        for _ in 0..3 {
            let mut kernels = Vec::new();
            let mut biases = Vec::new();
            for _ in 0..cfg.kernel_widths.len() {
                kernels.push(it.next().unwrap());
                biases.push(it.next().unwrap());
            }
            encoders.push(EncoderParams { kernels, biases });
        }
        Ok(ModelParams {
            word_table,
            encoders,
            hidden_w: it.next().unwrap(),
            hidden_b: it.next().unwrap(),
            out_w: it.next().unwrap(),
            out_b: it.next().unwrap(),
        })
    }
}

/// Graph nodes for the parameters, inserted once per graph.
pub struct ParamNodes {
    pub word_table: NodeId,
    pub encoders: Vec<(Vec<NodeId>, Vec<NodeId>)>,
    pub hidden_w: NodeId,
    pub hidden_b: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

impl ParamNodes {
    pub fn insert(graph: &mut Graph, params: &ModelParams) -> Result<Self> {
        let word_table = graph.leaf(Rc::clone(&params.word_table))?;
        let mut encoders = Vec::new();
        for enc in &params.encoders {
            let mut ks = Vec::new();
            let mut bs = Vec::new();
            for (k, b) in enc.kernels.iter().zip(&enc.biases) {
                ks.push(graph.leaf(Rc::clone(k))?);
                bs.push(graph.leaf(Rc::clone(b))?);
            }
            encoders.push((ks, bs));
        }
        Ok(ParamNodes {
            word_table,
            encoders,
            hidden_w: graph.leaf(Rc::clone(&params.hidden_w))?,
            hidden_b: graph.leaf(Rc::clone(&params.hidden_b))?,
            out_w: graph.leaf(Rc::clone(&params.out_w))?,
            out_b: graph.leaf(Rc::clone(&params.out_b))?,
        })
    }

    /// Leaf node ids in the canonical parameter order.
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = vec![self.word_table];
        for (ks, bs) in &self.encoders {
            for (k, b) in ks.iter().zip(bs) {
                out.push(*k);
                out.push(*b);
            }
        }
        out.extend([self.hidden_w, self.hidden_b, self.out_w, self.out_b]);
        out
    }
}

/// Multi-scale encoder: per width, conv1d -> relu -> max-over-time; the
/// pooled vectors are concatenated across widths.
pub fn encode(
    graph: &mut Graph,
    table: NodeId,
    feats: &Features,
    kernels: &[NodeId],
    biases: &[NodeId],
) -> Result<NodeId> {
    let emb = graph.embed_lookup(table, &feats.word_ids)?;
    let tags = graph.leaf_owned(feats.tags.clone())?;
    let x = graph.hstack(emb, tags)?;
    let mut pooled = Vec::new();
    for (k, b) in kernels.iter().zip(biases) {
        let conv = graph.conv1d(x, *k, *b)?;
        let act = graph.relu(conv)?;
        pooled.push(graph.max_over_time(act)?);
    }
    graph.concat(&pooled)
}

pub struct ForwardOut {
    pub loss: NodeId,
    pub probs: Vec<f64>,
    /// block, e1, e2 representation nodes, for inspection.
    pub reprs: [NodeId; 3],
}

/// Full forward pass for one instance. `dropout_mask`, when given, scales
/// the concatenated representation before the hidden layer.
pub fn forward(
    graph: &mut Graph,
    nodes: &ParamNodes,
    feats: &InstanceFeatures,
    dropout_mask: Option<&[f64]>,
) -> Result<ForwardOut> {
    let b = encode(
        graph,
        nodes.word_table,
        &feats.block,
        &nodes.encoders[0].0,
        &nodes.encoders[0].1,
    )?;
    let v1 = encode(
        graph,
        nodes.word_table,
        &feats.e1,
        &nodes.encoders[1].0,
        &nodes.encoders[1].1,
    )?;
    let v2 = encode(
        graph,
        nodes.word_table,
        &feats.e2,
        &nodes.encoders[2].0,
        &nodes.encoders[2].1,
    )?;
    let sub = graph.subtract3(b, v1, v2)?;
    let mul = graph.hadamard(v1, v2)?;
    let mut s = graph.concat(&[b, v1, v2, sub, mul])?;
    if let Some(mask) = dropout_mask {
        s = graph.mul_mask(s, mask)?;
    }
    let h = graph.dense(s, nodes.hidden_w, nodes.hidden_b, Activation::Relu)?;
    let logits = graph.dense(h, nodes.out_w, nodes.out_b, Activation::Identity)?;
    let (loss, probs) = graph.softmax_xent(logits, feats.label_id)?;
    Ok(ForwardOut {
        loss,
        probs,
        reprs: [b, v1, v2],
    })
}

/// Checks the analytic end-to-end gradients against central differences
/// on a mean loss over `feats`, with an optional fixed dropout mask
/// exercising the masking path. Returns the maximum relative error.
pub fn model_gradient_check(
    cfg: &ModelConfig,
    feats: &[InstanceFeatures],
    vocab_size: usize,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if feats.is_empty() {
        return Err(Error::Shape("gradient check: no instances".into()));
    }
    let mut params = ModelParams::init(cfg, vocab_size, None)?;
    // Nudge every parameter off exact zeros: zero-initialized biases put
    // padding windows exactly on the relu kink, where central differences
    // and the (sub)gradient legitimately disagree.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
    }
    let masks: Vec<Vec<f64>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        feats
            .iter()
            .map(|_| dropout_mask(&mut rng, cfg.concat_dim(), cfg.dropout))
            .collect()
    };

    let mean_loss = |graph: &mut Graph, nodes: &ParamNodes| -> Result<NodeId> {
        let mut losses = Vec::with_capacity(feats.len());
        for (f, mask) in feats.iter().zip(&masks) {
            losses.push(forward(graph, nodes, f, Some(mask))?.loss);
        }
        graph.mean_scalars(&losses)
    };

    // analytic gradients, in canonical parameter order
    let mut graph = Graph::new();
    let nodes = ParamNodes::insert(&mut graph, &params)?;
    let loss = mean_loss(&mut graph, &nodes)?;
    let mut grads = graph.backward(loss)?;
    let analytic: Vec<Tensor> = nodes
        .ids()
        .iter()
        .zip(params.named())
        .map(|(id, (_, t))| {
            grads[id.index()]
                .take()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let flat: Vec<Tensor> = params.named().iter().map(|(_, t)| (***t).clone()).collect();
    let cfg2 = cfg.clone();
    let f = move |ts: &[Tensor]| -> f64 {
        let p = ModelParams::from_tensors(&cfg2, ts.to_vec()).expect("shapes fixed");
        let mut g = Graph::new();
        let n = ParamNodes::insert(&mut g, &p).expect("insert");
        let mut losses = Vec::with_capacity(feats.len());
        for (f, mask) in feats.iter().zip(&masks) {
            losses.push(forward(&mut g, &n, f, Some(mask)).expect("forward").loss);
        }
        let l = g.mean_scalars(&losses).expect("mean");
        g.value(l).item()
    };
    Ok(crate::tensor::grad_check(f, &flat, &analytic, eps, max_coords, seed))
}

/// Inverted-dropout mask: entries are 0 or 1/(1-rate).
pub fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn mini_config(num_classes: usize) -> ModelConfig {
        ModelConfig {
            d_w: 4,
            kernel_widths: vec![2, 3],
            filters: 3,
            hidden_dim: 5,
            num_classes,
            max_block_len: 10,
            max_entity_len: 4,
            dropout: 0.0,
            seed: 9,
            ..ModelConfig::default()
        }
    }

    fn mini_features(cfg: &ModelConfig) -> (Vec<InstanceFeatures>, usize) {
        let corpus = synth::generate(3, 6, 2, cfg.num_classes);
        let ds = synth::build_dataset(&corpus).unwrap();
        let feats: Vec<InstanceFeatures> = ds
            .train
            .iter()
            .map(|i| build_features(i, &ds.vocab, cfg).unwrap())
            .collect();
        (feats, ds.vocab.words.len())
    }

    #[test]
    fn featurize_single_token_row_layout() {
        let cfg = mini_config(3);
        let f = featurize(&[7], &[2], &[1], &[0], &cfg, 10).unwrap();
        // padded up to the max kernel width
        assert_eq!(f.word_ids.len(), 3);
        assert_eq!(f.tags.shape(), &[3, cfg.d_dep + cfg.d_pos]);
        assert_eq!(f.true_len, 1);
        assert_eq!(f.tags.at2(0, 2), 1.0);
        assert_eq!(f.tags.at2(0, cfg.d_dep + 1), 1.0);
        let row0_ones: f64 = (0..cfg.d_dep + cfg.d_pos).map(|j| f.tags.at2(0, j)).sum();
        assert_eq!(row0_ones, 2.0); // one per one-hot segment
        // padding rows all zero
        for r in 1..3 {
            assert_eq!(f.word_ids[r], 0);
            let s: f64 = (0..cfg.d_dep + cfg.d_pos).map(|j| f.tags.at2(r, j)).sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn featurize_truncates_centered_on_entities() {
        let cfg = mini_config(3);
        let n = 20;
        let words: Vec<usize> = (0..n).collect();
        let roles = vec![0usize; n];
        let pos = vec![0usize; n];
        let f = featurize(&words, &roles, &pos, &[15, 16], &cfg, 10).unwrap();
        assert!(f.truncated);
        assert_eq!(f.word_ids.len(), 10);
        // window centered on position 15, clamped to the tail
        assert!(f.word_ids.contains(&15) && f.word_ids.contains(&16));
    }

    #[test]
    fn forward_probs_sum_to_one_and_deterministic() {
        let cfg = mini_config(3);
        let (feats, vs) = mini_features(&cfg);
        let params = ModelParams::init(&cfg, vs, None).unwrap();
        let run = || {
            let mut g = Graph::new();
            let nodes = ParamNodes::insert(&mut g, &params).unwrap();
            forward(&mut g, &nodes, &feats[0], None).unwrap().probs
        };
        let p1 = run();
        let p2 = run();
        assert_eq!(p1, p2);
        let sum: f64 = p1.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p1.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn constant_output_bias_shift_keeps_argmax() {
        let cfg = mini_config(4);
        let (feats, vs) = mini_features(&cfg);
        let params = ModelParams::init(&cfg, vs, None).unwrap();
        let probs_of = |params: &ModelParams| {
            let mut g = Graph::new();
            let nodes = ParamNodes::insert(&mut g, params).unwrap();
            forward(&mut g, &nodes, &feats[0], None).unwrap().probs
        };
        let base = probs_of(&params);
        let mut shifted = params.clone();
        for v in std::rc::Rc::make_mut(&mut shifted.out_b).data_mut() {
            *v += 3.7;
        }
        let after = probs_of(&shifted);
        let arg = |p: &[f64]| {
            p.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(arg(&base), arg(&after));
    }

    #[test]
    fn subtract_layer_is_block_repr_when_entity_encoders_vanish() {
        let cfg = mini_config(3);
        let (feats, vs) = mini_features(&cfg);
        let mut params = ModelParams::init(&cfg, vs, None).unwrap();
        // zero the e1/e2 encoder parameters so v1 = v2 = relu(0) pooled = 0
        for enc in &mut params.encoders[1..] {
            for k in &mut enc.kernels {
                for v in std::rc::Rc::make_mut(k).data_mut() {
                    *v = 0.0;
                }
            }
        }
        let mut g = Graph::new();
        let nodes = ParamNodes::insert(&mut g, &params).unwrap();
        let out = forward(&mut g, &nodes, &feats[0], None).unwrap();
        let [b, v1, v2] = out.reprs;
        assert!(g.value(v1).data().iter().all(|&v| v == 0.0));
        assert!(g.value(v2).data().iter().all(|&v| v == 0.0));
        // s layout: [b, v1, v2, b-v1-v2, v1*v2]; reconstruct the subtract slot
        let mut g2 = Graph::new();
        let nodes2 = ParamNodes::insert(&mut g2, &params).unwrap();
        let out2 = forward(&mut g2, &nodes2, &feats[0], None).unwrap();
        let _ = out2;
        let bdata = g.value(b).data().to_vec();
        let sub = g.subtract3(b, v1, v2).unwrap();
        assert_eq!(g.value(sub).data(), bdata.as_slice());
    }

    #[test]
    fn swapping_entities_swaps_repr_slots_but_not_hadamard() {
        let cfg = mini_config(3);
        let (feats, vs) = mini_features(&cfg);
        let params = ModelParams::init(&cfg, vs, None).unwrap();
        // share conv params across e1/e2 so the swap is observable
        let mut shared = params.clone();
        shared.encoders[2] = shared.encoders[1].clone();
        let mut swapped_feats = feats[0].clone();
        std::mem::swap(&mut swapped_feats.e1, &mut swapped_feats.e2);
        let reprs = |f: &InstanceFeatures| {
            let mut g = Graph::new();
            let nodes = ParamNodes::insert(&mut g, &shared).unwrap();
            let out = forward(&mut g, &nodes, f, None).unwrap();
            let [b, v1, v2] = out.reprs;
            (
                g.value(b).data().to_vec(),
                g.value(v1).data().to_vec(),
                g.value(v2).data().to_vec(),
            )
        };
        let (b1, v1a, v2a) = reprs(&feats[0]);
        let (b2, v1b, v2b) = reprs(&swapped_feats);
        assert_eq!(b1, b2);
        assert_eq!(v1a, v2b);
        assert_eq!(v2a, v1b);
        let had_a: Vec<f64> = v1a.iter().zip(&v2a).map(|(x, y)| x * y).collect();
        let had_b: Vec<f64> = v1b.iter().zip(&v2b).map(|(x, y)| x * y).collect();
        assert_eq!(had_a, had_b);
    }

    #[test]
    fn zero_input_encode_is_length_independent() {
        // all-zero rows: conv output is the bias everywhere, pooling erases L
        let cfg = mini_config(3);
        let params = ModelParams::init(&cfg, 8, None).unwrap();
        let encode_len = |rows: usize| {
            let mut g = Graph::new();
            let nodes = ParamNodes::insert(&mut g, &params).unwrap();
            let f = Features {
                word_ids: vec![0; rows],
                tags: Tensor::zeros(&[rows, cfg.d_dep + cfg.d_pos]),
                true_len: 0,
                truncated: false,
            };
            let e = encode(&mut g, nodes.word_table, &f, &nodes.encoders[0].0, &nodes.encoders[0].1)
                .unwrap();
            g.value(e).data().to_vec()
        };
        assert_eq!(encode_len(4), encode_len(9));
    }

    #[test]
    fn padding_rows_beyond_max_width_do_not_change_encode() {
        // negative biases keep relu(bias)=0 at padding positions, so real
        // activations dominate and extra zero rows are invisible
        let cfg = mini_config(3);
        let mut params = ModelParams::init(&cfg, 8, None).unwrap();
        for enc in &mut params.encoders {
            for b in &mut enc.biases {
                for v in std::rc::Rc::make_mut(b).data_mut() {
                    *v = -0.1;
                }
            }
        }
        let tag_dim = cfg.d_dep + cfg.d_pos;
        let mk = |rows: usize| {
            // single real token: every window added by extra padding is
            // all-zero, so it contributes relu(bias) = 0 to the pooled max
            let mut tags = Tensor::zeros(&[rows, tag_dim]);
            tags.data_mut()[0] = 5.0;
            let mut word_ids = vec![0; rows];
            word_ids[0] = 2;
            Features {
                word_ids,
                tags,
                true_len: 1,
                truncated: false,
            }
        };
        let run = |f: &Features| {
            let mut g = Graph::new();
            let nodes = ParamNodes::insert(&mut g, &params).unwrap();
            let e = encode(&mut g, nodes.word_table, f, &nodes.encoders[0].0, &nodes.encoders[0].1)
                .unwrap();
            g.value(e).data().to_vec()
        };
        let short = run(&mk(3));
        let padded = run(&mk(7));
        let close = short
            .iter()
            .zip(&padded)
            .all(|(a, b)| (a - b).abs() < 1e-12 || (*a == 0.0 && *b == 0.0));
        assert!(close);
    }

    #[test]
    fn init_is_deterministic_and_respects_padding_row() {
        let cfg = mini_config(3);
        let a = ModelParams::init(&cfg, 10, None).unwrap();
        let b = ModelParams::init(&cfg, 10, None).unwrap();
        for ((_, ta), (_, tb)) in a.named().iter().zip(b.named()) {
            assert_eq!(ta.data(), tb.data());
        }
        assert!(a.word_table.data()[..cfg.d_w].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_mask_values_and_zero_rate() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mask = dropout_mask(&mut rng, 1000, 0.5);
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 2.0).abs() < 1e-12));
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!(kept > 350 && kept < 650);
        let none = dropout_mask(&mut rng, 10, 0.0);
        assert!(none.iter().all(|&m| m == 1.0));
    }
}
