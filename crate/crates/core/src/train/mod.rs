//! Mini-batched training loop with seeded shuffling and dropout, early
//! stopping on eval macro-F1, evaluation and probability-averaging
//! ensembles, and the with/without-children ablation runner.

mod metrics;

pub use metrics::{
    base_label, collapse_directions, compute_metrics, confusion_csv, display_order,
    is_unscored_label, macro_f1, ClassScore, Confusion, Metrics, KBP37_CLASS_ORDER,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, EmbeddingTable};
use crate::error::{Error, Result};
use crate::model::{
    build_features, dropout_mask, forward, InstanceFeatures, ModelConfig, ModelParams, ParamNodes,
    TrainMeta,
};
use crate::tensor::{AdamHyper, AdamState, Graph, Tensor};

const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without eval macro-F1 improvement before stopping.
    pub patience: usize,
    pub adam: AdamHyper,
    /// Optional early exit once eval-mode train accuracy reaches this level.
    pub stop_at_train_acc: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            batch_size: 50,
            max_epochs: 100,
            patience: 10,
            adam: AdamHyper::default(),
            stop_at_train_acc: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub eval_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub seed: u64,
    pub rows: Vec<EpochRow>,
    /// Wall-clock seconds per epoch; kept out of the history CSV so that
    /// identical seeds produce bit-identical files.
    pub epoch_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_acc,eval_f1\n");
        for r in &self.rows {
            let f1 = r.eval_f1.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.train_acc, f1));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for (i, s) in self.epoch_seconds.iter().enumerate() {
            out.push_str(&format!("{},{:.3}\n", i + 1, s));
        }
        out
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            0.0
        } else {
            self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
        }
    }
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub meta: TrainMeta,
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode class probabilities for every instance.
pub fn eval_probs(params: &ModelParams, feats: &[InstanceFeatures]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(feats.len());
    for chunk in feats.chunks(EVAL_CHUNK) {
        let mut graph = Graph::new();
        let nodes = ParamNodes::insert(&mut graph, params)?;
        for f in chunk {
            out.push(forward(&mut graph, &nodes, f, None)?.probs);
        }
    }
    Ok(out)
}

fn accuracy(probs: &[Vec<f64>], feats: &[InstanceFeatures]) -> f64 {
    if feats.is_empty() {
        return 0.0;
    }
    let correct = probs
        .iter()
        .zip(feats)
        .filter(|(p, f)| argmax(p) == f.label_id)
        .count();
    correct as f64 / feats.len() as f64
}

/// Evaluates one or more checkpoints. With several parameter sets the
/// softmax distributions are averaged uniformly before the argmax.
pub fn evaluate(
    models: &[&ModelParams],
    feats: &[InstanceFeatures],
    labels: &[String],
) -> Result<Metrics> {
    if models.is_empty() {
        return Err(Error::Shape("evaluate: no models".into()));
    }
    let probs = ensemble_probs(models, feats)?;
    let confusion = Confusion::from_pairs(
        labels.len(),
        probs.iter().zip(feats).map(|(p, f)| (f.label_id, argmax(p))),
    );
    compute_metrics(confusion, labels)
}

/// Uniform mean of per-model softmax outputs.
pub fn ensemble_probs(
    models: &[&ModelParams],
    feats: &[InstanceFeatures],
) -> Result<Vec<Vec<f64>>> {
    let mut acc: Vec<Vec<f64>> = Vec::new();
    for (mi, params) in models.iter().enumerate() {
        let probs = eval_probs(params, feats)?;
        if mi == 0 {
            acc = probs;
        } else {
            for (a, p) in acc.iter_mut().zip(&probs) {
                if a.len() != p.len() {
                    return Err(Error::Shape("ensemble: class count mismatch".into()));
                }
                for (av, pv) in a.iter_mut().zip(p) {
                    *av += pv;
                }
            }
        }
    }
    let k = models.len() as f64;
    for row in acc.iter_mut() {
        for v in row.iter_mut() {
            *v /= k;
        }
    }
    Ok(acc)
}

/// Deterministic training given (config, options, data): fixed init, fixed
/// shuffles, fixed dropout. Retains the best-eval checkpoint.
pub fn train(
    cfg: &ModelConfig,
    opts: &TrainOptions,
    train_set: &[InstanceFeatures],
    eval_set: &[InstanceFeatures],
    vocab_size: usize,
    embeddings: Option<&EmbeddingTable>,
    scored_labels: &[bool],
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Shape("train: empty training set".into()));
    }
    cfg.validate()?;
    let mut params = ModelParams::init(cfg, vocab_size, embeddings)?;
    let shapes: Vec<Vec<usize>> = params
        .named()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::new(&shape_refs, opts.adam);

    let mut history = TrainHistory {
        seed: cfg.seed,
        ..TrainHistory::default()
    };
    let mut best: Option<(f64, ModelParams, usize)> = None;
    let mut final_loss = f64::NAN;

    for epoch in 1..=opts.max_epochs {
        let started = Instant::now();
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let mut graph = Graph::new();
            let nodes = ParamNodes::insert(&mut graph, &params)?;
            let mut losses = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let mask = dropout_mask(&mut rng, cfg.concat_dim(), cfg.dropout);
                let out = forward(&mut graph, &nodes, &train_set[idx], Some(&mask))?;
                losses.push(out.loss);
            }
            let batch_loss = graph.mean_scalars(&losses)?;
            let loss_val = graph.value(batch_loss).item();
            if !loss_val.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss_val * chunk.len() as f64;

            let mut grads = graph.backward(batch_loss)?;
            let param_ids = nodes.ids();
            let mut grad_tensors: Vec<Option<Tensor>> = Vec::with_capacity(param_ids.len());
            for (pi, id) in param_ids.iter().enumerate() {
                let mut g = grads[id.index()].take();
                if pi == 0 {
                    if cfg.freeze_word_embeddings {
                        g = None;
                    } else if let Some(g) = g.as_mut() {
                        // the padding row stays zero
                        for v in g.data_mut()[..cfg.d_w].iter_mut() {
                            *v = 0.0;
                        }
                    }
                }
                grad_tensors.push(g);
            }
            drop(grads);
            drop(graph);
            let mut param_refs = params.tensors_mut();
            let grad_refs: Vec<Option<&Tensor>> =
                grad_tensors.iter().map(|g| g.as_ref()).collect();
            adam.step(&mut param_refs, &grad_refs)?;
        }
        let epoch_loss = loss_sum / train_set.len() as f64;
        final_loss = epoch_loss;

        let train_probs = eval_probs(&params, train_set)?;
        let train_acc = accuracy(&train_probs, train_set);
        let eval_f1 = if eval_set.is_empty() {
            None
        } else {
            let probs = eval_probs(&params, eval_set)?;
            let confusion = Confusion::from_pairs(
                scored_labels.len(),
                probs.iter().zip(eval_set).map(|(p, f)| (f.label_id, argmax(p))),
            );
            Some(macro_f1(&confusion, scored_labels)?)
        };

        history.rows.push(EpochRow {
            epoch,
            loss: epoch_loss,
            train_acc,
            eval_f1,
        });
        history.epoch_seconds.push(started.elapsed().as_secs_f64());

        let selection = eval_f1.unwrap_or(train_acc);
        let improved = best.as_ref().map(|(b, _, _)| selection > *b).unwrap_or(true);
        if improved {
            best = Some((selection, params.clone(), epoch));
        } else if let Some((_, _, best_epoch)) = &best {
            if epoch - best_epoch >= opts.patience {
                break;
            }
        }
        if let Some(target) = opts.stop_at_train_acc {
            if train_acc >= target {
                break;
            }
        }
    }

    let (_, best_params, _) = best.expect("at least one epoch ran");
    let meta = TrainMeta {
        epochs: history.rows.len(),
        final_loss,
        seed: cfg.seed,
    };
    Ok(TrainOutcome {
        params: best_params,
        history,
        meta,
    })
}

/// Featurizes a whole split under the given config.
pub fn featurize_split(
    instances: &[crate::corpus::SentenceInstance],
    vocab: &crate::corpus::Vocab,
    cfg: &ModelConfig,
) -> Result<Vec<InstanceFeatures>> {
    instances
        .iter()
        .map(|inst| build_features(inst, vocab, cfg))
        .collect()
}

#[derive(Serialize)]
pub struct AblationReport {
    pub with_children: Metrics,
    pub without_children: Metrics,
    pub macro_f1_delta: f64,
    pub with_mean_epoch_seconds: f64,
    pub without_mean_epoch_seconds: f64,
}

/// Trains both block variants under identical seeds and reports paired
/// test metrics.
pub fn ablation(
    cfg: &ModelConfig,
    opts: &TrainOptions,
    dataset: &Dataset,
    embeddings: Option<&EmbeddingTable>,
) -> Result<AblationReport> {
    let labels = dataset.vocab.labels.items().to_vec();
    let scored: Vec<bool> = labels.iter().map(|l| !is_unscored_label(l)).collect();
    let run = |include_children: bool| -> Result<(Metrics, f64)> {
        let mut variant = cfg.clone();
        variant.include_children = include_children;
        let train_feats = featurize_split(&dataset.train, &dataset.vocab, &variant)?;
        let test_feats = featurize_split(&dataset.test, &dataset.vocab, &variant)?;
        let outcome = train(
            &variant,
            opts,
            &train_feats,
            &test_feats,
            dataset.vocab.words.len(),
            embeddings,
            &scored,
        )?;
        let metrics = evaluate(&[&outcome.params], &test_feats, &labels)?;
        Ok((metrics, outcome.history.mean_epoch_seconds()))
    };
    let (with_children, with_secs) = run(true)?;
    let (without_children, without_secs) = run(false)?;
    let delta = with_children.macro_f1 - without_children.macro_f1;
    Ok(AblationReport {
        with_children,
        without_children,
        macro_f1_delta: delta,
        with_mean_epoch_seconds: with_secs,
        without_mean_epoch_seconds: without_secs,
    })
}
