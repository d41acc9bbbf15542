use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{loss_ablation_select, LossBreakdown, LossVariant, NeighborhoodPredictor, Predictor};
use crate::error::{Error, Result};
use crate::masking::{apply_commit_mask, sample_training_mask, Schedule};
use crate::tasks::{build_condition, TaskId, TaskParams};
use crate::tokenizer::{encode_condition, Codebook, ConditionTokens, TokenLattice};
use crate::lattice::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain gradient descent with a fixed step.
    Sgd,
    /// Adaptive moments with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub variant: LossVariant,
    pub optimizer: Optimizer,
    /// Tasks sampled uniformly at every step.
    pub tasks: Vec<TaskId>,
    pub task_params: TaskParams,
    pub schedule: Schedule,
    /// Examples per step; losses and gradients are averaged over the batch.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 0.003,
            seed: 0,
            variant: LossVariant::Full,
            optimizer: Optimizer::adam(),
            tasks: TaskId::ALL.to_vec(),
            task_params: TaskParams::default(),
            schedule: Schedule::Cosine,
            batch_size: 16,
        }
    }
}

/// One training video with its ground-truth tokens and class label.
#[derive(Debug, Clone)]
pub struct TrainingClip {
    pub video: VideoTensor,
    pub tokens: TokenLattice,
    pub label: u32,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Trains `pred` in place and returns the loss breakdown recorded at every step
/// (evaluated before that step's update).
///
/// Each step draws `batch_size` (clip, task) pairs. For each pair the task's
/// condition is built and quantized, a training mask is drawn and the clip's
/// tokens are corrupted with the multivariate rule; one gradient step is then
/// taken on the batch-mean of the configured loss variant.
pub fn train(
    pred: &mut NeighborhoodPredictor,
    corpus: &[TrainingClip],
    codebook: &Codebook,
    cfg: &TrainConfig,
) -> Result<Vec<LossBreakdown>> {
    if corpus.is_empty() {
        return Err(Error::config("training corpus is empty"));
    }
    if cfg.tasks.is_empty() {
        return Err(Error::config("training task set is empty"));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::config(format!(
            "learning rate {} must be positive",
            cfg.learning_rate
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if pred.vocab().codebook_size() != codebook.size() {
        return Err(Error::config(format!(
            "predictor vocabulary of {} codes does not match codebook of {}",
            pred.vocab().codebook_size(),
            codebook.size()
        )));
    }
    let vocab = *pred.vocab();
    for clip in corpus {
        if clip.label as usize >= vocab.num_classes() && cfg.tasks.iter().any(|t| t.needs_label()) {
            return Err(Error::config(format!(
                "clip label {} outside {} classes",
                clip.label,
                vocab.num_classes()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut conditions: HashMap<(usize, TaskId), ConditionTokens> = HashMap::new();
    let mut adam = AdamState {
        m: vec![0.0; pred.params().len()],
        v: vec![0.0; pred.params().len()],
        t: 0,
    };
    let mut curve = Vec::with_capacity(cfg.steps);

    let mut grad = vec![0.0; pred.params().len()];
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = LossBreakdown::default();
        for _ in 0..cfg.batch_size {
            let ci = rng.gen_range(0..corpus.len());
            let task = cfg.tasks[rng.gen_range(0..cfg.tasks.len())];
            let clip = &corpus[ci];
            let label = task.needs_label().then_some(clip.label);
            let latent = clip.tokens.latent;

            let cond = match conditions.entry((ci, task)) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let cv = build_condition(task, &clip.video, &cfg.task_params, label)?;
                    e.insert(encode_condition(&cv, codebook, &latent)?)
                }
            };

            let mask = sample_training_mask(latent.n(), &cfg.schedule, &mut rng);
            let corrupted = apply_commit_mask(
                &clip.tokens.tokens,
                cond,
                &mask.scores.scores,
                mask.s_star,
                vocab.mask_id(),
            )?;
            let (l, g) =
                pred.loss_and_grad(task, label, &corrupted, &clip.tokens.tokens, &latent, cfg.variant)?;
            loss.refine += l.refine;
            loss.mask += l.mask;
            loss.recons += l.recons;
            loss.total += l.total;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let scale = 1.0 / cfg.batch_size as f64;
        loss.refine *= scale;
        loss.mask *= scale;
        loss.recons *= scale;
        loss.total *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);

        let objective = loss_ablation_select(&loss, cfg.variant);
        if !objective.is_finite() {
            return Err(Error::Training {
                step,
                loss: objective,
            });
        }
        curve.push(loss);

        let lr = cfg.learning_rate;
        let theta = pred.params_mut();
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in theta.iter_mut().zip(&grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                adam.t += 1;
                let c1 = 1.0 - beta1.powi(adam.t);
                let c2 = 1.0 - beta2.powi(adam.t);
                for (j, (p, &g)) in theta.iter_mut().zip(&grad).enumerate() {
                    adam.m[j] = beta1 * adam.m[j] + (1.0 - beta1) * g;
                    adam.v[j] = beta2 * adam.v[j] + (1.0 - beta2) * g * g;
                    *p -= lr * (adam.m[j] / c1) / ((adam.v[j] / c2).sqrt() + eps);
                }
            }
        }
        if let Some(bad) = theta.iter().position(|p| !p.is_finite()) {
            return Err(Error::Training {
                step,
                loss: theta[bad],
            });
        }
    }
    Ok(curve)
}
