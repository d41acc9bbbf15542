//! Dataset → codebook → predictor → decode → metrics, shared by the CLI and tests.

use std::ops::Range;

use crate::config::{DecodeMethod, PredictorKind, RunConfig};
use crate::decode::{ar_decode, commit_decode, latent_masking_decode, splitmix64, DecodeConfig, DecodeTrace};
use crate::error::{Error, Result};
use crate::formats::Dataset;
use crate::model::{
    train, LossBreakdown, NeighborhoodPredictor, OraclePredictor, Predictor, TrainConfig, TrainingClip,
    UniformPredictor, Vocabulary,
};
use crate::tasks::{build_condition, condition_fraction, TaskId};
use crate::tokenizer::{decode, encode, encode_condition, fit_codebook_with, psnr, Codebook, KMeansConfig, TokenLattice};
use crate::lattice::VideoTensor;

/// Training and evaluation clip ranges of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub eval: Range<usize>,
}

/// The last `holdout` clips are excluded from training; evaluation uses the
/// last `eval_clips` of them (or of the whole set when nothing is held out).
pub fn split(count: usize, holdout: usize, eval_clips: usize) -> Result<Split> {
    if holdout >= count {
        return Err(Error::config(format!(
            "model.holdout {holdout} leaves no training clips out of {count}"
        )));
    }
    let pool = if holdout == 0 { count } else { holdout };
    let eval = eval_clips.min(pool);
    Ok(Split {
        train: 0..count - holdout,
        eval: count - eval..count,
    })
}

pub fn fit_vq(cfg: &RunConfig, ds: &Dataset, train: Range<usize>) -> Result<Codebook> {
    fit_codebook_with(
        &ds.clips[train],
        cfg.model.codebook_size,
        &cfg.model.latent,
        cfg.seed,
        KMeansConfig {
            max_iters: cfg.model.kmeans_iters,
        },
    )
}

pub fn encode_clips(ds: &Dataset, range: Range<usize>, cb: &Codebook, cfg: &RunConfig) -> Result<Vec<TrainingClip>> {
    range
        .map(|i| {
            Ok(TrainingClip {
                video: ds.clips[i].clone(),
                tokens: encode(&ds.clips[i], cb, &cfg.model.latent)?,
                label: ds.labels[i],
            })
        })
        .collect()
}

pub fn vocabulary(cfg: &RunConfig) -> Result<Vocabulary> {
    Vocabulary::new(cfg.model.codebook_size, cfg.model.classes)
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        steps: cfg.model.train_steps,
        learning_rate: cfg.model.learning_rate,
        seed: cfg.seed,
        variant: cfg.model.loss,
        optimizer: cfg.model.optimizer,
        tasks: cfg.tasks.clone(),
        task_params: cfg.task_params,
        schedule: cfg.decode.decode.schedule,
        batch_size: cfg.model.batch_size,
    }
}

/// Fresh predictor trained on `corpus`.
pub fn train_predictor(
    cfg: &RunConfig,
    corpus: &[TrainingClip],
    cb: &Codebook,
) -> Result<(NeighborhoodPredictor, Vec<LossBreakdown>)> {
    let mut pred = NeighborhoodPredictor::random(
        vocabulary(cfg)?,
        cfg.model.dim,
        cfg.model.radius,
        cfg.seed,
        cfg.model.init_scale,
    )?;
    let curve = train(&mut pred, corpus, cb, &train_config(cfg))?;
    Ok((pred, curve))
}

/// Seed of the decode run for (`task`, `clip`).
pub fn run_seed(base: u64, task: TaskId, clip: usize) -> u64 {
    splitmix64(splitmix64(base ^ task.index() as u64) ^ clip as u64)
}

/// Where per-clip predictions come from.
#[derive(Debug, Clone, Copy)]
pub enum PredictorSource<'a> {
    Trained(&'a NeighborhoodPredictor),
    Oracle,
    Uniform,
}

impl<'a> PredictorSource<'a> {
    pub fn from_kind(kind: PredictorKind, trained: Option<&'a NeighborhoodPredictor>) -> Result<Self> {
        match kind {
            PredictorKind::Checkpoint => trained
                .map(PredictorSource::Trained)
                .ok_or_else(|| Error::config("a trained checkpoint is required")),
            PredictorKind::Oracle => Ok(PredictorSource::Oracle),
            PredictorKind::Uniform => Ok(PredictorSource::Uniform),
        }
    }
}

/// One conditional generation.
#[derive(Debug, Clone)]
pub struct Generation {
    pub truth: TokenLattice,
    pub tokens: TokenLattice,
    /// Empty for autoregressive decoding.
    pub trace: DecodeTrace,
    pub video: VideoTensor,
    /// Positions whose supervoxel carries no condition pixels.
    pub generated: Vec<bool>,
}

impl Generation {
    pub fn accuracy(&self) -> f64 {
        let hits = self.tokens.tokens.iter().zip(&self.truth.tokens).filter(|(a, b)| a == b).count();
        hits as f64 / self.truth.len() as f64
    }

    /// Accuracy over generated positions; `None` when the condition covers every position.
    pub fn generated_accuracy(&self) -> Option<f64> {
        let (mut hits, mut total) = (0usize, 0usize);
        for i in 0..self.truth.len() {
            if self.generated[i] {
                total += 1;
                hits += (self.tokens.tokens[i] == self.truth.tokens[i]) as usize;
            }
        }
        (total > 0).then(|| hits as f64 / total as f64)
    }
}

fn run_decode<P: Predictor + ?Sized>(
    pred: &P,
    task: TaskId,
    label: Option<u32>,
    cond: &crate::tokenizer::ConditionTokens,
    decode_cfg: &DecodeConfig,
    method: DecodeMethod,
) -> Result<(TokenLattice, DecodeTrace)> {
    match method {
        DecodeMethod::Commit => commit_decode(pred, task, label, cond, decode_cfg),
        DecodeMethod::LatentMasking => latent_masking_decode(pred, task, label, cond, decode_cfg),
        DecodeMethod::Autoregressive => {
            let (tokens, _) = ar_decode(pred, task, label, cond, decode_cfg.seed)?;
            Ok((tokens, DecodeTrace::default()))
        }
    }
}

/// Conditions clip `index` on `task`, decodes and maps the tokens back to pixels.
pub fn generate(
    cfg: &RunConfig,
    source: PredictorSource<'_>,
    cb: &Codebook,
    ds: &Dataset,
    index: usize,
    task: TaskId,
) -> Result<Generation> {
    let video = ds
        .clips
        .get(index)
        .ok_or_else(|| Error::domain(format!("clip {index} outside dataset of {}", ds.clips.len())))?;
    let latent = cfg.model.latent;
    let label = cfg.label_for(task, Some(ds.labels[index]));
    let truth = encode(video, cb, &latent)?;
    let cv = build_condition(task, video, &cfg.task_params, label)?;
    let cond = encode_condition(&cv, cb, &latent)?;
    let decode_cfg = DecodeConfig {
        seed: run_seed(cfg.seed, task, index),
        ..cfg.decode.decode
    };
    let vocab = vocabulary(cfg)?;
    let (tokens, trace) = match source {
        PredictorSource::Trained(p) => {
            if *p.vocab() != vocab {
                return Err(Error::config(format!(
                    "checkpoint vocabulary ({} codes, {} classes) does not match the configuration ({}, {})",
                    p.vocab().codebook_size(),
                    p.vocab().num_classes(),
                    vocab.codebook_size(),
                    vocab.num_classes()
                )));
            }
            run_decode(p, task, label, &cond, &decode_cfg, cfg.decode.method)?
        }
        PredictorSource::Oracle => {
            let p = OraclePredictor::new(vocab, truth.clone())?;
            run_decode(&p, task, label, &cond, &decode_cfg, cfg.decode.method)?
        }
        PredictorSource::Uniform => {
            let p = UniformPredictor::new(vocab);
            run_decode(&p, task, label, &cond, &decode_cfg, cfg.decode.method)?
        }
    };
    let out = decode(&tokens, cb, &video.dims())?;
    Ok(Generation {
        truth,
        tokens,
        trace,
        video: out,
        generated: cond.allpadded,
    })
}

/// Mean metrics of one task over the evaluation clips.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub task: TaskId,
    pub condition_fraction: f64,
    pub token_accuracy: f64,
    /// `None` when no position is generated.
    pub generated_accuracy: Option<f64>,
    pub psnr: f64,
}

pub fn evaluate(
    cfg: &RunConfig,
    source: PredictorSource<'_>,
    cb: &Codebook,
    ds: &Dataset,
    clips: Range<usize>,
    task: TaskId,
) -> Result<EvalRow> {
    if clips.is_empty() {
        return Err(Error::config("no evaluation clips"));
    }
    let n = clips.len() as f64;
    let (mut acc, mut gen_acc, mut gen_n, mut db) = (0.0, 0.0, 0usize, 0.0);
    for i in clips {
        let g = generate(cfg, source, cb, ds, i, task)?;
        acc += g.accuracy();
        if let Some(a) = g.generated_accuracy() {
            gen_acc += a;
            gen_n += 1;
        }
        db += psnr(&g.video, &ds.clips[i])?;
    }
    Ok(EvalRow {
        task,
        condition_fraction: condition_fraction(task, &cfg.data.dims, &cfg.task_params)?,
        token_accuracy: acc / n,
        generated_accuracy: (gen_n > 0).then(|| gen_acc / gen_n as f64),
        psnr: db / n,
    })
}

pub fn eval_table(rows: &[EvalRow]) -> String {
    let mut out = String::from("task,condition_fraction,token_accuracy,generated_accuracy,psnr\n");
    for r in rows {
        let gen = r.generated_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        out.push_str(&format!(
            "{},{:.4},{:.4},{},{:.2}\n",
            r.task, r.condition_fraction, r.token_accuracy, gen, r.psnr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_ranges() {
        assert_eq!(split(10, 3, 8).unwrap(), Split { train: 0..7, eval: 7..10 });
        assert_eq!(split(10, 0, 4).unwrap(), Split { train: 0..10, eval: 6..10 });
        assert!(split(3, 3, 1).is_err());
    }

    #[test]
    fn run_seeds_differ() {
        assert_ne!(run_seed(0, TaskId::FP, 0), run_seed(0, TaskId::FP, 1));
        assert_ne!(run_seed(0, TaskId::FP, 0), run_seed(0, TaskId::FI, 0));
        assert_eq!(run_seed(5, TaskId::CG, 2), run_seed(5, TaskId::CG, 2));
    }
}
