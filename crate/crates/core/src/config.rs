//! `key = value` run configuration with `[task]`, `[model]`, `[decode]` and
//! `[data]` sections. Keys before the first section header are global.
//! `#` starts a comment; there is no nesting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decode::DecodeConfig;
use crate::error::{Error, Result};
use crate::lattice::{Dims3, LatentDims};
use crate::masking::Schedule;
use crate::model::{LossVariant, Optimizer};
use crate::synth::{Motif, SyntheticSpec};
use crate::tasks::{TaskId, TaskParams};

const SECTIONS: [&str; 5] = ["", "data", "task", "model", "decode"];

/// Raw parsed file: section name to key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::usage(format!("line {}: unterminated section header", lineno + 1)))?
                    .trim();
                if !SECTIONS.contains(&name) || name.is_empty() {
                    return Err(Error::usage(format!("line {}: unknown section [{name}]", lineno + 1)));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::usage(format!("line {}: empty key", lineno + 1)));
            }
            let prev = cfg
                .sections
                .entry(section.clone())
                .or_default()
                .insert(key.to_string(), value.trim().to_string());
            if prev.is_some() {
                return Err(Error::usage(format!(
                    "line {}: duplicate key {}",
                    lineno + 1,
                    qualified(&section, key)
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    fn get<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::usage(format!("invalid value {v:?} for {}", qualified(section, key)))
            }),
        }
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("", &["seed", "out", "dataset", "codebook", "checkpoint"]),
    (
        "data",
        &["motif", "count", "frames", "height", "width", "channels", "square", "velocity_row", "velocity_col"],
    ),
    (
        "task",
        &["tasks", "task", "label", "fp_frames", "fi_head", "fi_tail", "frac_h", "frac_w"],
    ),
    (
        "model",
        &[
            "latent_t", "latent_h", "latent_w", "codebook_size", "kmeans_iters", "dim", "radius", "classes",
            "train_steps", "batch_size", "learning_rate", "optimizer", "loss", "init_scale", "holdout", "predictor",
        ],
    ),
    (
        "decode",
        &["steps", "temperature", "schedule", "method", "clips", "snapshots", "seq_len", "seq_len_2d", "ar_steps"],
    ),
];

/// Which predictor `generate`/`eval` use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    /// Trained checkpoint.
    Checkpoint,
    /// One-hot on each clip's ground-truth tokens.
    Oracle,
    Uniform,
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkpoint" | "neighborhood" => Ok(Self::Checkpoint),
            "oracle" => Ok(Self::Oracle),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::usage(format!("unknown predictor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMethod {
    Commit,
    LatentMasking,
    Autoregressive,
}

impl FromStr for DecodeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "commit" => Ok(Self::Commit),
            "latent_masking" => Ok(Self::LatentMasking),
            "ar" => Ok(Self::Autoregressive),
            _ => Err(Error::usage(format!("unknown decode method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub latent: LatentDims,
    pub codebook_size: usize,
    pub kmeans_iters: usize,
    pub dim: usize,
    pub radius: usize,
    pub classes: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub loss: LossVariant,
    pub init_scale: f64,
    /// Clips at the end of the dataset excluded from training.
    pub holdout: usize,
    pub predictor: PredictorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeSettings {
    pub decode: DecodeConfig,
    pub method: DecodeMethod,
    /// Clips (from the end of the dataset) used by generate and eval.
    pub clips: usize,
    pub snapshots: bool,
    pub seq_len: usize,
    pub seq_len_2d: usize,
    pub ar_steps: usize,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: PathBuf,
    pub codebook: PathBuf,
    pub checkpoint: PathBuf,
    pub data: SyntheticSpec,
    pub tasks: Vec<TaskId>,
    pub task: TaskId,
    pub label: u32,
    pub task_params: TaskParams,
    pub model: ModelConfig,
    pub decode: DecodeSettings,
}

fn parse_tasks(s: &str) -> Result<Vec<TaskId>> {
    if s.trim() == "all" {
        return Ok(TaskId::ALL.to_vec());
    }
    let tasks = s
        .split(',')
        .map(|t| t.trim().parse::<TaskId>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::usage(format!("task.tasks: {e}")))?;
    if tasks.is_empty() {
        return Err(Error::usage("task.tasks must name at least one task"));
    }
    Ok(tasks)
}

fn parse_optimizer(s: &str) -> Result<Optimizer> {
    match s {
        "sgd" => Ok(Optimizer::Sgd),
        "adam" => Ok(Optimizer::adam()),
        _ => Err(Error::usage(format!("invalid value {s:?} for model.optimizer"))),
    }
}

impl RunConfig {
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        for (section, keys) in &file.sections {
            let known = KNOWN_KEYS
                .iter()
                .find(|(s, _)| s == section)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            for key in keys.keys() {
                if !known.contains(&key.as_str()) {
                    return Err(Error::usage(format!("unknown config key {}", qualified(section, key))));
                }
            }
        }

        let seed = file.get("", "seed", 0u64)?;
        let out = PathBuf::from(file.get("", "out", "out".to_string())?);
        let path = |key: &str, default: &str| -> PathBuf {
            file.raw("", key)
                .map(PathBuf::from)
                .unwrap_or_else(|| out.join(default))
        };
        let dataset = path("dataset", "data.mgds");
        let codebook = path("codebook", "codebook.mgcb");
        let checkpoint = path("checkpoint", "predictor.mgpd");

        let dims = Dims3::new(
            file.get("data", "frames", 16)?,
            file.get("data", "height", 16)?,
            file.get("data", "width", 16)?,
            file.get("data", "channels", 1)?,
        )
        .map_err(|e| Error::usage(format!("data dims: {e}")))?;
        let data = SyntheticSpec {
            dims,
            motif: file.get("data", "motif", Motif::MovingSquare)?,
            count: file.get("data", "count", 500)?,
            seed,
            square: file.get("data", "square", 4)?,
            velocity: (
                file.get("data", "velocity_row", 1i64)?,
                file.get("data", "velocity_col", 1i64)?,
            ),
        };
        data.validate()?;

        let tasks = match file.raw("task", "tasks") {
            Some(s) => parse_tasks(s)?,
            None => TaskId::ALL.to_vec(),
        };
        let d = TaskParams::default();
        let task_params = TaskParams {
            fp_frames: file.get("task", "fp_frames", d.fp_frames)?,
            fi_head: file.get("task", "fi_head", d.fi_head)?,
            fi_tail: file.get("task", "fi_tail", d.fi_tail)?,
            frac_h: file.get("task", "frac_h", d.frac_h)?,
            frac_w: file.get("task", "frac_w", d.frac_w)?,
        };

        let latent = LatentDims::new(
            file.get("model", "latent_t", 4)?,
            file.get("model", "latent_h", 4)?,
            file.get("model", "latent_w", 4)?,
        )
        .map_err(|e| Error::usage(format!("model latent: {e}")))?;
        latent
            .check_compatible(&dims)
            .map_err(|e| Error::usage(format!("model latent: {e}")))?;
        let model = ModelConfig {
            latent,
            codebook_size: file.get("model", "codebook_size", 64)?,
            kmeans_iters: file.get("model", "kmeans_iters", 50)?,
            dim: file.get("model", "dim", 16)?,
            radius: file.get("model", "radius", 1)?,
            classes: file.get("model", "classes", 3)?,
            train_steps: file.get("model", "train_steps", 2000)?,
            batch_size: file.get("model", "batch_size", 16)?,
            learning_rate: file.get("model", "learning_rate", 0.003)?,
            optimizer: parse_optimizer(file.raw("model", "optimizer").unwrap_or("adam"))?,
            loss: file.get("model", "loss", LossVariant::Full)?,
            init_scale: file.get("model", "init_scale", 0.1)?,
            holdout: file.get("model", "holdout", 50)?,
            predictor: file.get("model", "predictor", PredictorKind::Checkpoint)?,
        };
        if model.codebook_size < 2 {
            return Err(Error::usage("model.codebook_size must be at least 2"));
        }
        if model.codebook_size > u16::MAX as usize {
            return Err(Error::usage("model.codebook_size must fit the u16 token format"));
        }
        if model.batch_size == 0 {
            return Err(Error::usage("model.batch_size must be positive"));
        }
        if model.dim == 0 {
            return Err(Error::usage("model.dim must be positive"));
        }
        if !(model.learning_rate.is_finite() && model.learning_rate > 0.0) {
            return Err(Error::usage("model.learning_rate must be positive"));
        }

        let decode = DecodeSettings {
            decode: DecodeConfig {
                steps: file.get("decode", "steps", 12)?,
                temperature: file.get("decode", "temperature", 4.5)?,
                schedule: file.get("decode", "schedule", Schedule::Cosine)?,
                seed,
            },
            method: file.get("decode", "method", DecodeMethod::Commit)?,
            clips: file.get("decode", "clips", 8)?,
            snapshots: file.get("decode", "snapshots", false)?,
            seq_len: file.get("decode", "seq_len", 1024)?,
            seq_len_2d: file.get("decode", "seq_len_2d", 4096)?,
            ar_steps: file.get("decode", "ar_steps", 0)?,
        };
        decode
            .decode
            .validate()
            .map_err(|e| Error::usage(format!("decode: {e}")))?;

        Ok(Self {
            seed,
            out,
            dataset,
            codebook,
            checkpoint,
            data,
            tasks,
            task: file.get("task", "task", TaskId::FP)?,
            label: file.get("task", "label", 0)?,
            task_params,
            model,
            decode,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_file(&ConfigFile::parse(text)?)
    }

    /// Label to pass for `task`: the configured class for class-conditional tasks.
    pub fn label_for(&self, task: TaskId, clip_label: Option<u32>) -> Option<u32> {
        task.needs_label().then(|| clip_label.unwrap_or(self.label))
    }
}
