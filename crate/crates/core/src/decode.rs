//! Non-autoregressive conditional decoding, its two baselines and a step-cost model.
//!
//! The iterative decoder keeps a confidence score per position. Positions at
//! or below the cut-off are re-predicted each step from the corrupted
//! sequence; positions above it freeze with score 1 and keep their token.
//! The cut-off follows the mask-ratio schedule, and Gumbel noise with a
//! linearly annealed temperature is added to the confidences of
//! non-frozen positions before each cut-off.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::masking::{cutoff, Schedule};
use crate::model::Predictor;
use crate::tasks::TaskId;
use crate::tokenizer::{ConditionTokens, TokenId, TokenLattice};

/// Bound keeping the uniform draw inside (0, 1) before the double log.
pub const GUMBEL_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub steps: usize,
    pub temperature: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            steps: 12,
            temperature: 4.5,
            schedule: Schedule::Cosine,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::usage("decode steps must be at least 1"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::usage(format!(
                "temperature {} must be a non-negative number",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// State after one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub step: usize,
    pub s_star: f64,
    /// Non-frozen positions at or below the new cut-off.
    pub selected: usize,
    pub newly_frozen: usize,
    pub tokens: Vec<TokenId>,
    pub frozen: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeTrace {
    pub steps: Vec<DecodeStep>,
}

impl DecodeTrace {
    /// Line-delimited export: `step,<t> s*,<real> selected,<int> frozen,<int>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(
                out,
                "step,{} s*,{} selected,{} frozen,{}",
                s.step, s.s_star, s.selected, s.newly_frozen
            );
        }
        out
    }

    /// Parses the export back into `(step, s*, selected, frozen)` records.
    pub fn parse_text(text: &str) -> Result<Vec<(usize, f64, usize, usize)>> {
        fn field<T: std::str::FromStr>(tok: Option<&str>, name: &str, line: &str) -> Result<T> {
            tok.and_then(|f| f.strip_prefix(name))
                .and_then(|v| v.strip_prefix(','))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::data(format!("malformed {name} field in trace line {line:?}")))
        }
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let mut it = line.split_whitespace();
                Ok((
                    field(it.next(), "step", line)?,
                    field(it.next(), "s*", line)?,
                    field(it.next(), "selected", line)?,
                    field(it.next(), "frozen", line)?,
                ))
            })
            .collect()
    }

    pub fn final_tokens(&self) -> Option<&[TokenId]> {
        self.steps.last().map(|s| s.tokens.as_slice())
    }
}

/// Standard Gumbel variate from a uniform draw: `-ln(-ln u)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP);
    -(-u.ln()).ln()
}

pub fn gumbel_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    gumbel_from_uniform(rng.gen::<f64>())
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for one (step, position) pair of a run.
pub fn stream_rng(seed: u64, step: u64, position: u64) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(splitmix64(seed) ^ step) ^ position);
    ChaCha8Rng::seed_from_u64(s)
}

/// Inverse-CDF draw from a categorical row; zero-probability entries are never chosen.
pub fn sample_categorical(row: &[f64], u: f64) -> usize {
    let total: f64 = row.iter().sum();
    let mut acc = 0.0;
    let target = u * total;
    for (k, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            if target < acc {
                return k;
            }
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn check_condition<P: Predictor + ?Sized>(pred: &P, cond: &ConditionTokens) -> Result<()> {
    let k = pred.vocab().codebook_size();
    if cond.tokens.len() != cond.latent.n() || cond.allpadded.len() != cond.latent.n() {
        return Err(Error::domain("condition length does not match its lattice"));
    }
    if let Some(t) = cond.tokens.iter().find(|&&t| t as usize >= k) {
        return Err(Error::config(format!(
            "condition token {t} outside the predictor's codebook of {k}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Selected positions carry condition tokens where the condition has pixels.
    Commit,
    /// Condition positions are fixed up front; the rest decode from `[MASK]`.
    LatentMasking,
}

fn iterative_decode<P: Predictor + ?Sized>(
    pred: &P,
    prompt: TaskId,
    label: Option<u32>,
    cond: &ConditionTokens,
    cfg: &DecodeConfig,
    mode: Mode,
) -> Result<(TokenLattice, DecodeTrace)> {
    cfg.validate()?;
    check_condition(pred, cond)?;
    let latent = cond.latent;
    let n = latent.n();
    let mask_id = pred.vocab().mask_id();
    let k_steps = cfg.steps;

    let mut scores = vec![0.0f64; n];
    let mut s_star = 1.0f64;
    let mut z_hat: Vec<TokenId> = vec![0; n];
    let mut frozen = vec![false; n];
    let mut free = n;
    if mode == Mode::LatentMasking {
        for i in 0..n {
            if !cond.allpadded[i] {
                z_hat[i] = cond.tokens[i];
                scores[i] = 1.0;
                frozen[i] = true;
                free -= 1;
            }
        }
    }

    let mut trace = DecodeTrace::default();
    let mut corrupted = vec![0; n];
    for t in 0..k_steps {
        let selected: Vec<bool> = (0..n).map(|i| !frozen[i] && scores[i] <= s_star).collect();
        for i in 0..n {
            corrupted[i] = if !selected[i] {
                z_hat[i]
            } else if mode == Mode::Commit && !cond.allpadded[i] {
                cond.tokens[i]
            } else {
                mask_id
            };
        }
        let grid = pred.predict(prompt, label, &corrupted, &latent)?;

        let progress = (t + 1) as f64 / k_steps as f64;
        let noise_scale = cfg.temperature * (1.0 - progress);
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let mut rng = stream_rng(cfg.seed, t as u64, i as u64);
            if selected[i] {
                let row = grid.row(i);
                let tok = sample_categorical(row, rng.gen::<f64>());
                z_hat[i] = tok as TokenId;
                scores[i] = row[tok];
            }
            if scores[i] < 1.0 {
                scores[i] += noise_scale * gumbel_sample(&mut rng);
            }
        }

        let k = cfg.schedule.selected_count(progress, free)?;
        s_star = cutoff(&scores, k)?;
        let mut newly = 0;
        for i in 0..n {
            if !frozen[i] && scores[i] > s_star {
                scores[i] = 1.0;
                frozen[i] = true;
                newly += 1;
            }
        }
        let still = (0..n).filter(|&i| !frozen[i] && scores[i] <= s_star).count();
        trace.steps.push(DecodeStep {
            step: t,
            s_star,
            selected: still,
            newly_frozen: newly,
            tokens: z_hat.clone(),
            frozen: frozen.clone(),
        });
    }
    Ok((TokenLattice::new(latent, z_hat)?, trace))
}

/// Iterative decoding from a multivariate mask that embeds the condition tokens.
///
/// Condition tokens are themselves re-predicted while selected, so the output
/// may refine them.
pub fn commit_decode<P: Predictor + ?Sized>(
    pred: &P,
    prompt: TaskId,
    label: Option<u32>,
    cond: &ConditionTokens,
    cfg: &DecodeConfig,
) -> Result<(TokenLattice, DecodeTrace)> {
    iterative_decode(pred, prompt, label, cond, cfg, Mode::Commit)
}

/// Baseline: condition tokens are copied verbatim and frozen at step 0; only
/// the all-padding positions are decoded, starting from `[MASK]`.
pub fn latent_masking_decode<P: Predictor + ?Sized>(
    pred: &P,
    prompt: TaskId,
    label: Option<u32>,
    cond: &ConditionTokens,
    cfg: &DecodeConfig,
) -> Result<(TokenLattice, DecodeTrace)> {
    iterative_decode(pred, prompt, label, cond, cfg, Mode::LatentMasking)
}

/// Raster-order autoregressive baseline; returns the lattice and the step count (N).
pub fn ar_decode<P: Predictor + ?Sized>(
    pred: &P,
    prompt: TaskId,
    label: Option<u32>,
    cond: &ConditionTokens,
    seed: u64,
) -> Result<(TokenLattice, usize)> {
    ar_decode_with(pred, prompt, label, cond, |pos| {
        splitmix64(splitmix64(seed) ^ pos as u64)
    })
}

/// As [`ar_decode`], with the seed of each position's sampler chosen by `seed_of`.
pub fn ar_decode_with<P: Predictor + ?Sized>(
    pred: &P,
    prompt: TaskId,
    label: Option<u32>,
    cond: &ConditionTokens,
    seed_of: impl Fn(usize) -> u64,
) -> Result<(TokenLattice, usize)> {
    check_condition(pred, cond)?;
    let latent = cond.latent;
    let n = latent.n();
    let mask_id = pred.vocab().mask_id();
    let mut seq: Vec<TokenId> = (0..n)
        .map(|i| if cond.allpadded[i] { mask_id } else { cond.tokens[i] })
        .collect();
    for i in 0..n {
        let grid = pred.predict(prompt, label, &seq, &latent)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed_of(i));
        seq[i] = sample_categorical(grid.row(i), rng.gen::<f64>()) as TokenId;
    }
    Ok((TokenLattice::new(latent, seq)?, n))
}

/// Cost of one decoding method under a quadratic-attention proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeCost {
    pub method: String,
    pub seq_len: usize,
    pub steps: usize,
    /// `seq_len²` units.
    pub per_step: f64,
    pub total: f64,
}

impl DecodeCost {
    pub fn new(method: impl Into<String>, seq_len: usize, steps: usize) -> Self {
        let per_step = (seq_len as f64).powi(2);
        Self {
            method: method.into(),
            seq_len,
            steps,
            per_step,
            total: per_step * steps as f64,
        }
    }
}

/// Cost rows with ratios normalized to the first (non-autoregressive) row.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub rows: Vec<DecodeCost>,
}

impl CostReport {
    pub fn baseline(&self) -> &DecodeCost {
        &self.rows[0]
    }

    pub fn with_row(mut self, row: DecodeCost) -> Self {
        self.rows.push(row);
        self
    }

    pub fn row(&self, method: &str) -> Option<&DecodeCost> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn step_ratio(&self, row: &DecodeCost) -> f64 {
        row.steps as f64 / self.baseline().steps as f64
    }

    pub fn per_step_ratio(&self, row: &DecodeCost) -> f64 {
        row.per_step / self.baseline().per_step
    }

    pub fn total_ratio(&self, row: &DecodeCost) -> f64 {
        row.total / self.baseline().total
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "method       seq_len  steps   per_step_cost      total_cost  step_ratio  per_step_ratio  total_ratio\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>7} {:>6} {:>15.0} {:>15.0} {:>11.1} {:>15.2} {:>12.2}",
                r.method,
                r.seq_len,
                r.steps,
                r.per_step,
                r.total,
                self.step_ratio(r),
                self.per_step_ratio(r),
                self.total_ratio(r)
            );
        }
        out
    }
}

/// Non-autoregressive decoding in `nar_steps` against an autoregressive one in `ar_steps`,
/// both over `seq_len` tokens.
pub fn cost_report(seq_len: usize, nar_steps: usize, ar_steps: usize) -> Result<CostReport> {
    if seq_len == 0 || nar_steps == 0 || ar_steps == 0 {
        return Err(Error::usage("cost report inputs must be positive"));
    }
    Ok(CostReport {
        rows: vec![
            DecodeCost::new("NAR", seq_len, nar_steps),
            DecodeCost::new("AR", seq_len, ar_steps),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatentDims;
    use crate::model::{oracle_predictor, NeighborhoodPredictor, UniformPredictor, Vocabulary};

    fn lattice() -> LatentDims {
        LatentDims::new(2, 2, 2).unwrap()
    }

    #[test]
    fn gumbel_closed_forms() {
        assert!(gumbel_from_uniform((-1f64).exp()).abs() < 1e-15);
        assert!((gumbel_from_uniform((-std::f64::consts::E).exp()) + 1.0).abs() < 1e-12);
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn categorical_sampling() {
        assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], 0.999), 1);
        assert_eq!(sample_categorical(&[0.5, 0.5], 0.25), 0);
        assert_eq!(sample_categorical(&[0.5, 0.5], 0.75), 1);
        assert_eq!(sample_categorical(&[0.3, 0.0], 0.9999999), 0);
    }

    #[test]
    fn single_step_decodes_everything_at_once() {
        let vocab = Vocabulary::new(4, 1).unwrap();
        let z = TokenLattice::new(lattice(), vec![0, 1, 2, 3, 3, 2, 1, 0]).unwrap();
        let o = oracle_predictor(vocab, z.clone()).unwrap();
        let cfg = DecodeConfig {
            steps: 1,
            ..Default::default()
        };
        let (out, trace) = commit_decode(&o, TaskId::CG, Some(0), &ConditionTokens::empty(lattice()), &cfg).unwrap();
        assert_eq!(out, z);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].s_star, f64::NEG_INFINITY);
        assert_eq!(trace.steps[0].newly_frozen, 8);
    }

    #[test]
    fn zero_temperature_is_deterministic() {
        let vocab = Vocabulary::new(4, 1).unwrap();
        let p = NeighborhoodPredictor::random(vocab, 3, 1, 1, 1.0).unwrap();
        let cond = ConditionTokens::new(lattice(), vec![1; 8], vec![false, true, false, true, true, true, true, true]).unwrap();
        let cfg = DecodeConfig {
            temperature: 0.0,
            steps: 4,
            ..Default::default()
        };
        let a = commit_decode(&p, TaskId::OPC, None, &cond, &cfg).unwrap();
        let b = commit_decode(&p, TaskId::OPC, None, &cond, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let vocab = Vocabulary::new(4, 1).unwrap();
        let u = UniformPredictor::new(vocab);
        let cond = ConditionTokens::empty(lattice());
        let zero = DecodeConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(matches!(commit_decode(&u, TaskId::CG, Some(0), &cond, &zero), Err(Error::Usage(_))));
        let neg = DecodeConfig {
            temperature: -1.0,
            ..Default::default()
        };
        assert!(commit_decode(&u, TaskId::CG, Some(0), &cond, &neg).is_err());
        let bad = ConditionTokens::new(lattice(), vec![9; 8], vec![false; 8]).unwrap();
        assert!(matches!(
            commit_decode(&u, TaskId::OPC, None, &bad, &DecodeConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn trace_text_round_trip() {
        let vocab = Vocabulary::new(4, 1).unwrap();
        let u = UniformPredictor::new(vocab);
        let (_, trace) = commit_decode(&u, TaskId::CG, Some(0), &ConditionTokens::empty(lattice()), &DecodeConfig::default()).unwrap();
        let text = trace.to_text();
        assert!(text.starts_with("step,0 s*,"));
        let parsed = DecodeTrace::parse_text(&text).unwrap();
        assert_eq!(parsed.len(), 12);
        for (rec, s) in parsed.iter().zip(&trace.steps) {
            assert_eq!(rec.0, s.step);
            assert_eq!(rec.1, s.s_star);
            assert_eq!(rec.2, s.selected);
            assert_eq!(rec.3, s.newly_frozen);
        }
        assert!(DecodeTrace::parse_text("step,x s*,1 selected,2 frozen,3").is_err());
    }

    #[test]
    fn ar_oracle_and_steps() {
        let vocab = Vocabulary::new(4, 1).unwrap();
        let z = TokenLattice::new(lattice(), vec![3, 1, 2, 0, 0, 2, 1, 3]).unwrap();
        let o = oracle_predictor(vocab, z.clone()).unwrap();
        let (out, steps) = ar_decode(&o, TaskId::FP, None, &ConditionTokens::empty(lattice()), 5).unwrap();
        assert_eq!(out, z);
        assert_eq!(steps, 8);
    }

    #[test]
    fn cost_examples() {
        let r = cost_report(1024, 12, 1024).unwrap();
        let ar = r.row("AR").unwrap();
        assert!((r.step_ratio(ar) - 85.33).abs() < 0.01);
        let r = r.with_row(DecodeCost::new("2D-NAR", 4096, 12));
        assert_eq!(r.per_step_ratio(r.row("2D-NAR").unwrap()), 16.0);
        let same = cost_report(64, 12, 12).unwrap();
        let ar = same.row("AR").unwrap();
        assert_eq!(same.step_ratio(ar), 1.0);
        assert_eq!(same.per_step_ratio(ar), 1.0);
        assert_eq!(same.total_ratio(ar), 1.0);
        assert!(cost_report(0, 1, 1).is_err());
    }
}
