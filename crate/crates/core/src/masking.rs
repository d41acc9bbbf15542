//! Mask-ratio schedules, score cut-offs and the two corruption rules.
//!
//! Positions whose score is at or below the cut-off are *selected*. The binary
//! rule replaces every selected token by `[MASK]`; the multivariate rule
//! replaces a selected token by its condition token unless the condition is
//! pure padding there, in which case it becomes `[MASK]`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tokenizer::{ConditionTokens, TokenId};

/// Default decay of the exponential schedule.
pub const DEFAULT_LAMBDA: f64 = 3.0;

/// Mask-ratio schedule γ: [0, 1] → [0, 1] with γ(0) = 1 and γ(1) = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Cosine,
    Uniform,
    Exponential { lambda: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Cosine
    }
}

impl Schedule {
    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::usage(format!("exponential lambda {lambda} must be positive")));
        }
        Ok(Schedule::Exponential { lambda })
    }

    pub fn gamma(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::domain(format!("schedule progress {r} outside [0, 1]")));
        }
        // cos(π/2) is not exactly zero in floating point
        if r == 1.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            Schedule::Cosine => (FRAC_PI_2 * r).cos(),
            Schedule::Uniform => 1.0 - r,
            Schedule::Exponential { lambda } => {
                let floor = (-lambda).exp();
                ((-lambda * r).exp() - floor) / (1.0 - floor)
            }
        })
    }

    /// Number of selected positions `⌈γ(r)·n⌉`.
    pub fn selected_count(&self, r: f64, n: usize) -> Result<usize> {
        let k = (self.gamma(r)? * n as f64).ceil() as usize;
        Ok(k.min(n))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Cosine => f.write_str("cosine"),
            Schedule::Uniform => f.write_str("uniform"),
            Schedule::Exponential { lambda } => write!(f, "exponential,lambda={lambda}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// Parses `cosine`, `uniform` or `exponential[,lambda=<real>]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let kind = parts.next().unwrap_or_default();
        let mut lambda = None;
        for opt in parts {
            match opt.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                Some(("lambda", v)) => {
                    lambda = Some(v.parse::<f64>().map_err(|_| {
                        Error::usage(format!("schedule lambda {v:?} is not a number"))
                    })?)
                }
                _ => return Err(Error::usage(format!("unknown schedule option {opt:?}"))),
            }
        }
        match (kind, lambda) {
            ("cosine", None) => Ok(Schedule::Cosine),
            ("uniform", None) => Ok(Schedule::Uniform),
            ("exponential", l) => Schedule::exponential(l.unwrap_or(DEFAULT_LAMBDA)),
            (k, Some(_)) if k == "cosine" || k == "uniform" => {
                Err(Error::usage(format!("schedule {k} takes no lambda")))
            }
            (k, _) => Err(Error::usage(format!("unknown schedule {k:?}"))),
        }
    }
}

/// Per-token mask scores plus the seed they were drawn with, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskScores {
    pub scores: Vec<f64>,
    pub seed: Option<u64>,
}

impl MaskScores {
    pub fn new(scores: Vec<f64>) -> Self {
        Self { scores, seed: None }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// The k-th smallest score (1-indexed); `-∞` for k = 0 so nothing is selected.
pub fn cutoff(scores: &[f64], k: usize) -> Result<f64> {
    if k > scores.len() {
        return Err(Error::domain(format!(
            "cut-off rank {k} exceeds {} scores",
            scores.len()
        )));
    }
    if k == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut buf = scores.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// `s_i ≤ s*` for every position.
pub fn selection(scores: &[f64], s_star: f64) -> Vec<bool> {
    scores.iter().map(|&s| s <= s_star).collect()
}

/// Role of a position in a corrupted sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    /// Selected, replaced by the condition token.
    Condition,
    /// Selected, replaced by `[MASK]`.
    Masked,
    /// Not selected, keeps the target token.
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedSequence {
    pub tokens: Vec<TokenId>,
    pub tags: Vec<Tag>,
}

impl CorruptedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }
}

/// Multivariate corruption of `z` given an explicit selection.
pub fn commit_mask_selected(
    z: &[TokenId],
    cond: &ConditionTokens,
    selected: &[bool],
    mask_id: TokenId,
) -> Result<CorruptedSequence> {
    if z.len() != cond.len() || z.len() != selected.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} tokens, {} condition tokens, {} selections",
            z.len(),
            cond.len(),
            selected.len()
        )));
    }
    let mut tokens = Vec::with_capacity(z.len());
    let mut tags = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let (tok, tag) = match (selected[i], cond.allpadded[i]) {
            (true, false) => (cond.tokens[i], Tag::Condition),
            (true, true) => (mask_id, Tag::Masked),
            (false, _) => (z[i], Tag::Target),
        };
        tokens.push(tok);
        tags.push(tag);
    }
    Ok(CorruptedSequence { tokens, tags })
}

pub fn apply_commit_mask(
    z: &[TokenId],
    cond: &ConditionTokens,
    scores: &[f64],
    s_star: f64,
    mask_id: TokenId,
) -> Result<CorruptedSequence> {
    commit_mask_selected(z, cond, &selection(scores, s_star), mask_id)
}

/// Binary corruption: every selected position becomes `[MASK]`.
pub fn apply_binary_mask(
    z: &[TokenId],
    scores: &[f64],
    s_star: f64,
    mask_id: TokenId,
) -> Result<CorruptedSequence> {
    if z.len() != scores.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} tokens, {} scores",
            z.len(),
            scores.len()
        )));
    }
    let (tokens, tags) = z
        .iter()
        .zip(scores)
        .map(|(&t, &s)| if s <= s_star { (mask_id, Tag::Masked) } else { (t, Tag::Target) })
        .unzip();
    Ok(CorruptedSequence { tokens, tags })
}

/// One training-time mask draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMask {
    pub scores: MaskScores,
    pub s_star: f64,
    /// Schedule progress the ratio was taken at.
    pub r: f64,
    /// Number of selected positions, `⌈γ(r)·N⌉`.
    pub k: usize,
}

/// Draws `r ~ U(0,1)` and iid uniform scores, then cuts at the `⌈γ(r)N⌉`-th smallest.
pub fn sample_training_mask<R: Rng + ?Sized>(n: usize, schedule: &Schedule, rng: &mut R) -> TrainingMask {
    let r: f64 = rng.gen();
    training_mask_at(n, schedule, r, rng)
}

/// As [`sample_training_mask`] at a fixed progress `r ∈ [0, 1)`.
pub fn training_mask_at<R: Rng + ?Sized>(
    n: usize,
    schedule: &Schedule,
    r: f64,
    rng: &mut R,
) -> TrainingMask {
    assert!(n >= 1, "training mask needs at least one position");
    assert!((0.0..1.0).contains(&r), "training progress must lie in [0, 1)");
    let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let k = schedule
        .selected_count(r, n)
        .expect("progress checked above")
        .max(1);
    let s_star = cutoff(&scores, k).expect("k <= n");
    TrainingMask {
        scores: MaskScores::new(scores),
        s_star,
        r,
        k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatentDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MASK: TokenId = 99;

    fn cond4(tokens: Vec<TokenId>, flags: Vec<bool>) -> ConditionTokens {
        ConditionTokens::new(LatentDims::new(1, 1, 4).unwrap(), tokens, flags).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(Schedule::Cosine.gamma(0.0).unwrap(), 1.0);
        assert!((Schedule::Cosine.gamma(0.5).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(Schedule::Uniform.gamma(0.25).unwrap(), 0.75);
        let e = Schedule::exponential(3.0).unwrap();
        assert_eq!(e.gamma(0.0).unwrap(), 1.0);
        assert_eq!(e.gamma(1.0).unwrap(), 0.0);
        assert_eq!(Schedule::Cosine.gamma(1.0).unwrap(), 0.0);
        assert!(Schedule::Cosine.gamma(1.5).is_err());
        assert!(Schedule::Uniform.gamma(-0.1).is_err());
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!("cosine".parse::<Schedule>().unwrap(), Schedule::Cosine);
        assert_eq!("uniform".parse::<Schedule>().unwrap(), Schedule::Uniform);
        assert_eq!(
            "exponential".parse::<Schedule>().unwrap(),
            Schedule::Exponential { lambda: 3.0 }
        );
        assert_eq!(
            "exponential,lambda=5.5".parse::<Schedule>().unwrap(),
            Schedule::Exponential { lambda: 5.5 }
        );
        let s = Schedule::Exponential { lambda: 2.5 };
        assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
        assert!("cosine,lambda=1".parse::<Schedule>().is_err());
        assert!("linear".parse::<Schedule>().is_err());
        assert!("exponential,lambda=-1".parse::<Schedule>().is_err());
    }

    #[test]
    fn cutoff_examples() {
        let s = [0.9, 0.1, 0.5, 0.3];
        assert_eq!(cutoff(&s, 2).unwrap(), 0.3);
        assert_eq!(cutoff(&s, 4).unwrap(), 0.9);
        assert_eq!(cutoff(&s, 0).unwrap(), f64::NEG_INFINITY);
        assert!(selection(&s, f64::NEG_INFINITY).iter().all(|&b| !b));
        assert!(matches!(cutoff(&s, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn commit_mask_hand_example() {
        let c = cond4(vec![1, 2, 0, 0], vec![false, false, true, true]);
        let out = apply_commit_mask(&[5, 6, 7, 8], &c, &[0.1, 0.9, 0.2, 0.8], 0.2, MASK).unwrap();
        assert_eq!(out.tokens, vec![1, 6, MASK, 8]);
        assert_eq!(out.tags, vec![Tag::Condition, Tag::Target, Tag::Masked, Tag::Target]);
    }

    #[test]
    fn commit_mask_degenerate_cases() {
        let z = [5, 6, 7, 8];
        let s = [0.4, 0.3, 0.2, 0.1];
        let c = cond4(vec![1, 2, 3, 4], vec![false, true, false, true]);
        let id = apply_commit_mask(&z, &c, &s, f64::NEG_INFINITY, MASK).unwrap();
        assert_eq!(id.tokens, z);
        assert!(id.tags.iter().all(|&t| t == Tag::Target));

        let all_pad = cond4(vec![1, 2, 3, 4], vec![true; 4]);
        let all = apply_commit_mask(&z, &all_pad, &s, 0.4, MASK).unwrap();
        assert!(all.tags.iter().all(|&t| t == Tag::Masked));

        assert!(apply_commit_mask(&z[..3], &c, &s[..3], 0.4, MASK).is_err());
    }

    #[test]
    fn binary_mask_examples() {
        let out = apply_binary_mask(&[4, 5, 6], &[0.1, 0.2, 0.3], 0.2, MASK).unwrap();
        assert_eq!(out.tokens, vec![MASK, MASK, 6]);
        let id = apply_binary_mask(&[4, 5, 6], &[0.1, 0.2, 0.3], f64::NEG_INFINITY, MASK).unwrap();
        assert_eq!(id.tokens, vec![4, 5, 6]);
    }

    #[test]
    fn training_mask_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = training_mask_at(1024, &Schedule::Uniform, 0.5, &mut rng);
        assert_eq!(m.k, 512);
        assert_eq!(selection(&m.scores.scores, m.s_star).iter().filter(|&&b| b).count(), 512);

        let m = training_mask_at(37, &Schedule::Cosine, 0.0, &mut rng);
        assert_eq!(m.k, 37);
        assert!(selection(&m.scores.scores, m.s_star).iter().all(|&b| b));

        for _ in 0..20 {
            let m = sample_training_mask(1, &Schedule::Cosine, &mut rng);
            assert_eq!(m.k, 1);
        }
    }

    #[test]
    fn training_mask_deterministic() {
        let a = sample_training_mask(64, &Schedule::Cosine, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_training_mask(64, &Schedule::Cosine, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.scores.scores.iter().all(|s| (0.0..1.0).contains(s)));
    }
}
