use std::fmt;
use std::str::FromStr;

use super::PredictionGrid;
use crate::error::{Error, Result};
use crate::masking::{CorruptedSequence, Tag};
use crate::tokenizer::TokenId;

/// Summed cross-entropy (nats) split by the tag of each position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Over condition-token positions.
    pub refine: f64,
    /// Over `[MASK]` positions.
    pub mask: f64,
    /// Over untouched target positions.
    pub recons: f64,
    /// Over all positions.
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn add(&mut self, tag: Tag, nll: f64) {
        match tag {
            Tag::Condition => self.refine += nll,
            Tag::Masked => self.mask += nll,
            Tag::Target => self.recons += nll,
        }
        self.total += nll;
    }
}

/// Which loss terms a training objective keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossVariant {
    Mask,
    MaskRecons,
    #[default]
    Full,
}

impl LossVariant {
    pub fn includes(self, tag: Tag) -> bool {
        match self {
            LossVariant::Mask => tag == Tag::Masked,
            LossVariant::MaskRecons => tag != Tag::Condition,
            LossVariant::Full => true,
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Mask => "mask",
            LossVariant::MaskRecons => "mask+recons",
            LossVariant::Full => "mask+recons+refine",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(LossVariant::Mask),
            "mask+recons" => Ok(LossVariant::MaskRecons),
            "mask+recons+refine" | "full" => Ok(LossVariant::Full),
            _ => Err(Error::usage(format!("unknown loss variant {s:?}"))),
        }
    }
}

/// Negative log-likelihood of the ground truth at every position, grouped by tag.
///
/// A zero probability on a target token yields `+∞` in the affected terms.
pub fn commit_loss(
    grid: &PredictionGrid,
    z: &[TokenId],
    corrupted: &CorruptedSequence,
) -> Result<LossBreakdown> {
    if grid.rows() != z.len() || corrupted.len() != z.len() {
        return Err(Error::domain(format!(
            "loss shapes disagree: grid {} rows, {} targets, {} corrupted",
            grid.rows(),
            z.len(),
            corrupted.len()
        )));
    }
    let mut out = LossBreakdown::default();
    for (i, (&t, &tag)) in z.iter().zip(&corrupted.tags).enumerate() {
        if t as usize >= grid.classes() {
            return Err(Error::domain(format!("target {t} outside {} classes", grid.classes())));
        }
        out.add(tag, -grid.prob(i, t).ln());
    }
    Ok(out)
}

pub fn loss_ablation_select(breakdown: &LossBreakdown, variant: LossVariant) -> f64 {
    match variant {
        LossVariant::Mask => breakdown.mask,
        LossVariant::MaskRecons => breakdown.mask + breakdown.recons,
        LossVariant::Full => breakdown.total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tags: Vec<Tag>) -> CorruptedSequence {
        CorruptedSequence {
            tokens: vec![0; tags.len()],
            tags,
        }
    }

    #[test]
    fn uniform_grid() {
        let n = 6;
        let g = PredictionGrid::uniform(n, 1024);
        let c = seq(vec![Tag::Condition, Tag::Masked, Tag::Masked, Tag::Target, Tag::Target, Tag::Target]);
        let l = commit_loss(&g, &[3, 5, 7, 9, 11, 13], &c).unwrap();
        let ln = 1024f64.ln();
        assert!((l.total - 6.0 * ln).abs() < 1e-12);
        assert!((l.refine - ln).abs() < 1e-12);
        assert!((l.mask - 2.0 * ln).abs() < 1e-12);
        assert!((l.recons - 3.0 * ln).abs() < 1e-12);
        assert!((loss_ablation_select(&l, LossVariant::Mask) - 2.0 * ln).abs() < 1e-12);
        assert_eq!(loss_ablation_select(&l, LossVariant::Full), l.total);
    }

    #[test]
    fn oracle_grid_is_zero() {
        let z = [1, 0, 2];
        let g = PredictionGrid::one_hot(&z, 3);
        let l = commit_loss(&g, &z, &seq(vec![Tag::Condition, Tag::Masked, Tag::Target])).unwrap();
        assert_eq!(l, LossBreakdown::default());
    }

    #[test]
    fn two_position_hand_example() {
        let g = PredictionGrid::new(2, 2, vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        let l = commit_loss(&g, &[0, 1], &seq(vec![Tag::Masked, Tag::Target])).unwrap();
        assert!((l.mask - 2f64.ln()).abs() < 1e-15);
        assert!((l.recons - 4f64.ln()).abs() < 1e-15);
        assert!((l.total - 8f64.ln()).abs() < 1e-15);
        assert!((loss_ablation_select(&l, LossVariant::MaskRecons) - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_infinite() {
        let g = PredictionGrid::one_hot(&[0], 2);
        let l = commit_loss(&g, &[1], &seq(vec![Tag::Target])).unwrap();
        assert_eq!(l.recons, f64::INFINITY);
    }

    #[test]
    fn variant_names() {
        for v in [LossVariant::Mask, LossVariant::MaskRecons, LossVariant::Full] {
            assert_eq!(v.to_string().parse::<LossVariant>().unwrap(), v);
        }
    }
}
