//! Token predictors over the prefixed sequence `[task prompt, class, corrupted tokens]`,
//! the three-part training loss and its gradients.

mod loss;
mod neighborhood;
mod train;

pub use loss::{commit_loss, loss_ablation_select, LossBreakdown, LossVariant};
pub use neighborhood::NeighborhoodPredictor;
pub use train::{train, Optimizer, TrainConfig, TrainingClip};

use crate::error::{Error, Result};
use crate::lattice::LatentDims;
use crate::tasks::TaskId;
use crate::tokenizer::{TokenId, TokenLattice};

/// Id layout: codebook `[0, Z)`, `[MASK]` = Z, ten task prompts, the class
/// ids, then the null class used when a task carries no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    codebook_size: usize,
    num_classes: usize,
}

impl Vocabulary {
    pub fn new(codebook_size: usize, num_classes: usize) -> Result<Self> {
        if codebook_size < 2 {
            return Err(Error::config(format!(
                "codebook size {codebook_size} must be at least 2"
            )));
        }
        Ok(Self {
            codebook_size,
            num_classes,
        })
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn mask_id(&self) -> TokenId {
        self.codebook_size as TokenId
    }

    pub fn prompt_id(&self, task: TaskId) -> TokenId {
        (self.codebook_size + 1 + task.index()) as TokenId
    }

    pub fn class_id(&self, label: u32) -> Result<TokenId> {
        if label as usize >= self.num_classes {
            return Err(Error::config(format!(
                "class label {label} outside {} classes",
                self.num_classes
            )));
        }
        Ok((self.codebook_size + 1 + TaskId::ALL.len()) as TokenId + label)
    }

    pub fn null_class_id(&self) -> TokenId {
        (self.codebook_size + 1 + TaskId::ALL.len() + self.num_classes) as TokenId
    }

    /// Class token for an optional label.
    pub fn prefix_class(&self, label: Option<u32>) -> Result<TokenId> {
        label.map_or(Ok(self.null_class_id()), |l| self.class_id(l))
    }

    /// Total number of ids.
    pub fn size(&self) -> usize {
        self.codebook_size + 1 + TaskId::ALL.len() + self.num_classes + 1
    }

    /// Checks that every token is a codebook id or `[MASK]`.
    pub fn check_sequence(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().position(|&t| t > self.mask_id()) {
            Some(i) => Err(Error::config(format!(
                "token {} at position {i} is not a codebook id or [MASK]",
                tokens[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Row-stochastic `N × |Z|` matrix of per-position categoricals.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    n: usize,
    k: usize,
    probs: Vec<f64>,
}

impl PredictionGrid {
    pub fn new(n: usize, k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n * k {
            return Err(Error::domain(format!(
                "grid of {n}x{k} given {} probabilities",
                probs.len()
            )));
        }
        Ok(Self { n, k, probs })
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            probs: vec![1.0 / k as f64; n * k],
        }
    }

    pub fn one_hot(tokens: &[TokenId], k: usize) -> Self {
        let mut probs = vec![0.0; tokens.len() * k];
        for (i, &t) in tokens.iter().enumerate() {
            probs[i * k + t as usize] = 1.0;
        }
        Self {
            n: tokens.len(),
            k,
            probs,
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    pub fn prob(&self, i: usize, token: TokenId) -> f64 {
        self.probs[i * self.k + token as usize]
    }
}

/// Anything that maps a prefixed corrupted sequence to per-position categoricals.
pub trait Predictor {
    fn vocab(&self) -> &Vocabulary;

    fn predict(
        &self,
        prompt: TaskId,
        label: Option<u32>,
        tokens: &[TokenId],
        latent: &LatentDims,
    ) -> Result<PredictionGrid>;
}

fn check_inputs(vocab: &Vocabulary, label: Option<u32>, tokens: &[TokenId], latent: &LatentDims) -> Result<()> {
    if tokens.len() != latent.n() {
        return Err(Error::domain(format!(
            "sequence of {} tokens for a lattice of {}",
            tokens.len(),
            latent.n()
        )));
    }
    vocab.prefix_class(label)?;
    vocab.check_sequence(tokens)
}

/// Always answers with the one-hot of a fixed lattice.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    vocab: Vocabulary,
    truth: TokenLattice,
}

impl OraclePredictor {
    pub fn new(vocab: Vocabulary, truth: TokenLattice) -> Result<Self> {
        if truth.tokens.iter().any(|&t| t as usize >= vocab.codebook_size()) {
            return Err(Error::config("oracle lattice holds ids outside the codebook"));
        }
        Ok(Self { vocab, truth })
    }
}

pub fn oracle_predictor(vocab: Vocabulary, z: TokenLattice) -> Result<OraclePredictor> {
    OraclePredictor::new(vocab, z)
}

impl Predictor for OraclePredictor {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(
        &self,
        _prompt: TaskId,
        label: Option<u32>,
        tokens: &[TokenId],
        latent: &LatentDims,
    ) -> Result<PredictionGrid> {
        check_inputs(&self.vocab, label, tokens, latent)?;
        if *latent != self.truth.latent {
            return Err(Error::domain("oracle queried with a different lattice"));
        }
        Ok(PredictionGrid::one_hot(&self.truth.tokens, self.vocab.codebook_size()))
    }
}

/// Uniform categorical at every position; the chance-level baseline.
#[derive(Debug, Clone)]
pub struct UniformPredictor {
    vocab: Vocabulary,
}

impl UniformPredictor {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }
}

impl Predictor for UniformPredictor {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(
        &self,
        _prompt: TaskId,
        label: Option<u32>,
        tokens: &[TokenId],
        latent: &LatentDims,
    ) -> Result<PredictionGrid> {
        check_inputs(&self.vocab, label, tokens, latent)?;
        Ok(PredictionGrid::uniform(tokens.len(), self.vocab.codebook_size()))
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn predict(
        &self,
        prompt: TaskId,
        label: Option<u32>,
        tokens: &[TokenId],
        latent: &LatentDims,
    ) -> Result<PredictionGrid> {
        (**self).predict(prompt, label, tokens, latent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_ranges_are_disjoint() {
        let v = Vocabulary::new(64, 3).unwrap();
        let mut ids: Vec<TokenId> = (0..64).collect();
        ids.push(v.mask_id());
        ids.extend(TaskId::ALL.iter().map(|&t| v.prompt_id(t)));
        ids.extend((0..3).map(|c| v.class_id(c).unwrap()));
        ids.push(v.null_class_id());
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert_eq!(n, v.size());
        assert_eq!(*ids.last().unwrap() as usize, v.size() - 1);
        assert!(v.class_id(3).is_err());
    }

    #[test]
    fn oracle_is_one_hot() {
        let latent = LatentDims::new(1, 2, 2).unwrap();
        let vocab = Vocabulary::new(4, 1).unwrap();
        let z = TokenLattice::new(latent, vec![3, 1, 0, 2]).unwrap();
        let o = oracle_predictor(vocab, z.clone()).unwrap();
        let g = o.predict(TaskId::FP, None, &[4, 4, 4, 4], &latent).unwrap();
        for (i, &t) in z.tokens.iter().enumerate() {
            assert_eq!(g.prob(i, t), 1.0);
            assert_eq!(g.row(i).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn sequence_validation() {
        let latent = LatentDims::new(1, 1, 2).unwrap();
        let vocab = Vocabulary::new(4, 1).unwrap();
        let u = UniformPredictor::new(vocab);
        assert!(u.predict(TaskId::FP, None, &[0, 4], &latent).is_ok());
        assert!(matches!(
            u.predict(TaskId::FP, None, &[0, 5], &latent),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            u.predict(TaskId::CG, Some(1), &[0, 0], &latent),
            Err(Error::Config(_))
        ));
        assert!(u.predict(TaskId::FP, None, &[0], &latent).is_err());
    }
}
