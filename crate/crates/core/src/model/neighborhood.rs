use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, LossBreakdown, LossVariant, PredictionGrid, Predictor, Vocabulary};
use crate::error::{Error, Result};
use crate::lattice::LatentDims;
use crate::masking::CorruptedSequence;
use crate::tasks::TaskId;
use crate::tokenizer::TokenId;

/// Mean-embedding softmax model over a lattice neighborhood.
///
/// For position `i` the hidden vector is the mean embedding of every token
/// within Chebyshev distance `radius` of `i` (itself included), the task
/// prompt and the class token. Logits are `bias + hidden · output`.
///
/// Parameters live in one flat vector: embeddings (`vocab × dim`), then the
/// output map (`dim × |Z|`), then the bias (`|Z|`).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodPredictor {
    vocab: Vocabulary,
    dim: usize,
    radius: usize,
    theta: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
struct Forward {
    inputs: Vec<Vec<TokenId>>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl NeighborhoodPredictor {
    pub fn zeros(vocab: Vocabulary, dim: usize, radius: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        let len = vocab.size() * dim + dim * vocab.codebook_size() + vocab.codebook_size();
        Ok(Self {
            vocab,
            dim,
            radius,
            theta: vec![0.0; len],
        })
    }

    /// Parameters drawn uniformly from `[-scale, scale)`.
    pub fn random(vocab: Vocabulary, dim: usize, radius: usize, seed: u64, scale: f64) -> Result<Self> {
        let mut p = Self::zeros(vocab, dim, radius)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in p.theta.iter_mut() {
            *x = scale * (2.0 * rng.gen::<f64>() - 1.0);
        }
        Ok(p)
    }

    pub fn from_params(vocab: Vocabulary, dim: usize, radius: usize, theta: Vec<f64>) -> Result<Self> {
        let p = Self::zeros(vocab, dim, radius)?;
        if theta.len() != p.theta.len() {
            return Err(Error::data(format!(
                "predictor expects {} parameters, got {}",
                p.theta.len(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("predictor parameters must be finite"));
        }
        Ok(Self { theta, ..p })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn out_offset(&self) -> usize {
        self.vocab.size() * self.dim
    }

    fn bias_offset(&self) -> usize {
        self.out_offset() + self.dim * self.vocab.codebook_size()
    }

    fn embedding(&self, id: TokenId) -> &[f64] {
        let o = id as usize * self.dim;
        &self.theta[o..o + self.dim]
    }

    /// Input ids feeding position `i`: its lattice neighborhood plus the two prefix tokens.
    fn inputs_for(&self, i: usize, tokens: &[TokenId], latent: &LatentDims, prefix: [TokenId; 2]) -> Vec<TokenId> {
        let c = latent.unflatten(i).expect("position inside lattice");
        let r = self.radius;
        let span = |x: usize, n: usize| x.saturating_sub(r)..(x + r + 1).min(n);
        let mut ids = Vec::new();
        for f in span(c.frame, latent.t) {
            for y in span(c.row, latent.h) {
                for x in span(c.col, latent.w) {
                    ids.push(tokens[(f * latent.h + y) * latent.w + x]);
                }
            }
        }
        ids.extend_from_slice(&prefix);
        ids
    }

    fn forward(
        &self,
        prompt: TaskId,
        label: Option<u32>,
        tokens: &[TokenId],
        latent: &LatentDims,
    ) -> Result<Forward> {
        check_inputs(&self.vocab, label, tokens, latent)?;
        let prefix = [self.vocab.prompt_id(prompt), self.vocab.prefix_class(label)?];
        let (d, k, n) = (self.dim, self.vocab.codebook_size(), tokens.len());
        let out = &self.theta[self.out_offset()..self.bias_offset()];
        let bias = &self.theta[self.bias_offset()..];

        let mut inputs = Vec::with_capacity(n);
        let mut hidden = vec![0.0; n * d];
        let mut probs = vec![0.0; n * k];
        for i in 0..n {
            let ids = self.inputs_for(i, tokens, latent, prefix);
            let h = &mut hidden[i * d..(i + 1) * d];
            for &id in &ids {
                for (a, e) in h.iter_mut().zip(self.embedding(id)) {
                    *a += e;
                }
            }
            let inv = 1.0 / ids.len() as f64;
            h.iter_mut().for_each(|a| *a *= inv);

            let row = &mut probs[i * k..(i + 1) * k];
            row.copy_from_slice(bias);
            for (a, &ha) in h.iter().enumerate() {
                for (l, w) in row.iter_mut().zip(&out[a * k..(a + 1) * k]) {
                    *l += ha * w;
                }
            }
            softmax_in_place(row);
            inputs.push(ids);
        }
        Ok(Forward {
            inputs,
            hidden,
            probs,
        })
    }

    /// Loss breakdown and the gradient of the selected objective with respect to all parameters.
    pub fn loss_and_grad(
        &self,
        prompt: TaskId,
        label: Option<u32>,
        corrupted: &CorruptedSequence,
        z: &[TokenId],
        latent: &LatentDims,
        variant: LossVariant,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        if z.len() != corrupted.len() {
            return Err(Error::domain("targets and corrupted sequence differ in length"));
        }
        let fwd = self.forward(prompt, label, &corrupted.tokens, latent)?;
        let (d, k) = (self.dim, self.vocab.codebook_size());
        let (out_off, bias_off) = (self.out_offset(), self.bias_offset());
        let out = &self.theta[out_off..bias_off];
        let mut grad = vec![0.0; self.theta.len()];
        let mut breakdown = LossBreakdown::default();
        let mut dlogit = vec![0.0; k];
        let mut dh = vec![0.0; d];

        for (i, (&target, &tag)) in z.iter().zip(&corrupted.tags).enumerate() {
            if target as usize >= k {
                return Err(Error::domain(format!("target {target} outside codebook of {k}")));
            }
            let p = &fwd.probs[i * k..(i + 1) * k];
            breakdown.add(tag, -p[target as usize].ln());
            if !variant.includes(tag) {
                continue;
            }
            // d(-log softmax)/dlogit = p - onehot
            dlogit.copy_from_slice(p);
            dlogit[target as usize] -= 1.0;

            for (g, dl) in grad[bias_off..].iter_mut().zip(&dlogit) {
                *g += dl;
            }
            let h = &fwd.hidden[i * d..(i + 1) * d];
            for a in 0..d {
                let row = &mut grad[out_off + a * k..out_off + (a + 1) * k];
                for (g, dl) in row.iter_mut().zip(&dlogit) {
                    *g += h[a] * dl;
                }
                dh[a] = out[a * k..(a + 1) * k]
                    .iter()
                    .zip(&dlogit)
                    .map(|(w, dl)| w * dl)
                    .sum();
            }
            let ids = &fwd.inputs[i];
            let inv = 1.0 / ids.len() as f64;
            for &id in ids {
                let e = &mut grad[id as usize * d..(id as usize + 1) * d];
                for (g, v) in e.iter_mut().zip(&dh) {
                    *g += v * inv;
                }
            }
        }
        Ok((breakdown, grad))
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

impl Predictor for NeighborhoodPredictor {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(
        &self,
        prompt: TaskId,
        label: Option<u32>,
        tokens: &[TokenId],
        latent: &LatentDims,
    ) -> Result<PredictionGrid> {
        let fwd = self.forward(prompt, label, tokens, latent)?;
        PredictionGrid::new(tokens.len(), self.vocab.codebook_size(), fwd.probs)
    }
}
