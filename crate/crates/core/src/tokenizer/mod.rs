//! Toy video tokenizer: a supervoxel-local vector quantizer.
//!
//! Every supervoxel is flattened into one vector (frames, rows, cols, channels
//! in raster order) and replaced by the index of its nearest codebook
//! centroid. A token therefore depends only on the pixels of its own
//! supervoxel.

mod inflate;
mod kmeans;

pub use inflate::{inflate_kernel, InflationMode, Kernel2d, Kernel3d};
pub use kmeans::{fit_codebook, fit_codebook_with, KMeansConfig};

use crate::error::{Error, Result};
use crate::lattice::{allpadded, supervoxel_of, Dims3, LatentDims, VideoTensor};
use crate::tasks::ConditionVideo;

/// Token id type shared by the codebook, masks and predictors.
pub type TokenId = u32;

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    size: usize,
    dim: usize,
    centroids: Vec<f64>,
}

impl Codebook {
    pub fn new(size: usize, dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if size < 2 {
            return Err(Error::config(format!("codebook size {size} must be at least 2")));
        }
        if dim == 0 {
            return Err(Error::config("codebook dimension must be positive"));
        }
        if centroids.len() != size * dim {
            return Err(Error::data(format!(
                "codebook of {size}x{dim} needs {} values, got {}",
                size * dim,
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("codebook centroids must be finite"));
        }
        Ok(Self {
            size,
            dim,
            centroids,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    /// Index and squared distance of the nearest centroid; ties resolve to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.size {
            let d = sq_dist(self.centroid(k), v);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Token indices over a latent lattice, raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLattice {
    pub latent: LatentDims,
    pub tokens: Vec<TokenId>,
}

impl TokenLattice {
    pub fn new(latent: LatentDims, tokens: Vec<TokenId>) -> Result<Self> {
        if tokens.len() != latent.n() {
            return Err(Error::domain(format!(
                "lattice of {} positions given {} tokens",
                latent.n(),
                tokens.len()
            )));
        }
        Ok(Self { latent, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Quantized condition video with the per-position padding predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionTokens {
    pub latent: LatentDims,
    pub tokens: Vec<TokenId>,
    pub allpadded: Vec<bool>,
}

impl ConditionTokens {
    pub fn new(latent: LatentDims, tokens: Vec<TokenId>, allpadded: Vec<bool>) -> Result<Self> {
        if tokens.len() != latent.n() || allpadded.len() != latent.n() {
            return Err(Error::domain(format!(
                "condition of {} tokens / {} flags does not match {} positions",
                tokens.len(),
                allpadded.len(),
                latent.n()
            )));
        }
        Ok(Self {
            latent,
            tokens,
            allpadded,
        })
    }

    /// A condition with no valid pixel anywhere (pure masked token modeling).
    pub fn empty(latent: LatentDims) -> Self {
        Self {
            latent,
            tokens: vec![0; latent.n()],
            allpadded: vec![true; latent.n()],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Flattened pixel vectors of every supervoxel, in lattice raster order.
pub fn supervoxel_vectors(video: &VideoTensor, latent: &LatentDims) -> Result<Vec<Vec<f64>>> {
    let dims = video.dims();
    latent.check_compatible(&dims)?;
    latent
        .coords()
        .map(|c| {
            let sv = supervoxel_of(c, &dims, latent)?;
            let mut v = Vec::new();
            for (f, r, col) in sv.pixels() {
                v.extend_from_slice(video.pixel(f, r, col));
            }
            Ok(v)
        })
        .collect()
}

/// Vector length of one supervoxel for the given shapes.
pub fn supervoxel_dim(dims: &Dims3, latent: &LatentDims) -> Result<usize> {
    let (f, r, c) = latent.supervoxel_extent(dims)?;
    Ok(f * r * c * dims.channels)
}

fn check_dim(codebook: &Codebook, dims: &Dims3, latent: &LatentDims) -> Result<()> {
    let d = supervoxel_dim(dims, latent)?;
    if d != codebook.dim() {
        return Err(Error::config(format!(
            "codebook dimension {} does not match supervoxel size {d}",
            codebook.dim()
        )));
    }
    Ok(())
}

pub fn encode(video: &VideoTensor, codebook: &Codebook, latent: &LatentDims) -> Result<TokenLattice> {
    check_dim(codebook, &video.dims(), latent)?;
    let tokens = supervoxel_vectors(video, latent)?
        .iter()
        .map(|v| codebook.nearest(v).0 as TokenId)
        .collect();
    TokenLattice::new(*latent, tokens)
}

pub fn decode(tokens: &TokenLattice, codebook: &Codebook, dims: &Dims3) -> Result<VideoTensor> {
    let latent = tokens.latent;
    check_dim(codebook, dims, &latent)?;
    let mut out = VideoTensor::zeros(*dims);
    for (i, c) in latent.coords().enumerate() {
        let id = tokens.tokens[i] as usize;
        if id >= codebook.size() {
            return Err(Error::data(format!(
                "token {id} at position {i} outside codebook of {}",
                codebook.size()
            )));
        }
        let centroid = codebook.centroid(id);
        let sv = supervoxel_of(c, dims, &latent)?;
        let ch = dims.channels;
        for (j, (f, r, col)) in sv.pixels().enumerate() {
            out.pixel_mut(f, r, col)
                .copy_from_slice(&centroid[j * ch..(j + 1) * ch]);
        }
    }
    Ok(out)
}

/// Quantizes a padded condition video and records which positions are pure padding.
pub fn encode_condition(
    cond: &ConditionVideo,
    codebook: &Codebook,
    latent: &LatentDims,
) -> Result<ConditionTokens> {
    let dims = cond.video.dims();
    let tokens = encode(&cond.video, codebook, latent)?.tokens;
    let flags = latent
        .coords()
        .map(|c| allpadded(&cond.valid, c, &dims, latent))
        .collect::<Result<Vec<_>>>()?;
    ConditionTokens::new(*latent, tokens, flags)
}

/// Peak signal-to-noise ratio in dB for intensities in [0, 1].
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::domain("psnr inputs differ in shape"));
    }
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}
