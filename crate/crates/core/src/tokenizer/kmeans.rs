use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, supervoxel_vectors, Codebook};
use crate::error::{Error, Result};
use crate::lattice::{LatentDims, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub max_iters: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iters: 50 }
    }
}

/// Distinct vectors with their multiplicities, in order of first appearance.
struct WeightedPoints {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedPoints {
    fn collect(videos: &[VideoTensor], latent: &LatentDims) -> Result<Self> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut dim = None;
        for video in videos {
            for v in supervoxel_vectors(video, latent)? {
                match dim {
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(Error::data("corpus videos have differing supervoxel sizes"))
                    }
                    _ => {}
                }
                let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
                match index.get(&key) {
                    Some(&i) => weights[i] += 1.0,
                    None => {
                        index.insert(key, weights.len());
                        points.extend_from_slice(&v);
                        weights.push(1.0);
                    }
                }
            }
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            points,
            weights,
        })
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    // rounding fell off the end: last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn nearest(centroids: &[f64], dim: usize, v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Fits a codebook of `size` centroids with default settings (50 Lloyd iterations).
pub fn fit_codebook(
    videos: &[VideoTensor],
    size: usize,
    latent: &LatentDims,
    seed: u64,
) -> Result<Codebook> {
    fit_codebook_with(videos, size, latent, seed, KMeansConfig::default())
}

/// k-means over all supervoxel vectors of the corpus.
///
/// Initialization samples centers proportionally to squared distance
/// (k-means++); clusters that empty out are reseeded to the point farthest
/// from its centroid. Deterministic for a given seed.
pub fn fit_codebook_with(
    videos: &[VideoTensor],
    size: usize,
    latent: &LatentDims,
    seed: u64,
    config: KMeansConfig,
) -> Result<Codebook> {
    if size < 2 {
        return Err(Error::config(format!("codebook size {size} must be at least 2")));
    }
    let data = WeightedPoints::collect(videos, latent)?;
    if data.len() < size {
        return Err(Error::config(format!(
            "corpus has {} distinct supervoxel vectors, codebook needs at least {size}",
            data.len()
        )));
    }
    let dim = data.dim;
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = Vec::with_capacity(size * dim);
    let first = weighted_pick(&mut rng, &data.weights);
    centroids.extend_from_slice(data.point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.point(i), data.point(first))).collect();
    for _ in 1..size {
        let w: Vec<f64> = d2.iter().zip(&data.weights).map(|(d, w)| d * w).collect();
        let next = weighted_pick(&mut rng, &w);
        let c = data.point(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.point(i), &c));
        }
        centroids.extend_from_slice(&c);
    }

    let mut assign = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    for _ in 0..config.max_iters {
        let mut changed = false;
        for i in 0..n {
            let (k, d) = nearest(&centroids, dim, data.point(i));
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
            dist[i] = d;
        }
        if !changed {
            break;
        }

        let mut sums = vec![0.0; size * dim];
        let mut mass = vec![0.0; size];
        for i in 0..n {
            let k = assign[i];
            let w = data.weights[i];
            mass[k] += w;
            for (s, x) in sums[k * dim..(k + 1) * dim].iter_mut().zip(data.point(i)) {
                *s += w * x;
            }
        }
        for k in 0..size {
            let slot = &mut centroids[k * dim..(k + 1) * dim];
            if mass[k] > 0.0 {
                for (c, s) in slot.iter_mut().zip(&sums[k * dim..(k + 1) * dim]) {
                    *c = s / mass[k];
                }
            } else {
                let far = (0..n)
                    .fold(0, |best, i| if dist[i] > dist[best] { i } else { best });
                slot.copy_from_slice(data.point(far));
                dist[far] = 0.0;
            }
        }
    }
    Codebook::new(size, dim, centroids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Dims3;
    use crate::tokenizer::{decode, encode};

    fn blocks_video(values: &[f64]) -> VideoTensor {
        // one frame row of 1x1x1 supervoxels, one per value
        let dims = Dims3::new(1, 1, values.len(), 1).unwrap();
        VideoTensor::new(dims, values.to_vec()).unwrap()
    }

    fn sse(videos: &[VideoTensor], cb: &Codebook, latent: &LatentDims) -> f64 {
        videos
            .iter()
            .map(|v| {
                let rec = decode(&encode(v, cb, latent).unwrap(), cb, &v.dims()).unwrap();
                v.data().iter().zip(rec.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn exact_cover_recovers_points() {
        let values = [0.1, 0.9, 0.4, 0.7, 0.25];
        let v = blocks_video(&values);
        let latent = LatentDims::new(1, 1, 5).unwrap();
        let cb = fit_codebook(&[v], 5, &latent, 3).unwrap();
        let mut got: Vec<f64> = cb.centroids().to_vec();
        got.sort_by(f64::total_cmp);
        let mut want = values.to_vec();
        want.sort_by(f64::total_cmp);
        assert_eq!(got, want);
    }

    #[test]
    fn separated_clusters() {
        let dims = Dims3::new(2, 4, 4, 1).unwrap();
        let latent = LatentDims::new(1, 2, 2).unwrap();
        let v = VideoTensor::from_fn(dims, |_, r, c, _| if (r < 2) == (c < 2) { 0.0 } else { 1.0 });
        let cb = fit_codebook(&[v], 2, &latent, 0).unwrap();
        let mut firsts = vec![cb.centroid(0)[0], cb.centroid(1)[0]];
        firsts.sort_by(f64::total_cmp);
        assert_eq!(firsts, vec![0.0, 1.0]);
        for k in 0..2 {
            let c = cb.centroid(k);
            assert!(c.iter().all(|&x| x == c[0]));
        }
    }

    #[test]
    fn insufficient_data() {
        let v = blocks_video(&[0.0, 0.0, 1.0]);
        let latent = LatentDims::new(1, 1, 3).unwrap();
        assert!(matches!(fit_codebook(&[v], 3, &latent, 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_and_bigger_is_better() {
        let dims = Dims3::new(4, 8, 8, 1).unwrap();
        let latent = LatentDims::new(2, 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let corpus: Vec<VideoTensor> = (0..6)
            .map(|_| VideoTensor::from_fn(dims, |_, _, _, _| rng.gen()))
            .collect();
        let small = fit_codebook(&corpus, 4, &latent, 7).unwrap();
        let big = fit_codebook(&corpus, 16, &latent, 7).unwrap();
        assert_eq!(small, fit_codebook(&corpus, 4, &latent, 7).unwrap());
        assert!(sse(&corpus, &big, &latent) <= sse(&corpus, &small, &latent));
    }
}
