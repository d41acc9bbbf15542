//! Little-endian binary formats for videos, token lattices, codebooks,
//! predictor checkpoints and datasets.
//!
//! | magic  | layout after magic                                                        |
//! |--------|---------------------------------------------------------------------------|
//! | `MGV1` | version u8, dtype u8 (0 = f32, 1 = f64), ndim u8 = 4, T H W C u32, payload |
//! | `MGT1` | version u8, t h w u32, payload u16                                        |
//! | `MGCB` | version u8, size u32, dim u32, centroids f32                              |
//! | `MGPD` | version u8, codebook u32, classes u32, dim u32, radius u32, params f32    |
//! | `MGDS` | version u8, count u32, then per clip: label u32 + one `MGV1` record        |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{Dims3, LatentDims, VideoTensor};
use crate::model::{NeighborhoodPredictor, Vocabulary};
use crate::tokenizer::{Codebook, TokenLattice};

pub const VIDEO_MAGIC: &[u8; 4] = b"MGV1";
pub const TOKENS_MAGIC: &[u8; 4] = b"MGT1";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"MGCB";
pub const PREDICTOR_MAGIC: &[u8; 4] = b"MGPD";
pub const DATASET_MAGIC: &[u8; 4] = b"MGDS";
pub const VERSION: u8 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::data(format!(
                "truncated {} at byte {}",
                self.what, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::data(format!(
                "bad {} magic {:?}, expected {:?}",
                self.what,
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u8()?;
        if version != VERSION {
            return Err(Error::data(format!(
                "unsupported {} version {version}",
                self.what
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::data("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::data("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::data(format!(
                "{} trailing bytes after {}",
                self.buf.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::data(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f32s(out: &mut Vec<u8>, vals: &[f64]) {
    for &v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.push(VERSION);
    out
}

/// Serializes a video with f32 samples.
pub fn video_to_bytes(video: &VideoTensor) -> Result<Vec<u8>> {
    let d = video.dims();
    let mut out = header(VIDEO_MAGIC);
    out.push(DTYPE_F32);
    out.push(4);
    for v in [d.frames, d.height, d.width, d.channels] {
        push_u32(&mut out, v)?;
    }
    push_f32s(&mut out, video.data());
    Ok(out)
}

fn read_video_record(r: &mut Reader<'_>) -> Result<VideoTensor> {
    r.magic(VIDEO_MAGIC)?;
    let dtype = r.u8()?;
    let ndim = r.u8()?;
    if ndim != 4 {
        return Err(Error::data(format!("video ndim {ndim}, expected 4")));
    }
    let dims = Dims3::new(
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
    )
    .map_err(|e| Error::data(e.to_string()))?;
    let data = match dtype {
        DTYPE_F32 => r.f32s(dims.len())?,
        DTYPE_F64 => r.f64s(dims.len())?,
        other => return Err(Error::data(format!("unknown video dtype code {other}"))),
    };
    VideoTensor::new(dims, data).map_err(|e| Error::data(e.to_string()))
}

pub fn video_from_bytes(bytes: &[u8]) -> Result<VideoTensor> {
    let mut r = Reader::new(bytes, "video");
    let v = read_video_record(&mut r)?;
    r.finish()?;
    Ok(v)
}

pub fn tokens_to_bytes(tokens: &TokenLattice) -> Result<Vec<u8>> {
    let l = tokens.latent;
    let mut out = header(TOKENS_MAGIC);
    for v in [l.t, l.h, l.w] {
        push_u32(&mut out, v)?;
    }
    for &t in &tokens.tokens {
        let t = u16::try_from(t).map_err(|_| Error::data(format!("token {t} does not fit in u16")))?;
        out.extend_from_slice(&t.to_le_bytes());
    }
    Ok(out)
}

pub fn tokens_from_bytes(bytes: &[u8]) -> Result<TokenLattice> {
    let mut r = Reader::new(bytes, "token lattice");
    r.magic(TOKENS_MAGIC)?;
    let latent = LatentDims::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize)
        .map_err(|e| Error::data(e.to_string()))?;
    let tokens = (0..latent.n())
        .map(|_| r.u16().map(u32::from))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    TokenLattice::new(latent, tokens)
}

pub fn codebook_to_bytes(cb: &Codebook) -> Result<Vec<u8>> {
    let mut out = header(CODEBOOK_MAGIC);
    push_u32(&mut out, cb.size())?;
    push_u32(&mut out, cb.dim())?;
    push_f32s(&mut out, cb.centroids());
    Ok(out)
}

pub fn codebook_from_bytes(bytes: &[u8]) -> Result<Codebook> {
    let mut r = Reader::new(bytes, "codebook");
    r.magic(CODEBOOK_MAGIC)?;
    let size = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let centroids = r.f32s(size * dim)?;
    r.finish()?;
    Codebook::new(size, dim, centroids).map_err(|e| Error::data(e.to_string()))
}

pub fn predictor_to_bytes(p: &NeighborhoodPredictor) -> Result<Vec<u8>> {
    use crate::model::Predictor;
    let mut out = header(PREDICTOR_MAGIC);
    push_u32(&mut out, p.vocab().codebook_size())?;
    push_u32(&mut out, p.vocab().num_classes())?;
    push_u32(&mut out, p.dim())?;
    push_u32(&mut out, p.radius())?;
    push_f32s(&mut out, p.params());
    Ok(out)
}

pub fn predictor_from_bytes(bytes: &[u8]) -> Result<NeighborhoodPredictor> {
    let mut r = Reader::new(bytes, "predictor checkpoint");
    r.magic(PREDICTOR_MAGIC)?;
    let codebook = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let radius = r.u32()? as usize;
    let vocab = Vocabulary::new(codebook, classes).map_err(|e| Error::data(e.to_string()))?;
    let shape = NeighborhoodPredictor::zeros(vocab, dim, radius).map_err(|e| Error::data(e.to_string()))?;
    let theta = r.f32s(shape.params().len())?;
    r.finish()?;
    NeighborhoodPredictor::from_params(vocab, dim, radius, theta)
}

/// Labeled clips of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clips: Vec<VideoTensor>,
    pub labels: Vec<u32>,
}

pub fn dataset_to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.clips.len() != ds.labels.len() {
        return Err(Error::data("dataset has mismatched clips and labels"));
    }
    let mut out = header(DATASET_MAGIC);
    push_u32(&mut out, ds.clips.len())?;
    for (clip, &label) in ds.clips.iter().zip(&ds.labels) {
        out.extend_from_slice(&label.to_le_bytes());
        out.extend(video_to_bytes(clip)?);
    }
    Ok(out)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes, "dataset");
    r.magic(DATASET_MAGIC)?;
    let count = r.u32()? as usize;
    let mut clips = Vec::with_capacity(count.min(1 << 16));
    let mut labels = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        labels.push(r.u32()?);
        clips.push(read_video_record(&mut r)?);
    }
    r.finish()?;
    Ok(Dataset { clips, labels })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads and decodes a file, tagging decode errors with the path.
pub fn load<T>(path: &Path, decode: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    let bytes = read_file(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn video_header_layout() {
        let dims = Dims3::new(2, 1, 3, 1).unwrap();
        let v = VideoTensor::new(dims, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        let b = video_to_bytes(&v).unwrap();
        assert_eq!(&b[..4], b"MGV1");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 0);
        assert_eq!(b[6], 4);
        assert_eq!(&b[7..11], &2u32.to_le_bytes());
        assert_eq!(&b[19..23], &1u32.to_le_bytes());
        assert_eq!(&b[23..27], &0.0f32.to_le_bytes());
        assert_eq!(&b[27..31], &0.25f32.to_le_bytes());
        assert_eq!(b.len(), 23 + 6 * 4);
        assert_eq!(video_from_bytes(&b).unwrap(), v);
    }

    #[test]
    fn f64_video_payload_accepted() {
        let mut b = b"MGV1".to_vec();
        b.extend([1, DTYPE_F64, 4]);
        for d in [1u32, 1, 1, 1] {
            b.extend(d.to_le_bytes());
        }
        b.extend(0.1f64.to_le_bytes());
        assert_eq!(video_from_bytes(&b).unwrap().data(), &[0.1]);
    }

    #[test]
    fn token_layout() {
        let t = TokenLattice::new(LatentDims::new(1, 1, 2).unwrap(), vec![7, 513]).unwrap();
        let b = tokens_to_bytes(&t).unwrap();
        assert_eq!(&b[..5], b"MGT1\x01");
        assert_eq!(&b[17..], &[7, 0, 1, 2]);
        assert_eq!(tokens_from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn corrupt_inputs_are_data_errors() {
        assert!(matches!(video_from_bytes(b"MGV2\x01"), Err(Error::Data(_))));
        assert!(matches!(tokens_from_bytes(b"MGT1\x01\x01\x00"), Err(Error::Data(_))));
        assert!(matches!(codebook_from_bytes(b"MGCB\x02"), Err(Error::Data(_))));
        let cb = Codebook::new(2, 1, vec![0.0, 1.0]).unwrap();
        let mut b = codebook_to_bytes(&cb).unwrap();
        b.push(0);
        assert!(matches!(codebook_from_bytes(&b), Err(Error::Data(_))));
    }

    #[test]
    fn predictor_checkpoint_round_trip() {
        let vocab = Vocabulary::new(4, 2).unwrap();
        let p = NeighborhoodPredictor::random(vocab, 3, 1, 1, 0.5).unwrap();
        let q = predictor_from_bytes(&predictor_to_bytes(&p).unwrap()).unwrap();
        assert_eq!(q.dim(), 3);
        assert_eq!(q.radius(), 1);
        for (a, b) in p.params().iter().zip(q.params()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    proptest! {
        #[test]
        fn video_round_trip(t in 1usize..4, h in 1usize..4, w in 1usize..4, c in 1usize..3, seed in any::<u64>()) {
            let dims = Dims3::new(t, h, w, c).unwrap();
            let mut x = seed;
            let v = VideoTensor::from_fn(dims, |_, _, _, _| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 40) as f32 / (1u64 << 24) as f32) as f64
            });
            prop_assert_eq!(video_from_bytes(&video_to_bytes(&v).unwrap()).unwrap(), v);
        }

        #[test]
        fn dataset_round_trip(n in 0usize..4, labels in proptest::collection::vec(any::<u32>(), 4)) {
            let dims = Dims3::new(1, 2, 2, 1).unwrap();
            let clips: Vec<_> = (0..n).map(|i| VideoTensor::from_fn(dims, |_, r, c, _| ((i + r + c) % 2) as f64)).collect();
            let ds = Dataset { clips, labels: labels[..n].to_vec() };
            prop_assert_eq!(dataset_from_bytes(&dataset_to_bytes(&ds).unwrap()).unwrap(), ds);
        }
    }
}
