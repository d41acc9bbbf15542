//! Geometry of the video to token correspondence.
//!
//! A video of `T×H×W×C` pixels is tiled by `t×h×w` supervoxels, each of
//! `T/t × H/h × W/w` pixels. Token positions are flattened in raster order
//! with the temporal axis outermost and the column axis innermost.

use std::ops::Range;

use crate::error::{Error, Result};

/// Pixel-space shape of a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims3 {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims3 {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::domain(format!(
                "video dims must be positive, got {frames}x{height}x{width}x{channels}"
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
        })
    }

    /// Number of pixels (channels not counted).
    pub fn pixels(&self) -> usize {
        self.frames * self.height * self.width
    }

    /// Number of scalar elements (pixels times channels).
    pub fn len(&self) -> usize {
        self.pixels() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same spatial-temporal shape with a single channel.
    pub fn without_channels(&self) -> Self {
        Self {
            channels: 1,
            ..*self
        }
    }

    pub fn same_volume(&self, other: &Dims3) -> bool {
        self.frames == other.frames && self.height == other.height && self.width == other.width
    }

    #[inline]
    pub fn pixel_index(&self, frame: usize, row: usize, col: usize) -> usize {
        (frame * self.height + row) * self.width + col
    }
}

/// Shape of the token lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentDims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

/// Coordinate of a token in the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentCoord {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

impl LatentCoord {
    pub fn new(frame: usize, row: usize, col: usize) -> Self {
        Self { frame, row, col }
    }
}

impl LatentDims {
    pub fn new(t: usize, h: usize, w: usize) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::domain(format!(
                "latent dims must be positive, got {t}x{h}x{w}"
            )));
        }
        Ok(Self { t, h, w })
    }

    /// Sequence length `N = t·h·w`.
    pub fn n(&self) -> usize {
        self.t * self.h * self.w
    }

    /// Checks the exact-divisibility invariant against a pixel shape.
    pub fn check_compatible(&self, dims: &Dims3) -> Result<()> {
        if dims.frames % self.t != 0 || dims.height % self.h != 0 || dims.width % self.w != 0 {
            return Err(Error::domain(format!(
                "latent {}x{}x{} does not evenly divide video {}x{}x{}",
                self.t, self.h, self.w, dims.frames, dims.height, dims.width
            )));
        }
        Ok(())
    }

    /// Extent of one supervoxel in pixels: (frames, rows, cols).
    pub fn supervoxel_extent(&self, dims: &Dims3) -> Result<(usize, usize, usize)> {
        self.check_compatible(dims)?;
        Ok((
            dims.frames / self.t,
            dims.height / self.h,
            dims.width / self.w,
        ))
    }

    fn check_coord(&self, c: LatentCoord) -> Result<()> {
        if c.frame >= self.t || c.row >= self.h || c.col >= self.w {
            return Err(Error::domain(format!(
                "lattice coordinate ({}, {}, {}) outside {}x{}x{}",
                c.frame, c.row, c.col, self.t, self.h, self.w
            )));
        }
        Ok(())
    }

    pub fn flatten(&self, c: LatentCoord) -> Result<usize> {
        self.check_coord(c)?;
        Ok((c.frame * self.h + c.row) * self.w + c.col)
    }

    pub fn unflatten(&self, i: usize) -> Result<LatentCoord> {
        if i >= self.n() {
            return Err(Error::domain(format!(
                "linear index {i} outside lattice of {} positions",
                self.n()
            )));
        }
        let col = i % self.w;
        let row = (i / self.w) % self.h;
        let frame = i / (self.w * self.h);
        Ok(LatentCoord { frame, row, col })
    }

    /// Iterates all coordinates in raster order.
    pub fn coords(&self) -> impl Iterator<Item = LatentCoord> + '_ {
        (0..self.t).flat_map(move |f| {
            (0..self.h).flat_map(move |r| (0..self.w).map(move |c| LatentCoord::new(f, r, c)))
        })
    }
}

/// Axis-aligned pixel block owned by one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Supervoxel {
    pub frames: Range<usize>,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Supervoxel {
    pub fn contains(&self, frame: usize, row: usize, col: usize) -> bool {
        self.frames.contains(&frame) && self.rows.contains(&row) && self.cols.contains(&col)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.frames.clone().flat_map(move |f| {
            self.rows
                .clone()
                .flat_map(move |r| self.cols.clone().map(move |c| (f, r, c)))
        })
    }
}

pub fn supervoxel_of(coord: LatentCoord, dims: &Dims3, latent: &LatentDims) -> Result<Supervoxel> {
    latent.check_coord(coord)?;
    let (sf, sr, sc) = latent.supervoxel_extent(dims)?;
    Ok(Supervoxel {
        frames: coord.frame * sf..(coord.frame + 1) * sf,
        rows: coord.row * sr..(coord.row + 1) * sr,
        cols: coord.col * sc..(coord.col + 1) * sc,
    })
}

/// Dense real-valued video, row-major with frames outermost and channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    dims: Dims3,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn new(dims: Dims3, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::domain(format!(
                "video data has {} elements, dims require {}",
                data.len(),
                dims.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "video element {pos} is not finite"
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims3) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    /// Builds a video by evaluating `f(frame, row, col, channel)` at every element.
    pub fn from_fn(dims: Dims3, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for fr in 0..dims.frames {
            for r in 0..dims.height {
                for c in 0..dims.width {
                    for ch in 0..dims.channels {
                        data.push(f(fr, r, c, ch));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, frame: usize, row: usize, col: usize) -> usize {
        self.dims.pixel_index(frame, row, col) * self.dims.channels
    }

    #[inline]
    pub fn get(&self, frame: usize, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.offset(frame, row, col) + channel]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, row: usize, col: usize, channel: usize, value: f64) {
        let o = self.offset(frame, row, col) + channel;
        self.data[o] = value;
    }

    /// All channels of one pixel.
    pub fn pixel(&self, frame: usize, row: usize, col: usize) -> &[f64] {
        let o = self.offset(frame, row, col);
        &self.data[o..o + self.dims.channels]
    }

    pub fn pixel_mut(&mut self, frame: usize, row: usize, col: usize) -> &mut [f64] {
        let o = self.offset(frame, row, col);
        let c = self.dims.channels;
        &mut self.data[o..o + c]
    }
}

/// Per-pixel validity of a condition video; `true` marks a valid condition pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    dims: Dims3,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn filled(dims: Dims3, value: bool) -> Self {
        let dims = dims.without_channels();
        Self {
            dims,
            data: vec![value; dims.pixels()],
        }
    }

    pub fn from_fn(dims: Dims3, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let dims = dims.without_channels();
        let mut data = Vec::with_capacity(dims.pixels());
        for fr in 0..dims.frames {
            for r in 0..dims.height {
                for c in 0..dims.width {
                    data.push(f(fr, r, c));
                }
            }
        }
        Self { dims, data }
    }

    pub fn new(dims: Dims3, data: Vec<bool>) -> Result<Self> {
        let dims = dims.without_channels();
        if data.len() != dims.pixels() {
            return Err(Error::domain(format!(
                "mask has {} pixels, dims require {}",
                data.len(),
                dims.pixels()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, frame: usize, row: usize, col: usize) -> bool {
        self.data[self.dims.pixel_index(frame, row, col)]
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.count_valid() as f64 / self.data.len() as f64
    }
}

/// Whether the supervoxel of `coord` holds no valid condition pixel.
pub fn allpadded(
    mask: &PixelMask,
    coord: LatentCoord,
    dims: &Dims3,
    latent: &LatentDims,
) -> Result<bool> {
    if !mask.dims().same_volume(dims) {
        return Err(Error::domain(format!(
            "mask {}x{}x{} does not match video {}x{}x{}",
            mask.dims.frames, mask.dims.height, mask.dims.width, dims.frames, dims.height, dims.width
        )));
    }
    let sv = supervoxel_of(coord, dims, latent)?;
    let any_valid = sv.pixels().any(|(f, r, c)| mask.get(f, r, c));
    Ok(!any_valid)
}

/// Total compression rate from pixels to tokens.
///
/// `bits_per_pixel` counts all channels of one pixel (24 for 8-bit RGB),
/// `bits_per_token` is `log2 |Z|` (10 for a 1024-entry codebook).
pub fn compression_rate(
    dims: &Dims3,
    latent: &LatentDims,
    bits_per_pixel: u32,
    bits_per_token: u32,
) -> Result<f64> {
    latent.check_compatible(dims)?;
    if bits_per_pixel == 0 || bits_per_token == 0 {
        return Err(Error::domain("bit widths must be positive"));
    }
    // single rounding: both products are exact in f64 at any realistic size
    let pixel_bits = (dims.pixels() as u128 * bits_per_pixel as u128) as f64;
    let token_bits = (latent.n() as u128 * bits_per_token as u128) as f64;
    Ok(pixel_bits / token_bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_dims() -> (Dims3, LatentDims) {
        (
            Dims3::new(16, 128, 128, 3).unwrap(),
            LatentDims::new(4, 16, 16).unwrap(),
        )
    }

    #[test]
    fn first_and_last_supervoxel() {
        let (dims, latent) = reference_dims();
        let sv = supervoxel_of(LatentCoord::new(0, 0, 0), &dims, &latent).unwrap();
        assert_eq!(sv.frames, 0..4);
        assert_eq!(sv.rows, 0..8);
        assert_eq!(sv.cols, 0..8);
        let sv = supervoxel_of(LatentCoord::new(3, 15, 15), &dims, &latent).unwrap();
        assert_eq!(sv.frames, 12..16);
        assert_eq!(sv.rows, 120..128);
        assert_eq!(sv.cols, 120..128);
    }

    #[test]
    fn supervoxel_matches_ownership_map() {
        let dims = Dims3::new(8, 16, 16, 1).unwrap();
        let latent = LatentDims::new(2, 4, 4).unwrap();
        // brute-force owner of every pixel by scanning all blocks
        let target = LatentCoord::new(1, 2, 3);
        let sv = supervoxel_of(target, &dims, &latent).unwrap();
        assert_eq!(sv.frames, 4..8);
        assert_eq!(sv.rows, 8..12);
        assert_eq!(sv.cols, 12..16);
        let mut owned = 0;
        for f in 0..8 {
            for r in 0..16 {
                for c in 0..16 {
                    let owner = latent
                        .coords()
                        .find(|&lc| {
                            f * latent.t / dims.frames == lc.frame
                                && r * latent.h / dims.height == lc.row
                                && c * latent.w / dims.width == lc.col
                        })
                        .unwrap();
                    if owner == target {
                        owned += 1;
                        assert!(sv.contains(f, r, c));
                    } else {
                        assert!(!sv.contains(f, r, c));
                    }
                }
            }
        }
        assert_eq!(owned, 4 * 4 * 4);
    }

    #[test]
    fn out_of_range_coordinate_rejected() {
        let (dims, latent) = reference_dims();
        assert!(matches!(
            supervoxel_of(LatentCoord::new(4, 0, 0), &dims, &latent),
            Err(Error::Domain(_))
        ));
        assert!(latent.flatten(LatentCoord::new(0, 16, 0)).is_err());
        assert!(latent.unflatten(1024).is_err());
    }

    #[test]
    fn flatten_examples() {
        let latent = LatentDims::new(4, 16, 16).unwrap();
        assert_eq!(latent.flatten(LatentCoord::new(0, 0, 0)).unwrap(), 0);
        assert_eq!(latent.flatten(LatentCoord::new(0, 0, 1)).unwrap(), 1);
        assert_eq!(latent.flatten(LatentCoord::new(1, 0, 0)).unwrap(), 256);
    }

    #[test]
    fn flatten_round_trip_all_positions() {
        let latent = LatentDims::new(3, 5, 7).unwrap();
        for (expected, c) in latent.coords().enumerate() {
            let i = latent.flatten(c).unwrap();
            assert_eq!(i, expected);
            assert_eq!(latent.unflatten(i).unwrap(), c);
        }
    }

    #[test]
    fn non_divisible_lattice_rejected() {
        let dims = Dims3::new(16, 10, 16, 1).unwrap();
        let latent = LatentDims::new(4, 4, 4).unwrap();
        assert!(latent.check_compatible(&dims).is_err());
        assert!(compression_rate(&dims, &latent, 8, 6).is_err());
    }

    #[test]
    fn allpadded_trivial_masks() {
        let dims = Dims3::new(8, 8, 8, 1).unwrap();
        let latent = LatentDims::new(2, 2, 2).unwrap();
        let none = PixelMask::filled(dims, false);
        let all = PixelMask::filled(dims, true);
        for c in latent.coords() {
            assert!(allpadded(&none, c, &dims, &latent).unwrap());
            assert!(!allpadded(&all, c, &dims, &latent).unwrap());
        }
    }

    #[test]
    fn allpadded_first_frame_condition() {
        let dims = Dims3::new(16, 8, 8, 1).unwrap();
        let latent = LatentDims::new(4, 2, 2).unwrap();
        let mask = PixelMask::from_fn(dims, |f, _, _| f == 0);
        for c in latent.coords() {
            let padded = allpadded(&mask, c, &dims, &latent).unwrap();
            assert_eq!(padded, c.frame != 0, "coord {c:?}");
        }
    }

    #[test]
    fn allpadded_dimension_mismatch() {
        let dims = Dims3::new(8, 8, 8, 1).unwrap();
        let other = Dims3::new(8, 8, 4, 1).unwrap();
        let latent = LatentDims::new(2, 2, 2).unwrap();
        let mask = PixelMask::filled(other, true);
        assert!(matches!(
            allpadded(&mask, LatentCoord::new(0, 0, 0), &dims, &latent),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn compression_rate_examples() {
        let (dims, latent) = reference_dims();
        assert_eq!(compression_rate(&dims, &latent, 24, 10).unwrap(), 614.4);
        let small = Dims3::new(16, 64, 64, 3).unwrap();
        assert!((compression_rate(&small, &latent, 24, 10).unwrap() - 153.6).abs() < 1e-12);
        let same = Dims3::new(4, 16, 16, 1).unwrap();
        assert_eq!(compression_rate(&same, &latent, 10, 10).unwrap(), 1.0);
    }

    #[test]
    fn video_rejects_non_finite_and_bad_length() {
        let dims = Dims3::new(1, 1, 2, 1).unwrap();
        assert!(VideoTensor::new(dims, vec![0.0]).is_err());
        assert!(VideoTensor::new(dims, vec![0.0, f64::NAN]).is_err());
        assert!(Dims3::new(0, 1, 1, 1).is_err());
    }
}
