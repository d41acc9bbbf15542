//! Small procedural video corpora.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::formats::Dataset;
use crate::lattice::{Dims3, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motif {
    /// Bright square translating with constant velocity, wrapping at borders.
    MovingSquare,
    /// Full-height bar moving horizontally and reflecting off the sides.
    BouncingBar,
    /// One gray level held for the whole clip.
    Constant,
}

impl Motif {
    pub const ALL: [Motif; 3] = [Motif::MovingSquare, Motif::BouncingBar, Motif::Constant];

    /// Class label used for class-conditional tasks.
    pub fn label(self) -> u32 {
        match self {
            Motif::MovingSquare => 0,
            Motif::BouncingBar => 1,
            Motif::Constant => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Motif::MovingSquare => "moving_square",
            Motif::BouncingBar => "bouncing_bar",
            Motif::Constant => "constant",
        }
    }
}

impl fmt::Display for Motif {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Motif {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Motif::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown motif {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dims: Dims3,
    pub motif: Motif,
    pub count: usize,
    pub seed: u64,
    /// Square side, or bar width.
    pub square: usize,
    /// Per-frame displacement in (rows, cols).
    pub velocity: (i64, i64),
}

impl SyntheticSpec {
    pub fn new(dims: Dims3, motif: Motif, count: usize, seed: u64) -> Self {
        Self {
            dims,
            motif,
            count,
            seed,
            square: 4,
            velocity: (1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::usage("data.count must be positive"));
        }
        let fits = match self.motif {
            Motif::MovingSquare => self.square <= self.dims.height && self.square <= self.dims.width,
            Motif::BouncingBar => self.square <= self.dims.width,
            Motif::Constant => true,
        };
        if self.square == 0 || !fits {
            return Err(Error::usage(format!(
                "data.square {} does not fit {}x{} frames",
                self.square, self.dims.height, self.dims.width
            )));
        }
        Ok(())
    }
}

/// Top-left corner of the moving square at `frame`.
pub fn square_position(start: (usize, usize), velocity: (i64, i64), frame: usize, dims: &Dims3) -> (usize, usize) {
    let step = |s: usize, v: i64, n: usize| (s as i64 + v * frame as i64).rem_euclid(n as i64) as usize;
    (
        step(start.0, velocity.0, dims.height),
        step(start.1, velocity.1, dims.width),
    )
}

/// Left edge of the bar at `frame`, reflecting inside `[0, width - bar]`.
fn bar_position(start: usize, velocity: i64, frame: usize, span: usize) -> usize {
    if span == 0 {
        return 0;
    }
    let period = 2 * span as i64;
    let p = (start as i64 + velocity * frame as i64).rem_euclid(period);
    if p <= span as i64 {
        p as usize
    } else {
        (period - p) as usize
    }
}

fn clip(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> VideoTensor {
    let d = spec.dims;
    let n = spec.square;
    match spec.motif {
        Motif::MovingSquare => {
            let start = (rng.gen_range(0..d.height), rng.gen_range(0..d.width));
            VideoTensor::from_fn(d, |f, r, c, _| {
                let (r0, c0) = square_position(start, spec.velocity, f, &d);
                let inside = (r + d.height - r0) % d.height < n && (c + d.width - c0) % d.width < n;
                if inside {
                    1.0
                } else {
                    0.0
                }
            })
        }
        Motif::BouncingBar => {
            let span = d.width - n;
            let start = rng.gen_range(0..=2 * span);
            VideoTensor::from_fn(d, |f, _, c, _| {
                let c0 = bar_position(start, spec.velocity.1, f, span);
                if (c0..c0 + n).contains(&c) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        Motif::Constant => {
            let level: f64 = rng.gen_range(0.0..1.0);
            VideoTensor::from_fn(d, |_, _, _, _| level)
        }
    }
}

/// Deterministic corpus for `spec`; every clip is labelled with its motif.
pub fn make_data(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clips: Vec<VideoTensor> = (0..spec.count).map(|_| clip(spec, &mut rng)).collect();
    Ok(Dataset {
        labels: vec![spec.motif.label(); clips.len()],
        clips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims3 {
        Dims3::new(16, 16, 16, 1).unwrap()
    }

    #[test]
    fn constant_frames_identical() {
        let ds = make_data(&SyntheticSpec::new(dims(), Motif::Constant, 3, 1)).unwrap();
        for v in &ds.clips {
            for f in 1..16 {
                for r in 0..16 {
                    for c in 0..16 {
                        assert_eq!(v.get(f, r, c, 0), v.get(0, r, c, 0));
                    }
                }
            }
        }
    }

    #[test]
    fn moving_square_trajectory() {
        let d = dims();
        let ds = make_data(&SyntheticSpec::new(d, Motif::MovingSquare, 4, 9)).unwrap();
        for v in &ds.clips {
            // Recover the start from frame 0: the unique lit pixel whose
            // up-left neighbours (with wrap) are dark.
            let lit = |f: usize, r: usize, c: usize| v.get(f, r % 16, c % 16, 0) > 0.5;
            let start = (0..16)
                .flat_map(|r| (0..16).map(move |c| (r, c)))
                .find(|&(r, c)| lit(0, r, c) && !lit(0, r + 15, c) && !lit(0, r, c + 15))
                .unwrap();
            for tau in 0..16 {
                let r0 = (start.0 + tau % 16) % 16;
                let c0 = (start.1 + tau % 16) % 16;
                let mut count = 0;
                for r in 0..16 {
                    for c in 0..16 {
                        let inside = (r + 16 - r0) % 16 < 4 && (c + 16 - c0) % 16 < 4;
                        assert_eq!(lit(tau, r, c), inside, "frame {tau} ({r},{c})");
                        count += inside as usize;
                    }
                }
                assert_eq!(count, 16);
            }
        }
    }

    #[test]
    fn bar_stays_inside() {
        let d = Dims3::new(20, 8, 12, 1).unwrap();
        let mut spec = SyntheticSpec::new(d, Motif::BouncingBar, 5, 2);
        spec.velocity = (0, 3);
        for v in make_data(&spec).unwrap().clips {
            for f in 0..20 {
                let lit = (0..12).filter(|&c| v.get(f, 0, c, 0) > 0.5).count();
                assert_eq!(lit, 4);
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::new(dims(), Motif::MovingSquare, 6, 42);
        assert_eq!(make_data(&spec).unwrap(), make_data(&spec).unwrap());
        let other = SyntheticSpec { seed: 43, ..spec.clone() };
        assert_ne!(make_data(&spec).unwrap(), make_data(&other).unwrap());
    }

    #[test]
    fn geometry_must_fit() {
        let mut spec = SyntheticSpec::new(Dims3::new(4, 4, 4, 1).unwrap(), Motif::MovingSquare, 1, 0);
        spec.square = 5;
        assert!(spec.validate().is_err());
    }
}
