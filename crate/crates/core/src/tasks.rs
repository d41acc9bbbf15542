//! Interior-condition builders for the ten generation tasks.
//!
//! Each task keeps a fixed region of the source video as valid condition
//! pixels and fills the rest with a task-specific padding function, producing
//! a condition video of the same shape as the source.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{Dims3, PixelMask, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    /// Frame prediction.
    FP,
    /// Frame interpolation.
    FI,
    /// Central outpainting.
    OPC,
    /// Vertical outpainting.
    OPV,
    /// Horizontal outpainting.
    OPH,
    /// Dynamic outpainting.
    OPD,
    /// Central inpainting.
    IPC,
    /// Dynamic inpainting.
    IPD,
    /// Class-conditional generation.
    CG,
    /// Class-conditional frame prediction.
    CFP,
}

impl TaskId {
    pub const ALL: [TaskId; 10] = [
        TaskId::FP,
        TaskId::FI,
        TaskId::OPC,
        TaskId::OPV,
        TaskId::OPH,
        TaskId::OPD,
        TaskId::IPC,
        TaskId::IPD,
        TaskId::CG,
        TaskId::CFP,
    ];

    /// Position of the task in [`TaskId::ALL`]; used to derive the prompt token.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::FP => "FP",
            TaskId::FI => "FI",
            TaskId::OPC => "OPC",
            TaskId::OPV => "OPV",
            TaskId::OPH => "OPH",
            TaskId::OPD => "OPD",
            TaskId::IPC => "IPC",
            TaskId::IPD => "IPD",
            TaskId::CG => "CG",
            TaskId::CFP => "CFP",
        }
    }

    /// Whether the task takes a class label as prefix condition.
    pub fn needs_label(self) -> bool {
        matches!(self, TaskId::CG | TaskId::CFP)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown task {s:?}")))
    }
}

/// Adjustable geometry of the task regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskParams {
    /// Number of leading frames given for FP/CFP.
    pub fp_frames: usize,
    /// Leading frames given for FI.
    pub fi_head: usize,
    /// Trailing frames given for FI.
    pub fi_tail: usize,
    /// Region height as a fraction of the frame height.
    pub frac_h: f64,
    /// Region width as a fraction of the frame width.
    pub frac_w: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            fp_frames: 1,
            fi_head: 1,
            fi_tail: 1,
            frac_h: 0.5,
            frac_w: 0.5,
        }
    }
}

fn region_extent(frac: f64, full: usize, what: &str) -> Result<usize> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::usage(format!("{what} fraction {frac} must lie in (0, 1)")));
    }
    let exact = frac * full as f64;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::usage(format!(
            "{what} fraction {frac} of {full} pixels is not a whole pixel count"
        )));
    }
    Ok(rounded as usize)
}

/// Start of a centered span of `len` inside `full`; an odd leftover puts the
/// extra pixel in the leading margin.
fn centered_start(len: usize, full: usize) -> usize {
    let leftover = full - len;
    leftover - leftover / 2
}

/// Left offset of the moving window at `frame`: linear sweep from flush-left at
/// frame 0 to flush-right at the last frame, rounded half up.
fn sweep_offset(frame: usize, frames: usize, len: usize, full: usize) -> usize {
    if frames <= 1 {
        return 0;
    }
    let span = full - len;
    let denom = frames - 1;
    (2 * span * frame + denom) / (2 * denom)
}

/// Resolved per-task geometry.
#[derive(Debug, Clone, Copy)]
enum Region {
    LeadingFrames(usize),
    HeadTail { head: usize, tail: usize },
    /// Rectangle rows/cols valid in every frame.
    Rect { top: usize, rows: usize, left: usize, cols: usize },
    /// Moving vertical strip or rectangle; valid inside when `inside` is true.
    Sweep { top: usize, rows: usize, cols: usize, inside: bool },
    /// Everything outside the rectangle valid.
    RectComplement { top: usize, rows: usize, left: usize, cols: usize },
    Nothing,
}

fn resolve(task: TaskId, dims: &Dims3, params: &TaskParams) -> Result<Region> {
    let (h, w) = (dims.height, dims.width);
    let t = dims.frames;
    Ok(match task {
        TaskId::FP | TaskId::CFP => {
            if params.fp_frames < 1 || params.fp_frames >= t {
                return Err(Error::usage(format!(
                    "fp_frames {} must satisfy 1 <= t < {t}",
                    params.fp_frames
                )));
            }
            Region::LeadingFrames(params.fp_frames)
        }
        TaskId::FI => {
            if params.fi_head < 1 || params.fi_tail < 1 || params.fi_head + params.fi_tail >= t {
                return Err(Error::usage(format!(
                    "fi_head {} and fi_tail {} must be >= 1 with sum < {t}",
                    params.fi_head, params.fi_tail
                )));
            }
            Region::HeadTail {
                head: params.fi_head,
                tail: params.fi_tail,
            }
        }
        TaskId::OPC | TaskId::IPC => {
            let rows = region_extent(params.frac_h, h, "height")?;
            let cols = region_extent(params.frac_w, w, "width")?;
            let (top, left) = (centered_start(rows, h), centered_start(cols, w));
            if task == TaskId::OPC {
                Region::Rect { top, rows, left, cols }
            } else {
                Region::RectComplement { top, rows, left, cols }
            }
        }
        TaskId::OPV => {
            let cols = region_extent(params.frac_w, w, "width")?;
            Region::Rect {
                top: 0,
                rows: h,
                left: centered_start(cols, w),
                cols,
            }
        }
        TaskId::OPH => {
            let rows = region_extent(params.frac_h, h, "height")?;
            Region::Rect {
                top: centered_start(rows, h),
                rows,
                left: 0,
                cols: w,
            }
        }
        TaskId::OPD => {
            let cols = region_extent(params.frac_w, w, "width")?;
            Region::Sweep {
                top: 0,
                rows: h,
                cols,
                inside: true,
            }
        }
        TaskId::IPD => {
            let rows = region_extent(params.frac_h, h, "height")?;
            let cols = region_extent(params.frac_w, w, "width")?;
            Region::Sweep {
                top: centered_start(rows, h),
                rows,
                cols,
                inside: false,
            }
        }
        TaskId::CG => Region::Nothing,
    })
}

impl Region {
    fn is_valid(&self, dims: &Dims3, frame: usize, row: usize, col: usize) -> bool {
        match *self {
            Region::LeadingFrames(n) => frame < n,
            Region::HeadTail { head, tail } => frame < head || frame >= dims.frames - tail,
            Region::Rect { top, rows, left, cols } => {
                (top..top + rows).contains(&row) && (left..left + cols).contains(&col)
            }
            Region::RectComplement { top, rows, left, cols } => {
                !((top..top + rows).contains(&row) && (left..left + cols).contains(&col))
            }
            Region::Sweep { top, rows, cols, inside } => {
                let left = sweep_offset(frame, dims.frames, cols, dims.width);
                let hit = (top..top + rows).contains(&row) && (left..left + cols).contains(&col);
                hit == inside
            }
            Region::Nothing => false,
        }
    }
}

/// Validity mask of `task` for a video of shape `dims`.
pub fn condition_mask(task: TaskId, dims: &Dims3, params: &TaskParams) -> Result<PixelMask> {
    let region = resolve(task, dims, params)?;
    Ok(PixelMask::from_fn(*dims, |f, r, c| region.is_valid(dims, f, r, c)))
}

/// Fraction of pixels that are valid condition pixels for `task`.
pub fn condition_fraction(task: TaskId, dims: &Dims3, params: &TaskParams) -> Result<f64> {
    Ok(condition_mask(task, dims, params)?.valid_fraction())
}

/// Padded condition video plus its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVideo {
    pub video: VideoTensor,
    pub valid: PixelMask,
}

fn check_label(task: TaskId, label: Option<u32>) -> Result<()> {
    match (task.needs_label(), label) {
        (true, None) => Err(Error::usage(format!("task {task} requires a class label"))),
        (false, Some(_)) => Err(Error::usage(format!(
            "task {task} does not take a class label"
        ))),
        _ => Ok(()),
    }
}

/// Crops the task's interior condition out of `video` and pads it back to full shape.
///
/// `label` must be present exactly for the class-conditional tasks (CG, CFP).
pub fn build_condition(
    task: TaskId,
    video: &VideoTensor,
    params: &TaskParams,
    label: Option<u32>,
) -> Result<ConditionVideo> {
    check_label(task, label)?;
    let dims = video.dims();
    let region = resolve(task, &dims, params)?;
    let valid = PixelMask::from_fn(dims, |f, r, c| region.is_valid(&dims, f, r, c));

    let out = match region {
        Region::LeadingFrames(n) => {
            VideoTensor::from_fn(dims, |f, r, c, ch| video.get(f.min(n - 1), r, c, ch))
        }
        Region::HeadTail { head, tail } => {
            let first_tail = dims.frames - tail;
            let last_head = head - 1;
            let gap = (first_tail - last_head) as f64;
            VideoTensor::from_fn(dims, |f, r, c, ch| {
                if f < head || f >= first_tail {
                    video.get(f, r, c, ch)
                } else {
                    let w_head = (first_tail - f) as f64;
                    let w_tail = (f - last_head) as f64;
                    (w_head * video.get(last_head, r, c, ch) + w_tail * video.get(first_tail, r, c, ch))
                        / gap
                }
            })
        }
        Region::Rect { top, rows, left, cols } => VideoTensor::from_fn(dims, |f, r, c, ch| {
            let rr = r.clamp(top, top + rows - 1);
            let cc = c.clamp(left, left + cols - 1);
            video.get(f, rr, cc, ch)
        }),
        Region::RectComplement { .. } | Region::Sweep { .. } | Region::Nothing => {
            VideoTensor::from_fn(dims, |f, r, c, ch| {
                if valid.get(f, r, c) {
                    video.get(f, r, c, ch)
                } else {
                    0.0
                }
            })
        }
    };
    Ok(ConditionVideo { video: out, valid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(t: usize, h: usize, w: usize) -> Dims3 {
        Dims3::new(t, h, w, 1).unwrap()
    }

    fn ramp(d: Dims3) -> VideoTensor {
        VideoTensor::from_fn(d, |f, r, c, ch| {
            ((f * 31 + r * 7 + c * 3 + ch) % 97) as f64 / 97.0
        })
    }

    fn brute_count(mask: &PixelMask) -> usize {
        let d = mask.dims();
        let mut n = 0;
        for f in 0..d.frames {
            for r in 0..d.height {
                for c in 0..d.width {
                    if mask.get(f, r, c) {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    #[test]
    fn task_names_round_trip() {
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
        }
        assert!("fp".parse::<TaskId>().is_err());
    }

    #[test]
    fn fp_on_zero_video() {
        let d = dims(16, 8, 8);
        let cond = build_condition(TaskId::FP, &VideoTensor::zeros(d), &TaskParams::default(), None)
            .unwrap();
        assert_eq!(cond.valid.valid_fraction(), 0.0625);
        assert!(cond.video.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fp_replicates_last_given_frame() {
        let d = dims(8, 4, 4);
        let v = ramp(d);
        let params = TaskParams {
            fp_frames: 3,
            ..Default::default()
        };
        let cond = build_condition(TaskId::FP, &v, &params, None).unwrap();
        for f in 0..8 {
            for r in 0..4 {
                for c in 0..4 {
                    assert_eq!(cond.video.get(f, r, c, 0), v.get(f.min(2), r, c, 0));
                }
            }
        }
    }

    #[test]
    fn fi_interpolates_between_endpoints() {
        let d = dims(16, 4, 4);
        let v = VideoTensor::from_fn(d, |f, _, _, _| if f == 15 { 1.0 } else if f == 0 { 0.0 } else { 0.37 });
        let cond = build_condition(TaskId::FI, &v, &TaskParams::default(), None).unwrap();
        for f in 0..16 {
            let expect = f as f64 / 15.0;
            for r in 0..4 {
                for c in 0..4 {
                    assert!((cond.video.get(f, r, c, 0) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn opc_edge_padding_corner() {
        let d = dims(16, 8, 8);
        let v = ramp(d);
        let cond = build_condition(TaskId::OPC, &v, &TaskParams::default(), None).unwrap();
        assert_eq!(cond.valid.valid_fraction(), 0.25);
        assert_eq!(cond.video.get(0, 0, 0, 0), v.get(0, 2, 2, 0));
        assert_eq!(cond.video.get(5, 7, 0, 0), v.get(5, 5, 2, 0));
        assert_eq!(cond.video.get(5, 3, 7, 0), v.get(5, 3, 5, 0));
    }

    #[test]
    fn fractions_at_defaults() {
        let d = dims(16, 16, 16);
        let p = TaskParams::default();
        let expect = [
            (TaskId::FP, 1.0 / 16.0),
            (TaskId::CFP, 1.0 / 16.0),
            (TaskId::FI, 2.0 / 16.0),
            (TaskId::OPC, 0.25),
            (TaskId::OPV, 0.5),
            (TaskId::OPH, 0.5),
            (TaskId::OPD, 0.5),
            (TaskId::IPC, 0.75),
            (TaskId::IPD, 0.75),
            (TaskId::CG, 0.0),
        ];
        for (task, frac) in expect {
            let mask = condition_mask(task, &d, &p).unwrap();
            assert_eq!(brute_count(&mask) as f64 / d.pixels() as f64, frac, "{task}");
            assert_eq!(condition_fraction(task, &d, &p).unwrap(), frac, "{task}");
        }
    }

    #[test]
    fn dynamic_window_sweeps_left_to_right() {
        let d = dims(16, 8, 8);
        let mask = condition_mask(TaskId::OPD, &d, &TaskParams::default()).unwrap();
        let left_edge = |f: usize| (0..8).find(|&c| mask.get(f, 0, c)).unwrap();
        assert_eq!(left_edge(0), 0);
        assert_eq!(left_edge(15), 4);
        for f in 1..16 {
            assert!(left_edge(f) >= left_edge(f - 1));
        }
        // round(4 * 8 / 15) = round(2.133) = 2
        assert_eq!(left_edge(8), 2);
    }

    #[test]
    fn ipd_rectangle_is_vertically_centered() {
        let d = dims(4, 8, 8);
        let mask = condition_mask(TaskId::IPD, &d, &TaskParams::default()).unwrap();
        for r in 0..8 {
            let hole = (0..8).any(|c| !mask.get(0, r, c));
            assert_eq!(hole, (2..6).contains(&r));
        }
    }

    #[test]
    fn odd_leftover_goes_to_leading_margin() {
        assert_eq!(centered_start(4, 9), 3);
        assert_eq!(centered_start(4, 8), 2);
    }

    #[test]
    fn label_rules() {
        let d = dims(4, 4, 4);
        let v = VideoTensor::zeros(d);
        let p = TaskParams::default();
        assert!(matches!(build_condition(TaskId::CG, &v, &p, None), Err(Error::Usage(_))));
        assert!(matches!(build_condition(TaskId::FP, &v, &p, Some(0)), Err(Error::Usage(_))));
        assert!(build_condition(TaskId::CFP, &v, &p, Some(1)).is_ok());
    }

    #[test]
    fn invalid_params_rejected() {
        let d = dims(4, 6, 6);
        let bad = TaskParams {
            frac_h: 0.25,
            ..Default::default()
        };
        assert!(condition_fraction(TaskId::OPC, &d, &bad).is_err());
        let bad_fp = TaskParams {
            fp_frames: 4,
            ..Default::default()
        };
        assert!(condition_fraction(TaskId::FP, &d, &bad_fp).is_err());
        let bad_fi = TaskParams {
            fi_head: 2,
            fi_tail: 2,
            ..Default::default()
        };
        assert!(condition_fraction(TaskId::FI, &d, &bad_fi).is_err());
    }
}
