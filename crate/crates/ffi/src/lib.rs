//! C ABI over `magvit-toy`.
//!
//! Every fallible function returns an [`MgStatus`] and writes results through
//! out-pointers. On failure a description is kept per thread and can be read
//! with [`mg_last_error`]. Codebooks and predictors are opaque handles that
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use magvit_toy::decode::{commit_decode, cost_report, DecodeConfig};
use magvit_toy::formats;
use magvit_toy::lattice::{compression_rate, Dims3, LatentDims, VideoTensor};
use magvit_toy::masking::Schedule;
use magvit_toy::model::{NeighborhoodPredictor, Predictor};
use magvit_toy::tasks::{condition_fraction, TaskId, TaskParams};
use magvit_toy::tokenizer::{decode, encode, Codebook, ConditionTokens, TokenLattice};
use magvit_toy::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Usage = 3,
    Config = 4,
    Data = 5,
    Training = 6,
    Io = 7,
    /// Output buffer length does not match the result.
    BufferSize = 8,
    /// A Rust panic was caught at the boundary.
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MgDims {
    pub frames: u32,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MgLatent {
    pub t: u32,
    pub h: u32,
    pub w: u32,
}

pub const MG_SCHEDULE_COSINE: u32 = 0;
pub const MG_SCHEDULE_UNIFORM: u32 = 1;
pub const MG_SCHEDULE_EXPONENTIAL: u32 = 2;

/// Pass as `label` when the task takes no class.
pub const MG_NO_LABEL: i64 = -1;

/// Opaque VQ codebook.
pub struct MgCodebook {
    inner: Codebook,
}

/// Opaque trained predictor.
pub struct MgPredictor {
    inner: NeighborhoodPredictor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Buffer { need: usize, got: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> MgStatus {
    match e {
        Error::Domain(_) => MgStatus::Domain,
        Error::Usage(_) => MgStatus::Usage,
        Error::Config(_) => MgStatus::Config,
        Error::Data(_) => MgStatus::Data,
        Error::Training { .. } => MgStatus::Training,
        Error::Io { .. } => MgStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MgStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            MgStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { need, got })) => {
            set_error(format!("output buffer holds {got} elements, {need} required"));
            MgStatus::BufferSize
        }
        Err(_) => {
            set_error("internal panic".to_string());
            MgStatus::Internal
        }
    }
}

fn nonnull<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

fn dims(d: MgDims) -> Result<Dims3, Failure> {
    Ok(Dims3::new(
        d.frames as usize,
        d.height as usize,
        d.width as usize,
        d.channels as usize,
    )?)
}

fn latent(l: MgLatent) -> Result<LatentDims, Failure> {
    Ok(LatentDims::new(l.t as usize, l.h as usize, l.w as usize)?)
}

fn schedule(kind: u32, lambda: f64) -> Result<Schedule, Failure> {
    match kind {
        MG_SCHEDULE_COSINE => Ok(Schedule::Cosine),
        MG_SCHEDULE_UNIFORM => Ok(Schedule::Uniform),
        MG_SCHEDULE_EXPONENTIAL => Ok(Schedule::exponential(lambda)?),
        _ => Err(Error::Usage(format!("unknown schedule kind {kind}")).into()),
    }
}

fn task(index: u32) -> Result<TaskId, Failure> {
    TaskId::ALL
        .get(index as usize)
        .copied()
        .ok_or_else(|| Error::Usage(format!("task index {index} outside 0..10")).into())
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    nonnull(p, "path")?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Usage("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn write_out<T: Copy>(src: &[T], out: *mut T, len: usize) -> Result<(), Failure> {
    nonnull(out, "output buffer")?;
    if len != src.len() {
        return Err(Failure::Buffer {
            need: src.len(),
            got: len,
        });
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Pixel bits over token bits for a video and its latent lattice.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn mg_compression_rate(
    video: MgDims,
    lattice: MgLatent,
    bits_per_pixel: u32,
    bits_per_token: u32,
    out: *mut f64,
) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        *out = compression_rate(&dims(video)?, &latent(lattice)?, bits_per_pixel, bits_per_token)?;
        Ok(())
    })
}

/// Mask ratio at progress `r` in [0, 1]. `lambda` is read only by the exponential schedule.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn mg_gamma(kind: u32, lambda: f64, r: f64, out: *mut f64) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        *out = schedule(kind, lambda)?.gamma(r)?;
        Ok(())
    })
}

/// Fraction of valid condition pixels for task `task_index` (0 = FP ... 9 = CFP)
/// at default task parameters.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn mg_condition_fraction(task_index: u32, video: MgDims, out: *mut f64) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        *out = condition_fraction(task(task_index)?, &dims(video)?, &TaskParams::default())?;
        Ok(())
    })
}

/// Autoregressive over non-autoregressive decoding step ratio.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn mg_cost_step_ratio(
    seq_len: u32,
    nar_steps: u32,
    ar_steps: u32,
    out: *mut f64,
) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        let report = cost_report(seq_len as usize, nar_steps as usize, ar_steps as usize)?;
        let ar = report.row("AR").expect("cost report always has an AR row");
        *out = report.step_ratio(ar);
        Ok(())
    })
}

/// Builds a codebook from `size * dim` row-major centroids.
///
/// # Safety
/// `centroids` must point to `size * dim` doubles; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mg_codebook_new(
    size: u32,
    dim: u32,
    centroids: *const f64,
    out: *mut *mut MgCodebook,
) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        nonnull(centroids, "centroids")?;
        let n = size as usize * dim as usize;
        let data = std::slice::from_raw_parts(centroids, n).to_vec();
        let cb = Codebook::new(size as usize, dim as usize, data)?;
        *out = Box::into_raw(Box::new(MgCodebook { inner: cb }));
        Ok(())
    })
}

/// Reads an `MGCB` codebook file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn mg_codebook_load(path_: *const c_char, out: *mut *mut MgCodebook) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        let cb = formats::load(path(path_)?, formats::codebook_from_bytes)?;
        *out = Box::into_raw(Box::new(MgCodebook { inner: cb }));
        Ok(())
    })
}

/// # Safety
/// `cb` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_codebook_free(cb: *mut MgCodebook) {
    if !cb.is_null() {
        drop(Box::from_raw(cb));
    }
}

/// Number of codes, or 0 for a null handle.
///
/// # Safety
/// `cb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_codebook_size(cb: *const MgCodebook) -> u32 {
    cb.as_ref().map_or(0, |c| c.inner.size() as u32)
}

/// Quantizes a video (row-major frames, rows, cols, channels) to token ids.
///
/// # Safety
/// `pixels` must hold the video's element count; `tokens` must hold `tokens_len` ids.
#[no_mangle]
pub unsafe extern "C" fn mg_encode(
    cb: *const MgCodebook,
    video: MgDims,
    pixels: *const f64,
    lattice: MgLatent,
    tokens: *mut u32,
    tokens_len: usize,
) -> MgStatus {
    guard(|| {
        nonnull(cb, "codebook")?;
        nonnull(pixels, "pixels")?;
        let d = dims(video)?;
        let data = std::slice::from_raw_parts(pixels, d.len()).to_vec();
        let v = VideoTensor::new(d, data)?;
        let lat = encode(&v, &(*cb).inner, &latent(lattice)?)?;
        write_out(&lat.tokens, tokens, tokens_len)
    })
}

/// Maps token ids back to a piecewise-constant video.
///
/// # Safety
/// `tokens` must hold the lattice's element count; `pixels` must hold `pixels_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_decode(
    cb: *const MgCodebook,
    lattice: MgLatent,
    tokens: *const u32,
    video: MgDims,
    pixels: *mut f64,
    pixels_len: usize,
) -> MgStatus {
    guard(|| {
        nonnull(cb, "codebook")?;
        nonnull(tokens, "tokens")?;
        let l = latent(lattice)?;
        let ids = std::slice::from_raw_parts(tokens, l.n()).to_vec();
        let v = decode(&TokenLattice::new(l, ids)?, &(*cb).inner, &dims(video)?)?;
        write_out(v.data(), pixels, pixels_len)
    })
}

/// Reads an `MGPD` predictor checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn mg_predictor_load(path_: *const c_char, out: *mut *mut MgPredictor) -> MgStatus {
    guard(|| {
        nonnull(out, "out")?;
        let p = formats::load(path(path_)?, formats::predictor_from_bytes)?;
        *out = Box::into_raw(Box::new(MgPredictor { inner: p }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_predictor_free(p: *mut MgPredictor) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Codebook size the predictor was trained for, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_predictor_codebook_size(p: *const MgPredictor) -> u32 {
    p.as_ref().map_or(0, |p| p.inner.vocab().codebook_size() as u32)
}

/// Iterative non-autoregressive decoding from quantized condition tokens.
///
/// `allpadded[i]` is nonzero where position `i` has no condition pixels.
/// `label` is the class for CG/CFP and [`MG_NO_LABEL`] otherwise.
///
/// # Safety
/// `cond_tokens` and `allpadded` must hold the lattice's element count;
/// `out` must hold `out_len` ids.
#[no_mangle]
pub unsafe extern "C" fn mg_commit_decode(
    p: *const MgPredictor,
    task_index: u32,
    label: i64,
    lattice: MgLatent,
    cond_tokens: *const u32,
    allpadded: *const u8,
    steps: u32,
    temperature: f64,
    schedule_kind: u32,
    lambda: f64,
    seed: u64,
    out: *mut u32,
    out_len: usize,
) -> MgStatus {
    guard(|| {
        nonnull(p, "predictor")?;
        nonnull(cond_tokens, "cond_tokens")?;
        nonnull(allpadded, "allpadded")?;
        let l = latent(lattice)?;
        let n = l.n();
        let cond = ConditionTokens::new(
            l,
            std::slice::from_raw_parts(cond_tokens, n).to_vec(),
            std::slice::from_raw_parts(allpadded, n).iter().map(|&b| b != 0).collect(),
        )?;
        let label = match label {
            MG_NO_LABEL => None,
            x if (0..=u32::MAX as i64).contains(&x) => Some(x as u32),
            x => return Err(Error::Usage(format!("label {x} is out of range")).into()),
        };
        let cfg = DecodeConfig {
            steps: steps as usize,
            temperature,
            schedule: schedule(schedule_kind, lambda)?,
            seed,
        };
        let (tokens, _) = commit_decode(&(*p).inner, task(task_index)?, label, &cond, &cfg)?;
        write_out(&tokens.tokens, out, out_len)
    })
}
