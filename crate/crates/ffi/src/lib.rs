//! C ABI over the videominer core.
//!
//! Every function returns a [`VmStatus`]; on failure the message is
//! available from [`vm_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! through `char**` out-parameters are owned by the caller and released with
//! [`vm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use videominer::clients::{parse_node_output, Action, FormatClass};
use videominer::clustering::{dbscan_points, ClusterConfig, NoisePolicy};
use videominer::frames::{Frame, FrameSequence};
use videominer::segmentation::{segment_histograms, histograms, SegmentationConfig};
use videominer::tgrpo::reward::{node_reward, RewardConfig};
use videominer::tgrpo::surrogate::{NUM_ACTIONS, NUM_FEATURES};
use videominer::tgrpo::{group_advantages, growth_rate, objective_with_grad, PolicySample, SurrogatePolicy, TrainerConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    BufferTooSmall = 4,
    Domain = 5,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmFormat {
    Max = 0,
    Corr = 1,
    None = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmAction {
    Accept = 0,
    Continue = 1,
    Delete = 2,
    Invalid = 3,
}

/// Reward constants; see `vm_reward_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmRewardConfig {
    pub delta_max: f64,
    pub delta_corr: f64,
    pub rho: f64,
    pub sigma: f64,
    pub l_target: f64,
    pub delta_d: f64,
    pub delta_a: f64,
    pub delta_c: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmRewardBreakdown {
    pub r_format: f64,
    pub r_length: f64,
    pub r_action: f64,
    pub r_tree: f64,
    pub r_total: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmParsedOutput {
    pub format: VmFormat,
    pub length: usize,
    pub action: VmAction,
}

/// Closed 1-based frame interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VmInterval {
    pub start: usize,
    pub end: usize,
}

/// One judged node for the objective: features are
/// `[question cosine, depth / max_depth, ln(1 + frames), 1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmSample {
    pub features: [f64; 4],
    pub action: u32,
    pub old_logprob: f64,
    pub advantage: f64,
}

/// Grayscale frames accumulated in temporal order.
pub struct VmFrames {
    frames: Vec<Frame>,
}

/// Linear softmax policy, 4 features by 3 actions.
pub struct VmPolicy {
    inner: SurrogatePolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: VmStatus, msg: impl Into<String>) -> VmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> VmStatus) -> VmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == VmStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(VmStatus::Panic, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(VmStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> &'a [T] {
    if n == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(p, n)
    }
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize) -> &'a mut [T] {
    if n == 0 {
        &mut []
    } else {
        std::slice::from_raw_parts_mut(p, n)
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, VmStatus> {
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(VmStatus::InvalidUtf8, e.to_string()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn vm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn vm_frames_new() -> *mut VmFrames {
    Box::into_raw(Box::new(VmFrames { frames: Vec::new() }))
}

/// # Safety
/// `frames` must come from `vm_frames_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vm_frames_free(frames: *mut VmFrames) {
    if !frames.is_null() {
        drop(Box::from_raw(frames));
    }
}

/// Appends a `width * height` 8-bit grayscale frame with original index
/// `index`. Indices must strictly increase.
///
/// # Safety
/// `pixels` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn vm_frames_push_gray(
    frames: *mut VmFrames,
    index: usize,
    width: u32,
    height: u32,
    pixels: *const u8,
    len: usize,
) -> VmStatus {
    guard(|| {
        non_null!(frames, pixels);
        let frames = &mut *frames;
        if frames.frames.last().is_some_and(|f| f.index() >= index) {
            return fail(VmStatus::InvalidArgument, "frame indices must strictly increase");
        }
        match Frame::new(index, width, height, slice(pixels, len).to_vec()) {
            Ok(f) => {
                frames.frames.push(f);
                VmStatus::Ok
            }
            Err(e) => fail(VmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `frames` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vm_frames_len(frames: *const VmFrames) -> usize {
    frames.as_ref().map_or(0, |f| f.frames.len())
}

/// Splits the frames into `k` scenes at the largest histogram changes.
/// Writes at most `capacity` intervals and the actual count to `out_len`;
/// returns `BufferTooSmall` when `capacity` is insufficient.
///
/// # Safety
/// `out` must have room for `capacity` intervals.
#[no_mangle]
pub unsafe extern "C" fn vm_segment(
    frames: *const VmFrames,
    k: usize,
    min_event_frames: usize,
    out: *mut VmInterval,
    capacity: usize,
    out_len: *mut usize,
) -> VmStatus {
    guard(|| {
        non_null!(frames, out_len);
        let frames = &*frames;
        if frames.frames.is_empty() {
            return fail(VmStatus::InvalidArgument, "no frames");
        }
        let n = frames.frames.len();
        let seq = match FrameSequence::new(frames.frames.clone(), "ffi", n) {
            Ok(s) => s,
            Err(e) => return fail(VmStatus::InvalidArgument, e.to_string()),
        };
        let cfg = SegmentationConfig {
            min_event_frames,
            ..SegmentationConfig::with_k(k)
        };
        let seg = match segment_histograms(&histograms(&seq), &cfg) {
            Ok(s) => s,
            Err(e) => return fail(VmStatus::InvalidArgument, e.to_string()),
        };
        *out_len = seg.events.len();
        if seg.events.len() > capacity {
            return fail(VmStatus::BufferTooSmall, format!("need {} intervals", seg.events.len()));
        }
        if capacity > 0 && out.is_null() {
            return fail(VmStatus::NullPointer, "out is null");
        }
        for (slot, e) in slice_mut(out, capacity).iter_mut().zip(&seg.events) {
            *slot = VmInterval {
                start: e.start,
                end: e.end,
            };
        }
        VmStatus::Ok
    })
}

/// DBSCAN over `n` row-major points of dimension `dim`. Labels are numbered
/// by first appearance; with `drop_noise` set, noise points get -1,
/// otherwise each becomes its own cluster.
///
/// # Safety
/// `points` must hold `n * dim` values and `labels` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn vm_dbscan(
    points: *const f64,
    n: usize,
    dim: usize,
    eps: f64,
    min_pts: usize,
    drop_noise: bool,
    labels: *mut i64,
    cluster_count: *mut usize,
) -> VmStatus {
    guard(|| {
        non_null!(points, labels, cluster_count);
        let cfg = ClusterConfig {
            eps,
            min_pts,
            noise_policy: if drop_noise { NoisePolicy::Drop } else { NoisePolicy::Singleton },
        };
        if let Err(e) = cfg.validate() {
            return fail(VmStatus::InvalidArgument, e.to_string());
        }
        if n == 0 || dim == 0 {
            return fail(VmStatus::InvalidArgument, "need at least one point of dimension >= 1");
        }
        let Some(total) = n.checked_mul(dim) else {
            return fail(VmStatus::InvalidArgument, "n * dim overflows");
        };
        let flat = slice(points, total);
        if flat.iter().any(|v| !v.is_finite()) {
            return fail(VmStatus::InvalidArgument, "non-finite coordinate");
        }
        let rows: Vec<&[f64]> = flat.chunks(dim).collect();
        let result = dbscan_points(&rows, &cfg);
        for (slot, l) in slice_mut(labels, n).iter_mut().zip(&result.labels) {
            *slot = l.map_or(-1, |l| l as i64);
        }
        *cluster_count = result.cluster_count;
        VmStatus::Ok
    })
}

impl From<VmRewardConfig> for RewardConfig {
    fn from(c: VmRewardConfig) -> Self {
        Self {
            delta_max: c.delta_max,
            delta_corr: c.delta_corr,
            rho: c.rho,
            sigma: c.sigma,
            l_target: c.l_target,
            delta_d: c.delta_d,
            delta_a: c.delta_a,
            delta_c: c.delta_c,
        }
    }
}

#[no_mangle]
pub extern "C" fn vm_reward_config_default() -> VmRewardConfig {
    let c = RewardConfig::default();
    VmRewardConfig {
        delta_max: c.delta_max,
        delta_corr: c.delta_corr,
        rho: c.rho,
        sigma: c.sigma,
        l_target: c.l_target,
        delta_d: c.delta_d,
        delta_a: c.delta_a,
        delta_c: c.delta_c,
    }
}

fn format_from(v: u32) -> Option<FormatClass> {
    [FormatClass::Max, FormatClass::Corr, FormatClass::None].get(v as usize).copied()
}

fn action_from(v: u32) -> Option<Action> {
    [Action::Accept, Action::Continue, Action::Delete, Action::Invalid].get(v as usize).copied()
}

fn vm_format(f: FormatClass) -> VmFormat {
    match f {
        FormatClass::Max => VmFormat::Max,
        FormatClass::Corr => VmFormat::Corr,
        FormatClass::None => VmFormat::None,
    }
}

fn vm_action(a: Action) -> VmAction {
    match a {
        Action::Accept => VmAction::Accept,
        Action::Continue => VmAction::Continue,
        Action::Delete => VmAction::Delete,
        Action::Invalid => VmAction::Invalid,
    }
}

/// Node reward. `format` is a `VmFormat` value, `action` a `VmAction`
/// value and `r_tree` is 0 or 1.
///
/// # Safety
/// `cfg` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vm_node_reward(
    cfg: *const VmRewardConfig,
    format: u32,
    length: usize,
    action: u32,
    r_tree: f64,
    out: *mut VmRewardBreakdown,
) -> VmStatus {
    guard(|| {
        non_null!(cfg, out);
        let (Some(f), Some(a)) = (format_from(format), action_from(action)) else {
            return fail(VmStatus::InvalidArgument, "unknown format or action code");
        };
        let cfg: RewardConfig = (*cfg).into();
        if let Err(field) = cfg.validate() {
            return fail(VmStatus::InvalidArgument, format!("rewards.{field}"));
        }
        let b = node_reward(f, length, a, r_tree, &cfg);
        *out = VmRewardBreakdown {
            r_format: b.r_format,
            r_length: b.r_length,
            r_action: b.r_action,
            r_tree: b.r_tree,
            r_total: b.r_total,
        };
        VmStatus::Ok
    })
}

/// `(delta_d + delta_a) / (2 * delta_c)`; `Domain` when `delta_c` is not positive.
///
/// # Safety
/// `cfg` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vm_growth_rate(cfg: *const VmRewardConfig, out: *mut f64) -> VmStatus {
    guard(|| {
        non_null!(cfg, out);
        match growth_rate(&(*cfg).into()) {
            Ok(v) => {
                *out = v;
                VmStatus::Ok
            }
            Err(e) => fail(VmStatus::Domain, e.to_string()),
        }
    })
}

/// Population z-scores of `rewards`; all zeros when their spread is below
/// `std_floor`. `out` may alias `rewards`.
///
/// # Safety
/// `rewards` and `out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn vm_group_advantages(rewards: *const f64, n: usize, std_floor: f64, out: *mut f64) -> VmStatus {
    guard(|| {
        non_null!(rewards, out);
        let values = slice(rewards, n).to_vec();
        let adv = group_advantages(&values, std_floor);
        slice_mut(out, n).copy_from_slice(&adv);
        VmStatus::Ok
    })
}

/// Classifies a raw policy response.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vm_parse_node_output(text_ptr: *const c_char, out: *mut VmParsedOutput) -> VmStatus {
    guard(|| {
        non_null!(text_ptr, out);
        let t = match text(text_ptr) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let p = parse_node_output(t);
        *out = VmParsedOutput {
            format: vm_format(p.format),
            length: p.length,
            action: vm_action(p.action),
        };
        VmStatus::Ok
    })
}

/// Policy with weights uniform in `[-scale, scale]` drawn from `seed`.
#[no_mangle]
pub extern "C" fn vm_policy_new_random(scale: f64, seed: u64) -> *mut VmPolicy {
    let scale = if scale.is_finite() { scale.abs() } else { 0.0 };
    Box::into_raw(Box::new(VmPolicy {
        inner: SurrogatePolicy::random(scale, seed),
    }))
}

/// Policy from 12 row-major weights (feature by action).
///
/// # Safety
/// `weights` must hold 12 values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vm_policy_from_weights(weights: *const f64, out: *mut *mut VmPolicy) -> VmStatus {
    guard(|| {
        non_null!(weights, out);
        match SurrogatePolicy::from_flat(slice(weights, NUM_FEATURES * NUM_ACTIONS)) {
            Some(p) if p.is_finite() => {
                *out = Box::into_raw(Box::new(VmPolicy { inner: p }));
                VmStatus::Ok
            }
            _ => fail(VmStatus::InvalidArgument, "weights must be 12 finite values"),
        }
    })
}

/// Parses the JSON weight file format written by the command line tool.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vm_policy_from_json(json: *const c_char, out: *mut *mut VmPolicy) -> VmStatus {
    guard(|| {
        non_null!(json, out);
        let t = match text(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match serde_json::from_str::<SurrogatePolicy>(t) {
            Ok(p) if p.is_finite() => {
                *out = Box::into_raw(Box::new(VmPolicy { inner: p }));
                VmStatus::Ok
            }
            Ok(_) => fail(VmStatus::InvalidArgument, "non-finite weights"),
            Err(e) => fail(VmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Serializes the policy; free the result with `vm_string_free`.
///
/// # Safety
/// `policy` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vm_policy_to_json(policy: *const VmPolicy, out: *mut *mut c_char) -> VmStatus {
    guard(|| {
        non_null!(policy, out);
        match serde_json::to_string(&(*policy).inner) {
            Ok(s) => {
                *out = CString::new(s).map_or(ptr::null_mut(), CString::into_raw);
                VmStatus::Ok
            }
            Err(e) => fail(VmStatus::Domain, e.to_string()),
        }
    })
}

/// Copies the 12 row-major weights into `out`.
///
/// # Safety
/// `out` must have room for 12 values.
#[no_mangle]
pub unsafe extern "C" fn vm_policy_weights(policy: *const VmPolicy, out: *mut f64) -> VmStatus {
    guard(|| {
        non_null!(policy, out);
        slice_mut(out, NUM_FEATURES * NUM_ACTIONS).copy_from_slice(&(*policy).inner.flat());
        VmStatus::Ok
    })
}

/// Action probabilities (accept, continue, delete) for one feature vector.
///
/// # Safety
/// `features` must hold 4 values and `out` room for 3.
#[no_mangle]
pub unsafe extern "C" fn vm_policy_probs(policy: *const VmPolicy, features: *const f64, out: *mut f64) -> VmStatus {
    guard(|| {
        non_null!(policy, features, out);
        let mut x = [0.0; NUM_FEATURES];
        x.copy_from_slice(slice(features, NUM_FEATURES));
        slice_mut(out, NUM_ACTIONS).copy_from_slice(&(*policy).inner.probs(&x));
        VmStatus::Ok
    })
}

/// # Safety
/// `policy` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vm_policy_free(policy: *mut VmPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Group objective `J` and the gradient of `-J` (12 row-major values).
///
/// # Safety
/// `samples` must hold `n` entries, `grad` room for 12 values.
#[no_mangle]
pub unsafe extern "C" fn vm_objective(
    samples: *const VmSample,
    n: usize,
    policy: *const VmPolicy,
    reference: *const VmPolicy,
    clip_eps: f64,
    kl_beta: f64,
    objective: *mut f64,
    grad: *mut f64,
) -> VmStatus {
    guard(|| {
        non_null!(samples, policy, reference, objective, grad);
        let cfg = TrainerConfig {
            clip_eps,
            kl_beta,
            ..TrainerConfig::default()
        };
        if let Err(field) = cfg.validate() {
            return fail(VmStatus::InvalidArgument, format!("trainer.{field}"));
        }
        let mut converted = Vec::with_capacity(n);
        for s in slice(samples, n) {
            if s.action as usize >= NUM_ACTIONS {
                return fail(VmStatus::InvalidArgument, "sample action must be 0, 1 or 2");
            }
            converted.push(PolicySample {
                features: s.features,
                action: s.action as usize,
                old_logprob: s.old_logprob,
                advantage: s.advantage,
            });
        }
        match objective_with_grad(&converted, &(*policy).inner, &(*reference).inner, &cfg) {
            Ok((j, g)) => {
                *objective = j;
                slice_mut(grad, NUM_FEATURES * NUM_ACTIONS).copy_from_slice(&g.concat());
                VmStatus::Ok
            }
            Err(e) => fail(VmStatus::Domain, e.to_string()),
        }
    })
}
