//! C ABI over `cpa-core`.
//!
//! Every entry point returns a [`CpaStatus`]; outputs go through caller-owned
//! pointers and are written only on success. The message of the most recent
//! failure on the calling thread is available from [`cpa_last_error`].
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use num_complex::Complex64;

use cpa_core::assessment::{assess, threat_scale, BerThresholds, ThreatAssessment};
use cpa_core::channel::{channel_gain, LinkBudget};
use cpa_core::experiments::{assess_inputs, assess_series};
use cpa_core::features::{feature_tensor, FeatureConfig, CHANNELS};
use cpa_core::nn::checkpoint::{self, Checkpoint};
use cpa_core::signal::{ComplexSeries, FrameConfig};
use cpa_core::CpaError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Size = 5,
    Empty = 6,
    Sample = 7,
    Model = 8,
    Panic = 9,
}

impl From<&CpaError> for CpaStatus {
    fn from(e: &CpaError) -> Self {
        match e.exit_code() {
            2 => CpaStatus::InvalidArgument,
            3 => CpaStatus::Io,
            4 => CpaStatus::Format,
            5 => CpaStatus::Size,
            6 => CpaStatus::Empty,
            7 => CpaStatus::Sample,
            _ => CpaStatus::Model,
        }
    }
}

/// A loaded checkpoint. Create with [`cpa_model_load`], release with
/// [`cpa_model_free`].
pub struct CpaModel {
    ck: Checkpoint,
}

/// Free-space optical link parameters; see `cpa_channel_gain`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpaLinkBudget {
    pub tx_power_watts: f64,
    pub distance_m: f64,
    pub drift_m_per_sample: f64,
    pub wavelength_m: f64,
    pub tx_aperture_m: f64,
    pub rx_aperture_m: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    pub jitter_rad: f64,
    pub divergence_rad: f64,
}

impl From<CpaLinkBudget> for LinkBudget {
    fn from(l: CpaLinkBudget) -> Self {
        LinkBudget {
            tx_power_watts: l.tx_power_watts,
            distance_m: l.distance_m,
            drift_m_per_sample: l.drift_m_per_sample,
            wavelength_m: l.wavelength_m,
            tx_aperture_m: l.tx_aperture_m,
            rx_aperture_m: l.rx_aperture_m,
            tx_efficiency: l.tx_efficiency,
            rx_efficiency: l.rx_efficiency,
            jitter_rad: l.jitter_rad,
            divergence_rad: l.divergence_rad,
        }
    }
}

/// OFDM frame layout; `qam_order` is 4, 16 or 64.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpaFrame {
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub n_symbols: usize,
    pub qam_order: usize,
}

/// Intent and capability use index order: intent 0 deceptive, 1 disruptive,
/// 2 non-adversarial; capability 0 high, 1 moderate, 2 low.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CpaAssessment {
    pub intent: u8,
    pub capability: u8,
    pub scale: u8,
    pub rho_hat: f64,
    pub ber_hat: f64,
}

impl From<&ThreatAssessment> for CpaAssessment {
    fn from(a: &ThreatAssessment) -> Self {
        CpaAssessment {
            intent: a.intent.index() as u8,
            capability: a.capability as u8,
            scale: a.scale,
            rho_hat: a.rho_hat,
            ber_hat: a.ber_estimate(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(CpaError),
}

impl From<CpaError> for Failure {
    fn from(e: CpaError) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CpaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CpaStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CpaStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            CpaStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            CpaStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CpaStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

unsafe fn input_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

fn thresholds(high_ber: f64, low_ber: f64) -> Result<BerThresholds, Failure> {
    let t = BerThresholds { high: high_ber, low: low_ber };
    t.validate()?;
    Ok(t)
}

unsafe fn series(re: *const f64, im: *const f64, len: usize) -> Result<ComplexSeries, Failure> {
    let re = unsafe { input_slice(re, len, "re") }?;
    let im = unsafe { input_slice(im, len, "im") }?;
    Ok(ComplexSeries(re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn cpa_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// NUL-terminated crate version; static storage.
#[no_mangle]
pub extern "C" fn cpa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpa_model_load(path: *const c_char, out: *mut *mut CpaModel) -> CpaStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))?;
        let ck = checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(CpaModel { ck }));
        Ok(())
    })
}

/// Releases a handle from [`cpa_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cpa_model_free(model: *mut CpaModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Network input shape `channels x height x width`; inputs are channel-first.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cpa_model_input_shape(
    model: *const CpaModel,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> CpaStatus {
    guard(|| {
        let m = unsafe { non_null(model, "model") }?;
        let (c, h, w) = (unsafe { out_ref(channels, "channels") }?, unsafe { out_ref(height, "height") }?, unsafe {
            out_ref(width, "width")
        }?);
        let cfg = &m.ck.model.config;
        (*c, *h, *w) = (cfg.input_channels, cfg.input_height, cfg.input_width);
        Ok(())
    })
}

/// Number of complex samples (CP included) expected by [`cpa_assess_series`].
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cpa_model_series_len(model: *const CpaModel, out: *mut usize) -> CpaStatus {
    guard(|| {
        let m = unsafe { non_null(model, "model") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let frame = m.ck.header.frame.ok_or_else(|| Failure::Invalid("checkpoint has no frame config".into()))?;
        *out = frame.series_len();
        Ok(())
    })
}

/// Full pipeline on one received series of `len` samples.
///
/// # Safety
/// `re` and `im` must be valid for `len` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpa_assess_series(
    model: *const CpaModel,
    re: *const f64,
    im: *const f64,
    len: usize,
    high_ber: f64,
    low_ber: f64,
    out: *mut CpaAssessment,
) -> CpaStatus {
    guard(|| {
        let m = unsafe { non_null(model, "model") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let t = thresholds(high_ber, low_ber)?;
        let y = unsafe { series(re, im, len) }?;
        *out = (&assess_series(&m.ck, &y, &t)?).into();
        Ok(())
    })
}

/// Assesses `n` prepared channel-first inputs, `n * c * h * w` values.
///
/// # Safety
/// `inputs` must be valid for `len` reads; `out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn cpa_assess_inputs(
    model: *const CpaModel,
    inputs: *const f64,
    len: usize,
    n: usize,
    high_ber: f64,
    low_ber: f64,
    out: *mut CpaAssessment,
) -> CpaStatus {
    guard(|| {
        let m = unsafe { non_null(model, "model") }?;
        let t = thresholds(high_ber, low_ber)?;
        let x = unsafe { input_slice(inputs, len, "inputs") }?;
        if n == 0 {
            return Err(CpaError::EmptyDataset.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let results = assess_inputs(&m.ck.model, x, n, &t)?;
        let out = unsafe { slice::from_raw_parts_mut(out, n) };
        for (o, a) in out.iter_mut().zip(&results) {
            *o = a.into();
        }
        Ok(())
    })
}

/// Decision logic on raw network outputs: 3 class probabilities and the
/// predicted `log10` BER.
///
/// # Safety
/// `probs` must be valid for 3 reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpa_assess_outputs(
    probs: *const f64,
    rho_hat: f64,
    high_ber: f64,
    low_ber: f64,
    out: *mut CpaAssessment,
) -> CpaStatus {
    guard(|| {
        let p = unsafe { input_slice(probs, 3, "probs") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let t = thresholds(high_ber, low_ber)?;
        *out = (&assess(p, rho_hat, &t)?).into();
        Ok(())
    })
}

/// Threat scale 0..=7 from one-hot intent and capability vectors of length 3.
///
/// # Safety
/// `intent` and `capability` must be valid for 3 reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cpa_threat_scale(intent: *const u8, capability: *const u8, out: *mut u8) -> CpaStatus {
    guard(|| {
        let i = unsafe { input_slice(intent, 3, "intent") }?;
        let c = unsafe { input_slice(capability, 3, "capability") }?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = threat_scale(i, c)?;
        Ok(())
    })
}

/// Amplitude gain of `link` at sample index `n`.
///
/// # Safety
/// `link` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cpa_channel_gain(link: *const CpaLinkBudget, n: usize, out: *mut f64) -> CpaStatus {
    guard(|| {
        let link: LinkBudget = (*unsafe { non_null(link, "link") }?).into();
        let out = unsafe { out_ref(out, "out") }?;
        link.validate()?;
        *out = channel_gain(&link, n);
        Ok(())
    })
}

/// Normalized `(S, S_sup, S_inf)` tensor of a received series, channel-last,
/// `n_symbols * n_subcarriers * 3` values. `ranges` receives the 3 channel
/// minima followed by the 3 maxima.
///
/// # Safety
/// `re`/`im` valid for `len` reads, `out` for `out_len` writes, `ranges` for
/// 6 writes (or null).
#[no_mangle]
pub unsafe extern "C" fn cpa_feature_tensor(
    frame: *const CpaFrame,
    disk_radius: usize,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
    ranges: *mut f64,
) -> CpaStatus {
    guard(|| {
        let f = unsafe { non_null(frame, "frame") }?;
        let frame = FrameConfig::new(f.n_subcarriers, f.cp_len, f.n_symbols, f.qam_order)?;
        if len != frame.series_len() {
            return Err(CpaError::InputSize { expected: frame.series_len(), got: len }.into());
        }
        let expected = frame.n_symbols * frame.n_subcarriers * CHANNELS;
        if out_len != expected {
            return Err(CpaError::InputSize { expected, got: out_len }.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let y = unsafe { series(re, im, len) }?;
        let (tensor, r) = feature_tensor(&y, &frame, &FeatureConfig { disk_radius })?;
        unsafe { slice::from_raw_parts_mut(out, out_len) }.copy_from_slice(tensor.data());
        if !ranges.is_null() {
            let dst = unsafe { slice::from_raw_parts_mut(ranges, 2 * CHANNELS) };
            dst[..CHANNELS].copy_from_slice(&r.min);
            dst[CHANNELS..].copy_from_slice(&r.max);
        }
        Ok(())
    })
}
