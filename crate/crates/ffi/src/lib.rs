//! C ABI over the kspace-rl library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free`. Every fallible call returns a [`KsrlStatus`]; on
//! failure [`ksrl_last_error`] describes it. Panics are caught and reported
//! as `KSRL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kspace_rl::envs::{EnvConfig, HorizonPreset, RewardMode};
use kspace_rl::harness::{generate_phantoms, load_dataset, save_dataset, Dataset, PhantomConfig};
use kspace_rl::models::{load_checkpoint, PolicyParams, ReconParams};
use kspace_rl::numerics::{dft2, idft2, similarity, ComplexKSpace, MetricConfig, RealImage};
use kspace_rl::training::{evaluate, EvalPolicy, TrainConfig};
use kspace_rl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    TrainingDiverged = 4,
    AssumptionViolated = 5,
    Load = 6,
    Io = 7,
    Other = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsrlMetric {
    Ssim = 0,
    NegMse = 1,
}

/// Headline numbers of an evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KsrlEvalSummary {
    pub n_images: usize,
    pub mean_ssim: f64,
    pub std_ssim: f64,
    pub mean_psnr: f64,
    pub std_psnr: f64,
    pub policy_calls: u64,
    pub recon_calls: u64,
}

/// Opaque dataset handle.
pub struct KsrlDataset(Dataset);
/// Opaque reconstructor handle.
pub struct KsrlRecon(ReconParams);
/// Opaque sampler policy handle.
pub struct KsrlPolicy(PolicyParams);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> KsrlStatus {
    match e {
        Error::InvalidInput(_) | Error::EpisodeFinished(_) | Error::NoAction => KsrlStatus::InvalidInput,
        Error::InvalidConfig(_) | Error::UnsupportedMetric(_) => KsrlStatus::InvalidConfig,
        Error::TrainingDiverged(_) => KsrlStatus::TrainingDiverged,
        Error::AssumptionViolated(_) => KsrlStatus::AssumptionViolated,
        Error::Load(_) => KsrlStatus::Load,
        Error::Io(_) => KsrlStatus::Io,
        _ => KsrlStatus::Other,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KsrlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KsrlStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            KsrlStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            KsrlStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidInput(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut_arg<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_arg<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

fn image_of(pixels: &[f64], n: usize) -> Result<RealImage, Fail> {
    Ok(RealImage::new(n, pixels.to_vec())?)
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ksrl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ksrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates `count` phantoms of width `n` with the default shape settings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_generate(
    n: usize,
    count: usize,
    seed: u64,
    out: *mut *mut KsrlDataset,
) -> KsrlStatus {
    guard(|| {
        let d = generate_phantoms(&PhantomConfig {
            n,
            count,
            seed,
            ..PhantomConfig::default()
        })?;
        out_arg(out, KsrlDataset(d))
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_load(path: *const c_char, out: *mut *mut KsrlDataset) -> KsrlStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        out_arg(out, KsrlDataset(load_dataset(&p)?))
    })
}

/// # Safety
/// `ds` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_save(ds: *const KsrlDataset, path: *const c_char) -> KsrlStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        save_dataset(&d.0, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of images, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_len(ds: *const KsrlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Image width, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_width(ds: *const KsrlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n)
}

/// Copies image `index` row-major into `buf`, which holds `len = n*n` values.
///
/// # Safety
/// `ds` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_image(
    ds: *const KsrlDataset,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> KsrlStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        let img =
            d.0.images
                .get(index)
                .ok_or_else(|| Error::InvalidInput(format!("image {index} out of range")))?;
        if len != img.as_slice().len() {
            return Err(
                Error::InvalidInput(format!("buffer holds {len} values, image has {}", img.as_slice().len())).into(),
            );
        }
        slice_mut_arg(buf, len, "buf")?.copy_from_slice(img.as_slice());
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dataset_free(ds: *mut KsrlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ksrl_recon_load(path: *const c_char, out: *mut *mut KsrlRecon) -> KsrlStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        out_arg(out, KsrlRecon(load_checkpoint(&p)?.into_recon()?))
    })
}

/// Reconstructor with the default architecture and zero residual, so it
/// returns the zero-filled image.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ksrl_recon_zero(n: usize, out: *mut *mut KsrlRecon) -> KsrlStatus {
    guard(|| {
        let arch = TrainConfig::default().recon_arch(n);
        arch.validate()?;
        out_arg(out, KsrlRecon(ReconParams::zeros(arch)))
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ksrl_recon_free(r: *mut KsrlRecon) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ksrl_policy_load(path: *const c_char, out: *mut *mut KsrlPolicy) -> KsrlStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        out_arg(out, KsrlPolicy(load_checkpoint(&p)?.into_policy()?))
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ksrl_policy_free(p: *mut KsrlPolicy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Evaluates on the dataset's held-out split (test, else val, else train)
/// in the sparse environment with acceleration `accel` and the base initial
/// block. A null `policy` samples uniformly at random.
///
/// # Safety
/// `ds` and `recon` must be live handles, `policy` null or live, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ksrl_evaluate(
    ds: *const KsrlDataset,
    policy: *const KsrlPolicy,
    recon: *const KsrlRecon,
    accel: f64,
    seed: u64,
    out: *mut KsrlEvalSummary,
) -> KsrlStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        let r = handle(recon, "recon")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let env = EnvConfig::new(d.0.n, accel, HorizonPreset::Base, RewardMode::Sparse);
        let which = match policy.as_ref() {
            Some(p) => EvalPolicy::Learned(&p.0),
            None => EvalPolicy::Random,
        };
        let s = evaluate(which, &r.0, &d.0.eval_split().1, &env, seed)?;
        *out = KsrlEvalSummary {
            n_images: s.n_images,
            mean_ssim: s.mean_ssim,
            std_ssim: s.std_ssim,
            mean_psnr: s.mean_psnr,
            std_psnr: s.std_psnr,
            policy_calls: s.policy_calls,
            recon_calls: s.recon_calls,
        };
        Ok(())
    })
}

/// Similarity of `xhat` to `x` (both `n*n`, row-major) with default settings
/// for `metric`.
///
/// # Safety
/// `xhat` and `x` must be valid for `n*n` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ksrl_similarity(
    xhat: *const f64,
    x: *const f64,
    n: usize,
    metric: KsrlMetric,
    out: *mut f64,
) -> KsrlStatus {
    guard(|| {
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Error::InvalidInput("n too large".into()))?;
        let a = image_of(slice_arg(xhat, len, "xhat")?, n)?;
        let b = image_of(slice_arg(x, len, "x")?, n)?;
        let cfg = match metric {
            KsrlMetric::Ssim => MetricConfig::default(),
            KsrlMetric::NegMse => MetricConfig::neg_mse(),
        };
        let v = similarity(&a, &b, &cfg)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Unitary 2-D DFT (natural frequency order) of a real `n*n` image into real and
/// imaginary buffers.
///
/// # Safety
/// `img` must be valid for `n*n` reads, `re` and `im` for `n*n` writes.
#[no_mangle]
pub unsafe extern "C" fn ksrl_dft2(img: *const f64, n: usize, re: *mut f64, im: *mut f64) -> KsrlStatus {
    guard(|| {
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Error::InvalidInput("n too large".into()))?;
        let k = dft2(&image_of(slice_arg(img, len, "img")?, n)?)?;
        let re = slice_mut_arg(re, len, "re")?;
        let im = slice_mut_arg(im, len, "im")?;
        for (i, z) in k.as_slice().iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}

/// Inverse of [`ksrl_dft2`], complex to complex, in place on `re` and `im`.
///
/// # Safety
/// `re` and `im` must be valid for `n*n` reads and writes.
#[no_mangle]
pub unsafe extern "C" fn ksrl_idft2(re: *mut f64, im: *mut f64, n: usize) -> KsrlStatus {
    guard(|| {
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Error::InvalidInput("n too large".into()))?;
        let re = slice_mut_arg(re, len, "re")?;
        let im = slice_mut_arg(im, len, "im")?;
        let entries = re
            .iter()
            .zip(im.iter())
            .map(|(&a, &b)| kspace_rl::numerics::Complex64::new(a, b))
            .collect();
        let x = idft2(&ComplexKSpace::new(n, entries)?)?;
        for (i, z) in x.as_slice().iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}
