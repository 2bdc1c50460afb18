//! C ABI for apmionet: load a trained operator checkpoint, evaluate it at
//! phase-space points, and call the periodic Poisson solver and the error
//! metric of the reference toolkit.
//!
//! Every fallible function returns an [`ApmStatus`]. On failure the message
//! is kept per thread and read with [`apm_last_error`]. Model handles are
//! opaque and owned by the caller until passed to [`apm_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use apmionet::networks::{read_checkpoint, write_checkpoint, NetworkError, OperatorTriple, TripleConfig};
use apmionet::refsolver::{poisson_periodic, relative_l2, RefError};
use apmionet::training::InputCouple;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    Panic = 6,
}

/// Trained operator triple.
pub struct ApmModel {
    triple: OperatorTriple,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(ApmStatus, String);

impl From<NetworkError> for Failure {
    fn from(e: NetworkError) -> Self {
        let status = match e {
            NetworkError::Io(ref io) if io.kind() == std::io::ErrorKind::UnexpectedEof => ApmStatus::Format,
            NetworkError::Io(_) => ApmStatus::Io,
            NetworkError::Checkpoint(_) => ApmStatus::Format,
            _ => ApmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<RefError> for Failure {
    fn from(e: RefError) -> Self {
        let status = match e {
            RefError::ZeroReference => ApmStatus::Numeric,
            _ => ApmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ApmStatus::InvalidArgument, msg.into())
}

/// Run `f`, turning errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ApmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ApmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside apmionet");
            ApmStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(ApmStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn output<'a>(p: *mut f64, n: usize) -> Option<&'a mut [f64]> {
    (!p.is_null() && n > 0).then(|| slice::from_raw_parts_mut(p, n))
}

unsafe fn model_ref<'a>(m: *const ApmModel) -> Result<&'a ApmModel, Failure> {
    m.as_ref().ok_or_else(|| Failure(ApmStatus::NullPointer, "model handle is null".into()))
}

unsafe fn store_model(out: *mut *mut ApmModel, triple: OperatorTriple) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ApmStatus::NullPointer, "output handle pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(ApmModel { triple }));
    Ok(())
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn apm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a checkpoint file written by the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn apm_model_load(path: *const c_char, out: *mut *mut ApmModel) -> ApmStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure(ApmStatus::NullPointer, "path is null".into()));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let f = File::open(path).map_err(|e| Failure(ApmStatus::Io, format!("{path}: {e}")))?;
        store_model(out, read_checkpoint(BufReader::new(f))?)
    })
}

/// Load a checkpoint from memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn apm_model_load_bytes(bytes: *const u8, len: usize, out: *mut *mut ApmModel) -> ApmStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(Failure(ApmStatus::NullPointer, "buffer is null".into()));
        }
        store_model(out, read_checkpoint(slice::from_raw_parts(bytes, len))?)
    })
}

/// Freshly initialized triple with the given sizes, as training starts from.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn apm_model_init(
    seed: u64,
    width: usize,
    depth: usize,
    latent: usize,
    sensors_x: usize,
    sensors_v: usize,
    period: f64,
    out: *mut *mut ApmModel,
) -> ApmStatus {
    guard(|| {
        let cfg = TripleConfig { width, depth, latent, sensors_x, sensors_v, modes: 1 };
        if [width, latent, sensors_x, sensors_v].contains(&0) {
            return Err(invalid("network sizes must be positive"));
        }
        store_model(out, OperatorTriple::init(seed, &cfg, period)?)
    })
}

/// Serialize a model in checkpoint format. With `buf` null (or too small)
/// only the required size is written to `len_out`.
///
/// # Safety
/// `model` must be a live handle; `buf` null or `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn apm_model_save_bytes(
    model: *const ApmModel,
    buf: *mut u8,
    cap: usize,
    len_out: *mut usize,
) -> ApmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let mut bytes = Vec::new();
        write_checkpoint(&m.triple, &mut bytes)?;
        if !len_out.is_null() {
            *len_out = bytes.len();
        }
        if !buf.is_null() {
            if cap < bytes.len() {
                return Err(invalid(format!("buffer holds {cap} bytes, checkpoint needs {}", bytes.len())));
            }
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        }
        Ok(())
    })
}

/// Expected sensor counts: `f0` takes `sensors_x * sensors_v` values
/// (row-major in x), `h` takes `sensors_x`.
///
/// # Safety
/// `model` must be a live handle; the outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn apm_model_sensor_sizes(
    model: *const ApmModel,
    f0_len: *mut usize,
    h_len: *mut usize,
) -> ApmStatus {
    guard(|| {
        let net = &model_ref(model)?.triple.f_net;
        if !f0_len.is_null() {
            *f0_len = net.branch1.input_dim();
        }
        if !h_len.is_null() {
            *h_len = net.branch2.input_dim();
        }
        Ok(())
    })
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apm_model_num_params(model: *const ApmModel, out: *mut usize) -> ApmStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(Failure(ApmStatus::NullPointer, "output is null".into()));
        }
        *out = m.triple.num_params();
        Ok(())
    })
}

/// Evaluate the model for one input couple at `n_points` points given as
/// `(t, x, v)` triples. Each non-null output receives `n_points` values:
/// `f`, `ρ`, `φ` and `E = -∂xφ`.
///
/// # Safety
/// All non-null pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn apm_model_eval(
    model: *const ApmModel,
    f0_sensors: *const f64,
    f0_len: usize,
    h_sensors: *const f64,
    h_len: usize,
    points: *const f64,
    n_points: usize,
    f_out: *mut f64,
    rho_out: *mut f64,
    phi_out: *mut f64,
    e_out: *mut f64,
) -> ApmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let net = &m.triple.f_net;
        if f0_len != net.branch1.input_dim() || h_len != net.branch2.input_dim() {
            return Err(invalid(format!(
                "sensor sizes {f0_len}/{h_len}, model expects {}/{}",
                net.branch1.input_dim(),
                net.branch2.input_dim()
            )));
        }
        let u = InputCouple {
            f0_sensors: input(f0_sensors, f0_len, "f0_sensors")?.to_vec(),
            h_sensors: input(h_sensors, h_len, "h_sensors")?.to_vec(),
            h: 0.0,
            alpha: 0.0,
        };
        let flat = input(points, 3 * n_points, "points")?;
        if flat.iter().any(|p| !p.is_finite()) {
            return Err(Failure(ApmStatus::Numeric, "non-finite evaluation point".into()));
        }
        let pts: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let vals = m.triple.eval_points(&u, &pts)?;
        for (dst, src) in [(f_out, &vals.f), (rho_out, &vals.rho), (phi_out, &vals.phi), (e_out, &vals.e)] {
            if let Some(d) = output(dst, n_points) {
                d.copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from one of the load/init functions and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn apm_model_free(model: *mut ApmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solve `-φ'' = rhs` on `n` periodic nodes of a period of length `period`
/// (the mean of `rhs` is removed). Either output may be null.
///
/// # Safety
/// `rhs` must hold `n` values and each non-null output `n` slots.
#[no_mangle]
pub unsafe extern "C" fn apm_poisson_periodic(
    rhs: *const f64,
    n: usize,
    period: f64,
    phi_out: *mut f64,
    e_out: *mut f64,
) -> ApmStatus {
    guard(|| {
        let rhs = input(rhs, n, "rhs")?;
        let s = poisson_periodic(rhs, period)?;
        for (dst, src) in [(phi_out, &s.phi), (e_out, &s.e)] {
            if let Some(d) = output(dst, n) {
                d.copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// `sqrt(Σ|pred − ref|² / Σ|ref|²)` over `n` values.
///
/// # Safety
/// `pred` and `reference` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apm_relative_l2(pred: *const f64, reference: *const f64, n: usize, out: *mut f64) -> ApmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(ApmStatus::NullPointer, "output is null".into()));
        }
        *out = relative_l2(input(pred, n, "pred")?, input(reference, n, "reference")?)?;
        Ok(())
    })
}
