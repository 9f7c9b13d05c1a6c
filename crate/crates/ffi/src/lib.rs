//! C ABI for the interprim library.
//!
//! Every fallible function returns an [`IpStatus`]; on failure a message is
//! available from [`ip_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_read`/`ip_extract` and released by the matching
//! `*_free`. Arrays are caller-owned buffers of `2^n` doubles in ascending
//! bitmask order (bit `i` set means variable `i` is present).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use interprim::decomposition::InitScheme;
use interprim::interactions::{self, InteractionSpectrum, ValueTable};
use interprim::lattice::{self, LatticeVector, SubsetIndex, MAX_VARS};
use interprim::objective::{LossConfig, LossMode, DEFAULT_ALPHA};
use interprim::optimizer::{self, Extraction, OptimizerConfig, DEFAULT_ITERATIONS};
use interprim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonFiniteLoss = 4,
    Io = 5,
    Parse = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpLossMode {
    SingleSparse = 0,
    JointRowmax = 1,
    JointFull = 2,
}

impl From<IpLossMode> for LossMode {
    fn from(m: IpLossMode) -> Self {
        match m {
            IpLossMode::SingleSparse => LossMode::SingleSparse,
            IpLossMode::JointRowmax => LossMode::JointRowmax,
            IpLossMode::JointFull => LossMode::JointFull,
        }
    }
}

/// Options for [`ip_extract`]. Obtain defaults from [`ip_extract_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IpExtractOptions {
    pub mode: IpLossMode,
    pub alpha: f64,
    pub iterations: usize,
    /// Values `<= 0` select the default derived from the tables.
    pub learning_rate: f64,
    pub seed: u64,
    /// Standard deviation of a Gaussian initialization; `0` starts from zeros.
    pub init_sigma: f64,
}

/// One value table (a model's outputs on every mask).
pub struct IpTable(ValueTable);

/// AND and OR effects of one model.
pub struct IpSpectrum(InteractionSpectrum);

/// Result of [`ip_extract`]: one spectrum per input table plus the losses.
pub struct IpExtraction {
    spectra: Vec<IpSpectrum>,
    initial_loss: f64,
    final_loss: f64,
}

impl From<Extraction> for IpExtraction {
    fn from(e: Extraction) -> Self {
        IpExtraction {
            spectra: e.spectra.into_iter().map(IpSpectrum).collect(),
            initial_loss: e.initial_loss.total,
            final_loss: e.final_loss.total,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> IpStatus {
    match e {
        Error::ShapeMismatch { .. } | Error::Length { .. } => IpStatus::ShapeMismatch,
        Error::NonFiniteLoss { .. } => IpStatus::NonFiniteLoss,
        Error::Io { .. } => IpStatus::Io,
        Error::Parse { .. }
        | Error::Version { .. }
        | Error::ValueCount { .. }
        | Error::NonFiniteValue { .. }
        | Error::DuplicateModel { .. }
        | Error::Json(_)
        | Error::Csv(_) => IpStatus::Parse,
        _ => IpStatus::InvalidArgument,
    }
}

fn fail(status: IpStatus, message: impl Into<String>) -> IpStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> Result<(), IpStatus>) -> IpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(IpStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, IpStatus>;
}

impl<T> OrStatus<T> for interprim::Result<T> {
    fn or_status(self) -> Result<T, IpStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), IpStatus> {
    if p.is_null() {
        Err(fail(IpStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn vars_for_len(len: usize) -> Result<usize, IpStatus> {
    if len < 2 || !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_VARS {
        return Err(fail(
            IpStatus::ShapeMismatch,
            format!("length {len} is not 2^n for n in 1..={MAX_VARS}"),
        ));
    }
    Ok(len.trailing_zeros() as usize)
}

unsafe fn read_vector(data: *const f64, len: usize) -> Result<LatticeVector, IpStatus> {
    non_null(data, "input")?;
    let n = vars_for_len(len)?;
    let values = std::slice::from_raw_parts(data, len).to_vec();
    LatticeVector::from_values(n, values).or_status()
}

unsafe fn write_vector(v: &LatticeVector, out: *mut f64, len: usize) -> Result<(), IpStatus> {
    non_null(out, "output")?;
    if len != v.len() {
        return Err(fail(
            IpStatus::ShapeMismatch,
            format!("output holds {len} values, need {}", v.len()),
        ));
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(v.values());
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, IpStatus> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), IpStatus> {
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ip_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread. Valid until the next call
/// into the library from the same thread; never null.
#[no_mangle]
pub extern "C" fn ip_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Möbius transform of `len = 2^n` values (AND effects of a value table).
#[no_mangle]
pub unsafe extern "C" fn ip_mobius(input: *const f64, output: *mut f64, len: usize) -> IpStatus {
    guard(|| {
        let v = read_vector(input, len)?;
        write_vector(&lattice::mobius_transform(&v).or_status()?, output, len)
    })
}

/// Zeta transform, the inverse of [`ip_mobius`].
#[no_mangle]
pub unsafe extern "C" fn ip_zeta(input: *const f64, output: *mut f64, len: usize) -> IpStatus {
    guard(|| {
        let v = read_vector(input, len)?;
        write_vector(&lattice::zeta_transform(&v).or_status()?, output, len)
    })
}

/// OR effects of an OR component `v_or`.
#[no_mangle]
pub unsafe extern "C" fn ip_or_interactions(
    input: *const f64,
    output: *mut f64,
    len: usize,
) -> IpStatus {
    guard(|| {
        let v = read_vector(input, len)?;
        write_vector(&interactions::or_interactions(&v).or_status()?, output, len)
    })
}

/// Copy `len = 2^n` outputs into a new table handle.
#[no_mangle]
pub unsafe extern "C" fn ip_table_new(
    model_id: *const c_char,
    values: *const f64,
    len: usize,
    out: *mut *mut IpTable,
) -> IpStatus {
    guard(|| {
        non_null(out, "out")?;
        let id = if model_id.is_null() { "model" } else { c_str(model_id, "model_id")? };
        let v = read_vector(values, len)?;
        if let Some(k) = v.first_non_finite() {
            return Err(fail(IpStatus::InvalidArgument, format!("non-finite value at mask {k}")));
        }
        put(out, IpTable(ValueTable::new(id, v).or_status()?))
    })
}

/// Read a value-table JSON file.
#[no_mangle]
pub unsafe extern "C" fn ip_table_read(path: *const c_char, out: *mut *mut IpTable) -> IpStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = c_str(path, "path")?;
        let file = interprim::io::read_value_table_file(path).or_status()?;
        put(out, IpTable(file.to_table().or_status()?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_table_free(table: *mut IpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of variables, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ip_table_n(table: *const IpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.n())
}

/// Shapley value of every variable; `out` holds `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ip_shapley(table: *const IpTable, out: *mut f64, len: usize) -> IpStatus {
    guard(|| {
        non_null(table, "table")?;
        non_null(out, "output")?;
        let phi = interactions::shapley_values(&(*table).0).or_status()?;
        if len != phi.len() {
            return Err(fail(
                IpStatus::ShapeMismatch,
                format!("output holds {len} values, need {}", phi.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&phi);
        Ok(())
    })
}

/// Plain AND (Harsanyi) spectrum of one table, OR effects all zero.
#[no_mangle]
pub unsafe extern "C" fn ip_harsanyi(table: *const IpTable, out: *mut *mut IpSpectrum) -> IpStatus {
    guard(|| {
        non_null(table, "table")?;
        non_null(out, "out")?;
        put(out, IpSpectrum(InteractionSpectrum::harsanyi(&(*table).0).or_status()?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_spectrum_free(spectrum: *mut IpSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ip_spectrum_n(spectrum: *const IpSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.0.n())
}

/// Copy the AND effects (`2^n` values) into `out`.
#[no_mangle]
pub unsafe extern "C" fn ip_spectrum_and(
    spectrum: *const IpSpectrum,
    out: *mut f64,
    len: usize,
) -> IpStatus {
    guard(|| {
        non_null(spectrum, "spectrum")?;
        write_vector(&(*spectrum).0.and_effects, out, len)
    })
}

/// Copy the OR effects (`2^n` values) into `out`.
#[no_mangle]
pub unsafe extern "C" fn ip_spectrum_or(
    spectrum: *const IpSpectrum,
    out: *mut f64,
    len: usize,
) -> IpStatus {
    guard(|| {
        non_null(spectrum, "spectrum")?;
        write_vector(&(*spectrum).0.or_effects, out, len)
    })
}

/// Output on mask `bits` rebuilt from every AND and OR effect.
#[no_mangle]
pub unsafe extern "C" fn ip_spectrum_match(
    spectrum: *const IpSpectrum,
    bits: u32,
    out: *mut f64,
) -> IpStatus {
    guard(|| {
        non_null(spectrum, "spectrum")?;
        non_null(out, "out")?;
        *out = interactions::universal_match(&(*spectrum).0, SubsetIndex(bits)).or_status()?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ip_extract_options_default() -> IpExtractOptions {
    IpExtractOptions {
        mode: IpLossMode::JointFull,
        alpha: DEFAULT_ALPHA,
        iterations: DEFAULT_ITERATIONS,
        learning_rate: 0.0,
        seed: 0,
        init_sigma: 0.0,
    }
}

/// Learn the decomposition for `count` tables of equal `n` and extract their spectra.
/// A null `options` uses [`ip_extract_options_default`].
#[no_mangle]
pub unsafe extern "C" fn ip_extract(
    tables: *const *const IpTable,
    count: usize,
    options: *const IpExtractOptions,
    out: *mut *mut IpExtraction,
) -> IpStatus {
    guard(|| {
        non_null(tables, "tables")?;
        non_null(out, "out")?;
        let opts = options.as_ref().copied().unwrap_or_else(|| ip_extract_options_default());
        let handles = std::slice::from_raw_parts(tables, count);
        let mut owned = Vec::with_capacity(count);
        for (i, &h) in handles.iter().enumerate() {
            non_null(h, &format!("tables[{i}]"))?;
            owned.push((*h).0.clone());
        }
        let loss = LossConfig::new(opts.mode.into(), opts.alpha).or_status()?;
        let init = if opts.init_sigma > 0.0 {
            InitScheme::Gaussian { sigma: opts.init_sigma }
        } else {
            InitScheme::Zeros
        };
        let cfg = OptimizerConfig {
            iterations: opts.iterations,
            learning_rate: (opts.learning_rate > 0.0).then_some(opts.learning_rate),
            seed: opts.seed,
            init,
            ..OptimizerConfig::default()
        };
        cfg.validate().or_status()?;
        put(out, IpExtraction::from(optimizer::optimize(&owned, &loss, &cfg).or_status()?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_extraction_free(extraction: *mut IpExtraction) {
    if !extraction.is_null() {
        drop(Box::from_raw(extraction));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ip_extraction_model_count(extraction: *const IpExtraction) -> usize {
    extraction.as_ref().map_or(0, |e| e.spectra.len())
}

/// Borrowed spectrum of model `index`; null when out of range. Do not free it.
#[no_mangle]
pub unsafe extern "C" fn ip_extraction_spectrum(
    extraction: *const IpExtraction,
    index: usize,
) -> *const IpSpectrum {
    match extraction.as_ref().and_then(|e| e.spectra.get(index)) {
        Some(s) => s,
        None => {
            set_error(format!("no spectrum {index}"));
            ptr::null()
        }
    }
}

/// Loss before and after optimization.
#[no_mangle]
pub unsafe extern "C" fn ip_extraction_loss(
    extraction: *const IpExtraction,
    initial: *mut f64,
    final_: *mut f64,
) -> IpStatus {
    guard(|| {
        non_null(extraction, "extraction")?;
        let e = &*extraction;
        if let Some(p) = initial.as_mut() {
            *p = e.initial_loss;
        }
        if let Some(p) = final_.as_mut() {
            *p = e.final_loss;
        }
        Ok(())
    })
}
