//! C ABI over the core library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`LatdiffStatus`] and writes its result through an out-pointer; the
//! message for the most recent failure on the calling thread is available
//! from [`latdiff_last_error_message`]. Panics never unwind into C: they are
//! caught and reported as [`LatdiffStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use latdiff::checkpoint::{self, Stamped};
use latdiff::data::{load_cohort, save_cohort, synth_toy_cohort, Cohort, ToyPreset};
use latdiff::diffusion::{GeneratorBundle, BUNDLE_KIND};
use latdiff::evaluation::SyntheticSource;
use latdiff::numerics::{auroc, RngStream};
use latdiff::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatdiffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Input = 3,
    Schema = 4,
    Config = 5,
    Prerequisite = 6,
    Numeric = 7,
    UndefinedMetric = 8,
    RareCondition = 9,
    Io = 10,
    Json = 11,
    BufferTooSmall = 12,
    OutOfRange = 13,
    Panic = 14,
}

/// A set of patient stays with their conditions and outcomes.
pub struct LatdiffCohort(Cohort);

/// A trained two-phase generator.
pub struct LatdiffGenerator(GeneratorBundle);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("NUL bytes removed"));
}

fn status_of(e: &Error) -> LatdiffStatus {
    match e {
        Error::Input(_) | Error::Vocabulary { .. } => LatdiffStatus::Input,
        Error::Schema { .. } => LatdiffStatus::Schema,
        Error::Config(_) => LatdiffStatus::Config,
        Error::Prerequisite { .. } => LatdiffStatus::Prerequisite,
        Error::Numeric { .. } => LatdiffStatus::Numeric,
        Error::UndefinedMetric(_) => LatdiffStatus::UndefinedMetric,
        Error::RareCondition { .. } => LatdiffStatus::RareCondition,
        Error::Io { .. } => LatdiffStatus::Io,
        Error::Json { .. } => LatdiffStatus::Json,
    }
}

struct Failure(LatdiffStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LatdiffStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LatdiffStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LatdiffStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees that a non-null pointer is valid.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(LatdiffStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees that a non-null pointer is valid.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(LatdiffStatus::NullPointer, format!("{what} is null")))
}

fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    non_null(p, what)?;
    // SAFETY: non-null and NUL-terminated per the contract.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(LatdiffStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn latdiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failed call on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn latdiff_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generate a cohort of `n` stays from the built-in toy process.
#[no_mangle]
pub extern "C" fn latdiff_cohort_toy(n: usize, seed: u64, out: *mut *mut LatdiffCohort) -> LatdiffStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let preset = ToyPreset {
            n,
            ..ToyPreset::icu_toy_v1()
        };
        let cohort = synth_toy_cohort(&preset, seed)?;
        *out = Box::into_raw(Box::new(LatdiffCohort(cohort)));
        Ok(())
    })
}

/// Load a dataset directory (`meta.json` + `records.ndjson`).
#[no_mangle]
pub extern "C" fn latdiff_cohort_load(dir: *const c_char, out: *mut *mut LatdiffCohort) -> LatdiffStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let dir = path_arg(dir, "dir")?;
        *out = Box::into_raw(Box::new(LatdiffCohort(load_cohort(&dir)?)));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn latdiff_cohort_save(cohort: *const LatdiffCohort, dir: *const c_char) -> LatdiffStatus {
    guard(|| {
        let cohort = non_null(cohort, "cohort")?;
        save_cohort(&cohort.0, &path_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// Number of stays, hours per stay and features per hour.
#[no_mangle]
pub extern "C" fn latdiff_cohort_shape(
    cohort: *const LatdiffCohort,
    n: *mut usize,
    t: *mut usize,
    f: *mut usize,
) -> LatdiffStatus {
    guard(|| {
        let c = &non_null(cohort, "cohort")?.0;
        *out_ptr(n, "n")? = c.len();
        *out_ptr(t, "t")? = c.meta.t;
        *out_ptr(f, "f")? = c.meta.f;
        Ok(())
    })
}

/// Copy the T×F values of stay `index` row-major into `buf`, which must
/// hold at least T·F doubles. Values are in the cohort's own units.
#[no_mangle]
pub extern "C" fn latdiff_cohort_values(
    cohort: *const LatdiffCohort,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> LatdiffStatus {
    guard(|| {
        let c = &non_null(cohort, "cohort")?.0;
        let r = c.records.get(index).ok_or_else(|| {
            Failure(LatdiffStatus::OutOfRange, format!("index {index} with {} stays", c.len()))
        })?;
        let need = c.meta.t * c.meta.f;
        if len < need {
            return Err(Failure(LatdiffStatus::BufferTooSmall, format!("need {need} values, got {len}")));
        }
        non_null(buf, "buf")?;
        // SAFETY: checked non-null and at least `need` elements long.
        let out = unsafe { std::slice::from_raw_parts_mut(buf, need) };
        for (o, v) in out.iter_mut().zip(r.values.iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Write each stay's binary outcome (0 or 1) into `buf` of length `len`.
#[no_mangle]
pub extern "C" fn latdiff_cohort_outcomes(cohort: *const LatdiffCohort, buf: *mut u8, len: usize) -> LatdiffStatus {
    guard(|| {
        let c = &non_null(cohort, "cohort")?.0;
        if len < c.len() {
            return Err(Failure(LatdiffStatus::BufferTooSmall, format!("need {}, got {len}", c.len())));
        }
        non_null(buf, "buf")?;
        // SAFETY: checked non-null and at least `c.len()` elements long.
        let out = unsafe { std::slice::from_raw_parts_mut(buf, c.len()) };
        for (o, r) in out.iter_mut().zip(&c.records) {
            *o = u8::from(r.outcome());
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn latdiff_cohort_free(cohort: *mut LatdiffCohort) {
    if !cohort.is_null() {
        // SAFETY: produced by Box::into_raw in this library and not yet freed.
        drop(unsafe { Box::from_raw(cohort) });
    }
}

/// Load a generator checkpoint, either as written by the command-line tool
/// or as a bare bundle checkpoint.
#[no_mangle]
pub extern "C" fn latdiff_generator_load(path: *const c_char, out: *mut *mut LatdiffGenerator) -> LatdiffStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path, "path")?;
        let bundle = match checkpoint::load::<Stamped<GeneratorBundle>>(&path, BUNDLE_KIND) {
            Ok(s) => s.value,
            Err(Error::Json { .. }) => checkpoint::load::<GeneratorBundle>(&path, BUNDLE_KIND)?,
            Err(e) => return Err(e.into()),
        };
        bundle.validate()?;
        *out = Box::into_raw(Box::new(LatdiffGenerator(bundle)));
        Ok(())
    })
}

/// One synthetic stay per stay of `template`, with the template's conditions
/// and units. The template must be normalized like the generator's
/// training data.
#[no_mangle]
pub extern "C" fn latdiff_generator_synthesize(
    generator: *const LatdiffGenerator,
    template: *const LatdiffCohort,
    seed: u64,
    out: *mut *mut LatdiffCohort,
) -> LatdiffStatus {
    guard(|| {
        let g = &non_null(generator, "generator")?.0;
        let t = &non_null(template, "template")?.0;
        let out = out_ptr(out, "out")?;
        let s = g.synthesize(t, &RngStream::new(seed))?;
        *out = Box::into_raw(Box::new(LatdiffCohort(s)));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn latdiff_generator_free(generator: *mut LatdiffGenerator) {
    if !generator.is_null() {
        // SAFETY: produced by Box::into_raw in this library and not yet freed.
        drop(unsafe { Box::from_raw(generator) });
    }
}

/// Area under the ROC curve with ties counted as one half. `labels` holds
/// 0 or non-zero per score.
#[no_mangle]
pub extern "C" fn latdiff_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> LatdiffStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, n, "labels")?.iter().map(|l| *l != 0).collect();
        *out_ptr(out, "out")? = auroc(scores, &labels)?;
        Ok(())
    })
}
