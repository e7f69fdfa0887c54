//! C ABI over the odolab library.
//!
//! Every function returns an [`OdoStatus`]. Values come back through out
//! pointers; strings are heap allocated and released with [`odo_string_free`],
//! handles with their own `*_free`. After a failure, [`odo_last_error`]
//! describes it until the next call on the same thread.
//!
//! Big integers cross the boundary as decimal strings, and vectors as
//! comma-separated rationals such as `1/3,1/6`.

use odolab::classify::{self, SupergroupDescriptor};
use odolab::format;
use odolab::lattice::IntegerLattice;
use odolab::odometer::OdometerChain;
use odolab::speedup::PiecewiseCocycle;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdoStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    /// The inputs were well formed but the operation does not apply to them.
    DomainError = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdoRelation {
    Conjugate = 0,
    Isomorphic = 1,
    ContinuouslyOrbitEquivalent = 2,
}

/// Verdict codes written by the classifiers.
pub const ODO_VERDICT_YES: i32 = 0;
pub const ODO_VERDICT_NO: i32 = 1;
pub const ODO_VERDICT_UNDECIDED: i32 = 2;

pub struct OdoLattice(IntegerLattice);
pub struct OdoChain(Arc<OdometerChain>);
pub struct OdoCocycle(Arc<PiecewiseCocycle>);
pub struct OdoDescriptor(SupergroupDescriptor);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (OdoStatus, String);

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    (OdoStatus::DomainError, e.to_string())
}

fn parse_err<E: std::fmt::Display>(e: E) -> Failure {
    (OdoStatus::ParseError, e.to_string())
}

/// Runs `f`, records its error and turns panics into [`OdoStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OdoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OdoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(&format!("panic: {}", msg.unwrap_or_else(|| "unknown".into())));
            OdoStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((OdoStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (OdoStatus::InvalidUtf8, e.to_string()))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or((OdoStatus::NullArgument, "null handle".into()))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err((OdoStatus::NullArgument, "null out pointer".into()));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(domain)?;
    put(out, c.into_raw())
}

unsafe fn put_box<T>(out: *mut *mut T, v: T) -> Result<(), Failure> {
    put(out, Box::into_raw(Box::new(v)))
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; do not free.
#[no_mangle]
pub extern "C" fn odo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn odo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `h` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn odo_lattice_free(h: *mut OdoLattice) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn odo_chain_free(h: *mut OdoChain) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn odo_cocycle_free(h: *mut OdoCocycle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn odo_descriptor_free(h: *mut OdoDescriptor) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Parses a literal such as `2; 3 1; 0 2`.
///
/// # Safety
/// `literal` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_lattice_parse(literal: *const c_char, out: *mut *mut OdoLattice) -> OdoStatus {
    guard(|| {
        let l = format::parse_lattice(text(literal)?).map_err(parse_err)?;
        put_box(out, OdoLattice(l))
    })
}

/// The lattice in canonical literal form.
///
/// # Safety
/// `l` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_lattice_to_string(l: *const OdoLattice, out: *mut *mut c_char) -> OdoStatus {
    guard(|| put_string(out, handle(l)?.0.to_string()))
}

/// Index in ℤ^d as a decimal string.
///
/// # Safety
/// `l` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_lattice_index(l: *const OdoLattice, out: *mut *mut c_char) -> OdoStatus {
    guard(|| put_string(out, handle(l)?.0.index().to_string()))
}

/// Dual lattice as a `1/s; …` literal.
///
/// # Safety
/// `l` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_lattice_dual(l: *const OdoLattice, out: *mut *mut c_char) -> OdoStatus {
    guard(|| put_string(out, handle(l)?.0.dual().to_string()))
}

/// Whether a rational vector lies in the lattice.
///
/// # Safety
/// `l` must be a live handle, `vector` a nul-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_lattice_contains(l: *const OdoLattice, vector: *const c_char, out: *mut bool) -> OdoStatus {
    guard(|| {
        let l = handle(l)?;
        let v = format::parse_qvec(text(vector)?).map_err(parse_err)?;
        let q = odolab::lattice::RationalLattice::from_integer(&l.0);
        put(out, q.contains(&v).map_err(domain)?)
    })
}

/// Parses a `diagpow` or `explicit` chain file. Derived chains come from
/// [`odo_cocycle_derived_chain`].
///
/// # Safety
/// `spec` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_chain_parse(spec: *const c_char, out: *mut *mut OdoChain) -> OdoStatus {
    guard(|| {
        let c = format::parse_chain(text(spec)?, &mut |_| Err("derived chains are built with odo_cocycle_derived_chain".into())).map_err(parse_err)?;
        put_box(out, OdoChain(c.chain))
    })
}

/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_chain_dim(c: *const OdoChain, out: *mut usize) -> OdoStatus {
    guard(|| put(out, handle(c)?.0.dim()))
}

/// Stage `j ≥ 1` as a lattice literal.
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_chain_stage(c: *const OdoChain, j: usize, out: *mut *mut c_char) -> OdoStatus {
    guard(|| put_string(out, handle(c)?.0.stage(j).map_err(domain)?.to_string()))
}

/// Clopen value group, e.g. `Z[1/6]`.
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_chain_value_group(c: *const OdoChain, out: *mut *mut c_char) -> OdoStatus {
    guard(|| put_string(out, handle(c)?.0.clopen_value_group().map_err(domain)?.to_string()))
}

/// Parses a cocycle spec over `chain`; the spec's own chain reference is
/// ignored.
///
/// # Safety
/// `spec` must be a nul-terminated string, `chain` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_cocycle_parse(spec: *const c_char, chain: *const OdoChain, out: *mut *mut OdoCocycle) -> OdoStatus {
    guard(|| {
        let chain = Arc::clone(&handle(chain)?.0);
        let c = format::parse_cocycle(text(spec)?, &mut |_| Ok(Arc::clone(&chain))).map_err(parse_err)?;
        put_box(out, OdoCocycle(c.cocycle))
    })
}

/// `Ok` when the cocycle is a valid speedup, `DomainError` with the reason
/// otherwise.
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn odo_cocycle_validate(c: *const OdoCocycle) -> OdoStatus {
    guard(|| handle(c)?.0.validate().map_err(domain))
}

/// Whether the orbit of 0 is transitive at every depth up to `depth`.
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_cocycle_minimal(c: *const OdoCocycle, depth: usize, out: *mut bool) -> OdoStatus {
    guard(|| put(out, handle(c)?.0.minimality_to_depth(depth).map_err(domain)?.iter().all(|&m| m)))
}

/// Stage `j` of the derived chain as a lattice literal.
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_cocycle_derived_stage(c: *const OdoCocycle, j: usize, out: *mut *mut c_char) -> OdoStatus {
    guard(|| {
        let c = handle(c)?;
        if j == 0 {
            return Err(domain("stages are numbered from 1"));
        }
        let (report, _) = c.0.derived_chain(j).map_err(domain)?;
        put_string(out, report.stabilizers[j - 1].to_string())
    })
}

/// The derived chain as a chain handle. Minimality is checked to `depth`.
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_cocycle_derived_chain(c: *const OdoCocycle, depth: usize, out: *mut *mut OdoChain) -> OdoStatus {
    guard(|| {
        let (_, chain) = handle(c)?.0.derived_chain(depth.max(1)).map_err(domain)?;
        put_box(out, OdoChain(Arc::new(chain)))
    })
}

/// Parses `dim=2 shear=… supports=…`.
///
/// # Safety
/// `spec` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_descriptor_parse(spec: *const c_char, out: *mut *mut OdoDescriptor) -> OdoStatus {
    guard(|| put_box(out, OdoDescriptor(format::parse_descriptor(text(spec)?).map_err(parse_err)?)))
}

/// Descriptor fitted to the first `depth` stages of `chain`.
///
/// # Safety
/// `chain` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_descriptor_fit(chain: *const OdoChain, depth: usize, out: *mut *mut OdoDescriptor) -> OdoStatus {
    guard(|| {
        let fit = classify::fit_descriptor(&handle(chain)?.0, depth).map_err(domain)?.map_err(domain)?;
        put_box(out, OdoDescriptor(fit.descriptor))
    })
}

/// # Safety
/// `d` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_descriptor_to_string(d: *const OdoDescriptor, out: *mut *mut c_char) -> OdoStatus {
    guard(|| put_string(out, format::emit_descriptor(&handle(d)?.0)))
}

/// # Safety
/// `d` must be a live handle, `vector` a nul-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odo_descriptor_member(d: *const OdoDescriptor, vector: *const c_char, out: *mut bool) -> OdoStatus {
    guard(|| {
        let v = format::parse_qvec(text(vector)?).map_err(parse_err)?;
        put(out, handle(d)?.0.member(&v).map_err(domain)?)
    })
}

/// Decides `relation` between two descriptors. Writes one of the
/// `ODO_VERDICT_*` codes and, when `explanation` is not null, the verdict
/// with its witness or certificate.
///
/// # Safety
/// `a` and `b` must be live handles, `verdict` writable, `explanation` null or writable.
#[no_mangle]
pub unsafe extern "C" fn odo_classify(
    relation: OdoRelation,
    a: *const OdoDescriptor,
    b: *const OdoDescriptor,
    height: u32,
    denom: u32,
    verdict: *mut i32,
    explanation: *mut *mut c_char,
) -> OdoStatus {
    guard(|| {
        let (a, b) = (&handle(a)?.0, &handle(b)?.0);
        let v = match relation {
            OdoRelation::Conjugate => classify::conjugate_test(a, b),
            OdoRelation::Isomorphic => classify::isomorphism_test(a, b, height),
            OdoRelation::ContinuouslyOrbitEquivalent => classify::continuous_oe_test(a, b, height, denom),
        }
        .map_err(domain)?;
        put(verdict, v.exit_code())?;
        if !explanation.is_null() {
            put_string(explanation, v.to_string())?;
        }
        Ok(())
    })
}

/// Orbit equivalence of two chains through their clopen value groups.
///
/// # Safety
/// `a` and `b` must be live handles, `verdict` writable, `explanation` null or writable.
#[no_mangle]
pub unsafe extern "C" fn odo_classify_orbit_equivalence(
    a: *const OdoChain,
    b: *const OdoChain,
    verdict: *mut i32,
    explanation: *mut *mut c_char,
) -> OdoStatus {
    guard(|| {
        let v = classify::orbit_equivalence_test(&handle(a)?.0, &handle(b)?.0).map_err(domain)?;
        put(verdict, v.exit_code())?;
        if !explanation.is_null() {
            put_string(explanation, v.to_string())?;
        }
        Ok(())
    })
}
