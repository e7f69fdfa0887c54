use odolab_ffi::*;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a returned string.
unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    odo_string_free(s);
    out
}

unsafe fn last_error() -> String {
    let e = odo_last_error();
    assert!(!e.is_null());
    CStr::from_ptr(e).to_str().unwrap().to_owned()
}

const COCYCLE: &str = "chain=s32.chain J=1 d2=2
gen 1:
rep (0,0) -> (1,0)
rep (0,1) -> (1,0)
rep (1,0) -> (1,0)
rep (1,1) -> (1,0)
rep (2,0) -> (1,0)
rep (2,1) -> (1,0)
gen 2:
rep (0,0) -> (0,1)
rep (0,1) -> (1,1)
rep (1,0) -> (0,1)
rep (1,1) -> (1,1)
rep (2,0) -> (0,1)
rep (2,1) -> (1,1)
";

#[test]
fn lattice_round_trip() {
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(odo_lattice_parse(c("2; 9 7; 0 4").as_ptr(), &mut l), OdoStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(odo_lattice_index(l, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "36");
        assert_eq!(odo_lattice_dual(l, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "1/36; 2; 36 20; 0 1");
        assert_eq!(odo_lattice_to_string(l, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "2; 9 7; 0 4");
        let mut inside = false;
        assert_eq!(odo_lattice_contains(l, c("9,0").as_ptr(), &mut inside), OdoStatus::Ok);
        assert!(inside);
        assert_eq!(odo_lattice_contains(l, c("1,0").as_ptr(), &mut inside), OdoStatus::Ok);
        assert!(!inside);
        odo_lattice_free(l);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(odo_lattice_parse(c("2; 1 x; 0 1").as_ptr(), &mut l), OdoStatus::ParseError);
        assert!(l.is_null());
        assert!(last_error().contains("line 1"));
        assert_eq!(odo_lattice_parse(ptr::null(), &mut l), OdoStatus::NullArgument);
        assert_eq!(odo_lattice_parse(c("1; 2").as_ptr(), ptr::null_mut()), OdoStatus::NullArgument);
        let bad = [0xffu8, 0];
        assert_eq!(odo_lattice_parse(bad.as_ptr().cast(), &mut l), OdoStatus::InvalidUtf8);
        let mut s = ptr::null_mut();
        assert_eq!(odo_lattice_index(ptr::null(), &mut s), OdoStatus::NullArgument);
        // success clears the message
        assert_eq!(odo_lattice_parse(c("1; 2").as_ptr(), &mut l), OdoStatus::Ok);
        assert!(odo_last_error().is_null());
        odo_lattice_free(l);
        odo_lattice_free(ptr::null_mut());
        odo_string_free(ptr::null_mut());
    }
}

#[test]
fn derived_chain_and_classification() {
    unsafe {
        let mut chain = ptr::null_mut();
        assert_eq!(odo_chain_parse(c("dim=2 provider=diagpow primes=3,2 exps=j,j").as_ptr(), &mut chain), OdoStatus::Ok);
        let mut dim = 0;
        assert_eq!(odo_chain_dim(chain, &mut dim), OdoStatus::Ok);
        assert_eq!(dim, 2);
        let mut s = ptr::null_mut();
        assert_eq!(odo_chain_stage(chain, 2, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "2; 9 0; 0 4");
        assert_eq!(odo_chain_value_group(chain, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "Z[1/6]");

        let mut cocycle = ptr::null_mut();
        assert_eq!(odo_cocycle_parse(c(COCYCLE).as_ptr(), chain, &mut cocycle), OdoStatus::Ok);
        assert_eq!(odo_cocycle_validate(cocycle), OdoStatus::Ok);
        let mut minimal = false;
        assert_eq!(odo_cocycle_minimal(cocycle, 3, &mut minimal), OdoStatus::Ok);
        assert!(minimal);
        assert_eq!(odo_cocycle_derived_stage(cocycle, 2, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "2; 9 7; 0 4");
        assert_eq!(odo_cocycle_derived_stage(cocycle, 0, &mut s), OdoStatus::DomainError);

        let mut derived = ptr::null_mut();
        assert_eq!(odo_cocycle_derived_chain(cocycle, 3, &mut derived), OdoStatus::Ok);
        let mut fitted = ptr::null_mut();
        assert_eq!(odo_descriptor_fit(derived, 5, &mut fitted), OdoStatus::Ok);
        assert_eq!(odo_descriptor_to_string(fitted, &mut s), OdoStatus::Ok);
        assert_eq!(take(s), "dim=2 shear=1,0,-1/2,1 supports=3|2");
        let mut sigma = ptr::null_mut();
        assert_eq!(odo_descriptor_parse(c("dim=2 shear=1,0,0,1 supports=3|2").as_ptr(), &mut sigma), OdoStatus::Ok);
        let mut member = true;
        assert_eq!(odo_descriptor_member(sigma, c("1/3,1/6").as_ptr(), &mut member), OdoStatus::Ok);
        assert!(!member);

        let mut verdict = -1;
        let mut why = ptr::null_mut();
        assert_eq!(odo_classify(OdoRelation::Isomorphic, sigma, fitted, 3, 2, &mut verdict, &mut why), OdoStatus::Ok);
        assert_eq!(verdict, ODO_VERDICT_NO);
        assert!(take(why).contains("2cd"));
        assert_eq!(
            odo_classify(OdoRelation::ContinuouslyOrbitEquivalent, sigma, fitted, 3, 2, &mut verdict, ptr::null_mut()),
            OdoStatus::Ok
        );
        assert_eq!(verdict, ODO_VERDICT_YES);
        assert_eq!(odo_classify(OdoRelation::ContinuouslyOrbitEquivalent, sigma, fitted, 0, 1, &mut verdict, ptr::null_mut()), OdoStatus::Ok);
        assert_eq!(verdict, ODO_VERDICT_UNDECIDED);
        assert_eq!(odo_classify_orbit_equivalence(chain, derived, &mut verdict, ptr::null_mut()), OdoStatus::Ok);
        assert_eq!(verdict, ODO_VERDICT_YES);

        odo_descriptor_free(sigma);
        odo_descriptor_free(fitted);
        odo_chain_free(derived);
        odo_cocycle_free(cocycle);
        odo_chain_free(chain);
    }
}

#[test]
fn invalid_cocycle_is_a_domain_error() {
    unsafe {
        let mut chain = ptr::null_mut();
        assert_eq!(odo_chain_parse(c("dim=1 provider=diagpow primes=2 exps=j").as_ptr(), &mut chain), OdoStatus::Ok);
        let mut cocycle = ptr::null_mut();
        let spec = "chain=x J=1 d2=1\ngen 1:\nrep (0) -> (2)\nrep (1) -> (1)\n";
        assert_eq!(odo_cocycle_parse(c(spec).as_ptr(), chain, &mut cocycle), OdoStatus::Ok);
        assert_eq!(odo_cocycle_validate(cocycle), OdoStatus::DomainError);
        assert!(!last_error().is_empty());
        odo_cocycle_free(cocycle);
        odo_chain_free(chain);
    }
}
