//! Reproduction cases: each runs a pipeline end to end and compares exact
//! values against the expected ones.

use crate::castles::{verify_run, verify_stage_invariants, ConstructionConfig, ConstructionState};
use crate::classify::{
    classify_all, conjugate_test, continuous_oe_test, fit_descriptor, implication_violation, isomorphism_test, orbit_equivalence_test,
    verify_alpha, Certificate, Outcome, SearchBounds, Side, SupergroupDescriptor, Witness,
};
use crate::lattice::{IntegerLattice, RationalLattice};
use crate::matrix::{ivec, qvec, rat};
use crate::odometer::OdometerChain;
use crate::speedup::{random_commuting_cocycle, random_product_cocycle, sandwich_diagonal_check, Cone, PiecewiseCocycle};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const CASES: &[&str] = &[
    "thm-notconjugate",
    "thm-notrigid",
    "cor-nospeedup",
    "lemma-groupstructure",
    "construction",
    "classification-table",
    "conjecture-probe",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReproError {
    #[error("unknown case `{0}`; known cases: {known}", known = CASES.join(", "))]
    UnknownCase(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ReproReport {
    pub case: String,
    pub checks: Vec<Check>,
    /// Informational lines that are not pass/fail.
    pub notes: Vec<String>,
    pub elapsed: Duration,
}

impl ReproReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    /// Records a failing check for an error raised along the way.
    fn attempt<T, E: fmt::Display>(&mut self, name: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(name, false, format!("error: {e}"));
                None
            }
        }
    }
}

impl fmt::Display for ReproReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{} {}: {}", self.case, c.name, if c.passed { "pass" } else { "FAIL" })?;
            if !c.detail.is_empty() {
                write!(f, " ({})", c.detail)?;
            }
            writeln!(f)?;
        }
        for n in &self.notes {
            writeln!(f, "{} note: {n}", self.case)?;
        }
        writeln!(f, "{} {} in {:.2?}", self.case, if self.passed() { "PASSED" } else { "FAILED" }, self.elapsed)
    }
}

/// The `3^j × 2^j` chain on ℤ².
pub fn chain_3x2() -> Arc<OdometerChain> {
    Arc::new(OdometerChain::diagonal_power(&[3, 2], &[1, 1]).expect("valid chain"))
}

pub fn chain_2x2() -> Arc<OdometerChain> {
    Arc::new(OdometerChain::diagonal_power(&[2, 2], &[1, 1]).expect("valid chain"))
}

pub fn chain_6() -> Arc<OdometerChain> {
    Arc::new(OdometerChain::diagonal_power(&[6], &[1]).expect("valid chain"))
}

/// Speedup of the `3^j×2^j` odometer: `e_1` acts by `T^{(1,0)}`; `e_2` by
/// `T^{(0,1)}` on the even second coordinate and by `T^{(1,1)}` on the odd one.
pub fn notconjugate_cocycle() -> Arc<PiecewiseCocycle> {
    Arc::new(
        PiecewiseCocycle::from_fn(chain_3x2(), 1, 2, |i, rep| match i {
            0 => ivec(&[1, 0]),
            _ if rep[1].is_zero() => ivec(&[0, 1]),
            _ => ivec(&[1, 1]),
        })
        .expect("valid table"),
    )
}

/// Speedup of the `2^j×2^j` odometer by the constant vectors `(1,0)`, `(1,1)`.
pub fn notrigid_cocycle() -> Arc<PiecewiseCocycle> {
    Arc::new(PiecewiseCocycle::from_fn(chain_2x2(), 1, 2, |i, _| if i == 0 { ivec(&[1, 0]) } else { ivec(&[1, 1]) }).expect("valid table"))
}

fn pow(b: i64, e: usize) -> BigInt {
    BigInt::from(b).pow(e as u32)
}

/// `[[3^j, 3^j − 2^{j−1}], [0, 2^j]]`.
pub fn notconjugate_stage(j: usize) -> IntegerLattice {
    let (a, b) = (pow(3, j), pow(2, j));
    let x = &a - pow(2, j - 1);
    IntegerLattice::hnf(&[vec![a, x], vec![BigInt::zero(), b]]).expect("nonsingular")
}

/// `(1/6^j)[[2^j, 0], [2^{j−1} − 3^j, 3^j]]`.
pub fn notconjugate_dual(j: usize) -> RationalLattice {
    let s = BigRational::from_integer(pow(6, j));
    let rows = vec![
        vec![BigRational::from_integer(pow(2, j)) / &s, BigRational::zero()],
        vec![BigRational::from_integer(pow(2, j - 1) - pow(3, j)) / &s, BigRational::from_integer(pow(3, j)) / &s],
    ];
    RationalLattice::from_rows(&rows).expect("nonsingular")
}

/// The example pairs for the classification table, each as two
/// (label, descriptor, chain) triples.
pub struct CatalogEntry {
    pub label: String,
    pub first: (SupergroupDescriptor, Arc<OdometerChain>),
    pub second: (SupergroupDescriptor, Arc<OdometerChain>),
    /// Expected exit codes for conjugacy, isomorphism, continuous and plain
    /// orbit equivalence; `None` where the bounded search may not decide.
    pub expected: [Option<i32>; 4],
}

pub fn catalog() -> Result<Vec<CatalogEntry>, String> {
    let desc = |c: &OdometerChain| -> Result<SupergroupDescriptor, String> {
        match fit_descriptor(c, 5).map_err(|e| e.to_string())? {
            Ok(fit) => Ok(fit.descriptor),
            Err(e) => Err(e.to_string()),
        }
    };
    let derived = |c: Arc<PiecewiseCocycle>| -> Result<Arc<OdometerChain>, String> {
        Ok(Arc::new(c.derived_chain(5).map_err(|e| e.to_string())?.1))
    };
    let s32 = chain_3x2();
    let s22 = chain_2x2();
    let s23 = Arc::new(OdometerChain::diagonal_power(&[2, 3], &[1, 1]).expect("valid chain"));
    let s6 = chain_6();
    let d1 = derived(notconjugate_cocycle())?;
    let d2 = derived(notrigid_cocycle())?;
    let entry = |label: &str, a: &Arc<OdometerChain>, b: &Arc<OdometerChain>, expected: [Option<i32>; 4]| -> Result<CatalogEntry, String> {
        Ok(CatalogEntry { label: label.to_string(), first: (desc(a)?, a.clone()), second: (desc(b)?, b.clone()), expected })
    };
    Ok(vec![
        entry("3x2 odometer vs derived speedup of it", &s32, &d1, [Some(1), Some(1), Some(0), Some(0)])?,
        entry("2x2 odometer vs derived speedup of it", &s22, &d2, [Some(0), Some(0), Some(0), Some(0)])?,
        entry("3x2 odometer vs 2x2 odometer", &s32, &s22, [Some(1), Some(1), Some(1), Some(1)])?,
        entry("3x2 odometer vs 6 odometer", &s32, &s6, [Some(1), Some(1), Some(1), Some(0)])?,
        entry("3x2 odometer vs 2x3 odometer", &s32, &s23, [Some(1), Some(0), Some(0), Some(0)])?,
    ])
}

/// Runs a case by name. Errors inside a pipeline surface as failing checks.
pub fn run_repro(case: &str, seed: u64) -> Result<ReproReport, ReproError> {
    run_repro_with(case, seed, 4)
}

/// As [`run_repro`], with the number of construction stages.
pub fn run_repro_with(case: &str, seed: u64, stages: usize) -> Result<ReproReport, ReproError> {
    let start = Instant::now();
    let mut r = ReproReport { case: case.to_string(), checks: Vec::new(), notes: Vec::new(), elapsed: Duration::ZERO };
    match case {
        "thm-notconjugate" => notconjugate(&mut r),
        "thm-notrigid" => notrigid(&mut r),
        "cor-nospeedup" => nospeedup(&mut r, seed),
        "lemma-groupstructure" => groupstructure(&mut r),
        "construction" => construction(&mut r, stages),
        "classification-table" => table(&mut r),
        "conjecture-probe" => probe(&mut r, seed),
        other => return Err(ReproError::UnknownCase(other.to_string())),
    }
    r.elapsed = start.elapsed();
    Ok(r)
}

fn notconjugate(r: &mut ReproReport) {
    let c = notconjugate_cocycle();
    let ok = c.validate().is_ok();
    r.check("cocycle validates", ok, "");
    let Some((report, chain)) = r.attempt("derived chain", c.derived_chain(5)) else { return };
    for j in 1..=5 {
        let g = &report.stabilizers[j - 1];
        r.check(&format!("stage {j}"), *g == notconjugate_stage(j), g.to_string());
        let dual = g.dual();
        r.check(&format!("dual {j}"), dual == notconjugate_dual(j), dual.to_string());
    }
    let sigma = SupergroupDescriptor::from_primes(&[&[3], &[2]]).expect("valid descriptor");
    let Some(fit) = r.attempt("fit", fit_descriptor(&chain, 5)) else { return };
    let Some(fit) = r.attempt("fit", fit.map_err(|e| e.0)) else { return };
    let h = fit.descriptor;
    let expected = vec![vec![rat(1, 1), rat(0, 1)], vec![rat(-1, 2), rat(1, 1)]];
    r.check("fitted shear", *h.shear() == expected, h.to_string());
    let x = qvec(&[(1, 3), (1, 6)]);
    r.check("(1/3,1/6) in H(S)", h.member(&x).unwrap_or(false), "");
    r.check("(1/3,1/6) not in H(sigma)", !sigma.member(&x).unwrap_or(true), "");
    if let Some(v) = r.attempt("conjugacy", conjugate_test(&sigma, &h)) {
        let ok = matches!(&v.outcome, Outcome::No(Certificate::NonMember { vector, inside: Side::Second }) if *vector == x);
        r.check("not conjugate", ok, v.to_string());
    }
    if let Some(v) = r.attempt("isomorphism", isomorphism_test(&sigma, &h, 3)) {
        let ok = matches!(&v.outcome, Outcome::No(Certificate::DeterminantContent { content, determinant, .. })
            if *content == BigInt::from(2) && determinant == "2cd");
        r.check("not isomorphic", ok, v.to_string());
    }
    if let Some(v) = r.attempt("continuous orbit equivalence", continuous_oe_test(&sigma, &h, 3, 2)) {
        let alpha = vec![vec![rat(1, 1), rat(0, 1)], vec![rat(1, 2), rat(1, 1)]];
        let ok = matches!(&v.outcome, Outcome::Yes(Witness::Matrix(m)) if *m == alpha)
            && verify_alpha(&sigma, &h, &alpha).unwrap_or(false);
        r.check("continuously orbit equivalent", ok, v.to_string());
    }
    if let Some(v) = r.attempt("orbit equivalence", orbit_equivalence_test(&chain_3x2(), &chain)) {
        r.check("orbit equivalent", v.is_yes(), v.to_string());
    }
}

fn notrigid(r: &mut ReproReport) {
    let c = notrigid_cocycle();
    r.check("cocycle validates", c.validate().is_ok(), "");
    let Some(min) = r.attempt("minimality", c.minimality_to_depth(8)) else { return };
    r.check("minimal to depth 8", min.iter().all(|&m| m), format!("{min:?}"));
    let Some((report, chain)) = r.attempt("derived chain", c.derived_chain(8)) else { return };
    let mut exps = Vec::new();
    let mut shape = true;
    for g in &report.stabilizers {
        let d = g.diag();
        let e: Vec<u64> = d.iter().map(|x| crate::odometer::valuation(x, &BigInt::from(2))).collect();
        shape &= g.is_diagonal() && d.iter().zip(&e).all(|(x, &k)| *x == pow(2, k as usize));
        exps.push((e[0], e[1]));
    }
    r.check("stages are 2-power diagonal", shape, format!("{exps:?}"));
    r.check("a1 = b1 = 1", exps.first() == Some(&(1, 1)), "");
    let steps = exps.windows(2).all(|w| w[1].0 - w[0].0 <= 1 && w[1].1 - w[0].1 <= 1 && w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
    r.check("increments in {0,1}", steps, "");
    let sigma = SupergroupDescriptor::from_primes(&[&[2], &[2]]).expect("valid descriptor");
    let Some(fit) = r.attempt("fit", fit_descriptor(&chain, 8)) else { return };
    let Some(fit) = r.attempt("fit", fit.map_err(|e| e.0)) else { return };
    if let Some(v) = r.attempt("conjugacy", conjugate_test(&sigma, &fit.descriptor)) {
        r.check("conjugate to the 2x2 odometer", v.is_yes(), v.to_string());
    }
}

fn nospeedup(r: &mut ReproReport, seed: u64) {
    let c = notconjugate_cocycle();
    r.check("quadrant contains the values", c.cone_check(&Cone::quadrant(true)).holds, "");
    let missing = [
        ("open quadrant", Cone::quadrant(false)),
        ("x-axis to diagonal", Cone::sector(&ivec(&[1, 0]), &ivec(&[1, 1]), true, true).expect("valid sector")),
        ("diagonal to y-axis", Cone::sector(&ivec(&[1, 1]), &ivec(&[0, 1]), true, true).expect("valid sector")),
    ];
    for (name, cone) in &missing {
        let cc = c.cone_check(cone);
        r.check(&format!("{name} misses an axis value"), !cc.holds && !cc.witnesses.is_empty(), format!("{} witnesses", cc.witnesses.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = chain_3x2();
    let mut sampled = 0;
    let mut product = 0;
    let mut consistent = true;
    for _ in 0..50 {
        let Some(p) = r.attempt("sampling", random_product_cocycle(&source, &mut rng, 1)) else { return };
        let p = Arc::new(p);
        if p.validate().is_err() || !p.cone_check(&Cone::quadrant(true)).holds {
            continue;
        }
        sampled += 1;
        let Ok((report, _)) = p.derived_chain(3) else { continue };
        if (1..=3).all(|j| report.stabilizers[j - 1] == IntegerLattice::diagonal(&[pow(3, j), pow(2, j)]).expect("nonsingular")) {
            product += 1;
            consistent &= p.product_form_check().unwrap_or(false);
        }
    }
    r.check("product-form consistency", consistent && sampled > 0, format!("{product} of {sampled} quadrant samples have the product derived chain"));
}

fn groupstructure(r: &mut ReproReport) {
    for (index, m, upper, expected) in [(6i64, 1u32, 0u32, [3i64, 2]), (36, 2, 1, [9, 4])] {
        let mut passing = Vec::new();
        let mut total = 0;
        for a in 1..=index {
            if index % a != 0 {
                continue;
            }
            let c = index / a;
            for b in 0..a {
                total += 1;
                let g = IntegerLattice::hnf(&[ivec(&[a, b]), ivec(&[0, c])]).expect("nonsingular");
                if let Ok(diag) = sandwich_diagonal_check(&g, m, upper) {
                    passing.push((g, diag));
                }
            }
        }
        let want = IntegerLattice::diagonal(&ivec(&expected)).expect("nonsingular");
        let ok = passing.len() == 1 && passing[0].0 == want && passing[0].1;
        r.check(&format!("index {index}"), ok, format!("{} of {total} sublattices satisfy the hypothesis", passing.len()));
    }
}

/// Runs `stages` stages of the castle construction from `3^j×2^j` to `6^j`.
pub fn construction(r: &mut ReproReport, stages: usize) {
    let (s, t) = (chain_3x2(), chain_6());
    if let Some(v) = r.attempt("value groups", orbit_equivalence_test(&s, &t)) {
        r.check("equal clopen value groups", v.is_yes(), v.to_string());
    }
    let config = ConstructionConfig::new(Cone::quadrant(true));
    let Some(mut state) = r.attempt("setup", ConstructionState::new(s, t, config)) else { return };
    for k in 0..stages {
        if r.attempt(&format!("stage {k}"), state.next_stage().map(|_| ())).is_none() {
            return;
        }
        let rec = &state.stages[k];
        let audit = verify_stage_invariants(&state, k);
        let failed: Vec<String> = audit.failures().map(|e| format!("({}) {}", e.family, e.name)).collect();
        r.check(
            &format!("stage {k} audit"),
            audit.passed() && (1..=7).all(|f| audit.entries.iter().any(|e| e.family == f)),
            format!("n = {}, depth {}, {} towers of height {}{}", rec.n, rec.depth, rec.source.towers.len(), rec.height, if failed.is_empty() { String::new() } else { format!(", failing {}", failed.join(" ")) }),
        );
    }
    if let Some(run) = r.attempt("stabilization", verify_run(&state)) {
        r.notes.push(format!("stabilization: {} atoms, {} violations, at most {} redefinitions per atom", run.atoms, run.violations, run.max_changes));
    }
}

fn table(r: &mut ReproReport) {
    let Some(entries) = r.attempt("catalog", catalog()) else { return };
    for e in &entries {
        let label = &e.label;
        let Some(v) = r.attempt(label, classify_all((&e.first.0, &e.first.1), (&e.second.0, &e.second.1), SearchBounds::default())) else { continue };
        let codes: Vec<&str> = v.iter().map(|x| ["yes", "no", "undecided"][x.exit_code() as usize]).collect();
        let matches = v.iter().zip(&e.expected).all(|(x, want)| want.is_none_or(|w| w == x.exit_code()));
        let violation = implication_violation(&v);
        let mut detail = format!("conj {} iso {} coe {} oe {}", codes[0], codes[1], codes[2], codes[3]);
        if let Some((a, b)) = violation {
            detail.push_str(&format!(", {a} holds but {b} fails"));
        }
        r.check(label, matches && violation.is_none(), detail);
    }
}

/// Samples bounded speedups of the `3^j×2^j` odometer and reports how their
/// derived actions compare with it. Nothing here is asserted.
fn probe(r: &mut ReproReport, seed: u64) {
    const SAMPLES: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = chain_3x2();
    let sigma = SupergroupDescriptor::from_primes(&[&[3], &[2]]).expect("valid descriptor");
    let (mut not_minimal, mut unfitted, mut yes, mut no, mut open) = (0, 0, 0, 0, 0);
    for _ in 0..SAMPLES {
        let Some(c) = r.attempt("sampling", random_commuting_cocycle(&source, &mut rng, 2, -1..=2)) else { return };
        let c = Arc::new(c);
        let Ok((_, chain)) = c.derived_chain(4) else {
            not_minimal += 1;
            continue;
        };
        let Some(fit) = fit_descriptor(&chain, 4).ok().and_then(Result::ok) else {
            unfitted += 1;
            continue;
        };
        match continuous_oe_test(&sigma, &fit.descriptor, 2, 2).map(|v| v.exit_code()) {
            Ok(0) => yes += 1,
            Ok(1) => no += 1,
            _ => open += 1,
        }
    }
    r.check("probe ran", not_minimal + unfitted + yes + no + open == SAMPLES, "");
    r.notes.push(format!(
        "{SAMPLES} sampled speedups: {not_minimal} not minimal to depth 4, {unfitted} outside the descriptor family, \
         {yes} continuously orbit equivalent, {no} not, {open} undecided"
    ));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(case: &str) -> ReproReport {
        let r = run_repro(case, 7).unwrap();
        println!("{r}");
        r
    }

    #[test]
    fn notconjugate_case() {
        assert!(run("thm-notconjugate").passed());
    }

    #[test]
    fn notrigid_case() {
        assert!(run("thm-notrigid").passed());
    }

    #[test]
    fn nospeedup_case() {
        assert!(run("cor-nospeedup").passed());
    }

    #[test]
    fn groupstructure_case() {
        assert!(run("lemma-groupstructure").passed());
    }

    #[test]
    fn table_case() {
        assert!(run("classification-table").passed());
    }

    #[test]
    fn probe_reports() {
        let r = run("conjecture-probe");
        assert!(r.passed());
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn short_construction() {
        let r = run_repro_with("construction", 0, 2).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks.iter().filter(|c| c.name.ends_with("audit")).count(), 2);
    }

    #[test]
    fn unknown_case() {
        let err = run_repro("nope", 0).unwrap_err();
        assert!(err.to_string().contains("thm-notrigid"));
    }
}
