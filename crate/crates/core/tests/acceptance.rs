//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the terminal.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use odolab::castles::{column, verify_run, verify_stage_invariants, ConstructionConfig, ConstructionState, Space};
use odolab::classify::{
    classify_all, conjugate_test, continuous_oe_test, fit_descriptor, implication_violation, isomorphism_test, orbit_equivalence_test,
    verify_alpha, Certificate, Outcome, SearchBounds, SupergroupDescriptor, Witness,
};
use odolab::lattice::IntegerLattice;
use odolab::matrix::{self, ivec, qvec, IVec};
use odolab::odometer::valuation;
use odolab::repro;
use odolab::speedup::{random_commuting_cocycle, random_product_cocycle, sandwich_diagonal_check, Cone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn pow(b: i64, e: usize) -> BigInt {
    BigInt::from(b).pow(e as u32)
}

fn criterion_1() -> Verdict {
    let c = repro::notconjugate_cocycle();
    ok(c.validate())?;
    let (report, chain) = ok(c.derived_chain(5))?;
    for j in 1..=5 {
        let (a, b) = (pow(3, j), pow(2, j));
        let want = ok(IntegerLattice::hnf(&[vec![a.clone(), &a - pow(2, j - 1)], vec![BigInt::zero(), b.clone()]]))?;
        ensure!(report.stabilizers[j - 1] == want, "stage {j} is {}", report.stabilizers[j - 1]);
        // the dual through its defining property: v ∈ G* iff v·g ∈ ℤ for the columns g of G
        let dual = want.dual();
        let s = BigRational::from_integer(pow(6, j));
        let cols = [
            vec![BigRational::from_integer(b.clone()) / &s, BigRational::from_integer(pow(2, j - 1) - &a) / &s],
            vec![BigRational::zero(), BigRational::from_integer(a.clone()) / &s],
        ];
        let expected = ok(odolab::lattice::RationalLattice::from_generators(2, &cols))?;
        ensure!(dual == expected, "dual {j} is {dual}");
        for col in dual.columns() {
            for g in want.columns() {
                let dot: BigRational = col.iter().zip(&g).map(|(x, y)| x * BigRational::from_integer(y.clone())).sum();
                ensure!(dot.is_integer(), "dual column pairs to {dot}");
            }
        }
        ensure!(dual.covolume() == BigRational::new(BigInt::one(), want.index()), "dual covolume");
    }
    let sigma = ok(SupergroupDescriptor::from_primes(&[&[3], &[2]]))?;
    let h = ok(ok(fit_descriptor(&chain, 5))?.map_err(|e| e.0))?.descriptor;
    let x = qvec(&[(1, 3), (1, 6)]);
    ensure!(ok(h.member(&x))? && !ok(sigma.member(&x))?, "(1/3,1/6) memberships");
    match ok(isomorphism_test(&sigma, &h, 3))?.outcome {
        Outcome::No(Certificate::DeterminantContent { content, .. }) if content == BigInt::from(2) => {}
        other => return Err(format!("isomorphism gave {other:?}")),
    }
    let alpha = match ok(continuous_oe_test(&sigma, &h, 3, 2))?.outcome {
        Outcome::Yes(Witness::Matrix(m)) => m,
        other => return Err(format!("continuous orbit equivalence gave {other:?}")),
    };
    ensure!(ok(verify_alpha(&sigma, &h, &alpha))?, "alpha does not verify");
    // the witness has determinant ±1 and denominator at most 2
    ensure!(matrix::qdet(&alpha).abs().is_one(), "det alpha");
    ensure!(matrix::common_denominator(alpha.iter().flatten()) <= BigInt::from(2), "alpha denominator");
    Ok(format!("alpha = {}", matrix::fmt_qmat(&alpha)))
}

fn criterion_2() -> Verdict {
    let c = repro::notrigid_cocycle();
    ok(c.validate())?;
    ensure!(c.tables().iter().flatten().all(|v| *v == ivec(&[1, 0]) || *v == ivec(&[1, 1])), "unexpected table");
    let min = ok(c.minimality_to_depth(8))?;
    ensure!(min.iter().all(|&m| m), "minimality {min:?}");
    let (report, chain) = ok(c.derived_chain(8))?;
    let two = BigInt::from(2);
    let mut prev = (0, 0);
    let mut exps = Vec::new();
    for g in &report.stabilizers {
        ensure!(g.is_diagonal(), "stage {g} is not diagonal");
        let d = g.diag();
        let e = (valuation(&d[0], &two), valuation(&d[1], &two));
        ensure!(d[0] == pow(2, e.0 as usize) && d[1] == pow(2, e.1 as usize), "stage {g} is not a 2-power diagonal");
        ensure!(e.0 >= prev.0 && e.0 - prev.0 <= 1 && e.1 >= prev.1 && e.1 - prev.1 <= 1, "increment {prev:?} -> {e:?}");
        prev = e;
        exps.push(e);
    }
    ensure!(exps[0] == (1, 1), "a1, b1 = {:?}", exps[0]);
    let sigma = ok(SupergroupDescriptor::from_primes(&[&[2], &[2]]))?;
    let h = ok(ok(fit_descriptor(&chain, 8))?.map_err(|e| e.0))?.descriptor;
    ensure!(ok(conjugate_test(&sigma, &h))?.is_yes(), "not conjugate");
    Ok(format!("exponents {exps:?}"))
}

fn random_basis(rng: &mut ChaCha8Rng, d: usize) -> Vec<IVec> {
    loop {
        let m: Vec<IVec> = (0..d).map(|_| (0..d).map(|_| BigInt::from(rng.gen_range(-20..=20))).collect()).collect();
        if !matrix::idet(&m).is_zero() {
            return m;
        }
    }
}

/// Random unimodular column operation applied to `m`.
fn column_op(rng: &mut ChaCha8Rng, m: &mut [IVec]) {
    let d = m.len();
    let (i, j) = (rng.gen_range(0..d), rng.gen_range(0..d));
    if i == j {
        for row in m.iter_mut() {
            row[i] = -&row[i];
        }
    } else {
        let k = BigInt::from(rng.gen_range(-3..=3));
        for row in m.iter_mut() {
            let add = &row[j] * &k;
            row[i] += add;
        }
    }
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut brute = 0;
    for n in 0..1000 {
        let d = 2 + n % 2;
        let m = random_basis(&mut rng, d);
        let l = ok(IntegerLattice::hnf(&m))?;
        ensure!(l.index() == matrix::idet(&m).abs(), "index of {l} differs from |det|");
        let dual = l.dual();
        ensure!(dual.dual() == odolab::lattice::RationalLattice::from_integer(&l), "dual of dual of {l}");
        ensure!(dual.covolume() == BigRational::new(BigInt::one(), l.index()), "dual covolume of {l}");
        let mut u = m.clone();
        for _ in 0..6 {
            column_op(&mut rng, &mut u);
        }
        ensure!(ok(IntegerLattice::hnf(&u))? == l, "HNF changed under a unimodular column operation");
        if l.index() <= BigInt::from(200) {
            brute += 1;
            // residues of every vector in a box twice the HNF diagonal
            let diag: Vec<i64> = l.diag().iter().map(|x| i64::try_from(x).expect("small")).collect();
            let cs = l.coset_system();
            let mut seen = HashSet::new();
            let mut v = vec![0i64; d];
            'outer: loop {
                let iv = ivec(&v);
                let r = ok(cs.reduce(&iv))?;
                ensure!(ok(l.contains(&matrix::sub(&iv, &r)))?, "reduce moved {iv:?} off its coset");
                seen.insert(r);
                for k in 0..d {
                    v[k] += 1;
                    if v[k] < 2 * diag[k] {
                        continue 'outer;
                    }
                    v[k] = 0;
                }
                break;
            }
            ensure!(BigInt::from(seen.len()) == l.index(), "{} residues for index {}", seen.len(), l.index());
        }
    }
    Ok(format!("1000 lattices, {brute} coset counts by enumeration"))
}

fn random_vec(rng: &mut ChaCha8Rng, r: i64) -> IVec {
    (0..2).map(|_| BigInt::from(rng.gen_range(-r..=r))).collect()
}

fn is_permutation(next: &[usize]) -> bool {
    let mut seen = vec![false; next.len()];
    next.iter().all(|&y| y < seen.len() && !std::mem::replace(&mut seen[y], true))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let source = repro::chain_3x2();
    let (mut minimal, mut quadrant_diag, mut product_samples) = (0, 0, 0);
    let diag = |j: usize| IntegerLattice::diagonal(&[pow(3, j), pow(2, j)]).expect("nonsingular");
    for n in 0..200 {
        let c = if n % 4 == 3 {
            product_samples += 1;
            ok(random_product_cocycle(&source, &mut rng, 1))?
        } else {
            let lo = if n % 2 == 0 { 0 } else { -1 };
            ok(random_commuting_cocycle(&source, &mut rng, 1, lo..=2))?
        };
        let c = Arc::new(c);
        ok(c.validate())?;
        for _ in 0..5 {
            let (x, v, w) = (random_vec(&mut rng, 6), random_vec(&mut rng, 3), random_vec(&mut rng, 3));
            let pv = ok(c.evaluate(&x, &v))?;
            let pw = ok(c.evaluate(&matrix::add(&x, &pv), &w))?;
            ensure!(ok(c.evaluate(&x, &matrix::add(&v, &w)))? == matrix::add(&pv, &pw), "cocycle identity at {x:?}");
        }
        for j in 1..=3 {
            let act = ok(c.quotient_action(j))?;
            ensure!(act.next.iter().all(|p| is_permutation(p)), "generator is not a permutation at depth {j}");
        }
        if ok(c.minimality_to_depth(3))?.iter().all(|&m| m) {
            minimal += 1;
            let (report, _) = ok(c.derived_chain(3))?;
            for j in 1..=3 {
                let h = &report.stabilizers[j - 1];
                ensure!(h.index() == ok(source.index(j))?, "co-index at depth {j}");
                if j > 1 {
                    ensure!(ok(h.is_sublattice_of(&report.stabilizers[j - 2]))?, "nesting at depth {j}");
                }
                // v stabilizes the cylinder of 0 iff the displacement lands in G_j
                let g = ok(source.stage(j))?;
                for a in -3..=3 {
                    for b in -3..=3 {
                        let v = ivec(&[a, b]);
                        ensure!(ok(h.contains(&v))? == ok(g.contains(&ok(c.evaluate(&ivec(&[0, 0]), &v))?))?, "stabilizer membership of {v:?}");
                    }
                }
            }
            if c.cone_check(&Cone::quadrant(true)).holds && (1..=3).all(|j| report.stabilizers[j - 1] == diag(j)) {
                quadrant_diag += 1;
                ensure!(ok(c.product_form_check())?, "quadrant cocycle with the product derived chain is not of product form");
            }
        }
    }
    Ok(format!("{minimal} minimal, {quadrant_diag} quadrant samples with the product derived chain ({product_samples} drawn of product form)"))
}

/// All index-`n` sublattices of ℤ², one per column HNF `[[a, b], [0, c]]`.
fn sublattices(n: i64) -> Vec<IntegerLattice> {
    let mut out = Vec::new();
    for a in (1..=n).filter(|a| n % a == 0) {
        for b in 0..a {
            out.push(IntegerLattice::hnf(&[ivec(&[a, b]), ivec(&[0, n / a])]).expect("nonsingular"));
        }
    }
    out
}

fn sandwiched(g: &IntegerLattice, m: usize, upper: usize) -> bool {
    let inner = [ivec(&[3i64.pow(m as u32), 0]), ivec(&[0, 2i64.pow(m as u32)])];
    let outer = IntegerLattice::diagonal(&[pow(3, upper), pow(2, upper)]).expect("nonsingular");
    inner.iter().all(|v| g.contains(v).unwrap()) && g.columns().iter().all(|v| outer.contains(v).unwrap())
}

fn criterion_5() -> Verdict {
    let mut details = Vec::new();
    for (n, m, upper, want) in [(6i64, 1usize, 0usize, [3i64, 2]), (36, 2, 1, [9, 4])] {
        let all = sublattices(n);
        let sigma: i64 = (1..=n).filter(|d| n % d == 0).sum();
        ensure!(all.len() as i64 == sigma, "{} sublattices of index {n}, expected {sigma}", all.len());
        let distinct: HashSet<String> = all.iter().map(ToString::to_string).collect();
        ensure!(distinct.len() == all.len(), "duplicate HNFs");
        let hits: Vec<&IntegerLattice> = all.iter().filter(|g| sandwiched(g, m, upper)).collect();
        ensure!(hits.len() == 1 && *hits[0] == IntegerLattice::diagonal(&ivec(&want)).unwrap(), "index {n}: {hits:?}");
        for g in &all {
            match sandwich_diagonal_check(g, m as u32, upper as u32) {
                Ok(d) => ensure!(sandwiched(g, m, upper) && d, "check accepts {g}"),
                Err(_) => ensure!(!sandwiched(g, m, upper), "check rejects {g}"),
            }
        }
        details.push(format!("index {n}: 1 of {}", all.len()));
    }
    Ok(details.join(", "))
}

fn criterion_6() -> Verdict {
    let (s, t) = (repro::chain_3x2(), repro::chain_6());
    ensure!(ok(orbit_equivalence_test(&s, &t))?.is_yes(), "value groups differ");
    let cone = Cone::quadrant(true);
    let mut state = ok(ConstructionState::new(s.clone(), t, ConstructionConfig::new(cone.clone())))?;
    let mut lines = Vec::new();
    for k in 0..3 {
        ok(state.next_stage())?;
        let audit = verify_stage_invariants(&state, k);
        ensure!(audit.passed(), "stage {k} audit:\n{audit}");
        for f in 1..=7 {
            ensure!(audit.family_passed(f) && audit.entries.iter().any(|e| e.family == f), "family {f} at stage {k}");
        }
        let rec = &state.stages[k];
        for a in rec.speedup.domain() {
            ensure!(cone.contains(rec.speedup.get(a).unwrap()), "vector outside the cone at atom {a}");
        }
        ensure!(rec.source.depth == rec.speedup.depth(), "castle and speedup depths differ");
        let space = ok(Space::new(s.clone(), rec.speedup.depth()))?;
        let (mut c0, mut c2) = (None, None);
        for (ti, tower) in rec.source.towers.iter().enumerate() {
            for &b in tower.base() {
                let col = ok(column(&space, &rec.speedup, b, tower.height()))?;
                if col.contains(&rec.x0_atom) {
                    c0 = Some((ti, b));
                }
                if col.contains(&rec.x2_atom) {
                    c2 = Some((ti, b));
                }
            }
        }
        ensure!(c0.is_some() && c2.is_some() && c0 != c2, "x0 and x2 share a column at stage {k}");
        let f = BigRational::new(BigInt::from(rec.f.len()), ok(s.index(rec.speedup.depth()))?);
        let a0 = ok(state.a0_measure(k))?;
        ensure!(f <= BigRational::from_integer(4.into()) * &a0, "mu(F) = {f} exceeds 4 mu(A0) = {}", a0 * BigInt::from(4));
        lines.push(format!("n{k}={}", rec.n));
    }
    let run = ok(verify_run(&state))?;
    ensure!(run.stable(), "stabilization: {} violations", run.violations);
    Ok(lines.join(" "))
}

fn criterion_7() -> Verdict {
    let entries = ok(repro::catalog())?;
    ensure!(entries.len() == 5, "catalog has {} pairs", entries.len());
    let mut codes = Vec::new();
    for e in &entries {
        let v = ok(classify_all((&e.first.0, &e.first.1), (&e.second.0, &e.second.1), SearchBounds::default()))?;
        ensure!(implication_violation(&v).is_none(), "{}: {:?}", e.label, implication_violation(&v));
        let got: Vec<i32> = v.iter().map(|x| x.exit_code()).collect();
        for (g, w) in got.iter().zip(&e.expected) {
            ensure!(w.is_none_or(|w| w == *g), "{}: verdicts {got:?}", e.label);
        }
        codes.push(got.iter().map(|c| ["Y", "N", "?"][*c as usize]).collect::<String>());
    }
    Ok(codes.join(" "))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict, Duration); 7] = [
        ("derived chain of the non-conjugate speedup", criterion_1, Duration::from_secs(5)),
        ("2x2 speedup stays a 2-power odometer", criterion_2, Duration::from_secs(10)),
        ("lattice properties", criterion_3, Duration::from_secs(30)),
        ("speedup properties", criterion_4, Duration::from_secs(60)),
        ("index 6 and 36 sublattices", criterion_5, Duration::from_secs(5)),
        ("three-stage castle construction", criterion_6, Duration::from_secs(60)),
        ("classification implications", criterion_7, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let verdict = match &result {
            Ok(_) if took > *budget => Err(format!("took {took:.2?}, budget {budget:?}")),
            other => other.clone(),
        };
        match verdict {
            Ok(detail) => println!("criterion {}: pass  {name} [{took:.2?}] {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} [{took:.2?}] {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 7 criteria pass");
}
