//! Exact and bounded tests for conjugacy, isomorphism, continuous orbit
//! equivalence and orbit equivalence of odometers, through their first
//! cohomology groups `ℤ^d ≤ H ≤ ℚ^d` and clopen value groups.

use crate::lattice::{HermiteBuilder, IntegerLattice, RationalLattice};
use crate::matrix::{self, IMat, IVec, QMat, QVec};
use crate::odometer::{ChainProvider, OdometerChain, OdometerError, ValueGroup};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} is outside the supported range d <= 2")]
    DimensionUnsupported(usize),
    #[error("unsupported descriptor: {0}")]
    UnsupportedDescriptor(String),
    #[error("{0}")]
    Odometer(#[from] OdometerError),
}

/// True if every prime of `q`'s denominator lies in `primes`.
pub fn is_supported(q: &BigRational, primes: &BTreeSet<BigInt>) -> bool {
    let mut d = q.denom().clone();
    for p in primes {
        while d.is_multiple_of(p) {
            d /= p;
        }
    }
    d.is_one()
}

/// Largest divisor of `n` built from `primes`.
fn supported_part(n: &BigInt, primes: &BTreeSet<BigInt>) -> BigInt {
    let mut n = n.abs();
    let mut part = BigInt::one();
    for p in primes {
        while !n.is_zero() && n.is_multiple_of(p) {
            n /= p;
            part *= p;
        }
    }
    part
}

fn is_prime(p: &BigInt) -> bool {
    let f = crate::odometer::factorize(p);
    f.len() == 1 && f[0].1 == 1
}

/// `H = {x ∈ ℚ^d : (L·x)_i ∈ ℤ[1/P_i] for every i}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupergroupDescriptor {
    shear: QMat,
    supports: Vec<BTreeSet<BigInt>>,
    inverse: QMat,
}

impl SupergroupDescriptor {
    pub fn new(shear: QMat, supports: Vec<BTreeSet<BigInt>>) -> Result<Self, ClassifyError> {
        let d = supports.len();
        if shear.len() != d || shear.iter().any(|r| r.len() != d) {
            return Err(ClassifyError::DimensionMismatch { expected: d, found: shear.len() });
        }
        if let Some(p) = supports.iter().flatten().find(|p| !is_prime(p)) {
            return Err(ClassifyError::UnsupportedDescriptor(format!("{p} is not a prime")));
        }
        let inverse = matrix::qinverse(&shear).ok_or_else(|| ClassifyError::UnsupportedDescriptor("shear is singular".into()))?;
        // ℤ^d ⊆ H: every column of L is a member of the product of the rings.
        for (i, row) in shear.iter().enumerate() {
            if let Some(q) = row.iter().find(|q| !is_supported(q, &supports[i])) {
                return Err(ClassifyError::UnsupportedDescriptor(format!(
                    "shear entry {q} in row {} leaves Z^{d} outside the group",
                    i + 1
                )));
            }
        }
        Ok(SupergroupDescriptor { shear, supports, inverse })
    }

    /// `ℤ[1/P_1] × … × ℤ[1/P_d]`.
    pub fn product(supports: Vec<BTreeSet<BigInt>>) -> Result<Self, ClassifyError> {
        let d = supports.len();
        Self::new(matrix::identity_q(d), supports)
    }

    pub fn from_primes(supports: &[&[i64]]) -> Result<Self, ClassifyError> {
        Self::product(supports.iter().map(|ps| ps.iter().map(|&p| BigInt::from(p)).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.supports.len()
    }

    pub fn shear(&self) -> &QMat {
        &self.shear
    }

    pub fn supports(&self) -> &[BTreeSet<BigInt>] {
        &self.supports
    }

    pub fn member(&self, x: &[BigRational]) -> Result<bool, ClassifyError> {
        if x.len() != self.dim() {
            return Err(ClassifyError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let y = matrix::qmul_vec(&self.shear, x);
        Ok(y.iter().zip(&self.supports).all(|(q, ps)| is_supported(q, ps)))
    }

    /// `α(H)`, described by `(L·α^{-1}, P)`.
    pub fn image(&self, alpha: &QMat) -> Result<Self, ClassifyError> {
        let inv = matrix::qinverse(alpha).ok_or_else(|| ClassifyError::UnsupportedDescriptor("alpha is singular".into()))?;
        Self::new(matrix::qmul(&self.shear, &inv), self.supports.clone())
    }

    /// Generators `L^{-1}(p^{-k} e_i)` for `k ≤ depth`, plus `L^{-1} e_i`.
    pub fn generators(&self, depth: u32) -> Vec<QVec> {
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..d {
            let mut unit = vec![BigRational::zero(); d];
            unit[i] = BigRational::one();
            out.push(matrix::qmul_vec(&self.inverse, &unit));
            for p in &self.supports[i] {
                for k in 1..=depth {
                    unit[i] = BigRational::new(BigInt::one(), p.pow(k));
                    out.push(matrix::qmul_vec(&self.inverse, &unit));
                }
            }
        }
        out
    }

    /// A member of `self` outside `other`, or `None` when `self ⊆ other`.
    ///
    /// With `M = L_other·L_self^{-1}`, the generator `p^{-k}e_i` leaves the
    /// other group exactly when some `M_ri ≠ 0` has `p ∉ P'_r` and `k` exceeds
    /// the `p`-adic valuation of `M_ri`, or `M_ri` itself is unsupported.
    pub fn escape(&self, other: &SupergroupDescriptor) -> Result<Option<QVec>, ClassifyError> {
        let d = self.dim();
        if other.dim() != d {
            return Err(ClassifyError::DimensionMismatch { expected: d, found: other.dim() });
        }
        let m = matrix::qmul(&other.shear, &self.inverse);
        for i in 0..d {
            for r in 0..d {
                let entry = &m[r][i];
                if entry.is_zero() {
                    continue;
                }
                let mut unit = vec![BigRational::zero(); d];
                if !is_supported(entry, &other.supports[r]) {
                    unit[i] = BigRational::one();
                    return Ok(Some(matrix::qmul_vec(&self.inverse, &unit)));
                }
                if let Some(p) = self.supports[i].iter().find(|p| !other.supports[r].contains(*p)) {
                    let k = crate::odometer::valuation(entry.numer(), p) + 1;
                    unit[i] = BigRational::new(BigInt::one(), p.pow(k as u32));
                    return Ok(Some(matrix::qmul_vec(&self.inverse, &unit)));
                }
            }
        }
        Ok(None)
    }

    pub fn is_subgroup_of(&self, other: &SupergroupDescriptor) -> Result<bool, ClassifyError> {
        Ok(self.escape(other)?.is_none())
    }

    pub fn same_group(&self, other: &SupergroupDescriptor) -> Result<bool, ClassifyError> {
        Ok(self.is_subgroup_of(other)? && other.is_subgroup_of(self)?)
    }

    /// `H ∩ (1/n)ℤ^d` as a lattice.
    pub fn truncation(&self, n: &BigInt) -> Result<RationalLattice, ClassifyError> {
        let d = self.dim();
        let den = matrix::common_denominator(self.shear.iter().flatten());
        let scale = n * &den;
        let rows: QMat = (0..d)
            .map(|i| {
                let mut row = vec![BigRational::zero(); d];
                row[i] = BigRational::new(BigInt::one(), supported_part(&scale, &self.supports[i]));
                row
            })
            .collect();
        let box_part = RationalLattice::from_rows(&matrix::qmul(&self.inverse, &rows))
            .map_err(|e| ClassifyError::UnsupportedDescriptor(e.to_string()))?;
        let grid = RationalLattice::new(n.clone(), IntegerLattice::standard(d));
        box_part.intersect(&grid).map_err(|e| ClassifyError::UnsupportedDescriptor(e.to_string()))
    }
}

impl fmt::Display for SupergroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shear: Vec<String> = self.shear.iter().flatten().map(ToString::to_string).collect();
        let supports: Vec<String> = self
            .supports
            .iter()
            .map(|ps| {
                if ps.is_empty() {
                    "-".to_string()
                } else {
                    ps.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
                }
            })
            .collect();
        write!(f, "dim={} shear={} supports={}", self.dim(), shear.join(","), supports.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Conjugate,
    Isomorphic,
    ContinuouslyOE,
    OrbitEquivalent,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Conjugate, Relation::Isomorphic, Relation::ContinuouslyOE, Relation::OrbitEquivalent];
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Conjugate => "conjugate",
            Relation::Isomorphic => "isomorphic",
            Relation::ContinuouslyOE => "continuously orbit equivalent",
            Relation::OrbitEquivalent => "orbit equivalent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// `α` with `α(H_first) = H_second`.
    Matrix(QMat),
    ValueGroup(ValueGroup),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certificate {
    /// `vector` lies in the group on `inside` and not in the other one.
    NonMember { vector: QVec, inside: Side },
    /// After the linear constraints every admissible `α` has determinant
    /// divisible by `content` (zero means the determinant vanishes identically).
    DeterminantContent { constraints: Vec<String>, parametrization: Vec<(String, IMat)>, determinant: String, content: BigInt },
    DimensionMismatch { first: usize, second: usize },
    /// `element` is a clopen value on `inside` only.
    ValueGroups { element: BigRational, inside: Side },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Yes(Witness),
    No(Certificate),
    UndecidedToDepth(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationVerdict {
    pub relation: Relation,
    pub outcome: Outcome,
}

impl ClassificationVerdict {
    pub fn is_yes(&self) -> bool {
        matches!(self.outcome, Outcome::Yes(_))
    }

    pub fn is_no(&self) -> bool {
        matches!(self.outcome, Outcome::No(_))
    }

    /// 0 for yes, 1 for no, 2 for undecided.
    pub fn exit_code(&self) -> i32 {
        match self.outcome {
            Outcome::Yes(_) => 0,
            Outcome::No(_) => 1,
            Outcome::UndecidedToDepth(_) => 2,
        }
    }
}

impl fmt::Display for ClassificationVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            Outcome::Yes(Witness::Matrix(m)) => write!(f, "{}: yes, alpha = {}", self.relation, matrix::fmt_qmat(m)),
            Outcome::Yes(Witness::ValueGroup(g)) => write!(f, "{}: yes, common value group {g}", self.relation),
            Outcome::No(c) => {
                write!(f, "{}: no, ", self.relation)?;
                match c {
                    Certificate::NonMember { vector, inside } => {
                        let (a, b) = if *inside == Side::First { ("first", "second") } else { ("second", "first") };
                        write!(f, "{} lies in the {a} group but not the {b}", matrix::fmt_qvec(vector))
                    }
                    Certificate::DeterminantContent { constraints, determinant, content, .. } => {
                        if content.is_zero() {
                            write!(f, "constraints {} force det = 0", constraints.join(", "))
                        } else {
                            write!(f, "constraints {} give det = {determinant}, always divisible by {content}", constraints.join(", "))
                        }
                    }
                    Certificate::DimensionMismatch { first, second } => write!(f, "ranks {first} and {second} differ"),
                    Certificate::ValueGroups { element, inside } => {
                        let (a, b) = if *inside == Side::First { ("first", "second") } else { ("second", "first") };
                        write!(f, "clopen value {element} occurs in the {a} odometer but not the {b}")
                    }
                }
            }
            Outcome::UndecidedToDepth(n) => write!(f, "{}: undecided to depth {n}", self.relation),
        }
    }
}

/// Descriptor fitted to a chain. `exact` is false when the fit was only
/// verified on the first `N` stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fit {
    pub descriptor: SupergroupDescriptor,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoFit(pub String);

impl fmt::Display for NoFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no descriptor fits: {}", self.0)
    }
}

fn prime_set(n: &BigInt) -> BTreeSet<BigInt> {
    crate::odometer::factorize(n).into_iter().map(|(p, _)| p).collect()
}

/// Primes whose exponent in the diagonal entry grows between stage 1 and stage N.
fn growing(first: &BigInt, last: &BigInt) -> BTreeSet<BigInt> {
    prime_set(last)
        .into_iter()
        .filter(|p| crate::odometer::valuation(last, p) > crate::odometer::valuation(first, p))
        .collect()
}

/// Smallest `u/v` with `u ≡ c·v (mod m)`, `|u|, v ≤ sqrt(m/2)`.
fn rational_reconstruction(c: &BigInt, m: &BigInt) -> Option<BigRational> {
    let bound: BigInt = (m / BigInt::from(2)).sqrt();
    let (mut r0, mut r1) = (m.clone(), c.mod_floor(m));
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while r1 > bound {
        let q = &r0 / &r1;
        (r0, r1) = (r1.clone(), &r0 - &q * &r1);
        (t0, t1) = (t1.clone(), &t0 - &q * &t1);
    }
    if t1.is_zero() || t1.abs() > bound || !r1.gcd(&t1).is_one() {
        return None;
    }
    Some(BigRational::new(r1, t1))
}

/// Fit a shear/prime-support descriptor whose truncation at each stage index
/// reproduces the dual of that stage, for `j ≤ N`.
pub fn fit_descriptor(chain: &OdometerChain, n: usize) -> Result<Result<Fit, NoFit>, ClassifyError> {
    let d = chain.dim();
    let n = n.max(2);
    match chain.provider() {
        ChainProvider::DiagonalPower { bases, exponents } => {
            let mut shear = vec![vec![BigRational::zero(); d]; d];
            let mut supports = Vec::with_capacity(d);
            for (i, (b, e)) in bases.iter().zip(exponents).enumerate() {
                if e.slope > 0 {
                    shear[i][i] = BigRational::one();
                    supports.push(prime_set(b));
                } else {
                    shear[i][i] = BigRational::from_integer(b.pow(e.offset));
                    supports.push(BTreeSet::new());
                }
            }
            return Ok(Ok(Fit { descriptor: SupergroupDescriptor::new(shear, supports)?, exact: true }));
        }
        ChainProvider::Explicit(stages) => {
            // Constant from the last stage on, so H is the dual of that stage.
            let last = stages.last().expect("explicit chains are nonempty");
            let shear = matrix::to_qmat(&matrix::transpose(last.basis()));
            return Ok(Ok(Fit { descriptor: SupergroupDescriptor::new(shear, vec![BTreeSet::new(); d])?, exact: true }));
        }
        ChainProvider::Derived(_) => {}
    }
    if d > 2 {
        return Ok(Err(NoFit(format!("stagewise fitting is implemented for d <= 2, got d = {d}"))));
    }
    let first = chain.stage(1)?;
    let last = chain.stage(n)?;
    let descriptor = if (1..=n).all(|j| chain.stage(j).map(|g| g.is_diagonal()).unwrap_or(false)) {
        let mut shear = vec![vec![BigRational::zero(); d]; d];
        let mut supports = Vec::with_capacity(d);
        for i in 0..d {
            let ps = growing(&first.diag()[i], &last.diag()[i]);
            let fixed = &last.diag()[i] / supported_part(&last.diag()[i], &ps);
            shear[i][i] = BigRational::from_integer(fixed);
            supports.push(ps);
        }
        SupergroupDescriptor::new(shear, supports)?
    } else {
        // G_N = [[a, x], [0, b]]; its dual is {y : a·y_1 ∈ ℤ, x·y_1 + b·y_2 ∈ ℤ}.
        // The shear y_2 + l·y_1 must agree with (x/b)·y_1 up to P_2-denominators,
        // so l ≡ x·b^{-1} modulo the part of a·b prime to P_2.
        let diag = last.diag();
        let (a, b, x) = (&diag[0], &diag[1], &last.basis()[0][1]);
        let p1 = growing(&first.diag()[0], a);
        let p2 = growing(&first.diag()[1], b);
        if supported_part(a, &p1) != *a || supported_part(b, &p2) != *b {
            return Ok(Err(NoFit("stage diagonals carry non-growing prime factors".into())));
        }
        let ab = a * b;
        let q = &ab / supported_part(&ab, &p2);
        let shear_entry = if q.is_one() {
            BigRational::zero()
        } else {
            let eg = b.extended_gcd(&q);
            if !eg.gcd.abs().is_one() {
                return Ok(Err(NoFit("second diagonal entry is not invertible off its support".into())));
            }
            let c = (x * &eg.x).mod_floor(&q);
            match rational_reconstruction(&c, &q) {
                Some(l) => l,
                None => return Ok(Err(NoFit("no small rational shear matches the stage data".into()))),
            }
        };
        let shear = vec![vec![BigRational::one(), BigRational::zero()], vec![shear_entry, BigRational::one()]];
        match SupergroupDescriptor::new(shear, vec![p1, p2]) {
            Ok(desc) => desc,
            Err(e) => return Ok(Err(NoFit(e.to_string()))),
        }
    };
    for j in 1..=n {
        let g = chain.stage(j)?;
        let dual = g.dual();
        let fits = if g.is_diagonal() {
            // Coordinates may grow at different rates, so no single cap applies.
            dual.columns().iter().map(|c| descriptor.member(c)).collect::<Result<Vec<_>, _>>()?.into_iter().all(|m| m)
        } else {
            descriptor.truncation(&quotient_exponent(&g))? == dual
        };
        if !fits {
            return Ok(Err(NoFit(format!("truncation differs from the dual of stage {j}"))));
        }
    }
    Ok(Ok(Fit { descriptor, exact: false }))
}

/// Exponent of `ℤ^d/G` for `d ≤ 2`: `ab / gcd(a, b, x)` for `[[a, x], [0, b]]`.
fn quotient_exponent(g: &IntegerLattice) -> BigInt {
    let b = g.basis();
    if g.dim() == 1 {
        return b[0][0].clone();
    }
    let minors = b[0][0].gcd(&b[1][1]).gcd(&b[0][1]);
    g.index() / minors
}

fn check_dims(a: &SupergroupDescriptor, b: &SupergroupDescriptor) -> Result<Option<Certificate>, ClassifyError> {
    for x in [a, b] {
        if x.dim() > 2 {
            return Err(ClassifyError::DimensionUnsupported(x.dim()));
        }
    }
    if a.dim() != b.dim() {
        return Ok(Some(Certificate::DimensionMismatch { first: a.dim(), second: b.dim() }));
    }
    Ok(None)
}

/// Exact test of `H_T = H_S`. A negative answer carries a vector of
/// `H_S − H_T` when there is one, otherwise of `H_T − H_S`.
pub fn conjugate_test(t: &SupergroupDescriptor, s: &SupergroupDescriptor) -> Result<ClassificationVerdict, ClassifyError> {
    let relation = Relation::Conjugate;
    if let Some(cert) = check_dims(t, s)? {
        return Ok(ClassificationVerdict { relation, outcome: Outcome::No(cert) });
    }
    let outcome = if let Some(x) = s.escape(t)? {
        Outcome::No(Certificate::NonMember { vector: x, inside: Side::Second })
    } else if let Some(x) = t.escape(s)? {
        Outcome::No(Certificate::NonMember { vector: x, inside: Side::First })
    } else {
        Outcome::Yes(Witness::Matrix(matrix::identity_q(t.dim())))
    };
    Ok(ClassificationVerdict { relation, outcome })
}

/// Conjugacy from chains alone. For ℤ-odometers equal value groups decide it.
/// In rank 2 only depth-N evidence is available: every generator of each
/// stage dual up to `N` is looked up in the other chain's depth-N dual. Neither
/// success nor failure settles equality of the unions, so the verdict is
/// undecided either way.
pub fn conjugate_test_chains(t: &OdometerChain, s: &OdometerChain, n: usize) -> Result<ClassificationVerdict, ClassifyError> {
    let relation = Relation::Conjugate;
    if t.dim() > 2 || s.dim() > 2 {
        return Err(ClassifyError::DimensionUnsupported(t.dim().max(s.dim())));
    }
    if t.dim() != s.dim() {
        let cert = Certificate::DimensionMismatch { first: t.dim(), second: s.dim() };
        return Ok(ClassificationVerdict { relation, outcome: Outcome::No(cert) });
    }
    if t.dim() == 1 {
        let oe = orbit_equivalence_test(t, s)?;
        return Ok(ClassificationVerdict { relation, outcome: oe.outcome });
    }
    Ok(ClassificationVerdict { relation, outcome: Outcome::UndecidedToDepth(n) })
}

const NAMES: [&str; 4] = ["a", "b", "c", "d"];

/// Integer solutions of `C·z = 0`, by unimodular column reduction.
pub fn integer_kernel(rows: &[IVec], n: usize) -> Vec<IVec> {
    let mut a: Vec<IVec> = rows.to_vec();
    let mut u: Vec<IVec> = (0..n).map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect();
    // Column k of `u` is stored as u[k].
    let col_op = |a: &mut Vec<IVec>, u: &mut Vec<IVec>, i: usize, j: usize, s: &BigInt, t: &BigInt, p: &BigInt, q: &BigInt| {
        // (col_i, col_j) <- (s·col_i + t·col_j, p·col_i + q·col_j)
        for row in a.iter_mut() {
            let (x, y) = (row[i].clone(), row[j].clone());
            row[i] = s * &x + t * &y;
            row[j] = p * &x + q * &y;
        }
        let (x, y) = (u[i].clone(), u[j].clone());
        u[i] = x.iter().zip(&y).map(|(xi, yi)| s * xi + t * yi).collect();
        u[j] = x.iter().zip(&y).map(|(xi, yi)| p * xi + q * yi).collect();
    };
    let mut pivot = 0;
    for r in 0..a.len() {
        if pivot == n {
            break;
        }
        for k in pivot + 1..n {
            if a[r][k].is_zero() {
                continue;
            }
            let (x, y) = (a[r][pivot].clone(), a[r][k].clone());
            let eg = x.extended_gcd(&y);
            let (xg, yg) = (&x / &eg.gcd, &y / &eg.gcd);
            col_op(&mut a, &mut u, pivot, k, &eg.x, &eg.y, &-yg, &xg);
        }
        if !a[r][pivot].is_zero() {
            pivot += 1;
        }
    }
    let mut hb = HermiteBuilder::new(n);
    for v in &u[pivot..] {
        hb.insert(v);
    }
    hb.basis_vectors()
}

fn linear_name(coeffs: &[BigInt], names: &[String]) -> String {
    let mut s = String::new();
    for (c, name) in coeffs.iter().zip(names) {
        if c.is_zero() {
            continue;
        }
        let sign = if c.is_negative() { "-" } else if s.is_empty() { "" } else { "+" };
        let mag = c.abs();
        let coeff = if mag.is_one() { String::new() } else { mag.to_string() };
        s.push_str(&format!("{sign}{coeff}{name}"));
    }
    if s.is_empty() {
        "0".into()
    } else {
        s
    }
}

/// The linear system and determinant form shared by the isomorphism and
/// continuous orbit equivalence tests in rank 2.
struct Constraints {
    display: Vec<String>,
    kernel: Vec<IVec>,
    names: Vec<String>,
    /// Coefficient of `t_k·t_l` (k ≤ l) in `det(Σ t_k K_k)`.
    form: Vec<(usize, usize, BigInt)>,
    content: BigInt,
}

impl Constraints {
    /// `α(H_A) = H_B` forces `(L_B α L_A^{-1})_{ri} = 0` when `P^A_i ⊄ P^B_r`, and
    /// the same for `L_A adj(α) L_B^{-1}` with the roles swapped.
    fn derive(a: &SupergroupDescriptor, b: &SupergroupDescriptor) -> Self {
        let adj_sign: [(usize, i64); 4] = [(3, 1), (1, -1), (2, -1), (0, 1)];
        let mut rows: Vec<IVec> = Vec::new();
        let mut display = Vec::new();
        let push = |coef: Vec<BigRational>, rows: &mut Vec<IVec>, display: &mut Vec<String>| {
            let den = matrix::common_denominator(coef.iter());
            let ints: IVec = coef.iter().map(|q| (q * BigRational::from_integer(den.clone())).to_integer()).collect();
            if matrix::is_zero(&ints) {
                return;
            }
            let g = matrix::content(&ints);
            let mut ints: IVec = ints.iter().map(|x| x / &g).collect();
            if ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) {
                ints = matrix::neg(&ints);
            }
            if !rows.contains(&ints) {
                let names: Vec<String> = NAMES.iter().map(|s| s.to_string()).collect();
                display.push(format!("{} = 0", linear_name(&ints, &names)));
                rows.push(ints);
            }
        };
        for (l_out, inv_in, p_in, p_out, adjugate) in [
            (&b.shear, &a.inverse, &a.supports, &b.supports, false),
            (&a.shear, &b.inverse, &b.supports, &a.supports, true),
        ] {
            for r in 0..2 {
                for i in 0..2 {
                    if p_in[i].is_subset(&p_out[r]) {
                        continue;
                    }
                    let mut coef = vec![BigRational::zero(); 4];
                    for s in 0..2 {
                        for t in 0..2 {
                            let w = &l_out[r][s] * &inv_in[t][i];
                            let (var, sign) = if adjugate { adj_sign[2 * s + t] } else { (2 * s + t, 1) };
                            coef[var] += w * BigRational::from_integer(BigInt::from(sign));
                        }
                    }
                    push(coef, &mut rows, &mut display);
                }
            }
        }
        let kernel = integer_kernel(&rows, 4);
        let names = kernel
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let last = v.iter().rposition(|x| !x.is_zero()).expect("kernel vectors are nonzero");
                if v[last].is_one() {
                    NAMES[last].to_string()
                } else {
                    format!("t{}", k + 1)
                }
            })
            .collect();
        let det2 = |x: &IVec, y: &IVec| &x[0] * &y[3] - &x[1] * &y[2];
        let mut form = Vec::new();
        for k in 0..kernel.len() {
            for l in k..kernel.len() {
                let c = if k == l { det2(&kernel[k], &kernel[k]) } else { det2(&kernel[k], &kernel[l]) + det2(&kernel[l], &kernel[k]) };
                form.push((k, l, c));
            }
        }
        let content = matrix::content(form.iter().map(|f| &f.2));
        Constraints { display, kernel, names, form, content }
    }

    fn determinant_display(&self) -> String {
        let mut s = String::new();
        for (k, l, c) in &self.form {
            if c.is_zero() {
                continue;
            }
            let sign = if c.is_negative() { "-" } else if s.is_empty() { "" } else { "+" };
            let mag = c.abs();
            let coeff = if mag.is_one() { String::new() } else { mag.to_string() };
            let vars = if k == l { format!("{}^2", self.names[*k]) } else { format!("{}{}", self.names[*k], self.names[*l]) };
            s.push_str(&format!("{sign}{coeff}{vars}"));
        }
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    }

    fn certificate(&self) -> Certificate {
        Certificate::DeterminantContent {
            constraints: self.display.clone(),
            parametrization: self
                .names
                .iter()
                .zip(&self.kernel)
                .map(|(n, v)| (n.clone(), vec![vec![v[0].clone(), v[1].clone()], vec![v[2].clone(), v[3].clone()]]))
                .collect(),
            determinant: self.determinant_display(),
            content: self.content.clone(),
        }
    }

    fn matrix_at(&self, t: &[BigInt]) -> IMat {
        let mut z = vec![BigInt::zero(); 4];
        for (tk, v) in t.iter().zip(&self.kernel) {
            for (zi, vi) in z.iter_mut().zip(v) {
                *zi += tk * vi;
            }
        }
        vec![vec![z[0].clone(), z[1].clone()], vec![z[2].clone(), z[3].clone()]]
    }
}

/// Parameter vectors of sup-norm exactly `h`, lexicographic in the value order
/// `0, 1, -1, 2, -2, …`.
fn parameters_at_height(r: usize, h: i64) -> Vec<IVec> {
    let values: Vec<i64> = std::iter::once(0).chain((1..=h).flat_map(|k| [k, -k])).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; r];
    loop {
        let t: Vec<i64> = idx.iter().map(|&i| values[i]).collect();
        if t.iter().map(|x| x.abs()).max().unwrap_or(0) == h {
            out.push(matrix::ivec(&t));
        }
        let mut k = r;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < values.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `α(H_A) = H_B` by the exact subset test in both directions, and again
/// by direct membership of generators up to `p^{-3}`.
pub fn verify_alpha(a: &SupergroupDescriptor, b: &SupergroupDescriptor, alpha: &QMat) -> Result<bool, ClassifyError> {
    let Some(inv) = matrix::qinverse(alpha) else { return Ok(false) };
    if !a.image(alpha)?.same_group(b)? {
        return Ok(false);
    }
    for x in a.generators(3) {
        if !b.member(&matrix::qmul_vec(alpha, &x))? {
            return Ok(false);
        }
    }
    for y in b.generators(3) {
        if !a.member(&matrix::qmul_vec(&inv, &y))? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn rank_one_equality(relation: Relation, t: &SupergroupDescriptor, s: &SupergroupDescriptor) -> Result<ClassificationVerdict, ClassifyError> {
    // In rank 1, α = ±1 and −H = H.
    let mut v = conjugate_test(t, s)?;
    v.relation = relation;
    Ok(v)
}

/// Integer `α` with `det α = ±1` and `α(H_T) = H_S`.
pub fn isomorphism_test(t: &SupergroupDescriptor, s: &SupergroupDescriptor, height: u32) -> Result<ClassificationVerdict, ClassifyError> {
    let relation = Relation::Isomorphic;
    if let Some(cert) = check_dims(t, s)? {
        return Ok(ClassificationVerdict { relation, outcome: Outcome::No(cert) });
    }
    if t.dim() == 1 {
        return rank_one_equality(relation, t, s);
    }
    let c = Constraints::derive(t, s);
    if c.content != BigInt::one() {
        return Ok(ClassificationVerdict { relation, outcome: Outcome::No(c.certificate()) });
    }
    for h in 0..=height as i64 {
        for params in parameters_at_height(c.kernel.len(), h) {
            let m = c.matrix_at(&params);
            if matrix::idet(&m).abs().is_one() {
                let alpha = matrix::to_qmat(&m);
                if verify_alpha(t, s, &alpha)? {
                    return Ok(ClassificationVerdict { relation, outcome: Outcome::Yes(Witness::Matrix(alpha)) });
                }
            }
        }
    }
    Ok(ClassificationVerdict { relation, outcome: Outcome::UndecidedToDepth(height as usize) })
}

/// Rational `α = A/D` with `det α = ±1` and `α(H_T) = H_S`, for `D ≤ denom`.
pub fn continuous_oe_test(
    t: &SupergroupDescriptor,
    s: &SupergroupDescriptor,
    height: u32,
    denom: u32,
) -> Result<ClassificationVerdict, ClassifyError> {
    let relation = Relation::ContinuouslyOE;
    if let Some(cert) = check_dims(t, s)? {
        return Ok(ClassificationVerdict { relation, outcome: Outcome::No(cert) });
    }
    if t.dim() == 1 {
        return rank_one_equality(relation, t, s);
    }
    let c = Constraints::derive(t, s);
    if c.content.is_zero() {
        return Ok(ClassificationVerdict { relation, outcome: Outcome::No(c.certificate()) });
    }
    for d in 1..=denom.max(1) {
        let d2 = BigInt::from(d) * BigInt::from(d);
        for h in 0..=height as i64 {
            for params in parameters_at_height(c.kernel.len(), h) {
                let m = c.matrix_at(&params);
                if matrix::idet(&m).abs() != d2 {
                    continue;
                }
                let dq = BigRational::from_integer(BigInt::from(d));
                let alpha: QMat = matrix::to_qmat(&m).into_iter().map(|r| r.into_iter().map(|x| x / &dq).collect()).collect();
                if verify_alpha(t, s, &alpha)? {
                    return Ok(ClassificationVerdict { relation, outcome: Outcome::Yes(Witness::Matrix(alpha)) });
                }
            }
        }
    }
    Ok(ClassificationVerdict { relation, outcome: Outcome::UndecidedToDepth(height as usize) })
}

/// Equality of clopen value groups.
pub fn orbit_equivalence_test(t: &OdometerChain, s: &OdometerChain) -> Result<ClassificationVerdict, ClassifyError> {
    let relation = Relation::OrbitEquivalent;
    let (gt, gs) = (t.clopen_value_group()?, s.clopen_value_group()?);
    let outcome = match gt.separating_element(&gs) {
        None if gt.exact && gs.exact => Outcome::Yes(Witness::ValueGroup(gt)),
        None => Outcome::UndecidedToDepth(0),
        Some(q) => Outcome::No(Certificate::ValueGroups { inside: if gt.contains(&q) { Side::First } else { Side::Second }, element: q }),
    };
    Ok(ClassificationVerdict { relation, outcome })
}

/// Bounds used by [`classify_all`].
#[derive(Debug, Clone, Copy)]
pub struct SearchBounds {
    pub height: u32,
    pub denom: u32,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { height: 3, denom: 2 }
    }
}

/// All four verdicts for one pair, strongest relation first.
pub fn classify_all(
    (dt, ct): (&SupergroupDescriptor, &OdometerChain),
    (ds, cs): (&SupergroupDescriptor, &OdometerChain),
    bounds: SearchBounds,
) -> Result<[ClassificationVerdict; 4], ClassifyError> {
    Ok([
        conjugate_test(dt, ds)?,
        isomorphism_test(dt, ds, bounds.height)?,
        continuous_oe_test(dt, ds, bounds.height, bounds.denom)?,
        orbit_equivalence_test(ct, cs)?,
    ])
}

/// First pair `(stronger, weaker)` with a yes for the stronger relation and a
/// no for the weaker one.
pub fn implication_violation(verdicts: &[ClassificationVerdict; 4]) -> Option<(Relation, Relation)> {
    for i in 0..4 {
        for j in i + 1..4 {
            if verdicts[i].is_yes() && verdicts[j].is_no() {
                return Some((verdicts[i].relation, verdicts[j].relation));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{imat, ivec, qvec, rat};
    use crate::speedup::PiecewiseCocycle;
    use std::sync::Arc;

    fn sigma32() -> SupergroupDescriptor {
        SupergroupDescriptor::from_primes(&[&[3], &[2]]).unwrap()
    }

    fn h_s() -> SupergroupDescriptor {
        let shear = vec![vec![rat(1, 1), rat(0, 1)], vec![rat(-1, 2), rat(1, 1)]];
        SupergroupDescriptor::new(shear, sigma32().supports().to_vec()).unwrap()
    }

    fn derived_54() -> OdometerChain {
        let src = Arc::new(OdometerChain::diagonal_power(&[3, 2], &[1, 1]).unwrap());
        let c = PiecewiseCocycle::from_fn(src, 1, 2, |i, rep| match i {
            0 => ivec(&[1, 0]),
            _ if rep[1].is_zero() => ivec(&[0, 1]),
            _ => ivec(&[1, 1]),
        })
        .unwrap();
        OdometerChain::derived(Arc::new(c))
    }

    #[test]
    fn membership_examples() {
        let x = qvec(&[(1, 3), (1, 6)]);
        assert!(h_s().member(&x).unwrap());
        assert!(!sigma32().member(&x).unwrap());
        assert!(h_s().member(&qvec(&[(0, 1), (0, 1)])).unwrap());
        assert!(sigma32().member(&qvec(&[(0, 1)])).is_err());
    }

    #[test]
    fn descriptor_rejects_groups_missing_the_integers() {
        let shear = vec![vec![rat(1, 1), rat(0, 1)], vec![rat(-1, 3), rat(1, 1)]];
        assert!(SupergroupDescriptor::new(shear, sigma32().supports().to_vec()).is_err());
    }

    #[test]
    fn escape_finds_the_witness_vector() {
        assert_eq!(h_s().escape(&sigma32()).unwrap(), Some(qvec(&[(1, 3), (1, 6)])));
        let back = sigma32().escape(&h_s()).unwrap().unwrap();
        assert!(sigma32().member(&back).unwrap() && !h_s().member(&back).unwrap());
        assert_eq!(sigma32().escape(&sigma32()).unwrap(), None);
    }

    #[test]
    fn escape_matches_brute_force() {
        // Members of the form (u/3^i, v/(2^k 3^l)) with small numerators.
        let descs = [sigma32(), h_s(), SupergroupDescriptor::from_primes(&[&[2], &[2]]).unwrap(), SupergroupDescriptor::from_primes(&[&[2], &[3]]).unwrap()];
        for a in &descs {
            for b in &descs {
                let mut brute = true;
                'outer: for den1 in [1, 2, 3, 4, 9, 6, 8, 27] {
                    for den2 in [1, 2, 3, 4, 9, 6, 8, 27] {
                        for u in -3..=3 {
                            for v in -3..=3 {
                                let x = qvec(&[(u, den1), (v, den2)]);
                                if a.member(&x).unwrap() && !b.member(&x).unwrap() {
                                    brute = false;
                                    break 'outer;
                                }
                            }
                        }
                    }
                }
                assert_eq!(a.is_subgroup_of(b).unwrap(), brute, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn fits() {
        let f = fit_descriptor(&OdometerChain::diagonal_power(&[3, 2], &[1, 1]).unwrap(), 3).unwrap().unwrap();
        assert!(f.exact);
        assert!(f.descriptor.same_group(&sigma32()).unwrap());
        let g = fit_descriptor(&OdometerChain::diagonal_power(&[2, 2], &[1, 1]).unwrap(), 3).unwrap().unwrap();
        assert_eq!(g.descriptor.to_string(), "dim=2 shear=1,0,0,1 supports=2|2");
        let h = fit_descriptor(&derived_54(), 5).unwrap().unwrap();
        assert!(!h.exact);
        assert_eq!(h.descriptor, h_s());
        let chain = derived_54();
        for j in 1..=5 {
            for col in chain.cohomology_stage(j).unwrap().columns() {
                assert!(h.descriptor.member(&col).unwrap());
            }
        }
    }

    #[test]
    fn explicit_chain_fit_is_its_last_dual() {
        let g = IntegerLattice::hnf(&imat(&[&[3, 2], &[0, 2]])).unwrap();
        let chain = OdometerChain::explicit(vec![g.clone()]).unwrap();
        let f = fit_descriptor(&chain, 2).unwrap().unwrap();
        for col in g.dual().columns() {
            assert!(f.descriptor.member(&col).unwrap());
        }
        assert!(!f.descriptor.member(&qvec(&[(1, 9), (0, 1)])).unwrap());
        assert_eq!(f.descriptor.truncation(&BigInt::from(36)).unwrap(), g.dual());
    }

    #[test]
    fn conjugacy_examples() {
        let v = conjugate_test(&sigma32(), &h_s()).unwrap();
        assert_eq!(v.outcome, Outcome::No(Certificate::NonMember { vector: qvec(&[(1, 3), (1, 6)]), inside: Side::Second }));
        assert!(conjugate_test(&h_s(), &h_s()).unwrap().is_yes());
    }

    #[test]
    fn isomorphism_examples() {
        let v = isomorphism_test(&sigma32(), &h_s(), 4).unwrap();
        match v.outcome {
            Outcome::No(Certificate::DeterminantContent { constraints, determinant, content, .. }) => {
                assert_eq!(content, BigInt::from(2));
                assert_eq!(determinant, "2cd");
                assert!(constraints.contains(&"b = 0".to_string()));
                assert!(constraints.contains(&"a-2c = 0".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(isomorphism_test(&sigma32(), &sigma32(), 1).unwrap().outcome, Outcome::Yes(Witness::Matrix(matrix::identity_q(2))));
        let swapped = SupergroupDescriptor::from_primes(&[&[2], &[3]]).unwrap();
        let v = isomorphism_test(&sigma32(), &swapped, 1).unwrap();
        assert_eq!(v.outcome, Outcome::Yes(Witness::Matrix(matrix::to_qmat(&imat(&[&[0, 1], &[1, 0]])))));
    }

    #[test]
    fn continuous_oe_examples() {
        let v = continuous_oe_test(&sigma32(), &h_s(), 3, 2).unwrap();
        let alpha = vec![vec![rat(1, 1), rat(0, 1)], vec![rat(1, 2), rat(1, 1)]];
        assert_eq!(v.outcome, Outcome::Yes(Witness::Matrix(alpha.clone())));
        assert!(verify_alpha(&sigma32(), &h_s(), &alpha).unwrap());
        assert!(continuous_oe_test(&h_s(), &h_s(), 1, 1).unwrap().is_yes());
        let s22 = SupergroupDescriptor::from_primes(&[&[2], &[2]]).unwrap();
        match continuous_oe_test(&sigma32(), &s22, 3, 3).unwrap().outcome {
            Outcome::No(Certificate::DeterminantContent { content, .. }) => assert!(content.is_zero()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn orbit_equivalence_examples() {
        let c32 = OdometerChain::diagonal_power(&[3, 2], &[1, 1]).unwrap();
        let c6 = OdometerChain::diagonal_power(&[6], &[1]).unwrap();
        let c22 = OdometerChain::diagonal_power(&[2, 2], &[1, 1]).unwrap();
        assert!(orbit_equivalence_test(&c32, &c6).unwrap().is_yes());
        assert!(orbit_equivalence_test(&c32, &c32).unwrap().is_yes());
        let v = orbit_equivalence_test(&c32, &c22).unwrap();
        assert_eq!(v.outcome, Outcome::No(Certificate::ValueGroups { element: rat(1, 3), inside: Side::First }));
    }

    #[test]
    fn rank_one_chains_are_decided_by_value_groups() {
        let a = OdometerChain::diagonal_power(&[6], &[1]).unwrap();
        let b = OdometerChain::diagonal_power(&[36], &[1]).unwrap();
        assert!(conjugate_test_chains(&a, &b, 3).unwrap().is_yes());
        let c = OdometerChain::diagonal_power(&[2], &[1]).unwrap();
        assert!(conjugate_test_chains(&a, &c, 3).unwrap().is_no());
    }

    #[test]
    fn integer_kernel_is_saturated() {
        let k = integer_kernel(&[ivec(&[2, 0, -4, 0])], 4);
        assert_eq!(k.len(), 3);
        let mut hb = HermiteBuilder::new(4);
        for v in &k {
            hb.insert(v);
        }
        assert!(hb.contains(&ivec(&[2, 0, 1, 0])));
        assert!(hb.contains(&ivec(&[0, 1, 0, 0])));
    }

    #[test]
    fn parameter_order() {
        let h1 = parameters_at_height(2, 1);
        assert_eq!(h1[0], ivec(&[0, 1]));
        assert_eq!(h1.len(), 8);
        assert_eq!(parameters_at_height(2, 0), vec![ivec(&[0, 0])]);
    }

    #[test]
    fn reconstruction() {
        // 121 ≡ -1/2 (mod 243)
        assert_eq!(rational_reconstruction(&BigInt::from(121), &BigInt::from(243)), Some(rat(-1, 2)));
        assert_eq!(rational_reconstruction(&BigInt::from(5), &BigInt::from(243)), Some(rat(5, 1)));
    }
}
