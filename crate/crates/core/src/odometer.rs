//! ℤ^d-odometers presented by decreasing chains of finite-index lattices.

use crate::lattice::{CosetSystem, IntegerLattice, LatticeError, RationalLattice};
use crate::matrix::{self, IVec};
use crate::speedup::{PiecewiseCocycle, SpeedupError};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OdometerError {
    #[error("stage {j} is not contained in stage {}: witness {}", .j - 1, matrix::fmt_ivec(.witness))]
    NotNested { j: usize, witness: IVec },
    #[error("stage index must be at least 1, got {0}")]
    BadStage(usize),
    #[error("explicit chain has no stages")]
    EmptyChain,
    #[error("{0}")]
    Lattice(#[from] LatticeError),
    #[error("derived stage: {0}")]
    Speedup(Box<SpeedupError>),
}

impl From<SpeedupError> for OdometerError {
    fn from(e: SpeedupError) -> Self {
        OdometerError::Speedup(Box::new(e))
    }
}

/// Exponent `slope·j + offset` of one coordinate of a diagonal power chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExponentRule {
    pub slope: u32,
    pub offset: u32,
}

impl ExponentRule {
    pub fn linear(slope: u32) -> Self {
        ExponentRule { slope, offset: 0 }
    }

    pub fn at(&self, j: usize) -> u32 {
        self.slope * j as u32 + self.offset
    }
}

impl fmt::Display for ExponentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.slope, self.offset) {
            (0, c) => write!(f, "{c}"),
            (1, 0) => write!(f, "j"),
            (a, 0) => write!(f, "{a}j"),
            (1, c) => write!(f, "j+{c}"),
            (a, c) => write!(f, "{a}j+{c}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ChainProvider {
    /// Listed stages `G_1, …, G_n`; the chain is constant from `G_n` on.
    Explicit(Vec<IntegerLattice>),
    /// `G_j = diag(b_1^{e_1(j)}, …, b_d^{e_d(j)})`.
    DiagonalPower { bases: Vec<BigInt>, exponents: Vec<ExponentRule> },
    /// Stabilizer chain of a bounded speedup. Stage `j` is the stabilizer of the
    /// base cylinder at source depth `j + J − 1`.
    Derived(Arc<PiecewiseCocycle>),
}

/// A decreasing chain of finite-index sublattices with lazily realized stages.
pub struct OdometerChain {
    dim: usize,
    provider: ChainProvider,
    cache: RwLock<Vec<IntegerLattice>>,
}

impl fmt::Debug for OdometerChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdometerChain").field("dim", &self.dim).field("provider", &self.provider).finish()
    }
}

impl OdometerChain {
    pub fn new(provider: ChainProvider) -> Result<Self, OdometerError> {
        let dim = match &provider {
            ChainProvider::Explicit(ls) => ls.first().ok_or(OdometerError::EmptyChain)?.dim(),
            ChainProvider::DiagonalPower { bases, exponents } => {
                if bases.len() != exponents.len() {
                    return Err(LatticeError::DimensionMismatch { expected: bases.len(), found: exponents.len() }.into());
                }
                if bases.iter().any(|b| !b.is_positive()) {
                    return Err(LatticeError::SingularBasis.into());
                }
                bases.len()
            }
            ChainProvider::Derived(c) => c.target_rank(),
        };
        Ok(OdometerChain { dim, provider, cache: RwLock::new(Vec::new()) })
    }

    pub fn diagonal_power(bases: &[i64], slopes: &[u32]) -> Result<Self, OdometerError> {
        Self::new(ChainProvider::DiagonalPower {
            bases: bases.iter().map(|&b| BigInt::from(b)).collect(),
            exponents: slopes.iter().map(|&a| ExponentRule::linear(a)).collect(),
        })
    }

    pub fn explicit(stages: Vec<IntegerLattice>) -> Result<Self, OdometerError> {
        Self::new(ChainProvider::Explicit(stages))
    }

    pub fn derived(cocycle: Arc<PiecewiseCocycle>) -> Self {
        Self::new(ChainProvider::Derived(cocycle)).expect("derived chains always have a dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider(&self) -> &ChainProvider {
        &self.provider
    }

    fn compute(&self, j: usize) -> Result<IntegerLattice, OdometerError> {
        match &self.provider {
            ChainProvider::Explicit(ls) => Ok(ls[(j - 1).min(ls.len() - 1)].clone()),
            ChainProvider::DiagonalPower { bases, exponents } => {
                let diag: IVec = bases.iter().zip(exponents).map(|(b, e)| b.pow(e.at(j))).collect();
                Ok(IntegerLattice::diagonal(&diag)?)
            }
            ChainProvider::Derived(c) => Ok(c.stabilizer(j + c.depth() - 1)?.lattice),
        }
    }

    /// `G_j`; `G_0` is `ℤ^d`.
    pub fn stage(&self, j: usize) -> Result<IntegerLattice, OdometerError> {
        if j == 0 {
            return Ok(IntegerLattice::standard(self.dim));
        }
        {
            let cache = self.cache.read().expect("stage cache poisoned");
            if let Some(l) = cache.get(j - 1) {
                return Ok(l.clone());
            }
        }
        let mut cache = self.cache.write().expect("stage cache poisoned");
        while cache.len() < j {
            let next = cache.len() + 1;
            let l = self.compute(next)?;
            let prev = cache.last().cloned().unwrap_or_else(|| IntegerLattice::standard(self.dim));
            if let Some(witness) = l.columns().into_iter().find(|c| !prev.contains(c).unwrap_or(false)) {
                return Err(OdometerError::NotNested { j: next, witness });
            }
            cache.push(l);
        }
        Ok(cache[j - 1].clone())
    }

    pub fn index(&self, j: usize) -> Result<BigInt, OdometerError> {
        Ok(self.stage(j)?.index())
    }

    pub fn cosets(&self, j: usize) -> Result<CosetSystem, OdometerError> {
        Ok(self.stage(j)?.coset_system())
    }

    pub fn kr_partition(&self, j: usize) -> Result<KrPartition, OdometerError> {
        let cosets = self.cosets(j)?;
        let atom_measure = BigRational::new(BigInt::one(), cosets.index());
        Ok(KrPartition { stage: j, cosets, atom_measure })
    }

    pub fn act(&self, x: &TruncatedPoint, v: &[BigInt]) -> Result<TruncatedPoint, OdometerError> {
        if v.len() != self.dim {
            return Err(LatticeError::DimensionMismatch { expected: self.dim, found: v.len() }.into());
        }
        let coords = x
            .coords
            .iter()
            .enumerate()
            .map(|(i, c)| Ok(self.stage(i + 1)?.reduce(&matrix::add(c, v))))
            .collect::<Result<_, OdometerError>>()?;
        Ok(TruncatedPoint { coords })
    }

    /// Depth-N shadow of `∩ G_j`. Nested chains make the intersection `G_N`.
    pub fn freeness_evidence(&self, n: usize, bound: Option<&BigInt>) -> Result<FreenessReport, OdometerError> {
        let n = n.max(1);
        let indices = (1..=n).map(|j| self.index(j)).collect::<Result<Vec<_>, _>>()?;
        let intersection = self.stage(n)?;
        let shortest = shortest_vector(&intersection);
        let norm2 = matrix::norm2(&shortest);
        let exceeds_bound = bound.map(|b| norm2 > b * b);
        let certified_free = match &self.provider {
            ChainProvider::DiagonalPower { bases, exponents } => {
                bases.iter().zip(exponents).all(|(b, e)| *b > BigInt::one() && e.slope > 0)
            }
            _ => false,
        };
        let certified_not_free = matches!(self.provider, ChainProvider::Explicit(_));
        Ok(FreenessReport { depth: n, intersection, indices, shortest, exceeds_bound, certified_free, certified_not_free })
    }

    pub fn cohomology_stage(&self, j: usize) -> Result<RationalLattice, OdometerError> {
        Ok(self.stage(j)?.dual())
    }

    /// The subgroup of ℚ generated by `1/[ℤ^d : G_j]`, as prime exponent suprema.
    pub fn clopen_value_group(&self) -> Result<ValueGroup, OdometerError> {
        match &self.provider {
            ChainProvider::DiagonalPower { bases, exponents } => {
                let mut map: BTreeMap<BigInt, Exponent> = BTreeMap::new();
                for (b, e) in bases.iter().zip(exponents) {
                    for (p, k) in factorize(b) {
                        let entry = map.entry(p).or_insert(Exponent::Finite(0));
                        *entry = match (*entry, e.slope) {
                            (Exponent::Infinite, _) => Exponent::Infinite,
                            (Exponent::Finite(_), s) if s > 0 => Exponent::Infinite,
                            (Exponent::Finite(x), _) => Exponent::Finite(x + k * e.offset as u64),
                        };
                    }
                }
                map.retain(|_, e| *e != Exponent::Finite(0));
                Ok(ValueGroup { exponents: map, exact: true })
            }
            ChainProvider::Explicit(ls) => {
                let mut vg = ValueGroup::integers();
                for l in ls {
                    vg = vg.join_reciprocal(&l.index());
                }
                Ok(vg)
            }
            // A speedup keeps the invariant measure and the clopen sets of its
            // source, so the derived odometer of a minimal speedup has the same
            // clopen values as the source chain.
            ChainProvider::Derived(c) => c.source().clopen_value_group(),
        }
    }

    /// Sufficient-only product check: stages `1..=N` all have diagonal HNF.
    pub fn is_product_type_stagewise(&self, n: usize) -> Result<bool, OdometerError> {
        for j in 1..=n {
            if !self.stage(j)?.is_diagonal() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Measure `2/[ℤ:G_j]` of the base plus top of the depth-j partition of a ℤ-odometer.
    pub fn boundary_measure(&self, j: usize) -> Result<BigRational, OdometerError> {
        let idx = self.index(j)?;
        if idx.is_one() {
            return Ok(BigRational::one());
        }
        Ok(BigRational::new(BigInt::from(2), idx))
    }
}

/// Shortest nonzero vector by exhaustive search in the box bounded by the
/// shortest basis column. Sign is fixed so the first nonzero entry is positive;
/// ties break lexicographically.
pub fn shortest_vector(l: &IntegerLattice) -> IVec {
    let bound2 = l.columns().iter().map(|c| matrix::norm2(c)).min().expect("nonempty basis");
    let radius = bound2.sqrt() + BigInt::one();
    let zero = vec![BigInt::zero(); l.dim()];
    let mut best: Option<(BigInt, IVec)> = None;
    for v in l.points_in_box(&zero, &radius) {
        if matrix::is_zero(&v) {
            continue;
        }
        let first = v.iter().find(|x| !x.is_zero()).expect("nonzero");
        if first.is_negative() {
            continue;
        }
        let n = matrix::norm2(&v);
        let better = match &best {
            None => true,
            Some((bn, bv)) => n < *bn || (n == *bn && v < *bv),
        };
        if better {
            best = Some((n, v));
        }
    }
    best.expect("the shortest column lies in the box").1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreenessReport {
    pub depth: usize,
    pub intersection: IntegerLattice,
    pub indices: Vec<BigInt>,
    pub shortest: IVec,
    pub exceeds_bound: Option<bool>,
    /// Diagonal power chains with growing exponents are free.
    pub certified_free: bool,
    /// Explicit chains are eventually constant, hence never free.
    pub certified_not_free: bool,
}

/// Atoms `B(j, v)` of the depth-j partition, one per coset representative.
#[derive(Debug, Clone)]
pub struct KrPartition {
    pub stage: usize,
    pub cosets: CosetSystem,
    pub atom_measure: BigRational,
}

impl KrPartition {
    pub fn atom_count(&self) -> BigInt {
        self.cosets.index()
    }

    pub fn total_measure(&self) -> BigRational {
        &self.atom_measure * BigRational::from_integer(self.atom_count())
    }
}

/// A point of the inverse limit known to depth `N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TruncatedPoint {
    coords: Vec<IVec>,
}

impl TruncatedPoint {
    /// Image of an integer vector, truncated at depth `n`.
    pub fn from_vector(chain: &OdometerChain, v: &[BigInt], n: usize) -> Result<Self, OdometerError> {
        let coords = (1..=n).map(|j| Ok(chain.stage(j)?.reduce(v))).collect::<Result<_, OdometerError>>()?;
        Ok(TruncatedPoint { coords })
    }

    pub fn zero(chain: &OdometerChain, n: usize) -> Self {
        TruncatedPoint { coords: vec![vec![BigInt::zero(); chain.dim()]; n] }
    }

    pub fn depth(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[IVec] {
        &self.coords
    }

    /// Coordinate `j` (1-based), the coset of `G_j` containing the point.
    pub fn at(&self, j: usize) -> &IVec {
        &self.coords[j - 1]
    }

    pub fn is_compatible(&self, chain: &OdometerChain) -> Result<bool, OdometerError> {
        for j in 1..self.coords.len() {
            if chain.stage(j)?.reduce(&self.coords[j]) != self.coords[j - 1] {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Exponent {
    Finite(u64),
    Infinite,
}

/// Subgroup of ℚ containing ℤ, described by the largest power of each prime
/// allowed in a denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueGroup {
    pub exponents: BTreeMap<BigInt, Exponent>,
    /// False when the map was read off finitely many stages of an infinite chain.
    pub exact: bool,
}

impl ValueGroup {
    pub fn integers() -> Self {
        ValueGroup { exponents: BTreeMap::new(), exact: true }
    }

    /// Join with the cyclic group generated by `1/n`.
    pub fn join_reciprocal(mut self, n: &BigInt) -> Self {
        for (p, k) in factorize(n) {
            let e = self.exponents.entry(p).or_insert(Exponent::Finite(0));
            if let Exponent::Finite(x) = *e {
                *e = Exponent::Finite(x.max(k));
            }
        }
        self
    }

    pub fn contains(&self, q: &BigRational) -> bool {
        factorize(q.denom()).into_iter().all(|(p, k)| match self.exponents.get(&p) {
            Some(Exponent::Infinite) => true,
            Some(Exponent::Finite(e)) => k <= *e,
            None => false,
        })
    }

    /// A rational in exactly one of the two groups, if they differ.
    pub fn separating_element(&self, other: &ValueGroup) -> Option<BigRational> {
        let primes: std::collections::BTreeSet<&BigInt> = self.exponents.keys().chain(other.exponents.keys()).collect();
        for p in primes {
            let a = self.exponents.get(p).copied().unwrap_or(Exponent::Finite(0));
            let b = other.exponents.get(p).copied().unwrap_or(Exponent::Finite(0));
            if a != b {
                let lower = match a.min(b) {
                    Exponent::Finite(e) => e,
                    Exponent::Infinite => unreachable!("distinct exponents have a finite minimum"),
                };
                return Some(BigRational::new(BigInt::one(), p.pow(lower as u32 + 1)));
            }
        }
        None
    }
}

impl fmt::Display for ValueGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "Z");
        }
        if self.exponents.values().all(|e| *e == Exponent::Infinite) {
            let n: BigInt = self.exponents.keys().product();
            return write!(f, "Z[1/{n}]");
        }
        let parts: Vec<String> = self
            .exponents
            .iter()
            .map(|(p, e)| match e {
                Exponent::Infinite => format!("{p}^inf"),
                Exponent::Finite(k) => format!("{p}^{k}"),
            })
            .collect();
        write!(f, "Z<{}>", parts.join(","))
    }
}

/// Prime factorization by trial division; inputs here are products of small primes.
pub fn factorize(n: &BigInt) -> Vec<(BigInt, u64)> {
    let mut n = n.abs();
    let mut out = Vec::new();
    let mut p = BigInt::from(2);
    while &p * &p <= n {
        let mut k = 0;
        while (&n % &p).is_zero() {
            n /= &p;
            k += 1;
        }
        if k > 0 {
            out.push((p.clone(), k));
        }
        p += if p == BigInt::from(2) { BigInt::one() } else { BigInt::from(2) };
    }
    if n > BigInt::one() {
        out.push((n, 1));
    }
    out
}

/// `p`-adic valuation of a nonzero integer.
pub fn valuation(n: &BigInt, p: &BigInt) -> u64 {
    let mut n = n.clone();
    let mut k = 0;
    while !n.is_zero() && n.is_multiple_of(p) {
        n /= p;
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{imat, int, ivec, rat};

    fn six() -> OdometerChain {
        OdometerChain::diagonal_power(&[3, 2], &[1, 1]).unwrap()
    }

    #[test]
    fn diagonal_power_stages() {
        let c = six();
        assert_eq!(c.stage(2).unwrap(), IntegerLattice::diagonal(&ivec(&[9, 4])).unwrap());
        assert_eq!(c.index(3).unwrap(), int(216));
        assert_eq!(c.stage(0).unwrap(), IntegerLattice::standard(2));
    }

    #[test]
    fn explicit_chain_is_constant_after_its_list() {
        let c = OdometerChain::explicit(vec![IntegerLattice::standard(2)]).unwrap();
        assert_eq!(c.stage(1).unwrap(), IntegerLattice::standard(2));
        assert_eq!(c.stage(5).unwrap(), IntegerLattice::standard(2));
    }

    #[test]
    fn nesting_violation_is_reported() {
        let a = IntegerLattice::diagonal(&ivec(&[2, 1])).unwrap();
        let b = IntegerLattice::diagonal(&ivec(&[3, 1])).unwrap();
        let c = OdometerChain::explicit(vec![a, b]).unwrap();
        assert!(c.stage(1).is_ok());
        assert_eq!(c.stage(2), Err(OdometerError::NotNested { j: 2, witness: ivec(&[3, 0]) }));
    }

    #[test]
    fn act_reduces_coordinatewise() {
        let c = six();
        let x = TruncatedPoint::zero(&c, 2);
        let y = c.act(&x, &ivec(&[3, 2])).unwrap();
        assert_eq!(y.coords(), &[ivec(&[0, 0]), ivec(&[3, 2])]);
        assert_eq!(c.act(&x, &ivec(&[0, 0])).unwrap(), x);
        let z = c.act(&TruncatedPoint::zero(&c, 1), &ivec(&[1, 1])).unwrap();
        assert_eq!(z.at(1), &ivec(&[1, 1]));
        assert!(y.is_compatible(&c).unwrap());
    }

    #[test]
    fn kr_partition_measures() {
        let p = six().kr_partition(1).unwrap();
        assert_eq!(p.atom_count(), int(6));
        assert_eq!(p.cosets.rectangle(), &ivec(&[3, 2]));
        assert_eq!(p.atom_measure, rat(1, 6));
        assert_eq!(p.total_measure(), rat(1, 1));
    }

    #[test]
    fn freeness_evidence_examples() {
        let r = six().freeness_evidence(5, None).unwrap();
        assert_eq!(r.intersection, IntegerLattice::diagonal(&ivec(&[243, 32])).unwrap());
        assert_eq!(r.shortest, ivec(&[0, 32]));
        assert!(r.certified_free);
        let two = OdometerChain::diagonal_power(&[2, 2], &[1, 1]).unwrap();
        assert_eq!(two.freeness_evidence(4, None).unwrap().intersection, IntegerLattice::diagonal(&ivec(&[16, 16])).unwrap());
        let constant = OdometerChain::explicit(vec![IntegerLattice::diagonal(&ivec(&[2, 2])).unwrap()]).unwrap();
        let r = constant.freeness_evidence(7, Some(&int(10))).unwrap();
        assert!(r.certified_not_free);
        assert_eq!(r.exceeds_bound, Some(false));
    }

    #[test]
    fn shortest_vector_matches_box_oracle() {
        let l = IntegerLattice::hnf(&imat(&[&[9, 7], &[0, 4]])).unwrap();
        let s = shortest_vector(&l);
        let mut best = None::<i64>;
        for x in -12i64..=12 {
            for y in -12i64..=12 {
                if (x, y) != (0, 0) && l.contains(&ivec(&[x, y])).unwrap() {
                    let n = x * x + y * y;
                    best = Some(best.map_or(n, |b: i64| b.min(n)));
                }
            }
        }
        assert_eq!(matrix::norm2(&s), int(best.unwrap()));
    }

    #[test]
    fn cohomology_stages_increase() {
        let c = six();
        let h1 = c.cohomology_stage(1).unwrap();
        assert_eq!(h1.to_string(), "1/6; 2; 2 0; 0 3");
        assert!(h1.is_sublattice_of(&c.cohomology_stage(2).unwrap()).unwrap());
    }

    #[test]
    fn value_groups() {
        assert_eq!(six().clopen_value_group().unwrap().to_string(), "Z[1/6]");
        let two = OdometerChain::diagonal_power(&[2, 2], &[1, 1]).unwrap().clopen_value_group().unwrap();
        assert_eq!(two.to_string(), "Z[1/2]");
        assert!(two.contains(&rat(1, 2)));
        assert!(!two.contains(&rat(1, 3)));
        let one = OdometerChain::explicit(vec![IntegerLattice::standard(1)]).unwrap();
        assert_eq!(one.clopen_value_group().unwrap().to_string(), "Z");
        assert_eq!(six().clopen_value_group().unwrap().separating_element(&two), Some(rat(1, 3)));
    }

    #[test]
    fn product_type_check() {
        assert!(six().is_product_type_stagewise(6).unwrap());
        let skew = OdometerChain::explicit(vec![IntegerLattice::hnf(&imat(&[&[2, 1], &[0, 2]])).unwrap()]).unwrap();
        assert!(!skew.is_product_type_stagewise(1).unwrap());
    }

    #[test]
    fn boundary_decays_for_z_odometers() {
        let c = OdometerChain::diagonal_power(&[6], &[1]).unwrap();
        let mut last = BigRational::one();
        for j in 1..6 {
            let b = c.boundary_measure(j).unwrap();
            assert!(b <= last);
            last = b;
        }
        assert_eq!(last, rat(2, 7776));
    }

    #[test]
    fn factorization() {
        assert_eq!(factorize(&int(360)), vec![(int(2), 3), (int(3), 2), (int(5), 1)]);
        assert_eq!(valuation(&int(48), &int(2)), 4);
    }
}
