//! Full-rank lattices in ℤ^d and ℚ^d, kept in column Hermite normal form.
//!
//! The canonical basis is upper triangular with a positive diagonal and every
//! entry to the right of a diagonal entry reduced into `[0, diagonal)`. Columns
//! are the generators; `basis[r][c]` is row `r` of column `c`.

use crate::matrix::{self, IMat, IVec, QMat, QVec};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("basis is singular (generators do not span a full-rank lattice)")]
    SingularBasis,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("quotient of index {0} is too large to enumerate")]
    QuotientTooLarge(BigInt),
}

fn check_dim(expected: usize, found: usize) -> Result<(), LatticeError> {
    if expected == found {
        Ok(())
    } else {
        Err(LatticeError::DimensionMismatch { expected, found })
    }
}

/// Incremental Hermite reduction of a generating set. Handles rank-deficient
/// spans, which the stabilizer and kernel computations need along the way.
#[derive(Debug, Clone)]
pub struct HermiteBuilder {
    dim: usize,
    // pivots[i] has its last nonzero entry at row i, and that entry is positive.
    pivots: Vec<Option<IVec>>,
}

impl HermiteBuilder {
    pub fn new(dim: usize) -> Self {
        HermiteBuilder { dim, pivots: vec![None; dim] }
    }

    pub fn rank(&self) -> usize {
        self.pivots.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim
    }

    /// Reduce `v` against the current pivots; returns the remainder.
    fn reduce_against(&self, mut v: IVec) -> IVec {
        for i in (0..self.dim).rev() {
            if v[i].is_zero() {
                continue;
            }
            if let Some(p) = &self.pivots[i] {
                let q = v[i].div_floor(&p[i]);
                if !q.is_zero() {
                    for r in 0..=i {
                        v[r] -= &q * &p[r];
                    }
                }
            }
        }
        v
    }

    /// True if `v` already lies in the span.
    pub fn contains(&self, v: &[BigInt]) -> bool {
        matrix::is_zero(&self.reduce_against(v.to_vec()))
    }

    pub fn insert(&mut self, v: &[BigInt]) {
        assert_eq!(v.len(), self.dim);
        let mut v = self.reduce_against(v.to_vec());
        for i in (0..self.dim).rev() {
            if v[i].is_zero() {
                continue;
            }
            match self.pivots[i].take() {
                None => {
                    if v[i].is_negative() {
                        v = matrix::neg(&v);
                    }
                    self.pivots[i] = Some(v);
                    self.normalize();
                    return;
                }
                Some(p) => {
                    let eg = p[i].extended_gcd(&v[i]);
                    let g = eg.gcd.abs();
                    let (s, t) = if eg.gcd.is_negative() { (-eg.x, -eg.y) } else { (eg.x, eg.y) };
                    let a = &p[i] / &g;
                    let b = &v[i] / &g;
                    let newp: IVec = (0..self.dim).map(|r| &s * &p[r] + &t * &v[r]).collect();
                    let rest: IVec = (0..self.dim).map(|r| &b * &p[r] - &a * &v[r]).collect();
                    self.pivots[i] = Some(newp);
                    v = rest;
                }
            }
        }
        self.normalize();
    }

    fn normalize(&mut self) {
        for c in 0..self.dim {
            let Some(mut col) = self.pivots[c].take() else { continue };
            for r in (0..c).rev() {
                if let Some(p) = &self.pivots[r] {
                    let q = col[r].div_floor(&p[r]);
                    if !q.is_zero() {
                        for k in 0..=r {
                            col[k] -= &q * &p[k];
                        }
                    }
                }
            }
            self.pivots[c] = Some(col);
        }
    }

    /// The reduced basis vectors, ordered by pivot row.
    pub fn basis_vectors(&self) -> Vec<IVec> {
        self.pivots.iter().flatten().cloned().collect()
    }

    pub fn finish(self) -> Result<IntegerLattice, LatticeError> {
        if !self.is_full_rank() {
            return Err(LatticeError::SingularBasis);
        }
        let cols: Vec<IVec> = self.pivots.into_iter().map(Option::unwrap).collect();
        Ok(IntegerLattice { basis: matrix::transpose(&cols) })
    }
}

/// A finite-index subgroup of ℤ^d in canonical column HNF.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntegerLattice {
    basis: IMat,
}

impl IntegerLattice {
    /// Lattice generated by the columns of a square matrix given by rows.
    pub fn hnf(rows: &[IVec]) -> Result<Self, LatticeError> {
        let d = rows.len();
        for r in rows {
            check_dim(d, r.len())?;
        }
        Self::from_generators(d, &matrix::transpose(rows))
    }

    /// Lattice generated by any finite list of vectors; must span full rank.
    pub fn from_generators(dim: usize, gens: &[IVec]) -> Result<Self, LatticeError> {
        let mut b = HermiteBuilder::new(dim);
        for g in gens {
            check_dim(dim, g.len())?;
            b.insert(g);
        }
        b.finish()
    }

    pub fn standard(dim: usize) -> Self {
        Self::diagonal(&vec![BigInt::one(); dim]).expect("identity is nonsingular")
    }

    pub fn diagonal(entries: &[BigInt]) -> Result<Self, LatticeError> {
        let d = entries.len();
        let cols: Vec<IVec> = (0..d)
            .map(|i| (0..d).map(|r| if r == i { entries[i].clone() } else { BigInt::zero() }).collect())
            .collect();
        Self::from_generators(d, &cols)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Basis matrix by rows.
    pub fn basis(&self) -> &IMat {
        &self.basis
    }

    pub fn column(&self, c: usize) -> IVec {
        self.basis.iter().map(|r| r[c].clone()).collect()
    }

    pub fn columns(&self) -> Vec<IVec> {
        (0..self.dim()).map(|c| self.column(c)).collect()
    }

    pub fn diag(&self) -> IVec {
        (0..self.dim()).map(|i| self.basis[i][i].clone()).collect()
    }

    pub fn index(&self) -> BigInt {
        self.diag().iter().product()
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|r| (0..d).all(|c| r == c || self.basis[r][c].is_zero()))
    }

    /// Integer coordinates of `v` in the basis, if `v` lies in the lattice.
    pub fn coordinates(&self, v: &[BigInt]) -> Result<Option<IVec>, LatticeError> {
        let d = self.dim();
        check_dim(d, v.len())?;
        let mut rest = v.to_vec();
        let mut coeff = vec![BigInt::zero(); d];
        for i in (0..d).rev() {
            let (q, r) = rest[i].div_rem(&self.basis[i][i]);
            if !r.is_zero() {
                return Ok(None);
            }
            for k in 0..=i {
                rest[k] -= &q * &self.basis[k][i];
            }
            coeff[i] = q;
        }
        Ok(Some(coeff))
    }

    pub fn contains(&self, v: &[BigInt]) -> Result<bool, LatticeError> {
        Ok(self.coordinates(v)?.is_some())
    }

    pub fn is_sublattice_of(&self, other: &IntegerLattice) -> Result<bool, LatticeError> {
        check_dim(self.dim(), other.dim())?;
        for c in self.columns() {
            if !other.contains(&c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn intersect(&self, other: &IntegerLattice) -> Result<IntegerLattice, LatticeError> {
        let r = RationalLattice::from_integer(self).intersect(&RationalLattice::from_integer(other))?;
        Ok(r.as_integer().expect("intersection of integer lattices is integral"))
    }

    pub fn dual(&self) -> RationalLattice {
        RationalLattice::from_integer(self).dual()
    }

    pub fn coset_system(&self) -> CosetSystem {
        CosetSystem::new(self.clone())
    }

    /// Canonical representative of `v` modulo the lattice, inside the box `[diag)`.
    pub fn reduce(&self, v: &[BigInt]) -> IVec {
        let mut v = v.to_vec();
        for k in (0..self.dim()).rev() {
            let q = v[k].div_floor(&self.basis[k][k]);
            if !q.is_zero() {
                for r in 0..=k {
                    v[r] -= &q * &self.basis[r][k];
                }
            }
        }
        v
    }
}

impl IntegerLattice {
    /// Points of `offset + L` with every coordinate in `[-radius, radius]`.
    pub fn points_in_box(&self, offset: &[BigInt], radius: &BigInt) -> Vec<IVec> {
        let mut out = Vec::new();
        self.box_walk(self.dim(), offset.to_vec(), radius, &mut out);
        out
    }

    fn box_walk(&self, k: usize, x: IVec, radius: &BigInt, out: &mut Vec<IVec>) {
        if k == 0 {
            out.push(x);
            return;
        }
        let k = k - 1;
        let step = &self.basis[k][k];
        let lo = (-radius - &x[k]).div_ceil(step);
        let hi = (radius - &x[k]).div_floor(step);
        let mut z = lo;
        while z <= hi {
            let mut y = x.clone();
            for r in 0..=k {
                y[r] += &z * &self.basis[r][k];
            }
            self.box_walk(k, y, radius, out);
            z += 1;
        }
    }
}

impl fmt::Debug for IntegerLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntegerLattice({self})")
    }
}

/// Lattice literal: `d; row1; row2; ...`.
impl fmt::Display for IntegerLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.dim())?;
        for row in &self.basis {
            let parts: Vec<String> = row.iter().map(ToString::to_string).collect();
            write!(f, "; {}", parts.join(" "))?;
        }
        Ok(())
    }
}

/// `(1/s)·M·ℤ^d` with `M` in HNF and `s` minimal.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RationalLattice {
    denominator: BigInt,
    numerator: IntegerLattice,
}

impl RationalLattice {
    pub fn new(denominator: BigInt, numerator: IntegerLattice) -> Self {
        assert!(denominator.is_positive(), "denominator must be positive");
        let g = numerator
            .basis
            .iter()
            .flatten()
            .fold(denominator.clone(), |acc, x| acc.gcd(x));
        if g.is_one() {
            return RationalLattice { denominator, numerator };
        }
        let basis = numerator.basis.iter().map(|r| r.iter().map(|x| x / &g).collect()).collect();
        RationalLattice { denominator: denominator / &g, numerator: IntegerLattice { basis } }
    }

    pub fn from_integer(l: &IntegerLattice) -> Self {
        RationalLattice { denominator: BigInt::one(), numerator: l.clone() }
    }

    pub fn from_generators(dim: usize, gens: &[QVec]) -> Result<Self, LatticeError> {
        for g in gens {
            check_dim(dim, g.len())?;
        }
        let s = matrix::common_denominator(gens.iter().flatten());
        let ints: Vec<IVec> = gens
            .iter()
            .map(|g| g.iter().map(|x| (x * BigRational::from_integer(s.clone())).to_integer()).collect())
            .collect();
        Ok(Self::new(s, IntegerLattice::from_generators(dim, &ints)?))
    }

    /// Lattice generated by the columns of a rational matrix given by rows.
    pub fn from_rows(rows: &QMat) -> Result<Self, LatticeError> {
        Self::from_generators(rows.len(), &matrix::transpose(rows))
    }

    pub fn dim(&self) -> usize {
        self.numerator.dim()
    }

    pub fn denominator(&self) -> &BigInt {
        &self.denominator
    }

    pub fn numerator(&self) -> &IntegerLattice {
        &self.numerator
    }

    pub fn as_integer(&self) -> Option<IntegerLattice> {
        self.denominator.is_one().then(|| self.numerator.clone())
    }

    /// Basis matrix by rows, as rationals.
    pub fn basis(&self) -> QMat {
        self.numerator
            .basis
            .iter()
            .map(|r| r.iter().map(|x| BigRational::new(x.clone(), self.denominator.clone())).collect())
            .collect()
    }

    pub fn columns(&self) -> Vec<QVec> {
        matrix::transpose(&self.basis())
    }

    pub fn covolume(&self) -> BigRational {
        BigRational::new(self.numerator.index(), self.denominator.pow(self.dim() as u32))
    }

    pub fn contains(&self, v: &[BigRational]) -> Result<bool, LatticeError> {
        check_dim(self.dim(), v.len())?;
        let s = BigRational::from_integer(self.denominator.clone());
        let mut ints = Vec::with_capacity(v.len());
        for x in v {
            let y = x * &s;
            if !y.is_integer() {
                return Ok(false);
            }
            ints.push(y.to_integer());
        }
        self.numerator.contains(&ints)
    }

    pub fn is_sublattice_of(&self, other: &RationalLattice) -> Result<bool, LatticeError> {
        check_dim(self.dim(), other.dim())?;
        for c in self.columns() {
            if !other.contains(&c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn sum(&self, other: &RationalLattice) -> Result<RationalLattice, LatticeError> {
        check_dim(self.dim(), other.dim())?;
        let mut gens = self.columns();
        gens.extend(other.columns());
        Self::from_generators(self.dim(), &gens)
    }

    /// `A ∩ B = (A* + B*)*`.
    pub fn intersect(&self, other: &RationalLattice) -> Result<RationalLattice, LatticeError> {
        Ok(self.dual().sum(&other.dual())?.dual())
    }

    /// `{v : v·x ∈ ℤ for all x}`, computed as the inverse transpose of the basis.
    pub fn dual(&self) -> RationalLattice {
        let inv = matrix::qinverse(&self.basis()).expect("full-rank lattice");
        RationalLattice::from_rows(&matrix::transpose(&inv)).expect("inverse is nonsingular")
    }
}

impl fmt::Debug for RationalLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RationalLattice({self})")
    }
}

/// Rational lattice literal: `1/s; d; row1; ...` (the prefix is omitted when `s = 1`).
impl fmt::Display for RationalLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denominator.is_one() {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "1/{}; {}", self.denominator, self.numerator)
        }
    }
}

/// Representatives of `ℤ^d / L` inside the box `[m) = [0,m_1)×…×[0,m_d)`.
///
/// `m_k` is the least `n > 0` with `n·e_k` congruent to a vector supported on
/// the coordinates before `k`. Those `n` form the ideal generated by the k-th
/// diagonal entry of the HNF, so `m` is read off the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetSystem {
    lattice: IntegerLattice,
    rectangle: IVec,
    radix: Option<Vec<usize>>,
}

impl CosetSystem {
    pub fn new(lattice: IntegerLattice) -> Self {
        let rectangle = lattice.diag();
        let radix = rectangle.iter().map(|m| m.to_usize()).collect::<Option<Vec<_>>>().filter(|r| {
            r.iter().try_fold(1usize, |acc, &x| acc.checked_mul(x)).is_some()
        });
        CosetSystem { lattice, rectangle, radix }
    }

    pub fn lattice(&self) -> &IntegerLattice {
        &self.lattice
    }

    pub fn rectangle(&self) -> &IVec {
        &self.rectangle
    }

    pub fn index(&self) -> BigInt {
        self.lattice.index()
    }

    /// Number of cosets when it fits in memory-addressable range.
    pub fn len(&self) -> Option<usize> {
        self.radix.as_ref().map(|r| r.iter().product())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn reduce(&self, v: &[BigInt]) -> Result<IVec, LatticeError> {
        check_dim(self.lattice.dim(), v.len())?;
        Ok(self.lattice.reduce(v))
    }

    /// Position of a representative in lexicographic order (first coordinate
    /// most significant).
    pub fn rank(&self, rep: &[BigInt]) -> usize {
        let radix = self.radix.as_ref().expect("quotient too large to rank");
        rep.iter().zip(radix).fold(0usize, |acc, (x, &m)| acc * m + x.to_usize().expect("rep inside box"))
    }

    pub fn unrank(&self, mut i: usize) -> IVec {
        let radix = self.radix.as_ref().expect("quotient too large to rank");
        let mut out = vec![BigInt::zero(); radix.len()];
        for k in (0..radix.len()).rev() {
            out[k] = BigInt::from(i % radix[k]);
            i /= radix[k];
        }
        out
    }

    /// Rank of the coset containing an arbitrary integer vector.
    pub fn rank_of(&self, v: &[BigInt]) -> usize {
        self.rank(&self.lattice.reduce(v))
    }

    pub fn reps(&self) -> Result<impl Iterator<Item = IVec> + '_, LatticeError> {
        let n = self.len().ok_or_else(|| LatticeError::QuotientTooLarge(self.index()))?;
        Ok((0..n).map(move |i| self.unrank(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{imat, int, ivec, qvec, rat};

    fn lat(rows: &[&[i64]]) -> IntegerLattice {
        IntegerLattice::hnf(&imat(rows)).unwrap()
    }

    #[test]
    fn hnf_of_derived_generators() {
        // columns (3,0) and (2,2)
        let l = lat(&[&[3, 2], &[0, 2]]);
        assert_eq!(l.basis(), &imat(&[&[3, 2], &[0, 2]]));
        let swapped = lat(&[&[2, 3], &[2, 0]]);
        assert_eq!(swapped, l);
    }

    #[test]
    fn hnf_identity_and_singular() {
        assert_eq!(lat(&[&[1, 0], &[0, 1]]), IntegerLattice::standard(2));
        assert_eq!(IntegerLattice::hnf(&imat(&[&[1, 2], &[2, 4]])), Err(LatticeError::SingularBasis));
    }

    #[test]
    fn hnf_off_diagonal_is_reduced() {
        let l = lat(&[&[6, 3], &[0, 2]]);
        assert_eq!(l.index(), int(12));
        let b = l.basis();
        assert!(b[0][1] >= int(0) && b[0][1] < b[0][0]);
        assert!(b[1][0].is_zero());
    }

    #[test]
    fn index_and_membership() {
        let l = lat(&[&[3, 2], &[0, 2]]);
        assert_eq!(l.index(), int(6));
        assert!(l.contains(&ivec(&[2, 2])).unwrap());
        assert!(l.contains(&ivec(&[0, 0])).unwrap());
        assert!(!l.contains(&ivec(&[1, 1])).unwrap());
        assert!(matches!(l.contains(&ivec(&[1])), Err(LatticeError::DimensionMismatch { .. })));
    }

    #[test]
    fn sublattices() {
        let a = lat(&[&[9, 0], &[0, 4]]);
        let b = lat(&[&[3, 0], &[0, 2]]);
        assert!(a.is_sublattice_of(&b).unwrap());
        assert!(b.is_sublattice_of(&b).unwrap());
        assert!(!b.is_sublattice_of(&lat(&[&[2, 0], &[0, 3]])).unwrap());
    }

    #[test]
    fn intersections() {
        let a = lat(&[&[3, 0], &[0, 1]]);
        let b = lat(&[&[1, 0], &[0, 2]]);
        assert_eq!(a.intersect(&b).unwrap(), lat(&[&[3, 0], &[0, 2]]));
        assert_eq!(a.intersect(&IntegerLattice::standard(2)).unwrap(), a);
        let l = lat(&[&[3, 2], &[0, 2]]);
        let two = lat(&[&[2, 0], &[0, 2]]);
        let c = l.intersect(&two).unwrap();
        // Oracle: common elements in the box [0,12)^2, counted against 12^2 / index.
        let mut common = 0;
        for x in 0..12 {
            for y in 0..12 {
                let v = ivec(&[x, y]);
                let both = l.contains(&v).unwrap() && two.contains(&v).unwrap();
                assert_eq!(both, c.contains(&v).unwrap());
                common += both as i64;
            }
        }
        assert_eq!(c.index(), int(144 / common));
        assert_eq!(c, lat(&[&[6, 2], &[0, 2]]));
    }

    #[test]
    fn dual_of_derived_first_stage() {
        let d = lat(&[&[3, 2], &[0, 2]]).dual();
        let expected = RationalLattice::from_rows(&vec![
            qvec(&[(2, 6), (0, 1)]),
            qvec(&[(-2, 6), (3, 6)]),
        ])
        .unwrap();
        assert_eq!(d, expected);
        assert_eq!(d.covolume(), rat(1, 6));
    }

    #[test]
    fn dual_of_diagonal() {
        let d = lat(&[&[3, 0], &[0, 2]]).dual();
        let expect = RationalLattice::from_rows(&vec![qvec(&[(1, 3), (0, 1)]), qvec(&[(0, 1), (1, 2)])]).unwrap();
        assert_eq!(d, expect);
        assert_eq!(IntegerLattice::standard(3).dual().as_integer(), Some(IntegerLattice::standard(3)));
        assert_eq!(d.dual().as_integer(), Some(lat(&[&[3, 0], &[0, 2]])));
    }

    #[test]
    fn rational_literal_minimises_denominator() {
        let r = RationalLattice::new(int(6), lat(&[&[6, 0], &[0, 12]]));
        assert_eq!(r.to_string(), "2; 1 0; 0 2");
        let half = RationalLattice::new(int(2), lat(&[&[1, 0], &[0, 2]]));
        assert_eq!(half.to_string(), "1/2; 2; 1 0; 0 2");
    }

    #[test]
    fn coset_system_of_example_lattices() {
        let cs = lat(&[&[3, 0], &[0, 2]]).coset_system();
        assert_eq!(cs.rectangle(), &ivec(&[3, 2]));
        let reps: Vec<IVec> = cs.reps().unwrap().collect();
        assert_eq!(reps.len(), 6);
        assert_eq!(reps[1], ivec(&[0, 1]));
        let cs2 = lat(&[&[3, 2], &[0, 2]]).coset_system();
        assert_eq!(cs2.rectangle(), &ivec(&[3, 2]));
        assert_eq!(cs2.reduce(&ivec(&[1, 2])).unwrap(), ivec(&[2, 0]));
        assert_eq!(cs.reduce(&ivec(&[1, 2])).unwrap(), ivec(&[1, 0]));
        assert_eq!(IntegerLattice::standard(2).coset_system().reps().unwrap().count(), 1);
    }

    #[test]
    fn box_enumeration_matches_membership() {
        let l = lat(&[&[3, 2], &[0, 2]]);
        let off = ivec(&[1, 0]);
        let pts = l.points_in_box(&off, &int(5));
        let mut count = 0;
        for x in -5i64..=5 {
            for y in -5i64..=5 {
                if l.contains(&ivec(&[x - 1, y])).unwrap() {
                    count += 1;
                    assert!(pts.contains(&ivec(&[x, y])));
                }
            }
        }
        assert_eq!(pts.len(), count);
    }

    #[test]
    fn rank_round_trip() {
        let cs = lat(&[&[9, 7], &[0, 4]]).coset_system();
        for i in 0..cs.len().unwrap() {
            assert_eq!(cs.rank(&cs.unrank(i)), i);
        }
    }

    #[test]
    fn builder_handles_rank_deficient_spans() {
        let mut b = HermiteBuilder::new(3);
        b.insert(&ivec(&[2, 4, 0]));
        b.insert(&ivec(&[1, 2, 0]));
        assert_eq!(b.rank(), 1);
        assert!(b.contains(&ivec(&[3, 6, 0])));
        assert!(!b.contains(&ivec(&[0, 1, 0])));
        assert_eq!(b.finish(), Err(LatticeError::SingularBasis));
    }
}
