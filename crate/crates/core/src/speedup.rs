//! Bounded speedup cocycles, cones, the finite-quotient dynamics they induce
//! and the stabilizer chain of a minimal speedup.

use crate::lattice::{CosetSystem, HermiteBuilder, IntegerLattice, LatticeError};
use crate::matrix::{self, IVec, QVec};
use crate::odometer::{OdometerChain, OdometerError};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SandwichClause {
    NotPlanar,
    IndexNotPowerOfSix,
    LowerBound,
    UpperBound,
}

impl fmt::Display for SandwichClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SandwichClause::NotPlanar => "lattice is not in dimension 2",
            SandwichClause::IndexNotPowerOfSix => "index is not a power of 6",
            SandwichClause::LowerBound => "3^m Z x 2^m Z is not contained in G",
            SandwichClause::UpperBound => "G is not contained in 3^m' Z x 2^m' Z",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpeedupError {
    #[error("cocycle relation fails at rep {} for generators {i} and {k}", matrix::fmt_ivec(.rep))]
    IncompatibleCocycle { rep: IVec, i: usize, k: usize },
    #[error("generator {generator} sends {} and {} to the same coset {}", matrix::fmt_ivec(.first), matrix::fmt_ivec(.second), matrix::fmt_ivec(.image))]
    NonBijectiveGenerator { generator: usize, first: IVec, second: IVec, image: IVec },
    #[error("orbit of 0 misses cosets at depth {0}")]
    NotMinimalAtDepth(usize),
    #[error("values positively span a line or the plane; no cone contains them")]
    AntipodalValues,
    #[error("sandwich hypothesis fails: {0}")]
    HypothesisFailed(SandwichClause),
    #[error("malformed cocycle table: {0}")]
    MalformedTable(String),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("{op} is only available in dimension {expected}, got {found}")]
    UnsupportedDimension { op: &'static str, expected: usize, found: usize },
    #[error("no cone member in the coset {} within the search bound", matrix::fmt_ivec(.0))]
    EmptyConeCoset(IVec),
    #[error("depth {depth} is below the cocycle resolution {resolution}")]
    BelowResolution { depth: usize, resolution: usize },
    #[error("{0}")]
    Lattice(#[from] LatticeError),
    #[error("{0}")]
    Odometer(Box<OdometerError>),
}

impl From<OdometerError> for SpeedupError {
    fn from(e: OdometerError) -> Self {
        match e {
            OdometerError::Speedup(inner) => *inner,
            other => SpeedupError::Odometer(Box::new(other)),
        }
    }
}

fn cross(a: &[BigInt], b: &[BigInt]) -> BigInt {
    &a[0] * &b[1] - &a[1] * &b[0]
}

fn primitive(v: &[BigInt]) -> IVec {
    let g = matrix::content(v);
    v.iter().map(|x| x / &g).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facet {
    pub normal: QVec,
    pub strict: bool,
}

/// Planar sector swept counterclockwise from `start` to `end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sector {
    pub start: IVec,
    pub end: IVec,
    pub start_inclusive: bool,
    pub end_inclusive: bool,
}

/// `{x ≠ 0 : n_i·x > 0 (strict) or ≥ 0 (inclusive) for every facet}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cone {
    dim: usize,
    facets: Vec<Facet>,
    sector: Option<Sector>,
}

impl Cone {
    /// Needs `d` linearly independent normals, which makes the cone closed
    /// under addition and free of antipodal pairs.
    pub fn from_facets(dim: usize, facets: Vec<Facet>) -> Result<Self, SpeedupError> {
        if facets.len() != dim || facets.iter().any(|f| f.normal.len() != dim) {
            return Err(SpeedupError::InvalidCone(format!("expected {dim} normals of length {dim}")));
        }
        let m: Vec<QVec> = facets.iter().map(|f| f.normal.clone()).collect();
        if matrix::qdet(&m).is_zero() {
            return Err(SpeedupError::InvalidCone("facet normals are linearly dependent".into()));
        }
        Ok(Cone { dim, facets, sector: None })
    }

    /// A sector of angle strictly between 0 and π. A zero-angle sector (both
    /// rays in one direction) is widened to the quarter-plane centred on that
    /// direction, with inclusive boundaries.
    pub fn sector(start: &[BigInt], end: &[BigInt], start_inclusive: bool, end_inclusive: bool) -> Result<Self, SpeedupError> {
        if start.len() != 2 || end.len() != 2 || matrix::is_zero(start) || matrix::is_zero(end) {
            return Err(SpeedupError::InvalidCone("sector rays must be nonzero planar vectors".into()));
        }
        let (s, e) = (primitive(start), primitive(end));
        let c = cross(&s, &e);
        if c.is_zero() && s == e {
            let (a, b) = (&s[0], &s[1]);
            let widened_start = vec![a + b, b - a];
            let widened_end = vec![a - b, a + b];
            return Self::sector(&widened_start, &widened_end, true, true);
        }
        if !c.is_positive() {
            return Err(SpeedupError::InvalidCone("sector must turn counterclockwise by less than a half-turn".into()));
        }
        let n1 = matrix::to_q(&[-s[1].clone(), s[0].clone()]);
        let n2 = matrix::to_q(&[e[1].clone(), -e[0].clone()]);
        let facets = vec![Facet { normal: n1, strict: !start_inclusive }, Facet { normal: n2, strict: !end_inclusive }];
        let mut cone = Self::from_facets(2, facets)?;
        cone.sector = Some(Sector { start: s, end: e, start_inclusive, end_inclusive });
        Ok(cone)
    }

    /// `{0,1,2,…}^2 − {0}` when inclusive, the open quadrant otherwise.
    pub fn quadrant(inclusive: bool) -> Self {
        let (x, y) = (matrix::ivec(&[1, 0]), matrix::ivec(&[0, 1]));
        Self::sector(&x, &y, inclusive, inclusive).expect("quadrant is a valid sector")
    }

    /// Positive half-line of ℤ.
    pub fn positive_ray() -> Self {
        Self::from_facets(1, vec![Facet { normal: vec![BigRational::one()], strict: true }]).expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn as_sector(&self) -> Option<&Sector> {
        self.sector.as_ref()
    }

    pub fn contains(&self, x: &[BigInt]) -> bool {
        if x.len() != self.dim || matrix::is_zero(x) {
            return false;
        }
        self.facets.iter().all(|f| {
            let dot = f.normal.iter().zip(x).fold(BigRational::zero(), |acc, (n, v)| acc + n * BigRational::from_integer(v.clone()));
            if f.strict {
                dot.is_positive()
            } else {
                !dot.is_negative()
            }
        })
    }

    /// Least-norm member of `offset + L` other than `avoid`, ties broken
    /// lexicographically. The search box doubles until the best candidate is
    /// provably minimal.
    pub fn min_member_in_coset(&self, lattice: &IntegerLattice, offset: &[BigInt], avoid: Option<&IVec>) -> Result<IVec, SpeedupError> {
        let start = lattice.diag().into_iter().max().unwrap_or_else(BigInt::one).max(BigInt::one());
        let limit = &start << 12;
        let mut radius = start;
        while radius <= limit {
            let mut best: Option<(BigInt, IVec)> = None;
            for v in lattice.points_in_box(offset, &radius) {
                if !self.contains(&v) || avoid == Some(&v) {
                    continue;
                }
                let n = matrix::norm2(&v);
                if best.as_ref().is_none_or(|(bn, bv)| n < *bn || (n == *bn && v < *bv)) {
                    best = Some((n, v));
                }
            }
            if let Some((n, v)) = best {
                if n <= &radius * &radius {
                    return Ok(v);
                }
            }
            radius <<= 1;
        }
        Err(SpeedupError::EmptyConeCoset(offset.to_vec()))
    }

    /// Least-norm integer member.
    pub fn min_member(&self) -> Result<IVec, SpeedupError> {
        self.min_member_in_coset(&IntegerLattice::standard(self.dim), &vec![BigInt::zero(); self.dim], None)
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |b: bool| if b { "1" } else { "0" };
        if let Some(s) = &self.sector {
            let r = |v: &IVec| format!("{},{}", v[0], v[1]);
            return write!(f, "sector={}..{} incl={},{}", r(&s.start), r(&s.end), flag(s.start_inclusive), flag(s.end_inclusive));
        }
        let normals: Vec<String> =
            self.facets.iter().map(|x| x.normal.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")).collect();
        let strict: Vec<&str> = self.facets.iter().map(|x| flag(x.strict)).collect();
        write!(f, "facets={} strict={}", normals.join(";"), strict.join(","))
    }
}

/// The action of the generators on the cosets of one source stage.
#[derive(Debug, Clone)]
pub struct QuotientAction {
    pub depth: usize,
    pub cosets: CosetSystem,
    /// `next[i][x]`: rank of the coset reached from `x` by generator `i`.
    pub next: Vec<Vec<usize>>,
    /// Rank of the resolution-depth atom containing each coset.
    pub atom: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stabilizer {
    pub lattice: IntegerLattice,
    pub orbit_size: usize,
    pub quotient_size: usize,
}

impl Stabilizer {
    pub fn transitive(&self) -> bool {
        self.orbit_size == self.quotient_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedChainReport {
    pub stabilizers: Vec<IntegerLattice>,
    pub orbit_sizes: Vec<usize>,
    pub transitive: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeCheck {
    pub holds: bool,
    /// `(generator, rep, value)` for every table value outside the cone.
    pub witnesses: Vec<(usize, IVec, IVec)>,
}

/// A speedup cocycle constant on the cosets of `G_J`: generator `i` moves a
/// point in coset `x` by `tables[i][rank(x)]`.
#[derive(Debug)]
pub struct PiecewiseCocycle {
    source: Arc<OdometerChain>,
    depth: usize,
    rank: usize,
    cosets: CosetSystem,
    tables: Vec<Vec<IVec>>,
    images: Vec<Vec<usize>>,
    inverses: Option<Vec<Vec<usize>>>,
}

impl PiecewiseCocycle {
    pub fn new(source: Arc<OdometerChain>, depth: usize, rank: usize, tables: Vec<Vec<IVec>>) -> Result<Self, SpeedupError> {
        if depth == 0 {
            return Err(SpeedupError::MalformedTable("resolution depth must be at least 1".into()));
        }
        let cosets = source.cosets(depth)?;
        let n = cosets.len().ok_or_else(|| SpeedupError::MalformedTable("resolution quotient too large".into()))?;
        if tables.len() != rank {
            return Err(SpeedupError::MalformedTable(format!("expected {rank} generator tables, found {}", tables.len())));
        }
        let d1 = source.dim();
        for (i, t) in tables.iter().enumerate() {
            if t.len() != n {
                return Err(SpeedupError::MalformedTable(format!("generator {} has {} entries, expected {n}", i + 1, t.len())));
            }
            if let Some(v) = t.iter().find(|v| v.len() != d1) {
                return Err(SpeedupError::MalformedTable(format!("value {} is not in dimension {d1}", matrix::fmt_ivec(v))));
            }
        }
        let images: Vec<Vec<usize>> = tables
            .iter()
            .map(|t| (0..n).map(|a| cosets.rank_of(&matrix::add(&cosets.unrank(a), &t[a]))).collect())
            .collect();
        let inverses = images
            .iter()
            .map(|img| {
                let mut inv = vec![usize::MAX; n];
                for (a, &b) in img.iter().enumerate() {
                    if inv[b] != usize::MAX {
                        return None;
                    }
                    inv[b] = a;
                }
                Some(inv)
            })
            .collect::<Option<Vec<_>>>();
        Ok(PiecewiseCocycle { source, depth, rank, cosets, tables, images, inverses })
    }

    /// Table built from a function of (generator, coset representative).
    pub fn from_fn(
        source: Arc<OdometerChain>,
        depth: usize,
        rank: usize,
        f: impl Fn(usize, &IVec) -> IVec,
    ) -> Result<Self, SpeedupError> {
        let cosets = source.cosets(depth)?;
        let reps: Vec<IVec> = cosets.reps()?.collect();
        let tables = (0..rank).map(|i| reps.iter().map(|r| f(i, r)).collect()).collect();
        Self::new(source, depth, rank, tables)
    }

    pub fn source(&self) -> &Arc<OdometerChain> {
        &self.source
    }

    /// Resolution depth `J`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `d_2`, the rank of the speedup action.
    pub fn target_rank(&self) -> usize {
        self.rank
    }

    pub fn cosets(&self) -> &CosetSystem {
        &self.cosets
    }

    pub fn tables(&self) -> &[Vec<IVec>] {
        &self.tables
    }

    /// `p_i` on the atom with the given rank.
    pub fn value(&self, i: usize, atom: usize) -> &IVec {
        &self.tables[i][atom]
    }

    pub fn value_at(&self, i: usize, v: &[BigInt]) -> &IVec {
        &self.tables[i][self.cosets.rank_of(v)]
    }

    /// Bijectivity of each generator, then the commutation relation
    /// `p_i(S^{e_k}x) + p_k(x) = p_k(S^{e_i}x) + p_i(x)` on every atom.
    pub fn validate(&self) -> Result<(), SpeedupError> {
        for (i, img) in self.images.iter().enumerate() {
            let mut seen = vec![usize::MAX; img.len()];
            for (a, &b) in img.iter().enumerate() {
                if seen[b] != usize::MAX {
                    return Err(SpeedupError::NonBijectiveGenerator {
                        generator: i + 1,
                        first: self.cosets.unrank(seen[b]),
                        second: self.cosets.unrank(a),
                        image: self.cosets.unrank(b),
                    });
                }
                seen[b] = a;
            }
        }
        let n = self.images.first().map_or(0, Vec::len);
        for a in 0..n {
            for i in 0..self.rank {
                for k in i + 1..self.rank {
                    let lhs = matrix::add(&self.tables[i][self.images[k][a]], &self.tables[k][a]);
                    let rhs = matrix::add(&self.tables[k][self.images[i][a]], &self.tables[i][a]);
                    if lhs != rhs {
                        return Err(SpeedupError::IncompatibleCocycle { rep: self.cosets.unrank(a), i: i + 1, k: k + 1 });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn cone_check(&self, cone: &Cone) -> ConeCheck {
        let mut witnesses = Vec::new();
        for (i, t) in self.tables.iter().enumerate() {
            for (a, v) in t.iter().enumerate() {
                if !cone.contains(v) {
                    witnesses.push((i + 1, self.cosets.unrank(a), v.clone()));
                }
            }
        }
        ConeCheck { holds: witnesses.is_empty(), witnesses }
    }

    /// `p(x, v)` along the staircase path: all `e_1` steps, then `e_2`, and so on.
    /// Negative steps use `p(x, −e_i) = −p(S^{−e_i}x, e_i)`.
    pub fn evaluate(&self, x: &[BigInt], v: &[BigInt]) -> Result<IVec, SpeedupError> {
        if v.len() != self.rank {
            return Err(LatticeError::DimensionMismatch { expected: self.rank, found: v.len() }.into());
        }
        let mut atom = self.cosets.rank_of(x);
        let mut total = vec![BigInt::zero(); self.source.dim()];
        for (i, vi) in v.iter().enumerate() {
            let steps = vi.magnitude().clone();
            let mut k = num_bigint::BigUint::zero();
            while k < steps {
                if vi.is_positive() {
                    total = matrix::add(&total, &self.tables[i][atom]);
                    atom = self.images[i][atom];
                } else {
                    let inv = self.inverses.as_ref().ok_or_else(|| self.validate().unwrap_err())?;
                    atom = inv[i][atom];
                    total = matrix::sub(&total, &self.tables[i][atom]);
                }
                k += 1u32;
            }
        }
        Ok(total)
    }

    /// Generator action on the cosets of `G_j` for `j ≥ J`.
    pub fn quotient_action(&self, j: usize) -> Result<QuotientAction, SpeedupError> {
        if j < self.depth {
            return Err(SpeedupError::BelowResolution { depth: j, resolution: self.depth });
        }
        let cosets = self.source.cosets(j)?;
        let n = cosets.len().ok_or_else(|| LatticeError::QuotientTooLarge(cosets.index()))?;
        let mut atom = Vec::with_capacity(n);
        let mut next = vec![Vec::with_capacity(n); self.rank];
        for x in 0..n {
            let rep = cosets.unrank(x);
            let a = self.cosets.rank_of(&rep);
            atom.push(a);
            for (i, nx) in next.iter_mut().enumerate() {
                nx.push(cosets.rank_of(&matrix::add(&rep, &self.tables[i][a])));
            }
        }
        Ok(QuotientAction { depth: j, cosets, next, atom })
    }

    /// Stabilizer of the coset of 0 at source depth `j ≥ J`, by orbit BFS and
    /// Schreier generators `r(x) + e_i − r(S^{e_i}x)`.
    pub fn stabilizer(&self, j: usize) -> Result<Stabilizer, SpeedupError> {
        let act = self.quotient_action(j)?;
        let n = act.atom.len();
        let mut reach: Vec<Option<IVec>> = vec![None; n];
        reach[0] = Some(vec![BigInt::zero(); self.rank]);
        let mut queue = VecDeque::from([0usize]);
        let mut builder = HermiteBuilder::new(self.rank);
        let mut orbit = 1;
        while let Some(x) = queue.pop_front() {
            let rx = reach[x].clone().expect("queued cosets are reached");
            for i in 0..self.rank {
                let y = act.next[i][x];
                let mut step = rx.clone();
                step[i] += 1;
                match &reach[y] {
                    None => {
                        reach[y] = Some(step);
                        orbit += 1;
                        queue.push_back(y);
                    }
                    Some(ry) => {
                        let loop_vec = matrix::sub(&step, ry);
                        if !matrix::is_zero(&loop_vec) && !builder.contains(&loop_vec) {
                            builder.insert(&loop_vec);
                        }
                    }
                }
            }
        }
        Ok(Stabilizer { lattice: builder.finish()?, orbit_size: orbit, quotient_size: n })
    }

    /// Whether the orbit of 0 meets every coset of `G_j`, for `j = 1..=N`.
    pub fn minimality_to_depth(&self, n: usize) -> Result<Vec<bool>, SpeedupError> {
        let mut out = Vec::with_capacity(n);
        for j in 1..=n {
            let deep = j.max(self.depth);
            let act = self.quotient_action(deep)?;
            let mut seen = vec![false; act.atom.len()];
            seen[0] = true;
            let mut queue = VecDeque::from([0usize]);
            while let Some(x) = queue.pop_front() {
                for nx in &act.next {
                    if !seen[nx[x]] {
                        seen[nx[x]] = true;
                        queue.push_back(nx[x]);
                    }
                }
            }
            if deep == j {
                out.push(seen.iter().all(|&s| s));
            } else {
                let coarse = self.source.cosets(j)?;
                let total = coarse.len().expect("coarser than the resolution quotient");
                let mut hit = vec![false; total];
                for (x, _) in seen.iter().enumerate().filter(|(_, &s)| s) {
                    hit[coarse.rank_of(&act.cosets.unrank(x))] = true;
                }
                out.push(hit.iter().all(|&h| h));
            }
        }
        Ok(out)
    }

    /// Stabilizer chain `H'_1 ⊇ H'_2 ⊇ …` of a minimal speedup, with stage `k`
    /// read at source depth `k + J − 1`.
    pub fn derived_chain(self: &Arc<Self>, n: usize) -> Result<(DerivedChainReport, OdometerChain), SpeedupError> {
        let mut report = DerivedChainReport { stabilizers: Vec::new(), orbit_sizes: Vec::new(), transitive: Vec::new() };
        for k in 1..=n {
            let j = k + self.depth - 1;
            let st = self.stabilizer(j)?;
            if !st.transitive() {
                return Err(SpeedupError::NotMinimalAtDepth(j));
            }
            if let Some(prev) = report.stabilizers.last() {
                assert!(st.lattice.is_sublattice_of(prev)?, "stabilizers of nested cylinders are nested");
            }
            assert_eq!(BigInt::from(st.orbit_size), self.source.index(j)?, "orbit-stabilizer count");
            assert_eq!(st.lattice.index(), BigInt::from(st.orbit_size), "orbit-stabilizer index");
            report.orbit_sizes.push(st.orbit_size);
            report.transitive.push(true);
            report.stabilizers.push(st.lattice);
        }
        let chain = OdometerChain::derived(Arc::clone(self));
        Ok((report, chain))
    }

    /// Tightest cone containing every table value: for planar values, the
    /// sector between the extreme directions with both boundaries inclusive.
    pub fn cone_hull(&self) -> Result<Cone, SpeedupError> {
        let values: Vec<&IVec> = self.tables.iter().flatten().collect();
        if values.iter().any(|v| matrix::is_zero(v)) {
            return Err(SpeedupError::InvalidCone("a zero value lies in no cone".into()));
        }
        match self.source.dim() {
            1 => {
                let pos = values.iter().all(|v| v[0].is_positive());
                let neg = values.iter().all(|v| v[0].is_negative());
                match (pos, neg) {
                    (true, _) => Ok(Cone::positive_ray()),
                    (_, true) => Cone::from_facets(1, vec![Facet { normal: vec![-BigRational::one()], strict: true }]),
                    _ => Err(SpeedupError::AntipodalValues),
                }
            }
            2 => planar_hull(&values),
            d => Err(SpeedupError::UnsupportedDimension { op: "cone_hull", expected: 2, found: d }),
        }
    }

    /// Generator `e_1` moves only the first coordinate and `e_2` only the second.
    pub fn product_form_check(&self) -> Result<bool, SpeedupError> {
        if self.source.dim() != 2 || self.rank != 2 {
            return Err(SpeedupError::UnsupportedDimension { op: "product_form_check", expected: 2, found: self.source.dim() });
        }
        Ok(self.tables[0].iter().all(|v| v[1].is_zero()) && self.tables[1].iter().all(|v| v[0].is_zero()))
    }
}

/// Quadrant ordering of directions by angle in `[0, 2π)`.
fn angle_cmp(a: &IVec, b: &IVec) -> std::cmp::Ordering {
    let half = |v: &IVec| if v[1].is_positive() || (v[1].is_zero() && v[0].is_positive()) { 0 } else { 1 };
    half(a).cmp(&half(b)).then_with(|| BigInt::zero().cmp(&cross(a, b)))
}

fn planar_hull(values: &[&IVec]) -> Result<Cone, SpeedupError> {
    let mut dirs: Vec<IVec> = values.iter().map(|v| primitive(v)).collect();
    dirs.sort_by(angle_cmp);
    dirs.dedup();
    if dirs.len() == 1 {
        return Cone::sector(&dirs[0], &dirs[0], true, true);
    }
    // The hull is the complement of the unique gap wider than a half-turn.
    let n = dirs.len();
    for k in 0..n {
        let (a, b) = (&dirs[k], &dirs[(k + 1) % n]);
        if cross(a, b).is_negative() {
            return Cone::sector(b, a, true, true);
        }
    }
    Err(SpeedupError::AntipodalValues)
}

/// Cross-check of the planar index-6^j lemma: under `[ℤ²:G] = 6^j` and
/// `3^mℤ×2^mℤ ≤ G ≤ 3^{m'}ℤ×2^{m'}ℤ`, `G` must be `diag(3^j, 2^j)`.
pub fn sandwich_diagonal_check(g: &IntegerLattice, m: u32, m_upper: u32) -> Result<bool, SpeedupError> {
    if g.dim() != 2 {
        return Err(SpeedupError::HypothesisFailed(SandwichClause::NotPlanar));
    }
    let idx = g.index();
    let mut j = 0u32;
    let mut rest = idx.clone();
    while rest.is_multiple_of(&BigInt::from(6)) {
        rest /= 6;
        j += 1;
    }
    if !rest.is_one() {
        return Err(SpeedupError::HypothesisFailed(SandwichClause::IndexNotPowerOfSix));
    }
    let box_lattice = |k: u32| IntegerLattice::diagonal(&[BigInt::from(3).pow(k), BigInt::from(2).pow(k)]).expect("nonsingular");
    if !box_lattice(m).is_sublattice_of(g)? {
        return Err(SpeedupError::HypothesisFailed(SandwichClause::LowerBound));
    }
    if !g.is_sublattice_of(&box_lattice(m_upper))? {
        return Err(SpeedupError::HypothesisFailed(SandwichClause::UpperBound));
    }
    Ok(*g == box_lattice(j))
}

/// A random depth-1 cocycle with commuting generators on `ℤ^d/G_1`.
///
/// The generators permute the cosets by `π_i = τ∘(+t_i)∘τ^{-1}`, and the lifts
/// are `p_i(a) = rep(π_i a) − rep(a) + h(π_i a) − h(a) + c_i` with `h` and `c_i`
/// in `G_1`, which satisfies the commutation relation exactly.
pub fn random_commuting_cocycle<R: Rng>(
    source: &Arc<OdometerChain>,
    rng: &mut R,
    lift: i64,
    shift: std::ops::RangeInclusive<i64>,
) -> Result<PiecewiseCocycle, SpeedupError> {
    let d = source.dim();
    let cosets = source.cosets(1)?;
    let n = cosets.len().expect("small first stage");
    let g1 = source.stage(1)?;
    let mut tau: Vec<usize> = (0..n).collect();
    tau.shuffle(rng);
    let mut tau_inv = vec![0; n];
    for (a, &b) in tau.iter().enumerate() {
        tau_inv[b] = a;
    }
    let in_g1 = |rng: &mut R, range: std::ops::RangeInclusive<i64>| -> IVec {
        let coeffs: IVec = (0..d).map(|_| BigInt::from(rng.gen_range(range.clone()))).collect();
        (0..d).map(|r| (0..d).map(|c| &g1.basis()[r][c] * &coeffs[c]).sum()).collect()
    };
    let h: Vec<IVec> = (0..n).map(|_| in_g1(rng, 0..=lift)).collect();
    let mut tables = Vec::with_capacity(d);
    for _ in 0..d {
        let t = cosets.unrank(rng.gen_range(0..n));
        let c = in_g1(rng, shift.clone());
        let pi: Vec<usize> = (0..n).map(|a| tau[cosets.rank_of(&matrix::add(&cosets.unrank(tau_inv[a]), &t))]).collect();
        let table = (0..n)
            .map(|a| {
                let b = pi[a];
                let v = matrix::sub(&cosets.unrank(b), &cosets.unrank(a));
                matrix::add(&matrix::add(&v, &matrix::sub(&h[b], &h[a])), &c)
            })
            .collect();
        tables.push(table);
    }
    PiecewiseCocycle::new(Arc::clone(source), 1, d, tables)
}

/// A random depth-1 product cocycle over a diagonal planar chain: `e_1` moves
/// along the first axis by an amount depending on the first coordinate only,
/// and likewise for `e_2`.
pub fn random_product_cocycle<R: Rng>(source: &Arc<OdometerChain>, rng: &mut R, lift: i64) -> Result<PiecewiseCocycle, SpeedupError> {
    let g1 = source.stage(1)?;
    if source.dim() != 2 || !g1.is_diagonal() {
        return Err(SpeedupError::UnsupportedDimension { op: "random_product_cocycle", expected: 2, found: source.dim() });
    }
    let m = g1.diag();
    let mut axis_moves = Vec::new();
    for mk in &m {
        let size: usize = mk.try_into().expect("small first stage");
        let mut perm: Vec<usize> = (0..size).collect();
        perm.shuffle(rng);
        let moves: Vec<BigInt> = (0..size)
            .map(|x| {
                let mut step = BigInt::from(perm[x] as i64 - x as i64);
                while !step.is_positive() {
                    step += mk;
                }
                step + mk * BigInt::from(rng.gen_range(0..=lift))
            })
            .collect();
        axis_moves.push(moves);
    }
    PiecewiseCocycle::from_fn(Arc::clone(source), 1, 2, |i, rep| {
        let coord: usize = (&rep[i]).try_into().expect("small rep");
        let mut v = vec![BigInt::zero(); 2];
        v[i] = axis_moves[i][coord].clone();
        v
    })
}
