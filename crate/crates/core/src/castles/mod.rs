//! Clopen sets, castles and partial speedups at a fixed refinement depth, plus
//! the finite-stage driver that builds speedups between odometers.
//!
//! Everything is carried at atom granularity: an atom is a coset of `G_N`,
//! identified by its rank in the coset system of depth `N`.

mod audit;
mod driver;

pub use audit::{verify_run, verify_stage_invariants, AuditEntry, AuditReport, RunReport};
pub use driver::{ConstructionConfig, ConstructionState, StageRecord};

use crate::lattice::{CosetSystem, IntegerLattice};
use crate::matrix::{self, IVec};
use crate::odometer::{OdometerChain, OdometerError};
use crate::speedup::{Cone, SpeedupError};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

/// Largest quotient the driver will materialize.
pub const ATOM_LIMIT: usize = 1 << 21;

/// Sorted atom ranks at one depth.
pub type Atoms = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CastleError {
    #[error("requested measure {requested} exceeds available {available}")]
    MeasureTooLarge { requested: Box<BigRational>, available: Box<BigRational> },
    #[error("measures differ: {0} vs {1}")]
    MeasureMismatch(Box<BigRational>, Box<BigRational>),
    #[error("sets share atom {0} at depth {1}")]
    NotDisjoint(usize, usize),
    #[error("points share the column through atom {0}")]
    SharedColumn(usize),
    #[error("not a partition: {0}")]
    NotAPartition(String),
    #[error("not a castle: {0}")]
    NotACastle(String),
    #[error("clopen value groups differ: {0} lies in exactly one of them")]
    ValueGroupMismatch(BigRational),
    #[error("precondition fails: {0}")]
    Precondition(String),
    #[error("depth too shallow: {0}")]
    NeedDeeper(String),
    #[error("no workable depth found for stage {0}")]
    DepthExhausted(usize),
    #[error("quotient at depth {0} is too large to enumerate")]
    TooLarge(usize),
    #[error("{0}")]
    Speedup(#[from] SpeedupError),
    #[error("{0}")]
    Odometer(#[from] OdometerError),
}

/// The atoms of one chain at one depth, with the translation action.
#[derive(Debug, Clone)]
pub struct Space {
    chain: Arc<OdometerChain>,
    depth: usize,
    cosets: CosetSystem,
    size: usize,
}

impl Space {
    pub fn new(chain: Arc<OdometerChain>, depth: usize) -> Result<Self, CastleError> {
        let cosets = chain.cosets(depth)?;
        let size = cosets.len().filter(|&n| n <= ATOM_LIMIT).ok_or(CastleError::TooLarge(depth))?;
        Ok(Space { chain, depth, cosets, size })
    }

    pub fn chain(&self) -> &Arc<OdometerChain> {
        &self.chain
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn lattice(&self) -> &IntegerLattice {
        self.cosets.lattice()
    }

    pub fn rep(&self, a: usize) -> IVec {
        self.cosets.unrank(a)
    }

    pub fn atom_of(&self, v: &[BigInt]) -> usize {
        self.cosets.rank_of(v)
    }

    /// Atom reached from `a` by translating with `v`.
    pub fn step(&self, a: usize, v: &[BigInt]) -> usize {
        self.cosets.rank_of(&matrix::add(&self.rep(a), v))
    }

    pub fn measure(&self, count: usize) -> BigRational {
        BigRational::new(BigInt::from(count), BigInt::from(self.size))
    }

    /// Parent of every atom at a coarser depth.
    pub fn parents(&self, coarse: usize) -> Result<Vec<usize>, CastleError> {
        assert!(coarse <= self.depth, "parents requested at a finer depth");
        if coarse == 0 {
            return Ok(vec![0; self.size]);
        }
        let up = self.chain.cosets(coarse)?;
        Ok((0..self.size).map(|a| up.rank_of(&self.rep(a))).collect())
    }

    /// Inverse of `parents`: the atoms below each coarse atom, in rank order.
    pub fn children(&self, coarse: usize) -> Result<Vec<Vec<usize>>, CastleError> {
        let parents = self.parents(coarse)?;
        let n = if coarse == 0 { 1 } else { self.chain.cosets(coarse)?.len().ok_or(CastleError::TooLarge(coarse))? };
        let mut out = vec![Vec::new(); n];
        for (a, p) in parents.into_iter().enumerate() {
            out[p].push(a);
        }
        Ok(out)
    }

    /// Least-norm cone vector carrying atom `from` onto atom `to`.
    pub fn cone_vector(&self, cone: &Cone, from: usize, to: usize, avoid: Option<&IVec>) -> Result<IVec, CastleError> {
        let offset = matrix::sub(&self.rep(to), &self.rep(from));
        Ok(cone.min_member_in_coset(self.lattice(), &offset, avoid)?)
    }
}

/// A union of atoms of one depth.
#[derive(Debug, Clone)]
pub struct ClopenSet {
    chain: Arc<OdometerChain>,
    depth: usize,
    atoms: Atoms,
}

impl PartialEq for ClopenSet {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.atoms == other.atoms
    }
}

impl ClopenSet {
    pub fn new(chain: Arc<OdometerChain>, depth: usize, mut atoms: Atoms) -> Self {
        atoms.sort_unstable();
        atoms.dedup();
        ClopenSet { chain, depth, atoms }
    }

    /// The depth-j cylinder containing the integer point `v`.
    pub fn cylinder(chain: Arc<OdometerChain>, depth: usize, v: &[BigInt]) -> Result<Self, CastleError> {
        let a = chain.cosets(depth)?.rank_of(v);
        Ok(ClopenSet::new(chain, depth, vec![a]))
    }

    pub fn chain(&self) -> &Arc<OdometerChain> {
        &self.chain
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn measure(&self) -> Result<BigRational, CastleError> {
        Ok(BigRational::new(BigInt::from(self.atoms.len()), self.chain.index(self.depth)?))
    }

    /// The same set written with atoms of a finer depth.
    pub fn at_depth(&self, depth: usize) -> Result<ClopenSet, CastleError> {
        if depth == self.depth {
            return Ok(self.clone());
        }
        if depth < self.depth {
            return Err(CastleError::Precondition(format!("cannot coarsen depth {} to {depth}", self.depth)));
        }
        let space = Space::new(self.chain.clone(), depth)?;
        let children = space.children(self.depth)?;
        let atoms = self.atoms.iter().flat_map(|&a| children[a].iter().copied()).collect();
        Ok(ClopenSet::new(self.chain.clone(), depth, atoms))
    }

    pub fn contains_point(&self, v: &[BigInt]) -> Result<bool, CastleError> {
        let a = self.chain.cosets(self.depth)?.rank_of(v);
        Ok(self.atoms.binary_search(&a).is_ok())
    }

    pub fn is_disjoint(&self, other: &ClopenSet) -> Result<bool, CastleError> {
        let (a, b) = common_depth(self, other)?;
        Ok(first_shared(&a.atoms, &b.atoms).is_none())
    }
}

fn common_depth(a: &ClopenSet, b: &ClopenSet) -> Result<(ClopenSet, ClopenSet), CastleError> {
    let n = a.depth.max(b.depth);
    Ok((a.at_depth(n)?, b.at_depth(n)?))
}

fn first_shared(a: &[usize], b: &[usize]) -> Option<usize> {
    a.iter().copied().find(|x| b.binary_search(x).is_ok())
}

fn ensure_disjoint(a: &ClopenSet, b: &ClopenSet) -> Result<(), CastleError> {
    match first_shared(&a.atoms, &b.atoms) {
        Some(x) => Err(CastleError::NotDisjoint(x, a.depth)),
        None => Ok(()),
    }
}

/// The first atoms of `b`, at the common depth, whose measure equals `μ(a)`.
pub fn equal_measure_subset(a: &ClopenSet, b: &ClopenSet) -> Result<ClopenSet, CastleError> {
    let (a, b) = common_depth(a, b)?;
    ensure_disjoint(&a, &b)?;
    if a.atoms.len() > b.atoms.len() {
        return Err(CastleError::MeasureTooLarge { requested: Box::new(a.measure()?), available: Box::new(b.measure()?) });
    }
    Ok(ClopenSet::new(b.chain.clone(), b.depth, b.atoms[..a.atoms.len()].to_vec()))
}

/// Splits `b` into consecutive runs matching the measures of `parts`.
pub fn matched_partition(a: &ClopenSet, b: &ClopenSet, parts: &[ClopenSet]) -> Result<Vec<ClopenSet>, CastleError> {
    let n = parts.iter().map(|p| p.depth).chain([a.depth, b.depth]).max().unwrap_or(0);
    let a = a.at_depth(n)?;
    let b = b.at_depth(n)?;
    let parts = parts.iter().map(|p| p.at_depth(n)).collect::<Result<Vec<_>, _>>()?;
    let mut union: Vec<usize> = parts.iter().flat_map(|p| p.atoms.iter().copied()).collect();
    let total = union.len();
    union.sort_unstable();
    union.dedup();
    if union.len() != total || union != a.atoms {
        return Err(CastleError::NotAPartition("parts do not partition the first set".into()));
    }
    if a.atoms.len() != b.atoms.len() {
        return Err(CastleError::MeasureMismatch(Box::new(a.measure()?), Box::new(b.measure()?)));
    }
    let mut out = Vec::with_capacity(parts.len());
    let mut next = 0;
    for p in &parts {
        let chunk = b.atoms[next..next + p.atoms.len()].to_vec();
        next += p.atoms.len();
        out.push(ClopenSet::new(b.chain.clone(), n, chunk));
    }
    Ok(out)
}

/// A map `x ↦ T^{p(x)} x` defined on some atoms of one depth, with `p`
/// constant on atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSpeedup {
    depth: usize,
    palette: Vec<IVec>,
    lookup: HashMap<IVec, u32>,
    slots: Vec<u32>,
}

const UNDEFINED: u32 = u32::MAX;

impl PartialSpeedup {
    pub fn new(depth: usize, size: usize) -> Self {
        PartialSpeedup { depth, palette: Vec::new(), lookup: HashMap::new(), slots: vec![UNDEFINED; size] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn size(&self) -> usize {
        self.slots.len()
    }

    pub fn get(&self, a: usize) -> Option<&IVec> {
        match self.slots[a] {
            UNDEFINED => None,
            i => Some(&self.palette[i as usize]),
        }
    }

    pub fn set(&mut self, a: usize, v: IVec) {
        let next = self.palette.len() as u32;
        let i = *self.lookup.entry(v.clone()).or_insert_with(|| next);
        if i == next {
            self.palette.push(v);
        }
        self.slots[a] = i;
    }

    pub fn clear(&mut self, a: usize) {
        self.slots[a] = UNDEFINED;
    }

    pub fn is_defined(&self, a: usize) -> bool {
        self.slots[a] != UNDEFINED
    }

    pub fn domain(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| **s != UNDEFINED).map(|(a, _)| a)
    }

    /// Distinct vectors with the atoms carrying them.
    pub fn pieces(&self) -> Vec<(IVec, Atoms)> {
        let mut out: Vec<(IVec, Atoms)> = self.palette.iter().map(|v| (v.clone(), Vec::new())).collect();
        for (a, &s) in self.slots.iter().enumerate() {
            if s != UNDEFINED {
                out[s as usize].1.push(a);
            }
        }
        out.retain(|(_, atoms)| !atoms.is_empty());
        out
    }

    /// The same map at a finer depth, given the parent of each fine atom.
    pub fn refine(&self, parents: &[usize], depth: usize) -> PartialSpeedup {
        let slots = parents.iter().map(|&p| self.slots[p]).collect();
        PartialSpeedup { depth, palette: self.palette.clone(), lookup: self.lookup.clone(), slots }
    }

    /// One line per defined atom: `rank vector`.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for a in self.domain() {
            s.push_str(&format!("{a} {}\n", matrix::fmt_ivec(self.get(a).expect("in domain"))));
        }
        s
    }
}

/// Pairs the i-th atom of `a` with the i-th atom of `b` and emits the least
/// cone vector between them. With `avoid = (x_A, x_B)` the vector used on
/// the atom of `x_A` never carries `x_A` to `x_B`.
pub fn cone_transfer_map(a: &ClopenSet, b: &ClopenSet, cone: &Cone, avoid: Option<(&IVec, &IVec)>) -> Result<PartialSpeedup, CastleError> {
    let (a, b) = common_depth(a, b)?;
    ensure_disjoint(&a, &b)?;
    if a.atoms.len() != b.atoms.len() {
        return Err(CastleError::MeasureMismatch(Box::new(a.measure()?), Box::new(b.measure()?)));
    }
    let space = Space::new(a.chain.clone(), a.depth)?;
    let special = avoid.map(|(xa, xb)| (space.atom_of(xa), matrix::sub(xb, xa)));
    let mut out = PartialSpeedup::new(a.depth, space.size());
    for (&v, &w) in a.atoms.iter().zip(&b.atoms) {
        let skip = special.as_ref().filter(|(atom, _)| *atom == v).map(|(_, d)| d);
        out.set(v, space.cone_vector(cone, v, w, skip)?);
    }
    Ok(out)
}

/// A stack of equal-size, pairwise disjoint levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tower {
    pub levels: Vec<Atoms>,
    /// Index of the pretower this tower was cut from.
    pub origin: usize,
}

impl Tower {
    pub fn height(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &[usize] {
        &self.levels[0]
    }

    pub fn top(&self) -> &[usize] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Castle {
    pub depth: usize,
    pub towers: Vec<Tower>,
}

impl Castle {
    pub fn new(depth: usize, towers: Vec<Tower>) -> Self {
        Castle { depth, towers }
    }

    pub fn atom_count(&self) -> usize {
        self.towers.iter().flat_map(|t| &t.levels).map(Vec::len).sum()
    }

    /// Tower and level of every atom, or the first atom found twice.
    pub fn locate(&self, size: usize) -> Result<Vec<Option<(usize, usize)>>, CastleError> {
        let mut at = vec![None; size];
        for (t, tower) in self.towers.iter().enumerate() {
            for (v, level) in tower.levels.iter().enumerate() {
                for &a in level {
                    if at[a].replace((t, v)).is_some() {
                        return Err(CastleError::NotDisjoint(a, self.depth));
                    }
                }
            }
        }
        Ok(at)
    }

    /// Union of level `v` over all towers (`v = usize::MAX` means each top).
    pub fn level_union(&self, v: usize) -> Atoms {
        let mut out: Atoms = self
            .towers
            .iter()
            .flat_map(|t| if v == usize::MAX { t.top() } else { t.levels.get(v).map(Vec::as_slice).unwrap_or(&[]) }.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// The column through `base`: `base, S base, S² base, …` for `height` atoms.
pub fn column(space: &Space, s: &PartialSpeedup, base: usize, height: usize) -> Result<Vec<usize>, CastleError> {
    let mut col = Vec::with_capacity(height);
    let mut a = base;
    col.push(a);
    for v in 1..height {
        let p = s.get(a).ok_or_else(|| CastleError::NotACastle(format!("atom {a} at level {} has no vector", v - 1)))?;
        a = space.step(a, p);
        col.push(a);
    }
    Ok(col)
}

fn columns_of(space: &Space, s: &PartialSpeedup, tower: &Tower) -> Result<Vec<Vec<usize>>, CastleError> {
    let h = tower.height();
    let cols = tower.base().iter().map(|&b| column(space, s, b, h)).collect::<Result<Vec<_>, _>>()?;
    for v in 0..h {
        let mut level: Atoms = cols.iter().map(|c| c[v]).collect();
        level.sort_unstable();
        if level != tower.levels[v] {
            return Err(CastleError::NotACastle(format!("the map does not carry level {} onto level {}", v.saturating_sub(1), v)));
        }
    }
    Ok(cols)
}

fn tower_from_columns(cols: &[&Vec<usize>], origin: usize) -> Tower {
    let h = cols.first().map_or(0, |c| c.len());
    let levels = (0..h)
        .map(|v| {
            let mut l: Atoms = cols.iter().map(|c| c[v]).collect();
            l.sort_unstable();
            l
        })
        .collect();
    Tower { levels, origin }
}

/// Splits every tower into the columns sharing one sequence of names, in
/// order of first appearance along the sorted base.
pub fn refine_pure_columns(space: &Space, castle: &Castle, s: &PartialSpeedup, name: impl Fn(usize) -> usize) -> Result<Castle, CastleError> {
    let mut towers = Vec::new();
    for tower in &castle.towers {
        let cols = columns_of(space, s, tower)?;
        let mut groups: Vec<(Vec<usize>, Vec<&Vec<usize>>)> = Vec::new();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in &cols {
            let key: Vec<usize> = c.iter().map(|&a| name(a)).collect();
            let g = *index.entry(key.clone()).or_insert_with(|| {
                groups.push((key, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(c);
        }
        towers.extend(groups.iter().map(|(_, cs)| tower_from_columns(cs, tower.origin)));
    }
    Ok(Castle::new(castle.depth, towers))
}

/// Moves points sharing a tower into towers of their own. The first point in
/// each tower stays with the remaining columns.
pub fn separate_points(space: &Space, castle: &Castle, s: &PartialSpeedup, points: &[IVec]) -> Result<Castle, CastleError> {
    if points.is_empty() {
        return Ok(castle.clone());
    }
    let at = castle.locate(space.size())?;
    let mut out = Vec::new();
    let mut hits: Vec<Vec<usize>> = vec![Vec::new(); castle.towers.len()];
    for p in points {
        let a = space.atom_of(p);
        let (t, _) = at[a].ok_or_else(|| CastleError::NotACastle(format!("point atom {a} is outside the castle")))?;
        hits[t].push(a);
    }
    for (t, tower) in castle.towers.iter().enumerate() {
        if hits[t].len() < 2 {
            out.push(tower.clone());
            continue;
        }
        let cols = columns_of(space, s, tower)?;
        let owner: Vec<usize> = hits[t]
            .iter()
            .map(|&a| cols.iter().position(|c| c.contains(&a)).expect("atom lies in its tower"))
            .collect();
        for (i, &c) in owner.iter().enumerate() {
            if owner[..i].contains(&c) {
                return Err(CastleError::SharedColumn(hits[t][i]));
            }
        }
        let rest: Vec<&Vec<usize>> = cols.iter().enumerate().filter(|(i, _)| !owner[1..].contains(i)).map(|(_, c)| c).collect();
        out.push(tower_from_columns(&rest, tower.origin));
        for &c in &owner[1..] {
            out.push(tower_from_columns(&[&cols[c]], tower.origin));
        }
    }
    Ok(Castle::new(castle.depth, out))
}

/// Splits tower `α` along the given partition of its base.
pub fn castle_refinement_over(space: &Space, castle: &Castle, s: &PartialSpeedup, partitions: &[Vec<Atoms>]) -> Result<Castle, CastleError> {
    if partitions.len() != castle.towers.len() {
        return Err(CastleError::NotAPartition(format!("{} partitions for {} towers", partitions.len(), castle.towers.len())));
    }
    let mut out = Vec::new();
    for (t, (tower, parts)) in castle.towers.iter().zip(partitions).enumerate() {
        let mut union: Atoms = parts.iter().flatten().copied().collect();
        let total = union.len();
        union.sort_unstable();
        union.dedup();
        if union.len() != total || union != tower.levels[0] {
            return Err(CastleError::NotAPartition(format!("tower {t}: parts do not partition the base")));
        }
        let cols = columns_of(space, s, tower)?;
        for part in parts.iter().filter(|p| !p.is_empty()) {
            let chosen: Vec<&Vec<usize>> = cols.iter().filter(|c| part.contains(&c[0])).collect();
            out.push(tower_from_columns(&chosen, tower.origin));
        }
    }
    Ok(Castle::new(castle.depth, out))
}

fn to_usize(n: &BigInt, depth: usize) -> Result<usize, CastleError> {
    n.to_usize().filter(|&x| x <= ATOM_LIMIT).ok_or(CastleError::TooLarge(depth))
}

#[cfg(test)]
mod tests;
