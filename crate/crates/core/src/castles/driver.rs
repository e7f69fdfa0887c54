//! Finite-stage driver: builds castles over a ℤ^d source and a ℤ target
//! together with a partial cone speedup of the source, one stage at a time.

use super::*;
use num_traits::{One, Zero};

#[derive(Debug, Clone)]
pub struct ConstructionConfig {
    pub cone: Cone,
    /// `x₂ = T^{-u} x₀`; defaults to the least cone member.
    pub u: Option<IVec>,
    /// Overrides the minimal `n₀`.
    pub n0: Option<usize>,
    /// How many admissible depths to try per stage before giving up.
    pub depth_slack: usize,
}

impl ConstructionConfig {
    pub fn new(cone: Cone) -> Self {
        ConstructionConfig { cone, u: None, n0: None, depth_slack: 4 }
    }
}

/// Everything produced by one stage.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub k: usize,
    pub n: usize,
    pub epsilon: BigRational,
    /// Height `h = [ℤ : G₂(n)]` of every tower.
    pub height: usize,
    pub depth: usize,
    pub target_depth: usize,
    pub cylinder_depth: usize,
    pub a0: Atoms,
    pub a2: Atoms,
    /// Base and top of the source castle.
    pub boundary: Atoms,
    pub pretowers: usize,
    pub source: Castle,
    pub target: Castle,
    pub speedup: PartialSpeedup,
    /// The previous stage's speedup written at this depth.
    pub previous: Option<PartialSpeedup>,
    pub f: Atoms,
    pub r: Atoms,
    pub x0_atom: usize,
    pub x2_atom: usize,
}

#[derive(Debug, Clone)]
pub struct ConstructionState {
    pub source: Arc<OdometerChain>,
    pub target: Arc<OdometerChain>,
    pub cone: Cone,
    pub u: IVec,
    pub x0: IVec,
    pub x2: IVec,
    /// `A_{q,k}` is the depth `k + 1 + cylinder_offset` cylinder of `x_q`.
    pub cylinder_offset: usize,
    pub n0_override: Option<usize>,
    pub depth_slack: usize,
    pub stages: Vec<StageRecord>,
}

const SEARCH_SPAN: usize = 64;

/// Slot layout before any swap: `slots[s][v]` is the atom at level `v` of
/// column slot `s`.
struct Layout {
    slots: Vec<Vec<usize>>,
    origin: Vec<usize>,
    bases: Vec<Atoms>,
    previous: Option<PartialSpeedup>,
    block: usize,
}

impl ConstructionState {
    pub fn new(source: Arc<OdometerChain>, target: Arc<OdometerChain>, config: ConstructionConfig) -> Result<Self, CastleError> {
        if target.dim() != 1 {
            return Err(CastleError::Precondition(format!("target must be a ℤ-odometer, got dimension {}", target.dim())));
        }
        if config.cone.dim() != source.dim() {
            return Err(CastleError::Precondition(format!("cone dimension {} differs from source dimension {}", config.cone.dim(), source.dim())));
        }
        let vs = source.clopen_value_group()?;
        let vt = target.clopen_value_group()?;
        if let Some(q) = vs.separating_element(&vt) {
            return Err(CastleError::ValueGroupMismatch(q));
        }
        for (name, chain) in [("source", &source), ("target", &target)] {
            if chain.freeness_evidence(1, None)?.certified_not_free {
                return Err(CastleError::Precondition(format!("{name} chain is eventually constant, so its action is not free")));
            }
        }
        let u = match config.u {
            Some(u) => u,
            None => config.cone.min_member()?,
        };
        if !config.cone.contains(&u) {
            return Err(CastleError::Precondition(format!("u = {} is not in the cone", matrix::fmt_ivec(&u))));
        }
        let x0 = vec![BigInt::zero(); source.dim()];
        let x2 = matrix::neg(&u);
        let mut offset = 0;
        while source.stage(1 + offset)?.contains(&x2).map_err(OdometerError::from)? {
            offset += 1;
            if offset > SEARCH_SPAN {
                return Err(CastleError::Precondition("x₀ and x₂ are not separated by any cylinder".into()));
            }
        }
        Ok(ConstructionState {
            source,
            target,
            cone: config.cone,
            u,
            x0,
            x2,
            cylinder_offset: offset,
            n0_override: config.n0,
            depth_slack: config.depth_slack,
            stages: Vec::new(),
        })
    }

    pub fn cylinder_depth(&self, k: usize) -> usize {
        k + 1 + self.cylinder_offset
    }

    /// `μ(A_{0,k})`.
    pub fn a0_measure(&self, k: usize) -> Result<BigRational, CastleError> {
        Ok(BigRational::new(BigInt::one(), self.source.index(self.cylinder_depth(k))?))
    }

    /// `(n_k, ε_k)` as the least values meeting the stage inequalities.
    pub fn parameters(&self, k: usize) -> Result<(usize, BigRational), CastleError> {
        let two = BigRational::from_integer(BigInt::from(2));
        let a = self.a0_measure(k)?;
        if k == 0 {
            let atom = |n: usize| -> Result<BigRational, CastleError> { Ok(BigRational::new(BigInt::one(), self.target.index(n)?)) };
            let n = match self.n0_override {
                Some(n) => {
                    let m = atom(n)?;
                    if m >= a {
                        return Err(CastleError::Precondition(format!(
                            "ε₀ must satisfy 0 < ε₀ < μ(A_{{0,0}}) = {a}, but atoms of the depth-{n} target partition have measure {m}"
                        )));
                    }
                    n
                }
                None => (1..=SEARCH_SPAN)
                    .find(|&n| atom(n).map(|m| m < a).unwrap_or(false))
                    .ok_or_else(|| CastleError::Precondition("no target depth has atoms smaller than A_{0,0}".into()))?,
            };
            let eps = (atom(n)? + a) / two;
            return Ok((n, eps));
        }
        let prev_n = self.stages.get(k - 1).map(|s| s.n).ok_or_else(|| CastleError::Precondition(format!("stage {} not built", k - 1)))?;
        let sum = (0..k).map(|j| self.a0_measure(j)).sum::<Result<BigRational, _>>()?;
        let bound = a.clone().min(&a / (BigRational::from_integer(BigInt::from(24)) * sum));
        let cap = bound.clone().min(&a / BigRational::from_integer(BigInt::from(3)));
        for n in prev_n + 1..=prev_n + SEARCH_SPAN {
            let b = self.target.boundary_measure(n)?;
            if b < cap {
                return Ok((n, (b + bound) / two));
            }
        }
        Err(CastleError::DepthExhausted(k))
    }

    /// Builds the next stage.
    pub fn next_stage(&mut self) -> Result<&StageRecord, CastleError> {
        let k = self.stages.len();
        let (n, eps) = self.parameters(k)?;
        let h = super::to_usize(&self.target.index(n)?, n)?;
        let (prev_d, prev_m) = self.stages.last().map_or((0, n), |s| (s.depth, s.target_depth));
        let lower = prev_d.max(self.cylinder_depth(k)).max(k + 1);
        let mut tried = 0;
        for d in lower..lower + SEARCH_SPAN {
            let size = self.source.index(d)?;
            if size > BigInt::from(ATOM_LIMIT) {
                break;
            }
            if size < BigInt::from(2 * h) {
                continue;
            }
            let Some(m) = self.matching_target_depth(&size, prev_m.max(n))? else { continue };
            match self.attempt(k, n, eps.clone(), d, m) {
                Ok(rec) => {
                    self.stages.push(rec);
                    return Ok(self.stages.last().expect("just pushed"));
                }
                Err(CastleError::NeedDeeper(_)) => {
                    tried += 1;
                    if tried > self.depth_slack {
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(CastleError::DepthExhausted(k))
    }

    pub fn run(&mut self, stages: usize) -> Result<(), CastleError> {
        while self.stages.len() < stages {
            self.next_stage()?;
        }
        Ok(())
    }

    fn matching_target_depth(&self, size: &BigInt, lower: usize) -> Result<Option<usize>, CastleError> {
        let mut m = lower;
        loop {
            let idx = self.target.index(m)?;
            if &idx == size {
                return Ok(Some(m));
            }
            if &idx > size || m > lower + SEARCH_SPAN {
                return Ok(None);
            }
            m += 1;
        }
    }

    fn base_layout(&self, size: usize, h: usize) -> Layout {
        let c = size / h;
        let slots = (0..c).map(|i| (0..h).map(|v| v * c + i).collect()).collect();
        Layout { slots, origin: vec![0; c], bases: vec![(0..size).step_by(h).collect()], previous: None, block: h }
    }

    /// Stacks the previous towers, refined to depth `d`, in the order in which
    /// the new target columns pass through the previous target towers.
    fn stacked_layout(&self, src: &Space, size2: usize, h: usize) -> Result<Layout, CastleError> {
        let prev = self.stages.last().expect("inductive stage has a predecessor");
        let hp = prev.height;
        let parents = src.parents(prev.depth)?;
        let previous = prev.speedup.refine(&parents, src.depth());
        let mut children: HashMap<usize, Vec<usize>> = HashMap::new();
        for (a, &p) in parents.iter().enumerate() {
            children.entry(p).or_default().push(a);
        }
        let mut pools: Vec<std::collections::VecDeque<Vec<usize>>> = Vec::with_capacity(prev.source.towers.len());
        for tower in &prev.source.towers {
            let mut pool = std::collections::VecDeque::new();
            for b in tower.base() {
                for &c in children.get(b).map(Vec::as_slice).unwrap_or(&[]) {
                    pool.push_back(column(src, &previous, c, hp)?);
                }
            }
            pools.push(pool);
        }
        let size2_prev = super::to_usize(&self.target.index(prev.target_depth)?, prev.target_depth)?;
        let mut owner = vec![u32::MAX; size2_prev];
        for (t, tower) in prev.target.towers.iter().enumerate() {
            for &r in tower.base() {
                owner[r] = t as u32;
            }
        }
        let blocks = h / hp;
        let mut names: Vec<Vec<u32>> = Vec::new();
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut bases: Vec<Atoms> = Vec::new();
        for r in (0..size2).step_by(h) {
            let name: Vec<u32> = (0..blocks).map(|b| owner[(r + b * hp) % size2_prev]).collect();
            if name.contains(&u32::MAX) {
                return Err(CastleError::NotACastle(format!("target residue {r} misses the previous bases")));
            }
            let beta = *index.entry(name.clone()).or_insert_with(|| {
                names.push(name);
                bases.push(Vec::new());
                names.len() - 1
            });
            bases[beta].push(r);
        }
        let mut slots = Vec::new();
        let mut origin = Vec::new();
        for (beta, name) in names.iter().enumerate() {
            for _ in 0..bases[beta].len() {
                let mut col = Vec::with_capacity(h);
                for &alpha in name {
                    let piece = pools[alpha as usize]
                        .pop_front()
                        .ok_or_else(|| CastleError::NotACastle(format!("previous tower {alpha} is too small")))?;
                    col.extend(piece);
                }
                slots.push(col);
                origin.push(beta);
            }
        }
        if pools.iter().any(|p| !p.is_empty()) {
            return Err(CastleError::NotACastle("previous towers not used up".into()));
        }
        Ok(Layout { slots, origin, bases, previous: Some(previous), block: hp })
    }

    fn attempt(&self, k: usize, n: usize, epsilon: BigRational, d: usize, m: usize) -> Result<StageRecord, CastleError> {
        let src = Space::new(self.source.clone(), d)?;
        let size = src.size();
        let size2 = Space::new(self.target.clone(), m)?.size();
        let h = super::to_usize(&self.target.index(n)?, n)?;
        let cyl = self.cylinder_depth(k);
        let cyl_parent = src.parents(cyl)?;
        let x0a = src.atom_of(&self.x0);
        let x2a = src.atom_of(&self.x2);
        let a0: Atoms = (0..size).filter(|&a| cyl_parent[a] == cyl_parent[x0a]).collect();
        let a2: Atoms = (0..size).filter(|&a| cyl_parent[a] == cyl_parent[x2a]).collect();

        let Layout { mut slots, origin, bases, previous, block } =
            if k == 0 { self.base_layout(size, h) } else { self.stacked_layout(&src, size2, h)? };
        let inductive = previous.is_some();
        let mut pos = vec![(usize::MAX, 0usize); size];
        for (s, col) in slots.iter().enumerate() {
            for (v, &a) in col.iter().enumerate() {
                pos[a] = (s, v);
            }
        }
        if pos.iter().any(|p| p.0 == usize::MAX) {
            return Err(CastleError::NotACastle("layout does not cover the space".into()));
        }

        // Step 2: move A_q into level q, base first and then top.
        let mut swapped: Vec<usize> = Vec::new();
        for (q, set, xq) in [(0, &a0, x0a), (h - 1, &a2, x2a)] {
            let in_set = |a: usize| set.binary_search(&a).is_ok();
            let excluded = |a: usize, pos: &[(usize, usize)]| {
                let v = pos[a].1;
                v == q || (inductive && (v == 0 || v == h - 1))
            };
            let level: Vec<usize> = slots.iter().map(|c| c[q]).collect();
            let mut out: Vec<usize> = level.iter().copied().filter(|&a| !in_set(a)).collect();
            out.sort_unstable();
            let mut incoming: Vec<usize> = set.iter().copied().filter(|&a| !excluded(a, &pos)).take(out.len()).collect();
            if incoming.len() < out.len() {
                return Err(CastleError::NeedDeeper(format!("A_{q} too small to fill level {q}")));
            }
            if pos[xq].1 != q && !incoming.contains(&xq) {
                if out.is_empty() {
                    out.push(*level.iter().max().expect("levels are nonempty"));
                } else {
                    incoming.pop();
                }
                incoming.push(xq);
            }
            incoming.sort_by_key(|&a| pos[a]);
            for (&a, &b) in out.iter().zip(&incoming) {
                let (pa, pb) = (pos[a], pos[b]);
                slots[pa.0][pa.1] = b;
                slots[pb.0][pb.1] = a;
                pos[a] = pb;
                pos[b] = pa;
                swapped.push(a);
                swapped.push(b);
            }
        }
        swapped.sort_unstable();
        swapped.dedup();
        let mut in_f = vec![false; size];
        for &a in &swapped {
            in_f[a] = true;
        }

        // Step 3: keep the previous vectors inside blocks where nothing moved,
        // and transfer the rest with least cone vectors.
        let mut s = PartialSpeedup::new(d, size);
        let mut cache: HashMap<usize, IVec> = HashMap::new();
        let mut fresh = vec![false; size];
        let mut redefined: Vec<usize> = Vec::new();
        for v in 0..h - 1 {
            let edge = !inductive || (v + 1) % block == 0;
            let mut taken = HashMap::new();
            let mut from: Vec<usize> = Vec::new();
            for col in &slots {
                let a = col[v];
                if !edge {
                    if let Some(p) = previous.as_ref().and_then(|ps| ps.get(a)).filter(|_| !in_f[a]) {
                        let b = src.step(a, p);
                        if !in_f[b] && pos[b].1 == v + 1 {
                            s.set(a, p.clone());
                            taken.insert(b, ());
                            continue;
                        }
                    }
                    redefined.push(a);
                }
                from.push(a);
            }
            from.sort_unstable();
            let mut to: Vec<usize> = slots.iter().map(|c| c[v + 1]).filter(|b| !taken.contains_key(b)).collect();
            to.sort_unstable();
            for (&a, &b) in from.iter().zip(&to) {
                let p = transfer(&src, &self.cone, &mut cache, a, b)?;
                s.set(a, p);
                fresh[a] = true;
            }
        }

        // Keep x₂ off the column of x₀ by re-pairing its last fresh step.
        let col0 = column(&src, &s, x0a, h)?;
        if col0[h - 1] == x2a {
            let t = (0..h - 1).rev().find(|&v| fresh[col0[v]]).ok_or_else(|| CastleError::NeedDeeper("x₀ column has no free step".into()))?;
            let star = col0[t];
            let mut others: Vec<usize> = slots.iter().map(|c| c[t]).filter(|&a| a != star && fresh[a]).collect();
            others.sort_unstable();
            let Some(&alt) = others.first() else {
                return Err(CastleError::NeedDeeper("one column per level cannot separate x₀ from x₂".into()));
            };
            let b_star = col0[t + 1];
            let b_alt = src.step(alt, s.get(alt).expect("fresh atoms carry vectors"));
            let p_star = transfer(&src, &self.cone, &mut cache, star, b_alt)?;
            let p_alt = transfer(&src, &self.cone, &mut cache, alt, b_star)?;
            s.set(star, p_star);
            s.set(alt, p_alt);
        }

        let (f, r) = if inductive {
            let mut r = swapped.clone();
            r.extend(&redefined);
            r.sort_unstable();
            r.dedup();
            (swapped, r)
        } else {
            (Vec::new(), Vec::new())
        };

        // Step 4: pretowers, separation of x₀ and x₂, pure columns.
        let mut groups: Vec<Vec<Vec<usize>>> = vec![Vec::new(); bases.len()];
        for (sl, col) in slots.iter().enumerate() {
            groups[origin[sl]].push(column(&src, &s, col[0], h)?);
        }
        let pre = Castle::new(
            d,
            groups.iter().enumerate().map(|(beta, cols)| super::tower_from_columns(&cols.iter().collect::<Vec<_>>(), beta)).collect(),
        );
        let separated = match separate_points(&src, &pre, &s, &[self.x0.clone(), self.x2.clone()]) {
            Err(CastleError::SharedColumn(a)) => return Err(CastleError::NeedDeeper(format!("x₀ and x₂ share the column through {a}"))),
            other => other?,
        };
        let names = src.parents(k + 1)?;
        let source = refine_pure_columns(&src, &separated, &s, |a| names[a])?;

        // Step 5: cut each target pretower in the proportions of the source towers.
        let mut next = vec![0usize; bases.len()];
        let mut towers2 = Vec::with_capacity(source.towers.len());
        for tower in &source.towers {
            let beta = tower.origin;
            let c = tower.base().len();
            let chunk = bases[beta].get(next[beta]..next[beta] + c).ok_or_else(|| CastleError::NotACastle(format!("target pretower {beta} is too small")))?;
            next[beta] += c;
            let levels = (0..h).map(|v| chunk.iter().map(|&r| r + v).collect()).collect();
            towers2.push(Tower { levels, origin: beta });
        }
        if next.iter().zip(&bases).any(|(n, b)| *n != b.len()) {
            return Err(CastleError::NotACastle("target pretowers not used up".into()));
        }
        let target = Castle::new(m, towers2);

        let mut boundary: Atoms = slots.iter().flat_map(|c| [c[0], c[h - 1]]).collect();
        boundary.sort_unstable();
        Ok(StageRecord {
            k,
            n,
            epsilon,
            height: h,
            depth: d,
            target_depth: m,
            cylinder_depth: cyl,
            a0,
            a2,
            boundary,
            pretowers: bases.len(),
            source,
            target,
            speedup: s,
            previous,
            f,
            r,
            x0_atom: x0a,
            x2_atom: x2a,
        })
    }
}

/// Least cone vector from atom `a` to atom `b`, memoized by the coset of the
/// difference.
fn transfer(space: &Space, cone: &Cone, cache: &mut HashMap<usize, IVec>, a: usize, b: usize) -> Result<IVec, CastleError> {
    let diff = matrix::sub(&space.rep(b), &space.rep(a));
    let key = space.atom_of(&diff);
    if let Some(p) = cache.get(&key) {
        return Ok(p.clone());
    }
    let p = cone.min_member_in_coset(space.lattice(), &diff, None)?;
    cache.insert(key, p.clone());
    Ok(p)
}
