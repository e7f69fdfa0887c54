//! Exact audits of the stage invariants.

use super::*;
use num_traits::One;
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub family: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub stage: usize,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn family_passed(&self, family: u8) -> bool {
        self.entries.iter().filter(|e| e.family == family).all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    fn push(&mut self, family: u8, name: &str, passed: bool, detail: impl Into<String>, witness: Option<usize>) {
        self.entries.push(AuditEntry { family, name: name.into(), passed, detail: detail.into(), witness });
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            write!(f, "stage {} ({}) {}: {}", self.stage, e.family, e.name, if e.passed { "pass" } else { "FAIL" })?;
            if !e.detail.is_empty() {
                write!(f, " {}", e.detail)?;
            }
            if let Some(w) = e.witness {
                write!(f, " witness atom {w}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Checks the seven invariant families at stage `k`. A stage that was never
/// built gives an empty, passing report.
pub fn verify_stage_invariants(state: &ConstructionState, k: usize) -> AuditReport {
    let mut report = AuditReport { stage: k, entries: Vec::new() };
    let Some(rec) = state.stages.get(k) else { return report };
    if let Err(e) = audit(state, rec, &mut report) {
        report.push(0, "audit", false, e.to_string(), None);
    }
    report
}

fn first_missing(sub: &[usize], sup: &HashSet<usize>) -> Option<usize> {
    sub.iter().copied().find(|a| !sup.contains(a))
}

fn audit(state: &ConstructionState, rec: &StageRecord, report: &mut AuditReport) -> Result<(), CastleError> {
    let k = rec.k;
    let src = Space::new(state.source.clone(), rec.depth)?;
    let size = src.size();
    let tgt = Space::new(state.target.clone(), rec.target_depth)?;
    let size2 = tgt.size();
    let h = rec.height;
    let s = &rec.speedup;
    let a_k = state.a0_measure(k)?;

    // (1) stage parameters.
    let three = BigRational::from_integer(BigInt::from(3));
    if k == 0 {
        let atom = BigRational::new(BigInt::one(), state.target.index(rec.n)?);
        let ok = atom < rec.epsilon && rec.epsilon < a_k;
        report.push(1, "epsilon", ok, format!("1/{} < ε₀ = {} < μ(A_0,0) = {a_k}", h, rec.epsilon), None);
    } else {
        let prev = &state.stages[k - 1];
        report.push(1, "n increasing", rec.n > prev.n, format!("n = {} after {}", rec.n, prev.n), None);
        let sum = (0..k).map(|j| state.a0_measure(j)).sum::<Result<BigRational, _>>()?;
        let lhs = BigRational::from_integer(BigInt::from(8)) * &rec.epsilon * sum;
        let ok = rec.epsilon > BigRational::from_integer(0.into()) && lhs < &a_k / &three && rec.epsilon < a_k;
        report.push(1, "epsilon", ok, format!("8·ε·Σμ(A_0,j) = {lhs} < μ(A_0,k)/3"), None);
        let b = state.target.boundary_measure(rec.n)?;
        let ok = b < rec.epsilon && b < &a_k / &three;
        report.push(1, "boundary", ok, format!("μ(∂P₂(n)) = {b} < min(ε, μ(A_0,k)/3)"), None);
    }

    // (2) tower bookkeeping.
    let names = src.parents(k + 1)?;
    let t = rec.source.towers.len();
    let heights = rec.source.towers.iter().all(|tw| tw.height() == h && !tw.base().is_empty());
    report.push(2, "towers", t >= 1 && heights, format!("t = {t}, height {h}"), None);
    let mut keys = HashSet::new();
    for tw in &rec.source.towers {
        let name: Vec<usize> = tw.levels.iter().map(|l| names[l[0]]).collect();
        let flag = if tw.levels.iter().any(|l| l.contains(&rec.x0_atom)) {
            1
        } else if tw.levels.iter().any(|l| l.contains(&rec.x2_atom)) {
            2
        } else {
            0
        };
        keys.insert((tw.origin, name, flag));
    }
    report.push(2, "distinct towers", keys.len() == t, format!("{} keys for {t} towers", keys.len()), None);

    // (3) size of the swapped set.
    let mu_f = src.measure(rec.f.len());
    let bound = BigRational::from_integer(BigInt::from(4)) * &a_k;
    report.push(3, "swap measure", mu_f <= bound, format!("μ(F) = {mu_f} ≤ 4μ(A_0,k) = {bound}"), None);

    // (4) redefinitions come from swaps.
    let f: HashSet<usize> = rec.f.iter().copied().collect();
    let mut allowed = f.clone();
    if let Some(prev) = &rec.previous {
        for a in prev.domain() {
            if f.contains(&src.step(a, prev.get(a).expect("in domain"))) {
                allowed.insert(a);
            }
        }
    }
    let w = first_missing(&rec.r, &allowed);
    report.push(4, "R inside F and its preimage", w.is_none(), format!("|R| = {}", rec.r.len()), w);

    // (5) shape of the source and target castles.
    let mut impure = None;
    for tw in &rec.source.towers {
        for l in &tw.levels {
            if let Some(&a) = l.iter().find(|&&a| names[a] != names[l[0]]) {
                impure.get_or_insert(a);
            }
        }
    }
    report.push(5, "levels refine P₁(k)", impure.is_none(), format!("depth {}", k + 1), impure);
    for (q, set, xq, label) in [(0, &rec.a0, rec.x0_atom, "x₀ in base ⊆ A_0"), (usize::MAX, &rec.a2, rec.x2_atom, "x₂ in top ⊆ A_2")] {
        let level = rec.source.level_union(q);
        let inside: HashSet<usize> = set.iter().copied().collect();
        let w = first_missing(&level, &inside).or(if level.contains(&xq) { None } else { Some(xq) });
        report.push(5, label, w.is_none(), "", w);
    }
    let mut bad = None;
    for tw in &rec.target.towers {
        for (v, l) in tw.levels.iter().enumerate() {
            if let Some(&r) = l.iter().find(|&&r| r % h != v) {
                bad.get_or_insert(r);
            }
        }
    }
    report.push(5, "target levels follow P₂(n)", bad.is_none(), "", bad);
    let src_at = rec.source.locate(size);
    let covered = matches!(&src_at, Ok(at) if at.iter().all(Option::is_some));
    let tgt_at = rec.target.locate(size2);
    let covered2 = matches!(&tgt_at, Ok(at) if at.iter().all(Option::is_some));
    report.push(5, "castles partition", covered && covered2, format!("{size} source atoms, {size2} target atoms"), None);

    // (6) the partial speedup.
    let mut domain_ok = true;
    let mut castle_ok = true;
    let mut witness = None;
    for tw in &rec.source.towers {
        for (v, l) in tw.levels.iter().enumerate() {
            let top = v + 1 == tw.height();
            if let Some(&a) = l.iter().find(|&&a| s.is_defined(a) == top) {
                domain_ok = false;
                witness.get_or_insert(a);
            }
            if !top {
                let mut img: Atoms = l.iter().filter_map(|&a| s.get(a).map(|p| src.step(a, p))).collect();
                img.sort_unstable();
                castle_ok &= img == tw.levels[v + 1];
            }
        }
    }
    report.push(6, "domain is the non-top levels", domain_ok, "", witness);
    report.push(6, "castle property", castle_ok, "", None);
    let mut cone_bad = s.pieces().into_iter().find(|(p, _)| !state.cone.contains(p)).map(|(_, atoms)| atoms[0]);
    let mut x0_column = None;
    if castle_ok {
        for tw in &rec.source.towers {
            for &b in tw.base() {
                let col = column(&src, s, b, h)?;
                let mut sum = vec![BigInt::from(0); src.chain().dim()];
                for &a in &col[..h - 1] {
                    sum = matrix::add(&sum, s.get(a).expect("non-top"));
                    if !state.cone.contains(&sum) {
                        cone_bad.get_or_insert(b);
                    }
                    if b == rec.x0_atom && sum == matrix::sub(&state.x2, &state.x0) {
                        x0_column.get_or_insert(a);
                    }
                }
                if b == rec.x0_atom && col.contains(&rec.x2_atom) {
                    x0_column.get_or_insert(rec.x2_atom);
                }
            }
        }
    }
    report.push(6, "cone membership", cone_bad.is_none(), format!("{} distinct vectors", s.pieces().len()), cone_bad);
    let separated = castle_ok && x0_column.is_none();
    report.push(6, "x₀ and x₂ in distinct columns", separated, "", x0_column);
    let mut changed = None;
    if let Some(prev) = &rec.previous {
        let r: HashSet<usize> = rec.r.iter().copied().collect();
        changed = prev.domain().find(|&a| !r.contains(&a) && s.is_defined(a) && s.get(a) != prev.get(a));
    }
    report.push(6, "agrees with previous off R", changed.is_none(), "", changed);

    // (7) the level bijection.
    let t2 = rec.target.towers.len();
    let shapes = t2 == t
        && rec.source.towers.iter().zip(&rec.target.towers).all(|(a, b)| a.height() == b.height() && a.base().len() == b.base().len());
    report.push(7, "matching towers", shapes, format!("{t} source, {t2} target"), None);
    let measures = size == size2
        && rec.source.towers.iter().zip(&rec.target.towers).all(|(a, b)| a.levels.iter().zip(&b.levels).all(|(x, y)| x.len() == y.len()));
    report.push(7, "measure preserving", measures, "", None);
    let mut intertwine = castle_ok;
    for tw in &rec.target.towers {
        for v in 0..tw.height().saturating_sub(1) {
            let mut img: Atoms = tw.levels[v].iter().map(|&r| (r + 1) % size2).collect();
            img.sort_unstable();
            intertwine &= img == tw.levels[v + 1];
        }
    }
    report.push(7, "intertwining on non-top levels", intertwine, "", None);
    Ok(())
}

/// Stabilization across a whole run, measured on the atoms of the last stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub atoms: usize,
    /// Atoms redefined more than once after leaving `A_0 ∪ A_2 ∪ ∂`.
    pub violations: usize,
    pub max_changes: usize,
}

impl RunReport {
    pub fn stable(&self) -> bool {
        self.violations == 0
    }
}

pub fn verify_run(state: &ConstructionState) -> Result<RunReport, CastleError> {
    let Some(last) = state.stages.last() else {
        return Ok(RunReport { atoms: 0, violations: 0, max_changes: 0 });
    };
    let space = Space::new(state.source.clone(), last.depth)?;
    let n = space.size();
    let mut changes = vec![0usize; n];
    let mut after_exit = vec![0usize; n];
    let mut exited = vec![false; n];
    for rec in &state.stages {
        let anc = space.parents(rec.depth)?;
        let r: HashSet<usize> = rec.r.iter().copied().collect();
        let special: HashSet<usize> = rec.a0.iter().chain(&rec.a2).chain(&rec.boundary).copied().collect();
        for a in 0..n {
            let p = anc[a];
            if r.contains(&p) {
                changes[a] += 1;
                if exited[a] {
                    after_exit[a] += 1;
                }
            }
            if !special.contains(&p) {
                exited[a] = true;
            }
        }
    }
    Ok(RunReport {
        atoms: n,
        violations: after_exit.iter().filter(|&&c| c > 1).count(),
        max_changes: changes.into_iter().max().unwrap_or(0),
    })
}
