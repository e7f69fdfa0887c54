use super::*;
use crate::matrix::ivec;
use num_traits::One;

fn source() -> Arc<OdometerChain> {
    Arc::new(OdometerChain::diagonal_power(&[3, 2], &[1, 1]).unwrap())
}

fn target() -> Arc<OdometerChain> {
    Arc::new(OdometerChain::diagonal_power(&[6], &[1]).unwrap())
}

fn set(depth: usize, atoms: &[usize]) -> ClopenSet {
    ClopenSet::new(source(), depth, atoms.to_vec())
}

#[test]
fn subset_takes_first_atoms() {
    let b = equal_measure_subset(&set(1, &[0]), &set(1, &[2, 3, 5])).unwrap();
    assert_eq!(b.atoms(), &[2]);
    let b = equal_measure_subset(&set(1, &[0, 1]), &set(1, &[2, 3])).unwrap();
    assert_eq!(b.atoms(), &[2, 3]);
}

#[test]
fn subset_at_mixed_depths() {
    // 5/36 against 7/36: five depth-2 atoms.
    let a = set(2, &[0, 1, 2, 3, 4]);
    let b = set(2, &[5, 6, 7, 8, 9, 10, 11]);
    let out = equal_measure_subset(&a, &b).unwrap();
    assert_eq!(out.atoms().len(), 5);
    assert_eq!(out.measure().unwrap(), BigRational::new(5.into(), 36.into()));
    // one depth-1 atom is six depth-2 atoms
    let out = equal_measure_subset(&set(1, &[1]), &b).unwrap();
    assert_eq!(out.depth(), 2);
    assert_eq!(out.atoms(), &[5, 6, 7, 8, 9, 10]);
}

#[test]
fn subset_errors() {
    assert!(matches!(equal_measure_subset(&set(1, &[0, 1]), &set(1, &[2])), Err(CastleError::MeasureTooLarge { .. })));
    assert!(matches!(equal_measure_subset(&set(1, &[0]), &set(1, &[0, 2])), Err(CastleError::NotDisjoint(0, 1))));
}

#[test]
fn refinement_preserves_measure() {
    let a = set(1, &[1, 4]);
    let fine = a.at_depth(3).unwrap();
    assert_eq!(fine.atoms().len(), 72);
    assert_eq!(fine.measure().unwrap(), a.measure().unwrap());
    assert!(a.contains_point(&ivec(&[0, 1])).unwrap());
}

#[test]
fn matched_partitions() {
    let parts = matched_partition(&set(1, &[0, 1]), &set(1, &[2, 3]), &[set(1, &[0]), set(1, &[1])]).unwrap();
    assert_eq!(parts.iter().map(|p| p.atoms().to_vec()).collect::<Vec<_>>(), vec![vec![2], vec![3]]);
    let a = set(2, &[0, 1, 2, 3]);
    let b = set(2, &[20, 21, 22, 23]);
    let parts = matched_partition(&a, &b, &[set(2, &[0, 2, 3]), set(2, &[1])]).unwrap();
    assert_eq!(parts[0].atoms(), &[20, 21, 22]);
    assert_eq!(parts[1].atoms(), &[23]);
    let parts = matched_partition(&a, &b, std::slice::from_ref(&a)).unwrap();
    assert_eq!(parts, vec![b.clone()]);
    assert!(matches!(matched_partition(&a, &set(2, &[20]), std::slice::from_ref(&a)), Err(CastleError::MeasureMismatch(..))));
    assert!(matches!(matched_partition(&a, &b, &[set(2, &[0])]), Err(CastleError::NotAPartition(_))));
}

#[test]
fn transfer_vectors() {
    let cone = Cone::quadrant(true);
    let cs = source().cosets(1).unwrap();
    let at = |v: &[i64]| cs.rank_of(&ivec(v));
    let a = set(1, &[at(&[0, 0])]);
    let s = cone_transfer_map(&a, &set(1, &[at(&[1, 0])]), &cone, None).unwrap();
    assert_eq!(s.get(at(&[0, 0])), Some(&ivec(&[1, 0])));
    let s = cone_transfer_map(&a, &set(1, &[at(&[0, 1])]), &cone, None).unwrap();
    assert_eq!(s.get(at(&[0, 0])), Some(&ivec(&[0, 1])));
    let (xa, xb) = (ivec(&[0, 0]), ivec(&[1, 0]));
    let s = cone_transfer_map(&a, &set(1, &[at(&[1, 0])]), &cone, Some((&xa, &xb))).unwrap();
    assert_eq!(s.get(at(&[0, 0])), Some(&ivec(&[1, 2])));
    assert_eq!(s.pieces().len(), 1);
}

/// One tower of height 2 over depth-1 atoms: base y = 0, top y = 1,
/// with the vector (0,1) on the base.
fn small_castle() -> (Space, Castle, PartialSpeedup) {
    let space = Space::new(source(), 1).unwrap();
    let mut s = PartialSpeedup::new(1, space.size());
    let base: Atoms = [0usize, 1, 2].into_iter().map(|i| space.atom_of(&ivec(&[0, 0])) + i * 2).collect();
    let top: Atoms = {
        let mut t: Atoms = base.iter().map(|&a| space.step(a, &ivec(&[0, 1]))).collect();
        t.sort_unstable();
        t
    };
    for &a in &base {
        s.set(a, ivec(&[0, 1]));
    }
    let castle = Castle::new(1, vec![Tower { levels: vec![base, top], origin: 0 }]);
    (space, castle, s)
}

#[test]
fn pure_columns() {
    let (space, castle, s) = small_castle();
    let same = refine_pure_columns(&space, &castle, &s, |_| 0).unwrap();
    assert_eq!(same, castle);
    let split = refine_pure_columns(&space, &castle, &s, |a| usize::from(a == castle.towers[0].base()[0])).unwrap();
    assert_eq!(split.towers.len(), 2);
    assert_eq!(split.atom_count(), castle.atom_count());
    // brute-force count of distinct column names
    let parents = space.parents(1).unwrap();
    let fine = refine_pure_columns(&space, &castle, &s, |a| parents[a]).unwrap();
    assert_eq!(fine.towers.len(), 3);
}

#[test]
fn point_separation() {
    let (space, castle, s) = small_castle();
    assert_eq!(separate_points(&space, &castle, &s, &[]).unwrap(), castle);
    let p = space.rep(castle.towers[0].base()[0]);
    let q = space.rep(castle.towers[0].base()[1]);
    let out = separate_points(&space, &castle, &s, &[p.clone(), q.clone()]).unwrap();
    assert_eq!(out.towers.len(), 2);
    assert_eq!(out.towers[1].base(), &[castle.towers[0].base()[1]]);
    let again = separate_points(&space, &out, &s, &[p.clone(), q]).unwrap();
    assert_eq!(again, out);
    let above = matrix::add(&p, &ivec(&[0, 1]));
    assert!(matches!(separate_points(&space, &castle, &s, &[p, above]), Err(CastleError::SharedColumn(_))));
}

#[test]
fn base_refinement() {
    let (space, castle, s) = small_castle();
    let base = castle.towers[0].base().to_vec();
    assert_eq!(castle_refinement_over(&space, &castle, &s, &[vec![base.clone()]]).unwrap(), castle);
    let two = castle_refinement_over(&space, &castle, &s, &[vec![base[..1].to_vec(), base[1..].to_vec()]]).unwrap();
    assert_eq!(two.towers.len(), 2);
    let total: BigRational = two.towers.iter().map(|t| space.measure(t.base().len())).sum();
    assert_eq!(total, space.measure(base.len()));
    assert!(matches!(castle_refinement_over(&space, &castle, &s, &[vec![base[..1].to_vec()]]), Err(CastleError::NotAPartition(_))));
}

fn state() -> ConstructionState {
    ConstructionState::new(source(), target(), ConstructionConfig::new(Cone::quadrant(true))).unwrap()
}

#[test]
fn stage_zero_passes_audit() {
    let mut st = state();
    assert_eq!(st.u, ivec(&[0, 1]));
    assert_eq!(st.cylinder_offset, 0);
    let rec = st.next_stage().unwrap();
    assert_eq!((rec.n, rec.height, rec.depth), (2, 36, 3));
    let report = verify_stage_invariants(&st, 0);
    assert!(report.passed(), "{report}");
    for fam in 1..=7 {
        assert!(report.entries.iter().any(|e| e.family == fam), "family {fam} missing");
    }
    assert!(verify_stage_invariants(&st, 5).entries.is_empty());
}

#[test]
fn stage_one_passes_audit() {
    let mut st = state();
    st.run(2).unwrap();
    assert_eq!(st.stages[1].n, 4);
    assert_eq!(st.stages[1].depth, 5);
    let report = verify_stage_invariants(&st, 1);
    assert!(report.passed(), "{report}");
    assert!(!st.stages[1].f.is_empty());
}

#[test]
fn corrupted_swap_is_caught() {
    let mut st = state();
    st.next_stage().unwrap();
    let rec = &mut st.stages[0];
    let outside = (0..rec.speedup.size()).find(|a| !rec.a0.contains(a) && !rec.boundary.contains(a)).unwrap();
    let inside = rec.source.towers[0].levels[0][0];
    for tw in &mut rec.source.towers {
        for l in &mut tw.levels {
            for a in l.iter_mut() {
                if *a == inside {
                    *a = outside;
                } else if *a == outside {
                    *a = inside;
                }
            }
            l.sort_unstable();
        }
    }
    let report = verify_stage_invariants(&st, 0);
    let failed: Vec<_> = report.failures().collect();
    assert!(failed.iter().any(|e| e.family == 5 && e.witness == Some(outside)), "{report}");
}

#[test]
fn shallow_n0_is_rejected() {
    let mut config = ConstructionConfig::new(Cone::quadrant(true));
    config.n0 = Some(1);
    let mut st = ConstructionState::new(source(), target(), config).unwrap();
    assert!(matches!(st.next_stage(), Err(CastleError::Precondition(m)) if m.contains("ε₀")));
}

#[test]
fn mismatched_value_groups() {
    let t = Arc::new(OdometerChain::diagonal_power(&[2], &[1]).unwrap());
    let err = ConstructionState::new(source(), t, ConstructionConfig::new(Cone::quadrant(true))).unwrap_err();
    assert_eq!(err, CastleError::ValueGroupMismatch(BigRational::new(BigInt::one(), 3.into())));
}
