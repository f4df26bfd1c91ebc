mod common;

use common::*;
use hiercdm::fixtures::ecpe_q;
use hiercdm::qmatrix::*;
use hiercdm::testability::*;
use hiercdm::Error;
use proptest::prelude::*;

fn status(r: &TestabilityReport, id: &str) -> Status {
    r.condition(id).unwrap().status
}

#[test]
fn missing_unit_item_violates_identity() {
    let r = check_dina_strict(&q_no_unit_b(), &h(2, &[(1, 2)])).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    assert_eq!(status(&r, "1"), Status::Fail);
    match &r.condition("1").unwrap().witness {
        Witness::IdentityRows { rows } => assert_eq!(rows, &vec![Some(1), None]),
        w => panic!("unexpected witness {w:?}"),
    }
}

#[test]
fn two_blocks_dina_satisfied() {
    let r = check_dina_strict(&q_two_blocks(), &h(2, &[(1, 2)])).unwrap();
    assert_eq!(r.verdict, Verdict::Satisfied);
    for id in ["1", "2", "3"] {
        assert_eq!(status(&r, id), Status::Pass, "{id}");
    }
    match &r.condition("1").unwrap().witness {
        Witness::IdentityRows { rows } => assert_eq!(rows, &vec![Some(1), Some(2)]),
        w => panic!("unexpected witness {w:?}"),
    }
    match &r.condition("2").unwrap().witness {
        Witness::ColumnCounts { counts } => assert_eq!(counts, &vec![3, 3]),
        w => panic!("unexpected witness {w:?}"),
    }
}

#[test]
fn stacked_identities_pass_first_two_conditions() {
    let i3 = QMatrix::identity(3).unwrap();
    let q3 = QMatrix::stack(&[&i3, &i3, &i3]).unwrap();
    for hier in [linear3(), Hierarchy::empty(3).unwrap(), h(3, &[(1, 3)])] {
        let r = check_dina_strict(&q3, &hier).unwrap();
        assert_eq!(status(&r, "1"), Status::Pass);
        assert_eq!(status(&r, "2"), Status::Pass);
        assert_eq!(r, dina_oracle_report(&q3, &hier));
    }
}

#[test]
fn conditional_design_satisfied() {
    let r = check_dina_conditional(&q_conditional(), &linear3(), &[(1, 2)]).unwrap();
    assert_eq!(r.verdict, Verdict::Satisfied);
    assert_eq!(status(&r, "1*"), Status::Pass);
}

#[test]
fn conditional_empty_subset_reduces_to_identity_and_strict_conditions() {
    for qm in [q_conditional(), q_linear_generic(), q_three_attr()] {
        let r = check_dina_conditional(&qm, &linear3(), &[]).unwrap();
        let strict = check_dina_strict(&qm, &linear3()).unwrap();
        let sq = sparsify(&qm, &linear3()).unwrap();
        let has_identity = (0..3).all(|a| (0..sq.j()).any(|j| sq.is_unit(j, a)));
        assert_eq!(status(&r, "1*") == Status::Pass, has_identity);
        assert_eq!(status(&r, "2"), status(&strict, "2"));
    }
}

#[test]
fn conditional_missing_single_attribute_item() {
    // sparsified Q still contains I_3, but no item measures attribute 2 alone
    let qm = q(&[
        &[1, 0, 0],
        &[1, 1, 0],
        &[0, 0, 1],
        &[1, 0, 0],
        &[1, 1, 0],
        &[1, 1, 1],
    ]);
    let sq = sparsify(&qm, &linear3()).unwrap();
    assert!((0..3).all(|a| (0..6).any(|j| sq.is_unit(j, a))));
    assert!(!(0..6).any(|j| qm.is_unit(j, 1)));
    let r = check_dina_conditional(&qm, &linear3(), &[(1, 2)]).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    assert_eq!(status(&r, "1*"), Status::Fail);
}

#[test]
fn conditional_rejects_foreign_edges() {
    assert!(matches!(
        check_dina_conditional(&q_conditional(), &linear3(), &[(1, 3)]),
        Err(Error::NotASubset(e)) if e == vec![(1, 3)]
    ));
}

#[test]
fn two_blocks_general_strict() {
    let e0 = h(2, &[(1, 2)]);
    let r = check_general_strict(&q_two_blocks(), &e0, 4).unwrap();
    assert_eq!(r.verdict, Verdict::Satisfied);
    match &r.condition("1").unwrap().witness {
        Witness::ItemSets { s1, s2 } => {
            assert_eq!(s1, &vec![1, 2]);
            assert_eq!(s2, &vec![3, 4]);
        }
        w => panic!("unexpected witness {w:?}"),
    }
    let items: Vec<usize> = match &r.condition("2").unwrap().witness {
        Witness::Separators { separators, missing } => {
            assert!(missing.is_none());
            separators.iter().map(|s| s.item).collect()
        }
        w => panic!("unexpected witness {w:?}"),
    };
    assert!(items.iter().all(|i| [5, 6].contains(i)), "{items:?}");
    let a0 = induce_profile_set(&e0).unwrap();
    let g = constraint_matrix(&q_two_blocks(), &a0).unwrap();
    let cert = certificate_from(&r, &a0).unwrap();
    assert!(verify_certificate(&g, &cert));
    assert!(certificate_oracle(&g, &cert));
}

#[test]
fn missing_unit_item_general_strict_fails_separation() {
    let r = check_general_strict(&q_no_unit_b(), &h(2, &[(1, 2)]), 5).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    assert_eq!(status(&r, "3"), Status::Fail);
    match &r.condition("3").unwrap().witness {
        Witness::ProfilePair { null_profile, alt_profile } => {
            assert_eq!((null_profile.as_str(), alt_profile.as_str()), ("00", "01"));
        }
        w => panic!("unexpected witness {w:?}"),
    }
}

#[test]
fn three_attribute_separation_passes() {
    let r = check_general_strict(&q_three_attr(), &linear3(), 4).unwrap();
    assert_eq!(status(&r, "3"), Status::Pass);
    let a0 = induce_profile_set(&linear3()).unwrap();
    assert!(profile_separation(&q_three_attr(), &a0).unwrap().separated);
}

#[test]
fn search_cap_below_k_is_rejected() {
    assert!(check_general_strict(&q_linear_generic(), &linear3(), 2).is_err());
}

#[test]
fn tiny_budget_is_inconclusive() {
    let r = check_general_strict_with(
        &q_linear_generic(),
        &linear3(),
        SearchLimits { cap: 3, budget: 3 },
    )
    .unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.search_budget_hit);
}

#[test]
fn linear_generic_satisfied() {
    let r = check_general_generic(&q_linear_generic(), &linear3()).unwrap();
    assert_eq!(r.verdict, Verdict::Satisfied);
    let a0 = induce_profile_set(&linear3()).unwrap();
    assert!(profile_separation(&q_linear_generic(), &a0).unwrap().separated);
    // Γ columns of (0,0,0) and (1,0,0) coincide, so the item-set
    // conditions cannot hold for any split
    let strict = check_general_strict(&q_linear_generic(), &linear3(), 9).unwrap();
    assert_eq!(status(&strict, "1"), Status::Fail);
}

#[test]
fn two_blocks_generic() {
    let r = check_general_generic(&q_two_blocks(), &h(2, &[(1, 2)])).unwrap();
    assert_eq!(r.verdict, Verdict::Satisfied);
    match &r.condition("2").unwrap().witness {
        Witness::RemainderCoverage { rows, counts } => {
            assert_eq!(rows, &vec![5, 6]);
            assert_eq!(counts, &vec![2, 1]);
        }
        w => panic!("unexpected witness {w:?}"),
    }
}

#[test]
fn generic_zero_remainder_column() {
    let qm = q(&[&[1, 0], &[0, 1], &[1, 0], &[0, 1], &[1, 0], &[1, 0]]);
    let r = check_general_generic(&qm, &h(2, &[(1, 2)])).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    assert_eq!(status(&r, "2"), Status::Fail);
}

#[test]
fn ecpe_linear_hierarchy_generic() {
    let r = check_general_generic(&ecpe_q(), &h(3, &[(3, 2), (2, 1)])).unwrap();
    assert_eq!(r.verdict, Verdict::Satisfied);
}

#[test]
fn separation_cases() {
    let a0 = set(2, &["00", "10", "11"]);
    let s = profile_separation(&q_no_unit_b(), &a0).unwrap();
    assert!(!s.separated);
    assert_eq!(s.witness, Some((profile("00"), profile("01"))));
    assert!(matches!(
        profile_separation(&q_no_unit_b(), &ProfileSet::full(3).unwrap()),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn identity_rows_separate_every_hierarchy() {
    let qm = QMatrix::stack(&[&QMatrix::identity(3).unwrap(), &q(&[&[1, 1, 0]])]).unwrap();
    let all: Vec<(usize, usize)> = (1..=3)
        .flat_map(|a| (1..=3).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut checked = 0;
    for mask in 0u32..(1 << all.len()) {
        let edges: Vec<_> = (0..all.len()).filter(|i| mask >> i & 1 == 1).map(|i| all[i]).collect();
        if let Ok(hier) = validate_hierarchy(3, &edges) {
            let a0 = induce_profile_set(&hier).unwrap();
            assert!(profile_separation(&qm, &a0).unwrap().separated, "{edges:?}");
            checked += 1;
        }
    }
    // labelled DAGs on three nodes
    assert_eq!(checked, 25);
}

#[test]
fn reports_serialize_with_verdict_and_conditions() {
    let r = check_general_generic(&q_linear_generic(), &linear3()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["verdict"], "satisfied");
    assert_eq!(v["conditions"][0]["id"], "1");
    assert_eq!(v["conditions"][0]["status"], "pass");
    assert_eq!(v["conditions"][0]["witness"]["kind"], "matchings");
}

// ---- oracles ----

fn reach(hier: &Hierarchy) -> Vec<Vec<bool>> {
    let k = hier.k();
    let mut r = vec![vec![false; k]; k];
    for &(a, b) in hier.edges() {
        r[a - 1][b - 1] = true;
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                if r[i][m] && r[m][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

fn rewrite(rows: &[Vec<u8>], hier: &Hierarchy, to: u8) -> Vec<Vec<u8>> {
    let r = reach(hier);
    rows.iter()
        .map(|row| {
            let mut out = row.clone();
            for l in 0..row.len() {
                if row[l] == 1 {
                    for k in 0..row.len() {
                        if r[k][l] {
                            out[k] = to;
                        }
                    }
                }
            }
            out
        })
        .collect()
}

fn is_unit(row: &[u8], a: usize) -> bool {
    row.iter().enumerate().all(|(i, &v)| v == (i == a) as u8)
}

/// The three DINA conditions evaluated directly on row vectors.
fn dina_oracle(qm: &QMatrix, hier: &Hierarchy) -> [bool; 3] {
    let rows = qm.to_rows();
    let k = qm.k();
    let ids: Vec<Option<usize>> = (0..k).map(|a| rows.iter().position(|r| is_unit(r, a))).collect();
    let c1 = ids.iter().all(Option::is_some);
    let sparse = rewrite(&rows, hier, 0);
    let c2 = (0..k).all(|a| sparse.iter().filter(|r| r[a] == 1).count() >= 3);
    let rest: Vec<Vec<u8>> = rows
        .iter()
        .enumerate()
        .filter(|(j, _)| !ids.contains(&Some(*j)))
        .map(|(_, r)| r.clone())
        .collect();
    let dense = rewrite(&rest, hier, 1);
    let cols: Vec<Vec<u8>> = (0..k).map(|a| dense.iter().map(|r| r[a]).collect()).collect();
    let c3 = !rest.is_empty()
        && (0..k).all(|a| (a + 1..k).all(|b| cols[a] != cols[b]));
    [c1, c2, c3]
}

fn dina_oracle_report(qm: &QMatrix, hier: &Hierarchy) -> TestabilityReport {
    let mut r = check_dina_strict(qm, hier).unwrap();
    let expect = dina_oracle(qm, hier);
    for (c, ok) in r.conditions.iter_mut().zip(expect) {
        c.status = if ok { Status::Pass } else { Status::Fail };
    }
    r
}

/// Brute force over ordered row tuples: is there a pair of disjoint row
/// sets each admitting a row→attribute bijection on ones, and one whose
/// remainder covers every attribute?
fn generic_oracle(qm: &QMatrix) -> (bool, bool) {
    let k = qm.k();
    let j = qm.j();
    let mut any = false;
    let mut covered = false;
    let mut tuple = Vec::new();
    fn rec(
        qm: &QMatrix,
        k: usize,
        j: usize,
        tuple: &mut Vec<usize>,
        any: &mut bool,
        covered: &mut bool,
    ) {
        if tuple.len() == 2 * k {
            *any = true;
            let cover = (0..k).all(|a| (0..j).any(|r| !tuple.contains(&r) && qm.entry(r, a) == 1));
            *covered |= cover;
            return;
        }
        let attr = tuple.len() % k;
        for r in 0..j {
            if !tuple.contains(&r) && qm.entry(r, attr) == 1 {
                tuple.push(r);
                rec(qm, k, j, tuple, any, covered);
                tuple.pop();
                if *covered {
                    return;
                }
            }
        }
    }
    rec(qm, k, j, &mut tuple, &mut any, &mut covered);
    (any, covered)
}

fn distinct_columns(g: &ConstraintMatrix, s: &[usize]) -> bool {
    let cols: Vec<Vec<u8>> = (0..g.ncols()).map(|a| s.iter().map(|&j| g.get(j, a)).collect()).collect();
    (0..cols.len()).all(|a| (a + 1..cols.len()).all(|b| cols[a] != cols[b]))
}

fn geq(g: &ConstraintMatrix, s: &[usize], a: usize, b: usize) -> bool {
    s.iter().all(|&j| g.get(j, a) >= g.get(j, b))
}

fn item_set_conditions(g: &ConstraintMatrix, s1: &[usize], s2: &[usize]) -> (bool, bool) {
    let n = g.ncols();
    let c1 = distinct_columns(g, s1)
        && distinct_columns(g, s2)
        && (0..n).all(|a| (0..n).all(|b| geq(g, s1, a, b) == geq(g, s2, a, b)));
    if !c1 {
        return (false, false);
    }
    let outside: Vec<usize> = (0..g.nrows()).filter(|j| !s1.contains(j) && !s2.contains(j)).collect();
    let c2 = (0..n).all(|a| {
        (0..n).all(|b| {
            a == b
                || !(geq(g, s1, a, b) || geq(g, s2, a, b))
                || outside.iter().any(|&j| g.get(j, a) != g.get(j, b))
        })
    });
    (true, c2)
}

/// Exhaustive search over all assignments of items to S1, S2 or neither.
fn strict_oracle(g: &ConstraintMatrix) -> (bool, bool) {
    let j = g.nrows();
    let mut c1 = false;
    for code in 0..3usize.pow(j as u32) {
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        let mut x = code;
        for item in 0..j {
            match x % 3 {
                1 => s1.push(item),
                2 => s2.push(item),
                _ => {}
            }
            x /= 3;
        }
        let (a, b) = item_set_conditions(g, &s1, &s2);
        c1 |= a;
        if a && b {
            return (true, true);
        }
    }
    (c1, false)
}

fn certificate_oracle(g: &ConstraintMatrix, cert: &Certificate) -> bool {
    let (c1, c2) = item_set_conditions(g, &cert.s1, &cert.s2);
    let listed_ok = cert.separators.iter().all(|&(a, b, j)| {
        !cert.s1.contains(&j) && !cert.s2.contains(&j) && g.get(j, a) != g.get(j, b)
    });
    c1 && c2 && listed_ok
}

fn certificate_from(r: &TestabilityReport, a0: &ProfileSet) -> Option<Certificate> {
    let (s1, s2) = match &r.condition("1")?.witness {
        Witness::ItemSets { s1, s2 } => (s1.clone(), s2.clone()),
        _ => return None,
    };
    let separators = match &r.condition("2")?.witness {
        Witness::Separators { separators, .. } => separators
            .iter()
            .map(|s| {
                (
                    a0.index_of(profile(&s.upper)).unwrap(),
                    a0.index_of(profile(&s.lower)).unwrap(),
                    s.item - 1,
                )
            })
            .collect(),
        _ => return None,
    };
    Some(Certificate {
        s1: s1.iter().map(|j| j - 1).collect(),
        s2: s2.iter().map(|j| j - 1).collect(),
        separators,
    })
}

fn dag(k: usize) -> impl Strategy<Value = Hierarchy> {
    let pairs: Vec<(usize, usize)> = (1..=k).flat_map(|a| (a + 1..=k).map(move |b| (a, b))).collect();
    (proptest::collection::vec(any::<bool>(), pairs.len()), any::<bool>()).prop_map(move |(keep, flip)| {
        let edges: Vec<_> = pairs
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(&(a, b), _)| if flip { (k + 1 - a, k + 1 - b) } else { (a, b) })
            .collect();
        validate_hierarchy(k, &edges).unwrap()
    })
}

fn instance(k: usize, jmin: usize, jmax: usize) -> impl Strategy<Value = (QMatrix, Hierarchy)> {
    (
        proptest::collection::vec(1u32..(1 << k), jmin..=jmax)
            .prop_map(move |m| QMatrix::from_masks(k, m).unwrap()),
        dag(k),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dina_strict_matches_oracle((qm, hier) in prop_oneof![instance(2, 2, 8), instance(3, 3, 10)]) {
        let r = check_dina_strict(&qm, &hier).unwrap();
        let expect = dina_oracle(&qm, &hier);
        let got: Vec<bool> = r.conditions.iter().map(|c| c.status == Status::Pass).collect();
        prop_assert_eq!(got, expect.to_vec());
        prop_assert_eq!(r.verdict == Verdict::Satisfied, expect.iter().all(|&b| b));
        if r.verdict == Verdict::Satisfied {
            let a0 = induce_profile_set(&hier).unwrap();
            prop_assert!(profile_separation(&qm, &a0).unwrap().separated);
        }
    }

    #[test]
    fn dina_strict_implies_separation_k4((qm, hier) in instance(4, 8, 14)) {
        if check_dina_strict(&qm, &hier).unwrap().verdict == Verdict::Satisfied {
            let a0 = induce_profile_set(&hier).unwrap();
            prop_assert!(profile_separation(&qm, &a0).unwrap().separated);
        }
    }

    #[test]
    fn generic_matches_brute_force((qm, hier) in prop_oneof![instance(2, 3, 7), instance(3, 5, 8)]) {
        let r = check_general_generic(&qm, &hier).unwrap();
        let (any, covered) = generic_oracle(&qm);
        prop_assert_eq!(status(&r, "1") == Status::Pass, any);
        prop_assert_eq!(status(&r, "2") == Status::Pass, covered);
        let a0 = induce_profile_set(&hier).unwrap();
        let sep = profile_separation(&qm, &a0).unwrap();
        prop_assert_eq!(status(&r, "3") == Status::Pass, sep.separated);
        if let Witness::Matchings { q1, q2 } = &r.condition("1").unwrap().witness {
            let mut seen = std::collections::HashSet::new();
            for ia in q1.iter().chain(q2) {
                prop_assert_eq!(qm.entry(ia.item - 1, ia.attribute - 1), 1);
                prop_assert!(seen.insert(ia.item));
            }
        }
    }

    #[test]
    fn general_strict_matches_exhaustive_search((qm, hier) in prop_oneof![instance(2, 2, 6), instance(3, 3, 6)]) {
        let j = qm.j();
        let r = check_general_strict(&qm, &hier, j.max(qm.k())).unwrap();
        let a0 = induce_profile_set(&hier).unwrap();
        let g = constraint_matrix(&qm, &a0).unwrap();
        let (c1, c12) = strict_oracle(&g);
        prop_assert!(!r.search_budget_hit);
        prop_assert_eq!(status(&r, "1") == Status::Pass, c1);
        prop_assert_eq!(status(&r, "1") == Status::Pass && status(&r, "2") == Status::Pass, c12);
        prop_assert!(status(&r, "1") != Status::Unknown);
        if c12 {
            let cert = certificate_from(&r, &a0).unwrap();
            prop_assert!(verify_certificate(&g, &cert));
            prop_assert!(certificate_oracle(&g, &cert));
        }
    }

    #[test]
    fn satisfied_strict_always_has_valid_certificate((qm, hier) in instance(3, 6, 12)) {
        let r = check_general_strict(&qm, &hier, 5).unwrap();
        if r.verdict == Verdict::Satisfied {
            let a0 = induce_profile_set(&hier).unwrap();
            let g = constraint_matrix(&qm, &a0).unwrap();
            let cert = certificate_from(&r, &a0).unwrap();
            prop_assert!(certificate_oracle(&g, &cert));
        }
        if r.verdict == Verdict::Violated {
            prop_assert!(r.conditions.iter().any(|c| c.status == Status::Fail));
        }
        prop_assert_eq!(r.clone(), check_general_strict(&qm, &hier, 5).unwrap());
    }
}
