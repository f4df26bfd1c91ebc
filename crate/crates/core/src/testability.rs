//! Sufficient-condition checks for strict and generic testability of an
//! attribute hierarchy given a Q-matrix.
//!
//! Every check returns a [`TestabilityReport`] listing each condition with a
//! witness. Item rows and attributes in witnesses are 1-based, matching the
//! JSON the CLI prints.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qmatrix::{
    constraint_matrix, densify, induce_profile_set, partial_order_holds, partial_orders_equal,
    sparsify, ConstraintMatrix, Hierarchy, Profile, ProfileSet, QMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The search budget ran out before a certificate or a disproof.
    Unknown,
    /// Not evaluable because a condition it depends on failed.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ItemAttribute {
    pub item: usize,
    pub attribute: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Separator {
    /// The dominating profile of the comparable pair.
    pub upper: String,
    pub lower: String,
    pub item: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// One row per attribute forming an identity block (`None` if missing).
    IdentityRows { rows: Vec<Option<usize>> },
    ColumnCounts { counts: Vec<usize> },
    DistinctColumns {
        rows: Vec<usize>,
        /// First pair of equal columns, if any.
        duplicate: Option<(usize, usize)>,
    },
    SingleAttributeItems { items: Vec<(usize, Option<usize>)> },
    ItemSets { s1: Vec<usize>, s2: Vec<usize> },
    Separators {
        separators: Vec<Separator>,
        /// First comparable pair without a separator.
        missing: Option<(String, String)>,
    },
    Matchings {
        q1: Vec<ItemAttribute>,
        q2: Vec<ItemAttribute>,
    },
    RemainderCoverage { rows: Vec<usize>, counts: Vec<usize> },
    ProfilePair { null_profile: String, alt_profile: String },
    SearchExhausted { subsets: usize, pairs: usize },
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Condition {
    pub id: String,
    pub status: Status,
    pub witness: Witness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TestabilityReport {
    pub verdict: Verdict,
    pub conditions: Vec<Condition>,
    pub search_budget_hit: bool,
}

impl TestabilityReport {
    fn from_conditions(conditions: Vec<Condition>, search_budget_hit: bool) -> Self {
        let verdict = if conditions.iter().any(|c| c.status == Status::Fail) {
            Verdict::Violated
        } else if conditions.iter().all(|c| c.status == Status::Pass) {
            Verdict::Satisfied
        } else {
            Verdict::Inconclusive
        };
        TestabilityReport {
            verdict,
            conditions,
            search_budget_hit,
        }
    }

    pub fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }
}

fn pass_or_fail(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn check_dims(q: &QMatrix, h: &Hierarchy) -> Result<()> {
    if q.k() != h.k() {
        return Err(Error::DimensionMismatch(format!(
            "Q has K={} but hierarchy has K={}",
            q.k(),
            h.k()
        )));
    }
    Ok(())
}

/// First unit row per attribute (0-based rows).
fn first_identity_rows(q: &QMatrix) -> Vec<Option<usize>> {
    (0..q.k())
        .map(|a| (0..q.j()).find(|&j| q.is_unit(j, a)))
        .collect()
}

fn one_based(rows: &[Option<usize>]) -> Vec<Option<usize>> {
    rows.iter().map(|r| r.map(|j| j + 1)).collect()
}

fn three_per_column(sq: &QMatrix) -> Condition {
    let counts = sq.column_sums();
    Condition {
        id: "2".into(),
        status: pass_or_fail(counts.iter().all(|&c| c >= 3)),
        witness: Witness::ColumnCounts { counts },
    }
}

/// Densifies Q with `removed` rows dropped and checks for K distinct columns.
fn distinct_densified_columns(q: &QMatrix, h: &Hierarchy, removed: &[usize]) -> Result<Condition> {
    let kept: Vec<usize> = (0..q.j()).filter(|j| !removed.contains(j)).collect();
    if kept.is_empty() {
        return Ok(Condition {
            id: "3".into(),
            status: Status::Fail,
            witness: Witness::DistinctColumns {
                rows: vec![],
                duplicate: None,
            },
        });
    }
    let dq = densify(&q.select_rows(&kept)?, h)?;
    let cols: Vec<Vec<u8>> = (0..q.k()).map(|a| dq.column(a)).collect();
    let mut duplicate = None;
    'outer: for a in 0..cols.len() {
        for b in a + 1..cols.len() {
            if cols[a] == cols[b] {
                duplicate = Some((a + 1, b + 1));
                break 'outer;
            }
        }
    }
    Ok(Condition {
        id: "3".into(),
        status: pass_or_fail(duplicate.is_none()),
        witness: Witness::DistinctColumns {
            rows: kept.iter().map(|j| j + 1).collect(),
            duplicate,
        },
    })
}

/// Strict testability for the DINA model: identity submatrix, at least three
/// ones per column of the sparsified Q, and K distinct columns in the
/// densified remainder.
pub fn check_dina_strict(q: &QMatrix, h: &Hierarchy) -> Result<TestabilityReport> {
    check_dims(q, h)?;
    let id_rows = first_identity_rows(q);
    let c1 = Condition {
        id: "1".into(),
        status: pass_or_fail(id_rows.iter().all(Option::is_some)),
        witness: Witness::IdentityRows {
            rows: one_based(&id_rows),
        },
    };
    let c2 = three_per_column(&sparsify(q, h)?);
    let removed: Vec<usize> = id_rows.iter().flatten().copied().collect();
    let c3 = distinct_densified_columns(q, h, &removed)?;
    Ok(TestabilityReport::from_conditions(vec![c1, c2, c3], false))
}

/// Testability of the edges `subset` ⊆ `h0` given the remaining edges of
/// `h0` are assumed.
pub fn check_dina_conditional(
    q: &QMatrix,
    h0: &Hierarchy,
    subset: &[(usize, usize)],
) -> Result<TestabilityReport> {
    check_dims(q, h0)?;
    let missing: Vec<(usize, usize)> = subset
        .iter()
        .filter(|e| !h0.edges().contains(e))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::NotASubset(missing));
    }
    let tested = crate::qmatrix::validate_hierarchy(h0.k(), subset)?;
    let sq = sparsify(q, h0)?;
    let id_rows = first_identity_rows(&sq);
    let singles: Vec<(usize, Option<usize>)> = tested
        .involved_attributes()
        .into_iter()
        .map(|a| (a + 1, (0..q.j()).find(|&j| q.is_unit(j, a)).map(|j| j + 1)))
        .collect();
    let ok = id_rows.iter().all(Option::is_some) && singles.iter().all(|(_, r)| r.is_some());
    let c1 = Condition {
        id: "1*".into(),
        status: pass_or_fail(ok),
        witness: Witness::SingleAttributeItems {
            items: singles
                .into_iter()
                .chain(
                    // identity rows of the sparsified Q, keyed by attribute
                    id_rows.iter().enumerate().map(|(a, r)| (a + 1, r.map(|j| j + 1))),
                )
                .collect(),
        },
    };
    let c2 = three_per_column(&sq);
    let removed: Vec<usize> = id_rows.iter().flatten().copied().collect();
    let c3 = distinct_densified_columns(q, h0, &removed)?;
    Ok(TestabilityReport::from_conditions(vec![c1, c2, c3], false))
}

/// Result of comparing null-set columns of Γ against the complement's.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Separation {
    pub separated: bool,
    /// First `(α ∈ A0, α' ∉ A0)` with identical Γ columns.
    pub witness: Option<(Profile, Profile)>,
}

pub fn profile_separation(q: &QMatrix, a0: &ProfileSet) -> Result<Separation> {
    if q.k() != a0.k() {
        return Err(Error::DimensionMismatch(format!(
            "Q has K={} but profile set has K={}",
            q.k(),
            a0.k()
        )));
    }
    let comp = a0.complement()?;
    let g0 = constraint_matrix(q, a0)?;
    let gc = constraint_matrix(q, &comp)?;
    let comp_cols: Vec<Vec<u8>> = (0..gc.ncols()).map(|a| gc.column(a)).collect();
    let lookup: HashSet<&Vec<u8>> = comp_cols.iter().collect();
    for a in 0..g0.ncols() {
        let col = g0.column(a);
        if lookup.contains(&col) {
            let b = comp_cols.iter().position(|c| *c == col).unwrap();
            return Ok(Separation {
                separated: false,
                witness: Some((a0.get(a), comp.get(b))),
            });
        }
    }
    Ok(Separation {
        separated: true,
        witness: None,
    })
}

fn separation_condition(q: &QMatrix, a0: &ProfileSet) -> Result<Condition> {
    let sep = profile_separation(q, a0)?;
    Ok(Condition {
        id: "3".into(),
        status: pass_or_fail(sep.separated),
        witness: match sep.witness {
            Some((a, b)) => Witness::ProfilePair {
                null_profile: a.to_string(),
                alt_profile: b.to_string(),
            },
            None => Witness::None,
        },
    })
}

/// Limits for the item-set search behind [`check_general_strict`].
#[derive(Clone, Copy, Debug)]
pub struct SearchLimits {
    /// Largest item-set size tried for S1 and S2.
    pub cap: usize,
    /// Total subsets plus candidate pairs examined before giving up.
    pub budget: usize,
}

impl SearchLimits {
    pub fn for_k(k: usize) -> Self {
        SearchLimits {
            cap: k + 2,
            budget: 1_000_000,
        }
    }
}

/// A certificate for the item-set conditions of the general strict check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    /// `(upper column, lower column, separating item)`, all 0-based.
    pub separators: Vec<(usize, usize, usize)>,
}

/// Independent re-check of a certificate against Γ^{A0}.
pub fn verify_certificate(g: &ConstraintMatrix, cert: &Certificate) -> bool {
    if cert.s1.iter().any(|j| cert.s2.contains(j)) {
        return false;
    }
    let n = g.ncols();
    for s in [&cert.s1, &cert.s2] {
        let cols: Vec<Vec<u8>> = (0..n)
            .map(|a| s.iter().map(|&j| g.get(j, a)).collect())
            .collect();
        for a in 0..n {
            for b in a + 1..n {
                if cols[a] == cols[b] {
                    return false;
                }
            }
        }
    }
    if !partial_orders_equal(g, &cert.s1, &cert.s2).unwrap_or(false) {
        return false;
    }
    for upper in 0..n {
        for lower in 0..n {
            if upper == lower {
                continue;
            }
            let comparable = partial_order_holds(g, &cert.s1, upper, lower).unwrap_or(false)
                || partial_order_holds(g, &cert.s2, upper, lower).unwrap_or(false);
            if !comparable {
                continue;
            }
            let listed = cert
                .separators
                .iter()
                .find(|&&(u, l, _)| u == upper && l == lower);
            match listed {
                Some(&(_, _, j)) => {
                    if cert.s1.contains(&j) || cert.s2.contains(&j) || g.get(j, upper) == g.get(j, lower)
                    {
                        return false;
                    }
                }
                None => return false,
            }
        }
    }
    true
}

struct Candidate {
    items: Vec<usize>,
    signature: Vec<u64>,
}

/// Column codes of Γ restricted to `items` (first item = most significant).
fn column_codes(g: &ConstraintMatrix, items: &[usize]) -> Vec<u32> {
    (0..g.ncols())
        .map(|a| items.iter().fold(0u32, |acc, &j| (acc << 1) | g.get(j, a) as u32))
        .collect()
}

fn all_distinct(codes: &[u32]) -> bool {
    let mut v = codes.to_vec();
    v.sort_unstable();
    v.windows(2).all(|w| w[0] != w[1])
}

/// Bitset over ordered column pairs `(a, b)` with `a ⪰_S b`.
fn order_signature(codes: &[u32]) -> Vec<u64> {
    let n = codes.len();
    let mut sig = vec![0u64; (n * n).div_ceil(64)];
    for a in 0..n {
        for b in 0..n {
            if codes[a] & codes[b] == codes[b] {
                let bit = a * n + b;
                sig[bit / 64] |= 1 << (bit % 64);
            }
        }
    }
    sig
}

/// Separators for every comparable pair under `codes1`, drawn from items
/// outside both sets. `Err` carries the first pair with no separator.
fn find_separators(
    g: &ConstraintMatrix,
    codes: &[u32],
    used: &[usize],
) -> std::result::Result<Vec<(usize, usize, usize)>, (usize, usize)> {
    let n = codes.len();
    let outside: Vec<usize> = (0..g.nrows()).filter(|j| !used.contains(j)).collect();
    let mut seps = Vec::new();
    for upper in 0..n {
        for lower in 0..n {
            if upper == lower || codes[upper] & codes[lower] != codes[lower] {
                continue;
            }
            match outside.iter().find(|&&j| g.get(j, upper) != g.get(j, lower)) {
                Some(&j) => seps.push((upper, lower, j)),
                None => return Err((upper, lower)),
            }
        }
    }
    Ok(seps)
}

struct SearchOutcome {
    certificate: Option<Certificate>,
    /// First pair meeting the set conditions (but maybe not the separators).
    first_sets: Option<(Vec<usize>, Vec<usize>, (usize, usize))>,
    exhaustive: bool,
    budget_hit: bool,
    subsets: usize,
    pairs: usize,
}

/// Disjoint identity blocks of Q: block `b` holds the `b`-th unit row of
/// every attribute.
fn identity_blocks(q: &QMatrix) -> Vec<Vec<usize>> {
    let per_attr: Vec<Vec<usize>> = (0..q.k())
        .map(|a| (0..q.j()).filter(|&j| q.is_unit(j, a)).collect())
        .collect();
    let nblocks = per_attr.iter().map(Vec::len).min().unwrap_or(0);
    (0..nblocks)
        .map(|b| {
            let mut rows: Vec<usize> = per_attr.iter().map(|r| r[b]).collect();
            rows.sort_unstable();
            rows
        })
        .collect()
}

fn try_pair(
    g: &ConstraintMatrix,
    s1: &[usize],
    s2: &[usize],
) -> Option<std::result::Result<Certificate, (usize, usize)>> {
    let c1 = column_codes(g, s1);
    let c2 = column_codes(g, s2);
    if !all_distinct(&c1) || !all_distinct(&c2) || order_signature(&c1) != order_signature(&c2) {
        return None;
    }
    let used: Vec<usize> = s1.iter().chain(s2).copied().collect();
    Some(find_separators(g, &c1, &used).map(|separators| Certificate {
        s1: s1.to_vec(),
        s2: s2.to_vec(),
        separators,
    }))
}

fn search_item_sets(q: &QMatrix, g: &ConstraintMatrix, limits: SearchLimits) -> SearchOutcome {
    let mut out = SearchOutcome {
        certificate: None,
        first_sets: None,
        exhaustive: false,
        budget_hit: false,
        subsets: 0,
        pairs: 0,
    };
    let note = |out: &mut SearchOutcome, s1: &[usize], s2: &[usize], missing| {
        if out.first_sets.is_none() {
            out.first_sets = Some((s1.to_vec(), s2.to_vec(), missing));
        }
    };

    // Seeded phase: pairs of disjoint identity blocks.
    let blocks = identity_blocks(q);
    for b1 in 0..blocks.len() {
        for b2 in b1 + 1..blocks.len() {
            out.pairs += 1;
            match try_pair(g, &blocks[b1], &blocks[b2]) {
                Some(Ok(cert)) => {
                    out.certificate = Some(cert);
                    return out;
                }
                Some(Err(missing)) => note(&mut out, &blocks[b1], &blocks[b2], missing),
                None => {}
            }
        }
    }

    // General phase: all item subsets up to the cap, in (size, lex) order.
    let j = g.nrows();
    let cap = limits.cap.min(j).min(32);
    let mut cands: Vec<Candidate> = Vec::new();
    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for size in 1..=cap {
        let mut comb: Vec<usize> = (0..size).collect();
        loop {
            out.subsets += 1;
            if out.subsets + out.pairs > limits.budget {
                out.budget_hit = true;
                return out;
            }
            let codes = column_codes(g, &comb);
            if all_distinct(&codes) {
                let signature = order_signature(&codes);
                groups
                    .entry(signature.clone())
                    .or_default()
                    .push(cands.len());
                cands.push(Candidate {
                    items: comb.clone(),
                    signature,
                });
            }
            if !next_combination(&mut comb, j) {
                break;
            }
        }
    }

    for (i, c1) in cands.iter().enumerate() {
        for &i2 in &groups[&c1.signature] {
            if i2 <= i {
                continue;
            }
            let c2 = &cands[i2];
            if c1.items.iter().any(|x| c2.items.contains(x)) {
                continue;
            }
            out.pairs += 1;
            if out.subsets + out.pairs > limits.budget {
                out.budget_hit = true;
                return out;
            }
            let codes = column_codes(g, &c1.items);
            let used: Vec<usize> = c1.items.iter().chain(&c2.items).copied().collect();
            match find_separators(g, &codes, &used) {
                Ok(separators) => {
                    out.certificate = Some(Certificate {
                        s1: c1.items.clone(),
                        s2: c2.items.clone(),
                        separators,
                    });
                    return out;
                }
                Err(missing) => note(&mut out, &c1.items, &c2.items, missing),
            }
        }
    }
    out.exhaustive = cap >= j;
    out
}

fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for t in i + 1..k {
                comb[t] = comb[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn check_general_strict(q: &QMatrix, h: &Hierarchy, cap: usize) -> Result<TestabilityReport> {
    check_general_strict_with(
        q,
        h,
        SearchLimits {
            cap,
            ..SearchLimits::for_k(q.k())
        },
    )
}

/// Strict testability for general CDMs under the "same or smaller
/// alternative" restriction, with an item-set certificate search.
pub fn check_general_strict_with(
    q: &QMatrix,
    h: &Hierarchy,
    limits: SearchLimits,
) -> Result<TestabilityReport> {
    check_dims(q, h)?;
    if limits.cap < q.k() {
        return Err(Error::InvalidParam(format!(
            "search cap {} is below K={}",
            limits.cap,
            q.k()
        )));
    }
    let a0 = induce_profile_set(h)?;
    let g = constraint_matrix(q, &a0)?;
    let search = search_item_sets(q, &g, limits);
    let label = |c: usize| a0.get(c).to_string();
    let unresolved = if search.exhaustive {
        Status::Fail
    } else {
        Status::Unknown
    };

    let (c1, c2) = match (&search.certificate, &search.first_sets) {
        (Some(cert), _) => (
            Condition {
                id: "1".into(),
                status: Status::Pass,
                witness: Witness::ItemSets {
                    s1: cert.s1.iter().map(|j| j + 1).collect(),
                    s2: cert.s2.iter().map(|j| j + 1).collect(),
                },
            },
            Condition {
                id: "2".into(),
                status: Status::Pass,
                witness: Witness::Separators {
                    separators: cert
                        .separators
                        .iter()
                        .map(|&(u, l, j)| Separator {
                            upper: label(u),
                            lower: label(l),
                            item: j + 1,
                        })
                        .collect(),
                    missing: None,
                },
            },
        ),
        (None, Some((s1, s2, (u, l)))) => (
            Condition {
                id: "1".into(),
                status: Status::Pass,
                witness: Witness::ItemSets {
                    s1: s1.iter().map(|j| j + 1).collect(),
                    s2: s2.iter().map(|j| j + 1).collect(),
                },
            },
            Condition {
                id: "2".into(),
                status: unresolved,
                witness: Witness::Separators {
                    separators: vec![],
                    missing: Some((label(*u), label(*l))),
                },
            },
        ),
        (None, None) => (
            Condition {
                id: "1".into(),
                status: unresolved,
                witness: Witness::SearchExhausted {
                    subsets: search.subsets,
                    pairs: search.pairs,
                },
            },
            Condition {
                id: "2".into(),
                status: Status::Skipped,
                witness: Witness::None,
            },
        ),
    };
    let c3 = separation_condition(q, &a0)?;
    Ok(TestabilityReport::from_conditions(
        vec![c1, c2, c3],
        search.budget_hit,
    ))
}

/// Slot `s` (copy-major: copy 0 for every attribute, then copy 1) is filled by
/// a row requiring attribute `s % K`. Returns the slot → row assignment.
fn two_disjoint_matchings(q: &QMatrix, excluded: &[bool]) -> Option<Vec<usize>> {
    let k = q.k();
    let nslots = 2 * k;
    let adj: Vec<Vec<usize>> = (0..nslots)
        .map(|s| {
            (0..q.j())
                .filter(|&j| !excluded[j] && q.entry(j, s % k) == 1)
                .collect()
        })
        .collect();
    let mut row_slot: Vec<Option<usize>> = vec![None; q.j()];
    let mut slot_row: Vec<Option<usize>> = vec![None; nslots];

    fn augment(
        s: usize,
        adj: &[Vec<usize>],
        visited: &mut [bool],
        row_slot: &mut [Option<usize>],
        slot_row: &mut [Option<usize>],
    ) -> bool {
        for &r in &adj[s] {
            if visited[r] {
                continue;
            }
            visited[r] = true;
            let free = match row_slot[r] {
                None => true,
                Some(other) => augment(other, adj, visited, row_slot, slot_row),
            };
            if free {
                row_slot[r] = Some(s);
                slot_row[s] = Some(r);
                return true;
            }
        }
        false
    }

    for s in 0..nslots {
        // Prefer the lowest free row before rerouting earlier slots.
        if let Some(&r) = adj[s].iter().find(|&&r| row_slot[r].is_none()) {
            row_slot[r] = Some(s);
            slot_row[s] = Some(r);
            continue;
        }
        let mut visited = vec![false; q.j()];
        if !augment(s, &adj, &mut visited, &mut row_slot, &mut slot_row) {
            return None;
        }
    }
    Some(slot_row.into_iter().map(Option::unwrap).collect())
}

fn remainder_covers(q: &QMatrix, used: &[usize]) -> bool {
    (0..q.k()).all(|a| (0..q.j()).any(|j| !used.contains(&j) && q.entry(j, a) == 1))
}

/// Picks, per uncovered attribute, a reserved cover row so that the two
/// matchings can still be found on the other rows. Exact backtracking.
fn matchings_with_cover(q: &QMatrix, reserved: &mut Vec<bool>, attr: usize) -> Option<Vec<usize>> {
    if attr == q.k() {
        return two_disjoint_matchings(q, reserved);
    }
    let covered = (0..q.j()).any(|j| reserved[j] && q.entry(j, attr) == 1);
    if covered {
        return matchings_with_cover(q, reserved, attr + 1);
    }
    for r in 0..q.j() {
        if reserved[r] || q.entry(r, attr) == 0 {
            continue;
        }
        reserved[r] = true;
        if two_disjoint_matchings(q, reserved).is_some() {
            if let Some(m) = matchings_with_cover(q, reserved, attr + 1) {
                reserved[r] = false;
                return Some(m);
            }
        }
        reserved[r] = false;
    }
    None
}

/// Generic testability for general CDMs: two disjoint unit-diagonal K×K
/// blocks, remaining rows covering every attribute, plus null/complement
/// profile separation.
pub fn check_general_generic(q: &QMatrix, h: &Hierarchy) -> Result<TestabilityReport> {
    check_dims(q, h)?;
    let k = q.k();
    let none = vec![false; q.j()];
    let first = two_disjoint_matchings(q, &none);
    let assignment = match &first {
        Some(m) if remainder_covers(q, m) => Some(m.clone()),
        Some(_) => matchings_with_cover(q, &mut none.clone(), 0),
        None => None,
    };
    let pairs = |m: &[usize], copy: usize| -> Vec<ItemAttribute> {
        (0..k)
            .map(|a| ItemAttribute {
                item: m[copy * k + a] + 1,
                attribute: a + 1,
            })
            .collect()
    };
    let (c1, c2) = match (&first, &assignment) {
        (None, _) => (
            Condition {
                id: "1".into(),
                status: Status::Fail,
                witness: Witness::None,
            },
            Condition {
                id: "2".into(),
                status: Status::Skipped,
                witness: Witness::None,
            },
        ),
        (Some(m0), chosen) => {
            let m = chosen.as_ref().unwrap_or(m0);
            let rest: Vec<usize> = (0..q.j()).filter(|j| !m.contains(j)).collect();
            let counts = (0..k)
                .map(|a| rest.iter().filter(|&&j| q.entry(j, a) == 1).count())
                .collect();
            (
                Condition {
                    id: "1".into(),
                    status: Status::Pass,
                    witness: Witness::Matchings {
                        q1: pairs(m, 0),
                        q2: pairs(m, 1),
                    },
                },
                Condition {
                    id: "2".into(),
                    status: pass_or_fail(chosen.is_some()),
                    witness: Witness::RemainderCoverage {
                        rows: rest.iter().map(|j| j + 1).collect(),
                        counts,
                    },
                },
            )
        }
    };
    let a0 = induce_profile_set(h)?;
    let c3 = separation_condition(q, &a0)?;
    Ok(TestabilityReport::from_conditions(vec![c1, c2, c3], false))
}
