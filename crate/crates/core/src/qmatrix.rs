//! Q-matrices, attribute hierarchies, profile sets and the binary matrices
//! derived from them.
//!
//! Bit convention: a profile over `K` attributes is stored as an integer code
//! with attribute 1 in the most significant of the `K` bits, so ascending
//! code order is the canonical profile order. Q-matrix rows use the same
//! convention, which turns "profile possesses every required attribute" into
//! `alpha & q == q`.
//!
//! Attribute and item indices in this module's API are 0-based, except for
//! hierarchy edges, which are 1-based `(prerequisite, dependent)` pairs as in
//! the hierarchy file format.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest K for which profile sets are enumerated (2^K blowup guard).
pub const MAX_ENUM_K: usize = 20;
/// Largest K representable in a row mask.
pub const MAX_K: usize = 32;

#[inline]
fn attr_bit(k: usize, attr: usize) -> u32 {
    1u32 << (k - 1 - attr)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidParam(format!(
            "attribute count must be in 1..={MAX_K}, got {k}"
        )));
    }
    Ok(())
}

/// A binary attribute profile.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Profile {
    code: u32,
    k: u8,
}

impl Profile {
    pub fn from_code(k: usize, code: u32) -> Result<Self> {
        check_k(k)?;
        if k < 32 && code >> k != 0 {
            return Err(Error::InvalidParam(format!(
                "profile code {code} does not fit in {k} bits"
            )));
        }
        Ok(Profile { code, k: k as u8 })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        check_k(bits.len())?;
        let mut code = 0u32;
        for &b in bits {
            if b > 1 {
                return Err(Error::InvalidParam(format!("profile entry {b} is not binary")));
            }
            code = (code << 1) | b as u32;
        }
        Ok(Profile {
            code,
            k: bits.len() as u8,
        })
    }

    pub fn zero(k: usize) -> Self {
        Profile { code: 0, k: k as u8 }
    }

    #[inline]
    pub fn code(self) -> u32 {
        self.code
    }

    #[inline]
    pub fn k(self) -> usize {
        self.k as usize
    }

    /// Whether attribute `attr` (0-based) is possessed.
    #[inline]
    pub fn has(self, attr: usize) -> bool {
        self.code & attr_bit(self.k(), attr) != 0
    }

    pub fn bits(self) -> Vec<u8> {
        (0..self.k()).map(|a| self.has(a) as u8).collect()
    }

    /// Dominance `self ⪰ q` against a row mask.
    #[inline]
    pub fn covers(self, mask: u32) -> bool {
        self.code & mask == mask
    }
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, b) in self.bits().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidParam(format!("bad profile string '{s}'"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Profile::from_bits(&bits)
    }
}

/// J×K binary item-by-attribute matrix. Every row requires at least one
/// attribute.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QMatrix {
    k: usize,
    rows: Vec<u32>,
}

impl QMatrix {
    pub fn new(rows: &[Vec<u8>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidQ("Q-matrix has no rows".into()));
        };
        let k = first.len();
        check_k(k)?;
        let mut masks = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidQ(format!(
                    "row {} has {} entries, expected {k}",
                    j + 1,
                    row.len()
                )));
            }
            masks.push(Profile::from_bits(row)?.code);
        }
        Self::from_masks(k, masks)
    }

    pub fn from_masks(k: usize, rows: Vec<u32>) -> Result<Self> {
        check_k(k)?;
        if rows.is_empty() {
            return Err(Error::InvalidQ("Q-matrix has no rows".into()));
        }
        for (j, &m) in rows.iter().enumerate() {
            if m == 0 {
                return Err(Error::InvalidQ(format!("row {} is all zero", j + 1)));
            }
            if k < 32 && m >> k != 0 {
                return Err(Error::InvalidQ(format!("row {} wider than K={k}", j + 1)));
            }
        }
        Ok(QMatrix { k, rows })
    }

    pub fn identity(k: usize) -> Result<Self> {
        check_k(k)?;
        Self::from_masks(k, (0..k).map(|a| attr_bit(k, a)).collect())
    }

    /// Vertical concatenation.
    pub fn stack(blocks: &[&QMatrix]) -> Result<Self> {
        let k = blocks
            .first()
            .ok_or_else(|| Error::InvalidQ("nothing to stack".into()))?
            .k;
        let mut rows = Vec::new();
        for b in blocks {
            if b.k != k {
                return Err(Error::DimensionMismatch(format!("stacking K={} onto K={k}", b.k)));
            }
            rows.extend_from_slice(&b.rows);
        }
        Self::from_masks(k, rows)
    }

    #[inline]
    pub fn j(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row_mask(&self, j: usize) -> u32 {
        self.rows[j]
    }

    pub fn masks(&self) -> &[u32] {
        &self.rows
    }

    pub fn entry(&self, j: usize, attr: usize) -> u8 {
        (self.rows[j] & attr_bit(self.k, attr) != 0) as u8
    }

    pub fn row(&self, j: usize) -> Vec<u8> {
        (0..self.k).map(|a| self.entry(j, a)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.j()).map(|j| self.row(j)).collect()
    }

    /// Required attributes of item `j`, ascending, 0-based.
    pub fn required(&self, j: usize) -> Vec<usize> {
        (0..self.k).filter(|&a| self.entry(j, a) == 1).collect()
    }

    /// Whether row `j` is the unit vector of attribute `attr`.
    pub fn is_unit(&self, j: usize, attr: usize) -> bool {
        self.rows[j] == attr_bit(self.k, attr)
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::from_masks(self.k, idx.iter().map(|&j| self.rows[j]).collect())
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.k)
            .map(|a| self.rows.iter().filter(|&&m| m & attr_bit(self.k, a) != 0).count())
            .collect()
    }

    pub fn column(&self, attr: usize) -> Vec<u8> {
        (0..self.j()).map(|j| self.entry(j, attr)).collect()
    }
}

impl fmt::Debug for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.to_rows().iter().map(|r| {
                r.iter().map(|b| char::from(b'0' + b)).collect::<String>()
            }))
            .finish()
    }
}

/// Attribute hierarchy: a DAG of `(prerequisite, dependent)` edges with
/// 1-based attribute indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "HierarchyFile", into = "HierarchyFile")]
pub struct Hierarchy {
    k: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    #[serde(rename = "K")]
    k: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<HierarchyFile> for Hierarchy {
    type Error = Error;
    fn try_from(f: HierarchyFile) -> Result<Self> {
        let edges: Vec<(usize, usize)> = f.edges.iter().map(|e| (e[0], e[1])).collect();
        validate_hierarchy(f.k, &edges)
    }
}

impl From<Hierarchy> for HierarchyFile {
    fn from(h: Hierarchy) -> Self {
        HierarchyFile {
            k: h.k,
            edges: h.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

/// Validates an edge list and returns the hierarchy with edges sorted and
/// deduplicated.
pub fn validate_hierarchy(k: usize, edges: &[(usize, usize)]) -> Result<Hierarchy> {
    check_k(k)?;
    for &(a, b) in edges {
        for v in [a, b] {
            if v == 0 || v > k {
                return Err(Error::Index {
                    what: "hierarchy edge endpoint",
                    index: v,
                    bound: k,
                });
            }
        }
        if a == b {
            return Err(Error::Cycle(vec![a, a]));
        }
    }
    let mut edges = edges.to_vec();
    edges.sort_unstable();
    edges.dedup();
    if let Some(cycle) = find_cycle(k, &edges) {
        return Err(Error::Cycle(cycle));
    }
    Ok(Hierarchy { k, edges })
}

fn find_cycle(k: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut adj = vec![Vec::new(); k + 1];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; k + 1];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        v: usize,
        adj: &[Vec<usize>],
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &w in &adj[v] {
            if state[w] == 1 {
                let start = stack.iter().position(|&x| x == w).unwrap();
                let mut cycle = stack[start..].to_vec();
                cycle.push(w);
                return Some(cycle);
            }
            if state[w] == 0 {
                if let Some(c) = dfs(w, adj, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }

    for v in 1..=k {
        if state[v] == 0 {
            if let Some(c) = dfs(v, &adj, &mut state, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

impl Hierarchy {
    pub fn empty(k: usize) -> Result<Self> {
        validate_hierarchy(k, &[])
    }

    /// Chain `1 -> 2 -> ... -> K`.
    pub fn linear(k: usize) -> Result<Self> {
        let edges: Vec<_> = (1..k).map(|a| (a, a + 1)).collect();
        validate_hierarchy(k, &edges)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// For each attribute (0-based), the mask of all its direct or indirect
    /// prerequisites.
    pub fn ancestor_masks(&self) -> Vec<u32> {
        let k = self.k;
        let mut anc = vec![0u32; k];
        for &(a, b) in &self.edges {
            anc[b - 1] |= attr_bit(k, a - 1);
        }
        // Iterate to a fixed point; at most K rounds on a DAG.
        loop {
            let mut changed = false;
            for l in 0..k {
                let mut m = anc[l];
                for a in 0..k {
                    if anc[l] & attr_bit(k, a) != 0 {
                        m |= anc[a];
                    }
                }
                if m != anc[l] {
                    anc[l] = m;
                    changed = true;
                }
            }
            if !changed {
                return anc;
            }
        }
    }

    pub fn transitive_closure(&self) -> Hierarchy {
        let anc = self.ancestor_masks();
        let mut edges = Vec::new();
        for (l, &m) in anc.iter().enumerate() {
            for a in 0..self.k {
                if m & attr_bit(self.k, a) != 0 {
                    edges.push((a + 1, l + 1));
                }
            }
        }
        edges.sort_unstable();
        Hierarchy { k: self.k, edges }
    }

    /// Whether a profile respects every edge.
    pub fn admits(&self, p: Profile) -> bool {
        self.edges
            .iter()
            .all(|&(a, b)| !p.has(b - 1) || p.has(a - 1))
    }

    /// Attributes (0-based) touched by any edge.
    pub fn involved_attributes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges.iter().flat_map(|&(a, b)| [a - 1, b - 1]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn transitive_closure(h: &Hierarchy) -> Hierarchy {
    h.transitive_closure()
}

/// Ordered set of distinct profiles over K attributes, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ProfileSetFile", into = "ProfileSetFile")]
pub struct ProfileSet {
    k: usize,
    profiles: Vec<Profile>,
}

#[derive(Serialize, Deserialize)]
struct ProfileSetFile {
    #[serde(rename = "K")]
    k: usize,
    profiles: Vec<String>,
}

impl TryFrom<ProfileSetFile> for ProfileSet {
    type Error = Error;
    fn try_from(f: ProfileSetFile) -> Result<Self> {
        let profiles = f
            .profiles
            .iter()
            .map(|s| s.parse::<Profile>())
            .collect::<Result<Vec<_>>>()?;
        ProfileSet::new(f.k, profiles)
    }
}

impl From<ProfileSet> for ProfileSetFile {
    fn from(s: ProfileSet) -> Self {
        ProfileSetFile {
            k: s.k,
            profiles: s.profiles.iter().map(|p| p.to_string()).collect(),
        }
    }
}

impl ProfileSet {
    /// Builds a set from arbitrary-order profiles; rejects duplicates.
    pub fn new(k: usize, mut profiles: Vec<Profile>) -> Result<Self> {
        check_k(k)?;
        if profiles.iter().any(|p| p.k() != k) {
            return Err(Error::DimensionMismatch(format!("profile length differs from K={k}")));
        }
        profiles.sort_unstable();
        let before = profiles.len();
        profiles.dedup();
        if profiles.len() != before {
            return Err(Error::InvalidParam("duplicate profiles in set".into()));
        }
        Ok(ProfileSet { k, profiles })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let k = rows
            .first()
            .map(|r| r.len())
            .ok_or(Error::EmptySupport)?;
        let ps = rows.iter().map(|r| Profile::from_bits(r)).collect::<Result<Vec<_>>>()?;
        Self::new(k, ps)
    }

    pub fn full(k: usize) -> Result<Self> {
        if k > MAX_ENUM_K {
            return Err(Error::KTooLarge(k, MAX_ENUM_K));
        }
        check_k(k)?;
        Ok(ProfileSet {
            k,
            profiles: (0..1u32 << k).map(|c| Profile { code: c, k: k as u8 }).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn get(&self, i: usize) -> Profile {
        self.profiles[i]
    }

    pub fn index_of(&self, p: Profile) -> Option<usize> {
        self.profiles.binary_search(&p).ok()
    }

    pub fn contains(&self, p: Profile) -> bool {
        self.index_of(p).is_some()
    }

    /// All profiles over K attributes not in this set.
    pub fn complement(&self) -> Result<Self> {
        let full = Self::full(self.k)?;
        Ok(ProfileSet {
            k: self.k,
            profiles: full.profiles.into_iter().filter(|p| !self.contains(*p)).collect(),
        })
    }

    pub fn is_subset_of(&self, other: &ProfileSet) -> bool {
        self.k == other.k && self.profiles.iter().all(|p| other.contains(*p))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.profiles.iter().map(|p| p.bits()).collect()
    }
}

pub fn induce_profile_set(h: &Hierarchy) -> Result<ProfileSet> {
    let full = ProfileSet::full(h.k())?;
    Ok(ProfileSet {
        k: h.k(),
        profiles: full.profiles.into_iter().filter(|p| h.admits(*p)).collect(),
    })
}

fn check_same_k(q: &QMatrix, k: usize, what: &str) -> Result<()> {
    if q.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "Q has K={} but {what} has K={k}",
            q.k()
        )));
    }
    Ok(())
}

/// Clears every prerequisite (over the transitive closure) of a required
/// attribute.
pub fn sparsify(q: &QMatrix, h: &Hierarchy) -> Result<QMatrix> {
    check_same_k(q, h.k(), "hierarchy")?;
    let anc = h.ancestor_masks();
    let rows = q
        .rows
        .iter()
        .map(|&m| m & !prerequisites_of(q.k, m, &anc))
        .collect();
    QMatrix::from_masks(q.k, rows)
}

/// Sets every prerequisite (over the transitive closure) of a required
/// attribute.
pub fn densify(q: &QMatrix, h: &Hierarchy) -> Result<QMatrix> {
    check_same_k(q, h.k(), "hierarchy")?;
    let anc = h.ancestor_masks();
    let rows = q
        .rows
        .iter()
        .map(|&m| m | prerequisites_of(q.k, m, &anc))
        .collect();
    QMatrix::from_masks(q.k, rows)
}

fn prerequisites_of(k: usize, row: u32, anc: &[u32]) -> u32 {
    (0..k)
        .filter(|&l| row & attr_bit(k, l) != 0)
        .fold(0, |acc, l| acc | anc[l])
}

/// J×|A| binary matrix with columns labelled by a profile set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintMatrix {
    j: usize,
    entries: Vec<u8>,
    profiles: ProfileSet,
}

impl ConstraintMatrix {
    pub fn nrows(&self) -> usize {
        self.j
    }

    pub fn ncols(&self) -> usize {
        self.profiles.len()
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    #[inline]
    pub fn get(&self, j: usize, a: usize) -> u8 {
        self.entries[j * self.ncols() + a]
    }

    pub fn column(&self, a: usize) -> Vec<u8> {
        (0..self.j).map(|j| self.get(j, a)).collect()
    }

    pub fn row(&self, j: usize) -> &[u8] {
        let c = self.ncols();
        &self.entries[j * c..(j + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.j).map(|j| self.row(j).to_vec()).collect()
    }

    /// Column of `profile`, if it labels one.
    pub fn column_of(&self, profile: Profile) -> Option<Vec<u8>> {
        self.profiles.index_of(profile).map(|a| self.column(a))
    }
}

/// Ideal-response rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// All required attributes present.
    Dina,
    /// Any required attribute present.
    Dino,
}

impl Rule {
    #[inline]
    pub fn ideal(self, profile: Profile, row_mask: u32) -> u8 {
        match self {
            Rule::Dina => profile.covers(row_mask) as u8,
            Rule::Dino => (profile.code() & row_mask != 0) as u8,
        }
    }
}

pub fn ideal_response(q: &QMatrix, a: &ProfileSet, rule: Rule) -> Result<ConstraintMatrix> {
    check_same_k(q, a.k(), "profile set")?;
    let mut entries = Vec::with_capacity(q.j() * a.len());
    for &m in &q.rows {
        entries.extend(a.profiles().iter().map(|&p| rule.ideal(p, m)));
    }
    Ok(ConstraintMatrix {
        j: q.j(),
        entries,
        profiles: a.clone(),
    })
}

/// `Γ_{j,α} = I(α ⪰ q_j)`.
pub fn constraint_matrix(q: &QMatrix, a: &ProfileSet) -> Result<ConstraintMatrix> {
    ideal_response(q, a, Rule::Dina)
}

fn check_items(g: &ConstraintMatrix, s: &[usize]) -> Result<()> {
    for &j in s {
        if j >= g.nrows() {
            return Err(Error::Index {
                what: "item",
                index: j + 1,
                bound: g.nrows(),
            });
        }
    }
    Ok(())
}

/// `a ⪰_S b`: column `a` dominates column `b` on every item of `s`.
pub fn partial_order_holds(g: &ConstraintMatrix, s: &[usize], a: usize, b: usize) -> Result<bool> {
    check_items(g, s)?;
    for c in [a, b] {
        if c >= g.ncols() {
            return Err(Error::Index {
                what: "profile column",
                index: c + 1,
                bound: g.ncols(),
            });
        }
    }
    Ok(s.iter().all(|&j| g.get(j, a) >= g.get(j, b)))
}

/// Whether the relations induced by `s1` and `s2` agree on every ordered
/// column pair.
pub fn partial_orders_equal(g: &ConstraintMatrix, s1: &[usize], s2: &[usize]) -> Result<bool> {
    check_items(g, s1)?;
    check_items(g, s2)?;
    let n = g.ncols();
    for a in 0..n {
        for b in 0..n {
            let r1 = s1.iter().all(|&j| g.get(j, a) >= g.get(j, b));
            let r2 = s2.iter().all(|&j| g.get(j, a) >= g.get(j, b));
            if r1 != r2 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
