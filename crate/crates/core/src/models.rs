//! Item response kernels, proportion vectors, marginal likelihood and
//! response simulation.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2, Axis};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmatrix::{Profile, ProfileSet, QMatrix, Rule};

/// Default clamp applied to every item probability.
pub const EPS: f64 = 1e-4;

fn default_eps() -> f64 {
    EPS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dina,
    Dino,
    Gdina,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dina" => Ok(ModelKind::Dina),
            "dino" => Ok(ModelKind::Dino),
            "gdina" => Ok(ModelKind::Gdina),
            other => Err(Error::InvalidParam(format!("unknown model kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Dina => "dina",
            ModelKind::Dino => "dino",
            ModelKind::Gdina => "gdina",
        })
    }
}

/// Slip/guess parameters shared by DINA and DINO.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DinaParams {
    pub slip: Vec<f64>,
    pub guess: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl DinaParams {
    pub fn new(slip: Vec<f64>, guess: Vec<f64>) -> Result<Self> {
        Self::with_eps(slip, guess, EPS)
    }

    /// `eps = 0` gives the noiseless model used for deterministic checks.
    pub fn with_eps(slip: Vec<f64>, guess: Vec<f64>, eps: f64) -> Result<Self> {
        if slip.len() != guess.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} slip vs {} guess values",
                slip.len(),
                guess.len()
            )));
        }
        check_eps(eps)?;
        for &v in slip.iter().chain(&guess) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("probability {v} outside [0,1]")));
            }
        }
        Ok(DinaParams { slip, guess, eps })
    }

    pub fn uniform(j: usize, s: f64, g: f64) -> Result<Self> {
        Self::new(vec![s; j], vec![g; j])
    }

    pub fn j(&self) -> usize {
        self.slip.len()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::InvalidParam(format!("clamp {eps} outside [0, 0.5)")));
    }
    Ok(())
}

fn clamp(v: f64, eps: f64) -> f64 {
    v.clamp(eps, 1.0 - eps)
}

/// Saturated table for one item. `theta[r]` is the success probability for
/// reduced pattern `r` over `required`, the first required attribute being
/// the most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct GdinaItem {
    /// 0-based required attributes, ascending.
    pub required: Vec<usize>,
    pub theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GdinaItemFile {
    required: Vec<usize>,
    theta: BTreeMap<String, f64>,
}

impl Serialize for GdinaItem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let w = self.required.len();
        GdinaItemFile {
            required: self.required.iter().map(|a| a + 1).collect(),
            theta: self
                .theta
                .iter()
                .enumerate()
                .map(|(r, &v)| (pattern_label(r, w), v))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GdinaItem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = GdinaItemFile::deserialize(d)?;
        let w = f.required.len();
        if f.required.iter().any(|&a| a == 0) {
            return Err(D::Error::custom("required attributes are 1-based"));
        }
        let mut theta = vec![f64::NAN; 1 << w];
        for (label, v) in f.theta {
            let r = usize::from_str_radix(&label, 2)
                .ok()
                .filter(|_| label.len() == w)
                .ok_or_else(|| D::Error::custom(format!("bad pattern label '{label}'")))?;
            theta[r] = v;
        }
        if theta.iter().any(|v| v.is_nan()) {
            return Err(D::Error::custom("incomplete theta table"));
        }
        Ok(GdinaItem {
            required: f.required.iter().map(|a| a - 1).collect(),
            theta,
        })
    }
}

fn pattern_label(r: usize, w: usize) -> String {
    (0..w)
        .map(|i| if (r >> (w - 1 - i)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Reduced pattern index of `profile` over `required`.
pub fn reduced_pattern(profile: Profile, required: &[usize]) -> usize {
    required
        .iter()
        .fold(0, |acc, &a| (acc << 1) | profile.has(a) as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdinaParams {
    pub items: Vec<GdinaItem>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl GdinaParams {
    pub fn new(q: &QMatrix, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != q.j() {
            return Err(Error::DimensionMismatch(format!(
                "{} tables for {} items",
                tables.len(),
                q.j()
            )));
        }
        let items = tables
            .into_iter()
            .enumerate()
            .map(|(j, theta)| {
                let required = q.required(j);
                if theta.len() != 1 << required.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "item {} needs {} table entries, got {}",
                        j + 1,
                        1 << required.len(),
                        theta.len()
                    )));
                }
                if theta.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidParam(format!(
                        "item {} has a probability outside [0,1]",
                        j + 1
                    )));
                }
                Ok(GdinaItem { required, theta })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GdinaParams { items, eps: EPS })
    }

    /// The DINA special case: full pattern → 1−s, everything else → g.
    pub fn from_dina(q: &QMatrix, d: &DinaParams) -> Result<Self> {
        if d.j() != q.j() {
            return Err(Error::DimensionMismatch(format!(
                "params for {} items, Q has {}",
                d.j(),
                q.j()
            )));
        }
        let tables = (0..q.j())
            .map(|j| {
                let n = 1 << q.required(j).len();
                (0..n)
                    .map(|r| if r == n - 1 { 1.0 - d.slip[j] } else { d.guess[j] })
                    .collect()
            })
            .collect();
        let mut g = Self::new(q, tables)?;
        g.eps = d.eps;
        Ok(g)
    }

    pub fn j(&self) -> usize {
        self.items.len()
    }
}

/// Item parameters for any supported model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ItemParams {
    Dina(DinaParams),
    Dino(DinaParams),
    Gdina(GdinaParams),
}

impl ItemParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ItemParams::Dina(_) => ModelKind::Dina,
            ItemParams::Dino(_) => ModelKind::Dino,
            ItemParams::Gdina(_) => ModelKind::Gdina,
        }
    }

    pub fn j(&self) -> usize {
        match self {
            ItemParams::Dina(d) | ItemParams::Dino(d) => d.j(),
            ItemParams::Gdina(g) => g.j(),
        }
    }

    pub fn eps(&self) -> f64 {
        match self {
            ItemParams::Dina(d) | ItemParams::Dino(d) => d.eps,
            ItemParams::Gdina(g) => g.eps,
        }
    }

    /// Number of free item parameters.
    pub fn n_params(&self) -> usize {
        match self {
            ItemParams::Dina(d) | ItemParams::Dino(d) => 2 * d.j(),
            ItemParams::Gdina(g) => g.items.iter().map(|it| it.theta.len()).sum(),
        }
    }

    fn check_q(&self, q: &QMatrix) -> Result<()> {
        if self.j() != q.j() {
            return Err(Error::DimensionMismatch(format!(
                "params for {} items, Q has {}",
                self.j(),
                q.j()
            )));
        }
        if let ItemParams::Gdina(g) = self {
            for (j, it) in g.items.iter().enumerate() {
                if it.required != q.required(j) {
                    return Err(Error::DimensionMismatch(format!(
                        "item {} table does not match the Q-matrix row",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unclamped probability for item `j` (0-based) at `profile`.
    fn raw_prob(&self, q: &QMatrix, j: usize, profile: Profile) -> f64 {
        match self {
            ItemParams::Dina(d) => {
                if Rule::Dina.ideal(profile, q.row_mask(j)) == 1 {
                    1.0 - d.slip[j]
                } else {
                    d.guess[j]
                }
            }
            ItemParams::Dino(d) => {
                if Rule::Dino.ideal(profile, q.row_mask(j)) == 1 {
                    1.0 - d.slip[j]
                } else {
                    d.guess[j]
                }
            }
            ItemParams::Gdina(g) => {
                let it = &g.items[j];
                it.theta[reduced_pattern(profile, &it.required)]
            }
        }
    }

    /// J × |support| matrix of clamped success probabilities.
    pub fn theta_matrix(&self, q: &QMatrix, support: &ProfileSet) -> Result<Array2<f64>> {
        self.check_q(q)?;
        if support.k() != q.k() {
            return Err(Error::DimensionMismatch(format!(
                "support has K={} but Q has K={}",
                support.k(),
                q.k()
            )));
        }
        let eps = self.eps();
        Ok(Array2::from_shape_fn((q.j(), support.len()), |(j, c)| {
            clamp(self.raw_prob(q, j, support.get(c)), eps)
        }))
    }
}

/// Probability of a correct response to item `j` (1-based) at `profile`.
pub fn item_prob(params: &ItemParams, q: &QMatrix, j: usize, profile: Profile) -> Result<f64> {
    params.check_q(q)?;
    if j == 0 || j > q.j() {
        return Err(Error::Index {
            what: "item",
            index: j,
            bound: q.j(),
        });
    }
    if profile.k() != q.k() {
        return Err(Error::DimensionMismatch(format!(
            "profile has K={} but Q has K={}",
            profile.k(),
            q.k()
        )));
    }
    Ok(clamp(params.raw_prob(q, j - 1, profile), params.eps()))
}

/// Proportions over a profile support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionVector {
    pub support: ProfileSet,
    pub probs: Vec<f64>,
}

impl ProportionVector {
    /// Normalizes `probs` to sum to one; rejects negative or all-zero input.
    pub fn new(support: ProfileSet, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if probs.len() != support.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} proportions for a support of size {}",
                probs.len(),
                support.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParam("proportions must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParam("proportions sum to zero".into()));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(ProportionVector { support, probs })
    }

    pub fn uniform(support: ProfileSet) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0; n])
    }

    pub fn prob_of(&self, p: Profile) -> f64 {
        self.support.index_of(p).map_or(0.0, |i| self.probs[i])
    }
}

/// N × J binary responses.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrix {
    data: Array2<u8>,
}

impl ResponseMatrix {
    pub fn new(rows: &[Vec<u8>]) -> Result<Self> {
        let j = rows.first().map_or(0, Vec::len);
        let mut data = Array2::zeros((rows.len(), j));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != j {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} entries, expected {j}",
                    i + 1,
                    r.len()
                )));
            }
            for (c, &v) in r.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidParam(format!(
                        "response {v} at row {}, column {} is not binary",
                        i + 1,
                        c + 1
                    )));
                }
                data[[i, c]] = v;
            }
        }
        Ok(ResponseMatrix { data })
    }

    pub fn from_array(data: Array2<u8>) -> Result<Self> {
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParam("responses must be 0/1".into()));
        }
        Ok(ResponseMatrix { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn j(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.data.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        ResponseMatrix {
            data: self.data.select(Axis(0), idx),
        }
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &ResponseMatrix) -> Result<Self> {
        let data = ndarray::concatenate(Axis(0), &[self.data.view(), other.data.view()])
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Ok(ResponseMatrix { data })
    }

    /// Distinct response patterns (in lexicographic order) and their counts.
    pub fn patterns(&self) -> (Array2<f64>, Array1<f64>) {
        let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for r in self.data.rows() {
            *counts.entry(r.to_vec()).or_default() += 1;
        }
        let mut x = Array2::zeros((counts.len(), self.j()));
        let mut w = Array1::zeros(counts.len());
        for (u, (pat, c)) in counts.into_iter().enumerate() {
            for (j, v) in pat.into_iter().enumerate() {
                x[[u, j]] = v as f64;
            }
            w[u] = c as f64;
        }
        (x, w)
    }

    /// Items whose responses are all equal.
    pub fn constant_items(&self) -> Vec<usize> {
        (0..self.j())
            .filter(|&j| {
                let col = self.data.column(j);
                col.iter().all(|&v| v == col[0])
            })
            .collect()
    }
}

/// Per-pattern, per-class log-likelihood `ln P(x_u | class c)`; handles
/// probabilities of exactly 0 or 1.
pub(crate) fn class_loglik(x: &Array2<f64>, theta: &Array2<f64>) -> Array2<f64> {
    let (j, n) = theta.dim();
    if theta.iter().all(|&t| t > 0.0 && t < 1.0) {
        let logit = theta.mapv(|t| (t / (1.0 - t)).ln());
        let base: Array1<f64> = theta.mapv(|t| (1.0 - t).ln()).sum_axis(Axis(0));
        let mut l = x.dot(&logit);
        l += &base;
        return l;
    }
    let ln1 = theta.mapv(f64::ln);
    let ln0 = theta.mapv(|t| (1.0 - t).ln());
    Array2::from_shape_fn((x.nrows(), n), |(u, c)| {
        (0..j)
            .map(|jj| {
                if x[[u, jj]] > 0.5 {
                    ln1[[jj, c]]
                } else {
                    ln0[[jj, c]]
                }
            })
            .sum()
    })
}

/// Adds `ln p` to each class column and returns row-wise log-sum-exp. Rows
/// are left holding `ln p_c + ln P(x_u | c)`.
pub(crate) fn add_log_prior_and_lse(l: &mut Array2<f64>, probs: &[f64]) -> Array1<f64> {
    let lnp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mut out = Array1::zeros(l.nrows());
    for (u, mut row) in l.rows_mut().into_iter().enumerate() {
        let mut m = f64::NEG_INFINITY;
        for (v, lp) in row.iter_mut().zip(&lnp) {
            *v += lp;
            if *v > m {
                m = *v;
            }
        }
        out[u] = if m == f64::NEG_INFINITY {
            m
        } else {
            m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
        };
    }
    out
}

fn check_fit_inputs(
    params: &ItemParams,
    p: &ProportionVector,
    q: &QMatrix,
    data: &ResponseMatrix,
) -> Result<()> {
    if p.support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if data.j() != q.j() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} items, Q has {}",
            data.j(),
            q.j()
        )));
    }
    if p.support.k() != q.k() {
        return Err(Error::DimensionMismatch(format!(
            "support has K={} but Q has K={}",
            p.support.k(),
            q.k()
        )));
    }
    params.check_q(q)
}

/// Marginal log-likelihood summed over respondents.
pub fn marginal_loglik(
    params: &ItemParams,
    p: &ProportionVector,
    q: &QMatrix,
    data: &ResponseMatrix,
) -> Result<f64> {
    check_fit_inputs(params, p, q, data)?;
    let theta = params.theta_matrix(q, &p.support)?;
    let (x, w) = data.patterns();
    let mut l = class_loglik(&x, &theta);
    let lse = add_log_prior_and_lse(&mut l, &p.probs);
    Ok(lse.dot(&w))
}

/// Per-respondent marginal likelihoods `P(R_i)` in data row order.
pub fn respondent_likelihoods(
    params: &ItemParams,
    p: &ProportionVector,
    q: &QMatrix,
    data: &ResponseMatrix,
) -> Result<Array1<f64>> {
    check_fit_inputs(params, p, q, data)?;
    let theta = params.theta_matrix(q, &p.support)?;
    let x = data.data.mapv(|v| v as f64);
    let mut l = class_loglik(&x, &theta);
    Ok(add_log_prior_and_lse(&mut l, &p.probs).mapv(f64::exp))
}

/// Draws `n` respondents: a profile from `p`, then independent Bernoulli
/// responses. Returns the responses and the drawn profiles.
pub fn simulate_responses(
    params: &ItemParams,
    p: &ProportionVector,
    q: &QMatrix,
    n: usize,
    seed: u64,
) -> Result<(ResponseMatrix, Vec<Profile>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(params, p, q, n, &mut rng)
}

pub fn simulate_with_rng<R: Rng>(
    params: &ItemParams,
    p: &ProportionVector,
    q: &QMatrix,
    n: usize,
    rng: &mut R,
) -> Result<(ResponseMatrix, Vec<Profile>)> {
    if n == 0 {
        return Err(Error::InvalidParam("sample size must be >= 1".into()));
    }
    if p.support.k() != q.k() {
        return Err(Error::DimensionMismatch(format!(
            "support has K={} but Q has K={}",
            p.support.k(),
            q.k()
        )));
    }
    let theta = params.theta_matrix(q, &p.support)?;
    let dist = WeightedIndex::new(&p.probs)
        .map_err(|e| Error::InvalidParam(format!("proportions: {e}")))?;
    let mut data = Array2::zeros((n, q.j()));
    let mut profiles = Vec::with_capacity(n);
    for i in 0..n {
        let c = dist.sample(rng);
        profiles.push(p.support.get(c));
        for j in 0..q.j() {
            let u: f64 = rng.random();
            data[[i, j]] = (u < theta[[j, c]]) as u8;
        }
    }
    Ok((ResponseMatrix { data }, profiles))
}

/// Empirical frequency of each support profile among `profiles`.
pub fn profile_frequencies(support: &ProfileSet, profiles: &[Profile]) -> Vec<f64> {
    let mut counts: HashMap<Profile, usize> = HashMap::new();
    for &p in profiles {
        *counts.entry(p).or_default() += 1;
    }
    let n = profiles.len().max(1) as f64;
    support
        .profiles()
        .iter()
        .map(|p| *counts.get(p).unwrap_or(&0) as f64 / n)
        .collect()
}
