//! Multi-start EM for DINA, DINO and saturated GDINA restricted to a profile
//! support.
//!
//! All three models are handled as "grouped" item parameters: for item j
//! every support class falls into a group sharing one success probability
//! (the ideal response for DINA/DINO, the reduced pattern for GDINA). The
//! M-step is then a ratio of expected counts per group.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    add_log_prior_and_lse, class_loglik, reduced_pattern, DinaParams, GdinaItem, GdinaParams,
    ItemParams, ModelKind, ProportionVector, ResponseMatrix, EPS,
};
use crate::qmatrix::{Profile, ProfileSet, QMatrix, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// First start deterministic (uniform proportions, mild noise), the
    /// rest random.
    Uniform,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Absolute change in log-likelihood that counts as converged.
    pub loglik_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub init_strategy: InitStrategy,
    /// Item probability clamp; 0 gives the noiseless model.
    pub eps: f64,
    /// Keep the per-start log-likelihood sequences in the fit.
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 1000,
            loglik_tol: 1e-6,
            n_starts: 5,
            seed: 0,
            init_strategy: InitStrategy::Uniform,
            eps: EPS,
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be >= 1".into()));
        }
        if !(self.loglik_tol > 0.0) {
            return Err(Error::InvalidParam("loglik_tol must be > 0".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidParam("n_starts must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.eps) {
            return Err(Error::InvalidParam("eps must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// An explicit starting point. `p` may live on a smaller support; it is
/// embedded with zeros elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct StartPoint {
    pub params: ItemParams,
    pub p: ProportionVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdmFit {
    pub params: ItemParams,
    pub p: ProportionVector,
    pub loglik: f64,
    pub iters: usize,
    pub converged: bool,
    pub n_free_params: usize,
    /// Index of the winning start (explicit starts come first).
    pub best_start: usize,
    /// DINA/DINO items (1-based) whose estimates satisfy 1−s ≤ g.
    #[serde(default)]
    pub flipped_items: Vec<usize>,
    /// Items (1-based) with constant responses.
    #[serde(default)]
    pub constant_items: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<Vec<f64>>>,
}

impl CdmFit {
    pub fn support(&self) -> &ProfileSet {
        &self.p.support
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn as_start(&self) -> StartPoint {
        StartPoint {
            params: self.params.clone(),
            p: self.p.clone(),
        }
    }
}

/// Group index of every (item, class) pair plus group counts per item.
struct Layout {
    kind: ModelKind,
    group: Vec<Vec<usize>>,
    ngroups: Vec<usize>,
}

impl Layout {
    fn new(kind: ModelKind, q: &QMatrix, support: &ProfileSet) -> Self {
        let mut group = Vec::with_capacity(q.j());
        let mut ngroups = Vec::with_capacity(q.j());
        for j in 0..q.j() {
            let mask = q.row_mask(j);
            match kind {
                ModelKind::Dina | ModelKind::Dino => {
                    let rule = if kind == ModelKind::Dina { Rule::Dina } else { Rule::Dino };
                    group.push(
                        support
                            .profiles()
                            .iter()
                            .map(|&a| rule.ideal(a, mask) as usize)
                            .collect(),
                    );
                    ngroups.push(2);
                }
                ModelKind::Gdina => {
                    let req = q.required(j);
                    group.push(
                        support
                            .profiles()
                            .iter()
                            .map(|&a| reduced_pattern(a, &req))
                            .collect(),
                    );
                    ngroups.push(1 << req.len());
                }
            }
        }
        Layout {
            kind,
            group,
            ngroups,
        }
    }

    fn theta_matrix(&self, theta: &[Vec<f64>]) -> Array2<f64> {
        let n = self.group.first().map_or(0, Vec::len);
        Array2::from_shape_fn((self.group.len(), n), |(j, c)| theta[j][self.group[j][c]])
    }
}

#[derive(Clone)]
struct State {
    /// Per item, per group success probability.
    theta: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

fn state_from_params(q: &QMatrix, params: &ItemParams, eps: f64) -> Vec<Vec<f64>> {
    let c = |v: f64| v.clamp(eps, 1.0 - eps);
    match params {
        ItemParams::Dina(d) | ItemParams::Dino(d) => (0..q.j())
            .map(|j| vec![c(d.guess[j]), c(1.0 - d.slip[j])])
            .collect(),
        ItemParams::Gdina(g) => g
            .items
            .iter()
            .map(|it| it.theta.iter().map(|&v| c(v)).collect())
            .collect(),
    }
}

fn params_from_state(kind: ModelKind, q: &QMatrix, theta: &[Vec<f64>], eps: f64) -> ItemParams {
    match kind {
        ModelKind::Dina | ModelKind::Dino => {
            let d = DinaParams {
                slip: theta.iter().map(|t| 1.0 - t[1]).collect(),
                guess: theta.iter().map(|t| t[0]).collect(),
                eps,
            };
            if kind == ModelKind::Dina {
                ItemParams::Dina(d)
            } else {
                ItemParams::Dino(d)
            }
        }
        ModelKind::Gdina => ItemParams::Gdina(GdinaParams {
            items: theta
                .iter()
                .enumerate()
                .map(|(j, t)| GdinaItem {
                    required: q.required(j),
                    theta: t.clone(),
                })
                .collect(),
            eps,
        }),
    }
}

/// Deterministic start: uniform proportions; success probability rising
/// linearly from 0.2 (nothing mastered) to 0.8 (everything mastered).
fn default_start(layout: &Layout, q: &QMatrix, n: usize) -> State {
    let theta = (0..q.j())
        .map(|j| match layout.kind {
            ModelKind::Dina | ModelKind::Dino => vec![0.2, 0.8],
            ModelKind::Gdina => {
                let w = q.required(j).len() as f64;
                (0..layout.ngroups[j])
                    .map(|r| 0.2 + 0.6 * (r as u32).count_ones() as f64 / w)
                    .collect()
            }
        })
        .collect();
    State {
        theta,
        probs: vec![1.0 / n as f64; n],
    }
}

fn random_start(layout: &Layout, q: &QMatrix, n: usize, rng: &mut ChaCha8Rng) -> State {
    let mut probs: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let theta = (0..q.j())
        .map(|j| {
            let lo = rng.random_range(0.05..0.35);
            let hi = 1.0 - rng.random_range(0.05..0.35);
            match layout.kind {
                ModelKind::Dina | ModelKind::Dino => vec![lo, hi],
                ModelKind::Gdina => {
                    let w = q.required(j).len() as f64;
                    (0..layout.ngroups[j])
                        .map(|r| {
                            let frac = (r as u32).count_ones() as f64 / w;
                            let jitter = if frac > 0.0 && frac < 1.0 {
                                rng.random_range(-0.1..0.1)
                            } else {
                                0.0
                            };
                            (lo + (hi - lo) * frac + jitter).clamp(0.02, 0.98)
                        })
                        .collect()
                }
            }
        })
        .collect();
    State { theta, probs }
}

/// Start generator stream for start `index`.
fn start_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Prepared {
    x: Array2<f64>,
    w: Array1<f64>,
    n: f64,
}

struct RunOutcome {
    state: State,
    loglik: f64,
    iters: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Class terms this far below the row maximum are dropped; they are under
/// the rounding unit of the row sum.
const EXP_CUTOFF: f64 = -40.0;

/// Returns the count-weighted posterior (patterns × classes) and the
/// log-likelihood.
fn e_step(layout: &Layout, data: &Prepared, st: &State) -> (Array2<f64>, f64) {
    let theta = layout.theta_matrix(&st.theta);
    let mut l = class_loglik(&data.x, &theta);
    let lnp: Vec<f64> = st.probs.iter().map(|p| p.ln()).collect();
    let mut ll = 0.0;
    for (mut row, &wu) in l.rows_mut().into_iter().zip(data.w.iter()) {
        let mut m = f64::NEG_INFINITY;
        for (v, lp) in row.iter_mut().zip(&lnp) {
            *v += lp;
            m = m.max(*v);
        }
        if m == f64::NEG_INFINITY {
            ll = f64::NEG_INFINITY;
            row.fill(0.0);
            continue;
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            let d = *v - m;
            *v = if d < EXP_CUTOFF { 0.0 } else { d.exp() };
            sum += *v;
        }
        ll += wu * (m + sum.ln());
        let scale = wu / sum;
        row.mapv_inplace(|v| v * scale);
    }
    (l, ll)
}

fn m_step(layout: &Layout, data: &Prepared, post: &Array2<f64>, st: &mut State, eps: f64) {
    let nc = post.sum_axis(Axis(0));
    for (p, &v) in st.probs.iter_mut().zip(nc.iter()) {
        *p = v / data.n;
    }
    let r = data.x.t().dot(post);
    for j in 0..layout.group.len() {
        let g = layout.ngroups[j];
        let mut num = vec![0.0; g];
        let mut den = vec![0.0; g];
        for (c, &gc) in layout.group[j].iter().enumerate() {
            num[gc] += r[[j, c]];
            den[gc] += nc[c];
        }
        for k in 0..g {
            if den[k] > 0.0 {
                st.theta[j][k] = (num[k] / den[k]).clamp(eps, 1.0 - eps);
            }
        }
    }
}

fn run_em(layout: &Layout, data: &Prepared, mut st: State, cfg: &FitConfig) -> RunOutcome {
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    let mut iters = 0;
    loop {
        let (post, ll) = e_step(layout, data, &st);
        trace.push(ll);
        if let Some(p) = prev {
            if (ll - p).abs() < cfg.loglik_tol {
                return RunOutcome {
                    state: st,
                    loglik: ll,
                    iters,
                    converged: true,
                    trace,
                };
            }
        }
        if iters == cfg.max_iters || !ll.is_finite() {
            return RunOutcome {
                state: st,
                loglik: ll,
                iters,
                converged: false,
                trace,
            };
        }
        m_step(layout, data, &post, &mut st, cfg.eps);
        iters += 1;
        prev = Some(ll);
    }
}

fn embed(support: &ProfileSet, p: &ProportionVector) -> Result<Vec<f64>> {
    if p.support.k() != support.k() {
        return Err(Error::DimensionMismatch("start proportions have a different K".into()));
    }
    let mut probs = vec![0.0; support.len()];
    for (a, &v) in p.support.profiles().iter().zip(&p.probs) {
        match support.index_of(*a) {
            Some(i) => probs[i] = v,
            None if v > 0.0 => {
                return Err(Error::InvalidParam(format!(
                    "start proportion on profile {a} outside the fit support"
                )))
            }
            None => {}
        }
    }
    Ok(probs)
}

/// Fits the model with the configured starts.
pub fn fit_em(
    kind: ModelKind,
    q: &QMatrix,
    support: &ProfileSet,
    data: &ResponseMatrix,
    cfg: &FitConfig,
) -> Result<CdmFit> {
    fit_em_with_starts(kind, q, support, data, cfg, &[])
}

/// Like [`fit_em`], trying the explicit `starts` before the configured ones.
pub fn fit_em_with_starts(
    kind: ModelKind,
    q: &QMatrix,
    support: &ProfileSet,
    data: &ResponseMatrix,
    cfg: &FitConfig,
    starts: &[StartPoint],
) -> Result<CdmFit> {
    cfg.validate()?;
    fit_em_inner(kind, q, support, data, cfg, starts, cfg.n_starts)
}

/// Runs the explicit starts plus `generated` default/random starts.
pub(crate) fn fit_em_inner(
    kind: ModelKind,
    q: &QMatrix,
    support: &ProfileSet,
    data: &ResponseMatrix,
    cfg: &FitConfig,
    starts: &[StartPoint],
    generated: usize,
) -> Result<CdmFit> {
    if starts.len() + generated == 0 {
        return Err(Error::InvalidParam("no starting points".into()));
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if data.n() == 0 {
        return Err(Error::InvalidParam("response data is empty".into()));
    }
    if data.j() != q.j() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} items, Q has {}",
            data.j(),
            q.j()
        )));
    }
    if support.k() != q.k() {
        return Err(Error::DimensionMismatch(format!(
            "support has K={} but Q has K={}",
            support.k(),
            q.k()
        )));
    }
    let layout = Layout::new(kind, q, support);
    let (x, w) = data.patterns();
    let prepared = Prepared {
        x,
        w,
        n: data.n() as f64,
    };
    let n = support.len();

    let mut inits: Vec<State> = Vec::with_capacity(starts.len() + generated);
    for s in starts {
        if s.params.kind() != kind || s.params.j() != q.j() {
            return Err(Error::InvalidParam("start parameters do not match the model".into()));
        }
        inits.push(State {
            theta: state_from_params(q, &s.params, cfg.eps),
            probs: embed(support, &s.p)?,
        });
    }
    for i in 0..generated {
        if i == 0 && cfg.init_strategy == InitStrategy::Uniform {
            inits.push(default_start(&layout, q, n));
        } else {
            let mut rng = start_rng(cfg.seed, i as u64);
            inits.push(random_start(&layout, q, n, &mut rng));
        }
    }

    let runs: Vec<RunOutcome> = inits
        .into_par_iter()
        .map(|st| run_em(&layout, &prepared, st, cfg))
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.loglik > runs[best].loglik {
            best = i;
        }
    }
    let traces = cfg
        .record_trace
        .then(|| runs.iter().map(|r| r.trace.clone()).collect());
    let win = runs.into_iter().nth(best).unwrap();
    let params = params_from_state(kind, q, &win.state.theta, cfg.eps);
    let p = ProportionVector {
        support: support.clone(),
        probs: win.state.probs,
    };

    let constant_items: Vec<usize> = data.constant_items().iter().map(|j| j + 1).collect();
    if !constant_items.is_empty() {
        log::warn!("items with constant responses: {constant_items:?}");
    }
    let flipped_items: Vec<usize> = match &params {
        ItemParams::Dina(d) | ItemParams::Dino(d) => (0..d.j())
            .filter(|&j| 1.0 - d.slip[j] <= d.guess[j])
            .map(|j| j + 1)
            .collect(),
        ItemParams::Gdina(_) => vec![],
    };
    if !flipped_items.is_empty() {
        log::debug!("items with 1-s <= g: {flipped_items:?}");
    }

    Ok(CdmFit {
        n_free_params: (n - 1) + params.n_params(),
        params,
        p,
        loglik: win.loglik,
        iters: win.iters,
        converged: win.converged,
        best_start: best,
        flipped_items,
        constant_items,
        traces,
    })
}

fn check_fit_data(fit: &CdmFit, q: &QMatrix, data: &ResponseMatrix) -> Result<()> {
    if data.j() != q.j() || fit.params.j() != q.j() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} items, Q has {}, fit has {}",
            data.j(),
            q.j(),
            fit.params.j()
        )));
    }
    if fit.support().k() != q.k() {
        return Err(Error::DimensionMismatch("fit support K differs from Q".into()));
    }
    Ok(())
}

/// Posterior class probabilities, N × |support|, in data row order.
pub fn posterior_profiles(fit: &CdmFit, q: &QMatrix, data: &ResponseMatrix) -> Result<Array2<f64>> {
    check_fit_data(fit, q, data)?;
    let theta = fit.params.theta_matrix(q, fit.support())?;
    let x = data.data().mapv(|v| v as f64);
    let mut l = class_loglik(&x, &theta);
    let lse = add_log_prior_and_lse(&mut l, &fit.p.probs);
    for (mut row, &m) in l.rows_mut().into_iter().zip(lse.iter()) {
        row.mapv_inplace(|v| (v - m).exp());
    }
    Ok(l)
}

/// Derivative of the average log-likelihood in the direction that moves mass
/// from the all-zero profile to `alpha_out`:
/// `(1/N) Σ_i [P(R_i | α_out) − P(R_i | 0)] / P(R_i)`.
pub fn boundary_score(
    fit0: &CdmFit,
    q: &QMatrix,
    data: &ResponseMatrix,
    alpha_out: Profile,
) -> Result<f64> {
    check_fit_data(fit0, q, data)?;
    let support = fit0.support();
    if support.contains(alpha_out) {
        return Err(Error::InvalidParam(format!(
            "profile {alpha_out} is already in the fitted support"
        )));
    }
    let base = Profile::zero(q.k());
    if !support.contains(base) {
        return Err(Error::BaseProfileMissing);
    }
    let pair = ProfileSet::new(q.k(), vec![base, alpha_out])?;
    let theta_pair = fit0.params.theta_matrix(q, &pair)?;
    let x = data.data().mapv(|v| v as f64);
    let lp = class_loglik(&x, &theta_pair);
    let theta = fit0.params.theta_matrix(q, support)?;
    let mut l = class_loglik(&x, &theta);
    let lse = add_log_prior_and_lse(&mut l, &fit0.p.probs);
    let (ib, io) = (pair.index_of(base).unwrap(), pair.index_of(alpha_out).unwrap());
    let total: f64 = (0..data.n())
        .map(|i| (lp[[i, io]] - lse[i]).exp() - (lp[[i, ib]] - lse[i]).exp())
        .sum();
    Ok(total / data.n() as f64)
}
