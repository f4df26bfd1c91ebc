//! Monte-Carlo experiments: Q-matrix generation, true parameters, repeated
//! tests, rejection rates and QQ data.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::FitConfig;
use crate::error::{Error, Result};
use crate::lrt::{sub_seed, Method, TestOptions, TestProblem};
use crate::models::{
    simulate_responses, DinaParams, GdinaParams, ItemParams, ModelKind, ProportionVector,
};
use crate::qmatrix::{induce_profile_set, validate_hierarchy, Hierarchy, ProfileSet, QMatrix};

/// The four K=4 shapes used in the simulation designs, plus explicit edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HierarchySpec {
    Named(Shape),
    Edges { edges: Vec<[usize; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Linear,
    Convergent,
    Divergent,
    Unstructured,
}

impl Shape {
    pub fn edges(self, k: usize) -> Result<Vec<(usize, usize)>> {
        match self {
            Shape::Linear => Ok((1..k).map(|a| (a, a + 1)).collect()),
            Shape::Unstructured => Ok((2..=k).map(|b| (1, b)).collect()),
            Shape::Convergent if k == 4 => Ok(vec![(1, 2), (1, 3), (2, 4), (3, 4)]),
            Shape::Divergent if k == 4 => Ok(vec![(1, 2), (1, 3), (3, 4)]),
            _ => Err(Error::InvalidParam(format!("{self:?} hierarchy is defined for K=4 only"))),
        }
    }
}

impl HierarchySpec {
    pub fn resolve(&self, k: usize) -> Result<Hierarchy> {
        let edges = match self {
            HierarchySpec::Named(s) => s.edges(k)?,
            HierarchySpec::Edges { edges } => edges.iter().map(|e| (e[0], e[1])).collect(),
        };
        validate_hierarchy(k, &edges)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    /// Uniform over the profiles the hierarchy allows.
    Null,
    /// Uniform over all 2^K profiles.
    Alternative,
}

fn default_boot_starts() -> usize {
    0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub hierarchy: HierarchySpec,
    pub truth: Truth,
    /// Success probability of a full master; the floor is `1 − theta_plus`.
    pub theta_plus: f64,
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_boot_starts")]
    pub boot_starts: usize,
    #[serde(default)]
    pub boot_loglik_tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_plus > 0.5 && self.theta_plus < 1.0) {
            return Err(Error::InvalidParam(format!(
                "theta_plus must lie in (0.5, 1), got {}",
                self.theta_plus
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParam("reps must be >= 1".into()));
        }
        if self.b == 0 && self.methods.iter().any(|m| m.is_bootstrap()) {
            return Err(Error::InvalidParam("B must be >= 1 for bootstrap methods".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParam("N must be >= 1".into()));
        }
        self.fit.validate()
    }

    pub fn theta_minus(&self) -> f64 {
        1.0 - self.theta_plus
    }
}

/// Rows 1..K and K+1..2K are identity blocks; the rest are uniform over
/// nonzero attribute patterns.
pub fn generate_q(k: usize, j: usize, seed: u64) -> Result<QMatrix> {
    if j < 2 * k {
        return Err(Error::TooFewItems { j, need: 2 * k });
    }
    if k == 0 || k > 31 {
        return Err(Error::InvalidParam(format!("K={k} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<u32> = (0..2 * k).map(|i| 1u32 << (k - 1 - i % k)).collect();
    while rows.len() < j {
        rows.push(rng.random_range(1..(1u32 << k)));
    }
    QMatrix::from_masks(k, rows)
}

/// GDINA table rising linearly in the number of mastered required
/// attributes, from `lo` (none) to `hi` (all).
pub fn spaced_table(width: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..1usize << width)
        .map(|r| lo + (hi - lo) * r.count_ones() as f64 / width as f64)
        .collect()
}

/// True item parameters and proportions for a design.
pub fn make_truth(cfg: &ExperimentConfig, q: &QMatrix) -> Result<(ItemParams, ProportionVector)> {
    let lo = cfg.theta_minus();
    let params = match cfg.model {
        ModelKind::Dina => ItemParams::Dina(DinaParams::uniform(q.j(), lo, lo)?),
        ModelKind::Dino => ItemParams::Dino(DinaParams::uniform(q.j(), lo, lo)?),
        ModelKind::Gdina => {
            let tables = (0..q.j())
                .map(|j| spaced_table(q.required(j).len(), lo, cfg.theta_plus))
                .collect();
            ItemParams::Gdina(GdinaParams::new(q, tables)?)
        }
    };
    let support = match cfg.truth {
        Truth::Null => induce_profile_set(&cfg.hierarchy.resolve(cfg.k)?)?,
        Truth::Alternative => ProfileSet::full(cfg.k)?,
    };
    Ok((params, ProportionVector::uniform(support)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub lambda_obs: Option<f64>,
    pub p_values: BTreeMap<String, f64>,
    pub null_converged: bool,
    pub alt_converged: bool,
    pub failed_replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub rejection_rate: f64,
    pub standard_error: f64,
    /// Reps that produced a p-value.
    pub reps: usize,
    pub p_values: Vec<f64>,
    pub ks_uniform: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub q: Vec<Vec<u8>>,
    pub methods: Vec<MethodSummary>,
    pub reps: Vec<RepResult>,
    pub nonconverged_reps: usize,
    pub wall_clock_secs: f64,
}

impl ExperimentResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Observed λ of every successful rep, in rep order.
    pub fn lambdas(&self) -> Vec<f64> {
        self.reps.iter().filter_map(|r| r.lambda_obs).collect()
    }
}

pub const ALPHA: f64 = 0.05;

fn run_rep(
    cfg: &ExperimentConfig,
    problem: &TestProblem,
    truth: &(ItemParams, ProportionVector),
    rep: usize,
) -> RepResult {
    let seed = sub_seed(cfg.seed, rep as u64);
    let mut out = RepResult {
        rep,
        seed,
        lambda_obs: None,
        p_values: BTreeMap::new(),
        null_converged: false,
        alt_converged: false,
        failed_replicates: 0,
        error: None,
    };
    let mut attempt = || -> Result<()> {
        let (data, _) = simulate_responses(&truth.0, &truth.1, &problem.q, cfg.n, seed)?;
        let fit_cfg = FitConfig {
            seed,
            ..cfg.fit.clone()
        };
        let obs = problem.observe(&data, &fit_cfg)?;
        out.lambda_obs = Some(obs.lambda);
        out.null_converged = obs.fit0.converged;
        out.alt_converged = obs.fit1.converged;
        let opts = TestOptions {
            b: cfg.b,
            seed,
            boot_starts: cfg.boot_starts,
            boot_loglik_tol: cfg.boot_loglik_tol,
            df: None,
            emit_lambdas: false,
        };
        for &m in &cfg.methods {
            let report = problem.report(&obs, &data, m, &fit_cfg, &opts)?;
            out.failed_replicates += report.failed_replicates;
            out.p_values.insert(m.short_name().to_string(), report.p_value);
        }
        Ok(())
    };
    if let Err(e) = attempt() {
        log::warn!("rep {rep} failed: {e}");
        out.error = Some(e.to_string());
    }
    out
}

/// Runs `cfg.reps` independent simulate-and-test repetitions.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let q = generate_q(cfg.k, cfg.j, cfg.seed)?;
    let h0 = cfg.hierarchy.resolve(cfg.k)?;
    let problem = TestProblem::new(q.clone(), cfg.model, &h0, None)?;
    let truth = make_truth(cfg, &q)?;
    let reps: Vec<RepResult> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(cfg, &problem, &truth, r))
        .collect();

    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let mut p: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.p_values.get(m.short_name()).copied())
                .collect();
            p.sort_by(f64::total_cmp);
            let n = p.len();
            let rate = if n == 0 {
                f64::NAN
            } else {
                p.iter().filter(|&&v| v <= ALPHA).count() as f64 / n as f64
            };
            MethodSummary {
                method: m,
                rejection_rate: rate,
                standard_error: (rate * (1.0 - rate) / n as f64).sqrt(),
                reps: n,
                ks_uniform: ks_uniform(&p),
                p_values: p,
            }
        })
        .collect();
    let nonconverged_reps = reps
        .iter()
        .filter(|r| r.error.is_none() && !(r.null_converged && r.alt_converged))
        .count();
    Ok(ExperimentResult {
        config: cfg.clone(),
        q: q.to_rows(),
        methods,
        reps,
        nonconverged_reps,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Kolmogorov distance between the empirical law of `sample` and a
/// continuous `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    ks_distance_atoms(sample, &cdf, &cdf)
}

/// Kolmogorov distance for a reference law that may have atoms; `cdf_left`
/// is the left limit `P(X < x)`.
pub fn ks_distance_atoms<F, G>(sample: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        // ties form one jump of the empirical CDF
        let mut k = i;
        while k + 1 < s.len() && s[k + 1] == s[i] {
            k += 1;
        }
        let below = i as f64 / n;
        let at = (k + 1) as f64 / n;
        d = d.max((cdf_left(s[i]) - below).abs()).max((at - cdf(s[i])).abs());
        i = k + 1;
    }
    d
}

/// Kolmogorov distance to the uniform law on [0, 1].
pub fn ks_uniform(p: &[f64]) -> f64 {
    ks_distance(p, |x| x.clamp(0.0, 1.0))
}

/// `(i/(R+1), p_(i))` pairs for the sorted p-values of `method`.
pub fn qq_export(result: &ExperimentResult, method: Method) -> Result<Vec<(f64, f64)>> {
    let summary = result
        .method(method)
        .ok_or_else(|| Error::UnknownMethod(method.short_name().to_string()))?;
    Ok(qq_points(&summary.p_values))
}

pub fn qq_points(p: &[f64]) -> Vec<(f64, f64)> {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    let r = s.len() as f64;
    s.into_iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 / (r + 1.0), v))
        .collect()
}

pub fn qq_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("expected,observed\n");
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}
