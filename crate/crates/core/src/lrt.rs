//! Likelihood ratio statistic and its p-values: parametric and
//! nonparametric bootstrap, the naive chi-squared reference and the
//! chi-bar-squared mixture.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::em::{fit_em_inner, CdmFit, FitConfig, StartPoint};
use crate::error::{Error, Result};
use crate::models::{simulate_with_rng, ModelKind, ProportionVector, ResponseMatrix};
use crate::qmatrix::{induce_profile_set, Hierarchy, ProfileSet, QMatrix};

/// |λ| below this is treated as an exact zero; more negative values mean
/// the two fits are not nested.
pub const LAMBDA_TOL: f64 = 1e-6;

/// Mass moved off the null fit in the perturbed alternative start.
const PERTURB_MIX: f64 = 0.02;

/// `−2 (l0 − l1)`.
pub fn lrt_from_logliks(l0: f64, l1: f64) -> Result<f64> {
    let lambda = -2.0 * (l0 - l1);
    if lambda < -LAMBDA_TOL || !lambda.is_finite() {
        return Err(Error::Nesting { null: l0, alt: l1 });
    }
    Ok(if lambda.abs() < LAMBDA_TOL { 0.0 } else { lambda })
}

pub fn lrt_statistic(fit0: &CdmFit, fit1: &CdmFit) -> Result<f64> {
    if fit0.kind() != fit1.kind() {
        return Err(Error::InvalidParam("null and alternative fits use different models".into()));
    }
    if !fit0.support().is_subset_of(fit1.support()) {
        return Err(Error::InvalidParam(
            "null support is not contained in the alternative support".into(),
        ));
    }
    lrt_from_logliks(fit0.loglik, fit1.loglik)
}

/// Survival function of χ²_df at `lambda`.
pub fn naive_chisq_pvalue(lambda: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidDf(df));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParam(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParam(e.to_string()))?;
    Ok(chi.sf(lambda))
}

/// `Σ_m w_m P(χ²_{df_m} ≥ λ)`, where χ²_0 is a point mass at zero.
pub fn chibar_pvalue(lambda: f64, weights: &[f64], dfs: &[usize]) -> Result<f64> {
    if weights.len() != dfs.len() || weights.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} components",
            weights.len(),
            dfs.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Weights(total));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParam(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let mut p = 0.0;
    for (&w, &df) in weights.iter().zip(dfs) {
        if df > 0 && w > 0.0 {
            p += w * naive_chisq_pvalue(lambda, df)?;
        }
    }
    Ok(p.min(1.0))
}

/// The single-boundary mixture ½χ²₀ + ½χ²₁.
pub fn chibar_half(lambda: f64) -> Result<f64> {
    chibar_pvalue(lambda, &[0.5, 0.5], &[0, 1])
}

/// Add-one Monte-Carlo p-value.
pub fn bootstrap_pvalue(lambda_obs: f64, boot: &[f64]) -> f64 {
    let count = boot.iter().filter(|&&l| l >= lambda_obs).count();
    (1 + count) as f64 / (boot.len() + 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ParametricBoot,
    NonparametricBoot,
    NaiveChisq,
    Chibar,
}

impl Method {
    pub fn short_name(self) -> &'static str {
        match self {
            Method::ParametricBoot => "pboot",
            Method::NonparametricBoot => "npboot",
            Method::NaiveChisq => "chisq",
            Method::Chibar => "chibar",
        }
    }

    pub fn is_bootstrap(self) -> bool {
        matches!(self, Method::ParametricBoot | Method::NonparametricBoot)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pboot" | "parametric_boot" => Ok(Method::ParametricBoot),
            "npboot" | "nonparametric_boot" => Ok(Method::NonparametricBoot),
            "chisq" | "naive_chisq" => Ok(Method::NaiveChisq),
            "chibar" => Ok(Method::Chibar),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub loglik: f64,
    pub converged: bool,
    pub n_free_params: usize,
    pub iters: usize,
}

impl From<&CdmFit> for FitSummary {
    fn from(f: &CdmFit) -> Self {
        FitSummary {
            loglik: f.loglik,
            converged: f.converged,
            n_free_params: f.n_free_params,
            iters: f.iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub lambda_obs: f64,
    pub method: Method,
    #[serde(rename = "B")]
    pub b: usize,
    pub p_value: f64,
    pub seed: u64,
    /// Degrees of freedom used by the naive reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boot_lambdas: Option<Vec<f64>>,
    /// Replicates whose fits stayed out of order after a retry (λ_b set to 0).
    pub failed_replicates: usize,
    pub null_fit: FitSummary,
    pub alt_fit: FitSummary,
}

/// Settings shared by all p-value methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestOptions {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    /// Default/random starts per refit inside a bootstrap replicate, in
    /// addition to the warm starts taken from the observed null fit. Zero
    /// runs the warm starts only.
    pub boot_starts: usize,
    /// Convergence tolerance for replicate refits; defaults to the
    /// tolerance of the observed fits.
    pub boot_loglik_tol: Option<f64>,
    /// Overrides the naive degrees of freedom `|A1| − |A0|`.
    pub df: Option<usize>,
    pub emit_lambdas: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            b: 500,
            seed: 0,
            boot_starts: 0,
            boot_loglik_tol: None,
            df: None,
            emit_lambdas: false,
        }
    }
}

/// Null and alternative supports for a given Q-matrix and model.
#[derive(Clone, Debug)]
pub struct TestProblem {
    pub q: QMatrix,
    pub kind: ModelKind,
    pub null_support: ProfileSet,
    pub alt_support: ProfileSet,
}

/// Fits of the observed data under both hypotheses.
#[derive(Clone, Debug)]
pub struct Observed {
    pub fit0: CdmFit,
    pub fit1: CdmFit,
    pub lambda: f64,
}

/// Replicate λ values plus the count of replicates that failed twice.
#[derive(Clone, Debug, PartialEq)]
pub struct BootDraws {
    pub lambdas: Vec<f64>,
    pub failed: usize,
}

/// Seed for replicate `b` drawn from its own stream of the master seed.
pub fn sub_seed(master: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(b);
    rng.next_u64()
}

impl TestProblem {
    /// `h1 = None` tests against the unrestricted profile set. The null
    /// support must be contained in the alternative support.
    pub fn new(q: QMatrix, kind: ModelKind, h0: &Hierarchy, h1: Option<&Hierarchy>) -> Result<Self> {
        if h0.k() != q.k() || h1.is_some_and(|h| h.k() != q.k()) {
            return Err(Error::DimensionMismatch("hierarchy K differs from Q".into()));
        }
        let null_support = induce_profile_set(h0)?;
        let alt_support = match h1 {
            Some(h) => {
                let closure = h0.transitive_closure();
                let missing: Vec<(usize, usize)> = h
                    .edges()
                    .iter()
                    .filter(|e| !closure.edges().contains(e))
                    .copied()
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::NotASubset(missing));
                }
                induce_profile_set(h)?
            }
            None => ProfileSet::full(q.k())?,
        };
        Ok(TestProblem {
            q,
            kind,
            null_support,
            alt_support,
        })
    }

    pub fn naive_df(&self) -> usize {
        self.alt_support.len() - self.null_support.len()
    }

    fn check_data(&self, data: &ResponseMatrix) -> Result<()> {
        if data.j() != self.q.j() {
            return Err(Error::ColumnCountMismatch {
                expected: self.q.j(),
                got: data.j(),
            });
        }
        Ok(())
    }

    /// Alternative-support starts derived from a null fit: the exact
    /// embedding (keeps λ ≥ 0) and a slightly spread copy.
    fn alt_starts(&self, fit0: &CdmFit) -> Result<Vec<StartPoint>> {
        let exact = fit0.as_start();
        let n = self.alt_support.len();
        let mut probs = vec![PERTURB_MIX / n as f64; n];
        for (a, &v) in fit0.p.support.profiles().iter().zip(&fit0.p.probs) {
            let i = self.alt_support.index_of(*a).expect("null support nested in alternative");
            probs[i] += (1.0 - PERTURB_MIX) * v;
        }
        let spread = StartPoint {
            params: fit0.params.clone(),
            p: ProportionVector::new(self.alt_support.clone(), probs)?,
        };
        Ok(vec![exact, spread])
    }

    fn fit_pair(
        &self,
        data: &ResponseMatrix,
        cfg: &FitConfig,
        null_starts: &[StartPoint],
        generated: usize,
    ) -> Result<Observed> {
        let fit0 = fit_em_inner(self.kind, &self.q, &self.null_support, data, cfg, null_starts, generated)?;
        let starts = self.alt_starts(&fit0)?;
        let fit1 = fit_em_inner(self.kind, &self.q, &self.alt_support, data, cfg, &starts, generated)?;
        let lambda = lrt_statistic(&fit0, &fit1)?;
        Ok(Observed { fit0, fit1, lambda })
    }

    pub fn observe(&self, data: &ResponseMatrix, cfg: &FitConfig) -> Result<Observed> {
        self.check_data(data)?;
        cfg.validate()?;
        self.fit_pair(data, cfg, &[], cfg.n_starts)
    }

    /// λ for one replicate dataset; one retry with more starts on a nesting
    /// failure. `Ok(None)` means both attempts failed.
    fn replicate_lambda(
        &self,
        data: &ResponseMatrix,
        cfg: &FitConfig,
        warm: &StartPoint,
        generated: usize,
    ) -> Result<Option<f64>> {
        match self.fit_pair(data, cfg, std::slice::from_ref(warm), generated) {
            Ok(o) => Ok(Some(o.lambda)),
            Err(Error::Nesting { .. }) => {
                let retry = FitConfig {
                    seed: cfg.seed ^ 0x5eed,
                    ..cfg.clone()
                };
                match self.fit_pair(data, &retry, std::slice::from_ref(warm), generated + 4) {
                    Ok(o) => Ok(Some(o.lambda)),
                    Err(Error::Nesting { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            Err(e) => Err(e),
        }
    }

    fn run_replicates<F>(&self, obs: &Observed, cfg: &FitConfig, opts: &TestOptions, make_data: F) -> Result<BootDraws>
    where
        F: Fn(&mut ChaCha8Rng) -> Result<ResponseMatrix> + Sync,
    {
        if opts.b == 0 {
            return Err(Error::InvalidParam("B must be >= 1".into()));
        }
        if let Some(t) = opts.boot_loglik_tol {
            if !(t > 0.0) {
                return Err(Error::InvalidParam("boot_loglik_tol must be > 0".into()));
            }
        }
        let warm = obs.fit0.as_start();
        let draws: Vec<Result<Option<f64>>> = (0..opts.b as u64)
            .into_par_iter()
            .map(|b| {
                let seed = sub_seed(opts.seed, b);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let data = make_data(&mut rng)?;
                let rcfg = FitConfig {
                    seed,
                    loglik_tol: opts.boot_loglik_tol.unwrap_or(cfg.loglik_tol),
                    record_trace: false,
                    ..cfg.clone()
                };
                self.replicate_lambda(&data, &rcfg, &warm, opts.boot_starts)
            })
            .collect();
        let mut lambdas = Vec::with_capacity(opts.b);
        let mut failed = 0;
        for d in draws {
            match d? {
                Some(l) => lambdas.push(l),
                None => {
                    failed += 1;
                    lambdas.push(0.0);
                }
            }
        }
        if failed > 0 {
            log::warn!("{failed} bootstrap replicates failed the nesting check twice");
        }
        Ok(BootDraws { lambdas, failed })
    }

    /// Replicates simulated from the fitted null model.
    pub fn parametric_draws(&self, obs: &Observed, n: usize, cfg: &FitConfig, opts: &TestOptions) -> Result<BootDraws> {
        self.run_replicates(obs, cfg, opts, |rng| {
            simulate_with_rng(&obs.fit0.params, &obs.fit0.p, &self.q, n, rng).map(|(d, _)| d)
        })
    }

    /// Replicates resampled with replacement from the observed rows.
    pub fn nonparametric_draws(
        &self,
        obs: &Observed,
        data: &ResponseMatrix,
        cfg: &FitConfig,
        opts: &TestOptions,
    ) -> Result<BootDraws> {
        let n = data.n();
        self.run_replicates(obs, cfg, opts, |rng| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            Ok(data.select_rows(&idx))
        })
    }

    /// P-value for `method` given the observed fits.
    pub fn report(
        &self,
        obs: &Observed,
        data: &ResponseMatrix,
        method: Method,
        cfg: &FitConfig,
        opts: &TestOptions,
    ) -> Result<TestReport> {
        self.check_data(data)?;
        let mut report = TestReport {
            label: None,
            lambda_obs: obs.lambda,
            method,
            b: 0,
            p_value: f64::NAN,
            seed: opts.seed,
            df: None,
            boot_lambdas: None,
            failed_replicates: 0,
            null_fit: (&obs.fit0).into(),
            alt_fit: (&obs.fit1).into(),
        };
        match method {
            Method::NaiveChisq => {
                let df = opts.df.unwrap_or_else(|| self.naive_df());
                report.df = Some(df);
                report.p_value = naive_chisq_pvalue(obs.lambda, df)?;
            }
            Method::Chibar => report.p_value = chibar_half(obs.lambda)?,
            Method::ParametricBoot | Method::NonparametricBoot => {
                let draws = if method == Method::ParametricBoot {
                    self.parametric_draws(obs, data.n(), cfg, opts)?
                } else {
                    self.nonparametric_draws(obs, data, cfg, opts)?
                };
                report.b = opts.b;
                report.p_value = bootstrap_pvalue(obs.lambda, &draws.lambdas);
                report.failed_replicates = draws.failed;
                if opts.emit_lambdas {
                    report.boot_lambdas = Some(draws.lambdas);
                }
            }
        }
        Ok(report)
    }

    pub fn run(
        &self,
        data: &ResponseMatrix,
        method: Method,
        cfg: &FitConfig,
        opts: &TestOptions,
    ) -> Result<TestReport> {
        let obs = self.observe(data, cfg)?;
        self.report(&obs, data, method, cfg, opts)
    }
}

/// Parametric bootstrap test of `h0` against the unrestricted model.
pub fn parametric_bootstrap_test(
    q: &QMatrix,
    h0: &Hierarchy,
    kind: ModelKind,
    data: &ResponseMatrix,
    b: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<TestReport> {
    let problem = TestProblem::new(q.clone(), kind, h0, None)?;
    let opts = TestOptions {
        b,
        seed,
        ..Default::default()
    };
    problem.run(data, Method::ParametricBoot, cfg, &opts)
}

/// Nonparametric bootstrap test of `h0` against the unrestricted model.
pub fn nonparametric_bootstrap_test(
    q: &QMatrix,
    h0: &Hierarchy,
    kind: ModelKind,
    data: &ResponseMatrix,
    b: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<TestReport> {
    let problem = TestProblem::new(q.clone(), kind, h0, None)?;
    let opts = TestOptions {
        b,
        seed,
        ..Default::default()
    };
    problem.run(data, Method::NonparametricBoot, cfg, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        for m in [
            Method::ParametricBoot,
            Method::NonparametricBoot,
            Method::NaiveChisq,
            Method::Chibar,
        ] {
            assert_eq!(m.short_name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("wald".parse::<Method>(), Err(Error::UnknownMethod(_))));
        assert_eq!(serde_json::to_string(&Method::ParametricBoot).unwrap(), "\"parametric_boot\"");
    }

    #[test]
    fn zero_band() {
        assert_eq!(lrt_from_logliks(-10.0, -10.0 - 4e-7).unwrap(), 0.0);
        assert_eq!(lrt_from_logliks(-10.0, -10.0 + 4e-7).unwrap(), 0.0);
        assert!(lrt_from_logliks(-10.0, -10.0 - 1e-6).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        let s: Vec<u64> = (0..50).map(|b| sub_seed(9, b)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 50);
        assert_eq!(sub_seed(9, 3), s[3]);
    }

    #[test]
    fn negative_lambda_rejected_by_references() {
        assert!(naive_chisq_pvalue(-1.0, 2).is_err());
        assert!(chibar_pvalue(-1.0, &[0.5, 0.5], &[0, 1]).is_err());
        assert!(matches!(chibar_pvalue(1.0, &[0.5, 0.6], &[0, 1]), Err(Error::Weights(_))));
    }
}
