//! `hiercdm` command-line front end.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use hiercdm::em::{fit_em, FitConfig, InitStrategy};
use hiercdm::fixtures::{ecpe_battery, ecpe_q, run_battery};
use hiercdm::io::{read_hierarchy, read_q, read_responses, to_binary_csv};
use hiercdm::lrt::{Method, TestOptions, TestProblem};
use hiercdm::models::{simulate_responses, DinaParams, GdinaParams, ItemParams, ModelKind, ProportionVector};
use hiercdm::qmatrix::{induce_profile_set, Hierarchy, ProfileSet, QMatrix};
use hiercdm::sim::{qq_csv, qq_export, run_experiment, spaced_table, ExperimentConfig, ExperimentResult};
use hiercdm::testability::{
    check_dina_conditional, check_dina_strict, check_general_generic, check_general_strict_with,
    SearchLimits, TestabilityReport, Verdict,
};

use manifest::{RunManifest, SCHEMA};

#[derive(Parser, Debug)]
#[command(name = "hiercdm", version, about = "Test attribute hierarchies in cognitive diagnosis models")]
struct Cli {
    /// Worker threads for fits and bootstrap replicates (results do not
    /// depend on it). Defaults to all cores.
    #[arg(long, global = true, env = "HIERCDM_THREADS")]
    threads: Option<usize>,

    /// Where to write the run manifest. Defaults to `<output>.manifest.json`
    /// when the command writes a file.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check sufficient conditions for testability of a hierarchy.
    /// Exit code 0 = satisfied, 2 = violated, 3 = inconclusive.
    Check(CheckArgs),
    /// Fit a model by EM over the profiles a hierarchy allows.
    Fit(FitArgs),
    /// Likelihood ratio test of a hierarchy, or the ECPE battery.
    Test(TestArgs),
    /// Simulate responses and true profiles.
    Simulate(SimulateArgs),
    /// Run a Monte-Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Export QQ pairs from an experiment result.
    Qq(QqArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelClass {
    Dina,
    General,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Dina,
    Dino,
    Gdina,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Dina => ModelKind::Dina,
            ModelArg::Dino => ModelKind::Dino,
            ModelArg::Gdina => ModelKind::Gdina,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Ecpe,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Q-matrix CSV (J rows of K comma-separated 0/1 values).
    #[arg(long)]
    q: PathBuf,
    /// Hierarchy JSON: {"K": k, "edges": [[prerequisite, dependent], ...]}.
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long, value_enum, default_value = "dina")]
    model_class: ModelClass,
    /// General models only: check generic rather than strict testability.
    #[arg(long)]
    generic: bool,
    /// DINA only: test these edges given the rest, e.g. "1-2,2-3".
    #[arg(long)]
    conditional: Option<String>,
    /// Largest item-set size in the strict general search (default J, which
    /// makes the search exhaustive).
    #[arg(long)]
    cap: Option<usize>,
    /// Work budget of the strict general search.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EmArgs {
    /// Random restarts per fit.
    #[arg(long, default_value_t = 5)]
    n_starts: usize,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Absolute log-likelihood change that counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Item probability clamp; 0 fits the noiseless model.
    #[arg(long, default_value_t = hiercdm::models::EPS)]
    eps: f64,
    /// Use random starts only (the default makes the first start uniform).
    #[arg(long)]
    random_init: bool,
}

impl EmArgs {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            max_iters: self.max_iters,
            loglik_tol: self.tol,
            n_starts: self.n_starts,
            seed,
            init_strategy: if self.random_init {
                InitStrategy::Random
            } else {
                InitStrategy::Uniform
            },
            eps: self.eps,
            record_trace: false,
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    q: PathBuf,
    /// Response CSV (N rows of J comma-separated 0/1 values).
    #[arg(long)]
    data: PathBuf,
    /// Restrict the fit to the profiles this hierarchy allows (default: all
    /// 2^K profiles).
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dina")]
    model: ModelArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Q-matrix CSV; optional with --preset.
    #[arg(long)]
    q: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Run a bundled battery of null/alternative pairs.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum, default_value = "dina")]
    model: ModelArg,
    /// pboot, npboot, chisq or chibar; comma-separated for several.
    #[arg(long, value_delimiter = ',', default_value = "pboot")]
    method: Vec<String>,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Null hierarchy JSON (required without --preset).
    #[arg(long)]
    null_hierarchy: Option<PathBuf>,
    /// Alternative hierarchy JSON; default is the unrestricted model.
    #[arg(long)]
    alt_hierarchy: Option<PathBuf>,
    /// Override the naive chi-squared degrees of freedom.
    #[arg(long)]
    df: Option<usize>,
    /// Extra random starts per bootstrap refit on top of the warm starts.
    #[arg(long, default_value_t = 0)]
    boot_starts: usize,
    /// Convergence tolerance for bootstrap refits (default: --tol).
    #[arg(long)]
    boot_tol: Option<f64>,
    /// Include the bootstrap λ values in the report.
    #[arg(long)]
    emit_lambdas: bool,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    q: PathBuf,
    #[arg(long, value_enum, default_value = "dina")]
    model: ModelArg,
    /// Profiles are drawn uniformly from the set this hierarchy allows
    /// (default: all 2^K profiles).
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Item parameter JSON; default builds tables from --theta-plus.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Success probability of a full master; the floor is 1 − theta_plus.
    #[arg(long, default_value_t = 0.9)]
    theta_plus: f64,
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Response CSV output.
    #[arg(long)]
    out: PathBuf,
    /// True-profile CSV output.
    #[arg(long)]
    profiles_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// ExperimentConfig JSON (see README).
    #[arg(long)]
    config: PathBuf,
    /// Directory for result.json and the qq_<method>.csv files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Use 500 reps and 500 bootstrap replicates.
    #[arg(long)]
    full_scale: bool,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct QqArgs {
    /// ExperimentResult JSON written by `experiment`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(value_name = "MANIFEST")]
    path: PathBuf,
}

/// Outcome of a subcommand: the exit code and the files it wrote.
struct Outcome {
    code: u8,
    artifacts: Vec<PathBuf>,
    config: Value,
    seed: Option<u64>,
}

impl Outcome {
    fn ok(artifacts: Vec<PathBuf>, config: Value, seed: Option<u64>) -> Self {
        Outcome {
            code: 0,
            artifacts,
            config,
            seed,
        }
    }
}

fn with_schema<T: Serialize>(v: &T) -> Result<Value> {
    let mut value = serde_json::to_value(v)?;
    match &mut value {
        Value::Object(map) => {
            map.insert("schema".into(), Value::String(SCHEMA.into()));
            Ok(value)
        }
        _ => Ok(json!({ "schema": SCHEMA, "data": value })),
    }
}

/// Writes to `out` if given, stdout otherwise; returns the written path.
fn emit(text: &str, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            Ok(vec![p.to_path_buf()])
        }
        None => {
            print!("{text}");
            Ok(vec![])
        }
    }
}

fn emit_json(v: &Value, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    emit(&(serde_json::to_string_pretty(v)? + "\n"), out)
}

fn parse_edge_list(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (a, b) = t
                .trim()
                .split_once('-')
                .with_context(|| format!("edge '{t}' is not of the form a-b"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect()
}

fn support_of(h: Option<&Hierarchy>, k: usize) -> Result<ProfileSet> {
    Ok(match h {
        Some(h) => induce_profile_set(h)?,
        None => ProfileSet::full(k)?,
    })
}

fn cmd_check(a: &CheckArgs) -> Result<Outcome> {
    let q = read_q(&a.q)?;
    let h = read_hierarchy(&a.hierarchy)?;
    let report: TestabilityReport = match (a.model_class, &a.conditional) {
        (ModelClass::Dina, Some(c)) => check_dina_conditional(&q, &h, &parse_edge_list(c)?)?,
        (ModelClass::Dina, None) => {
            if a.generic {
                bail!("--generic applies to --model-class general");
            }
            check_dina_strict(&q, &h)?
        }
        (ModelClass::General, Some(_)) => bail!("--conditional applies to --model-class dina"),
        (ModelClass::General, None) if a.generic => check_general_generic(&q, &h)?,
        (ModelClass::General, None) => check_general_strict_with(
            &q,
            &h,
            SearchLimits {
                cap: a.cap.unwrap_or(q.j()),
                budget: a.budget,
            },
        )?,
    };
    let artifacts = emit_json(&with_schema(&report)?, a.out.as_deref())?;
    let code = match report.verdict {
        Verdict::Satisfied => 0,
        Verdict::Violated => 2,
        Verdict::Inconclusive => 3,
    };
    let config = json!({
        "q": a.q, "hierarchy": a.hierarchy, "model_class": a.model_class,
        "generic": a.generic, "conditional": a.conditional, "cap": a.cap, "budget": a.budget,
    });
    Ok(Outcome {
        code,
        artifacts,
        config,
        seed: None,
    })
}

fn cmd_fit(a: &FitArgs) -> Result<Outcome> {
    let q = read_q(&a.q)?;
    let data = read_responses(&a.data)?;
    let h = a.hierarchy.as_deref().map(read_hierarchy).transpose()?;
    let support = support_of(h.as_ref(), q.k())?;
    let cfg = a.em.config(a.seed);
    let fit = fit_em(a.model.into(), &q, &support, &data, &cfg)?;
    if !fit.converged {
        log::warn!("EM did not converge within {} iterations", cfg.max_iters);
    }
    let artifacts = emit_json(&with_schema(&fit)?, a.out.as_deref())?;
    let config = json!({
        "q": a.q, "data": a.data, "hierarchy": a.hierarchy, "model": a.model, "fit": cfg,
    });
    Ok(Outcome::ok(artifacts, config, Some(a.seed)))
}

fn warn_untestable(q: &QMatrix, h: &Hierarchy, kind: ModelKind) {
    let report = match kind {
        ModelKind::Dina => check_dina_strict(q, h),
        _ => check_general_generic(q, h),
    };
    match report {
        Ok(r) if r.verdict == Verdict::Satisfied => {}
        Ok(r) => log::warn!("testability check for the null hierarchy is {:?}", r.verdict),
        Err(e) => log::warn!("testability check failed: {e}"),
    }
}

fn cmd_test(a: &TestArgs) -> Result<Outcome> {
    let methods: Vec<Method> = a.method.iter().map(|m| m.trim().parse()).collect::<Result<_, _>>()?;
    if methods.is_empty() {
        bail!("no test method given");
    }
    let data = read_responses(&a.data)?;
    let cfg = a.em.config(a.seed);
    let opts = TestOptions {
        b: a.b,
        seed: a.seed,
        boot_starts: a.boot_starts,
        boot_loglik_tol: a.boot_tol,
        df: a.df,
        emit_lambdas: a.emit_lambdas,
    };
    let kind: ModelKind = a.model.into();
    let output = match a.preset {
        Some(Preset::Ecpe) => {
            if a.null_hierarchy.is_some() || a.alt_hierarchy.is_some() {
                bail!("--preset supplies its own hierarchies");
            }
            let q = match &a.q {
                Some(p) => read_q(p)?,
                None => ecpe_q(),
            };
            let reports = run_battery(&q, &ecpe_battery(), kind, &data, &methods, &cfg, &opts)?;
            json!({ "schema": SCHEMA, "reports": reports })
        }
        None => {
            let q = read_q(a.q.as_deref().context("--q is required without --preset")?)?;
            let h0 = read_hierarchy(
                a.null_hierarchy
                    .as_deref()
                    .context("--null-hierarchy is required without --preset")?,
            )?;
            let h1 = a.alt_hierarchy.as_deref().map(read_hierarchy).transpose()?;
            warn_untestable(&q, &h0, kind);
            let problem = TestProblem::new(q, kind, &h0, h1.as_ref())?;
            let obs = problem.observe(&data, &cfg)?;
            let reports = methods
                .iter()
                .map(|&m| problem.report(&obs, &data, m, &cfg, &opts))
                .collect::<Result<Vec<_>, _>>()?;
            if reports.len() == 1 {
                with_schema(&reports[0])?
            } else {
                json!({ "schema": SCHEMA, "reports": reports })
            }
        }
    };
    let artifacts = emit_json(&output, a.out.as_deref())?;
    let config = json!({
        "q": a.q, "data": a.data, "preset": a.preset.map(|_| "ecpe"), "model": a.model,
        "methods": methods, "null_hierarchy": a.null_hierarchy, "alt_hierarchy": a.alt_hierarchy,
        "fit": cfg, "options": opts,
    });
    Ok(Outcome::ok(artifacts, config, Some(a.seed)))
}

fn default_params(kind: ModelKind, q: &QMatrix, theta_plus: f64) -> Result<ItemParams> {
    if !(theta_plus > 0.5 && theta_plus < 1.0) {
        bail!("--theta-plus must lie in (0.5, 1), got {theta_plus}");
    }
    let lo = 1.0 - theta_plus;
    Ok(match kind {
        ModelKind::Dina => ItemParams::Dina(DinaParams::uniform(q.j(), lo, lo)?),
        ModelKind::Dino => ItemParams::Dino(DinaParams::uniform(q.j(), lo, lo)?),
        ModelKind::Gdina => ItemParams::Gdina(GdinaParams::new(
            q,
            (0..q.j()).map(|j| spaced_table(q.required(j).len(), lo, theta_plus)).collect(),
        )?),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let q = read_q(&a.q)?;
    let h = a.hierarchy.as_deref().map(read_hierarchy).transpose()?;
    let params = match &a.params {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<ItemParams>(&text)?
        }
        None => default_params(a.model.into(), &q, a.theta_plus)?,
    };
    let p = ProportionVector::uniform(support_of(h.as_ref(), q.k())?)?;
    let (data, profiles) = simulate_responses(&params, &p, &q, a.n, a.seed)?;
    let mut artifacts = emit(&to_binary_csv(&data.to_rows()), Some(&a.out))?;
    if let Some(path) = &a.profiles_out {
        let rows: Vec<Vec<u8>> = profiles.iter().map(|p| p.bits()).collect();
        artifacts.extend(emit(&to_binary_csv(&rows), Some(path))?);
    }
    let config = json!({
        "q": a.q, "model": params.kind(), "hierarchy": a.hierarchy, "params": params, "N": a.n,
    });
    Ok(Outcome::ok(artifacts, config, Some(a.seed)))
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing experiment config")?;
    if a.full_scale {
        cfg.reps = 500;
        cfg.b = 500;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let result = run_experiment(&cfg)?;
    let errors = result.reps.iter().filter(|r| r.error.is_some()).count();
    if errors > 0 {
        log::warn!("{errors} repetitions failed; see the per-rep error fields");
    }
    let mut artifacts = emit_json(&with_schema(&result)?, Some(&a.out_dir.join("result.json")))?;
    for m in &cfg.methods {
        let path = a.out_dir.join(format!("qq_{}.csv", m.short_name()));
        artifacts.extend(emit(&qq_csv(&qq_export(&result, *m)?), Some(&path))?);
    }
    for s in &result.methods {
        eprintln!(
            "{}: rejection rate {:.3} ± {:.3} ({} reps)",
            s.method,
            s.rejection_rate,
            2.0 * s.standard_error,
            s.reps
        );
    }
    let seed = cfg.seed;
    Ok(Outcome::ok(artifacts, serde_json::to_value(cfg)?, Some(seed)))
}

fn cmd_qq(a: &QqArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.result).with_context(|| format!("reading {}", a.result.display()))?;
    let result: ExperimentResult = serde_json::from_str(&text).context("parsing experiment result")?;
    let method: Method = a.method.parse()?;
    let artifacts = emit(&qq_csv(&qq_export(&result, method)?), a.out.as_deref())?;
    let config = json!({ "result": a.result, "method": method });
    Ok(Outcome::ok(artifacts, config, Some(result.config.seed)))
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Qq(a) => cmd_qq(a),
        Command::Replay(_) => unreachable!("replay is resolved before dispatch"),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Check(_) => "check",
        Command::Fit(_) => "fit",
        Command::Test(_) => "test",
        Command::Simulate(_) => "simulate",
        Command::Experiment(_) => "experiment",
        Command::Qq(_) => "qq",
        Command::Replay(_) => "replay",
    }
}

fn run(argv: Vec<String>) -> Result<u8> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print()?;
            return Ok(code);
        }
    };
    if let Command::Replay(r) = &cli.command {
        let m = RunManifest::read(&r.path)?;
        return run(m.argv);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut manifest = RunManifest::new(subcommand_name(&cli.command), argv);
    let outcome = dispatch(&cli)?;
    manifest.config = outcome.config;
    manifest.seed = outcome.seed;
    manifest.artifacts = outcome.artifacts;
    let path = cli.manifest.clone().or_else(|| {
        manifest.artifacts.first().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    });
    if let Some(p) = path {
        manifest.write(&p)?;
    }
    Ok(outcome.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args().collect()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
