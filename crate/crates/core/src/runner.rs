//! Run configuration and the solve / benchmark pipelines behind the CLI.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detpomdp::SolveStatus;
use crate::envs::{self, BenchmarkSpec, Instance, InstanceDescriptor};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::fsc::JointPolicy;
use crate::idpp::{self, IdppParams, InitSummary, IterationRecord, RunStatus};

/// Where the instance comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    /// Descriptor file written by `gen`.
    Path(PathBuf),
    /// Generated from the run seed.
    Generate(BenchmarkSpec),
}

impl Default for InstanceSource {
    fn default() -> Self {
        InstanceSource::Generate(BenchmarkSpec::Mactp { n: 3, agents: 2, edges: 5 })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Initialization followed by best-response rounds.
    #[default]
    Idpp,
    /// Initialization controllers only.
    InitOnly,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Idpp => "idpp",
            Algo::InitOnly => "init-only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub exact: bool,
    pub episodes: usize,
    pub horizon: usize,
    /// Monte Carlo seed; the run seed when unset.
    pub seed: Option<u64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { exact: true, episodes: eval::DEFAULT_EPISODES, horizon: eval::DEFAULT_HORIZON, seed: None }
    }
}

/// Fully resolved run configuration; echoed as `config.json` into every
/// output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSource,
    /// Master seed: instance generation and the default evaluation seed.
    pub seed: u64,
    pub discount: f64,
    pub algo: Algo,
    pub idpp: IdppParams,
    pub eval: EvalSettings,
    pub output_dir: Option<PathBuf>,
    /// Record wall-clock seconds in the history CSV and report.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            instance: InstanceSource::default(),
            seed: 0,
            discount: envs::DEFAULT_DISCOUNT,
            algo: Algo::Idpp,
            idpp: IdppParams::default(),
            eval: EvalSettings::default(),
            output_dir: None,
            timing: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invalid(format!("discount {} must lie in (0, 1)", self.discount)));
        }
        if self.eval.episodes == 0 || self.eval.horizon == 0 {
            return Err(Error::invalid("evaluation episodes and horizon must be positive"));
        }
        self.idpp.validate()
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or(self.seed)
    }

    pub fn descriptor(&self) -> Result<InstanceDescriptor> {
        match &self.instance {
            InstanceSource::Path(p) => read_descriptor(p),
            InstanceSource::Generate(spec) => spec.generate(self.seed, self.discount),
        }
    }
}

pub fn read_descriptor(path: &Path) -> Result<InstanceDescriptor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    InstanceDescriptor::from_json(&text)
}

/// Overall outcome of a solve run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    Converged,
    BudgetExhausted,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub instance: String,
    pub algo: Algo,
    pub certificate: Certificate,
    pub status: Option<RunStatus>,
    pub rounds: usize,
    pub init_value: f64,
    pub final_value: f64,
    pub init: Vec<InitSummary>,
    pub evaluation: EvalReport,
    pub seconds: Option<f64>,
}

/// Everything a solve run writes.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub policy: JointPolicy,
    pub history: Vec<IterationRecord>,
    pub report: SolveReport,
    pub config: RunConfig,
}

impl RunArtifacts {
    pub fn policy_json(&self) -> String {
        self.policy.to_json()
    }

    pub fn history_csv(&self) -> String {
        idpp::history_csv(&self.history, self.config.timing)
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serialization cannot fail")
    }

    /// Writes `policy.json`, `history.csv`, `report.json` and `config.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("policy.json", self.policy_json()),
            ("history.csv", self.history_csv()),
            ("report.json", self.report_json()),
            ("config.json", self.config.to_json()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Solves the configured instance with the configured algorithm.
pub fn solve(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let desc = config.descriptor()?;
    let model = desc.build()?;
    solve_instance(config, &desc.label(), &model)
}

pub fn solve_instance(config: &RunConfig, label: &str, model: &Instance) -> Result<RunArtifacts> {
    let started = Instant::now();
    let (policy, history, status, rounds, init_value, final_value, init) = match config.algo {
        Algo::Idpp => {
            let out = idpp::run(model, &config.idpp)?;
            (out.policy, out.history, Some(out.status), out.rounds, out.init_value, out.value, out.init)
        }
        Algo::InitOnly => {
            let out = idpp::heuristic_init(model, &config.idpp)?;
            let v = eval::exact_value(model, &out.policy)?;
            (out.policy, Vec::new(), None, 0, v, v, out.summaries)
        }
    };
    let converged = match status {
        Some(s) => s == RunStatus::Converged,
        None => init.iter().all(|s| s.status == SolveStatus::Converged),
    };
    let evaluation = EvalReport::run(
        model,
        &policy,
        config.eval.exact,
        config.eval.episodes,
        config.eval.horizon,
        config.eval_seed(),
    )?;
    let seconds = started.elapsed().as_secs_f64();
    let report = SolveReport {
        instance: label.to_string(),
        algo: config.algo,
        certificate: if converged { Certificate::Converged } else { Certificate::BudgetExhausted },
        status,
        rounds,
        init_value,
        final_value,
        init,
        evaluation,
        seconds: config.timing.then_some(seconds),
    };
    Ok(RunArtifacts { policy, history, report, config: config.clone() })
}

/// Benchmark matrix: every instance, algorithm and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// With a generated source, each seed yields its own random instance.
    pub instances: Vec<InstanceSource>,
    pub algos: Vec<Algo>,
    pub seeds: Vec<u64>,
    /// Settings shared by every cell; its `instance`, `seed` and `algo` are overridden.
    pub base: RunConfig,
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            instances: vec![InstanceSource::default()],
            algos: vec![Algo::Idpp, Algo::InitOnly],
            seeds: (0..10).collect(),
            base: RunConfig {
                eval: EvalSettings { episodes: 10_000, ..EvalSettings::default() },
                ..RunConfig::default()
            },
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub algo: Algo,
    pub seed: u64,
    pub certificate: Option<Certificate>,
    pub value: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

fn bench_cell(base: &RunConfig, source: &InstanceSource, algo: Algo, seed: u64) -> BenchRow {
    let cfg = RunConfig { instance: source.clone(), seed, algo, ..base.clone() };
    let started = Instant::now();
    let label = match source {
        InstanceSource::Path(p) => p.display().to_string(),
        InstanceSource::Generate(s) => s.label(),
    };
    let result = cfg.descriptor().and_then(|d| d.build()).and_then(|m| solve_instance(&cfg, &label, &m));
    let seconds = started.elapsed().as_secs_f64();
    match result {
        Ok(a) => BenchRow {
            instance: label,
            algo,
            seed,
            certificate: Some(a.report.certificate),
            value: a.report.evaluation.exact_value.unwrap_or(a.report.final_value),
            mc_mean: a.report.evaluation.mc_mean,
            mc_std_error: a.report.evaluation.mc_std_error,
            seconds,
            error: None,
        },
        Err(e) => BenchRow {
            instance: label,
            algo,
            seed,
            certificate: None,
            value: f64::NAN,
            mc_mean: f64::NAN,
            mc_std_error: f64::NAN,
            seconds,
            error: Some(e.to_string()),
        },
    }
}

/// Runs the matrix. Rows come back in matrix order regardless of `workers`.
pub fn bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    config.base.validate()?;
    if config.workers == 0 {
        return Err(Error::invalid("workers must be at least 1"));
    }
    let cells: Vec<(&InstanceSource, Algo, u64)> = config
        .instances
        .iter()
        .flat_map(|src| config.algos.iter().flat_map(move |&a| config.seeds.iter().map(move |&s| (src, a, s))))
        .collect();
    if config.workers == 1 {
        return Ok(cells.into_iter().map(|(src, a, s)| bench_cell(&config.base, src, a, s)).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| cells.into_par_iter().map(|(src, a, s)| bench_cell(&config.base, src, a, s)).collect()))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Per-run rows followed by one aggregate row per (instance, algorithm):
/// mean and sample standard deviation over the successful runs.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("kind,instance,algo,seed,certificate,value,value_std,mc_mean,mc_std_error,seconds,runs,error\n");
    let cert = |c: Option<Certificate>| match c {
        Some(Certificate::Converged) => "converged",
        Some(Certificate::BudgetExhausted) => "budget_exhausted",
        None => "failed",
    };
    for r in rows {
        out.push_str(&format!(
            "run,{},{},{},{},{},,{},{},{:.3},1,{}\n",
            r.instance,
            r.algo.name(),
            r.seed,
            cert(r.certificate),
            r.value,
            r.mc_mean,
            r.mc_std_error,
            r.seconds,
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
    }
    let mut groups: Vec<(&str, Algo)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.instance.as_str(), r.algo)) {
            groups.push((r.instance.as_str(), r.algo));
        }
    }
    for (inst, algo) in groups {
        let ok: Vec<&BenchRow> =
            rows.iter().filter(|r| r.instance == inst && r.algo == algo && r.error.is_none()).collect();
        let (v, vs) = mean_std(&ok.iter().map(|r| r.value).collect::<Vec<_>>());
        let (mc, _) = mean_std(&ok.iter().map(|r| r.mc_mean).collect::<Vec<_>>());
        let (secs, _) = mean_std(&ok.iter().map(|r| r.seconds).collect::<Vec<_>>());
        out.push_str(&format!("aggregate,{inst},{},,,{v},{vs},{mc},,{secs:.3},{},\n", algo.name(), ok.len()));
    }
    out
}
