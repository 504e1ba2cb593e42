//! `detdec` command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use detdec::envs::{self, BenchmarkSpec, InstanceDescriptor};
use detdec::eval::EvalReport;
use detdec::fsc::JointPolicy;
use detdec::runner::{self, Algo, BenchConfig, Certificate, InstanceSource, RunConfig};
use detdec::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DETDEC_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "detdec", version, about = "Plan, solve and evaluate deterministic Dec-POMDP benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark instance descriptor.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Solve an instance and write policy, history, report and config.
    Solve(SolveArgs),
    /// Evaluate a joint policy on an instance.
    Eval(EvalArgs),
    /// Run a benchmark matrix and write one CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenCommon {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = envs::DEFAULT_DISCOUNT)]
    pub discount: f64,
    /// Output file; defaults to `<root>/instances/<name>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenFamily {
    Mactp {
        /// Grid side length.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        agents: usize,
        /// Number of stochastic edges.
        #[arg(long)]
        edges: usize,
        #[command(flatten)]
        common: GenCommon,
    },
    Collecting {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        w: usize,
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        boxes: usize,
        #[command(flatten)]
        common: GenCommon,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Idpp,
    InitOnly,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Idpp => Algo::Idpp,
            AlgoArg::InitOnly => Algo::InitOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Run configuration JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Instance descriptor JSON.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Target gap of each single-agent solve.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub node_budget: Option<usize>,
    /// Wall-clock budget of the whole run in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Record wall-clock seconds in the history CSV.
    #[arg(long)]
    pub timing: bool,
    /// Output directory; defaults to `<root>/runs/<instance>-<algo>-s<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Also compute the exact value.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = detdec::eval::DEFAULT_EPISODES)]
    pub episodes: usize,
    #[arg(long, default_value_t = detdec::eval::DEFAULT_HORIZON)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; printed to stdout only when unset.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark matrix JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Instance descriptors; repeat for several.
    #[arg(long)]
    pub instance: Vec<PathBuf>,
    /// Runs per cell, seeded 0..N.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub algos: Vec<AlgoArg>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV file; defaults to `<root>/bench.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_label(label: &str) -> String {
    label.replace(['<', '>'], "").replace(',', "-")
}

fn cmd_gen(family: GenFamily) -> Result<i32> {
    let (spec, common) = match family {
        GenFamily::Mactp { n, agents, edges, common } => (BenchmarkSpec::Mactp { n, agents, edges }, common),
        GenFamily::Collecting { h, w, agents, boxes, common } => {
            (BenchmarkSpec::Collecting { h, w, agents, boxes }, common)
        }
    };
    let desc = spec.generate(common.seed, common.discount)?;
    let out = common.out.unwrap_or_else(|| {
        out_root().join("instances").join(format!("{}-s{}.json", file_label(&spec.label()), common.seed))
    });
    write(&out, &desc.to_json())?;
    let model = desc.build()?;
    let sizing = envs::describe(&model, 0);
    println!(
        "{} seed {}: {} environment states, initial support {} -> {}",
        spec.label(),
        common.seed,
        sizing.formula_states,
        sizing.initial_support,
        out.display()
    );
    Ok(EXIT_OK)
}

fn resolve_solve_config(args: &SolveArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_json(&read(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.instance {
        cfg.instance = InstanceSource::Path(p.clone());
    }
    if let Some(a) = args.algo {
        cfg.algo = a.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.max_rounds {
        cfg.idpp.max_rounds = r;
    }
    if let Some(e) = args.epsilon {
        cfg.idpp.solver.epsilon = e;
    }
    if let Some(b) = args.node_budget {
        cfg.idpp.solver.node_budget = b;
    }
    if let Some(t) = args.time_budget {
        cfg.idpp.time_budget_secs = Some(t);
    }
    if let Some(e) = args.episodes {
        cfg.eval.episodes = e;
    }
    if let Some(h) = args.horizon {
        cfg.eval.horizon = h;
    }
    cfg.timing |= args.timing;
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_solve(args: SolveArgs) -> Result<i32> {
    let mut cfg = resolve_solve_config(&args)?;
    let desc = cfg.descriptor()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| {
        out_root().join("runs").join(format!("{}-{}-s{}", file_label(&desc.label()), cfg.algo.name(), cfg.seed))
    });
    cfg.output_dir = Some(dir.clone());
    let model = desc.build()?;
    let artifacts = runner::solve_instance(&cfg, &desc.label(), &model)?;
    artifacts.write(&dir)?;
    let r = &artifacts.report;
    println!(
        "{} {}: init {:.4} final {:.4} ({:?}, {} rounds); monte carlo {:.4} +- {:.4} -> {}",
        r.instance,
        r.algo.name(),
        r.init_value,
        r.final_value,
        r.certificate,
        r.rounds,
        r.evaluation.mc_mean,
        r.evaluation.mc_std_error,
        dir.display()
    );
    Ok(match r.certificate {
        Certificate::Converged => EXIT_OK,
        Certificate::BudgetExhausted => EXIT_BUDGET,
    })
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let desc = InstanceDescriptor::from_json(&read(&args.instance)?)?;
    let model = desc.build()?;
    let policy = JointPolicy::from_json(&read(&args.policy)?)?;
    let report = EvalReport::run(&model, &policy, args.exact, args.episodes, args.horizon, args.seed)?;
    let json = report.to_json();
    if let Some(out) = &args.out {
        write(out, &json)?;
    } else {
        println!("{json}");
    }
    let exact = report.exact_value.map(|v| format!("exact {v:.6}, ")).unwrap_or_default();
    eprintln!(
        "{}: {exact}monte carlo {:.6} +- {:.6} over {} episodes of {} steps",
        desc.label(),
        report.mc_mean,
        report.mc_std_error,
        report.episodes,
        report.horizon
    );
    Ok(EXIT_OK)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(p) => {
            serde_json::from_str::<BenchConfig>(&read(p)?).map_err(|e| Error::parse("bench config", e.to_string()))?
        }
        None => BenchConfig::default(),
    };
    if !args.instance.is_empty() {
        cfg.instances = args.instance.iter().cloned().map(InstanceSource::Path).collect();
    }
    if let Some(n) = args.seeds {
        cfg.seeds = (0..n).collect();
    }
    if !args.algos.is_empty() {
        cfg.algos = args.algos.iter().map(|&a| a.into()).collect();
    }
    if let Some(e) = args.episodes {
        cfg.base.eval.episodes = e;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let rows = runner::bench(&cfg)?;
    let out = args.out.unwrap_or_else(|| out_root().join("bench.csv"));
    write(&out, &runner::bench_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} runs ({failed} failed) -> {}", rows.len(), out.display());
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Gen { family } => cmd_gen(family),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
