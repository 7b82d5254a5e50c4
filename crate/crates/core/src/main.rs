use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use superiorization::engines::{IterationTrace, Termination, TraceLevel};
use superiorization::experiments::balls::{run_exp1_balls, BallsConfig};
use superiorization::experiments::guarantee::{demo_guarantee_problem, GuaranteeConfig, MIN_NORM_POINT};
use superiorization::experiments::imrt::{
    gen_imrt_instance, run_exp3, ImrtAlgorithm, ImrtConfig, ImrtInstance, ImrtRunConfig,
};
use superiorization::experiments::montecarlo::{run_exp1_montecarlo, MonteCarloConfig};
use superiorization::experiments::output::{OutputDir, OutputFormat, RunSummary};
use superiorization::experiments::problem_file::ProblemFile;
use superiorization::experiments::smp_demo::{run_exp2, SmpDemoConfig, SOLUTION};
use superiorization::par::Execution;
use superiorization::{Error, Result};

/// Superiorized projection methods: seeded experiments and a generic runner.
#[derive(Debug, Parser)]
#[command(name = "superiorize", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed; overrides any seed in the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, global = true, value_enum, default_value_t = Trace::Summary)]
    trace: Trace,
    /// Full-size Monte Carlo and IMRT instances.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Trace {
    Full,
    Summary,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two half-planes: basic vs superiorized from a given start.
    DemoGuarantee,
    /// Minimum-norm point in two discs: AP, two kernels, restarts.
    Exp1Balls,
    /// Monte Carlo comparison on random half-plane pairs.
    Exp1Mc {
        /// Run on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Planar split minimization problem.
    Exp2,
    /// Generate an IMRT instance (instance.json, dose_matrix.bin).
    Exp3Gen,
    /// Run basic, superiorized and restarted algorithms on an IMRT instance.
    Exp3Run {
        /// Directory written by exp3-gen; generated from the configuration
        /// when absent.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Run a problem file.
    Run { problem: PathBuf },
}

/// Configuration file of `exp3-run`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Exp3Config {
    instance: Option<ImrtConfig>,
    run: ImrtRunConfig,
}

struct Ctx {
    out: OutputDir,
    trace: TraceLevel,
    seed: Option<u64>,
    config: Option<PathBuf>,
    paper_scale: bool,
    timing: Vec<(String, f64)>,
}

impl Ctx {
    fn config<T: DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.config {
            None => Ok(T::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    fn full(&self) -> bool {
        self.trace == TraceLevel::Full
    }

    fn traces(&mut self, runs: &[(&str, &IterationTrace)]) -> Result<Vec<RunSummary>> {
        let full = self.full();
        runs.iter()
            .map(|(name, trace)| {
                self.out.trace(name, trace)?;
                self.timing.push((name.to_string(), trace.wall_time_s));
                Ok(RunSummary::new(name, trace, full))
            })
            .collect()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn demo_guarantee(ctx: &mut Ctx) -> Result<()> {
    let cfg: GuaranteeConfig = ctx.config()?;
    let t = demo_guarantee_problem(&cfg, ctx.trace)?;
    let runs = ctx.traces(&[("basic", &t.basic), ("superiorized", &t.superiorized)])?;
    ctx.out.report(&json!({
        "experiment": "demo-guarantee",
        "config": cfg,
        "runs": runs,
        "distance_to_min_norm_point": {
            "basic": distance(&t.basic.final_iterate, &MIN_NORM_POINT),
            "superiorized": distance(&t.superiorized.final_iterate, &MIN_NORM_POINT),
        },
    }))
}

fn exp1_balls(ctx: &mut Ctx) -> Result<()> {
    let cfg: BallsConfig = ctx.config()?;
    let t = run_exp1_balls(&cfg)?;
    let named = t.named();
    let runs = ctx.traces(&named)?;
    let extra: Vec<_> = named
        .iter()
        .map(|(name, trace)| {
            json!({
                "algorithm": name,
                "final_norm": distance(&trace.final_iterate, &[0.0, 0.0]),
                "perturbed_proximity": t.perturbed_proximity(trace),
            })
        })
        .collect();
    ctx.out.report(&json!({
        "experiment": "exp1-balls",
        "config": cfg,
        "runs": runs,
        "norms": extra,
    }))
}

fn exp1_mc(ctx: &mut Ctx, sequential: bool) -> Result<()> {
    let mut cfg: MonteCarloConfig = ctx.config()?;
    if ctx.paper_scale {
        cfg.runs = 1_000_000;
    }
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    let execution = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let clock = Instant::now();
    let report = run_exp1_montecarlo(&cfg, execution)?;
    ctx.timing.push(("monte_carlo".into(), clock.elapsed().as_secs_f64()));
    ctx.out.table1(&report)?;
    ctx.out.report(&json!({
        "experiment": "exp1-mc",
        "config": cfg,
        "table1": report,
    }))
}

fn exp2(ctx: &mut Ctx) -> Result<()> {
    let cfg: SmpDemoConfig = ctx.config()?;
    let t = run_exp2(&cfg, ctx.trace)?;
    let runs = ctx.traces(&[("basic", &t.basic), ("superiorized", &t.superiorized)])?;
    let x_error = |trace: &IterationTrace| distance(&trace.final_iterate[..2], &SOLUTION);
    ctx.out.report(&json!({
        "experiment": "exp2",
        "config": cfg,
        "runs": runs,
        "distance_to_solution": {
            "basic": x_error(&t.basic),
            "superiorized": x_error(&t.superiorized),
        },
    }))
}

fn imrt_config(ctx: &Ctx, base: Option<ImrtConfig>) -> ImrtConfig {
    let mut cfg = base.unwrap_or_else(|| {
        if ctx.paper_scale {
            ImrtConfig::paper_scale()
        } else {
            ImrtConfig::desk()
        }
    });
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg
}

fn instance_summary(instance: &ImrtInstance) -> serde_json::Value {
    json!({
        "side": instance.side,
        "beamlets": instance.beamlets,
        "seed": instance.seed,
        "rejected_draws": instance.rejected_draws,
        "tumor_pixels": instance.tumors.iter().map(Vec::len).collect::<Vec<_>>(),
        "organ_pixels": instance.organ.len(),
        "bounds": instance.bounds,
        "eps": instance.eps,
    })
}

fn exp3_gen(ctx: &mut Ctx) -> Result<()> {
    let cfg = if ctx.config.is_some() {
        let base: ImrtConfig = ctx.config()?;
        imrt_config(ctx, Some(base))
    } else {
        imrt_config(ctx, None)
    };
    let clock = Instant::now();
    let instance = gen_imrt_instance(&cfg)?;
    ctx.timing.push(("generate".into(), clock.elapsed().as_secs_f64()));
    instance.save(&mut ctx.out)?;
    ctx.out.report(&json!({
        "experiment": "exp3-gen",
        "config": cfg,
        "instance": instance_summary(&instance),
    }))
}

fn exp3_run(ctx: &mut Ctx, dir: Option<&Path>) -> Result<()> {
    let file: Exp3Config = ctx.config()?;
    let instance = match dir {
        Some(dir) => ImrtInstance::load(dir)?,
        None => gen_imrt_instance(&imrt_config(ctx, file.instance.clone()))?,
    };
    let problem = instance.split_problem()?;
    let run = run_exp3(&instance, &problem, &file.run, &ImrtAlgorithm::ALL, ctx.trace)?;
    let peak = run
        .outcomes
        .iter()
        .flat_map(|o| o.final_dose(instance.beamlets).iter().copied())
        .fold(0.0f64, f64::max);
    let mut summaries = Vec::new();
    for o in &run.outcomes {
        let name = o.algorithm.name();
        summaries.push(json!({
            "summary": ctx.traces(&[(name, &o.trace)])?.remove(0),
            "tv": o.tv,
            "converged": o.converged(),
        }));
        let grid = instance.heatmap(o.final_dose(instance.beamlets))?;
        ctx.out.heatmap(name, &grid)?;
        ctx.out.pgm(name, &grid, peak)?;
    }
    ctx.out.report(&json!({
        "experiment": "exp3-run",
        "run_config": file.run,
        "instance": instance_summary(&instance),
        "algorithms": summaries,
    }))?;
    match run.outcomes.iter().find(|o| !o.converged()) {
        Some(o) => Err(Error::NonConvergence {
            iterations: o.trace.iterations,
            proximity: o.trace.final_proximity(),
        }),
        None => Ok(()),
    }
}

fn run_problem(ctx: &mut Ctx, path: &Path) -> Result<()> {
    let file = ProblemFile::from_path(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let runs = file.run(base, ctx.trace)?;
    let named: Vec<(&str, &IterationTrace)> = runs.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let summaries = ctx.traces(&named)?;
    ctx.out.report(&json!({
        "experiment": "run",
        "problem": file,
        "runs": summaries,
    }))?;
    let thresholded = file.stop.proximity_threshold.is_some();
    match runs
        .iter()
        .find(|(_, t)| thresholded && t.termination != Termination::ProximityReached)
    {
        Some((_, t)) => Err(Error::NonConvergence {
            iterations: t.iterations,
            proximity: t.final_proximity(),
        }),
        None => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let mut ctx = Ctx {
        out: OutputDir::create(&cli.out, format)?,
        trace: match cli.trace {
            Trace::Full => TraceLevel::Full,
            Trace::Summary => TraceLevel::Summary,
        },
        seed: cli.seed,
        config: cli.config,
        paper_scale: cli.paper_scale,
        timing: Vec::new(),
    };
    let result = match &cli.command {
        Command::DemoGuarantee => demo_guarantee(&mut ctx),
        Command::Exp1Balls => exp1_balls(&mut ctx),
        Command::Exp1Mc { sequential } => exp1_mc(&mut ctx, *sequential),
        Command::Exp2 => exp2(&mut ctx),
        Command::Exp3Gen => exp3_gen(&mut ctx),
        Command::Exp3Run { instance } => exp3_run(&mut ctx, instance.as_deref()),
        Command::Run { problem } => run_problem(&mut ctx, problem),
    };
    if !ctx.timing.is_empty() {
        ctx.out.timing(&ctx.timing)?;
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
