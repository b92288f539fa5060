use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use softrank::fusion::{fuse, init_params_with};
use softrank::harness::report::default_report_path;
use softrank::harness::{
    emit_report, eval_metrics_file, flop_table, generate_task, grad_check_suite, render_report, run_ablation,
    AblationConfig, Format, SuiteOptions, SyntheticTaskConfig, Tabular,
};
use softrank::rank::{StrategyConfig, StrategyKind};
use softrank::Error;

const SEED_ENV: &str = "SOFTRANK_SEED";

#[derive(Parser)]
#[command(
    name = "softrank",
    version,
    about = "Text-guided soft-rank fusion: gradient checks, ablation, FLOPs and NLG metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of every backward pass.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Write the full per-check report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Train every strategy on the synthetic task and check their ordering.
    Ablate {
        #[arg(long, default_value_t = 6)]
        views: usize,
        #[arg(long, default_value_t = 48)]
        dim_v: usize,
        #[arg(long, default_value_t = 48)]
        dim_t: usize,
        #[arg(long, default_value_t = 32)]
        dim_e: usize,
        #[arg(long, default_value_t = 10)]
        concepts: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Runs averaged per strategy, with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// `all` or a comma-separated list such as `softsort,uniform`.
        #[arg(long, default_value = "all")]
        strategies: String,
        /// Report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: Format,
        /// Include wall-clock times (the report is then no longer reproducible byte for byte).
        #[arg(long)]
        timings: bool,
    },
    /// Operation counts of each strategy's scores-to-weights path.
    Flops {
        #[arg(long, default_value_t = 6)]
        views: usize,
        #[arg(long, default_value_t = 50)]
        sinkhorn_iters: usize,
        #[arg(long, default_value_t = 3)]
        topk: usize,
    },
    /// Score a JSON-lines file of hypothesis/reference pairs.
    EvalMetrics {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<input stem>.report.json` beside the input.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// One fusion forward pass on a synthetic sample with freshly initialised weights.
    Demo {
        #[arg(long, default_value = "softsort")]
        strategy: StrategyKind,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 6)]
        views: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit code for a library error: 2 for bad input or IO, 1 otherwise.
fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Parameter(_) | Error::Input { .. } | Error::Io(_) | Error::Shape(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn seed_override(seed: u64) -> Result<u64, Error> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Parameter(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

fn parse_strategies(s: &str) -> Result<Vec<StrategyKind>, Error> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(StrategyKind::ALL.to_vec());
    }
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse()).collect()
}

fn write_or_print<T: Tabular>(report: &T, format: Format, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => emit_report(report, format, path),
        None => {
            print!("{}", render_report(report, format)?);
            Ok(())
        }
    }
}

fn grad_check(seeds: usize, tol: f64, out: Option<PathBuf>, format: Format) -> Result<bool, Error> {
    let report = grad_check_suite(&SuiteOptions { seeds, tolerance: tol, ..Default::default() })?;
    for (name, err) in &report.summary.per_param_errors {
        let mark = if *err <= tol { "ok  " } else { "FAIL" };
        println!("{mark} {name:<48} {err:.3e}");
    }
    let failed = report.entries.iter().filter(|e| !e.passed).count();
    println!(
        "{} checks, {failed} failed, worst relative error {:.3e} (tol {tol:e}, h {:e})",
        report.entries.len(),
        report.summary.max_rel_error,
        report.step
    );
    if let Some(path) = out {
        emit_report(&report, format, &path)?;
    }
    Ok(report.passed)
}

#[allow(clippy::too_many_arguments)]
fn ablate(
    task: SyntheticTaskConfig,
    steps: usize,
    repeats: usize,
    tau: f64,
    strategies: &str,
    out: Option<PathBuf>,
    format: Format,
    timings: bool,
) -> Result<bool, Error> {
    let mut cfg =
        AblationConfig { task, seeds: repeats, tau, strategies: parse_strategies(strategies)?, ..Default::default() };
    cfg.train.steps = steps;
    cfg.train.seed = cfg.task.seed;
    let mut report = run_ablation(&cfg)?;
    if !timings {
        report = report.without_timings();
    }
    for r in &report.results {
        match (r.accuracy, &r.error) {
            (Some(a), _) => eprintln!(
                "{:<15} accuracy {a:.4}  hit rate {:.4}  flops {}",
                r.strategy.name(),
                r.top_view_hit_rate.unwrap_or(f64::NAN),
                r.flops.total
            ),
            (None, e) => eprintln!("{:<15} failed: {}", r.strategy.name(), e.as_deref().unwrap_or("unknown")),
        }
    }
    for c in &report.checks {
        eprintln!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write_or_print(&report, format, out.as_ref())?;
    Ok(report.passed)
}

fn flops(views: usize, sinkhorn_iters: usize, topk: usize) -> Result<bool, Error> {
    let cfg = AblationConfig { sinkhorn_iters, top_k: topk, ..Default::default() };
    for k in StrategyKind::ALL {
        cfg.strategy(k).validate(views)?;
    }
    println!("n_views = {views}; {}", softrank::harness::ablation::FLOP_CONVENTION);
    println!("{:<15} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "strategy", "add", "mul", "exp", "cmp", "div", "total");
    for (k, f) in flop_table(&cfg, views) {
        println!(
            "{:<15} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            k.name(),
            f.additions,
            f.multiplications,
            f.exponentials,
            f.comparisons,
            f.divisions,
            f.total
        );
    }
    Ok(true)
}

fn eval_metrics(input: PathBuf, out: Option<PathBuf>, format: Format) -> Result<bool, Error> {
    let report = eval_metrics_file(&input)?;
    let path = out.unwrap_or_else(|| default_report_path(&input, format));
    emit_report(&report, format, &path)?;
    let c = &report.corpus;
    println!("pairs      {}", c.pairs);
    for (n, b) in c.bleu.iter().enumerate() {
        println!("BLEU-{}     {b:.4}", n + 1);
    }
    // x100 is a display convention only; the report keeps [0, 1]
    println!("METEOR     {:.2}", 100.0 * c.meteor);
    println!("ROUGE-L    {:.4}", c.rouge_l);
    println!("CIDEr      {:.4}{}", c.cider, if c.degenerate { " (single pair, degenerate)" } else { "" });
    println!("report written to {}", path.display());
    Ok(true)
}

fn demo(strategy: StrategyKind, tau: f64, views: usize, seed: u64) -> Result<bool, Error> {
    let task_cfg =
        SyntheticTaskConfig { n_views: views, samples_train: 1, samples_eval: 1, seed, ..Default::default() };
    let task = generate_task(&task_cfg)?;
    let sample = &task.eval[0];
    let scfg = StrategyConfig::new(strategy).with_tau(tau);
    scfg.validate(views)?;
    let params = init_params_with(task_cfg.d_v, task_cfg.d_t, task_cfg.d_e, seed, scfg)?;
    let out = fuse(&sample.views, &sample.query, &params)?;
    println!("strategy {strategy}, tau {tau}, seed {seed}, relevant view {}", sample.relevant_view);
    println!("{:>4} {:>10} {:>10}", "view", "score", "weight");
    for (i, (s, w)) in out.scores.iter().zip(out.weights.iter()).enumerate() {
        println!("{i:>4} {s:>10.6} {w:>10.6}");
    }
    let norm = out.fused.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("fused: d_e = {}, norm {norm:.6}", out.fused.len());
    Ok(true)
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::GradCheck { seeds, tol, out, format } => grad_check(seeds, tol, out, format),
        Command::Ablate {
            views,
            dim_v,
            dim_t,
            dim_e,
            concepts,
            steps,
            seed,
            repeats,
            tau,
            strategies,
            out,
            format,
            timings,
        } => {
            let task = SyntheticTaskConfig {
                n_views: views,
                d_v: dim_v,
                d_t: dim_t,
                d_e: dim_e,
                n_concepts: concepts,
                seed: seed_override(seed)?,
                ..Default::default()
            };
            ablate(task, steps, repeats, tau, &strategies, out, format, timings)
        }
        Command::Flops { views, sinkhorn_iters, topk } => flops(views, sinkhorn_iters, topk),
        Command::EvalMetrics { input, out, format } => eval_metrics(input, out, format),
        Command::Demo { strategy, tau, views, seed } => demo(strategy, tau, views, seed_override(seed)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => fail(&e),
    }
}
