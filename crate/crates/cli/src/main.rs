//! `dspopt`: generate synthetic markets, solve the two-phase plan, and run
//! paired simulations against the greedy baseline.

mod output;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{error::ErrorKind, CommandFactory, Parser, Subcommand, ValueEnum};
use dspopt::{
    generate, paired_experiment, sweep_instances, two_phase, BudgetMode, DualConfig, GeneratorConfig, Instance,
    PlanSolution, SWEEP_BUDGETS,
};
use log::info;

use output::{ExperimentManifest, SimulationManifest, SolverManifest, Writer};

#[derive(Debug, Parser)]
#[command(name = "dspopt", version, about = "DSP profit planning and RTB simulation")]
struct Cli {
    /// Seed for instance generation (and the default simulation base seed).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output path (file, or directory for `simulate`).
    #[arg(short = 'o', long = "out", global = true)]
    out: Option<PathBuf>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads for simulation and the dual oracle (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    ExampleA,
    ExampleB,
    Sweep,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BudgetKind {
    Constant,
    Quality,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic instance and its quality-score sidecar.
    Generate {
        #[arg(long, value_enum, default_value = "example-a")]
        preset: Preset,
        /// Budget constant (overrides the preset's).
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_enum)]
        budget_mode: Option<BudgetKind>,
        #[arg(long)]
        types: Option<usize>,
        #[arg(long)]
        campaigns: Option<usize>,
        #[arg(long)]
        market_size: Option<u32>,
        #[arg(long)]
        supply: Option<f64>,
        #[arg(long)]
        cpc: Option<f64>,
    },
    /// Run the two-phase scheme and write the plan.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = dspopt::dual::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// Step-size constant (default 1 / ||g(0)||).
        #[arg(long)]
        step_scale: Option<f64>,
        /// Also write the dual trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Paired simulation of a plan against the greedy baseline.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 500)]
        runs: usize,
        /// Defaults to --seed.
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Budget sweep: generate, solve and simulate each budget level.
    Sweep {
        #[arg(long, default_value_t = 500)]
        runs: usize,
        #[arg(long, default_value_t = dspopt::dual::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Comma-separated budget levels.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<f64>>,
    },
    /// Check an instance file.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
}

fn require_out(out: &Option<PathBuf>) -> PathBuf {
    match out {
        Some(p) => p.clone(),
        None => {
            Cli::command().error(ErrorKind::MissingRequiredArgument, "this command requires -o/--out <PATH>").exit()
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    if !path.exists() {
        bail!("file not found: {}", path.display());
    }
    let instance = Instance::load(path).with_context(|| format!("reading instance {}", path.display()))?;
    if !instance.is_valid() {
        bail!("instance {} failed validation: {}", path.display(), instance.validate());
    }
    Ok(instance)
}

fn cmd_generate(cli: &Cli, cmd: &Command) -> Result<()> {
    let Command::Generate { preset, budget, budget_mode, types, campaigns, market_size, supply, cpc } = cmd else {
        unreachable!()
    };
    let out = require_out(&cli.out);
    let mut config = match preset {
        Preset::ExampleA => GeneratorConfig::example_a(cli.seed),
        Preset::ExampleB => GeneratorConfig::example_b(cli.seed),
        Preset::Sweep => GeneratorConfig::sweep(cli.seed, budget.unwrap_or(50.0)),
    };
    let constant = match config.budget {
        BudgetMode::Constant(c) | BudgetMode::QualityScaled(c) => budget.unwrap_or(c),
    };
    config.budget = match (budget_mode, config.budget) {
        (Some(BudgetKind::Constant), _) | (None, BudgetMode::Constant(_)) => BudgetMode::Constant(constant),
        (Some(BudgetKind::Quality), _) | (None, BudgetMode::QualityScaled(_)) => BudgetMode::QualityScaled(constant),
    };
    config.n_types = types.unwrap_or(config.n_types);
    config.n_campaigns = campaigns.unwrap_or(config.n_campaigns);
    config.market_size = market_size.unwrap_or(config.market_size);
    config.supply = supply.unwrap_or(config.supply);
    config.cpc = cpc.unwrap_or(config.cpc);

    let generated = generate(&config)?;
    let sidecar = output::sidecar_path(&out);
    let writer = Writer::new(cli.force);
    writer.check(&[&out, &sidecar])?;
    writer.write(&out, &generated.instance.to_json_string()?)?;
    writer.write(&sidecar, &serde_json::to_string_pretty(&generated.quality)?)?;

    let inst = &generated.instance;
    println!(
        "wrote {} ({} impression types, {} campaigns, {} edges)",
        out.display(),
        inst.n_types(),
        inst.n_campaigns(),
        inst.edge_count()
    );
    if !generated.empty_campaigns.is_empty() {
        println!("campaigns with empty target sets: {:?}", generated.empty_campaigns);
    }
    Ok(())
}

fn cmd_solve(cli: &Cli, cmd: &Command) -> Result<()> {
    let Command::Solve { instance, max_iters, step_scale, trajectory } = cmd else { unreachable!() };
    let out = require_out(&cli.out);
    let config = DualConfig { max_iters: *max_iters, step_scale: *step_scale };
    config.check()?;
    let inst = load_instance(instance)?;
    let writer = Writer::new(cli.force);
    let mut targets = vec![out.as_path()];
    if let Some(t) = trajectory {
        targets.push(t.as_path());
    }
    writer.check(&targets)?;

    info!("solving {} edges with {} dual iterations", inst.edge_count(), max_iters);
    let (plan, dual) = two_phase(&inst, &config)?;
    writer.write(&out, &plan.to_json_string(&inst)?)?;
    if let Some(t) = trajectory {
        writer.write(t, &dual.trajectory_csv())?;
    }
    println!("primal {}", plan.primal_value);
    println!("dual_bound {}", plan.dual_bound);
    match plan.gap {
        Some(g) => println!("gap {g} (dual_bound - primal) / primal"),
        None => println!("gap inf (dual_bound - primal) / primal"),
    }
    println!("gap_abs {}", plan.gap_abs);
    Ok(())
}

fn cmd_simulate(cli: &Cli, cmd: &Command) -> Result<()> {
    let Command::Simulate { instance, plan, runs, base_seed } = cmd else { unreachable!() };
    let out = require_out(&cli.out);
    if *runs == 0 {
        bail!("invalid configuration: --runs must be at least 1");
    }
    let base_seed = base_seed.unwrap_or(cli.seed);
    let inst = load_instance(instance)?;
    if !plan.exists() {
        bail!("file not found: {}", plan.display());
    }
    let plan_text = std::fs::read_to_string(plan).with_context(|| format!("reading plan {}", plan.display()))?;
    let solution = PlanSolution::from_json_str(&plan_text, &inst)?;

    let runs_csv = out.join("runs.csv");
    let report_json = out.join("report.json");
    let manifest_json = out.join("manifest.json");
    let writer = Writer::new(cli.force);
    writer.check(&[&runs_csv, &report_json, &manifest_json])?;

    info!("simulating {runs} paired runs from base seed {base_seed}");
    let report = paired_experiment(&inst, &solution, *runs, base_seed)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    writer.write(&runs_csv, &report.runs_csv("lagrangian", "greedy"))?;
    writer.write(&report_json, &output::report_json(&report)?)?;
    let manifest = ExperimentManifest {
        instance: instance.display().to_string(),
        plan: Some(plan.display().to_string()),
        solver: None,
        simulation: SimulationManifest { runs: *runs, base_seed },
        output: out.display().to_string(),
    };
    writer.write(&manifest_json, &serde_json::to_string_pretty(&manifest)?)?;

    let p = &report.relative_profit;
    println!("relative profit  {:.4} ± {:.4} ({} runs, {} excluded)", p.mean, p.stderr, p.count, p.excluded);
    println!("relative cost    {:.4} ± {:.4}", report.relative_cost.mean, report.relative_cost.stderr);
    println!("relative revenue {:.4} ± {:.4}", report.relative_revenue.mean, report.relative_revenue.stderr);
    println!("budget util      lagrangian {:.4}  greedy {:.4}", report.first.budget_util, report.second.budget_util);
    println!("profit margin    lagrangian {:.4}  greedy {:.4}", report.first.margin, report.second.margin);
    Ok(())
}

fn cmd_sweep(cli: &Cli, cmd: &Command) -> Result<()> {
    let Command::Sweep { runs, max_iters, base_seed, budgets } = cmd else { unreachable!() };
    let out = require_out(&cli.out);
    if *runs == 0 {
        bail!("invalid configuration: --runs must be at least 1");
    }
    let config = DualConfig { max_iters: *max_iters, step_scale: None };
    config.check()?;
    let base_seed = base_seed.unwrap_or(cli.seed);
    let budgets = budgets.clone().unwrap_or_else(|| SWEEP_BUDGETS.to_vec());
    let manifest_path = output::manifest_path(&out);
    let writer = Writer::new(cli.force);
    writer.check(&[&out, &manifest_path])?;

    let mut csv = String::from("budget,mean_rel_profit,stderr\n");
    for generated in sweep_instances(cli.seed, &budgets)? {
        let inst = &generated.instance;
        let budget = inst.campaigns().first().map_or(0.0, |c| c.budget);
        let (plan, _) = two_phase(inst, &config)?;
        let report = paired_experiment(inst, &plan, *runs, base_seed)?;
        let p = report.relative_profit;
        println!("budget {budget}: relative profit {:.4} ± {:.4}", p.mean, p.stderr);
        csv.push_str(&format!("{budget},{},{}\n", p.mean, p.stderr));
    }
    writer.write(&out, &csv)?;
    let manifest = ExperimentManifest {
        instance: format!("sweep preset, seed {}", cli.seed),
        plan: None,
        solver: Some(SolverManifest { max_iters: *max_iters, step_scale: None, seed: cli.seed }),
        simulation: SimulationManifest { runs: *runs, base_seed },
        output: out.display().to_string(),
    };
    writer.write(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn cmd_validate(cmd: &Command) -> Result<bool> {
    let Command::Validate { instance } = cmd else { unreachable!() };
    if !instance.exists() {
        bail!("file not found: {}", instance.display());
    }
    let inst = Instance::load(instance).with_context(|| format!("reading instance {}", instance.display()))?;
    println!("{}", inst.validate());
    Ok(inst.is_valid())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DSPOPT_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global().context("configuring worker pool")?;
    }
    match &cli.command {
        cmd @ Command::Generate { .. } => cmd_generate(cli, cmd),
        cmd @ Command::Solve { .. } => cmd_solve(cli, cmd),
        cmd @ Command::Simulate { .. } => cmd_simulate(cli, cmd),
        cmd @ Command::Sweep { .. } => cmd_sweep(cli, cmd),
        cmd @ Command::Validate { .. } => {
            if !cmd_validate(cmd)? {
                std::process::exit(1);
            }
            Ok(())
        }
    }
}
