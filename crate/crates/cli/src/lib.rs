//! `manip`: train skill policies, plan and execute instructions, and run
//! benchmark batteries in the kinematic tabletop simulator.

pub mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use manip_core::bench::{self, BenchResources, Condition, ReportFormat};
use manip_core::env::{scenario, Env, ScenarioSpec};
use manip_core::integration::{self, ExecError, ExecutionStatus, LearnedSkills, OracleSkills, SkillLibrary};
use manip_core::planner::llm::plan_llm;
use manip_core::planner::{LlmClient, LlmPlanner, PlanError, Planner, RuleBasedPlanner};
use manip_core::rl::{train_skill, Algo, FlatTaskEnv, LearningCurve, SkillEnv, SkillId};
use sha2::{Digest, Sha256};

pub use config::{Backend, Config};

/// Exit status for a run that completed but did not succeed.
pub const EXIT_TASK_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "manip", version, about = "Planner-guided RL skills for tabletop manipulation")]
pub struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the command
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory that receives the run directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one skill policy; writes a checkpoint and its learning curve
    Train(TrainArgs),
    /// Plan and execute one instruction; exits 0 iff the task succeeded
    Run(RunArgs),
    /// Run a benchmark battery and write CSV, JSON and markdown reports
    Bench(BenchArgs),
    /// Print the plan for an instruction without executing it
    Plan(PlanArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Skill to train: reach, grasp, place, avoid_reach or flat
    pub skill: String,
    /// Learning algorithm: ppo or sac
    #[arg(long, value_parser = parse_algo)]
    pub algo: Option<Algo>,
    /// Number of training episodes
    #[arg(long, value_name = "N")]
    pub episodes: Option<usize>,
    /// Scenario of the flat whole-task policy
    #[arg(long, value_name = "NAME|PATH")]
    pub scenario: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Instruction text; defaults to the scenario's own instruction
    pub instruction: Option<String>,
    /// Built-in scenario name or scenario file
    #[arg(long, value_name = "NAME|PATH")]
    pub scenario: Option<String>,
    /// Planner backend
    #[arg(long, value_enum)]
    pub planner: Option<Backend>,
    /// `oracle` or a directory of <skill>.ckpt files
    #[arg(long, value_name = "oracle|DIR")]
    pub skills: Option<String>,
    /// Drop the scenario's scripted perturbations
    #[arg(long)]
    pub no_perturbations: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario to include (repeatable); replaces the configured list
    #[arg(long = "scenario", value_name = "NAME|PATH")]
    pub scenarios: Vec<String>,
    /// Condition to run (repeatable): rl_only, hybrid_rule_based, hybrid_llm
    #[arg(long = "condition", value_parser = parse_condition)]
    pub conditions: Vec<Condition>,
    /// Episodes per scenario and condition
    #[arg(long, value_name = "N")]
    pub episodes: Option<usize>,
    /// `oracle` or a directory of <skill>.ckpt files
    #[arg(long, value_name = "oracle|DIR")]
    pub skills: Option<String>,
    /// Training episodes for the rl_only whole-task policy (0 = untrained)
    #[arg(long, value_name = "N")]
    pub flat_episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Instruction text
    pub instruction: String,
    /// Built-in scenario name or scenario file
    #[arg(long, value_name = "NAME|PATH")]
    pub scenario: Option<String>,
    /// Planner backend
    #[arg(long, value_enum)]
    pub planner: Option<Backend>,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse()
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse()
}

/// Configuration or usage problem detected before any work starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn plan_error_code(e: &PlanError) -> u8 {
    match e {
        PlanError::Transport(_) => EXIT_TRANSPORT,
        PlanError::Config(_) | PlanError::Parse(_) | PlanError::EmptyInstruction => EXIT_USAGE,
        _ => EXIT_TASK_FAILURE,
    }
}

/// Exit status for an error: usage 2, transport 3, anything else 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<PlanError>() {
            return plan_error_code(e);
        }
        if let Some(ExecError::Planner(e)) = cause.downcast_ref::<ExecError>() {
            return plan_error_code(e);
        }
        if let Some(bench::BenchError::Config(_)) = cause.downcast_ref::<bench::BenchError>() {
            return EXIT_USAGE;
        }
    }
    EXIT_TASK_FAILURE
}

/// Applies flag overrides to the loaded configuration.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut c = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    match &cli.command {
        Command::Train(a) => {
            if let Some(x) = a.algo {
                c.train.algo = x;
            }
            if let Some(x) = a.episodes {
                c.train.episodes = x;
            }
            if let Some(x) = &a.scenario {
                c.train.scenario = x.clone();
            }
        }
        Command::Run(a) => {
            if let Some(x) = &a.scenario {
                c.run.scenario = x.clone();
            }
            if let Some(x) = a.planner {
                c.planner.backend = x;
            }
            if let Some(x) = &a.skills {
                c.skills = x.clone();
            }
            if a.no_perturbations {
                c.run.perturbations = false;
            }
        }
        Command::Bench(a) => {
            if !a.scenarios.is_empty() {
                c.bench.scenarios = a.scenarios.clone();
            }
            if !a.conditions.is_empty() {
                c.bench.conditions = a.conditions.clone();
            }
            if let Some(x) = a.episodes {
                c.bench.n_episodes = x;
            }
            if let Some(x) = &a.skills {
                c.skills = x.clone();
            }
            if let Some(x) = a.flat_episodes {
                c.bench.flat_episodes = x;
            }
        }
        Command::Plan(a) => {
            if let Some(x) = &a.scenario {
                c.run.scenario = x.clone();
            }
            if let Some(x) = a.planner {
                c.planner.backend = x;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn load_scenario(name: &str) -> anyhow::Result<ScenarioSpec> {
    scenario::resolve(name).map_err(|e| {
        let builtins = scenario::BUILTIN_NAMES.join(", ");
        UsageError(format!("cannot load scenario `{name}`: {e} (built-ins: {builtins})")).into()
    })
}

/// Creates `<out>/<UTC timestamp>-<command>-<config hash>` and records the configuration in it.
pub fn create_run_dir(config: &Config, command: &str, detail: &str) -> anyhow::Result<PathBuf> {
    let config_json = serde_json::to_string(config)?;
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(detail.as_bytes());
    h.update([0]);
    h.update(config_json.as_bytes());
    let hash: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{command}-{hash}");
    let mut dir = config.out.join(&base);
    let mut k = 2;
    while dir.exists() {
        dir = config.out.join(format!("{base}-{k}"));
        k += 1;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), toml::to_string(config)?)?;
    Ok(dir)
}

fn skill_library(spec: &str) -> anyhow::Result<Box<dyn SkillLibrary>> {
    if spec == "oracle" {
        return Ok(Box::new(OracleSkills));
    }
    let dir = Path::new(spec);
    if !dir.is_dir() {
        return Err(UsageError(format!("skills must be `oracle` or a checkpoint directory, got `{spec}`")).into());
    }
    Ok(Box::new(LearnedSkills::load_dir(dir)?))
}

fn final_window_mean(curve: &LearningCurve) -> Option<f64> {
    let n = curve.len();
    (n > 0).then(|| curve.mean_reward(n.saturating_sub(10)..n))
}

pub fn cmd_train(config: &Config, args: &TrainArgs) -> anyhow::Result<u8> {
    let skill: SkillId = args.skill.parse().map_err(UsageError)?;
    let (algo, episodes, seed) = (config.train.algo, config.train.episodes, config.seed);
    let tc = config.train.train_config();
    let (ckpt, curve) = if skill == SkillId::Flat {
        let spec = load_scenario(&config.train.scenario)?;
        train_skill(move |_, s| FlatTaskEnv::new(spec, s), skill, algo, episodes, seed, &tc)?
    } else {
        train_skill(SkillEnv::new, skill, algo, episodes, seed, &tc)?
    };
    let dir = create_run_dir(config, "train", &format!("{skill} {algo}"))?;
    let ckpt_path = dir.join(format!("{skill}.ckpt"));
    let curve_path = dir.join(format!("{skill}_curve.csv"));
    ckpt.save(&ckpt_path)?;
    fs::write(&curve_path, bench::emit_learning_curve(&curve))?;
    println!("trained {skill} with {algo} for {episodes} episodes (seed {seed})");
    match final_window_mean(&curve) {
        Some(m) => println!("final-window mean reward: {m:.4}"),
        None => println!("final-window mean reward: n/a"),
    }
    println!("checkpoint: {}", ckpt_path.display());
    println!("learning curve: {}", curve_path.display());
    Ok(0)
}

fn make_planner(config: &Config) -> anyhow::Result<Box<dyn Planner>> {
    Ok(match config.planner.backend {
        Backend::RuleBased => Box::new(RuleBasedPlanner),
        Backend::Llm => Box::new(LlmPlanner::new(LlmClient::from_config(config.planner.llm.clone())?)),
    })
}

pub fn cmd_run(config: &Config, args: &RunArgs) -> anyhow::Result<u8> {
    let mut spec = load_scenario(&config.run.scenario)?;
    let instruction = match &args.instruction {
        Some(t) if t.trim().is_empty() => return Err(UsageError("the instruction is empty".into()).into()),
        Some(t) => t.clone(),
        None => spec
            .instruction
            .clone()
            .ok_or_else(|| UsageError(format!("scenario `{}` has no default instruction", spec.name)))?,
    };
    if !config.run.perturbations {
        spec.perturbations.clear();
    }
    let mut planner = make_planner(config)?;
    let mut skills = skill_library(&config.skills)?;
    let mut env = Env::new(spec, config.seed)?;
    let result =
        integration::execute_task(&instruction, &mut env, planner.as_mut(), skills.as_mut(), &config.execution)?;

    let dir = create_run_dir(config, "run", &instruction)?;
    let trace_path = dir.join("trace.jsonl");
    fs::write(&trace_path, integration::trace::to_jsonl(&result.trace))?;
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    println!("instruction: {instruction}");
    println!("plan: {}", result.final_plan.subtasks.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "));
    println!(
        "status: {:?}  goal satisfied: {}  steps: {}  time: {:.1} s  replans: {}  reward: {:.3}",
        result.status,
        result.goal_satisfied,
        result.total_steps,
        result.wall_seconds,
        result.replans_used,
        result.cumulative_reward
    );
    if let Some(r) = &result.failure_reason {
        println!("failure: {r}");
    }
    println!("trace: {}", trace_path.display());
    Ok(if result.status == ExecutionStatus::Succeeded { 0 } else { EXIT_TASK_FAILURE })
}

pub fn cmd_plan(config: &Config, args: &PlanArgs) -> anyhow::Result<u8> {
    let spec = load_scenario(&config.run.scenario)?;
    let world = Env::new(spec, config.seed)?.world_summary();
    let result = match config.planner.backend {
        Backend::RuleBased => RuleBasedPlanner.plan(&args.instruction, &world),
        Backend::Llm => {
            let mut client = LlmClient::from_config(config.planner.llm.clone())?;
            let (plan, exchange) = plan_llm(&args.instruction, &world, &mut client);
            eprintln!("{}", serde_json::to_string_pretty(&exchange)?);
            plan
        }
    };
    match result {
        Ok(plan) => {
            println!("{}", serde_json::to_string(&plan.subtasks)?);
            Ok(0)
        }
        Err(PlanError::Parse(e)) => {
            eprintln!("{}", e.render(&args.instruction));
            Err(anyhow!(PlanError::Parse(e)))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_bench(config: &Config) -> anyhow::Result<u8> {
    let suite: Vec<ScenarioSpec> = config.bench.scenarios.iter().map(|s| load_scenario(s)).collect::<Result<_, _>>()?;
    let cfg = config.bench_config();
    let mut resources = BenchResources::oracle();
    if config.skills != "oracle" {
        let dir = Path::new(&config.skills);
        if !dir.is_dir() {
            return Err(UsageError(format!(
                "skills must be `oracle` or a checkpoint directory, got `{}`",
                config.skills
            ))
            .into());
        }
        resources.learned_skills = Some(LearnedSkills::load_dir(dir)?);
    }
    if config.bench.conditions.contains(&Condition::HybridLlm) {
        let llm = config.planner.llm.clone();
        LlmClient::from_config(llm.clone())?;
        resources.llm = Some(Box::new(move || LlmClient::from_config(llm.clone()).map(LlmPlanner::new)));
    }
    let dir = create_run_dir(config, "bench", "")?;
    if config.bench.flat_episodes > 0 && config.bench.conditions.contains(&Condition::RlOnly) {
        let tc = config.train.train_config();
        for spec in &suite {
            let s = spec.clone();
            let (ckpt, curve) = train_skill(
                move |_, seed| FlatTaskEnv::new(s, seed),
                SkillId::Flat,
                Algo::Ppo,
                config.bench.flat_episodes,
                config.seed,
                &tc,
            )?;
            ckpt.save(dir.join(format!("flat_{}.ckpt", spec.name)))?;
            fs::write(dir.join(format!("flat_{}_curve.csv", spec.name)), bench::emit_learning_curve(&curve))?;
            resources.flat_policies.insert(spec.name.clone(), ckpt);
        }
    }
    let report = bench::run_benchmark(&suite, &config.bench.conditions, &mut resources, &cfg)?;
    let stem = bench::report_file_stem(&report);
    for format in ReportFormat::ALL {
        fs::write(dir.join(format!("{stem}.{}", format.extension())), bench::emit_report(&report, format))?;
    }
    print!("{}", bench::emit_report(&report, ReportFormat::Markdown));
    println!("reports: {}", dir.join(&stem).display());
    Ok(0)
}

/// Runs a parsed command line and returns its exit status.
pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    let config = resolve_config(cli)?;
    match &cli.command {
        Command::Train(a) => cmd_train(&config, a),
        Command::Run(a) => cmd_run(&config, a),
        Command::Bench(_) => cmd_bench(&config),
        Command::Plan(a) => cmd_plan(&config, a),
    }
}
