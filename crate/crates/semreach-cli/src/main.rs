//! Operator front end for the semantic reaching experiments.
//!
//! Five commands cover the experiment lifecycle: `train` runs the
//! asynchronous learner and writes a run directory, `eval` scores a frozen
//! checkpoint over many episodes, `compare` evaluates several finished runs
//! against the first one and reports the variance analysis, `demo` rolls a
//! single episode into image frames plus a trace, and `kg-inspect` prints
//! the semantic subgraph and sentence an experiment would embed.
//!
//! Every command exits 0 on success and nonzero with a single-line error
//! otherwise. Identical config and seed reproduce identical outputs in
//! single-worker mode.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semreach::a3c::{flat_from_tensors, load_checkpoint, select_best, train, EvalRow};
use semreach::arena::{
    ik_policy_action, perceived_entities, trace_header, trace_row, write_ppm, ReachArena,
};
use semreach::config::ExperimentConfig;
use semreach::evalstats::{
    compare_agents, comparison_csv, comparison_table, post_train_eval, write_eval_csv, AgentEval,
    EvalSettings,
};
use semreach::kge::{select_subgraph, KgeMode, KnowledgeGraph};
use semreach::policy::{greedy_actions, Network, ParamSet, RecurrentState};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "semreach", version, about = "Train, evaluate, and inspect reaching agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint over many episodes.
    Eval(EvalArgs),
    /// Evaluate finished runs against the first one (the baseline).
    Compare(CompareArgs),
    /// Roll one episode into PPM frames and a step trace.
    Demo(DemoArgs),
    /// Print the selected subgraph and sentence for a config.
    KgInspect(KgInspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override train.total_steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Override train.n_workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Override run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to score.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Override run.seed (drives the episode sequence).
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories (config snapshot + best.txt); the first is the
    /// baseline.
    #[arg(required = true, num_args = 2..)]
    run_dirs: Vec<PathBuf>,
    /// Common evaluation seed (default: the baseline's run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for comparison.csv (table always goes to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint for a greedy learned policy; without it a scripted
    /// inverse-kinematics policy drives the arm.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Override run.seed (seeds the episode).
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KgInspectArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Demo(args) => cmd_demo(args),
        Command::KgInspect(args) => cmd_kg_inspect(args),
    }
}

/// Resolves the output directory from the flag or the config and creates it.
fn resolve_out(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let out = flag
        .or_else(|| cfg.run.out_dir.clone())
        .context("no output directory: set run.out_dir or pass --out")?;
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create {}", out.display()))?;
    Ok(out)
}

fn eval_settings(cfg: &ExperimentConfig) -> EvalSettings {
    EvalSettings {
        episodes: cfg.run.eval_episodes,
        dist_threshold: cfg.run.eval_dist_threshold,
        deg_threshold: cfg.run.eval_deg_threshold,
        greedy: false,
    }
}

fn mode_name(mode: KgeMode) -> &'static str {
    match mode {
        KgeMode::None => "none",
        KgeMode::Partial => "partial",
        KgeMode::Full => "full",
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.train.total_steps = steps;
    }
    if let Some(workers) = args.workers {
        cfg.train.n_workers = workers;
    }
    if args.out.is_some() {
        cfg.run.out_dir = args.out.clone();
    }
    cfg.validate()?;
    let out = resolve_out(&cfg, args.out)?;

    // Snapshot the effective config (overrides applied) so the run is
    // re-runnable and comparable later.
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())
        .with_context(|| format!("cannot write {}", out.join("config.toml").display()))?;

    let kge = cfg.scene_embedding()?.map(|e| e.values);
    let outcome = train::<f32>(
        cfg.to_agent_config(),
        cfg.to_env_config(),
        kge,
        cfg.to_train_config(),
        cfg.run.seed,
        &out,
    )?;
    let best = select_best(&outcome.rows)?;
    std::fs::write(out.join("best.txt"), format!("{}\n", best.to_csv()))
        .with_context(|| format!("cannot write {}", out.join("best.txt").display()))?;

    println!(
        "trained {} steps ({} interim evaluations); run dir {}",
        outcome.final_step,
        outcome.rows.len(),
        out.display()
    );
    println!(
        "best: step {} avg_return {:.3} success_rate {:.3} ({})",
        best.step, best.avg_return, best.success_rate, best.checkpoint
    );
    Ok(())
}

/// Loads a checkpoint as the flat parameter vector for `agent`, enforcing
/// the recorded embedding width.
fn checkpoint_params(
    agent: &semreach::policy::AgentConfig,
    path: &Path,
) -> Result<Vec<f64>> {
    let ckpt = load_checkpoint(path, Some(agent.kge_dim))?;
    let flat = flat_from_tensors::<f64>(&agent.layout(), &ckpt)?;
    Ok(flat)
}

fn report_csv(report: &semreach::evalstats::EvalReport) -> String {
    let failure = report
        .mean_failure_distance
        .map(|d| d.to_string())
        .unwrap_or_default();
    format!(
        "episodes,accuracy,mean_return,std_return,mean_steps,std_steps,mean_failure_distance\n\
         {},{},{},{},{},{},{}\n",
        report.episodes.len(),
        report.accuracy,
        report.mean_return,
        report.std_return,
        report.mean_steps,
        report.std_steps,
        failure
    )
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let out = resolve_out(&cfg, args.out)?;
    let agent = cfg.to_agent_config();
    let flat = checkpoint_params(&agent, &args.checkpoint)?;
    let kge = cfg.scene_embedding()?.map(|e| e.values);
    let report = post_train_eval::<f32>(
        &agent,
        &cfg.to_env_config(),
        kge.as_deref(),
        &flat,
        &eval_settings(&cfg),
        cfg.run.seed,
    )?;

    let episodes_path = out.join("eval_episodes.csv");
    write_eval_csv(&episodes_path, &report)?;
    let report_path = out.join("eval_report.csv");
    std::fs::write(&report_path, report_csv(&report))
        .with_context(|| format!("cannot write {}", report_path.display()))?;

    println!(
        "evaluated {} episodes: accuracy {:.1}% mean_return {:.3} mean_steps {:.1}",
        report.episodes.len(),
        report.accuracy,
        report.mean_return,
        report.mean_steps
    );
    println!("wrote {} and {}", episodes_path.display(), report_path.display());
    Ok(())
}

/// Reads the best-checkpoint pointer written by `train`.
fn read_best(dir: &Path) -> Result<EvalRow> {
    let path = dir.join("best.txt");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    EvalRow::from_csv(text.lines().next().unwrap_or(""))
        .with_context(|| format!("{} is not a best-checkpoint pointer", path.display()))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let baseline_cfg = ExperimentConfig::from_file(&args.run_dirs[0].join("config.toml"))?;
    let seed = args.seed.unwrap_or(baseline_cfg.run.seed);
    let settings = eval_settings(&baseline_cfg);

    let mut entries = Vec::with_capacity(args.run_dirs.len());
    for dir in &args.run_dirs {
        let cfg = ExperimentConfig::from_file(&dir.join("config.toml"))?;
        if cfg.env != baseline_cfg.env {
            bail!(
                "{}: env section differs from the baseline run; agents must share a task",
                dir.display()
            );
        }
        let best = read_best(dir)?;
        let agent = cfg.to_agent_config();
        let flat = checkpoint_params(&agent, &dir.join(&best.checkpoint))?;
        let kge = cfg.scene_embedding()?.map(|e| e.values);
        let report = post_train_eval::<f32>(
            &agent,
            &cfg.to_env_config(),
            kge.as_deref(),
            &flat,
            &settings,
            seed,
        )?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        entries.push(AgentEval {
            name,
            accuracy: report.accuracy,
            best_step: best.step,
            returns: report.returns(),
        });
    }

    let rows = compare_agents(&entries)?;
    print!("{}", comparison_table(&rows));
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)
            .with_context(|| format!("cannot create {}", out.display()))?;
        let path = out.join("comparison.csv");
        std::fs::write(&path, comparison_csv(&rows))
            .with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

enum DemoPolicy {
    Scripted,
    Learned(Box<LearnedPolicy>),
}

struct LearnedPolicy {
    network: Network<f32>,
    kge: Option<Vec<f32>>,
    state: RecurrentState<f32>,
}

fn cmd_demo(args: DemoArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let out = resolve_out(&cfg, args.out)?;
    let frames = out.join("frames");
    std::fs::create_dir_all(&frames)
        .with_context(|| format!("cannot create {}", frames.display()))?;

    let env_cfg = cfg.to_env_config();
    let mut env = ReachArena::new(env_cfg.clone(), cfg.run.seed)?;
    let mut policy = match &args.checkpoint {
        None => DemoPolicy::Scripted,
        Some(path) => {
            let agent = cfg.to_agent_config();
            let flat = checkpoint_params(&agent, path)?;
            let mut params = ParamSet::<f32>::orthogonal(&agent, 0);
            let cast: Vec<f32> = flat.iter().map(|&v| v as f32).collect();
            params.load_flat(&cast);
            let network = Network::new(agent.clone(), &params)?;
            let kge = cfg
                .scene_embedding()?
                .map(|e| e.values.iter().map(|&v| v as f32).collect());
            DemoPolicy::Learned(Box::new(LearnedPolicy {
                network,
                kge,
                state: RecurrentState::zeros(agent.lstm_width),
            }))
        }
    };

    let mut obs = env.reset(cfg.run.seed);
    let mut trace = format!("{}\n", trace_header(env_cfg.n_links));
    let mut steps = 0usize;
    let success = loop {
        let actions = match &mut policy {
            DemoPolicy::Scripted => ik_policy_action(&env),
            DemoPolicy::Learned(p) => {
                let obs32: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
                let (output, next) = p.network.forward(&obs32, p.kge.as_deref(), &p.state)?;
                p.state = next;
                greedy_actions(&output)
            }
        };
        let outcome = env.step(&actions)?;
        steps += 1;
        let frame = frames.join(format!("step_{steps:03}.ppm"));
        write_ppm(&frame, &outcome.observation, env_cfg.image_size)
            .with_context(|| format!("cannot write {}", frame.display()))?;
        trace.push_str(&trace_row(
            0,
            steps,
            &env.state().joint_angles,
            &actions,
            &outcome,
        ));
        trace.push('\n');
        if outcome.done {
            break outcome.info.success;
        }
        obs = outcome.observation;
    };

    let trace_path = out.join("trace.csv");
    std::fs::write(&trace_path, trace)
        .with_context(|| format!("cannot write {}", trace_path.display()))?;
    println!(
        "episode finished after {steps} steps (success={success}); {} frames in {}",
        steps,
        frames.display()
    );
    Ok(())
}

fn cmd_kg_inspect(args: KgInspectArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    println!("mode: {}", mode_name(cfg.kge.mode));
    if cfg.kge.mode == KgeMode::None {
        println!("no semantic input: the agent receives vision only");
        return Ok(());
    }
    let graph = match &cfg.kge.graph {
        Some(path) => KnowledgeGraph::from_file(path)?,
        None => KnowledgeGraph::desk_default(cfg.env.dr_colors),
    };
    let perceived = perceived_entities(cfg.kge.mode);
    println!("perceived entities: {}", perceived.join(", "));
    let sub = select_subgraph(&graph, &perceived)?;
    println!("selected subgraph ({} of {} triples):", sub.len(), graph.len());
    for t in sub.triples() {
        println!("  {} {} {}", t.head, t.relation, t.tail);
    }
    let emb = cfg
        .scene_embedding()?
        .expect("semantic mode checked above");
    println!("sentence: {}", emb.source_sentence);
    println!(
        "embedding: {} values, {} unknown tokens",
        emb.values.len(),
        emb.unknown_tokens
    );
    Ok(())
}
