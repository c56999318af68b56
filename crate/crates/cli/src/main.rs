//! `regrasp`: experiment front-end for the needle regrasp workbench.
//!
//! Subcommands cover the whole workflow: `demo-gen` builds a
//! demonstration dataset, `train` fits a policy variant, `benchmark`
//! compares planners and policies on the shared test set, `funnel`
//! samples the collision funnel, and `replay` validates a recorded
//! trace file against the environment. Every artifact directory gets a
//! copy of the resolved config so results stay reproducible.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use regrasp_core::env::episode::{
    read_episodes_csv, reconstruct_episode, replay_episode, write_episodes_csv, DatasetManifest,
    Episode,
};
use regrasp_core::env::RegraspEnv;
use regrasp_core::harness::{
    build_test_set, run_funnel_study, run_planner_benchmark, run_policy_benchmark, summarize,
    write_funnel_csv, write_summary_json, write_trial_csv, ExperimentConfig, Summary, TrialRow,
};
use regrasp_core::learning::{load_checkpoint, save_checkpoint, train, write_curve_csv, Variant};
use regrasp_core::planners::demo::{generate, DemoConfig};
use regrasp_core::planners::{PlanMode, PlannerConfig};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "regrasp",
    version,
    about = "Suture-needle regrasp workbench: planners, learned policy, benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy variant; writes learning curve and checkpoint
    Train(TrainArgs),
    /// Run planners (and optionally a policy) on the shared test set
    Benchmark(BenchmarkArgs),
    /// Sample the collision funnel and write the radius/fraction curve
    Funnel(FunnelArgs),
    /// Pre-generate planner demonstrations to a dataset file
    DemoGen(DemoGenArgs),
    /// Validate a recorded trace file against the environment
    Replay(ReplayArgs),
}

/// Config resolution shared by every artifact-producing subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Built-in profile to start from
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Master seed; overrides the profile/config value
    #[arg(long)]
    seed: Option<u64>,
    /// JSON experiment config; takes precedence over --profile
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if absent)
    #[arg(long)]
    out: PathBuf,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::from_profile(&self.profile, self.seed.unwrap_or(0))?,
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn prepare_out(&self, cfg: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        cfg.save(&self.out.join("config.json"))?;
        Ok(())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plain,
    Targeted,
    Mixed,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Plain => Variant::Plain,
            VariantArg::Targeted => Variant::Targeted,
            VariantArg::Mixed => Variant::Mixed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Exploration variant
    #[arg(long, value_enum, default_value = "mixed")]
    variant: VariantArg,
    /// Directory with a pre-generated dataset (demos.csv + manifest.json);
    /// demonstrations are generated in-process when omitted
    #[arg(long)]
    demos: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated planners to run
    #[arg(long, default_value = "rrt_star,prm_star,bit_star", value_delimiter = ',')]
    planners: Vec<String>,
    /// Comma-separated planning modes
    #[arg(long, default_value = "forward,reverse", value_delimiter = ',')]
    modes: Vec<String>,
    /// Trained-policy checkpoint to benchmark alongside the planners
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Override the config's test-set size
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct FunnelArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DemoGenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Episode count; defaults to the config's training demo count
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace CSV to validate
    #[arg(long)]
    data: PathBuf,
    /// Dataset manifest; defaults to manifest.json next to the trace
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Per-component state tolerance
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Funnel(args) => cmd_funnel(args),
        Command::DemoGen(args) => cmd_demo_gen(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

/// Demonstration seeds come from a stream disjoint from the training
/// episode streams so regenerated datasets match `demo-gen` output.
const DEMO_STREAM: u64 = 0xd3_a105;

fn load_dataset(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<Episode>> {
    let manifest = DatasetManifest::load(&dir.join("manifest.json"))?;
    let recorded = read_episodes_csv(&dir.join("demos.csv"))?;
    if recorded.len() != manifest.count {
        bail!("dataset has {} episodes but manifest says {}", recorded.len(), manifest.count);
    }
    let mut env = RegraspEnv::new(cfg.env, 0)?;
    let mut episodes = Vec::with_capacity(recorded.len());
    for ep in &recorded {
        let seed = *manifest
            .seeds
            .get(ep.id as usize)
            .with_context(|| format!("episode id {} outside manifest seed list", ep.id))?;
        episodes.push(reconstruct_episode(&mut env, seed, ep, 1e-6)?);
    }
    Ok(episodes)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    args.common.prepare_out(&cfg)?;
    let variant: Variant = args.variant.into();

    let demos = match &args.demos {
        Some(dir) => {
            let eps = load_dataset(dir, &cfg)?;
            println!("loaded {} demonstrations from {}", eps.len(), dir.display());
            eps
        }
        None => {
            let (eps, manifest) = generate(
                &cfg.env,
                cfg.master_seed ^ DEMO_STREAM,
                cfg.train.demo_count,
                cfg.train.demo_count * 20,
                &DemoConfig::default(),
            )?;
            println!(
                "generated {} demonstrations ({} planner successes)",
                eps.len(),
                manifest.success_count
            );
            eps
        }
    };
    if demos.len() < cfg.train.demo_count {
        println!(
            "note: {} demonstrations available, config asks for {}",
            demos.len(),
            cfg.train.demo_count
        );
    }

    let out = train(&cfg.env, &cfg.train, variant, cfg.master_seed, &demos, |row, _| {
        println!(
            "epoch {:4}  success {:.3}  return {:8.3}  eps_r {:.4}  eps_t {:.4}  demos {}",
            row.epoch, row.eval_success_rate, row.mean_return, row.eps_r, row.eps_t, row.demo_count
        );
    })?;

    let tag = format!("{}_seed{}", variant.name(), cfg.master_seed);
    let curve_path = args.common.out.join(format!("curve_{tag}.csv"));
    write_curve_csv(&curve_path, &out.curve)?;
    let ckpt_path = args.common.out.join(format!("policy_{tag}.ckpt"));
    save_checkpoint(&ckpt_path, &out.agent)?;
    println!(
        "final success {:.3}; wrote {} and {}",
        out.final_success,
        curve_path.display(),
        ckpt_path.display()
    );
    Ok(())
}

fn planner_config(cfg: &ExperimentConfig, kind: &str, mode: &str) -> Result<PlannerConfig> {
    let mode = match mode {
        "forward" => PlanMode::Forward,
        "reverse" => PlanMode::Reverse,
        other => bail!("unknown mode '{other}' (forward|reverse)"),
    };
    let planner = match kind {
        "rrt_star" => PlannerConfig::rrt_star(mode).with_budget(cfg.budgets.rrt_star_s),
        "prm_star" => PlannerConfig::prm_star(mode).with_budget(cfg.budgets.prm_star_s),
        "bit_star" => PlannerConfig::bit_star(mode).with_budget(cfg.budgets.bit_star_s),
        other => bail!("unknown planner '{other}' (rrt_star|prm_star|bit_star)"),
    };
    Ok(planner)
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(n) = args.trials {
        cfg.test_set_size = n;
        cfg.validate()?;
    }
    args.common.prepare_out(&cfg)?;
    let seeds = build_test_set(cfg.master_seed, cfg.test_set_size);
    let hash = cfg.hash();

    let mut all_rows: Vec<TrialRow> = Vec::new();
    let mut summaries: Vec<Summary> = Vec::new();
    for kind in &args.planners {
        for mode in &args.modes {
            let planner = planner_config(&cfg, kind, mode)?;
            println!(
                "running {} ({}) on {} trials, budget {:.0}s ...",
                kind,
                mode,
                seeds.len(),
                planner.time_budget_s
            );
            let rows = run_planner_benchmark(&cfg.env, &planner, &seeds)?;
            let summary = summarize(&format!("{kind}_{mode}"), &rows, &hash);
            println!(
                "  success {:.3}  mean time {:.3}s  mean path {:?} mm",
                summary.success_rate, summary.mean_time_s, summary.mean_path_mm
            );
            summaries.push(summary);
            all_rows.extend(rows);
        }
    }

    if let Some(ckpt) = &args.policy {
        if !ckpt.exists() {
            bail!("policy checkpoint not found at {}", ckpt.display());
        }
        let agent = load_checkpoint(ckpt)?;
        println!("running policy on {} trials ...", seeds.len());
        let rows = run_policy_benchmark(&cfg.env, &agent, "policy", &seeds)?;
        let summary = summarize("policy", &rows, &hash);
        println!(
            "  success {:.3}  mean time {:.4}s  mean path {:?} mm",
            summary.success_rate, summary.mean_time_s, summary.mean_path_mm
        );
        summaries.push(summary);
        all_rows.extend(rows);
    }

    if all_rows.is_empty() {
        bail!("nothing to run: no planners/modes selected and no --policy given");
    }
    let trials_path = args.common.out.join("trials.csv");
    write_trial_csv(&trials_path, &all_rows)?;
    let summary_path = args.common.out.join("summary.json");
    write_summary_json(&summary_path, &summaries)?;
    println!("wrote {} and {}", trials_path.display(), summary_path.display());
    Ok(())
}

/// Sphere-sampling stream for the funnel study, fixed so equal seeds
/// give byte-identical curves.
const FUNNEL_STREAM: u64 = 0xfa11_5eed;

fn cmd_funnel(args: FunnelArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    args.common.prepare_out(&cfg)?;
    let study = run_funnel_study(&cfg.env, &cfg.funnel, cfg.master_seed, cfg.master_seed ^ FUNNEL_STREAM)?;
    let path = args.common.out.join("funnel.csv");
    write_funnel_csv(&path, &study)?;
    for (r, f) in study.radii.iter().zip(&study.fractions) {
        println!("radius {:5.1} mm  feasible {:.3}", r, f);
    }
    println!(
        "spearman(radius, fraction) = {:.3}; wrote {}",
        study.spearman_radius_fraction,
        path.display()
    );
    Ok(())
}

fn cmd_demo_gen(args: DemoGenArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    args.common.prepare_out(&cfg)?;
    let count = args.count.unwrap_or(cfg.train.demo_count);
    let (episodes, manifest) = generate(
        &cfg.env,
        cfg.master_seed ^ DEMO_STREAM,
        count,
        count * 20,
        &DemoConfig::default(),
    )?;
    let data_path = args.common.out.join("demos.csv");
    write_episodes_csv(&data_path, &episodes)?;
    let manifest_path = args.common.out.join("manifest.json");
    manifest.save(&manifest_path)?;
    println!(
        "wrote {} episodes ({} planner successes) to {} with manifest {}",
        episodes.len(),
        manifest.success_count,
        data_path.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| args.data.with_file_name("manifest.json"));
    let manifest = DatasetManifest::load(&manifest_path)
        .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let episodes = read_episodes_csv(&args.data)?;
    if episodes.is_empty() {
        bail!("{} contains no episodes", args.data.display());
    }

    let params = regrasp_core::env::EnvParams::default();
    let mut env = RegraspEnv::new(params, 0)?;
    let mut max_err = 0.0_f64;
    let mut exact = 0usize;
    let mut successes = 0usize;
    for ep in &episodes {
        let seed = *manifest
            .seeds
            .get(ep.id as usize)
            .with_context(|| format!("episode id {} outside manifest seed list", ep.id))?;
        let report = replay_episode(&mut env, seed, ep)?;
        let ok = report.max_state_error <= args.tolerance
            && report.rewards_match
            && report.flags_match;
        if ok {
            exact += 1;
        } else {
            println!(
                "episode {}: max state error {:.3e}, rewards_match {}, flags_match {}",
                ep.id, report.max_state_error, report.rewards_match, report.flags_match
            );
        }
        successes += usize::from(report.ends_in_success);
        max_err = max_err.max(report.max_state_error);
    }

    let n = episodes.len();
    println!(
        "replayed {n} episodes: {exact} within {:.1e} ({:.1}%), {successes} end in success, max state error {:.3e}",
        args.tolerance,
        100.0 * exact as f64 / n as f64,
        max_err
    );
    if exact != n {
        bail!("{} of {n} episodes failed replay", n - exact);
    }
    Ok(())
}
