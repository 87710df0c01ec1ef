use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use crowdguard_core::config::{parse_config, ExperimentConfig, RoundConfig};
use crowdguard_core::defense::{ablation_table, AggregationRule};
use crowdguard_core::nn::save_model;
use crowdguard_core::orchestrator::{
    assign_attacks, initial_model, prepare_data, run_experiment, run_round, RoundContext,
};
use crowdguard_core::report::{
    write_ablation_csv, write_file, write_hlbim_csv, write_hypergeom_csv, write_pca_csv, write_rounds_csv,
    write_rounds_json, HypergeomPoint,
};
use crowdguard_core::stats::hypergeometric_majority_prob;
use std::path::{Path, PathBuf};

/// Federated-learning simulator for the CrowdGuard backdoor defense.
#[derive(Parser)]
#[command(name = "crowdguard", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML, or JSON when it starts with `{`).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named configuration used when no file is given.
    #[arg(long, global = true, default_value = "paper-default-scaled")]
    preset: String,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "CROWDGUARD_OUT", default_value = "crowdguard-out")]
    out: PathBuf,
    /// Worker threads for training and validation; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    parallelism: usize,
    /// Vote aggregation rule: majority, kmeans, agglomerative, dbscan or stacked.
    #[arg(long, global = true)]
    rule: Option<AggregationRule>,
}

#[derive(Subcommand)]
enum Command {
    /// Run federated rounds and write per-round reports and final models.
    Simulate,
    /// Apply every aggregation rule to the five deterministic vote scenarios.
    VotesAblation,
    /// Probability that malicious clients hold a majority of the validators.
    Hypergeom(HypergeomArgs),
    /// Export HLBIM matrices and pruning traces of one round.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct HypergeomArgs {
    /// Total number of clients.
    #[arg(long, default_value_t = 1000)]
    population: u64,
    /// Validator counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [10u64, 20, 30, 40, 50, 60, 70, 80, 90, 100])]
    validators: Vec<u64>,
    /// Malicious shares, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.45, 0.49])]
    pmr: Vec<f64>,
}

#[derive(Args)]
struct PlotArgs {
    /// Round to export; defaults to the last configured round.
    #[arg(long)]
    round: Option<usize>,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::preset(&common.preset)?,
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(rule) = common.rule {
        cfg.defense.rule = rule;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    let mut all = Vec::new();
    for &seed in &cfg.seeds {
        let (reports, model) = run_experiment(cfg, seed).with_context(|| format!("seed {seed}"))?;
        for r in &reports {
            println!(
                "seed {seed} round {:>3}: MA {:.3} BA {:.3} accepted {}/{}",
                r.round,
                r.ma,
                r.ba,
                r.accepted.len(),
                cfg.round.clients
            );
        }
        write_file(&out.join(format!("rounds-seed{seed}.json")), |w| write_rounds_json(w, &hash, seed, cfg, &reports))?;
        save_model(&model, &out.join(format!("model-seed{seed}.json")))?;
        all.extend(reports);
    }
    write_file(&out.join("rounds.csv"), |w| write_rounds_csv(w, &hash, &all))?;
    Ok(())
}

fn votes_ablation(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let rows = ablation_table()?;
    let seed = cfg.seeds[0];
    write_file(&out.join("ablation.csv"), |w| write_ablation_csv(w, &cfg.hash(), seed, &rows))?;
    for r in &rows {
        println!("{:<20} {:<14} TPR {:>5.1} TNR {:>5.1}", r.scenario, r.rule.name(), r.tpr, r.tnr);
    }
    Ok(())
}

fn hypergeom(cfg: &ExperimentConfig, args: &HypergeomArgs, out: &Path) -> Result<()> {
    let mut points = Vec::new();
    for &pmr in &args.pmr {
        if !(0.0..=1.0).contains(&pmr) {
            bail!("pmr {pmr} outside [0, 1]");
        }
        let malicious = (pmr * args.population as f64).round() as u64;
        for &n in &args.validators {
            let probability = hypergeometric_majority_prob(args.population, malicious, n)?;
            points.push(HypergeomPoint { population: args.population, pmr, validators: n, probability });
        }
    }
    write_file(&out.join("hypergeom.csv"), |w| write_hypergeom_csv(w, &cfg.hash(), cfg.seeds[0], &points))?;
    for p in &points {
        println!("pmr {:.2} validators {:>4}: {:e}", p.pmr, p.validators, p.probability);
    }
    Ok(())
}

fn plot_data(cfg: &ExperimentConfig, args: &PlotArgs, out: &Path) -> Result<()> {
    let target = args.round.unwrap_or(cfg.rounds - 1);
    if target >= cfg.rounds {
        bail!("round {target} is past the configured {} rounds", cfg.rounds);
    }
    if !cfg.round.defense_enabled {
        bail!("plot-data needs the defense enabled");
    }
    let hash = cfg.hash();
    for &seed in &cfg.seeds {
        let data = prepare_data(cfg, seed)?;
        let mut global = initial_model(cfg, &data, seed)?;
        let round_cfg = RoundConfig { seed, ..cfg.round };
        let assignment = assign_attacks(&round_cfg, cfg.attacks.len());
        for round in 0..=target {
            let ctx = RoundContext {
                round,
                data: &data,
                attacks: &cfg.attacks,
                assignment: &assignment,
                training: &cfg.training,
                config: &round_cfg,
                defense: &cfg.defense,
            };
            let (next, report) = run_round(&global, &ctx)?;
            global = next;
            if round == target {
                let stem = format!("seed{seed}-round{round}");
                write_file(&out.join(format!("hlbim-{stem}.csv")), |w| write_hlbim_csv(w, &hash, &report))?;
                write_file(&out.join(format!("pca-{stem}.csv")), |w| write_pca_csv(w, &hash, &report))?;
                println!("seed {seed} round {round}: {} validator traces written", report.traces.len());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.common.parallelism).build()?;
    pool.install(|| match &cli.command {
        Command::Simulate => simulate(&cfg, out),
        Command::VotesAblation => votes_ablation(&cfg, out),
        Command::Hypergeom(args) => hypergeom(&cfg, args, out),
        Command::PlotData(args) => plot_data(&cfg, args, out),
    })
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
        eprintln!("{}", serde_json::json!({ "error": chain.join(": ") }));
        std::process::exit(1);
    }
}
