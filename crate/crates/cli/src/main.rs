use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use friendrisk::network::write_labels;
use friendrisk::network::write_network;
use friendrisk::persist;
use friendrisk::pipeline::{self, GridConfig, Manifest, PipelineConfig, Stage};
use friendrisk::synth::{generate, SynthConfig};

/// Friend risk labels learned from stranger risk labels.
///
/// The log level is read from `FRIENDRISK_LOG` (default `info`).
#[derive(Parser)]
#[command(name = "friendrisk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a network and label file and print summary counts.
    Ingest {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Write the friend and stranger frequency matrices.
    Transform(RunArgs),
    /// Cluster friends and strangers.
    Cluster(RunArgs),
    /// Fit the baseline model and label every stranger.
    Baseline(RunArgs),
    /// Learn friend-cluster impacts.
    Impact(RunArgs),
    /// Assign friend risk labels.
    Label(RunArgs),
    /// Run the evaluation stage (cross-validation, grid, assumption check).
    Evaluate(RunArgs),
    /// Run every stage.
    Pipeline(RunArgs),
    /// Generate a synthetic dataset with planted truth.
    Synth {
        /// TOML generator settings; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threshold_x: Option<f64>,
    #[arg(long)]
    threshold_y: Option<f64>,
    #[arg(long)]
    holdout: Option<f64>,
    /// Cluster-count grid, e.g. `--grid friend_ks=2..9 stranger_ks=8,26`.
    #[arg(long, num_args = 1..)]
    grid: Option<Vec<String>>,
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.paths.output = o.clone();
        }
        if let Some(x) = self.threshold_x {
            cfg.risklabel.x = x;
        }
        if let Some(y) = self.threshold_y {
            cfg.risklabel.y = y;
        }
        if let Some(h) = self.holdout {
            cfg.eval.holdout = h;
        }
        if let Some(g) = &self.grid {
            cfg.eval.grid = Some(GridConfig::parse(g)?);
        }
        Ok(cfg)
    }
}

fn print_manifest(m: &Manifest, dir: &Path) {
    println!("wrote {} artifacts to {}", m.artifacts.len(), dir.display());
    for a in &m.artifacts {
        println!("  {:<20} {:>9} B  sha256 {}", a.name, a.bytes, a.sha256);
    }
}

fn print_stage_output(stage: Stage, dir: &Path) -> Result<()> {
    match stage {
        Stage::Label | Stage::Evaluate => {
            let report = friendrisk::risklabel::FriendRiskReport::load_json(File::open(dir.join(pipeline::FRIEND_RISK))?)?;
            println!("\n{:>14} {:>8} {:>8} {:>13}  label", "friend cluster", "Im+", "Im-", "significant");
            for c in &report.clusters {
                let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{:.1}%", 100.0 * v));
                let label = c.label.map_or("undetermined", |l| l.name());
                println!("{:>14} {:>8} {:>8} {:>13}  {label}", c.cluster.to_string(), pct(c.im_plus), pct(c.im_minus), c.n_significant);
            }
        }
        _ => {}
    }
    if stage == Stage::Evaluate {
        let text = fs::read_to_string(dir.join(pipeline::EVALUATION))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let cv = &v["payload"]["cross_validation"];
        println!(
            "\ncross-validation: rmse {}  validation points {}",
            short(&cv["rmse"]),
            cv["validation_points"]
        );
        if let Some(grid) = v["payload"]["grid"].as_array().filter(|g| !g.is_empty()) {
            println!("\n{:>9} {:>11} {:>10} {:>12} {:>17} {:>10}", "friend k", "stranger k", "R²", "median size", "validation points", "RMSE");
            for r in grid {
                println!(
                    "{:>9} {:>11} {:>10} {:>12} {:>17} {:>10}",
                    r["friend_k"], r["stranger_k"], short(&r["mean_adjusted_r2"]), short(&r["median_cluster_size"]), r["validation_points"], short(&r["rmse"])
                );
            }
        }
    }
    Ok(())
}

fn short(v: &serde_json::Value) -> String {
    v.as_f64().map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn run_stage(args: &RunArgs, stage: Stage) -> Result<()> {
    let cfg = args.config()?;
    let dir = cfg.paths.output.clone();
    match pipeline::run_until(&cfg, stage) {
        Ok(m) => {
            print_manifest(&m, &dir);
            print_stage_output(stage, &dir)
        }
        Err(e) => {
            if let Ok(m) = Manifest::load(dir.join(pipeline::MANIFEST)) {
                eprintln!("partial manifest: {} artifacts written", m.artifacts.len());
            }
            Err(e.into())
        }
    }
}

fn synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: SynthConfig = match config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let s = generate(&cfg)?;
    fs::create_dir_all(out)?;
    write_network(s.net(), BufWriter::new(File::create(out.join("network.json"))?))?;
    write_labels(s.records(), BufWriter::new(File::create(out.join("labels.csv"))?))?;
    s.labels.write_values_csv(BufWriter::new(File::create(out.join("label_values.csv"))?))?;
    s.truth.save_json(BufWriter::new(File::create(out.join("truth.json"))?))?;
    println!(
        "{} nodes, {} labels ({} clamped), truth {}×{} impacts, {} {} in {}",
        s.net().node_count(),
        s.records().len(),
        s.labels.clamped,
        s.truth.friend_k(),
        s.truth.stranger_k(),
        persist::TOOL,
        persist::VERSION,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { network, labels } => {
            let report = pipeline::ingest(&network, &labels)?;
            print!("{report}");
            if !report.is_ok() {
                bail!("{} validation errors", report.issues.len());
            }
            Ok(())
        }
        Command::Transform(a) => run_stage(&a, Stage::Transform),
        Command::Cluster(a) => run_stage(&a, Stage::Cluster),
        Command::Baseline(a) => run_stage(&a, Stage::Baseline),
        Command::Impact(a) => run_stage(&a, Stage::Impact),
        Command::Label(a) => run_stage(&a, Stage::Label),
        Command::Evaluate(a) => run_stage(&a, Stage::Evaluate),
        Command::Pipeline(a) => run_stage(&a, Stage::Evaluate),
        Command::Synth { config, out, seed } => synth(config.as_deref(), &out, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FRIENDRISK_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
