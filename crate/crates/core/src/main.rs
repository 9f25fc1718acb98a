use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ttdrl::harness::{self, load_summary, ExperimentConfig, SchemeId, SweepConfig, UTILITY_WEIGHTS};
use ttdrl::tabular::{run_suite, SuiteConfig};
use ttdrl::{Error, Result};

#[derive(Parser)]
#[command(name = "ttdrl", version, about = "LEO beam management and RB allocation experiments")]
struct Cli {
    /// Root directory for all outputs.
    #[arg(long, env = "TTDRL_OUTPUT_ROOT", default_value = "output", global = true)]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one (scheme, seed) cell.
    Run(RunArgs),
    /// Simulate a scheme × seed grid and aggregate it.
    Sweep(SweepArgs),
    /// Run the tabular theory suite.
    Verify(VerifyArgs),
    /// Score summaries in a directory with the utility weight combinations.
    Utility(UtilityArgs),
}

#[derive(Args)]
struct BaseArgs {
    /// TOML experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the reduced desk setup instead of full scale.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    n_bar: Option<usize>,
}

impl BaseArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None if self.desk => ExperimentConfig::desk(),
            None => ExperimentConfig::default(),
        };
        if self.config.is_some() && self.desk {
            cfg.env = ExperimentConfig::desk().env;
        }
        if let Some(slots) = self.slots {
            cfg.slots = slots;
        }
        if let Some(n_bar) = self.n_bar {
            cfg.drl.n_bar = n_bar;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: BaseArgs,
    #[arg(long)]
    scheme: Option<SchemeId>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subdirectory of the output root.
    #[arg(long, default_value = "run")]
    name: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: BaseArgs,
    /// Comma-separated schemes; all nine by default.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<SchemeId>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Extra rollout depths for the proposed scheme.
    #[arg(long, value_delimiter = ',')]
    extra_n_bar: Vec<usize>,
    #[arg(long, default_value = "sweep")]
    name: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    #[arg(long, default_value = "verify")]
    name: String,
}

#[derive(Args)]
struct UtilityArgs {
    /// Directory of cell summaries, relative to the output root.
    #[arg(long, default_value = "sweep")]
    name: String,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).map_err(|e| Error::io(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6e}"))
}

fn print_utility(table: &harness::UtilityTable) {
    print!("{:<28}", "weights");
    for s in &table.schemes {
        print!(" {s:>20}");
    }
    println!();
    for (w, row) in table.weights.iter().zip(&table.scores) {
        print!("{:<28}", format!("[{:.3},{:.3},{:.3}]", w[0], w[1], w[2]));
        for v in row {
            print!(" {v:>20.4}");
        }
        println!();
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = args.base.load()?;
            if let Some(s) = args.scheme {
                cfg.scheme = s;
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            let dir = cli.output_root.join(&args.name);
            let (result, files) = harness::run_experiment(&cfg, &dir)?;
            let s = &result.summary;
            println!(
                "{} seed {}: {} slots in {:.1}s, final MA reward {}, final MA throughput {}",
                s.scheme,
                s.seed,
                s.slots,
                result.wall_seconds,
                opt(s.final_ma_reward),
                opt(s.final_ma_throughput)
            );
            println!("wrote {}", files.summary.display());
            Ok(true)
        }
        Command::Sweep(args) => {
            let base = args.base.load()?;
            let sweep = SweepConfig {
                base,
                schemes: if args.schemes.is_empty() {
                    SchemeId::ALL.to_vec()
                } else {
                    args.schemes
                },
                seeds: args.seeds,
                extra_n_bar: args.extra_n_bar,
            };
            let dir = cli.output_root.join(&args.name);
            let agg = harness::run_sweep(&sweep, &dir, |s, wall| {
                println!(
                    "{:<18} n̄={} seed {}: reward {} throughput {} ({wall:.1}s)",
                    s.scheme.name(),
                    s.n_bar,
                    s.seed,
                    opt(s.final_ma_reward),
                    opt(s.final_ma_throughput)
                );
            })?;
            print_utility(&agg.utility);
            println!("wrote {}", dir.join("aggregate.json").display());
            Ok(true)
        }
        Command::Verify(args) => {
            let mut cfg = SuiteConfig {
                seeds: args.seeds,
                ..SuiteConfig::default()
            };
            cfg.iterate.steps = args.steps;
            let report = run_suite(&cfg)?;
            let c = &report.convergence;
            println!(
                "convergence: {}/{} seeds under both bounds, {} with settled policies, martingale {}",
                c.passing_seeds,
                c.seeds.len(),
                c.passing_with_policy_match,
                if c.martingale.pass() { "ok" } else { "FAIL" }
            );
            println!("coupled improvement bound: {} violations", report.lemma1_violations);
            for (i, p) in report.prop1.iter().enumerate() {
                println!(
                    "sequential update instance {i}: monotone {} (worst {:.3e}), gap {:.3e}/{:.3e}",
                    p.monotone, p.worst_decrease, p.final_gap_high, p.final_gap_low
                );
            }
            let path = cli.output_root.join(&args.name).join("verify.json");
            write_json(&path, &report)?;
            println!("wrote {}", path.display());
            Ok(report.pass())
        }
        Command::Utility(args) => {
            let dir = cli.output_root.join(&args.name);
            let mut summaries = Vec::new();
            let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
            paths.sort();
            for p in paths {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.ends_with(".json") && !name.ends_with(".timing.json") && name != "aggregate.json" && name != "utility.json" {
                    summaries.push(load_summary(&p)?);
                }
            }
            if summaries.is_empty() {
                return Err(Error::InvalidArgument(format!("no summaries in {}", dir.display())));
            }
            let agg = harness::aggregate(&summaries)?;
            let table = harness::utility_table(&agg.schemes, &UTILITY_WEIGHTS)?;
            print_utility(&table);
            write_json(&dir.join("utility.json"), &table)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
