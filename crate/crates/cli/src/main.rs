//! `cfrules`: train forests, explain queries with counterfactual rules, sample
//! recourses and evaluate them.

mod commands;
mod config;
mod error;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "cfrules", version, about = "Counterfactual rules from random forest partitions")]
struct Cli {
    /// Key-value configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable, applied last).
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for per-instance work; results do not depend on it.
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    data: Option<String>,
    #[arg(long, global = true)]
    schema: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Directory holding trained models (defaults to the output directory).
    #[arg(long, global = true)]
    models: Option<String>,
    /// `test`, `train`, `all` or comma-separated dataset row ids.
    #[arg(long, global = true)]
    instances: Option<String>,
    #[arg(long, global = true)]
    limit: Option<usize>,
    /// Class name, or `lo,hi` for regression.
    #[arg(long, global = true)]
    target: Option<String>,
    /// JSON file mapping feature names to `[lo, hi]`.
    #[arg(long, global = true)]
    region: Option<String>,
    #[arg(long, global = true)]
    rules: Option<String>,
    #[arg(long, global = true)]
    recourses: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    pi: Option<f64>,
    #[arg(long = "pi-c", global = true)]
    pi_c: Option<f64>,
    /// Build the rule on the best-scoring set when no set reaches `pi`.
    #[arg(long, global = true)]
    fallback: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train the query forest, the explainer forest and the isolation forest.
    Train,
    /// Local rules for the selected instances.
    ExplainLocal,
    /// A regional rule for the region file.
    ExplainRegional,
    /// Sample one recourse per local rule.
    Sample,
    /// Accuracy, plausibility, sparsity and cost of sampled recourses.
    Evaluate,
    /// Stability of sampled recourses under noisy actions.
    Stability,
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_owned(), v));
            }
        };
        push("data", self.data.clone());
        push("schema", self.schema.clone());
        push("out", self.out.clone());
        push("models", self.models.clone());
        push("instances", self.instances.clone());
        push("limit", self.limit.map(|v| v.to_string()));
        push("target", self.target.clone());
        push("region", self.region.clone());
        push("rules", self.rules.clone());
        push("recourses", self.recourses.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("pi", self.pi.map(|v| v.to_string()));
        push("pi_c", self.pi_c.map(|v| v.to_string()));
        push("fallback", self.fallback.then(|| "true".to_owned()));
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
            out.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        Ok(out)
    }
}

fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides()?)?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::ExplainLocal => commands::explain_local(&cfg),
        Command::ExplainRegional => commands::explain_regional(&cfg),
        Command::Sample => commands::sample(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Stability => commands::stability_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
