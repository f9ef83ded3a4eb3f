use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicecarbon::scenario::{run_scenario, validate_config, ScenarioConfig, ScenarioError, Stage};

/// DICE-2016 annual model with cost-implied CO2 prices and the implied
/// interest rate of carbon.
///
/// Any config key can be overridden with `--section.key value`, for example
/// `--optimizer.tolerance 1e-4` or `--model.numeraire_rate 0.02`.
#[derive(Parser, Debug)]
#[command(name = "dicecarbon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate or load a policy, then write every price and rate report.
    Run(Options),
    /// Calibrate the abatement policy and write policy.csv only.
    Calibrate(Options),
    /// Check the configuration and list every violation.
    Validate(Options),
}

#[derive(Args, Debug)]
struct Options {
    /// Scenario config file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Horizons for the par-price sweep, comma separated (years).
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    /// Skip the r_SCC curve.
    #[arg(long)]
    skip_rates: bool,
    /// Skip the price reports.
    #[arg(long)]
    skip_prices: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Splits `--a.b value` and `--a.b=value` pairs off the argument list.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), String> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--").filter(|k| k.contains('.')) else {
            rest.push(arg);
            continue;
        };
        if let Some((k, v)) = key.split_once('=') {
            overrides.push((k.to_string(), v.to_string()));
        } else {
            let value = it.next().ok_or_else(|| format!("--{key} needs a value"))?;
            overrides.push((key.to_string(), value));
        }
    }
    Ok((rest, overrides))
}

fn load(options: &Options, mut overrides: Vec<(String, String)>) -> Result<ScenarioConfig, ScenarioError> {
    if let Some(h) = &options.horizons {
        let list: Vec<String> = h.iter().map(|v| format!("{v:?}")).collect();
        overrides.push(("analytics.horizons".into(), format!("[{}]", list.join(", "))));
    }
    if options.skip_rates {
        overrides.push(("analytics.rates".into(), "false".into()));
    }
    if options.skip_prices {
        overrides.push(("analytics.prices".into(), "false".into()));
    }
    let mut config = ScenarioConfig::load(options.config.as_deref(), &overrides)?;
    if let Some(dir) = &options.output_dir {
        config.output_dir = Some(dir.clone());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let (options, stage) = match &cli.command {
        Command::Run(o) => (o, Some(Stage::Full)),
        Command::Calibrate(o) => (o, Some(Stage::CalibrateOnly)),
        Command::Validate(o) => (o, None),
    };
    let config = match load(options, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let Some(stage) = stage else {
        let violations = validate_config(&config);
        if violations.is_empty() {
            println!("configuration is valid");
            return ExitCode::SUCCESS;
        }
        for v in &violations {
            println!("{v}");
        }
        return ExitCode::from(2);
    };
    match run_scenario(&config, stage) {
        Ok(outcome) => {
            let summary = outcome.output_dir.join("summary.txt");
            if let Ok(text) = std::fs::read_to_string(&summary) {
                print!("{text}");
            }
            println!("reports written to {}", outcome.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
