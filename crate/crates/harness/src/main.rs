use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use intrepid_core::oracle::{reference_sample, write_reference};
use intrepid_core::targets::make_target;
use intrepid_harness::campaign::{read_rows, run_campaign, write_outputs, CampaignError, RESULTS_CSV};
use intrepid_harness::config::{CampaignConfig, OUTPUT_DIR_ENV};
use intrepid_harness::summary::{summarize, write_summary};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_EXPECTATION: u8 = 4;

#[derive(Parser)]
#[command(name = "intrepid", version, about = "Run and summarise sampler benchmark campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a TOML config or an earlier manifest.json.
    Run { config: PathBuf },
    /// Draw IID reference samples for a target.
    Reference {
        target: String,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print quantile tables for a results CSV (or write them with --out).
    Summarize {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn campaign_code(e: &CampaignError) -> u8 {
    match e {
        CampaignError::Config(_) | CampaignError::Invalid(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run(config: PathBuf) -> ExitCode {
    let cfg = match CampaignConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let result = match run_campaign(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(campaign_code(&e), e),
    };
    let dir = cfg.resolved_output_dir();
    let manifest = match write_outputs(&cfg, &result, &dir) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    println!("{} chains written to {}", result.rows.len(), dir.join(RESULTS_CSV).display());
    println!("manifest: {}", manifest.display());
    for f in &result.failures {
        eprintln!("chain beta={} length={} id={} failed: {}", f.beta, f.length, f.chain_id, f.error);
    }
    let mut ok = true;
    for e in &result.expectations {
        let x = &e.expectation;
        println!(
            "{} {:?} q{} at beta={} = {} (min {:?}, max {:?})",
            if e.passed { "PASS" } else { "FAIL" },
            x.metric,
            x.quantile,
            x.beta,
            e.value,
            x.min,
            x.max
        );
        ok &= e.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_EXPECTATION)
    }
}

fn reference(target: String, n: usize, seed: u64, out: PathBuf) -> ExitCode {
    let t = match make_target(&target) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let set = match reference_sample(&t, n, seed) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    if let Err(e) = write_reference(&set, &out) {
        return fail(EXIT_RUNTIME, e);
    }
    println!("{} samples of {} (acceptance {:.3e}) written to {}", set.len(), target, set.acceptance_rate(), out.display());
    ExitCode::SUCCESS
}

fn summarize_cmd(csv: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let rows = match read_rows(&csv) {
        Ok(r) if !r.is_empty() => r,
        Ok(_) => return fail(EXIT_CONFIG, format!("{}: no rows", csv.display())),
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let table = summarize(&rows);
    match out {
        Some(path) => {
            if let Err(e) = write_summary(&table, &path) {
                return fail(EXIT_RUNTIME, e);
            }
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for r in &table {
                // a closed pipe (e.g. `| head`) is not an error
                if w.serialize(r).is_err() {
                    return ExitCode::SUCCESS;
                }
            }
            let _ = w.flush();
        }
    }
    ExitCode::SUCCESS
}

fn validate(config: PathBuf) -> ExitCode {
    match CampaignConfig::load(&config) {
        Ok(cfg) => {
            let jobs = cfg.betas.len() * cfg.lengths.len() * cfg.chains;
            println!("{}: ok ({} chains on {})", config.display(), jobs, cfg.target);
            if std::env::var_os(OUTPUT_DIR_ENV).is_some() {
                println!("output directory overridden to {}", cfg.resolved_output_dir().display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => run(config),
        Command::Reference { target, n, seed, out } => reference(target, n, seed, out),
        Command::Summarize { csv, out } => summarize_cmd(csv, out),
        Command::Validate { config } => validate(config),
    }
}
