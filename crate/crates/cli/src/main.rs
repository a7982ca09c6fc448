use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use cefac_core::sim::{
    gaussian5, random_scenario, recon20, run_validated, NodeRole, RandomScenarioParams, ScenarioConfig,
    SimulationResult,
};
use cefac_core::verify::{run_suite, Suite};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

const EXIT_CODES: &str = "\
Exit codes:
  0  success: the run converged, the file was written, or every check passed
  1  error: missing or invalid config, bad parameters, failed verification
  2  the round budget ran out before every normal node converged

Set CEFAC_LOG (error, warn, info, debug, trace) to control logging on stderr.";

#[derive(Parser)]
#[command(name = "cefac", version, about = "Credible evidence fusion simulator", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file and write the summary, round log and manifest.
    #[command(after_help = EXIT_CODES)]
    Run {
        config: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long, default_value = "cefac-out")]
        out: PathBuf,
        /// Also write per-round states as CSV (round, node, component, value).
        #[arg(long)]
        csv: bool,
        /// Overrides the round budget.
        #[arg(long)]
        max_rounds: Option<usize>,
    },
    /// Write a scenario file.
    #[command(after_help = EXIT_CODES)]
    Gen {
        kind: GenKind,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Node count (random only).
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        /// Frame size (random only).
        #[arg(long, default_value_t = 3)]
        events: usize,
        /// Edge density (random only).
        #[arg(long, default_value_t = 0.3)]
        density: f64,
    },
    /// Run property suites; prints a JSON report on stdout and one line per check on stderr.
    #[command(after_help = EXIT_CODES)]
    Verify {
        #[arg(default_value = "all", value_parser = parse_suite)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Gaussian5,
    Recon20,
    Random,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    config: String,
    config_sha256: String,
    seed: u64,
    max_rounds: usize,
    out: String,
    artifacts: Vec<Artifact>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8], list: &mut Vec<Artifact>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    list.push(Artifact {
        file: name.to_string(),
        bytes: bytes.len(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn round_log(result: &SimulationResult) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for snap in &result.snapshots {
        serde_json::to_writer(&mut buf, snap)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn round_csv(result: &SimulationResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "node", "component", "value"])?;
    for snap in &result.snapshots {
        for (node, state) in snap.states.iter().enumerate() {
            for (c, v) in state.iter().enumerate() {
                w.serialize((snap.round, node + 1, c, v))?;
            }
        }
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Per-node fusion table with the centralized reference as the last row.
fn print_table(result: &SimulationResult) {
    let labels = result.frame.labels();
    let mut header = format!("{:>6} {:<10}", "node", "role");
    for l in labels {
        header.push_str(&format!(" {l:>10}"));
    }
    header.push_str(&format!(" {:>10} {:>10}", "decision", "oracle gap"));
    println!("{header}");
    for n in &result.nodes {
        let role = match n.role {
            NodeRole::Normal => "normal",
            NodeRole::Dos => "dos",
            NodeRole::Deception => "deception",
        };
        let mut row = format!("{:>6} {:<10}", n.node.to_string(), role);
        match &n.fusion {
            Some(f) => {
                for p in &f.event_probs {
                    row.push_str(&format!(" {p:>10.6}"));
                }
                row.push_str(&format!(" {:>10}", labels[f.decision()]));
            }
            None => {
                for _ in labels {
                    row.push_str(&format!(" {:>10}", "-"));
                }
                row.push_str(&format!(" {:>10}", "-"));
            }
        }
        match n.oracle_gap {
            Some(g) => row.push_str(&format!(" {g:>10.2e}")),
            None => row.push_str(&format!(" {:>10}", "-")),
        }
        println!("{row}");
    }
    let mut row = format!("{:>6} {:<10}", "-", "centralized");
    for p in &result.oracle.fusion.event_probs {
        row.push_str(&format!(" {p:>10.6}"));
    }
    row.push_str(&format!(" {:>10}", labels[result.oracle.fusion.decision()]));
    println!("{row}");
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path, csv: bool, max_rounds: Option<usize>) -> Result<ExitCode> {
    let text = fs::read(config).with_context(|| format!("cannot read config {}", config.display()))?;
    let mut cfg = ScenarioConfig::from_json(std::str::from_utf8(&text).context("config is not UTF-8")?)
        .with_context(|| format!("cannot parse config {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = max_rounds {
        cfg.params.max_rounds = m;
    }
    let scenario = cfg
        .validate()
        .with_context(|| format!("invalid config {}", config.display()))?;
    let result = run_validated(&scenario)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut artifacts = Vec::new();
    let mut summary = serde_json::to_vec_pretty(&result)?;
    summary.push(b'\n');
    write_artifact(out, "summary.json", &summary, &mut artifacts)?;
    write_artifact(out, "rounds.ndjson", &round_log(&result)?, &mut artifacts)?;
    if csv {
        write_artifact(out, "rounds.csv", &round_csv(&result)?, &mut artifacts)?;
    }
    let manifest = RunManifest {
        config: config.display().to_string(),
        config_sha256: sha256_hex(&text),
        seed: cfg.seed,
        max_rounds: cfg.params.max_rounds,
        out: out.display().to_string(),
        artifacts,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(out.join("manifest.json"), bytes)?;
    info!("wrote artifacts to {}", out.display());

    print_table(&result);
    if result.converged {
        println!("converged in round {}", result.converged_round.unwrap_or(0));
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "error: {} rounds ran without every normal node converging",
            result.rounds
        );
        Ok(ExitCode::from(2))
    }
}

fn cmd_gen(
    kind: GenKind,
    out: Option<&Path>,
    seed: Option<u64>,
    nodes: usize,
    events: usize,
    density: f64,
) -> Result<ExitCode> {
    let cfg = match kind {
        GenKind::Gaussian5 => gaussian5(seed.unwrap_or(1)),
        GenKind::Recon20 => {
            let mut cfg = recon20();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg
        }
        GenKind::Random => random_scenario(RandomScenarioParams {
            n_nodes: nodes,
            n_events: events,
            density,
            seed: seed.unwrap_or(1),
        })?,
    };
    let mut text = cfg.to_json_pretty();
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: Suite) -> Result<ExitCode> {
    let report = run_suite(suite);
    for c in &report.checks {
        eprintln!("{}", c.line());
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CEFAC_LOG", "warn")).init();
    // clap exits with 2 on usage errors, which would collide with the
    // round-budget code; bad arguments are input errors like any other.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Run {
            config,
            seed,
            out,
            csv,
            max_rounds,
        } => cmd_run(config, *seed, out, *csv, *max_rounds),
        Command::Gen {
            kind,
            out,
            seed,
            nodes,
            events,
            density,
        } => cmd_gen(*kind, out.as_deref(), *seed, *nodes, *events, *density),
        Command::Verify { suite } => cmd_verify(*suite),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
