use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spme::config::{parse_config, RunConfig, SchemeChoice};
use spme::ensemble::{run_ensemble, run_single, RunManifest};
use spme::error::{Error, Result};
use spme::report::report;

#[derive(Parser)]
#[command(name = "spme", version, about = "Stochastic porous-media simulator and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a single path.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<SchemeChoice>,
    },
    /// Run independent paths and write a manifest.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<SchemeChoice>,
    },
    /// Summarize a finished ensemble.
    Report {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Validate a config file.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_scheme(s: &str) -> std::result::Result<SchemeChoice, String> {
    match s {
        "direct" => Ok(SchemeChoice::Direct),
        "transformed" => Ok(SchemeChoice::Transformed),
        "both" => Ok(SchemeChoice::Both),
        other => Err(format!("unknown scheme {other:?} (direct, transformed, both)")),
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

fn apply(
    mut cfg: RunConfig,
    seed: Option<u64>,
    paths: Option<usize>,
    out: Option<PathBuf>,
    scheme: Option<SchemeChoice>,
) -> Result<(RunConfig, PathBuf)> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = paths {
        cfg.paths = p;
    }
    if let Some(s) = scheme {
        cfg.scheme = s;
    }
    if let Some(o) = &out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.out_dir);
    Ok((cfg, dir))
}

fn finish(manifest: &RunManifest, dir: &Path) -> Result<ExitCode> {
    println!(
        "{} path(s), {} failed, manifest {}",
        manifest.paths,
        manifest.failed(),
        dir.join(spme::ensemble::MANIFEST_FILE).display()
    );
    for e in manifest.entries.iter().filter(|e| e.failure.is_some()) {
        eprintln!("path {} ({}): {}", e.index, e.scheme, e.failure.as_deref().unwrap_or(""));
    }
    Ok(if manifest.failed() > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            scheme,
        } => {
            let (cfg, dir) = apply(load(&config)?, seed, Some(1), out, scheme)?;
            let manifest = run_single(&cfg, &dir)?;
            finish(&manifest, &dir)
        }
        Command::Ensemble {
            config,
            paths,
            seed,
            out,
            scheme,
        } => {
            let (cfg, dir) = apply(load(&config)?, seed, paths, out, scheme)?;
            let manifest = run_ensemble(&cfg, &dir)?;
            finish(&manifest, &dir)
        }
        Command::Report { manifest } => {
            let summary = report(&manifest)?;
            let dir = manifest.parent().unwrap_or(Path::new("."));
            fs::write(dir.join("summary.jsonl"), summary.to_jsonl()?)?;
            print!("{summary}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            println!("ok {}", cfg.hash());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                Error::Config(issues) => {
                    for issue in issues {
                        eprintln!("error: {issue}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
