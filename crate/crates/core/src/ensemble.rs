//! Ensemble orchestration: independent paths, one CSV per path and scheme, and
//! a JSON manifest tying every file to the config and seed that produced it.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, RunConfig};
use crate::error::{Error, Result};
use crate::noise::derive_path_seed;
use crate::observables::{CompactSummary, Trajectory};
use crate::solver::{Scheme, Simulation};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Environment variable holding the worker count (defaults to all cores).
pub const WORKERS_ENV: &str = "SPME_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub index: usize,
    pub seed: u64,
    pub scheme: String,
    pub status: PathStatus,
    /// File name relative to the manifest directory; absent for failed paths.
    pub file: Option<String>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub config: String,
    pub master_seed: u64,
    pub paths: usize,
    pub wall_clock_seconds: f64,
    pub compacts: Vec<CompactSummary>,
    pub entries: Vec<PathEntry>,
}

impl RunManifest {
    pub fn failed(&self) -> usize {
        self.entries.iter().filter(|e| e.status == PathStatus::Failed).count()
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        parse_config(&self.config)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let file = fs::File::create(&path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Test hooks for fault injection.
#[derive(Debug, Clone, Default)]
pub struct EnsembleHooks {
    /// Replaces one value of the initial datum with NaN for this path index.
    pub poison_path: Option<usize>,
}

pub fn trajectory_file_name(index: usize, scheme: Scheme) -> String {
    format!("path_{index:04}_{}.csv", scheme.as_str())
}

fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `config.paths` paths seeded from `config.seed` into `out_dir`.
pub fn run_ensemble(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    run_ensemble_with_hooks(config, out_dir, &EnsembleHooks::default())
}

pub fn run_ensemble_with_hooks(config: &RunConfig, out_dir: &Path, hooks: &EnsembleHooks) -> Result<RunManifest> {
    let seeds = (0..config.paths).map(|i| derive_path_seed(config.seed, i)).collect();
    execute(config, out_dir, seeds, hooks)
}

/// Runs a single path whose Brownian motion is keyed directly by `seed`.
pub fn run_single(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    execute(config, out_dir, vec![config.seed], &EnsembleHooks::default())
}

fn execute(config: &RunConfig, out_dir: &Path, seeds: Vec<u64>, hooks: &EnsembleHooks) -> Result<RunManifest> {
    let start = Instant::now();
    let sim = Simulation::new(config)?;
    if seeds.is_empty() {
        return Err(Error::Precondition("ensemble needs at least one path".into()));
    }
    fs::create_dir_all(out_dir)?;
    let schemes = config.scheme.schemes();

    let work = |(index, seed): (usize, u64)| -> Result<Vec<PathEntry>> {
        let mut x0 = sim.x0.clone();
        if hooks.poison_path == Some(index) {
            let mid = x0.len() / 2;
            x0[mid] = f64::NAN;
        }
        let path = sim.brownian(seed)?;
        let mut entries = Vec::with_capacity(schemes.len());
        for &scheme in &schemes {
            let stride = config.record_stride.max(1);
            let entry = match sim.run_with(scheme, &path, config.n_steps(), stride, x0.clone()) {
                Ok(traj) => {
                    let name = trajectory_file_name(index, scheme);
                    write_trajectory(&traj, &out_dir.join(&name))?;
                    PathEntry {
                        index,
                        seed,
                        scheme: scheme.as_str().into(),
                        status: PathStatus::Ok,
                        file: Some(name),
                        failure: None,
                    }
                }
                Err(e) => PathEntry {
                    index,
                    seed,
                    scheme: scheme.as_str().into(),
                    status: PathStatus::Failed,
                    file: None,
                    failure: Some(e.to_string()),
                },
            };
            entries.push(entry);
        }
        Ok(entries)
    };

    let jobs: Vec<(usize, u64)> = seeds.into_iter().enumerate().collect();
    let results: Vec<Result<Vec<PathEntry>>> = match worker_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Precondition(format!("cannot start {n} workers: {e}")))?
            .install(|| jobs.par_iter().copied().map(work).collect()),
        None => jobs.par_iter().copied().map(work).collect(),
    };
    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        config: config.to_toml(),
        master_seed: config.seed,
        paths: jobs.len(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        compacts: sim.compacts.iter().map(|c| c.summary()).collect(),
        entries,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    traj.write_csv(BufWriter::new(file))
}

/// Loads the trajectories of successful entries for `scheme`, in path order.
pub fn load_trajectories(manifest: &RunManifest, dir: &Path, scheme: &str) -> Result<Vec<(u64, Trajectory)>> {
    manifest
        .entries
        .iter()
        .filter(|e| e.scheme == scheme && e.status == PathStatus::Ok)
        .map(|e| {
            let name = e
                .file
                .as_ref()
                .ok_or_else(|| Error::Report(format!("path {} has no trajectory file", e.index)))?;
            let file = fs::File::open(dir.join(name))?;
            Ok((e.seed, Trajectory::read_csv(file)?))
        })
        .collect()
}
