//! Ensemble summaries computed purely from the manifest and trajectory files.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{load_trajectories, RunManifest};
use crate::error::{Error, Result};
use crate::observables::{extinction_time, fit_decay_rate, integrated_noncritical_until, Trajectory};

/// Relative slack allowed when checking `mass_K ≤ bound_rhs`.
pub const BOUND_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&v, p);
        Some(Quantiles {
            min: v[0],
            q05: q(0.05),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            q95: q(0.95),
            max: v[v.len() - 1],
        })
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    Quantiles::of(values).map(|q| q.median)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactReport {
    pub index: usize,
    pub inset_k: f64,
    pub inset_k_prime: f64,
    pub c_k: f64,
    /// Paths on which the decay-rate fit had enough positive data.
    pub fitted_paths: usize,
    pub median_rho: Option<f64>,
    /// `median_rho / (C_K/2)`; absent when `C_K = 0` or no fit succeeded.
    pub rho_ratio: Option<f64>,
    pub records_checked: usize,
    pub violations: usize,
    pub max_bound_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: String,
    pub paths_ok: usize,
    pub paths_failed: usize,
    pub t_end: f64,
    pub z0: f64,
    pub z_end: Quantiles,
    /// Median `Z(t_end)`, the finite-horizon proxy for the limit mass.
    pub ell_estimate: f64,
    pub extinction_fraction: f64,
    pub median_extinction_time: Option<f64>,
    pub median_integrated_noncritical: f64,
    /// Median over paths of `I(t_end)/I(t_end/2) − 1`, `I` the integrated noncritical measure.
    pub median_saturation: f64,
    /// Median `m_noncrit(t_end) / m(O)`.
    pub median_noncritical_fraction: f64,
    /// Minimum of `min X` over paths and records, relative to `‖x‖_∞`.
    pub min_x_relative: f64,
    pub max_clamped_mass: f64,
    /// Maximum over paths and records of `|Y(t)|₂ / |x|₂`.
    pub max_l2y_ratio: f64,
    /// Record times where the ensemble mean of `Z` rises by more than two
    /// standard errors of the paired increment.
    pub mean_z_increases: usize,
    pub compacts: Vec<CompactReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub schemes: Vec<SchemeReport>,
}

impl Summary {
    /// One JSON object per scheme.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.schemes {
            let mut v = serde_json::to_value(s)?;
            v["config_hash"] = serde_json::Value::String(self.config_hash.clone());
            out.push_str(&serde_json::to_string(&v)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Loads `manifest_path` and its trajectories and summarizes every scheme present.
pub fn report(manifest_path: &Path) -> Result<Summary> {
    let manifest = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    report_manifest(&manifest, dir)
}

pub fn report_manifest(manifest: &RunManifest, dir: &Path) -> Result<Summary> {
    if manifest.entries.is_empty() {
        return Err(Error::Report("manifest lists no paths".into()));
    }
    if manifest.failed() == manifest.entries.len() {
        return Err(Error::Report("every path in the manifest failed".into()));
    }
    let config = manifest.run_config()?;
    let grid = config.grid()?;
    let x0 = config.initial_datum(&grid)?;
    let x_inf = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut scheme_names: Vec<&str> = Vec::new();
    for e in &manifest.entries {
        if !scheme_names.contains(&e.scheme.as_str()) {
            scheme_names.push(&e.scheme);
        }
    }
    let mut schemes = Vec::new();
    for name in scheme_names {
        let failed = manifest
            .entries
            .iter()
            .filter(|e| e.scheme == name && e.status == crate::ensemble::PathStatus::Failed)
            .count();
        let trajs: Vec<Trajectory> = load_trajectories(manifest, dir, name)?.into_iter().map(|(_, t)| t).collect();
        if trajs.is_empty() {
            continue;
        }
        let ctx = Context {
            delta: config.extinction_delta,
            window: config.fit_window(),
            domain_measure: grid.domain_measure(),
            x_inf,
        };
        let mut r = summarize(name, &trajs, &ctx, manifest)?;
        r.paths_failed = failed;
        schemes.push(r);
    }
    Ok(Summary {
        config_hash: manifest.config_hash.clone(),
        schemes,
    })
}

struct Context {
    delta: f64,
    window: (f64, f64),
    domain_measure: f64,
    x_inf: f64,
}

fn summarize(name: &str, trajs: &[Trajectory], ctx: &Context, manifest: &RunManifest) -> Result<SchemeReport> {
    let n_records = trajs[0].records.len();
    if trajs.iter().any(|t| t.records.len() != n_records || t.records.is_empty()) {
        return Err(Error::Report("trajectories have different record counts".into()));
    }
    let first = |t: &Trajectory| t.records[0].clone();
    let last = |t: &Trajectory| t.records[n_records - 1].clone();
    let t_end = last(&trajs[0]).t;

    let z_end: Vec<f64> = trajs.iter().map(|t| last(t).z).collect();
    let z0s: Vec<f64> = trajs.iter().map(|t| first(t).z).collect();
    let z_end_q = Quantiles::of(&z_end).expect("non-empty");

    let mut extinct = Vec::new();
    for t in trajs {
        if let Some(te) = extinction_time(t, ctx.delta)? {
            extinct.push(te);
        }
    }

    let integrals: Vec<f64> = trajs.iter().map(|t| integrated_noncritical_until(t, t_end)).collect();
    let saturation: Vec<f64> = trajs
        .iter()
        .zip(&integrals)
        .map(|(t, &full)| {
            let half = integrated_noncritical_until(t, 0.5 * t_end);
            if half > 0.0 {
                full / half - 1.0
            } else {
                0.0
            }
        })
        .collect();
    let noncrit: Vec<f64> = trajs.iter().map(|t| last(t).m_noncrit / ctx.domain_measure).collect();

    let mut min_x = f64::INFINITY;
    let mut max_clamped: f64 = 0.0;
    let mut max_l2y: f64 = 0.0;
    for t in trajs {
        let x_l2 = first(t).l2;
        for r in &t.records {
            min_x = min_x.min(r.min_x);
            max_clamped = max_clamped.max(r.clamped_mass);
            if x_l2 > 0.0 {
                max_l2y = max_l2y.max(r.l2_y / x_l2);
            }
        }
    }
    let min_x_relative = if ctx.x_inf > 0.0 { min_x / ctx.x_inf } else { min_x };

    let mut mean_z_increases = 0;
    let n = trajs.len() as f64;
    let z_scale = median(&z0s).unwrap_or(0.0).abs();
    for j in 1..n_records {
        let d: Vec<f64> = trajs.iter().map(|t| t.records[j].z - t.records[j - 1].z).collect();
        let mean = d.iter().sum::<f64>() / n;
        let var = if trajs.len() > 1 {
            d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se = (var / n).sqrt();
        if mean > 2.0 * se + 1e-14 * z_scale {
            mean_z_increases += 1;
        }
    }

    let mut compacts = Vec::new();
    for (ci, spec) in manifest.compacts.iter().enumerate() {
        let rhos: Vec<f64> = trajs.iter().filter_map(|t| fit_decay_rate(t, ci, ctx.window).ok()).collect();
        let median_rho = median(&rhos);
        let half_c = 0.5 * spec.c_k;
        let mut checked = 0;
        let mut violations = 0;
        let mut max_ratio: f64 = 0.0;
        for t in trajs {
            for r in &t.records {
                checked += 1;
                if r.mass_k[ci] > r.bound_rhs[ci] * (1.0 + BOUND_SLACK) {
                    violations += 1;
                }
                if r.bound_rhs[ci] > 0.0 {
                    max_ratio = max_ratio.max(r.mass_k[ci] / r.bound_rhs[ci]);
                }
            }
        }
        compacts.push(CompactReport {
            index: ci,
            inset_k: spec.inset_k,
            inset_k_prime: spec.inset_k_prime,
            c_k: spec.c_k,
            fitted_paths: rhos.len(),
            median_rho,
            rho_ratio: median_rho.filter(|_| half_c > 0.0).map(|r| r / half_c),
            records_checked: checked,
            violations,
            max_bound_ratio: max_ratio,
        });
    }

    Ok(SchemeReport {
        scheme: name.into(),
        paths_ok: trajs.len(),
        paths_failed: 0,
        t_end,
        z0: median(&z0s).expect("non-empty"),
        z_end: z_end_q,
        ell_estimate: z_end_q.median,
        extinction_fraction: extinct.len() as f64 / n,
        median_extinction_time: median(&extinct),
        median_integrated_noncritical: median(&integrals).expect("non-empty"),
        median_saturation: median(&saturation).expect("non-empty"),
        median_noncritical_fraction: median(&noncrit).expect("non-empty"),
        min_x_relative,
        max_clamped_mass: max_clamped,
        max_l2y_ratio: max_l2y,
        mean_z_increases,
        compacts,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "config {}", self.config_hash)?;
        for s in &self.schemes {
            writeln!(f, "[{}] paths ok {} failed {}  t_end {}", s.scheme, s.paths_ok, s.paths_failed, s.t_end)?;
            let q = &s.z_end;
            writeln!(f, "  Z(0)              {:.4e}", s.z0)?;
            writeln!(
                f,
                "  Z(t_end) q05/q25/q50/q75/q95  {:.3e} {:.3e} {:.3e} {:.3e} {:.3e}",
                q.q05, q.q25, q.median, q.q75, q.q95
            )?;
            writeln!(f, "  extinction frac   {:.3}  median time {}", s.extinction_fraction, opt(s.median_extinction_time))?;
            writeln!(
                f,
                "  noncritical       integral {:.4e}  saturation {:.3e}  end fraction {:.3e}",
                s.median_integrated_noncritical, s.median_saturation, s.median_noncritical_fraction
            )?;
            writeln!(
                f,
                "  min X / |x|inf    {:.3e}  clamped mass {:.3e}  max |Y|/|x| {:.6}",
                s.min_x_relative, s.max_clamped_mass, s.max_l2y_ratio
            )?;
            writeln!(f, "  mean Z increases  {}", s.mean_z_increases)?;
            for c in &s.compacts {
                writeln!(
                    f,
                    "  K{} ({}, {})  C_K {:.4e}  rho {} ({} fits)  rho/(C_K/2) {}  violations {}/{}  max mass/bound {:.4}",
                    c.index,
                    c.inset_k,
                    c.inset_k_prime,
                    c.c_k,
                    opt(c.median_rho),
                    c.fitted_paths,
                    opt(c.rho_ratio),
                    c.violations,
                    c.records_checked,
                    c.max_bound_ratio
                )?;
            }
        }
        Ok(())
    }
}
