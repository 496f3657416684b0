//! Path observables: mass, critical-region measure, localized masses and the
//! pathwise exponential bound over compacts, plus post-processing of
//! recorded trajectories (extinction detection, decay-rate fits, integrated
//! non-critical measure) and the per-trajectory CSV format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::noise::NoiseModel;

/// `∫_O X dξ`.
pub fn mass(field: &[f64], grid: &Grid) -> f64 {
    grid.cell_volume() * field.iter().sum::<f64>()
}

/// `∫_K X dξ` for the index set `region`.
pub fn mass_over(field: &[f64], grid: &Grid, region: &[usize]) -> f64 {
    grid.cell_volume() * region.iter().map(|&i| field[i]).sum::<f64>()
}

/// Measure of `{|X| > δ}`, the numerical stand-in for `m(O ∖ O_t⁰)`.
pub fn critical_measure(field: &[f64], grid: &Grid, delta_crit: f64) -> Result<f64> {
    if !(delta_crit > 0.0) {
        return Err(Error::Precondition(format!(
            "delta_crit must be positive, got {delta_crit}"
        )));
    }
    let count = field.iter().filter(|v| v.abs() > delta_crit).count();
    Ok(grid.cell_volume() * count as f64)
}

/// Compact `K` with neighbourhood `K′`, both inset index boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSpec {
    pub k: Vec<usize>,
    pub k_prime: Vec<usize>,
    /// `inf_{K′} ṽμ`.
    pub c_k: f64,
    /// `sup_K ṽμ^{1/2}`.
    pub sup_root_mu: f64,
    /// `m(K)` from the cell count.
    pub measure_k: f64,
    pub inset_k: f64,
    pub inset_k_prime: f64,
}

/// Serializable description of a [`CompactSpec`] (no index lists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSummary {
    pub inset_k: f64,
    pub inset_k_prime: f64,
    pub points_k: usize,
    pub points_k_prime: usize,
    pub measure_k: f64,
    pub c_k: f64,
    pub sup_root_mu: f64,
}

impl CompactSpec {
    /// `K = inset_box(inset_k)`, `K′ = inset_box(inset_k_prime)`.
    ///
    /// A zero inset selects every interior point (whole-domain mode).
    pub fn from_insets(grid: &Grid, noise: &NoiseModel, inset_k: f64, inset_k_prime: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&inset_k) || !(0.0..0.5).contains(&inset_k_prime) {
            return Err(Error::Precondition(format!(
                "compact insets must lie in [0, 0.5), got ({inset_k}, {inset_k_prime})"
            )));
        }
        if inset_k < inset_k_prime {
            return Err(Error::Precondition(format!(
                "K (inset {inset_k}) must lie inside K' (inset {inset_k_prime})"
            )));
        }
        let k = grid.inset_box(inset_k);
        let k_prime = grid.inset_box(inset_k_prime);
        if k.is_empty() {
            return Err(Error::Precondition(format!("compact with inset {inset_k} holds no grid points")));
        }
        for (set, inset) in [(&k, inset_k), (&k_prime, inset_k_prime)] {
            if inset > 0.0 && set.iter().any(|&i| grid.is_boundary_adjacent(i)) {
                return Err(Error::Precondition(format!(
                    "inset {inset} too small for this grid: compact touches boundary-adjacent cells"
                )));
            }
        }
        let tilde = noise.tilde_mu();
        let c_k = k_prime.iter().map(|&i| tilde[i]).fold(f64::INFINITY, f64::min);
        let sup_root_mu = k.iter().map(|&i| tilde[i].sqrt()).fold(0.0, f64::max);
        let measure_k = grid.cell_volume() * k.len() as f64;
        Ok(CompactSpec {
            k,
            k_prime,
            c_k,
            sup_root_mu,
            measure_k,
            inset_k,
            inset_k_prime,
        })
    }

    pub fn summary(&self) -> CompactSummary {
        CompactSummary {
            inset_k: self.inset_k,
            inset_k_prime: self.inset_k_prime,
            points_k: self.k.len(),
            points_k_prime: self.k_prime.len(),
            measure_k: self.measure_k,
            c_k: self.c_k,
            sup_root_mu: self.sup_root_mu,
        }
    }
}

/// Right-hand side of the pathwise local decay estimate
/// `|x|₂ m(K)^{1/2} exp(sup_K ṽμ^{1/2} (Σ β_k²)^{1/2}) e^{−C_K t/2}`.
pub fn decay_bound_rhs(compact: &CompactSpec, x_l2: f64, beta_sumsq: f64, t: f64) -> f64 {
    bound_from_summary(&compact.summary(), x_l2, beta_sumsq, t)
}

pub(crate) fn bound_from_summary(c: &CompactSummary, x_l2: f64, beta_sumsq: f64, t: f64) -> f64 {
    x_l2 * c.measure_k.sqrt() * (c.sup_root_mu * beta_sumsq.sqrt() - 0.5 * c.c_k * t).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    /// Total mass `∫ X`.
    pub z: f64,
    pub l2: f64,
    /// `|Y|₂` with `Y = e^{μ(t)} X`.
    pub l2_y: f64,
    pub m_noncrit: f64,
    pub mass_k: Vec<f64>,
    pub bound_rhs: Vec<f64>,
    pub beta_sumsq: f64,
    /// `min X` after the positivity floor.
    pub min_x: f64,
    /// Cumulative mass removed by the positivity/underflow floor.
    pub clamped_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<ObservableRecord>,
}

impl Trajectory {
    pub fn n_compacts(&self) -> usize {
        self.records.first().map_or(0, |r| r.mass_k.len())
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&ObservableRecord> {
        self.records.last()
    }

    pub fn header(n_compacts: usize) -> Vec<String> {
        let mut cols: Vec<String> = ["t", "Z", "l2", "l2Y", "m_noncrit"].iter().map(|s| s.to_string()).collect();
        cols.extend((0..n_compacts).map(|i| format!("mass_K{i}")));
        cols.extend((0..n_compacts).map(|i| format!("bound_rhs{i}")));
        cols.extend(["beta_sumsq", "min_x", "clamped_mass"].iter().map(|s| s.to_string()));
        cols
    }

    /// CSV with a fixed column order and 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let nc = self.n_compacts();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header(nc))?;
        let fmt = |v: f64| format!("{v:.16e}");
        for r in &self.records {
            let mut row = vec![fmt(r.t), fmt(r.z), fmt(r.l2), fmt(r.l2_y), fmt(r.m_noncrit)];
            row.extend(r.mass_k.iter().map(|&v| fmt(v)));
            row.extend(r.bound_rhs.iter().map(|&v| fmt(v)));
            row.extend([fmt(r.beta_sumsq), fmt(r.min_x), fmt(r.clamped_mass)]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header = rd.headers()?.clone();
        let width = header.len();
        if width < 8 || (width - 8) % 2 != 0 {
            return Err(Error::Report(format!("unexpected trajectory column count {width}")));
        }
        let nc = (width - 8) / 2;
        let expected = Self::header(nc);
        if header.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::Report("trajectory header does not match the record layout".into()));
        }
        let mut records = Vec::new();
        for row in rd.records() {
            let row = row?;
            let v: Vec<f64> = row
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Report(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            records.push(ObservableRecord {
                t: v[0],
                z: v[1],
                l2: v[2],
                l2_y: v[3],
                m_noncrit: v[4],
                mass_k: v[5..5 + nc].to_vec(),
                bound_rhs: v[5 + nc..5 + 2 * nc].to_vec(),
                beta_sumsq: v[5 + 2 * nc],
                min_x: v[6 + 2 * nc],
                clamped_mass: v[7 + 2 * nc],
            });
        }
        Ok(Trajectory { records })
    }
}

/// First recorded time with `Z(t) < δ·Z(0)` that stays below for every later record.
pub fn extinction_time(trajectory: &Trajectory, delta: f64) -> Result<Option<f64>> {
    let first = trajectory
        .records
        .first()
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta must be positive, got {delta}")));
    }
    if first.z <= 0.0 {
        return Ok(Some(first.t));
    }
    let threshold = delta * first.z;
    let mut candidate = None;
    for r in &trajectory.records {
        if r.z < threshold {
            candidate.get_or_insert(r.t);
        } else {
            candidate = None;
        }
    }
    Ok(candidate)
}

/// Least-squares slope of `−ln(mass_K)` against `t` over records in
/// `window = (t0, t1)` with positive `mass_K`.
pub fn fit_decay_rate(trajectory: &Trajectory, compact: usize, window: (f64, f64)) -> Result<f64> {
    if compact >= trajectory.n_compacts() {
        return Err(Error::InsufficientData(format!("no compact with index {compact}")));
    }
    let pts: Vec<(f64, f64)> = trajectory
        .records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, r.mass_k[compact]))
        .filter(|&(_, m)| m > 0.0 && m.is_finite())
        .map(|(t, m)| (t, -m.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} records with positive mass in window, need 10",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all records at one time".into()));
    }
    Ok(sxy / sxx)
}

/// Trapezoidal `∫₀^{t_end} m(O ∖ O_t⁰) dt`.
pub fn integrated_noncritical(trajectory: &Trajectory) -> f64 {
    let t_end = trajectory.last().map_or(0.0, |r| r.t);
    integrated_noncritical_until(trajectory, t_end)
}

/// Trapezoidal integral of `m_noncrit` up to `t_stop`, interpolating the last panel.
pub fn integrated_noncritical_until(trajectory: &Trajectory, t_stop: f64) -> f64 {
    let mut total = 0.0;
    for w in trajectory.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.t >= t_stop {
            break;
        }
        if b.t <= t_stop {
            total += 0.5 * (b.t - a.t) * (a.m_noncrit + b.m_noncrit);
        } else {
            let frac = (t_stop - a.t) / (b.t - a.t);
            let mid = a.m_noncrit + frac * (b.m_noncrit - a.m_noncrit);
            total += 0.5 * (t_stop - a.t) * (a.m_noncrit + mid);
        }
    }
    total
}
