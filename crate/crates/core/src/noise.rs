//! Finite-mode multiplicative Gaussian noise `Σ_k μ_k e_k X dβ_k`.
//!
//! Brownian increments for mode `k` of a path with master seed `s` come from a
//! ChaCha8 stream keyed by `SHA-256("spme/brownian/v1" ‖ s_le ‖ k_le)`, so each
//! mode is an independent, version-stable stream and adding modes never
//! perturbs existing ones.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{eigenmode, Grid};

/// How mode indices are turned into spatial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseShape {
    /// Dirichlet sine eigenmodes of −Δ.
    #[default]
    Eigen,
    /// Smooth non-vanishing cosine profiles `Π cos((k_a − 1)π ξ_a / L_a)`.
    /// Mode 1 is constant, so `inf_O ṽμ > 0` whenever `μ_1 ≠ 0` and the local
    /// decay estimate holds on the whole domain.
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMode {
    pub index: Vec<usize>,
    /// Eigenvalue of −Δ for eigen profiles; `None` for global profiles.
    pub eigenvalue: Option<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    mu: Vec<f64>,
    modes: Vec<NoiseMode>,
    tilde: Vec<f64>,
    grid_len: usize,
}

fn cosine_profile(grid: &Grid, k: &[usize]) -> Result<NoiseMode> {
    if k.len() != grid.dim() || k.iter().any(|&ka| ka == 0) {
        return Err(Error::InvalidModeIndex(k.to_vec()));
    }
    let dim = grid.dim();
    let extent = grid.extent().to_vec();
    let mut values = grid.sample(|x| {
        (0..dim)
            .map(|a| ((k[a] as f64 - 1.0) * PI * x[a] / extent[a]).cos())
            .product()
    });
    let norm = grid.l2_norm(&values);
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(NoiseMode {
        index: k.to_vec(),
        eigenvalue: None,
        values,
    })
}

impl NoiseModel {
    pub fn new(grid: &Grid, mu: &[f64], indices: &[Vec<usize>], shape: NoiseShape) -> Result<Self> {
        if mu.len() != indices.len() {
            return Err(Error::Precondition(format!(
                "{} noise coefficients for {} modes",
                mu.len(),
                indices.len()
            )));
        }
        if let Some(m) = mu.iter().find(|m| !m.is_finite()) {
            return Err(Error::Precondition(format!("non-finite noise coefficient {m}")));
        }
        let modes = indices
            .iter()
            .map(|k| match shape {
                NoiseShape::Eigen => eigenmode(grid, k).map(|m| NoiseMode {
                    index: m.k,
                    eigenvalue: Some(m.eigenvalue),
                    values: m.values,
                }),
                NoiseShape::Global => cosine_profile(grid, k),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tilde = vec![0.0; grid.len()];
        for (m, mode) in mu.iter().zip(&modes) {
            for (t, e) in tilde.iter_mut().zip(&mode.values) {
                *t += m * m * e * e;
            }
        }
        Ok(NoiseModel {
            mu: mu.to_vec(),
            modes,
            tilde,
            grid_len: grid.len(),
        })
    }

    /// Noise-free model on `grid`.
    pub fn zero(grid: &Grid) -> Self {
        NoiseModel {
            mu: Vec::new(),
            modes: Vec::new(),
            tilde: vec![0.0; grid.len()],
            grid_len: grid.len(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.mu.iter().all(|&m| m == 0.0)
    }

    /// Partial sum `Σ μ_k² λ_k²` over modes with a known eigenvalue.
    pub fn admissibility_sum(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.modes)
            .filter_map(|(m, mode)| mode.eigenvalue.map(|l| m * m * l * l))
            .sum()
    }

    /// `ṽμ = Σ μ_k² e_k²`, time independent.
    pub fn tilde_mu(&self) -> &[f64] {
        &self.tilde
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() == self.n_modes() {
            Ok(())
        } else {
            Err(Error::SizeMismatch {
                expected: self.n_modes(),
                got: beta.len(),
            })
        }
    }

    /// `out = Σ μ_k e_k c_k`.
    pub fn combine_into(&self, coeffs: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_beta(coeffs)?;
        if out.len() != self.grid_len {
            return Err(Error::SizeMismatch {
                expected: self.grid_len,
                got: out.len(),
            });
        }
        out.fill(0.0);
        for ((m, mode), c) in self.mu.iter().zip(&self.modes).zip(coeffs) {
            let w = m * c;
            if w != 0.0 {
                for (o, e) in out.iter_mut().zip(&mode.values) {
                    *o += w * e;
                }
            }
        }
        Ok(())
    }

    /// `μ(t) = −Σ μ_k e_k β_k(t)`.
    pub fn mu_field(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid_len];
        self.combine_into(beta, &mut out)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(out)
    }
}

/// Free-function form of [`NoiseModel::mu_field`].
pub fn mu_field(model: &NoiseModel, beta_values: &[f64]) -> Result<Vec<f64>> {
    model.mu_field(beta_values)
}

/// Owned copy of `ṽμ`.
pub fn tilde_mu(model: &NoiseModel) -> Vec<f64> {
    model.tilde_mu().to_vec()
}

/// Infimum of `field` over the grid indices in `region`.
pub fn field_inf(field: &[f64], region: &[usize]) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Precondition("empty region".into()));
    }
    region
        .iter()
        .map(|&i| {
            field.get(i).copied().ok_or_else(|| {
                Error::Precondition(format!("region index {i} outside grid of {} points", field.len()))
            })
        })
        .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub inf: f64,
    pub nondegenerate: bool,
}

/// Checks `inf_region ṽμ > 0` using the squared form `ṽμ = Σ μ_k² e_k²`.
pub fn check_nondegeneracy(model: &NoiseModel, region: &[usize]) -> Result<NondegeneracyReport> {
    let inf = field_inf(model.tilde_mu(), region)?;
    Ok(NondegeneracyReport {
        inf,
        nondegenerate: inf > 0.0,
    })
}

/// Sampled Brownian motions `β_1..β_N` on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    dt: f64,
    n_modes: usize,
    n_steps: usize,
    /// `(n_steps + 1) × n_modes`, step-major.
    values: Vec<f64>,
    /// `n_steps × n_modes`; `increments[j] = values[j+1] − values[j]` exactly.
    increments: Vec<f64>,
}

fn mode_stream(master: u64, mode: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"spme/brownian/v1");
    hasher.update(master.to_le_bytes());
    hasher.update((mode as u64).to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

impl BrownianPath {
    pub fn sample(seed: u64, n_modes: usize, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Precondition("n_steps must be at least 1".into()));
        }
        let sd = dt.sqrt();
        let mut values = vec![0.0; (n_steps + 1) * n_modes];
        for k in 0..n_modes {
            let mut rng = mode_stream(seed, k);
            let mut acc = 0.0;
            for j in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += sd * z;
                values[(j + 1) * n_modes + k] = acc;
            }
        }
        Ok(Self::from_values(dt, n_modes, n_steps, values))
    }

    /// Path with all `β_k ≡ 0`.
    pub fn zero(n_modes: usize, dt: f64, n_steps: usize) -> Self {
        Self::from_values(dt, n_modes, n_steps, vec![0.0; (n_steps + 1) * n_modes])
    }

    fn from_values(dt: f64, n_modes: usize, n_steps: usize, values: Vec<f64>) -> Self {
        let increments = (0..n_steps * n_modes)
            .map(|i| values[i + n_modes] - values[i])
            .collect();
        BrownianPath {
            dt,
            n_modes,
            n_steps,
            values,
            increments,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `β(t_j)` for all modes.
    pub fn values_at(&self, step: usize) -> &[f64] {
        &self.values[step * self.n_modes..(step + 1) * self.n_modes]
    }

    /// `β(t_{j+1}) − β(t_j)` for all modes.
    pub fn increments_at(&self, step: usize) -> &[f64] {
        &self.increments[step * self.n_modes..(step + 1) * self.n_modes]
    }

    /// Same path observed every `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::Precondition(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        let n_steps = self.n_steps / factor;
        let values = (0..=n_steps)
            .flat_map(|j| self.values_at(j * factor).iter().copied())
            .collect();
        Ok(Self::from_values(self.dt * factor as f64, self.n_modes, n_steps, values))
    }
}

pub fn sample_path(seed: u64, n_modes: usize, dt: f64, n_steps: usize) -> Result<BrownianPath> {
    BrownianPath::sample(seed, n_modes, dt, n_steps)
}

/// Per-path seed for path `index` of an ensemble with master seed `master`.
pub fn derive_path_seed(master: u64, index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"spme/path/v1");
    hasher.update(master.to_le_bytes());
    hasher.update((index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn unit(n: usize) -> Grid {
        build_grid(1, &[1.0], &[n]).unwrap()
    }

    #[test]
    fn mu_field_cases() {
        let g = unit(49);
        let model = NoiseModel::new(&g, &[0.5, 0.2], &[vec![1], vec![3]], NoiseShape::Eigen).unwrap();
        assert!(model.mu_field(&[0.0, 0.0]).unwrap().iter().all(|&v| v == 0.0));
        let single = NoiseModel::new(&g, &[0.5], &[vec![1]], NoiseShape::Eigen).unwrap();
        let f = single.mu_field(&[1.0]).unwrap();
        let e1 = eigenmode(&g, &[1]).unwrap();
        for (a, b) in f.iter().zip(&e1.values) {
            assert!((a + 0.5 * b).abs() < 1e-15);
        }
        let a = model.mu_field(&[0.3, -1.2]).unwrap();
        let b = model.mu_field(&[-0.3, 1.2]).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x == &-y));
        assert!(matches!(model.mu_field(&[1.0]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn tilde_mu_closed_form() {
        let g = unit(99);
        let zero = NoiseModel::new(&g, &[0.0], &[vec![1]], NoiseShape::Eigen).unwrap();
        assert!(zero.tilde_mu().iter().all(|&v| v == 0.0));
        let m = NoiseModel::new(&g, &[1.0], &[vec![1]], NoiseShape::Eigen).unwrap();
        let mut sup: f64 = 0.0;
        for (i, &v) in m.tilde_mu().iter().enumerate() {
            let x = g.coords(i)[0];
            assert!((v - 2.0 * (PI * x).sin().powi(2)).abs() < 1e-12);
            assert!(v > 0.0);
            sup = sup.max(v);
        }
        assert!((sup - 2.0).abs() < 1e-12); // ξ = 1/2 is a grid point
    }

    #[test]
    fn nondegeneracy_middle_third() {
        let g = unit(299);
        let zero = NoiseModel::new(&g, &[0.0], &[vec![1]], NoiseShape::Eigen).unwrap();
        let region = g.inset_box(1.0 / 3.0);
        let r = check_nondegeneracy(&zero, &region).unwrap();
        assert_eq!(r.inf, 0.0);
        assert!(!r.nondegenerate);
        let m = NoiseModel::new(&g, &[1.0], &[vec![1]], NoiseShape::Eigen).unwrap();
        let r = check_nondegeneracy(&m, &region).unwrap();
        assert!((r.inf - 1.5).abs() < 2.0 * PI * g.h()[0], "{}", r.inf);
        assert!(r.nondegenerate);
        assert!(check_nondegeneracy(&m, &[]).is_err());
    }

    #[test]
    fn global_profiles_are_bounded_below() {
        let g = build_grid(2, &[1.0, 2.0], &[15, 19]).unwrap();
        let m = NoiseModel::new(&g, &[1.0, 0.3], &[vec![1, 1], vec![2, 1]], NoiseShape::Global).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        let r = check_nondegeneracy(&m, &all).unwrap();
        // mode 1 is constant; its discrete normalization is 1/(#points · cell volume)
        let floor = 1.0 / (g.len() as f64 * g.cell_volume());
        assert!(r.inf >= floor * (1.0 - 1e-12) && r.nondegenerate, "{}", r.inf);
        assert!(r.inf < 1.05 * floor, "{}", r.inf);
        assert_eq!(m.admissibility_sum(), 0.0);
    }

    #[test]
    fn brownian_determinism_and_exact_increments() {
        let a = sample_path(42, 3, 1e-3, 500).unwrap();
        let b = sample_path(42, 3, 1e-3, 500).unwrap();
        assert_eq!(a, b);
        let c = sample_path(43, 3, 1e-3, 500).unwrap();
        assert_ne!(a, c);
        assert!(a.values_at(0).iter().all(|&v| v == 0.0));
        for j in 0..500 {
            for k in 0..3 {
                assert_eq!(a.values_at(j + 1)[k] - a.values_at(j)[k], a.increments_at(j)[k]);
            }
        }
        // mode streams do not depend on the number of modes
        let one = sample_path(42, 1, 1e-3, 500).unwrap();
        assert_eq!(one.values_at(500)[0], a.values_at(500)[0]);
        assert!(sample_path(1, 1, 1e-3, 0).is_err());
        assert!(sample_path(1, 1, 0.0, 10).is_err());
    }

    #[test]
    fn coarsen_keeps_values() {
        let fine = sample_path(7, 2, 1e-3, 40).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.n_steps(), 10);
        assert!((coarse.dt() - 4e-3).abs() < 1e-18);
        for j in 0..=10 {
            assert_eq!(coarse.values_at(j), fine.values_at(4 * j));
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn path_seed_derivation_is_stable() {
        assert_eq!(derive_path_seed(1, 0), derive_path_seed(1, 0));
        assert_ne!(derive_path_seed(1, 0), derive_path_seed(1, 1));
        assert_ne!(derive_path_seed(1, 0), derive_path_seed(2, 0));
    }
}
