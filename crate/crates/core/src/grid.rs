//! Uniform box grids with homogeneous Dirichlet boundary, the five-point
//! (three-point in 1-D) Laplacian, shifted SPD solves and analytic sine modes.
//!
//! Fields are flat `Vec<f64>` over interior points, axis 0 fastest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extent: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
    cell_volume: f64,
}

/// Builds a grid; `extent` and `n` may hold one entry (broadcast to every axis)
/// or exactly `dim` entries.
pub fn build_grid(dim: usize, extent: &[f64], n: &[usize]) -> Result<Grid> {
    Grid::new(dim, extent, n)
}

impl Grid {
    pub fn new(dim: usize, extent: &[f64], n: &[usize]) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let broadcast = |len: usize, what: &str| -> Result<()> {
            if len == 1 || len == dim {
                Ok(())
            } else {
                Err(Error::InvalidGrid(format!(
                    "{what} has {len} entries for a {dim}-D grid"
                )))
            }
        };
        broadcast(extent.len(), "extent")?;
        broadcast(n.len(), "n")?;
        let extent: Vec<f64> = (0..dim).map(|a| extent[a.min(extent.len() - 1)]).collect();
        let n: Vec<usize> = (0..dim).map(|a| n[a.min(n.len() - 1)]).collect();
        if let Some(&bad) = n.iter().find(|&&m| m < 3) {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 interior points per axis, got {bad}"
            )));
        }
        if let Some(&bad) = extent.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {bad}")));
        }
        let h: Vec<f64> = extent
            .iter()
            .zip(&n)
            .map(|(&e, &m)| e / (m as f64 + 1.0))
            .collect();
        let cell_volume = h.iter().product();
        Ok(Grid {
            dim,
            extent,
            n,
            h,
            cell_volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Number of interior points.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lebesgue measure of the box.
    pub fn domain_measure(&self) -> f64 {
        self.extent.iter().product()
    }

    /// Per-axis interior indices of flat index `idx`.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n[0], idx / self.n[0]]
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[0] + self.n[0] * mi[1]
        }
    }

    /// Physical coordinates of interior point `idx` (unused axis reads 0).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = (mi[a] as f64 + 1.0) * self.h[a];
        }
        x
    }

    /// Samples `f` at every interior point.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }

    /// Flat indices of points whose coordinates lie in the closed box
    /// `[inset·L, (1−inset)·L]` along every axis.
    pub fn inset_box(&self, inset: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let x = self.coords(i);
                (0..self.dim).all(|a| {
                    let lo = inset * self.extent[a];
                    let hi = (1.0 - inset) * self.extent[a];
                    let tol = 1e-12 * self.extent[a];
                    x[a] >= lo - tol && x[a] <= hi + tol
                })
            })
            .collect()
    }

    /// True if `idx` is adjacent to the boundary along some axis.
    pub fn is_boundary_adjacent(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|a| mi[a] == 0 || mi[a] + 1 == self.n[a])
    }

    pub fn check_len(&self, field: &[f64]) -> Result<()> {
        if field.len() == self.len() {
            Ok(())
        } else {
            Err(Error::SizeMismatch {
                expected: self.len(),
                got: field.len(),
            })
        }
    }

    /// Cell-volume weighted inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume * dot(a, b)
    }

    /// Discrete L²(O) norm.
    pub fn l2_norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// `out = Δ_h u` with zero Dirichlet data. No length checks.
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        match self.dim {
            1 => {
                let n = self.n[0];
                let c = 1.0 / (self.h[0] * self.h[0]);
                for i in 0..n {
                    let left = if i > 0 { u[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                    out[i] = c * (left - 2.0 * u[i] + right);
                }
            }
            _ => {
                let (nx, ny) = (self.n[0], self.n[1]);
                let cx = 1.0 / (self.h[0] * self.h[0]);
                let cy = 1.0 / (self.h[1] * self.h[1]);
                for j in 0..ny {
                    for i in 0..nx {
                        let k = i + nx * j;
                        let w = if i > 0 { u[k - 1] } else { 0.0 };
                        let e = if i + 1 < nx { u[k + 1] } else { 0.0 };
                        let s = if j > 0 { u[k - nx] } else { 0.0 };
                        let nn = if j + 1 < ny { u[k + nx] } else { 0.0 };
                        out[k] = cx * (w - 2.0 * u[k] + e) + cy * (s - 2.0 * u[k] + nn);
                    }
                }
            }
        }
    }

    /// Diagonal of −Δ_h (constant over the grid).
    pub fn neg_laplacian_diagonal(&self) -> f64 {
        self.h.iter().map(|h| 2.0 / (h * h)).sum()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Δ_h field` as a new vector.
pub fn laplacian_apply(grid: &Grid, field: &[f64]) -> Result<Vec<f64>> {
    grid.check_len(field)?;
    let mut out = vec![0.0; field.len()];
    grid.apply_laplacian(field, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual target ‖(D − αΔ_h)u − rhs‖₂ / ‖rhs‖₂.
    pub tol: f64,
    /// `None` means `max(1000, 4·len)`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `(diag(D) − αΔ_h) u = rhs`.
///
/// Owns its scratch vectors so repeated solves on one grid do not allocate.
#[derive(Debug, Clone, Default)]
pub struct ShiftedSolver {
    pub options: CgOptions,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    precond: Vec<f64>,
}

impl ShiftedSolver {
    pub fn new(options: CgOptions) -> Self {
        ShiftedSolver {
            options,
            ..Default::default()
        }
    }

    fn apply(grid: &Grid, alpha: f64, diag: &[f64], u: &[f64], out: &mut [f64]) {
        grid.apply_laplacian(u, out);
        for ((o, &d), &ui) in out.iter_mut().zip(diag).zip(u) {
            *o = d * ui - alpha * *o;
        }
    }

    /// Solves into `u`, using its current contents as the initial guess.
    pub fn solve_into(
        &mut self,
        grid: &Grid,
        alpha: f64,
        diag: &[f64],
        rhs: &[f64],
        u: &mut [f64],
    ) -> Result<CgStats> {
        grid.check_len(diag)?;
        grid.check_len(rhs)?;
        grid.check_len(u)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Precondition(format!("alpha must be >= 0, got {alpha}")));
        }
        if let Some((i, &d)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Precondition(format!(
                "diagonal entry {i} must be positive, got {d}"
            )));
        }
        let n = rhs.len();
        let rhs_norm = norm2(rhs);
        if rhs_norm == 0.0 {
            u.fill(0.0);
            return Ok(CgStats {
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        if !rhs_norm.is_finite() {
            return Err(Error::NonFinite);
        }
        for buf in [&mut self.r, &mut self.z, &mut self.p, &mut self.ap, &mut self.precond] {
            buf.resize(n, 0.0);
        }
        let lap_diag = alpha * grid.neg_laplacian_diagonal();
        for (m, &d) in self.precond.iter_mut().zip(diag) {
            *m = 1.0 / (d + lap_diag);
        }
        let max_iter = self.options.max_iter.unwrap_or((4 * n).max(1000));
        let target = self.options.tol * rhs_norm;
        let mut iterations = 0;

        // Outer loop restarts from the true residual if the recursive one drifted.
        loop {
            Self::apply(grid, alpha, diag, u, &mut self.ap);
            for i in 0..n {
                self.r[i] = rhs[i] - self.ap[i];
            }
            let true_res = norm2(&self.r);
            if true_res <= target {
                return Ok(CgStats {
                    iterations,
                    relative_residual: true_res / rhs_norm,
                });
            }
            if !true_res.is_finite() {
                return Err(Error::NonFinite);
            }
            if iterations >= max_iter {
                return Err(Error::LinearSolve {
                    iterations,
                    residual: true_res / rhs_norm,
                });
            }
            for i in 0..n {
                self.z[i] = self.precond[i] * self.r[i];
                self.p[i] = self.z[i];
            }
            let mut rz = dot(&self.r, &self.z);
            while iterations < max_iter {
                iterations += 1;
                Self::apply(grid, alpha, diag, &self.p, &mut self.ap);
                let pap = dot(&self.p, &self.ap);
                if pap <= 0.0 {
                    break;
                }
                let step = rz / pap;
                let mut rr = 0.0;
                for i in 0..n {
                    u[i] += step * self.p[i];
                    self.r[i] -= step * self.ap[i];
                    rr += self.r[i] * self.r[i];
                }
                if rr.sqrt() <= 0.5 * target {
                    break;
                }
                let mut rz_new = 0.0;
                for i in 0..n {
                    self.z[i] = self.precond[i] * self.r[i];
                    rz_new += self.r[i] * self.z[i];
                }
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    self.p[i] = self.z[i] + beta * self.p[i];
                }
            }
        }
    }
}

/// Solves `(diag(D) − αΔ_h) u = rhs` from a zero initial guess.
pub fn solve_shifted(grid: &Grid, alpha: f64, diag: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let mut u = vec![0.0; rhs.len()];
    ShiftedSolver::new(CgOptions::default()).solve_into(grid, alpha, diag, rhs, &mut u)?;
    Ok(u)
}

/// Dirichlet eigenpair of −Δ on the box, sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenMode {
    pub k: Vec<usize>,
    /// Continuum eigenvalue Σ (k_a π / L_a)².
    pub eigenvalue: f64,
    /// Eigenvalue of `−Δ_h` for the same mode, Σ (4/h_a²) sin²(k_a π h_a / (2 L_a)).
    pub discrete_eigenvalue: f64,
    /// Unit discrete L² norm.
    pub values: Vec<f64>,
}

impl EigenMode {
    /// ‖−Δ_h e − λ e‖₂ / λ.
    pub fn relative_residual(&self, grid: &Grid) -> f64 {
        let mut lap = vec![0.0; self.values.len()];
        grid.apply_laplacian(&self.values, &mut lap);
        let r: Vec<f64> = lap
            .iter()
            .zip(&self.values)
            .map(|(l, e)| -l - self.eigenvalue * e)
            .collect();
        grid.l2_norm(&r) / self.eigenvalue
    }
}

/// Sine-product eigenmode with multi-index `k` (1-based, one entry per axis).
///
/// Sampled sine modes with `k_a ≤ n_a` are exactly orthogonal under the
/// cell-weighted inner product, so normalization is the only discrete fix-up.
pub fn eigenmode(grid: &Grid, k: &[usize]) -> Result<EigenMode> {
    if k.len() != grid.dim() || k.iter().zip(grid.n()).any(|(&ka, &na)| ka == 0 || ka > na) {
        return Err(Error::InvalidModeIndex(k.to_vec()));
    }
    let dim = grid.dim();
    let extent = grid.extent().to_vec();
    let mut values = grid.sample(|x| {
        (0..dim)
            .map(|a| (k[a] as f64 * PI * x[a] / extent[a]).sin())
            .product()
    });
    let norm = grid.l2_norm(&values);
    values.iter_mut().for_each(|v| *v /= norm);
    let eigenvalue = (0..dim)
        .map(|a| (k[a] as f64 * PI / extent[a]).powi(2))
        .sum();
    let discrete_eigenvalue = (0..dim)
        .map(|a| {
            let h = grid.h()[a];
            (4.0 / (h * h)) * (k[a] as f64 * PI * h / (2.0 * extent[a])).sin().powi(2)
        })
        .sum();
    Ok(EigenMode {
        k: k.to_vec(),
        eigenvalue,
        discrete_eigenvalue,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_arithmetic() {
        let g = build_grid(1, &[1.0], &[99]).unwrap();
        assert!((g.h()[0] - 0.01).abs() < 1e-15);
        assert_eq!(g.len(), 99);
        let g2 = build_grid(2, &[1.0, 1.0], &[49, 49]).unwrap();
        assert!((g2.cell_volume() - (1.0f64 / 50.0).powi(2)).abs() < 1e-15);
        assert_eq!(g2.len(), 49 * 49);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(build_grid(3, &[1.0], &[9]), Err(Error::UnsupportedDimension(3))));
        assert!(matches!(build_grid(1, &[1.0], &[2]), Err(Error::InvalidGrid(_))));
        assert!(build_grid(1, &[0.0], &[10]).is_err());
        assert!(build_grid(2, &[1.0, 1.0, 1.0], &[10]).is_err());
    }

    #[test]
    fn laplacian_of_zero_and_quadratic() {
        let g = build_grid(1, &[1.0], &[49]).unwrap();
        let z = laplacian_apply(&g, &vec![0.0; 49]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        // ξ(1−ξ) vanishes at both ends, so the stencil is exact everywhere.
        let q = g.sample(|x| x[0] * (1.0 - x[0]));
        let lq = laplacian_apply(&g, &q).unwrap();
        for v in lq {
            assert!((v + 2.0).abs() < 1e-9, "{v}");
        }
        assert!(matches!(
            laplacian_apply(&g, &[1.0; 3]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn first_mode_on_unit_interval() {
        let g = build_grid(1, &[1.0], &[999]).unwrap();
        let e1 = eigenmode(&g, &[1]).unwrap();
        assert!((e1.eigenvalue - PI * PI).abs() < 1e-12);
        let mut lap = vec![0.0; e1.values.len()];
        g.apply_laplacian(&e1.values, &mut lap);
        for (l, v) in lap.iter().zip(&e1.values) {
            assert!((l + e1.discrete_eigenvalue * v).abs() < 1e-6);
        }
        assert!(e1.relative_residual(&g) < 1e-3);
        let x = g.coords(499)[0];
        let expected = 2f64.sqrt() * (PI * x).sin();
        assert!((e1.values[499] - expected).abs() < 1e-6);
        let e2 = eigenmode(&g, &[2]).unwrap();
        assert!(g.inner(&e1.values, &e2.values).abs() < 1e-10);
        assert!((g.inner(&e1.values, &e1.values) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_mode_eigenvalue() {
        let g = build_grid(2, &[1.0], &[31]).unwrap();
        let e = eigenmode(&g, &[1, 1]).unwrap();
        assert!((e.eigenvalue - 2.0 * PI * PI).abs() < 1e-12);
        assert!(eigenmode(&g, &[0, 1]).is_err());
        assert!(eigenmode(&g, &[1]).is_err());
        assert!(eigenmode(&g, &[32, 1]).is_err());
    }

    #[test]
    fn second_order_residual_decay() {
        for k in 1..=3 {
            let coarse = build_grid(1, &[1.0], &[99]).unwrap();
            let fine = build_grid(1, &[1.0], &[199]).unwrap();
            let rc = eigenmode(&coarse, &[k]).unwrap().relative_residual(&coarse);
            let rf = eigenmode(&fine, &[k]).unwrap().relative_residual(&fine);
            assert!(rc / rf >= 3.5, "k={k}: {rc} / {rf}");
        }
    }

    #[test]
    fn shifted_solve_cases() {
        let g = build_grid(1, &[1.0], &[199]).unwrap();
        let rhs: Vec<f64> = (0..199).map(|i| (i as f64 * 0.37).sin()).collect();
        let u = solve_shifted(&g, 0.0, &vec![1.0; 199], &rhs).unwrap();
        for (a, b) in u.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-9);
        }

        let alpha = 0.05;
        let e1 = eigenmode(&g, &[1]).unwrap();
        let rhs: Vec<f64> = e1.values.iter().map(|v| (1.0 + alpha * e1.eigenvalue) * v).collect();
        let u = solve_shifted(&g, alpha, &vec![1.0; 199], &rhs).unwrap();
        let err: Vec<f64> = u.iter().zip(&e1.values).map(|(a, b)| a - b).collect();
        assert!(g.l2_norm(&err) < 1e-4, "{}", g.l2_norm(&err));

        let mut diag = vec![1.0; 199];
        diag[17] = 0.0;
        assert!(matches!(
            solve_shifted(&g, alpha, &diag, &rhs),
            Err(Error::Precondition(_))
        ));
        assert!(solve_shifted(&g, -1.0, &vec![1.0; 199], &rhs).is_err());
    }

    #[test]
    fn shifted_solve_reports_nonconvergence() {
        let g = build_grid(1, &[1.0], &[199]).unwrap();
        let rhs = vec![1.0; 199];
        let mut solver = ShiftedSolver::new(CgOptions {
            tol: 1e-14,
            max_iter: Some(3),
        });
        let mut u = vec![0.0; 199];
        match solver.solve_into(&g, 1.0, &vec![1e-3; 199], &rhs, &mut u) {
            Err(Error::LinearSolve { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
