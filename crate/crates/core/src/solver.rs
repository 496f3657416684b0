//! Time stepping for the regularized equation
//!
//! ```text
//! dX = Δ(ψ_λ(X) + λX) dt + Σ_k μ_k e_k X dβ_k,      X = 0 on ∂O,
//! ```
//!
//! directly (backward Euler drift, explicit Itô noise) and through the
//! pathwise transform `Y = e^{μ(t)} X`, which turns it into the random PDE
//! `Y' = e^μ Δ(ψ_λ(e^{−μ}Y) + λe^{−μ}Y) − ½ṽμ Y`.
//!
//! Both steps reduce to the same implicit problem
//!
//! ```text
//! c ⊙ X⁺ − dt Δ_h p(X⁺) = b,      p(r) = ψ_λ(r) + λ r,
//! ```
//!
//! with `c ≡ 1` (direct) or `c = 1 + dt ṽμ/2` (transformed). It is solved for
//! the pressure `u = p(X⁺)`: `c ⊙ p⁻¹(u) − dt Δ_h u = b` is the gradient of
//! the convex functional `J(u) = Σ c Γ(u) − b·u + (dt/2)⟨−Δ_h u, u⟩`, its
//! Jacobian `diag(c ⊙ (p⁻¹)'(u)) − dt Δ_h` is SPD, and Newton steps are
//! damped by backtracking on `J`.

use crate::config::{RunConfig, SchemeChoice};
use crate::error::{Error, Result};
use crate::grid::{norm2, CgOptions, Grid, ShiftedSolver};
use crate::noise::{BrownianPath, NoiseModel};
use crate::nonlinearity::Regularization;
use crate::observables::{critical_measure, decay_bound_rhs, mass, mass_over, CompactSpec, ObservableRecord, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Direct,
    Transformed,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Transformed => "transformed",
        }
    }
}

impl SchemeChoice {
    pub fn schemes(&self) -> Vec<Scheme> {
        match self {
            SchemeChoice::Direct => vec![Scheme::Direct],
            SchemeChoice::Transformed => vec![Scheme::Transformed],
            SchemeChoice::Both => vec![Scheme::Direct, Scheme::Transformed],
        }
    }
}

/// Values below `−POSITIVITY_FLOOR·‖x‖_∞` are clamped to zero.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Magnitudes below this fraction of `‖x‖_∞` are flushed to zero; far below any
/// threshold in use, keeps fields out of the subnormal range.
pub const UNDERFLOW_FLOOR: f64 = 1e-100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Newton stops when `‖G(u)‖₂ ≤ newton_tol·‖b‖₂`.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub cg: CgOptions,
    /// `false` switches off the ψ_λ and λ-diffusion terms (diagnostic mode).
    pub drift: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            newton_tol: 1e-10,
            max_newton: 50,
            cg: CgOptions::default(),
            drift: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub t: f64,
    /// `X` for the direct scheme, `Y = e^{μ(t)}X` for the transformed one.
    pub field: Vec<f64>,
    pub beta: Vec<f64>,
    pub scheme: Scheme,
    /// `‖x‖_∞` of the initial datum; scale for the positivity floor.
    pub scale: f64,
    /// Cumulative mass removed by the positivity and underflow floors.
    pub clamped_mass: f64,
}

impl PathState {
    /// State at `t = 0`; `Y(0) = X(0) = x` since `μ(0) = 0`.
    pub fn new(scheme: Scheme, x: Vec<f64>, n_modes: usize) -> Self {
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        PathState {
            t: 0.0,
            field: x,
            beta: vec![0.0; n_modes],
            scheme,
            scale,
            clamped_mass: 0.0,
        }
    }

    /// Physical solution `X(t)`.
    pub fn x(&self, noise: &NoiseModel) -> Result<Vec<f64>> {
        match self.scheme {
            Scheme::Direct => Ok(self.field.clone()),
            Scheme::Transformed => {
                let mu = noise.mu_field(&self.beta)?;
                Ok(self.field.iter().zip(&mu).map(|(y, m)| y * (-m).exp()).collect())
            }
        }
    }

    /// Transformed solution `Y(t) = e^{μ(t)} X(t)`.
    pub fn y(&self, noise: &NoiseModel) -> Result<Vec<f64>> {
        match self.scheme {
            Scheme::Transformed => Ok(self.field.clone()),
            Scheme::Direct => {
                let mu = noise.mu_field(&self.beta)?;
                Ok(self.field.iter().zip(&mu).map(|(x, m)| x * m.exp()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub clamped_mass: f64,
}

/// `x_raw − Xc`, rejecting points where the datum lies below the critical state.
pub fn shift_to_origin(x_raw: &[f64], xc: &[f64]) -> Result<Vec<f64>> {
    if x_raw.len() != xc.len() {
        return Err(Error::SizeMismatch {
            expected: x_raw.len(),
            got: xc.len(),
        });
    }
    x_raw
        .iter()
        .zip(xc)
        .enumerate()
        .map(|(index, (&value, &critical))| {
            if value < critical {
                Err(Error::BelowCritical { index, value, critical })
            } else {
                Ok(value - critical)
            }
        })
        .collect()
}

/// Reusable stepping workspace for one grid, noise model and regularization.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    grid: &'a Grid,
    noise: &'a NoiseModel,
    reg: Regularization,
    pub options: StepOptions,
    solver: ShiftedSolver,
    weight: Vec<f64>,
    rhs: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    lap: Vec<f64>,
    diag: Vec<f64>,
    delta: Vec<f64>,
    lap_delta: Vec<f64>,
    work: Vec<f64>,
    mu: Vec<f64>,
    guess: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &'a Grid, noise: &'a NoiseModel, reg: Regularization, options: StepOptions) -> Self {
        let n = grid.len();
        Stepper {
            grid,
            noise,
            reg,
            options,
            solver: ShiftedSolver::new(options.cg),
            weight: vec![1.0; n],
            rhs: vec![0.0; n],
            u: vec![0.0; n],
            g: vec![0.0; n],
            lap: vec![0.0; n],
            diag: vec![0.0; n],
            delta: vec![0.0; n],
            lap_delta: vec![0.0; n],
            work: vec![0.0; n],
            mu: vec![0.0; n],
            guess: vec![0.0; n],
        }
    }

    pub fn regularization(&self) -> Regularization {
        self.reg
    }

    /// One drift-implicit, noise-explicit step of the regularized equation:
    /// solves `X⁺ − dt Δ_h p(X⁺) = X (1 + Σ μ_k e_k Δβ_k)`.
    pub fn step_direct(&mut self, state: &mut PathState, dt: f64, increments: &[f64]) -> Result<StepReport> {
        self.check_step(state, Scheme::Direct, dt, increments.len())?;
        self.noise.combine_into(increments, &mut self.work)?;
        for ((b, x), a) in self.rhs.iter_mut().zip(&state.field).zip(&self.work) {
            *b = x * (1.0 + a);
        }
        self.weight.fill(1.0);
        self.guess.copy_from_slice(&state.field);
        let mut report = self.implicit_solve(dt)?;
        report.clamped_mass = self.apply_floor(state.scale);
        state.clamped_mass += report.clamped_mass;
        state.field.copy_from_slice(&self.work);
        for (b, d) in state.beta.iter_mut().zip(increments) {
            *b += d;
        }
        state.t += dt;
        Ok(report)
    }

    /// One step of the transformed equation with `e^{±μ}` frozen at the left
    /// endpoint and the damping `−½ṽμY` taken implicitly.
    pub fn step_transformed(&mut self, state: &mut PathState, dt: f64, beta_next: &[f64]) -> Result<StepReport> {
        self.check_step(state, Scheme::Transformed, dt, beta_next.len())?;
        self.noise.combine_into(&state.beta, &mut self.mu)?;
        let tilde = self.noise.tilde_mu();
        for i in 0..self.rhs.len() {
            // combine_into yields −μ(t_n)
            self.rhs[i] = state.field[i] * self.mu[i].exp();
            self.weight[i] = 1.0 + 0.5 * dt * tilde[i];
        }
        self.guess.copy_from_slice(&self.rhs);
        let mut report = self.implicit_solve(dt)?;
        report.clamped_mass = self.apply_floor(state.scale);
        state.clamped_mass += report.clamped_mass;
        for ((y, x), m) in state.field.iter_mut().zip(&self.work).zip(&self.mu) {
            *y = x * (-m).exp();
        }
        state.beta.copy_from_slice(beta_next);
        state.t += dt;
        Ok(report)
    }

    fn check_step(&self, state: &PathState, scheme: Scheme, dt: f64, n_noise: usize) -> Result<()> {
        if state.scheme != scheme {
            return Err(Error::Precondition(format!(
                "state holds a {} solution, cannot take a {} step",
                state.scheme.as_str(),
                scheme.as_str()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
        }
        if n_noise != self.noise.n_modes() {
            return Err(Error::SizeMismatch {
                expected: self.noise.n_modes(),
                got: n_noise,
            });
        }
        self.grid.check_len(&state.field)
    }

    /// Residual `G(u) = c ⊙ p⁻¹(u) − dt Δ_h u − b` into `self.g`, `Δ_h u` into `self.lap`.
    fn residual(&mut self, dt: f64) -> f64 {
        self.grid.apply_laplacian(&self.u, &mut self.lap);
        let reg = self.reg;
        for i in 0..self.u.len() {
            self.g[i] = self.weight[i] * reg.pressure_inverse(self.u[i]) - dt * self.lap[i] - self.rhs[i];
        }
        norm2(&self.g)
    }

    /// Solves `c ⊙ X − dt Δ_h p(X) = b` (with `c = self.weight`, `b = self.rhs`)
    /// starting from `X = self.guess`. The solution is left in `self.work`.
    fn implicit_solve(&mut self, dt: f64) -> Result<StepReport> {
        let mut report = StepReport::default();
        let b_norm = norm2(&self.rhs);
        if !b_norm.is_finite() {
            return Err(Error::NonFinite);
        }
        if b_norm == 0.0 {
            self.work.fill(0.0);
            return Ok(report);
        }
        if !self.options.drift {
            for i in 0..self.work.len() {
                self.work[i] = self.rhs[i] / self.weight[i];
            }
            return Ok(report);
        }
        let reg = self.reg;
        for (u, &x) in self.u.iter_mut().zip(&self.guess) {
            *u = reg.pressure(x);
        }
        let target = self.options.newton_tol * b_norm;
        let mut g_norm = self.residual(dt);
        while g_norm > target {
            if report.newton_iterations >= self.options.max_newton || !g_norm.is_finite() {
                if !g_norm.is_finite() {
                    return Err(Error::NonFinite);
                }
                return Err(Error::Newton {
                    iterations: report.newton_iterations,
                    residual: g_norm / b_norm,
                });
            }
            report.newton_iterations += 1;
            for i in 0..self.u.len() {
                self.diag[i] = self.weight[i] * reg.pressure_inverse_slope(self.u[i]);
                self.g[i] = -self.g[i];
            }
            self.delta.fill(0.0);
            let stats = self.solver.solve_into(self.grid, dt, &self.diag, &self.g, &mut self.delta)?;
            report.cg_iterations += stats.iterations;

            // self.g now holds −G(u); directional derivative ⟨G, δ⟩ < 0.
            let slope: f64 = -self.g.iter().zip(&self.delta).map(|(a, b)| a * b).sum::<f64>();
            self.grid.apply_laplacian(&self.delta, &mut self.lap_delta);
            let lap_u_delta: f64 = self.lap.iter().zip(&self.delta).map(|(a, b)| a * b).sum();
            let lap_delta_delta: f64 = self.lap_delta.iter().zip(&self.delta).map(|(a, b)| a * b).sum();
            let b_delta: f64 = self.rhs.iter().zip(&self.delta).map(|(a, b)| a * b).sum();
            let energy_change = |s: f64, u: &[f64], delta: &[f64], weight: &[f64]| -> f64 {
                let mut gamma = 0.0;
                for i in 0..u.len() {
                    gamma += weight[i]
                        * (reg.pressure_inverse_primitive(u[i] + s * delta[i]) - reg.pressure_inverse_primitive(u[i]));
                }
                gamma - s * b_delta - dt * (s * lap_u_delta + 0.5 * s * s * lap_delta_delta)
            };
            let mut s = 1.0;
            loop {
                let dj = energy_change(s, &self.u, &self.delta, &self.weight);
                if dj <= 1e-4 * s * slope || s < 1e-12 {
                    break;
                }
                s *= 0.5;
            }
            for (u, d) in self.u.iter_mut().zip(&self.delta) {
                *u += s * d;
            }
            let new_norm = self.residual(dt);
            if s < 1e-12 && new_norm >= g_norm {
                return Err(Error::Newton {
                    iterations: report.newton_iterations,
                    residual: new_norm / b_norm,
                });
            }
            g_norm = new_norm;
        }
        for (w, &u) in self.work.iter_mut().zip(&self.u) {
            *w = reg.pressure_inverse(u);
        }
        if self.work.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(report)
    }

    /// Applies the positivity and underflow floors to `self.work`; returns the
    /// absolute mass removed.
    fn apply_floor(&mut self, scale: f64) -> f64 {
        let negative = -POSITIVITY_FLOOR * scale;
        let tiny = UNDERFLOW_FLOOR * scale;
        let mut removed = 0.0;
        for v in self.work.iter_mut() {
            if *v < negative || v.abs() < tiny {
                removed += v.abs();
                *v = 0.0;
            }
        }
        removed * self.grid.cell_volume()
    }
}

/// Everything about a run that does not depend on the Brownian path.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub grid: Grid,
    pub noise: NoiseModel,
    pub reg: Regularization,
    /// Shifted initial datum `x − Xc`.
    pub x0: Vec<f64>,
    pub x0_l2: f64,
    pub compacts: Vec<CompactSpec>,
    pub delta_crit_abs: f64,
    pub options: StepOptions,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let noise = config.noise_model(&grid)?;
        let reg = config.regularization()?;
        let x0 = config.initial_datum(&grid)?;
        let x0_l2 = grid.l2_norm(&x0);
        let compacts = config.compact_specs(&grid, &noise)?;
        let scale = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let delta_crit_abs = if scale > 0.0 {
            config.delta_crit * scale
        } else {
            config.delta_crit
        };
        Ok(Simulation {
            config: config.clone(),
            grid,
            noise,
            reg,
            x0,
            x0_l2,
            compacts,
            delta_crit_abs,
            options: StepOptions::default(),
        })
    }

    /// Brownian path for `seed` on the run's time grid (at least one step).
    pub fn brownian(&self, seed: u64) -> Result<BrownianPath> {
        BrownianPath::sample(seed, self.noise.n_modes(), self.config.dt, self.config.n_steps().max(1))
    }

    pub fn observe(&self, state: &PathState) -> Result<ObservableRecord> {
        let x = state.x(&self.noise)?;
        let y = state.y(&self.noise)?;
        let beta_sumsq: f64 = state.beta.iter().map(|b| b * b).sum();
        let mass_k: Vec<f64> = self.compacts.iter().map(|c| mass_over(&x, &self.grid, &c.k)).collect();
        let bound_rhs = self
            .compacts
            .iter()
            .map(|c| decay_bound_rhs(c, self.x0_l2, beta_sumsq, state.t))
            .collect();
        Ok(ObservableRecord {
            t: state.t,
            z: mass(&x, &self.grid),
            l2: self.grid.l2_norm(&x),
            l2_y: self.grid.l2_norm(&y),
            m_noncrit: critical_measure(&x, &self.grid, self.delta_crit_abs)?,
            mass_k,
            bound_rhs,
            beta_sumsq,
            min_x: x.iter().copied().fold(f64::INFINITY, f64::min),
            clamped_mass: state.clamped_mass,
        })
    }

    /// Integrates one path over `[0, t_end]` driven by `path`, recording every
    /// `record_stride` steps and at the final time.
    pub fn run(&self, scheme: Scheme, path: &BrownianPath) -> Result<Trajectory> {
        let stride = self.config.record_stride.max(1);
        self.run_with(scheme, path, self.config.n_steps(), stride, self.x0.clone())
    }

    /// Like [`Simulation::run`] with an explicit step count, record stride and initial field.
    pub fn run_with(
        &self,
        scheme: Scheme,
        path: &BrownianPath,
        n_steps: usize,
        stride: usize,
        x0: Vec<f64>,
    ) -> Result<Trajectory> {
        self.integrate(scheme, path, n_steps, stride, x0).map(|(traj, _)| traj)
    }

    /// Integrates `n_steps` steps and returns the trajectory and the final state.
    pub fn integrate(
        &self,
        scheme: Scheme,
        path: &BrownianPath,
        n_steps: usize,
        stride: usize,
        x0: Vec<f64>,
    ) -> Result<(Trajectory, PathState)> {
        if stride == 0 {
            return Err(Error::Precondition("record stride must be positive".into()));
        }
        if path.n_modes() != self.noise.n_modes() || path.n_steps() < n_steps {
            return Err(Error::Precondition(format!(
                "Brownian path with {} modes and {} steps cannot drive {} modes over {} steps",
                path.n_modes(),
                path.n_steps(),
                self.noise.n_modes(),
                n_steps
            )));
        }
        self.grid.check_len(&x0)?;
        let dt = path.dt();
        let mut state = PathState::new(scheme, x0, self.noise.n_modes());
        if state.field.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite.at_time(0.0));
        }
        let mut stepper = Stepper::new(&self.grid, &self.noise, self.reg, self.options);
        let mut records = vec![self.observe(&state)?];
        for j in 0..n_steps {
            let result = match scheme {
                Scheme::Direct => stepper.step_direct(&mut state, dt, path.increments_at(j)),
                Scheme::Transformed => stepper.step_transformed(&mut state, dt, path.values_at(j + 1)),
            };
            result.map_err(|e| e.at_time((j + 1) as f64 * dt))?;
            // keep time on the grid instead of accumulating rounding
            state.t = (j + 1) as f64 * dt;
            if (j + 1) % stride == 0 || j + 1 == n_steps {
                records.push(self.observe(&state)?);
            }
        }
        Ok((Trajectory { records }, state))
    }
}

/// Runs one path of `config` (first scheme of `config.scheme`) from `seed`.
pub fn run_path(config: &RunConfig, seed: u64) -> Result<Trajectory> {
    let sim = Simulation::new(config)?;
    let path = sim.brownian(seed)?;
    let scheme = config.scheme.schemes()[0];
    sim.run(scheme, &path)
}
