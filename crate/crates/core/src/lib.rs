//! Simulation and verification tools for the stochastic porous-media equation
//! with sign nonlinearity on a bounded box.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod noise;
pub mod nonlinearity;
pub mod observables;
pub mod report;
pub mod solver;

pub use config::{parse_config, Profile, RunConfig, SchemeChoice};
pub use ensemble::{run_ensemble, run_single, RunManifest};
pub use error::{Error, Result};
pub use grid::{build_grid, eigenmode, laplacian_apply, solve_shifted, EigenMode, Grid};
pub use noise::{derive_path_seed, sample_path, BrownianPath, NoiseModel, NoiseShape};
pub use nonlinearity::{phi_lambda, phi_lambda_prime, phi_lambda_second, psi_lambda, Regularization};
pub use observables::{CompactSpec, ObservableRecord, Trajectory};
pub use solver::{run_path, shift_to_origin, PathState, Scheme, Simulation, StepOptions, Stepper};
pub use report::{report, Summary};
