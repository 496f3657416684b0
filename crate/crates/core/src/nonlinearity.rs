//! The sign graph, its Yosida approximation and a C² surrogate of |r|.
//!
//! `ψ = sign` is set-valued at 0. The solver only ever evaluates the
//! single-valued Yosida approximation
//!
//! ```text
//! ψ_λ(r) = r/λ   for |r| ≤ λ,      sign(r)   otherwise,
//! ```
//!
//! and the smooth function `φ_λ` (with `φ_λ(0) = 0`, `φ'_λ = r/λ` on `|r| ≤ λ`,
//! `φ'_λ = ±(1+λ)` for `|r| ≥ 2λ`) is kept for Lyapunov-type diagnostics.
//!
//! On the transition band `λ ≤ |r| ≤ 2λ`, with `s = (|r| − λ)/λ`,
//!
//! ```text
//! φ''_λ = (1/λ)(1 − s)^(1/λ − 1),     φ'_λ = sign(r)·(1 + λ(1 − (1 − s)^(1/λ))).
//! ```
//!
//! This profile is continuous, nonnegative, equals `1/λ` at the inner edge and
//! `0` at the outer edge, and integrates to exactly `λ` over the band. Hence
//! `0 ≤ φ''_λ ≤ C_pp/λ` with `C_pp = 1` and `|φ'_λ − ψ_λ| ≤ λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    lambda: f64,
    c_pp: f64,
}

/// Explicit constant in `φ''_λ ≤ C_pp / λ` for the band profile above.
pub const PHI_SECOND_BOUND: f64 = 1.0;

/// Explicit constant in `|φ'_λ − ψ_λ| ≤ C λ`.
pub const PHI_PRIME_GAP_BOUND: f64 = 1.0;

impl Regularization {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::LambdaOutOfRange(lambda));
        }
        Ok(Regularization {
            lambda,
            c_pp: PHI_SECOND_BOUND,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c_pp(&self) -> f64 {
        self.c_pp
    }

    pub fn psi(&self, r: f64) -> f64 {
        psi_lambda(r, self)
    }

    pub fn phi(&self, r: f64) -> f64 {
        phi_lambda(r, self)
    }

    pub fn phi_prime(&self, r: f64) -> f64 {
        phi_lambda_prime(r, self)
    }

    pub fn phi_second(&self, r: f64) -> f64 {
        phi_lambda_second(r, self)
    }

    /// `p(r) = ψ_λ(r) + λ r`, the quantity diffused by the regularized equation.
    pub fn pressure(&self, r: f64) -> f64 {
        self.psi(r) + self.lambda * r
    }

    /// Knee of the pressure: `p(±λ) = ±(1 + λ²)`.
    fn knee(&self) -> f64 {
        1.0 + self.lambda * self.lambda
    }

    /// Inverse of the strictly increasing, piecewise linear `p`.
    pub fn pressure_inverse(&self, u: f64) -> f64 {
        let l = self.lambda;
        let a = self.knee();
        if u > a {
            (u - 1.0) / l
        } else if u < -a {
            (u + 1.0) / l
        } else {
            u * l / a
        }
    }

    /// Slope of `p⁻¹`; right-continuous at the knees.
    pub fn pressure_inverse_slope(&self, u: f64) -> f64 {
        if u.abs() >= self.knee() {
            1.0 / self.lambda
        } else {
            self.lambda / self.knee()
        }
    }

    /// `Γ(u) = ∫₀ᵘ p⁻¹(s) ds`, convex and even.
    pub fn pressure_inverse_primitive(&self, u: f64) -> f64 {
        let l = self.lambda;
        let a = self.knee();
        let v = u.abs();
        if v <= a {
            0.5 * l / a * v * v
        } else {
            // (a − 1)² / (2λ) = λ³/2
            0.5 * l * a + ((v - 1.0).powi(2) - l.powi(4)) / (2.0 * l)
        }
    }
}

/// Yosida approximation of `sign`.
pub fn psi_lambda(r: f64, reg: &Regularization) -> f64 {
    let l = reg.lambda;
    if r.abs() <= l {
        r / l
    } else {
        r.signum()
    }
}

pub fn phi_lambda(r: f64, reg: &Regularization) -> f64 {
    let l = reg.lambda;
    let v = r.abs();
    if v <= l {
        return v * v / (2.0 * l);
    }
    let q = (1.0 + l) / l;
    let band = |s: f64| l * ((1.0 + l) * s - l * l * (1.0 - (1.0 - s).powf(q)) / (1.0 + l));
    if v <= 2.0 * l {
        0.5 * l + band((v - l) / l)
    } else {
        0.5 * l + band(1.0) + (1.0 + l) * (v - 2.0 * l)
    }
}

pub fn phi_lambda_prime(r: f64, reg: &Regularization) -> f64 {
    let l = reg.lambda;
    let v = r.abs();
    if v <= l {
        r / l
    } else if v <= 2.0 * l {
        let s = (v - l) / l;
        r.signum() * (1.0 + l * (1.0 - (1.0 - s).powf(1.0 / l)))
    } else {
        r.signum() * (1.0 + l)
    }
}

pub fn phi_lambda_second(r: f64, reg: &Regularization) -> f64 {
    let l = reg.lambda;
    let v = r.abs();
    if v <= l {
        1.0 / l
    } else if v <= 2.0 * l {
        let s = (v - l) / l;
        (1.0 - s).powf(1.0 / l - 1.0) / l
    } else {
        0.0
    }
}

/// Minimal section of the sign graph: `sign(r)` for `r ≠ 0`, and `0` at the
/// origin where the graph is the whole interval `[−1, 1]`.
pub fn sign_selection(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r.signum()
    }
}
