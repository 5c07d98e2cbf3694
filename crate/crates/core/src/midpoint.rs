//! Fully implicit midpoint-type scheme in `φ` alone.
//!
//! ```text
//! (φⁿ⁺¹ − φⁿ)/Δt = MΔμ
//! μ = −εΔ(φⁿ⁺¹ + φⁿ)/2 + (φⁿ⁺¹ + φⁿ)/(2ε) · [((φⁿ⁺¹)² + (φⁿ)²)/2 − 1]
//! ```
//!
//! The one-stage Gauss IEQ-RK step reduces to this scheme, so it serves as a
//! cross-check for the stepper. It never forms `q` and shares nothing with
//! the stepper beyond the grid transforms.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::model::CHParams;
use crate::scalar::Real;
use crate::stepper::SolverOptions;

/// Solves for `φⁿ⁺¹` by Picard iteration on the nonlinear term with the
/// biharmonic part implicit.
///
/// The residual is `(φⁿ⁺¹ − φⁿ)/Δt − MΔμ` scaled per mode by
/// `(1 + Δt Mε|k|⁴/2)⁻¹`, relative to `max(1, ‖(φⁿ⁺¹ − φⁿ)/Δt‖)`; it equals
/// the Picard increment divided by `Δt`.
pub fn step_midpoint<T: Real>(
    phi_n: &ScalarField<T>,
    dt: T,
    params: &CHParams<T>,
    opts: SolverOptions<T>,
) -> Result<ScalarField<T>> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let grid = params.grid();
    if !grid.same_as(phi_n.grid()) {
        return Err(Error::GridMismatch);
    }
    let (m, eps) = (params.mobility(), params.eps());
    let half = T::lit(0.5);
    let sym = grid.laplacian_symbol();
    let old = phi_n.values();
    let old_hat = grid.forward(old);

    // g(ψ) = (ψ + φⁿ)/(2ε) · ((ψ² + (φⁿ)²)/2 − 1)
    let well = |new: &[T]| -> Vec<T> {
        new.iter()
            .zip(old)
            .map(|(&a, &b)| (a + b) / (T::lit(2.0) * eps) * ((a * a + b * b) * half - T::one()))
            .collect()
    };
    // (1 + Δt Mε|k|⁴/2) ψ̂ = (1 − Δt Mε|k|⁴/2) φ̂ⁿ + Δt M sym ĝ(ψ)
    let picard = |new: &[T]| -> Vec<T> {
        let g_hat = grid.forward(&well(new));
        let next_hat: Vec<Complex<T>> = old_hat
            .iter()
            .zip(&g_hat)
            .zip(sym)
            .map(|((&p, &g), &s)| {
                let bi = half * dt * m * eps * s * s;
                (p * (T::one() - bi) + g * (dt * m * s)) / (T::one() + bi)
            })
            .collect();
        grid.inverse(next_hat)
    };
    let norm = |v: &[T]| grid.dot_values(v, v).sqrt();

    let mut current = old.to_vec();
    let mut residual = T::infinity();
    for iteration in 0..=opts.max_iter {
        let next = picard(&current);
        let increment: Vec<T> = next
            .iter()
            .zip(&current)
            .map(|(&a, &b)| (a - b) / dt)
            .collect();
        let rate: Vec<T> = current
            .iter()
            .zip(old)
            .map(|(&a, &b)| (a - b) / dt)
            .collect();
        residual = norm(&increment) / T::one().max(norm(&rate));
        if !residual.is_finite() || residual > opts.divergence_guard {
            return Err(Error::Blowup {
                iteration,
                residual: residual.as_f64(),
            });
        }
        if residual <= opts.tol {
            return ScalarField::new(grid, current);
        }
        current = next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: residual.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn params() -> CHParams<f64> {
        let g = Arc::new(PeriodicGrid::new(1, 64, 2.0 * PI).unwrap());
        CHParams::new(g, 1.0, 0.5, 0.0).unwrap()
    }

    #[test]
    fn constant_states_are_fixed_points() {
        let p = params();
        for v in [1.0, 0.0, -1.0] {
            let phi = ScalarField::constant(p.grid(), v).unwrap();
            let next = step_midpoint(&phi, 1e-2, &p, SolverOptions::default()).unwrap();
            assert!(next.max_abs_diff(&phi).unwrap() <= 1e-14);
        }
    }

    #[test]
    fn conserves_mass() {
        let p = params();
        let phi =
            ScalarField::from_fn(p.grid(), |x, _| 0.2 + 0.3 * x.sin() + 0.1 * (5.0 * x).cos())
                .unwrap();
        let mut cur = phi.clone();
        for _ in 0..10 {
            cur = step_midpoint(&cur, 1e-3, &p, SolverOptions::default()).unwrap();
        }
        assert!((cur.quadrature() - phi.quadrature()).abs() <= 1e-10 * p.grid().domain_measure());
    }

    #[test]
    fn rejects_non_positive_dt() {
        let p = params();
        let phi = ScalarField::zeros(p.grid());
        assert!(step_midpoint(&phi, 0.0, &p, SolverOptions::default()).is_err());
    }
}
