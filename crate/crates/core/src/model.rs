//! Cahn–Hilliard model in IEQ form.
//!
//! The auxiliary variable `q = φ² − 1 − C` turns the double-well energy into
//! a quadratic one:
//!
//! ```text
//! E(φ)    = ∫ ε/2 |∇φ|² + (φ² − 1)² / (4ε)
//! F(φ, q) = ∫ ε/2 |∇φ|² + C/(2ε) φ² + (q² − C² − 2C) / (4ε)
//! μ       = −εΔφ + φ (q + C) / ε
//! ```
//!
//! and `F = E` whenever `q` is consistent with `φ`. All integrals use the
//! spectral gradient and the grid quadrature so the discrete energies obey
//! the same identities as the continuous ones.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct CHParams<T: Real> {
    mobility: T,
    eps: T,
    c: T,
    grid: Arc<PeriodicGrid<T>>,
}

impl<T: Real> CHParams<T> {
    pub fn new(grid: Arc<PeriodicGrid<T>>, mobility: T, eps: T, c: T) -> Result<Self> {
        if !(mobility.is_finite() && mobility > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "mobility M must be positive, got {mobility}"
            )));
        }
        if !(eps.is_finite() && eps > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {eps}"
            )));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "C must be finite, got {c}"
            )));
        }
        Ok(Self {
            mobility,
            eps,
            c,
            grid,
        })
    }

    pub fn mobility(&self) -> T {
        self.mobility
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    /// IEQ stabilisation constant `C`.
    pub fn c(&self) -> T {
        self.c
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid<T>> {
        &self.grid
    }

    fn check(&self, f: &ScalarField<T>) {
        assert!(
            self.grid.same_as(f.grid()),
            "field is not on the model grid"
        );
    }

    /// Consistent auxiliary variable `φ² − 1 − C`.
    pub fn initial_q(&self, phi: &ScalarField<T>) -> ScalarField<T> {
        self.check(phi);
        let c = self.c;
        phi.map(|p| p * p - T::one() - c)
    }

    /// Pointwise `φ (q + C) / ε`.
    pub fn nonlinear_term(&self, phi: &ScalarField<T>, q: &ScalarField<T>) -> ScalarField<T> {
        let (c, inv_eps) = (self.c, self.eps.recip());
        phi.zip_with(q, |p, q| inv_eps * p * (q + c))
    }

    /// `μ = −εΔφ + φ (q + C) / ε`.
    pub fn chemical_potential(&self, phi: &ScalarField<T>, q: &ScalarField<T>) -> ScalarField<T> {
        self.check(phi);
        self.check(q);
        let lap = phi.laplacian();
        let eps = self.eps;
        lap.zip_with(&self.nonlinear_term(phi, q), |l, n| n - eps * l)
    }

    /// `E(φ) = ε/2 ‖∇φ‖² + (1/4ε) ∫ (φ² − 1)²`.
    pub fn original_energy(&self, phi: &ScalarField<T>) -> T {
        self.check(phi);
        let well = phi.map(|p| {
            let w = p * p - T::one();
            w * w
        });
        self.eps * T::lit(0.5) * phi.grad_norm_sq() + well.quadrature() / (T::lit(4.0) * self.eps)
    }

    /// Modified energy `F(φ, q)` evaluated term by term.
    pub fn modified_energy(&self, phi: &ScalarField<T>, q: &ScalarField<T>) -> T {
        self.check(phi);
        self.check(q);
        let (c, eps) = (self.c, self.eps);
        let local = phi.zip_with(q, |p, q| {
            c / (T::lit(2.0) * eps) * p * p
                + (q * q - c * c - T::lit(2.0) * c) / (T::lit(4.0) * eps)
        });
        eps * T::lit(0.5) * phi.grad_norm_sq() + local.quadrature()
    }

    /// `L φ = −εΔφ + (C/ε) φ`.
    pub fn apply_l(&self, f: &ScalarField<T>) -> ScalarField<T> {
        self.check(f);
        let (eps, shift) = (self.eps, self.c / self.eps);
        ScalarField::from_raw(
            &self.grid,
            self.grid
                .apply_multiplier(f.values(), |sym| shift - eps * sym),
        )
    }

    fn dot(&self, f: &ScalarField<T>, g: &ScalarField<T>) -> T {
        self.grid.dot_values(f.values(), g.values())
    }

    /// `F` written as `½(φ, Lφ) + (q, q)/(4ε) − (C² + 2C)|Ω|/(4ε)`.
    pub fn modified_energy_quadratic(&self, phi: &ScalarField<T>, q: &ScalarField<T>) -> T {
        self.check(q);
        let (c, eps) = (self.c, self.eps);
        T::lit(0.5) * self.dot(phi, &self.apply_l(phi)) + self.dot(q, q) / (T::lit(4.0) * eps)
            - (c * c + T::lit(2.0) * c) * self.grid.domain_measure() / (T::lit(4.0) * eps)
    }

    /// `E` written as `½(φ, Lφ) − C/(2ε)(φ, φ) + (φ² − 1, φ² − 1)/(4ε)`.
    pub fn original_energy_quadratic(&self, phi: &ScalarField<T>) -> T {
        let (c, eps) = (self.c, self.eps);
        let w = phi.map(|p| p * p - T::one());
        T::lit(0.5) * self.dot(phi, &self.apply_l(phi))
            - c / (T::lit(2.0) * eps) * self.dot(phi, phi)
            + self.dot(&w, &w) / (T::lit(4.0) * eps)
    }

    /// Mobility operator `G f = −M Δf`.
    pub fn apply_g(&self, f: &ScalarField<T>) -> ScalarField<T> {
        self.check(f);
        let m = self.mobility;
        ScalarField::from_raw(
            &self.grid,
            self.grid.apply_multiplier(f.values(), |sym| -m * sym),
        )
    }

    /// `−M ‖∇μ‖²`, the instantaneous rate of change of `F`.
    pub fn dissipation_rate(&self, phi: &ScalarField<T>, q: &ScalarField<T>) -> T {
        -self.mobility * self.chemical_potential(phi, q).grad_norm_sq()
    }
}

/// The pair `(φ, q)` at a given time.
#[derive(Clone, Debug)]
pub struct CHState<T: Real> {
    pub phi: ScalarField<T>,
    pub q: ScalarField<T>,
    pub time: T,
}

impl<T: Real> CHState<T> {
    pub fn new(phi: ScalarField<T>, q: ScalarField<T>, time: T) -> Result<Self> {
        if !phi.same_grid(&q) {
            return Err(Error::GridMismatch);
        }
        if let Some(index) = phi.first_non_finite().or_else(|| q.first_non_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { phi, q, time })
    }

    /// State at `t = 0` with the consistent `q⁰ = (φ⁰)² − 1 − C`.
    pub fn consistent(phi: ScalarField<T>, params: &CHParams<T>) -> Self {
        let q = params.initial_q(&phi);
        Self {
            phi,
            q,
            time: T::zero(),
        }
    }
}
