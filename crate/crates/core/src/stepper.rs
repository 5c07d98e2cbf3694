//! The s-stage IEQ Runge–Kutta step for the Cahn–Hilliard system.
//!
//! Given `(φⁿ, qⁿ)` the stages satisfy
//!
//! ```text
//! φ_i = φⁿ + Δt Σ_j a_ij k_j        q_i = qⁿ + Δt Σ_j a_ij l_j
//! k_i = MΔ(−εΔφ_i + φ_i (q_i + C)/ε) l_i = 2 φ_i k_i
//! ```
//!
//! and the step is `φⁿ⁺¹ = φⁿ + Δt Σ b_i k_i`, `qⁿ⁺¹ = qⁿ + Δt Σ b_i l_i`.
//!
//! The stage system is solved by Picard iteration with the stiff linear part
//! `MΔ(−εΔ)` taken implicitly. In Fourier space that part is diagonal with
//! eigenvalue `λ = −Mε|k|⁴`, so every sweep is one dense `s x s` solve per
//! mode with the matrix `I − Δt λ A`. These matrices depend only on the grid
//! and `Δt`; their inverses are built once by [`IeqRkStepper::new`].
//!
//! `q` is carried as an independent unknown. The update reuses the final
//! `k_i` and `l_i` of the iteration unchanged.

use std::fmt;

use rustfft::num_complex::Complex;
use thiserror::Error;

use crate::diagnostics::{q_consistency_residual, Record, RunMeta, TimeSeries};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::model::{CHParams, CHState};
use crate::scalar::Real;
use crate::tableau::ButcherTableau;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Relative discrete-`L²` stage residual at which iteration stops.
    pub tol: T,
    pub max_iter: usize,
    /// A residual above this value aborts the step as divergent.
    pub divergence_guard: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12).max(T::epsilon() * T::lit(100.0)),
            max_iter: 200,
            divergence_guard: T::lit(1e6),
        }
    }
}

/// Converged stage values of one step.
#[derive(Clone, Debug)]
pub struct StageSystem<T: Real> {
    pub phi: Vec<ScalarField<T>>,
    pub q: Vec<ScalarField<T>>,
    pub k: Vec<ScalarField<T>>,
    pub l: Vec<ScalarField<T>>,
    pub dt: T,
    pub iterations: usize,
    pub residual: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T> {
    pub iterations: usize,
    pub final_residual: T,
    pub converged: bool,
    /// `M‖∇μ_i‖²` per stage, evaluated at the converged stage values.
    pub stage_mu_grad_norms: Vec<T>,
}

/// A finished integration: its diagnostics and the state it ended in.
#[derive(Clone, Debug)]
pub struct Run<T: Real> {
    pub series: TimeSeries<T>,
    pub state: CHState<T>,
}

#[derive(Error)]
#[error("step {step}: {source}")]
pub struct IntegrateError<T: Real> {
    /// Index of the step that failed (0 when the inputs were rejected up front).
    pub step: usize,
    #[source]
    pub source: Error,
    /// Everything recorded before the failure.
    pub partial: Option<Box<Run<T>>>,
}

impl<T: Real> fmt::Debug for IntegrateError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrateError")
            .field("step", &self.step)
            .field("source", &self.source)
            .field(
                "recorded_steps",
                &self.partial.as_ref().map(|run| run.series.steps()),
            )
            .finish()
    }
}

/// Step operator for a fixed tableau, time step and model.
#[derive(Clone, Debug)]
pub struct IeqRkStepper<T: Real> {
    params: CHParams<T>,
    tableau: ButcherTableau<T>,
    dt: T,
    opts: SolverOptions<T>,
    /// `−Mε|k|⁴` per mode.
    stiff: Vec<T>,
    /// `−M|k|²` per mode.
    mobility_symbol: Vec<T>,
    /// Row-major `(I − Δt λ A)⁻¹` per mode.
    inverses: Vec<T>,
}

impl<T: Real> IeqRkStepper<T> {
    pub fn new(
        params: &CHParams<T>,
        tableau: &ButcherTableau<T>,
        dt: T,
        opts: SolverOptions<T>,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be finite and non-negative, got {dt}"
            )));
        }
        if !(opts.tol.is_finite() && opts.tol > T::zero()) || opts.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "solver tol must be positive and max_iter >= 1".into(),
            ));
        }
        let s = tableau.stages();
        let (m, eps) = (params.mobility(), params.eps());
        let symbol = params.grid().laplacian_symbol();
        let stiff: Vec<T> = symbol.iter().map(|&sym| -m * eps * sym * sym).collect();
        let mobility_symbol: Vec<T> = symbol.iter().map(|&sym| m * sym).collect();

        let explicit = tableau.is_explicit();
        let mut inverses = Vec::with_capacity(symbol.len() * s * s);
        let mut mat = vec![T::zero(); s * s];
        for (mode, &lambda) in stiff.iter().enumerate() {
            for i in 0..s {
                for j in 0..s {
                    let id = if i == j { T::one() } else { T::zero() };
                    mat[i * s + j] = id - dt * lambda * tableau.a(i, j);
                }
            }
            let inv = invert(&mat, s).ok_or(Error::SingularStageMatrix {
                mode,
                condition: f64::INFINITY,
            })?;
            let condition = norm1(&mat, s) * norm1(&inv, s);
            // unit lower-triangular for explicit tableaus: det = 1, solved by substitution
            if !explicit && (condition.is_nan() || condition > T::one() / T::epsilon()) {
                return Err(Error::SingularStageMatrix {
                    mode,
                    condition: condition.as_f64(),
                });
            }
            inverses.extend_from_slice(&inv);
        }

        Ok(Self {
            params: params.clone(),
            tableau: tableau.clone(),
            dt,
            opts,
            stiff,
            mobility_symbol,
            inverses,
        })
    }

    pub fn params(&self) -> &CHParams<T> {
        &self.params
    }

    pub fn tableau(&self) -> &ButcherTableau<T> {
        &self.tableau
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn options(&self) -> &SolverOptions<T> {
        &self.opts
    }

    /// Solves the coupled stage equations starting from `k_i = 0`.
    ///
    /// Convergence is measured on the stage residual `k_i − MΔμ_i`
    /// preconditioned by the per-mode `(I − Δt λ A)⁻¹`, relative to
    /// `max(1, ‖k_i‖)`. The unpreconditioned residual has a roundoff floor
    /// proportional to `Δt Mε|k|⁴` at the highest resolved wavenumber; the
    /// preconditioned one does not. It equals the Picard increment, so the
    /// iterate it is measured at is the one returned.
    pub fn solve_stages(&self, state: &CHState<T>) -> Result<StageSystem<T>> {
        let grid = self.params.grid();
        if !grid.same_as(state.phi.grid()) || !grid.same_as(state.q.grid()) {
            return Err(Error::GridMismatch);
        }
        let s = self.tableau.stages();
        let dt = self.dt;

        let phi_n_hat = grid.forward(state.phi.values());
        let mut stages = StageSystem {
            phi: vec![state.phi.clone(); s],
            q: vec![state.q.clone(); s],
            k: vec![ScalarField::zeros(grid); s],
            l: vec![ScalarField::zeros(grid); s],
            dt,
            iterations: 0,
            residual: T::infinity(),
        };
        let n0 = grid.forward(self.params.nonlinear_term(&state.phi, &state.q).values());
        let mut nl_hat: Vec<Vec<Complex<T>>> = vec![n0; s];
        let mut previous: Option<Vec<Vec<Complex<T>>>> = None;

        for sweep in 1..=self.opts.max_iter + 1 {
            let k_hat = self.linear_solve(&phi_n_hat, &nl_hat);

            if let Some(prev) = &previous {
                let mut residual = T::zero();
                for (old, new) in prev.iter().zip(&k_hat) {
                    let diff: Vec<Complex<T>> = old.iter().zip(new).map(|(&a, &b)| a - b).collect();
                    let r = spectral_norm(grid, &diff) / T::one().max(spectral_norm(grid, old));
                    residual = if r.is_nan() { r } else { residual.max(r) };
                }
                stages.residual = residual;
                if !residual.is_finite() || residual > self.opts.divergence_guard {
                    return Err(Error::Blowup {
                        iteration: stages.iterations,
                        residual: residual.as_f64(),
                    });
                }
                if residual <= self.opts.tol {
                    return Ok(stages);
                }
                if sweep > self.opts.max_iter {
                    break;
                }
            }

            // accept the new slopes and rebuild the stage values from them
            for (ki, kh) in stages.k.iter_mut().zip(&k_hat) {
                *ki = ScalarField::from_raw(grid, grid.inverse(kh.clone()));
            }
            for i in 0..s {
                stages.phi[i] = combine(&state.phi, &stages.k, |j| dt * self.tableau.a(i, j));
            }
            for i in 0..s {
                stages.l[i] = stages.phi[i].zip_with(&stages.k[i], |p, kv| T::lit(2.0) * p * kv);
            }
            for i in 0..s {
                stages.q[i] = combine(&state.q, &stages.l, |j| dt * self.tableau.a(i, j));
            }
            stages.iterations = sweep;
            if stages.phi.iter().chain(&stages.q).any(|f| !f.is_finite()) {
                return Err(Error::Blowup {
                    iteration: sweep,
                    residual: f64::NAN,
                });
            }
            for (nh, (p, q)) in nl_hat.iter_mut().zip(stages.phi.iter().zip(&stages.q)) {
                *nh = grid.forward(self.params.nonlinear_term(p, q).values());
            }
            previous = Some(k_hat);
        }
        Err(Error::NonConvergence {
            iterations: self.opts.max_iter,
            residual: stages.residual.as_f64(),
        })
    }

    /// One Picard map in mode space: `k̂ = (I − Δt λ A)⁻¹ (λ φ̂ⁿ − M|k|² N̂)`.
    fn linear_solve(
        &self,
        phi_n_hat: &[Complex<T>],
        nl_hat: &[Vec<Complex<T>>],
    ) -> Vec<Vec<Complex<T>>> {
        let s = self.tableau.stages();
        let modes = phi_n_hat.len();
        let zero = Complex::new(T::zero(), T::zero());
        let mut k_hat = vec![vec![zero; modes]; s];
        let mut rhs = vec![zero; s];
        for mode in 0..modes {
            let base = phi_n_hat[mode] * self.stiff[mode];
            for (r, nl) in rhs.iter_mut().zip(nl_hat) {
                *r = base + nl[mode] * self.mobility_symbol[mode];
            }
            let inv = &self.inverses[mode * s * s..(mode + 1) * s * s];
            for (i, kh) in k_hat.iter_mut().enumerate() {
                kh[mode] = rhs
                    .iter()
                    .enumerate()
                    .fold(zero, |acc, (j, r)| acc + *r * inv[i * s + j]);
            }
        }
        k_hat
    }

    /// Applies the RK update with the given converged stages.
    pub fn advance(
        &self,
        state: &CHState<T>,
        stages: &StageSystem<T>,
    ) -> (CHState<T>, StepReport<T>) {
        let dt = self.dt;
        let b = self.tableau.b();
        let phi = combine(&state.phi, &stages.k, |i| dt * b[i]);
        let q = combine(&state.q, &stages.l, |i| dt * b[i]);
        let m = self.params.mobility();
        let stage_mu_grad_norms = stages
            .phi
            .iter()
            .zip(&stages.q)
            .map(|(p, q)| m * self.params.chemical_potential(p, q).grad_norm_sq())
            .collect();
        let next = CHState {
            phi,
            q,
            time: state.time + dt,
        };
        let report = StepReport {
            iterations: stages.iterations,
            final_residual: stages.residual,
            converged: true,
            stage_mu_grad_norms,
        };
        (next, report)
    }

    pub fn step(&self, state: &CHState<T>) -> Result<(CHState<T>, StepReport<T>)> {
        let stages = self.solve_stages(state)?;
        Ok(self.advance(state, &stages))
    }
}

/// `base + Σ_j w(j) · terms[j]`, accumulated pointwise in stage order.
fn combine<T: Real>(
    base: &ScalarField<T>,
    terms: &[ScalarField<T>],
    w: impl Fn(usize) -> T,
) -> ScalarField<T> {
    let weights: Vec<T> = (0..terms.len()).map(w).collect();
    let values = (0..base.len())
        .map(|p| {
            let incr = terms
                .iter()
                .zip(&weights)
                .fold(T::zero(), |acc, (t, &wj)| acc + wj * t.values()[p]);
            base.values()[p] + incr
        })
        .collect();
    ScalarField::from_raw(base.grid(), values)
}

/// Gauss–Jordan inverse with partial pivoting; `None` for an exactly singular matrix.
fn invert<T: Real>(mat: &[T], s: usize) -> Option<Vec<T>> {
    let mut a = mat.to_vec();
    let mut inv = vec![T::zero(); s * s];
    for i in 0..s {
        inv[i * s + i] = T::one();
    }
    for col in 0..s {
        let pivot = (col..s).max_by(|&x, &y| {
            let (px, py) = (a[x * s + col].abs(), a[y * s + col].abs());
            px.partial_cmp(&py).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        let p = a[pivot * s + col];
        if p == T::zero() || !p.is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..s {
                a.swap(pivot * s + j, col * s + j);
                inv.swap(pivot * s + j, col * s + j);
            }
        }
        for j in 0..s {
            a[col * s + j] = a[col * s + j] / p;
            inv[col * s + j] = inv[col * s + j] / p;
        }
        for row in 0..s {
            if row == col {
                continue;
            }
            let f = a[row * s + col];
            if f == T::zero() {
                continue;
            }
            for j in 0..s {
                a[row * s + j] = a[row * s + j] - f * a[col * s + j];
                inv[row * s + j] = inv[row * s + j] - f * inv[col * s + j];
            }
        }
    }
    Some(inv)
}

/// Maximum absolute column sum.
fn norm1<T: Real>(mat: &[T], s: usize) -> T {
    (0..s)
        .map(|j| (0..s).fold(T::zero(), |acc, i| acc + mat[i * s + j].abs()))
        .fold(T::zero(), |m, v| m.max(v))
}

/// Solves the stage system of one step; see [`IeqRkStepper::solve_stages`].
pub fn solve_stage_system<T: Real>(
    state: &CHState<T>,
    tableau: &ButcherTableau<T>,
    dt: T,
    params: &CHParams<T>,
    opts: SolverOptions<T>,
) -> Result<StageSystem<T>> {
    IeqRkStepper::new(params, tableau, dt, opts)?.solve_stages(state)
}

/// Advances `state` by one step of size `dt`.
pub fn step<T: Real>(
    state: &CHState<T>,
    tableau: &ButcherTableau<T>,
    dt: T,
    params: &CHParams<T>,
    opts: SolverOptions<T>,
) -> Result<(CHState<T>, StepReport<T>)> {
    IeqRkStepper::new(params, tableau, dt, opts)?.step(state)
}

/// Unpreconditioned stage residual `max_i ‖k_i − MΔμ_i‖ / max(1, ‖k_i‖)`
/// with `μ_i` built through the model.
pub fn strong_stage_residual<T: Real>(stages: &StageSystem<T>, params: &CHParams<T>) -> T {
    stages
        .k
        .iter()
        .zip(strong_residual_fields(stages, params))
        .map(|(k, r)| r.l2_norm() / T::one().max(k.l2_norm()))
        .fold(T::zero(), |m, v| m.max(v))
}

fn strong_residual_fields<T: Real>(
    stages: &StageSystem<T>,
    params: &CHParams<T>,
) -> Vec<ScalarField<T>> {
    stages
        .k
        .iter()
        .zip(stages.phi.iter().zip(&stages.q))
        .map(|(k, (phi, q))| {
            // MΔμ = −Gμ
            let g_mu = params.apply_g(&params.chemical_potential(phi, q));
            k.zip_with(&g_mu, |a, b| a + b)
        })
        .collect()
}

/// Preconditioned stage residual recomputed from the stage fields alone: the
/// strong residual is transformed and solved against a freshly assembled
/// `I − Δt λ A` per mode.
pub fn stage_residual<T: Real>(
    stages: &StageSystem<T>,
    tableau: &ButcherTableau<T>,
    params: &CHParams<T>,
) -> T {
    let grid = params.grid();
    let s = tableau.stages();
    let (m, eps) = (params.mobility(), params.eps());
    let spectra: Vec<Vec<Complex<T>>> = strong_residual_fields(stages, params)
        .iter()
        .map(|r| grid.forward(r.values()))
        .collect();
    let mut solved = spectra.clone();
    let mut mat = vec![T::zero(); s * s];
    let mut rhs = vec![Complex::new(T::zero(), T::zero()); s];
    for (mode, &sym) in grid.laplacian_symbol().iter().enumerate() {
        let lambda = -m * eps * sym * sym;
        for i in 0..s {
            for j in 0..s {
                let id = if i == j { T::one() } else { T::zero() };
                mat[i * s + j] = id - stages.dt * lambda * tableau.a(i, j);
            }
            rhs[i] = spectra[i][mode];
        }
        solve_dense(&mut mat, &mut rhs, s);
        for i in 0..s {
            solved[i][mode] = rhs[i];
        }
    }
    solved
        .iter()
        .zip(&stages.k)
        .map(|(r, k)| spectral_norm(grid, r) / T::one().max(k.l2_norm()))
        .fold(T::zero(), |acc, v| acc.max(v))
}

/// Discrete `L²` norm of a field given by its unnormalised spectrum.
fn spectral_norm<T: Real>(grid: &crate::grid::PeriodicGrid<T>, spectrum: &[Complex<T>]) -> T {
    let sum = spectrum.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
    (sum * grid.cell_volume() / T::from_count(grid.len())).sqrt()
}

/// In-place Gaussian elimination with partial pivoting, complex right-hand side.
fn solve_dense<T: Real>(mat: &mut [T], rhs: &mut [Complex<T>], s: usize) {
    for col in 0..s {
        let mut pivot = col;
        for row in col + 1..s {
            if mat[row * s + col].abs() > mat[pivot * s + col].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for j in 0..s {
                mat.swap(pivot * s + j, col * s + j);
            }
            rhs.swap(pivot, col);
        }
        let p = mat[col * s + col];
        for row in col + 1..s {
            let f = mat[row * s + col] / p;
            for j in col..s {
                mat[row * s + j] = mat[row * s + j] - f * mat[col * s + j];
            }
            rhs[row] = rhs[row] - rhs[col] * f;
        }
    }
    for row in (0..s).rev() {
        let mut acc = rhs[row];
        for j in row + 1..s {
            acc = acc - rhs[j] * mat[row * s + j];
        }
        rhs[row] = acc / mat[row * s + row];
    }
}

fn record_for<T: Real>(state: &CHState<T>, params: &CHParams<T>, step: usize) -> Record<T> {
    Record {
        step,
        t: state.time,
        energy: params.original_energy(&state.phi),
        modified_energy: params.modified_energy(&state.phi, &state.q),
        q_residual_inf: q_consistency_residual(&state.phi, &state.q, params),
        mass: state.phi.quadrature(),
        balance_defect: T::zero(),
        iterations: 0,
        converged: true,
    }
}

/// Runs `n_steps` steps from `phi0` with the consistent `q⁰`, recording
/// diagnostics after every step.
pub fn integrate<T: Real>(
    phi0: &ScalarField<T>,
    tableau: &ButcherTableau<T>,
    dt: T,
    n_steps: usize,
    params: &CHParams<T>,
    opts: SolverOptions<T>,
) -> Result<Run<T>, IntegrateError<T>> {
    let reject = |source| IntegrateError {
        step: 0,
        source,
        partial: None,
    };
    if n_steps == 0 {
        return Err(reject(Error::InvalidParameter(
            "n_steps must be at least 1".into(),
        )));
    }
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(reject(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        ))));
    }
    if !params.grid().same_as(phi0.grid()) {
        return Err(reject(Error::GridMismatch));
    }
    let stepper = IeqRkStepper::new(params, tableau, dt, opts).map_err(reject)?;

    let grid = params.grid();
    let meta = RunMeta {
        tableau: tableau.name().to_string(),
        dt,
        dim: grid.dim(),
        n: grid.n(),
        length: grid.length(),
        mobility: params.mobility(),
        eps: params.eps(),
        c: params.c(),
        tol: opts.tol,
        seed: None,
    };
    let mut state = CHState::consistent(phi0.clone(), params);
    let mut series = TimeSeries::new(meta, record_for(&state, params, 0));
    let b = tableau.b();

    for n in 1..=n_steps {
        match stepper.step(&state) {
            Ok((next, report)) => {
                let mut rec = record_for(&next, params, n);
                // Keep the step time exactly n·dt to avoid drift from repeated addition.
                rec.t = dt * T::from_count(n);
                let dissipated = report
                    .stage_mu_grad_norms
                    .iter()
                    .zip(b)
                    .fold(T::zero(), |acc, (&g, &bi)| acc + bi * g);
                rec.balance_defect = rec.energy - series.last().energy + dt * dissipated;
                rec.iterations = report.iterations;
                rec.converged = report.converged;
                series.push(rec);
                state = next;
                state.time = dt * T::from_count(n);
            }
            Err(source) => {
                return Err(IntegrateError {
                    step: n,
                    source,
                    partial: Some(Box::new(Run { series, state })),
                })
            }
        }
    }
    Ok(Run { series, state })
}
