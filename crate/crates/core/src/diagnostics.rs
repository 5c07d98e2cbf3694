//! Per-step records and machine-checkable verdicts over them.
//!
//! A [`TimeSeries`] holds one [`Record`] for the initial state and one per
//! accepted step. The checks here compare recorded quantities against
//! thresholds supplied by the caller and never re-run the solver.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::model::CHParams;
use crate::scalar::Real;
use crate::stepper::Run;

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub step: usize,
    pub t: T,
    /// Original energy `E(φⁿ)`.
    pub energy: T,
    /// Modified energy `F(φⁿ, qⁿ)`.
    pub modified_energy: T,
    /// `‖qⁿ − ((φⁿ)² − 1 − C)‖_∞`.
    pub q_residual_inf: T,
    /// `∫ φⁿ`.
    pub mass: T,
    /// `E(φⁿ) − E(φⁿ⁻¹) + Δt Σ b_i M‖∇μ_i‖²`; zero on the initial record.
    pub balance_defect: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMeta<T> {
    pub tableau: String,
    pub dt: T,
    pub dim: usize,
    pub n: usize,
    pub length: T,
    pub mobility: T,
    pub eps: T,
    pub c: T,
    pub tol: T,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TimeSeries<T> {
    pub meta: RunMeta<T>,
    records: Vec<Record<T>>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(meta: RunMeta<T>, initial: Record<T>) -> Self {
        Self {
            meta,
            records: vec![initial],
        }
    }

    /// Appends a record; times must increase strictly.
    pub fn push(&mut self, record: Record<T>) {
        let last = self.records.last().expect("series has an initial record");
        assert!(record.t > last.t, "time must increase strictly");
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record<T>] {
        &self.records
    }

    pub fn initial(&self) -> &Record<T> {
        &self.records[0]
    }

    pub fn last(&self) -> &Record<T> {
        self.records.last().expect("series has an initial record")
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn domain_measure(&self) -> T {
        self.meta.length.powi(self.meta.dim as i32)
    }

    /// `max(1, |E⁰|)`, the scale relative energy tolerances are measured against.
    pub fn energy_scale(&self) -> T {
        T::one().max(self.initial().energy.abs())
    }
}

/// `‖q − (φ² − 1 − C)‖_∞`.
pub fn q_consistency_residual<T: Real>(
    phi: &ScalarField<T>,
    q: &ScalarField<T>,
    params: &CHParams<T>,
) -> T {
    let c = params.c();
    phi.values()
        .iter()
        .zip(q.values())
        .fold(T::zero(), |m, (&p, &q)| {
            nan_max(m, (q - (p * p - T::one() - c)).abs())
        })
}

fn nan_max<T: Real>(a: T, b: T) -> T {
    if a.is_nan() || b.is_nan() {
        T::nan()
    } else {
        a.max(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub threshold: f64,
    /// Step at which `worst` was observed.
    pub at_step: usize,
}

impl Verdict {
    fn from_worst(name: &str, worst: f64, at_step: usize, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            // NaN never passes
            passed: worst <= threshold,
            worst,
            threshold,
            at_step,
        }
    }
}

fn worst_of<T: Real>(values: impl Iterator<Item = (usize, T)>) -> (f64, usize) {
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0;
    for (step, v) in values {
        let v = v.as_f64();
        if v.is_nan() {
            return (f64::NAN, step);
        }
        if v > worst {
            worst = v;
            at = step;
        }
    }
    (worst.max(0.0), at)
}

/// Passes iff every recorded consistency residual is at most `tol`.
pub fn check_q_consistency<T: Real>(ts: &TimeSeries<T>, tol: T) -> Verdict {
    let (worst, at) = worst_of(ts.records().iter().map(|r| (r.step, r.q_residual_inf)));
    Verdict::from_worst("q_consistency", worst, at, tol.as_f64())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyVerdict {
    pub monotone: Verdict,
    pub balance: Verdict,
}

impl EnergyVerdict {
    pub fn passed(&self) -> bool {
        self.monotone.passed && self.balance.passed
    }
}

/// Energy increments and balance defects, both relative to `max(1, |E⁰|)`.
pub fn check_energy_dissipation<T: Real>(ts: &TimeSeries<T>, tol: T) -> EnergyVerdict {
    let threshold = (tol * ts.energy_scale()).as_f64();
    let recs = ts.records();
    let (inc, inc_at) = worst_of(
        recs.windows(2)
            .map(|w| (w[1].step, w[1].energy - w[0].energy)),
    );
    let (defect, defect_at) = worst_of(
        recs.iter()
            .skip(1)
            .map(|r| (r.step, r.balance_defect.abs())),
    );
    EnergyVerdict {
        monotone: Verdict::from_worst("energy_monotone", inc, inc_at, threshold),
        balance: Verdict::from_worst("energy_balance", defect, defect_at, threshold),
    }
}

/// `|E − F| ≤ tol · max(1, |E⁰|)` at every record.
pub fn check_energy_equivalence<T: Real>(ts: &TimeSeries<T>, tol: T) -> Verdict {
    let threshold = (tol * ts.energy_scale()).as_f64();
    let (worst, at) = worst_of(
        ts.records()
            .iter()
            .map(|r| (r.step, (r.energy - r.modified_energy).abs())),
    );
    Verdict::from_worst("energy_equivalence", worst, at, threshold)
}

/// `|∫φⁿ − ∫φ⁰| ≤ tol · |Ω|` at every record.
pub fn check_mass<T: Real>(ts: &TimeSeries<T>, tol: T) -> Verdict {
    let m0 = ts.initial().mass;
    let threshold = (tol * ts.domain_measure()).as_f64();
    let (worst, at) = worst_of(ts.records().iter().map(|r| (r.step, (r.mass - m0).abs())));
    Verdict::from_worst("mass", worst, at, threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderEstimate {
    /// Least-squares slope of `log(error)` against `log(dt)`.
    pub slope: f64,
    /// Some refinement level fell to the precision floor.
    pub floor_limited: bool,
    /// `(dt, error)` per level, coarsest first.
    pub levels: Vec<(f64, f64)>,
    /// Number of levels entering the fit.
    pub used: usize,
}

impl OrderEstimate {
    /// Slopes between consecutive levels.
    pub fn pairwise_slopes(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
            .collect()
    }

    /// True when the slope is within `band` of `expected`, or when the run is
    /// floor-limited and the pre-floor slope reaches `floor_minimum`.
    pub fn within(&self, expected: f64, band: f64, floor_minimum: f64) -> bool {
        (self.slope - expected).abs() <= band || (self.floor_limited && self.slope >= floor_minimum)
    }
}

/// Self-convergence order from runs at decreasing `dt` against a fine-`dt`
/// reference of the same scheme. Errors are discrete `L²` norms of the final
/// `φ`; levels whose error is at or below `floor` are left out of the fit.
pub fn estimate_order<T: Real>(
    runs: &[Run<T>],
    reference: &Run<T>,
    floor: T,
) -> Result<OrderEstimate> {
    if runs.len() < 3 {
        return Err(Error::InsufficientLevels(runs.len()));
    }
    let t_ref = reference.state.time;
    let mut levels = Vec::with_capacity(runs.len());
    for run in runs {
        let t = run.state.time;
        if (t - t_ref).abs() > T::lit(1e-9) * T::one().max(t_ref.abs()) {
            return Err(Error::FinalTimeMismatch {
                expected: t_ref.as_f64(),
                found: t.as_f64(),
            });
        }
        let err = run.state.phi.l2_distance(&reference.state.phi)?;
        levels.push((run.series.meta.dt.as_f64(), err.as_f64()));
    }
    levels.sort_by(|a, b| b.0.total_cmp(&a.0));

    let floor = floor.as_f64();
    let above: Vec<(f64, f64)> = levels.iter().copied().filter(|&(_, e)| e > floor).collect();
    let floor_limited = above.len() < levels.len();
    let fit: &[(f64, f64)] = if above.len() >= 2 {
        &above
    } else {
        &levels[..2]
    };
    Ok(OrderEstimate {
        slope: log_log_slope(fit),
        floor_limited,
        used: fit.len(),
        levels,
    })
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
