//! Initial data for command-line runs.
//!
//! Random data is drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Each grid point consumes one `next_u64()` in storage
//! order, mapped to `u = (x >> 11) · 2⁻⁵³ ∈ [0, 1)` and then to
//! `amplitude · (2u − 1)`. The stream is specified by the ChaCha algorithm
//! itself, so a seed reproduces the same field on every platform.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};
use crate::scalar::Real;

/// Parsed from `constant:v`, `sine:amplitude:mode` or
/// `spinodal:amplitude[:seed]`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Constant(f64),
    /// `amplitude · sin(2π·mode·x/L)`, times the same factor in `y` for 2D.
    Sine {
        amplitude: f64,
        mode: u32,
    },
    /// Uniform noise in `[−amplitude, amplitude]`.
    Spinodal {
        amplitude: f64,
        seed: Option<u64>,
    },
}

impl InitialCondition {
    /// The seed a spinodal field will use, if any: its own or `fallback`.
    pub fn effective_seed(&self, fallback: Option<u64>) -> Option<u64> {
        match self {
            InitialCondition::Spinodal { seed, .. } => seed.or(fallback),
            _ => None,
        }
    }

    /// Samples the field. Spinodal data requires a seed, either inline or
    /// `fallback`.
    pub fn build<T: Real>(
        &self,
        grid: &Arc<PeriodicGrid<T>>,
        fallback: Option<u64>,
    ) -> Result<ScalarField<T>> {
        match *self {
            InitialCondition::Constant(v) => ScalarField::constant(grid, T::lit(v)),
            InitialCondition::Sine { amplitude, mode } => {
                let k = T::lit(2.0) * T::PI() * T::lit(f64::from(mode)) / grid.length();
                let a = T::lit(amplitude);
                let two_d = grid.dim() == 2;
                ScalarField::from_fn(grid, |x, y| {
                    let s = (k * x).sin();
                    if two_d {
                        a * s * (k * y).sin()
                    } else {
                        a * s
                    }
                })
            }
            InitialCondition::Spinodal { amplitude, .. } => {
                let seed = self
                    .effective_seed(fallback)
                    .ok_or_else(|| Error::InvalidParameter("spinodal data needs a seed".into()))?;
                let values = uniform_noise(seed, grid.len(), amplitude)
                    .into_iter()
                    .map(T::lit)
                    .collect();
                ScalarField::new(grid, values)
            }
        }
    }
}

/// `len` samples of the documented ChaCha8 stream scaled to `[−a, a)`.
pub fn uniform_noise(seed: u64, len: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            amplitude * (2.0 * u - 1.0)
        })
        .collect()
}

impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidParameter(format!("initial condition `{s}`: {why}"));
        let num = |field: &str| -> Result<f64> {
            field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(&format!("`{field}` is not a finite number")))
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["constant", v] => Ok(InitialCondition::Constant(num(v)?)),
            ["sine", a, m] => {
                let mode = m
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| bad("mode must be a non-negative integer"))?;
                Ok(InitialCondition::Sine {
                    amplitude: num(a)?,
                    mode,
                })
            }
            ["spinodal", a] => Ok(InitialCondition::Spinodal {
                amplitude: num(a)?,
                seed: None,
            }),
            ["spinodal", a, seed] => {
                let seed = seed
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| bad("seed must be a u64"))?;
                Ok(InitialCondition::Spinodal {
                    amplitude: num(a)?,
                    seed: Some(seed),
                })
            }
            _ => Err(bad(
                "expected constant:v, sine:amplitude:mode or spinodal:amplitude[:seed]",
            )),
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Constant(v) => write!(f, "constant:{v}"),
            InitialCondition::Sine { amplitude, mode } => write!(f, "sine:{amplitude}:{mode}"),
            InitialCondition::Spinodal {
                amplitude,
                seed: Some(s),
            } => write!(f, "spinodal:{amplitude}:{s}"),
            InitialCondition::Spinodal {
                amplitude,
                seed: None,
            } => write!(f, "spinodal:{amplitude}"),
        }
    }
}
