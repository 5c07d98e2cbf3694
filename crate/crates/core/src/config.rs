//! TOML run configuration for the command-line front end.
//!
//! ```toml
//! seed = 42
//! initial = "spinodal:0.05"
//!
//! [grid]
//! dim = 1
//! n = 128
//! length = 6.283185307179586
//!
//! [model]
//! eps = 0.5
//! M = 1.0
//! C = 0.0
//!
//! [time]
//! dt = 1e-3
//! n_steps = 1000
//! tableau = "gauss4"
//!
//! [solver]
//! tol = 1e-12
//! max_iter = 200
//!
//! [output]
//! out_dir = "out"
//! ```
//!
//! Every key is optional. `[checks]` holds the verdict thresholds and
//! `[convergence]` the refinement study (see [`ConvergenceSection`]).

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::initial::InitialCondition;
use crate::stepper::SolverOptions;
use crate::{Grid, Params, Tableau};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<crate::Error> for ConfigError {
    fn from(e: crate::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: Option<u64>,
    pub initial: String,
    pub grid: GridSection,
    pub model: ModelSection,
    pub time: TimeSection,
    pub solver: SolverSection,
    pub output: OutputSection,
    pub checks: ChecksSection,
    pub convergence: ConvergenceSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: Some(42),
            initial: "spinodal:0.05".into(),
            grid: GridSection::default(),
            model: ModelSection::default(),
            time: TimeSection::default(),
            solver: SolverSection::default(),
            output: OutputSection::default(),
            checks: ChecksSection::default(),
            convergence: ConvergenceSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            dim: 1,
            n: 128,
            length: 2.0 * PI,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub eps: f64,
    #[serde(rename = "M", alias = "mobility")]
    pub mobility: f64,
    #[serde(rename = "C", alias = "c")]
    pub c: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            eps: 0.5,
            mobility: 1.0,
            c: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub n_steps: usize,
    pub tableau: String,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            dt: 1e-3,
            n_steps: 1000,
            tableau: "gauss4".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_guard: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::<f64>::default();
        SolverSection {
            tol: d.tol,
            max_iter: d.max_iter,
            divergence_guard: d.divergence_guard,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub out_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            out_dir: "out".into(),
        }
    }
}

/// Thresholds for the verdicts printed after `simulate`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// Absolute bound on `‖q − (φ² − 1 − C)‖_∞`.
    pub q_tol: f64,
    /// Relative to `max(1, |E⁰|)`; used for the balance, monotonicity and
    /// `E = F` checks.
    pub energy_tol: f64,
    /// Relative to `|Ω|`.
    pub mass_tol: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            q_tol: 1e-10,
            energy_tol: 1e-9,
            mass_tol: 1e-10,
        }
    }
}

/// Time-refinement study. Everything except the initial data and the final
/// time comes from the main sections, since the study wants smooth data.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub final_time: f64,
    pub initial: String,
    pub tableaus: Vec<String>,
    pub dts: Vec<f64>,
    pub reference_dt: f64,
    /// Errors below this are treated as sitting on the precision floor and
    /// left out of the fit.
    pub floor: f64,
    /// Per-tableau overrides.
    pub ladder: Vec<LadderOverride>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            final_time: 0.1,
            initial: "sine:1:1".into(),
            tableaus: vec!["gauss2".into(), "gauss4".into(), "gauss6".into()],
            dts: vec![5e-3, 4e-3, 2.5e-3, 2e-3, 1.25e-3],
            reference_dt: 1e-5,
            floor: 1e-13,
            ladder: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LadderOverride {
    pub tableau: String,
    pub dts: Option<Vec<f64>>,
    pub reference_dt: Option<f64>,
    pub order: Option<f64>,
    pub band: Option<f64>,
}

/// One fully resolved refinement ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct Ladder {
    pub tableau: String,
    pub dts: Vec<f64>,
    pub reference_dt: f64,
    pub order: f64,
    pub band: f64,
    /// Slope still accepted when the fit is floor-limited.
    pub floor_minimum: f64,
}

/// Classical order of the built-in tableaus.
pub fn nominal_order(name: &str) -> Option<f64> {
    match Tableau::by_name(name).ok()?.name() {
        "gauss2" => Some(2.0),
        "gauss4" | "rk4" => Some(4.0),
        "gauss6" => Some(6.0),
        "euler" | "implicit-euler" => Some(1.0),
        _ => None,
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Builds every derived object once so bad values surface before a run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.params()?;
        self.tableau()?;
        self.options()?;
        self.initial_condition()?.build(params.grid(), self.seed)?;
        let dt = self.time.dt;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "time.dt must be positive, got {dt}"
            )));
        }
        if self.time.n_steps == 0 {
            return Err(ConfigError::Invalid(
                "time.n_steps must be at least 1".into(),
            ));
        }
        let checks = [
            self.checks.q_tol,
            self.checks.energy_tol,
            self.checks.mass_tol,
        ];
        if checks.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(ConfigError::Invalid(
                "check tolerances must be finite and non-negative".into(),
            ));
        }
        self.convergence_initial()?
            .build(params.grid(), self.seed)?;
        self.ladders()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>, ConfigError> {
        Ok(Arc::new(Grid::new(
            self.grid.dim,
            self.grid.n,
            self.grid.length,
        )?))
    }

    pub fn params(&self) -> Result<Params, ConfigError> {
        let m = &self.model;
        Ok(Params::new(self.grid()?, m.mobility, m.eps, m.c)?)
    }

    pub fn tableau(&self) -> Result<Tableau, ConfigError> {
        Ok(Tableau::by_name(&self.time.tableau)?)
    }

    pub fn options(&self) -> Result<SolverOptions<f64>, ConfigError> {
        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "solver.tol must be positive, got {}",
                s.tol
            )));
        }
        if s.max_iter == 0 {
            return Err(ConfigError::Invalid(
                "solver.max_iter must be at least 1".into(),
            ));
        }
        if !(s.divergence_guard.is_finite() && s.divergence_guard > 0.0) {
            return Err(ConfigError::Invalid(
                "solver.divergence_guard must be positive".into(),
            ));
        }
        Ok(SolverOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            divergence_guard: s.divergence_guard,
        })
    }

    pub fn initial_condition(&self) -> Result<InitialCondition, ConfigError> {
        Ok(self.initial.parse()?)
    }

    pub fn convergence_initial(&self) -> Result<InitialCondition, ConfigError> {
        Ok(self.convergence.initial.parse()?)
    }

    /// Seed actually used for the main initial data, if it is random.
    pub fn effective_seed(&self) -> Option<u64> {
        self.initial_condition()
            .ok()
            .and_then(|ic| ic.effective_seed(self.seed))
    }

    /// Resolves `[convergence]` into one ladder per tableau.
    pub fn ladders(&self) -> Result<Vec<Ladder>, ConfigError> {
        let conv = &self.convergence;
        let t_end = conv.final_time;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(ConfigError::Invalid(
                "convergence.final_time must be positive".into(),
            ));
        }
        if !(conv.floor.is_finite() && conv.floor >= 0.0) {
            return Err(ConfigError::Invalid(
                "convergence.floor must be non-negative".into(),
            ));
        }
        for o in &conv.ladder {
            if !conv.tableaus.iter().any(|t| t == &o.tableau) {
                return Err(ConfigError::Invalid(format!(
                    "convergence.ladder entry `{}` is not listed in convergence.tableaus",
                    o.tableau
                )));
            }
        }
        conv.tableaus
            .iter()
            .map(|name| {
                Tableau::by_name(name)?;
                let o = conv
                    .ladder
                    .iter()
                    .find(|o| &o.tableau == name)
                    .cloned()
                    .unwrap_or_default();
                let dts = o.dts.unwrap_or_else(|| conv.dts.clone());
                let reference_dt = o.reference_dt.unwrap_or(conv.reference_dt);
                let order = o.order.or_else(|| nominal_order(name)).ok_or_else(|| {
                    ConfigError::Invalid(format!("no expected order known for `{name}`"))
                })?;
                let band = o.band.unwrap_or(if order >= 6.0 { 0.3 } else { 0.2 });
                if dts.len() < 3 {
                    return Err(ConfigError::Invalid(format!(
                        "ladder for `{name}` needs at least 3 time steps"
                    )));
                }
                for &dt in dts.iter().chain([&reference_dt]) {
                    whole_steps(t_end, dt).ok_or_else(|| {
                        ConfigError::Invalid(format!(
                            "dt {dt} does not divide final time {t_end} into whole steps"
                        ))
                    })?;
                }
                if dts.iter().any(|&dt| dt <= reference_dt) {
                    return Err(ConfigError::Invalid(format!(
                        "reference dt for `{name}` must be smaller than every ladder dt"
                    )));
                }
                Ok(Ladder {
                    tableau: name.clone(),
                    dts,
                    reference_dt,
                    order,
                    band,
                    floor_minimum: order - 1.0,
                })
            })
            .collect()
    }
}

/// `t_end / dt` when it is a whole number of steps, to a relative 1e-9.
pub fn whole_steps(t_end: f64, dt: f64) -> Option<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return None;
    }
    let steps = t_end / dt;
    let rounded = steps.round();
    (rounded >= 1.0 && (steps - rounded).abs() <= 1e-9 * rounded).then_some(rounded as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.effective_seed(), Some(42));
        assert_eq!(c.ladders().unwrap().len(), 3);
    }

    #[test]
    fn sections_and_aliases() {
        let c = Config::from_toml(
            "initial = \"sine:0.1:2\"\n[model]\nmobility = 2.0\nc = 1.0\n[time]\ntableau = \"gauss6\"\n",
        )
        .unwrap();
        assert_eq!(c.model.mobility, 2.0);
        assert_eq!(c.model.c, 1.0);
        assert_eq!(c.tableau().unwrap().stages(), 3);
        assert_eq!(c.effective_seed(), None);
        let c = Config::from_toml("[model]\nM = 3.0\nC = 4.0\n").unwrap();
        assert_eq!((c.model.mobility, c.model.c), (3.0, 4.0));
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            "bogus = 1",
            "[grid]\nn = 7",
            "[grid]\ndim = 3",
            "[model]\neps = -1.0",
            "[time]\ndt = 0.0",
            "[time]\nn_steps = 0",
            "[time]\ntableau = \"heun\"",
            "[solver]\ntol = 0.0",
            "initial = \"spinodal\"",
            "seed = -1",
            "[grid\n",
            "[convergence]\ndts = [1e-2, 5e-3]",
            "[convergence]\ndts = [3e-2, 2e-2, 1e-2]",
            "[convergence]\ntableaus = [\"gauss2\"]\n[[convergence.ladder]]\ntableau = \"gauss4\"",
        ] {
            assert!(Config::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn ladder_overrides() {
        let c = Config::from_toml(
            "[convergence]\ntableaus = [\"gauss6\", \"rk4\"]\n[[convergence.ladder]]\ntableau = \"gauss6\"\ndts = [1e-2, 5e-3, 2.5e-3]\nband = 0.5\n",
        )
        .unwrap();
        let ladders = c.ladders().unwrap();
        assert_eq!(ladders[0].dts, vec![1e-2, 5e-3, 2.5e-3]);
        assert_eq!(
            (ladders[0].order, ladders[0].band, ladders[0].floor_minimum),
            (6.0, 0.5, 5.0)
        );
        assert_eq!((ladders[1].order, ladders[1].band), (4.0, 0.2));
    }

    #[test]
    fn whole_step_counts() {
        assert_eq!(whole_steps(0.1, 1e-3), Some(100));
        assert_eq!(whole_steps(0.1, 1.25e-3), Some(80));
        assert_eq!(whole_steps(0.1, 3e-2), None);
        assert_eq!(whole_steps(0.1, 0.0), None);
    }
}
