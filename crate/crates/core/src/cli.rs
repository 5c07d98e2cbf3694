//! Command-line front end: argument types and the four commands.
//!
//! Each command writes its report to the given writers and returns the
//! process exit code (see the `EXIT_*` constants).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{whole_steps, Config, ConfigError, Ladder};
use crate::diagnostics::{
    check_energy_dissipation, check_energy_equivalence, check_mass, check_q_consistency,
    estimate_order, OrderEstimate, RunMeta, TimeSeries, Verdict,
};
use crate::grid::ScalarField;
use crate::midpoint::step_midpoint;
use crate::model::{CHParams, CHState};
use crate::stepper::{integrate, IeqRkStepper, Run};
use crate::{Error, Tableau};

/// Every verdict passed.
pub const EXIT_OK: i32 = 0;
/// The run finished but a verdict failed.
pub const EXIT_FAIL: i32 = 1;
/// The arguments or configuration could not be used.
pub const EXIT_USAGE: i32 = 2;
/// The stage solver failed (non-convergence or blow-up).
pub const EXIT_SOLVER: i32 = 3;

/// Tolerance on `max|S|` for `verify-tableau`.
pub const TABLEAU_TOL: f64 = 1e-13;

pub const TIMESERIES_HEADER: &str = "step,t,E,F,q_residual_inf,mass,balance_defect,iters";

#[derive(Debug, Parser)]
#[command(
    name = "ieq-rk",
    version,
    about = "IEQ Runge-Kutta solver for the Cahn-Hilliard equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and check its invariants.
    Simulate(RunArgs),
    /// Print a Butcher tableau and test the symplectic condition.
    VerifyTableau {
        /// gauss2, gauss4, gauss6, euler, implicit-euler or rk4.
        name: String,
    },
    /// Time-refinement study for the tableaus in `[convergence]`.
    Convergence(RunArgs),
    /// Compare the one-stage Gauss scheme with the direct midpoint solver.
    CompareMidpoint(RunArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML configuration; built-in defaults are used when omitted.
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Command-line values that replace the matching config keys.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "mobility", visible_alias = "M")]
    pub mobility: Option<f64>,
    #[arg(long = "c", visible_alias = "C", allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub tableau: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `constant:v`, `sine:amplitude:mode` or `spinodal:amplitude[:seed]`
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, c: &mut Config) {
        fn set<V: Clone>(slot: &mut V, v: &Option<V>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut c.grid.dim, &self.dim);
        set(&mut c.grid.n, &self.n);
        set(&mut c.grid.length, &self.length);
        set(&mut c.model.eps, &self.eps);
        set(&mut c.model.mobility, &self.mobility);
        set(&mut c.model.c, &self.c);
        set(&mut c.time.dt, &self.dt);
        set(&mut c.time.n_steps, &self.n_steps);
        set(&mut c.time.tableau, &self.tableau);
        set(&mut c.solver.tol, &self.tol);
        set(&mut c.solver.max_iter, &self.max_iter);
        set(&mut c.initial, &self.initial);
        set(&mut c.output.out_dir, &self.out_dir);
        if self.seed.is_some() {
            c.seed = self.seed;
        }
    }
}

impl RunArgs {
    /// Config file (or defaults) with the overrides applied, validated.
    pub fn load(&self) -> Result<Config, ConfigError> {
        let mut config = match &self.config {
            Some(path) => Config::from_path(path)?,
            None => Config::default(),
        };
        self.overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    type Handler = fn(&Config, &mut dyn Write, &mut dyn Write) -> i32;
    let (args, command): (&RunArgs, Handler) = match &cli.command {
        Command::VerifyTableau { name } => return verify_tableau(name, out, err),
        Command::Simulate(args) => (args, simulate),
        Command::Convergence(args) => (args, convergence),
        Command::CompareMidpoint(args) => (args, compare_midpoint),
    };
    match args.load() {
        Ok(config) => command(&config, out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    status: &'a str,
    error: Option<String>,
    meta: &'a RunMeta<f64>,
    steps: usize,
    passed: bool,
    verdicts: &'a [Verdict],
}

/// Integrates the configured trajectory, writes `timeseries.csv`,
/// `phi_final.csv` and `verdicts.json` to the output directory.
///
/// On solver failure everything recorded so far is still written and the
/// exit code is [`EXIT_SOLVER`].
pub fn simulate(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let setup = (|| -> Result<_, ConfigError> {
        let params = config.params()?;
        let tableau = config.tableau()?;
        let phi0 = config
            .initial_condition()?
            .build(params.grid(), config.seed)?;
        Ok((params, tableau, phi0, config.options()?))
    })();
    let (params, tableau, phi0, opts) = match setup {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let dir = &config.output.out_dir;
    if let Err(e) = fs::create_dir_all(dir) {
        let _ = writeln!(err, "error: cannot create {}: {e}", dir.display());
        return EXIT_USAGE;
    }

    let (mut run, failure) = match integrate(
        &phi0,
        &tableau,
        config.time.dt,
        config.time.n_steps,
        &params,
        opts,
    ) {
        Ok(run) => (run, None),
        Err(e) => match e.partial {
            Some(partial) => (*partial, Some((e.step, e.source))),
            None => {
                let _ = writeln!(err, "error: {}", e.source);
                return EXIT_SOLVER;
            }
        },
    };
    run.series.meta.seed = config.effective_seed();

    let verdicts = simulate_verdicts(&run.series, config);
    let passed = verdicts.iter().all(|v| v.passed);
    let summary = SimulateSummary {
        status: if failure.is_some() {
            "solver_error"
        } else {
            "ok"
        },
        error: failure
            .as_ref()
            .map(|(step, e)| format!("step {step}: {e}")),
        meta: &run.series.meta,
        steps: run.series.steps(),
        passed,
        verdicts: &verdicts,
    };
    let written = write_csv(&dir.join("timeseries.csv"), |w| {
        write_timeseries_csv(&run.series, w)
    })
    .and_then(|_| {
        write_csv(&dir.join("phi_final.csv"), |w| {
            write_field_csv(&run.state, &params, w)
        })
    })
    .and_then(|_| write_json(&dir.join("verdicts.json"), &summary));
    if let Err(e) = written {
        let _ = writeln!(err, "error: writing output to {}: {e}", dir.display());
        return EXIT_USAGE;
    }

    let last = run.series.last();
    let _ = writeln!(
        out,
        "{} dt={:e} steps={} t={:e} E={:e} -> {}",
        run.series.meta.tableau,
        config.time.dt,
        run.series.steps(),
        last.t,
        last.energy,
        dir.display()
    );
    for v in &verdicts {
        let _ = writeln!(out, "{}", verdict_line(v));
    }
    if let Some((step, e)) = failure {
        let _ = writeln!(err, "error: solver failed at step {step}: {e}");
        return EXIT_SOLVER;
    }
    if passed {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

/// The five invariant checks, with the thresholds from `[checks]`.
pub fn simulate_verdicts(series: &TimeSeries<f64>, config: &Config) -> Vec<Verdict> {
    let checks = &config.checks;
    let energy = check_energy_dissipation(series, checks.energy_tol);
    vec![
        check_q_consistency(series, checks.q_tol),
        energy.monotone,
        energy.balance,
        check_energy_equivalence(series, checks.energy_tol),
        check_mass(series, checks.mass_tol),
    ]
}

pub fn verdict_line(v: &Verdict) -> String {
    format!(
        "{} {:<20} worst {:.3e} (step {}) threshold {:.3e}",
        if v.passed { "PASS" } else { "FAIL" },
        v.name,
        v.worst,
        v.at_step,
        v.threshold
    )
}

/// One line per record under [`TIMESERIES_HEADER`]. Values use Rust's
/// shortest round-trip formatting, so equal runs give identical bytes.
pub fn write_timeseries_csv(series: &TimeSeries<f64>, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{TIMESERIES_HEADER}")?;
    for r in series.records() {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.step,
            r.t,
            r.energy,
            r.modified_energy,
            r.q_residual_inf,
            r.mass,
            r.balance_defect,
            r.iterations
        )?;
    }
    Ok(())
}

/// Grid dump of `φ` and `q`: `x,phi,q` in 1D, `x,y,phi,q` in 2D.
pub fn write_field_csv(
    state: &CHState<f64>,
    params: &CHParams<f64>,
    w: &mut dyn Write,
) -> io::Result<()> {
    let grid = params.grid();
    let two_d = grid.dim() == 2;
    writeln!(w, "{}", if two_d { "x,y,phi,q" } else { "x,phi,q" })?;
    for (i, (phi, q)) in state.phi.values().iter().zip(state.q.values()).enumerate() {
        let (x, y) = grid.point(i);
        if two_d {
            writeln!(w, "{x:e},{y:e},{phi:e},{q:e}")?;
        } else {
            writeln!(w, "{x:e},{phi:e},{q:e}")?;
        }
    }
    Ok(())
}

fn write_csv(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()
}

/// Prints the tableau, its symplectic defect matrix, `max|S|` and `min b`.
pub fn verify_tableau(name: &str, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let tableau = match Tableau::by_name(name) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {e} (known: {})", Tableau::BUILTIN.join(", "));
            return EXIT_USAGE;
        }
    };
    let symplectic = tableau.is_symplectic(TABLEAU_TOL);
    let rows: Vec<String> = tableau
        .symplectic_defect()
        .iter()
        .map(|row| {
            format!(
                "[{}]",
                row.iter()
                    .map(|&v| matrix_entry(v))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    let _ = write!(
        out,
        "{} ({} stages)\n{}",
        tableau.name(),
        tableau.stages(),
        tableau
    );
    let _ = writeln!(out, "S = [{}]", rows.join(", "));
    let _ = writeln!(out, "max|S| = {:e}", tableau.max_defect());
    let _ = writeln!(out, "min b  = {:e}", tableau.min_weight());
    let _ = writeln!(
        out,
        "{} symplectic (tol {TABLEAU_TOL:e})",
        if symplectic { "PASS" } else { "FAIL" }
    );
    if symplectic {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

fn matrix_entry(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e6 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Outcome of one refinement ladder.
#[derive(Clone, Debug, Serialize)]
pub struct LadderResult {
    pub tableau: String,
    pub expected: f64,
    pub band: f64,
    pub floor_minimum: f64,
    pub estimate: OrderEstimate,
    pub passed: bool,
}

/// Runs every ladder of `[convergence]`, one thread per tableau.
pub fn run_ladders(config: &Config) -> Result<Vec<LadderResult>, String> {
    let ladders = config.ladders().map_err(|e| e.to_string())?;
    let params = config.params().map_err(|e| e.to_string())?;
    let opts = config.options().map_err(|e| e.to_string())?;
    let phi0 = config
        .convergence_initial()
        .and_then(|ic| Ok(ic.build(params.grid(), config.seed)?))
        .map_err(|e| e.to_string())?;
    let t_end = config.convergence.final_time;
    let floor = config.convergence.floor;

    let one = |ladder: &Ladder| -> Result<LadderResult, String> {
        let tableau = Tableau::by_name(&ladder.tableau).map_err(|e| e.to_string())?;
        let run_at = |dt: f64| -> Result<Run<f64>, String> {
            let steps =
                whole_steps(t_end, dt).ok_or_else(|| format!("dt {dt} does not divide {t_end}"))?;
            integrate(&phi0, &tableau, dt, steps, &params, opts)
                .map_err(|e| format!("{} dt={dt:e}: {e}", ladder.tableau))
        };
        let reference = run_at(ladder.reference_dt)?;
        let runs = ladder
            .dts
            .iter()
            .map(|&dt| run_at(dt))
            .collect::<Result<Vec<_>, _>>()?;
        let estimate = estimate_order(&runs, &reference, floor).map_err(|e| e.to_string())?;
        Ok(LadderResult {
            tableau: ladder.tableau.clone(),
            expected: ladder.order,
            band: ladder.band,
            floor_minimum: ladder.floor_minimum,
            passed: estimate.within(ladder.order, ladder.band, ladder.floor_minimum),
            estimate,
        })
    };
    thread::scope(|scope| {
        let handles: Vec<_> = ladders
            .iter()
            .map(|l| scope.spawn(move || one(l)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err("ladder worker panicked".into()))
            })
            .collect()
    })
}

/// Prints the slope table and writes `convergence.json`.
pub fn convergence(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let results = match run_ladders(config) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_SOLVER;
        }
    };
    let _ = writeln!(
        out,
        "final time {:e}, floor {:e}, initial {}",
        config.convergence.final_time, config.convergence.floor, config.convergence.initial
    );
    for r in &results {
        let _ = writeln!(out, "{}:", r.tableau);
        let slopes = r.estimate.pairwise_slopes();
        for (i, (dt, e)) in r.estimate.levels.iter().enumerate() {
            let pair = i
                .checked_sub(1)
                .map(|j| format!("  slope {:.3}", slopes[j]))
                .unwrap_or_default();
            let _ = writeln!(out, "  dt {dt:<10e} error {e:.3e}{pair}");
        }
    }
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>8} {:>6} {:>14}  verdict",
        "tableau", "expected", "slope", "used", "floor-limited"
    );
    for r in &results {
        let _ = writeln!(
            out,
            "{:<8} {:>8.1} {:>8.3} {:>3}/{:<2} {:>14}  {}",
            r.tableau,
            r.expected,
            r.estimate.slope,
            r.estimate.used,
            r.estimate.levels.len(),
            if r.estimate.floor_limited {
                "yes"
            } else {
                "no"
            },
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let dir = &config.output.out_dir;
    if let Err(e) =
        fs::create_dir_all(dir).and_then(|_| write_json(&dir.join("convergence.json"), &results))
    {
        let _ = writeln!(err, "error: writing output to {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

/// Per-step max-norm difference between the one-stage Gauss IEQ-RK
/// trajectory and the direct midpoint solver from the same data.
pub fn midpoint_discrepancies(config: &Config) -> Result<Vec<f64>, Error> {
    let params = config
        .params()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let opts = config
        .options()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let phi0: ScalarField<f64> = config
        .initial_condition()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .build(params.grid(), config.seed)?;
    let dt = config.time.dt;
    let stepper = IeqRkStepper::new(&params, &Tableau::gauss(2)?, dt, opts)?;
    let mut state = CHState::consistent(phi0.clone(), &params);
    let mut direct = phi0;
    let mut out = Vec::with_capacity(config.time.n_steps);
    for _ in 0..config.time.n_steps {
        state = stepper.step(&state)?.0;
        direct = step_midpoint(&direct, dt, &params, opts)?;
        out.push(state.phi.max_abs_diff(&direct)?);
    }
    Ok(out)
}

/// Passes when the largest discrepancy is at most `100 · tol · n_steps`.
pub fn compare_midpoint(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let diffs = match midpoint_discrepancies(config) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_SOLVER;
        }
    };
    let bound = 100.0 * config.solver.tol * diffs.len() as f64;
    let _ = writeln!(out, "step,t,max_abs_diff");
    for (i, d) in diffs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:e},{:e}",
            i + 1,
            (i + 1) as f64 * config.time.dt,
            d
        );
    }
    let worst = diffs
        .iter()
        .copied()
        .fold(0.0_f64, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) });
    let passed = worst <= bound;
    let _ = writeln!(
        out,
        "{} max discrepancy {worst:.3e} bound {bound:.3e}",
        if passed { "PASS" } else { "FAIL" }
    );
    if passed {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}
