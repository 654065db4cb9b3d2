//! Run orchestration for the four modes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use mhdsim_core::diagnostics::{energy_es, energy_std, interface_residuals, limit_residuals, DiagnosticsRecord};
use mhdsim_core::dynamics::{cfl_dt, g_source, integrate, linear_rk4_step, CoefficientFreeze, LinearState, TimeStepConfig};
use mhdsim_core::iteration::{find_contractive_horizon, picard_solve, ContractionReport, IterationConfig, TrajectoryCandidate};
use mhdsim_core::spectral::{mean_project, InterfaceField};
use mhdsim_core::state::{recover, PlasmaVacuumState, RecoveredFields, Setup};
use mhdsim_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{Level, Mode, RunConfig};
use crate::scenario::{build, build_at};
use crate::snapshot::write_snapshot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STABILITY: i32 = 3;
pub const EXIT_GAP: i32 = 4;
pub const EXIT_NO_CONTRACTION: i32 = 5;
pub const EXIT_SOLVER: i32 = 6;
pub const EXIT_IO: i32 = 7;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONTRACTION_FILE: &str = "contraction.jsonl";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug)]
pub enum RunError {
    Core(Error),
    Io(io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Core(e) => e.fmt(f),
            Self::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => EXIT_IO,
            Self::Core(e) => match e {
                Error::StabilityError { .. } => EXIT_STABILITY,
                Error::GapViolation { .. } => EXIT_GAP,
                Error::NoContraction { .. } => EXIT_NO_CONTRACTION,
                Error::EllipticDivergence { .. } | Error::IncompatibleData { .. } | Error::DegenerateMap { .. } => {
                    EXIT_SOLVER
                }
                _ => EXIT_FAILURE,
            },
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Self::Io(_) => "io_error",
            Self::Core(e) => match e {
                Error::StabilityError { .. } => "stability_error",
                Error::GapViolation { .. } => "gap_violation",
                Error::NoContraction { .. } => "no_contraction",
                Error::EllipticDivergence { .. } | Error::IncompatibleData { .. } | Error::DegenerateMap { .. } => {
                    "solver_failure"
                }
                _ => "failure",
            },
        }
    }
}

/// Per-step record of the linear mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRecord {
    pub step: usize,
    pub t: f64,
    /// Projections of f̄ − ⟨f̄⟩ and θ̄ − ⟨θ̄⟩ onto the initial mean-free f̄.
    pub f_amplitude: f64,
    pub theta_amplitude: f64,
    pub e_s: f64,
    pub e_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSummary {
    pub dt: f64,
    pub steps: usize,
    pub lambda_min: f64,
    /// Twice the mean spacing of the sign changes of `theta_amplitude`.
    pub period: Option<f64>,
    /// sup_t log(𝓔_s(t)/𝓔_s(0))/t.
    pub growth_constant: Option<f64>,
    pub max_energy_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardSummary {
    pub t_horizon: f64,
    pub steps: usize,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl PicardSummary {
    fn new(cfg: &IterationConfig, m0: f64, report: &ContractionReport) -> Self {
        Self {
            t_horizon: report.t_horizon,
            steps: report.steps,
            m0,
            m1: cfg.m1,
            m2: cfg.m2,
            distances: report.distances.clone(),
            ratios: report.ratios.clone(),
            converged: report.converged,
        }
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub t: f64,
    pub w_norm: f64,
    pub b_norm: f64,
    /// max |w·N_f|, max |b·N_f| on Γ_f.
    pub w_interface: f64,
    pub b_interface: f64,
    pub w_wall: f64,
    pub b_wall: f64,
    pub w_wall_mean: f64,
    pub b_wall_mean: f64,
    pub pressure_balance: f64,
    pub kinematic: f64,
    pub h_normal: f64,
    pub h_hat_normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub status: String,
    pub exit_code: i32,
    pub message: Option<String>,
    pub steps: usize,
    pub t_final: f64,
    pub reached_end: bool,
    pub records: usize,
    pub lambda_min: Option<f64>,
    pub max_mean_f_drift: Option<f64>,
    pub max_mean_theta: Option<f64>,
    pub max_normal_trace: Option<f64>,
    pub max_w_norm: Option<f64>,
    pub max_b_norm: Option<f64>,
    /// The record bounds of the configured tolerances.
    pub checks: BTreeMap<String, bool>,
    pub snapshots: Vec<PathBuf>,
    pub picard: Option<PicardSummary>,
    pub linear: Option<LinearSummary>,
    pub convergence: Option<Vec<ConvergenceRow>>,
}

impl Summary {
    fn new(mode: Mode) -> Self {
        Self {
            mode,
            status: "ok".into(),
            exit_code: EXIT_OK,
            message: None,
            steps: 0,
            t_final: 0.0,
            reached_end: false,
            records: 0,
            lambda_min: None,
            max_mean_f_drift: None,
            max_mean_theta: None,
            max_normal_trace: None,
            max_w_norm: None,
            max_b_norm: None,
            checks: BTreeMap::new(),
            snapshots: Vec::new(),
            picard: None,
            linear: None,
            convergence: None,
        }
    }

    fn absorb(&mut self, r: &DiagnosticsRecord) {
        let up = |slot: &mut Option<f64>, x: f64| *slot = Some(slot.map_or(x, |y: f64| y.max(x)));
        self.records += 1;
        self.lambda_min = Some(self.lambda_min.map_or(r.lambda_min, |y| y.min(r.lambda_min)));
        up(&mut self.max_mean_f_drift, r.mean_f_drift);
        up(&mut self.max_mean_theta, r.mean_theta);
        up(&mut self.max_normal_trace, r.hn_residual.max(r.h_hat_n_residual));
        if let Some(w) = r.w_norm {
            up(&mut self.max_w_norm, w);
        }
        if let Some(b) = r.b_norm {
            up(&mut self.max_b_norm, b);
        }
    }

    fn set_checks(&mut self, config: &RunConfig) {
        let t = &config.tolerances;
        let within = |x: Option<f64>, tol: f64| x.is_none_or(|v| v <= tol);
        self.checks.insert("mean_f_drift".into(), within(self.max_mean_f_drift, t.mean_f_drift));
        self.checks.insert("mean_theta".into(), within(self.max_mean_theta, t.mean_theta));
        self.checks.insert("normal_trace".into(), within(self.max_normal_trace, t.normal_trace));
    }

    fn fail(&mut self, err: &RunError) {
        self.status = err.status().into();
        self.exit_code = err.exit_code();
        self.message = Some(err.to_string());
    }
}

/// Writes diagnostics records, holding each one back until the next
/// sample is known so that the centered limit residuals can be attached.
struct RecordStream {
    out: BufWriter<File>,
    history: Vec<(f64, RecoveredFields)>,
    pending: Option<DiagnosticsRecord>,
}

impl RecordStream {
    fn create(path: &Path) -> io::Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?), history: Vec::new(), pending: None })
    }

    fn push(&mut self, record: DiagnosticsRecord, rec: &RecoveredFields, summary: &mut Summary) -> Result<(), RunError> {
        self.history.push((record.t, rec.clone()));
        if self.history.len() > 3 {
            self.history.remove(0);
        }
        if let Some(mut previous) = self.pending.take() {
            if self.history.len() == 3 {
                let refs: Vec<(f64, &RecoveredFields)> = self.history.iter().map(|(t, r)| (*t, r)).collect();
                previous = previous.with_limit(&limit_residuals(&refs)?);
            }
            self.emit(&previous, summary)?;
        }
        self.pending = Some(record);
        Ok(())
    }

    fn emit(&mut self, record: &DiagnosticsRecord, summary: &mut Summary) -> io::Result<()> {
        summary.absorb(record);
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    fn finish(mut self, summary: &mut Summary) -> io::Result<()> {
        if let Some(last) = self.pending.take() {
            self.emit(&last, summary)?;
        }
        self.out.flush()
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn snapshot(&self, name: &str, step: usize, state: &PlasmaVacuumState, summary: &mut Summary) -> io::Result<()> {
        let rel = Path::new(SNAPSHOT_DIR).join(name);
        write_snapshot(&self.dir.join(&rel), step, state)?;
        summary.snapshots.push(rel);
        Ok(())
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(self.path(name))?);
        for item in items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn time_config(config: &RunConfig) -> TimeStepConfig {
    TimeStepConfig { dt: config.dt, cfl: config.cfl, dt_max: config.dt_max, t_end: config.t_end, ..Default::default() }
}

/// Runs a validated configuration and writes its outputs; the summary
/// carries the exit code.
pub fn run(config: &RunConfig) -> Summary {
    let mut summary = Summary::new(config.mode);
    let output = match Output::create(&config.output_dir) {
        Ok(o) => o,
        Err(e) => {
            summary.fail(&RunError::Io(e));
            return summary;
        }
    };
    let result = match config.mode {
        Mode::Direct => run_direct(config, &output, &mut summary),
        Mode::Picard => run_picard(config, &output, &mut summary),
        Mode::Linear => run_linear(config, &output, &mut summary),
        Mode::Convergence => run_convergence(config, &output, &mut summary),
    };
    summary.set_checks(config);
    if let Err(e) = result {
        summary.fail(&e);
    }
    let written = serde_json::to_vec_pretty(&summary).map_err(io::Error::from).and_then(|bytes| fs::write(output.path(SUMMARY_FILE), bytes));
    if let Err(e) = written {
        summary.fail(&RunError::Io(e));
    }
    summary
}

fn run_direct(config: &RunConfig, output: &Output, summary: &mut Summary) -> Result<(), RunError> {
    let (setup, init) = build(config)?;
    let mean_f0 = init.state.f.mean();
    let mut stream = RecordStream::create(&output.path(DIAGNOSTICS_FILE))?;
    let mut last: Option<(usize, PlasmaVacuumState)> = None;
    let mut io_failure = None;
    let every = config.snapshot_every;

    let outcome = integrate(init.state, &setup, &time_config(config), config.max_steps, |view| {
        let record = DiagnosticsRecord::from_sample(view.step, view.state, view.recovered, &setup, mean_f0)?;
        let pushed = stream.push(record, view.recovered, summary).and_then(|()| {
            if every > 0 && view.step % every == 0 && view.dt > 0.0 {
                output.snapshot(&format!("step_{:06}.bin", view.step), view.step, view.state, summary)?;
            }
            Ok(())
        });
        last = Some((view.step, view.state.clone()));
        match pushed {
            Ok(()) => Ok(()),
            Err(RunError::Core(e)) => Err(e),
            Err(RunError::Io(e)) => {
                let msg = e.to_string();
                io_failure = Some(e);
                Err(Error::InvalidField(format!("cannot write output: {msg}")))
            }
        }
    });
    if let Some(e) = io_failure {
        return Err(e.into());
    }
    stream.finish(summary)?;
    if let Some((step, state)) = &last {
        summary.steps = *step;
        summary.t_final = state.time;
        output.snapshot("final.bin", *step, state, summary)?;
    }
    let outcome = outcome?;
    summary.reached_end = outcome.reached_end;
    Ok(())
}

fn iteration_config(config: &RunConfig, setup: &Setup, init: &mhdsim_core::state::InitialData) -> Result<IterationConfig, RunError> {
    let p = &config.picard;
    let calibrated = IterationConfig::calibrated(init, setup, p.t_horizon, config.cfl)?;
    Ok(IterationConfig {
        steps: p.steps.unwrap_or(calibrated.steps),
        max_iters: p.max_iters,
        contraction_tol: p.contraction_tol,
        ..calibrated
    })
}

fn run_picard(config: &RunConfig, output: &Output, summary: &mut Summary) -> Result<(), RunError> {
    #[derive(Serialize)]
    struct Line {
        t_horizon: f64,
        iteration: usize,
        distance: f64,
        ratio: Option<f64>,
    }
    let lines = |t: f64, distances: &[f64]| -> Vec<Line> {
        distances
            .iter()
            .enumerate()
            .map(|(i, &d)| Line { t_horizon: t, iteration: i + 1, distance: d, ratio: (i > 0).then(|| d / distances[i - 1]) })
            .collect()
    };

    let (setup, init) = build(config)?;
    let p = &config.picard;
    let cfg = iteration_config(config, &setup, &init)?;
    let solved = if p.bisect {
        find_contractive_horizon(&init, &setup, &cfg, p.ratio_bound, p.min_ratios, p.max_halvings)
    } else {
        let mut distances = Vec::new();
        let result = picard_solve(&init, &setup, &cfg, |_, d| distances.push(d));
        if result.is_err() {
            output.write_jsonl(CONTRACTION_FILE, &lines(cfg.t_horizon, &distances))?;
        }
        result.map(|(traj, report)| (cfg, traj, report))
    };
    let (cfg, traj, report) = solved?;
    output.write_jsonl(CONTRACTION_FILE, &lines(report.t_horizon, &report.distances))?;
    summary.picard = Some(PicardSummary::new(&cfg, init.m0, &report));
    write_trajectory(&traj, &setup, output, summary)?;
    if !report.converged {
        return Err(Error::NoContraction { ratios: report.ratios }.into());
    }
    summary.reached_end = true;
    Ok(())
}

fn write_trajectory(traj: &TrajectoryCandidate, setup: &Setup, output: &Output, summary: &mut Summary) -> Result<(), RunError> {
    let mean_f0 = setup.reference().f.mean();
    let mut stream = RecordStream::create(&output.path(DIAGNOSTICS_FILE))?;
    for (step, state) in traj.samples.iter().enumerate() {
        let rec = recover(state, setup)?;
        let record = DiagnosticsRecord::from_sample(step, state, &rec, setup, mean_f0)?;
        stream.push(record, &rec, summary)?;
    }
    stream.finish(summary)?;
    let last = traj.samples.last().expect("a trajectory has samples");
    summary.steps = traj.steps();
    summary.t_final = last.time;
    output.snapshot("final.bin", traj.steps(), last, summary)?;
    Ok(())
}

/// Projection coefficient of `g` onto `shape`.
fn project(g: &InterfaceField, shape: &InterfaceField) -> f64 {
    let norm = shape.inner(shape);
    if norm > 0.0 {
        mean_project(g).inner(shape) / norm
    } else {
        0.0
    }
}

/// Twice the mean spacing of the sign changes of `values`, located by
/// linear interpolation; needs at least two sign changes.
pub fn crossing_period(times: &[f64], values: &[f64]) -> Option<f64> {
    let crossings: Vec<f64> = times
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0] * v[1] < 0.0)
        .map(|(t, v)| t[0] + (t[1] - t[0]) * v[0] / (v[0] - v[1]))
        .collect();
    (crossings.len() >= 2).then(|| 2.0 * (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// sup_t log(e(t)/e(0))/t over t > 0.
pub fn growth_constant(times: &[f64], energies: &[f64]) -> Option<f64> {
    let e0 = *energies.first()?;
    if !(e0 > 0.0) {
        return None;
    }
    times
        .iter()
        .zip(energies)
        .skip(1)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &e)| (e / e0).ln() / t)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))))
}

fn run_linear(config: &RunConfig, output: &Output, summary: &mut Summary) -> Result<(), RunError> {
    let (setup, init) = build(config)?;
    let rec = recover(&init.state, &setup)?;
    let n = setup.n();
    let g = if config.linear.with_source {
        g_source(&rec.u, &rec.h, &rec.h_hat, &rec.maps)?
    } else {
        InterfaceField::zeros(n)
    };
    let frozen = CoefficientFreeze::from_recovered(&rec, g);
    let lambda_min = frozen.lambda_min();
    let c1 = config.enforce_stability.then_some(config.c1);
    if let Some(c1) = c1 {
        if lambda_min < c1 {
            return Err(Error::StabilityError { lambda_min, threshold: c1 }.into());
        }
    }
    let dt = config.dt.unwrap_or_else(|| cfl_dt(&rec, config.cfl, config.dt_max));
    let mut steps = (config.t_end / dt).ceil() as usize;
    if let Some(cap) = config.max_steps {
        steps = steps.min(cap);
    }
    let dt = config.t_end / (config.t_end / dt).ceil();

    let mean_f = init.state.f.mean();
    let shape = mean_project(&init.state.f);
    let s = setup.s();
    let mut state = LinearState { f: shape.clone(), theta: init.state.theta.clone(), time: 0.0 };
    let mut records = Vec::with_capacity(steps + 1);
    let record = |step: usize, st: &LinearState| -> Result<LinearRecord, Error> {
        Ok(LinearRecord {
            step,
            t: st.time,
            f_amplitude: project(&st.f, &shape),
            theta_amplitude: project(&st.theta, &shape),
            e_s: energy_es(&st.f, &st.theta, &frozen, s)?,
            e_std: energy_std(&st.f, &st.theta, s),
        })
    };
    records.push(record(0, &state)?);
    let mut failure = None;
    for step in 1..=steps {
        match linear_rk4_step(&state, dt, |_| frozen.clone(), c1, 0.0) {
            Ok(next) if next.f.check_finite().is_ok() && next.theta.check_finite().is_ok() => state = next,
            Ok(_) => {
                failure = Some(Error::InvalidField("non-finite linearized state".into()));
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        records.push(record(step, &state)?);
    }
    output.write_jsonl(DIAGNOSTICS_FILE, &records)?;

    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let theta_amp: Vec<f64> = records.iter().map(|r| r.theta_amplitude).collect();
    let energies: Vec<f64> = records.iter().map(|r| r.e_s).collect();
    let e0 = energies[0];
    summary.linear = Some(LinearSummary {
        dt,
        steps: records.len() - 1,
        lambda_min,
        period: crossing_period(&times, &theta_amp),
        growth_constant: growth_constant(&times, &energies),
        max_energy_ratio: (e0 > 0.0).then(|| energies.iter().fold(0.0f64, |a, &e| a.max(e / e0))),
    });
    summary.steps = records.len() - 1;
    summary.records = records.len();
    summary.t_final = state.time;
    summary.lambda_min = Some(lambda_min);
    // The linear state keeps f̄ mean-free; the snapshot stores f_* + f̄.
    let snapshot = PlasmaVacuumState { f: state.f.add_scalar(mean_f), theta: state.theta.clone(), time: state.time, ..init.state };
    output.snapshot("final.bin", summary.steps, &snapshot, summary)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    summary.reached_end = summary.steps == (config.t_end / dt).round() as usize;
    Ok(())
}

/// Residuals of one refinement level at the probe time.
pub fn convergence_level(config: &RunConfig, level: &Level, t_probe: f64) -> Result<ConvergenceRow, Error> {
    let (setup, init) = build_at(config, level.n, level.m)?;
    let cfg = TimeStepConfig { dt: Some(level.dt), t_end: t_probe + level.dt, ..time_config(config) };
    let mut history: Vec<(PlasmaVacuumState, RecoveredFields)> = Vec::new();
    integrate(init.state, &setup, &cfg, None, |view| {
        history.push((view.state.clone(), view.recovered.clone()));
        if history.len() > 3 {
            history.remove(0);
        }
        Ok(())
    })?;
    let refs: Vec<(f64, &RecoveredFields)> = history.iter().map(|(s, r)| (s.time, r)).collect();
    let limit = limit_residuals(&refs)?;
    let (state, rec) = &history[history.len() - 2];
    let interface = interface_residuals(state, rec)?;
    Ok(ConvergenceRow {
        n: level.n,
        m: level.m,
        dt: level.dt,
        t: limit.time,
        w_norm: limit.w_norm,
        b_norm: limit.b_norm,
        w_interface: limit.w_bc[0],
        b_interface: limit.b_bc[0],
        w_wall: limit.w_bc[1],
        b_wall: limit.b_bc[1],
        w_wall_mean: limit.w_bc[2],
        b_wall_mean: limit.b_bc[2],
        pressure_balance: interface.pressure_balance,
        kinematic: interface.kinematic,
        h_normal: interface.h_normal,
        h_hat_normal: interface.h_hat_normal,
    })
}

fn run_convergence(config: &RunConfig, output: &Output, summary: &mut Summary) -> Result<(), RunError> {
    let t_probe = config.convergence.t_probe;
    let mut rows = Vec::new();
    let mut result = Ok(());
    for level in &config.convergence.levels {
        match convergence_level(config, level, t_probe) {
            Ok(row) => rows.push(row),
            Err(e) => {
                result = Err(e.into());
                break;
            }
        }
    }
    let mut writer = csv::Writer::from_path(output.path(CONVERGENCE_FILE)).map_err(io::Error::from)?;
    for row in &rows {
        writer.serialize(row).map_err(io::Error::from)?;
    }
    writer.flush()?;
    summary.t_final = t_probe;
    summary.steps = rows.len();
    summary.reached_end = result.is_ok();
    summary.convergence = Some(rows);
    result
}
