//! Run configuration: JSON with documented defaults, validated as a whole.

use std::fmt;
use std::path::PathBuf;

use mhdsim_core::state::SurfaceCurrent;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Direct,
    Picard,
    Linear,
    Convergence,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Self::Direct),
            "picard" => Ok(Self::Picard),
            "linear" => Ok(Self::Linear),
            "convergence" => Ok(Self::Convergence),
            other => Err(format!("unknown mode {other:?} (expected direct, picard, linear or convergence)")),
        }
    }
}

/// One Fourier mode a cos(k·x′ + φ) of an explicit interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub k: [f64; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Initial data.  Every preset starts at rest (u = 0) except `sheared`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// f = 0, u = 0, h = (1,0,0), Ĵ = (1,0).
    Equilibrium,
    /// f = ε cos(k·x′), u = 0, h the potential field with mean (1,0).
    Perturbed {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_k")]
        k: [f64; 2],
    },
    /// Flat interface, u = (a cos x₃, 0, 0), h = (1, b(1 + x₃), 0).
    Sheared {
        #[serde(default = "default_shear_u")]
        velocity: f64,
        #[serde(default = "default_shear_h")]
        field: f64,
    },
    /// f = 0, h = (1,0,0), Ĵ = (0,−1): ĥ ∥ h, Λ = 0.
    Collinear,
    /// f = Σ aᵢ cos(kᵢ·x′ + φᵢ), u = 0, h the potential field with
    /// wall mean `mean_field`.
    Explicit {
        modes: Vec<FourierMode>,
        #[serde(default = "default_mean_field")]
        mean_field: [f64; 2],
    },
    /// Random smooth interface drawn from `seed`: modes with |kᵢ| ≤ kmax
    /// and amplitudes decaying like |k|⁻⁴, scaled to max |f| = amplitude.
    Random {
        #[serde(default = "default_epsilon")]
        amplitude: f64,
        #[serde(default = "default_kmax")]
        kmax: u32,
    },
}

fn default_epsilon() -> f64 {
    1e-4
}
fn default_k() -> [f64; 2] {
    [1.0, 0.0]
}
fn default_shear_u() -> f64 {
    0.2
}
fn default_shear_h() -> f64 {
    0.2
}
fn default_mean_field() -> [f64; 2] {
    [1.0, 0.0]
}
fn default_kmax() -> u32 {
    3
}

impl Scenario {
    pub fn default_current(&self) -> SurfaceCurrent {
        match self {
            Self::Collinear => SurfaceCurrent::Constant { j: [0.0, -1.0] },
            _ => SurfaceCurrent::Constant { j: [1.0, 0.0] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardOptions {
    /// Initial horizon; with `bisect` it is halved until the iteration contracts.
    pub t_horizon: f64,
    pub bisect: bool,
    pub max_halvings: usize,
    /// Ratio bound and minimum number of ratios required by the bisection.
    pub ratio_bound: f64,
    pub min_ratios: usize,
    pub max_iters: usize,
    pub contraction_tol: f64,
    /// Overrides the calibrated number of time steps.
    pub steps: Option<usize>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            t_horizon: 0.2,
            bisect: false,
            max_halvings: 12,
            ratio_bound: 0.5,
            min_ratios: 3,
            max_iters: 20,
            contraction_tol: 1e-10,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearOptions {
    /// Keep the source 𝔤 of the initial state as a constant forcing.
    pub with_source: bool,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { with_source: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub n: usize,
    pub m: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceOptions {
    pub levels: Vec<Level>,
    /// Time at which the residuals are compared; a multiple of every dt.
    pub t_probe: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            levels: vec![Level { n: 16, m: 16, dt: 0.02 }, Level { n: 32, m: 32, dt: 0.01 }],
            t_probe: 0.04,
        }
    }
}

/// Bounds the summary checks every diagnostics record against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub mean_f_drift: f64,
    pub mean_theta: f64,
    pub normal_trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { mean_f_drift: 1e-10, mean_theta: 1e-10, normal_trace: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    pub s: u32,
    pub c0: f64,
    pub c1: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub scenario: Option<Scenario>,
    /// Defaults to the scenario's current.
    pub current: Option<SurfaceCurrent>,
    pub output_dir: PathBuf,
    pub max_steps: Option<usize>,
    /// Write a snapshot every this many steps; 0 writes only the last state.
    pub snapshot_every: usize,
    pub enforce_stability: bool,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub picard: PicardOptions,
    pub linear: LinearOptions,
    pub convergence: ConvergenceOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Direct,
            n: 16,
            m: 12,
            s: 3,
            c0: 0.1,
            c1: 0.1,
            cfl: 0.4,
            dt_max: 0.05,
            dt: None,
            t_end: 1.0,
            scenario: None,
            current: None,
            output_dir: PathBuf::from("mhdsim-out"),
            max_steps: None,
            snapshot_every: 0,
            enforce_stability: true,
            seed: 0,
            tolerances: Tolerances::default(),
            picard: PicardOptions::default(),
            linear: LinearOptions::default(),
            convergence: ConvergenceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse(String),
    Validation(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse(msg) => write!(f, "cannot parse configuration: {msg}"),
            Self::Validation(list) => write!(f, "invalid configuration: {}", list.join("; ")),
        }
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn scenario(&self) -> &Scenario {
        self.scenario.as_ref().unwrap_or(&Scenario::Equilibrium)
    }

    pub fn current(&self) -> SurfaceCurrent {
        self.current.clone().unwrap_or_else(|| self.scenario().default_current())
    }

    /// Every violated constraint, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        check_grid(&mut out, "n", "m", self.n, self.m);
        if self.s < 3 {
            out.push(format!("s = {} must be an integer ≥ 3", self.s));
        }
        if !(self.c0 > 0.0 && self.c0 < 0.5) {
            out.push(format!("c0 = {} must lie in (0, 1/2)", self.c0));
        }
        if !positive(self.c1) {
            out.push(format!("c1 = {} must be positive", self.c1));
        }
        if !(positive(self.cfl) && self.cfl <= 1.0) {
            out.push(format!("cfl = {} must lie in (0, 1]", self.cfl));
        }
        if !positive(self.dt_max) {
            out.push(format!("dt_max = {} must be positive", self.dt_max));
        }
        if let Some(dt) = self.dt {
            if !positive(dt) {
                out.push(format!("dt = {dt} must be positive"));
            }
        }
        if !positive(self.t_end) {
            out.push(format!("t_end = {} must be positive", self.t_end));
        }
        if self.max_steps == Some(0) {
            out.push("max_steps must be at least 1".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            out.push("output_dir must not be empty".into());
        }
        let t = &self.tolerances;
        for (name, x) in [("mean_f_drift", t.mean_f_drift), ("mean_theta", t.mean_theta), ("normal_trace", t.normal_trace)] {
            if !positive(x) {
                out.push(format!("tolerances.{name} = {x} must be positive"));
            }
        }
        match &self.scenario {
            None => out.push("scenario is required".into()),
            Some(s) => self.check_scenario(s, &mut out),
        }
        self.check_current(&mut out);

        let p = &self.picard;
        if !positive(p.t_horizon) {
            out.push(format!("picard.t_horizon = {} must be positive", p.t_horizon));
        }
        if !(positive(p.ratio_bound) && p.ratio_bound < 1.0) {
            out.push(format!("picard.ratio_bound = {} must lie in (0, 1)", p.ratio_bound));
        }
        if p.max_iters < 2 {
            out.push("picard.max_iters must be at least 2".into());
        }
        if !positive(p.contraction_tol) {
            out.push(format!("picard.contraction_tol = {} must be positive", p.contraction_tol));
        }
        if p.steps == Some(0) {
            out.push("picard.steps must be at least 1".into());
        }

        let c = &self.convergence;
        if self.mode == Mode::Convergence {
            if c.levels.len() < 2 {
                out.push("convergence.levels needs at least two levels".into());
            }
            if !positive(c.t_probe) {
                out.push(format!("convergence.t_probe = {} must be positive", c.t_probe));
            }
            for (i, level) in c.levels.iter().enumerate() {
                check_grid(&mut out, &format!("convergence.levels[{i}].n"), &format!("convergence.levels[{i}].m"), level.n, level.m);
                if !positive(level.dt) {
                    out.push(format!("convergence.levels[{i}].dt = {} must be positive", level.dt));
                } else if positive(c.t_probe) {
                    let q = c.t_probe / level.dt;
                    if q < 1.0 - 1e-9 || (q - q.round()).abs() > 1e-9 * q.max(1.0) {
                        out.push(format!("convergence.t_probe = {} is not a positive multiple of dt = {}", c.t_probe, level.dt));
                    }
                }
            }
        }
        out
    }

    fn check_scenario(&self, scenario: &Scenario, out: &mut Vec<String>) {
        let limit = 1.0 - 2.0 * self.c0;
        let integral = |k: [f64; 2]| k.iter().all(|x| x.is_finite() && x.fract() == 0.0);
        let nyquist = (self.n / 2) as f64;
        let check_mode = |out: &mut Vec<String>, what: &str, k: [f64; 2], amp: f64| {
            if !integral(k) {
                out.push(format!("{what}.k = {k:?} must be integers"));
            } else if k[0].abs() >= nyquist || k[1].abs() >= nyquist {
                out.push(format!("{what}.k = {k:?} is not resolved at n = {}", self.n));
            }
            if !amp.is_finite() {
                out.push(format!("{what} amplitude must be finite"));
            }
        };
        match scenario {
            Scenario::Perturbed { epsilon, k } => {
                check_mode(out, "scenario", *k, *epsilon);
                if epsilon.abs() > limit {
                    out.push(format!("scenario.epsilon = {epsilon} exceeds the gap bound {limit}"));
                }
            }
            Scenario::Sheared { velocity, field } => {
                if !(velocity.is_finite() && field.is_finite()) {
                    out.push("scenario.velocity and scenario.field must be finite".into());
                }
            }
            Scenario::Explicit { modes, mean_field } => {
                if modes.is_empty() {
                    out.push("scenario.modes must not be empty".into());
                }
                let mut total = 0.0;
                for (i, mode) in modes.iter().enumerate() {
                    check_mode(out, &format!("scenario.modes[{i}]"), mode.k, mode.amplitude);
                    total += mode.amplitude.abs();
                    if !mode.phase.is_finite() {
                        out.push(format!("scenario.modes[{i}].phase must be finite"));
                    }
                }
                if total > limit {
                    out.push(format!("scenario amplitudes sum to {total}, above the gap bound {limit}"));
                }
                if !mean_field.iter().all(|x| x.is_finite()) {
                    out.push("scenario.mean_field must be finite".into());
                }
            }
            Scenario::Random { amplitude, kmax } => {
                if !(amplitude.is_finite() && amplitude.abs() <= limit) {
                    out.push(format!("scenario.amplitude = {amplitude} must be finite and at most {limit}"));
                }
                if *kmax == 0 || (*kmax as f64) >= nyquist {
                    out.push(format!("scenario.kmax = {kmax} must lie in [1, n/2)"));
                }
            }
            Scenario::Equilibrium | Scenario::Collinear => {}
        }
    }

    fn check_current(&self, out: &mut Vec<String>) {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match &self.current {
            None => true,
            Some(SurfaceCurrent::Constant { j }) => finite(j),
            Some(SurfaceCurrent::Rotating { amplitude, frequency, phase }) => finite(&[*amplitude, *frequency, *phase]),
            Some(SurfaceCurrent::Sheared { base, amplitude }) => finite(&[base[0], base[1], *amplitude]),
        };
        if !ok {
            out.push("current parameters must be finite".into());
        }
    }
}

fn check_grid(out: &mut Vec<String>, n_name: &str, m_name: &str, n: usize, m: usize) {
    if !(n >= 4 && n.is_power_of_two()) {
        out.push(format!("{n_name} = {n} must be a power of two ≥ 4"));
    }
    if m < 4 {
        out.push(format!("{m_name} = {m} must be at least 4"));
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Validation(violations))
    }
}
