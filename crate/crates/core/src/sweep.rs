//! Parallel evaluation of observables over 1-D and 2-D parameter grids.
//!
//! Grids are row-major: the first axis is the slow (row) index. Each cell is
//! computed independently, so the result never depends on the worker count.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, Branch, Phase, SteadySolution};
use crate::currents;
use crate::error::{Error, Result};
use crate::fluctuations::{self, FluctuationStatus};
use crate::meanfield::{self, Convergence, SeedPolicy};
use crate::model::{LadderSystem, ValidatedParams};
use crate::ode::Dopri5;
use crate::stability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    G,
    Kappa,
    Delta,
    J,
    OmegaC,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::G => "g",
            SweepParam::Kappa => "kappa",
            SweepParam::Delta => "delta",
            SweepParam::J => "j",
            SweepParam::OmegaC => "omega_c",
        }
    }

    fn apply(self, base: &mut LadderSystem, value: f64) {
        match self {
            SweepParam::G => base.coupling = value,
            SweepParam::Kappa => base.cavity_loss = value,
            SweepParam::Delta => base.delta = value,
            SweepParam::J => base.hopping = value,
            SweepParam::OmegaC => base.omega_c = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g" => Ok(SweepParam::G),
            "kappa" | "k" => Ok(SweepParam::Kappa),
            "delta" | "d" => Ok(SweepParam::Delta),
            "j" => Ok(SweepParam::J),
            "omega_c" | "omegac" | "wc" => Ok(SweepParam::OmegaC),
            _ => Err(Error::InvalidAxis(format!("unknown parameter `{s}`"))),
        }
    }
}

/// Linearly spaced axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub param: SweepParam,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(param: SweepParam, min: f64, max: f64, count: usize) -> Result<Self> {
        let axis = Self { param, min, max, count };
        axis.check()?;
        Ok(axis)
    }

    fn check(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidAxis(format!("{}: non-finite bounds", self.param.name())));
        }
        if self.count == 1 && self.min == self.max {
            return Ok(());
        }
        if self.count < 2 {
            return Err(Error::InvalidAxis(format!("{}: count must be at least 2", self.param.name())));
        }
        if !(self.min < self.max) {
            return Err(Error::InvalidAxis(format!("{}: min must be below max", self.param.name())));
        }
        Ok(())
    }

    /// A single-point axis (for evaluating one cell through the sweep path).
    pub fn point(param: SweepParam, value: f64) -> Self {
        Self { param, min: value, max: value, count: 1 }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            return self.min;
        }
        if i + 1 == self.count {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Quantity evaluated in each cell. Cavity indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    AlphaRe(usize),
    AlphaIm(usize),
    AlphaAbs(usize),
    TotalCurrent,
    BondCurrent(usize),
    SpinCurrent(usize),
    PhotonFluct(usize),
    PhaseLabel,
    MaxRealEig,
}

impl Observable {
    fn cavity(self) -> Option<usize> {
        match self {
            Observable::AlphaRe(n)
            | Observable::AlphaIm(n)
            | Observable::AlphaAbs(n)
            | Observable::BondCurrent(n)
            | Observable::SpinCurrent(n)
            | Observable::PhotonFluct(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::AlphaRe(n) => write!(f, "alpha_re({n})"),
            Observable::AlphaIm(n) => write!(f, "alpha_im({n})"),
            Observable::AlphaAbs(n) => write!(f, "alpha_abs({n})"),
            Observable::TotalCurrent => f.write_str("total_current"),
            Observable::BondCurrent(n) => write!(f, "bond_current({n})"),
            Observable::SpinCurrent(n) => write!(f, "spin_current({n})"),
            Observable::PhotonFluct(n) => write!(f, "photon_fluct({n})"),
            Observable::PhaseLabel => f.write_str("phase_label"),
            Observable::MaxRealEig => f.write_str("max_real_eig"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    /// Accepts `name`, `name(n)` or `name:n`; indexed names default to cavity 1.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownObservable(s.to_string());
        let s = s.trim();
        let (name, index) = match s.find(['(', ':']) {
            Some(pos) => {
                let rest = s[pos + 1..].trim_end_matches(')');
                let n: usize = rest.trim().parse().map_err(|_| unknown())?;
                if n == 0 {
                    return Err(unknown());
                }
                (&s[..pos], Some(n))
            }
            None => (s, None),
        };
        let n = index.unwrap_or(1);
        let obs = match name {
            "alpha_re" => Observable::AlphaRe(n),
            "alpha_im" => Observable::AlphaIm(n),
            "alpha_abs" => Observable::AlphaAbs(n),
            "bond_current" => Observable::BondCurrent(n),
            "spin_current" => Observable::SpinCurrent(n),
            "photon_fluct" => Observable::PhotonFluct(n),
            "total_current" if index.is_none() => Observable::TotalCurrent,
            "phase_label" if index.is_none() => Observable::PhaseLabel,
            "max_real_eig" if index.is_none() => Observable::MaxRealEig,
            _ => return Err(unknown()),
        };
        Ok(obs)
    }
}

impl Serialize for Observable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Observable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-cell outcome. Errors carry the [`Error::kind`] code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CellStatus {
    Ok,
    NormalPhase,
    Diverged,
    Error(String),
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::NormalPhase => f.write_str("normal-phase"),
            CellStatus::Diverged => f.write_str("diverged"),
            CellStatus::Error(code) => f.write_str(code),
        }
    }
}

impl FromStr for CellStatus {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "ok" => CellStatus::Ok,
            "normal-phase" => CellStatus::NormalPhase,
            "diverged" => CellStatus::Diverged,
            other => CellStatus::Error(other.to_string()),
        })
    }
}

impl Serialize for CellStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

/// How each cell obtains its steady state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Closed form when available, evolution otherwise.
    #[default]
    Auto,
    /// Always evolve the mean-field equations from the seed.
    Evolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub path: SolverPath,
    pub branch: Branch,
    /// Worker count; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub convergence: Convergence,
    pub solver: Dopri5,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            path: SolverPath::Auto,
            branch: Branch::Plus,
            threads: None,
            convergence: Convergence::default(),
            solver: Dopri5::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramMetadata {
    pub version: String,
    pub created_unix: u64,
    pub path: SolverPath,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub base: LadderSystem,
    pub axes: Vec<AxisSpec>,
    pub observable: Observable,
    /// Row-major over `axes`; `None` where no value exists (diverged, error).
    pub values: Vec<Option<f64>>,
    pub status: Vec<CellStatus>,
    pub metadata: DiagramMetadata,
}

impl PhaseDiagram {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// Axis coordinates of a flat cell index.
    pub fn coordinates(&self, cell: usize) -> Vec<f64> {
        cell_coordinates(&self.axes, cell)
    }

    pub fn get(&self, indices: &[usize]) -> Option<f64> {
        let mut flat = 0;
        for (axis, &i) in self.axes.iter().zip(indices) {
            flat = flat * axis.count + i;
        }
        self.values[flat]
    }
}

fn cell_coordinates(axes: &[AxisSpec], cell: usize) -> Vec<f64> {
    let mut rem = cell;
    let mut idx = vec![0; axes.len()];
    for (k, axis) in axes.iter().enumerate().rev() {
        idx[k] = rem % axis.count;
        rem /= axis.count;
    }
    axes.iter().zip(idx).map(|(a, i)| a.value(i)).collect()
}

/// Cells handed to one worker at a time.
const BLOCK: usize = 16;

pub fn run_sweep(
    base: &LadderSystem,
    axes: &[AxisSpec],
    observable: Observable,
    options: &SweepOptions,
) -> Result<PhaseDiagram> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::InvalidAxis("one or two axes are required".into()));
    }
    for a in axes {
        a.check()?;
    }
    if axes.len() == 2 && axes[0].param == axes[1].param {
        return Err(Error::InvalidAxis("axes must vary different parameters".into()));
    }
    if let Some(n) = observable.cavity() {
        if n > base.n_cavities {
            return Err(Error::UnknownObservable(format!("{observable}: ring has {} cavities", base.n_cavities)));
        }
    }
    let total: usize = axes.iter().map(|a| a.count).product();
    let cells: Vec<usize> = (0..total).collect();
    let work = || -> Vec<(Option<f64>, CellStatus)> {
        cells
            .par_chunks(BLOCK)
            .flat_map_iter(|chunk| {
                chunk.iter().map(|&cell| {
                    let mut p = base.clone();
                    for (axis, v) in axes.iter().zip(cell_coordinates(axes, cell)) {
                        axis.param.apply(&mut p, v);
                    }
                    evaluate_cell(&p, observable, options)
                })
            })
            .collect()
    };
    let results = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidAxis(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let (values, status) = results.into_iter().unzip();
    Ok(PhaseDiagram {
        base: base.clone(),
        axes: axes.to_vec(),
        observable,
        values,
        status,
        metadata: DiagramMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            path: options.path,
            branch: options.branch,
        },
    })
}

/// Steady state used by sweeps and the CLI: closed form when the ring admits
/// one, evolution from the branch seed otherwise.
pub fn solve_steady(params: &ValidatedParams, path: SolverPath, options: &SweepOptions) -> Result<SteadySolution> {
    let closed_form = params.is_symmetric() || params.n_cavities() == 3;
    if path == SolverPath::Auto && closed_form {
        analytic::steady_state(params, options.branch)
    } else {
        meanfield::evolve_to_steady(params, &SeedPolicy::with_branch(options.branch), &options.convergence, &options.solver)
    }
}

fn evaluate_cell(base: &LadderSystem, observable: Observable, options: &SweepOptions) -> (Option<f64>, CellStatus) {
    match cell_value(base, observable, options) {
        Ok(v) => v,
        Err(e) => (None, CellStatus::Error(e.kind().to_string())),
    }
}

fn cell_value(base: &LadderSystem, observable: Observable, options: &SweepOptions) -> Result<(Option<f64>, CellStatus)> {
    let params = base.validate()?;
    let solution = solve_steady(&params, options.path, options)?;
    let phase_status = match solution.phase {
        Phase::Normal => CellStatus::NormalPhase,
        Phase::Superradiant => CellStatus::Ok,
    };
    let state = &solution.state;
    let value = match observable {
        Observable::AlphaRe(n) => state.alphas[n - 1].re,
        Observable::AlphaIm(n) => state.alphas[n - 1].im,
        Observable::AlphaAbs(n) => state.alphas[n - 1].norm(),
        Observable::TotalCurrent => currents::total_current(state, &params),
        Observable::BondCurrent(n) => currents::bond_current(state, &params, n - 1),
        Observable::SpinCurrent(n) => currents::spin_cavity_currents(state, &params, n - 1).0,
        Observable::PhaseLabel => match solution.phase {
            Phase::Normal => 0.0,
            Phase::Superradiant => 1.0,
        },
        Observable::MaxRealEig => {
            stability::classify(&solution, &params, stability::DEFAULT_TOLERANCE)?.max_real_part
        }
        Observable::PhotonFluct(n) => {
            let out = fluctuations::photon_number_fluctuations(&solution, &params)?;
            return Ok(match (out.status, out.photon_numbers) {
                (FluctuationStatus::Ok, Some(v)) => (Some(v[n - 1]), phase_status),
                _ => (None, CellStatus::Diverged),
            });
        }
    };
    Ok((Some(value), phase_status))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::InvalidAxis(format!("unknown export format `{other}`"))),
        }
    }
}

/// CSV text: a header naming the axes, the observable and `status`, then one
/// row per cell in row-major order. Missing values are left empty.
pub fn to_csv(diagram: &PhaseDiagram) -> String {
    let mut out = String::new();
    for a in &diagram.axes {
        let _ = write!(out, "{},", a.param.name());
    }
    let _ = writeln!(out, "{},status", diagram.observable);
    for (cell, (v, s)) in diagram.values.iter().zip(&diagram.status).enumerate() {
        for c in diagram.coordinates(cell) {
            let _ = write!(out, "{c},");
        }
        match v {
            Some(v) => {
                let _ = writeln!(out, "{v},{s}");
            }
            None => {
                let _ = writeln!(out, ",{s}");
            }
        }
    }
    out
}

pub fn to_json(diagram: &PhaseDiagram) -> String {
    serde_json::to_string_pretty(diagram).expect("diagram serialises")
}

pub fn export(diagram: &PhaseDiagram, format: ExportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => to_csv(diagram),
        ExportFormat::Json => to_json(diagram),
    };
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn import_json(path: &Path) -> Result<PhaseDiagram> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}
