use std::io::Write as _;

use serde::Serialize;
use superradiant::analytic::{self, Phase};
use superradiant::currents::{self, CurrentReport};
use superradiant::fluctuations::{self, CovarianceBlock, FluctuationMethod, FluctuationStatus, Relaxation};
use superradiant::meanfield::{self, MeanFieldState, SeedPolicy, Sampling};
use superradiant::model::validate;
use superradiant::ode::Dopri5;
use superradiant::stability::{self, StabilityVerdict};
use superradiant::sweep::{self, AxisSpec, Observable, PhaseDiagram, SolverPath, SweepOptions};
use superradiant::{Branch, Error, SteadySolution, ValidatedParams};

use crate::config::{self, ConfigFile, FluctSolver, FormatArg, ResolvedParams, SteadyArgs, Usage};
use crate::{Command, Common};

pub enum Failure {
    Usage(String),
    Numerical(Error),
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numerical(e)
    }
}

type Outcome = Result<(), Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Steady { common, steady } => {
            let (params, file) = load(&common)?;
            let text = steady_json(&params, &config::merge_steady(steady, file.steady))?;
            emit(&common, &text)
        }
        Command::Currents { common, steady } => {
            let (params, file) = load(&common)?;
            let text = currents_json(&params, &config::merge_steady(steady, file.steady))?;
            emit(&common, &text)
        }
        Command::Evolve { common, evolve } => {
            let (params, file) = load(&common)?;
            let e = config::merge_evolve(evolve, file.evolve);
            let solver = Dopri5 {
                rtol: e.rtol.unwrap_or(Dopri5::default().rtol),
                atol: e.atol.unwrap_or(Dopri5::default().atol),
                ..Dopri5::default()
            };
            let dt = e.dt.unwrap_or(1.0);
            let sampling = if dt == 0.0 { Sampling::EveryStep } else { Sampling::Uniform(dt) };
            let branch: Branch = e.branch.map_or(Branch::Plus, Into::into);
            let seed = SeedPolicy::Tilted { z0: e.z0.unwrap_or(-0.499), branch };
            let v = validate(&params.system())?;
            let traj = meanfield::integrate(&seed.initial_state(v.n_cavities()), &v, e.t_end.unwrap_or(500.0), &solver, sampling)?;
            emit(&common, &(params_comment(&params) + &traj.to_csv()))
        }
        Command::Fluct { common, fluct } => {
            let (params, file) = load(&common)?;
            let f = config::merge_fluct(fluct, file.fluct);
            let text = fluct_csv(&params, f.solver.unwrap_or(FluctSolver::Lyapunov), f.branch.map_or(Branch::Plus, Into::into))?;
            emit(&common, &text)
        }
        Command::Sweep { common, sweep } => {
            let (params, file) = load(&common)?;
            let s = config::merge_sweep(sweep, file.sweep);
            let mut axes = Vec::new();
            for spec in [s.x.as_deref(), s.y.as_deref()].into_iter().flatten() {
                axes.push(parse_axis(spec)?);
            }
            if axes.is_empty() {
                return Err(Failure::Usage("sweep needs at least --x".into()));
            }
            let observable: Observable = s
                .observable
                .as_deref()
                .ok_or_else(|| Failure::Usage("sweep needs --observable".into()))?
                .parse()
                .map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let options = SweepOptions {
                path: if s.evolve { SolverPath::Evolve } else { SolverPath::Auto },
                branch: s.branch.map_or(Branch::Plus, Into::into),
                threads: s.threads,
                ..SweepOptions::default()
            };
            let mut diagram = sweep::run_sweep(&params.ladder()?, &axes, observable, &options)?;
            if let Some(t) = source_date_epoch() {
                diagram.metadata.created_unix = t;
            }
            let text = match s.format.unwrap_or(FormatArg::Csv) {
                FormatArg::Csv => params_comment(&params) + &sweep::to_csv(&diagram),
                FormatArg::Json => to_json(&SweepOutput { params: &params, diagram: &diagram }),
            };
            emit(&common, &text)
        }
        Command::Critical { common } => {
            let (params, _) = load(&common)?;
            let text = critical_json(&params)?;
            emit(&common, &text)
        }
    }
}

fn load(common: &Common) -> Result<(ResolvedParams, ConfigFile), Failure> {
    let mut file = ConfigFile::load(common.config.as_deref())?;
    let params = config::merge_params(common.params.clone(), std::mem::take(&mut file.params))?;
    Ok((params, file))
}

fn emit(common: &Common, text: &str) -> Outcome {
    match &common.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::Usage(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialise");
    s.push('\n');
    s
}

/// `# params: {...}` header line for CSV outputs.
fn params_comment(params: &ResolvedParams) -> String {
    format!("# params: {}\n", serde_json::to_string(params).expect("params serialise"))
}

/// Reproducible timestamps for sweep metadata.
fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.parse().ok()
}

fn parse_axis(spec: &str) -> Result<AxisSpec, Failure> {
    let bad = || Failure::Usage(format!("axis `{spec}`: expected param:min:max:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [param, min, max, count] = parts[..] else { return Err(bad()) };
    let param = param.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let min: f64 = min.trim().parse().map_err(|_| bad())?;
    let max: f64 = max.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    AxisSpec::new(param, min, max, count).map_err(|e| Failure::Usage(e.to_string()))
}

fn has_closed_form(p: &ValidatedParams) -> bool {
    p.is_symmetric() || p.n_cavities() == 3
}

fn critical_coupling(p: &ValidatedParams) -> Result<Option<f64>, Error> {
    if !has_closed_form(p) {
        return Ok(None);
    }
    match analytic::critical_coupling(p) {
        Ok(g) => Ok(Some(g)),
        Err(Error::NoTransition(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn solve(params: &ResolvedParams, steady: &SteadyArgs) -> Result<(ValidatedParams, SteadySolution, StabilityVerdict), Error> {
    let v = validate(&params.system())?;
    let options = SweepOptions { branch: steady.branch.map_or(Branch::Plus, Into::into), ..SweepOptions::default() };
    let path = if steady.evolve { SolverPath::Evolve } else { SolverPath::Auto };
    let mut solution = sweep::solve_steady(&v, path, &options)?;
    let verdict = stability::attach(&mut solution, &v, stability::DEFAULT_TOLERANCE)?;
    Ok((v, solution, verdict))
}

#[derive(Serialize)]
struct SteadyOutput<'a> {
    params: &'a ResolvedParams,
    g_c: Option<f64>,
    #[serde(flatten)]
    solution: &'a SteadySolution,
    verdict: &'a StabilityVerdict,
    currents: &'a CurrentReport,
}

fn steady_json(params: &ResolvedParams, steady: &SteadyArgs) -> Result<String, Error> {
    let (v, solution, verdict) = solve(params, steady)?;
    let report = currents::kirchhoff_audit(&solution, &v, currents::DEFAULT_TOLERANCE);
    Ok(to_json(&SteadyOutput {
        params,
        g_c: critical_coupling(&v)?,
        solution: &solution,
        verdict: &verdict,
        currents: &report,
    }))
}

#[derive(Serialize)]
struct CurrentsOutput<'a> {
    params: &'a ResolvedParams,
    phase: Phase,
    state: &'a MeanFieldState,
    /// Per emitter, in units of `Omega`.
    report: &'a CurrentReport,
    /// Multiplied by `N * Omega`.
    absolute: &'a CurrentReport,
}

fn currents_json(params: &ResolvedParams, steady: &SteadyArgs) -> Result<String, Error> {
    let (v, solution, _) = solve(params, steady)?;
    let report = currents::kirchhoff_audit(&solution, &v, currents::DEFAULT_TOLERANCE);
    Ok(to_json(&CurrentsOutput {
        params,
        phase: solution.phase,
        state: &solution.state,
        absolute: &report.scaled(params.current_scale()),
        report: &report,
    }))
}

fn fluct_csv(params: &ResolvedParams, solver: FluctSolver, branch: Branch) -> Result<String, Error> {
    let v = validate(&params.system())?;
    let options = SweepOptions { branch, ..SweepOptions::default() };
    let solution = sweep::solve_steady(&v, SolverPath::Auto, &options)?;
    let (numbers, status, method) = match solver {
        FluctSolver::Lyapunov => {
            let out = fluctuations::photon_number_fluctuations(&solution, &v)?;
            let method = match out.method {
                FluctuationMethod::Lyapunov => "lyapunov",
                FluctuationMethod::TimePropagation => "time_propagation",
            };
            let status = match out.status {
                FluctuationStatus::Ok => "ok",
                FluctuationStatus::Diverged => "diverged",
            };
            (out.photon_numbers, status, method)
        }
        FluctSolver::Relax => {
            let dynamics = fluctuations::assemble_linear_dynamics(&fluctuations::hp_coefficients(&solution.state, &v)?, &v);
            let tight = Dopri5 { rtol: 1e-12, atol: 1e-15, ..Dopri5::default() };
            let cov =
                fluctuations::relax_covariance(&dynamics, &CovarianceBlock::vacuum(v.n_cavities()), &Relaxation::default(), &tight)?;
            (Some(cov.photon_numbers()), "ok", "relax")
        }
    };
    let mut out = params_comment(params);
    out += &format!("# phase: {}, status: {status}, method: {method}\n", solution.phase.as_str());
    out += "cavity,photon_number\n";
    for n in 0..v.n_cavities() {
        match &numbers {
            Some(v) => out += &format!("{},{}\n", n + 1, v[n]),
            None => out += &format!("{},\n", n + 1),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    params: &'a ResolvedParams,
    diagram: &'a PhaseDiagram,
}

#[derive(Serialize)]
struct CriticalOutput<'a> {
    params: &'a ResolvedParams,
    g_c: Option<f64>,
    /// Ladder step putting `g` on the boundary; three cavities and `g > 0` only.
    delta_c: Option<f64>,
}

fn critical_json(params: &ResolvedParams) -> Result<String, Error> {
    let v = validate(&params.system())?;
    let g_c = critical_coupling(&v)?;
    let delta_c = if v.n_cavities() == 3 && v.coupling() > 0.0 {
        match analytic::critical_delta(&v, v.coupling()) {
            Ok(d) => Some(d),
            Err(Error::NoRoot { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(to_json(&CriticalOutput { params, g_c, delta_c }))
}
