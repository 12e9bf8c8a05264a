//! Mean-field equations of motion for the cavity amplitudes and the
//! collective spin, plus time integration and evolution to a steady state.
//!
//! With `Omega = 1` and per-emitter scaling `<a_n> = sqrt(N) alpha_n`,
//! `<S_k> = N (X, Y, Z)`:
//!
//! ```text
//! d alpha_n/dt = -i [w_n alpha_n + J (alpha_{n-1} + alpha_{n+1}) + 2 g X] - kappa alpha_n
//! dX/dt = -Omega Y
//! dY/dt =  Omega X - Z * sum_n 2 g (alpha_n + alpha_n^*)
//! dZ/dt =  Y * sum_n 2 g (alpha_n + alpha_n^*)
//! ```

use std::fmt::Write as _;
use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{Branch, Phase, Provenance, SteadySolution, StabilityTag};
use crate::error::{Error, Result};
use crate::model::ValidatedParams;
use crate::ode::{Dopri5, StepStats};

/// Order parameters `alpha_n` and the spin vector `(X, Y, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub alphas: Vec<Complex64>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MeanFieldState {
    /// Empty cavities, all emitters in the ground state.
    pub fn normal(n_cavities: usize) -> Self {
        Self { alphas: vec![Complex64::new(0.0, 0.0); n_cavities], x: 0.0, y: 0.0, z: -0.5 }
    }

    pub fn n_cavities(&self) -> usize {
        self.alphas.len()
    }

    /// `X^2 + Y^2 + Z^2 - 1/4`.
    pub fn spin_norm_drift(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z - 0.25
    }

    /// Z2 parity image: `alpha -> -alpha`, `X -> -X`, `Y -> -Y`.
    pub fn parity_flipped(&self) -> Self {
        Self { alphas: self.alphas.iter().map(|a| -a).collect(), x: -self.x, y: -self.y, z: self.z }
    }

    /// Flat layout `[Re a1, Im a1, ..., Re aN, Im aN, X, Y, Z]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.alphas.len() + 3);
        for a in &self.alphas {
            v.push(a.re);
            v.push(a.im);
        }
        v.extend([self.x, self.y, self.z]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let nc = (v.len() - 3) / 2;
        Self {
            alphas: (0..nc).map(|n| Complex64::new(v[2 * n], v[2 * n + 1])).collect(),
            x: v[2 * nc],
            y: v[2 * nc + 1],
            z: v[2 * nc + 2],
        }
    }

    /// Euclidean norm over all real components.
    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.alphas.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

/// Time derivative of `state`.
pub fn rhs(state: &MeanFieldState, params: &ValidatedParams) -> MeanFieldState {
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    rhs_flat(params, &y, &mut dy);
    MeanFieldState::from_slice(&dy)
}

/// Norm of the time derivative; zero exactly at a fixed point.
pub fn residual(state: &MeanFieldState, params: &ValidatedParams) -> f64 {
    rhs(state, params).norm()
}

pub(crate) fn rhs_flat(params: &ValidatedParams, y: &[f64], dy: &mut [f64]) {
    let nc = params.n_cavities();
    let w = params.cavity_freqs();
    let j = params.hopping();
    let g = params.coupling();
    let kappa = params.cavity_loss();
    let omega = params.omega();
    let (x, sy, z) = (y[2 * nc], y[2 * nc + 1], y[2 * nc + 2]);

    let mut re_sum = 0.0;
    for n in 0..nc {
        let (prev, next) = ((n + nc - 1) % nc, (n + 1) % nc);
        let (re, im) = (y[2 * n], y[2 * n + 1]);
        // -i * (h) with h = w a + J (a_prev + a_next) + 2 g X
        let h_re = w[n] * re + j * (y[2 * prev] + y[2 * next]) + 2.0 * g * x;
        let h_im = w[n] * im + j * (y[2 * prev + 1] + y[2 * next + 1]);
        dy[2 * n] = h_im - kappa * re;
        dy[2 * n + 1] = -h_re - kappa * im;
        re_sum += re;
    }
    // sum_n 2 g (alpha_n + alpha_n^*)
    let drive = 4.0 * g * re_sum;
    dy[2 * nc] = -omega * sy;
    dy[2 * nc + 1] = omega * x - z * drive;
    dy[2 * nc + 2] = sy * drive;
}

/// Recorded trajectory. Times are in units of `1/Omega`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub params: ValidatedParams,
    pub stats: StepStats,
    /// Largest `|X^2 + Y^2 + Z^2 - 1/4|` over the recorded points.
    pub max_spin_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &MeanFieldState {
        self.states.last().expect("trajectory has at least the initial point")
    }

    /// CSV with columns `t, re_alpha_1..N, im_alpha_1..N, X, Y, Z`.
    pub fn to_csv(&self) -> String {
        let nc = self.params.n_cavities();
        let mut out = String::from("t");
        for n in 1..=nc {
            let _ = write!(out, ",re_alpha_{n}");
        }
        for n in 1..=nc {
            let _ = write!(out, ",im_alpha_{n}");
        }
        out.push_str(",X,Y,Z\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for a in &s.alphas {
                let _ = write!(out, ",{}", a.re);
            }
            for a in &s.alphas {
                let _ = write!(out, ",{}", a.im);
            }
            let _ = writeln!(out, ",{},{},{}", s.x, s.y, s.z);
        }
        out
    }
}

/// How samples are stored along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sampling {
    /// Every accepted integrator step.
    #[default]
    EveryStep,
    /// A uniform grid with the given spacing (the stepper lands on it exactly).
    Uniform(f64),
}

pub fn integrate(
    state0: &MeanFieldState,
    params: &ValidatedParams,
    t_end: f64,
    solver: &Dopri5,
    sampling: Sampling,
) -> Result<Trajectory> {
    if state0.n_cavities() != params.n_cavities() {
        return Err(Error::FrequencyCountMismatch {
            expected: params.n_cavities(),
            found: state0.n_cavities(),
        });
    }
    let stops: Vec<f64> = match sampling {
        Sampling::EveryStep => Vec::new(),
        Sampling::Uniform(dt) => {
            if !(dt > 0.0) {
                return Err(Error::InvalidIntegration("sampling interval must be positive"));
            }
            let n = (t_end / dt).floor() as usize;
            (1..=n).map(|k| k as f64 * dt).filter(|&t| t < t_end).collect()
        }
    };
    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];
    let mut max_drift = state0.spin_norm_drift().abs();
    let y0 = state0.to_vec();
    let out = solver.integrate(
        |_, y, dy| rhs_flat(params, y, dy),
        0.0,
        &y0,
        t_end,
        &stops,
        |t, y, _| {
            let keep = match sampling {
                Sampling::EveryStep => true,
                Sampling::Uniform(_) => stops.binary_search_by(|s| s.total_cmp(&t)).is_ok() || t >= t_end,
            };
            if keep {
                let s = MeanFieldState::from_slice(y);
                max_drift = max_drift.max(s.spin_norm_drift().abs());
                times.push(t);
                states.push(s);
            }
            ControlFlow::Continue(())
        },
    )?;
    Ok(Trajectory { times, states, params: params.clone(), stats: out.stats, max_spin_drift: max_drift })
}

/// Initial condition used to break the Z2 symmetry.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedPolicy {
    /// `alpha_n = 0`, `Y = 0`, `Z = z0`, `X = sign * sqrt(1/4 - z0^2)`.
    Tilted { z0: f64, branch: Branch },
    Custom(MeanFieldState),
}

impl Default for SeedPolicy {
    fn default() -> Self {
        SeedPolicy::Tilted { z0: -0.499, branch: Branch::Plus }
    }
}

impl SeedPolicy {
    pub fn with_branch(branch: Branch) -> Self {
        SeedPolicy::Tilted { z0: -0.499, branch }
    }

    pub fn initial_state(&self, n_cavities: usize) -> MeanFieldState {
        match self {
            SeedPolicy::Tilted { z0, branch } => {
                let x = branch.sign() * (0.25 - z0 * z0).max(0.0).sqrt();
                MeanFieldState { alphas: vec![Complex64::new(0.0, 0.0); n_cavities], x, y: 0.0, z: *z0 }
            }
            SeedPolicy::Custom(s) => s.clone(),
        }
    }
}

/// Steady-state detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Time the derivative norm must stay below `tol_derivative`.
    pub window: f64,
    pub tol_derivative: f64,
    /// Give up after this time.
    pub t_max: f64,
    /// Step cap while relaxing. Near a fixed point the error estimate stops
    /// limiting the step, which then grows to the edge of the explicit
    /// method's stability region; the resulting jitter keeps the derivative
    /// around `rtol` instead of letting it settle below `tol_derivative`.
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

fn default_max_step() -> f64 {
    0.25
}

impl Default for Convergence {
    fn default() -> Self {
        Self { window: 10.0, tol_derivative: 1e-10, t_max: 1e5, max_step: default_max_step() }
    }
}

/// Cavity amplitudes below this are treated as an empty (normal) state.
pub const NORMAL_AMPLITUDE: f64 = 1e-8;

/// Integrates from the seed until the derivative norm stays below
/// `tol_derivative` for `window` time units.
pub fn evolve_to_steady(
    params: &ValidatedParams,
    seed: &SeedPolicy,
    convergence: &Convergence,
    solver: &Dopri5,
) -> Result<SteadySolution> {
    if !(convergence.window > 0.0
        && convergence.tol_derivative > 0.0
        && convergence.t_max > 0.0
        && convergence.max_step > 0.0)
    {
        return Err(Error::InvalidIntegration("convergence settings must be positive"));
    }
    let state0 = seed.initial_state(params.n_cavities());
    if state0.n_cavities() != params.n_cavities() {
        return Err(Error::FrequencyCountMismatch {
            expected: params.n_cavities(),
            found: state0.n_cavities(),
        });
    }
    if residual(&state0, params) == 0.0 {
        return Ok(tag_evolved(state0));
    }

    let solver = Dopri5 { h_max: solver.h_max.min(convergence.max_step), ..*solver };
    let mut quiet_since: Option<f64> = None;
    let mut last_residual = f64::INFINITY;
    let out = solver.integrate(
        |_, y, dy| rhs_flat(params, y, dy),
        0.0,
        &state0.to_vec(),
        convergence.t_max,
        &[],
        |t, _, dy| {
            let r = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
            last_residual = r;
            if r < convergence.tol_derivative {
                let since = *quiet_since.get_or_insert(t);
                if t - since >= convergence.window {
                    return ControlFlow::Break(());
                }
            } else {
                quiet_since = None;
            }
            ControlFlow::Continue(())
        },
    )?;
    if !out.stopped {
        return Err(Error::NoConvergence { t: out.t, residual: last_residual });
    }
    Ok(tag_evolved(MeanFieldState::from_slice(&out.y)))
}

fn tag_evolved(state: MeanFieldState) -> SteadySolution {
    let normal = state.max_abs_alpha() < NORMAL_AMPLITUDE;
    let (phase, branch) = if normal {
        (Phase::Normal, None)
    } else {
        (Phase::Superradiant, Branch::of(state.x))
    };
    SteadySolution {
        state,
        phase,
        branch,
        provenance: Provenance::Evolved,
        stability: StabilityTag::Unknown,
        auxiliary: None,
    }
}
