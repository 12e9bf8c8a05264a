//! Closed-form steady states and critical surfaces.
//!
//! The branch of a superradiant solution is labelled by `sign(X)`. The sign
//! of the cavity amplitudes follows from the steady-state `Y` equation,
//! `Omega X = 4 g Z sum_n Re(alpha_n)`, so with `Z < 0` the real parts of the
//! amplitudes always carry the opposite sign to `X`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::MeanFieldState;
use crate::model::{DetuningLadder, ValidatedParams};
use crate::stability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Normal,
    Superradiant,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Normal => "normal",
            Phase::Superradiant => "superradiant",
        }
    }
}

/// One of the two Z2-related superradiant solutions, labelled by `sign(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Option<Branch> {
        if x > 0.0 {
            Some(Branch::Plus)
        } else if x < 0.0 {
            Some(Branch::Minus)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Evolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityTag {
    Unknown,
    Stable,
    Unstable,
}

/// Intermediate quantities of the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auxiliary {
    /// `alpha_n = (a + i b) / N_c` for every cavity.
    Symmetric { a: f64, b: f64 },
    /// `alpha_n = g X alpha_tilde_n`, `Z = Omega / (4 g a_tilde)`.
    Asymmetric { alpha_tilde: Vec<Complex64>, a_tilde: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadySolution {
    pub state: MeanFieldState,
    pub phase: Phase,
    pub branch: Option<Branch>,
    pub provenance: Provenance,
    pub stability: StabilityTag,
    pub auxiliary: Option<Auxiliary>,
}

impl SteadySolution {
    pub fn normal(n_cavities: usize, provenance: Provenance) -> Self {
        Self {
            state: MeanFieldState::normal(n_cavities),
            phase: Phase::Normal,
            branch: None,
            provenance,
            stability: StabilityTag::Unknown,
            auxiliary: None,
        }
    }

    pub fn is_superradiant(&self) -> bool {
        self.phase == Phase::Superradiant
    }
}

/// `|denominator|` threshold below which the closed form is rejected.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;

fn require_symmetric(params: &ValidatedParams) -> Result<f64> {
    if !params.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let shifted = params.cavity_freqs()[0] + 2.0 * params.hopping();
    if shifted == 0.0 {
        return Err(Error::FrequencyCollapse);
    }
    Ok(shifted)
}

/// `(w_c + 2J) + kappa^2 / (w_c + 2J)`.
fn effective_detuning(params: &ValidatedParams, shifted: f64) -> f64 {
    let k = params.cavity_loss();
    shifted + k * k / shifted
}

/// Critical coupling for equal cavity frequencies,
/// `g_c = (1/2) sqrt[(Omega / N_c) (w_c + 2J + kappa^2 / (w_c + 2J))]`.
pub fn g_c_symmetric(params: &ValidatedParams) -> Result<f64> {
    let shifted = require_symmetric(params)?;
    let eff = effective_detuning(params, shifted);
    if eff <= 0.0 {
        return Err(Error::NoTransition(eff));
    }
    Ok(0.5 * (params.omega() / params.n_cavities() as f64 * eff).sqrt())
}

/// Superradiant steady state for equal cavity frequencies. At or below the
/// critical coupling the normal solution is returned instead.
pub fn steady_symmetric(params: &ValidatedParams, branch: Branch) -> Result<SteadySolution> {
    let shifted = require_symmetric(params)?;
    let g_c = g_c_symmetric(params)?;
    let g = params.coupling();
    let nc = params.n_cavities();
    if g <= g_c {
        return Ok(SteadySolution::normal(nc, Provenance::Analytic));
    }
    let omega = params.omega();
    let z = -omega / (8.0 * nc as f64 * g * g) * effective_detuning(params, shifted);
    let x = branch.sign() * (0.25 - z * z).sqrt();
    let a = omega * x / (4.0 * g * z);
    let b = params.cavity_loss() * a / shifted;
    let alpha = Complex64::new(a, b) / nc as f64;
    Ok(SteadySolution {
        state: MeanFieldState { alphas: vec![alpha; nc], x, y: 0.0, z },
        phase: Phase::Superradiant,
        branch: Some(branch),
        provenance: Provenance::Analytic,
        stability: StabilityTag::Unknown,
        auxiliary: Some(Auxiliary::Symmetric { a, b }),
    })
}

fn require_three(params: &ValidatedParams) -> Result<()> {
    if params.n_cavities() != 3 {
        return Err(Error::UnsupportedRing { expected: 3, found: params.n_cavities() });
    }
    Ok(())
}

/// Normalised cavity response `alpha_tilde_n` of a three-cavity ring
/// (`alpha_n = g X alpha_tilde_n` at any steady state).
pub fn alpha_tilde(params: &ValidatedParams) -> Result<Vec<Complex64>> {
    require_three(params)?;
    let w = params.cavity_freqs();
    let j = params.hopping();
    let k = params.cavity_loss();
    let i = Complex64::i();
    let w_tot: f64 = w.iter().sum();
    let product = w.iter().fold(Complex64::new(1.0, 0.0), |acc, &wn| acc * (k + i * wn));
    let denom = 2.0 * j.powi(3) + j * j * (3.0 * i * k - w_tot) + i * product;
    if denom.norm() < SINGULAR_DENOMINATOR {
        return Err(Error::SingularDenominator(denom.norm()));
    }
    let jk = Complex64::new(j, k);
    Ok((0..3)
        .map(|n| {
            let (prev, next) = params.neighbours(n);
            -2.0 * (jk - w[prev]) * (jk - w[next]) / denom
        })
        .collect())
}

/// `sum_n (alpha_tilde_n + alpha_tilde_n^*)`.
fn alpha_tilde_re_sum(alpha_tilde: &[Complex64]) -> f64 {
    alpha_tilde.iter().map(|a| 2.0 * a.re).sum()
}

/// Common critical coupling of the three-cavity ring,
/// `g_c = sqrt(-Omega / sum_n (alpha_tilde_n + alpha_tilde_n^*))`.
pub fn g_c_asymmetric(params: &ValidatedParams) -> Result<f64> {
    let at = alpha_tilde(params)?;
    let s = alpha_tilde_re_sum(&at);
    if s >= 0.0 {
        return Err(Error::NoTransition(s));
    }
    Ok((-params.omega() / s).sqrt())
}

/// Superradiant steady state of a three-cavity ring with arbitrary cavity
/// frequencies; normal solution at or below the critical coupling.
pub fn steady_asymmetric(params: &ValidatedParams, branch: Branch) -> Result<SteadySolution> {
    let at = alpha_tilde(params)?;
    let g = params.coupling();
    let nc = params.n_cavities();
    let s = alpha_tilde_re_sum(&at);
    if s >= 0.0 || g * g <= -params.omega() / s {
        return Ok(SteadySolution::normal(nc, Provenance::Analytic));
    }
    let a_tilde = 0.5 * g * s;
    let z = params.omega() / (4.0 * g * a_tilde);
    let x = branch.sign() * (0.25 - z * z).sqrt();
    let alphas = at.iter().map(|a| g * x * a).collect();
    Ok(SteadySolution {
        state: MeanFieldState { alphas, x, y: 0.0, z },
        phase: Phase::Superradiant,
        branch: Some(branch),
        provenance: Provenance::Analytic,
        stability: StabilityTag::Unknown,
        auxiliary: Some(Auxiliary::Asymmetric { alpha_tilde: at, a_tilde }),
    })
}

/// Critical coupling by whichever closed form applies.
pub fn critical_coupling(params: &ValidatedParams) -> Result<f64> {
    if params.is_symmetric() {
        g_c_symmetric(params)
    } else {
        g_c_asymmetric(params)
    }
}

/// Closed-form steady state when one exists (equal frequencies, or three
/// cavities).
pub fn steady_state(params: &ValidatedParams, branch: Branch) -> Result<SteadySolution> {
    if params.is_symmetric() {
        steady_symmetric(params, branch)
    } else {
        steady_asymmetric(params, branch)
    }
}

/// Superradiant iff `g > g_c`; the boundary itself counts as normal.
///
/// Rings without a closed form (unequal frequencies with `N_c != 3`) are
/// classified by the linear stability of the empty state.
pub fn classify_phase(params: &ValidatedParams) -> Result<Phase> {
    if params.is_symmetric() || params.n_cavities() == 3 {
        let g_c = match critical_coupling(params) {
            Ok(g_c) => g_c,
            Err(Error::NoTransition(_)) => return Ok(Phase::Normal),
            Err(e) => return Err(e),
        };
        Ok(if params.coupling() > g_c { Phase::Superradiant } else { Phase::Normal })
    } else {
        let normal = SteadySolution::normal(params.n_cavities(), Provenance::Analytic);
        let verdict = stability::classify(&normal, params, stability::DEFAULT_TOLERANCE)?;
        Ok(if verdict.stable { Phase::Normal } else { Phase::Superradiant })
    }
}

/// Search settings for [`critical_delta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSearch {
    pub max: f64,
    pub scan_points: usize,
    pub rel_tol: f64,
}

impl Default for DeltaSearch {
    fn default() -> Self {
        Self { max: 10.0, scan_points: 2000, rel_tol: 1e-10 }
    }
}

fn boundary_function(params: &ValidatedParams, ladder: DetuningLadder, g: f64) -> Result<f64> {
    let p = params.with_cavity_freqs(ladder.expand(3)?)?;
    let at = alpha_tilde(&p)?;
    Ok(p.omega() + g * g * alpha_tilde_re_sum(&at))
}

/// Smallest ladder step `Delta > 0` at which coupling `g` sits exactly on the
/// phase boundary, i.e. `Omega + sum_n g^2 (alpha_tilde_n + alpha_tilde_n^*) = 0`
/// with `w_n = w_1 + (n - 1) Delta`.
pub fn critical_delta(params: &ValidatedParams, g: f64) -> Result<f64> {
    critical_delta_with(params, g, &DeltaSearch::default())
}

pub fn critical_delta_with(params: &ValidatedParams, g: f64, search: &DeltaSearch) -> Result<f64> {
    require_three(params)?;
    let base = params.cavity_freqs()[0];
    let f = |d: f64| boundary_function(params, DetuningLadder::new(base, d), g);
    let f0 = f(0.0)?;
    if f0 >= 0.0 {
        return Err(Error::NoRoot { max: search.max });
    }
    let step = search.max / search.scan_points as f64;
    let mut lo = 0.0;
    for k in 1..=search.scan_points {
        let d = k as f64 * step;
        let v = match f(d) {
            Ok(v) => v,
            Err(Error::SingularDenominator(_)) => continue,
            Err(e) => return Err(e),
        };
        if v >= 0.0 {
            let mut hi = d;
            while hi - lo > search.rel_tol * hi {
                let mid = 0.5 * (lo + hi);
                match f(mid) {
                    Ok(v) if v >= 0.0 => hi = mid,
                    Ok(_) => lo = mid,
                    Err(Error::SingularDenominator(_)) => lo = mid,
                    Err(e) => return Err(e),
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        lo = d;
    }
    Err(Error::NoRoot { max: search.max })
}
