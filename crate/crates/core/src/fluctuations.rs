//! Gaussian fluctuations around a mean-field steady state.
//!
//! The collective spin is mapped to a boson `b = beta sqrt(N) + d` and the
//! cavities to `a_n = alpha_n sqrt(N) + c_n`. To quadratic order:
//!
//! ```text
//! H_fl = sum_n [w_n c_n^† c_n + J (c_{n+1}^† c_n + h.c.)] + Omega~ d^† d
//!      + sum_n [Gamma1 (c_n^† d + c_n d) + Gamma3_n d^† d^† + h.c.]
//! ```
//!
//! with loss `kappa` on every `c_n` and none on `d`. Second moments are
//! tracked as the symmetrised covariance of the quadratures
//! `Q = (x + x^†)/sqrt(2)`, `P = -i (x - x^†)/sqrt(2)` ordered
//! `[Q_c1, P_c1, ..., Q_cN, P_cN, Q_d, P_d]`. The vacuum has covariance `I/2`.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::SteadySolution;
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldState;
use crate::model::ValidatedParams;
use crate::ode::Dopri5;
use crate::stability::eigenvalues;

/// Drift eigenvalues with real part above `-MARGIN` count as marginal.
pub const MARGIN: f64 = 1e-10;

/// Photon number above which a time-integrated covariance is declared divergent.
pub const DIVERGENCE_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPCoefficients {
    pub omega_tilde: f64,
    pub gamma1: Complex64,
    pub gamma3: Vec<Complex64>,
    pub beta: Complex64,
    pub b1: f64,
}

/// Expansion coefficients around `state`:
///
/// ```text
/// beta     = (X - iY) / sqrt(1/2 - Z),   B1 = sqrt(1 - |beta|^2)
/// Omega~   = Omega - g [sum_n Re a_n] Re(beta) (4 - 3|beta|^2) / B1^3
/// Gamma1   = g (1 - |beta|^2 - Re(beta) beta^*) / B1
/// Gamma3_n = -g Re(a_n) [Re(beta) beta^2 + 2 beta (1 - |beta|^2)] / (2 B1^3)
/// ```
pub fn hp_coefficients(state: &MeanFieldState, params: &ValidatedParams) -> Result<HPCoefficients> {
    let denom = 0.5 - state.z;
    if denom <= 0.0 {
        return Err(Error::ZAtHalf);
    }
    let beta = Complex64::new(state.x, -state.y) / denom.sqrt();
    let b2 = beta.norm_sqr();
    if b2 >= 1.0 {
        return Err(Error::BetaOverflow(b2.sqrt()));
    }
    let b1 = (1.0 - b2).sqrt();
    let g = params.coupling();
    let re_sum: f64 = state.alphas.iter().map(|a| a.re).sum();
    let omega_tilde = params.omega() - g * re_sum * beta.re * (4.0 - 3.0 * b2) / b1.powi(3);
    let gamma1 = g * (1.0 - b2 - beta.re * beta.conj()) / b1;
    let shape = beta.re * beta * beta + 2.0 * beta * (1.0 - b2);
    let gamma3 = state
        .alphas
        .iter()
        .map(|a| -g * a.re * shape / (2.0 * b1.powi(3)))
        .collect();
    Ok(HPCoefficients { omega_tilde, gamma1, gamma3, beta, b1 })
}

/// `dSigma/dt = A Sigma + Sigma A^T + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn dimension(&self) -> usize {
        self.drift.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.dimension() / 2
    }

    /// `A Sigma + Sigma A^T + D`.
    pub fn lyapunov_rhs(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let a_sigma = &self.drift * sigma;
        &a_sigma + a_sigma.transpose() + &self.diffusion
    }
}

/// Builds drift and diffusion from the fluctuation Hamiltonian.
///
/// Writing `H = sum h_jk x_j^† x_k + 1/2 sum (s_jk x_j^† x_k^† + h.c.)`, the
/// Heisenberg-Langevin equations are `x' = (-i h - K) x - i s x^† + noise`,
/// which are then split into real quadratures.
pub fn assemble_linear_dynamics(coeffs: &HPCoefficients, params: &ValidatedParams) -> LinearDynamics {
    let nc = params.n_cavities();
    let m = nc + 1;
    let d = nc;
    let zero = Complex64::new(0.0, 0.0);
    let mut h = DMatrix::from_element(m, m, zero);
    let mut s = DMatrix::from_element(m, m, zero);
    let w = params.cavity_freqs();
    let j = params.hopping();
    for n in 0..nc {
        let next = (n + 1) % nc;
        h[(n, n)] += w[n];
        h[(n, next)] += j;
        h[(next, n)] += j;
        // Gamma1 (c^† d + c d) + h.c.
        h[(n, d)] += coeffs.gamma1;
        h[(d, n)] += coeffs.gamma1.conj();
        s[(n, d)] += coeffs.gamma1.conj();
        s[(d, n)] += coeffs.gamma1.conj();
    }
    h[(d, d)] += coeffs.omega_tilde;
    // sum_n Gamma3_n d^† d^† = 1/2 s_dd d^† d^†
    s[(d, d)] += 2.0 * coeffs.gamma3.iter().sum::<Complex64>();

    let kappa = params.cavity_loss();
    let i = Complex64::i();
    let mut drift = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for r in 0..m {
        for c in 0..m {
            let loss = if r == c && r < nc { kappa } else { 0.0 };
            let m1 = -i * h[(r, c)] - loss;
            let m2 = -i * s[(r, c)];
            let plus = m1 + m2;
            let minus = m1 - m2;
            drift[(2 * r, 2 * c)] = plus.re;
            drift[(2 * r, 2 * c + 1)] = -minus.im;
            drift[(2 * r + 1, 2 * c)] = plus.im;
            drift[(2 * r + 1, 2 * c + 1)] = minus.re;
        }
    }
    let mut diffusion = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for n in 0..2 * nc {
        diffusion[(n, n)] = kappa;
    }
    LinearDynamics { drift, diffusion }
}

/// Steady second moments of the cavity and emitter fluctuation modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlock {
    pub matrix: DMatrix<f64>,
    pub n_cavities: usize,
}

impl CovarianceBlock {
    pub fn vacuum(n_cavities: usize) -> Self {
        let dim = 2 * (n_cavities + 1);
        Self { matrix: DMatrix::identity(dim, dim) * 0.5, n_cavities }
    }

    fn occupation(&self, mode: usize) -> f64 {
        (self.matrix[(2 * mode, 2 * mode)] + self.matrix[(2 * mode + 1, 2 * mode + 1)] - 1.0) / 2.0
    }

    /// `<c_n^† c_n>` for every cavity.
    pub fn photon_numbers(&self) -> Vec<f64> {
        (0..self.n_cavities).map(|n| self.occupation(n)).collect()
    }

    /// `<d^† d>`.
    pub fn emitter_number(&self) -> f64 {
        self.occupation(self.n_cavities)
    }

    /// `max |Sigma - Sigma^T|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).abs().max()
    }

    /// Smallest eigenvalue of `Sigma + i Omega/2` (Omega the symplectic form);
    /// non-negative for a physical state.
    pub fn uncertainty_margin(&self) -> f64 {
        let dim = self.matrix.nrows();
        let mut omega = DMatrix::<f64>::zeros(dim, dim);
        for k in 0..dim / 2 {
            omega[(2 * k, 2 * k + 1)] = 0.5;
            omega[(2 * k + 1, 2 * k)] = -0.5;
        }
        // Real embedding of the Hermitian matrix Sigma + i Omega/2.
        let sym = 0.5 * (&self.matrix + self.matrix.transpose());
        let mut big = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
        big.view_mut((0, 0), (dim, dim)).copy_from(&sym);
        big.view_mut((dim, dim), (dim, dim)).copy_from(&sym);
        big.view_mut((0, dim), (dim, dim)).copy_from(&(-&omega));
        big.view_mut((dim, 0), (dim, dim)).copy_from(&omega);
        big.symmetric_eigenvalues().min()
    }
}

/// Solves `A Sigma + Sigma A^T + D = 0` by Kronecker vectorisation and LU.
///
/// Fails with [`Error::MarginalDrift`] unless every drift eigenvalue has real
/// part below `-MARGIN`.
pub fn steady_covariance(dynamics: &LinearDynamics) -> Result<CovarianceBlock> {
    let ev = eigenvalues(&dynamics.drift)?;
    if let Some(&worst) = ev.first() {
        if worst.re >= -MARGIN {
            return Err(Error::MarginalDrift(worst));
        }
    }
    let n = dynamics.dimension();
    let a = &dynamics.drift;
    // vec(A S + S A^T) = (I (x) A + A (x) I) vec(S), column-major vec.
    let mut k = DMatrix::<f64>::zeros(n * n, n * n);
    for col in 0..n {
        for row in 0..n {
            let r = row + n * col;
            for m in 0..n {
                k[(r, m + n * col)] += a[(row, m)];
                k[(r, row + n * m)] += a[(col, m)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n * n, dynamics.diffusion.iter().map(|v| -v));
    let sol = k.lu().solve(&rhs).ok_or(Error::SingularLyapunov)?;
    let sigma = DMatrix::from_column_slice(n, n, sol.as_slice());
    let sigma = 0.5 * (&sigma + sigma.transpose());
    Ok(CovarianceBlock { matrix: sigma, n_cavities: n / 2 - 1 })
}

/// Settings for [`relax_covariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    /// Stop once `max |dSigma/dt| <= tol_derivative * max(1, max |Sigma|)`
    /// has held for `window` time units. The stepper tolerances must sit well
    /// below this, or integration noise keeps the derivative above it.
    pub tol_derivative: f64,
    pub window: f64,
    pub t_max: f64,
}

impl Default for Relaxation {
    fn default() -> Self {
        Self { tol_derivative: 1e-12, window: 10.0, t_max: 1e6 }
    }
}

/// Integrates the covariance equation of motion from `initial` until it
/// stops changing. This is the time-domain route to the steady moments.
pub fn relax_covariance(
    dynamics: &LinearDynamics,
    initial: &CovarianceBlock,
    settings: &Relaxation,
    solver: &Dopri5,
) -> Result<CovarianceBlock> {
    let n = dynamics.dimension();
    let mut quiet_since: Option<f64> = None;
    let mut last = f64::INFINITY;
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
        let sigma = DMatrix::from_column_slice(n, n, y);
        dy.copy_from_slice(dynamics.lyapunov_rhs(&sigma).as_slice());
    };
    let out = solver.integrate(rhs, 0.0, initial.matrix.as_slice(), settings.t_max, &[], |t, y, dy| {
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if scale > DIVERGENCE_CAP {
            return ControlFlow::Break(());
        }
        let r = dy.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        last = r;
        if r <= settings.tol_derivative {
            let since = *quiet_since.get_or_insert(t);
            if t - since >= settings.window {
                return ControlFlow::Break(());
            }
        } else {
            quiet_since = None;
        }
        ControlFlow::Continue(())
    })?;
    let block = CovarianceBlock { matrix: DMatrix::from_column_slice(n, n, &out.y), n_cavities: initial.n_cavities };
    if !out.stopped || block.matrix.abs().max() > DIVERGENCE_CAP {
        return Err(Error::NoConvergence { t: out.t, residual: last });
    }
    Ok(block)
}

/// Exact propagation of the covariance by repeated time doubling:
/// `Phi(2t) = Phi(t)^2`, `W(2t) = W(t) + Phi(t) W(t) Phi(t)^T`, starting from
/// the Van Loan block exponential at `t = 1`.
///
/// Returns the converged covariance, or `None` if any photon number exceeds
/// `cap` or the moments are still changing at `t_max`.
pub fn propagate_by_doubling(
    dynamics: &LinearDynamics,
    initial: &CovarianceBlock,
    cap: f64,
    t_max: f64,
) -> Option<CovarianceBlock> {
    let n = dynamics.dimension();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-&dynamics.drift));
    block.view_mut((0, n), (n, n)).copy_from(&dynamics.diffusion);
    block.view_mut((n, n), (n, n)).copy_from(&dynamics.drift.transpose());
    let e = block.exp();
    let f22 = e.view((n, n), (n, n)).into_owned();
    let f12 = e.view((0, n), (n, n)).into_owned();
    let mut phi = f22.transpose();
    let mut w = f22.transpose() * f12;
    let mut t = 1.0;
    let sigma0 = &initial.matrix;
    let at = |phi: &DMatrix<f64>, w: &DMatrix<f64>| phi * sigma0 * phi.transpose() + w;
    let mut prev = at(&phi, &w);
    while t < t_max {
        let pw = &phi * &w * phi.transpose();
        w += pw;
        w = 0.5 * (&w + w.transpose());
        phi = &phi * &phi;
        t *= 2.0;
        let sigma = at(&phi, &w);
        if sigma.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let cov = CovarianceBlock { matrix: sigma.clone(), n_cavities: initial.n_cavities };
        if cov.photon_numbers().iter().chain(std::iter::once(&cov.emitter_number())).any(|&v| v > cap) {
            return None;
        }
        let change = (&sigma - &prev).abs().max();
        if change <= 1e-13 * sigma.abs().max().max(1.0) {
            return Some(cov);
        }
        prev = sigma;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluctuationStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluctuationMethod {
    /// Direct Lyapunov solve.
    Lyapunov,
    /// Exact time propagation (used when the drift is marginal).
    TimePropagation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationOutcome {
    /// `<c_n^† c_n>` per cavity, absent when diverged.
    pub photon_numbers: Option<Vec<f64>>,
    pub status: FluctuationStatus,
    pub method: FluctuationMethod,
}

/// Steady `<c_n^† c_n>` around `solution`. Marginal or unstable drifts are
/// propagated in time from the vacuum instead; if that exceeds
/// [`DIVERGENCE_CAP`] the outcome is marked diverged.
pub fn photon_number_fluctuations(solution: &SteadySolution, params: &ValidatedParams) -> Result<FluctuationOutcome> {
    let coeffs = hp_coefficients(&solution.state, params)?;
    let dynamics = assemble_linear_dynamics(&coeffs, params);
    match steady_covariance(&dynamics) {
        Ok(cov) => Ok(FluctuationOutcome {
            photon_numbers: Some(cov.photon_numbers()),
            status: FluctuationStatus::Ok,
            method: FluctuationMethod::Lyapunov,
        }),
        Err(Error::MarginalDrift(_)) => {
            let vacuum = CovarianceBlock::vacuum(params.n_cavities());
            match propagate_by_doubling(&dynamics, &vacuum, DIVERGENCE_CAP, 1e12) {
                Some(cov) => Ok(FluctuationOutcome {
                    photon_numbers: Some(cov.photon_numbers().into_iter().map(|v| v.max(0.0)).collect()),
                    status: FluctuationStatus::Ok,
                    method: FluctuationMethod::TimePropagation,
                }),
                None => Ok(FluctuationOutcome {
                    photon_numbers: None,
                    status: FluctuationStatus::Diverged,
                    method: FluctuationMethod::TimePropagation,
                }),
            }
        }
        Err(e) => Err(e),
    }
}
