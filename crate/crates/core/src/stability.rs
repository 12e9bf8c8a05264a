//! Linear stability of steady solutions.
//!
//! Fluctuations are written in cavity quadratures
//! `dq_n = (da_n + da_n^*)/sqrt(2)`, `dp_n = i(da_n^* - da_n)/sqrt(2)` and the
//! spin pair `(dX, dY)`. `dZ` is removed with the tangent-plane constraint
//! `X dX + Y dY + Z dZ = 0`, i.e. `dZ = -(X dX + Y dY) / Z`. On
//! `V = [dq_1, dp_1, ..., dq_N, dp_N, dX, dY]`:
//!
//! ```text
//! dq_n' =  w_n dp_n + J (dp_{n-1} + dp_{n+1}) - kappa dq_n
//! dp_n' = -w_n dq_n - J (dq_{n-1} + dq_{n+1}) - 2 sqrt(2) g dX - kappa dp_n
//! dX'   = -Omega dY
//! dY'   = [Omega + 2 g (X/Z) S] dX + 2 g (Y/Z) S dY - 2 sqrt(2) g Z sum_n dq_n
//! ```
//!
//! with `S = sum_n (alpha_n + alpha_n^*)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{StabilityTag, SteadySolution};
use crate::error::{Error, Result};
use crate::meanfield::{residual, MeanFieldState};
use crate::model::ValidatedParams;

/// Largest eigenvalue real part still counted as stable.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Solutions with a larger rhs norm are rejected as not steady.
pub const STEADY_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMatrix {
    pub matrix: DMatrix<f64>,
}

impl StabilityMatrix {
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// Sorted by descending real part.
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    pub stable: bool,
}

pub fn build_matrix(solution: &SteadySolution, params: &ValidatedParams) -> Result<StabilityMatrix> {
    let r = residual(&solution.state, params);
    if !(r < STEADY_RESIDUAL) {
        return Err(Error::NotSteady(r));
    }
    linearise(&solution.state, params)
}

/// Fluctuation matrix around an arbitrary state (no steadiness check).
pub fn linearise(state: &MeanFieldState, params: &ValidatedParams) -> Result<StabilityMatrix> {
    if state.z == 0.0 {
        return Err(Error::ZeroZ);
    }
    let nc = params.n_cavities();
    let dim = 2 * nc + 2;
    let (ix, iy) = (2 * nc, 2 * nc + 1);
    let w = params.cavity_freqs();
    let j = params.hopping();
    let g = params.coupling();
    let kappa = params.cavity_loss();
    let omega = params.omega();
    let sqrt2 = std::f64::consts::SQRT_2;
    let s: f64 = state.alphas.iter().map(|a| 2.0 * a.re).sum();

    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for n in 0..nc {
        let (q, p) = (2 * n, 2 * n + 1);
        let (prev, next) = params.neighbours(n);
        m[(q, p)] += w[n];
        m[(q, q)] -= kappa;
        m[(p, q)] -= w[n];
        m[(p, p)] -= kappa;
        for nb in [prev, next] {
            m[(q, 2 * nb + 1)] += j;
            m[(p, 2 * nb)] -= j;
        }
        m[(p, ix)] -= 2.0 * sqrt2 * g;
        m[(iy, q)] -= 2.0 * sqrt2 * g * state.z;
    }
    m[(ix, iy)] = -omega;
    m[(iy, ix)] = omega + 2.0 * g * s * state.x / state.z;
    m[(iy, iy)] = 2.0 * g * s * state.y / state.z;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter("stability matrix"));
    }
    Ok(StabilityMatrix { matrix: m })
}

/// All eigenvalues of a real square matrix, sorted by descending real part.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let schur = matrix.clone().try_schur(1e-15, 10_000).ok_or(Error::EigenFailure)?;
    let mut ev: Vec<Complex64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(ev)
}

pub fn classify(solution: &SteadySolution, params: &ValidatedParams, tol: f64) -> Result<StabilityVerdict> {
    let m = build_matrix(solution, params)?;
    let eigenvalues = eigenvalues(&m.matrix)?;
    let max_real_part = eigenvalues.first().map_or(f64::NEG_INFINITY, |e| e.re);
    Ok(StabilityVerdict { eigenvalues, max_real_part, stable: max_real_part <= tol })
}

/// Classifies and records the verdict on the solution.
pub fn attach(solution: &mut SteadySolution, params: &ValidatedParams, tol: f64) -> Result<StabilityVerdict> {
    let verdict = classify(solution, params, tol)?;
    solution.stability = if verdict.stable { StabilityTag::Stable } else { StabilityTag::Unstable };
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{g_c_symmetric, steady_asymmetric, steady_symmetric, Branch, Provenance};
    use crate::meanfield::rhs_flat;
    use crate::model::{validate, SystemParams};

    fn params(freqs: Vec<f64>, j: f64, kappa: f64, g: f64) -> ValidatedParams {
        validate(&SystemParams {
            omega_emitter: 1.0,
            n_cavities: freqs.len(),
            cavity_freqs: freqs,
            hopping: j,
            coupling: g,
            cavity_loss: kappa,
            emitter_loss: 0.0,
            n_emitters: None,
        })
        .unwrap()
    }

    /// Jacobian of the mean-field flow restricted to the spin sphere, by
    /// central differences. `Z` is a function of `(X, Y)` on the sphere, so
    /// the reduced coordinates are the quadratures plus `(X, Y)`.
    fn finite_difference_jacobian(state: &MeanFieldState, p: &ValidatedParams, h: f64) -> DMatrix<f64> {
        let nc = p.n_cavities();
        let dim = 2 * nc + 2;
        let sqrt2 = std::f64::consts::SQRT_2;
        let zsign = state.z.signum();
        let to_full = |v: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; 2 * nc + 3];
            for n in 0..nc {
                y[2 * n] = v[2 * n] / sqrt2;
                y[2 * n + 1] = v[2 * n + 1] / sqrt2;
            }
            let (x, yy) = (v[2 * nc], v[2 * nc + 1]);
            y[2 * nc] = x;
            y[2 * nc + 1] = yy;
            y[2 * nc + 2] = zsign * (0.25 - x * x - yy * yy).sqrt();
            y
        };
        let flow = |v: &[f64]| -> Vec<f64> {
            let y = to_full(v);
            let mut dy = vec![0.0; y.len()];
            rhs_flat(p, &y, &mut dy);
            let mut out = vec![0.0; dim];
            for n in 0..nc {
                out[2 * n] = sqrt2 * dy[2 * n];
                out[2 * n + 1] = sqrt2 * dy[2 * n + 1];
            }
            out[2 * nc] = dy[2 * nc];
            out[2 * nc + 1] = dy[2 * nc + 1];
            out
        };
        let mut v0 = vec![0.0; dim];
        for n in 0..nc {
            v0[2 * n] = sqrt2 * state.alphas[n].re;
            v0[2 * n + 1] = sqrt2 * state.alphas[n].im;
        }
        v0[2 * nc] = state.x;
        v0[2 * nc + 1] = state.y;
        let mut jac = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut up = v0.clone();
            let mut dn = v0.clone();
            up[c] += h;
            dn[c] -= h;
            let (fu, fd) = (flow(&up), flow(&dn));
            for r in 0..dim {
                jac[(r, c)] = (fu[r] - fd[r]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn decoupled_normal_phase_spectrum() {
        let p = params(vec![0.4, 0.7, 1.3], 0.0, 0.3, 0.0);
        let normal = SteadySolution::normal(3, Provenance::Analytic);
        let v = classify(&normal, &p, DEFAULT_TOLERANCE).unwrap();
        let mut expected = vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)];
        for w in [0.4, 0.7, 1.3] {
            expected.push(Complex64::new(-0.3, w));
            expected.push(Complex64::new(-0.3, -w));
        }
        for e in &expected {
            assert!(v.eigenvalues.iter().any(|x| (x - e).norm() < 1e-10), "missing {e}");
        }
        assert!(v.stable);
    }

    #[test]
    fn diagonal_matrix_eigenvalues() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, -1.0, -2.0, -4.0]));
        let ev = eigenvalues(&m).unwrap();
        let re: Vec<f64> = ev.iter().map(|e| e.re).collect();
        assert_eq!(re, vec![-1.0, -2.0, -3.0, -4.0]);
    }

    #[test]
    fn matches_finite_differences_at_superradiant_points() {
        let cases = [
            (params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35), Branch::Plus),
            (params(vec![0.1, 0.3, 0.5], 0.2, 0.3, 0.4), Branch::Minus),
            (params(vec![0.5; 3], 0.1, 0.3, 0.35), Branch::Plus),
        ];
        for (p, b) in cases {
            let s = steady_asymmetric(&p, b).unwrap();
            let m = build_matrix(&s, &p).unwrap().matrix;
            let fd = finite_difference_jacobian(&s.state, &p, 1e-7);
            let diff = (&m - &fd).abs().max();
            assert!(diff < 1e-6, "max entry difference {diff}");
        }
    }

    #[test]
    fn matches_finite_differences_off_steady_state() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let s = MeanFieldState {
            alphas: vec![Complex64::new(0.1, -0.2), Complex64::new(0.3, 0.05), Complex64::new(-0.1, 0.4)],
            x: 0.2,
            y: 0.15,
            z: -(0.25f64 - 0.04 - 0.0225).sqrt(),
        };
        let m = linearise(&s, &p).unwrap().matrix;
        let fd = finite_difference_jacobian(&s, &p, 1e-7);
        assert!((&m - &fd).abs().max() < 1e-6);
    }

    #[test]
    fn superradiant_fig3_point_is_stable() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let mut s = steady_asymmetric(&p, Branch::Plus).unwrap();
        let v = attach(&mut s, &p, DEFAULT_TOLERANCE).unwrap();
        assert!(v.stable && v.max_real_part < 0.0);
        assert_eq!(s.stability, StabilityTag::Stable);
    }

    #[test]
    fn branches_share_spectrum() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let a = classify(&steady_asymmetric(&p, Branch::Plus).unwrap(), &p, DEFAULT_TOLERANCE).unwrap();
        let b = classify(&steady_asymmetric(&p, Branch::Minus).unwrap(), &p, DEFAULT_TOLERANCE).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn normal_phase_loses_stability_above_threshold() {
        let p = params(vec![0.5; 3], 0.1, 0.3, 0.35);
        let normal = SteadySolution::normal(3, Provenance::Analytic);
        assert!(!classify(&normal, &p, DEFAULT_TOLERANCE).unwrap().stable);
        assert!(classify(&normal, &p.with_coupling(0.1).unwrap(), DEFAULT_TOLERANCE).unwrap().stable);
        let sr = steady_symmetric(&p, Branch::Plus).unwrap();
        assert!(classify(&sr, &p, DEFAULT_TOLERANCE).unwrap().stable);
    }

    #[test]
    fn soft_mode_at_threshold() {
        let p = params(vec![0.5; 3], 0.1, 0.3, 0.3);
        let g_c = g_c_symmetric(&p).unwrap();
        // The slowest rate closes linearly in |g - g_c| from both sides.
        let soft = |f: f64| {
            let q = p.with_coupling(g_c * f).unwrap();
            let s = steady_symmetric(&q, Branch::Plus).unwrap();
            classify(&s, &q, DEFAULT_TOLERANCE).unwrap().max_real_part
        };
        for sign in [-1.0, 1.0] {
            let (a, b) = (soft(1.0 + sign * 1e-4), soft(1.0 + sign * 1e-5));
            assert!(a < 0.0 && b < 0.0 && a.abs() < 1e-3, "{a} {b}");
            let ratio = a / b;
            assert!((5.0..20.0).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn rejects_non_steady_and_zero_z() {
        let p = params(vec![0.5; 3], 0.1, 0.3, 0.35);
        let mut s = steady_symmetric(&p, Branch::Plus).unwrap();
        s.state.alphas[0] += 0.01;
        assert!(matches!(build_matrix(&s, &p), Err(Error::NotSteady(_))));
        let mut z0 = MeanFieldState::normal(3);
        z0.z = 0.0;
        z0.x = 0.5;
        assert!(matches!(linearise(&z0, &p), Err(Error::ZeroZ)));
    }
}
