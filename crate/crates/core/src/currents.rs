//! Photon currents at mean-field level and the Kirchhoff node balance.
//!
//! All currents are per emitter (divided by `N`) and in units of `Omega`.
//! A positive bond current `I_{n,n+1}` is a net flow from cavity `n` to
//! cavity `n + 1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analytic::SteadySolution;
use crate::meanfield::{residual, MeanFieldState};
use crate::model::ValidatedParams;
use crate::stability::STEADY_RESIDUAL;

/// Default node-residual tolerance of [`kirchhoff_audit`].
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// `I_{n,n+1} = iJ (alpha_n^* alpha_{n+1} - alpha_n alpha_{n+1}^*)
///            = 2J Im(alpha_n alpha_{n+1}^*)`.
pub fn bond_current(state: &MeanFieldState, params: &ValidatedParams, n: usize) -> f64 {
    let next = (n + 1) % state.n_cavities();
    2.0 * params.hopping() * (state.alphas[n] * state.alphas[next].conj()).im
}

/// Sum of the bond currents around the ring, `<I>/N`.
pub fn total_current(state: &MeanFieldState, params: &ValidatedParams) -> f64 {
    (0..state.n_cavities()).map(|n| bond_current(state, params, n)).sum()
}

/// Rotating-wave and counter-rotating-wave exchange between the emitters
/// and cavity `n`:
/// `I_s = ig [alpha_n (X + iY) - c.c.]`, `I_s^c = ig [alpha_n (X - iY) - c.c.]`.
pub fn spin_cavity_currents(state: &MeanFieldState, params: &ValidatedParams, n: usize) -> (f64, f64) {
    let g = params.coupling();
    let a = state.alphas[n];
    let rw = -2.0 * g * (a * num_complex::Complex64::new(state.x, state.y)).im;
    let crw = -2.0 * g * (a * num_complex::Complex64::new(state.x, -state.y)).im;
    (rw, crw)
}

/// `I_{n,d} = 2 kappa |alpha_n|^2`.
pub fn dissipation_current(state: &MeanFieldState, params: &ValidatedParams, n: usize) -> f64 {
    2.0 * params.cavity_loss() * state.alphas[n].norm_sqr()
}

/// Every current of a state together with the node balances.
///
/// `kirchhoff_residuals[n] = I_{n-1,n} - I_{n,n+1} + I_{s,n} + I^c_{s,n} - I_{n,d}`,
/// which equals `d|alpha_n|^2/dt` for any state and vanishes at a steady one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentReport {
    /// `bond[n]` is the current from cavity `n` to cavity `n + 1` (0-based, wrapping).
    pub bond: Vec<f64>,
    pub total: f64,
    pub spin_rw: Vec<f64>,
    pub spin_crw: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub kirchhoff_residuals: Vec<f64>,
    /// `I_{s,n} - I^c_{s,n}`.
    pub spin_node_residuals: Vec<f64>,
    /// Norm of the mean-field derivative at the audited state.
    pub rhs_residual: f64,
    pub steady: bool,
    pub tolerance: f64,
    /// Nodes (0-based) whose residual exceeds the tolerance. Only filled
    /// for steady states; transient residuals are photon-number rates.
    pub violations: Vec<usize>,
}

impl CurrentReport {
    pub fn from_state(state: &MeanFieldState, params: &ValidatedParams, tol: f64) -> Self {
        let nc = state.n_cavities();
        let bond: Vec<f64> = (0..nc).map(|n| bond_current(state, params, n)).collect();
        let (spin_rw, spin_crw): (Vec<f64>, Vec<f64>) =
            (0..nc).map(|n| spin_cavity_currents(state, params, n)).unzip();
        let dissipation: Vec<f64> = (0..nc).map(|n| dissipation_current(state, params, n)).collect();
        let kirchhoff_residuals: Vec<f64> = (0..nc)
            .map(|n| {
                let prev = (n + nc - 1) % nc;
                bond[prev] - bond[n] + spin_rw[n] + spin_crw[n] - dissipation[n]
            })
            .collect();
        let spin_node_residuals: Vec<f64> = spin_rw.iter().zip(&spin_crw).map(|(a, b)| a - b).collect();
        let rhs_residual = residual(state, params);
        let steady = rhs_residual < STEADY_RESIDUAL;
        let violations = if steady {
            (0..nc)
                .filter(|&n| kirchhoff_residuals[n].abs() > tol || spin_node_residuals[n].abs() > tol)
                .collect()
        } else {
            Vec::new()
        };
        Self {
            total: bond.iter().sum(),
            bond,
            spin_rw,
            spin_crw,
            dissipation,
            kirchhoff_residuals,
            spin_node_residuals,
            rhs_residual,
            steady,
            tolerance: tol,
            violations,
        }
    }

    pub fn passed(&self) -> bool {
        self.steady && self.violations.is_empty()
    }

    pub fn max_node_residual(&self) -> f64 {
        self.kirchhoff_residuals
            .iter()
            .chain(&self.spin_node_residuals)
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Every current multiplied by `factor` (e.g. `N * Omega` for absolute units).
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        Self {
            bond: s(&self.bond),
            total: self.total * factor,
            spin_rw: s(&self.spin_rw),
            spin_crw: s(&self.spin_crw),
            dissipation: s(&self.dissipation),
            kirchhoff_residuals: s(&self.kirchhoff_residuals),
            spin_node_residuals: s(&self.spin_node_residuals),
            ..self.clone()
        }
    }

    /// One row per cavity node plus a `total` row.
    pub fn to_csv(&self) -> String {
        let nc = self.bond.len();
        let mut out = String::from("node,bond_in,bond_out,spin_rw,spin_crw,dissipation,kirchhoff_residual,spin_node_residual\n");
        for n in 0..nc {
            let prev = (n + nc - 1) % nc;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                n + 1,
                self.bond[prev],
                self.bond[n],
                self.spin_rw[n],
                self.spin_crw[n],
                self.dissipation[n],
                self.kirchhoff_residuals[n],
                self.spin_node_residuals[n]
            );
        }
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        let _ = writeln!(
            out,
            "total,{},{},{},{},{},{},{}",
            self.total,
            self.total,
            sum(&self.spin_rw),
            sum(&self.spin_crw),
            sum(&self.dissipation),
            sum(&self.kirchhoff_residuals),
            sum(&self.spin_node_residuals)
        );
        out
    }
}

/// Current report of a steady solution. Non-steady inputs are reported with
/// `steady = false` instead of failing.
pub fn kirchhoff_audit(solution: &SteadySolution, params: &ValidatedParams, tol: f64) -> CurrentReport {
    CurrentReport::from_state(&solution.state, params, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{steady_asymmetric, steady_symmetric, Branch, Provenance};
    use crate::model::{validate, SystemParams};
    use num_complex::Complex64;

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

    #[test]
    fn bond_current_operator_form() {
        let p = params(vec![0.5; 3], 0.2, 0.3, 0.3);
        let s = MeanFieldState {
            alphas: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
            x: 0.0,
            y: 0.0,
            z: -0.5,
        };
        // iJ (a1^* a2 - a1 a2^*) with a1 = 1, a2 = i gives iJ (2i) = -2J.
        assert!((bond_current(&s, &p, 0) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn symmetric_phase_has_no_bond_current() {
        let p = params(vec![0.5; 3], 0.1, 0.3, 0.35);
        let s = steady_symmetric(&p, Branch::Plus).unwrap();
        for n in 0..3 {
            assert_eq!(bond_current(&s.state, &p, n), 0.0);
        }
        let (rw, crw) = spin_cavity_currents(&s.state, &p, 0);
        assert!(rw != 0.0);
        assert_eq!(rw, crw);
        for n in 1..3 {
            assert_eq!(spin_cavity_currents(&s.state, &p, n).0, rw);
        }
    }

    #[test]
    fn lossless_amplitudes_carry_no_current() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.0, 0.35);
        let s = steady_asymmetric(&p, Branch::Plus).unwrap();
        assert!(total_current(&s.state, &p).abs() < 1e-15);
        assert_eq!(dissipation_current(&s.state, &p, 0), 0.0);
    }

    #[test]
    fn fig4a_sign_pattern() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let s = steady_asymmetric(&p, Branch::Plus).unwrap();
        let r = kirchhoff_audit(&s, &p, DEFAULT_TOLERANCE);
        assert!(r.bond[0] > 0.0 && r.bond[1] > 0.0 && r.bond[2] < 0.0);
        assert!(r.passed());
        assert!(r.max_node_residual() < 1e-12);
    }

    #[test]
    fn dissipation_reference_value() {
        let p = params(vec![0.5; 3], 0.1, 0.3, 0.35);
        let s = steady_symmetric(&p, Branch::Minus).unwrap();
        let d = dissipation_current(&s.state, &p, 0);
        assert!((d - 0.0864631).abs() < 1e-7, "{d}");
    }

    #[test]
    fn normal_phase_is_silent() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let s = SteadySolution::normal(3, Provenance::Analytic);
        let r = kirchhoff_audit(&s, &p, DEFAULT_TOLERANCE);
        assert!(r.bond.iter().chain(&r.spin_rw).chain(&r.dissipation).all(|&v| v == 0.0));
        assert!(r.kirchhoff_residuals.iter().all(|&v| v == 0.0));
        assert!(r.passed());
    }

    #[test]
    fn transient_audit_is_informative() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let s = SteadySolution {
            state: MeanFieldState {
                alphas: vec![Complex64::new(0.1, 0.2), Complex64::new(-0.1, 0.05), Complex64::new(0.3, 0.0)],
                x: 0.3,
                y: 0.1,
                z: -(0.25f64 - 0.09 - 0.01).sqrt(),
            },
            ..SteadySolution::normal(3, Provenance::Evolved)
        };
        let r = kirchhoff_audit(&s, &p, DEFAULT_TOLERANCE);
        assert!(!r.steady);
        assert!(r.violations.is_empty());
        assert!(!r.passed());
    }

    #[test]
    fn csv_has_node_rows_and_total() {
        let p = params(vec![0.1, 0.6, 1.1], 0.2, 0.3, 0.35);
        let s = steady_asymmetric(&p, Branch::Plus).unwrap();
        let csv = kirchhoff_audit(&s, &p, DEFAULT_TOLERANCE).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("total,"));
    }
}
