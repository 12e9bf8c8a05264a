//! Dormand-Prince 5(4) integrator with PI step-size control.
//!
//! Works on flat `f64` state vectors. The caller sees every accepted step
//! through an observer closure and may stop the integration early.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error coefficients: fifth-order weights minus the embedded fourth-order ones.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-control settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 50_000_000,
            h_max: f64::INFINITY,
            h_min: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub last_step: f64,
}

/// Result of an integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: StepStats,
    /// True when the observer requested an early stop.
    pub stopped: bool,
}

impl Dopri5 {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t_end`.
    ///
    /// `stops` are times (ascending, inside `(t0, t_end]`) that the stepper
    /// lands on exactly; the observer sees them like any accepted step.
    pub fn integrate<F, O>(
        &self,
        mut f: F,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        stops: &[f64],
        mut observer: O,
    ) -> Result<Outcome>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(f64, &[f64], &[f64]) -> ControlFlow<()>,
    {
        if !(self.rtol > 0.0 && self.atol >= 0.0) {
            return Err(Error::InvalidIntegration("tolerances must be positive"));
        }
        if !(t_end > t0) || !t_end.is_finite() {
            return Err(Error::InvalidIntegration("t_end must exceed t0"));
        }
        let n = y0.len();
        let mut y = y0.to_vec();
        let mut y_new = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut stats = StepStats::default();

        let mut t = t0;
        f(t, &y, &mut k[0]);
        stats.evaluations += 1;
        if k[0].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }

        let mut h = self.initial_step(&mut f, t, &y, &k[0], t_end, &mut stats);
        let mut err_prev: f64 = 1e-4;
        let mut reject_streak = false;
        let mut stop_idx = stops.iter().position(|&s| s > t0).unwrap_or(stops.len());

        loop {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let target = if stop_idx < stops.len() { stops[stop_idx].min(t_end) } else { t_end };
            let mut landing = false;
            if t + h >= target || (target - t - h) < 1e-12 * target.abs().max(1.0) {
                h = target - t;
                landing = true;
            }
            if h < self.h_min * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h });
            }

            stage(&y, h, &[(&k[0], A21)], &mut tmp);
            f(t + C2 * h, &tmp, &mut k[1]);
            stage(&y, h, &[(&k[0], A31), (&k[1], A32)], &mut tmp);
            f(t + C3 * h, &tmp, &mut k[2]);
            stage(&y, h, &[(&k[0], A41), (&k[1], A42), (&k[2], A43)], &mut tmp);
            f(t + C4 * h, &tmp, &mut k[3]);
            stage(&y, h, &[(&k[0], A51), (&k[1], A52), (&k[2], A53), (&k[3], A54)], &mut tmp);
            f(t + C5 * h, &tmp, &mut k[4]);
            stage(
                &y,
                h,
                &[(&k[0], A61), (&k[1], A62), (&k[2], A63), (&k[3], A64), (&k[4], A65)],
                &mut tmp,
            );
            f(t + h, &tmp, &mut k[5]);
            stage(
                &y,
                h,
                &[(&k[0], A71), (&k[2], A73), (&k[3], A74), (&k[4], A75), (&k[5], A76)],
                &mut y_new,
            );
            f(t + h, &y_new, &mut k[6]);
            stats.evaluations += 6;

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / n as f64).sqrt();
            if !err.is_finite() {
                if y_new.iter().any(|v| !v.is_finite()) && h < 1e-10 {
                    return Err(Error::NonFiniteState { t });
                }
                stats.rejected += 1;
                h *= 0.1;
                reject_streak = true;
                continue;
            }

            if err <= 1.0 {
                // PI controller (Gustafsson), exponents for an order-5 pair.
                let fac = (0.9 * err.max(1e-10).powf(-0.17) * err_prev.powf(0.04)).clamp(0.2, 10.0);
                let fac = if reject_streak { fac.min(1.0) } else { fac };
                err_prev = err.max(1e-4);
                stats.accepted += 1;
                stats.last_step = h;
                t = if landing { target } else { t + h };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { t });
                }
                reject_streak = false;
                if landing && stop_idx < stops.len() && target == stops[stop_idx].min(t_end) {
                    stop_idx += 1;
                    while stop_idx < stops.len() && stops[stop_idx] <= t {
                        stop_idx += 1;
                    }
                }
                if let ControlFlow::Break(()) = observer(t, &y, &k[0]) {
                    return Ok(Outcome { t, y, stats, stopped: true });
                }
                if t >= t_end {
                    return Ok(Outcome { t, y, stats, stopped: false });
                }
                h = (h * fac).min(self.h_max);
            } else {
                stats.rejected += 1;
                let fac = (0.9 * err.powf(-0.2)).max(0.2);
                h *= fac;
                reject_streak = true;
            }
        }
    }

    fn initial_step<F>(&self, f: &mut F, t: f64, y: &[f64], f0: &[f64], t_end: f64, stats: &mut StepStats) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let sc: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        let d0 = rms(y, &sc);
        let d1 = rms(f0, &sc);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(t_end - t);
        let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
        let mut f1 = vec![0.0; n];
        f(t + h0, &y1, &mut f1);
        stats.evaluations += 1;
        let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
        let d2 = rms(&diff, &sc) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.h_max).min(t_end - t)
    }
}

fn stage(y: &[f64], h: f64, terms: &[(&Vec<f64>, f64)], out: &mut [f64]) {
    out.copy_from_slice(y);
    for (kv, a) in terms {
        let ha = h * a;
        for (o, kk) in out.iter_mut().zip(kv.iter()) {
            *o += ha * kk;
        }
    }
}

fn rms(v: &[f64], sc: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(sc).map(|(a, s)| (a / s) * (a / s)).sum();
    (s / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let solver = Dopri5::default();
        let out = solver
            .integrate(
                |_, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                },
                0.0,
                &[1.0, 0.0],
                10.0,
                &[],
                |_, _, _| ControlFlow::Continue(()),
            )
            .unwrap();
        assert!((out.y[0] - 10f64.cos()).abs() < 1e-8);
        assert!((out.y[1] + 10f64.sin()).abs() < 1e-8);
        assert!(out.stats.accepted > 10);
    }

    #[test]
    fn exponential_decay_hits_stops_exactly() {
        let stops = [0.5, 1.0, 1.5];
        let mut seen = Vec::new();
        let out = Dopri5::default()
            .integrate(
                |_, y, dy| dy[0] = -y[0],
                0.0,
                &[1.0],
                2.0,
                &stops,
                |t, _, _| {
                    seen.push(t);
                    ControlFlow::Continue(())
                },
            )
            .unwrap();
        for s in stops {
            assert!(seen.contains(&s), "missing stop {s}");
        }
        assert_eq!(out.t, 2.0);
        assert!((out.y[0] - (-2f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn observer_can_stop() {
        let out = Dopri5::default()
            .integrate(
                |_, _, dy| dy[0] = 1.0,
                0.0,
                &[0.0],
                100.0,
                &[],
                |t, _, _| if t > 1.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) },
            )
            .unwrap();
        assert!(out.stopped);
        assert!(out.t > 1.0 && out.t < 100.0);
    }

    #[test]
    fn blow_up_is_reported() {
        let r = Dopri5::default().integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            &[1.0],
            2.0,
            &[],
            |_, _, _| ControlFlow::Continue(()),
        );
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. }) | Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn rejects_bad_settings() {
        let r = Dopri5::with_tolerances(0.0, 0.0).integrate(
            |_, _, dy| dy[0] = 0.0,
            0.0,
            &[0.0],
            1.0,
            &[],
            |_, _, _| ControlFlow::Continue(()),
        );
        assert!(matches!(r, Err(Error::InvalidIntegration(_))));
    }
}
