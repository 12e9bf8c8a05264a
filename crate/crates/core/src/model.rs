//! Physical parameters and ring topology.
//!
//! Inputs may be given in any consistent frequency unit. Validation rescales
//! every frequency by the emitter frequency, so all downstream code works
//! with `Omega = 1` and times in units of `1/Omega`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw parameter set of the spin-cavity ring, as supplied by a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Emitter transition frequency.
    pub omega_emitter: f64,
    /// One resonance frequency per cavity, in ring order.
    pub cavity_freqs: Vec<f64>,
    /// Nearest-neighbour photon hopping.
    pub hopping: f64,
    /// Collective emitter-cavity coupling per cavity site.
    pub coupling: f64,
    /// Cavity amplitude loss rate.
    pub cavity_loss: f64,
    /// Emitter loss rate. Only zero is accepted.
    #[serde(default)]
    pub emitter_loss: f64,
    pub n_cavities: usize,
    /// Emitter count; only used to report absolute (not per-emitter) values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_emitters: Option<u64>,
}

/// Equally spaced cavity frequencies `omega_c + (n - 1) * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningLadder {
    pub base: f64,
    pub step: f64,
}

impl DetuningLadder {
    pub fn new(base: f64, step: f64) -> Self {
        Self { base, step }
    }

    pub fn expand(&self, n_cavities: usize) -> Result<Vec<f64>> {
        expand_ladder(*self, n_cavities)
    }
}

pub fn expand_ladder(ladder: DetuningLadder, n_cavities: usize) -> Result<Vec<f64>> {
    if n_cavities < 3 {
        return Err(Error::RingTooSmall(n_cavities));
    }
    Ok((0..n_cavities)
        .map(|n| ladder.base + n as f64 * ladder.step)
        .collect())
}

/// Parameter set written in ladder form, which is how every figure of the
/// model is parameterised. Sweeps vary the fields of this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSystem {
    pub omega_emitter: f64,
    pub omega_c: f64,
    pub delta: f64,
    pub hopping: f64,
    pub coupling: f64,
    pub cavity_loss: f64,
    pub n_cavities: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_emitters: Option<u64>,
}

impl LadderSystem {
    pub fn to_system_params(&self) -> Result<SystemParams> {
        let cavity_freqs = expand_ladder(DetuningLadder::new(self.omega_c, self.delta), self.n_cavities)?;
        Ok(SystemParams {
            omega_emitter: self.omega_emitter,
            cavity_freqs,
            hopping: self.hopping,
            coupling: self.coupling,
            cavity_loss: self.cavity_loss,
            emitter_loss: 0.0,
            n_cavities: self.n_cavities,
            n_emitters: self.n_emitters,
        })
    }

    pub fn validate(&self) -> Result<ValidatedParams> {
        validate(&self.to_system_params()?)
    }
}

/// Immutable, normalised parameter set (`Omega = 1`).
///
/// The original emitter frequency is kept as [`omega_scale`](Self::omega_scale)
/// for converting reported quantities back to absolute units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedParams {
    cavity_freqs: Vec<f64>,
    hopping: f64,
    coupling: f64,
    cavity_loss: f64,
    omega_scale: f64,
    n_emitters: Option<u64>,
}

pub fn validate(params: &SystemParams) -> Result<ValidatedParams> {
    let finite = [
        ("omega_emitter", params.omega_emitter),
        ("hopping", params.hopping),
        ("coupling", params.coupling),
        ("cavity_loss", params.cavity_loss),
        ("emitter_loss", params.emitter_loss),
    ];
    for (name, v) in finite {
        if !v.is_finite() {
            return Err(Error::NonFiniteParameter(name));
        }
    }
    if params.cavity_freqs.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteParameter("cavity_freqs"));
    }
    if params.n_cavities < 3 {
        return Err(Error::RingTooSmall(params.n_cavities));
    }
    if params.cavity_freqs.len() != params.n_cavities {
        return Err(Error::FrequencyCountMismatch {
            expected: params.n_cavities,
            found: params.cavity_freqs.len(),
        });
    }
    if params.omega_emitter <= 0.0 {
        return Err(Error::NonPositiveFrequency {
            name: "omega_emitter".into(),
            value: params.omega_emitter,
        });
    }
    if let Some((n, &w)) = params.cavity_freqs.iter().enumerate().find(|(_, &w)| w <= 0.0) {
        return Err(Error::NonPositiveFrequency {
            name: format!("cavity_freqs[{n}]"),
            value: w,
        });
    }
    if params.cavity_loss < 0.0 {
        return Err(Error::NegativeLoss(params.cavity_loss));
    }
    if params.emitter_loss != 0.0 {
        return Err(Error::EmitterLossUnsupported(params.emitter_loss));
    }
    if params.coupling < 0.0 {
        return Err(Error::NegativeCoupling(params.coupling));
    }
    if params.n_emitters == Some(0) {
        return Err(Error::NoEmitters);
    }

    let scale = params.omega_emitter;
    Ok(ValidatedParams {
        cavity_freqs: params.cavity_freqs.iter().map(|w| w / scale).collect(),
        hopping: params.hopping / scale,
        coupling: params.coupling / scale,
        cavity_loss: params.cavity_loss / scale,
        omega_scale: scale,
        n_emitters: params.n_emitters,
    })
}

impl ValidatedParams {
    /// Emitter frequency in internal units; always 1.
    pub fn omega(&self) -> f64 {
        1.0
    }

    pub fn cavity_freqs(&self) -> &[f64] {
        &self.cavity_freqs
    }

    pub fn n_cavities(&self) -> usize {
        self.cavity_freqs.len()
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn cavity_loss(&self) -> f64 {
        self.cavity_loss
    }

    pub fn omega_scale(&self) -> f64 {
        self.omega_scale
    }

    pub fn n_emitters(&self) -> Option<u64> {
        self.n_emitters
    }

    /// Ring neighbours `(n - 1, n + 1)` of cavity `n` with periodic wrap.
    pub fn neighbours(&self, n: usize) -> (usize, usize) {
        let nc = self.n_cavities();
        ((n + nc - 1) % nc, (n + 1) % nc)
    }

    /// True when all cavity frequencies coincide to round-off.
    pub fn is_symmetric(&self) -> bool {
        let w0 = self.cavity_freqs[0];
        self.cavity_freqs
            .iter()
            .all(|w| (w - w0).abs() <= 4.0 * f64::EPSILON * w0.abs().max(1.0))
    }

    /// Normalised parameters as a plain [`SystemParams`] (`omega_emitter = 1`).
    pub fn to_params(&self) -> SystemParams {
        SystemParams {
            omega_emitter: 1.0,
            cavity_freqs: self.cavity_freqs.clone(),
            hopping: self.hopping,
            coupling: self.coupling,
            cavity_loss: self.cavity_loss,
            emitter_loss: 0.0,
            n_cavities: self.n_cavities(),
            n_emitters: self.n_emitters,
        }
    }

    /// Copy with a different coupling, in internal (`Omega = 1`) units.
    pub fn with_coupling(&self, g: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::NonFiniteParameter("coupling"));
        }
        if g < 0.0 {
            return Err(Error::NegativeCoupling(g));
        }
        Ok(Self { coupling: g, ..self.clone() })
    }

    /// Copy with different cavity frequencies, in internal units.
    pub fn with_cavity_freqs(&self, freqs: Vec<f64>) -> Result<Self> {
        let mut p = self.to_params();
        p.cavity_freqs = freqs;
        let mut v = validate(&p)?;
        v.omega_scale = self.omega_scale;
        Ok(v)
    }
}
