//! Run configuration: TOML file sections merged with command-line flags.
//!
//! Every field is optional in both sources; a flag wins over the file, and
//! documented defaults fill whatever is left.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use superradiant::{Branch, LadderSystem, SystemParams};

/// Error in the invocation itself (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchArg {
    Plus,
    Minus,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::Plus => Branch::Plus,
            BranchArg::Minus => Branch::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluctSolver {
    /// Direct Lyapunov solve (time propagation when marginal).
    Lyapunov,
    /// Integrate the covariance equation from the vacuum.
    Relax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

/// System parameters, all in units of the emitter frequency.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArgs {
    /// Emitter frequency, used only to convert reported currents to absolute units [default: 1]
    #[arg(long)]
    pub omega: Option<f64>,
    /// Frequency of cavity 1
    #[arg(long = "omega-c")]
    pub omega_c: Option<f64>,
    /// Detuning step between neighbouring cavities [default: 0]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Explicit comma-separated cavity frequencies (instead of --omega-c/--delta)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub freqs: Option<Vec<f64>>,
    /// Tunnelling amplitude [default: 0]
    #[arg(long)]
    pub j: Option<f64>,
    /// Cavity loss rate [default: 0]
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Collective coupling per emitter [default: 0]
    #[arg(long)]
    pub g: Option<f64>,
    /// Ring size [default: 3, or the length of --freqs]
    #[arg(long = "n-cavities")]
    pub n_cavities: Option<usize>,
    /// Number of emitters (reporting only)
    #[arg(long = "n-emitters")]
    pub n_emitters: Option<u64>,
}

impl ParamArgs {
    fn or(self, file: ParamArgs) -> ParamArgs {
        ParamArgs {
            omega: self.omega.or(file.omega),
            omega_c: self.omega_c.or(file.omega_c),
            delta: self.delta.or(file.delta),
            freqs: self.freqs.or(file.freqs),
            j: self.j.or(file.j),
            kappa: self.kappa.or(file.kappa),
            g: self.g.or(file.g),
            n_cavities: self.n_cavities.or(file.n_cavities),
            n_emitters: self.n_emitters.or(file.n_emitters),
        }
    }
}

/// Fully resolved parameter set, embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub omega: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub cavity_freqs: Vec<f64>,
    pub j: f64,
    pub kappa: f64,
    pub g: f64,
    pub n_cavities: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_emitters: Option<u64>,
}

impl ResolvedParams {
    fn resolve(p: ParamArgs) -> Result<Self, Usage> {
        let omega = p.omega.unwrap_or(1.0);
        if p.freqs.is_some() && (p.omega_c.is_some() || p.delta.is_some()) {
            return Err(Usage("--freqs cannot be combined with --omega-c/--delta".into()));
        }
        let (omega_c, delta, cavity_freqs, n_cavities) = match (p.freqs, p.omega_c) {
            (Some(freqs), _) => {
                let n = p.n_cavities.unwrap_or(freqs.len());
                (None, None, freqs, n)
            }
            (None, Some(wc)) => {
                let n = p.n_cavities.unwrap_or(3);
                let d = p.delta.unwrap_or(0.0);
                (Some(wc), Some(d), (0..n).map(|k| wc + k as f64 * d).collect(), n)
            }
            (None, None) => return Err(Usage("cavity frequencies missing: give --omega-c or --freqs".into())),
        };
        Ok(Self {
            omega,
            omega_c,
            delta,
            cavity_freqs,
            j: p.j.unwrap_or(0.0),
            kappa: p.kappa.unwrap_or(0.0),
            g: p.g.unwrap_or(0.0),
            n_cavities,
            n_emitters: p.n_emitters,
        })
    }

    /// Library parameters; frequencies are already in units of `Omega`.
    pub fn system(&self) -> SystemParams {
        SystemParams {
            omega_emitter: 1.0,
            cavity_freqs: self.cavity_freqs.clone(),
            hopping: self.j,
            coupling: self.g,
            cavity_loss: self.kappa,
            emitter_loss: 0.0,
            n_cavities: self.n_cavities,
            n_emitters: self.n_emitters,
        }
    }

    pub fn ladder(&self) -> Result<LadderSystem, Usage> {
        let (Some(omega_c), Some(delta)) = (self.omega_c, self.delta) else {
            return Err(Usage("sweeps need the --omega-c/--delta form of the cavity frequencies".into()));
        };
        Ok(LadderSystem {
            omega_emitter: 1.0,
            omega_c,
            delta,
            hopping: self.j,
            coupling: self.g,
            cavity_loss: self.kappa,
            n_cavities: self.n_cavities,
            n_emitters: self.n_emitters,
        })
    }

    /// Factor converting per-emitter currents in units of `Omega` to absolute ones.
    pub fn current_scale(&self) -> f64 {
        self.n_emitters.unwrap_or(1) as f64 * self.omega
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyArgs {
    /// Z2 branch of the superradiant solution [default: plus]
    #[arg(long, value_enum)]
    pub branch: Option<BranchArg>,
    /// Evolve the equations of motion instead of using the closed form
    #[arg(long)]
    #[serde(default)]
    pub evolve: bool,
}

impl SteadyArgs {
    fn or(self, file: SteadyArgs) -> SteadyArgs {
        SteadyArgs { branch: self.branch.or(file.branch), evolve: self.evolve || file.evolve }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveArgs {
    /// Final time in units of 1/Omega [default: 500]
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Output sampling interval; 0 records every step [default: 1]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Relative tolerance [default: 1e-9]
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Absolute tolerance [default: 1e-12]
    #[arg(long)]
    pub atol: Option<f64>,
    /// Initial Z of the seed (cavities empty, Y = 0) [default: -0.499]
    #[arg(long, allow_hyphen_values = true)]
    pub z0: Option<f64>,
    /// Sign of the seed's X [default: plus]
    #[arg(long, value_enum)]
    pub branch: Option<BranchArg>,
}

impl EvolveArgs {
    fn or(self, file: EvolveArgs) -> EvolveArgs {
        EvolveArgs {
            t_end: self.t_end.or(file.t_end),
            dt: self.dt.or(file.dt),
            rtol: self.rtol.or(file.rtol),
            atol: self.atol.or(file.atol),
            z0: self.z0.or(file.z0),
            branch: self.branch.or(file.branch),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctArgs {
    /// Route to the steady second moments [default: lyapunov]
    #[arg(long, value_enum)]
    pub solver: Option<FluctSolver>,
    /// Branch of the mean-field state the fluctuations expand around [default: plus]
    #[arg(long, value_enum)]
    pub branch: Option<BranchArg>,
}

impl FluctArgs {
    fn or(self, file: FluctArgs) -> FluctArgs {
        FluctArgs { solver: self.solver.or(file.solver), branch: self.branch.or(file.branch) }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// First (slow) axis as param:min:max:count, param one of g, kappa, delta, j, omega_c
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Optional second (fast) axis
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    /// Observable, e.g. total_current, bond_current(1), photon_fluct(2), phase_label
    #[arg(long)]
    pub observable: Option<String>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Branch of the superradiant solution [default: plus]
    #[arg(long, value_enum)]
    pub branch: Option<BranchArg>,
    /// Evolve every cell instead of using closed forms
    #[arg(long)]
    #[serde(default)]
    pub evolve: bool,
}

impl SweepArgs {
    fn or(self, file: SweepArgs) -> SweepArgs {
        SweepArgs {
            x: self.x.or(file.x),
            y: self.y.or(file.y),
            observable: self.observable.or(file.observable),
            format: self.format.or(file.format),
            threads: self.threads.or(file.threads),
            branch: self.branch.or(file.branch),
            evolve: self.evolve || file.evolve,
        }
    }
}

/// Layout of a configuration file. Only `[params]` and the block of the
/// running subcommand are read; `currents` shares the `[steady]` block.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub params: ParamArgs,
    #[serde(default)]
    pub steady: SteadyArgs,
    #[serde(default)]
    pub evolve: EvolveArgs,
    #[serde(default)]
    pub fluct: FluctArgs,
    #[serde(default)]
    pub sweep: SweepArgs,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Usage> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))
    }
}

pub fn merge_params(flags: ParamArgs, file: ParamArgs) -> Result<ResolvedParams, Usage> {
    ResolvedParams::resolve(flags.or(file))
}

pub fn merge_steady(flags: SteadyArgs, file: SteadyArgs) -> SteadyArgs {
    flags.or(file)
}

pub fn merge_evolve(flags: EvolveArgs, file: EvolveArgs) -> EvolveArgs {
    flags.or(file)
}

pub fn merge_fluct(flags: FluctArgs, file: FluctArgs) -> FluctArgs {
    flags.or(file)
}

pub fn merge_sweep(flags: SweepArgs, file: SweepArgs) -> SweepArgs {
    flags.or(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> ConfigFile {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let cfg = file("[params]\nomega_c = 0.1\ndelta = 0.5\nj = 0.2\ng = 0.3\n");
        let flags = ParamArgs { g: Some(0.35), ..ParamArgs::default() };
        let r = merge_params(flags, cfg.params).unwrap();
        assert_eq!(r.g, 0.35);
        assert_eq!(r.j, 0.2);
        assert_eq!(r.cavity_freqs, vec![0.1, 0.6, 1.1]);
        assert_eq!(r.kappa, 0.0);
    }

    #[test]
    fn explicit_frequencies() {
        let cfg = file("[params]\nfreqs = [0.5, 0.5, 0.5, 0.5]\n");
        let r = merge_params(ParamArgs::default(), cfg.params).unwrap();
        assert_eq!(r.n_cavities, 4);
        assert!(r.ladder().is_err());
    }

    #[test]
    fn conflicting_or_missing_frequencies() {
        let both = ParamArgs { freqs: Some(vec![0.1, 0.2, 0.3]), omega_c: Some(0.1), ..ParamArgs::default() };
        assert!(merge_params(both, ParamArgs::default()).is_err());
        assert!(merge_params(ParamArgs::default(), ParamArgs::default()).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[params]\ngee = 1.0\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[plot]\n").is_err());
    }

    #[test]
    fn current_scale() {
        let r = merge_params(
            ParamArgs { omega_c: Some(0.5), omega: Some(2.0), n_emitters: Some(100), ..ParamArgs::default() },
            ParamArgs::default(),
        )
        .unwrap();
        assert_eq!(r.current_scale(), 200.0);
    }
}
