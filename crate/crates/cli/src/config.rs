use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use shortdyn_core::estimation::Method;
use shortdyn_core::expansion::ExpansionMode;
use shortdyn_core::reference::{Normalization, WorkflowConfig};

use crate::CliError;

pub const TERM_CAP_ENV: &str = "SHORTDYN_TERM_CAP";
pub const QUBIT_CAP_ENV: &str = "SHORTDYN_QUBIT_CAP";
pub const DENSITY_QUBIT_CAP_ENV: &str = "SHORTDYN_DENSITY_QUBIT_CAP";

/// A count that is either given or resolved from the error budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice<T> {
    Auto,
    Fixed(T),
}

impl<T> Choice<T> {
    pub fn fixed(self) -> Option<T> {
        match self {
            Choice::Auto => None,
            Choice::Fixed(v) => Some(v),
        }
    }
}

impl<T: FromStr> FromStr for Choice<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            Ok(Choice::Auto)
        } else {
            s.parse().map(Choice::Fixed).map_err(|e| format!("expected a number or \"auto\": {e}"))
        }
    }
}

impl<T: Serialize> Serialize for Choice<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Choice::Auto => s.serialize_str("auto"),
            Choice::Fixed(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Choice<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Value(T),
            Text(String),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Value(v) => Ok(Choice::Fixed(v)),
            Raw::Text(t) if t == "auto" => Ok(Choice::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got {t:?}"))),
        }
    }
}

/// Inputs and parameters of one run. Every field can come from a flag or from the
/// TOML config file; flags win.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Hamiltonian file: one `coefficient PAULI` term per line.
    #[arg(long, value_name = "PATH")]
    pub hamiltonian: Option<PathBuf>,
    /// Use the open Heisenberg chain on N qubits instead of a file.
    #[arg(long, value_name = "N", conflicts_with = "hamiltonian")]
    pub heisenberg: Option<usize>,
    /// Coupling J of the Heisenberg chain (default 1).
    #[arg(long, value_name = "J")]
    pub coupling: Option<f64>,
    /// Guess Hamiltonian file for `verify` (defaults to the system Hamiltonian).
    #[arg(long, value_name = "PATH")]
    pub guess: Option<PathBuf>,
    /// Replace one coefficient of the guess: `PAULI=VALUE`.
    #[arg(long, value_name = "PAULI=VALUE")]
    pub perturb: Option<String>,

    /// Observable file, same format as Hamiltonians (identity allowed).
    #[arg(long, value_name = "PATH")]
    pub observable: Option<PathBuf>,
    /// Single Pauli string observable.
    #[arg(long, value_name = "STRING", conflicts_with = "observable")]
    pub pauli: Option<String>,
    /// Staggered magnetization Σ(−1)^i Z_i.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub staggered: Option<bool>,

    /// Initial state: `neel:N`, `basis:BITS`, `plus:N`, or a dense-state JSON file.
    #[arg(long, value_name = "SPEC")]
    pub state: Option<String>,
    /// Recorded shadow snapshots (JSON Lines) to estimate from.
    #[arg(long, value_name = "PATH")]
    pub shadows: Option<PathBuf>,
    /// Write the simulated snapshots of a shadow run to this JSON Lines file.
    #[arg(long, value_name = "PATH")]
    pub save_shadows: Option<PathBuf>,

    /// Real evolution time t.
    #[arg(long)]
    pub time: Option<f64>,
    /// Imaginary time τ.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Truncation target for automatic order selection (default 1e-3).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Additive sampling error for automatic shot counts (default 0.05).
    #[arg(long)]
    pub sampling_eps: Option<f64>,
    /// Failure probability of the confidence radius (default 0.05).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Truncation order K, or `auto`.
    #[arg(long, value_name = "K|auto")]
    pub order: Option<Choice<usize>>,
    /// Segment count r, or `auto` (= ceil(λt)).
    #[arg(long, value_name = "R|auto")]
    pub segments: Option<Choice<usize>>,
    /// Shots or snapshots, or `auto` (from the Hoeffding or shadow bound).
    #[arg(long, value_name = "N|auto")]
    pub shots: Option<Choice<u64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expansion mode: concat, direct, commutator or propagator-only.
    #[arg(long)]
    pub mode: Option<ExpansionMode>,
    /// Estimation backend: exact, importance or shadows.
    #[arg(long)]
    pub backend: Option<Method>,
    /// Abort expansions with more distinct strings than this.
    #[arg(long)]
    pub term_cap: Option<usize>,
    /// Qubit cap of the dense reference backend.
    #[arg(long)]
    pub qubit_cap: Option<usize>,
    /// Add identity terms analytically instead of sampling them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub separate_identity: Option<bool>,
    /// Median of means over this many groups for shadow estimates.
    #[arg(long, value_name = "K")]
    pub median_of_means: Option<usize>,
    /// Imaginary-time denominator: state (tr e^{−2τH}ρ) or trace (tr e^{−2τH}).
    #[arg(long)]
    pub normalization: Option<Normalization>,
    /// Include the expanded terms in the report (default true for `expand`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub emit_terms: Option<bool>,
    /// Write the JSON report here; `-` prints it to stdout instead of the summary.
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),* $(,)?) => {
        RunConfig { $($f: $a.$f.or($b.$f)),* }
    };
}

impl RunConfig {
    /// Fields set in `self` win over `fallback`.
    pub fn merged_over(self, fallback: RunConfig) -> RunConfig {
        let (a, b) = (self, fallback);
        merge_fields!(a, b;
            hamiltonian, heisenberg, coupling, guess, perturb, observable, pauli, staggered, state,
            shadows, save_shadows, time, tau, eps, sampling_eps, delta, order, segments, shots, seed,
            mode, backend, term_cap, qubit_cap, separate_identity, median_of_means, normalization,
            emit_terms, output,
        )
    }

    /// Parameters the core workflows consume, with documented defaults applied.
    pub fn workflow(&self) -> WorkflowConfig {
        let d = WorkflowConfig::default();
        WorkflowConfig {
            eps: self.eps.unwrap_or(d.eps),
            sampling_eps: self.sampling_eps.unwrap_or(d.sampling_eps),
            delta: self.delta.unwrap_or(d.delta),
            order: self.order.and_then(Choice::fixed),
            segments: self.segments.and_then(Choice::fixed),
            mode: self.mode.unwrap_or(d.mode),
            shots: self.shots.and_then(Choice::fixed),
            seed: self.seed.unwrap_or(d.seed),
            method: self.backend.unwrap_or(d.method),
            term_cap: self.term_cap.unwrap_or(d.term_cap),
            order_cap: d.order_cap,
            separate_identity: self.separate_identity.unwrap_or(false),
            median_of_means: self.median_of_means,
            normalization: self.normalization.unwrap_or_default(),
        }
    }
}

/// Read a TOML config file.
pub fn load_config_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn env_usize(name: &str) -> Result<Option<usize>, CliError> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::Input(format!("{name}={v:?}: {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Input(format!("{name}: {e}"))),
    }
}

/// Flags over config file over environment defaults.
pub fn resolve_config(flags: RunConfig, file: Option<RunConfig>) -> Result<RunConfig, CliError> {
    let mut cfg = flags.merged_over(file.unwrap_or_default());
    if cfg.term_cap.is_none() {
        cfg.term_cap = env_usize(TERM_CAP_ENV)?;
    }
    if cfg.qubit_cap.is_none() {
        cfg.qubit_cap = env_usize(QUBIT_CAP_ENV)?;
    }
    Ok(cfg)
}

/// Density-matrix cap from the environment, if set.
pub fn density_cap_from_env() -> Result<Option<usize>, CliError> {
    env_usize(DENSITY_QUBIT_CAP_ENV)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_parsing() {
        assert_eq!("auto".parse::<Choice<usize>>().unwrap(), Choice::Auto);
        assert_eq!("6".parse::<Choice<usize>>().unwrap(), Choice::Fixed(6));
        assert!("six".parse::<Choice<usize>>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: RunConfig = toml::from_str("time = 0.2\norder = \"auto\"\nseed = 5\nbackend = \"importance\"").unwrap();
        let flags = RunConfig {
            order: Some(Choice::Fixed(3)),
            ..Default::default()
        };
        let cfg = flags.merged_over(file);
        assert_eq!(cfg.order, Some(Choice::Fixed(3)));
        assert_eq!(cfg.time, Some(0.2));
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.workflow().order, Some(3));
        assert_eq!(cfg.workflow().method, Method::Importance);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("tiem = 0.1").is_err());
    }
}
