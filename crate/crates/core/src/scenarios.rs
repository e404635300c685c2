//! JSON scenario configuration, validation and the builtin presets.
//!
//! ```json
//! {
//!   "system": { "n_xt": 4, "n_total": 6, "eps_xt": [...], "eps_et": [...],
//!               "j_couplings": [{"i": 1, "j": 2, "value": 0.5}], "t_e": 0.1 },
//!   "baths": [ { "family": "drude", "lambda": 0.2, "gamma": 0.1, "n_pade": 1,
//!                "scheme": "pade", "coupling": {"kind": "diagonal", "site": 1} } ],
//!   "beta": 2.4,
//!   "initial": { "mode": "site_local", "site": 1 },
//!   "run": { "dt": 0.01, "t_max": 2000, "record_every": 100 },
//!   "truncation": { "mode": "total_depth", "depth": 3 },
//!   "unit_anchor": 500
//! }
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bath::{expand, BathSpec, BoseScheme, ExponentialSeries, SpectralDensity};
use crate::hierarchy::{TruncationPolicy, DEFAULT_MAX_ADOS};
use crate::model::{build_hamiltonian, CouplingKind, CouplingOperator, SiteCoupling, SystemHamiltonian, SystemSpec};
use crate::propagator::{propagate_observed, propagate_partial, site_state, ADOState, HeomOperator, PropagationOptions, Trajectory};
use crate::{Error, Result, C64};

/// Speed of light in cm/s.
const SPEED_OF_LIGHT_CM: f64 = 2.997_924_58e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathConfig {
    #[serde(flatten)]
    pub family: SpectralDensity,
    pub n_pade: usize,
    #[serde(default)]
    pub scheme: BoseScheme,
    pub coupling: CouplingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitialCondition {
    /// All population on one 1-based site.
    SiteLocal { site: usize },
    /// Diagonal Boltzmann state over the XT site energies, ET sites empty.
    #[serde(rename = "boltzmann_xt")]
    BoltzmannXT,
}

fn default_trace_tolerance() -> f64 {
    1e-4
}

fn default_negativity_tolerance() -> f64 {
    1e-3
}

fn default_max_ados() -> usize {
    DEFAULT_MAX_ADOS
}

fn default_unit_anchor() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub dt: f64,
    pub t_max: f64,
    pub record_every: usize,
    #[serde(default = "default_trace_tolerance")]
    pub trace_tolerance: f64,
    #[serde(default = "default_negativity_tolerance")]
    pub negativity_tolerance: f64,
    #[serde(default = "default_max_ados")]
    pub max_ados: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub system: SystemSpec,
    pub baths: Vec<BathConfig>,
    pub beta: f64,
    pub initial: InitialCondition,
    pub run: RunSettings,
    pub truncation: TruncationPolicy,
    /// ω₀ in cm⁻¹, used only to convert times to picoseconds.
    #[serde(default = "default_unit_anchor")]
    pub unit_anchor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    UpAndDown,
    Downhill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    A,
    B,
    C,
    D,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::A, Regime::B, Regime::C, Regime::D];

    /// Reorganization energy of the off-diagonal bath.
    pub fn lambda(self) -> f64 {
        match self {
            Regime::A => 0.0,
            Regime::B => 1e-4,
            Regime::C => 1e-3,
            Regime::D => 1e-2,
        }
    }
}

impl ModelName {
    pub const ALL: [ModelName; 2] = [ModelName::UpAndDown, ModelName::Downhill];
}

impl FromStr for ModelName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up_and_down" => Ok(ModelName::UpAndDown),
            "downhill" => Ok(ModelName::Downhill),
            _ => Err(Error::config("builtin", format!("unknown model `{s}` (expected up_and_down or downhill)"))),
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelName::UpAndDown => "up_and_down",
            ModelName::Downhill => "downhill",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Regime::A),
            "b" => Ok(Regime::B),
            "c" => Ok(Regime::C),
            "d" => Ok(Regime::D),
            _ => Err(Error::config("regime", format!("unknown regime `{s}` (expected a, b, c or d)"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::A => "a",
            Regime::B => "b",
            Regime::C => "c",
            Regime::D => "d",
        })
    }
}

/// Expansion orders of the preset baths: one Bose pole for the slow Drude
/// and the Brownian baths, four for the faster off-diagonal bath.
pub const PRESET_N_PADE_SITE: usize = 1;
pub const PRESET_N_PADE_BROWNIAN: usize = 1;
pub const PRESET_N_PADE_OFFDIAGONAL: usize = 4;

/// The paper-parameter preset of one model in one regime.
pub fn builtin_scenario(model: ModelName, regime: Regime) -> ScenarioConfig {
    let (eps_et, et_mode) = match model {
        ModelName::UpAndDown => (vec![1.0, 0.0], 1.0),
        ModelName::Downhill => (vec![-0.6, -1.2], 0.6),
    };
    let drude = |lambda: f64, gamma: f64, coupling: CouplingKind, n_pade: usize| BathConfig {
        family: SpectralDensity::Drude { lambda, gamma },
        n_pade,
        scheme: BoseScheme::Pade,
        coupling,
    };
    let brownian = |site: usize| BathConfig {
        family: SpectralDensity::Brownian { lambda: 2.5, gamma: et_mode, omega0: et_mode },
        n_pade: PRESET_N_PADE_BROWNIAN,
        scheme: BoseScheme::Pade,
        coupling: CouplingKind::Diagonal { site },
    };
    let site = |s: usize| CouplingKind::Diagonal { site: s };
    ScenarioConfig {
        system: SystemSpec {
            n_xt: 4,
            n_total: 6,
            eps_xt: vec![0.6, 0.6, 0.2, 0.0],
            eps_et,
            j_couplings: vec![
                SiteCoupling { i: 1, j: 2, value: 0.5 },
                SiteCoupling { i: 2, j: 3, value: 0.5 },
                SiteCoupling { i: 3, j: 4, value: 0.01 },
            ],
            t_e: 0.1,
        },
        baths: vec![
            drude(0.2, 0.1, site(1), PRESET_N_PADE_SITE),
            drude(0.2, 0.1, site(2), PRESET_N_PADE_SITE),
            drude(0.2, 0.1, site(3), PRESET_N_PADE_SITE),
            drude(0.1, 0.1, site(4), PRESET_N_PADE_SITE),
            brownian(5),
            brownian(6),
            drude(regime.lambda(), 0.5, CouplingKind::OffDiagonal { a: 3, b: 4 }, PRESET_N_PADE_OFFDIAGONAL),
        ],
        beta: 2.4,
        initial: InitialCondition::SiteLocal { site: 1 },
        run: RunSettings {
            dt: 0.01,
            t_max: 2000.0,
            record_every: 100,
            trace_tolerance: default_trace_tolerance(),
            negativity_tolerance: default_negativity_tolerance(),
            max_ados: DEFAULT_MAX_ADOS,
        },
        truncation: TruncationPolicy::TotalDepth { depth: 3 },
        unit_anchor: default_unit_anchor(),
    }
}

/// Parses a builtin by name and regime strings.
pub fn builtin_by_name(model: &str, regime: &str) -> Result<ScenarioConfig> {
    Ok(builtin_scenario(model.parse()?, regime.parse()?))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

pub fn from_json(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field; errors carry the JSON path of the offender.
    pub fn validate(&self) -> Result<()> {
        self.system.validate().map_err(|e| e.prefixed("system"))?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", format!("inverse temperature must be > 0, got {}", self.beta)));
        }
        let dim = self.system.n_total;
        for (k, bath) in self.baths.iter().enumerate() {
            let prefix = format!("baths[{k}]");
            self.bath_spec(k).validate().map_err(|e| e.prefixed(&prefix))?;
            bath.coupling.validate(dim).map_err(|e| e.prefixed(&format!("{prefix}.coupling")))?;
        }
        match self.initial {
            InitialCondition::SiteLocal { site } if site < 1 || site > dim => {
                return Err(Error::config("initial.site", format!("site {site} outside 1..={dim}")));
            }
            _ => {}
        }
        let run = &self.run;
        if !(run.dt > 0.0 && run.dt.is_finite()) {
            return Err(Error::config("run.dt", format!("time step must be > 0, got {}", run.dt)));
        }
        if !(run.t_max >= 0.0 && run.t_max.is_finite()) {
            return Err(Error::config("run.t_max", format!("must be finite and >= 0, got {}", run.t_max)));
        }
        if run.record_every == 0 {
            return Err(Error::config("run.record_every", "must be at least 1"));
        }
        for (name, v) in [("run.trace_tolerance", run.trace_tolerance), ("run.negativity_tolerance", run.negativity_tolerance)] {
            if !(v > 0.0) {
                return Err(Error::config(name, format!("must be > 0, got {v}")));
            }
        }
        if let TruncationPolicy::PerBathDepth { caps, .. } = &self.truncation {
            if caps.len() != self.baths.len() {
                return Err(Error::config(
                    "truncation.caps",
                    format!("{} caps given for {} baths", caps.len(), self.baths.len()),
                ));
            }
        }
        if !(self.unit_anchor > 0.0 && self.unit_anchor.is_finite()) {
            return Err(Error::config("unit_anchor", format!("must be > 0, got {}", self.unit_anchor)));
        }
        Ok(())
    }

    pub fn bath_spec(&self, k: usize) -> BathSpec {
        let b = &self.baths[k];
        BathSpec { family: b.family, beta: self.beta, n_pade: b.n_pade, scheme: b.scheme }
    }

    /// `1/ω₀` in picoseconds.
    pub fn ps_per_time_unit(&self) -> f64 {
        1e12 / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM * self.unit_anchor)
    }

    /// Column labels `e1, ..., c6`.
    pub fn site_labels(&self) -> Vec<String> {
        (0..self.system.n_total).map(|s| self.system.site_label(s)).collect()
    }

    pub fn initial_rho(&self) -> DMatrix<C64> {
        let dim = self.system.n_total;
        match self.initial {
            InitialCondition::SiteLocal { site } => site_state(dim, site - 1),
            InitialCondition::BoltzmannXT => {
                let lowest = self.system.eps_xt.iter().copied().fold(f64::INFINITY, f64::min);
                let weights: Vec<f64> =
                    self.system.eps_xt.iter().map(|e| (-self.beta * (e - lowest)).exp()).collect();
                let z: f64 = weights.iter().sum();
                let mut rho = DMatrix::zeros(dim, dim);
                for (k, w) in weights.iter().enumerate() {
                    rho[(k, k)] = C64::new(w / z, 0.0);
                }
                rho
            }
        }
    }

    pub fn propagation_options(&self, threads: usize) -> PropagationOptions {
        PropagationOptions {
            dt: self.run.dt,
            t_max: self.run.t_max,
            record_every: self.run.record_every,
            trace_tolerance: self.run.trace_tolerance,
            negativity_tolerance: self.run.negativity_tolerance,
            threads,
        }
    }

    /// Hamiltonian, decomposed baths and HEOM operator.
    pub fn build(&self) -> Result<Simulation> {
        self.validate()?;
        let hamiltonian = build_hamiltonian(&self.system)?;
        let mut baths = Vec::with_capacity(self.baths.len());
        for (k, bath) in self.baths.iter().enumerate() {
            let v = CouplingOperator::new(bath.coupling, self.system.n_total)?;
            let series = expand(&self.bath_spec(k)).map_err(|e| e.prefixed(&format!("baths[{k}]")))?;
            baths.push((v, series));
        }
        let operator = HeomOperator::new(&hamiltonian, &baths, &self.truncation, self.run.max_ados)?;
        Ok(Simulation { config: self.clone(), hamiltonian, baths, operator })
    }

    /// Exponentials per coupled bath and the truncation restricted to those
    /// baths, which is what the hierarchy is enumerated from. Cheap: the
    /// hierarchy itself is not built.
    pub fn hierarchy_shape(&self) -> Result<(Vec<usize>, TruncationPolicy)> {
        self.validate()?;
        let mut fields = Vec::new();
        let mut kept = Vec::new();
        for k in 0..self.baths.len() {
            let series = expand(&self.bath_spec(k)).map_err(|e| e.prefixed(&format!("baths[{k}]")))?;
            if !series.is_zero() {
                fields.push(series.terms.len());
                kept.push(k);
            }
        }
        let policy = match &self.truncation {
            TruncationPolicy::PerBathDepth { caps, global_cap } => TruncationPolicy::PerBathDepth {
                caps: kept.iter().map(|&k| caps[k]).collect(),
                global_cap: *global_cap,
            },
            p => p.clone(),
        };
        Ok((fields, policy))
    }

    /// Sets the numeric field at `path` (e.g. `baths[6].lambda`,
    /// `run.t_max`, `system.eps_et[1]`) and revalidates.
    pub fn with_param(&self, path: &str, value: f64) -> Result<ScenarioConfig> {
        let mut tree = serde_json::to_value(self)?;
        let slot = locate(&mut tree, path)?;
        let new = if slot.is_u64() {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::config(path, format!("expects a non-negative integer, got {value}")));
            }
            Value::from(value as u64)
        } else if slot.is_number() {
            serde_json::Number::from_f64(value)
                .map(Value::Number)
                .ok_or_else(|| Error::config(path, format!("{value} is not a finite number")))?
        } else {
            return Err(Error::config(path, "does not address a numeric field"));
        };
        *slot = new;
        let config: ScenarioConfig = serde_json::from_value(tree)?;
        config.validate()?;
        Ok(config)
    }
}

/// Walks `a.b[3].c` through a JSON tree.
fn locate<'a>(tree: &'a mut Value, path: &str) -> Result<&'a mut Value> {
    let unknown = || Error::config(path, "unknown parameter path");
    let mut node = tree;
    for segment in path.split('.') {
        let (name, indices) = match segment.find('[') {
            Some(p) => (&segment[..p], &segment[p..]),
            None => (segment, ""),
        };
        if !name.is_empty() {
            node = node.get_mut(name).ok_or_else(unknown)?;
        }
        let mut rest = indices;
        while !rest.is_empty() {
            let close = rest.find(']').ok_or_else(unknown)?;
            if !rest.starts_with('[') {
                return Err(unknown());
            }
            let idx: usize = rest[1..close].parse().map_err(|_| unknown())?;
            node = node.get_mut(idx).ok_or_else(unknown)?;
            rest = &rest[close + 1..];
        }
    }
    Ok(node)
}

/// A validated scenario with its numerical building blocks.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub hamiltonian: SystemHamiltonian,
    pub baths: Vec<(CouplingOperator, ExponentialSeries)>,
    pub operator: HeomOperator,
}

impl Simulation {
    pub fn initial_state(&self) -> ADOState {
        ADOState::factorized(&self.config.initial_rho(), self.operator.n_ados())
    }

    pub fn run(&self, threads: usize) -> Result<Trajectory> {
        self.run_observed(threads, |_, _| {})
    }

    pub fn run_observed(&self, threads: usize, observer: impl FnMut(usize, usize) + Send) -> Result<Trajectory> {
        propagate_observed(&self.operator, self.initial_state(), &self.config.propagation_options(threads), observer)
    }

    /// Runs to completion or to the first numerical abort; see [`propagate_partial`].
    pub fn run_partial(
        &self,
        threads: usize,
        observer: impl FnMut(usize, usize) + Send,
    ) -> Result<(Trajectory, Option<Error>)> {
        propagate_partial(&self.operator, self.initial_state(), &self.config.propagation_options(threads), observer)
    }
}
