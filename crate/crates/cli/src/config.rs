//! Typed run configurations. Every table and key is optional; missing keys
//! take the defaults below and the resolved value is echoed into the manifest.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use shockhopf::dynamics::{ProbeConfig, SyntheticHopf};
use shockhopf::evans::{EvansOptions, HopfOptions, StabilityOptions};
use shockhopf::model::{
    build_full_ns_lagrangian, build_isentropic_eulerian, build_isentropic_lagrangian, rankine_hugoniot, EndstatePair,
    ModelKind, ModelParams, SystemModel,
};
use shockhopf::profile::ProfileOptions;
use std::path::{Path, PathBuf};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Model and endstates: `u_minus` is the full left state, `v_plus` the first
/// component of the right state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub gamma: f64,
    pub nu: f64,
    /// Heat conductivity, full gas model only.
    pub kappa: f64,
    /// Specific heat, full gas model only.
    pub cv: f64,
    pub u_minus: Vec<f64>,
    pub v_plus: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::IsentropicLagrangian,
            gamma: 5.0 / 3.0,
            nu: 0.1,
            kappa: 0.1,
            cv: 1.0,
            u_minus: vec![1.0, 0.0],
            v_plus: 0.7,
        }
    }
}

impl ModelSpec {
    pub fn model(&self) -> shockhopf::Result<SystemModel> {
        match self.kind {
            ModelKind::IsentropicLagrangian => build_isentropic_lagrangian(self.gamma, self.nu, 0.0),
            ModelKind::IsentropicEulerian => build_isentropic_eulerian(self.gamma, self.nu, 0.0),
            ModelKind::FullNsLagrangian => build_full_ns_lagrangian(
                ModelParams { gamma: self.gamma, nu: self.nu, kappa: self.kappa, a0: 1.0, cv: self.cv },
                0.0,
            ),
        }
    }

    pub fn endstates(&self, model: &SystemModel) -> shockhopf::Result<EndstatePair> {
        rankine_hugoniot(model, &self.u_minus, self.v_plus)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileCmd {
    pub model: ModelSpec,
    pub profile: ProfileOptions,
}

/// Injected spectral function `D(λ) = Π (λ − r_k)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    pub roots: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSpec {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_vertices")]
    pub vertices: usize,
}

fn default_vertices() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvansCmd {
    /// Profile CSV written by `profile`, relative to the config file; the
    /// profile is solved inline when absent.
    pub profile_csv: Option<PathBuf>,
    /// Random λ in the right half plane for the conjugate-symmetry check.
    pub symmetry_samples: usize,
    pub model: ModelSpec,
    pub profile: ProfileOptions,
    pub evans: EvansOptions,
    pub stability: StabilityOptions,
    /// Replaces the Evans function by a polynomial with the given roots.
    pub mock: Option<MockSpec>,
    /// Additional circle whose winding number is reported.
    pub circle: Option<CircleSpec>,
}

impl Default for EvansCmd {
    fn default() -> Self {
        Self {
            profile_csv: None,
            symmetry_samples: 8,
            model: ModelSpec::default(),
            profile: ProfileOptions::default(),
            evans: EvansOptions::default(),
            stability: StabilityOptions::default(),
            mock: None,
            circle: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopfFamily {
    /// Roots `(ε − ε*) ± iτ*`.
    Synthetic,
    /// The model's shock family with ε as the right-state first component.
    VPlus,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub eps_star: f64,
    pub tau_star: f64,
    pub beta: f64,
    pub kappa: f64,
    pub mass: f64,
    pub half_length: f64,
    pub dx: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { eps_star: 0.5, tau_star: 1.0, beta: 0.05, kappa: 0.5, mass: 1.0, half_length: 20.0, dx: 0.1 }
    }
}

impl SyntheticSpec {
    pub fn backend(&self) -> shockhopf::Result<SyntheticHopf> {
        SyntheticHopf::new(self.eps_star, self.tau_star, self.beta, self.kappa, self.mass, self.half_length, self.dx)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfCmd {
    pub family: HopfFamily,
    pub eps_range: (f64, f64),
    pub contour_radius: f64,
    pub contour_re_min: f64,
    pub contour_vertices: usize,
    pub synthetic: SyntheticSpec,
    pub model: ModelSpec,
    pub profile: ProfileOptions,
    pub evans: EvansOptions,
    pub hopf: HopfOptions,
}

impl Default for HopfCmd {
    fn default() -> Self {
        Self {
            family: HopfFamily::Synthetic,
            eps_range: (0.0, 1.0),
            contour_radius: 10.0,
            contour_re_min: 1e-3,
            contour_vertices: 64,
            synthetic: SyntheticSpec::default(),
            model: ModelSpec::default(),
            profile: ProfileOptions::default(),
            evans: EvansOptions::default(),
            hopf: HopfOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeCmd {
    /// Parameter values probed; `probe.eps` is ignored.
    pub eps_values: Vec<f64>,
    /// Scan interval for locating the crossing.
    pub eps_range: (f64, f64),
    pub backend: SyntheticSpec,
    pub hopf: HopfOptions,
    pub probe: ProbeConfig,
}

impl Default for ProbeCmd {
    fn default() -> Self {
        Self {
            eps_values: vec![0.45, 0.505, 0.51, 0.52, 0.54],
            eps_range: (0.0, 1.0),
            backend: SyntheticSpec::default(),
            hopf: HopfOptions::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckCmd {
    pub model: ModelSpec,
    /// States on the segment between the endstates, endpoints included.
    pub segment_states: usize,
    /// Seeded random states on the same segment.
    pub random_states: usize,
    pub xi_min: f64,
    pub xi_max: f64,
    pub xi_count: usize,
}

impl Default for CheckCmd {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            segment_states: 5,
            random_states: 8,
            xi_min: 1e-2,
            xi_max: 1e2,
            xi_count: 41,
        }
    }
}
