//! Experiment configuration (TOML) and its validation.

use moving_spde::geometry::{DilatingCircle, DilationProfile, MovingCurve, OscillatingEllipse};
use moving_spde::operators::{Coupling, NoiseModel, Nonlinearity, StefanModel};
use moving_spde::pullback::{IntervalMap, MapFamily};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MOVING_SPDE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    ConditionChecks,
    Spectrum,
    TransportFormula,
    FrameEquivalence,
    GalerkinConvergence,
    MomentBounds,
    ItoResidual,
    StochasticTransport,
    PullbackEquivalence,
}

impl SuiteName {
    pub const ALL: [SuiteName; 9] = [
        SuiteName::ConditionChecks,
        SuiteName::Spectrum,
        SuiteName::TransportFormula,
        SuiteName::FrameEquivalence,
        SuiteName::GalerkinConvergence,
        SuiteName::MomentBounds,
        SuiteName::ItoResidual,
        SuiteName::StochasticTransport,
        SuiteName::PullbackEquivalence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::ConditionChecks => "condition_checks",
            SuiteName::Spectrum => "spectrum",
            SuiteName::TransportFormula => "transport_formula",
            SuiteName::FrameEquivalence => "frame_equivalence",
            SuiteName::GalerkinConvergence => "galerkin_convergence",
            SuiteName::MomentBounds => "moment_bounds",
            SuiteName::ItoResidual => "ito_residual",
            SuiteName::StochasticTransport => "stochastic_transport",
            SuiteName::PullbackEquivalence => "pullback_equivalence",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SuiteName::ConditionChecks => {
                "structural conditions on the inner products, the drift and the noise (norm equivalence, \
                 norm evolution, monotonicity, coercivity, growth, scalar law)"
            }
            SuiteName::Spectrum => "Laplace-Beltrami spectrum, Poincare constant and negative Sobolev norms at t = 0",
            SuiteName::TransportFormula => "transport theorem for surface integrals under finite-difference refinement",
            SuiteName::FrameEquivalence => "norm on the moved curve versus the pulled-back norm on the reference curve",
            SuiteName::GalerkinConvergence => {
                "Cauchy distances between Galerkin levels under shared noise, pathwise uniqueness, zero mean"
            }
            SuiteName::MomentBounds => "second moment of the running supremum at two Galerkin dimensions",
            SuiteName::ItoResidual => "Ito energy identity: quadrature order and residual under step halving",
            SuiteName::StochasticTransport => {
                "energy balance with the deformation tensor: term matching, static reduction, step halving"
            }
            SuiteName::PullbackEquivalence => "heat equation on a moving interval versus its fixed-domain pullback",
        }
    }

    /// Suites that need a moving curve and a model.
    pub fn needs_curve(self) -> bool {
        !matches!(self, SuiteName::PullbackEquivalence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    DilatingCircle {
        r0: f64,
        rate: f64,
        #[serde(default)]
        profile: DilationProfile,
        horizon: f64,
    },
    StaticCircle {
        radius: f64,
        horizon: f64,
    },
    OscillatingEllipse {
        a0: f64,
        b0: f64,
        amplitude: f64,
        frequency: f64,
        horizon: f64,
    },
}

impl CurveSpec {
    pub fn build(&self) -> moving_spde::Result<Arc<dyn MovingCurve<f64>>> {
        Ok(match *self {
            CurveSpec::DilatingCircle { r0, rate, profile, horizon } => {
                Arc::new(DilatingCircle::new(r0, rate, profile, horizon)?)
            }
            CurveSpec::StaticCircle { radius, horizon } => Arc::new(DilatingCircle::fixed(radius, horizon)?),
            CurveSpec::OscillatingEllipse { a0, b0, amplitude, frequency, horizon } => {
                Arc::new(OscillatingEllipse::new(a0, b0, amplitude, frequency, horizon)?)
            }
        })
    }

    /// Radius of the reference circle, if the curve is one.
    pub fn reference_radius(&self) -> Option<f64> {
        match *self {
            CurveSpec::DilatingCircle { r0, .. } => Some(r0),
            CurveSpec::StaticCircle { radius, .. } => Some(radius),
            CurveSpec::OscillatingEllipse { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Stefan { a: f64, b: f64, rho: f64 },
    PorousMedia { p: f64 },
    LinearHeat,
    Zero,
}

impl LawSpec {
    pub fn build(&self) -> Nonlinearity<f64> {
        match *self {
            LawSpec::Stefan { a, b, rho } => Nonlinearity::Stefan { a, b, rho },
            LawSpec::PorousMedia { p } => Nonlinearity::PorousMedia { p },
            LawSpec::LinearHeat => Nonlinearity::LinearHeat,
            LawSpec::Zero => Nonlinearity::Zero,
        }
    }
}

/// Power-law noise amplitudes `gamma_k = amplitude k^{-decay}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub amplitude: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    pub coupling: Coupling,
}

fn default_decay() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub law: LawSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    /// Grid points on the curve (`N`).
    #[serde(alias = "N")]
    pub grid_points: usize,
    /// Time steps (`M`).
    #[serde(alias = "M")]
    pub time_steps: usize,
    /// Galerkin dimension (`n`).
    #[serde(alias = "n")]
    pub galerkin_dim: usize,
    /// Noise modes (`K`).
    #[serde(alias = "K")]
    pub noise_modes: usize,
    pub paths: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    Dilation { rate: f64 },
    Bump { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackSpec {
    pub map: MapSpec,
    /// Final time of the solves; also the map horizon.
    pub t_end: f64,
    /// Cell counts of the refinement levels.
    pub cells: Vec<usize>,
    /// Time step as a multiple of `h^2`.
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
}

fn default_dt_factor() -> f64 {
    1.0
}

impl PullbackSpec {
    pub fn build(&self) -> moving_spde::Result<IntervalMap<f64>> {
        let family = match self.map {
            MapSpec::Identity => MapFamily::Identity,
            MapSpec::Dilation { rate } => MapFamily::Dilation { rate },
            MapSpec::Bump { amplitude } => MapFamily::Bump { amplitude },
        };
        IntervalMap::new(family, self.t_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suites: Vec<SuiteName>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub curve: Option<CurveSpec>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    pub discretization: Discretization,
    #[serde(default)]
    pub pullback: Option<PullbackSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("moving-spde-output")
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.discretization;
        for (field, v) in [
            ("discretization.grid_points", d.grid_points),
            ("discretization.time_steps", d.time_steps),
            ("discretization.galerkin_dim", d.galerkin_dim),
            ("discretization.noise_modes", d.noise_modes),
            ("discretization.paths", d.paths),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if d.galerkin_dim > d.grid_points / 2 {
            return Err(invalid(
                "discretization.galerkin_dim",
                format!("n exceeds resolvable modes (n = {}, N/2 = {})", d.galerkin_dim, d.grid_points / 2),
            ));
        }
        if d.noise_modes > d.galerkin_dim {
            return Err(invalid(
                "discretization.noise_modes",
                format!("K = {} exceeds the Galerkin dimension n = {}", d.noise_modes, d.galerkin_dim),
            ));
        }
        if self.suites.is_empty() {
            return Err(invalid("suites", "at least one suite is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.suites {
            if !seen.insert(*s) {
                return Err(invalid("suites", format!("suite `{}` listed twice", s.as_str())));
            }
        }
        if self.suites.iter().any(|s| s.needs_curve()) {
            let curve = self.curve.as_ref().ok_or_else(|| invalid("curve", "required by the selected suites"))?;
            curve.build().map_err(|e| invalid("curve", e.to_string()))?;
            let model = self.model.as_ref().ok_or_else(|| invalid("model", "required by the selected suites"))?;
            self.build_model_with(model).map_err(|e| invalid("model", e.to_string()))?;
        }
        if self.suites.contains(&SuiteName::PullbackEquivalence) {
            let pb = self.pullback.as_ref().ok_or_else(|| invalid("pullback", "required by pullback_equivalence"))?;
            pb.build().map_err(|e| invalid("pullback.map", e.to_string()))?;
            if pb.cells.len() < 2 || pb.cells.windows(2).any(|w| w[1] <= w[0]) || pb.cells[0] < 2 {
                return Err(invalid("pullback.cells", "need at least two increasing levels of >= 2 cells"));
            }
            if !(pb.dt_factor > 0.0) {
                return Err(invalid("pullback.dt_factor", "must be positive"));
            }
        }
        Ok(())
    }

    fn build_model_with(&self, spec: &ModelSpec) -> moving_spde::Result<StefanModel<f64>> {
        let noise = match &spec.noise {
            None => NoiseModel::none(),
            Some(n) => NoiseModel::power_law(n.amplitude, n.decay, self.discretization.noise_modes, n.coupling),
        };
        StefanModel::new(spec.law.build(), noise)
    }

    /// The model; only valid for configs that passed validation with a model section.
    pub fn build_model(&self) -> moving_spde::Result<StefanModel<f64>> {
        let spec = self
            .model
            .as_ref()
            .ok_or_else(|| moving_spde::Error::InvalidModel("no model section".into()))?;
        self.build_model_with(spec)
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent seed for one suite: the master seed mixed with the suite name.
pub fn suite_seed(master: u64, suite: SuiteName) -> u64 {
    moving_spde::galerkin::path_seed(master, fnv1a(suite.as_str().as_bytes()))
}
