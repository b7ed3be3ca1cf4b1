//! Environment configuration document.

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::granular::{SettleParams, SolverParams};
use crate::procgen::{TerrainParams, ToolSpec};

/// Normal distribution parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalDist {
    pub mean: f64,
    pub std: f64,
}

/// Domain randomization drawn once per reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Randomization {
    /// kg/m³
    pub density: NormalDist,
    pub friction: NormalDist,
    pub cohesion: NormalDist,
    /// Uniform range of the gravity magnitude, m/s².
    pub gravity: [f64; 2],
    /// Draws are clamped to at least these values so that tails stay physical.
    pub min_density: f64,
    pub min_friction: f64,
}

impl Default for Randomization {
    fn default() -> Self {
        Self {
            density: NormalDist { mean: 1500.0, std: 200.0 },
            friction: NormalDist { mean: 0.9, std: 0.1 },
            cohesion: NormalDist { mean: 0.1, std: 0.01 },
            gravity: [1.6123, 1.6376],
            min_density: 300.0,
            min_friction: 0.05,
        }
    }
}

/// Weights of the composite reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub lift: f64,
    pub stabilize: f64,
    pub approach: f64,
    pub orientation: f64,
    pub dust: f64,
    pub action_rate: f64,
    pub torque: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lift: 1.0,
            stabilize: 5.0,
            approach: 0.1,
            orientation: 0.05,
            dust: 0.5,
            action_rate: 0.01,
            torque: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Lift band as offsets above the settled pile surface height, m.
    pub lift_band: [f64; 2],
    /// Speed below which a lifted particle counts as stabilized, m/s.
    pub stability_speed: f64,
    /// Speed above which a particle counts as dust, m/s.
    pub dust_speed: f64,
    /// Length scale of the approach term, m.
    pub approach_length: f64,
    pub weights: RewardWeights,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lift_band: [0.25, 0.60],
            stability_speed: 0.02,
            dust_speed: 0.02,
            approach_length: 0.1,
            weights: RewardWeights::default(),
        }
    }
}

/// How the episode dust metric aggregates over time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DustMetric {
    /// Fraction of particles that ever exceeded the dust speed.
    #[default]
    Union,
    /// Per-step fraction above the dust speed, averaged over steps.
    InstantaneousMean,
}

/// Which torque the observation reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TorqueReading {
    /// Commanded torque plus the joint image of the tool contact wrench.
    #[default]
    Measured,
    Commanded,
}

/// Two depth cameras looking at the pile center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Azimuths about the pile center, measured from +x, degrees.
    pub azimuths_deg: Vec<f64>,
    /// m
    pub distance: f64,
    /// Downward pitch of the optical axis, degrees.
    pub pitch_deg: f64,
    /// Horizontal field of view, degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Value written where a ray hits nothing, m.
    pub far: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            azimuths_deg: vec![-35.0, 35.0],
            distance: 0.7,
            pitch_deg: 45.0,
            fov_deg: 60.0,
            width: 128,
            height: 128,
            far: 2.0,
        }
    }
}

/// Tool used by every episode.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ToolChoice {
    /// One fixed tool (specialist training and evaluation).
    Fixed { spec: ToolSpec },
    /// A fresh tool drawn from the reset seed's tool stream.
    Random,
}

impl Default for ToolChoice {
    fn default() -> Self {
        ToolChoice::Fixed {
            spec: ToolSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PileConfig {
    /// World xy of the pyramid base center, m.
    pub center: [f64; 2],
    /// Gap between the highest terrain point and the pyramid base, m.
    pub drop_gap: f64,
}

impl Default for PileConfig {
    fn default() -> Self {
        Self {
            center: [0.40, 0.0],
            drop_gap: 0.005,
        }
    }
}

/// Randomized start configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartConfig {
    /// Height of the tool center above the pile top in the nominal start pose, m.
    pub height_above_pile: f64,
    /// Lowest tool point must clear the pile top by this much, m.
    pub clearance: f64,
    /// Tool center must stay within this horizontal distance of the pile center, m.
    pub max_horizontal_offset: f64,
    /// Half-width of the uniform joint perturbation, rad.
    pub joint_noise: f64,
    pub max_draws: usize,
    /// Seed configuration for the start-pose solve.
    pub home: Vec<f64>,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            height_above_pile: 0.22,
            clearance: 0.03,
            max_horizontal_offset: 0.12,
            joint_noise: 0.08,
            max_draws: 100,
            home: vec![0.0, -0.3, 0.0, -2.2, 0.0, 2.0, 0.8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub particle_count: usize,
    /// m
    pub particle_radius: f64,
    pub control_rate_hz: u32,
    pub physics_rate_hz: u32,
    /// s
    pub episode_seconds: f64,
    /// Interval between particle reward evaluations, s.
    pub reward_period_seconds: f64,
    /// Control mode, gain limits, action scale and controller tunables.
    pub controller: ControllerConfig,
    pub randomization: Randomization,
    pub reward: RewardConfig,
    pub dust_metric: DustMetric,
    pub torque_reading: TorqueReading,
    /// Adds two depth images to every observation.
    pub visual: bool,
    pub cameras: CameraConfig,
    pub solver: SolverParams,
    pub settle: SettleParams,
    pub terrain: TerrainParams,
    pub tool: ToolChoice,
    pub pile: PileConfig,
    pub start: StartConfig,
    /// Bit-exact mode: the particle pair list is rebuilt every substep.
    pub deterministic: bool,
    /// Seed used when a caller does not supply one.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            particle_count: 5000,
            particle_radius: 0.004,
            control_rate_hz: 50,
            physics_rate_hz: 250,
            episode_seconds: 15.0,
            reward_period_seconds: 2.0,
            controller: ControllerConfig::default(),
            randomization: Randomization::default(),
            reward: RewardConfig::default(),
            dust_metric: DustMetric::default(),
            torque_reading: TorqueReading::default(),
            visual: false,
            cameras: CameraConfig::default(),
            solver: SolverParams::default(),
            settle: SettleParams {
                hold_time: 0.5,
                ..SettleParams::default()
            },
            terrain: TerrainParams::default(),
            tool: ToolChoice::default(),
            pile: PileConfig::default(),
            start: StartConfig::default(),
            deterministic: false,
            seed: 0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(name, "must be positive and finite"))
    }
}

impl EnvConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: EnvConfig = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particle_count == 0 {
            return Err(Error::config("particle_count", "must be at least 1"));
        }
        positive("particle_radius", self.particle_radius)?;
        if self.control_rate_hz == 0 || self.physics_rate_hz == 0 {
            return Err(Error::config("control_rate_hz", "rates must be positive"));
        }
        if !self.physics_rate_hz.is_multiple_of(self.control_rate_hz) {
            return Err(Error::config(
                "physics_rate_hz",
                "must be an integer multiple of control_rate_hz",
            ));
        }
        positive("episode_seconds", self.episode_seconds)?;
        positive("reward_period_seconds", self.reward_period_seconds)?;
        for (name, secs) in [
            ("episode_seconds", self.episode_seconds),
            ("reward_period_seconds", self.reward_period_seconds),
        ] {
            let steps = secs * self.control_rate_hz as f64;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::config(name, "must be a whole number of control steps"));
            }
        }
        self.controller.validate()?;
        let r = &self.randomization;
        for (name, d) in [("randomization.density", r.density), ("randomization.friction", r.friction)] {
            if !(d.mean.is_finite() && d.std >= 0.0 && d.std.is_finite()) {
                return Err(Error::config(name, "mean finite and std >= 0"));
            }
        }
        if !(r.cohesion.mean.is_finite() && r.cohesion.std >= 0.0) {
            return Err(Error::config("randomization.cohesion", "mean finite and std >= 0"));
        }
        let [g0, g1] = r.gravity;
        if !(g0 > 0.0 && g1 >= g0 && g1.is_finite()) {
            return Err(Error::config("randomization.gravity", "need 0 < min <= max"));
        }
        positive("randomization.min_density", r.min_density)?;
        if !(r.min_friction >= 0.0) {
            return Err(Error::config("randomization.min_friction", "must be >= 0"));
        }
        let rw = &self.reward;
        let [b0, b1] = rw.lift_band;
        if !(b0.is_finite() && b1 > b0 && b1.is_finite()) {
            return Err(Error::config("reward.lift_band", "need lower < upper"));
        }
        positive("reward.stability_speed", rw.stability_speed)?;
        positive("reward.dust_speed", rw.dust_speed)?;
        positive("reward.approach_length", rw.approach_length)?;
        let w = &rw.weights;
        for (name, v) in [
            ("lift", w.lift),
            ("stabilize", w.stabilize),
            ("approach", w.approach),
            ("orientation", w.orientation),
            ("dust", w.dust),
            ("action_rate", w.action_rate),
            ("torque", w.torque),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("reward.weights.{name}"), "must be finite and >= 0"));
            }
        }
        let c = &self.cameras;
        if c.azimuths_deg.len() != 2 {
            return Err(Error::config("cameras.azimuths_deg", "exactly two cameras"));
        }
        positive("cameras.distance", c.distance)?;
        positive("cameras.far", c.far)?;
        if !(c.fov_deg > 0.0 && c.fov_deg < 180.0) {
            return Err(Error::config("cameras.fov_deg", "must lie in (0, 180)"));
        }
        if c.width == 0 || c.height == 0 {
            return Err(Error::config("cameras.width", "image must not be empty"));
        }
        self.solver.validate()?;
        positive("settle.median_speed", self.settle.median_speed)?;
        positive("settle.max_time", self.settle.max_time)?;
        if !(self.settle.hold_time >= 0.0) {
            return Err(Error::config("settle.hold_time", "must be >= 0"));
        }
        self.terrain.validate()?;
        if let ToolChoice::Fixed { spec } = &self.tool {
            spec.validate()?;
        }
        let s = &self.start;
        positive("start.height_above_pile", s.height_above_pile)?;
        if !(s.clearance >= 0.0 && s.joint_noise >= 0.0) {
            return Err(Error::config("start.clearance", "clearance and joint noise must be >= 0"));
        }
        positive("start.max_horizontal_offset", s.max_horizontal_offset)?;
        if s.max_draws == 0 {
            return Err(Error::config("start.max_draws", "must be at least 1"));
        }
        Ok(())
    }

    /// Physics steps per control step.
    pub fn substeps_per_control(&self) -> usize {
        (self.physics_rate_hz / self.control_rate_hz) as usize
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate_hz as f64
    }

    pub fn physics_dt(&self) -> f64 {
        1.0 / self.physics_rate_hz as f64
    }

    /// Control steps per episode.
    pub fn episode_steps(&self) -> usize {
        (self.episode_seconds * self.control_rate_hz as f64).round() as usize
    }

    /// Control steps between particle reward evaluations.
    pub fn reward_period_steps(&self) -> usize {
        (self.reward_period_seconds * self.control_rate_hz as f64).round() as usize
    }

    /// Proprioceptive observation length for an `n`-joint arm.
    pub fn proprio_dim(n: usize) -> usize {
        2 * n + 9
    }
}
