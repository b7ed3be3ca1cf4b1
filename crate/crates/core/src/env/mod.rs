//! Episode orchestration: reset, 50 Hz stepping over 250 Hz physics,
//! observations, reward and metrics.

pub mod bound;
pub mod config;
pub mod export;
pub mod metrics;
pub mod observe;
pub mod render;
pub mod reward;
pub mod vector;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DVector, Vector6};
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use bound::{flatten_observation, BoundEnv, BoundStep, ObservationLayout};
pub use config::{
    CameraConfig, DustMetric, EnvConfig, NormalDist, PileConfig, Randomization, RewardConfig, RewardWeights,
    StartConfig, ToolChoice, TorqueReading,
};
pub use export::{
    config_hash, episode_csv_header, pack_state_f32, state_read_bandwidth, tool_id, write_episode_csv, ManifestEpisode,
    RunManifest, STATE_BYTES_PER_PARTICLE,
};
pub use metrics::{
    compute_metrics, excavated_volume_liters, mean_squared_jerk, DustTracker, EpisodeMetrics, EpisodeRecord,
    RewardSums, StepRecord, PACKING_FRACTION,
};
pub use observe::{normalize_joint, observe, Observation};
pub use render::{render_depth, render_views, workspace_cameras, Camera, DepthImage, Scene};
pub use reward::{
    approach_term, compute_reward, jerk_penalty, particle_terms, ParticleTerms, RewardBreakdown, RewardState,
};
pub use vector::VecEnv;

use crate::control::{pose_error, ArmController};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Pose, SeededStream, Vec3};
use crate::granular::{
    settle, spawn_pyramid, halfwidth_for, ColliderSet, GranularSolver, Heightfield, Material, ParticleSet,
    SettleReport, ToolCollider,
};
use crate::manipulator::{
    forward_kinematics, geometric_jacobian, step_dynamics, ChainFrames, ChainSpec, LinkInertial, ManipulatorState,
};
use crate::procgen::{generate_terrain, generate_tool, sample_tool_spec, ToolAsset, ToolSpec, TriangleBvh};

/// Key of a settled pile. Gravity is part of the key because it changes the
/// settled shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct SettleKey {
    terrain_seed: u64,
    particle_seed: u64,
    material: [u64; 3],
    gravity: u64,
}

/// Settled pile and the terrain it rests on.
#[derive(Clone, Debug)]
struct SettledPile {
    terrain: Heightfield,
    ground_z: f64,
    particles: ParticleSet,
    report: SettleReport,
    /// Median top height over occupied cells, m.
    surface_height: f64,
    /// Highest particle top, m.
    top: f64,
    base: f64,
    centroid: Vec3,
}

#[derive(Debug)]
struct ToolEntry {
    asset: ToolAsset,
    bvh: TriangleBvh,
    /// Bounding-box center in the mount frame.
    center: Vec3,
}

/// What a reset drew and how it got there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetInfo {
    pub seed: u64,
    /// Magnitude, m/s².
    pub gravity: f64,
    pub material: Material,
    pub tool_spec: ToolSpec,
    pub tool_id: String,
    /// True when the settled pile came from the cache.
    pub cache_hit: bool,
    /// Simulated settle time of the pile, s.
    pub settle_time: f64,
    pub settle_converged: bool,
    /// Median particle speed when settling stopped, m/s.
    pub settle_median_speed: f64,
    /// Settled pile surface height, m.
    pub surface_height: f64,
    /// World z range of the lift band, m.
    pub band: [f64; 2],
    /// Particle centroid after settling, m.
    pub pile_point: [f64; 3],
    /// Highest particle top, m.
    pub pile_top: f64,
    /// Lowest particle bottom, m.
    pub pile_base: f64,
    /// Joint draws needed for a collision-free start.
    pub start_draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Control steps taken this episode.
    pub step: usize,
    /// Physics steps taken this episode.
    pub physics_steps: u64,
    /// Simulated seconds since reset.
    pub time: f64,
    /// True when the particle reward terms were recomputed this step.
    pub particle_terms_refreshed: bool,
    pub lifted: usize,
    pub stable: usize,
    /// Last physics step's `(force; torque)` of the particles on the tool.
    pub tool_wrench: [f64; 6],
    /// Particle–tool contacts over this control step.
    pub tool_contacts: usize,
    pub dust_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    /// True exactly at the last control step; there is no other termination.
    pub truncated: bool,
    pub info: StepInfo,
}

struct Episode {
    chain: ChainSpec,
    tool: Arc<ToolEntry>,
    pile: Arc<SettledPile>,
    controller: ArmController,
    state: ManipulatorState,
    solver: GranularSolver,
    colliders: ColliderSet,
    gravity: Vec3,
    wrench: Vector6<f64>,
    terms: ParticleTerms,
    prev_action: Vec<f64>,
    record: EpisodeRecord,
    cameras: Vec<Camera>,
    step: usize,
    physics_steps: u64,
    truncated: bool,
    info: ResetInfo,
}

/// One environment instance. Owns its caches; movable between threads.
pub struct Env {
    config: EnvConfig,
    base_chain: ChainSpec,
    settle_cache: HashMap<SettleKey, Arc<SettledPile>>,
    tool_cache: HashMap<String, Arc<ToolEntry>>,
    episode: Option<Episode>,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("step", &self.episode.as_ref().map(|e| e.step))
            .field("cached_piles", &self.settle_cache.len())
            .field("cached_tools", &self.tool_cache.len())
            .finish()
    }
}

/// Inertia about the mount origin moved to the center of mass.
fn inertia_about_com(mass: f64, com: &Vec3, about_origin: &Mat3) -> Mat3 {
    about_origin - mass * (Mat3::identity() * com.norm_squared() - com * com.transpose())
}

/// Median cell top, highest top, lowest bottom and centroid.
fn pile_surface(p: &ParticleSet) -> (f64, f64, f64, Vec3) {
    let r = p.radius;
    let cell = 4.0 * r;
    let mut tops: HashMap<(i64, i64), f64> = HashMap::new();
    let mut centroid = Vec3::zeros();
    let mut top = f64::NEG_INFINITY;
    let mut base = f64::INFINITY;
    for x in &p.x {
        let key = ((x.x / cell).floor() as i64, (x.y / cell).floor() as i64);
        let z = x.z + r;
        let e = tops.entry(key).or_insert(f64::NEG_INFINITY);
        *e = e.max(z);
        top = top.max(z);
        base = base.min(x.z - r);
        centroid += x;
    }
    centroid /= p.len().max(1) as f64;
    let mut heights: Vec<f64> = tops.into_values().collect();
    heights.sort_by(f64::total_cmp);
    let n = heights.len();
    let median = if n % 2 == 1 {
        heights[n / 2]
    } else {
        0.5 * (heights[n / 2 - 1] + heights[n / 2])
    };
    (median, top, base, centroid)
}

/// Material and gravity magnitude drawn for a reset seed.
pub fn draw_randomization(seed: u64, rz: &Randomization) -> (Material, f64) {
    let mut rng = SeededStream::new(seed).substream("material");
    let material = Material {
        density: rng.normal(rz.density.mean, rz.density.std).max(rz.min_density),
        friction: rng.normal(rz.friction.mean, rz.friction.std).max(rz.min_friction),
        cohesion: rng.normal(rz.cohesion.mean, rz.cohesion.std).max(0.0),
    };
    let g = rng.uniform(rz.gravity[0], rz.gravity[1]);
    (material, g)
}

/// Iterated damped least squares toward a full pose.
fn solve_pose(chain: &ChainSpec, seed: &DVector<f64>, target: &Pose, lambda: f64) -> Result<(DVector<f64>, f64)> {
    let mut q = chain.clamp_position(seed);
    let mut err = f64::INFINITY;
    for _ in 0..400 {
        let ee = forward_kinematics(chain, &q)?;
        let e = pose_error(target, &ee);
        err = e.norm();
        if err < 1e-6 {
            break;
        }
        let jac = geometric_jacobian(chain, &q)?;
        let mut dq = crate::control::dls_step(&jac, &DVector::from_column_slice(e.as_slice()), lambda);
        let step = dq.amax();
        if step > 0.2 {
            dq *= 0.2 / step;
        }
        q = chain.clamp_position(&(q + dq));
    }
    Ok((q, err))
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let base_chain = ChainSpec::franka_approx();
        if config.start.home.len() != base_chain.dof() {
            return Err(Error::config("start.home", format!("need {} joint values", base_chain.dof())));
        }
        Ok(Self {
            config,
            base_chain,
            settle_cache: HashMap::new(),
            tool_cache: HashMap::new(),
            episode: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_dim(&self) -> usize {
        self.config.controller.mode.action_dim()
    }

    /// Joints of the arm.
    pub fn dof(&self) -> usize {
        self.base_chain.dof()
    }

    pub fn observation_dim(&self) -> usize {
        EnvConfig::proprio_dim(self.base_chain.dof())
    }

    fn episode(&self) -> Result<&Episode> {
        self.episode
            .as_ref()
            .ok_or_else(|| Error::Protocol("no active episode; call reset first".into()))
    }

    /// Chain including the attached tool.
    pub fn chain(&self) -> Result<&ChainSpec> {
        Ok(&self.episode()?.chain)
    }

    pub fn arm_state(&self) -> Result<&ManipulatorState> {
        Ok(&self.episode()?.state)
    }

    pub fn particles(&self) -> Result<&ParticleSet> {
        Ok(self.episode()?.solver.particles())
    }

    pub fn tool(&self) -> Result<&ToolAsset> {
        Ok(&self.episode()?.tool.asset)
    }

    pub fn reset_info(&self) -> Result<&ResetInfo> {
        Ok(&self.episode()?.info)
    }

    pub fn record(&self) -> Result<&EpisodeRecord> {
        Ok(&self.episode()?.record)
    }

    pub fn is_truncated(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.truncated)
    }

    /// Metrics of the current episode record.
    pub fn metrics(&self) -> Result<EpisodeMetrics> {
        compute_metrics(&self.episode()?.record, self.config.dust_metric)
    }

    /// Binary PLY snapshot of the particles.
    pub fn write_particles_ply(&self, out: &mut impl std::io::Write) -> Result<()> {
        crate::granular::write_ply_frame(out, self.particles()?)
    }

    fn tool_entry(&mut self, spec: &ToolSpec) -> Result<Arc<ToolEntry>> {
        let key = spec.to_json()?;
        if let Some(t) = self.tool_cache.get(&key) {
            return Ok(t.clone());
        }
        let asset = generate_tool(spec)?;
        let bvh = TriangleBvh::new(&asset.mesh);
        let (lo, hi) = asset.mesh.bounding_box();
        let entry = Arc::new(ToolEntry {
            asset,
            bvh,
            center: 0.5 * (lo + hi),
        });
        self.tool_cache.insert(key, entry.clone());
        Ok(entry)
    }

    fn settled_pile(&mut self, key: SettleKey, material: Material, gravity: &Vec3) -> Result<(Arc<SettledPile>, bool)> {
        if let Some(p) = self.settle_cache.get(&key) {
            return Ok((p.clone(), true));
        }
        let c = &self.config;
        let terrain = generate_terrain(&mut SeededStream::new(key.terrain_seed), &c.terrain)?;
        let hmax = terrain
            .heightfield
            .heights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let base = Vec3::new(c.pile.center[0], c.pile.center[1], hmax + c.pile.drop_gap);
        let n = c.particle_count;
        let r = c.particle_radius;
        let particles = spawn_pyramid(
            n,
            &base,
            halfwidth_for(n, r),
            r,
            material,
            &mut SeededStream::new(key.particle_seed),
        )?;
        let mut params = c.solver.clone();
        params.deterministic = c.deterministic;
        let mut solver = GranularSolver::new(particles, params)?;
        let ground_z = -terrain.amplitude;
        let colliders = ColliderSet {
            terrain: Some(terrain.heightfield.clone()),
            ground_z,
            tool: None,
        };
        let report = settle(&mut solver, &colliders, gravity, c.physics_dt(), &c.settle).map_err(|e| {
            if e.is_divergence() {
                Error::Reset(format!("settle diverged: {e}"))
            } else {
                e
            }
        })?;
        let particles = solver.into_particles();
        let (surface_height, top, base, centroid) = pile_surface(&particles);
        let pile = Arc::new(SettledPile {
            terrain: terrain.heightfield,
            ground_z,
            particles,
            report,
            surface_height,
            top,
            base,
            centroid,
        });
        self.settle_cache.insert(key, pile.clone());
        Ok((pile, false))
    }

    /// Draws a collision-free start with the tool above the pile.
    fn start_configuration(
        &self,
        chain: &ChainSpec,
        tool: &ToolEntry,
        pile: &SettledPile,
        rng: &mut SeededStream,
    ) -> Result<(DVector<f64>, usize)> {
        let s = &self.config.start;
        let pc = Vec3::new(self.config.pile.center[0], self.config.pile.center[1], 0.0);
        // Flange z down, cavity toward +x.
        let r = Mat3::from_columns(&[Vec3::y(), Vec3::x(), -Vec3::z()]);
        let tool_point = Vec3::new(pc.x, pc.y, pile.top + s.height_above_pile);
        let target = Pose::from_rotation_matrix(tool_point - r * tool.center, &r);
        let home = DVector::from_column_slice(&s.home);
        let (ready, _) = solve_pose(chain, &home, &target, 0.05)?;
        let n = chain.dof();
        for draw in 1..=s.max_draws {
            let noise = DVector::from_iterator(n, (0..n).map(|_| rng.uniform(-s.joint_noise, s.joint_noise)));
            let q = chain.clamp_position(&(&ready + noise));
            let frames = ChainFrames::compute(chain, &q)?;
            let ee = frames.ee;
            let lowest = tool
                .asset
                .mesh
                .vertices
                .iter()
                .map(|v| ee.transform_point(v).z)
                .fold(f64::INFINITY, f64::min);
            let tp = ee.transform_point(&tool.center);
            let horizontal = ((tp.x - pc.x).powi(2) + (tp.y - pc.y).powi(2)).sqrt();
            let links_clear = frames.origins.iter().all(|o| o.z > pile.top) && ee.position.z > pile.top;
            if lowest > pile.top + s.clearance && horizontal <= s.max_horizontal_offset && links_clear {
                return Ok((q, draw));
            }
        }
        Err(Error::Reset(format!(
            "no collision-free start after {} draws",
            s.max_draws
        )))
    }

    /// Starts a new episode from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.episode = None;
        let root = SeededStream::new(seed);
        let terrain_seed = root.substream("terrain").next_u64();
        let particle_seed = root.substream("particles").next_u64();
        let (material, g) = draw_randomization(seed, &self.config.randomization);
        let gravity = Vec3::new(0.0, 0.0, -g);
        let spec = match &self.config.tool {
            ToolChoice::Fixed { spec } => spec.clone(),
            ToolChoice::Random => sample_tool_spec(&mut root.substream("tool")),
        };
        let tool = self.tool_entry(&spec)?;
        let key = SettleKey {
            terrain_seed,
            particle_seed,
            material: [material.density.to_bits(), material.friction.to_bits(), material.cohesion.to_bits()],
            gravity: g.to_bits(),
        };
        let (pile, cache_hit) = self.settled_pile(key, material, &gravity)?;

        let a = &tool.asset;
        let chain = self.base_chain.with_payload(&LinkInertial {
            mass: a.mass,
            com: a.com,
            inertia: inertia_about_com(a.mass, &a.com, &a.inertia),
        });
        let (q0, start_draws) = self.start_configuration(&chain, &tool, &pile, &mut root.substream("joints"))?;
        let state = ManipulatorState::at_rest(q0.clone());
        let controller = ArmController::new(self.config.controller.clone(), &chain, &state)?;

        let c = &self.config;
        let mut params = c.solver.clone();
        params.deterministic = c.deterministic;
        let solver = GranularSolver::new(pile.particles.clone(), params)?;
        let ee = forward_kinematics(&chain, &q0)?;
        let colliders = ColliderSet {
            terrain: Some(pile.terrain.clone()),
            ground_z: pile.ground_z,
            tool: Some(ToolCollider::stationary(a.sdf.clone(), ee)),
        };
        let band = [
            pile.surface_height + c.reward.lift_band[0],
            pile.surface_height + c.reward.lift_band[1],
        ];
        let terms = particle_terms(solver.particles(), band, &c.reward);
        let center = Vec3::new(c.pile.center[0], c.pile.center[1], pile.surface_height);
        let cameras = if c.visual {
            workspace_cameras(&c.cameras, &center)
        } else {
            Vec::new()
        };
        let info = ResetInfo {
            seed,
            gravity: g,
            material,
            tool_id: tool_id(&spec)?,
            tool_spec: spec,
            cache_hit,
            settle_time: pile.report.elapsed,
            settle_converged: pile.report.converged,
            settle_median_speed: pile.report.final_median_speed,
            surface_height: pile.surface_height,
            band,
            pile_point: pile.centroid.into(),
            pile_top: pile.top,
            pile_base: pile.base,
            start_draws,
        };
        let record = EpisodeRecord::new(c.particle_count, c.particle_radius, c.control_dt(), q0);
        self.episode = Some(Episode {
            chain,
            prev_action: vec![0.0; c.controller.mode.action_dim()],
            tool,
            pile,
            controller,
            state,
            solver,
            colliders,
            gravity,
            wrench: Vector6::zeros(),
            terms,
            record,
            cameras,
            step: 0,
            physics_steps: 0,
            truncated: false,
            info,
        });
        self.observation()
    }

    fn observation(&self) -> Result<Observation> {
        let ep = self.episode()?;
        let depth = if self.config.visual {
            let ee = forward_kinematics(&ep.chain, &ep.state.q)?;
            let scene = Scene {
                spheres: Some((&ep.solver.particles().x, ep.solver.particles().radius)),
                tool: Some((&ep.tool.bvh, ee)),
                terrain: Some(&ep.pile.terrain),
                ground_z: Some(ep.pile.ground_z),
            };
            Some(render_views(&scene, &ep.cameras))
        } else {
            None
        };
        observe(&ep.chain, &ep.state, self.config.torque_reading, depth)
    }

    /// Advances one control step.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let c = &self.config;
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Protocol("step before reset".into()))?;
        if ep.truncated {
            return Err(Error::Protocol("step after truncation; call reset".into()));
        }
        let dim = c.controller.mode.action_dim();
        if action.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: action.len(),
            });
        }
        ep.controller.command(&ep.chain, &ep.state, action)?;
        let dt = c.physics_dt();
        let sdf = ep.tool.asset.sdf.clone();
        let mut tool_contacts = 0;
        for _ in 0..c.substeps_per_control() {
            let tau = ep.controller.torques(&ep.chain, &ep.state, &ep.gravity)?;
            let start = forward_kinematics(&ep.chain, &ep.state.q)?;
            ep.state = step_dynamics(&ep.chain, &ep.state, &tau, &ep.wrench, &ep.gravity, dt)?;
            let end = forward_kinematics(&ep.chain, &ep.state.q)?;
            ep.colliders.tool = Some(ToolCollider {
                sdf: sdf.clone(),
                start,
                end,
                reference: end.position,
            });
            let stats = ep.solver.step(&ep.colliders, &ep.gravity, dt)?;
            ep.wrench = stats.tool_wrench(dt);
            tool_contacts += stats.tool_contacts;
            ep.physics_steps += 1;
        }
        ep.step += 1;
        ep.record.dust.update(&ep.solver.particles().v, c.reward.dust_speed);

        let refreshed = ep.step % c.reward_period_steps() == 0;
        let band = ep.info.band;
        if refreshed {
            ep.terms = particle_terms(ep.solver.particles(), band, &c.reward);
        }
        let ee = forward_kinematics(&ep.chain, &ep.state.q)?;
        let tool_point = ee.transform_point(&ep.tool.center);
        let pile_point = Vec3::from(ep.info.pile_point);
        let r_approach = approach_term(&tool_point, &ee.z_axis(), &pile_point, &c.reward);
        let p_jerk = jerk_penalty(
            action,
            &ep.prev_action,
            &ep.state.tau_applied,
            &ep.chain.torque_limits(),
            &c.reward,
        );
        let reward = RewardBreakdown::assemble(r_approach, &ep.terms, p_jerk);
        ep.prev_action.copy_from_slice(action);
        ep.record.steps.push(StepRecord {
            step: ep.step,
            reward,
            ee,
            q: ep.state.q.clone(),
            qd: ep.state.qd.clone(),
        });
        ep.truncated = ep.step >= c.episode_steps();
        let final_terms = if ep.truncated {
            let t = particle_terms(ep.solver.particles(), band, &c.reward);
            ep.record.final_stable_lifted = Some(t.stable);
            t
        } else {
            ep.terms
        };
        let info = StepInfo {
            step: ep.step,
            physics_steps: ep.physics_steps,
            time: ep.physics_steps as f64 * dt,
            particle_terms_refreshed: refreshed,
            lifted: final_terms.lifted,
            stable: final_terms.stable,
            tool_wrench: ep.wrench.into(),
            tool_contacts,
            dust_fraction: ep.record.dust.union_fraction(),
        };
        let truncated = ep.truncated;
        Ok(StepResult {
            observation: self.observation()?,
            reward,
            truncated,
            info,
        })
    }
}
