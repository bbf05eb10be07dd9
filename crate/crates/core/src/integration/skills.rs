//! Skill libraries: the mapping from subtasks to goal-conditioned policies.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExecError;
use crate::env::{skill_observation, Action, Env, Grip, Pose, Shape, EE_RADIUS, MAX_STEP, SKILL_OBS_DIM};
use crate::rl::{PolicyCheckpoint, RlError, SkillId};

/// A subtask with its references bound to object ids.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedSubtask {
    MoveTo { target: TargetPoint },
    Grasp { object: String },
    Release,
    PlaceOn { platform: String },
    AvoidRegion { obstacle: String, then: TargetPoint },
}

/// Where a motion ends: an object's target point (tracked live) or a fixed pose.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetPoint {
    Object(String),
    Fixed(Pose),
}

impl ResolvedSubtask {
    /// Skill that executes this subtask; `None` for the single-step release primitive.
    pub fn skill(&self) -> Option<SkillId> {
        match self {
            ResolvedSubtask::MoveTo { .. } => Some(SkillId::Reach),
            ResolvedSubtask::Grasp { .. } => Some(SkillId::Grasp),
            ResolvedSubtask::Release => None,
            ResolvedSubtask::PlaceOn { .. } => Some(SkillId::Place),
            ResolvedSubtask::AvoidRegion { .. } => Some(SkillId::AvoidReach),
        }
    }
}

/// Current goal position of a target: platforms resolve to their top center.
pub fn target_position(target: &TargetPoint, env: &Env) -> Option<Pose> {
    match target {
        TargetPoint::Fixed(p) => Some(*p),
        TargetPoint::Object(id) => env.state().object(id).map(|o| match o.shape {
            Shape::Platform => o.top_center(),
            _ => o.pose,
        }),
    }
}

/// Goal position of the subtask in the current state.
pub fn subtask_goal(subtask: &ResolvedSubtask, env: &Env) -> Option<Pose> {
    let state = env.state();
    match subtask {
        ResolvedSubtask::MoveTo { target } | ResolvedSubtask::AvoidRegion { then: target, .. } => {
            target_position(target, env)
        }
        ResolvedSubtask::Grasp { object } => state.object(object).map(|o| o.pose),
        ResolvedSubtask::Release => Some(state.robot.ee_pose),
        ResolvedSubtask::PlaceOn { platform } => state.object(platform).map(|o| o.top_center()),
    }
}

/// Fixed-layout skill observation with the subtask goal in the target slot.
/// Only obstacle-avoidance subtasks fill the obstacle slots.
pub fn build_skill_observation(subtask: &ResolvedSubtask, env: &Env) -> Result<Vec<f64>, ExecError> {
    let state = env.state();
    let robot = &state.robot;
    let target = subtask_goal(subtask, env).ok_or_else(|| ExecError::MissingObject(format!("{subtask:?}")))?;
    let obstacle = match subtask {
        ResolvedSubtask::AvoidRegion { obstacle, .. } => {
            let o = state.object(obstacle).ok_or_else(|| ExecError::MissingObject(obstacle.clone()))?;
            Some((o.pose, o.half_extent))
        }
        _ => None,
    };
    Ok(skill_observation(robot.ee_pose, robot.gripper, robot.held.is_some(), obstacle, target))
}

pub trait SkillLibrary {
    fn has_skill(&self, skill: SkillId) -> bool;
    /// Deterministic action for `skill` given a skill observation.
    fn act(&mut self, skill: SkillId, obs: &[f64]) -> Result<Action, ExecError>;
}

/// Hand-written proportional controllers for every skill.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSkills;

/// Vertical clearance kept above an obstacle's inflated top.
const CLEARANCE: f64 = 0.02;
/// Horizontal margin added around an obstacle's inflated footprint.
const FOOTPRINT_MARGIN: f64 = 0.01;

fn within_one_step(d: Pose) -> bool {
    (0..3).all(|a| d.get(a).abs() <= MAX_STEP)
}

/// Whether the horizontal segment `a → b` meets the square `center ± half`.
fn segment_hits_square(a: Pose, b: Pose, center: Pose, half: f64) -> bool {
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for axis in 0..2 {
        let (p, d) = (a.get(axis), b.get(axis) - a.get(axis));
        let (lo, hi) = (center.get(axis) - half, center.get(axis) + half);
        if d.abs() < 1e-12 {
            if p < lo || p > hi {
                return false;
            }
        } else {
            let (mut u, mut v) = ((lo - p) / d, (hi - p) / d);
            if u > v {
                std::mem::swap(&mut u, &mut v);
            }
            t0 = t0.max(u);
            t1 = t1.min(v);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

impl OracleSkills {
    /// Reach toward `target`, passing over the obstacle when the direct route crosses it.
    fn avoid_delta(ee: Pose, target: Pose, center: Pose, half: f64) -> Pose {
        let delta = target.sub(ee);
        if half <= 0.0 {
            return delta;
        }
        let safe_z = center.z + half + EE_RADIUS + CLEARANCE;
        let footprint = half + EE_RADIUS + FOOTPRINT_MARGIN;
        if !segment_hits_square(ee, target, center, footprint) {
            return delta;
        }
        if ee.z < safe_z - 1e-9 {
            Pose::new(0.0, 0.0, safe_z - ee.z)
        } else {
            Pose::new(delta.x, delta.y, 0.0)
        }
    }
}

impl SkillLibrary for OracleSkills {
    fn has_skill(&self, skill: SkillId) -> bool {
        skill != SkillId::Flat
    }

    fn act(&mut self, skill: SkillId, obs: &[f64]) -> Result<Action, ExecError> {
        if obs.len() != SKILL_OBS_DIM {
            return Err(RlError::DimensionMismatch { expected: SKILL_OBS_DIM, got: obs.len() }.into());
        }
        let ee = Pose::new(obs[0], obs[1], obs[2]);
        let holding = obs[4] > 0.5;
        let delta = Pose::new(obs[9], obs[10], obs[11]);
        let action = match skill {
            SkillId::Reach => Action::new(delta.to_array(), Grip::Hold),
            SkillId::Grasp if holding => Action::new([0.0; 3], Grip::Hold),
            SkillId::Grasp => {
                let grip = if within_one_step(delta) { Grip::Close } else { Grip::Hold };
                Action::new(delta.to_array(), grip)
            }
            SkillId::Place => {
                let grip = if within_one_step(delta) { Grip::Open } else { Grip::Hold };
                Action::new(delta.to_array(), grip)
            }
            SkillId::AvoidReach => {
                let center = ee.add(Pose::new(obs[5], obs[6], obs[7]));
                let d = Self::avoid_delta(ee, ee.add(delta), center, obs[8]);
                Action::new(d.to_array(), Grip::Hold)
            }
            SkillId::Flat => return Err(ExecError::SkillMissing(skill)),
        };
        Ok(action.clamped(MAX_STEP))
    }
}

/// Trained policies loaded from checkpoints, one per skill.
#[derive(Debug, Clone)]
pub struct LearnedSkills {
    checkpoints: BTreeMap<SkillId, PolicyCheckpoint>,
    rng: ChaCha8Rng,
}

impl LearnedSkills {
    pub fn new() -> Self {
        Self { checkpoints: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn insert(&mut self, checkpoint: PolicyCheckpoint) -> Result<(), ExecError> {
        if checkpoint.obs_dim() != SKILL_OBS_DIM {
            return Err(RlError::DimensionMismatch { expected: SKILL_OBS_DIM, got: checkpoint.obs_dim() }.into());
        }
        self.checkpoints.insert(checkpoint.skill, checkpoint);
        Ok(())
    }

    /// Loads every `<skill>.ckpt` present in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ExecError> {
        let mut lib = Self::new();
        for skill in [SkillId::Reach, SkillId::Grasp, SkillId::Place, SkillId::AvoidReach] {
            let path = dir.as_ref().join(format!("{skill}.ckpt"));
            if path.exists() {
                lib.insert(PolicyCheckpoint::load(&path)?)?;
            }
        }
        Ok(lib)
    }

    pub fn skills(&self) -> impl Iterator<Item = SkillId> + '_ {
        self.checkpoints.keys().copied()
    }
}

impl Default for LearnedSkills {
    fn default() -> Self {
        Self::new()
    }
}

impl SkillLibrary for LearnedSkills {
    fn has_skill(&self, skill: SkillId) -> bool {
        self.checkpoints.contains_key(&skill)
    }

    fn act(&mut self, skill: SkillId, obs: &[f64]) -> Result<Action, ExecError> {
        let ckpt = self.checkpoints.get(&skill).ok_or(ExecError::SkillMissing(skill))?;
        Ok(ckpt.act(obs, true, &mut self.rng)?)
    }
}
