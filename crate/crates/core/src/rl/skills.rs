//! Goal-conditioned training environments, one per skill, plus the flat
//! whole-task environment used by the RL-only baseline.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvStep, Environment, RlError};
use crate::env::{
    skill_observation, Action, Color, Env, GoalPredicate, ObjectSpec, Pose, RewardWeights, ScenarioSpec, Shape,
    WorkspaceBounds, SKILL_OBS_DIM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillId {
    Reach,
    Grasp,
    Place,
    AvoidReach,
    /// Whole-task policy without decomposition.
    Flat,
}

impl SkillId {
    pub const ALL: [SkillId; 5] = [SkillId::Reach, SkillId::Grasp, SkillId::Place, SkillId::AvoidReach, SkillId::Flat];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillId::Reach => "reach",
            SkillId::Grasp => "grasp",
            SkillId::Place => "place",
            SkillId::AvoidReach => "avoid_reach",
            SkillId::Flat => "flat",
        }
    }

    /// Reaching skills move only; the others also drive the gripper.
    pub fn action_dim(self) -> usize {
        match self {
            SkillId::Reach | SkillId::AvoidReach => 3,
            SkillId::Grasp | SkillId::Place | SkillId::Flat => 4,
        }
    }
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkillId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SkillId::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = SkillId::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown skill `{s}` (valid: {})", names.join(", "))
        })
    }
}

const SKILL_EPISODE_STEPS: u32 = 40;
const REACH_TOL: f64 = 0.02;
const CUBE_HALF: f64 = 0.02;
const PLATFORM_HALF: f64 = 0.06;
const OBSTACLE_HALF: f64 = 0.06;

fn table_bounds() -> WorkspaceBounds {
    WorkspaceBounds { min: Pose::new(0.0, -0.5, 0.0), max: Pose::new(1.0, 0.5, 0.6) }
}

fn object(id: &str, shape: Shape, color: Color, half_extent: f64, pose: Pose) -> ObjectSpec {
    ObjectSpec { id: id.into(), shape, color, half_extent, pose, graspable: shape == Shape::Cube }
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, lo: [f64; 3], hi: [f64; 3]) -> Pose {
    Pose::new(rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1]), rng.random_range(lo[2]..=hi[2]))
}

/// Draws a fresh scenario for one training episode of `skill`.
pub fn sample_skill_scenario<R: Rng + ?Sized>(skill: SkillId, rng: &mut R) -> ScenarioSpec {
    let mut spec = ScenarioSpec {
        name: format!("{skill}_episode"),
        instruction: None,
        bounds: table_bounds(),
        ee_start: Pose::ZERO,
        held_at_start: None,
        max_steps: SKILL_EPISODE_STEPS,
        sim_dt: crate::env::SIM_DT,
        jitter: 0.0,
        goal: GoalPredicate::NotHolding,
        objects: Vec::new(),
        perturbations: Vec::new(),
    };
    let reach_lo = [0.25, -0.35, 0.05];
    let reach_hi = [0.75, 0.35, 0.35];
    match skill {
        SkillId::Reach => {
            spec.ee_start = uniform_point(rng, reach_lo, reach_hi);
            let target = loop {
                let t = uniform_point(rng, reach_lo, reach_hi);
                if t.dist(spec.ee_start) >= 0.1 {
                    break t;
                }
            };
            spec.goal = GoalPredicate::EeNear { target, tol: REACH_TOL };
        }
        SkillId::Grasp => {
            let cube = uniform_point(rng, [0.3, -0.3, CUBE_HALF], [0.7, 0.3, CUBE_HALF]);
            let offset = uniform_point(rng, [-0.15, -0.15, 0.05], [0.15, 0.15, 0.25]);
            spec.ee_start = cube.add(offset);
            spec.objects.push(object("cube", Shape::Cube, Color::Red, CUBE_HALF, cube));
            spec.goal = GoalPredicate::Holding { object: "cube".into() };
        }
        SkillId::Place => {
            let platform = uniform_point(rng, [0.3, -0.3, 0.01], [0.7, 0.3, 0.01]);
            let start = loop {
                let s = uniform_point(rng, reach_lo, reach_hi);
                if s.horizontal_dist(platform) >= 0.1 {
                    break s;
                }
            };
            spec.ee_start = start;
            spec.held_at_start = Some("cube".into());
            spec.objects.push(object("cube", Shape::Cube, Color::Red, CUBE_HALF, start));
            spec.objects.push(object("platform", Shape::Platform, Color::Blue, PLATFORM_HALF, platform));
            spec.goal = GoalPredicate::ObjectOn { object: "cube".into(), platform: "platform".into(), tol: REACH_TOL };
        }
        SkillId::AvoidReach => {
            // Start and target sit on opposite sides of a box, low enough that the
            // straight segment between them crosses it.
            let center = uniform_point(rng, [0.4, -0.1, OBSTACLE_HALF], [0.6, 0.1, OBSTACLE_HALF]);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = rng.random_range(-0.05..=0.05);
            let start = Pose::new(center.x + lateral, center.y - side * 0.2, rng.random_range(0.03..=0.1));
            let target = Pose::new(center.x - lateral, center.y + side * 0.2, rng.random_range(0.03..=0.1));
            spec.ee_start = start;
            spec.objects.push(object("obstacle", Shape::Obstacle, Color::Yellow, OBSTACLE_HALF, center));
            spec.goal = GoalPredicate::EeNear { target, tol: REACH_TOL };
        }
        SkillId::Flat => unreachable!("the flat task is built from a scenario file"),
    }
    spec
}

/// Skill training environment: each reset draws a new goal-conditioned scene.
#[derive(Debug)]
pub struct SkillEnv {
    skill: SkillId,
    rng: ChaCha8Rng,
    env: Option<Env>,
}

impl SkillEnv {
    pub fn new(skill: SkillId, seed: u64) -> Result<Self, RlError> {
        if skill == SkillId::Flat {
            return Err(RlError::InvalidConfig("the flat task has no skill environment; use FlatTaskEnv".into()));
        }
        Ok(Self { skill, rng: ChaCha8Rng::seed_from_u64(seed), env: None })
    }

    pub fn skill(&self) -> SkillId {
        self.skill
    }

    pub fn env(&self) -> Option<&Env> {
        self.env.as_ref()
    }

    fn observe(&self) -> Vec<f64> {
        let env = self.env.as_ref().expect("reset before observing");
        let state = env.state();
        let target = match (&env.scenario().goal, self.skill) {
            (GoalPredicate::ObjectOn { platform, .. }, _) => state.object(platform).map(ObjectSpec::top_center),
            (goal, _) => state.current_target(goal),
        }
        .unwrap_or(state.robot.ee_pose);
        let obstacle = state.objects.iter().find(|o| o.shape == Shape::Obstacle).map(|o| (o.pose, o.half_extent));
        skill_observation(state.robot.ee_pose, state.robot.gripper, state.robot.held.is_some(), obstacle, target)
    }
}

impl Environment for SkillEnv {
    fn obs_dim(&self) -> usize {
        SKILL_OBS_DIM
    }

    fn action_dim(&self) -> usize {
        self.skill.action_dim()
    }

    fn reset(&mut self) -> Result<Vec<f64>, RlError> {
        let spec = sample_skill_scenario(self.skill, &mut self.rng);
        let seed = self.rng.random();
        self.env = Some(Env::new(spec, seed)?);
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, RlError> {
        let env = self.env.as_mut().ok_or(RlError::InvalidConfig("step before reset".into()))?;
        let out = env.step(Action::from_normalized(action))?;
        let success = out.info.goal_satisfied;
        let done = out.done;
        Ok(EnvStep { obs: self.observe(), reward: out.reward, done, success, truncated: done && !success })
    }
}

/// Whole-task environment over a scenario with per-episode layout jitter and
/// the full scene observation. The grasp bonus is disabled, leaving the goal
/// bonus and distance shaping as the only task signal.
#[derive(Debug)]
pub struct FlatTaskEnv {
    scenario: ScenarioSpec,
    rng: ChaCha8Rng,
    env: Env,
}

impl FlatTaskEnv {
    pub fn new(mut scenario: ScenarioSpec, seed: u64) -> Result<Self, RlError> {
        scenario.perturbations.clear();
        let env = Env::new(scenario.clone(), seed)?;
        Ok(Self { scenario, rng: ChaCha8Rng::seed_from_u64(seed), env })
    }

    pub fn reward_weights() -> RewardWeights {
        RewardWeights { grasp_bonus: 0.0, ..RewardWeights::default() }
    }
}

impl Environment for FlatTaskEnv {
    fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    fn action_dim(&self) -> usize {
        SkillId::Flat.action_dim()
    }

    fn reset(&mut self) -> Result<Vec<f64>, RlError> {
        let spec = self.scenario.jittered(&mut self.rng);
        let seed = self.rng.random();
        self.env = Env::new(spec, seed)?.with_reward_weights(Self::reward_weights());
        Ok(self.env.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, RlError> {
        let out = self.env.step(Action::from_normalized(action))?;
        let success = out.info.goal_satisfied;
        Ok(EnvStep {
            obs: out.observation,
            reward: out.reward,
            done: out.done,
            success,
            truncated: out.done && !success,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skill_names_round_trip() {
        for k in SkillId::ALL {
            assert_eq!(k.as_str().parse::<SkillId>().unwrap(), k);
        }
        let err = "fly".parse::<SkillId>().unwrap_err();
        assert!(err.contains("reach") && err.contains("avoid_reach"));
    }

    #[test]
    fn sampled_scenarios_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for skill in [SkillId::Reach, SkillId::Grasp, SkillId::Place, SkillId::AvoidReach] {
            for _ in 0..200 {
                let spec = sample_skill_scenario(skill, &mut rng);
                spec.validate().unwrap_or_else(|e| panic!("{skill}: {e}"));
                assert!(!Env::new(spec, 0).unwrap().check_goal(), "{skill} starts solved");
            }
        }
    }

    #[test]
    fn avoid_reach_segment_crosses_obstacle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let spec = sample_skill_scenario(SkillId::AvoidReach, &mut rng);
            let GoalPredicate::EeNear { target, .. } = spec.goal else { unreachable!() };
            let o = &spec.objects[0];
            let mid = Pose::new((spec.ee_start.x + target.x) / 2.0, (spec.ee_start.y + target.y) / 2.0, 0.0);
            assert!(o.footprint_contains(mid.x, mid.y));
            assert!(spec.ee_start.z.max(target.z) < o.top_z());
        }
    }

    #[test]
    fn skill_observation_target_slot_points_at_goal() {
        let mut env = SkillEnv::new(SkillId::Reach, 4).unwrap();
        let obs = env.reset().unwrap();
        assert_eq!(obs.len(), SKILL_OBS_DIM);
        let GoalPredicate::EeNear { target, .. } = env.env().unwrap().scenario().goal.clone() else { unreachable!() };
        let ee = env.env().unwrap().state().robot.ee_pose;
        let slot = crate::env::SKILL_TARGET_SLOT;
        assert_eq!(&obs[slot..slot + 3], &target.sub(ee).to_array());
    }

    #[test]
    fn place_target_is_platform_top() {
        let mut env = SkillEnv::new(SkillId::Place, 2).unwrap();
        let obs = env.reset().unwrap();
        let inner = env.env().unwrap();
        let top = inner.state().object("platform").unwrap().top_center();
        let ee = inner.state().robot.ee_pose;
        let slot = crate::env::SKILL_TARGET_SLOT;
        assert_eq!(&obs[slot..slot + 3], &top.sub(ee).to_array());
        assert_eq!(obs[4], 1.0);
    }

    #[test]
    fn flat_env_jitters_layout_per_episode() {
        let spec = crate::env::scenario::builtin("pick_place").unwrap();
        let mut env = FlatTaskEnv::new(spec, 9).unwrap();
        let a = env.reset().unwrap();
        let b = env.reset().unwrap();
        assert_eq!(a.len(), env.obs_dim());
        assert_ne!(a, b);
    }
}
