//! Deterministic kinematic tabletop simulator.
//!
//! The robot is reduced to a point end-effector with a binary gripper that
//! moves by clamped Cartesian increments. Grasping, releasing and obstacle
//! contact follow fixed geometric rules, so a given scenario, seed and action
//! sequence always produce the same trace.

pub mod scenario;
pub mod trace;
mod types;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scenario::{GoalPredicate, Perturbation, ScenarioSpec};
pub use types::{Action, Color, Grip, GripperState, ObjectSpec, Pose, Shape, WorkspaceBounds, GRIP_THRESHOLD};

/// Per-component action clamp, meters per step.
pub const MAX_STEP: f64 = 0.05;
/// Maximum end-effector to object-center distance at which a close command attaches.
pub const GRASP_TOL: f64 = 0.03;
/// Inflation of the end-effector point for obstacle contact.
pub const EE_RADIUS: f64 = 0.01;
/// Half-thickness of platform slabs.
pub const PLATFORM_HALF_HEIGHT: f64 = 0.01;
/// Held-object pose relative to the end-effector.
pub const GRASP_OFFSET: Pose = Pose::ZERO;
/// Default simulated seconds per step.
pub const SIM_DT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("malformed scenario: {0}")]
    ScenarioFormat(String),
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
}

/// Weights of the shaped reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Per meter of progress toward the current target.
    pub distance: f64,
    /// Per step.
    pub time: f64,
    /// Per colliding step.
    pub collision: f64,
    pub grasp_bonus: f64,
    pub goal_bonus: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { distance: 1.0, time: 0.01, collision: 1.0, grasp_bonus: 1.0, goal_bonus: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub ee_pose: Pose,
    pub gripper: GripperState,
    pub held: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: RobotState,
    pub objects: Vec<ObjectSpec>,
    pub step_count: u32,
    pub collided: bool,
}

impl WorldState {
    fn initial(spec: &ScenarioSpec) -> Self {
        let mut state = WorldState {
            robot: RobotState { ee_pose: spec.ee_start, gripper: GripperState::Open, held: None },
            objects: spec.objects.clone(),
            step_count: 0,
            collided: false,
        };
        if let Some(id) = &spec.held_at_start {
            state.robot.gripper = GripperState::Closed;
            state.robot.held = Some(id.clone());
            state.sync_held();
        }
        state
    }

    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_mut(&mut self, id: &str) -> Option<&mut ObjectSpec> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    fn sync_held(&mut self) {
        if let Some(id) = self.robot.held.clone() {
            let target = self.robot.ee_pose.add(GRASP_OFFSET);
            if let Some(o) = self.object_mut(&id) {
                o.pose = target;
            }
        }
    }

    /// True when `object` rests on `platform` within `tol`, horizontally and in height.
    pub fn object_on(&self, object: &str, platform: &str, tol: f64) -> bool {
        let (Some(o), Some(p)) = (self.object(object), self.object(platform)) else {
            return false;
        };
        if self.robot.held.as_deref() == Some(object) {
            return false;
        }
        let rest_z = p.top_z() + o.half_extent;
        o.pose.horizontal_dist(p.pose) <= tol && (o.pose.z - rest_z).abs() <= tol
    }

    pub fn goal_satisfied(&self, goal: &GoalPredicate) -> bool {
        match goal {
            GoalPredicate::EeNear { target, tol } => self.robot.ee_pose.dist(*target) <= *tol,
            GoalPredicate::ObjectOn { object, platform, tol } => self.object_on(object, platform, *tol),
            GoalPredicate::Holding { object } => self.robot.held.as_deref() == Some(object.as_str()),
            GoalPredicate::NotHolding => self.robot.held.is_none(),
            GoalPredicate::Sorted { assignment, tol } => self
                .objects
                .iter()
                .filter(|o| o.graspable)
                .filter_map(|o| assignment.get(&o.color).map(|p| (o, p)))
                .all(|(o, p)| self.object_on(&o.id, p, *tol)),
        }
    }

    /// The point the shaped reward measures progress against, if the goal has one.
    pub fn current_target(&self, goal: &GoalPredicate) -> Option<Pose> {
        let stage = |object: &str, platform: &str| -> Option<Pose> {
            if self.robot.held.as_deref() == Some(object) {
                self.object(platform).map(ObjectSpec::top_center)
            } else {
                self.object(object).map(|o| o.pose)
            }
        };
        match goal {
            GoalPredicate::EeNear { target, .. } => Some(*target),
            GoalPredicate::Holding { object } => self.object(object).map(|o| o.pose),
            GoalPredicate::NotHolding => None,
            GoalPredicate::ObjectOn { object, platform, .. } => stage(object, platform),
            GoalPredicate::Sorted { assignment, tol } => {
                if let Some(held) = &self.robot.held {
                    let o = self.object(held)?;
                    if let Some(p) = assignment.get(&o.color) {
                        return stage(held, p);
                    }
                }
                let mut pending: Vec<&ObjectSpec> = self
                    .objects
                    .iter()
                    .filter(|o| o.graspable && assignment.contains_key(&o.color))
                    .filter(|o| !self.object_on(&o.id, &assignment[&o.color], *tol))
                    .collect();
                pending.sort_by(|a, b| a.id.cmp(&b.id));
                pending.first().and_then(|o| stage(&o.id, &assignment[&o.color]))
            }
        }
    }

    /// Height an object centered at `(x, y)` with bottom no lower than its
    /// current center comes to rest at.
    fn resting_z(&self, dropped: &ObjectSpec) -> f64 {
        let (x, y) = (dropped.pose.x, dropped.pose.y);
        let support = self
            .objects
            .iter()
            .filter(|o| o.id != dropped.id && o.footprint_contains(x, y))
            .map(ObjectSpec::top_z)
            .filter(|&top| top <= dropped.pose.z + 1e-9)
            .fold(0.0_f64, f64::max);
        support + dropped.half_extent
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub collision: bool,
    pub goal_satisfied: bool,
    pub grasped: Option<String>,
    pub released: Option<String>,
    pub fired_perturbations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Serializable scene snapshot with a stable field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub scenario: String,
    pub robot: RobotState,
    pub home: Pose,
    pub objects: Vec<ObjectSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub id: String,
    pub shape: Shape,
    pub color: Color,
    pub half_extent: f64,
    pub pose: Pose,
    pub graspable: bool,
    pub held: bool,
}

impl ObjectSummary {
    /// Point a motion toward this object aims for.
    pub fn target_point(&self) -> Pose {
        match self.shape {
            Shape::Platform => Pose::new(self.pose.x, self.pose.y, self.pose.z + PLATFORM_HALF_HEIGHT),
            _ => self.pose,
        }
    }
}

impl WorldSummary {
    pub fn object(&self, id: &str) -> Option<&ObjectSummary> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// The simulator. Single owner, not shared across threads while stepping.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: ScenarioSpec,
    state: WorldState,
    weights: RewardWeights,
    seed: u64,
    rng: ChaCha8Rng,
    done: bool,
}

impl Env {
    pub fn new(scenario: ScenarioSpec, seed: u64) -> Result<Self, EnvError> {
        scenario.validate()?;
        let state = WorldState::initial(&scenario);
        Ok(Self {
            scenario,
            state,
            weights: RewardWeights::default(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            done: false,
        })
    }

    pub fn with_reward_weights(mut self, weights: RewardWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Episode-local random stream, reseeded on every reset.
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn sim_dt(&self) -> f64 {
        self.scenario.sim_dt
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.state = WorldState::initial(&self.scenario);
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.done = false;
        self.observation()
    }

    pub fn check_goal(&self) -> bool {
        self.state.goal_satisfied(&self.scenario.goal)
    }

    pub fn obs_dim(&self) -> usize {
        observation_dim(self.scenario.objects.len())
    }

    /// `ee (3) | gripper closed (1) | holding (1) | object - ee (3 per object) | target - ee (3)`.
    pub fn observation(&self) -> Vec<f64> {
        let ee = self.state.robot.ee_pose;
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.extend(ee.to_array());
        obs.push(gripper_flag(self.state.robot.gripper));
        obs.push(if self.state.robot.held.is_some() { 1.0 } else { 0.0 });
        for o in &self.state.objects {
            obs.extend(o.pose.sub(ee).to_array());
        }
        let target = self.state.current_target(&self.scenario.goal).map_or(Pose::ZERO, |t| t.sub(ee));
        obs.extend(target.to_array());
        obs
    }

    pub fn world_summary(&self) -> WorldSummary {
        let held = self.state.robot.held.as_deref();
        WorldSummary {
            scenario: self.scenario.name.clone(),
            robot: self.state.robot.clone(),
            home: self.scenario.ee_start,
            objects: self
                .state
                .objects
                .iter()
                .map(|o| ObjectSummary {
                    id: o.id.clone(),
                    shape: o.shape,
                    color: o.color,
                    half_extent: o.half_extent,
                    pose: o.pose,
                    graspable: o.graspable,
                    held: held == Some(o.id.as_str()),
                })
                .collect(),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let goal = self.scenario.goal.clone();
        let was_satisfied = self.state.goal_satisfied(&goal);
        let target = self.state.current_target(&goal);
        let start = self.state.robot.ee_pose;

        let action = action.clamped(MAX_STEP);
        let collision = self.move_end_effector(action.delta);
        self.state.sync_held();

        let mut info = StepInfo { collision, ..StepInfo::default() };
        match action.grip {
            Grip::Close => info.grasped = self.close_gripper(),
            Grip::Open => info.released = self.open_gripper(),
            Grip::Hold => {}
        }

        let now = self.state.step_count;
        for p in self.scenario.perturbations.iter().filter(|p| p.at_step == now) {
            if self.state.robot.held.as_deref() == Some(p.object_id.as_str()) {
                self.state.robot.held = None;
            }
            let pose = self.scenario.bounds.clamp(p.new_pose);
            if let Some(o) = self.state.object_mut(&p.object_id) {
                o.pose = pose;
            }
            info.fired_perturbations.push(p.object_id.clone());
        }

        self.state.step_count += 1;
        self.state.collided = collision;

        let satisfied = self.state.goal_satisfied(&goal);
        info.goal_satisfied = satisfied;

        let w = self.weights;
        let progress = target.map_or(0.0, |t| self.state.robot.ee_pose.dist(t) - start.dist(t));
        let mut reward = -w.distance * progress - w.time;
        if collision {
            reward -= w.collision;
        }
        if info.grasped.is_some() {
            reward += w.grasp_bonus;
        }
        if satisfied && !was_satisfied {
            reward += w.goal_bonus;
        }

        self.done = satisfied || self.state.step_count >= self.scenario.max_steps;
        Ok(StepOutcome { observation: self.observation(), reward, done: self.done, info })
    }

    /// Applies the displacement one axis at a time, refusing any component that
    /// would push the inflated end-effector into (or deeper into) an obstacle.
    fn move_end_effector(&mut self, delta: [f64; 3]) -> bool {
        let bounds = self.scenario.bounds;
        let mut pos = self.state.robot.ee_pose;
        let mut blocked = false;
        for (axis, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let mut cand = pos;
            cand.set(axis, pos.get(axis) + d);
            let cand = bounds.clamp(cand);
            let hits = self.state.objects.iter().filter(|o| o.shape == Shape::Obstacle).any(|o| {
                let entering = overlaps(cand, o) && !overlaps(pos, o);
                let deeper = overlaps(cand, o)
                    && (cand.get(axis) - o.pose.get(axis)).abs() < (pos.get(axis) - o.pose.get(axis)).abs();
                entering || deeper
            });
            if hits {
                blocked = true;
            } else {
                pos = cand;
            }
        }
        self.state.robot.ee_pose = pos;
        blocked
    }

    fn close_gripper(&mut self) -> Option<String> {
        self.state.robot.gripper = GripperState::Closed;
        if self.state.robot.held.is_some() {
            return None;
        }
        let ee = self.state.robot.ee_pose;
        let nearest = self
            .state
            .objects
            .iter()
            .filter(|o| o.graspable)
            .map(|o| (o.pose.dist(ee), o.id.clone()))
            .filter(|(d, _)| *d <= GRASP_TOL)
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))?;
        self.state.robot.held = Some(nearest.1.clone());
        self.state.sync_held();
        Some(nearest.1)
    }

    fn open_gripper(&mut self) -> Option<String> {
        self.state.robot.gripper = GripperState::Open;
        let id = self.state.robot.held.take()?;
        let dropped = self.state.object(&id).cloned()?;
        let z = self.state.resting_z(&dropped);
        let bounds = self.scenario.bounds;
        if let Some(o) = self.state.object_mut(&id) {
            o.pose = bounds.clamp(Pose::new(o.pose.x, o.pose.y, z));
        }
        Some(id)
    }
}

fn overlaps(ee: Pose, obstacle: &ObjectSpec) -> bool {
    let reach = obstacle.half_extent + EE_RADIUS;
    (0..3).all(|a| (ee.get(a) - obstacle.pose.get(a)).abs() < reach)
}

pub fn gripper_flag(g: GripperState) -> f64 {
    match g {
        GripperState::Open => 0.0,
        GripperState::Closed => 1.0,
    }
}

pub fn observation_dim(n_objects: usize) -> usize {
    3 + 1 + 1 + 3 * n_objects + 3
}

/// Dimension of the fixed skill-level observation, see [`skill_observation`].
pub const SKILL_OBS_DIM: usize = 12;
/// Offset of the target slot inside a skill observation.
pub const SKILL_TARGET_SLOT: usize = 9;

/// Scenario-independent observation consumed by goal-conditioned skills:
/// `ee (3) | gripper closed (1) | holding (1) | obstacle - ee (3) |
/// obstacle half-extent (1) | target - ee (3)`. Without an obstacle its slots are zero.
pub fn skill_observation(
    ee: Pose,
    gripper: GripperState,
    holding: bool,
    obstacle: Option<(Pose, f64)>,
    target: Pose,
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(SKILL_OBS_DIM);
    obs.extend(ee.to_array());
    obs.push(gripper_flag(gripper));
    obs.push(if holding { 1.0 } else { 0.0 });
    match obstacle {
        Some((center, half)) => {
            obs.extend(center.sub(ee).to_array());
            obs.push(half);
        }
        None => obs.extend([0.0; 4]),
    }
    obs.extend(target.sub(ee).to_array());
    obs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pick_place() -> ScenarioSpec {
        let mut s = scenario::builtin("pick_place").unwrap();
        s.perturbations.clear();
        s
    }

    fn cube_pose(env: &Env) -> Pose {
        env.state().object("red_cube").unwrap().pose
    }

    fn drive_to(env: &mut Env, target: Pose) {
        for _ in 0..40 {
            let d = target.sub(env.state().robot.ee_pose);
            if d.norm() < 1e-12 {
                return;
            }
            env.step(Action::new(d.to_array(), Grip::Hold)).unwrap();
        }
    }

    #[test]
    fn construction_uses_spec_poses() {
        let spec = pick_place();
        let env = Env::new(spec.clone(), 7).unwrap();
        assert_eq!(env.state().step_count, 0);
        for (o, s) in env.state().objects.iter().zip(&spec.objects) {
            assert_eq!(o.pose, s.pose);
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut spec = pick_place();
        spec.objects[1].id = "red_cube".into();
        assert!(matches!(Env::new(spec, 0), Err(EnvError::InvalidScenario(_))));
    }

    #[test]
    fn perturbation_referencing_missing_object_rejected() {
        let mut spec = pick_place();
        spec.perturbations.push(Perturbation {
            at_step: 1,
            object_id: "ghost".into(),
            new_pose: Pose::new(0.5, 0.0, 0.02),
        });
        assert!(matches!(Env::new(spec, 0), Err(EnvError::InvalidScenario(_))));
    }

    #[test]
    fn same_seed_same_initial_observation() {
        let a = Env::new(pick_place(), 11).unwrap().observation();
        let b = Env::new(pick_place(), 11).unwrap().observation();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_action_only_advances_the_clock() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let before = env.state().robot.ee_pose;
        env.step(Action::IDLE).unwrap();
        assert_eq!(env.state().robot.ee_pose, before);
        assert_eq!(env.state().step_count, 1);
    }

    #[test]
    fn reset_restores_initial_state() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let initial = env.reset();
        for i in 0..40 {
            let a = Action::new([0.03 * (i as f64).sin(), 0.02, -0.01], Grip::Hold);
            if env.step(a).unwrap().done {
                break;
            }
        }
        assert_eq!(env.reset(), initial);
        assert_eq!(env.reset(), initial);
        assert_eq!(env.state().step_count, 0);
    }

    #[test]
    fn reset_undoes_perturbation() {
        let mut spec = pick_place();
        spec.perturbations.push(Perturbation {
            at_step: 0,
            object_id: "red_cube".into(),
            new_pose: Pose::new(0.3, -0.3, 0.02),
        });
        let fresh = Env::new(spec.clone(), 3).unwrap();
        let mut env = Env::new(spec, 3).unwrap();
        let out = env.step(Action::IDLE).unwrap();
        assert_eq!(out.info.fired_perturbations, vec!["red_cube".to_string()]);
        assert_eq!(cube_pose(&env), Pose::new(0.3, -0.3, 0.02));
        env.reset();
        assert_eq!(env.state(), fresh.state());
        assert_eq!(env.observation(), fresh.observation());
    }

    #[test]
    fn step_clamps_delta() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let start = env.state().robot.ee_pose;
        env.step(Action::new([1.0, -1.0, f64::NAN], Grip::Hold)).unwrap();
        let moved = env.state().robot.ee_pose.sub(start).to_array();
        for (m, e) in moved.iter().zip([MAX_STEP, -MAX_STEP, 0.0]) {
            assert!((m - e).abs() < 1e-15);
        }
    }

    #[test]
    fn grasp_attaches_and_satisfies_holding() {
        let mut spec = pick_place();
        let cube = spec.objects[0].pose;
        spec.ee_start = cube;
        spec.goal = GoalPredicate::Holding { object: "red_cube".into() };
        let mut env = Env::new(spec, 0).unwrap();
        let out = env.step(Action::new([0.0; 3], Grip::Close)).unwrap();
        assert_eq!(env.state().robot.held.as_deref(), Some("red_cube"));
        assert_eq!(out.info.grasped.as_deref(), Some("red_cube"));
        assert!(out.info.goal_satisfied && out.done);
        assert!(env.check_goal());
    }

    #[test]
    fn close_out_of_reach_grasps_nothing() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        env.step(Action::new([0.0; 3], Grip::Close)).unwrap();
        assert_eq!(env.state().robot.gripper, GripperState::Closed);
        assert!(env.state().robot.held.is_none());
    }

    #[test]
    fn held_object_tracks_end_effector_and_drops_to_surface() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let cube = cube_pose(&env);
        drive_to(&mut env, cube);
        env.step(Action::new([0.0; 3], Grip::Close)).unwrap();
        env.step(Action::new([0.02, 0.04, 0.05], Grip::Hold)).unwrap();
        let ee = env.state().robot.ee_pose;
        assert_eq!(cube_pose(&env), ee.add(GRASP_OFFSET));
        let out = env.step(Action::new([0.0; 3], Grip::Open)).unwrap();
        assert_eq!(out.info.released.as_deref(), Some("red_cube"));
        let p = cube_pose(&env);
        assert_eq!((p.x, p.y), (ee.x, ee.y));
        assert_eq!(p.z, 0.02);
    }

    #[test]
    fn place_on_platform_completes_goal() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let c = cube_pose(&env);
        drive_to(&mut env, c);
        env.step(Action::new([0.0; 3], Grip::Close)).unwrap();
        let top = env.state().object("blue_platform").unwrap().top_center();
        drive_to(&mut env, top);
        let out = env.step(Action::new([0.0; 3], Grip::Open)).unwrap();
        assert!(out.done && out.info.goal_satisfied);
        let cube = cube_pose(&env);
        assert!((cube.z - (top.z + 0.02)).abs() < 1e-12);
    }

    #[test]
    fn object_on_tolerance() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let top = env.state().object("blue_platform").unwrap().top_center();
        env.state.object_mut("red_cube").unwrap().pose = Pose::new(top.x, top.y, top.z + 0.02);
        assert!(env.state().object_on("red_cube", "blue_platform", 0.02));
        assert!(env.check_goal());
        env.state.object_mut("red_cube").unwrap().pose = Pose::new(top.x + 0.05, top.y, top.z + 0.02);
        assert!(!env.state().object_on("red_cube", "blue_platform", 0.02));
    }

    #[test]
    fn sorted_goal_over_every_assignment() {
        let spec = scenario::builtin("sort_3").unwrap();
        let mut env = Env::new(spec.clone(), 0).unwrap();
        assert!(!env.check_goal());
        let GoalPredicate::Sorted { assignment, .. } = &spec.goal else { unreachable!() };
        for cube in spec.objects.iter().filter(|o| o.graspable) {
            let platform = env.state().object(&assignment[&cube.color]).unwrap().clone();
            let rest = Pose::new(platform.pose.x, platform.pose.y, platform.top_z() + cube.half_extent);
            env.state.object_mut(&cube.id).unwrap().pose = rest;
        }
        assert!(env.check_goal());
        // Swap two cubes: enumerate the distances and expect a mismatch.
        let r = env.state().object("red_cube").unwrap().pose;
        let g = env.state().object("green_cube").unwrap().pose;
        env.state.object_mut("red_cube").unwrap().pose = g;
        env.state.object_mut("green_cube").unwrap().pose = r;
        assert!(!env.check_goal());
    }

    #[test]
    fn shaped_reward_prefers_progress() {
        let spec = pick_place();
        let mut toward = Env::new(spec.clone(), 0).unwrap();
        let mut away = Env::new(spec, 0).unwrap();
        let dir = cube_pose(&toward).sub(toward.state().robot.ee_pose);
        let unit = dir.to_array().map(|c| c / dir.norm() * 0.03);
        let r_toward = toward.step(Action::new(unit, Grip::Hold)).unwrap();
        let r_away = away.step(Action::new(unit.map(|c| -c), Grip::Hold)).unwrap();
        assert!(!r_toward.info.collision && !r_away.info.collision);
        assert!(r_toward.reward > r_away.reward);
        // Both equal -w_d * delta_dist - w_t.
        let expected = 0.03 - 0.01;
        assert!((r_toward.reward - expected).abs() < 1e-12);
    }

    #[test]
    fn obstacle_blocks_and_penalizes_once() {
        let spec = scenario::builtin("obstacle_course").unwrap();
        let wall = spec.object("wall").unwrap().clone();
        let mut s = spec.clone();
        s.perturbations.clear();
        s.ee_start = Pose::new(wall.pose.x, wall.pose.y - wall.half_extent - EE_RADIUS - 0.01, 0.05);
        let mut env = Env::new(s, 0).unwrap();
        let out = env.step(Action::new([0.0, 0.05, 0.0], Grip::Hold)).unwrap();
        assert!(out.info.collision);
        assert_eq!(env.state().robot.ee_pose.y, wall.pose.y - wall.half_extent - EE_RADIUS - 0.01);
        assert!((out.reward - (-0.01 - 1.0)).abs() < 1e-12);
        // The unblocked component still applies.
        let out = env.step(Action::new([0.02, 0.05, 0.0], Grip::Hold)).unwrap();
        assert!(out.info.collision);
        assert!((env.state().robot.ee_pose.x - (wall.pose.x + 0.02)).abs() < 1e-12);
    }

    #[test]
    fn episode_ends_at_step_limit() {
        let mut spec = pick_place();
        spec.max_steps = 3;
        let mut env = Env::new(spec, 0).unwrap();
        assert!(!env.step(Action::IDLE).unwrap().done);
        assert!(!env.step(Action::IDLE).unwrap().done);
        assert!(env.step(Action::IDLE).unwrap().done);
        assert_eq!(env.step(Action::IDLE), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn summary_reflects_grasp_and_round_trips() {
        let mut env = Env::new(pick_place(), 0).unwrap();
        let s = env.world_summary();
        assert_eq!(s.objects.len(), 2);
        assert_eq!(s.objects[0].id, "red_cube");
        assert_eq!(s.objects[0].color, Color::Red);
        assert_eq!(s.objects[1].shape, Shape::Platform);
        assert!(!s.objects[0].held);
        let c = cube_pose(&env);
        drive_to(&mut env, c);
        env.step(Action::new([0.0; 3], Grip::Close)).unwrap();
        let s = env.world_summary();
        assert!(s.objects[0].held);
        assert_eq!(WorldSummary::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn normalized_action_mapping() {
        let a = Action::from_normalized(&[2.0, -0.5, 0.0, 0.9]);
        assert_eq!(a.delta, [MAX_STEP, -0.5 * MAX_STEP, 0.0]);
        assert_eq!(a.grip, Grip::Close);
        assert_eq!(Action::from_normalized(&[0.0, 0.0, 0.0, -0.9]).grip, Grip::Open);
        assert_eq!(Action::from_normalized(&[0.0, 0.0, 0.0, 0.1]).grip, Grip::Hold);
    }
}
