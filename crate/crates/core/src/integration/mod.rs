//! The plan / execute / monitor / replan loop that connects a task planner to
//! goal-conditioned skills.
//!
//! Execution plans once, then drives each subtask with its skill until the
//! subtask's success predicate holds. After every simulator step the monitor
//! compares the scene with the state the plan was made against; a moved
//! plan-referenced object, a lost grasp or an exhausted step budget triggers a
//! replan, after which execution restarts at the first subtask of the new plan
//! (subtasks already satisfied complete without motion).

pub mod skills;
pub mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Env, EnvError, Grip, Pose, WorldState, WorldSummary};
use crate::planner::{FailureCause, FailureInfo, PlanError, Planner, ReplanOutcome, Subtask, Target, TaskPlan};
use crate::rl::{RlError, SkillId};

pub use skills::{build_skill_observation, LearnedSkills, OracleSkills, ResolvedSubtask, SkillLibrary, TargetPoint};
pub use trace::{validate_trace, TraceError, TraceRecord};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("planner failure: {0}")]
    Planner(#[from] PlanError),
    #[error("no trained skill for `{0}`")]
    SkillMissing(SkillId),
    #[error("object `{0}` is not in the scene")]
    MissingObject(String),
    #[error(transparent)]
    Skill(#[from] RlError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionConfig {
    pub max_steps_per_subtask: u32,
    pub max_replans: u32,
    /// Pose deviation that counts as a moved object, and the reach tolerance of motions.
    pub monitor_pose_tol: f64,
    /// Consecutive colliding steps reported as one collision burst.
    pub collision_burst: u32,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self { max_steps_per_subtask: 100, max_replans: 3, monitor_pose_tol: 0.02, collision_burst: 3 }
    }
}

impl ExecutionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps_per_subtask == 0 || self.collision_burst == 0 {
            return Err("step budgets must be positive".into());
        }
        if !(self.monitor_pose_tol.is_finite() && self.monitor_pose_tol > 0.0) {
            return Err("monitor_pose_tol must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MonitorEvent {
    ObjectMoved { id: String, displacement: f64 },
    GraspLost { id: String },
    SubtaskTimeout { index: usize },
    CollisionBurst { count: u32 },
}

impl MonitorEvent {
    /// The failure this event reports to the planner; `None` for log-only events.
    pub fn failure_cause(&self) -> Option<FailureCause> {
        match self {
            MonitorEvent::ObjectMoved { id, displacement } => {
                Some(FailureCause::ObjectMoved { id: id.clone(), displacement: *displacement })
            }
            MonitorEvent::GraspLost { id } => Some(FailureCause::GraspLost { id: id.clone() }),
            MonitorEvent::SubtaskTimeout { .. } => Some(FailureCause::SubtaskTimeout),
            MonitorEvent::CollisionBurst { .. } => None,
        }
    }

    fn priority(&self) -> u8 {
        match self {
            MonitorEvent::GraspLost { .. } => 0,
            MonitorEvent::ObjectMoved { .. } => 1,
            MonitorEvent::SubtaskTimeout { .. } => 2,
            MonitorEvent::CollisionBurst { .. } => 3,
        }
    }
}

/// What the monitor compares against: poses of plan-referenced objects at
/// plan time (advanced by the robot's own carrying) and the object the plan
/// has grasped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tracked {
    pub poses: BTreeMap<String, Pose>,
    pub expected_held: Option<String>,
}

impl Tracked {
    pub fn from_plan(plan: &TaskPlan, world: &WorldSummary, expected_held: Option<String>) -> Self {
        let poses = plan
            .subtasks
            .iter()
            .flat_map(|s| s.refs())
            .filter_map(|r| r.resolve(world).ok())
            .map(|o| (o.id.clone(), o.pose))
            .collect();
        Self { poses, expected_held }
    }
}

/// Counters of the active subtask consulted by the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SubtaskProgress {
    pub index: usize,
    pub steps: u32,
    pub consecutive_collisions: u32,
}

/// Events for the current state. Objects in the gripper are exempt from
/// motion checks; untracked objects are ignored.
pub fn monitor(
    state: &WorldState,
    tracked: &Tracked,
    progress: &SubtaskProgress,
    cfg: &ExecutionConfig,
) -> Vec<MonitorEvent> {
    let mut events = Vec::new();
    let held = state.robot.held.as_deref();
    if let Some(id) = &tracked.expected_held {
        if held != Some(id.as_str()) {
            events.push(MonitorEvent::GraspLost { id: id.clone() });
        }
    }
    for (id, pose) in &tracked.poses {
        if held == Some(id.as_str()) {
            continue;
        }
        if let Some(o) = state.object(id) {
            let displacement = o.pose.dist(*pose);
            if displacement > cfg.monitor_pose_tol {
                events.push(MonitorEvent::ObjectMoved { id: id.clone(), displacement });
            }
        }
    }
    if progress.steps >= cfg.max_steps_per_subtask {
        events.push(MonitorEvent::SubtaskTimeout { index: progress.index });
    }
    if progress.consecutive_collisions > 0 && progress.consecutive_collisions.is_multiple_of(cfg.collision_burst) {
        events.push(MonitorEvent::CollisionBurst { count: progress.consecutive_collisions });
    }
    events
}

/// Binds the references of `subtask` to object ids in `world`.
pub fn resolve_subtask(subtask: &Subtask, world: &WorldSummary) -> Result<ResolvedSubtask, PlanError> {
    let point = |t: &Target| -> Result<TargetPoint, PlanError> {
        match t.object_ref() {
            Some(r) => Ok(TargetPoint::Object(r.resolve(world)?.id.clone())),
            None => Ok(TargetPoint::Fixed(t.resolve_point(world)?)),
        }
    };
    Ok(match subtask {
        Subtask::MoveTo { target } => ResolvedSubtask::MoveTo { target: point(target)? },
        Subtask::Grasp { object } => ResolvedSubtask::Grasp { object: object.resolve(world)?.id.clone() },
        Subtask::Release => ResolvedSubtask::Release,
        Subtask::PlaceOn { target } => ResolvedSubtask::PlaceOn { platform: target.resolve(world)?.id.clone() },
        Subtask::AvoidRegion { obstacle, then } => {
            ResolvedSubtask::AvoidRegion { obstacle: obstacle.resolve(world)?.id.clone(), then: point(then)? }
        }
    })
}

/// Tolerance for placement checks: the scenario goal's, else the monitor tolerance.
fn placement_tol(env: &Env, cfg: &ExecutionConfig) -> f64 {
    env.scenario().goal.tolerance().unwrap_or(cfg.monitor_pose_tol)
}

/// Success predicate of a subtask. `carried` is the object the plan expects
/// in the gripper when the subtask started; `collisions` counts colliding
/// steps taken in the subtask.
pub fn subtask_success(
    subtask: &ResolvedSubtask,
    env: &Env,
    carried: Option<&str>,
    collisions: u32,
    cfg: &ExecutionConfig,
) -> bool {
    let state = env.state();
    let ee = state.robot.ee_pose;
    let near = |t: &TargetPoint| skills::target_position(t, env).is_some_and(|p| ee.dist(p) <= cfg.monitor_pose_tol);
    match subtask {
        ResolvedSubtask::MoveTo { target } => near(target),
        ResolvedSubtask::Grasp { object } => state.robot.held.as_deref() == Some(object.as_str()),
        ResolvedSubtask::Release => state.robot.held.is_none(),
        ResolvedSubtask::PlaceOn { platform } => {
            carried.is_some_and(|c| state.object_on(c, platform, placement_tol(env, cfg)))
        }
        ResolvedSubtask::AvoidRegion { then, .. } => collisions == 0 && near(then),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskOutcome {
    /// 0 for the initial plan, incremented on every replan.
    pub plan_version: u32,
    pub index: usize,
    pub subtask: String,
    pub steps: u32,
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// `Succeeded` when the scenario goal holds or the plan ran to completion.
    pub status: ExecutionStatus,
    pub goal_satisfied: bool,
    pub total_steps: u32,
    /// Simulated time, `total_steps * sim_dt`.
    pub wall_seconds: f64,
    pub replans_used: u32,
    pub cumulative_reward: f64,
    pub subtask_outcomes: Vec<SubtaskOutcome>,
    pub events: Vec<(u32, MonitorEvent)>,
    pub failure_reason: Option<String>,
    pub final_plan: TaskPlan,
    pub trace: Vec<TraceRecord>,
}

/// Mutable bookkeeping of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionState {
    pub plan: TaskPlan,
    pub cursor: usize,
    pub replans_used: u32,
    pub subtask_steps: Vec<u32>,
    pub status: ExecutionStatus,
}

fn check_skills(plan: &TaskPlan, world: &WorldSummary, skills: &dyn SkillLibrary) -> Result<(), ExecError> {
    for st in &plan.subtasks {
        if let Some(k) = resolve_subtask(st, world)?.skill() {
            if !skills.has_skill(k) {
                return Err(ExecError::SkillMissing(k));
            }
        }
    }
    Ok(())
}

struct Episode<'a> {
    env: &'a mut Env,
    cfg: &'a ExecutionConfig,
    state: ExecutionState,
    tracked: Tracked,
    plan_version: u32,
    reward: f64,
    outcomes: Vec<SubtaskOutcome>,
    events: Vec<(u32, MonitorEvent)>,
    trace: Vec<TraceRecord>,
}

enum SubtaskEnd {
    Done,
    Replan(FailureCause),
    Goal,
    StepLimit,
}

impl Episode<'_> {
    fn step_count(&self) -> u32 {
        self.env.state().step_count
    }

    fn finish(mut self, status: ExecutionStatus, reason: Option<String>) -> EpisodeResult {
        let goal_satisfied = self.env.check_goal();
        let total_steps = self.step_count();
        self.state.status = status;
        self.trace.push(TraceRecord::Terminal { step: total_steps, status, goal_satisfied, reason: reason.clone() });
        EpisodeResult {
            status,
            goal_satisfied,
            total_steps,
            wall_seconds: f64::from(total_steps) * self.env.sim_dt(),
            replans_used: self.state.replans_used,
            cumulative_reward: self.reward,
            subtask_outcomes: self.outcomes,
            events: self.events,
            failure_reason: reason,
            final_plan: self.state.plan,
            trace: self.trace,
        }
    }

    fn run_subtask(&mut self, skills: &mut dyn SkillLibrary) -> Result<SubtaskEnd, ExecError> {
        let index = self.state.cursor;
        let subtask = self.state.plan.subtasks[index].clone();
        let resolved = resolve_subtask(&subtask, &self.env.world_summary())?;
        let skill = resolved.skill();
        let carried = self.env.state().robot.held.clone().or_else(|| self.tracked.expected_held.clone());
        self.trace.push(TraceRecord::Subtask {
            step: self.step_count(),
            index,
            subtask: subtask.to_string(),
            skill: skill.map(|k| k.as_str().to_string()),
        });
        let mut progress = SubtaskProgress { index, ..SubtaskProgress::default() };
        let mut collisions = 0;
        let end = loop {
            if subtask_success(&resolved, self.env, carried.as_deref(), collisions, self.cfg) {
                break SubtaskEnd::Done;
            }
            let obs = build_skill_observation(&resolved, self.env)?;
            let action = match skill {
                Some(k) => skills.act(k, &obs)?,
                None => Action::new([0.0; 3], Grip::Open),
            };
            let out = self.env.step(action)?;
            self.reward += out.reward;
            progress.steps += 1;
            if out.info.collision {
                collisions += 1;
                progress.consecutive_collisions += 1;
            } else {
                progress.consecutive_collisions = 0;
            }
            self.follow_own_motion(&out.info);
            let events = monitor(self.env.state(), &self.tracked, &progress, self.cfg);
            let step = self.step_count();
            self.trace.push(TraceRecord::Monitor { step, index, action, reward: out.reward, events: events.clone() });
            let cause =
                events.iter().filter_map(|e| e.failure_cause().map(|c| (e.priority(), c))).min_by_key(|(p, _)| *p);
            self.events.extend(events.into_iter().map(|e| (step, e)));
            if self.env.check_goal() {
                break SubtaskEnd::Goal;
            }
            if self.env.is_done() {
                break SubtaskEnd::StepLimit;
            }
            if let Some((_, cause)) = cause {
                break SubtaskEnd::Replan(cause);
            }
        };
        self.state.subtask_steps[index] += progress.steps;
        let succeeded = matches!(end, SubtaskEnd::Done | SubtaskEnd::Goal)
            && subtask_success(&resolved, self.env, carried.as_deref(), collisions, self.cfg);
        if succeeded {
            match &resolved {
                ResolvedSubtask::Grasp { object } => self.tracked.expected_held = Some(object.clone()),
                ResolvedSubtask::Release | ResolvedSubtask::PlaceOn { .. } => self.tracked.expected_held = None,
                _ => {}
            }
        }
        self.outcomes.push(SubtaskOutcome {
            plan_version: self.plan_version,
            index,
            subtask: subtask.to_string(),
            steps: progress.steps,
            succeeded,
        });
        Ok(end)
    }

    /// Moves the reference poses of objects the robot itself carried or set down.
    fn follow_own_motion(&mut self, info: &crate::env::StepInfo) {
        if info.released.is_some() && info.released == self.tracked.expected_held {
            self.tracked.expected_held = None;
        }
        let state = self.env.state();
        let moved = state.robot.held.iter().chain(info.grasped.iter()).chain(info.released.iter());
        for id in moved {
            if info.fired_perturbations.contains(id) {
                continue;
            }
            if let (Some(slot), Some(o)) = (self.tracked.poses.get_mut(id), state.object(id)) {
                *slot = o.pose;
            }
        }
    }
}

/// Runs `instruction` to completion on a freshly reset `env`.
///
/// Planning errors before the first step and missing skills are returned as
/// errors; a planner failure during a replan ends the episode as failed.
pub fn execute_task(
    instruction: &str,
    env: &mut Env,
    planner: &mut dyn Planner,
    skills: &mut dyn SkillLibrary,
    cfg: &ExecutionConfig,
) -> Result<EpisodeResult, ExecError> {
    let world = env.world_summary();
    let plan = planner.plan(instruction, &world)?;
    check_skills(&plan, &world, skills)?;
    let tracked = Tracked::from_plan(&plan, &world, world.robot.held.clone());
    let trace = vec![TraceRecord::Plan { step: env.state().step_count, subtasks: plan.subtasks.clone() }];
    let n = plan.len();
    let mut ep = Episode {
        env,
        cfg,
        state: ExecutionState {
            plan,
            cursor: 0,
            replans_used: 0,
            subtask_steps: vec![0; n],
            status: ExecutionStatus::Running,
        },
        tracked,
        plan_version: 0,
        reward: 0.0,
        outcomes: Vec::new(),
        events: Vec::new(),
        trace,
    };
    loop {
        if ep.env.check_goal() {
            return Ok(ep.finish(ExecutionStatus::Succeeded, None));
        }
        if ep.state.cursor >= ep.state.plan.len() {
            return Ok(ep.finish(ExecutionStatus::Succeeded, None));
        }
        match ep.run_subtask(skills)? {
            SubtaskEnd::Done => ep.state.cursor += 1,
            SubtaskEnd::Goal => return Ok(ep.finish(ExecutionStatus::Succeeded, None)),
            SubtaskEnd::StepLimit => {
                return Ok(ep.finish(ExecutionStatus::Failed, Some("episode step limit reached".into())));
            }
            SubtaskEnd::Replan(cause) => {
                if ep.state.replans_used >= cfg.max_replans {
                    let reason = format!("replan budget of {} exhausted ({cause})", cfg.max_replans);
                    return Ok(ep.finish(ExecutionStatus::Failed, Some(reason)));
                }
                ep.state.replans_used += 1;
                let world = ep.env.world_summary();
                let failure =
                    FailureInfo { cursor: ep.state.cursor, cause: cause.clone(), goal_satisfied: ep.env.check_goal() };
                let outcome = match planner.replan(instruction, &ep.state.plan, &world, &failure) {
                    Ok(o) => o,
                    Err(e) => return Ok(ep.finish(ExecutionStatus::Failed, Some(format!("replanning failed: {e}")))),
                };
                let new_plan = match outcome {
                    ReplanOutcome::Complete => return Ok(ep.finish(ExecutionStatus::Succeeded, None)),
                    ReplanOutcome::Plan(p) => p,
                };
                check_skills(&new_plan, &world, skills)?;
                ep.trace.push(TraceRecord::Replan {
                    step: ep.step_count(),
                    cause: cause.to_string(),
                    subtasks: new_plan.subtasks.clone(),
                });
                ep.tracked = Tracked::from_plan(&new_plan, &world, world.robot.held.clone());
                ep.plan_version += 1;
                ep.state.subtask_steps = vec![0; new_plan.len()];
                ep.state.plan = new_plan;
                ep.state.cursor = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::env::{scenario, GoalPredicate, ObjectSpec, Perturbation, ScenarioSpec};
    use crate::planner::{corpus::CORPUS, ObjectRef, PlanSource, RuleBasedPlanner};

    fn spec(name: &str) -> ScenarioSpec {
        scenario::builtin(name).unwrap()
    }

    fn quiet(name: &str) -> ScenarioSpec {
        let mut s = spec(name);
        s.perturbations.clear();
        s
    }

    fn run(s: ScenarioSpec, instruction: &str, cfg: &ExecutionConfig) -> EpisodeResult {
        let mut env = Env::new(s, 0).unwrap();
        execute_task(instruction, &mut env, &mut RuleBasedPlanner, &mut OracleSkills, cfg).unwrap()
    }

    const HEADLINE: &str = "Pick up the red cube and place it on the blue platform";

    #[test]
    fn headline_without_perturbation() {
        let r = run(quiet("pick_place"), HEADLINE, &ExecutionConfig::default());
        assert_eq!(r.status, ExecutionStatus::Succeeded);
        assert!(r.goal_satisfied);
        assert_eq!(r.replans_used, 0);
        assert!(r.events.is_empty(), "{:?}", r.events);
        assert_eq!(r.wall_seconds, f64::from(r.total_steps) * 0.1);
        validate_trace(&r.trace).unwrap();
    }

    #[test]
    fn displaced_cube_triggers_one_replan() {
        let s = spec("pick_place");
        let p = &s.perturbations[0];
        let moved = s.object(&p.object_id).unwrap().pose.dist(p.new_pose);
        assert!((moved - 0.15).abs() < 1e-12);
        let r = run(s, HEADLINE, &ExecutionConfig::default());
        assert_eq!(r.status, ExecutionStatus::Succeeded);
        assert!(r.goal_satisfied);
        assert_eq!(r.replans_used, 1);
        validate_trace(&r.trace).unwrap();
        assert_eq!(r.trace.iter().filter(|t| matches!(t, TraceRecord::Replan { .. })).count(), 1);
    }

    #[test]
    fn repeated_perturbations_exhaust_replans() {
        let mut s = quiet("pick_place");
        s.max_steps = 400;
        for k in 0..30 {
            let y = if k % 2 == 0 { -0.05 } else { -0.3 };
            s.perturbations.push(Perturbation {
                at_step: 3 + 10 * k,
                object_id: "red_cube".into(),
                new_pose: Pose::new(0.5, y, 0.02),
            });
        }
        let r = run(s, HEADLINE, &ExecutionConfig::default());
        assert_eq!(r.status, ExecutionStatus::Failed);
        assert_eq!(r.replans_used, 3);
        assert!(r.failure_reason.unwrap().contains("exhausted"));
        validate_trace(&r.trace).unwrap();
    }

    #[test]
    fn vacuous_move_takes_no_steps() {
        let mut s = quiet("pick_place");
        s.ee_start = Pose::new(0.5, -0.2, 0.025);
        let r = run(s, "move to the red cube", &ExecutionConfig::default());
        assert_eq!(r.status, ExecutionStatus::Succeeded);
        assert_eq!(r.total_steps, 0);
        assert_eq!(r.subtask_outcomes.len(), 1);
        assert!(r.subtask_outcomes[0].succeeded);
        validate_trace(&r.trace).unwrap();
    }

    #[test]
    fn corpus_runs_to_completion_with_oracle_skills() {
        for e in CORPUS {
            let r = run(quiet(e.scenario), e.instruction, &ExecutionConfig::default());
            assert_eq!(r.status, ExecutionStatus::Succeeded, "{}: {:?}", e.instruction, r.failure_reason);
            assert_eq!(r.goal_satisfied, e.completes_goal, "{}", e.instruction);
            assert!(r.total_steps <= spec(e.scenario).max_steps);
            validate_trace(&r.trace).unwrap();
        }
    }

    #[test]
    fn builtin_perturbations_are_recovered() {
        for name in scenario::BUILTIN_NAMES {
            let s = spec(name);
            let instruction = s.instruction.clone().unwrap();
            let r = run(s, &instruction, &ExecutionConfig::default());
            assert!(r.goal_satisfied, "{name}: {:?}", r.failure_reason);
            assert!(r.replans_used <= 1, "{name}");
            validate_trace(&r.trace).unwrap();
        }
    }

    #[test]
    fn obstacle_route_is_collision_free() {
        let s = quiet("obstacle_course");
        let instruction = s.instruction.clone().unwrap();
        let r = run(s, &instruction, &ExecutionConfig::default());
        assert!(r.goal_satisfied);
        let collided = r.trace.iter().any(|t| matches!(t, TraceRecord::Monitor { events, .. } if !events.is_empty()));
        assert!(!collided);
    }

    #[test]
    fn missing_skill_is_reported_before_stepping() {
        let mut env = Env::new(quiet("pick_place"), 0).unwrap();
        let mut lib = LearnedSkills::new();
        let r = execute_task(HEADLINE, &mut env, &mut RuleBasedPlanner, &mut lib, &ExecutionConfig::default());
        assert!(matches!(r, Err(ExecError::SkillMissing(SkillId::Reach))));
        assert_eq!(env.state().step_count, 0);
    }

    #[test]
    fn planner_errors_propagate() {
        let mut env = Env::new(quiet("pick_place"), 0).unwrap();
        let r =
            execute_task("fly away", &mut env, &mut RuleBasedPlanner, &mut OracleSkills, &ExecutionConfig::default());
        assert!(matches!(r, Err(ExecError::Planner(PlanError::Parse(_)))));
    }

    fn tracked_cube(env: &Env) -> (Tracked, SubtaskProgress) {
        let w = env.world_summary();
        let plan = RuleBasedPlanner.plan(HEADLINE, &w).unwrap();
        (Tracked::from_plan(&plan, &w, None), SubtaskProgress::default())
    }

    #[test]
    fn monitor_is_quiet_on_a_static_scene() {
        let mut env = Env::new(quiet("pick_place"), 0).unwrap();
        let (t, p) = tracked_cube(&env);
        for _ in 0..10 {
            env.step(Action::new([0.0; 3], Grip::Hold)).unwrap();
            assert!(monitor(env.state(), &t, &p, &ExecutionConfig::default()).is_empty());
        }
    }

    #[test]
    fn monitor_flags_moved_referenced_object() {
        let mut s = quiet("pick_place");
        s.perturbations.push(Perturbation {
            at_step: 0,
            object_id: "red_cube".into(),
            new_pose: Pose::new(0.5, 0.0, 0.02),
        });
        let mut env = Env::new(s, 0).unwrap();
        let (t, p) = tracked_cube(&env);
        env.step(Action::new([0.0; 3], Grip::Hold)).unwrap();
        let ev = monitor(env.state(), &t, &p, &ExecutionConfig::default());
        assert_eq!(ev.len(), 1);
        let MonitorEvent::ObjectMoved { id, displacement } = &ev[0] else { panic!("{ev:?}") };
        assert_eq!(id, "red_cube");
        assert!((displacement - 0.2).abs() < 1e-12);
    }

    #[test]
    fn monitor_ignores_untracked_obstacle() {
        let mut s = quiet("obstacle_course");
        s.perturbations.push(Perturbation {
            at_step: 0,
            object_id: "wall".into(),
            new_pose: Pose::new(0.5, 0.1, 0.06),
        });
        let mut env = Env::new(s, 0).unwrap();
        let w = env.world_summary();
        let plan = RuleBasedPlanner.plan("pick up the red cube and place it on the green platform", &w).unwrap();
        let t = Tracked::from_plan(&plan, &w, None);
        assert!(!t.poses.contains_key("wall"));
        env.step(Action::new([0.0; 3], Grip::Hold)).unwrap();
        assert!(monitor(env.state(), &t, &SubtaskProgress::default(), &ExecutionConfig::default()).is_empty());
    }

    #[test]
    fn monitor_reports_timeout_and_bursts() {
        let env = Env::new(quiet("pick_place"), 0).unwrap();
        let cfg = ExecutionConfig::default();
        let p = SubtaskProgress { index: 2, steps: cfg.max_steps_per_subtask, consecutive_collisions: 3 };
        let ev = monitor(env.state(), &Tracked::default(), &p, &cfg);
        assert_eq!(ev, vec![MonitorEvent::SubtaskTimeout { index: 2 }, MonitorEvent::CollisionBurst { count: 3 }]);
        assert!(ev[1].failure_cause().is_none());
    }

    #[test]
    fn subtask_predicates() {
        let cfg = ExecutionConfig::default();
        let mut s = quiet("pick_place");
        s.held_at_start = Some("red_cube".into());
        let env = Env::new(s, 0).unwrap();
        assert!(subtask_success(&ResolvedSubtask::Grasp { object: "red_cube".into() }, &env, None, 0, &cfg));
        assert!(!subtask_success(&ResolvedSubtask::Release, &env, None, 0, &cfg));

        let mut s = quiet("pick_place");
        s.ee_start = Pose::new(0.5, -0.15, 0.02);
        let env = Env::new(s, 0).unwrap();
        let to_cube = ResolvedSubtask::MoveTo { target: TargetPoint::Object("red_cube".into()) };
        assert!(!subtask_success(&to_cube, &env, None, 0, &cfg));
        let avoid = ResolvedSubtask::AvoidRegion {
            obstacle: "red_cube".into(),
            then: TargetPoint::Fixed(Pose::new(0.5, -0.15, 0.02)),
        };
        assert!(subtask_success(&avoid, &env, None, 0, &cfg));
        assert!(!subtask_success(&avoid, &env, None, 1, &cfg));
    }

    #[test]
    fn place_on_agrees_with_goal_predicate() {
        let cfg = ExecutionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = quiet("pick_place");
        let platform = base.object("blue_platform").unwrap().pose;
        let mut agree_true = 0;
        for _ in 0..100 {
            let mut s = base.clone();
            let cube: &mut ObjectSpec = s.objects.iter_mut().find(|o| o.id == "red_cube").unwrap();
            cube.pose = Pose::new(
                platform.x + rng.random_range(-0.04..0.04),
                platform.y + rng.random_range(-0.04..0.04),
                0.04 + rng.random_range(-0.03..0.03),
            );
            let env = Env::new(s, 0).unwrap();
            let place = ResolvedSubtask::PlaceOn { platform: "blue_platform".into() };
            let a = subtask_success(&place, &env, Some("red_cube"), 0, &cfg);
            assert!(matches!(env.scenario().goal, GoalPredicate::ObjectOn { .. }));
            assert_eq!(a, env.check_goal());
            agree_true += usize::from(a);
        }
        assert!(agree_true > 10 && agree_true < 90, "{agree_true}");
    }

    #[test]
    fn place_on_plan_from_llm_executes() {
        use crate::planner::llm::{chat_response, FnTransport, LlmClient, LlmConfig, LlmPlanner};
        let reply = r#"[{"op":"move_to","target":{"name":"red_cube"}},{"op":"grasp","object":{"name":"red_cube"}},{"op":"place_on","target":{"color":"blue","shape":"platform"}}]"#;
        let t = FnTransport(move |_: &str| Ok(chat_response(reply)));
        let mut planner = LlmPlanner::new(LlmClient::with_transport(LlmConfig::default(), t));
        let mut env = Env::new(quiet("pick_place"), 0).unwrap();
        let r = execute_task(HEADLINE, &mut env, &mut planner, &mut OracleSkills, &ExecutionConfig::default()).unwrap();
        assert!(r.goal_satisfied);
        assert_eq!(r.final_plan.source, PlanSource::Llm);
        assert_eq!(planner.exchanges.len(), 1);
        validate_trace(&r.trace).unwrap();
    }

    #[test]
    fn resolve_binds_ids() {
        let w = Env::new(quiet("pick_place"), 0).unwrap().world_summary();
        let st = Subtask::move_to(ObjectRef::colored(crate::env::Color::Blue, crate::env::Shape::Platform));
        assert_eq!(
            resolve_subtask(&st, &w).unwrap(),
            ResolvedSubtask::MoveTo { target: TargetPoint::Object("blue_platform".into()) }
        );
        let home = Subtask::MoveTo { target: Target::home() };
        assert_eq!(resolve_subtask(&home, &w).unwrap(), ResolvedSubtask::MoveTo { target: TargetPoint::Fixed(w.home) });
    }
}
