//! Deterministic planning from parsed commands, and rule-based replanning.

use super::grammar::{parse_instruction, Command, ParsedCommandList};
use super::{
    instruction_hash, validate_subtasks, FailureInfo, ObjectRef, PlanError, PlanSource, Planner, ReplanOutcome,
    Subtask, Target, TaskPlan,
};
use crate::env::{Shape, WorldSummary};

/// Expands parsed commands into subtasks:
///
/// - `PickUp(x)` → `MoveTo(x), Grasp(x)`
/// - `Grasp(x)` → `Grasp(x)`
/// - `PlaceOn(y)` → `MoveTo(y), Release`
/// - `Put(x, y)` → `MoveTo(x), Grasp(x), MoveTo(y), Release`
/// - `MoveTo(t)` → `MoveTo(t)`
/// - `Sort(shape)` → a `Put` per graspable object of that shape, by object id,
///   onto the platform of its color
/// - `Avoid(o)` → `AvoidRegion(o, then t)` in front of the next `MoveTo(t)`
pub fn plan_rule_based(
    parsed: &ParsedCommandList,
    world: &WorldSummary,
    instruction: &str,
) -> Result<TaskPlan, PlanError> {
    let mut out: Vec<Subtask> = Vec::new();
    let mut pending_avoid: Option<ObjectRef> = None;
    let push_move = |out: &mut Vec<Subtask>, target: Target, avoid: &mut Option<ObjectRef>| {
        if let Some(obstacle) = avoid.take() {
            out.push(Subtask::AvoidRegion { obstacle, then: target.clone() });
        }
        out.push(Subtask::MoveTo { target });
    };

    for cmd in &parsed.commands {
        match cmd {
            Command::PickUp(x) => {
                x.resolve(world)?;
                push_move(&mut out, Target::Object(x.clone()), &mut pending_avoid);
                out.push(Subtask::grasp(x.clone()));
            }
            Command::Grasp(x) => {
                x.resolve(world)?;
                out.push(Subtask::grasp(x.clone()));
            }
            Command::PlaceOn(y) => {
                y.resolve(world)?;
                push_move(&mut out, Target::Object(y.clone()), &mut pending_avoid);
                out.push(Subtask::Release);
            }
            Command::Put { object, target } => {
                object.resolve(world)?;
                target.resolve(world)?;
                push_move(&mut out, Target::Object(object.clone()), &mut pending_avoid);
                out.push(Subtask::grasp(object.clone()));
                push_move(&mut out, Target::Object(target.clone()), &mut pending_avoid);
                out.push(Subtask::Release);
            }
            Command::MoveTo(t) => {
                t.resolve_point(world)?;
                push_move(&mut out, t.clone(), &mut pending_avoid);
            }
            Command::Sort(shape) => {
                let mut items: Vec<_> = world.objects.iter().filter(|o| o.graspable && o.shape == *shape).collect();
                if items.is_empty() {
                    return Err(PlanError::UnresolvableRef(format!("any {shape} to sort")));
                }
                items.sort_by(|a, b| a.id.cmp(&b.id));
                for o in items {
                    let platform = ObjectRef::colored(o.color, Shape::Platform).resolve(world)?;
                    let object = ObjectRef::describe(o, world);
                    let target = ObjectRef::describe(platform, world);
                    push_move(&mut out, Target::Object(object.clone()), &mut pending_avoid);
                    out.push(Subtask::grasp(object));
                    push_move(&mut out, Target::Object(target), &mut pending_avoid);
                    out.push(Subtask::Release);
                }
            }
            Command::Avoid(o) => {
                o.resolve(world)?;
                pending_avoid = Some(o.clone());
            }
        }
    }
    if pending_avoid.is_some() {
        return Err(PlanError::DanglingAvoid);
    }
    validate_subtasks(&out, world)?;
    Ok(TaskPlan { subtasks: out, source: PlanSource::RuleBased, instruction_hash: instruction_hash(instruction) })
}

fn is_motion(st: &Subtask) -> bool {
    matches!(st, Subtask::MoveTo { .. } | Subtask::AvoidRegion { .. })
}

/// Object the plan expects to be holding just before `index`, given what
/// the robot held when the plan started.
fn expected_held(subtasks: &[Subtask], index: usize, world: &WorldSummary) -> Option<ObjectRef> {
    let mut held = None;
    for st in &subtasks[..index] {
        match st {
            Subtask::Grasp { object } => held = Some(object.clone()),
            Subtask::Release | Subtask::PlaceOn { .. } => held = None,
            _ => {}
        }
    }
    held.filter(|r| r.resolve(world).is_ok())
}

/// Remaining subtasks after a failure at `failure.cursor`.
///
/// Execution resumes from the last motion at or before the failed subtask so
/// the approach is redone against the current world. If the object the plan
/// should be holding at that point is no longer in the gripper, it is
/// re-acquired first; if it is still held, a leading re-grasp is dropped.
pub fn replan_rule_based(
    prev: &TaskPlan,
    world: &WorldSummary,
    failure: &FailureInfo,
) -> Result<ReplanOutcome, PlanError> {
    if failure.goal_satisfied {
        return Ok(ReplanOutcome::Complete);
    }
    let subtasks = &prev.subtasks;
    let cursor = failure.cursor.min(subtasks.len());
    let mut start = cursor;
    while start > 0 && !subtasks.get(start).is_some_and(is_motion) {
        start -= 1;
    }
    if !subtasks.get(start).is_some_and(is_motion) {
        start = cursor;
    }
    // Never back up across a grasp that completed before the failure.
    if let Some(g) = subtasks[start..cursor].iter().rposition(|s| matches!(s, Subtask::Grasp { .. })) {
        start += g + 1;
    }

    let mut remaining: Vec<Subtask> = subtasks[start..].to_vec();
    let held_now = world.robot.held.as_deref();
    let should_hold = expected_held(subtasks, start, world);

    if let Some(r) = &should_hold {
        let id = r.resolve(world)?.id.as_str();
        if held_now != Some(id) {
            let mut fresh = vec![Subtask::move_to(r.clone()), Subtask::grasp(r.clone())];
            fresh.append(&mut remaining);
            remaining = fresh;
        }
    } else if let (Some(h), Some(gi)) = (held_now, remaining.iter().position(|s| matches!(s, Subtask::Grasp { .. }))) {
        let grasps_held = matches!(&remaining[gi], Subtask::Grasp { object } if object.resolve(world).map(|o| o.id.as_str()) == Ok(h));
        let released_before = remaining[..gi].iter().any(|s| matches!(s, Subtask::Release | Subtask::PlaceOn { .. }));
        if grasps_held && !released_before {
            remaining.remove(gi);
            if gi > 0
                && matches!(&remaining[gi - 1], Subtask::MoveTo { target: Target::Object(r) } if r.resolve(world).map(|o| o.id.as_str()) == Ok(h))
            {
                remaining.remove(gi - 1);
            }
        }
    }

    if remaining.is_empty() {
        // Everything was executed yet the goal does not hold; try the whole plan again.
        remaining = subtasks.clone();
    }
    validate_subtasks(&remaining, world)?;
    Ok(ReplanOutcome::Plan(TaskPlan {
        subtasks: remaining,
        source: prev.source,
        instruction_hash: prev.instruction_hash.clone(),
    }))
}

/// Grammar parser plus rule-based expansion and replanning.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedPlanner;

impl Planner for RuleBasedPlanner {
    fn source(&self) -> PlanSource {
        PlanSource::RuleBased
    }

    fn plan(&mut self, instruction: &str, world: &WorldSummary) -> Result<TaskPlan, PlanError> {
        if instruction.trim().is_empty() {
            return Err(PlanError::EmptyInstruction);
        }
        let parsed = parse_instruction(instruction)?;
        plan_rule_based(&parsed, world, instruction)
    }

    fn replan(
        &mut self,
        _instruction: &str,
        prev: &TaskPlan,
        world: &WorldSummary,
        failure: &FailureInfo,
    ) -> Result<ReplanOutcome, PlanError> {
        replan_rule_based(prev, world, failure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{scenario, Color, Env, Pose};
    use crate::planner::FailureCause;

    fn world(name: &str) -> WorldSummary {
        Env::new(scenario::builtin(name).unwrap(), 0).unwrap().world_summary()
    }

    fn plan(instr: &str, name: &str) -> Result<TaskPlan, PlanError> {
        RuleBasedPlanner.plan(instr, &world(name))
    }

    fn red_cube() -> ObjectRef {
        ObjectRef::colored(Color::Red, Shape::Cube)
    }

    fn blue_platform() -> ObjectRef {
        ObjectRef::colored(Color::Blue, Shape::Platform)
    }

    fn headline() -> Vec<Subtask> {
        vec![
            Subtask::move_to(red_cube()),
            Subtask::grasp(red_cube()),
            Subtask::move_to(blue_platform()),
            Subtask::Release,
        ]
    }

    #[test]
    fn headline_decomposition() {
        let p = plan("Pick up the red cube and place it on the blue platform", "pick_place").unwrap();
        assert_eq!(p.subtasks, headline());
        assert_eq!(p.source, PlanSource::RuleBased);
        assert_eq!(p.instruction_hash.len(), 64);
    }

    #[test]
    fn single_move() {
        let p = plan("move to the cube", "pick_place").unwrap();
        assert_eq!(p.subtasks, vec![Subtask::move_to(ObjectRef::shape(Shape::Cube))]);
    }

    #[test]
    fn ambiguous_grasp() {
        assert!(matches!(plan("grasp the cube", "sort_3"), Err(PlanError::AmbiguousRef { .. })));
        assert!(matches!(plan("grasp the sphere", "sort_3"), Err(PlanError::UnresolvableRef(_))));
    }

    #[test]
    fn sort_expands_by_id() {
        let p = plan("sort the cubes by color", "sort_3").unwrap();
        assert_eq!(p.len(), 12);
        let grasped: Vec<String> = p
            .subtasks
            .iter()
            .filter_map(|s| match s {
                Subtask::Grasp { object } => Some(object.to_string()),
                _ => None,
            })
            .collect();
        assert_eq!(grasped, ["the blue cube", "the green cube", "the red cube"]);
        assert_eq!(p.subtasks[2], Subtask::move_to(blue_platform()));
    }

    #[test]
    fn avoid_prefixes_next_motion() {
        let p = plan("pick up the red cube, avoid the obstacle and place it on the green platform", "obstacle_course")
            .unwrap();
        let green = Target::Object(ObjectRef::colored(Color::Green, Shape::Platform));
        assert_eq!(
            p.subtasks[2],
            Subtask::AvoidRegion { obstacle: ObjectRef::shape(Shape::Obstacle), then: green.clone() }
        );
        assert_eq!(p.subtasks[3], Subtask::MoveTo { target: green });
        assert_eq!(p.len(), 5);
        assert_eq!(
            plan("pick up the red cube and avoid the obstacle", "obstacle_course"),
            Err(PlanError::DanglingAvoid)
        );
    }

    #[test]
    fn gripper_conflict() {
        let r = plan("pick up the red cube and pick up the blue cube", "sort_3");
        assert!(matches!(r, Err(PlanError::GripperConflict { index: 3, .. })), "{r:?}");
    }

    #[test]
    fn empty_instruction() {
        assert_eq!(plan("   ", "pick_place"), Err(PlanError::EmptyInstruction));
    }

    fn failure(cursor: usize, cause: FailureCause) -> FailureInfo {
        FailureInfo { cursor, cause, goal_satisfied: false }
    }

    #[test]
    fn object_moved_before_grasp_restarts_approach() {
        let mut w = world("pick_place");
        let prev = RuleBasedPlanner.plan("pick up the red cube and place it on the blue platform", &w).unwrap();
        w.objects.iter_mut().find(|o| o.id == "red_cube").unwrap().pose = Pose::new(0.5, -0.05, 0.02);
        let moved = FailureCause::ObjectMoved { id: "red_cube".into(), displacement: 0.15 };
        let ReplanOutcome::Plan(p) = replan_rule_based(&prev, &w, &failure(1, moved.clone())).unwrap() else {
            panic!()
        };
        assert_eq!(p.subtasks, headline());
        let ReplanOutcome::Plan(p) = replan_rule_based(&prev, &w, &failure(0, moved)).unwrap() else { panic!() };
        assert_eq!(p.subtasks, headline());
    }

    #[test]
    fn lost_grasp_reacquires_object() {
        let w = world("pick_place");
        let prev = RuleBasedPlanner.plan("pick up the red cube and place it on the blue platform", &w).unwrap();
        let lost = FailureCause::GraspLost { id: "red_cube".into() };
        let ReplanOutcome::Plan(p) = replan_rule_based(&prev, &w, &failure(2, lost)).unwrap() else { panic!() };
        assert_eq!(p.subtasks, headline());
    }

    #[test]
    fn still_holding_resumes_at_transport() {
        let mut w = world("pick_place");
        w.robot.held = Some("red_cube".into());
        w.robot.gripper = crate::env::GripperState::Closed;
        let prev = TaskPlan { subtasks: headline(), source: PlanSource::RuleBased, instruction_hash: String::new() };
        let ReplanOutcome::Plan(p) = replan_rule_based(&prev, &w, &failure(3, FailureCause::SubtaskTimeout)).unwrap()
        else {
            panic!()
        };
        assert_eq!(p.subtasks, headline()[2..].to_vec());
    }

    #[test]
    fn satisfied_goal_completes() {
        let w = world("pick_place");
        let prev = TaskPlan { subtasks: headline(), source: PlanSource::RuleBased, instruction_hash: String::new() };
        let f = FailureInfo { cursor: 3, cause: FailureCause::SubtaskTimeout, goal_satisfied: true };
        assert_eq!(replan_rule_based(&prev, &w, &f).unwrap(), ReplanOutcome::Complete);
    }

    #[test]
    fn removed_object_is_unresolvable() {
        let mut w = world("pick_place");
        let prev = TaskPlan { subtasks: headline(), source: PlanSource::RuleBased, instruction_hash: String::new() };
        w.objects.retain(|o| o.id != "red_cube");
        let f = failure(1, FailureCause::ObjectMoved { id: "red_cube".into(), displacement: 1.0 });
        assert!(matches!(replan_rule_based(&prev, &w, &f), Err(PlanError::UnresolvableRef(_))));
    }
}
