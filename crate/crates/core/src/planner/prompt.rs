//! Prompt template for LLM planning.

use crate::env::WorldSummary;

use super::{FailureInfo, TaskPlan};

pub const SYSTEM_RULES: &str = "\
You are the task planner of a tabletop robot arm with a single gripper.
Decompose the instruction into an ordered list of subtasks.

Allowed subtasks, one JSON object each:
  {\"op\": \"move_to\", \"target\": REF}      or  {\"op\": \"move_to\", \"target\": {\"location\": \"home\"}}
  {\"op\": \"grasp\", \"object\": REF}
  {\"op\": \"release\"}
  {\"op\": \"place_on\", \"target\": REF}
  {\"op\": \"avoid_region\", \"obstacle\": REF, \"then\": REF}
REF is an object with any of the keys \"name\" (object id), \"color\", \"shape\";
it must match exactly one object of the world state.

Rules:
- The gripper holds at most one object: release before grasping again.
- Move to an object before grasping it; move to a platform before releasing onto it.
- Put an avoid_region immediately before the motion that must keep clear of an obstacle.
- Reply with a JSON array of subtasks and nothing else: no prose, no code fences.";

/// Deterministic planning prompt: rules, the world state as JSON, the instruction.
pub fn render_prompt(instruction: &str, world: &WorldSummary) -> String {
    let world_json = serde_json::to_string_pretty(world).expect("summary serializes");
    format!("{SYSTEM_RULES}\n\nWorld state:\n{world_json}\n\nInstruction: {}\n", instruction.trim())
}

/// Planning prompt extended with execution feedback, asking for the remaining subtasks.
pub fn render_replan_prompt(instruction: &str, world: &WorldSummary, prev: &TaskPlan, failure: &FailureInfo) -> String {
    let done: Vec<String> = prev.subtasks[..failure.cursor.min(prev.len())].iter().map(|s| s.to_string()).collect();
    let pending: Vec<String> = prev.subtasks[failure.cursor.min(prev.len())..].iter().map(|s| s.to_string()).collect();
    format!(
        "{}\nExecution feedback:\n- completed: [{}]\n- not completed: [{}]\n- failure: {}\n\
         Reply with the JSON array of the subtasks still needed, starting from the current state.\n",
        render_prompt(instruction, world),
        done.join(", "),
        pending.join(", "),
        failure.cause
    )
}
