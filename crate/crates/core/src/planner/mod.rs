//! Task Planner: turns an instruction and a world summary into a validated
//! sequence of subtasks, either with the built-in grammar or through an LLM
//! endpoint speaking a small JSON protocol.

pub mod corpus;
pub mod grammar;
pub mod llm;
pub mod prompt;
pub mod rule;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{Color, ObjectSummary, Pose, Shape, WorldSummary};

pub use grammar::{parse_instruction, Command, ParseError, ParsedCommandList};
pub use llm::{HttpTransport, LlmClient, LlmConfig, LlmExchange, LlmPlanner, Transport};
pub use prompt::render_prompt;
pub use rule::{plan_rule_based, replan_rule_based, RuleBasedPlanner};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("no object in the scene matches {0}")]
    UnresolvableRef(String),
    #[error("{reference} matches several objects ({})", candidates.join(", "))]
    AmbiguousRef { reference: String, candidates: Vec<String> },
    #[error("subtask {index}: gripper already holds `{held}`")]
    GripperConflict { index: usize, held: String },
    #[error("`avoid` is not followed by any motion")]
    DanglingAvoid,
    #[error("subtask {index}: {reason}")]
    InvalidSubtask { index: usize, reason: String },
    #[error("plan has no subtasks")]
    EmptyPlan,
    #[error("LLM reply rejected after {retries} retries: {message}")]
    SchemaError { message: String, retries: u32 },
    #[error("transport: {0}")]
    Transport(String),
    #[error("planner configuration: {0}")]
    Config(String),
}

/// Reference to a scene object by any combination of id, color and shape.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

impl ObjectRef {
    pub fn shape(shape: Shape) -> Self {
        Self { shape: Some(shape), ..Self::default() }
    }

    pub fn colored(color: Color, shape: Shape) -> Self {
        Self { color: Some(color), shape: Some(shape), ..Self::default() }
    }

    pub fn named(id: &str) -> Self {
        Self { name: Some(id.into()), ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.name.is_none() && self.color.is_none() && self.shape.is_none()
    }

    pub fn matches(&self, o: &ObjectSummary) -> bool {
        self.name.as_deref().is_none_or(|n| n == o.id)
            && self.color.is_none_or(|c| c == o.color)
            && self.shape.is_none_or(|s| s == o.shape)
    }

    /// The unique matching object.
    pub fn resolve<'w>(&self, world: &'w WorldSummary) -> Result<&'w ObjectSummary, PlanError> {
        if self.is_empty() {
            return Err(PlanError::UnresolvableRef("an empty reference".into()));
        }
        let hits: Vec<&ObjectSummary> = world.objects.iter().filter(|o| self.matches(o)).collect();
        match hits.as_slice() {
            [] => Err(PlanError::UnresolvableRef(self.to_string())),
            [one] => Ok(one),
            many => Err(PlanError::AmbiguousRef {
                reference: self.to_string(),
                candidates: many.iter().map(|o| o.id.clone()).collect(),
            }),
        }
    }

    /// The most specific color/shape reference that still picks out `o`
    /// uniquely, falling back to its id.
    pub fn describe(o: &ObjectSummary, world: &WorldSummary) -> Self {
        let r = Self::colored(o.color, o.shape);
        if world.objects.iter().filter(|x| r.matches(x)).count() == 1 {
            r
        } else {
            Self::named(&o.id)
        }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = &self.name {
            return f.write_str(n);
        }
        let mut words = vec!["the"];
        if let Some(c) = self.color {
            words.push(c.as_str());
        }
        words.push(self.shape.map_or("object", Shape::as_str));
        f.write_str(&words.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedLocation {
    /// The end-effector start pose of the scenario.
    Home,
}

impl NamedLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            NamedLocation::Home => "home",
        }
    }
}

/// Destination of a motion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Object(ObjectRef),
    Location { location: NamedLocation },
}

impl Target {
    pub fn home() -> Self {
        Target::Location { location: NamedLocation::Home }
    }

    pub fn object_ref(&self) -> Option<&ObjectRef> {
        match self {
            Target::Object(r) => Some(r),
            Target::Location { .. } => None,
        }
    }

    /// Point the end effector should reach: platform top-center, object
    /// center, or the named pose.
    pub fn resolve_point(&self, world: &WorldSummary) -> Result<Pose, PlanError> {
        match self {
            Target::Object(r) => Ok(r.resolve(world)?.target_point()),
            Target::Location { location: NamedLocation::Home } => Ok(world.home),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Object(r) => r.fmt(f),
            Target::Location { location } => f.write_str(location.as_str()),
        }
    }
}

/// One executable step. Serialized as `{"op": "<snake_case>", ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields, from = "SubtaskWire")]
pub enum Subtask {
    MoveTo {
        target: Target,
    },
    Grasp {
        object: ObjectRef,
    },
    Release,
    PlaceOn {
        target: ObjectRef,
    },
    /// Reach `then` while keeping clear of `obstacle`.
    AvoidRegion {
        obstacle: ObjectRef,
        then: Target,
    },
}

/// Deserialization mirror; a struct-like `release` makes stray fields an error.
#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum SubtaskWire {
    MoveTo { target: Target },
    Grasp { object: ObjectRef },
    Release {},
    PlaceOn { target: ObjectRef },
    AvoidRegion { obstacle: ObjectRef, then: Target },
}

impl From<SubtaskWire> for Subtask {
    fn from(w: SubtaskWire) -> Self {
        match w {
            SubtaskWire::MoveTo { target } => Subtask::MoveTo { target },
            SubtaskWire::Grasp { object } => Subtask::Grasp { object },
            SubtaskWire::Release {} => Subtask::Release,
            SubtaskWire::PlaceOn { target } => Subtask::PlaceOn { target },
            SubtaskWire::AvoidRegion { obstacle, then } => Subtask::AvoidRegion { obstacle, then },
        }
    }
}

impl Subtask {
    pub fn move_to(r: ObjectRef) -> Self {
        Subtask::MoveTo { target: Target::Object(r) }
    }

    pub fn grasp(r: ObjectRef) -> Self {
        Subtask::Grasp { object: r }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Subtask::MoveTo { .. } => "move_to",
            Subtask::Grasp { .. } => "grasp",
            Subtask::Release => "release",
            Subtask::PlaceOn { .. } => "place_on",
            Subtask::AvoidRegion { .. } => "avoid_region",
        }
    }

    /// Every object reference in the subtask.
    pub fn refs(&self) -> Vec<&ObjectRef> {
        match self {
            Subtask::MoveTo { target } => target.object_ref().into_iter().collect(),
            Subtask::Grasp { object } => vec![object],
            Subtask::Release => vec![],
            Subtask::PlaceOn { target } => vec![target],
            Subtask::AvoidRegion { obstacle, then } => std::iter::once(obstacle).chain(then.object_ref()).collect(),
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subtask::MoveTo { target } => write!(f, "MoveTo({target})"),
            Subtask::Grasp { object } => write!(f, "Grasp({object})"),
            Subtask::Release => f.write_str("Release"),
            Subtask::PlaceOn { target } => write!(f, "PlaceOn({target})"),
            Subtask::AvoidRegion { obstacle, then } => write!(f, "AvoidRegion({obstacle}, then {then})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub subtasks: Vec<Subtask>,
    pub source: PlanSource,
    /// Hex SHA-256 of the instruction text.
    pub instruction_hash: String,
}

pub fn instruction_hash(instruction: &str) -> String {
    Sha256::digest(instruction.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl TaskPlan {
    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.subtasks).expect("subtasks serialize")
    }
}

/// Checks that every reference resolves, grasp targets are graspable and the
/// gripper never takes a second object before letting go of the first.
pub fn validate_subtasks(subtasks: &[Subtask], world: &WorldSummary) -> Result<(), PlanError> {
    if subtasks.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let mut held: Option<String> = world.robot.held.clone();
    for (index, st) in subtasks.iter().enumerate() {
        for r in st.refs() {
            r.resolve(world)?;
        }
        match st {
            Subtask::Grasp { object } => {
                let o = object.resolve(world)?;
                if !o.graspable {
                    return Err(PlanError::InvalidSubtask { index, reason: format!("`{}` cannot be grasped", o.id) });
                }
                if let Some(h) = &held {
                    return Err(PlanError::GripperConflict { index, held: h.clone() });
                }
                held = Some(o.id.clone());
            }
            Subtask::Release | Subtask::PlaceOn { .. } => held = None,
            Subtask::AvoidRegion { obstacle, .. } => {
                let o = obstacle.resolve(world)?;
                if o.shape != Shape::Obstacle {
                    return Err(PlanError::InvalidSubtask { index, reason: format!("`{}` is not an obstacle", o.id) });
                }
            }
            Subtask::MoveTo { .. } => {}
        }
    }
    Ok(())
}

/// What went wrong during execution, handed to the replanner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInfo {
    /// Index of the active subtask when the failure was detected.
    pub cursor: usize,
    pub cause: FailureCause,
    /// Whether the episode goal already holds.
    pub goal_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureCause {
    ObjectMoved { id: String, displacement: f64 },
    GraspLost { id: String },
    SubtaskTimeout,
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureCause::ObjectMoved { id, displacement } => write!(f, "object `{id}` moved by {displacement:.3} m"),
            FailureCause::GraspLost { id } => write!(f, "lost grip on `{id}`"),
            FailureCause::SubtaskTimeout => f.write_str("subtask ran out of steps"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplanOutcome {
    Plan(TaskPlan),
    /// Nothing is left to do: the goal already holds.
    Complete,
}

/// A planning backend usable by the execution loop.
pub trait Planner {
    fn source(&self) -> PlanSource;
    fn plan(&mut self, instruction: &str, world: &WorldSummary) -> Result<TaskPlan, PlanError>;
    fn replan(
        &mut self,
        instruction: &str,
        prev: &TaskPlan,
        world: &WorldSummary,
        failure: &FailureInfo,
    ) -> Result<ReplanOutcome, PlanError>;
}
