//! Scenario definitions: scene layout, goal, step budget and scheduled perturbations.
//!
//! Scenarios are stored as TOML. Three are bundled with the crate and can be
//! fetched by name through [`builtin`].

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Color, ObjectSpec, Pose, Shape, WorkspaceBounds};
use super::EnvError;

/// Condition that ends an episode successfully.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalPredicate {
    EeNear { target: Pose, tol: f64 },
    ObjectOn { object: String, platform: String, tol: f64 },
    Holding { object: String },
    NotHolding,
    Sorted { assignment: BTreeMap<Color, String>, tol: f64 },
}

impl GoalPredicate {
    pub fn tolerance(&self) -> Option<f64> {
        match self {
            GoalPredicate::EeNear { tol, .. }
            | GoalPredicate::ObjectOn { tol, .. }
            | GoalPredicate::Sorted { tol, .. } => Some(*tol),
            _ => None,
        }
    }
}

/// Scripted relocation of an object at a given step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub at_step: u32,
    pub object_id: String,
    pub new_pose: Pose,
}

fn default_sim_dt() -> f64 {
    super::SIM_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Default instruction used by `run` and `bench` when none is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub bounds: WorkspaceBounds,
    pub ee_start: Pose,
    /// Object attached to the closed gripper at reset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_at_start: Option<String>,
    pub max_steps: u32,
    #[serde(default = "default_sim_dt")]
    pub sim_dt: f64,
    /// Half-width of the uniform layout jitter the benchmark applies to graspable objects.
    #[serde(default)]
    pub jitter: f64,
    pub goal: GoalPredicate,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, EnvError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| EnvError::ScenarioFormat(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| EnvError::ScenarioFormat(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Copy with every graspable object shifted horizontally by an independent
    /// uniform offset in `[-jitter, jitter]`, kept inside the workspace.
    pub fn jittered<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ScenarioSpec {
        let mut out = self.clone();
        if self.jitter <= 0.0 {
            return out;
        }
        for o in out.objects.iter_mut().filter(|o| o.graspable) {
            if self.held_at_start.as_deref() == Some(o.id.as_str()) {
                continue;
            }
            o.pose.x += rng.random_range(-self.jitter..=self.jitter);
            o.pose.y += rng.random_range(-self.jitter..=self.jitter);
            o.pose = self.bounds.clamp(o.pose);
        }
        out
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidScenario(msg));

        if !self.bounds.is_valid() {
            return bad("workspace bounds must satisfy min < max on every axis".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.sim_dt.is_finite() && self.sim_dt > 0.0) {
            return bad("sim_dt must be positive".into());
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad("jitter must be non-negative".into());
        }
        if !self.bounds.contains(self.ee_start) {
            return bad("ee_start lies outside the workspace".into());
        }

        let mut seen = HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                return bad(format!("duplicate object id `{}`", o.id));
            }
            if !(o.half_extent.is_finite() && o.half_extent > 0.0) {
                return bad(format!("object `{}` needs a positive half_extent", o.id));
            }
            if matches!(o.shape, Shape::Platform | Shape::Obstacle) && o.graspable {
                return bad(format!("{} `{}` cannot be graspable", o.shape, o.id));
            }
            if !self.bounds.contains(o.pose) {
                return bad(format!("object `{}` lies outside the workspace", o.id));
            }
        }

        if let Some(id) = &self.held_at_start {
            match self.object(id) {
                Some(o) if o.graspable => {}
                _ => return bad(format!("held_at_start `{id}` is not a graspable object")),
            }
        }

        for p in &self.perturbations {
            if p.at_step >= self.max_steps {
                return bad(format!("perturbation at step {} is not before max_steps", p.at_step));
            }
            if self.object(&p.object_id).is_none() {
                return bad(format!("perturbation references missing object `{}`", p.object_id));
            }
            if !self.bounds.contains(p.new_pose) {
                return bad(format!("perturbation of `{}` leaves the workspace", p.object_id));
            }
        }

        if let Some(tol) = self.goal.tolerance() {
            if !(tol.is_finite() && tol > 0.0) {
                return bad("goal tolerance must be positive".into());
            }
        }
        let need = |id: &str, shape: Option<Shape>| -> Result<(), EnvError> {
            match self.object(id) {
                None => Err(EnvError::InvalidScenario(format!("goal references missing object `{id}`"))),
                Some(o) if shape.is_some_and(|s| s != o.shape) => {
                    Err(EnvError::InvalidScenario(format!("goal expects `{id}` to be a {}", shape.unwrap())))
                }
                Some(_) => Ok(()),
            }
        };
        match &self.goal {
            GoalPredicate::ObjectOn { object, platform, .. } => {
                need(object, None)?;
                need(platform, Some(Shape::Platform))?;
            }
            GoalPredicate::Holding { object } => need(object, None)?,
            GoalPredicate::Sorted { assignment, .. } => {
                for platform in assignment.values() {
                    need(platform, Some(Shape::Platform))?;
                }
            }
            GoalPredicate::EeNear { target, .. } => {
                if !self.bounds.contains(*target) {
                    return bad("goal target lies outside the workspace".into());
                }
            }
            GoalPredicate::NotHolding => {}
        }
        Ok(())
    }
}

const PICK_PLACE: &str = include_str!("../../scenarios/pick_place.toml");
const SORT_3: &str = include_str!("../../scenarios/sort_3.toml");
const OBSTACLE_COURSE: &str = include_str!("../../scenarios/obstacle_course.toml");

pub const BUILTIN_NAMES: &[&str] = &["pick_place", "sort_3", "obstacle_course"];

/// Loads one of the bundled scenarios by name.
pub fn builtin(name: &str) -> Result<ScenarioSpec, EnvError> {
    let text = match name {
        "pick_place" => PICK_PLACE,
        "sort_3" => SORT_3,
        "obstacle_course" => OBSTACLE_COURSE,
        other => {
            return Err(EnvError::ScenarioFormat(format!(
                "no bundled scenario `{other}` (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    ScenarioSpec::from_toml_str(text)
}

/// Resolves a scenario argument: a bundled name or a path to a TOML file.
pub fn resolve(name_or_path: &str) -> Result<ScenarioSpec, EnvError> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        builtin(name_or_path)
    } else {
        ScenarioSpec::load(name_or_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            assert_eq!(&s.name, name);
            assert!(s.instruction.is_some());
        }
    }

    #[test]
    fn toml_round_trip() {
        let s = builtin("sort_3").unwrap();
        let back = ScenarioSpec::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{}\nbogus = 1\n", PICK_PLACE.replace("[bounds]", "wat = 3\n[bounds]"));
        assert!(matches!(ScenarioSpec::from_toml_str(&text), Err(EnvError::ScenarioFormat(_))));
    }

    #[test]
    fn rejects_graspable_platform() {
        let mut s = builtin("pick_place").unwrap();
        s.objects.iter_mut().find(|o| o.shape == Shape::Platform).unwrap().graspable = true;
        assert!(matches!(s.validate(), Err(EnvError::InvalidScenario(_))));
    }

    #[test]
    fn rejects_late_perturbation() {
        let mut s = builtin("pick_place").unwrap();
        s.perturbations =
            vec![Perturbation { at_step: s.max_steps, object_id: "red_cube".into(), new_pose: s.objects[0].pose }];
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_out_of_bounds_object() {
        let mut s = builtin("pick_place").unwrap();
        s.objects[0].pose.x = 5.0;
        assert!(s.validate().is_err());
    }
}
