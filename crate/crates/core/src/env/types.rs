//! Geometric and scene primitives shared by the simulator, planner and skills.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A point in the workspace, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub const ZERO: Pose = Pose { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn get(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn set(&mut self, axis: usize, value: f64) {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            2 => self.z = value,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn add(self, o: Pose) -> Pose {
        Pose::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Pose) -> Pose {
        Pose::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dist(self, o: Pose) -> f64 {
        self.sub(o).norm()
    }

    pub fn horizontal_dist(self, o: Pose) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Pose {
    fn from(a: [f64; 3]) -> Self {
        Pose::from_array(a)
    }
}

impl From<Pose> for [f64; 3] {
    fn from(p: Pose) -> Self {
        p.to_array()
    }
}

/// Axis-aligned box the end-effector and every object are confined to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceBounds {
    pub min: Pose,
    pub max: Pose,
}

impl WorkspaceBounds {
    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min.get(a) < self.max.get(a)) && self.min.is_finite() && self.max.is_finite()
    }

    pub fn contains(&self, p: Pose) -> bool {
        (0..3).all(|a| p.get(a) >= self.min.get(a) && p.get(a) <= self.max.get(a))
    }

    pub fn clamp(&self, p: Pose) -> Pose {
        Pose::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn center(&self) -> Pose {
        Pose::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y), 0.5 * (self.min.z + self.max.z))
    }
}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($name).to_lowercase())),
                }
            }
        }
    };
}

keyword_enum!(
    Shape {
        Cube => "cube",
        Sphere => "sphere",
        Platform => "platform",
        Obstacle => "obstacle",
    }
);

keyword_enum!(
    Color {
        Red => "red",
        Green => "green",
        Blue => "blue",
        Yellow => "yellow",
    }
);

keyword_enum!(
    GripperState {
        Open => "open",
        Closed => "closed",
    }
);

/// A scene object. Platforms are thin slabs whose footprint is `half_extent`;
/// every other shape is a box (or ball) of half-size `half_extent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: Shape,
    pub color: Color,
    pub half_extent: f64,
    pub pose: Pose,
    pub graspable: bool,
}

impl ObjectSpec {
    /// Height of the surface an object dropped onto this one comes to rest on.
    pub fn top_z(&self) -> f64 {
        match self.shape {
            Shape::Platform => self.pose.z + super::PLATFORM_HALF_HEIGHT,
            _ => self.pose.z + self.half_extent,
        }
    }

    /// Top-center of the object, the point a placement aims for.
    pub fn top_center(&self) -> Pose {
        Pose::new(self.pose.x, self.pose.y, self.top_z())
    }

    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        (x - self.pose.x).abs() <= self.half_extent && (y - self.pose.y).abs() <= self.half_extent
    }
}

/// Gripper command carried by an [`Action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grip {
    Open,
    Close,
    Hold,
}

/// One control command: an end-effector displacement plus a gripper command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub delta: [f64; 3],
    pub grip: Grip,
}

impl Action {
    pub const IDLE: Action = Action { delta: [0.0; 3], grip: Grip::Hold };

    pub fn new(delta: [f64; 3], grip: Grip) -> Self {
        Self { delta, grip }
    }

    /// Componentwise clamp to `[-max_step, max_step]`; non-finite components become zero.
    pub fn clamped(self, max_step: f64) -> Self {
        let mut delta = self.delta;
        for d in &mut delta {
            *d = if d.is_finite() { d.clamp(-max_step, max_step) } else { 0.0 };
        }
        Self { delta, grip: self.grip }
    }

    /// Maps a policy output in normalized units onto an action.
    ///
    /// The first three entries are scaled by `MAX_STEP` after clamping to
    /// `[-1, 1]`. The optional fourth entry selects the gripper command:
    /// above `GRIP_THRESHOLD` closes, below its negation opens, otherwise holds.
    pub fn from_normalized(raw: &[f64]) -> Self {
        let mut delta = [0.0; 3];
        for (d, r) in delta.iter_mut().zip(raw.iter()) {
            *d = if r.is_finite() { r.clamp(-1.0, 1.0) * super::MAX_STEP } else { 0.0 };
        }
        let grip = match raw.get(3) {
            Some(&g) if g > GRIP_THRESHOLD => Grip::Close,
            Some(&g) if g < -GRIP_THRESHOLD => Grip::Open,
            _ => Grip::Hold,
        };
        Self { delta, grip }
    }
}

pub const GRIP_THRESHOLD: f64 = 0.33;
