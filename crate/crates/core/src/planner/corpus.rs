//! Instructions the planners are expected to handle on the built-in scenarios.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusEntry {
    pub instruction: &'static str,
    pub scenario: &'static str,
    /// Whether executing the plan satisfies the scenario goal.
    pub completes_goal: bool,
}

const fn entry(instruction: &'static str, scenario: &'static str, completes_goal: bool) -> CorpusEntry {
    CorpusEntry { instruction, scenario, completes_goal }
}

pub const CORPUS: &[CorpusEntry] = &[
    entry("Pick up the red cube and place it on the blue platform", "pick_place", true),
    entry("pick up the cube, then place it on the platform", "pick_place", true),
    entry("put the red cube on the blue platform", "pick_place", true),
    entry("pick up red_cube and place it on blue_platform.", "pick_place", true),
    entry("move to the red cube", "pick_place", false),
    entry("move to the cube and grasp the cube", "pick_place", false),
    entry("pick up the red cube, place it on the blue platform and move to the home", "pick_place", true),
    entry("sort the cubes by color", "sort_3", true),
    entry(
        "put the red cube on the red platform, then put the green cube on the green platform \
         and put the blue cube on the blue platform",
        "sort_3",
        true,
    ),
    entry("put the red cube on the red platform", "sort_3", false),
    entry("pick up the red cube, avoid the obstacle and place it on the green platform", "obstacle_course", true),
];
