//! Snapshot of the planning prompt. Regenerate with `MANIP_BLESS=1 cargo test --test golden_prompt`.

use std::path::PathBuf;

use manip_core::env::{scenario, Env};
use manip_core::planner::render_prompt;

#[test]
fn pick_place_prompt_matches_snapshot() {
    let scenario = scenario::builtin("pick_place").unwrap();
    let world = Env::new(scenario.clone(), 0).unwrap().world_summary();
    let prompt = render_prompt(scenario.instruction.as_deref().unwrap(), &world);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pick_place_prompt.txt");
    if std::env::var_os("MANIP_BLESS").is_some() {
        std::fs::write(&path, &prompt).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("snapshot present; bless with MANIP_BLESS=1");
    assert_eq!(prompt, expected);
}
