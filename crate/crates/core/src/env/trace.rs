//! Line-delimited JSON export of simulator steps, used for golden-trace tests.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{Action, Env, EnvError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvTraceRecord {
    pub step: u32,
    pub action: Action,
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Resets `env` and plays `actions` until they run out or the episode ends.
pub fn record(env: &mut Env, actions: &[Action]) -> Result<Vec<EnvTraceRecord>, EnvError> {
    env.reset();
    let mut out = Vec::with_capacity(actions.len());
    for action in actions {
        let step = env.state().step_count;
        let o = env.step(*action)?;
        out.push(EnvTraceRecord { step, action: *action, observation: o.observation, reward: o.reward, done: o.done });
        if o.done {
            break;
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[EnvTraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(records: &[EnvTraceRecord]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("json is utf-8")
}
