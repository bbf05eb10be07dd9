//! Episode trace records and the validator for their ordering.
//!
//! A well-formed trace matches
//! `plan (subtask monitor*)* (replan (subtask monitor*)*)* terminal`,
//! where every `monitor` belongs to the most recent `subtask` and every
//! subtask index is in range for the plan in force.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExecutionStatus, MonitorEvent};
use crate::env::Action;
use crate::planner::Subtask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Plan { step: u32, subtasks: Vec<Subtask> },
    Subtask { step: u32, index: usize, subtask: String, skill: Option<String> },
    Monitor { step: u32, index: usize, action: Action, reward: f64, events: Vec<MonitorEvent> },
    Replan { step: u32, cause: String, subtasks: Vec<Subtask> },
    Terminal { step: u32, status: ExecutionStatus, goal_satisfied: bool, reason: Option<String> },
}

impl TraceRecord {
    pub fn step(&self) -> u32 {
        match self {
            TraceRecord::Plan { step, .. }
            | TraceRecord::Subtask { step, .. }
            | TraceRecord::Monitor { step, .. }
            | TraceRecord::Replan { step, .. }
            | TraceRecord::Terminal { step, .. } => *step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("record {index}: {message}")]
pub struct TraceError {
    pub index: usize,
    pub message: String,
}

/// Checks the record order and the step and index bookkeeping.
pub fn validate_trace(records: &[TraceRecord]) -> Result<(), TraceError> {
    let err = |index: usize, message: &str| Err(TraceError { index, message: message.into() });
    let Some(TraceRecord::Plan { subtasks, step: 0 }) = records.first() else {
        return err(0, "trace must open with a plan at step 0");
    };
    let mut plan_len = subtasks.len();
    let mut active: Option<usize> = None;
    let mut last_step = 0;
    for (i, r) in records.iter().enumerate().skip(1) {
        if r.step() < last_step {
            return err(i, "step counter went backwards");
        }
        match r {
            TraceRecord::Plan { .. } => return err(i, "second plan record; replans use `replan`"),
            TraceRecord::Subtask { index, .. } => {
                if *index >= plan_len {
                    return err(i, "subtask index out of range");
                }
                if active.is_some_and(|a| *index < a) {
                    return err(i, "subtask cursor moved backwards without a replan");
                }
                active = Some(*index);
            }
            TraceRecord::Monitor { index, step, .. } => {
                if active != Some(*index) {
                    return err(i, "monitor record outside its subtask");
                }
                if *step != last_step + 1 {
                    return err(i, "monitor records must advance one step at a time");
                }
            }
            TraceRecord::Replan { subtasks, .. } => {
                plan_len = subtasks.len();
                active = None;
            }
            TraceRecord::Terminal { .. } => {
                if i + 1 != records.len() {
                    return err(i, "records after terminal");
                }
                return Ok(());
            }
        }
        last_step = r.step();
    }
    err(records.len(), "trace has no terminal record")
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Grip;

    fn monitor(step: u32, index: usize) -> TraceRecord {
        TraceRecord::Monitor { step, index, action: Action::new([0.0; 3], Grip::Hold), reward: 0.0, events: vec![] }
    }

    fn sub(step: u32, index: usize) -> TraceRecord {
        TraceRecord::Subtask { step, index, subtask: "Release".into(), skill: None }
    }

    fn plan(n: usize) -> TraceRecord {
        TraceRecord::Plan { step: 0, subtasks: vec![Subtask::Release; n] }
    }

    fn terminal(step: u32) -> TraceRecord {
        TraceRecord::Terminal { step, status: ExecutionStatus::Succeeded, goal_satisfied: true, reason: None }
    }

    #[test]
    fn accepts_well_formed() {
        let t = vec![
            plan(2),
            sub(0, 0),
            monitor(1, 0),
            sub(1, 1),
            monitor(2, 1),
            TraceRecord::Replan { step: 2, cause: "x".into(), subtasks: vec![Subtask::Release] },
            sub(2, 0),
            monitor(3, 0),
            terminal(3),
        ];
        validate_trace(&t).unwrap();
        assert_eq!(from_jsonl(&to_jsonl(&t)).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        assert!(validate_trace(&[]).is_err());
        assert!(validate_trace(&[plan(1)]).is_err());
        assert!(validate_trace(&[plan(1), monitor(1, 0), terminal(1)]).is_err());
        assert!(validate_trace(&[plan(1), sub(0, 1), terminal(0)]).is_err());
        assert!(validate_trace(&[plan(1), sub(0, 0), monitor(2, 0), terminal(2)]).is_err());
        assert!(validate_trace(&[plan(1), terminal(0), terminal(0)]).is_err());
        assert!(validate_trace(&[plan(2), sub(0, 1), sub(0, 0), terminal(0)]).is_err());
    }
}
