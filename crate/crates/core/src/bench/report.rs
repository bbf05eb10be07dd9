//! Report rendering: per-episode CSV, full JSON and a markdown comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{round1, BenchReport, Condition};
use crate::rl::LearningCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

pub const MARKDOWN_HEADER: &str = "| Metric | RL Only | LLM + RL | Improvement (%) |";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}", round1(x)))
}

fn csv_episodes(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario",
        "condition",
        "episode",
        "seed",
        "perturbed",
        "success",
        "steps",
        "completion_time_s",
        "replans",
        "cumulative_reward",
        "error",
    ])
    .expect("in-memory csv");
    for e in &report.episodes {
        w.write_record([
            e.scenario.clone(),
            e.condition.to_string(),
            e.episode.to_string(),
            e.seed.to_string(),
            e.perturbed.to_string(),
            e.success.to_string(),
            e.steps.to_string(),
            e.completion_time_s.to_string(),
            e.replans.to_string(),
            e.cumulative_reward.to_string(),
            e.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

fn markdown(report: &BenchReport) -> String {
    let mut out = String::new();
    let treatment = report.treatment;
    for scenario in &report.scenarios {
        let base = report.summary(scenario, Condition::RlOnly);
        let treat = treatment.and_then(|t| report.summary(scenario, t));
        let _ = writeln!(out, "### {scenario}\n");
        let _ = writeln!(out, "{MARKDOWN_HEADER}");
        let _ = writeln!(out, "|---|---|---|---|");
        let rows: [(&str, fn(&super::ConditionSummary) -> Option<f64>); 3] = [
            ("Task completion time (s)", |s| s.mean_completion_time_s),
            ("Accuracy (%)", |s| s.accuracy),
            ("Adaptability (%)", |s| s.adaptability),
        ];
        for (metric, get) in rows {
            let imp = report
                .improvements
                .iter()
                .find(|r| &r.scenario == scenario && r.metric == metric)
                .and_then(|r| r.improvement);
            let _ = writeln!(
                out,
                "| {metric} | {} | {} | {} |",
                cell(base.and_then(get)),
                cell(treat.and_then(get)),
                cell(imp)
            );
        }
        out.push('\n');
    }
    let n_perturbed = report.episodes.iter().filter(|e| e.perturbed).count();
    let _ = writeln!(
        out,
        "LLM + RL column: {}. {} episodes per condition and scenario ({} perturbed in total), seed {}, fingerprint {}.",
        treatment.map_or("n/a", Condition::as_str),
        report.config.n_episodes,
        n_perturbed,
        report.config.seed,
        &report.fingerprint[..12.min(report.fingerprint.len())]
    );
    let notes: Vec<&str> = report.reference_checks.iter().filter_map(|c| c.note.as_deref()).collect();
    if !notes.is_empty() {
        out.push_str("\nReference arithmetic:\n");
        for c in &report.reference_checks {
            let _ = writeln!(
                out,
                "- {}: {:.4} (printed {:.1}){}",
                c.metric,
                c.computed,
                c.printed,
                c.note.as_deref().map(|n| format!("; note: {n}")).unwrap_or_default()
            );
        }
    }
    out
}

pub fn emit_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => csv_episodes(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    }
}

/// Per-episode cumulative reward with a trailing-window mean column.
pub fn emit_learning_curve(curve: &LearningCurve) -> String {
    curve.to_csv()
}

/// File name stem embedding conditions, scenarios, seed and configuration hash.
pub fn report_file_stem(report: &BenchReport) -> String {
    let conds: Vec<&str> = report.conditions.iter().map(|c| c.as_str()).collect();
    format!(
        "bench_{}_{}_seed{}_{}",
        conds.join("+"),
        report.scenarios.join("+"),
        report.config.seed,
        &report.fingerprint[..12.min(report.fingerprint.len())]
    )
}
