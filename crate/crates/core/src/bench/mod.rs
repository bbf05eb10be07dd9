//! Benchmark batteries: paired episode runs per condition, success metrics,
//! improvement percentages and report emission.
//!
//! Accuracy is the success rate over unperturbed episodes, adaptability the
//! success rate over episodes with a scheduled object displacement, and
//! completion time the mean simulated time of successful episodes.

pub mod report;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{Env, GoalPredicate, Perturbation, Pose, ScenarioSpec};
use crate::integration::{execute_task, ExecError, ExecutionConfig, LearnedSkills, OracleSkills, SkillLibrary};
use crate::planner::{LlmPlanner, Planner, RuleBasedPlanner};
use crate::rl::{train_skill, Algo, FlatTaskEnv, PolicyCheckpoint, RlError, SkillId, TrainConfig};

pub use report::{emit_learning_curve, emit_report, report_file_stem, ReportFormat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("no episodes in the set")]
    EmptySet,
    #[error("baseline is zero")]
    ZeroBaseline,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rl(#[from] RlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Whole-task policy on the raw observation, no planner, no monitoring.
    RlOnly,
    HybridRuleBased,
    HybridLlm,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::RlOnly, Condition::HybridRuleBased, Condition::HybridLlm];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::RlOnly => "rl_only",
            Condition::HybridRuleBased => "hybrid_rule_based",
            Condition::HybridLlm => "hybrid_llm",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition `{s}`; expected one of rl_only, hybrid_rule_based, hybrid_llm"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub scenario: String,
    pub condition: Condition,
    pub episode: usize,
    /// Seed that reproduces the episode layout, perturbation and execution.
    pub seed: u64,
    pub perturbed: bool,
    pub success: bool,
    pub steps: u32,
    pub completion_time_s: f64,
    pub replans: u32,
    pub cumulative_reward: f64,
    pub error: Option<String>,
}

fn success_rate<'a>(episodes: impl Iterator<Item = &'a EpisodeMetrics>) -> Result<f64, MetricError> {
    let (mut n, mut ok) = (0usize, 0usize);
    for e in episodes {
        n += 1;
        ok += usize::from(e.success);
    }
    if n == 0 {
        return Err(MetricError::EmptySet);
    }
    Ok(100.0 * ok as f64 / n as f64)
}

/// Success percentage over unperturbed episodes.
pub fn accuracy(episodes: &[EpisodeMetrics]) -> Result<f64, MetricError> {
    success_rate(episodes.iter().filter(|e| !e.perturbed))
}

/// Success percentage over perturbed episodes.
pub fn adaptability(episodes: &[EpisodeMetrics]) -> Result<f64, MetricError> {
    success_rate(episodes.iter().filter(|e| e.perturbed))
}

/// Mean completion time of successful episodes.
pub fn mean_completion_time(episodes: &[EpisodeMetrics]) -> Result<f64, MetricError> {
    let times: Vec<f64> = episodes.iter().filter(|e| e.success).map(|e| e.completion_time_s).collect();
    if times.is_empty() {
        return Err(MetricError::EmptySet);
    }
    Ok(times.iter().sum::<f64>() / times.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Relative improvement of `treatment` over `baseline`, in percent.
pub fn improvement(baseline: f64, treatment: f64, direction: Direction) -> Result<f64, MetricError> {
    if baseline == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok(match direction {
        Direction::LowerBetter => 100.0 * (baseline - treatment) / baseline,
        Direction::HigherBetter => 100.0 * (treatment - baseline) / baseline,
    })
}

/// Rounds half away from zero to one decimal, for display.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Reference rows the improvement formula is checked against:
/// `(metric, baseline, treatment, direction, printed improvement)`.
pub const REFERENCE_ROWS: [(&str, f64, f64, Direction, f64); 3] = [
    ("Task completion time (s)", 18.5, 12.3, Direction::LowerBetter, 33.5),
    ("Accuracy (%)", 78.4, 92.6, Direction::HigherBetter, 18.1),
    ("Adaptability (%)", 65.2, 88.9, Direction::HigherBetter, 36.4),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub metric: String,
    pub baseline: f64,
    pub treatment: f64,
    pub computed: f64,
    pub printed: f64,
    pub note: Option<String>,
}

/// Recomputes the reference rows; rows whose one-decimal result differs from
/// the printed value carry a note.
pub fn reference_checks() -> Vec<ReferenceCheck> {
    REFERENCE_ROWS
        .iter()
        .map(|&(metric, baseline, treatment, dir, printed)| {
            let computed = improvement(baseline, treatment, dir).expect("nonzero baselines");
            let note = (round1(computed) != printed).then(|| {
                format!(
                    "({treatment} vs {baseline}) gives {computed:.4}%, which rounds to {:.1}; the reference table prints {printed:.1}",
                    round1(computed)
                )
            });
            ReferenceCheck { metric: metric.into(), baseline, treatment, computed, printed, note }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_episodes: usize,
    pub seed: u64,
    /// Magnitude of the scheduled displacement in perturbed episodes, meters.
    pub displacement: f64,
    /// Fraction of the scenario step budget at which the displacement fires.
    pub perturb_at_fraction: f64,
    pub execution: ExecutionConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_episodes: 10,
            seed: 0,
            displacement: 0.15,
            perturb_at_fraction: 0.3,
            execution: ExecutionConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_episodes == 0 {
            return Err(BenchError::Config("n_episodes must be positive".into()));
        }
        if !(self.displacement.is_finite() && self.displacement >= 0.0) {
            return Err(BenchError::Config("displacement must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.perturb_at_fraction) {
            return Err(BenchError::Config("perturb_at_fraction must lie in [0, 1)".into()));
        }
        self.execution.validate().map_err(BenchError::Config)
    }
}

/// Skills and policies the conditions draw on.
pub struct BenchResources {
    /// Skills for the hybrid conditions; `None` selects the oracle controllers.
    pub learned_skills: Option<LearnedSkills>,
    /// Whole-task policies by scenario name for `RlOnly`; a missing entry
    /// falls back to an untrained policy seeded from the battery seed.
    pub flat_policies: BTreeMap<String, PolicyCheckpoint>,
    /// Builds a fresh LLM planner per episode for `HybridLlm`.
    pub llm: Option<Box<dyn FnMut() -> Result<LlmPlanner, crate::planner::PlanError>>>,
}

impl BenchResources {
    pub fn oracle() -> Self {
        Self { learned_skills: None, flat_policies: BTreeMap::new(), llm: None }
    }

    fn skill_library(&self) -> Box<dyn SkillLibrary> {
        match &self.learned_skills {
            Some(l) => Box::new(l.clone()),
            None => Box::new(OracleSkills),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub scenario: String,
    pub condition: Condition,
    pub episodes: usize,
    pub successes: usize,
    pub accuracy: Option<f64>,
    pub adaptability: Option<f64>,
    pub mean_completion_time_s: Option<f64>,
    pub mean_replans: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub scenario: String,
    pub metric: String,
    pub baseline: Option<f64>,
    pub treatment: Option<f64>,
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub scenarios: Vec<String>,
    pub conditions: Vec<Condition>,
    /// SHA-256 over the scenarios, conditions and configuration.
    pub fingerprint: String,
    /// Condition compared against `RlOnly` in the improvement rows.
    pub treatment: Option<Condition>,
    pub summaries: Vec<ConditionSummary>,
    pub improvements: Vec<ImprovementRow>,
    pub reference_checks: Vec<ReferenceCheck>,
    pub episodes: Vec<EpisodeMetrics>,
}

impl BenchReport {
    pub fn summary(&self, scenario: &str, condition: Condition) -> Option<&ConditionSummary> {
        self.summaries.iter().find(|s| s.scenario == scenario && s.condition == condition)
    }
}

pub fn fingerprint(suite: &[ScenarioSpec], conditions: &[Condition], cfg: &BenchConfig) -> String {
    let mut h = Sha256::new();
    for s in suite {
        h.update(s.to_toml_string().as_bytes());
        h.update([0]);
    }
    h.update(serde_json::to_string(conditions).expect("conditions serialize").as_bytes());
    h.update(serde_json::to_string(cfg).expect("config serializes").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of episode `episode` of scenario `scenario_index`, shared by all conditions.
pub fn episode_seed(seed: u64, scenario_index: usize, episode: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((scenario_index as u64).to_le_bytes());
    h.update((episode as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"))
}

/// First graspable object the goal is about.
fn goal_object(spec: &ScenarioSpec) -> Option<String> {
    let graspable = |id: &str| spec.object(id).is_some_and(|o| o.graspable);
    match &spec.goal {
        GoalPredicate::ObjectOn { object, .. } | GoalPredicate::Holding { object } if graspable(object) => {
            Some(object.clone())
        }
        GoalPredicate::Sorted { assignment, .. } => {
            let mut ids: Vec<&str> = spec
                .objects
                .iter()
                .filter(|o| o.graspable && assignment.contains_key(&o.color))
                .map(|o| o.id.as_str())
                .collect();
            ids.sort_unstable();
            ids.first().map(|s| s.to_string())
        }
        _ => spec.objects.iter().find(|o| o.graspable).map(|o| o.id.clone()),
    }
}

/// Scenario instance of one episode: jittered layout, the scenario's own
/// perturbations removed and, when `perturbed`, one displacement of the goal
/// object by `cfg.displacement` in a random horizontal direction.
pub fn episode_scenario(base: &ScenarioSpec, seed: u64, perturbed: bool, cfg: &BenchConfig) -> (ScenarioSpec, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = base.jittered(&mut rng);
    spec.perturbations.clear();
    let angle = rng.random_range(0.0..TAU);
    if !perturbed {
        return (spec, false);
    }
    let Some(id) = goal_object(&spec) else {
        return (spec, false);
    };
    let pose = spec.object(&id).expect("goal object exists").pose;
    let new_pose =
        spec.bounds.clamp(pose.add(Pose::new(cfg.displacement * angle.cos(), cfg.displacement * angle.sin(), 0.0)));
    let at_step = (cfg.perturb_at_fraction * f64::from(spec.max_steps)).floor() as u32;
    spec.perturbations.push(Perturbation { at_step, object_id: id, new_pose });
    (spec, true)
}

/// Untrained whole-task policy for `scenario`.
pub fn untrained_flat_policy(scenario: &ScenarioSpec, seed: u64) -> Result<PolicyCheckpoint, RlError> {
    let spec = scenario.clone();
    let (ckpt, _) =
        train_skill(move |_, s| FlatTaskEnv::new(spec, s), SkillId::Flat, Algo::Ppo, 0, seed, &TrainConfig::default())?;
    Ok(ckpt)
}

/// Rolls out a whole-task policy with mean actions until the episode ends.
pub fn run_flat_episode(env: &mut Env, policy: &PolicyCheckpoint) -> Result<(bool, u32, f64), RlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(env.seed());
    let mut reward = 0.0;
    while !env.is_done() {
        let action = policy.act(&env.observation(), true, &mut rng)?;
        reward += env.step(action)?.reward;
    }
    Ok((env.check_goal(), env.state().step_count, reward))
}

#[allow(clippy::too_many_arguments)]
fn run_episode(
    base: &ScenarioSpec,
    scenario_index: usize,
    episode: usize,
    condition: Condition,
    resources: &mut BenchResources,
    flat: &PolicyCheckpoint,
    cfg: &BenchConfig,
) -> EpisodeMetrics {
    let seed = episode_seed(cfg.seed, scenario_index, episode);
    let (spec, perturbed) = episode_scenario(base, seed, episode % 2 == 1, cfg);
    let sim_dt = spec.sim_dt;
    let mut m = EpisodeMetrics {
        scenario: base.name.clone(),
        condition,
        episode,
        seed,
        perturbed,
        success: false,
        steps: 0,
        completion_time_s: 0.0,
        replans: 0,
        cumulative_reward: 0.0,
        error: None,
    };
    let mut env = match Env::new(spec, seed) {
        Ok(e) => e,
        Err(e) => {
            m.error = Some(e.to_string());
            return m;
        }
    };
    let instruction = base.instruction.clone().unwrap_or_default();
    let outcome: Result<(), String> = match condition {
        Condition::RlOnly => run_flat_episode(&mut env, flat)
            .map(|(success, steps, reward)| {
                m.success = success;
                m.steps = steps;
                m.cumulative_reward = reward;
            })
            .map_err(|e| e.to_string()),
        Condition::HybridRuleBased | Condition::HybridLlm => {
            let mut planner: Box<dyn Planner> = match (condition, resources.llm.as_mut()) {
                (Condition::HybridRuleBased, _) => Box::new(RuleBasedPlanner),
                (_, Some(make)) => match make() {
                    Ok(p) => Box::new(p),
                    Err(e) => {
                        m.error = Some(e.to_string());
                        return m;
                    }
                },
                (_, None) => {
                    m.error = Some("no LLM planner configured".into());
                    return m;
                }
            };
            let mut skills = resources.skill_library();
            execute_task(&instruction, &mut env, planner.as_mut(), skills.as_mut(), &cfg.execution)
                .map(|r| {
                    m.success = r.goal_satisfied;
                    m.steps = r.total_steps;
                    m.replans = r.replans_used;
                    m.cumulative_reward = r.cumulative_reward;
                })
                .map_err(|e: ExecError| e.to_string())
        }
    };
    if let Err(e) = outcome {
        m.error = Some(e);
        m.success = false;
        m.steps = env.state().step_count;
    }
    m.completion_time_s = f64::from(m.steps) * sim_dt;
    m
}

fn summarize(scenario: &str, condition: Condition, episodes: &[EpisodeMetrics]) -> ConditionSummary {
    ConditionSummary {
        scenario: scenario.into(),
        condition,
        episodes: episodes.len(),
        successes: episodes.iter().filter(|e| e.success).count(),
        accuracy: accuracy(episodes).ok(),
        adaptability: adaptability(episodes).ok(),
        mean_completion_time_s: mean_completion_time(episodes).ok(),
        mean_replans: if episodes.is_empty() {
            0.0
        } else {
            episodes.iter().map(|e| f64::from(e.replans)).sum::<f64>() / episodes.len() as f64
        },
    }
}

fn improvement_rows(scenario: &str, base: &ConditionSummary, treat: &ConditionSummary) -> Vec<ImprovementRow> {
    let row = |metric: &str, b: Option<f64>, t: Option<f64>, dir| ImprovementRow {
        scenario: scenario.into(),
        metric: metric.into(),
        baseline: b,
        treatment: t,
        improvement: b.zip(t).and_then(|(b, t)| improvement(b, t, dir).ok()),
    };
    vec![
        row(
            "Task completion time (s)",
            base.mean_completion_time_s,
            treat.mean_completion_time_s,
            Direction::LowerBetter,
        ),
        row("Accuracy (%)", base.accuracy, treat.accuracy, Direction::HigherBetter),
        row("Adaptability (%)", base.adaptability, treat.adaptability, Direction::HigherBetter),
    ]
}

/// Runs `n_episodes` per scenario and condition. Odd-numbered episodes carry
/// a displacement; every condition sees the same layouts. Episode errors are
/// recorded and count as failures.
pub fn run_benchmark(
    suite: &[ScenarioSpec],
    conditions: &[Condition],
    resources: &mut BenchResources,
    cfg: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    if suite.is_empty() {
        return Err(BenchError::Config("the battery has no scenarios".into()));
    }
    if conditions.is_empty() {
        return Err(BenchError::Config("the battery has no conditions".into()));
    }
    let mut conds = conditions.to_vec();
    conds.sort();
    conds.dedup();
    if conds.contains(&Condition::HybridLlm) && resources.llm.is_none() {
        return Err(BenchError::Config("condition hybrid_llm needs an LLM endpoint".into()));
    }
    for s in suite {
        if s.instruction.is_none() && conds.iter().any(|c| *c != Condition::RlOnly) {
            return Err(BenchError::Config(format!("scenario `{}` has no instruction", s.name)));
        }
    }
    let treatment = [Condition::HybridLlm, Condition::HybridRuleBased].into_iter().find(|c| conds.contains(c));

    let mut episodes = Vec::new();
    let mut summaries = Vec::new();
    let mut improvements = Vec::new();
    for (si, spec) in suite.iter().enumerate() {
        let flat = match resources.flat_policies.get(&spec.name) {
            Some(p) => p.clone(),
            None => untrained_flat_policy(spec, cfg.seed)?,
        };
        let mut by_condition = BTreeMap::new();
        for &c in &conds {
            let eps: Vec<EpisodeMetrics> =
                (0..cfg.n_episodes).map(|i| run_episode(spec, si, i, c, resources, &flat, cfg)).collect();
            let summary = summarize(&spec.name, c, &eps);
            by_condition.insert(c, summary.clone());
            summaries.push(summary);
            episodes.extend(eps);
        }
        if let (Some(base), Some(t)) =
            (by_condition.get(&Condition::RlOnly), treatment.and_then(|t| by_condition.get(&t)))
        {
            improvements.extend(improvement_rows(&spec.name, base, t));
        }
    }
    Ok(BenchReport {
        config: cfg.clone(),
        scenarios: suite.iter().map(|s| s.name.clone()).collect(),
        conditions: conds.clone(),
        fingerprint: fingerprint(suite, &conds, cfg),
        treatment,
        summaries,
        improvements,
        reference_checks: reference_checks(),
        episodes,
    })
}
