//! The planner's plan tracking table and its dispatch policy.
//!
//! A table is an immutable value: every operation returns a new revision.
//! Steps run one at a time, in order; a failed step is retried up to the
//! policy's budget, after which the plan finishes incomplete.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::AgentId;

pub const DEFAULT_RETRIES: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("a plan needs at least one step")]
    EmptyPlan,
    #[error("step {step} is assigned to unregistered agent `{agent}`")]
    UnknownAgent { step: u32, agent: AgentId },
    #[error("no step {0}")]
    NoSuchStep(u32),
    #[error("step {step} is {status:?}; only an in-progress step can be advanced")]
    IllegalTransition { step: u32, status: StepStatus },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    InProgress,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_id: u32,
    pub description: String,
    pub assigned_agent: AgentId,
    pub status: StepStatus,
    pub result_summary: Option<String>,
    /// Arguments forwarded in the step's handoff.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default)]
    pub retries_used: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTable {
    pub goal: String,
    pub steps: Vec<PlanStep>,
    pub revision: u64,
}

/// A step as requested by the planner.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSpec {
    pub description: String,
    pub assigned_agent: AgentId,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl StepSpec {
    pub fn new(agent: impl Into<AgentId>, description: impl Into<String>) -> Self {
        StepSpec {
            description: description.into(),
            assigned_agent: agent.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub status: OutcomeStatus,
    pub summary: String,
}

impl StepOutcome {
    pub fn done(summary: impl Into<String>) -> Self {
        StepOutcome {
            status: OutcomeStatus::Done,
            summary: summary.into(),
        }
    }

    pub fn failed(summary: impl Into<String>) -> Self {
        StepOutcome {
            status: OutcomeStatus::Failed,
            summary: summary.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: DEFAULT_RETRIES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Dispatch {
    /// Hand the step to its agent. `params` are the step's own params plus
    /// `step_id`, `attempt` and `prior.<id>` summaries of finished steps.
    Start {
        step_id: u32,
        agent: AgentId,
        description: String,
        params: BTreeMap<String, String>,
    },
    /// A step is still running.
    Wait {
        step_id: u32,
    },
    /// A failed step was reset to pending for another attempt.
    Replan {
        step_id: u32,
    },
    Finish {
        complete: bool,
    },
}

impl PlanTable {
    pub fn step(&self, step_id: u32) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.step_id == step_id)
    }

    pub fn is_complete(&self) -> bool {
        self.steps.iter().all(|s| s.status == StepStatus::Done)
    }

    pub fn in_progress(&self) -> Option<&PlanStep> {
        self.steps
            .iter()
            .find(|s| s.status == StepStatus::InProgress)
    }

    pub fn done_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.status == StepStatus::Done)
            .count()
    }

    fn index_of(&self, step_id: u32) -> Result<usize, PlanError> {
        self.steps
            .iter()
            .position(|s| s.step_id == step_id)
            .ok_or(PlanError::NoSuchStep(step_id))
    }
}

/// Builds a fresh table; `is_registered` decides which agents exist.
pub fn create_plan(
    goal: impl Into<String>,
    steps: Vec<StepSpec>,
    is_registered: impl Fn(&AgentId) -> bool,
) -> Result<PlanTable, PlanError> {
    if steps.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let steps = steps
        .into_iter()
        .zip(1u32..)
        .map(|(spec, step_id)| {
            if !is_registered(&spec.assigned_agent) {
                return Err(PlanError::UnknownAgent {
                    step: step_id,
                    agent: spec.assigned_agent,
                });
            }
            Ok(PlanStep {
                step_id,
                description: spec.description,
                assigned_agent: spec.assigned_agent,
                status: StepStatus::Pending,
                result_summary: None,
                params: spec.params,
                retries_used: 0,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(PlanTable {
        goal: goal.into(),
        steps,
        revision: 0,
    })
}

/// Records the outcome of the in-progress step `step_id`.
pub fn advance_plan(
    table: &PlanTable,
    step_id: u32,
    outcome: StepOutcome,
) -> Result<PlanTable, PlanError> {
    let i = table.index_of(step_id)?;
    let status = table.steps[i].status;
    if status != StepStatus::InProgress {
        return Err(PlanError::IllegalTransition {
            step: step_id,
            status,
        });
    }
    let mut next = table.clone();
    let step = &mut next.steps[i];
    step.status = match outcome.status {
        OutcomeStatus::Done => StepStatus::Done,
        OutcomeStatus::Failed => StepStatus::Failed,
    };
    step.result_summary = Some(outcome.summary);
    next.revision += 1;
    Ok(next)
}

/// Decides the planner's next move and returns the table it leaves behind
/// (unchanged for `Wait` and `Finish`).
pub fn next_action(table: &PlanTable, policy: &RetryPolicy) -> (PlanTable, Dispatch) {
    if let Some(s) = table.in_progress() {
        return (table.clone(), Dispatch::Wait { step_id: s.step_id });
    }
    if let Some(i) = table
        .steps
        .iter()
        .position(|s| s.status == StepStatus::Failed)
    {
        if table.steps[i].retries_used >= policy.max_retries {
            return (table.clone(), Dispatch::Finish { complete: false });
        }
        let mut next = table.clone();
        let step = &mut next.steps[i];
        step.status = StepStatus::Pending;
        step.result_summary = None;
        step.retries_used += 1;
        next.revision += 1;
        let step_id = step.step_id;
        return (next, Dispatch::Replan { step_id });
    }
    let Some(i) = table
        .steps
        .iter()
        .position(|s| s.status == StepStatus::Pending)
    else {
        return (table.clone(), Dispatch::Finish { complete: true });
    };
    let mut next = table.clone();
    let mut params = next.steps[i].params.clone();
    for s in &table.steps {
        if let (StepStatus::Done, Some(summary)) = (s.status, &s.result_summary) {
            params.insert(format!("prior.{}", s.step_id), summary.clone());
        }
    }
    let step = &mut next.steps[i];
    params.insert("step_id".into(), step.step_id.to_string());
    params.insert("attempt".into(), (step.retries_used + 1).to_string());
    step.status = StepStatus::InProgress;
    next.revision += 1;
    let dispatch = Dispatch::Start {
        step_id: step.step_id,
        agent: step.assigned_agent.clone(),
        description: step.description.clone(),
        params,
    };
    (next, dispatch)
}
