//! The four lifecycle tasks: scenarios, agent registries, scripted
//! policies, the multi-agent session, checkpoint evaluation, trials and
//! reports.

mod checkpoints;
mod policies;
mod registry;
mod report;
mod scenario;
mod session;
mod toolkit;
mod trial;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoints::{evaluate_checkpoints, CheckpointOutcome};
pub use policies::{fnv1a, scripted_backend, PolicySet, OVERWHELM_BUDGET_CHARS};
pub use registry::{agent_specs, isolation_policy, tool_specs, AgentIds};
pub use report::{
    build_report, emit_report, read_results, ChecklistEntry, ComparisonRow, Evidence, Headline,
    L4Checklist, Report, SummaryRow, HEADLINE_NA, L4_CRITERIA,
};
pub use scenario::{build_scenario, Scenario, WavelengthRequest, TASK4_QUERY};
pub use session::{Activation, PlanRevision, SessionEnd, SessionOutcome};
pub use toolkit::Toolkit;
pub use trial::{
    run_scenario, run_task, run_task_logged, run_trials, run_trials_logged, run_with_backend,
    score, BackendChoice, TrialLog, TrialResult, ACTIVATION_CAP,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("scenario setup failed: {0}")]
    Setup(String),
    #[error("backend setup failed: {0}")]
    Backend(#[from] crate::agent::BackendError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report encoding: {0}")]
    Encoding(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskId {
    #[serde(rename = "task1")]
    Task1,
    #[serde(rename = "task2")]
    Task2,
    #[serde(rename = "task3")]
    Task3,
    #[serde(rename = "task4")]
    Task4,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::Task1, TaskId::Task2, TaskId::Task3, TaskId::Task4];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Task1 => "task1",
            TaskId::Task2 => "task2",
            TaskId::Task3 => "task3",
            TaskId::Task4 => "task4",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TaskId::Task1 => "real-time resource allocation",
            TaskId::Task2 => "backbone wavelength establishment",
            TaskId::Task3 => "DCI failure management",
            TaskId::Task4 => "backbone failure management",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("task").unwrap_or(s);
        match s {
            "1" => Ok(TaskId::Task1),
            "2" => Ok(TaskId::Task2),
            "3" => Ok(TaskId::Task3),
            "4" => Ok(TaskId::Task4),
            _ => Err(format!("unknown task `{s}`")),
        }
    }
}

/// Agent organisation under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Planners plus domain agents with strict identity checks.
    Autolight,
    /// One agent holding every task tool.
    SingleAgent,
    /// The multi-agent organisation with identity checks off.
    NaiveMulti,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Autolight, Mode::SingleAgent, Mode::NaiveMulti];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Autolight => "autolight",
            Mode::SingleAgent => "single_agent",
            Mode::NaiveMulti => "naive_multi",
        }
    }

    pub fn coi(self) -> crate::agent::CoiMode {
        match self {
            Mode::Autolight => crate::agent::CoiMode::Strict,
            Mode::SingleAgent | Mode::NaiveMulti => crate::agent::CoiMode::Off,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "autolight" => Ok(Mode::Autolight),
            "single" | "single_agent" => Ok(Mode::SingleAgent),
            "naive" | "naive_multi" => Ok(Mode::NaiveMulti),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}
