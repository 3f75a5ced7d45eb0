use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoints::{evaluate_checkpoints, CheckpointOutcome};
use super::policies::{scripted_backend, PolicySet};
use super::registry::{agent_specs, isolation_policy, tool_specs, AgentIds};
use super::scenario::{build_scenario, Scenario};
use super::session::{termination_label, Activation, PlanRevision, Session, SessionEnd};
use super::toolkit::Toolkit;
use super::{HarnessError, Mode, TaskId};
use crate::agent::{
    Backend, Message, RemoteBackend, RemoteConfig, Termination, Transcript, DEFAULT_MAX_STEPS,
};
use crate::coi::ValidationResult;
use crate::control::{AuditEntry, ControlPlane, World};
use crate::domain::AgentId;
use crate::retriever::{ingest_corpus, shipped_corpus, Index};

/// Upper bound on agent activations per trial.
pub const ACTIVATION_CAP: usize = 64;

/// Where agents' messages come from.
#[derive(Clone, Debug)]
pub enum BackendChoice {
    /// Shipped policies; `None` picks the mode's benchmark set.
    Scripted(Option<PolicySet>),
    /// A chat-completions endpoint; each trial opens its own client.
    Remote(RemoteConfig),
}

impl BackendChoice {
    pub fn label(&self) -> &'static str {
        match self {
            BackendChoice::Scripted(_) => "scripted",
            BackendChoice::Remote(_) => "remote",
        }
    }

    fn policies(&self, mode: Mode) -> Option<PolicySet> {
        match self {
            BackendChoice::Scripted(p) => Some(p.unwrap_or_else(|| PolicySet::default_for(mode))),
            BackendChoice::Remote(_) => None,
        }
    }

    fn build(&self, mode: Mode) -> Result<Box<dyn Backend>, HarnessError> {
        Ok(match self {
            BackendChoice::Scripted(_) => Box::new(scripted_backend(
                mode,
                self.policies(mode).expect("scripted"),
            )),
            BackendChoice::Remote(cfg) => Box::new(RemoteBackend::new(cfg.clone())?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub task: TaskId,
    pub mode: Mode,
    pub backend: String,
    #[serde(default)]
    pub policies: Option<PolicySet>,
    pub trial_index: usize,
    pub seed: u64,
    pub checkpoints: Vec<CheckpointOutcome>,
    pub completed: bool,
    pub final_answer: Option<String>,
    pub session_end: SessionEnd,
    pub activations: usize,
    pub total_steps: usize,
    /// Activation count per termination reason.
    pub terminations: BTreeMap<String, usize>,
    /// Identity declarations validated, and how many passed.
    pub declarations_checked: usize,
    pub declarations_passed: usize,
}

impl TrialResult {
    /// `task/mode/index`, the pointer used in reports.
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.task, self.mode.as_str(), self.trial_index)
    }

    pub fn checkpoint(&self, id: &str) -> Option<&CheckpointOutcome> {
        self.checkpoints.iter().find(|c| c.id == id)
    }
}

/// Everything a trial produced; checkpoints are computed from this alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub mode: Mode,
    pub backend: String,
    pub policies: Option<PolicySet>,
    pub trial_index: usize,
    pub scenario: Scenario,
    pub final_world: World,
    pub activations: Vec<Activation>,
    pub plan_revisions: Vec<PlanRevision>,
    pub audit: Vec<AuditEntry>,
    pub final_answer: Option<String>,
    pub end: SessionEnd,
    pub restarts: u32,
}

/// One JSON Lines record of a trial log.
#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Trial {
        mode: Mode,
        backend: String,
        policies: Option<PolicySet>,
        trial_index: usize,
    },
    Scenario {
        scenario: Box<Scenario>,
    },
    Activation {
        index: usize,
        agent: AgentId,
        sender: Option<AgentId>,
        step_count: usize,
        termination: Termination,
        declaration: Option<ValidationResult>,
        error: Option<String>,
    },
    Message {
        activation: usize,
        message: Message,
    },
    PlanRevision(PlanRevision),
    Audit(AuditEntry),
    FinalWorld {
        world: Box<World>,
    },
    Outcome {
        final_answer: Option<String>,
        end: SessionEnd,
        restarts: u32,
    },
}

fn encode(e: serde_json::Error) -> HarnessError {
    HarnessError::Encoding(e.to_string())
}

impl TrialLog {
    /// Writes the log as JSON Lines: a header, the scenario, each activation
    /// followed by its messages (one per line), plan revisions, the audit,
    /// the final world and the outcome.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        let mut put = |r: &Record| -> Result<(), HarnessError> {
            serde_json::to_writer(&mut out, r).map_err(encode)?;
            out.write_all(b"\n")?;
            Ok(())
        };
        put(&Record::Trial {
            mode: self.mode,
            backend: self.backend.clone(),
            policies: self.policies,
            trial_index: self.trial_index,
        })?;
        put(&Record::Scenario {
            scenario: Box::new(self.scenario.clone()),
        })?;
        for a in &self.activations {
            let t = &a.transcript;
            put(&Record::Activation {
                index: a.index,
                agent: a.agent.clone(),
                sender: a.sender.clone(),
                step_count: t.step_count,
                termination: t.termination.clone(),
                declaration: t.declaration.clone(),
                error: t.error.clone(),
            })?;
            for m in &t.messages {
                put(&Record::Message {
                    activation: a.index,
                    message: m.clone(),
                })?;
            }
        }
        for p in &self.plan_revisions {
            put(&Record::PlanRevision(p.clone()))?;
        }
        for e in &self.audit {
            put(&Record::Audit(e.clone()))?;
        }
        put(&Record::FinalWorld {
            world: Box::new(self.final_world.clone()),
        })?;
        put(&Record::Outcome {
            final_answer: self.final_answer.clone(),
            end: self.end.clone(),
            restarts: self.restarts,
        })
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, HarnessError> {
        let mut header = None;
        let mut scenario = None;
        let mut final_world = None;
        let mut outcome = None;
        let mut activations: Vec<Activation> = Vec::new();
        let mut plan_revisions = Vec::new();
        let mut audit = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line).map_err(encode)? {
                Record::Trial {
                    mode,
                    backend,
                    policies,
                    trial_index,
                } => header = Some((mode, backend, policies, trial_index)),
                Record::Scenario { scenario: s } => scenario = Some(*s),
                Record::Activation {
                    index,
                    agent,
                    sender,
                    step_count,
                    termination,
                    declaration,
                    error,
                } => activations.push(Activation {
                    index,
                    agent: agent.clone(),
                    sender,
                    transcript: Transcript {
                        agent,
                        messages: Vec::new(),
                        step_count,
                        termination,
                        declaration,
                        error,
                    },
                }),
                Record::Message {
                    activation,
                    message,
                } => activations
                    .iter_mut()
                    .find(|a| a.index == activation)
                    .ok_or_else(|| {
                        HarnessError::Encoding(format!(
                            "message for unknown activation {activation}"
                        ))
                    })?
                    .transcript
                    .messages
                    .push(message),
                Record::PlanRevision(p) => plan_revisions.push(p),
                Record::Audit(e) => audit.push(e),
                Record::FinalWorld { world } => final_world = Some(*world),
                Record::Outcome {
                    final_answer,
                    end,
                    restarts,
                } => outcome = Some((final_answer, end, restarts)),
            }
        }
        let missing =
            |what: &str| HarnessError::Encoding(format!("trial log has no {what} record"));
        let (mode, backend, policies, trial_index) = header.ok_or_else(|| missing("trial"))?;
        let (final_answer, end, restarts) = outcome.ok_or_else(|| missing("outcome"))?;
        Ok(TrialLog {
            mode,
            backend,
            policies,
            trial_index,
            scenario: scenario.ok_or_else(|| missing("scenario"))?,
            final_world: final_world.ok_or_else(|| missing("final_world"))?,
            activations,
            plan_revisions,
            audit,
            final_answer,
            end,
            restarts,
        })
    }
}

fn shared_index() -> Arc<Index> {
    static INDEX: OnceLock<Arc<Index>> = OnceLock::new();
    INDEX
        .get_or_init(|| {
            Arc::new(ingest_corpus(&shipped_corpus()).expect("shipped corpus has unique ids"))
        })
        .clone()
}

fn root_agent(task: TaskId, mode: Mode) -> AgentId {
    AgentId::new(match (mode, task) {
        (Mode::SingleAgent, _) => AgentIds::OPERATOR,
        (_, TaskId::Task4) => AgentIds::BACKBONE_PLANNER,
        _ => AgentIds::PLANNER,
    })
}

/// Scores a finished log.
pub fn score(log: &TrialLog) -> TrialResult {
    let checkpoints = evaluate_checkpoints(log);
    let completed = checkpoints.iter().all(|c| c.pass)
        && log.end == SessionEnd::Final
        && log.final_answer.is_some();
    let mut terminations = BTreeMap::new();
    let mut declarations_checked = 0;
    let mut declarations_passed = 0;
    for a in &log.activations {
        *terminations
            .entry(termination_label(&a.transcript.termination).to_string())
            .or_insert(0) += 1;
        if let Some(d) = &a.transcript.declaration {
            declarations_checked += 1;
            declarations_passed += usize::from(d.pass);
        }
    }
    TrialResult {
        task: log.scenario.task,
        mode: log.mode,
        backend: log.backend.clone(),
        policies: log.policies,
        trial_index: log.trial_index,
        seed: log.scenario.seed,
        checkpoints,
        completed,
        final_answer: log.final_answer.clone(),
        session_end: log.end.clone(),
        activations: log.activations.len(),
        total_steps: log
            .activations
            .iter()
            .map(|a| a.transcript.step_count)
            .sum(),
        terminations,
        declarations_checked,
        declarations_passed,
    }
}

/// Runs one prepared scenario under `mode`.
pub fn run_scenario(
    scenario: Scenario,
    mode: Mode,
    backend: &BackendChoice,
    trial_index: usize,
) -> Result<(TrialResult, TrialLog), HarnessError> {
    let llm = backend.build(mode)?;
    let mut log = run_with_backend(scenario, mode, llm.as_ref(), trial_index);
    log.backend = backend.label().to_string();
    log.policies = backend.policies(mode);
    Ok((score(&log), log))
}

/// Runs one prepared scenario with a caller-supplied backend (recording,
/// replay, custom policies). The log's backend label is `custom`.
pub fn run_with_backend(
    scenario: Scenario,
    mode: Mode,
    llm: &dyn Backend,
    trial_index: usize,
) -> TrialLog {
    let agents = agent_specs(mode);
    let plane = ControlPlane::new(scenario.world.clone(), isolation_policy(mode));
    let mut kit = Toolkit::new(plane, agents, shared_index(), mode.coi());
    let tools = tool_specs();
    let session = Session {
        backend: llm,
        tools: &tools,
        max_steps: DEFAULT_MAX_STEPS,
        activation_cap: ACTIVATION_CAP,
    };
    let out = session.run(&root_agent(scenario.task, mode), &scenario.goal(), &mut kit);
    TrialLog {
        mode,
        backend: "custom".to_string(),
        policies: None,
        trial_index,
        scenario,
        final_world: kit.plane.world,
        activations: out.activations,
        plan_revisions: kit.revisions,
        audit: kit.plane.audit,
        final_answer: out.final_answer,
        end: out.end,
        restarts: out.restarts,
    }
}

pub fn run_task_logged(
    task: TaskId,
    mode: Mode,
    backend: &BackendChoice,
    seed: u64,
    trial_index: usize,
) -> Result<(TrialResult, TrialLog), HarnessError> {
    run_scenario(build_scenario(task, seed)?, mode, backend, trial_index)
}

pub fn run_task(
    task: TaskId,
    mode: Mode,
    backend: &BackendChoice,
    seed: u64,
) -> Result<TrialResult, HarnessError> {
    run_task_logged(task, mode, backend, seed, 0).map(|(r, _)| r)
}

/// `n` independent trials with seeds `base_seed + i`, run in parallel and
/// returned in order.
pub fn run_trials_logged(
    task: TaskId,
    mode: Mode,
    n: usize,
    base_seed: u64,
    backend: &BackendChoice,
) -> Result<Vec<(TrialResult, TrialLog)>, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Setup("at least one trial is required".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| run_task_logged(task, mode, backend, base_seed + i as u64, i))
        .collect()
}

pub fn run_trials(
    task: TaskId,
    mode: Mode,
    n: usize,
    base_seed: u64,
    backend: &BackendChoice,
) -> Result<Vec<TrialResult>, HarnessError> {
    Ok(run_trials_logged(task, mode, n, base_seed, backend)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}
