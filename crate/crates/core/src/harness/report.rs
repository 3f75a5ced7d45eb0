use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trial::TrialResult;
use super::{HarnessError, Mode, TaskId};

/// Headline cell when the run used scripted backends.
pub const HEADLINE_NA: &str = "n/a (scripted)";

/// The six L4 evaluation criteria.
pub const L4_CRITERIA: [&str; 6] = [
    "Execution",
    "Awareness",
    "Analysis",
    "Decision",
    "Intent/Experience",
    "Cross-domain",
];

/// Checkpoints that evidence each criterion, as (task, checkpoints that
/// must all pass in one trial).
fn criterion_sources(criterion: &str) -> &'static [(TaskId, &'static [&'static str])] {
    match criterion {
        "Execution" => &[(TaskId::Task1, &["c4"]), (TaskId::Task2, &["c3"])],
        "Awareness" => &[(TaskId::Task3, &["c1"]), (TaskId::Task4, &["c2", "c3"])],
        "Analysis" => &[
            (TaskId::Task3, &["c2", "c3"]),
            (TaskId::Task4, &["c4", "c5"]),
        ],
        "Decision" => &[(TaskId::Task1, &["c3"]), (TaskId::Task3, &["c4"])],
        "Intent/Experience" => &[(TaskId::Task2, &["c1", "c5"])],
        "Cross-domain" => &[(TaskId::Task4, &["c2", "c3"])],
        _ => &[],
    }
}

fn criterion_description(criterion: &str) -> &'static str {
    match criterion {
        "Execution" => "configuration changes applied through domain controllers",
        "Awareness" => "network state and anomalies observed from monitors and alarms",
        "Analysis" => "failures classified and localized from evidence",
        "Decision" => "remediation and allocation decisions computed",
        "Intent/Experience" => "operator intent parsed into a request and completion reported back",
        "Cross-domain" => "one workflow spanning the controllers of both backbone domains",
        _ => "",
    }
}

/// One row of summary.csv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// `completion` or `checkpoint`.
    pub section: String,
    pub task: String,
    pub mode: String,
    /// Checkpoint id, or `all` for completion rows.
    pub checkpoint: String,
    pub trials: usize,
    pub passed: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// Trial pointer `task/mode/index`.
    pub trial: String,
    pub checkpoints: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistEntry {
    pub criterion: String,
    pub description: String,
    pub evidence: Vec<Evidence>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct L4Checklist {
    pub criteria: Vec<ChecklistEntry>,
}

/// Per-task completion rate of each mode; `None` when the mode was not run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: String,
    pub autolight: Option<f64>,
    pub single_agent: Option<f64>,
    pub naive_multi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub autolight_completion: String,
    pub single_agent_completion: String,
    pub improvement: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
    pub comparison: Vec<ComparisonRow>,
    pub headline: Headline,
    pub l4_checklist: L4Checklist,
}

fn rate(passed: usize, trials: usize) -> f64 {
    if trials == 0 {
        0.0
    } else {
        passed as f64 / trials as f64
    }
}

fn summary(results: &[TrialResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(TaskId, Mode), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.task, r.mode)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((task, mode), rs) in &groups {
        let passed = rs.iter().filter(|r| r.completed).count();
        rows.push(SummaryRow {
            section: "completion".into(),
            task: task.to_string(),
            mode: mode.as_str().into(),
            checkpoint: "all".into(),
            trials: rs.len(),
            passed,
            rate: rate(passed, rs.len()),
        });
    }
    for ((task, mode), rs) in &groups {
        let mut ids: Vec<&str> = rs
            .iter()
            .flat_map(|r| r.checkpoints.iter().map(|c| c.id.as_str()))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            let passed = rs
                .iter()
                .filter(|r| r.checkpoint(id).is_some_and(|c| c.pass))
                .count();
            rows.push(SummaryRow {
                section: "checkpoint".into(),
                task: task.to_string(),
                mode: mode.as_str().into(),
                checkpoint: id.into(),
                trials: rs.len(),
                passed,
                rate: rate(passed, rs.len()),
            });
        }
    }
    rows
}

fn completion_rate(results: &[TrialResult], task: Option<TaskId>, mode: Mode) -> Option<f64> {
    let rs: Vec<_> = results
        .iter()
        .filter(|r| r.mode == mode && task.is_none_or(|t| r.task == t))
        .collect();
    (!rs.is_empty()).then(|| rate(rs.iter().filter(|r| r.completed).count(), rs.len()))
}

fn headline(results: &[TrialResult]) -> Headline {
    let live = results.iter().all(|r| r.backend == "remote");
    let auto = completion_rate(results, None, Mode::Autolight);
    let single = completion_rate(results, None, Mode::SingleAgent);
    let pct = |r: Option<f64>| r.map_or("not run".to_string(), |r| format!("{:.1}%", 100.0 * r));
    if !live {
        return Headline {
            autolight_completion: HEADLINE_NA.into(),
            single_agent_completion: HEADLINE_NA.into(),
            improvement: HEADLINE_NA.into(),
        };
    }
    let improvement = match (auto, single) {
        (Some(a), Some(s)) if s > 0.0 => format!("{:.2}x", a / s),
        (Some(_), Some(_)) => "unbounded (single-agent rate is 0)".into(),
        _ => "not run".into(),
    };
    Headline {
        autolight_completion: pct(auto),
        single_agent_completion: pct(single),
        improvement,
    }
}

fn checklist(results: &[TrialResult]) -> L4Checklist {
    let criteria = L4_CRITERIA
        .iter()
        .map(|&criterion| {
            let mut evidence = Vec::new();
            for (task, cps) in criterion_sources(criterion) {
                for r in results.iter().filter(|r| r.task == *task) {
                    if cps.iter().all(|c| r.checkpoint(c).is_some_and(|o| o.pass)) {
                        evidence.push(Evidence {
                            trial: r.id(),
                            checkpoints: cps.iter().map(|c| c.to_string()).collect(),
                        });
                    }
                }
            }
            ChecklistEntry {
                criterion: criterion.into(),
                description: criterion_description(criterion).into(),
                evidence,
            }
        })
        .collect();
    L4Checklist { criteria }
}

pub fn build_report(results: &[TrialResult]) -> Report {
    let comparison = TaskId::ALL
        .iter()
        .filter(|t| results.iter().any(|r| r.task == **t))
        .map(|&t| ComparisonRow {
            task: t.to_string(),
            autolight: completion_rate(results, Some(t), Mode::Autolight),
            single_agent: completion_rate(results, Some(t), Mode::SingleAgent),
            naive_multi: completion_rate(results, Some(t), Mode::NaiveMulti),
        })
        .collect();
    Report {
        trials: results.to_vec(),
        summary: summary(results),
        comparison,
        headline: headline(results),
        l4_checklist: checklist(results),
    }
}

/// Writes report.json, summary.csv and l4_checklist.json into `out_dir`.
pub fn emit_report(results: &[TrialResult], out_dir: &Path) -> Result<Report, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Setup("no trial results to report".into()));
    }
    let report = build_report(results);
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("report.json"), pretty(&report)?)?;
    fs::write(
        out_dir.join("l4_checklist.json"),
        pretty(&report.l4_checklist)?,
    )?;
    let mut w = csv::Writer::from_path(out_dir.join("summary.csv")).map_err(csv_err)?;
    for row in &report.summary {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(report)
}

fn csv_err(e: csv::Error) -> HarnessError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::Io(io),
            _ => unreachable!("checked"),
        }
    } else {
        HarnessError::Encoding(e.to_string())
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(v).map_err(|e| HarnessError::Encoding(e.to_string()))
}

/// Trial results stored in `dir/report.json`.
pub fn read_results(dir: &Path) -> Result<Vec<TrialResult>, HarnessError> {
    let text = fs::read_to_string(dir.join("report.json"))?;
    let report: Report =
        serde_json::from_str(&text).map_err(|e| HarnessError::Encoding(e.to_string()))?;
    Ok(report.trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::session::SessionEnd;
    use crate::harness::CheckpointOutcome;

    fn result(task: TaskId, mode: Mode, i: usize, completed: bool) -> TrialResult {
        TrialResult {
            task,
            mode,
            backend: "scripted".into(),
            policies: None,
            trial_index: i,
            seed: i as u64,
            checkpoints: (1..=5)
                .map(|c| CheckpointOutcome {
                    id: format!("c{c}"),
                    description: String::new(),
                    pass: completed,
                    detail: String::new(),
                })
                .collect(),
            completed,
            final_answer: None,
            session_end: SessionEnd::Final,
            activations: 1,
            total_steps: 1,
            terminations: BTreeMap::new(),
            declarations_checked: 0,
            declarations_passed: 0,
        }
    }

    #[test]
    fn completion_rates_are_fractions() {
        let rs: Vec<_> = (0..10)
            .map(|i| result(TaskId::Task1, Mode::Autolight, i, i < 3))
            .collect();
        let rows = summary(&rs);
        assert_eq!(rows[0].rate, 0.3);
        let all: Vec<_> = (0..10)
            .map(|i| result(TaskId::Task1, Mode::Autolight, i, true))
            .collect();
        assert_eq!(summary(&all)[0].rate, 1.0);
    }

    #[test]
    fn scripted_runs_mark_the_headline_unavailable() {
        let rs = vec![result(TaskId::Task4, Mode::Autolight, 0, true)];
        let r = build_report(&rs);
        assert_eq!(r.headline.autolight_completion, HEADLINE_NA);
        let cross = r
            .l4_checklist
            .criteria
            .iter()
            .find(|c| c.criterion == "Cross-domain")
            .unwrap();
        assert_eq!(cross.evidence[0].trial, "task4/autolight/0");
    }
}
