use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::consolidate::{base_class, ClassValue, ConsolidatedConstraintSet, Resolution};
use crate::planmodel::Diagnosis;
use crate::schema::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairActionKind {
    TargetedRetrieve,
    ConservativeMerge,
    HumanGate,
}

/// A field that failed a schema or grounding check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIssue {
    /// Index into the run's record list.
    pub record: usize,
    pub doc_id: String,
    pub part: String,
    pub field: Field,
    pub confidence: f64,
    pub problem: String,
}

impl FieldIssue {
    pub fn target(&self) -> String {
        format!("{}/{}/{}", self.doc_id, self.part, self.field.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RepairReport<'a> {
    Layer(&'a [FieldIssue]),
    Diagnosis(&'a Diagnosis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairAction {
    pub action: RepairActionKind,
    /// Field references (`doc/part/field`) or cluster ids.
    pub targets: Vec<String>,
    pub rationale: String,
}

impl RepairAction {
    fn gate(rationale: impl Into<String>) -> Self {
        Self {
            action: RepairActionKind::HumanGate,
            targets: Vec::new(),
            rationale: rationale.into(),
        }
    }
}

/// Maps a failed verdict to the next repair. Clusters in `forced` were
/// merged already and are not offered again.
pub fn select_repair_action(
    report: &RepairReport<'_>,
    consolidated: &ConsolidatedConstraintSet,
    forced: &BTreeSet<String>,
) -> RepairAction {
    match report {
        RepairReport::Layer(issues) => {
            if issues.is_empty() {
                return RepairAction::gate("no failing field to re-extract");
            }
            let mut ordered: Vec<&FieldIssue> = issues.iter().collect();
            ordered.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then_with(|| a.target().cmp(&b.target())));
            let mut targets: Vec<String> = Vec::new();
            for issue in ordered {
                let t = issue.target();
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            RepairAction {
                action: RepairActionKind::TargetedRetrieve,
                rationale: format!("{} failing fields, lowest confidence first", targets.len()),
                targets,
            }
        }
        RepairReport::Diagnosis(d) => {
            let Some(family) = d.dominant_family else {
                return RepairAction::gate("diagnosis names no dominant family");
            };
            let Some(field) = family.field() else {
                return RepairAction::gate(format!("{} slack has no contract field behind it", family.as_str()));
            };
            if base_class(field).0 != ClassValue::AMonotone {
                return RepairAction::gate(format!("{} is not a monotone field", field.as_str()));
            }
            let targets: Vec<String> = d
                .implicated_clusters
                .iter()
                .filter(|id| !forced.contains(*id))
                .filter(|id| {
                    consolidated
                        .by_cluster_id(id)
                        .is_some_and(|e| e.key.field == field && e.resolution == Resolution::Precedence)
                })
                .cloned()
                .collect();
            if targets.is_empty() {
                return RepairAction::gate(format!("no conflicted {} cluster left to merge", field.as_str()));
            }
            RepairAction {
                action: RepairActionKind::ConservativeMerge,
                rationale: format!("dominant slack in {}", family.as_str()),
                targets,
            }
        }
    }
}
