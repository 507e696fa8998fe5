use serde::{Deserialize, Serialize};

use super::{ConflictCluster, FieldValue};
use crate::corpus::EvidenceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    GroundingFailure,
    ClassCConflict,
    ScopeUnresolved,
    ApprovalMissing,
    Ambiguity,
}

impl GateReason {
    pub fn as_str(self) -> &'static str {
        match self {
            GateReason::GroundingFailure => "grounding_failure",
            GateReason::ClassCConflict => "class_c_conflict",
            GateReason::ScopeUnresolved => "scope_unresolved",
            GateReason::ApprovalMissing => "approval_missing",
            GateReason::Ambiguity => "ambiguity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOption {
    pub option_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<FieldValue>,
    #[serde(default)]
    pub evidence: Vec<EvidenceSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRequest {
    pub gate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ConflictCluster>,
    pub question: String,
    pub options: Vec<GateOption>,
    pub reason: GateReason,
}

/// Who resolved a gate and how.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attestation {
    pub gate_id: String,
    pub option_id: String,
    pub resolved_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A human resolution pinned for the rest of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnedValue {
    pub value: FieldValue,
    #[serde(default)]
    pub provenance: Vec<EvidenceSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attestation: Option<Attestation>,
}

impl PinnedValue {
    pub(crate) fn justification(&self, gate_id: &str) -> String {
        match &self.attestation {
            Some(a) => format!(
                "human resolution of {gate_id}: option {} ({}) attested by {}",
                a.option_id, self.value, a.resolved_by
            ),
            None => format!("human resolution of {gate_id}: {}", self.value),
        }
    }
}

impl GateRequest {
    fn value_options(cluster: &ConflictCluster) -> Vec<GateOption> {
        let mut options: Vec<GateOption> = Vec::new();
        for value in cluster.distinct_values() {
            let holders: Vec<_> = cluster.candidates.iter().filter(|c| &c.value == value).collect();
            let mut evidence: Vec<EvidenceSpan> = holders.iter().flat_map(|c| c.evidence()).collect();
            evidence.sort();
            evidence.dedup();
            let sources: Vec<String> = holders.iter().map(|c| c.label()).collect();
            options.push(GateOption {
                option_id: format!("opt-{}", options.len() + 1),
                label: format!("{value} per {}", sources.join(", ")),
                value: Some(value.clone()),
                evidence,
            });
        }
        options
    }

    /// Gate for a conflict no rule or safe merge can settle.
    pub fn conflict(cluster: &ConflictCluster, gate_id: String, reason: GateReason) -> Self {
        let options = Self::value_options(cluster);
        let listed: Vec<&str> = options.iter().map(|o| o.label.as_str()).collect();
        let question = format!(
            "Which document is authoritative for {}? Candidates: {}.",
            cluster.key.describe(),
            listed.join("; ")
        );
        Self {
            gate_id,
            cluster: Some(cluster.clone()),
            question,
            options,
            reason,
        }
    }

    /// Gate for a field whose value depends on a condition that cannot be
    /// collapsed safely.
    pub fn conditional(cluster: &ConflictCluster, gate_id: String) -> Self {
        let field = cluster.key.field;
        let mut options = Self::value_options(cluster);
        let mut effects = Vec::new();
        for c in &cluster.candidates {
            for cond in c.source.conditions_on(field) {
                effects.push(format!("\"{}\"", cond.effect_text));
                options.push(GateOption {
                    option_id: format!("opt-{}", options.len() + 1),
                    label: format!("apply condition: {}", cond.effect_text),
                    value: None,
                    evidence: cond.evidence.clone(),
                });
            }
        }
        let question = format!(
            "{} is modified by a conditional clause ({}). Which value should planning enforce?",
            cluster.key.describe(),
            effects.join(", ")
        );
        Self {
            gate_id,
            cluster: Some(cluster.clone()),
            question,
            options,
            reason: GateReason::ClassCConflict,
        }
    }

    /// Gate not tied to a consolidation cluster.
    pub fn other(gate_id: String, question: String, options: Vec<GateOption>, reason: GateReason) -> Self {
        Self {
            gate_id,
            cluster: None,
            question,
            options,
            reason,
        }
    }

    pub fn option(&self, option_id: &str) -> Option<&GateOption> {
        self.options.iter().find(|o| o.option_id == option_id)
    }
}
