//! Cross-document consistency: clustering by applicability key, precedence
//! resolution, conservative merging of monotone clauses, and gate requests
//! for everything that cannot be settled safely.

mod gate;
mod window;

pub use gate::{Attestation, GateOption, GateReason, GateRequest, PinnedValue};
pub use window::EffectiveWindow;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{DocType, EvidenceSpan};
use crate::schema::{Field, LeadTimeProfile, Moq, NormalizedConstraint, PriceTier, Scope, SubstitutionPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsolidateError {
    #[error("field `{0}` is not a schema field")]
    UnknownField(String),
    #[error("{field} is {class:?}; conservative merge applies to Class A only")]
    NotClassA { field: Field, class: ClassValue },
}

/// A single consolidated value for one cluster key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FieldValue {
    Moq(Moq),
    LeadTime(LeadTimeProfile),
    Capacity(u32),
    OrderInterval(u32),
    PriceTiers(Vec<PriceTier>),
    Substitution(SubstitutionPolicy),
}

impl FieldValue {
    pub fn of(c: &NormalizedConstraint, field: Field) -> Option<Self> {
        match field {
            Field::Moq => c.moq.map(FieldValue::Moq),
            Field::LeadTime => c.lead_time.clone().map(FieldValue::LeadTime),
            Field::CapacityPerPeriod => c.capacity_per_period.map(FieldValue::Capacity),
            Field::OrderInterval => c.order_interval.map(FieldValue::OrderInterval),
            Field::PriceTiers => {
                (!c.price_tiers.is_empty()).then(|| FieldValue::PriceTiers(c.price_tiers.clone()))
            }
            Field::SubstitutionPolicy => c.substitution_policy.map(FieldValue::Substitution),
            Field::Conditions => None,
        }
    }

    pub fn field(&self) -> Field {
        match self {
            FieldValue::Moq(_) => Field::Moq,
            FieldValue::LeadTime(_) => Field::LeadTime,
            FieldValue::Capacity(_) => Field::CapacityPerPeriod,
            FieldValue::OrderInterval(_) => Field::OrderInterval,
            FieldValue::PriceTiers(_) => Field::PriceTiers,
            FieldValue::Substitution(_) => Field::SubstitutionPolicy,
        }
    }

    /// Scalar used by the restrictiveness order of monotone fields.
    fn scalar(&self) -> Option<u32> {
        match self {
            FieldValue::Moq(m) => Some(m.units()),
            FieldValue::LeadTime(l) => Some(l.max_periods()),
            FieldValue::Capacity(c) | FieldValue::OrderInterval(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Moq(Moq::Units(u)) => write!(f, "{u} units"),
            FieldValue::Moq(Moq::NotApplicable) => f.write_str("no MOQ"),
            FieldValue::LeadTime(l) => {
                write!(f, "{} periods", l.standard)?;
                for p in &l.peaks {
                    write!(f, " ({} periods for orders in {})", p.periods, p.window)?;
                }
                Ok(())
            }
            FieldValue::Capacity(c) => write!(f, "{c} units per period"),
            FieldValue::OrderInterval(i) => write!(f, "{i} periods"),
            FieldValue::PriceTiers(t) => {
                let parts: Vec<String> = t
                    .iter()
                    .map(|t| format!(">={} @ {:.2}", t.threshold, t.unit_price))
                    .collect();
                f.write_str(&parts.join("; "))
            }
            FieldValue::Substitution(p) => write!(f, "{p:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterKey {
    pub supplier_id: String,
    pub part_id: String,
    pub field: Field,
    pub scope: Scope,
    pub window: EffectiveWindow,
}

impl ClusterKey {
    /// Content hash of the key; stable across runs.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("cluster key serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hex::encode(&hash[..6])
    }

    pub fn cluster_id(&self) -> String {
        format!("cl-{}", self.digest())
    }

    pub fn gate_id(&self) -> String {
        format!("gate-{}", self.digest())
    }

    pub fn describe(&self) -> String {
        format!(
            "{} on part {} (supplier {}, {}, {})",
            self.field.display_name(),
            self.part_id,
            self.supplier_id,
            self.scope,
            self.window
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: FieldValue,
    pub source: NormalizedConstraint,
}

impl Candidate {
    pub fn evidence(&self) -> Vec<EvidenceSpan> {
        self.source.field_evidence(self.value.field())
    }

    fn label(&self) -> String {
        format!("{}@{}", self.source.doc_id, self.source.source.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictCluster {
    pub key: ClusterKey,
    pub candidates: Vec<Candidate>,
    /// Produced by splitting overlapping but unequal windows.
    pub overlap: bool,
}

impl ConflictCluster {
    pub fn distinct_values(&self) -> Vec<&FieldValue> {
        let mut out: Vec<&FieldValue> = Vec::new();
        for c in &self.candidates {
            if !out.contains(&&c.value) {
                out.push(&c.value);
            }
        }
        out
    }

    pub fn is_conflict(&self) -> bool {
        self.distinct_values().len() > 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassValue {
    #[serde(rename = "A_monotone")]
    AMonotone,
    #[serde(rename = "B_eligibility")]
    BEligibility,
    #[serde(rename = "C_unsafe")]
    CUnsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LargerRestrictive,
    SmallerRestrictive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseClass {
    pub value: ClassValue,
    pub direction: Option<Direction>,
    /// Escalated to Class C by attached conditions that only relax the
    /// constraint, so ignoring them is feasibility-safe.
    pub collapsible: bool,
}

/// Taxonomy class of a field before conditions are considered.
pub fn base_class(field: Field) -> (ClassValue, Option<Direction>) {
    match field {
        Field::Moq | Field::LeadTime | Field::OrderInterval => {
            (ClassValue::AMonotone, Some(Direction::LargerRestrictive))
        }
        Field::CapacityPerPeriod => (ClassValue::AMonotone, Some(Direction::SmallerRestrictive)),
        Field::PriceTiers => (ClassValue::BEligibility, None),
        Field::SubstitutionPolicy | Field::Conditions => (ClassValue::CUnsafe, None),
    }
}

/// Taxonomy class of a field instance. Conditions targeting the field
/// escalate it to Class C; `collapsible` records whether every such
/// condition only relaxes the unconditioned value.
pub fn classify(field: Field, record: &NormalizedConstraint) -> ClauseClass {
    let (value, direction) = base_class(field);
    let conditions = record.conditions_on(field);
    if conditions.is_empty() || value != ClassValue::AMonotone {
        return ClauseClass {
            value,
            direction,
            collapsible: false,
        };
    }
    let base = FieldValue::of(record, field).and_then(|v| v.scalar());
    let relaxes = |effect: f64| match (base, direction) {
        (Some(b), Some(Direction::LargerRestrictive)) => effect < b as f64,
        (Some(b), Some(Direction::SmallerRestrictive)) => effect > b as f64,
        _ => false,
    };
    let collapsible = conditions
        .iter()
        .all(|c| c.effect().is_some_and(|(_, v)| relaxes(v)));
    ClauseClass {
        value: ClassValue::CUnsafe,
        direction,
        collapsible,
    }
}

/// [`classify`] addressed by field name.
pub fn classify_named(field: &str, record: &NormalizedConstraint) -> Result<ClauseClass, ConsolidateError> {
    let field: Field = field
        .parse()
        .map_err(|_| ConsolidateError::UnknownField(field.to_string()))?;
    Ok(classify(field, record))
}

/// Groups field instances by applicability key. Instances for the same
/// (supplier, part, field, scope) with overlapping but unequal windows are
/// split into maximal disjoint sub-windows.
pub fn cluster(constraints: &[NormalizedConstraint]) -> Vec<ConflictCluster> {
    type Group = (String, String, Field, Scope);
    let mut groups: BTreeMap<Group, Vec<(EffectiveWindow, Candidate)>> = BTreeMap::new();
    for c in constraints {
        for field in Field::ALL {
            let Some(value) = FieldValue::of(c, field) else {
                continue;
            };
            groups
                .entry((c.supplier_id.clone(), c.part_id.clone(), field, c.scope.clone()))
                .or_default()
                .push((
                    EffectiveWindow::of(c.effective_start, c.effective_end),
                    Candidate {
                        value,
                        source: c.clone(),
                    },
                ));
        }
    }

    let mut out = Vec::new();
    for ((supplier_id, part_id, field, scope), members) in groups {
        let windows: Vec<EffectiveWindow> = members.iter().map(|(w, _)| *w).collect();
        let all_equal = windows.iter().all(|w| *w == windows[0]);
        for (window, idx) in window::split(&windows) {
            out.push(ConflictCluster {
                key: ClusterKey {
                    supplier_id: supplier_id.clone(),
                    part_id: part_id.clone(),
                    field,
                    scope: scope.clone(),
                    window,
                },
                candidates: idx.iter().map(|&i| members[i].1.clone()).collect(),
                overlap: !all_equal && idx.len() > 1,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecedenceRule {
    EffectiveDate,
    AmendmentLanguage,
    DocumentType,
}

impl PrecedenceRule {
    fn describe(self) -> &'static str {
        match self {
            PrecedenceRule::EffectiveDate => "newer effective date supersedes older",
            PrecedenceRule::AmendmentLanguage => "explicit amendment language",
            PrecedenceRule::DocumentType => "document-type ranking (signed addendum > master > email)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Precedence {
    Resolved {
        value: FieldValue,
        rule: PrecedenceRule,
        winners: Vec<usize>,
        justification: String,
    },
    Unresolved {
        /// The remaining candidates are signed addenda with the same date.
        tied_signed_addenda: bool,
        remaining: Vec<usize>,
    },
}

fn doc_rank(c: &NormalizedConstraint) -> u8 {
    match c.source.doc_type {
        DocType::Addendum if c.source.signed => 3,
        DocType::Master => 2,
        DocType::Email => 1,
        _ => 0,
    }
}

/// Applies, in order: effective dates, amendment language, document-type
/// ranking. Each rule narrows the candidate set to its top group; the
/// cluster resolves as soon as the remaining candidates agree on a value.
pub fn resolve_precedence(cluster: &ConflictCluster) -> Precedence {
    let cands = &cluster.candidates;
    let mut remaining: Vec<usize> = (0..cands.len()).collect();
    let agree = |set: &[usize]| set.iter().all(|&i| cands[i].value == cands[set[0]].value);

    let narrow = |rule: PrecedenceRule, top: Vec<usize>, remaining: &mut Vec<usize>| -> Option<Precedence> {
        if top.is_empty() || top.len() == remaining.len() {
            return None;
        }
        *remaining = top;
        agree(remaining).then(|| {
            let value = cands[remaining[0]].value.clone();
            let losers: Vec<String> = (0..cands.len())
                .filter(|i| !remaining.contains(i))
                .map(|i| format!("{} from {}", cands[i].value, cands[i].label()))
                .collect();
            let winners: Vec<String> = remaining.iter().map(|&i| cands[i].label()).collect();
            Precedence::Resolved {
                justification: format!(
                    "precedence: {}; {} from {} over {}",
                    rule.describe(),
                    value,
                    winners.join(", "),
                    losers.join(", ")
                ),
                value,
                rule,
                winners: remaining.clone(),
            }
        })
    };

    if remaining.iter().all(|&i| cands[i].source.effective_start.is_some()) {
        let newest = remaining
            .iter()
            .filter_map(|&i| cands[i].source.effective_start)
            .max();
        let top = remaining
            .iter()
            .copied()
            .filter(|&i| cands[i].source.effective_start == newest)
            .collect();
        if let Some(p) = narrow(PrecedenceRule::EffectiveDate, top, &mut remaining) {
            return p;
        }
    }
    let top = remaining
        .iter()
        .copied()
        .filter(|&i| cands[i].source.source.amends)
        .collect();
    if let Some(p) = narrow(PrecedenceRule::AmendmentLanguage, top, &mut remaining) {
        return p;
    }
    let best = remaining.iter().map(|&i| doc_rank(&cands[i].source)).max().unwrap_or(0);
    if best > 0 {
        let top = remaining
            .iter()
            .copied()
            .filter(|&i| doc_rank(&cands[i].source) == best)
            .collect();
        if let Some(p) = narrow(PrecedenceRule::DocumentType, top, &mut remaining) {
            return p;
        }
    }
    let tied_signed_addenda = remaining.len() > 1
        && remaining.iter().all(|&i| doc_rank(&cands[i].source) == 3)
        && remaining
            .iter()
            .all(|&i| cands[i].source.effective_start == cands[remaining[0]].source.effective_start);
    Precedence::Unresolved {
        tied_signed_addenda,
        remaining,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub value: FieldValue,
    pub justification: String,
    pub provenance: Vec<EvidenceSpan>,
}

/// Most restrictive candidate value: maximum where larger is more
/// restrictive (MOQ, lead time, interval), minimum for capacity. Lead-time
/// profiles merge pointwise.
pub fn conservative_merge(cluster: &ConflictCluster, class: ClauseClass) -> Result<MergeOutcome, ConsolidateError> {
    let field = cluster.key.field;
    let direction = match (class.value, class.direction) {
        (ClassValue::AMonotone, Some(d)) => d,
        (ClassValue::CUnsafe, Some(d)) if class.collapsible => d,
        _ => {
            return Err(ConsolidateError::NotClassA {
                field,
                class: class.value,
            })
        }
    };
    let cands = &cluster.candidates;
    if cands.is_empty() {
        return Err(ConsolidateError::NotClassA {
            field,
            class: class.value,
        });
    }
    let value = match field {
        Field::LeadTime => {
            let mut merged: Option<LeadTimeProfile> = None;
            for c in cands {
                if let FieldValue::LeadTime(l) = &c.value {
                    merged = Some(match merged {
                        Some(m) => m.pointwise_max(l),
                        None => l.clone(),
                    });
                }
            }
            FieldValue::LeadTime(merged.expect("lead-time candidates"))
        }
        _ => {
            let pick = cands
                .iter()
                .map(|c| &c.value)
                .reduce(|a, b| {
                    let (x, y) = (a.scalar().unwrap_or(0), b.scalar().unwrap_or(0));
                    let b_wins = match direction {
                        Direction::LargerRestrictive => y > x,
                        Direction::SmallerRestrictive => y < x,
                    };
                    if b_wins {
                        b
                    } else {
                        a
                    }
                })
                .expect("non-empty");
            pick.clone()
        }
    };

    // Provenance: candidates whose value equals the merged value, the most
    // recent effective date first; for a pointwise lead-time merge, every
    // candidate contributes.
    let mut holders: Vec<&Candidate> = cands.iter().filter(|c| c.value == value).collect();
    if holders.is_empty() {
        holders = cands.iter().collect();
    } else {
        holders.sort_by(|a, b| {
            b.source
                .effective_start
                .cmp(&a.source.effective_start)
                .then_with(|| a.label().cmp(&b.label()))
        });
        holders.truncate(1);
    }
    let mut provenance: Vec<EvidenceSpan> = holders.iter().flat_map(|c| c.evidence()).collect();
    provenance.sort();
    provenance.dedup();

    let listed: Vec<String> = cands
        .iter()
        .map(|c| format!("{} from {}", c.value, c.label()))
        .collect();
    let op = match direction {
        Direction::LargerRestrictive => "max",
        Direction::SmallerRestrictive => "min",
    };
    Ok(MergeOutcome {
        justification: format!(
            "conservative merge ({op}) over {{{}}} -> {value}",
            listed.join("; ")
        ),
        value,
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    SingleSource,
    Precedence,
    ConservativeMerge,
    HumanResolution,
}

/// A conditional clause ignored in favour of the stricter base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseNote {
    pub effect: String,
    pub evidence: Vec<EvidenceSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedEntry {
    pub cluster_id: String,
    pub key: ClusterKey,
    pub value: FieldValue,
    pub resolution: Resolution,
    pub justification: String,
    pub provenance: Vec<EvidenceSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attestation: Option<Attestation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collapsed_conditions: Vec<CollapseNote>,
    /// Lowest extraction confidence among contributing sources.
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedConstraintSet {
    pub entries: Vec<ConsolidatedEntry>,
}

impl ConsolidatedConstraintSet {
    pub fn get(&self, key: &ClusterKey) -> Option<&ConsolidatedEntry> {
        self.entries.iter().find(|e| &e.key == key)
    }

    pub fn by_cluster_id(&self, id: &str) -> Option<&ConsolidatedEntry> {
        self.entries.iter().find(|e| e.cluster_id == id)
    }

    pub fn for_line(&self, supplier: &str, part: &str, field: Field) -> Vec<&ConsolidatedEntry> {
        self.entries
            .iter()
            .filter(|e| e.key.supplier_id == supplier && e.key.part_id == part && e.key.field == field)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationPolicy {
    /// Enforce the unconditioned value when attached conditions only relax it.
    pub collapse_conditionals: bool,
    /// Compile a missing MOQ as "no MOQ" instead of refusing.
    pub allow_absent_moq: bool,
    /// Merge unresolved Class A conflicts instead of gating them.
    pub conservative_merge: bool,
    /// Human resolutions by gate id.
    #[serde(default)]
    pub pins: BTreeMap<String, PinnedValue>,
    /// Cluster ids to merge conservatively even when precedence resolves them.
    #[serde(default)]
    pub force_merge: BTreeSet<String>,
}

impl Default for ConsolidationPolicy {
    fn default() -> Self {
        Self {
            collapse_conditionals: true,
            allow_absent_moq: false,
            conservative_merge: true,
            pins: BTreeMap::new(),
            force_merge: BTreeSet::new(),
        }
    }
}

fn min_confidence(cands: &[&Candidate]) -> f64 {
    cands
        .iter()
        .map(|c| {
            c.source
                .confidence
                .get(&c.value.field())
                .copied()
                .unwrap_or(1.0)
        })
        .fold(1.0, f64::min)
}

fn spans_of(cands: &[&Candidate]) -> Vec<EvidenceSpan> {
    let mut v: Vec<EvidenceSpan> = cands.iter().flat_map(|c| c.evidence()).collect();
    v.sort();
    v.dedup();
    v
}

/// Cluster → precedence → conservative merge (Class A) → gate.
pub fn consolidate(
    constraints: &[NormalizedConstraint],
    policy: &ConsolidationPolicy,
) -> (ConsolidatedConstraintSet, Vec<GateRequest>) {
    let mut entries = Vec::new();
    let mut gates = Vec::new();

    for cl in cluster(constraints) {
        let key = cl.key.clone();
        let cluster_id = key.cluster_id();
        let gate_id = key.gate_id();
        let field = key.field;

        if let Some(pin) = policy.pins.get(&gate_id) {
            entries.push(ConsolidatedEntry {
                cluster_id,
                key,
                value: pin.value.clone(),
                resolution: Resolution::HumanResolution,
                justification: pin.justification(&gate_id),
                provenance: pin.provenance.clone(),
                attestation: pin.attestation.clone(),
                collapsed_conditions: Vec::new(),
                confidence: 1.0,
            });
            continue;
        }

        let classes: Vec<ClauseClass> = cl
            .candidates
            .iter()
            .map(|c| classify(field, &c.source))
            .collect();
        let conditional = classes
            .iter()
            .any(|c| c.value == ClassValue::CUnsafe && c.direction.is_some());
        let all_collapsible = classes
            .iter()
            .all(|c| c.value != ClassValue::CUnsafe || c.collapsible);
        let mut collapse_notes = Vec::new();
        if conditional {
            if policy.collapse_conditionals && all_collapsible {
                for c in &cl.candidates {
                    for cond in c.source.conditions_on(field) {
                        collapse_notes.push(CollapseNote {
                            effect: cond.effect_text.clone(),
                            evidence: cond.evidence.clone(),
                        });
                    }
                }
            } else {
                gates.push(GateRequest::conditional(&cl, gate_id));
                continue;
            }
        }
        let (class_value, direction) = base_class(field);
        let effective_class = ClauseClass {
            value: class_value,
            direction,
            collapsible: false,
        };

        let all: Vec<&Candidate> = cl.candidates.iter().collect();
        let force = policy.force_merge.contains(&cluster_id) && class_value == ClassValue::AMonotone;
        if !cl.is_conflict() && !force {
            let sources: Vec<String> = all.iter().map(|c| c.label()).collect();
            entries.push(ConsolidatedEntry {
                cluster_id,
                value: all[0].value.clone(),
                resolution: Resolution::SingleSource,
                justification: format!("single value {} from {}", all[0].value, sources.join(", ")),
                provenance: spans_of(&all),
                attestation: None,
                collapsed_conditions: collapse_notes,
                confidence: min_confidence(&all),
                key,
            });
            continue;
        }

        if !force {
            match resolve_precedence(&cl) {
                Precedence::Resolved {
                    value,
                    winners,
                    justification,
                    ..
                } => {
                    let win: Vec<&Candidate> = winners.iter().map(|&i| &cl.candidates[i]).collect();
                    entries.push(ConsolidatedEntry {
                        cluster_id,
                        key,
                        value,
                        resolution: Resolution::Precedence,
                        justification,
                        provenance: spans_of(&win),
                        attestation: None,
                        collapsed_conditions: collapse_notes,
                        confidence: min_confidence(&win),
                    });
                    continue;
                }
                Precedence::Unresolved {
                    tied_signed_addenda: true,
                    ..
                } => {
                    gates.push(GateRequest::conflict(&cl, gate_id, GateReason::Ambiguity));
                    continue;
                }
                Precedence::Unresolved { .. } => {}
            }
        }

        match class_value {
            ClassValue::AMonotone if policy.conservative_merge || force => {
                let merged = conservative_merge(&cl, effective_class).expect("class A field");
                entries.push(ConsolidatedEntry {
                    cluster_id,
                    key,
                    value: merged.value,
                    resolution: Resolution::ConservativeMerge,
                    justification: merged.justification,
                    provenance: merged.provenance,
                    attestation: None,
                    collapsed_conditions: collapse_notes,
                    confidence: min_confidence(&all),
                });
            }
            ClassValue::CUnsafe => {
                gates.push(GateRequest::conflict(&cl, gate_id, GateReason::ClassCConflict));
            }
            _ => {
                gates.push(GateRequest::conflict(&cl, gate_id, GateReason::Ambiguity));
            }
        }
    }

    (ConsolidatedConstraintSet { entries }, gates)
}
