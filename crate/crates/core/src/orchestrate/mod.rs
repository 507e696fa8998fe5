//! The verify/repair loop as an explicit state machine, repair selection,
//! decision cards and the gate lifecycle.

mod bundle;
mod cards;
mod repair;

pub use bundle::{read_state, write_bundle, BundleSummary, BUNDLE_FILES};
pub use cards::{build_decision_cards, BindingConstraint, DecisionCard};
pub use repair::{select_repair_action, FieldIssue, RepairAction, RepairActionKind, RepairReport};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::consolidate::{
    consolidate, Attestation, ClusterKey, ConsolidatedConstraintSet, ConsolidationPolicy, EffectiveWindow, FieldValue,
    GateOption, GateReason, GateRequest, PinnedValue, Resolution,
};
use crate::corpus::{Corpus, DocType, EvidenceSpan, FieldKind, FieldQuery, KeywordRetriever, Retriever};
use crate::planmodel::{
    check_feasibility, compile, recheck, CompileOptions, Diagnosis, Feasibility, Plan, PlanError, PlanningInstance,
    PlanningModel, Provenance,
};
use crate::schema::{
    check_grounding, normalize, validate_schema, ConstraintRecord, EntityKind, Extractor, Field, FixtureExtractor,
    LeadTimeProfile, MasterData, Moq, NormalizeError, NormalizedConstraint, Scope, SourceDoc,
};

pub const DEFAULT_I_MAX: usize = 5;

static FIXTURE_EXTRACTOR: FixtureExtractor = FixtureExtractor;
static KEYWORD_RETRIEVER: KeywordRetriever = KeywordRetriever { identifier_bonus: 1 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub i_max: usize,
    pub policy: ConsolidationPolicy,
    /// Recorded gate resolutions, applied whenever their gate opens.
    #[serde(default)]
    pub resolutions: Vec<GateResolution>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            i_max: DEFAULT_I_MAX,
            policy: ConsolidationPolicy::default(),
            resolutions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Gated,
    Done,
    Failed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Running => "running",
            RunStatus::Gated => "gated",
            RunStatus::Done => "done",
            RunStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Extract,
    Schema,
    Grounding,
    Repair,
    Normalize,
    Consistency,
    Compile,
    Feasibility,
    Optimize,
    Recheck,
    Cards,
    Gate,
    Resume,
}

/// One entry of the append-only run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub layer: Layer,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<RepairActionKind>,
    pub detail: String,
}

fn default_reviewer() -> String {
    "reviewer".into()
}

/// A reviewer's answer to a gate: one offered option, or a value attested
/// with a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResolution {
    pub gate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attested_value: Option<FieldValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default = "default_reviewer")]
    pub resolved_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_at: Option<String>,
}

impl GateResolution {
    pub fn option(gate_id: impl Into<String>, option_id: impl Into<String>) -> Self {
        Self {
            gate_id: gate_id.into(),
            option_id: Some(option_id.into()),
            attested_value: None,
            note: None,
            resolved_by: default_reviewer(),
            recorded_at: None,
        }
    }

    pub fn attested(gate_id: impl Into<String>, value: FieldValue, note: impl Into<String>) -> Self {
        Self {
            gate_id: gate_id.into(),
            option_id: None,
            attested_value: Some(value),
            note: Some(note.into()),
            resolved_by: default_reviewer(),
            recorded_at: None,
        }
    }
}

/// What a gate is about, beyond its question text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subject", rename_all = "snake_case")]
pub enum GateSubject {
    Cluster,
    MissingField { supplier: String, part: String, field: Field },
    Alias { kind: EntityKind, alias: String },
    IterationLimit,
}

mod records_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::schema::ConstraintRecord;

    pub fn serialize<S: Serializer>(records: &[ConstraintRecord], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<serde_json::Value> = records.iter().map(|r| r.to_json(None, None)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ConstraintRecord>, D::Error> {
        Vec::<serde_json::Value>::deserialize(d)?
            .iter()
            .map(|v| ConstraintRecord::from_json(v).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub iteration: usize,
    pub status: RunStatus,
    /// Extracted records, the constraint set before normalization.
    #[serde(with = "records_json")]
    pub records: Vec<ConstraintRecord>,
    pub constraints: Vec<NormalizedConstraint>,
    /// Evidence set backing the current records.
    pub evidence: Vec<EvidenceSpan>,
    pub history: Vec<HistoryRecord>,
    pub open_gates: Vec<GateRequest>,
    pub gate_subjects: BTreeMap<String, GateSubject>,
    /// Applied resolutions, in order.
    pub resolutions: Vec<GateResolution>,
    pub pins: BTreeMap<String, PinnedValue>,
    pub force_merge: BTreeSet<String>,
    /// Retrieval widening used so far, keyed by `record/field`.
    pub widen: BTreeMap<String, usize>,
    /// Constraints created from attested values for missing fields.
    pub attested: Vec<NormalizedConstraint>,
    pub alias_overrides: BTreeMap<String, String>,
}

impl RunState {
    fn new(run_id: String) -> Self {
        Self {
            run_id,
            iteration: 0,
            status: RunStatus::Running,
            records: Vec::new(),
            constraints: Vec::new(),
            evidence: Vec::new(),
            history: Vec::new(),
            open_gates: Vec::new(),
            gate_subjects: BTreeMap::new(),
            resolutions: Vec::new(),
            pins: BTreeMap::new(),
            force_merge: BTreeSet::new(),
            widen: BTreeMap::new(),
            attested: Vec::new(),
            alias_overrides: BTreeMap::new(),
        }
    }

    fn log(&mut self, layer: Layer, verdict: impl Into<String>, action: Option<RepairActionKind>, detail: impl Into<String>) {
        self.history.push(HistoryRecord {
            iteration: self.iteration,
            layer,
            verdict: verdict.into(),
            action,
            detail: detail.into(),
        });
    }

    pub fn is_resolved(&self, gate_id: &str) -> bool {
        self.resolutions.iter().any(|r| r.gate_id == gate_id)
    }
}

/// Result of a run or a resume. Open gates live in `state.open_gates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub state: RunState,
    pub consolidated: ConsolidatedConstraintSet,
    pub plan: Option<Plan>,
    pub cards: Vec<DecisionCard>,
    pub diagnosis: Option<Diagnosis>,
    pub failure: Option<String>,
}

impl Outcome {
    pub fn status(&self) -> RunStatus {
        self.state.status
    }

    pub fn gates(&self) -> &[GateRequest] {
        &self.state.open_gates
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResumeError {
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("gate `{0}` is already resolved")]
    ClosedGate(String),
    #[error("malformed resolution: {0}")]
    Malformed(String),
    #[error("run is {0}, not gated")]
    NotGated(RunStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entry {
    Verify,
    Consistency,
}

#[derive(Default)]
struct Finished {
    consolidated: ConsolidatedConstraintSet,
    plan: Option<Plan>,
    cards: Vec<DecisionCard>,
    diagnosis: Option<Diagnosis>,
    failure: Option<String>,
}

enum Flow {
    Next(Entry),
    Finish(Box<Finished>),
}

fn finish(f: Finished) -> Flow {
    Flow::Finish(Box::new(f))
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..6])
}

fn field_kind(field: Field) -> FieldKind {
    match field {
        Field::Moq => FieldKind::Moq,
        Field::LeadTime => FieldKind::LeadTime,
        Field::CapacityPerPeriod => FieldKind::Capacity,
        Field::OrderInterval => FieldKind::OrderInterval,
        Field::PriceTiers => FieldKind::PriceTiers,
        Field::SubstitutionPolicy => FieldKind::Substitution,
        Field::Conditions => FieldKind::Condition,
    }
}

fn missing_key(supplier: &str, part: &str, field: Field) -> ClusterKey {
    ClusterKey {
        supplier_id: supplier.to_string(),
        part_id: part.to_string(),
        field,
        scope: Scope::default(),
        window: EffectiveWindow::ALL,
    }
}

/// A constraint carrying only a human-attested value.
fn attested_constraint(supplier: &str, part: &str, value: &FieldValue, period_length_days: u32) -> NormalizedConstraint {
    let mut c = NormalizedConstraint {
        doc_id: "attestation".into(),
        source: SourceDoc {
            version: "1".into(),
            doc_type: DocType::Email,
            signed: false,
            amends: false,
        },
        supplier_id: supplier.to_string(),
        part_id: part.to_string(),
        scope: Scope::default(),
        effective_start: None,
        effective_end: None,
        moq: None,
        lead_time: None,
        capacity_per_period: None,
        order_interval: None,
        price_tiers: Vec::new(),
        substitution_policy: None,
        conditions: Vec::new(),
        evidence: BTreeMap::new(),
        confidence: BTreeMap::new(),
        period_length_days,
        notes: Vec::new(),
    };
    match value {
        FieldValue::Moq(m) => c.moq = Some(*m),
        FieldValue::LeadTime(l) => c.lead_time = Some(l.clone()),
        FieldValue::Capacity(v) => c.capacity_per_period = Some(*v),
        FieldValue::OrderInterval(v) => c.order_interval = Some(*v),
        FieldValue::PriceTiers(t) => c.price_tiers = t.clone(),
        FieldValue::Substitution(p) => c.substitution_policy = Some(*p),
    }
    c
}

fn value_from_effect(field: Field, v: f64) -> Option<FieldValue> {
    if v < 0.0 || v.fract() != 0.0 {
        return None;
    }
    let v = v as u32;
    match field {
        Field::Moq => Some(FieldValue::Moq(Moq::Units(v))),
        Field::CapacityPerPeriod => Some(FieldValue::Capacity(v)),
        Field::OrderInterval => Some(FieldValue::OrderInterval(v)),
        Field::LeadTime => Some(FieldValue::LeadTime(LeadTimeProfile::constant(v))),
        _ => None,
    }
}

/// Drives one run over fixed inputs.
pub struct Pipeline<'a> {
    pub corpus: &'a Corpus,
    pub master: &'a MasterData,
    /// Without an instance the run stops after consolidation.
    pub instance: Option<&'a PlanningInstance>,
    pub config: &'a RunConfig,
    pub extractor: &'a dyn Extractor,
    pub retriever: &'a dyn Retriever,
}

pub fn run_pipeline(corpus: &Corpus, master: &MasterData, instance: &PlanningInstance, config: &RunConfig) -> Outcome {
    Pipeline::new(corpus, master, instance, config).run()
}

pub fn resume(
    corpus: &Corpus,
    master: &MasterData,
    instance: &PlanningInstance,
    config: &RunConfig,
    state: RunState,
    resolution: GateResolution,
) -> Result<Outcome, ResumeError> {
    Pipeline::new(corpus, master, instance, config).resume(state, resolution)
}

impl<'a> Pipeline<'a> {
    pub fn new(corpus: &'a Corpus, master: &'a MasterData, instance: &'a PlanningInstance, config: &'a RunConfig) -> Self {
        Self {
            corpus,
            master,
            instance: Some(instance),
            config,
            extractor: &FIXTURE_EXTRACTOR,
            retriever: &KEYWORD_RETRIEVER,
        }
    }

    /// Verification and consolidation only.
    pub fn constraints_only(corpus: &'a Corpus, master: &'a MasterData, config: &'a RunConfig) -> Self {
        Self {
            corpus,
            master,
            instance: None,
            config,
            extractor: &FIXTURE_EXTRACTOR,
            retriever: &KEYWORD_RETRIEVER,
        }
    }

    pub fn with_extractor(mut self, extractor: &'a dyn Extractor) -> Self {
        self.extractor = extractor;
        self
    }

    pub fn with_retriever(mut self, retriever: &'a dyn Retriever) -> Self {
        self.retriever = retriever;
        self
    }

    /// Deterministic id over the inputs and the configuration, recorded
    /// resolutions excluded so that a replay keeps the id of the run it
    /// replays.
    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        for doc in self.corpus.documents() {
            h.update(serde_json::to_vec(&doc.meta).expect("meta"));
            h.update(doc.text.as_bytes());
        }
        h.update(serde_json::to_vec(self.master).expect("master"));
        h.update(serde_json::to_vec(&self.instance).expect("instance"));
        let mut config = self.config.clone();
        config.resolutions.clear();
        h.update(serde_json::to_vec(&config).expect("config"));
        format!("run-{}", hex::encode(&h.finalize()[..6]))
    }

    pub fn run(&self) -> Outcome {
        let mut state = RunState::new(self.run_id());
        state.records = self.extractor.extract(self.corpus, self.master);
        let detail = format!("{} records from {} documents", state.records.len(), self.corpus.len());
        state.log(Layer::Extract, "ok", None, detail);
        self.refresh_evidence(&mut state);
        self.drive(state, Entry::Verify)
    }

    pub fn resume(&self, mut state: RunState, resolution: GateResolution) -> Result<Outcome, ResumeError> {
        if state.status != RunStatus::Gated {
            if state.is_resolved(&resolution.gate_id) {
                return Err(ResumeError::ClosedGate(resolution.gate_id));
            }
            return Err(ResumeError::NotGated(state.status));
        }
        let entry = self.apply_resolution(&mut state, resolution)?;
        if state.status == RunStatus::Failed {
            let f = Finished {
                consolidated: self.consolidate_quiet(&state),
                failure: Some("stopped by reviewer at the iteration limit".into()),
                ..Finished::default()
            };
            return Ok(self.outcome(state, f));
        }
        Ok(self.drive(state, entry))
    }

    fn refresh_evidence(&self, state: &mut RunState) {
        let mut spans: Vec<EvidenceSpan> = state.records.iter().flat_map(|r| r.all_evidence()).collect();
        spans.sort();
        spans.dedup();
        state.evidence = spans;
    }

    fn policy(&self, state: &RunState) -> ConsolidationPolicy {
        let mut policy = self.config.policy.clone();
        policy.pins.extend(state.pins.iter().map(|(k, v)| (k.clone(), v.clone())));
        policy.force_merge.extend(state.force_merge.iter().cloned());
        policy
    }

    fn consolidate_quiet(&self, state: &RunState) -> ConsolidatedConstraintSet {
        consolidate(&state.constraints, &self.policy(state)).0
    }

    fn outcome(&self, state: RunState, f: Finished) -> Outcome {
        Outcome {
            state,
            consolidated: f.consolidated,
            plan: f.plan,
            cards: f.cards,
            diagnosis: f.diagnosis,
            failure: f.failure,
        }
    }

    fn drive(&self, mut state: RunState, mut entry: Entry) -> Outcome {
        state.status = RunStatus::Running;
        loop {
            if state.iteration >= self.config.i_max {
                return self.exhausted(state);
            }
            state.iteration += 1;
            let flow = match entry {
                Entry::Verify => match self.verify(&mut state) {
                    Flow::Next(Entry::Consistency) => self.downstream(&mut state),
                    other => other,
                },
                Entry::Consistency => self.downstream(&mut state),
            };
            match flow {
                Flow::Next(next) => entry = next,
                Flow::Finish(f) => {
                    if state.status == RunStatus::Gated {
                        if let Some(next) = self.apply_recorded(&mut state) {
                            entry = next;
                            continue;
                        }
                    }
                    return self.outcome(state, *f);
                }
            }
        }
    }
}

impl Pipeline<'_> {
    /// Schema and grounding checks, targeted repair, then normalization.
    fn verify(&self, state: &mut RunState) -> Flow {
        let mut issues = Vec::new();
        let mut rejected = BTreeSet::new();
        let mut schema_violations = 0;
        for (i, record) in state.records.iter().enumerate() {
            let report = validate_schema(record);
            schema_violations += report.violations.len();
            let conf = |f: Field| record.confidence.get(&f).copied().unwrap_or(1.0);
            for v in &report.violations {
                match v.field {
                    Some(field) => issues.push(FieldIssue {
                        record: i,
                        doc_id: record.doc_id.clone(),
                        part: record.part_id.clone(),
                        field,
                        confidence: conf(field),
                        problem: format!("{:?}: {}", v.code, v.message),
                    }),
                    None => {
                        rejected.insert(i);
                    }
                }
            }
            match check_grounding(record, self.corpus) {
                Ok(g) => {
                    for (field, verdict) in &g.fields {
                        if *verdict != crate::schema::GroundingVerdict::Grounded {
                            issues.push(FieldIssue {
                                record: i,
                                doc_id: record.doc_id.clone(),
                                part: record.part_id.clone(),
                                field: *field,
                                confidence: conf(*field),
                                problem: format!("grounding: {verdict:?}"),
                            });
                        }
                    }
                }
                Err(e) => {
                    for field in record.populated_fields() {
                        issues.push(FieldIssue {
                            record: i,
                            doc_id: record.doc_id.clone(),
                            part: record.part_id.clone(),
                            field,
                            confidence: conf(field),
                            problem: format!("grounding: {e}"),
                        });
                    }
                }
            }
        }
        issues.sort_by(|a, b| (a.record, a.field).cmp(&(b.record, b.field)));
        issues.dedup_by(|a, b| a.record == b.record && a.field == b.field);
        let verdict = |n: usize| if n == 0 { "ok".to_string() } else { format!("{n} issues") };
        state.log(Layer::Schema, verdict(schema_violations), None, format!("{} records checked", state.records.len()));
        let grounding_issues = issues.iter().filter(|i| i.problem.starts_with("grounding")).count();
        state.log(Layer::Grounding, verdict(grounding_issues), None, format!("{} evidence spans", state.evidence.len()));

        if !rejected.is_empty() {
            let ids: Vec<String> = rejected.iter().map(|&i| state.records[i].doc_id.clone()).collect();
            state.log(Layer::Schema, "rejected", None, format!("record-level violations in {}", ids.join(", ")));
            let mut i = 0;
            state.records.retain(|_| {
                i += 1;
                !rejected.contains(&(i - 1))
            });
            state.widen.clear();
            self.refresh_evidence(state);
            return Flow::Next(Entry::Verify);
        }

        let widen_key = |issue: &FieldIssue| format!("{}/{}", issue.record, issue.field.as_str());
        let (repairable, blocked): (Vec<FieldIssue>, Vec<FieldIssue>) = issues.into_iter().partition(|issue| {
            state.widen.get(&widen_key(issue)).copied().unwrap_or(0) < field_kind(issue.field).max_widening()
        });
        for issue in &blocked {
            state.records[issue.record].clear_field(issue.field);
            state.log(
                Layer::Grounding,
                "blocked",
                None,
                format!("{} of {} in {}: {}", issue.field, issue.part, issue.doc_id, issue.problem),
            );
        }
        if !repairable.is_empty() {
            let action = select_repair_action(&RepairReport::Layer(&repairable), &ConsolidatedConstraintSet::default(), &state.force_merge);
            let mut ordered = repairable;
            ordered.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then((a.record, a.field).cmp(&(b.record, b.field))));
            for issue in &ordered {
                let key = widen_key(issue);
                let widen = state.widen.get(&key).copied().unwrap_or(0) + 1;
                state.widen.insert(key, widen);
                let record = &state.records[issue.record];
                let mut query = FieldQuery::new(field_kind(issue.field))
                    .part(record.part_id.clone())
                    .supplier(record.supplier_id.clone())
                    .widened(widen);
                if let Some(site) = &record.scope.site {
                    query = query.site(site.clone());
                }
                let hits = self.retriever.retrieve(self.corpus, &query);
                let repaired = self.extractor.reextract_field(record, issue.field, &hits);
                let found = repaired.is_populated(issue.field);
                state.records[issue.record] = repaired;
                state.log(
                    Layer::Repair,
                    if found { "re-extracted" } else { "not found" },
                    Some(action.action),
                    format!(
                        "{} of {} in {} (confidence {:.2}, widening {widen}, {} hits)",
                        issue.field,
                        issue.part,
                        issue.doc_id,
                        issue.confidence,
                        hits.len()
                    ),
                );
            }
            self.refresh_evidence(state);
            return Flow::Next(Entry::Verify);
        }
        if !blocked.is_empty() {
            self.refresh_evidence(state);
        }
        self.normalize_all(state)
    }

    fn normalize_all(&self, state: &mut RunState) -> Flow {
        let mut constraints = Vec::new();
        let mut gates = Vec::new();
        let mut dropped = Vec::new();
        for record in &state.records {
            let mut record = record.clone();
            if let Some(id) = state.alias_overrides.get(&format!("supplier/{}", record.supplier_id.to_lowercase())) {
                record.supplier_id = id.clone();
            }
            if let Some(id) = state.alias_overrides.get(&format!("part/{}", record.part_id.to_lowercase())) {
                record.part_id = id.clone();
            }
            match normalize(&record, self.master) {
                Ok(c) => constraints.push(c),
                Err(NormalizeError::Ambiguity(g)) => {
                    let kind = match g.kind {
                        EntityKind::Supplier => "supplier",
                        EntityKind::Part => "part",
                    };
                    let gate_id = format!("gate-{}", digest(&["alias", kind, &g.alias.to_lowercase()]));
                    if gates.iter().any(|(id, _, _)| *id == gate_id) {
                        continue;
                    }
                    let options = g
                        .candidates
                        .iter()
                        .enumerate()
                        .map(|(i, c)| GateOption {
                            option_id: format!("opt-{}", i + 1),
                            label: c.clone(),
                            value: None,
                            evidence: Vec::new(),
                        })
                        .collect();
                    let question = format!(
                        "{} alias \"{}\" in {} matches several master records ({}). Which one is meant?",
                        kind,
                        g.alias,
                        g.doc_id,
                        g.candidates.join(", ")
                    );
                    let gate = GateRequest::other(gate_id.clone(), question, options, GateReason::ScopeUnresolved);
                    gates.push((gate_id, gate, GateSubject::Alias { kind: g.kind, alias: g.alias.clone() }));
                }
                Err(e) => dropped.push(format!("{}: {e}", record.doc_id)),
            }
        }
        constraints.extend(state.attested.iter().cloned());
        state.constraints = constraints;
        let verdict = if dropped.is_empty() { "ok".to_string() } else { format!("{} records dropped", dropped.len()) };
        let mut detail = format!("{} constraints", state.constraints.len());
        if !dropped.is_empty() {
            detail.push_str(&format!("; {}", dropped.join("; ")));
        }
        state.log(Layer::Normalize, verdict, None, detail);
        if gates.is_empty() {
            return Flow::Next(Entry::Consistency);
        }
        state.open_gates.clear();
        for (id, gate, subject) in gates {
            state.gate_subjects.insert(id, subject);
            state.open_gates.push(gate);
        }
        self.gated(state, ConsolidatedConstraintSet::default())
    }

    fn gated(&self, state: &mut RunState, consolidated: ConsolidatedConstraintSet) -> Flow {
        let ids: Vec<&str> = state.open_gates.iter().map(|g| g.gate_id.as_str()).collect();
        let detail = format!("{} open: {}", ids.len(), ids.join(", "));
        state.status = RunStatus::Gated;
        state.log(Layer::Gate, "gated", Some(RepairActionKind::HumanGate), detail);
        finish(Finished {
            consolidated,
            ..Finished::default()
        })
    }

    fn failed(&self, state: &mut RunState, layer: Layer, f: Finished) -> Flow {
        state.status = RunStatus::Failed;
        state.log(layer, "failed", None, f.failure.clone().unwrap_or_default());
        finish(f)
    }

    /// Consistency, compilation, feasibility, optimization and cards.
    fn downstream(&self, state: &mut RunState) -> Flow {
        let policy = self.policy(state);
        let (set, gates) = consolidate(&state.constraints, &policy);
        let count = |r: Resolution| set.entries.iter().filter(|e| e.resolution == r).count();
        let detail = format!(
            "{} entries: {} single-source, {} precedence, {} merged, {} human; {} gates",
            set.entries.len(),
            count(Resolution::SingleSource),
            count(Resolution::Precedence),
            count(Resolution::ConservativeMerge),
            count(Resolution::HumanResolution),
            gates.len()
        );
        state.log(Layer::Consistency, if gates.is_empty() { "ok" } else { "conflicts" }, None, detail);
        if !gates.is_empty() {
            state.open_gates = gates;
            for g in &state.open_gates {
                state.gate_subjects.insert(g.gate_id.clone(), GateSubject::Cluster);
            }
            return self.gated(state, set);
        }
        state.open_gates.clear();
        let Some(instance) = self.instance else {
            state.status = RunStatus::Done;
            return finish(Finished {
                consolidated: set,
                ..Finished::default()
            });
        };

        let options = CompileOptions {
            allow_absent_moq: policy.allow_absent_moq,
        };
        let model = match compile(&set, instance, self.master, &options) {
            Ok(m) => m,
            Err(PlanError::MissingConstraint {
                supplier,
                part,
                field,
                period,
            }) => {
                state.log(Layer::Compile, "missing", None, format!("{field} for {supplier}/{part} in period {period}"));
                let key = missing_key(&supplier, &part, field);
                let gate_id = key.gate_id();
                let options = if field == Field::Moq {
                    vec![GateOption {
                        option_id: "opt-1".into(),
                        label: "no MOQ applies".into(),
                        value: Some(FieldValue::Moq(Moq::NotApplicable)),
                        evidence: Vec::new(),
                    }]
                } else {
                    Vec::new()
                };
                let question = format!(
                    "No grounded {} was found for part {part} from supplier {supplier}, needed from period {}. What value should planning enforce?",
                    field.display_name(),
                    period
                );
                state.open_gates = vec![GateRequest::other(gate_id.clone(), question, options, GateReason::GroundingFailure)];
                state.gate_subjects.insert(gate_id, GateSubject::MissingField { supplier, part, field });
                return self.gated(state, set);
            }
            Err(e) => {
                let f = Finished {
                    consolidated: set,
                    failure: Some(e.to_string()),
                    ..Finished::default()
                };
                return self.failed(state, Layer::Compile, f);
            }
        };
        let ungrounded: Vec<&str> = model
            .constraints
            .iter()
            .filter(|c| {
                !c.family.is_structural()
                    && c.provenance.spans().is_empty()
                    && !matches!(c.provenance, Provenance::HumanAttestation { .. } | Provenance::Structural)
            })
            .map(|c| c.id.as_str())
            .collect();
        if !ungrounded.is_empty() {
            let f = Finished {
                failure: Some(format!("model rows without evidence: {}", ungrounded.join(", "))),
                consolidated: set,
                ..Finished::default()
            };
            return self.failed(state, Layer::Compile, f);
        }
        state.log(
            Layer::Compile,
            "ok",
            None,
            format!("{} rows over {} lines and {} periods", model.constraints.len(), model.lines.len(), model.horizon),
        );

        match check_feasibility(&model) {
            Err(e) => {
                let f = Finished {
                    consolidated: set,
                    failure: Some(e.to_string()),
                    ..Finished::default()
                };
                self.failed(state, Layer::Feasibility, f)
            }
            Ok(Feasibility::Feasible(plan)) => self.emit(state, set, &model, *plan),
            Ok(Feasibility::Infeasible(diagnosis)) => {
                let dominant = diagnosis.dominant_family.map_or("none", |f| f.as_str());
                state.log(
                    Layer::Feasibility,
                    "infeasible",
                    None,
                    format!("dominant family {dominant}, weighted slack {}", diagnosis.total_weighted_slack),
                );
                let action = select_repair_action(&RepairReport::Diagnosis(&diagnosis), &set, &state.force_merge);
                match action.action {
                    RepairActionKind::ConservativeMerge => {
                        state.log(Layer::Repair, "merge", Some(action.action), action.targets.join(", "));
                        state.force_merge.extend(action.targets);
                        Flow::Next(Entry::Verify)
                    }
                    _ => {
                        let f = Finished {
                            consolidated: set,
                            failure: Some(format!("infeasible after repairs; dominant family {dominant}")),
                            diagnosis: Some(*diagnosis),
                            ..Finished::default()
                        };
                        state.log(Layer::Repair, "escalate", Some(action.action), action.rationale);
                        self.failed(state, Layer::Feasibility, f)
                    }
                }
            }
        }
    }

    fn emit(&self, state: &mut RunState, set: ConsolidatedConstraintSet, model: &PlanningModel, plan: Plan) -> Flow {
        state.log(
            Layer::Optimize,
            "ok",
            None,
            format!("{} orders, total cost {:.2}", plan.orders.len(), plan.cost.total),
        );
        let violations = recheck(model, &plan);
        if !violations.is_empty() {
            let f = Finished {
                consolidated: set,
                failure: Some(format!("re-check failed: {}", violations.join("; "))),
                ..Finished::default()
            };
            return self.failed(state, Layer::Recheck, f);
        }
        state.log(Layer::Recheck, "ok", None, "plan satisfies every model row");
        let cards = build_decision_cards(&plan, model, &set, self.corpus);
        state.log(Layer::Cards, "ok", None, format!("{} cards", cards.len()));
        state.status = RunStatus::Done;
        finish(Finished {
            consolidated: set,
            plan: Some(plan),
            cards,
            ..Finished::default()
        })
    }

    fn exhausted(&self, mut state: RunState) -> Outcome {
        let gate_id = format!("gate-{}", digest(&["iteration-limit", &state.run_id]));
        let question = format!(
            "Verification did not converge within {} iterations. Review the current constraint set before planning.",
            self.config.i_max
        );
        let options = vec![GateOption {
            option_id: "opt-1".into(),
            label: "stop the run".into(),
            value: None,
            evidence: Vec::new(),
        }];
        state.open_gates = vec![GateRequest::other(gate_id.clone(), question, options, GateReason::Ambiguity)];
        state.gate_subjects.insert(gate_id, GateSubject::IterationLimit);
        state.status = RunStatus::Gated;
        state.log(Layer::Gate, "gated", Some(RepairActionKind::HumanGate), "iteration limit reached");
        let f = Finished {
            consolidated: self.consolidate_quiet(&state),
            ..Finished::default()
        };
        self.outcome(state, f)
    }

    /// Applies recorded resolutions for any open gate.
    fn apply_recorded(&self, state: &mut RunState) -> Option<Entry> {
        let mut entry = None;
        let open: Vec<String> = state.open_gates.iter().map(|g| g.gate_id.clone()).collect();
        for gate_id in open {
            if state.is_resolved(&gate_id) || !state.open_gates.iter().any(|g| g.gate_id == gate_id) {
                continue;
            }
            let Some(r) = self.config.resolutions.iter().find(|r| r.gate_id == gate_id) else {
                continue;
            };
            match self.apply_resolution(state, r.clone()) {
                Ok(e) => {
                    entry = Some(match (entry, e) {
                        (Some(Entry::Verify), _) | (_, Entry::Verify) => Entry::Verify,
                        _ => Entry::Consistency,
                    })
                }
                Err(err) => state.log(Layer::Resume, "rejected", None, format!("recorded resolution: {err}")),
            }
        }
        if state.status == RunStatus::Failed {
            return None;
        }
        entry
    }

    fn apply_resolution(&self, state: &mut RunState, r: GateResolution) -> Result<Entry, ResumeError> {
        let Some(gate) = state.open_gates.iter().find(|g| g.gate_id == r.gate_id).cloned() else {
            if state.is_resolved(&r.gate_id) {
                return Err(ResumeError::ClosedGate(r.gate_id));
            }
            return Err(ResumeError::UnknownGate(r.gate_id));
        };
        let subject = state.gate_subjects.get(&gate.gate_id).cloned().unwrap_or(GateSubject::Cluster);
        let note = r.note.as_deref().map(str::trim).filter(|n| !n.is_empty());
        let (option_id, value, evidence) = match (&r.option_id, &r.attested_value) {
            (Some(id), None) => {
                let opt = gate
                    .option(id)
                    .ok_or_else(|| ResumeError::Malformed(format!("gate {} has no option {id}", gate.gate_id)))?;
                (id.clone(), opt.value.clone(), opt.evidence.clone())
            }
            (None, Some(v)) => {
                if note.is_none() {
                    return Err(ResumeError::Malformed("an attested value needs a note".into()));
                }
                (String::from("attested"), Some(v.clone()), Vec::new())
            }
            _ => return Err(ResumeError::Malformed("give exactly one of option_id and attested_value".into())),
        };
        if r.resolved_by.trim().is_empty() {
            return Err(ResumeError::Malformed("resolved_by is empty".into()));
        }
        let attestation = Attestation {
            gate_id: gate.gate_id.clone(),
            option_id: option_id.clone(),
            resolved_by: r.resolved_by.clone(),
            note: note.map(str::to_string),
        };

        let entry = match &subject {
            GateSubject::IterationLimit => {
                state.status = RunStatus::Failed;
                Entry::Verify
            }
            GateSubject::Alias { kind, alias } => {
                let opt = gate.option(&option_id).ok_or_else(|| ResumeError::Malformed("choose one of the offered ids".into()))?;
                let prefix = match kind {
                    EntityKind::Supplier => "supplier",
                    EntityKind::Part => "part",
                };
                state.alias_overrides.insert(format!("{prefix}/{}", alias.to_lowercase()), opt.label.clone());
                Entry::Verify
            }
            GateSubject::MissingField { supplier, part, field } => {
                let value = value.ok_or_else(|| ResumeError::Malformed("no value for the missing field".into()))?;
                if value.field() != *field {
                    return Err(ResumeError::Malformed(format!("expected a {} value", field.as_str())));
                }
                let c = attested_constraint(supplier, part, &value, self.master.calendar.period_length_days);
                state.attested.push(c.clone());
                state.constraints.push(c);
                state.pins.insert(
                    gate.gate_id.clone(),
                    PinnedValue {
                        value,
                        provenance: evidence,
                        attestation: Some(attestation),
                    },
                );
                Entry::Consistency
            }
            GateSubject::Cluster => {
                let cluster = gate
                    .cluster
                    .as_ref()
                    .ok_or_else(|| ResumeError::Malformed(format!("gate {} has no cluster", gate.gate_id)))?;
                let field = cluster.key.field;
                let value = match value {
                    Some(v) => v,
                    None => cluster
                        .candidates
                        .iter()
                        .flat_map(|c| c.source.conditions_on(field))
                        .filter(|c| c.evidence == evidence)
                        .find_map(|c| c.effect().and_then(|(f, v)| (f == field).then(|| value_from_effect(f, v)).flatten()))
                        .ok_or_else(|| ResumeError::Malformed("the chosen condition has no plannable effect".into()))?,
                };
                if value.field() != field {
                    return Err(ResumeError::Malformed(format!("expected a {} value", field.as_str())));
                }
                state.pins.insert(
                    gate.gate_id.clone(),
                    PinnedValue {
                        value,
                        provenance: evidence,
                        attestation: Some(attestation),
                    },
                );
                Entry::Consistency
            }
        };
        state.open_gates.retain(|g| g.gate_id != gate.gate_id);
        let detail = match &r.attested_value {
            Some(v) => format!("{}: attested {v} by {}", gate.gate_id, r.resolved_by),
            None => format!("{}: {option_id} by {}", gate.gate_id, r.resolved_by),
        };
        state.resolutions.push(r);
        state.log(Layer::Resume, "resolved", None, detail);
        Ok(entry)
    }
}


#[cfg(test)]
mod tests;
