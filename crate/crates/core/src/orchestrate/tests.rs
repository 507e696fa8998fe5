use std::collections::BTreeSet;
use std::path::PathBuf;

use super::*;
use crate::consolidate::{ConsolidatedEntry, Resolution};
use crate::corpus::RetrievalHit;
use crate::planmodel::{ConstraintSlack, Family, PlanningInstance};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

struct Inputs {
    corpus: Corpus,
    master: MasterData,
    instance: PlanningInstance,
}

fn inputs(corpus: &str, instance: &str) -> Inputs {
    Inputs {
        corpus: Corpus::load(fixture(corpus)).unwrap(),
        master: MasterData::load(fixture("walkthrough/master_data.json")).unwrap(),
        instance: PlanningInstance::load(fixture(instance)).unwrap(),
    }
}

fn walkthrough() -> Inputs {
    inputs("walkthrough/corpus.json", "walkthrough/instance.json")
}

fn run(i: &Inputs, config: &RunConfig) -> Outcome {
    run_pipeline(&i.corpus, &i.master, &i.instance, config)
}

fn resume_with(i: &Inputs, config: &RunConfig, out: &Outcome, r: GateResolution) -> Result<Outcome, ResumeError> {
    resume(&i.corpus, &i.master, &i.instance, config, out.state.clone(), r)
}

fn moq_binding(card: &DecisionCard) -> &BindingConstraint {
    card.binding_constraints.iter().find(|b| b.family == Family::Moq).expect("MOQ binds")
}

#[test]
fn walkthrough_runs_to_done_with_cited_cards() {
    let i = walkthrough();
    let out = run(&i, &RunConfig::default());
    assert_eq!(out.status(), RunStatus::Done, "{:?}", out.failure);
    assert!(out.gates().is_empty());
    let plan = out.plan.as_ref().unwrap();
    assert_eq!(plan.orders.len(), 1);
    assert_eq!((plan.orders[0].period, plan.orders[0].quantity), (1, 150));
    assert!((plan.cost.total - 1695.0).abs() < 1e-9);

    assert_eq!(out.cards.len(), 1);
    let card = &out.cards[0];
    let moq = moq_binding(card);
    assert_eq!(moq.value, "MOQ 150 units");
    assert_eq!(moq.evidence, vec!["Addendum-3:L1"]);
    let tier = card.binding_constraints.iter().find(|b| b.family == Family::Tier).unwrap();
    assert!(tier.value.starts_with("tier threshold 150 @ 11.30"), "{}", tier.value);
    assert_eq!(tier.evidence, vec!["Addendum-3:L4"]);
    for b in &card.binding_constraints {
        assert!(!b.evidence.is_empty());
        assert!(!b.human_attested);
    }
    assert!(card.sensitivity_note.contains("raising MOQ one step (150 to 200) changes plan"));
    assert_eq!(card.conditional_collapse_notes.len(), 1);
    assert!(card.conditional_collapse_notes[0].contains("Addendum-3:L2"));

    let layers: Vec<Layer> = out.state.history.iter().map(|h| h.layer).collect();
    assert_eq!(layers.first(), Some(&Layer::Extract));
    assert_eq!(layers.last(), Some(&Layer::Cards));
    assert_eq!(out.state.iteration, 1);
}

#[test]
fn uncollapsed_condition_gates_and_resumes() {
    let i = walkthrough();
    let config = RunConfig {
        policy: ConsolidationPolicy {
            collapse_conditionals: false,
            ..ConsolidationPolicy::default()
        },
        ..RunConfig::default()
    };
    let out = run(&i, &config);
    assert_eq!(out.status(), RunStatus::Gated);
    assert_eq!(out.gates().len(), 1);
    let gate = &out.gates()[0];
    assert_eq!(gate.reason, GateReason::ClassCConflict);
    let conditional = gate.options.iter().find(|o| o.value.is_none()).unwrap();
    let base = gate.options.iter().find(|o| o.value.is_some()).unwrap();

    let keep = resume_with(&i, &config, &out, GateResolution::option(&gate.gate_id, &base.option_id)).unwrap();
    assert_eq!(keep.status(), RunStatus::Done);
    assert_eq!(moq_binding(&keep.cards[0]).value, "MOQ 150 units");
    assert!(keep.cards[0].conditional_collapse_notes.is_empty());

    let apply = resume_with(&i, &config, &out, GateResolution::option(&gate.gate_id, &conditional.option_id)).unwrap();
    assert_eq!(apply.status(), RunStatus::Done);
    let entry = apply
        .consolidated
        .entries
        .iter()
        .find(|e| e.key.field == Field::Moq && e.resolution == Resolution::HumanResolution)
        .unwrap();
    assert_eq!(entry.value, FieldValue::Moq(Moq::Units(100)));
}

#[test]
fn tied_addenda_gate_then_resume_to_addendum_three() {
    let i = inputs("walkthrough/corpus_gated.json", "walkthrough/instance.json");
    let config = RunConfig::default();
    let out = run(&i, &config);
    assert_eq!(out.status(), RunStatus::Gated);
    assert!(out.plan.is_none());
    let gate = out.gates().iter().find(|g| g.reason == GateReason::Ambiguity).expect("ambiguity gate");
    let pick = gate.options.iter().find(|o| o.label.contains("Addendum-3")).unwrap();
    let iteration = out.state.iteration;

    let done = resume_with(&i, &config, &out, GateResolution::option(&gate.gate_id, &pick.option_id)).unwrap();
    assert_eq!(done.status(), RunStatus::Done);
    assert!(done.state.iteration > iteration);
    assert_eq!(done.state.resolutions.len(), 1);
    assert!(done.state.history.iter().any(|h| h.layer == Layer::Resume));
    let moq = moq_binding(&done.cards[0]);
    assert_eq!(moq.value, "MOQ 150 units");
    assert_eq!(moq.evidence, vec!["Addendum-3:L1"]);
    assert!(matches!(moq.provenance, Provenance::Evidence { .. }));

    let again = resume_with(&i, &config, &done, GateResolution::option(&gate.gate_id, &pick.option_id));
    assert!(matches!(again, Err(ResumeError::ClosedGate(_))), "{again:?}");
    let unknown = resume_with(&i, &config, &out, GateResolution::option("gate-000000000000", "opt-1"));
    assert!(matches!(unknown, Err(ResumeError::UnknownGate(_))));
    let missing_option = resume_with(&i, &config, &out, GateResolution::option(&gate.gate_id, "opt-9"));
    assert!(matches!(missing_option, Err(ResumeError::Malformed(_))));
    let no_note = GateResolution {
        note: None,
        ..GateResolution::attested(&gate.gate_id, FieldValue::Moq(Moq::Units(150)), "")
    };
    assert!(matches!(resume_with(&i, &config, &out, no_note), Err(ResumeError::Malformed(_))));
    let wrong_field = GateResolution::attested(&gate.gate_id, FieldValue::Capacity(10), "per call");
    assert!(matches!(resume_with(&i, &config, &out, wrong_field), Err(ResumeError::Malformed(_))));
}

#[test]
fn attested_value_is_marked_human() {
    let i = inputs("walkthrough/corpus_gated.json", "walkthrough/instance.json");
    let config = RunConfig::default();
    let out = run(&i, &config);
    let gate = out.gates()[0].clone();
    let r = GateResolution::attested(&gate.gate_id, FieldValue::Moq(Moq::Units(150)), "confirmed with supplier by phone");
    let done = resume_with(&i, &config, &out, r).unwrap();
    assert_eq!(done.status(), RunStatus::Done);
    let moq = moq_binding(&done.cards[0]);
    assert!(moq.human_attested);
    assert!(matches!(&moq.provenance, Provenance::HumanAttestation { gate_id, .. } if *gate_id == gate.gate_id));
}

#[test]
fn recorded_resolutions_replay_byte_identically() {
    let i = inputs("walkthrough/corpus_gated.json", "walkthrough/instance.json");
    let config = RunConfig::default();
    let out = run(&i, &config);
    let gate = &out.gates()[0];
    let pick = gate.options.iter().find(|o| o.label.contains("Addendum-3")).unwrap();
    let resolution = GateResolution::option(&gate.gate_id, &pick.option_id);
    let resumed = resume_with(&i, &config, &out, resolution.clone()).unwrap();

    let replay_config = RunConfig {
        resolutions: vec![resolution],
        ..RunConfig::default()
    };
    let a = run(&i, &replay_config);
    let b = run(&i, &replay_config);
    assert_eq!(a.status(), RunStatus::Done);
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    assert_eq!(a.state.run_id, out.state.run_id);
    assert_eq!(a.plan, resumed.plan);
    assert_eq!(a.cards, resumed.cards);
}

#[test]
fn class_c_substitution_conflict_gates() {
    let i = inputs("stripped/corpus.json", "walkthrough/instance.json");
    let config = RunConfig::default();
    let out = run(&i, &config);
    assert_eq!(out.status(), RunStatus::Gated);
    assert_eq!(out.gates().len(), 1);
    let gate = &out.gates()[0];
    assert_eq!(gate.reason, GateReason::ClassCConflict);
    assert_eq!(gate.cluster.as_ref().unwrap().key.field, Field::SubstitutionPolicy);
    let merged: Vec<&ConsolidatedEntry> =
        out.consolidated.entries.iter().filter(|e| e.resolution == Resolution::ConservativeMerge).collect();
    assert_eq!(merged.len(), 1);
    assert_eq!(merged[0].value, FieldValue::Moq(Moq::Units(150)));

    let forbid = gate.options.iter().find(|o| o.label.contains("Email-B")).unwrap();
    let done = resume_with(&i, &config, &out, GateResolution::option(&gate.gate_id, &forbid.option_id)).unwrap();
    assert_eq!(done.status(), RunStatus::Done, "{:?}", done.failure);
    assert_eq!(moq_binding(&done.cards[0]).value, "MOQ 150 units");
}

#[test]
fn impossible_demand_fails_with_diagnosis() {
    let i = inputs("walkthrough/corpus.json", "walkthrough/instance_impossible.json");
    let out = run(&i, &RunConfig::default());
    assert_eq!(out.status(), RunStatus::Failed);
    assert!(out.plan.is_none());
    assert!(out.cards.is_empty());
    let d = out.diagnosis.as_ref().expect("diagnosis");
    assert!(!d.feasible);
    assert!(d.total_weighted_slack > 0.0);
    assert!(out.failure.as_deref().unwrap().contains("infeasible after repairs"));
    assert!(out.state.history.iter().any(|h| h.action == Some(RepairActionKind::HumanGate)));
}

#[test]
fn zero_demand_gives_no_cards() {
    let mut i = walkthrough();
    i.instance.demand.insert("88321".into(), vec![0; 4]);
    let out = run(&i, &RunConfig::default());
    assert_eq!(out.status(), RunStatus::Done);
    assert!(out.plan.as_ref().unwrap().is_empty());
    assert!(out.cards.is_empty());
}

/// Reports MOQ 999 on Addendum-3 while keeping the original span.
struct Corrupting;

impl Extractor for Corrupting {
    fn extract(&self, corpus: &Corpus, master: &MasterData) -> Vec<ConstraintRecord> {
        let mut records = FixtureExtractor.extract(corpus, master);
        for r in &mut records {
            if r.doc_id == "Addendum-3" {
                r.moq = Some(Moq::Units(999));
                r.confidence.insert(Field::Moq, 0.5);
            }
        }
        records
    }

    fn reextract_field(&self, record: &ConstraintRecord, field: Field, hits: &[RetrievalHit<'_>]) -> ConstraintRecord {
        FixtureExtractor.reextract_field(record, field, hits)
    }
}

/// Never finds an MOQ.
struct Forgetful;

impl Extractor for Forgetful {
    fn extract(&self, corpus: &Corpus, master: &MasterData) -> Vec<ConstraintRecord> {
        let mut records = FixtureExtractor.extract(corpus, master);
        for r in &mut records {
            r.clear_field(Field::Moq);
        }
        records
    }

    fn reextract_field(&self, record: &ConstraintRecord, field: Field, hits: &[RetrievalHit<'_>]) -> ConstraintRecord {
        let mut r = FixtureExtractor.reextract_field(record, field, hits);
        r.clear_field(Field::Moq);
        r
    }
}

#[test]
fn ungrounded_value_is_repaired_by_targeted_retrieval() {
    let i = walkthrough();
    let config = RunConfig::default();
    let out = Pipeline::new(&i.corpus, &i.master, &i.instance, &config).with_extractor(&Corrupting).run();
    assert_eq!(out.status(), RunStatus::Done, "{:?}", out.failure);
    let repair = out.state.history.iter().find(|h| h.layer == Layer::Repair).expect("repair step");
    assert_eq!(repair.action, Some(RepairActionKind::TargetedRetrieve));
    assert!(repair.detail.contains("Addendum-3"));
    assert_eq!(moq_binding(&out.cards[0]).value, "MOQ 150 units");
    assert!(out.state.iteration >= 2);
    assert_eq!(out, Pipeline::new(&i.corpus, &i.master, &i.instance, &config).with_extractor(&Corrupting).run());
}

#[test]
fn missing_moq_gates_and_accepts_attestation() {
    let i = walkthrough();
    let config = RunConfig::default();
    let pipeline = Pipeline::new(&i.corpus, &i.master, &i.instance, &config).with_extractor(&Forgetful);
    let out = pipeline.run();
    assert_eq!(out.status(), RunStatus::Gated);
    let gate = &out.gates()[0];
    assert_eq!(gate.reason, GateReason::GroundingFailure);
    assert!(gate.question.contains("MOQ"));
    let r = GateResolution::attested(&gate.gate_id, FieldValue::Moq(Moq::Units(150)), "per supplier confirmation");
    let done = pipeline.resume(out.state.clone(), r).unwrap();
    assert_eq!(done.status(), RunStatus::Done, "{:?}", done.failure);
    let moq = moq_binding(&done.cards[0]);
    assert!(moq.human_attested);
    assert!(moq.evidence.is_empty());

    let none = GateResolution::option(&gate.gate_id, "opt-1");
    let done = pipeline.resume(out.state.clone(), none).unwrap();
    assert_eq!(done.status(), RunStatus::Done);
    assert!(done.cards[0].binding_constraints.iter().all(|b| b.family != Family::Moq));
}

#[test]
fn iteration_limit_gates_over_current_constraints() {
    let i = walkthrough();
    let config = RunConfig {
        i_max: 1,
        ..RunConfig::default()
    };
    let pipeline = Pipeline::new(&i.corpus, &i.master, &i.instance, &config).with_extractor(&Corrupting);
    let out = pipeline.run();
    assert_eq!(out.status(), RunStatus::Gated);
    assert_eq!(out.state.iteration, 1);
    assert_eq!(out.state.gate_subjects[&out.gates()[0].gate_id], GateSubject::IterationLimit);
    let stop = pipeline.resume(out.state.clone(), GateResolution::option(&out.gates()[0].gate_id, "opt-1")).unwrap();
    assert_eq!(stop.status(), RunStatus::Failed);
    assert!(matches!(
        pipeline.resume(stop.state.clone(), GateResolution::option("x", "opt-1")),
        Err(ResumeError::NotGated(RunStatus::Failed))
    ));
}

#[test]
fn iteration_never_exceeds_limit() {
    for i_max in 1..=3 {
        let i = inputs("walkthrough/corpus_gated.json", "walkthrough/instance.json");
        let config = RunConfig {
            i_max,
            ..RunConfig::default()
        };
        let out = Pipeline::new(&i.corpus, &i.master, &i.instance, &config).with_extractor(&Corrupting).run();
        assert!(out.state.iteration <= i_max);
        assert!(out.state.history.iter().all(|h| h.iteration <= i_max));
    }
}

fn diagnosis(family: Option<Family>, clusters: &[&str]) -> Diagnosis {
    Diagnosis {
        feasible: false,
        schedule: Vec::new(),
        slacks: vec![ConstraintSlack {
            id: "c0001".into(),
            family: family.unwrap_or(Family::Service),
            slack: 1.0,
            weight: 1.0,
        }],
        family_totals: Default::default(),
        total_weighted_slack: 1.0,
        dominant_family: family,
        conflicting_families: Default::default(),
        implicated_clusters: clusters.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn repair_action_mapping() {
    let set = run(&walkthrough(), &RunConfig::default()).consolidated;
    let precedence_moq = set
        .entries
        .iter()
        .find(|e| e.key.field == Field::Moq && e.resolution == Resolution::Precedence)
        .map(|e| e.cluster_id.clone());
    let tiers = set.entries.iter().find(|e| e.key.field == Field::PriceTiers).unwrap().cluster_id.clone();
    let none = BTreeSet::new();

    let issues = vec![
        FieldIssue {
            record: 0,
            doc_id: "D".into(),
            part: "P".into(),
            field: Field::Moq,
            confidence: 1.0,
            problem: "grounding".into(),
        },
        FieldIssue {
            record: 0,
            doc_id: "D".into(),
            part: "P".into(),
            field: Field::LeadTime,
            confidence: 0.5,
            problem: "grounding".into(),
        },
    ];
    let a = select_repair_action(&RepairReport::Layer(&issues), &set, &none);
    assert_eq!(a.action, RepairActionKind::TargetedRetrieve);
    assert_eq!(a.targets, vec!["D/P/lead_time", "D/P/moq"]);

    let d = diagnosis(Some(Family::Service), &[]);
    assert_eq!(select_repair_action(&RepairReport::Diagnosis(&d), &set, &none).action, RepairActionKind::HumanGate);
    let d = diagnosis(Some(Family::Tier), &[&tiers]);
    assert_eq!(select_repair_action(&RepairReport::Diagnosis(&d), &set, &none).action, RepairActionKind::HumanGate);

    let id = precedence_moq.expect("walkthrough has a precedence-resolved MOQ cluster");
    let d = diagnosis(Some(Family::Moq), &[&id]);
    let a = select_repair_action(&RepairReport::Diagnosis(&d), &set, &none);
    assert_eq!(a.action, RepairActionKind::ConservativeMerge);
    assert_eq!(a.targets, vec![id.clone()]);
    let forced: BTreeSet<String> = [id].into();
    let a = select_repair_action(&RepairReport::Diagnosis(&d), &set, &forced);
    assert_eq!(a.action, RepairActionKind::HumanGate);
}

#[test]
fn bundle_round_trips_state() {
    let i = inputs("walkthrough/corpus_gated.json", "walkthrough/instance.json");
    let config = RunConfig::default();
    let out = run(&i, &config);
    let dir = tempfile::tempdir().unwrap();
    let summary = write_bundle(&out, &config, dir.path()).unwrap();
    assert_eq!(summary.status, RunStatus::Gated);
    assert_eq!(summary.gates.len(), 1);
    for f in BUNDLE_FILES {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("diagnosis.json").exists());
    assert_eq!(read_state(dir.path()).unwrap(), out.state);
}
#[test]
fn moq_infeasibility_merges_once_then_fails() {
    let mut i = walkthrough();
    i.instance.grid = Some(vec![0, 100]);
    i.instance.demand.insert("88321".into(), vec![0, 0, 100, 0]);
    i.instance.costs.emergency_cost.clear();
    let out = run(&i, &RunConfig::default());
    assert_eq!(out.status(), RunStatus::Failed);
    assert_eq!(out.diagnosis.as_ref().unwrap().dominant_family, Some(Family::Moq));
    let actions: Vec<RepairActionKind> = out.state.history.iter().filter_map(|h| h.action).collect();
    assert_eq!(actions, vec![RepairActionKind::ConservativeMerge, RepairActionKind::HumanGate]);
    assert_eq!(out.state.force_merge.len(), 1);
    assert!(out.consolidated.entries.iter().any(|e| e.resolution == Resolution::ConservativeMerge));
}

#[test]
fn ambiguous_alias_gates_and_resumes_at_verify() {
    let mut i = walkthrough();
    i.master.suppliers = serde_json::from_str(
        r#"[{"id": "SUP-17A", "aliases": ["SUP-17"]}, {"id": "SUP-17B", "aliases": ["SUP-17"]}]"#,
    )
    .unwrap();
    i.instance.suppliers = vec!["SUP-17A".into()];
    i.instance.order_lines[0].supplier = "SUP-17A".into();
    i.instance.costs.unit_cost[0].supplier = "SUP-17A".into();
    let config = RunConfig::default();
    let out = run(&i, &config);
    assert_eq!(out.status(), RunStatus::Gated);
    assert_eq!(out.gates().len(), 1);
    let gate = &out.gates()[0];
    assert_eq!(gate.reason, GateReason::ScopeUnresolved);
    let labels: Vec<&str> = gate.options.iter().map(|o| o.label.as_str()).collect();
    assert_eq!(labels, vec!["SUP-17A", "SUP-17B"]);
    let done = resume_with(&i, &config, &out, GateResolution::option(&gate.gate_id, "opt-1")).unwrap();
    assert_eq!(done.status(), RunStatus::Done, "{:?}", done.failure);
    assert_eq!(done.plan.unwrap().orders[0].supplier, "SUP-17A");
}
