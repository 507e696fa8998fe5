//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::{json, Value};

use clauseplan::consolidate::{consolidate, ConsolidatedConstraintSet, ConsolidationPolicy, FieldValue};
use clauseplan::corpus::{Corpus, DocType, EvidenceSpan};
use clauseplan::microbench::{
    enumerate_optimal, execute, generate_instances, run_benchmark, toy, BenchConfig, BenchRun, CostParams, Relation,
    Schedule, ToyConfig, ACTIONS, HORIZON, TOY_DEMAND, TOY_MOQ,
};
use clauseplan::orchestrate::{write_bundle, GateResolution, Outcome, Pipeline, RunConfig, RunStatus, BUNDLE_FILES};
use clauseplan::planmodel::{
    compile, optimize, recheck, CompileOptions, CostBreakdown, Plan, PlanningInstance, PlanningModel,
};
use clauseplan::schema::{
    normalize, Extractor, Field, FixtureExtractor, LeadTimeProfile, MasterData, Moq, NormalizedConstraint, PriceTier,
    Scope, SourceDoc,
};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("toy example exactness", toy_exactness),
        ("enumeration scale", enumeration_scale),
        ("benchmark statistics", benchmark_statistics),
        ("benchmark invariants", benchmark_invariants),
        ("oracle equivalence", oracle_equivalence),
        ("conservative merge safety", merge_safety),
        ("tier eligibility", tier_eligibility),
        ("walkthrough golden", walkthrough_golden),
        ("safety and replay", safety_and_replay),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  {name} [{secs:.2}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.2}s]: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

// Independent inventory simulator: purchased, emergency and held units.
// Orders arrive `lead` periods after placement; every order is paid.
fn simulate(q: &[u32], lead: usize, demand: &[u32]) -> (u64, u64, u64) {
    let n = demand.len();
    let mut arrivals = vec![0u64; n];
    for (t, &x) in q.iter().enumerate() {
        if t + lead < n {
            arrivals[t + lead] += u64::from(x);
        }
    }
    let (mut stock, mut short, mut held) = (0u64, 0u64, 0u64);
    for t in 0..n {
        stock += arrivals[t];
        let need = u64::from(demand[t]);
        if stock >= need {
            stock -= need;
        } else {
            short += need - stock;
            stock = 0;
        }
        held += stock;
    }
    (q.iter().map(|&x| u64::from(x)).sum(), short, held)
}

fn priced(units: (u64, u64, u64), c: &CostParams) -> f64 {
    units.0 as f64 * c.c_cheap + units.1 as f64 * c.c_exp + units.2 as f64 * c.h
}

fn toy_exactness() -> Verdict {
    let start = Instant::now();
    let c = CostParams {
        c_cheap: 10.0,
        c_exp: 20.0,
        h: 0.1,
    };
    let exec = |q: [u32; 3]| execute(&Schedule::from_quantities(&q).unwrap(), TOY_MOQ, 2, &c, &TOY_DEMAND).cost.total;
    let early = exec([100, 0, 0]);
    let late = exec([0, 100, 0]);
    ensure!((early - 3005.0).abs() <= 1e-9, "(100,0,0) executes to {early}");
    ensure!((late - 4000.0).abs() <= 1e-9, "(0,100,0) executes to {late}");

    let report = toy(ToyConfig::default());
    ensure!((report.baseline_regret - 995.0).abs() <= 1e-9, "baseline regret {}", report.baseline_regret);

    let mut best = f64::INFINITY;
    let mut seen = 0;
    for a in ACTIONS {
        for b in ACTIONS {
            for d in ACTIONS {
                seen += 1;
                let q = [a, b, d];
                if q.iter().any(|&v| v > 0 && v < TOY_MOQ) {
                    continue;
                }
                best = best.min(priced(simulate(&q, 2, &TOY_DEMAND), &c));
            }
        }
    }
    ensure!(seen == 729, "brute force saw {seen} schedules");
    ensure!((best - 3000.0).abs() <= 1e-9, "brute-force optimum {best}");
    ensure!(
        (report.true_optimum.cost - best).abs() <= 1e-9,
        "enumerated optimum {} differs from brute force {best}",
        report.true_optimum.cost
    );

    let out = Command::new(env!("CARGO_BIN_EXE_clauseplan")).arg("toy").output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure!(out.status.code() == Some(0), "toy command exited {:?}", out.status.code());
    ensure!(text.contains("3005.00") && text.contains("4000.00"), "toy output lacks 3005/4000:\n{text}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("3005.00 / 4000.00 / regret 995.00 / optimum {best:.2} over 729 schedules; toy exits 0"))
}

struct Timed {
    run: BenchRun,
    elapsed: Duration,
}

fn full_run() -> &'static Timed {
    static RUN: OnceLock<Timed> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let run = run_benchmark(&BenchConfig::default());
        Timed {
            run,
            elapsed: start.elapsed(),
        }
    })
}

const SWEEP_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn sweep_runs() -> &'static Vec<BenchRun> {
    static RUNS: OnceLock<Vec<BenchRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SWEEP_SEEDS
            .iter()
            .map(|&seed| {
                run_benchmark(&BenchConfig {
                    seed,
                    bootstrap_resamples: 1_000,
                    ..BenchConfig::default()
                })
            })
            .collect()
    })
}

fn enumeration_scale() -> Verdict {
    ensure!(ACTIONS.len() == 9 && HORIZON == 5, "grid {} actions, horizon {HORIZON}", ACTIONS.len());
    let space = Schedule::space(HORIZON);
    ensure!(space == 59_049 && space == 9u64.pow(5), "search space {space}");
    let t = full_run();
    ensure!(t.run.results.len() == 500, "{} instances", t.run.results.len());
    let mut evaluations = 0u64;
    for r in &t.run.results {
        ensure!(
            r.planned.evaluated == space && r.true_optimum.evaluated == space,
            "instance {} evaluated {} / {}",
            r.instance.index,
            r.planned.evaluated,
            r.true_optimum.evaluated
        );
        evaluations += r.planned.evaluated + r.true_optimum.evaluated;
    }
    ensure!(t.elapsed < Duration::from_secs(600), "500 instances took {:?}", t.elapsed);
    Ok(format!(
        "59,049 schedules per instance, {evaluations} evaluations for n=500 in {:.1}s",
        t.elapsed.as_secs_f64()
    ))
}

/// Bands that hold for every seed, and the under/under ordering among
/// cells of at least 20 instances (`None` when under/under is smaller).
fn bands(run: &BenchRun) -> Result<Option<bool>, String> {
    let s = &run.summary;
    let seed = run.config.seed;
    ensure!(s.median_regret == 0.0, "seed {seed}: median regret {}", s.median_regret);
    ensure!((100.0..=190.0).contains(&s.mean_regret), "seed {seed}: mean regret {:.2}", s.mean_regret);
    ensure!(
        (0.11..=0.22).contains(&s.moq_violation_incidence),
        "seed {seed}: MOQ-violation incidence {:.3}",
        s.moq_violation_incidence
    );
    ensure!(
        (0.20..=0.35).contains(&s.fraction_positive_regret),
        "seed {seed}: fraction positive {:.3}",
        s.fraction_positive_regret
    );
    ensure!(
        s.p99_regret >= 5.0 * s.mean_regret,
        "seed {seed}: p99 {:.2} < 5 x mean {:.2}",
        s.p99_regret,
        s.mean_regret
    );
    let eligible: Vec<_> = run.decomposition.iter().filter(|c| c.count >= 20).collect();
    let uu = |c: &&clauseplan::microbench::DecompositionCell| {
        c.moq_relation == Relation::Under && c.lead_relation == Relation::Under
    };
    let Some(under) = eligible.iter().find(|c| uu(c)) else {
        return Ok(None);
    };
    let top = under.mean_regret.unwrap_or(0.0);
    Ok(Some(eligible.iter().filter(|c| !uu(c)).all(|c| c.mean_regret.unwrap_or(0.0) < top)))
}

fn benchmark_statistics() -> Verdict {
    let main = &full_run().run;
    let s = &main.summary;
    match bands(main)? {
        Some(true) => {}
        Some(false) => return Err("seed 42: under/under is not the highest-regret cell".into()),
        None => return Err("seed 42: under/under cell has fewer than 20 instances".into()),
    }
    let mut small = Vec::new();
    for run in sweep_runs() {
        match bands(run)? {
            Some(true) => {}
            Some(false) => return Err(format!("seed {}: under/under is not the highest-regret cell", run.config.seed)),
            None => small.push(run.config.seed),
        }
    }
    let uu = main
        .decomposition
        .iter()
        .find(|c| c.moq_relation == Relation::Under && c.lead_relation == Relation::Under)
        .unwrap();
    Ok(format!(
        "seed 42: mean {:.2} [{:.2}, {:.2}], incidence {:.1}%, positive {:.1}%, p99/mean {:.1}, under/under {:.2} over {} instances; seeds {:?} within bands{}",
        s.mean_regret,
        s.ci_mean_regret.lower,
        s.ci_mean_regret.upper,
        100.0 * s.moq_violation_incidence,
        100.0 * s.fraction_positive_regret,
        s.p99_regret / s.mean_regret,
        uu.mean_regret.unwrap_or(0.0),
        uu.count,
        SWEEP_SEEDS,
        if small.is_empty() {
            String::new()
        } else {
            format!(" (under/under below 20 instances at seeds {small:?})")
        }
    ))
}

fn benchmark_invariants() -> Verdict {
    let mut runs: Vec<&BenchRun> = vec![&full_run().run];
    runs.extend(sweep_runs());
    let mut checked = 0;
    for run in runs {
        let seed = run.config.seed;
        for r in &run.results {
            let i = &r.instance;
            ensure!(r.regret >= 0.0, "seed {seed} instance {}: regret {}", i.index, r.regret);
            let recomputed = r.execution.cost.total - r.true_optimum.cost;
            ensure!(
                (recomputed - r.regret).abs() <= 1e-9,
                "seed {seed} instance {}: regret {} is not executed minus optimal {recomputed}",
                i.index,
                r.regret
            );
            if i.moq_relation() == Relation::Equal && i.lead_relation() == Relation::Equal {
                ensure!(r.regret == 0.0, "seed {seed} instance {}: equal/equal regret {}", i.index, r.regret);
            }
            if r.execution.planned_moq_violation {
                ensure!(i.moq_ext < i.moq_true, "seed {seed} instance {}: violation without MOQ underestimate", i.index);
            }
            ensure!(
                r.execution.executed.iter().all(|&q| q == 0 || q >= i.moq_true),
                "seed {seed} instance {}: executed {:?} below MOQ {}",
                i.index,
                r.execution.executed,
                i.moq_true
            );
            checked += 1;
        }
        let s = &run.summary;
        ensure!(
            s.p90_regret <= s.p95_regret && s.p95_regret <= s.p99_regret && s.p99_regret <= s.max_regret,
            "seed {seed}: percentiles out of order"
        );
    }
    Ok(format!("{checked} instances over seeds 42 and {SWEEP_SEEDS:?}"))
}

/// Optimal planning cost by dynamic programming over (period, stock,
/// orders in transit). Returns the unit counts of an optimal path.
fn dp_optimum(moq: u32, lead: usize, demand: &[u32], c: &CostParams) -> (u64, u64, u64) {
    type Memo = HashMap<(usize, u64, Vec<u64>), (u64, u64, u64)>;
    fn go(t: usize, stock: u64, transit: Vec<u64>, moq: u32, d: &[u32], c: &CostParams, memo: &mut Memo) -> (u64, u64, u64) {
        if t == d.len() {
            return (0, 0, 0);
        }
        let key = (t, stock, transit.clone());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let mut best: Option<((u64, u64, u64), f64)> = None;
        for q in ACTIONS.into_iter().filter(|&q| q == 0 || q >= moq) {
            // transit[k] lands k periods from now
            let mut next = transit.clone();
            next.push(0);
            let last = next.len() - 1;
            next[last] += u64::from(q);
            let mut s = stock + next.remove(0);
            let need = u64::from(d[t]);
            let short = need.saturating_sub(s);
            s = s.saturating_sub(need);
            let rest = go(t + 1, s, next, moq, d, c, memo);
            let units = (u64::from(q) + rest.0, short + rest.1, s + rest.2);
            let cost = priced(units, c);
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((units, cost));
            }
        }
        let units = best.unwrap().0;
        memo.insert(key, units);
        units
    }
    // A zero lead time lands in the ordering period itself.
    go(0, 0, vec![0; lead], moq, demand, c, &mut HashMap::new())
}

fn oracle_equivalence() -> Verdict {
    let instances = generate_instances(120, 2024);
    let mut compared = 0;
    for i in &instances {
        for (moq, lead) in [(i.moq_ext, i.l_ext), (i.moq_true, i.l_true)] {
            let enumerated = enumerate_optimal(moq, lead, &i.costs, &i.demand);
            let dp = priced(dp_optimum(moq, lead as usize, &i.demand, &i.costs), &i.costs);
            ensure!(
                enumerated.cost == dp,
                "instance {} (MOQ {moq}, lead {lead}): enumeration {} vs DP {dp}",
                i.index,
                enumerated.cost
            );
            compared += 1;
        }
    }
    Ok(format!("{compared} optima on {} instances equal bit for bit", instances.len()))
}

fn deterministic_runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn span() -> EvidenceSpan {
    EvidenceSpan::new("DOC", "1", 0, 4)
}

fn constraint(doc: &str, doc_type: DocType, signed: bool) -> NormalizedConstraint {
    NormalizedConstraint {
        doc_id: doc.into(),
        source: SourceDoc {
            version: "1".into(),
            doc_type,
            signed,
            amends: false,
        },
        supplier_id: "S".into(),
        part_id: "P".into(),
        scope: Scope::site("N1"),
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
        period_length_days: 30,
        notes: Vec::new(),
    }
}

fn cite(c: &mut NormalizedConstraint) {
    let fields = [
        (Field::Moq, c.moq.is_some()),
        (Field::LeadTime, c.lead_time.is_some()),
        (Field::CapacityPerPeriod, c.capacity_per_period.is_some()),
        (Field::OrderInterval, c.order_interval.is_some()),
        (Field::PriceTiers, !c.price_tiers.is_empty()),
    ];
    for (f, present) in fields {
        if present {
            c.evidence.insert(f, vec![span()]);
            c.confidence.insert(f, 1.0);
        }
    }
}

fn instance(demand: &[u32], grid: &[u32], init: u32, emergency: Option<f64>) -> PlanningInstance {
    let mut v = json!({
        "nodes": [{"id": "N1"}],
        "horizon": demand.len(),
        "calendar": {"start_date": "2025-01-01", "period_length_days": 30},
        "suppliers": ["S"],
        "parts": ["P"],
        "finished_goods": ["P"],
        "order_lines": [{"supplier": "S", "part": "P"}],
        "demand": {"P": demand},
        "costs": {
            "unit_cost": [{"supplier": "S", "part": "P", "cost": 10.0}],
            "emergency_cost": {},
            "holding_cost": {"P": 0.1}
        },
        "initial_inventory": {"P": init},
        "grid": grid,
    });
    if let Some(e) = emergency {
        v["costs"]["emergency_cost"]["P"] = json!(e);
    }
    serde_json::from_value(v).expect("instance json")
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Terms {
    moq: u32,
    lead: u32,
    cap: u32,
    interval: u32,
}

fn direct_feasible(x: &[u32], t: Terms, demand: &[u32], init: u32) -> bool {
    for (i, &q) in x.iter().enumerate() {
        if q > 0 && (q < t.moq || q > t.cap) {
            return false;
        }
        if q > 0 && (i + 1..(i + t.interval as usize).min(x.len())).any(|j| x[j] > 0) {
            return false;
        }
    }
    let mut stock = i64::from(init);
    for p in 0..demand.len() {
        if p >= t.lead as usize {
            stock += i64::from(x[p - t.lead as usize]);
        }
        stock -= i64::from(demand[p]);
        if stock < 0 {
            return false;
        }
    }
    true
}

/// Feasibility of a single-line schedule against the compiled model rows,
/// with no emergency purchases.
fn model_feasible(model: &PlanningModel, x: &[u32]) -> bool {
    let line = &model.lines[0];
    let h = model.horizon;
    let mut stock = i64::from(model.initial_inventory.get("P").copied().unwrap_or(0));
    let mut inventory = Vec::with_capacity(h);
    for t in 0..h {
        stock += (0..=t).filter(|&s| s + line.lead[s] as usize == t).map(|s| i64::from(x[s])).sum::<i64>();
        stock -= model.demand("P", t);
        inventory.push(stock);
    }
    let plan = Plan {
        schedule: x.iter().map(|&q| vec![q]).collect(),
        orders: Vec::new(),
        tiers: vec![vec![None]; h],
        production: BTreeMap::new(),
        emergency: BTreeMap::new(),
        inventory: BTreeMap::from([("P".to_string(), inventory)]),
        cost: CostBreakdown {
            purchase: 0.0,
            emergency: 0.0,
            holding: 0.0,
            total: 0.0,
        },
    };
    recheck(model, &plan).iter().all(|m| !m.ends_with("violated"))
}

fn schedules(grid: &[u32], horizon: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..horizon {
        out = out
            .into_iter()
            .flat_map(|s| {
                grid.iter().map(move |&q| {
                    let mut s = s.clone();
                    s.push(q);
                    s
                })
            })
            .collect();
    }
    out
}

fn with_truth(truth: u32, mut others: Vec<u32>, at: usize) -> Vec<u32> {
    others.insert(at.min(others.len()), truth);
    others
}

fn merge_safety() -> Verdict {
    const GRID: [u32; 5] = [0, 1, 2, 3, 4];
    let cases = Cell::new(0usize);
    let strict = Cell::new(0usize);
    let checked = Cell::new(0usize);
    let strategy = (
        (1u32..=4, vec(1u32..=4, 0..3)),
        (0u32..=2, vec(0u32..=2, 0..3)),
        (1u32..=4, vec(1u32..=4, 0..3)),
        (1u32..=2, vec(1u32..=2, 0..2)),
        vec(0u32..=3, 4),
        0u32..=3,
        0usize..4,
    );
    let result = deterministic_runner(256).run(&strategy, |(moq, lead, cap, interval, demand, init, at)| {
        let moqs = with_truth(moq.0, moq.1, at);
        let leads = with_truth(lead.0, lead.1, at);
        let caps = with_truth(cap.0, cap.1, at);
        let ints = with_truth(interval.0, interval.1, at);
        let n = moqs.len().max(leads.len()).max(caps.len()).max(ints.len());
        let mut docs = Vec::new();
        for i in 0..n {
            let mut c = constraint(&format!("D{i}"), DocType::Email, false);
            c.moq = moqs.get(i).map(|&m| Moq::Units(m));
            c.lead_time = leads.get(i).map(|&l| LeadTimeProfile::constant(l));
            c.capacity_per_period = caps.get(i).copied();
            c.order_interval = ints.get(i).copied();
            cite(&mut c);
            docs.push(c);
        }
        let (merged, gates) = consolidate(&docs, &ConsolidationPolicy::default());
        prop_assert!(gates.is_empty(), "unexpected gates {gates:?}");

        let mut true_doc = constraint("TRUTH", DocType::Master, true);
        true_doc.moq = Some(Moq::Units(moq.0));
        true_doc.lead_time = Some(LeadTimeProfile::constant(lead.0));
        true_doc.capacity_per_period = Some(cap.0);
        true_doc.order_interval = Some(interval.0);
        cite(&mut true_doc);
        let (truth_set, _) = consolidate(&[true_doc], &ConsolidationPolicy::default());

        let inst = instance(&demand, &GRID, init, None);
        let compile_set = |s: &ConsolidatedConstraintSet| compile(s, &inst, &MasterData::default(), &CompileOptions::default());
        let merged_model = compile_set(&merged).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let truth_model = compile_set(&truth_set).map_err(|e| TestCaseError::fail(e.to_string()))?;

        let value = |f: Field| merged.entries.iter().find(|e| e.key.field == f).map(|e| e.value.clone());
        let merged_terms = Terms {
            moq: match value(Field::Moq) {
                Some(FieldValue::Moq(m)) => m.units(),
                v => return Err(TestCaseError::fail(format!("MOQ {v:?}"))),
            },
            lead: match value(Field::LeadTime) {
                Some(FieldValue::LeadTime(l)) => l.standard,
                v => return Err(TestCaseError::fail(format!("lead {v:?}"))),
            },
            cap: match value(Field::CapacityPerPeriod) {
                Some(FieldValue::Capacity(c)) => c,
                v => return Err(TestCaseError::fail(format!("cap {v:?}"))),
            },
            interval: match value(Field::OrderInterval) {
                Some(FieldValue::OrderInterval(v)) => v,
                v => return Err(TestCaseError::fail(format!("interval {v:?}"))),
            },
        };
        let truth_terms = Terms {
            moq: moq.0,
            lead: lead.0,
            cap: cap.0,
            interval: interval.0,
        };
        let mut contained_strictly = false;
        for x in schedules(&GRID, demand.len()) {
            let m = model_feasible(&merged_model, &x);
            let t = model_feasible(&truth_model, &x);
            prop_assert_eq!(m, direct_feasible(&x, merged_terms, &demand, init), "merged model disagrees on {:?}", x);
            prop_assert_eq!(t, direct_feasible(&x, truth_terms, &demand, init), "true model disagrees on {:?}", x);
            prop_assert!(!m || t, "{:?} feasible under merged {:?} but not under truth {:?}", x, merged_terms, truth_terms);
            contained_strictly |= t && !m;
            checked.set(checked.get() + 1);
        }
        cases.set(cases.get() + 1);
        strict.set(strict.get() + usize::from(contained_strictly));
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    let (cases, strict, checked) = (cases.get(), strict.get(), checked.get());
    ensure!(cases >= 200, "only {cases} cases");
    ensure!(strict >= 1, "no case shows strict containment");
    Ok(format!(
        "{cases} randomized candidate sets, {checked} schedules checked, strict containment in {strict} cases"
    ))
}

fn tier_eligibility() -> Verdict {
    const GRID: [u32; 7] = [0, 50, 100, 150, 200, 300, 400];
    let solved = Cell::new(0usize);
    let orders = Cell::new(0usize);
    let upper_tier = Cell::new(0usize);
    let strategy = (
        vec(0u32..=350, 4),
        proptest::sample::subsequence(vec![50u32, 100, 150, 200, 300], 1..=3),
        any::<bool>(),
        vec(0.2f64..2.0, 4),
        prop_oneof![Just(None), Just(Some(50u32)), Just(Some(100))],
        prop_oneof![Just(None), Just(Some(300u32))],
        0u32..=1,
    );
    let result = deterministic_runner(128).run(&strategy, |(demand, thresholds, from_zero, drops, moq, cap, lead)| {
        let mut tiers = Vec::new();
        let mut price = 12.0;
        if from_zero {
            tiers.push(PriceTier {
                threshold: 0,
                unit_price: price,
            });
        }
        for (k, &threshold) in thresholds.iter().enumerate() {
            price -= drops[k];
            tiers.push(PriceTier {
                threshold,
                unit_price: (price * 100.0).round() / 100.0,
            });
        }
        let mut c = constraint("DOC", DocType::Master, true);
        c.moq = Some(moq.map_or(Moq::NotApplicable, Moq::Units));
        c.lead_time = Some(LeadTimeProfile::constant(lead));
        c.capacity_per_period = cap;
        c.price_tiers = tiers.clone();
        cite(&mut c);
        let (set, _) = consolidate(&[c], &ConsolidationPolicy::default());
        let inst = instance(&demand, &GRID, 0, Some(25.0));
        let model = compile(&set, &inst, &MasterData::default(), &CompileOptions::default())
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let plan = optimize(&model).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (t, row) in plan.schedule.iter().enumerate() {
            let x = row[0];
            let u = plan.tiers[t][0];
            // exactly one tier indicator per nonzero order, none otherwise
            prop_assert_eq!(u.is_some(), x > 0, "period {}: q {} tier {:?}", t, x, u);
            if let Some(k) = u {
                let tau = model.lines[0].tiers[t][k].threshold;
                prop_assert!(x >= tau, "period {}: q {} below tier threshold {}", t, x, tau);
                orders.set(orders.get() + 1);
                upper_tier.set(upper_tier.get() + usize::from(k > 0));
            }
        }
        for o in &plan.orders {
            let k = o.tier.expect("order carries a tier");
            prop_assert!(o.quantity >= tiers[k].threshold);
            prop_assert_eq!(o.unit_price, tiers[k].unit_price);
        }
        prop_assert!(recheck(&model, &plan).is_empty(), "{:?}", recheck(&model, &plan));
        solved.set(solved.get() + 1);
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    let (solved, orders, upper_tier) = (solved.get(), orders.get(), upper_tier.get());
    ensure!(solved >= 100, "only {solved} models solved");
    ensure!(upper_tier > 0, "no order above the first tier");
    Ok(format!("{solved} models, {orders} orders, {upper_tier} above the first tier; no order below its threshold"))
}

/// Every key of `want` appears in `got` with an equal value.
fn contains(got: &Value, want: &Value, at: &str) -> Result<(), String> {
    match (got, want) {
        (Value::Object(g), Value::Object(w)) => {
            for (k, v) in w {
                contains(g.get(k).unwrap_or(&Value::Null), v, &format!("{at}.{k}"))?;
            }
            Ok(())
        }
        (Value::Array(g), Value::Array(w)) if g.len() == w.len() => {
            for (i, (a, b)) in g.iter().zip(w).enumerate() {
                contains(a, b, &format!("{at}[{i}]"))?;
            }
            Ok(())
        }
        _ if got == want => Ok(()),
        _ => Err(format!("{at}: got {got}, want {want}")),
    }
}

struct Inputs {
    corpus: Corpus,
    master: MasterData,
    instance: PlanningInstance,
}

fn inputs(corpus: &str, instance: &Path) -> Inputs {
    let f = fixtures();
    Inputs {
        corpus: Corpus::load(f.join(corpus)).expect("corpus"),
        master: MasterData::load(f.join("walkthrough/master_data.json")).expect("master data"),
        instance: PlanningInstance::load(instance).expect("instance"),
    }
}

fn walkthrough_golden() -> Verdict {
    let f = fixtures();
    let i = inputs("walkthrough/corpus.json", &f.join("walkthrough/instance.json"));
    let records = FixtureExtractor.extract(&i.corpus, &i.master);
    let record = records
        .iter()
        .find(|r| r.doc_id == "Addendum-3")
        .ok_or("no record extracted from Addendum-3")?;
    let normalized = normalize(record, &i.master).map_err(|e| e.to_string())?;
    let golden: Value = serde_json::from_str(&fs::read_to_string(f.join("walkthrough/addendum3_record.json")).unwrap())
        .map_err(|e| e.to_string())?;
    contains(&record.to_json(Some(&i.corpus), Some(&normalized)), &golden, "record")?;

    let collapsed = Pipeline::new(&i.corpus, &i.master, &i.instance, &RunConfig::default()).run();
    ensure!(collapsed.status() == RunStatus::Done, "default policy ended {}", collapsed.status());
    let card = collapsed.cards.first().ok_or("no decision card")?;
    let moq = card
        .binding_constraints
        .iter()
        .find(|b| b.family.as_str() == "moq")
        .ok_or("MOQ is not binding on the card")?;
    ensure!(moq.evidence == ["Addendum-3:L1"], "MOQ card cites {:?}", moq.evidence);
    ensure!(
        card.conditional_collapse_notes.iter().any(|n| n.contains("Addendum-3:L2")),
        "collapse notes {:?}",
        card.conditional_collapse_notes
    );

    let gated_config = RunConfig {
        policy: ConsolidationPolicy {
            collapse_conditionals: false,
            ..ConsolidationPolicy::default()
        },
        ..RunConfig::default()
    };
    let gated = Pipeline::new(&i.corpus, &i.master, &i.instance, &gated_config).run();
    ensure!(gated.status() == RunStatus::Gated, "gating policy ended {}", gated.status());
    ensure!(gated.plan.is_none(), "gated run emitted a plan");
    let cited: Vec<String> = gated
        .gates()
        .iter()
        .flat_map(|g| g.options.iter().flat_map(|o| o.evidence.iter()))
        .filter_map(|s| i.corpus.chunk_for(s).and_then(|c| c.pointer()))
        .collect();
    ensure!(cited.iter().any(|p| p == "Addendum-3:L2"), "gate options cite {cited:?}");
    Ok(format!(
        "Addendum-3 record matches golden on all keys; MOQ card cites Addendum-3:L1; condition collapsed with note citing Addendum-3:L2, or gated ({} gate) when collapsing is off",
        gated.gates().len()
    ))
}

fn run(i: &Inputs, config: &RunConfig) -> Outcome {
    Pipeline::new(&i.corpus, &i.master, &i.instance, config).run()
}

/// Re-checks an emitted plan against a freshly compiled model and against
/// the consolidated terms directly.
fn independent_recheck(i: &Inputs, config: &RunConfig, out: &Outcome) -> Result<(), String> {
    let Some(plan) = &out.plan else { return Ok(()) };
    let options = CompileOptions {
        allow_absent_moq: config.policy.allow_absent_moq,
    };
    let model = compile(&out.consolidated, &i.instance, &i.master, &options).map_err(|e| e.to_string())?;
    let bad = recheck(&model, plan);
    ensure!(bad.is_empty(), "recheck: {bad:?}");
    let value = |f: Field| out.consolidated.entries.iter().find(|e| e.key.field == f).map(|e| &e.value);
    for o in &plan.orders {
        if let Some(FieldValue::Moq(Moq::Units(m))) = value(Field::Moq) {
            ensure!(o.quantity >= *m, "order {} below MOQ {m}", o.quantity);
        }
        if let Some(FieldValue::Capacity(c)) = value(Field::CapacityPerPeriod) {
            ensure!(o.quantity <= *c, "order {} above capacity {c}", o.quantity);
        }
        if let (Some(FieldValue::PriceTiers(tiers)), Some(k)) = (value(Field::PriceTiers), o.tier) {
            ensure!(o.quantity >= tiers[k].threshold, "order {} below tier {}", o.quantity, tiers[k].threshold);
        }
        ensure!(o.arrival_period > o.period, "order in period {} arrives in {}", o.period, o.arrival_period);
    }
    for series in plan.inventory.values().chain(plan.emergency.values()) {
        ensure!(series.iter().all(|&v| v >= 0), "negative series {series:?}");
    }
    Ok(())
}

fn bundle_bytes(out: &Outcome, config: &RunConfig, dir: &Path) -> Vec<(String, Vec<u8>)> {
    write_bundle(out, config, dir).expect("bundle");
    let mut files: Vec<String> = BUNDLE_FILES.iter().map(|s| s.to_string()).collect();
    if dir.join("diagnosis.json").exists() {
        files.push("diagnosis.json".into());
    }
    files.into_iter().map(|f| (f.clone(), fs::read(dir.join(&f)).unwrap())).collect()
}

fn safety_and_replay() -> Verdict {
    let f = fixtures();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let variant = |name: &str, demand: Value| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(f.join("walkthrough/instance.json")).unwrap()).unwrap();
        v["demand"]["88321"] = demand;
        let path = tmp.path().join(name);
        fs::write(&path, v.to_string()).unwrap();
        path
    };
    let heavy = variant("heavy.json", json!([0, 120, 400, 260]));
    let zero = variant("zero.json", json!([0, 0, 0, 0]));
    let base = f.join("walkthrough/instance.json");
    let impossible = f.join("walkthrough/instance_impossible.json");
    let no_collapse = RunConfig {
        policy: ConsolidationPolicy {
            collapse_conditionals: false,
            ..ConsolidationPolicy::default()
        },
        ..RunConfig::default()
    };
    let scenarios: Vec<(&str, &str, &Path, RunConfig)> = vec![
        ("walkthrough", "walkthrough/corpus.json", &base, RunConfig::default()),
        ("uncollapsed", "walkthrough/corpus.json", &base, no_collapse.clone()),
        ("addendum only", "walkthrough/corpus_addendum_only.json", &base, RunConfig::default()),
        ("tied addenda", "walkthrough/corpus_gated.json", &base, RunConfig::default()),
        ("class c conflict", "stripped/corpus.json", &base, RunConfig::default()),
        ("heavy demand", "walkthrough/corpus.json", &heavy, RunConfig::default()),
        ("heavy uncollapsed", "walkthrough/corpus.json", &heavy, no_collapse),
        ("zero demand", "walkthrough/corpus.json", &zero, RunConfig::default()),
        ("impossible", "walkthrough/corpus.json", &impossible, RunConfig::default()),
    ];

    let mut outcomes = 0;
    let mut plans = 0;
    let mut replays = 0;
    for (name, corpus, instance_path, config) in &scenarios {
        let i = inputs(corpus, instance_path);
        // explore every gate option, depth first, recording the resolutions
        let mut stack: Vec<(Outcome, Vec<GateResolution>)> = vec![(run(&i, config), Vec::new())];
        while let Some((out, resolutions)) = stack.pop() {
            outcomes += 1;
            independent_recheck(&i, config, &out).map_err(|e| format!("{name} {resolutions:?}: {e}"))?;
            plans += usize::from(out.plan.is_some());

            let replay_config = RunConfig {
                resolutions: resolutions.clone(),
                ..config.clone()
            };
            let a = run(&i, &replay_config);
            let b = run(&i, &replay_config);
            ensure!(a.status() == out.status(), "{name}: replay ended {} not {}", a.status(), out.status());
            ensure!(a.plan == out.plan && a.cards == out.cards, "{name}: replay differs from the interactive run");
            let dir = tmp.path().join(format!("replay-{replays}"));
            let first = bundle_bytes(&a, &replay_config, &dir.join("a"));
            let second = bundle_bytes(&b, &replay_config, &dir.join("b"));
            for ((fa, ba), (_, bb)) in first.iter().zip(&second) {
                ensure!(ba == bb, "{name}: {fa} differs between identical runs");
            }
            ensure!(first.len() == second.len(), "{name}: bundle file sets differ");
            replays += 1;

            if out.status() == RunStatus::Gated && resolutions.len() < 4 {
                let gate = &out.gates()[0];
                for option in &gate.options {
                    let r = GateResolution::option(&gate.gate_id, &option.option_id);
                    let next = Pipeline::new(&i.corpus, &i.master, &i.instance, config)
                        .resume(out.state.clone(), r.clone())
                        .map_err(|e| format!("{name}: resume {}: {e}", option.option_id))?;
                    let mut rs = resolutions.clone();
                    rs.push(r);
                    stack.push((next, rs));
                }
            }
        }
    }
    Ok(format!(
        "{} scenarios, {outcomes} outcomes over all gate branches, {plans} plans re-checked, {replays} replays byte-identical",
        scenarios.len()
    ))
}
