//! Single-item replenishment benchmark computed by exhaustive enumeration:
//! plan under extracted MOQ and lead time, execute under the true terms,
//! and measure regret against the true optimum.

mod report;
mod stats;
mod toy;

pub use report::{render_report, write_artifacts, ResultRow};
pub use stats::{bootstrap_ci, decompose, nearest_rank, summarize, BenchSummary, Ci, DecompositionCell};
pub use toy::{toy, ToyConfig, ToyReport, TOY_DEMAND, TOY_MOQ};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Order quantities available in every period.
pub const ACTIONS: [u32; 9] = [0, 50, 100, 150, 200, 300, 400, 450, 600];
pub const MOQ_LEVELS: [u32; 4] = [50, 100, 150, 200];
pub const LEAD_LEVELS: [u32; 3] = [1, 2, 3];
pub const HORIZON: usize = 5;

const POSITIVE: f64 = 1e-9;

/// An order schedule on the action grid, one action index per period.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Schedule(Vec<u8>);

impl Schedule {
    pub fn zeros(horizon: usize) -> Self {
        Self(vec![0; horizon])
    }

    /// `None` when some quantity is not on the grid.
    pub fn from_quantities(q: &[u32]) -> Option<Self> {
        q.iter()
            .map(|&v| ACTIONS.iter().position(|&a| a == v).map(|i| i as u8))
            .collect::<Option<Vec<u8>>>()
            .map(Self)
    }

    pub fn quantities(&self) -> Vec<u32> {
        self.0.iter().map(|&i| ACTIONS[i as usize]).collect()
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    /// Number of distinct schedules over `horizon` periods.
    pub fn space(horizon: usize) -> u64 {
        (ACTIONS.len() as u64).pow(horizon as u32)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q: Vec<String> = self.quantities().iter().map(u32::to_string).collect();
        write!(f, "({})", q.join(","))
    }
}

impl Serialize for Schedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.quantities().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let q = Vec::<u32>::deserialize(d)?;
        Schedule::from_quantities(&q).ok_or_else(|| serde::de::Error::custom("quantity not on the action grid"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c_cheap: f64,
    pub c_exp: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    Over,
    Under,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Equal, Relation::Over, Relation::Under];

    pub fn of(extracted: u32, truth: u32) -> Self {
        match extracted.cmp(&truth) {
            std::cmp::Ordering::Less => Relation::Under,
            std::cmp::Ordering::Equal => Relation::Equal,
            std::cmp::Ordering::Greater => Relation::Over,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Equal => "equal",
            Relation::Over => "over",
            Relation::Under => "under",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub index: usize,
    pub stream_seed: u64,
    pub demand: Vec<u32>,
    pub l_true: u32,
    pub moq_true: u32,
    pub l_ext: u32,
    pub moq_ext: u32,
    pub costs: CostParams,
}

impl BenchInstance {
    pub fn moq_relation(&self) -> Relation {
        Relation::of(self.moq_ext, self.moq_true)
    }

    pub fn lead_relation(&self) -> Relation {
        Relation::of(self.l_ext, self.l_true)
    }
}

/// Probabilities of one-level extraction errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub moq_under: f64,
    pub moq_over: f64,
    pub lead_under: f64,
    pub lead_over: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            moq_under: 0.30,
            moq_over: 0.10,
            lead_under: 0.25,
            lead_over: 0.10,
        }
    }
}

impl ErrorModel {
    pub const NONE: Self = Self {
        moq_under: 0.0,
        moq_over: 0.0,
        lead_under: 0.0,
        lead_over: 0.0,
    };
}

/// The `i`-th output of a SplitMix64 generator seeded with `seed`.
pub fn splitmix64(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn step<T: Copy>(levels: &[T], idx: usize, draw: f64, under: f64, over: f64) -> T {
    let j = if draw < under {
        idx.saturating_sub(1)
    } else if draw < under + over {
        (idx + 1).min(levels.len() - 1)
    } else {
        idx
    };
    levels[j]
}

pub fn generate_instances(n: usize, seed: u64) -> Vec<BenchInstance> {
    generate_instances_with(n, seed, HORIZON, &ErrorModel::default())
}

pub fn generate_instances_with(n: usize, seed: u64, horizon: usize, errors: &ErrorModel) -> Vec<BenchInstance> {
    (0..n)
        .map(|index| {
            let stream_seed = splitmix64(seed, index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            let demand: Vec<u32> = (0..horizon).map(|_| rng.random_range(0..=80)).collect();
            let li = rng.random_range(0..LEAD_LEVELS.len());
            let mi = rng.random_range(0..MOQ_LEVELS.len());
            let c_cheap = rng.random_range(6.0..12.0);
            let uplift = rng.random_range(4.0..12.0);
            let h = rng.random_range(0.02..0.2);
            let moq_draw: f64 = rng.random();
            let lead_draw: f64 = rng.random();
            BenchInstance {
                index,
                stream_seed,
                demand,
                l_true: LEAD_LEVELS[li],
                moq_true: MOQ_LEVELS[mi],
                l_ext: step(&LEAD_LEVELS, li, lead_draw, errors.lead_under, errors.lead_over),
                moq_ext: step(&MOQ_LEVELS, mi, moq_draw, errors.moq_under, errors.moq_over),
                costs: CostParams {
                    c_cheap,
                    c_exp: c_cheap + uplift,
                    h,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSplit {
    pub cheap: f64,
    pub emergency: f64,
    pub holding: f64,
    pub total: f64,
}

struct Trace {
    cost: CostSplit,
    emergency: Vec<u32>,
    inventory: Vec<u32>,
}

/// Orders placed in period t arrive at t + lead; each period's shortfall is
/// bought at c_exp; holding accrues on every end-of-period inventory.
/// Purchases are paid at order time, including orders that arrive after
/// the horizon.
fn run(q: &[u32], lead: u32, costs: &CostParams, demand: &[u32]) -> Trace {
    let horizon = demand.len();
    let mut emergency = vec![0; horizon];
    let mut inventory = vec![0; horizon];
    let mut stock: u32 = 0;
    let mut cheap_units: u32 = 0;
    let mut emergency_units: u32 = 0;
    let mut holding_units: u32 = 0;
    for t in 0..horizon {
        cheap_units += q[t];
        if t >= lead as usize {
            stock += q[t - lead as usize];
        }
        if stock >= demand[t] {
            stock -= demand[t];
        } else {
            emergency[t] = demand[t] - stock;
            emergency_units += emergency[t];
            stock = 0;
        }
        inventory[t] = stock;
        holding_units += stock;
    }
    let cheap = cheap_units as f64 * costs.c_cheap;
    let emergency_cost = emergency_units as f64 * costs.c_exp;
    let holding = holding_units as f64 * costs.h;
    Trace {
        cost: CostSplit {
            cheap,
            emergency: emergency_cost,
            holding,
            total: cheap + emergency_cost + holding,
        },
        emergency,
        inventory,
    }
}

/// Planning cost under the planner's terms; `None` when an order breaks the
/// MOQ dichotomy.
pub fn plan_cost(schedule: &Schedule, moq: u32, lead: u32, costs: &CostParams, demand: &[u32]) -> Option<f64> {
    let q = schedule.quantities();
    if q.iter().any(|&v| v > 0 && v < moq) {
        return None;
    }
    Some(run(&q, lead, costs, demand).cost.total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub executed: Vec<u32>,
    pub emergency: Vec<u32>,
    pub inventory: Vec<u32>,
    pub cost: CostSplit,
    pub planned_moq_violation: bool,
}

/// Executes a schedule under the true terms: the supplier uplifts orders
/// below the true MOQ and late arrivals are covered by emergency buys.
pub fn execute(schedule: &Schedule, moq_true: u32, lead_true: u32, costs: &CostParams, demand: &[u32]) -> ExecutionResult {
    let planned = schedule.quantities();
    let executed: Vec<u32> = planned.iter().map(|&v| if v > 0 && v < moq_true { moq_true } else { v }).collect();
    let trace = run(&executed, lead_true, costs, demand);
    ExecutionResult {
        planned_moq_violation: planned.iter().any(|&v| v > 0 && v < moq_true),
        executed,
        emergency: trace.emergency,
        inventory: trace.inventory,
        cost: trace.cost,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub schedule: Schedule,
    pub cost: f64,
    /// Schedules examined, valid or not.
    pub evaluated: u64,
}

/// Minimum planning cost over every schedule on the grid; ties go to the
/// lexicographically smallest schedule.
pub fn enumerate_optimal(moq: u32, lead: u32, costs: &CostParams, demand: &[u32]) -> Optimum {
    let horizon = demand.len();
    let mut idx = vec![0u8; horizon];
    let mut best: Option<(Vec<u8>, f64)> = None;
    let mut evaluated = 0u64;
    let mut q = vec![0u32; horizon];
    loop {
        evaluated += 1;
        for (t, &i) in idx.iter().enumerate() {
            q[t] = ACTIONS[i as usize];
        }
        if q.iter().all(|&v| v == 0 || v >= moq) {
            let c = run(&q, lead, costs, demand).cost.total;
            if best.as_ref().is_none_or(|(_, b)| c < *b - 1e-9) {
                best = Some((idx.clone(), c));
            }
        }
        // odometer, last period fastest: lexicographic order
        let mut t = horizon;
        loop {
            if t == 0 {
                let (s, cost) = best.expect("the all-zero schedule is always valid");
                return Optimum {
                    schedule: Schedule(s),
                    cost,
                    evaluated,
                };
            }
            t -= 1;
            idx[t] += 1;
            if (idx[t] as usize) < ACTIONS.len() {
                break;
            }
            idx[t] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: BenchInstance,
    pub planned: Optimum,
    pub execution: ExecutionResult,
    pub true_optimum: Optimum,
    pub regret: f64,
}

impl InstanceResult {
    pub fn positive_regret(&self) -> bool {
        self.regret > POSITIVE
    }
}

pub fn evaluate(instance: &BenchInstance) -> InstanceResult {
    let planned = enumerate_optimal(instance.moq_ext, instance.l_ext, &instance.costs, &instance.demand);
    let execution = execute(&planned.schedule, instance.moq_true, instance.l_true, &instance.costs, &instance.demand);
    let true_optimum = enumerate_optimal(instance.moq_true, instance.l_true, &instance.costs, &instance.demand);
    InstanceResult {
        instance: instance.clone(),
        regret: execution.cost.total - true_optimum.cost,
        planned,
        execution,
        true_optimum,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub seed: u64,
    pub horizon: usize,
    pub errors: ErrorModel,
    pub bootstrap_resamples: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 500,
            seed: 42,
            horizon: HORIZON,
            errors: ErrorModel::default(),
            bootstrap_resamples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub config: BenchConfig,
    pub results: Vec<InstanceResult>,
    pub summary: BenchSummary,
    pub decomposition: Vec<DecompositionCell>,
}

/// Instances are evaluated in parallel; results keep instance order, so
/// every reported number is independent of scheduling.
pub fn run_benchmark(config: &BenchConfig) -> BenchRun {
    let instances = generate_instances_with(config.n, config.seed, config.horizon, &config.errors);
    let results: Vec<InstanceResult> = instances.par_iter().map(evaluate).collect();
    let summary = summarize(&results, config.seed, config.bootstrap_resamples);
    let decomposition = decompose(&results);
    BenchRun {
        config: *config,
        results,
        summary,
        decomposition,
    }
}
