//! Planning model: compilation of consolidated terms into MOQ, capacity,
//! tier, cadence and balance constraints, an exact solver over a quantized
//! order grid, and slack-minimization diagnosis.

mod compile;
mod instance;
mod recheck;
mod search;

pub use compile::{compile, CompileOptions};
pub use instance::{BomEdge, Costs, Node, OrderLine, PlanningCalendar, PlanningInstance, UnitCost, DEFAULT_GRID};
pub use recheck::recheck;
pub use search::{check_feasibility, diagnose, diagnose_with, optimize, schedule_cost, Feasibility, SEARCH_LIMIT};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EvidenceSpan;
use crate::schema::{Field, PriceTier};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no consolidated {field} for supplier {supplier}, part {part} in period {period}")]
    MissingConstraint {
        supplier: String,
        part: String,
        field: Field,
        period: usize,
    },
    #[error("instance declares {0} nodes; only a single planning node is supported")]
    MultiNodeUnsupported(usize),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("bill of materials contains a cycle")]
    CyclicBom,
    #[error("search space of {schedules} schedules exceeds the limit of {limit}")]
    InstanceTooLarge { schedules: f64, limit: u64 },
    #[error("no grid schedule satisfies the model (dominant family: {})", .0.dominant_family.map_or("none", Family::as_str))]
    Infeasible(Box<Diagnosis>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Moq,
    Capacity,
    Tier,
    Cadence,
    Substitution,
    Balance,
    Service,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Moq => "moq",
            Family::Capacity => "capacity",
            Family::Tier => "tier",
            Family::Cadence => "cadence",
            Family::Substitution => "substitution",
            Family::Balance => "balance",
            Family::Service => "service",
        }
    }

    /// Balance and service rows come from instance data, not contracts.
    pub fn is_structural(self) -> bool {
        matches!(self, Family::Balance | Family::Service)
    }

    /// Contract field a family is compiled from.
    pub fn field(self) -> Option<Field> {
        match self {
            Family::Moq => Some(Field::Moq),
            Family::Capacity => Some(Field::CapacityPerPeriod),
            Family::Tier => Some(Field::PriceTiers),
            Family::Cadence => Some(Field::OrderInterval),
            Family::Substitution => Some(Field::SubstitutionPolicy),
            Family::Balance | Family::Service => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Evidence { spans: Vec<EvidenceSpan> },
    HumanAttestation {
        gate_id: String,
        resolved_by: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    /// Master-data evidence such as an AVL approval.
    MasterData { spans: Vec<EvidenceSpan>, note: String },
    Structural,
}

impl Provenance {
    pub fn spans(&self) -> &[EvidenceSpan] {
        match self {
            Provenance::Evidence { spans } | Provenance::MasterData { spans, .. } => spans,
            _ => &[],
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Evidence { spans } | Provenance::MasterData { spans, .. } => {
                let s: Vec<String> = spans.iter().map(|s| s.to_string()).collect();
                f.write_str(&s.join(", "))
            }
            Provenance::HumanAttestation { gate_id, resolved_by, .. } => {
                write!(f, "attested by {resolved_by} ({gate_id})")
            }
            Provenance::Structural => f.write_str("structural"),
        }
    }
}

/// One linear row of the model. Periods are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// x ≥ MOQ·z
    MoqLower { line: usize, period: usize, moq: u32 },
    /// x ≤ M·z
    BigM { line: usize, period: usize, m: u32 },
    /// x ≤ Cap
    Capacity { line: usize, period: usize, cap: u32 },
    /// Σ_k u_k = z
    TierChoice { line: usize, period: usize },
    /// x ≥ Σ_k τ_k·u_k
    TierThreshold { line: usize, period: usize },
    /// z_t + z_t' ≤ 1
    Cadence { line: usize, period: usize, other: usize },
    /// x = 0 for a substitute without approval.
    Forbidden { line: usize, period: usize },
    /// Inventory balance for a part.
    Balance { part: String, period: usize },
    /// No backlog: requirements met from stock, arrivals, production or
    /// emergency buys.
    Service { part: String, period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConstraint {
    pub id: String,
    pub family: Family,
    #[serde(flatten)]
    pub kind: ConstraintKind,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineModel {
    pub supplier: String,
    pub part: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serves: Option<String>,
    /// Per order period; `None` is "no MOQ".
    pub moq: Vec<Option<u32>>,
    pub cap: Vec<Option<u32>>,
    /// Lead time of an order placed in each period.
    pub lead: Vec<u32>,
    pub big_m: Vec<u32>,
    /// Minimum number of periods between orders, per order period.
    pub interval: Vec<u32>,
    /// Price tiers in force for each order period, ascending thresholds.
    pub tiers: Vec<Vec<PriceTier>>,
    pub unit_cost: Option<f64>,
    pub allowed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval: Option<EvidenceSpan>,
}

impl LineModel {
    pub fn covers(&self) -> &str {
        self.serves.as_deref().unwrap_or(&self.part)
    }

    /// Highest tier whose threshold `q` meets.
    pub fn tier_for(&self, t: usize, q: u32) -> Option<usize> {
        self.tiers[t].iter().rposition(|tier| tier.threshold <= q)
    }

    pub fn unit_price(&self, t: usize, q: u32) -> Option<f64> {
        if self.tiers[t].is_empty() {
            self.unit_cost
        } else {
            self.tier_for(t, q).map(|k| self.tiers[t][k].unit_price)
        }
    }

    pub fn describe(&self) -> String {
        match &self.serves {
            Some(s) => format!("{} from {} (substitute for {s})", self.part, self.supplier),
            None => format!("{} from {}", self.part, self.supplier),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningModel {
    pub node: String,
    pub horizon: usize,
    pub period_starts: Vec<NaiveDate>,
    pub grid: Vec<u32>,
    pub parts: Vec<String>,
    /// Parents before components.
    pub production_order: Vec<String>,
    pub lines: Vec<LineModel>,
    pub bom: Vec<BomEdge>,
    pub demand: BTreeMap<String, Vec<u32>>,
    pub emergency_cost: BTreeMap<String, f64>,
    pub holding_cost: BTreeMap<String, f64>,
    pub initial_inventory: BTreeMap<String, u32>,
    pub constraints: Vec<ModelConstraint>,
}

impl PlanningModel {
    pub fn demand(&self, part: &str, t: usize) -> i64 {
        self.demand.get(part).map_or(0, |d| d[t] as i64)
    }

    pub fn produced(&self, part: &str) -> bool {
        self.bom.iter().any(|e| e.parent == part)
    }

    pub fn family_count(&self, family: Family) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    /// Human-readable listing, one constraint per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.constraints {
            let row = match &c.kind {
                ConstraintKind::MoqLower { line, period, moq } => {
                    format!("{} >= {moq}*{}", self.x(*line, *period), self.z(*line, *period))
                }
                ConstraintKind::BigM { line, period, m } => {
                    format!("{} <= {m}*{}", self.x(*line, *period), self.z(*line, *period))
                }
                ConstraintKind::Capacity { line, period, cap } => format!("{} <= {cap}", self.x(*line, *period)),
                ConstraintKind::TierChoice { line, period } => {
                    let l = &self.lines[*line];
                    let u: Vec<String> = (0..l.tiers[*period].len()).map(|k| format!("u[{k}]")).collect();
                    format!("{} = {}  ({})", u.join(" + "), self.z(*line, *period), self.x(*line, *period))
                }
                ConstraintKind::TierThreshold { line, period } => {
                    let l = &self.lines[*line];
                    let u: Vec<String> = l.tiers[*period]
                        .iter()
                        .enumerate()
                        .map(|(k, t)| format!("{}*u[{k}]", t.threshold))
                        .collect();
                    format!("{} >= {}", self.x(*line, *period), u.join(" + "))
                }
                ConstraintKind::Cadence { line, period, other } => {
                    format!("{} + {} <= 1", self.z(*line, *period), self.z(*line, *other))
                }
                ConstraintKind::Forbidden { line, period } => format!("{} = 0", self.x(*line, *period)),
                ConstraintKind::Balance { part, period } => {
                    format!("I[{part},t={}] = I[t-1] + arrivals + y + e - usage - demand", period + 1)
                }
                ConstraintKind::Service { part, period } => format!("I[{part},t={}] >= 0", period + 1),
            };
            out.push_str(&format!("{:<5} [{}] {row}  <- {}\n", c.id, c.family, c.provenance));
        }
        out
    }

    fn x(&self, line: usize, t: usize) -> String {
        let l = &self.lines[line];
        format!("x[{},{},t={}]", l.supplier, l.part, t + 1)
    }

    fn z(&self, line: usize, t: usize) -> String {
        let l = &self.lines[line];
        format!("z[{},{},t={}]", l.supplier, l.part, t + 1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub purchase: f64,
    pub emergency: f64,
    pub holding: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderDecision {
    pub line: usize,
    pub supplier: String,
    pub part: String,
    /// 1-based period.
    pub period: usize,
    pub quantity: u32,
    pub arrival_period: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<usize>,
    pub unit_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// `schedule[t][line]`, 0-based periods.
    pub schedule: Vec<Vec<u32>>,
    pub orders: Vec<OrderDecision>,
    /// Selected tier per period and line.
    pub tiers: Vec<Vec<Option<usize>>>,
    pub production: BTreeMap<String, Vec<i64>>,
    pub emergency: BTreeMap<String, Vec<i64>>,
    pub inventory: BTreeMap<String, Vec<i64>>,
    pub cost: CostBreakdown,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    pub id: String,
    pub family: Family,
    pub slack: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub feasible: bool,
    /// Schedule attaining the minimum weighted slack, `[t][line]`.
    pub schedule: Vec<Vec<u32>>,
    /// Nonzero slacks of that schedule.
    pub slacks: Vec<ConstraintSlack>,
    pub family_totals: BTreeMap<Family, f64>,
    pub total_weighted_slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_family: Option<Family>,
    /// Contract families carrying slack in some minimum-slack schedule.
    pub conflicting_families: BTreeSet<Family>,
    /// Clusters behind the slack-carrying contract constraints.
    pub implicated_clusters: BTreeSet<String>,
}

impl Diagnosis {
    pub fn feasible_marker() -> Self {
        Self {
            feasible: true,
            schedule: Vec::new(),
            slacks: Vec::new(),
            family_totals: BTreeMap::new(),
            total_weighted_slack: 0.0,
            dominant_family: None,
            conflicting_families: BTreeSet::new(),
            implicated_clusters: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackWeights(pub BTreeMap<Family, f64>);

impl Default for SlackWeights {
    fn default() -> Self {
        Self(BTreeMap::new())
    }
}

impl SlackWeights {
    pub fn weight(&self, f: Family) -> f64 {
        self.0.get(&f).copied().unwrap_or(1.0)
    }
}
