use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InstanceResult, Relation};

/// Nearest-rank percentile of an ascending slice: the value at rank
/// ceil(p/100 · n).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sorted(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub lower: f64,
    pub upper: f64,
}

/// 95% percentile-bootstrap intervals for the means of several columns,
/// all computed from the same resamples. The resampling stream is ChaCha8
/// stream 1 under `seed`, separate from every instance stream.
pub fn bootstrap_ci(columns: &[&[f64]], resamples: usize, seed: u64) -> Vec<Ci> {
    let n = columns.first().map_or(0, |c| c.len());
    if n == 0 || resamples == 0 {
        return vec![Ci { lower: 0.0, upper: 0.0 }; columns.len()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut means = vec![Vec::with_capacity(resamples); columns.len()];
    let mut sums = vec![0.0; columns.len()];
    for _ in 0..resamples {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            for (s, col) in sums.iter_mut().zip(columns) {
                *s += col[i];
            }
        }
        for (m, s) in means.iter_mut().zip(&sums) {
            m.push(s / n as f64);
        }
    }
    means
        .into_iter()
        .map(|m| {
            let m = sorted(m);
            Ci {
                lower: nearest_rank(&m, 2.5),
                upper: nearest_rank(&m, 97.5),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalStats {
    pub count: usize,
    pub mean_regret: f64,
    pub p90_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub n: usize,
    pub moq_violations: usize,
    pub moq_violation_incidence: f64,
    pub mean_optimal_cost: f64,
    pub mean_executed_cost: f64,
    pub mean_regret: f64,
    pub mean_regret_over_mean_optimal: f64,
    pub median_regret: f64,
    pub p90_regret: f64,
    pub p95_regret: f64,
    pub p99_regret: f64,
    pub max_regret: f64,
    pub positive_regret: usize,
    pub fraction_positive_regret: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional_on_violation: Option<ConditionalStats>,
    pub bootstrap_resamples: usize,
    pub ci_mean_regret: Ci,
    pub ci_moq_violation_incidence: Ci,
    pub ci_fraction_positive_regret: Ci,
}

pub fn summarize(results: &[InstanceResult], seed: u64, resamples: usize) -> BenchSummary {
    let n = results.len();
    let regret: Vec<f64> = results.iter().map(|r| r.regret).collect();
    let violation: Vec<f64> = results
        .iter()
        .map(|r| f64::from(u8::from(r.execution.planned_moq_violation)))
        .collect();
    let positive: Vec<f64> = results.iter().map(|r| f64::from(u8::from(r.positive_regret()))).collect();
    let sr = sorted(regret.iter().copied());
    let pct = |p: f64| if n == 0 { 0.0 } else { nearest_rank(&sr, p) };
    let mean_optimal_cost = mean(&results.iter().map(|r| r.true_optimum.cost).collect::<Vec<_>>());
    let mean_regret = mean(&regret);
    let conditional: Vec<f64> = results
        .iter()
        .filter(|r| r.execution.planned_moq_violation)
        .map(|r| r.regret)
        .collect();
    let cis = bootstrap_ci(&[&regret, &violation, &positive], resamples, seed);
    let moq_violations = conditional.len();
    let positive_regret = results.iter().filter(|r| r.positive_regret()).count();
    BenchSummary {
        n,
        moq_violations,
        moq_violation_incidence: moq_violations as f64 / n.max(1) as f64,
        mean_optimal_cost,
        mean_executed_cost: mean(&results.iter().map(|r| r.execution.cost.total).collect::<Vec<_>>()),
        mean_regret,
        mean_regret_over_mean_optimal: if mean_optimal_cost > 0.0 { mean_regret / mean_optimal_cost } else { 0.0 },
        median_regret: pct(50.0),
        p90_regret: pct(90.0),
        p95_regret: pct(95.0),
        p99_regret: pct(99.0),
        max_regret: sr.last().copied().unwrap_or(0.0),
        positive_regret,
        fraction_positive_regret: positive_regret as f64 / n.max(1) as f64,
        conditional_on_violation: (!conditional.is_empty()).then(|| ConditionalStats {
            count: conditional.len(),
            mean_regret: mean(&conditional),
            p90_regret: nearest_rank(&sorted(conditional.iter().copied()), 90.0),
        }),
        bootstrap_resamples: resamples,
        ci_mean_regret: cis[0],
        ci_moq_violation_incidence: cis[1],
        ci_fraction_positive_regret: cis[2],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCell {
    pub moq_relation: Relation,
    pub lead_relation: Relation,
    pub count: usize,
    pub mean_regret: Option<f64>,
    pub median_regret: Option<f64>,
    pub moq_violation_rate: Option<f64>,
}

/// All nine (MOQ relation, lead relation) cells, empty ones included.
pub fn decompose(results: &[InstanceResult]) -> Vec<DecompositionCell> {
    let mut cells = Vec::with_capacity(9);
    for m in Relation::ALL {
        for l in Relation::ALL {
            let members: Vec<&InstanceResult> = results
                .iter()
                .filter(|r| r.instance.moq_relation() == m && r.instance.lead_relation() == l)
                .collect();
            let regret: Vec<f64> = members.iter().map(|r| r.regret).collect();
            let count = members.len();
            let nonempty = count > 0;
            cells.push(DecompositionCell {
                moq_relation: m,
                lead_relation: l,
                count,
                mean_regret: nonempty.then(|| mean(&regret)),
                median_regret: nonempty.then(|| nearest_rank(&sorted(regret.iter().copied()), 50.0)),
                moq_violation_rate: nonempty.then(|| {
                    members.iter().filter(|r| r.execution.planned_moq_violation).count() as f64 / count as f64
                }),
            });
        }
    }
    cells
}
