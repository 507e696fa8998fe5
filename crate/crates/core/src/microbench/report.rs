use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::{BenchRun, DecompositionCell};

/// One row of `results.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub instance: usize,
    pub stream_seed: u64,
    pub demand: String,
    pub l_true: u32,
    pub moq_true: u32,
    pub l_ext: u32,
    pub moq_ext: u32,
    pub c_cheap: f64,
    pub c_exp: f64,
    pub h: f64,
    pub moq_relation: &'static str,
    pub lead_relation: &'static str,
    pub planned_schedule: String,
    pub planned_cost: f64,
    pub executed_schedule: String,
    pub executed_cost: f64,
    pub true_optimal_schedule: String,
    pub true_optimal_cost: f64,
    pub regret: f64,
    pub planned_moq_violation: bool,
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

impl BenchRun {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.results
            .iter()
            .map(|r| {
                let i = &r.instance;
                ResultRow {
                    instance: i.index,
                    stream_seed: i.stream_seed,
                    demand: join(&i.demand),
                    l_true: i.l_true,
                    moq_true: i.moq_true,
                    l_ext: i.l_ext,
                    moq_ext: i.moq_ext,
                    c_cheap: i.costs.c_cheap,
                    c_exp: i.costs.c_exp,
                    h: i.costs.h,
                    moq_relation: i.moq_relation().as_str(),
                    lead_relation: i.lead_relation().as_str(),
                    planned_schedule: join(&r.planned.schedule.quantities()),
                    planned_cost: r.planned.cost,
                    executed_schedule: join(&r.execution.executed),
                    executed_cost: r.execution.cost.total,
                    true_optimal_schedule: join(&r.true_optimum.schedule.quantities()),
                    true_optimal_cost: r.true_optimum.cost,
                    regret: r.regret,
                    planned_moq_violation: r.execution.planned_moq_violation,
                }
            })
            .collect()
    }
}

fn cell(v: Option<f64>, pct: bool) -> String {
    match v {
        None => "n/a".into(),
        Some(x) if pct => format!("{:.1}%", 100.0 * x),
        Some(x) => format!("{x:.2}"),
    }
}

/// Markdown rendering of the summary and decomposition tables.
pub fn render_report(run: &BenchRun) -> String {
    let s = &run.summary;
    let mut out = String::new();
    out.push_str(&format!(
        "# Extraction-error micro-benchmark\n\n{} instances, horizon {}, seed {}, {} schedules per instance, exact enumeration.\n\n",
        s.n,
        run.config.horizon,
        run.config.seed,
        super::Schedule::space(run.config.horizon)
    ));
    out.push_str("| Metric | Value |\n|---|---:|\n");
    let rows: Vec<(String, String)> = vec![
        (
            "Instances with any MOQ violation in planned orders".into(),
            format!("{} / {} = {:.1}%", s.moq_violations, s.n, 100.0 * s.moq_violation_incidence),
        ),
        ("Mean optimal cost under true constraints".into(), format!("${:.2}", s.mean_optimal_cost)),
        ("Mean executed cost of extraction-only plan".into(), format!("${:.2}", s.mean_executed_cost)),
        (
            "Mean regret (absolute)".into(),
            format!(
                "${:.2} (95% CI [{:.2}, {:.2}])",
                s.mean_regret, s.ci_mean_regret.lower, s.ci_mean_regret.upper
            ),
        ),
        ("Mean regret / mean optimal cost".into(), format!("{:.2}%", 100.0 * s.mean_regret_over_mean_optimal)),
        ("Median regret".into(), format!("${:.2}", s.median_regret)),
        ("90th percentile regret".into(), format!("${:.2}", s.p90_regret)),
        ("95th percentile regret".into(), format!("${:.2}", s.p95_regret)),
        ("99th percentile regret".into(), format!("${:.2}", s.p99_regret)),
        ("Maximum regret".into(), format!("${:.2}", s.max_regret)),
        (
            "Fraction with regret > 0".into(),
            format!("{:.1}%", 100.0 * s.fraction_positive_regret),
        ),
        (
            "MOQ-violation incidence 95% CI".into(),
            format!(
                "[{:.1}%, {:.1}%]",
                100.0 * s.ci_moq_violation_incidence.lower,
                100.0 * s.ci_moq_violation_incidence.upper
            ),
        ),
    ];
    for (k, v) in rows {
        out.push_str(&format!("| {k} | {v} |\n"));
    }
    if let Some(c) = &s.conditional_on_violation {
        out.push_str(&format!("| Mean regret conditional on MOQ violation | ${:.2} |\n", c.mean_regret));
        out.push_str(&format!(
            "| 90th percentile regret conditional on MOQ violation | ${:.2} |\n",
            c.p90_regret
        ));
    }
    out.push_str("\n## Error-pattern decomposition\n\n");
    out.push_str("| MOQ relation | Lead time relation | # inst | Mean regret | Median regret | MOQ viol. rate |\n");
    out.push_str("|---|---|---:|---:|---:|---:|\n");
    for c in &run.decomposition {
        out.push_str(&decomposition_row(c));
    }
    out
}

fn decomposition_row(c: &DecompositionCell) -> String {
    format!(
        "| {} | {} | {} | {} | {} | {} |\n",
        c.moq_relation.as_str(),
        c.lead_relation.as_str(),
        c.count,
        cell(c.mean_regret, false),
        cell(c.median_regret, false),
        cell(c.moq_violation_rate, true)
    )
}

/// Writes results.csv, summary.json, decomposition.json and report.md.
pub fn write_artifacts(run: &BenchRun, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv")).map_err(io::Error::other)?;
    for row in run.rows() {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()?;
    fs::write(dir.join("summary.json"), pretty(&run.summary))?;
    fs::write(dir.join("decomposition.json"), pretty(&run.decomposition))?;
    fs::write(dir.join("report.md"), render_report(run))?;
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
