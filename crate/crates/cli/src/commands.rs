use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use clauseplan::corpus::Corpus;
use clauseplan::microbench::{run_benchmark, toy, write_artifacts, BenchConfig, ToyConfig};
use clauseplan::orchestrate::{write_bundle, GateResolution, Pipeline, RunStatus};
use clauseplan::planmodel::PlanningInstance;
use clauseplan::schema::{normalize, MasterData};

use crate::{exit_code, BenchArgs, PlanArgs, PlanConfig, ToyArgs, VerifyArgs, VerifyConfig, EXIT_ERROR, EXIT_GATED, EXIT_OK};

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

pub fn load_master(path: &Path) -> Result<MasterData> {
    MasterData::load(path).with_context(|| format!("loading master data {}", path.display()))
}

pub fn load_instance(path: &Path) -> Result<PlanningInstance> {
    PlanningInstance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

pub fn load_resolutions(path: &Path) -> Result<Vec<GateResolution>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing resolutions {}", path.display()))
}

/// Runs extraction through consolidation and writes `constraints.json`,
/// `gates.json` and `config.json`.
pub fn verify(args: &VerifyArgs) -> Result<u8> {
    let corpus = load_corpus(&args.corpus)?;
    let master = load_master(&args.master)?;
    let config = VerifyConfig {
        command: "verify".into(),
        corpus: absolute(&args.corpus)?,
        master: absolute(&args.master)?,
        run: args.policy.run_config(),
    };
    let outcome = Pipeline::constraints_only(&corpus, &master, &config.run).run();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let records: Vec<Value> = outcome
        .state
        .records
        .iter()
        .map(|r| r.to_json(Some(&corpus), normalize(r, &master).ok().as_ref()))
        .collect();
    let constraints = json!({
        "records": records,
        "consolidated": outcome.consolidated,
    });
    write_json(&args.out.join("constraints.json"), &constraints)?;
    write_json(&args.out.join("gates.json"), outcome.gates())?;
    write_json(&args.out.join("config.json"), &config)?;

    for g in outcome.gates() {
        eprintln!("gate {}: {}", g.gate_id, g.question);
    }
    Ok(match outcome.status() {
        RunStatus::Done => EXIT_OK,
        RunStatus::Gated => EXIT_GATED,
        _ => {
            eprintln!("error: {}", outcome.failure.as_deref().unwrap_or("verification failed"));
            EXIT_ERROR
        }
    })
}

fn plan_config(args: &PlanArgs) -> Result<PlanConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let config: PlanConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            if config.command != "plan" {
                bail!("{} records a `{}` run, not `plan`", path.display(), config.command);
            }
            config
        }
        None => {
            let need = |p: &Option<PathBuf>, flag: &str| p.clone().with_context(|| format!("--{flag} is required"));
            PlanConfig {
                command: "plan".into(),
                corpus: absolute(&need(&args.corpus, "corpus")?)?,
                master: absolute(&need(&args.master, "master")?)?,
                instance: absolute(&need(&args.instance, "instance")?)?,
                run: args.policy.run_config(),
            }
        }
    };
    if let Some(path) = &args.resolutions {
        for r in load_resolutions(path)? {
            if !config.run.resolutions.iter().any(|x| x.gate_id == r.gate_id) {
                config.run.resolutions.push(r);
            }
        }
    }
    Ok(config)
}

/// Full run; writes the outcome bundle into `out`.
pub fn plan(args: &PlanArgs) -> Result<u8> {
    let config = plan_config(args)?;
    let corpus = load_corpus(&config.corpus)?;
    let master = load_master(&config.master)?;
    let instance = load_instance(&config.instance)?;
    let outcome = Pipeline::new(&corpus, &master, &instance, &config.run).run();
    let summary = write_bundle(&outcome, &config, &args.out).with_context(|| format!("writing bundle to {}", args.out.display()))?;

    println!("run {} {:?} after {} iterations", summary.run_id, summary.status, summary.iteration);
    if let Some(cost) = summary.cost {
        println!("plan cost {cost:.2}, {} decision cards", summary.cards);
    }
    for g in outcome.gates() {
        println!("gate {}: {}", g.gate_id, g.question);
    }
    if let Some(f) = &outcome.failure {
        eprintln!("failed: {f}");
    }
    Ok(exit_code(&outcome))
}

pub fn bench(args: &BenchArgs) -> Result<u8> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let config = BenchConfig {
        n: args.n,
        seed: args.seed,
        bootstrap_resamples: args.resamples,
        ..BenchConfig::default()
    };
    let run = run_benchmark(&config);
    write_artifacts(&run, &args.out).with_context(|| format!("writing artifacts to {}", args.out.display()))?;
    let s = &run.summary;
    println!(
        "n={} seed={} mean regret {:.2} [{:.2}, {:.2}], MOQ violation incidence {:.3}",
        config.n, config.seed, s.mean_regret, s.ci_mean_regret.lower, s.ci_mean_regret.upper, s.moq_violation_incidence
    );
    Ok(EXIT_OK)
}

pub fn toy_cmd(args: &ToyArgs) -> Result<u8> {
    let d = ToyConfig::default();
    let report = toy(ToyConfig {
        h: args.h.unwrap_or(d.h),
        l_true: args.l_true.unwrap_or(d.l_true),
        l_ext: args.l_ext.unwrap_or(d.l_ext),
    });
    print!("{}", report.render());
    Ok(if report.ok() { EXIT_OK } else { EXIT_ERROR })
}
