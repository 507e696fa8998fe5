//! Inputs shared by the criterion benches in `benches/`.

use std::path::PathBuf;

use clauseplan::corpus::Corpus;
use clauseplan::microbench::{generate_instances, BenchInstance};
use clauseplan::planmodel::PlanningInstance;
use clauseplan::schema::MasterData;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

/// First `n` benchmark instances of the default seed.
pub fn sample_instances(n: usize) -> Vec<BenchInstance> {
    generate_instances(n, 42)
}

pub struct Walkthrough {
    pub corpus: Corpus,
    pub master: MasterData,
    pub instance: PlanningInstance,
}

pub fn walkthrough() -> Walkthrough {
    let dir = fixtures().join("walkthrough");
    Walkthrough {
        corpus: Corpus::load(dir.join("corpus.json")).expect("walkthrough corpus"),
        master: MasterData::load(dir.join("master_data.json")).expect("walkthrough master data"),
        instance: PlanningInstance::load(dir.join("instance.json")).expect("walkthrough instance"),
    }
}
