//! Worlds and runs reused by several criteria, built once.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use schemaforge::corpus::SchemaLibrary;
use schemaforge::editing::EditParams;
use schemaforge::eval::{run_experiment, EvalReport, ExperimentContext};
use schemaforge::induction::{induce_library, InductionParams};
use schemaforge::retrieval::RetrievalParams;
use schemaforge::scoring::Matcher;
use schemaforge::synthworld::{default_grid, generate, World, WorldSpec};

pub struct Planted {
    pub world: World,
    pub library: SchemaLibrary,
}

fn planted(sigma: f64) -> Planted {
    let world = generate(&WorldSpec {
        noise_sigma: sigma,
        ..WorldSpec::default()
    })
    .unwrap();
    let library =
        induce_library(&world.tasks, &world.train, &world.steps, &Matcher::default(), &InductionParams::default()).unwrap();
    Planted { world, library }
}

/// Default world at seed 0 (noise 0.15).
pub fn default_world() -> &'static Planted {
    static W: OnceLock<Planted> = OnceLock::new();
    W.get_or_init(|| planted(WorldSpec::default().noise_sigma))
}

pub fn noiseless_world() -> &'static Planted {
    static W: OnceLock<Planted> = OnceLock::new();
    W.get_or_init(|| planted(0.0))
}

/// The default grid on the default world's unknown-task queries.
pub fn default_reports() -> &'static [EvalReport] {
    static R: OnceLock<Vec<EvalReport>> = OnceLock::new();
    R.get_or_init(|| {
        let p = default_world();
        let provider = p.world.provider();
        let ctx = ExperimentContext {
            provider: &provider,
            matcher: Matcher::default(),
            registry: &p.world.tasks,
            library: Some(&p.library),
            pool: &p.world.pool,
            retrieval: RetrievalParams::default(),
            edit: EditParams::default(),
            ks: vec![1, 5, 10],
            echo: BTreeMap::new(),
        };
        run_experiment(&ctx, &p.world.manifest, &default_grid()).unwrap()
    })
}

pub fn report<'a>(reports: &'a [EvalReport], name: &str) -> &'a EvalReport {
    reports.iter().find(|r| r.config.name == name).unwrap_or_else(|| panic!("no report {name}"))
}
