#![allow(dead_code)]

use inertia_region::{load_document, MultiRegionSystem, Region, Scenario, TieLine};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn scenario(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenario_path(name)).expect("scenario file");
    load_document(&text).expect("valid scenario")
}

/// 2..=5 regions on a random spanning tree plus extra ties; only region 0
/// carries a load step.
pub fn random_system(rng: &mut ChaCha8Rng, damped: bool) -> MultiRegionSystem {
    let n = rng.gen_range(2..=5);
    let regions = (0..n)
        .map(|i| {
            let mut r = Region::new(i, rng.gen_range(3.0..20.0));
            if damped {
                r = r.damping(rng.gen_range(0.0..3.0));
            }
            if i == 0 {
                r = r.disturbance(rng.gen_range(0.2..1.5));
            }
            r
        })
        .collect();
    let mut ties = Vec::new();
    for i in 1..n {
        ties.push(TieLine::new(
            rng.gen_range(0..i),
            i,
            rng.gen_range(0.5..5.0),
        ));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.25) && !ties.iter().any(|t| (t.from, t.to) == (i, j)) {
                ties.push(TieLine::new(i, j, rng.gen_range(0.5..5.0)));
            }
        }
    }
    MultiRegionSystem::new(regions, ties, 50.0).expect("connected random system")
}
