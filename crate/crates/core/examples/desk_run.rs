//! A short three-way experiment through the harness, written to a temporary
//! directory: the same seed with no filter, the QP filter and the SOS filter.

use sosguard::harness::{run_experiment, Algorithm, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("sosguard_desk_run");
    for algorithm in [Algorithm::DdpgOnly, Algorithm::DdpgQp, Algorithm::DdpgSosp] {
        let cfg = ExperimentConfig {
            algorithm,
            episodes: 2,
            steps: 100,
            seeds: vec![1],
            out: out.join(algorithm.as_str()),
            ..ExperimentConfig::default()
        };
        for o in run_experiment(&cfg)? {
            println!(
                "{:10} seed {}: {} steps, {} with |theta| > 1, {} not certified, output in {}",
                algorithm.as_str(),
                o.seed,
                o.steps(),
                o.violations(),
                o.non_ok_steps(),
                o.dir.display()
            );
        }
    }
    Ok(())
}
