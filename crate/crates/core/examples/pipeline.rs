// The full run / validate / report cycle on a small configuration, writing
// into a temporary directory.

use nroy::cli::{self, RunConfig};
use nroy::simulator::BundledSimulator;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = RunConfig::default();
    config.seed = 51;
    config.candidates = 2000;
    config.waves.points_per_wave = 30;
    config.waves.max_waves = 2;
    config.report.grid_resolution = 6;
    config.report.histogram_bins = 6;

    let dir = tempfile::tempdir()?;
    let sim = BundledSimulator::new(config.bundled.clone());
    let outcome = cli::run(&config, dir.path(), &sim)?;
    println!("{}", outcome.summary.message);
    for w in &outcome.summary.waves {
        println!("wave {}: NROY {:.3}", w.wave, w.nroy_fraction);
    }

    let validation = cli::cmd_validate(dir.path(), 20)?;
    for w in &validation.waves {
        println!("wave {} coverage {:.3}", w.wave, w.coverage.fraction);
    }
    let report = cli::cmd_report(dir.path())?;
    println!("report for wave {}: {} files", report.wave, report.files.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
