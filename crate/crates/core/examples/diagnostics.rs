// Checking emulators against fresh simulations and summarising the
// surviving space as pairwise projections and marginal histograms.

use nroy::design::latin_hypercube;
use nroy::diagnostics::{interval_coverage, nroy_histograms, projection_grids, rps_check};
use nroy::matcher::{run_wave, Criterion, WaveOutcome, WaveSettings, WaveState};
use nroy::simulator::{BundledConfig, BundledSimulator};
use nroy::{CandidateSet, DesignSpace};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let space = DesignSpace::building_retrofit();
    let sim = BundledSimulator::new(BundledConfig::default());
    let candidates = CandidateSet::generate(&space, 2000, 41)?;
    let criteria = vec![Criterion::overheating(0.01)?, Criterion::energy(15.0)?];
    let settings = WaveSettings {
        points_per_wave: 40,
        seed: 42,
        ..WaveSettings::default()
    };
    let state = WaveState::new(criteria, candidates.len());
    let WaveOutcome::Advanced { state, emulators } = run_wave(&state, &space, &candidates, &sim, &settings)? else {
        return Ok(());
    };

    let held_out = latin_hypercube(&space, 60, 43)?;
    let mut energy = Vec::new();
    let mut hot = Vec::new();
    for (i, x) in held_out.into_iter().enumerate() {
        let o = sim.simulate(&x, 5000 + i as u64)?;
        energy.push((x.clone(), o.energy_kwh_m2));
        hot.push((x, o.overheated));
    }
    let het = emulators.iter().find_map(|e| e.as_hetgp()).unwrap();
    let clf = emulators.iter().find_map(|e| e.as_classifier()).unwrap();
    let cov = interval_coverage(het, &energy, 2.0)?;
    let rps = rps_check(clf, &hot, 500, 44)?;
    println!("2-sd coverage {:.3} (nominal {:.4})", cov.fraction, cov.nominal);
    println!("RPS {:.4} against reference 95% quantile {:.4}: pass {}", rps.observed_score, rps.reference_quantile_95, rps.pass);

    let grids = projection_grids(&space, &candidates, &state.statuses, 8)?;
    let hists = nroy_histograms(&space, &candidates, &state.statuses, 8)?;
    println!("{} projection grids, {} histograms", grids.len(), hists.len());
    for h in &hists {
        let rel: Vec<String> = h.relative.iter().map(|r| format!("{r:.2}")).collect();
        println!("{}: {}", space.variables()[h.variable].name, rel.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
