// Two waves of history matching driven directly through the library, then
// the final design choice under each selection policy.

use nroy::matcher::{final_selection, run_wave, Criterion, Policy, WaveOutcome, WaveSettings, WaveState};
use nroy::simulator::{BundledConfig, BundledSimulator};
use nroy::{CandidateSet, DesignSpace};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let space = DesignSpace::building_retrofit();
    let sim = BundledSimulator::new(BundledConfig::default());
    let candidates = CandidateSet::generate(&space, 3000, 31)?;
    let criteria = vec![Criterion::overheating(0.01)?, Criterion::energy(15.0)?];
    let settings = WaveSettings {
        points_per_wave: 40,
        seed: 32,
        ..WaveSettings::default()
    };

    let mut state = WaveState::new(criteria.clone(), candidates.len());
    for _ in 0..2 {
        match run_wave(&state, &space, &candidates, &sim, &settings)? {
            WaveOutcome::Advanced { state: next, .. } => state = next,
            WaveOutcome::Stopped(t) => {
                println!("stopped: {}", t.message());
                break;
            }
        }
        let c = state.counts();
        println!(
            "wave {}: NROY {:.3}, tenable {:.3}, ruled in {}",
            state.wave,
            c.nroy_fraction(),
            c.tenable_fraction(),
            c.ruled_in
        );
    }

    for policy in Policy::ALL {
        let s = final_selection(&space, &candidates, &state.statuses, &criteria, policy, "x1")?;
        match s.design {
            Some(d) => println!("{:>8}: candidate {} of {} (joint P {:.3})", policy.as_str(), d.candidate_id, s.qualifying, d.joint_probability),
            None => println!("{:>8}: nothing qualifies", policy.as_str()),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
