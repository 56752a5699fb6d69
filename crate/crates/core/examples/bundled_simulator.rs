// One stochastic year of the bundled building model, with the adaptive
// overheating assessment broken down by criterion.

use nroy::simulator::{BundledConfig, BundledSimulator};
use nroy::DesignSpace;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let space = DesignSpace::building_retrofit();
    let sim = BundledSimulator::new(BundledConfig::default());

    // no retrofit versus a heavily insulated, shaded, ventilated house
    let bare = space.to_unit(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0])?;
    let retrofit = space.to_unit(&[0.3, 0.3, 0.08, 0.3, 1.0, 1.0, 0.4, 1.0])?;

    for (name, x) in [("bare", &bare), ("retrofit", &retrofit)] {
        let run = sim.simulate_detailed(x, 5)?;
        let a = &run.assessment;
        println!(
            "{name:>8}: energy {:.1} kWh/m2, criteria [{}, {}, {}], overheated {}",
            run.energy_kwh_m2, a.criterion1, a.criterion2, a.criterion3, a.overheated
        );
    }

    let reps = 200;
    let hot = (0..reps).filter(|&r| sim.simulate(&bare, r).map(|o| o.overheated).unwrap_or(false)).count();
    println!("bare house overheats in {hot}/{reps} simulated years");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
