// Fitting the two emulators to replicated simulator output: a
// heteroscedastic GP for energy and a GP classifier for overheating.

use nroy::design::{replicate_design, sliced_latin_hypercube};
use nroy::emulator::{expected_probability, fit_classifier, fit_hetgp, FitSettings};
use nroy::simulator::{BundledConfig, BundledSimulator};
use nroy::{DesignSpace, HyperPriors};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let space = DesignSpace::building_retrofit();
    let sim = BundledSimulator::new(BundledConfig::default());
    let design = sliced_latin_hypercube(&space, 20, 21)?;

    let mut energy = Vec::new();
    let mut overheat = Vec::new();
    for (i, (x, rep)) in replicate_design(&design, 2)?.into_iter().enumerate() {
        let o = sim.simulate(&x, 1000 + i as u64 + rep as u64)?;
        energy.push((x.clone(), o.energy_kwh_m2));
        overheat.push((x, o.overheated));
    }

    let priors = HyperPriors::default();
    let settings = FitSettings::default().with_seed(22);
    let het = fit_hetgp(&energy, &priors, &settings)?;
    let clf = fit_classifier(&overheat, &priors, &settings)?;
    println!("energy lengthscales {:.3?}", het.mean_params().lengthscales);
    println!("overheat lengthscales {:.3?}", clf.params().lengthscales);

    let probe = space.to_unit(&[0.25, 0.25, 0.05, 0.5, 0.5, 0.5, 0.7, 1.0])?;
    let e = het.predict_mean_energy(&probe);
    let f = clf.predict_logit(&probe);
    println!(
        "probe: energy {:.2} +/- {:.2} (run-to-run sd {:.2}), P(overheat) {:.3}",
        e.mean,
        e.sd(),
        het.noise_variance(&probe).sqrt(),
        expected_probability(&f)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
