mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use nroy::design::{latin_hypercube, sliced_latin_hypercube};
use nroy::seed::derive_seed;
use nroy::simulator::{run_jobs, BundledSimulator, ExternalSimulator, SimJob};
use nroy::{CandidateSet, DesignSpace, InputPoint};

#[test]
fn bundled_problem_has_both_sides_of_each_threshold() {
    let space = DesignSpace::building_retrofit();
    let sim = BundledSimulator::default();
    let cands = CandidateSet::generate(&space, 1000, 21).unwrap();
    let reps = 100;
    let (mut p_low, mut p_high, mut e_low, mut e_high) = (0, 0, 0, 0);
    for i in 0..cands.len() {
        let x = cands.point(i);
        let (mut hot, mut energy) = (0usize, 0.0);
        for r in 0..reps {
            let o = sim.simulate(&x, derive_seed(5, "mc", (i * reps + r) as u64)).unwrap();
            hot += usize::from(o.overheated);
            energy += o.energy_kwh_m2;
        }
        let p = hot as f64 / reps as f64;
        let e = energy / reps as f64;
        p_low += usize::from(p < 0.01);
        p_high += usize::from(p > 0.5);
        e_low += usize::from(e < 15.0);
        e_high += usize::from(e >= 15.0);
    }
    assert!(p_low > 0 && p_high > 0, "overheating spans {p_low} low, {p_high} high");
    assert!(e_low > 0 && e_high > 0, "energy spans {e_low} low, {e_high} high");
}

#[test]
fn insulation_and_small_windows_save_energy() {
    let sim = BundledSimulator::default();
    let best = InputPoint::new(vec![1.0, 1.0, 1.0, 0.0, 0.5, 0.5, 0.5], vec![true]);
    let worst = InputPoint::new(vec![0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5], vec![false]);
    let mean = |x: &InputPoint| (0..1000u64).map(|s| sim.simulate(x, s).unwrap().energy_kwh_m2).sum::<f64>() / 1000.0;
    assert!(mean(&best) < mean(&worst));
}

#[test]
fn large_unshaded_windows_overheat_more() {
    let sim = BundledSimulator::default();
    let exposed = InputPoint::new(vec![0.5, 0.5, 0.5, 1.0, 0.0, 0.0, 0.5], vec![false]);
    let sheltered = InputPoint::new(vec![0.5, 0.5, 0.5, 0.0, 1.0, 1.0, 0.5], vec![false]);
    let rate = |x: &InputPoint| (0..400u64).filter(|&s| sim.simulate(x, s).unwrap().overheated).count();
    assert!(rate(&exposed) > rate(&sheltered));
}

fn jobs(space: &DesignSpace, n: usize) -> Vec<SimJob> {
    let pts = if space.n_binary() > 0 {
        sliced_latin_hypercube(space, n / space.n_slices(), 3).unwrap()
    } else {
        latin_hypercube(space, n, 3).unwrap()
    };
    pts.into_iter()
        .enumerate()
        .flat_map(|(id, p)| {
            (0..2).map(move |rep| SimJob {
                id,
                rep,
                seed: 100 * id as u64 + rep as u64,
                point: p.clone(),
            })
        })
        .collect()
}

#[test]
fn echo_round_trip_through_exchange_directory() {
    let dir = tempfile::tempdir().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let echo = common::spawn_echo(dir.path().to_path_buf(), stop.clone());
    let space = DesignSpace::building_retrofit();
    let sim = ExternalSimulator::new(space.clone(), dir.path())
        .with_poll_interval(Duration::from_millis(2))
        .with_timeout(Duration::from_secs(30));
    let jobs = jobs(&space, 250);
    assert_eq!(jobs.len(), 500);
    let report = run_jobs(&sim, &jobs).unwrap();
    stop.store(true, Ordering::SeqCst);
    assert_eq!(echo.join().unwrap(), 1);
    assert_eq!(report.records.len(), 500);
    assert!(report.dropped.is_empty());
    for (job, rec) in jobs.iter().zip(&report.records) {
        let x1 = space.to_native(&job.point)[0];
        assert_eq!((rec.id, rec.rep, rec.seed), (job.id, job.rep, job.seed));
        assert!((rec.energy_kwh_m2 - (10.0 * x1 + job.rep as f64)).abs() < 1e-9);
        assert_eq!(rec.overheated, job.rep % 2 == 1);
    }
    assert!(!dir.path().join("requests.csv").exists());
}
