mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nroy::cli::{self, RunConfig, RunLedger};
use nroy::matcher::Termination;
use nroy::seed::derive_seed;
use nroy::simulator::{SimJob, SimOutcome, Simulator};
use nroy::{DesignSpace, Error, JobError, SimulatorError, VariableSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick() -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = 7;
    c.candidates = 3000;
    c.waves.points_per_wave = 40;
    c.waves.max_waves = 2;
    c.report.grid_resolution = 8;
    c.report.histogram_bins = 8;
    c
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn run(config: &RunConfig, dir: &Path) -> cli::RunOutcome {
    let sim = config.build_simulator().unwrap();
    cli::run(config, dir, sim.as_ref()).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = run(&quick(), a.path());
    run(&quick(), b.path());
    assert_eq!(out.summary.waves.len(), 2);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.contains_key("wave_2/grids.csv") && sa.contains_key("selection.json"));
    assert_eq!(sa, sb);
}

#[test]
fn resume_after_interrupt_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    run(&quick(), full.path());

    let part = tempfile::tempdir().unwrap();
    let mut one = quick();
    one.waves.max_waves = 1;
    run(&one, part.path());
    // debris of a second wave that died before reaching the ledger
    fs::create_dir_all(part.path().join("wave_2")).unwrap();
    fs::write(part.path().join("wave_2/design.csv"), "id,rep\n0,").unwrap();
    fs::write(part.path().join("summary.json"), "{").unwrap();
    run(&quick(), part.path());
    assert_eq!(snapshot(full.path()), snapshot(part.path()));
}

#[test]
fn ledger_lists_every_artifact_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    run(&quick(), dir.path());
    let ledger = RunLedger::load(dir.path()).unwrap().unwrap();
    assert_eq!(ledger.waves.len(), 2);
    assert_eq!(ledger.config_hash, quick().hash());
    assert_eq!(ledger.candidate_seed, derive_seed(7, "candidates", 0));
    for a in ledger.artifacts() {
        assert_eq!(cli::sha256_file(&dir.path().join(&a.path)).unwrap(), a.sha256, "{}", a.path);
    }
    fs::write(dir.path().join("wave_1/candidates.csv"), "tampered").unwrap();
    assert!(matches!(cli::run(&quick(), dir.path(), quick().build_simulator().unwrap().as_ref()), Err(Error::State(_))));
}

#[test]
fn resume_refuses_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    run(&quick(), dir.path());
    let mut other = quick();
    other.criteria.energy_target = 20.0;
    let sim = other.build_simulator().unwrap();
    assert!(matches!(cli::run(&other, dir.path(), sim.as_ref()), Err(Error::Config(_))));
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".nroy.lock"), "").unwrap();
    let sim = quick().build_simulator().unwrap();
    assert!(matches!(cli::run(&quick(), dir.path(), sim.as_ref()), Err(Error::State(_))));
}

#[test]
fn impossible_thresholds_report_an_empty_level_set() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick();
    c.criteria.p_target = 1e-9;
    c.criteria.energy_target = 0.001;
    c.waves.max_waves = 3;
    let out = run(&c, dir.path());
    assert_eq!(out.summary.termination, Termination::LevelSetEmpty);
    assert_eq!(out.summary.message, "no values of x are in the level-set");
    assert!(out.summary.waves.len() <= 2);
    assert_eq!(out.exit_code(), cli::EXIT_EMPTY_LEVEL_SET);
    assert!(out.selections.iter().all(|s| s.design.is_none()));
}

#[test]
fn report_covers_every_pair_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    run(&quick(), dir.path());
    let r = cli::cmd_report(dir.path()).unwrap();
    assert_eq!((r.wave, r.grids, r.histograms), (2, 28, 8));
    let first = fs::read(dir.path().join("report/grids.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    // 21 continuous pairs of 8x8 cells and 7 pairs against the binary axis of 8x2
    assert_eq!(text.lines().count(), 1 + 21 * 64 + 7 * 16);
    cli::cmd_report(dir.path()).unwrap();
    assert_eq!(fs::read(dir.path().join("report/grids.csv")).unwrap(), first);
}

#[test]
fn validate_rejects_bad_requests() {
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(cli::cmd_validate(empty.path(), 10), Err(Error::State(_))));
    let dir = tempfile::tempdir().unwrap();
    run(&quick(), dir.path());
    assert!(matches!(cli::cmd_validate(dir.path(), 0), Err(Error::Contract(_))));
    fs::remove_file(dir.path().join("wave_2/state.json")).unwrap();
    assert!(matches!(cli::cmd_validate(dir.path(), 10), Err(Error::State(_))));
}

#[test]
fn validation_reports_each_wave_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    run(&quick(), dir.path());
    let a = cli::cmd_validate(dir.path(), 41).unwrap();
    let bytes = fs::read(dir.path().join("validation/validation.json")).unwrap();
    let b = cli::cmd_validate(dir.path(), 41).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(dir.path().join("validation/validation.json")).unwrap(), bytes);
    // rounded up to whole slices
    assert_eq!(a.n_validation, 42);
    assert_eq!(a.waves.len(), 2);
    for w in &a.waves {
        assert_eq!(w.coverage.n_validation, 42);
        assert!(w.rps.observed_score.is_finite() && w.rps.reference_quantile_95.is_finite());
    }
}

/// Two continuous inputs; energy rises with `a`, overheating with `b`.
struct Toy(DesignSpace);

impl Simulator for Toy {
    fn name(&self) -> &str {
        "toy"
    }

    fn space(&self) -> &DesignSpace {
        &self.0
    }

    fn run_batch(&self, jobs: &[SimJob]) -> Result<Vec<Result<SimOutcome, JobError>>, SimulatorError> {
        Ok(jobs
            .iter()
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(j.seed);
                let (a, b) = (j.point.continuous[0], j.point.continuous[1]);
                Ok(SimOutcome {
                    energy_kwh_m2: 5.0 + 20.0 * a + rng.random_range(-1.0..1.0),
                    overheated: rng.random_bool(b * b),
                })
            })
            .collect())
    }
}

#[test]
fn two_variable_space_reports_one_grid() {
    let space = DesignSpace::new(vec![VariableSpec::continuous("a", 0.0, 1.0), VariableSpec::continuous("b", 0.0, 1.0)])
        .unwrap();
    let mut c = quick();
    c.simulator = "external:unused".into();
    c.space = space.clone();
    c.report.preference = "a".into();
    let dir = tempfile::tempdir().unwrap();
    cli::run(&c, dir.path(), &Toy(space)).unwrap();
    let r = cli::cmd_report(dir.path()).unwrap();
    assert_eq!((r.grids, r.histograms), (1, 2));
}

#[test]
fn external_simulator_drives_a_full_run() {
    let exchange = tempfile::tempdir().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let echo = common::spawn_echo(exchange.path().to_path_buf(), stop.clone());
    let mut c = quick();
    c.waves.max_waves = 1;
    c.simulator = format!("external:{}", exchange.path().display());
    let out_dir = tempfile::tempdir().unwrap();
    let config_path = out_dir.path().join("in.toml");
    fs::write(&config_path, c.to_toml()).unwrap();
    let out = cli::cmd_run(&config_path, &out_dir.path().join("run"), cli::RunOverrides::default());
    stop.store(true, Ordering::SeqCst);
    let out = out.unwrap();
    assert_eq!(echo.join().unwrap(), 1);
    assert_eq!(out.summary.waves[0].simulations, 80);
    let sims = fs::read_to_string(out_dir.path().join("run/wave_1/simulations.csv")).unwrap();
    assert!(sims.starts_with("id,rep,seed,energy_kwh_m2,overheat\n"));
}

#[test]
fn command_line_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, quick().to_toml()).unwrap();
    let out = cli::cmd_run(&path, &dir.path().join("r"), cli::RunOverrides { seed: Some(11), max_waves: Some(1) }).unwrap();
    assert_eq!((out.summary.master_seed, out.summary.waves.len()), (11, 1));
    let err = cli::cmd_run(&path, &dir.path().join("z"), cli::RunOverrides { seed: None, max_waves: Some(0) });
    assert_eq!(cli::exit_code(&err.unwrap_err()), cli::EXIT_CONFIG);
    fs::write(&path, "candidates = 0").unwrap();
    let err = cli::cmd_run(&path, &dir.path().join("z"), cli::RunOverrides::default()).unwrap_err();
    assert_eq!(cli::exit_code(&err), cli::EXIT_CONFIG);
}
