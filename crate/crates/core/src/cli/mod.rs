//! The three commands behind the `nroy` binary: `run`, `validate` and
//! `report`. Each works on a run directory:
//!
//! ```text
//! <out>/config.toml            effective configuration
//! <out>/ledger.json            config hash, seeds, artifact hashes
//! <out>/wave_<k>/state.json    design, simulations, emulator snapshots
//! <out>/wave_<k>/candidates.csv
//! <out>/wave_<k>/design.csv, simulations.csv, grids.csv, histograms.csv
//! <out>/summary.json, selection.json
//! <out>/validation/, <out>/report/
//! ```

pub mod config;
mod ledger;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{latin_hypercube, sliced_latin_hypercube, CandidateSet, DesignSpace, InputPoint};
use crate::diagnostics::{
    self, grids_csv, histograms_csv, nroy_histograms, projection_grids, CoverageReport, RpsReport,
};
use crate::error::{Error, Result};
use crate::matcher::{
    final_selection, read_status_csv, status_csv, run_wave, Policy, Selection, Termination, WaveOutcome, WaveSeeds,
    WaveState, WaveSummary,
};
use crate::seed::derive_seed;
use crate::simulator::{run_jobs, SimJob, SimRecord, Simulator};

pub use config::RunConfig;
pub use ledger::{sha256_file, Artifact, LedgerWave, RunLedger, LEDGER_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATOR: i32 = 3;
pub const EXIT_FIT: i32 = 4;
pub const EXIT_OTHER: i32 = 5;
/// Every candidate was ruled out. A finding, not a failure.
pub const EXIT_EMPTY_LEVEL_SET: i32 = 10;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Simulator(_) => EXIT_SIMULATOR,
        Error::Fit(_) => EXIT_FIT,
        _ => EXIT_OTHER,
    }
}

const CONFIG_FILE: &str = "config.toml";
const LOCK_FILE: &str = ".nroy.lock";
const SUMMARY_FILE: &str = "summary.json";
const SELECTION_FILE: &str = "selection.json";

fn wave_dir(k: usize) -> String {
    format!("wave_{k}")
}

struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::State(format!(
                "{} is locked by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Overrides from the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub max_waves: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub master_seed: u64,
    pub config_hash: String,
    pub candidates: usize,
    pub waves: Vec<WaveSummary>,
    pub termination: Termination,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub selections: Vec<Selection>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.termination == Termination::LevelSetEmpty {
            EXIT_EMPTY_LEVEL_SET
        } else {
            EXIT_OK
        }
    }
}

pub fn candidate_set(config: &RunConfig) -> Result<CandidateSet> {
    CandidateSet::generate(&config.space, config.candidates, derive_seed(config.seed, "candidates", 0))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn records_csv(records: &[SimRecord]) -> String {
    let mut out = String::from("id,rep,seed,energy_kwh_m2,overheat\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.id,
            r.rep,
            r.seed,
            r.energy_kwh_m2,
            u8::from(r.overheated)
        ));
    }
    out
}

/// Loads the state after wave `k` from a run directory.
pub fn load_wave(dir: &Path, k: usize, n_candidates: usize) -> Result<WaveState> {
    let wd = dir.join(wave_dir(k));
    let path = wd.join("state.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::State(format!("missing snapshot {}: {e}", path.display())))?;
    let mut state: WaveState =
        serde_json::from_str(&text).map_err(|e| Error::State(format!("{}: {e}", path.display())))?;
    state.statuses = read_status_csv(&wd.join("candidates.csv"), &state.criteria)?;
    if state.statuses.len() != n_candidates {
        return Err(Error::State(format!(
            "{} lists {} candidates, expected {n_candidates}",
            wd.display(),
            state.statuses.len()
        )));
    }
    Ok(state)
}

fn write_wave(
    dir: &Path,
    config: &RunConfig,
    candidates: &CandidateSet,
    state: &WaveState,
    new_records: &[SimRecord],
) -> Result<Vec<Artifact>> {
    let wd = wave_dir(state.wave);
    let space = &config.space;
    let design = crate::design::design_csv(
        space,
        new_records.iter().map(|r| (r.id, r.rep, state.design[r.id].row.as_slice())),
    );
    let grids = projection_grids(space, candidates, &state.statuses, config.report.grid_resolution)?;
    let hists = nroy_histograms(space, candidates, &state.statuses, config.report.histogram_bins)?;
    Ok(vec![
        ledger::write_artifact(dir, &format!("{wd}/state.json"), &to_json(state))?,
        ledger::write_artifact(dir, &format!("{wd}/candidates.csv"), &status_csv(&state.criteria, &state.statuses)?)?,
        ledger::write_artifact(dir, &format!("{wd}/design.csv"), design.as_bytes())?,
        ledger::write_artifact(dir, &format!("{wd}/simulations.csv"), records_csv(new_records).as_bytes())?,
        ledger::write_artifact(dir, &format!("{wd}/grids.csv"), grids_csv(space, &grids).as_bytes())?,
        ledger::write_artifact(dir, &format!("{wd}/histograms.csv"), histograms_csv(space, &hists).as_bytes())?,
    ])
}

/// `run`: loads the config, applies overrides and runs (or resumes) the
/// waves with the configured simulator.
pub fn cmd_run(config_path: &Path, out: &Path, overrides: RunOverrides) -> Result<RunOutcome> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(m) = overrides.max_waves {
        if m == 0 {
            return Err(Error::Config("--max-waves must be positive".into()));
        }
        config.waves.max_waves = m;
    }
    let simulator = config.build_simulator()?;
    run(&config, out, simulator.as_ref())
}

/// Runs waves until termination or the wave budget, resuming from the last
/// completed wave recorded in `out`.
pub fn run(config: &RunConfig, out: &Path, simulator: &dyn Simulator) -> Result<RunOutcome> {
    config.validate()?;
    if simulator.space() != &config.space {
        return Err(Error::Config("simulator design space differs from the configured one".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let _lock = RunLock::acquire(out)?;

    let hash = config.hash();
    let candidates = candidate_set(config)?;
    let criteria = config.criteria()?;
    let (mut ledger, mut state) = match RunLedger::load(out)? {
        Some(l) => {
            if l.config_hash != hash {
                return Err(Error::Config(format!(
                    "{} holds a run with a different configuration",
                    out.display()
                )));
            }
            l.verify_waves(out)?;
            let state = match l.waves.last() {
                Some(w) => load_wave(out, w.seeds.wave, candidates.len())?,
                None => WaveState::new(criteria.clone(), candidates.len()),
            };
            log::info!("resuming {} after wave {}", out.display(), state.wave);
            (l, state)
        }
        None => (
            RunLedger {
                config_hash: hash.clone(),
                master_seed: config.seed,
                candidate_seed: derive_seed(config.seed, "candidates", 0),
                waves: Vec::new(),
                outputs: Vec::new(),
            },
            WaveState::new(criteria.clone(), candidates.len()),
        ),
    };
    ledger::write_artifact(out, CONFIG_FILE, config.to_toml().as_bytes())?;

    let settings = config.wave_settings();
    let mut stopped = state.termination;
    while stopped.is_none() && state.wave < config.waves.max_waves {
        match run_wave(&state, &config.space, &candidates, simulator, &settings)? {
            WaveOutcome::Advanced { state: next, .. } => {
                let new_records = &next.records[state.records.len()..];
                let artifacts = write_wave(out, config, &candidates, &next, new_records)?;
                ledger.waves.push(LedgerWave {
                    seeds: WaveSeeds::derive(config.seed, next.wave, &next.criteria),
                    artifacts,
                });
                ledger.save(out)?;
                stopped = next.termination;
                state = next;
            }
            WaveOutcome::Stopped(t) => stopped = Some(t),
        }
    }
    let termination = stopped.unwrap_or(Termination::MaxWaves);

    let selections = if state.wave == 0 {
        Vec::new()
    } else {
        Policy::ALL
            .iter()
            .map(|&p| final_selection(&config.space, &candidates, &state.statuses, &criteria, p, &config.report.preference))
            .collect::<Result<Vec<_>>>()?
    };
    let summary = RunSummary {
        master_seed: config.seed,
        config_hash: hash,
        candidates: candidates.len(),
        waves: state.summaries.clone(),
        termination,
        message: termination.message().to_string(),
    };
    ledger.outputs = vec![
        ledger::write_artifact(out, CONFIG_FILE, config.to_toml().as_bytes())?,
        ledger::write_artifact(out, SUMMARY_FILE, &to_json(&summary))?,
        ledger::write_artifact(out, SELECTION_FILE, &to_json(&selections))?,
    ];
    ledger.save(out)?;
    Ok(RunOutcome { summary, selections })
}

fn load_run(dir: &Path) -> Result<(RunConfig, RunLedger)> {
    let path = dir.join(CONFIG_FILE);
    if !path.exists() {
        return Err(Error::State(format!("{} is not a run directory", dir.display())));
    }
    let config = RunConfig::load(&path)?;
    let ledger = RunLedger::load(dir)?.ok_or_else(|| Error::State(format!("{} has no {LEDGER_FILE}", dir.display())))?;
    if ledger.waves.is_empty() {
        return Err(Error::State(format!("{} has no completed wave", dir.display())));
    }
    Ok((config, ledger))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveValidation {
    pub wave: usize,
    pub coverage: CoverageReport,
    pub rps: RpsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Requested size, rounded up to a whole number per binary slice.
    pub n_requested: usize,
    pub n_validation: usize,
    pub waves: Vec<WaveValidation>,
}

/// Fresh design of about `n` points, balanced over binary slices.
pub fn validation_design(space: &DesignSpace, n: usize, seed: u64) -> Result<Vec<InputPoint>> {
    if n == 0 {
        return Err(Error::contract("validation size must be positive"));
    }
    if space.n_binary() == 0 {
        latin_hypercube(space, n, seed)
    } else {
        sliced_latin_hypercube(space, n.div_ceil(space.n_slices()), seed)
    }
}

/// `validate`: simulates a fresh design once per point and scores every
/// wave's emulators on it.
pub fn cmd_validate(state_dir: &Path, n: usize) -> Result<ValidationReport> {
    if n == 0 {
        return Err(Error::contract("validation size must be positive"));
    }
    let (config, _) = load_run(state_dir)?;
    let simulator = config.build_simulator()?;
    validate_with(state_dir, n, simulator.as_ref())
}

pub fn validate_with(state_dir: &Path, n: usize, simulator: &dyn Simulator) -> Result<ValidationReport> {
    let (config, ledger) = load_run(state_dir)?;
    let points = validation_design(&config.space, n, derive_seed(config.seed, "validation-design", n as u64))?;
    let jobs: Vec<SimJob> = points
        .iter()
        .enumerate()
        .map(|(i, p)| SimJob {
            id: i,
            rep: 0,
            seed: derive_seed(config.seed, "validation-simulation", i as u64),
            point: p.clone(),
        })
        .collect();
    let batch = run_jobs(simulator, &jobs)?;
    let energy: Vec<(InputPoint, f64)> = batch.records.iter().map(|r| (points[r.id].clone(), r.energy_kwh_m2)).collect();
    let overheat: Vec<(InputPoint, bool)> = batch.records.iter().map(|r| (points[r.id].clone(), r.overheated)).collect();
    let mut waves = Vec::new();
    for w in &ledger.waves {
        let k = w.seeds.wave;
        let path = state_dir.join(wave_dir(k)).join("state.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::State(format!("missing snapshot {}: {e}", path.display())))?;
        let state: WaveState = serde_json::from_str(&text).map_err(|e| Error::State(e.to_string()))?;
        let ems = state.fitted_emulators()?;
        let hetgp = ems.iter().find_map(|e| e.as_hetgp()).ok_or_else(|| Error::State("no energy emulator".into()))?;
        let classifier =
            ems.iter().find_map(|e| e.as_classifier()).ok_or_else(|| Error::State("no overheating emulator".into()))?;
        let mut coverage = diagnostics::interval_coverage(hetgp, &energy, config.validation.k_sd)?;
        coverage.nominal = config.validation.nominal;
        let rps = diagnostics::rps_check(
            classifier,
            &overheat,
            config.validation.reference_samples,
            derive_seed(config.seed, "rps-reference", k as u64),
        )?;
        waves.push(WaveValidation { wave: k, coverage, rps });
    }
    let report = ValidationReport {
        n_requested: n,
        n_validation: batch.records.len(),
        waves,
    };
    ledger::write_artifact(state_dir, "validation/validation.json", &to_json(&report))?;
    ledger::write_artifact(state_dir, "validation/simulations.csv", records_csv(&batch.records).as_bytes())?;
    let rows: Vec<Vec<f64>> = points.iter().map(InputPoint::to_row).collect();
    let design = crate::design::design_csv(&config.space, rows.iter().enumerate().map(|(i, r)| (i, 0, r.as_slice())));
    ledger::write_artifact(state_dir, "validation/design.csv", design.as_bytes())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub wave: usize,
    pub grids: usize,
    pub histograms: usize,
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct ManifestFile {
    path: &'static str,
    kind: &'static str,
    columns: Vec<&'static str>,
    facet: Vec<&'static str>,
    x: &'static str,
    y: Vec<&'static str>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    wave: usize,
    candidates: usize,
    grid_resolution: usize,
    histogram_bins: usize,
    missing_value: &'static str,
    implausibility_cap: f64,
    depth_floor: f64,
    variables: &'a DesignSpace,
    files: Vec<ManifestFile>,
}

/// `report`: projection grids and NROY histograms for the latest wave.
pub fn cmd_report(state_dir: &Path) -> Result<ReportOutcome> {
    let (config, ledger) = load_run(state_dir)?;
    let wave = ledger.waves.last().expect("checked nonempty").seeds.wave;
    let candidates = candidate_set(&config)?;
    let state = load_wave(state_dir, wave, candidates.len())?;
    let space = &config.space;
    let grids = projection_grids(space, &candidates, &state.statuses, config.report.grid_resolution)?;
    let hists = nroy_histograms(space, &candidates, &state.statuses, config.report.histogram_bins)?;
    let manifest = Manifest {
        wave,
        candidates: candidates.len(),
        grid_resolution: config.report.grid_resolution,
        histogram_bins: config.report.histogram_bins,
        missing_value: "NA",
        implausibility_cap: diagnostics::IMPLAUSIBILITY_CAP,
        depth_floor: diagnostics::DEPTH_FLOOR,
        variables: space,
        files: vec![
            ManifestFile {
                path: "grids.csv",
                kind: "projection_grid",
                columns: vec!["var_i", "var_j", "cell_i", "cell_j", "min_impl", "depth_log10", "count"],
                facet: vec!["var_i", "var_j"],
                x: "cell_i",
                y: vec!["min_impl", "depth_log10"],
            },
            ManifestFile {
                path: "histograms.csv",
                kind: "nroy_histogram",
                columns: vec!["variable", "bin", "lower", "upper", "count", "nroy", "relative", "scale"],
                facet: vec!["variable"],
                x: "bin",
                y: vec!["relative"],
            },
        ],
    };
    let files = vec![
        ledger::write_artifact(state_dir, "report/grids.csv", grids_csv(space, &grids).as_bytes())?.path,
        ledger::write_artifact(state_dir, "report/histograms.csv", histograms_csv(space, &hists).as_bytes())?.path,
        ledger::write_artifact(state_dir, "report/manifest.json", &to_json(&manifest))?.path,
    ];
    Ok(ReportOutcome {
        wave,
        grids: grids.len(),
        histograms: hists.len(),
        files,
    })
}
