//! One wave: choose design points, simulate them, refit the emulators and
//! reclassify the active candidates.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exhausted, select_wave_batch, CandidateStatus, Criterion, ResponseKind, State, StatusCounts, Termination};
use crate::design::{latin_hypercube, row_key, sliced_latin_hypercube, CandidateSet, DesignSpace, InputPoint};
use crate::emulator::{
    fit_classifier, fit_hetgp, ClassifierEmulator, ClassifierSnapshot, FitSettings, HetGpEmulator, HetGpSnapshot,
    Prediction,
};
use crate::error::{Error, Result};
use crate::prior::HyperPriors;
use crate::seed::derive_seed;
use crate::simulator::{run_jobs, SimJob, SimRecord, Simulator};

/// Which earlier simulations are kept when refitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// Points that are active or ruled in.
    #[default]
    ActiveOrRuledIn,
    /// Only points that are still active.
    NroyOnly,
}

impl Retention {
    fn keeps(&self, s: State) -> bool {
        match self {
            Retention::ActiveOrRuledIn => s != State::RuledOut,
            Retention::NroyOnly => s == State::Active,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSettings {
    pub points_per_wave: usize,
    pub replicates: usize,
    pub retention: Retention,
    /// Stop before a wave once the active fraction is below this.
    pub min_active_fraction: f64,
    pub priors: HyperPriors,
    pub fit: FitSettings,
    pub seed: u64,
}

impl Default for WaveSettings {
    fn default() -> Self {
        WaveSettings {
            points_per_wave: 250,
            replicates: 2,
            retention: Retention::default(),
            min_active_fraction: 0.0,
            priors: HyperPriors::default(),
            fit: FitSettings::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum FittedEmulator {
    Classifier(ClassifierEmulator),
    HetGp(HetGpEmulator),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmulatorSnapshot {
    Classifier(ClassifierSnapshot),
    HetGp(HetGpSnapshot),
}

/// Rows per parallel work item. Fixed so results do not depend on the
/// thread count.
const CHUNK_ROWS: usize = 4096;

impl FittedEmulator {
    /// Latent predictions (logit, or mean response in native units).
    pub fn predict_rows(&self, rows: &[f64]) -> Vec<Prediction> {
        let dim = self.dim();
        rows.par_chunks(CHUNK_ROWS * dim)
            .flat_map_iter(|chunk| match self {
                FittedEmulator::Classifier(c) => c.predict_rows(chunk),
                FittedEmulator::HetGp(h) => h.predict_mean_rows(chunk),
            })
            .collect()
    }

    pub fn predict(&self, x: &InputPoint) -> Prediction {
        self.predict_rows(&x.to_row())[0]
    }

    pub fn dim(&self) -> usize {
        match self {
            FittedEmulator::Classifier(c) => c.data().dim,
            FittedEmulator::HetGp(h) => h.data().dim,
        }
    }

    pub fn training_hash(&self) -> String {
        match self {
            FittedEmulator::Classifier(c) => c.training_hash(),
            FittedEmulator::HetGp(h) => h.training_hash(),
        }
    }

    pub fn snapshot(&self) -> EmulatorSnapshot {
        match self {
            FittedEmulator::Classifier(c) => EmulatorSnapshot::Classifier(c.snapshot()),
            FittedEmulator::HetGp(h) => EmulatorSnapshot::HetGp(h.snapshot()),
        }
    }

    pub fn from_snapshot(s: EmulatorSnapshot) -> Result<Self> {
        Ok(match s {
            EmulatorSnapshot::Classifier(c) => FittedEmulator::Classifier(ClassifierEmulator::from_snapshot(c)?),
            EmulatorSnapshot::HetGp(h) => FittedEmulator::HetGp(HetGpEmulator::from_snapshot(h)?),
        })
    }

    pub fn as_classifier(&self) -> Option<&ClassifierEmulator> {
        match self {
            FittedEmulator::Classifier(c) => Some(c),
            FittedEmulator::HetGp(_) => None,
        }
    }

    pub fn as_hetgp(&self) -> Option<&HetGpEmulator> {
        match self {
            FittedEmulator::HetGp(h) => Some(h),
            FittedEmulator::Classifier(_) => None,
        }
    }
}

/// A simulated input. Points drawn from the candidate set remember their
/// candidate id; initial-design points have none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub row: Vec<f64>,
    pub candidate: Option<usize>,
    pub wave_added: usize,
    pub status: CandidateStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSummary {
    pub wave: usize,
    pub simulations: usize,
    pub dropped_jobs: usize,
    pub new_points: usize,
    pub training_points: usize,
    pub training_runs: usize,
    pub counts: StatusCounts,
    pub nroy_fraction: f64,
    pub active_fraction: f64,
    pub tenable_fraction: f64,
    pub ruled_in_fraction: f64,
}

/// Everything needed to continue a run after a completed wave. Candidate
/// statuses are kept out of the serialized form; they are persisted as the
/// per-wave status table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub wave: usize,
    pub criteria: Vec<Criterion>,
    #[serde(skip)]
    pub statuses: Vec<CandidateStatus>,
    pub design: Vec<DesignPoint>,
    pub records: Vec<SimRecord>,
    pub emulators: Vec<EmulatorSnapshot>,
    pub summaries: Vec<WaveSummary>,
    pub termination: Option<Termination>,
}

impl WaveState {
    pub fn new(criteria: Vec<Criterion>, n_candidates: usize) -> Self {
        let n = criteria.len();
        WaveState {
            wave: 0,
            criteria,
            statuses: vec![CandidateStatus::unevaluated(n); n_candidates],
            design: Vec::new(),
            records: Vec::new(),
            emulators: Vec::new(),
            summaries: Vec::new(),
            termination: None,
        }
    }

    pub fn counts(&self) -> StatusCounts {
        StatusCounts::of(&self.statuses)
    }

    pub fn fitted_emulators(&self) -> Result<Vec<FittedEmulator>> {
        self.emulators.iter().cloned().map(FittedEmulator::from_snapshot).collect()
    }
}

#[derive(Debug)]
pub enum WaveOutcome {
    Advanced { state: WaveState, emulators: Vec<FittedEmulator> },
    /// Nothing was run.
    Stopped(Termination),
}

/// Seeds used by one wave, all derived from the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSeeds {
    pub wave: usize,
    /// Initial design in wave 1, batch selection afterwards.
    pub design: u64,
    pub simulation: u64,
    /// One per criterion, in criterion order.
    pub fits: Vec<u64>,
}

impl WaveSeeds {
    pub fn derive(master: u64, wave: usize, criteria: &[Criterion]) -> Self {
        WaveSeeds {
            wave,
            design: if wave == 1 {
                derive_seed(master, "initial-design", 0)
            } else {
                derive_seed(master, "wave-batch", wave as u64)
            },
            simulation: derive_seed(master, "simulation", wave as u64),
            fits: criteria
                .iter()
                .map(|c| derive_seed(master, &format!("fit-{}", c.name), wave as u64))
                .collect(),
        }
    }
}

fn initial_design(space: &DesignSpace, n: usize, seed: u64) -> Result<Vec<InputPoint>> {
    if space.n_binary() == 0 {
        latin_hypercube(space, n, seed)
    } else {
        let per_slice = n.div_ceil(space.n_slices()).max(1);
        sliced_latin_hypercube(space, per_slice, seed)
    }
}

fn fit_emulator(
    kind: ResponseKind,
    records: &[&SimRecord],
    design: &[DesignPoint],
    nc: usize,
    priors: &HyperPriors,
    fit: &FitSettings,
) -> Result<FittedEmulator> {
    let point = |r: &SimRecord| InputPoint::from_row(&design[r.id].row, nc);
    Ok(match kind {
        ResponseKind::Overheating => {
            let obs: Vec<(InputPoint, bool)> = records.iter().map(|r| (point(r), r.overheated)).collect();
            FittedEmulator::Classifier(fit_classifier(&obs, priors, fit)?)
        }
        ResponseKind::Energy => {
            let obs: Vec<(InputPoint, f64)> = records.iter().map(|r| (point(r), r.energy_kwh_m2)).collect();
            FittedEmulator::HetGp(fit_hetgp(&obs, priors, fit)?)
        }
    })
}

/// Per-criterion implausibilities at each row.
pub(crate) fn evaluate_rows(criteria: &[Criterion], emulators: &[FittedEmulator], rows: &[f64]) -> Result<Vec<Vec<f64>>> {
    let preds: Vec<Vec<Prediction>> = emulators.iter().map(|e| e.predict_rows(rows)).collect();
    let n = preds.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| criteria.iter().zip(&preds).map(|(c, p)| c.implausibility(&p[i])).collect())
        .collect()
}

fn gather(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    rows.flatten().collect()
}

/// Runs wave `state.wave + 1`. The input state is not modified; on any
/// error the caller still holds the last completed wave.
pub fn run_wave<S: Simulator + ?Sized>(
    state: &WaveState,
    space: &DesignSpace,
    candidates: &CandidateSet,
    simulator: &S,
    settings: &WaveSettings,
) -> Result<WaveOutcome> {
    if settings.points_per_wave == 0 || settings.replicates == 0 {
        return Err(Error::Config("points per wave and replicates must be positive".into()));
    }
    if state.statuses.len() != candidates.len() {
        return Err(Error::State("status table does not match the candidate set".into()));
    }
    if let Some(t) = state.termination {
        return Ok(WaveOutcome::Stopped(t));
    }
    let wave = state.wave + 1;
    let nc = space.n_continuous();
    let seeds = WaveSeeds::derive(settings.seed, wave, &state.criteria);

    let points: Vec<(Vec<f64>, Option<usize>)> = if wave == 1 {
        initial_design(space, settings.points_per_wave, seeds.design)?
            .into_iter()
            .map(|p| (p.to_row(), None))
            .collect()
    } else {
        let counts = state.counts();
        if counts.active > 0 && counts.active_fraction() < settings.min_active_fraction {
            return Ok(WaveOutcome::Stopped(Termination::ActiveBelowMinimum));
        }
        match select_wave_batch(&state.statuses, settings.points_per_wave, seeds.design) {
            Ok(ids) => ids.into_iter().map(|i| (candidates.row(i).to_vec(), Some(i))).collect(),
            Err(t) => return Ok(WaveOutcome::Stopped(t)),
        }
    };

    let mut next = state.clone();
    let mut index: HashMap<Vec<u64>, usize> = next.design.iter().enumerate().map(|(i, d)| (row_key(&d.row), i)).collect();
    let mut reps: Vec<usize> = vec![0; next.design.len()];
    for r in &next.records {
        reps[r.id] = reps[r.id].max(r.rep + 1);
    }
    let n_crit = next.criteria.len();
    let mut new_points = 0;
    let mut jobs = Vec::with_capacity(points.len() * settings.replicates);
    let job_seed = seeds.simulation;
    for (row, candidate) in points {
        let id = *index.entry(row_key(&row)).or_insert_with(|| {
            next.design.push(DesignPoint {
                row: row.clone(),
                candidate,
                wave_added: wave,
                status: CandidateStatus::unevaluated(n_crit),
            });
            reps.push(0);
            new_points += 1;
            next.design.len() - 1
        });
        let point = InputPoint::from_row(&row, nc);
        for _ in 0..settings.replicates {
            jobs.push(SimJob {
                id,
                rep: reps[id],
                seed: derive_seed(job_seed, "job", jobs.len() as u64),
                point: point.clone(),
            });
            reps[id] += 1;
        }
    }
    log::info!("wave {wave}: {} new points, {} simulations", new_points, jobs.len());
    let report = run_jobs(simulator, &jobs)?;
    next.records.extend(report.records);

    let training: Vec<&SimRecord> = next
        .records
        .iter()
        .filter(|r| settings.retention.keeps(next.design[r.id].status.state))
        .collect();
    let training_points = {
        let mut ids: Vec<usize> = training.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    log::info!("wave {wave}: fitting on {} runs at {} points", training.len(), training_points);

    let emulators = next
        .criteria
        .iter()
        .zip(&seeds.fits)
        .map(|(c, &seed)| {
            let fit = settings.fit.clone().with_seed(seed);
            fit_emulator(c.kind, &training, &next.design, nc, &settings.priors, &fit)
        })
        .collect::<Result<Vec<_>>>()?;

    let criteria = next.criteria.clone();
    super::update_candidates(&mut next.statuses, wave, |active| {
        let rows = gather(active.iter().map(|&i| candidates.row(i).to_vec()));
        evaluate_rows(&criteria, &emulators, &rows)
    })?;
    let active_design: Vec<usize> = (0..next.design.len()).filter(|&i| next.design[i].status.state == State::Active).collect();
    let rows = gather(active_design.iter().map(|&i| next.design[i].row.clone()));
    for (i, v) in active_design.into_iter().zip(evaluate_rows(&criteria, &emulators, &rows)?) {
        next.design[i].status.update(v, wave)?;
    }

    let counts = next.counts();
    next.wave = wave;
    next.emulators = emulators.iter().map(FittedEmulator::snapshot).collect();
    next.termination = exhausted(&counts);
    next.summaries.push(WaveSummary {
        wave,
        simulations: jobs.len(),
        dropped_jobs: report.dropped.len(),
        new_points,
        training_points,
        training_runs: training.len(),
        counts,
        nroy_fraction: counts.nroy_fraction(),
        active_fraction: counts.active_fraction(),
        tenable_fraction: counts.tenable_fraction(),
        ruled_in_fraction: counts.ruled_in_fraction(),
    });
    log::info!(
        "wave {wave}: NROY {:.4}, tenable {:.4}, ruled in {:.6}",
        counts.nroy_fraction(),
        counts.tenable_fraction(),
        counts.ruled_in_fraction()
    );
    Ok(WaveOutcome::Advanced { state: next, emulators })
}
