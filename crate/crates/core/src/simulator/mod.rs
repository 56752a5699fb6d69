//! Stochastic simulators: the bundled synthetic building model and a
//! file-exchange adapter for external simulators.

mod bundled;
mod cibse;
mod external;
mod weather;

use serde::{Deserialize, Serialize};

use crate::design::{DesignSpace, InputPoint};
use crate::error::{JobError, SimulatorError};

pub use bundled::{BuildingParams, BundledConfig, BundledSimulator, DetailedRun};
pub use cibse::{
    assess_delta_t, assess_overheating, assess_overheating_with, max_comfort, running_mean, CibseOptions,
    IndoorSeries, Occupancy, OverheatAssessment,
};
pub use external::{read_results, write_requests, ExternalSimulator, EXCHANGE_DIR_ENV, REQUESTS_FILE, RESULTS_FILE};
pub use weather::{sample_weather, WeatherParams, WeatherYear, DAYS, HOURS};

/// One simulator run to perform.
#[derive(Clone, Debug, PartialEq)]
pub struct SimJob {
    pub id: usize,
    pub rep: usize,
    pub seed: u64,
    pub point: InputPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub energy_kwh_m2: f64,
    pub overheated: bool,
}

/// One completed replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub id: usize,
    pub rep: usize,
    pub seed: u64,
    pub energy_kwh_m2: f64,
    pub overheated: bool,
}

pub trait Simulator: Sync {
    fn name(&self) -> &str;

    fn space(&self) -> &DesignSpace;

    /// Runs a batch. The outer error aborts the batch; inner errors are
    /// per-job and may be retried.
    fn run_batch(&self, jobs: &[SimJob]) -> Result<Vec<Result<SimOutcome, JobError>>, SimulatorError>;
}

/// Outcome of [`run_jobs`]: completed records in job order, plus the jobs
/// that failed twice and were dropped.
#[derive(Clone, Debug, Default)]
pub struct BatchReport {
    pub records: Vec<SimRecord>,
    pub dropped: Vec<JobError>,
}

/// Runs every job, retrying failed jobs once. Jobs failing twice are dropped
/// with a warning.
pub fn run_jobs<S: Simulator + ?Sized>(sim: &S, jobs: &[SimJob]) -> Result<BatchReport, SimulatorError> {
    let first = sim.run_batch(jobs)?;
    if first.len() != jobs.len() {
        return Err(SimulatorError::Other(format!(
            "simulator returned {} outcomes for {} jobs",
            first.len(),
            jobs.len()
        )));
    }
    let mut outcomes: Vec<Option<SimOutcome>> = vec![None; jobs.len()];
    let mut retry = Vec::new();
    for (i, r) in first.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes[i] = Some(o),
            Err(e) => {
                log::warn!("{e}; retrying once");
                retry.push(i);
            }
        }
    }
    let mut dropped = Vec::new();
    if !retry.is_empty() {
        let again: Vec<SimJob> = retry.iter().map(|&i| jobs[i].clone()).collect();
        let second = sim.run_batch(&again)?;
        for (&i, r) in retry.iter().zip(second) {
            match r {
                Ok(o) => outcomes[i] = Some(o),
                Err(e) => {
                    log::warn!("{e}; excluding job");
                    dropped.push(e);
                }
            }
        }
    }
    let records = jobs
        .iter()
        .zip(outcomes)
        .filter_map(|(job, o)| {
            o.map(|o| SimRecord {
                id: job.id,
                rep: job.rep,
                seed: job.seed,
                energy_kwh_m2: o.energy_kwh_m2,
                overheated: o.overheated,
            })
        })
        .collect();
    Ok(BatchReport { records, dropped })
}
