//! File-exchange adapter for simulators that run outside this process.
//!
//! Each batch writes `requests.csv` (`id,rep,seed,<variables>` in native
//! units) into the exchange directory and waits for `results.csv`
//! (`id,rep,energy_kwh_m2,overheat`). The external side should create the
//! results file atomically, for example by writing to a temporary name and
//! renaming it.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::{SimJob, SimOutcome, Simulator};
use crate::design::DesignSpace;
use crate::error::{JobError, SimulatorError};

pub const REQUESTS_FILE: &str = "requests.csv";
pub const RESULTS_FILE: &str = "results.csv";
const LOCK_FILE: &str = ".nroy-exchange.lock";
/// Overrides the configured exchange directory when set.
pub const EXCHANGE_DIR_ENV: &str = "NROY_EXCHANGE_DIR";

const RESULTS_HEADER: [&str; 4] = ["id", "rep", "energy_kwh_m2", "overheat"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimulatorError + '_ {
    move |source| SimulatorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_requests(path: &Path, space: &DesignSpace, jobs: &[SimJob]) -> Result<(), SimulatorError> {
    let tmp = path.with_extension("csv.tmp");
    let mut w = csv::Writer::from_path(&tmp).map_err(|e| SimulatorError::Other(e.to_string()))?;
    let mut header = vec!["id".to_string(), "rep".to_string(), "seed".to_string()];
    header.extend(space.variables().iter().map(|v| v.name.clone()));
    w.write_record(&header).map_err(|e| SimulatorError::Other(e.to_string()))?;
    for job in jobs {
        let mut row = vec![job.id.to_string(), job.rep.to_string(), job.seed.to_string()];
        row.extend(space.to_native(&job.point).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| SimulatorError::Other(e.to_string()))?;
    }
    w.flush().map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Parses a results file against the jobs that were requested. Structural
/// problems (bad header, unknown or duplicate jobs, unparseable ids) fail
/// the whole batch; bad values and missing rows fail only their job.
pub fn read_results(path: &Path, jobs: &[SimJob]) -> Result<Vec<Result<SimOutcome, JobError>>, SimulatorError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| SimulatorError::Malformed(vec![e.to_string()]))?;
    let header = rdr
        .headers()
        .map_err(|e| SimulatorError::Malformed(vec![e.to_string()]))?
        .clone();
    if header.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(SimulatorError::Malformed(vec![format!(
            "header must be `{}`, found `{}`",
            RESULTS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )]));
    }
    let index: HashMap<(usize, usize), usize> = jobs.iter().enumerate().map(|(i, j)| ((j.id, j.rep), i)).collect();
    let mut out: Vec<Option<Result<SimOutcome, JobError>>> = vec![None; jobs.len()];
    let mut problems = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let line = line + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let (Some(id), Some(rep)) = (
            rec.get(0).and_then(|s| s.trim().parse::<usize>().ok()),
            rec.get(1).and_then(|s| s.trim().parse::<usize>().ok()),
        ) else {
            problems.push(format!("line {line}: unreadable id or rep"));
            continue;
        };
        let Some(&slot) = index.get(&(id, rep)) else {
            problems.push(format!("line {line}: job (id={id}, rep={rep}) was not requested"));
            continue;
        };
        if out[slot].is_some() {
            problems.push(format!("line {line}: duplicate job (id={id}, rep={rep})"));
            continue;
        }
        let energy = rec.get(2).and_then(|s| s.trim().parse::<f64>().ok());
        let flag = rec.get(3).map(str::trim);
        out[slot] = Some(match (energy, flag) {
            (Some(e), Some(f)) if e.is_finite() && e >= 0.0 && (f == "0" || f == "1") => Ok(SimOutcome {
                energy_kwh_m2: e,
                overheated: f == "1",
            }),
            _ => Err(JobError::BadRow {
                id,
                rep,
                reason: format!("line {line}: expected nonnegative energy and 0/1 overheat flag"),
            }),
        });
    }
    if !problems.is_empty() {
        return Err(SimulatorError::Malformed(problems));
    }
    Ok(out
        .into_iter()
        .zip(jobs)
        .map(|(o, j)| o.unwrap_or(Err(JobError::MissingResult { id: j.id, rep: j.rep })))
        .collect())
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self, SimulatorError> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(SimulatorError::Busy(dir.to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Clone, Debug)]
pub struct ExternalSimulator {
    space: DesignSpace,
    dir: PathBuf,
    timeout: Duration,
    poll: Duration,
}

impl ExternalSimulator {
    pub fn new(space: DesignSpace, dir: impl Into<PathBuf>) -> Self {
        ExternalSimulator {
            space,
            dir: dir.into(),
            timeout: Duration::from_secs(3600),
            poll: Duration::from_millis(200),
        }
    }

    /// Uses the directory named by [`EXCHANGE_DIR_ENV`] if set, else `dir`.
    pub fn from_env_or(space: DesignSpace, dir: impl Into<PathBuf>) -> Self {
        match std::env::var_os(EXCHANGE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::new(space, PathBuf::from(d)),
            _ => Self::new(space, dir),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_poll_interval(mut self, poll: Duration) -> Self {
        self.poll = poll;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Simulator for ExternalSimulator {
    fn name(&self) -> &str {
        "external"
    }

    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn run_batch(&self, jobs: &[SimJob]) -> Result<Vec<Result<SimOutcome, JobError>>, SimulatorError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let _lock = LockGuard::acquire(&self.dir)?;
        let requests = self.dir.join(REQUESTS_FILE);
        let results = self.dir.join(RESULTS_FILE);
        if results.exists() {
            fs::remove_file(&results).map_err(io_err(&results))?;
        }
        write_requests(&requests, &self.space, jobs)?;
        log::info!("wrote {} jobs to {}", jobs.len(), requests.display());

        let start = Instant::now();
        while !results.exists() {
            if start.elapsed() >= self.timeout {
                return Err(SimulatorError::Timeout {
                    path: results,
                    secs: self.timeout.as_secs(),
                });
            }
            std::thread::sleep(self.poll);
        }
        let parsed = read_results(&results, jobs)?;
        fs::remove_file(&requests).map_err(io_err(&requests))?;
        fs::remove_file(&results).map_err(io_err(&results))?;
        Ok(parsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::InputPoint;

    fn jobs() -> Vec<SimJob> {
        (0..3)
            .map(|id| SimJob {
                id,
                rep: 1,
                seed: 10 + id as u64,
                point: InputPoint::new(vec![0.5; 7], vec![id == 1]),
            })
            .collect()
    }

    #[test]
    fn requests_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REQUESTS_FILE);
        write_requests(&path, &DesignSpace::building_retrofit(), &jobs()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "id,rep,seed,x1,x2,x3,x4,x5,x6,x7,x8");
        assert_eq!(lines.next().unwrap(), "0,1,10,0.25,0.25,0.05,0.6000000000000001,0.5,0.5,0.7,0");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn missing_row_names_the_job() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RESULTS_FILE);
        fs::write(&path, "id,rep,energy_kwh_m2,overheat\n0,1,12.5,0\n2,1,8,1\n").unwrap();
        let out = read_results(&path, &jobs()).unwrap();
        assert!(out[0].is_ok() && out[2].as_ref().unwrap().overheated);
        assert_eq!(out[1], Err(JobError::MissingResult { id: 1, rep: 1 }));
        assert!(out[1].as_ref().unwrap_err().to_string().contains("id=1, rep=1"));
    }

    #[test]
    fn malformed_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RESULTS_FILE);
        fs::write(&path, "id,rep,energy,overheat\n0,1,1,0\n").unwrap();
        assert!(matches!(read_results(&path, &jobs()), Err(SimulatorError::Malformed(_))));

        fs::write(&path, "id,rep,energy_kwh_m2,overheat\n0,1,1,0\n0,1,1,0\n7,1,1,0\n").unwrap();
        let Err(SimulatorError::Malformed(p)) = read_results(&path, &jobs()) else {
            panic!("expected malformed");
        };
        assert_eq!(p.len(), 2);

        fs::write(&path, "id,rep,energy_kwh_m2,overheat\n0,1,-3,0\n1,1,2,yes\n2,1,2,1\n").unwrap();
        let out = read_results(&path, &jobs()).unwrap();
        assert!(matches!(out[0], Err(JobError::BadRow { id: 0, .. })));
        assert!(matches!(out[1], Err(JobError::BadRow { id: 1, .. })));
        assert!(out[2].is_ok());
    }

    #[test]
    fn times_out_without_results() {
        let dir = tempfile::tempdir().unwrap();
        let sim = ExternalSimulator::new(DesignSpace::building_retrofit(), dir.path())
            .with_timeout(Duration::from_millis(50))
            .with_poll_interval(Duration::from_millis(10));
        assert!(matches!(sim.run_batch(&jobs()), Err(SimulatorError::Timeout { .. })));
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn second_batch_on_locked_directory_is_busy() {
        let dir = tempfile::tempdir().unwrap();
        let _held = LockGuard::acquire(dir.path()).unwrap();
        let sim = ExternalSimulator::new(DesignSpace::building_retrofit(), dir.path());
        assert!(matches!(sim.run_batch(&jobs()), Err(SimulatorError::Busy(_))));
    }
}
