// Driving an outside simulator through the file protocol. A helper thread
// stands in for the external program: it answers `requests.csv` with a
// `results.csv`.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use nroy::design::latin_hypercube;
use nroy::simulator::{run_jobs, ExternalSimulator, SimJob};
use nroy::DesignSpace;

fn answer(dir: &Path) -> std::io::Result<()> {
    let text = std::fs::read_to_string(dir.join("requests.csv"))?;
    let mut out = String::from("id,rep,energy_kwh_m2,overheat\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let wall: f64 = f[3].parse().unwrap_or(0.0);
        out.push_str(&format!("{},{},{:.3},{}\n", f[0], f[1], 10.0 + 20.0 * wall, u8::from(wall > 0.8)));
    }
    std::fs::write(dir.join("results.tmp"), out)?;
    std::fs::rename(dir.join("results.tmp"), dir.join("results.csv"))
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let space = DesignSpace::building_retrofit();
    let dir = tempfile::tempdir()?;
    let stop = Arc::new(AtomicBool::new(false));
    let worker = {
        let (dir, stop) = (dir.path().to_path_buf(), stop.clone());
        std::thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                if dir.join("requests.csv").exists() && !dir.join("results.csv").exists() {
                    answer(&dir).expect("answer requests");
                }
                std::thread::sleep(Duration::from_millis(5));
            }
        })
    };

    let sim = ExternalSimulator::new(space.clone(), dir.path()).with_timeout(Duration::from_secs(30));
    let jobs: Vec<SimJob> = latin_hypercube(&space, 5, 61)?
        .into_iter()
        .enumerate()
        .map(|(id, point)| SimJob { id, rep: 0, seed: 100 + id as u64, point })
        .collect();
    let report = run_jobs(&sim, &jobs);
    stop.store(true, Ordering::SeqCst);
    worker.join().expect("worker thread");

    for r in report?.records {
        println!("job {}: {:.2} kWh/m2, overheated {}", r.id, r.energy_kwh_m2, r.overheated);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
