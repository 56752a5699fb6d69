// Building a mixed design space, drawing space-filling designs and mapping
// between unit and native coordinates.

use nroy::design::{latin_hypercube, replicate_design, sliced_latin_hypercube};
use nroy::{CandidateSet, DesignSpace, InputPoint, VariableSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let space = DesignSpace::building_retrofit();
    for v in space.variables() {
        println!("{v:?}");
    }

    let lhs = latin_hypercube(&space, 8, 11)?;
    let sliced = sliced_latin_hypercube(&space, 4, 11)?;
    println!("plain LHS: {} points, sliced LHS: {} points over {} slices", lhs.len(), sliced.len(), space.n_slices());

    let first = space.to_native(&sliced[0]);
    println!("first sliced point in native units: {first:.3?}");
    let back = space.to_unit(&first)?;
    assert_eq!(back.binary, sliced[0].binary);

    let jobs = replicate_design(&sliced, 2)?;
    println!("{} jobs after replication", jobs.len());

    let toy = DesignSpace::new(vec![
        VariableSpec::continuous("width", 1.0, 3.0),
        VariableSpec::binary("shaded").with_label("external shading"),
    ])?;
    let p = toy.to_unit(&[2.0, 1.0])?;
    assert_eq!(p, InputPoint::new(vec![0.5], vec![true]));

    let candidates = CandidateSet::generate(&space, 1000, 12)?;
    println!("{} candidates of dimension {}", candidates.len(), candidates.dim());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
