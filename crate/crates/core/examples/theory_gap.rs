// Rate cost of coding correlated frames independently: the accumulated KL
// gap between a frame-wise and a joint Gaussian prior, per temporal
// correlation.

use fgvc::analysis::{accumulate_gap, GaussianSourceSpec};
use fgvc::schedule::build_schedule;

pub fn run_example() -> Result<Vec<(f64, f64)>, Box<dyn std::error::Error>> {
    let sched = build_schedule(512, 1e-4, 0.02)?;
    let mut out = Vec::new();
    for rho in [0.0, 0.5, 0.9] {
        let spec = GaussianSourceSpec::ar1(4, 4, 4, rho, 0.5)?;
        out.push((rho, accumulate_gap(&spec, &sched, 1)?));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (rho, gap) in run_example()? {
        println!("rho {rho:.1}: {gap:.3} bits");
    }
    Ok(())
}
