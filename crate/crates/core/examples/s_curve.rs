//! Runs the default S-curve maneuver and prints its metrics.

use parkmpc::sim::{compute_metrics, make_s_curve_scenario, run_closed_loop};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>());
    let offset = args.next().transpose()?.unwrap_or(3.0);
    let length = args.next().transpose()?.unwrap_or(15.0);
    let speed = args.next().transpose()?.unwrap_or(2.0);

    let scenario = make_s_curve_scenario(offset, length, speed)?;
    let result = run_closed_loop(&scenario)?;
    let metrics = compute_metrics(&result, &scenario.trajectory)?;
    println!("termination: {:?} after {} ticks", result.termination, result.samples.len());
    println!("{metrics:#?}");
    Ok(())
}
