//! Runs one figure experiment with the default profile and prints the
//! summary table and trend verdicts.
//!
//!     cargo run --release --example figure_sweep -- fig5 20

use v2x_offload::harness::{self, ExperimentId, SimConfig, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let experiment: ExperimentId = args.next().as_deref().unwrap_or("fig3").parse()?;
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);

    let config = SimConfig::defaults();
    let spec = SweepSpec::figure(experiment, (1..=seeds).collect());
    let started = std::time::Instant::now();
    let rows = harness::run(&spec, &config)?;
    let report = harness::report(&rows);
    print!("{}", report.render());
    println!("{} rows in {:.2?}", rows.len(), started.elapsed());
    Ok(())
}
