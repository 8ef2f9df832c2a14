//! Plans one NV-HV pair: every split's optimum and the best one, checked
//! against the constraint validator.

use v2x_offload::model::{ChannelParams, Position, Role, SequentialTask, Subtask, Vehicle};
use v2x_offload::tier1;

fn vehicle(id: u32, x: f64, cpu: f64, role: Role) -> Vehicle {
    Vehicle {
        id,
        position: Position::new(x, 1.875),
        velocity: 20.0,
        max_cpu: cpu,
        kappa: 1.5e-23,
        weight: 1.0,
        role,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let nv = vehicle(1, 0.0, 3e9, Role::Nv);
    let hv = vehicle(2, 40.0, 8e9, Role::Hv);
    let task = SequentialTask {
        owner: 1,
        input_size: 2e6,
        subtasks: [2e8, 3e8, 1.5e8, 2.5e8]
            .iter()
            .map(|&w| Subtask { workload: w, output_size: 1e6 })
            .collect(),
        deadline: 0.2,
    };
    let params = ChannelParams::default();

    for (i, plan) in tier1::solve_all_splits(&nv, &hv, &task, &params)?.into_iter().enumerate() {
        match plan {
            Ok(p) => println!("split {}: {:.6e} J, V2V airtime {:.3e} s", i + 1, p.energy.weighted_total, p.tau_v2v),
            Err(e) => println!("split {}: {e}", i + 1),
        }
    }

    let best = tier1::solve(&nv, &hv, &task, &params)?;
    println!("\nbest split {} with {:.6e} J", best.split, best.energy.weighted_total);
    for (m, (f, capped)) in best.freqs.iter().zip(&best.cpu_capped).enumerate() {
        println!("  subtask {}: {:.3} GHz{}", m + 1, f / 1e9, if *capped { " (at max)" } else { "" });
    }
    let report = tier1::validate(&best, &nv, &hv, &task);
    if report.all_passed() {
        println!("all constraints hold");
    } else {
        print!("{report}");
    }
    Ok(())
}
