//! The proposed vehicle-tier plan against the fixed-frequency and
//! frequency-optimized baselines, over a range of deadlines.

use v2x_offload::baselines::{run_tier1_baseline, PolicyId};
use v2x_offload::model::{ChannelParams, Position, Role, SequentialTask, Subtask, Vehicle};
use v2x_offload::tier1;

fn main() {
    let vehicle = |id, x, cpu, role| Vehicle {
        id,
        position: Position::new(x, 1.875),
        velocity: 22.0,
        max_cpu: cpu,
        kappa: 1.5e-23,
        weight: 1.0,
        role,
    };
    let nv = vehicle(1, 0.0, 3e9, Role::Nv);
    let hv = vehicle(2, 30.0, 9e9, Role::Hv);
    let params = ChannelParams::default();
    let policies = [PolicyId::Foo, PolicyId::Fom, PolicyId::Pom, PolicyId::Bfm];

    print!("{:>10} {:>12}", "deadline", "PROPOSED");
    for p in policies {
        print!(" {:>12}", p.name());
    }
    println!();
    for deadline in [0.15, 0.2, 0.3, 0.4] {
        let task = SequentialTask {
            owner: 1,
            input_size: 1.5e6,
            subtasks: [2e8, 3e8, 2e8, 1e8]
                .iter()
                .map(|&w| Subtask { workload: w, output_size: 8e5 })
                .collect(),
            deadline,
        };
        let cell = |r: Result<f64, String>| r.map(|e| format!("{e:>12.4e}")).unwrap_or_else(|_| format!("{:>12}", "infeasible"));
        print!("{deadline:>10}");
        print!(" {}", cell(tier1::solve(&nv, &hv, &task, &params).map(|p| p.energy.weighted_total).map_err(|e| e.to_string())));
        for p in policies {
            let r = run_tier1_baseline(p, &nv, &hv, &task, &params);
            print!(" {}", cell(r.map(|p| p.energy.weighted_total).map_err(|e| e.to_string())));
        }
        println!();
    }
}
