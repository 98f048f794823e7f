//! Diagnostic probe: run a scenario config and dump detailed residual
//! information (worst slope samples, balance terms, per-step motion).

use std::path::PathBuf;

use droplet::geometry::measure;
use droplet::scenario::{run_scenario, RunOptions};

fn main() {
    let path = std::env::args().nth(1).expect("usage: probe <scenario.json>");
    let options = RunOptions {
        out_dir: Some(PathBuf::from("/tmp/probe-out")),
        quiet: true,
        ..Default::default()
    };
    let outcome = run_scenario(&PathBuf::from(path), &options).unwrap();
    let trace = &outcome.trace;
    let (lo, hi) = trace.params.pinning_interval();
    println!("pinning interval [{lo}, {hi}]");
    for (k, s) in trace.steps.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut worst_cell = 0;
        let mut worst_s2 = 0.0;
        for &(cell, slope) in &s.slope_samples {
            let s2 = slope * slope;
            let r = (lo - s2).max(s2 - hi).max(0.0);
            if r > worst {
                worst = r;
                worst_cell = cell;
                worst_s2 = s2;
            }
        }
        let (i, j) = trace.domain.coords(worst_cell);
        println!(
            "step {k:3} t={:.3} F={:.4} vol={:.4} D={:.4} J={:.4} P={:.4} flips={:3} dinc={:.5} | worst slope2 {:.4} at ({i},{j}) resid {:.4} | lip {:.3} nd {:.3}",
            s.t, s.forcing, s.energy.volume, s.energy.dirichlet, s.energy.j_energy,
            s.energy.pressure, s.flips, s.diss_increment, worst_s2, worst, s.lipschitz_proxy,
            s.nondegeneracy_proxy
        );
    }
    // Balance pieces.
    let n = trace.steps.len();
    let mut w_trap = 0.0;
    let mut dissbar = 0.0;
    for m in 0..n - 1 {
        let a = &trace.steps[m];
        let b = &trace.steps[m + 1];
        w_trap += (b.forcing - a.forcing) * (a.energy.pressure + b.energy.pressure);
        dissbar += droplet::geometry::diss(&a.mask, &b.mask, &trace.params, &trace.domain).unwrap();
    }
    let j0 = trace.steps[0].energy.j_energy;
    let jn = trace.steps[n - 1].energy.j_energy;
    println!("balance: J0={j0:.5} JN={jn:.5} W_trap={w_trap:.5} DissBar={dissbar:.5} residual={:.5}",
        j0 - jn + w_trap - dissbar);
    println!("init mask measure at settle: {:.4}", measure(&trace.steps[0].mask, &trace.domain));
    for c in &outcome.certificates {
        println!("{}", c.summary());
    }
}
