//! Numerical check of the per-iteration energy decrement and the two
//! step-sum bounds, across random instances and parameters.

use ifbs::analysis::reference_solve;
use ifbs::engine::{run, Algorithm, RunOptions, TerminationRule};
use ifbs::model::{generate_instance, GenerateParams, SmoothOracle};
use ifbs::rng::SplitMix64;
use ifbs::schedule::{ScheduleSpec, StepRule};

fn main() {
    let mut rng = SplitMix64::new(0xDEC);
    let mut worst_slack: f64 = f64::INFINITY;
    let mut printed_co1_fail = 0;
    let mut printed_co2_fail = 0;
    let mut certified_co1_fail = 0;
    let mut certified_co2_fail = 0;
    let trials = 60;
    for t in 0..trials {
        let rows = 10 + rng.next_below(30) as usize;
        let cols = rows * 2;
        let inst = generate_instance(&GenerateParams {
            rows,
            cols,
            sparsity: cols / 5,
            entry_std: 0.1 + 0.6 * rng.next_f64(),
            rho: 0.3 + rng.next_f64(),
            seed: 0xABC0 + t,
        })
        .unwrap();
        let l = inst.lipschitz_constant();
        let alpha = 0.05 + 0.9 * rng.next_f64();
        let lam = (0.2 + 0.8 * rng.next_f64()) / l; // lambda in (0, 1/L]
        let p = inst.problem();
        let mut sched = ScheduleSpec::constant(alpha)
            .with_step(StepRule::Fixed(lam))
            .build(l, None)
            .unwrap();
        let mut opts = RunOptions::new(TerminationRule::max_iter(30_000));
        opts.termination.step_tol = Some(1e-13);
        let trace = run(&p, &mut sched, &vec![0.0; cols], Algorithm::Ifbs, &opts).unwrap();

        // Corrected decomposition coefficients (c1 >= 0 multiplies
        // ||d_{k+1} - d_k||^2 which is unavailable from norms alone; dropping
        // it only weakens the required decrement).
        let c2 = (2.0 + lam * l * (alpha - 1.0) - 2.0 * alpha) / (2.0 * lam);
        let c3 = l * alpha * (1.0 - alpha) / 2.0;
        for w in trace.rows.windows(2) {
            let drop = w[0].energy - w[1].energy;
            let need = c2 * w[1].step_norm * w[1].step_norm
                + c3 * w[0].step_norm * w[0].step_norm;
            let slack = drop - need;
            if slack < worst_slack {
                worst_slack = slack;
            }
        }

        let rf = reference_solve(&inst, 1e-12).unwrap();
        let budget = trace.rows[0].energy - rf.f_star;
        let sum_sq: f64 = trace.rows.iter().map(|r| r.step_norm * r.step_norm).sum();
        // As printed.
        let denom1 = 2.0 * l * (1.0 - alpha) - 1.0;
        if denom1 > 0.0 && sum_sq > 2.0 / denom1 * budget {
            printed_co1_fail += 1;
        }
        if sum_sq > 2.0 / (l * l * alpha * (1.0 - alpha)) * budget {
            printed_co2_fail += 1;
        }
        // Energy-derived.
        if sum_sq > 2.0 * budget / (l * (1.0 - alpha)) {
            certified_co1_fail += 1;
        }
        if sum_sq > 2.0 * budget / (l * alpha * (1.0 - alpha)) {
            certified_co2_fail += 1;
        }
    }
    println!("worst per-step slack (corrected coefficients): {worst_slack:.3e}");
    println!("printed co1 failures:   {printed_co1_fail}/{trials}");
    println!("printed co2 failures:   {printed_co2_fail}/{trials}");
    println!("certified co1 failures: {certified_co1_fail}/{trials}");
    println!("certified co2 failures: {certified_co2_fail}/{trials}");
}
