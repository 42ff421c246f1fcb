//! Naive re-simulation of F-UCB with the mean functional on `[0,1]` outcomes,
//! written directly from the policy description without the library's policy code.

#![allow(dead_code)]

use fucb_core::environments::Environment;
use fucb_core::rng::{stream, ENVIRONMENT_STREAM};

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub arms: Vec<usize>,
    pub regret: f64,
    pub suboptimal: u64,
}

pub fn brute_force_fucb(env: &Environment, n: u64, seed: u64, bins_per_axis: usize, beta: f64) -> Trace {
    let k = env.arm_count();
    let p = bins_per_axis;
    let mut rng = stream(seed, ENVIRONMENT_STREAM);
    // per bin: every observation as (arm, outcome), in arrival order
    let mut history: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.pow(env.dim() as u32)];
    let mut trace = Trace { arms: Vec::new(), regret: 0.0, suboptimal: 0 };
    for _ in 0..n {
        let draw = env.sample(&mut rng);
        let bin = draw.x.iter().fold(0, |acc, &v| {
            let mut c = 0;
            while c + 1 < p && v >= (c + 1) as f64 / p as f64 {
                c += 1;
            }
            acc * p + c
        });
        let seen = &history[bin];
        let n_j = seen.len() + 1;
        let arm = if n_j <= k {
            n_j - 1
        } else {
            let mut best = None::<(usize, f64)>;
            for i in 0..k {
                let ys: Vec<f64> = seen.iter().filter(|o| o.0 == i).map(|o| o.1).collect();
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                let idx = mean + (beta * (n_j as f64).ln() / (2.0 * ys.len() as f64)).sqrt();
                if best.is_none_or(|b| idx > b.1) {
                    best = Some((i, idx));
                }
            }
            best.unwrap().0
        };
        history[bin].push((arm, draw.outcomes[arm]));
        let values: Vec<f64> = (0..k).map(|i| env.true_functional(i, &draw.x).unwrap()).collect();
        let top = values.iter().cloned().fold(f64::MIN, f64::max);
        trace.regret += top - values[arm];
        if values[arm] < top {
            trace.suboptimal += 1;
        }
        trace.arms.push(arm);
    }
    trace
}
