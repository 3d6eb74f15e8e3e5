//! Choosing the number of multiplicative components by held-out RMSE.

use bammit::model::PriorConfig;
use bammit::posterior::{posterior_mean_predictor, rmse};
use bammit::sampler::{run_chains, McmcConfig};
use bammit::simulate::{scenario_preset, simulate_trial};

fn main() -> bammit::error::Result<()> {
    let trial = simulate_trial(&scenario_preset("i", 2)?)?;
    let cells: Vec<Vec<usize>> = trial.test.records.iter().map(|r| r.cell.clone()).collect();
    let y = trial.test.responses();
    println!("data simulated with Q = 2, λ = {:?}", trial.config.lambda_true);
    for q in 1..=3 {
        let mut mcmc = McmcConfig::with_q(q);
        mcmc.n_iter = 2000;
        mcmc.n_burn = 1000;
        mcmc.adapt_window = 1000;
        let draws = run_chains(&trial.train, &PriorConfig::default(), &mcmc)?;
        let lambda: Vec<f64> = (0..q)
            .map(|k| draws.iter().map(|s| s.lambda[k]).sum::<f64>() / draws.n_draws() as f64)
            .collect();
        let fit = rmse(&y, &posterior_mean_predictor(&draws, &cells)?)?;
        println!("Q={q}: test RMSE {fit:.3}, mean λ {:.2?}", lambda);
    }
    Ok(())
}
