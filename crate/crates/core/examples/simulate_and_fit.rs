//! Simulate a genotype × environment × year trial, fit it, score the test copy.

use bammit::model::PriorConfig;
use bammit::posterior::{posterior_mean_predictor, r_squared, rmse, summarize, Selector};
use bammit::sampler::{run_chains, McmcConfig};
use bammit::simulate::{scenario_preset, simulate_trial};

fn main() -> bammit::error::Result<()> {
    let config = scenario_preset("ii", 2)?;
    let trial = simulate_trial(&config)?;
    println!(
        "layout {:?}, {} training rows, λ_true {:?}",
        config.layout.dims(),
        trial.train.len(),
        config.lambda_true
    );

    let mut mcmc = McmcConfig::with_q(2);
    mcmc.n_iter = 2000;
    mcmc.n_burn = 1000;
    mcmc.adapt_window = 1000;
    let draws = run_chains(&trial.train, &PriorConfig::default(), &mcmc)?;

    for sel in ["mu", "sigma", "lambda"] {
        for s in summarize(&draws, &Selector::parse_with(sel, Some(&draws.layout))?)? {
            println!("{:<10} mean {:>8.3}  90% ({:.3}, {:.3})", s.name, s.summary.mean, s.summary.q05, s.summary.q95);
        }
    }
    for d in draws.diagnostics.iter().filter(|d| ["mu", "sigma", "lambda[0]"].contains(&d.name.as_str())) {
        println!("{:<10} R̂ {:.3}  ESS {:.0}", d.name, d.rhat.unwrap_or(f64::NAN), d.ess.unwrap_or(f64::NAN));
    }

    let cells: Vec<Vec<usize>> = trial.test.records.iter().map(|r| r.cell.clone()).collect();
    let yhat = posterior_mean_predictor(&draws, &cells)?;
    let y = trial.test.responses();
    println!("test RMSE {:.3}, R² {:.3}", rmse(&y, &yhat)?, r_squared(&y, &yhat)?);
    Ok(())
}
