//! Delete cells from a full grid and predict them back with intervals.

use bammit::model::PriorConfig;
use bammit::posterior::{predict_cells, rmse};
use bammit::sampler::{run_chains, McmcConfig};
use bammit::simulate::{scenario_preset, simulate_trial};
use rand::{Rng, SeedableRng};

fn main() -> bammit::error::Result<()> {
    let trial = simulate_trial(&scenario_preset("i", 1)?)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let (train, held) = trial.train.partition(|_, _| rng.random::<f64>() > 0.1);
    println!("kept {} cells, deleted {}", train.len(), held.len());

    let mut mcmc = McmcConfig::with_q(1);
    mcmc.n_iter = 2000;
    mcmc.n_burn = 1000;
    mcmc.adapt_window = 1000;
    let draws = run_chains(&train, &PriorConfig::default(), &mcmc)?;

    let cells: Vec<Vec<usize>> = held.records.iter().map(|r| r.cell.clone()).collect();
    let preds = predict_cells(&draws, &cells, true, 9)?;
    let covered = preds.iter().zip(&held.records).filter(|(p, r)| p.q05 <= r.y && r.y <= p.q95).count();
    let medians: Vec<f64> = preds.iter().map(|p| p.median).collect();
    println!(
        "imputation RMSE {:.3}; 90% predictive intervals cover {covered}/{}",
        rmse(&held.responses(), &medians)?,
        held.len()
    );
    for (p, r) in preds.iter().zip(&held.records).take(5) {
        println!("{:?}: observed {:.2}, predicted {:.2} ({:.2}, {:.2})", p.cell, r.y, p.median, p.q05, p.q95);
    }
    Ok(())
}
