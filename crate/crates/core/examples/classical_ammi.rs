//! Two-way AMMI on a genotype × environment table of cell means.

use bammit::ammi::{cell_mean_table, fit_ammi_classical, TwoWayAmmi};
use bammit::posterior::rmse;
use bammit::simulate::{scenario_preset, simulate_trial};

fn main() -> bammit::error::Result<()> {
    let trial = simulate_trial(&scenario_preset("i", 2)?)?;
    let table = cell_mean_table(&trial.train, 0, 1)?;
    println!("{}×{} table of cell means", table.nrows(), table.ncols());

    for q in 1..=3 {
        let fit = fit_ammi_classical(&table, q)?;
        println!(
            "Q={q}: singular values {:?}, residual SS {:.3}",
            fit.lambda.iter().map(|l| (l * 1e3).round() / 1e3).collect::<Vec<_>>(),
            fit.residual_ss()
        );
    }

    // the same fit kept with its labels, scored on fresh noise
    let model = TwoWayAmmi::fit(&trial.train, 0, 1, 2)?;
    let preds: Vec<f64> = model.predict_dataset(&trial.test)?.into_iter().map(|p| p.unwrap()).collect();
    println!("test RMSE {:.3}", rmse(&trial.test.responses(), &preds)?);
    println!("g1 in e1: {:.3}", model.predict_labels("g1", "e1").unwrap());
    Ok(())
}
