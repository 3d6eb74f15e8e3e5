//! Value-suppressing uncertainty palette over a genotype × environment grid.
//! Writes heatmap.svg and heatmap.csv to the directory given (default: .).

use std::collections::BTreeMap;
use std::path::PathBuf;

use bammit::model::PriorConfig;
use bammit::sampler::{run_chains, McmcConfig};
use bammit::simulate::{scenario_preset, simulate_trial};
use bammit::viz::{emit_heatmap_svg, heatmap_csv, hex, prediction_grid, write_text};

fn main() -> bammit::error::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let trial = simulate_trial(&scenario_preset("ii", 1)?)?;
    // sparse data makes the uncertainty axis visible
    let (train, _) = trial.train.partition(|k, _| k % 3 == 0);
    let mut mcmc = McmcConfig::with_q(1);
    mcmc.n_iter = 1500;
    mcmc.n_burn = 750;
    mcmc.adapt_window = 750;
    let draws = run_chains(&train, &PriorConfig::default(), &mcmc)?;

    let fixed = BTreeMap::from([(2, 0)]);
    let grid = prediction_grid(&draws, (0, 1), &fixed, false, 1)?;
    let palette = grid.palette(4);
    println!("value bins per uncertainty level: {:?}", palette.value_bins_per_level());
    for level in 0..4 {
        let (lo, hi) = palette.level_band(level);
        let colours: Vec<String> = (0..palette.value_bins_per_level()[level]).map(|b| hex(palette.color(level, b))).collect();
        println!("sd in [{lo:.3}, {hi:.3}): {}", colours.join(" "));
    }
    emit_heatmap_svg(&grid, &palette, &out.join("heatmap.svg"))?;
    write_text(&out.join("heatmap.csv"), &heatmap_csv(&grid)?)?;
    println!("wrote {}", out.join("heatmap.svg").display());
    Ok(())
}
