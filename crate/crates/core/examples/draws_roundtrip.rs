//! Persist draws as NDJSON, read them back bit-for-bit, and detect damage.

use bammit::error::Error;
use bammit::io::draws::{read_draws, write_draws};
use bammit::model::PriorConfig;
use bammit::sampler::{run_chains, McmcConfig};
use bammit::simulate::{named_layout, scenario_preset, simulate_trial};

fn main() -> bammit::error::Result<()> {
    let mut config = scenario_preset("i", 1)?;
    config.layout = named_layout(&[6, 4, 3])?;
    let trial = simulate_trial(&config)?;
    let mut mcmc = McmcConfig::with_q(1);
    mcmc.n_iter = 400;
    mcmc.n_burn = 200;
    mcmc.adapt_window = 200;
    let draws = run_chains(&trial.train, &PriorConfig::default(), &mcmc)?;

    let dir = std::env::temp_dir().join(format!("bammit-draws-{}", std::process::id()));
    let path = dir.join("draws.ndjson");
    write_draws(&draws, &path)?;
    let back = read_draws(&path)?;
    println!("{} draws written and read; identical: {}", back.n_draws(), back == draws);

    let text = std::fs::read_to_string(&path)?;
    std::fs::write(&path, &text[..text.len() / 2])?;
    match read_draws(&path) {
        Err(Error::CorruptRecord { line, message }) => println!("truncated file: line {line}: {message}"),
        other => println!("unexpected: {other:?}"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
