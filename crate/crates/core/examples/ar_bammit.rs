//! Autoregressive year effects: simulate a persistent trajectory, recover φ.

use bammit::ar::ArParams;
use bammit::model::PriorConfig;
use bammit::posterior::Summary;
use bammit::sampler::{McmcConfig, Sampler};
use bammit::simulate::{named_layout, scenario_preset, simulate_ar_trial};

fn main() -> bammit::error::Result<()> {
    let mut config = scenario_preset("i", 1)?;
    config.layout = named_layout(&[12, 10, 10])?;
    let year = 2;
    let params = ArParams {
        phi_b: 0.7,
        phi_theta: 0.7,
        ..ArParams::white_noise(year)
    };
    let trial = simulate_ar_trial(&config, &params)?;
    let b = &trial.truth.main_effects[year];
    println!("true year effects: {:?}", b.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>());

    let mut mcmc = McmcConfig::with_q(1);
    mcmc.n_iter = 3000;
    mcmc.n_burn = 1500;
    mcmc.adapt_window = 1500;
    let draws = Sampler::new(&trial.train, PriorConfig::default(), mcmc).with_ar(year).run()?;

    let pick = |f: fn(&ArParams) -> f64| -> Vec<f64> { draws.iter().map(|s| f(s.ar.as_ref().unwrap())).collect() };
    for (name, v) in [("phi_b", pick(|a| a.phi_b)), ("phi_theta", pick(|a| a.phi_theta)), ("sigma_eta", pick(|a| a.sigma_eta))] {
        let s = Summary::of(&v)?;
        println!("{name:<10} mean {:>6.3}  90% ({:.3}, {:.3})", s.mean, s.q05, s.q95);
    }
    Ok(())
}
