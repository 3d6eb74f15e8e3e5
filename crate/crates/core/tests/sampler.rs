use bammit::error::Error;
use bammit::model::{validate_constraints, Dataset, PriorConfig};
use bammit::sampler::{run_chains, McmcConfig, Sampler};
use bammit::simulate::{scenario_preset, simulate_trial};
use std::sync::atomic::{AtomicUsize, Ordering};

fn short(q: usize, seed: u64) -> McmcConfig {
    McmcConfig {
        n_iter: 600,
        n_burn: 300,
        adapt_window: 300,
        thin: 3,
        seed,
        ..McmcConfig::with_q(q)
    }
}

#[test]
fn same_seed_same_draws_different_seed_different_draws() {
    let t = simulate_trial(&scenario_preset("ii", 2).unwrap()).unwrap();
    let p = PriorConfig::default();
    let a = run_chains(&t.train, &p, &short(2, 4)).unwrap();
    let b = run_chains(&t.train, &p, &short(2, 4)).unwrap();
    assert_eq!(a, b);
    let c = run_chains(&t.train, &p, &short(2, 5)).unwrap();
    assert_ne!(a.draws, c.draws);
    assert_eq!(a.draws.len(), 3);
    assert!(a.draws.iter().all(|ch| ch.len() == 100));
}

#[test]
fn every_draw_satisfies_the_constraints() {
    let t = simulate_trial(&scenario_preset("ii", 2).unwrap()).unwrap();
    let d = run_chains(&t.train, &PriorConfig::default(), &short(3, 8)).unwrap();
    for s in d.iter() {
        let r = validate_constraints(s);
        assert!(r.passes_at(1e-8), "{r:?}");
        assert!(s.lambda.windows(2).all(|w| w[0] >= w[1]) && s.lambda[2] >= 0.0);
        assert!(s.sigma2_y > 0.0 && s.sigma_lambda > 0.0);
    }
}

#[test]
fn disabled_ar_block_is_plain_bammit() {
    let t = simulate_trial(&scenario_preset("i", 1).unwrap()).unwrap();
    let p = PriorConfig::default();
    let plain = run_chains(&t.train, &p, &short(1, 2)).unwrap();
    let flagged = Sampler::new(&t.train, p, short(1, 2)).with_ar_opt(None).run().unwrap();
    assert_eq!(plain, flagged);
    assert!(plain.iter().all(|s| s.ar.is_none()));
}

#[test]
fn ar_chains_keep_phi_in_range() {
    let t = simulate_trial(&scenario_preset("ii", 1).unwrap()).unwrap();
    let d = Sampler::new(&t.train, PriorConfig::default(), short(1, 6)).with_ar(2).run().unwrap();
    assert_eq!(d.ar_time_factor, Some(2));
    for s in d.iter() {
        let ar = s.ar.as_ref().unwrap();
        assert!(ar.phi_b.abs() <= 1.0 && ar.phi_theta.abs() <= 1.0);
        assert!(validate_constraints(s).passes_at(1e-8));
    }
}

#[test]
fn progress_hook_and_input_errors() {
    let t = simulate_trial(&scenario_preset("i", 1).unwrap()).unwrap();
    let calls = AtomicUsize::new(0);
    let hook = |_p: bammit::sampler::Progress| {
        calls.fetch_add(1, Ordering::Relaxed);
    };
    Sampler::new(&t.train, PriorConfig::default(), short(1, 1))
        .with_progress(100, &hook)
        .run()
        .unwrap();
    assert_eq!(calls.load(Ordering::Relaxed), 3 * 6);

    let empty = Dataset::new(t.train.layout.clone(), Vec::new(), "y").unwrap();
    assert!(matches!(
        run_chains(&empty, &PriorConfig::default(), &short(1, 1)),
        Err(Error::EmptyData)
    ));
    let bad = McmcConfig { n_burn: 700, ..short(1, 1) };
    assert!(matches!(
        run_chains(&t.train, &PriorConfig::default(), &bad),
        Err(Error::Config(_))
    ));
}
