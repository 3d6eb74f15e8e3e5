//! Synthetic trials drawn from the model itself.
//!
//! True main effects are drawn from N(0, σ_b²) and centred exactly; score
//! columns are normalized standard-normal auxiliary columns. Random streams
//! are ChaCha8 seeded from the configured seed, one stream per purpose, so
//! a given (seed, config) pair always yields the same trial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ar::{ar_simulate_time_effects, ArInitial, ArParams};
use crate::error::{Error, Result};
use crate::model::{Dataset, FactorScores, ParameterState, Record};
use crate::tensor::FactorLayout;

/// Simulation settings for one synthetic trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub layout: FactorLayout,
    pub q_sim: usize,
    pub lambda_true: Vec<f64>,
    pub mu_true: f64,
    pub sigma_true: f64,
    pub sigma_b_true: f64,
    pub seed: u64,
}

/// Default seed for presets.
pub const DEFAULT_SEED: u64 = 20_230_101;

const STREAM_PARAMETERS: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_AR: u64 = 3;

/// Factor names used by the presets.
pub const PRESET_FACTORS: [&str; 4] = ["genotype", "environment", "year", "block"];
const PRESET_PREFIX: [&str; 4] = ["g", "e", "y", "r"];

/// Layout with the preset factor names and labels `g1, g2, ...`.
pub fn named_layout(dims: &[usize]) -> Result<FactorLayout> {
    if dims.len() > PRESET_FACTORS.len() {
        return FactorLayout::from_dims(dims);
    }
    let names = PRESET_FACTORS[..dims.len()]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let levels = dims
        .iter()
        .zip(PRESET_PREFIX)
        .map(|(&b, p)| (1..=b).map(|i| format!("{p}{i}")).collect())
        .collect();
    FactorLayout::new(names, levels)
}

/// Interaction strengths used for `q_sim` = 1, 2, 3.
pub fn preset_lambda(q_sim: usize) -> Result<Vec<f64>> {
    match q_sim {
        1 => Ok(vec![10.0]),
        2 => Ok(vec![8.0, 10.0]),
        3 => Ok(vec![8.0, 10.0, 12.0]),
        _ => Err(Error::arg(format!(
            "preset q_sim must be 1, 2 or 3, got {q_sim}"
        ))),
    }
}

/// One of the four simulation scenarios, by id "i".."iv".
pub fn scenario_preset(id: &str, q_sim: usize) -> Result<SimulationConfig> {
    let dims: &[usize] = match id {
        "i" => &[12, 10],
        "ii" => &[12, 10, 4],
        "iii" => &[12, 10, 4, 2],
        "iv" => &[100, 10, 5],
        other => {
            return Err(Error::arg(format!(
                "unknown scenario `{other}` (expected i, ii, iii or iv)"
            )))
        }
    };
    Ok(SimulationConfig {
        layout: named_layout(dims)?,
        q_sim,
        lambda_true: preset_lambda(q_sim)?,
        mu_true: 100.0,
        sigma_true: 1.0,
        sigma_b_true: 1.0,
        seed: DEFAULT_SEED,
    })
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_sim == 0 || self.lambda_true.len() != self.q_sim {
            return Err(Error::arg(format!(
                "lambda_true has {} entries for q_sim = {}",
                self.lambda_true.len(),
                self.q_sim
            )));
        }
        if self.lambda_true.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::arg("lambda_true must be nonnegative"));
        }
        if self.sigma_true < 0.0 || self.sigma_b_true < 0.0 {
            return Err(Error::arg("simulation SDs must be nonnegative"));
        }
        Ok(())
    }

    /// Random stream `stream` derived from the configured seed.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

fn draw_scores<R: Rng + ?Sized>(levels: usize, q: usize, rng: &mut R) -> Result<FactorScores> {
    let draw =
        |rng: &mut R| -> Vec<f64> { (0..levels).map(|_| StandardNormal.sample(rng)).collect() };
    let mut columns = Vec::with_capacity(q);
    for _ in 0..q {
        let mut column = draw(rng);
        if crate::model::normalize_column(&column).is_err() {
            column = draw(rng);
        }
        columns.push(column);
    }
    FactorScores::from_theta(columns)
}

/// Draws a true parameter state.
pub fn simulate_parameters<R: Rng + ?Sized>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<ParameterState> {
    config.validate()?;
    let dims = config.layout.dims();
    let main_effects = dims
        .iter()
        .map(|&b| {
            let raw: Vec<f64> = (0..b)
                .map(|_| {
                    config.sigma_b_true * {
                        let z: f64 = StandardNormal.sample(rng);
                        z
                    }
                })
                .collect();
            let mean = raw.iter().sum::<f64>() / b as f64;
            raw.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let scores = dims
        .iter()
        .map(|&b| draw_scores(b, config.q_sim, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut lambda = config.lambda_true.clone();
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok(ParameterState {
        mu: config.mu_true,
        main_effects,
        sigma_b: vec![config.sigma_b_true; dims.len()],
        lambda,
        sigma_lambda: 1.0,
        scores,
        sigma2_y: config.sigma_true * config.sigma_true,
        ar: None,
    })
}

/// One noisy observation per grid cell.
pub fn simulate_dataset<R: Rng + ?Sized>(
    state: &ParameterState,
    layout: &FactorLayout,
    sigma: f64,
    rng: &mut R,
) -> Result<Dataset> {
    state.check_layout(layout)?;
    if !(sigma >= 0.0) {
        return Err(Error::arg("sigma must be nonnegative"));
    }
    let records = layout
        .cells()
        .map(|cell| {
            let z: f64 = StandardNormal.sample(rng);
            let y = state.predict_unchecked(&cell) + sigma * z;
            Record { cell, y }
        })
        .collect();
    Dataset::new(layout.clone(), records, "y")
}

/// A true state with paired training and test sets.
#[derive(Debug, Clone)]
pub struct SimulatedTrial {
    pub config: SimulationConfig,
    pub truth: ParameterState,
    pub train: Dataset,
    pub test: Dataset,
}

/// Draws the truth and two independent noisy copies of the full grid.
pub fn simulate_trial(config: &SimulationConfig) -> Result<SimulatedTrial> {
    let truth = simulate_parameters(config, &mut config.rng(STREAM_PARAMETERS))?;
    let train = simulate_dataset(
        &truth,
        &config.layout,
        config.sigma_true,
        &mut config.rng(STREAM_TRAIN),
    )?;
    let test = simulate_dataset(
        &truth,
        &config.layout,
        config.sigma_true,
        &mut config.rng(STREAM_TEST),
    )?;
    Ok(SimulatedTrial {
        config: config.clone(),
        truth,
        train,
        test,
    })
}

/// Like [`simulate_trial`], but the time factor's main effect and score
/// columns follow the AR(1) recursions of `params` from a zero start.
pub fn simulate_ar_trial(config: &SimulationConfig, params: &ArParams) -> Result<SimulatedTrial> {
    let t = params.time_factor;
    if t >= config.layout.n_factors() {
        return Err(Error::arg(format!("AR time factor {t} out of range")));
    }
    let mut truth = simulate_parameters(config, &mut config.rng(STREAM_PARAMETERS))?;
    let effects = ar_simulate_time_effects(
        params,
        config.layout.levels(t),
        config.q_sim,
        ArInitial::default(),
        &mut config.rng(STREAM_AR),
    )?;
    truth.main_effects[t] = effects.b;
    truth.scores[t] = FactorScores::from_theta(effects.theta)?;
    truth.ar = Some(params.clone());
    let train = simulate_dataset(&truth, &config.layout, config.sigma_true, &mut config.rng(STREAM_TRAIN))?;
    let test = simulate_dataset(&truth, &config.layout, config.sigma_true, &mut config.rng(STREAM_TEST))?;
    Ok(SimulatedTrial {
        config: config.clone(),
        truth,
        train,
        test,
    })
}
