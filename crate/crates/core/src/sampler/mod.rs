//! Metropolis-within-Gibbs sampler.
//!
//! Each iteration sweeps μ → b → θ → λ → variances (→ AR block):
//!
//! * μ, every b^(v)_i and the residual precision have conjugate normal or
//!   gamma full conditionals;
//! * λ_q is drawn from its normal full conditional truncated to
//!   `[λ_{q+1}, λ_{q−1}]`, which keeps the ordering without sorting;
//! * each auxiliary column θ^(v)_q moves by a Gaussian random walk and is
//!   accepted on likelihood × N(0, 1) prior, its β column following through
//!   the normalization;
//! * σ_b^(v) and σ_λ move by log-scale random walks against half-t priors.
//!
//! Random-walk scales adapt during the first `adapt_window` iterations and
//! are frozen afterwards. Chains run in parallel, each on its own ChaCha8
//! stream derived from the seed.

pub mod adapt;
mod chain;
pub mod diagnostics;
pub mod dist;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chain::{Chain, Observations};
pub use diagnostics::{ess, rhat};

use crate::error::{Error, Result};
use crate::model::{Dataset, ParameterState, PriorConfig};
use crate::tensor::FactorLayout;

/// MCMC run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    /// Number of multiplicative components fitted.
    pub q: usize,
    pub seed: u64,
    /// Iterations (from the start) during which step sizes adapt.
    pub adapt_window: usize,
    /// Target acceptance for θ column blocks.
    pub target_accept: f64,
    /// Target acceptance for scalar log-scale updates.
    pub target_accept_scalar: f64,
    /// Random-walk proposals per θ column per sweep.
    pub theta_steps: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_chains: 3,
            n_iter: 4000,
            n_burn: 2000,
            thin: 2,
            q: 1,
            seed: 1,
            adapt_window: 2000,
            target_accept: 0.35,
            target_accept_scalar: 0.44,
            theta_steps: 8,
        }
    }
}

impl McmcConfig {
    pub fn with_q(q: usize) -> Self {
        Self {
            q,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.n_burn >= self.n_iter {
            return Err(Error::Config(format!(
                "burn-in ({}) must be shorter than the run ({})",
                self.n_burn, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.q == 0 {
            return Err(Error::Config("Q must be at least 1".into()));
        }
        if self.adapt_window > self.n_burn {
            return Err(Error::Config("adaptation must end within burn-in".into()));
        }
        for t in [self.target_accept, self.target_accept_scalar] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(
                    "target acceptance rates must lie in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Stored draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }

    /// Random stream for `chain`.
    pub fn chain_rng(&self, chain: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chain as u64 + 1);
        rng
    }
}

/// Convergence summary for one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    #[serde(with = "crate::io::float_or_string::option")]
    pub rhat: Option<f64>,
    #[serde(with = "crate::io::float_or_string::option")]
    pub ess: Option<f64>,
}

/// Thinned post-burn-in draws of every chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub layout: FactorLayout,
    pub response_name: String,
    pub config: McmcConfig,
    pub priors: PriorConfig,
    pub ar_time_factor: Option<usize>,
    pub draws: Vec<Vec<ParameterState>>,
    #[serde(with = "crate::io::float_or_string::map")]
    pub acceptance_rates: BTreeMap<String, f64>,
    pub diagnostics: Vec<ScalarDiagnostic>,
}

impl PosteriorDraws {
    /// Wraps externally produced states (e.g. a known truth) with default
    /// settings so the summaries and plots can consume them.
    pub fn from_chains(
        layout: FactorLayout,
        response_name: impl Into<String>,
        draws: Vec<Vec<ParameterState>>,
    ) -> Result<Self> {
        for s in draws.iter().flatten() {
            s.check_layout(&layout)?;
        }
        let q = draws
            .iter()
            .flatten()
            .next()
            .map_or(1, ParameterState::n_components);
        let mut out = Self {
            layout,
            response_name: response_name.into(),
            config: McmcConfig::with_q(q.max(1)),
            priors: PriorConfig::default(),
            ar_time_factor: draws
                .iter()
                .flatten()
                .next()
                .and_then(|s| s.ar.as_ref().map(|a| a.time_factor)),
            draws,
            acceptance_rates: BTreeMap::new(),
            diagnostics: Vec::new(),
        };
        out.compute_diagnostics();
        Ok(out)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    /// All draws, chain by chain.
    pub fn iter(&self) -> impl Iterator<Item = &ParameterState> {
        self.draws.iter().flatten()
    }

    /// Per-chain traces of a scalar functional.
    pub fn traces(&self, f: impl Fn(&ParameterState) -> f64) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|c| c.iter().map(&f).collect())
            .collect()
    }

    pub fn diagnostic(&self, name: &str) -> Option<&ScalarDiagnostic> {
        self.diagnostics.iter().find(|d| d.name == name)
    }

    /// Recomputes split-R̂ and ESS for μ, σ, each λ_q and each b^(v)_i.
    pub fn compute_diagnostics(&mut self) {
        let Some(first) = self.draws.first().and_then(|c| c.first()) else {
            self.diagnostics.clear();
            return;
        };
        let q = first.lambda.len();
        let dims: Vec<usize> = first.main_effects.iter().map(Vec::len).collect();
        let mut scalars: Vec<(String, Box<dyn Fn(&ParameterState) -> f64 + Sync>)> = vec![
            ("mu".into(), Box::new(|s: &ParameterState| s.mu)),
            (
                "sigma".into(),
                Box::new(|s: &ParameterState| s.sigma2_y.sqrt()),
            ),
        ];
        for k in 0..q {
            scalars.push((
                format!("lambda[{k}]"),
                Box::new(move |s: &ParameterState| s.lambda[k]),
            ));
        }
        for (v, &b) in dims.iter().enumerate() {
            for i in 0..b {
                scalars.push((
                    format!("b[{v}][{i}]"),
                    Box::new(move |s: &ParameterState| s.main_effects[v][i]),
                ));
            }
        }
        self.diagnostics = scalars
            .par_iter()
            .map(|(name, f)| {
                let traces = self.traces(f);
                ScalarDiagnostic {
                    name: name.clone(),
                    rhat: rhat(&traces).ok(),
                    ess: ess(&traces).ok(),
                }
            })
            .collect();
    }
}

/// Progress notification passed to the hook.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub chain: usize,
    pub iteration: usize,
    pub total: usize,
}

type ProgressHook<'a> = &'a (dyn Fn(Progress) + Sync);

/// Configures and runs a set of chains.
pub struct Sampler<'a> {
    data: &'a Dataset,
    priors: PriorConfig,
    config: McmcConfig,
    ar_time_factor: Option<usize>,
    progress: Option<(usize, ProgressHook<'a>)>,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, priors: PriorConfig, config: McmcConfig) -> Self {
        Self {
            data,
            priors,
            config,
            ar_time_factor: None,
            progress: None,
        }
    }

    /// Places AR(1) structure on the given time factor.
    pub fn with_ar(mut self, time_factor: usize) -> Self {
        self.ar_time_factor = Some(time_factor);
        self
    }

    pub fn with_ar_opt(mut self, time_factor: Option<usize>) -> Self {
        self.ar_time_factor = time_factor;
        self
    }

    /// Calls `hook` every `every` iterations of every chain.
    pub fn with_progress(mut self, every: usize, hook: ProgressHook<'a>) -> Self {
        self.progress = Some((every.max(1), hook));
        self
    }

    pub fn run(self) -> Result<PosteriorDraws> {
        if self.data.is_empty() {
            return Err(Error::EmptyData);
        }
        self.config.validate()?;
        self.priors.validate()?;
        if let Some(t) = self.ar_time_factor {
            if t >= self.data.layout.n_factors() {
                return Err(Error::Config(format!(
                    "AR time factor index {t} out of range"
                )));
            }
        }
        let obs = Observations::from_dataset(self.data);
        let results: Vec<Result<(Vec<ParameterState>, Vec<(String, Option<f64>)>)>> =
            (0..self.config.n_chains)
                .into_par_iter()
                .map(|c| self.run_chain(&obs, c))
                .collect();
        let mut draws = Vec::with_capacity(results.len());
        let mut rates: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in results {
            let (chain_draws, chain_rates) = r?;
            draws.push(chain_draws);
            for (name, rate) in chain_rates {
                if let Some(rate) = rate {
                    let e = rates.entry(name).or_insert((0.0, 0));
                    e.0 += rate;
                    e.1 += 1;
                }
            }
        }
        let mut out = PosteriorDraws {
            layout: self.data.layout.clone(),
            response_name: self.data.response_name.clone(),
            config: self.config.clone(),
            priors: self.priors.clone(),
            ar_time_factor: self.ar_time_factor,
            draws,
            acceptance_rates: rates
                .into_iter()
                .map(|(k, (s, n))| (k, s / n as f64))
                .collect(),
            diagnostics: Vec::new(),
        };
        out.compute_diagnostics();
        Ok(out)
    }

    fn run_chain(
        &self,
        obs: &Observations,
        index: usize,
    ) -> Result<(Vec<ParameterState>, Vec<(String, Option<f64>)>)> {
        let cfg = &self.config;
        let mut chain = Chain::new(
            obs,
            &self.priors,
            cfg,
            self.ar_time_factor,
            cfg.chain_rng(index),
        )?;
        let mut kept = Vec::with_capacity(cfg.draws_per_chain());
        for it in 0..cfg.n_iter {
            chain.set_adapting(it < cfg.adapt_window);
            chain.sweep();
            if let Some(parameter) = chain.non_finite() {
                return Err(Error::NonFiniteState {
                    chain: index,
                    iteration: it,
                    parameter: parameter.to_string(),
                });
            }
            if it >= cfg.n_burn && (it - cfg.n_burn + 1) % cfg.thin == 0 {
                kept.push(chain.state().clone());
            }
            if let Some((every, hook)) = &self.progress {
                if (it + 1) % every == 0 {
                    hook(Progress {
                        chain: index,
                        iteration: it + 1,
                        total: cfg.n_iter,
                    });
                }
            }
        }
        Ok((kept, chain.acceptance_rates()))
    }
}

/// Runs plain BAMMIT chains with the given settings.
pub fn run_chains(
    data: &Dataset,
    priors: &PriorConfig,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    Sampler::new(data, priors.clone(), config.clone()).run()
}
