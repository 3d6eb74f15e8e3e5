use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::adapt::RwScale;
use super::dist::{half_t_log_density, log_normal_mass, truncated_normal, NormalParams};
use super::McmcConfig;
use crate::ar::{ar_log_prior, ar_update_block, ArParams, ArTuner};
use crate::error::{Error, Result};
use crate::model::{normalize_column, Dataset, FactorScores, ParameterState, PriorConfig};

/// Column-oriented copy of a dataset used by the sweeps.
#[derive(Debug, Clone)]
pub struct Observations {
    dims: Vec<usize>,
    /// `levels[v][n]`: level of factor v in observation n.
    levels: Vec<Vec<u32>>,
    y: Vec<f64>,
    counts: Vec<Vec<usize>>,
}

impl Observations {
    pub fn from_dataset(data: &Dataset) -> Self {
        let dims = data.layout.dims();
        let mut levels = vec![Vec::with_capacity(data.len()); dims.len()];
        let mut counts: Vec<Vec<usize>> = dims.iter().map(|&b| vec![0; b]).collect();
        for r in &data.records {
            for (v, &i) in r.cell.iter().enumerate() {
                levels[v].push(i as u32);
                counts[v][i] += 1;
            }
        }
        Self {
            dims,
            levels,
            y: data.responses(),
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
}

struct Tuners {
    theta: Vec<Vec<RwScale>>,
    theta_joint: Vec<Vec<RwScale>>,
    sigma_b: Vec<RwScale>,
    sigma_lambda: RwScale,
    ar: Option<ArTuner>,
}

/// One Markov chain: the current state plus cached residuals.
///
/// The update methods are the individual full-conditional steps; each one
/// keeps the cached residuals consistent with the state.
pub struct Chain<'a> {
    obs: &'a Observations,
    priors: &'a PriorConfig,
    state: ParameterState,
    rng: ChaCha8Rng,
    /// y_n minus the full predictor.
    resid: Vec<f64>,
    /// `comp[q][n]` = ∏_v β^(v)_{level, q}.
    comp: Vec<Vec<f64>>,
    tuners: Tuners,
    theta_steps: usize,
    adapting: bool,
}

impl<'a> Chain<'a> {
    /// Starts a chain from the overdispersed initialization: μ at the sample
    /// mean, b and θ from their priors, λ spread over [0.5, 1.5]·SD(y) and σ²
    /// at the sample variance.
    pub fn new(
        obs: &'a Observations,
        priors: &'a PriorConfig,
        config: &McmcConfig,
        ar_time_factor: Option<usize>,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        let q = config.q;
        if q == 0 {
            return Err(Error::arg("Q must be at least 1"));
        }
        if let Some(t) = ar_time_factor {
            if t >= obs.dims.len() {
                return Err(Error::arg(format!("AR time factor {t} out of range")));
            }
        }
        let n = obs.len() as f64;
        let (mean, var) = if obs.is_empty() {
            (priors.mu_mean, 1.0)
        } else {
            let mean = obs.y.iter().sum::<f64>() / n;
            let var = obs.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (mean, if var > 0.0 { var } else { 1.0 })
        };
        let sd = var.sqrt();
        let sigma_b0 = priors.a2;
        let main_effects = obs
            .dims
            .iter()
            .map(|&b| {
                let raw: Vec<f64> = (0..b)
                    .map(|_| {
                        sigma_b0 * {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z
                        }
                    })
                    .collect();
                let m = raw.iter().sum::<f64>() / b as f64;
                raw.into_iter().map(|x| x - m).collect()
            })
            .collect();
        let mut scores = Vec::with_capacity(obs.dims.len());
        for &b in &obs.dims {
            let mut columns = Vec::with_capacity(q);
            for _ in 0..q {
                let column = loop {
                    let c: Vec<f64> = (0..b).map(|_| StandardNormal.sample(&mut rng)).collect();
                    if normalize_column(&c).is_ok() {
                        break c;
                    }
                };
                columns.push(column);
            }
            scores.push(FactorScores::from_theta(columns)?);
        }
        let lambda: Vec<f64> = if q == 1 {
            vec![sd]
        } else {
            (0..q)
                .map(|k| sd * (1.5 - k as f64 / (q - 1) as f64))
                .collect()
        };
        let state = ParameterState {
            mu: mean,
            main_effects,
            sigma_b: vec![sigma_b0; obs.dims.len()],
            sigma_lambda: lambda[0].max(priors.a3),
            lambda,
            scores,
            sigma2_y: var,
            ar: ar_time_factor.map(|t| ArParams {
                sigma_eta: sigma_b0,
                ..ArParams::white_noise(t)
            }),
        };
        let theta_tuners = |label: &str| -> Vec<Vec<RwScale>> {
            obs.dims
                .iter()
                .enumerate()
                .map(|(v, &b)| {
                    (0..q)
                        .map(|k| {
                            RwScale::new(
                                format!("{label}[{v}][{k}]"),
                                0.5 / (b as f64).sqrt(),
                                config.target_accept,
                            )
                        })
                        .collect()
                })
                .collect()
        };
        let tuners = Tuners {
            theta: theta_tuners("theta"),
            theta_joint: theta_tuners("theta_lambda"),
            sigma_b: (0..obs.dims.len())
                .map(|v| RwScale::new(format!("sigma_b[{v}]"), 0.5, config.target_accept_scalar))
                .collect(),
            sigma_lambda: RwScale::new("sigma_lambda", 0.5, config.target_accept_scalar),
            ar: ar_time_factor.map(|_| ArTuner::new(config.target_accept_scalar)),
        };
        let mut chain = Self {
            obs,
            priors,
            state,
            rng,
            resid: Vec::new(),
            comp: Vec::new(),
            tuners,
            theta_steps: config.theta_steps.max(1),
            adapting: true,
        };
        chain.refresh();
        Ok(chain)
    }

    pub fn state(&self) -> &ParameterState {
        &self.state
    }

    /// Replaces the state (dimensions must match) and rebuilds the caches.
    pub fn set_state(&mut self, state: ParameterState) -> Result<()> {
        if state.main_effects.len() != self.obs.dims.len()
            || state
                .main_effects
                .iter()
                .zip(&self.obs.dims)
                .any(|(b, &d)| b.len() != d)
            || state.lambda.len() != self.comp.len()
        {
            return Err(Error::layout("state does not match the chain's data"));
        }
        self.state = state;
        self.refresh();
        Ok(())
    }

    pub fn set_adapting(&mut self, adapting: bool) {
        self.adapting = adapting;
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Recomputes component products and residuals from the state.
    pub fn refresh(&mut self) {
        let n = self.obs.len();
        let q = self.state.lambda.len();
        self.comp = (0..q)
            .map(|k| {
                let mut c = vec![1.0; n];
                for (v, levels) in self.obs.levels.iter().enumerate() {
                    let beta = &self.state.beta(v)[k];
                    for (cn, &l) in c.iter_mut().zip(levels) {
                        *cn *= beta[l as usize];
                    }
                }
                c
            })
            .collect();
        let mut resid: Vec<f64> = self.obs.y.iter().map(|y| y - self.state.mu).collect();
        for (v, levels) in self.obs.levels.iter().enumerate() {
            let b = &self.state.main_effects[v];
            for (r, &l) in resid.iter_mut().zip(levels) {
                *r -= b[l as usize];
            }
        }
        for (lambda, c) in self.state.lambda.iter().zip(&self.comp) {
            for (r, cn) in resid.iter_mut().zip(c) {
                *r -= lambda * cn;
            }
        }
        self.resid = resid;
    }

    fn is_ar_time(&self, v: usize) -> bool {
        self.state.ar.as_ref().is_some_and(|a| a.time_factor == v)
    }

    // ---- μ --------------------------------------------------------------

    /// Normal full conditional of μ.
    pub fn mu_conditional(&self) -> NormalParams {
        let s2 = self.state.sigma2_y;
        let partial: f64 = self.resid.iter().sum::<f64>() + self.state.mu * self.obs.len() as f64;
        NormalParams::from_canonical(
            1.0 / self.priors.mu_var + self.obs.len() as f64 / s2,
            self.priors.mu_mean / self.priors.mu_var + partial / s2,
        )
    }

    pub fn update_mu(&mut self) {
        let new = self.mu_conditional().sample(&mut self.rng);
        let delta = new - self.state.mu;
        self.resid.iter_mut().for_each(|r| *r -= delta);
        self.state.mu = new;
    }

    // ---- main effects ---------------------------------------------------

    fn level_residual_sums(&self, v: usize) -> Vec<f64> {
        let b = &self.state.main_effects[v];
        let mut sums = vec![0.0; self.obs.dims[v]];
        for (r, &l) in self.resid.iter().zip(&self.obs.levels[v]) {
            sums[l as usize] += r + b[l as usize];
        }
        sums
    }

    /// Independent normal full conditionals of b^(v)_i under the iid prior,
    /// before the zero-sum constraint is imposed.
    pub fn main_effect_conditionals(&self, v: usize) -> Vec<NormalParams> {
        let s2 = self.state.sigma2_y;
        let prior_prec = 1.0 / self.state.sigma_b[v].powi(2);
        self.level_residual_sums(v)
            .iter()
            .zip(&self.obs.counts[v])
            .map(|(&s, &n)| NormalParams::from_canonical(prior_prec + n as f64 / s2, s / s2))
            .collect()
    }

    /// Draws each b^(v) from its Gaussian full conditional restricted to
    /// Σ_i b_i = 0: an unconstrained draw x ~ N(m, P⁻¹) is corrected to
    /// x − P⁻¹1·(1ᵀx)/(1ᵀP⁻¹1), which is exact for a linear constraint. With
    /// a balanced design this is plain centring.
    pub fn update_main_effects(&mut self) {
        for v in 0..self.obs.dims.len() {
            let draw = if self.is_ar_time(v) {
                self.draw_ar_main_effect(v)
            } else {
                let cond = self.main_effect_conditionals(v);
                let x: Vec<f64> = cond.iter().map(|p| p.sample(&mut self.rng)).collect();
                let cov_one: Vec<f64> = cond.iter().map(|p| p.var).collect();
                krige_zero_sum(x, &cov_one)
            };
            self.install_main_effect(v, draw);
        }
    }

    fn install_main_effect(&mut self, v: usize, draw: Vec<f64>) {
        let old = &self.state.main_effects[v];
        let delta: Vec<f64> = draw.iter().zip(old).map(|(d, o)| d - o).collect();
        for (r, &l) in self.resid.iter_mut().zip(&self.obs.levels[v]) {
            *r -= delta[l as usize];
        }
        self.state.main_effects[v] = draw;
    }

    /// Joint draw of the time effects under the AR(1) prior (tridiagonal
    /// precision), then the same zero-sum correction.
    fn draw_ar_main_effect(&mut self, v: usize) -> Vec<f64> {
        let ar = self.state.ar.clone().expect("AR block present");
        let s2 = self.state.sigma2_y;
        let e2 = ar.sigma_eta.powi(2);
        let sums = self.level_residual_sums(v);
        let periods = sums.len();
        // b_t = α + φ b_{t−1} + η_t with b_0 ≡ 0
        let mut precision = DMatrix::<f64>::zeros(periods, periods);
        let mut linear = DVector::<f64>::zeros(periods);
        for t in 0..periods {
            precision[(t, t)] += 1.0 / e2 + self.obs.counts[v][t] as f64 / s2;
            linear[t] += ar.alpha_b / e2 + sums[t] / s2;
            if t + 1 < periods {
                precision[(t, t)] += ar.phi_b * ar.phi_b / e2;
                precision[(t, t + 1)] -= ar.phi_b / e2;
                precision[(t + 1, t)] -= ar.phi_b / e2;
                linear[t] -= ar.phi_b * ar.alpha_b / e2;
            }
        }
        let chol = precision.cholesky().expect("AR precision is positive definite");
        let mean = chol.solve(&linear);
        let z = DVector::from_fn(periods, |_, _| {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            z
        });
        // L Lᵀ = P, so x = m + L⁻ᵀ z has covariance P⁻¹
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("nonsingular factor");
        let x = mean + noise;
        let cov_one = chol.solve(&DVector::from_element(periods, 1.0));
        let total: f64 = x.sum();
        let denom: f64 = cov_one.sum();
        (0..periods).map(|t| x[t] - cov_one[t] * total / denom).collect()
    }

    // ---- θ / β ----------------------------------------------------------

    fn theta_log_prior(&self, v: usize, column: &[f64]) -> f64 {
        match &self.state.ar {
            Some(ar) if ar.time_factor == v => {
                ar_log_prior(column, ar.alpha_theta, ar.phi_theta, ar.sigma_omega)
            }
            _ => -0.5 * column.iter().map(|t| t * t).sum::<f64>(),
        }
    }

    /// Random-walk Metropolis on each auxiliary column θ^(v)_q.
    pub fn update_theta(&mut self) {
        for v in 0..self.obs.dims.len() {
            for q in 0..self.state.lambda.len() {
                self.update_theta_column(v, q);
            }
        }
    }

    /// Per-level sufficient statistics of column (v, q): with
    /// `o_n = ∏_{u≠v} β^(u)_q` and `r̃_n` the residual without component q,
    /// returns (o_n, Σ_level o², Σ_level o·r̃).
    fn column_stats(&self, v: usize, q: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let b = self.obs.dims[v];
        let lambda = self.state.lambda[q];
        let beta = &self.state.beta(v)[q];
        let mut other_sq = vec![0.0; b];
        let mut other_r = vec![0.0; b];
        let mut other = Vec::with_capacity(self.obs.len());
        for (n, &l) in self.obs.levels[v].iter().enumerate() {
            let l = l as usize;
            let o = if beta[l] != 0.0 {
                self.comp[q][n] / beta[l]
            } else {
                self.product_excluding(n, v, q)
            };
            let partial = self.resid[n] + lambda * self.comp[q][n];
            other_sq[l] += o * o;
            other_r[l] += o * partial;
            other.push(o);
        }
        (other, other_sq, other_r)
    }

    /// Random-walk steps on θ^(v)_q against `log_target(β) + prior(θ)`.
    /// Returns the final (θ, β) if any proposal was accepted.
    fn theta_walk(
        &mut self,
        v: usize,
        q: usize,
        joint: bool,
        log_target: impl Fn(&[f64]) -> f64,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut theta = self.state.theta(v)[q].clone();
        let mut beta = self.state.beta(v)[q].clone();
        let mut current = log_target(&beta) + self.theta_log_prior(v, &theta);
        let mut changed = false;
        for _ in 0..self.theta_steps {
            let tuner = if joint {
                &self.tuners.theta_joint[v][q]
            } else {
                &self.tuners.theta[v][q]
            };
            let scale = tuner.scale();
            let proposal: Vec<f64> = theta
                .iter()
                .map(|t| {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    t + scale * z
                })
                .collect();
            let beta_prop = normalize_column(&proposal).ok();
            let target = beta_prop
                .as_ref()
                .map(|b| log_target(b) + self.theta_log_prior(v, &proposal));
            let tuner = if joint {
                &mut self.tuners.theta_joint[v][q]
            } else {
                &mut self.tuners.theta[v][q]
            };
            let (Some(beta_prop), Some(target)) = (beta_prop, target) else {
                tuner.reject(self.adapting);
                continue;
            };
            if tuner.accept(&mut self.rng, target - current, self.adapting) {
                theta = proposal;
                beta = beta_prop;
                current = target;
                changed = true;
            }
        }
        changed.then_some((theta, beta))
    }

    fn install_theta(&mut self, v: usize, q: usize, other: &[f64], theta: Vec<f64>, beta: Vec<f64>) {
        let lambda = self.state.lambda[q];
        for (n, &l) in self.obs.levels[v].iter().enumerate() {
            let c_new = other[n] * beta[l as usize];
            self.resid[n] -= lambda * (c_new - self.comp[q][n]);
            self.comp[q][n] = c_new;
        }
        self.state.scores[v].set_column_unchecked(q, theta, beta);
    }

    fn update_theta_column(&mut self, v: usize, q: usize) {
        let (other, other_sq, other_r) = self.column_stats(v, q);
        let lambda = self.state.lambda[q];
        let s2 = self.state.sigma2_y;
        let loglik = |beta: &[f64]| -> f64 {
            beta.iter()
                .zip(other_sq.iter().zip(&other_r))
                .map(|(&bi, (&a, &c))| 2.0 * lambda * bi * c - lambda * lambda * bi * bi * a)
                .sum::<f64>()
                / (2.0 * s2)
        };
        if let Some((theta, beta)) = self.theta_walk(v, q, false, loglik) {
            self.install_theta(v, q, &other, theta, beta);
        }
    }

    /// Joint move of (θ^(v)_q, λ_q): random walk on θ against its
    /// conditional with λ_q integrated out over its ordering interval, then a
    /// fresh λ_q from its truncated-normal conditional.
    ///
    /// Without this block a chain whose scores point away from the signal
    /// has λ_q ≈ 0, which flattens the θ conditional and holds the chain
    /// there; the collapsed target keeps the pull toward aligned scores.
    pub fn update_theta_lambda(&mut self) {
        for v in 0..self.obs.dims.len() {
            for q in 0..self.state.lambda.len() {
                let (other, other_sq, other_r) = self.column_stats(v, q);
                let s2 = self.state.sigma2_y;
                let prior_prec = 1.0 / self.state.sigma_lambda.powi(2);
                let (_, lo, hi) = self.lambda_conditional(q);
                let marginal = |beta: &[f64]| -> f64 {
                    let (mut a, mut c) = (0.0, 0.0);
                    for (&bi, (&sa, &sc)) in beta.iter().zip(other_sq.iter().zip(&other_r)) {
                        a += bi * bi * sa;
                        c += bi * sc;
                    }
                    let precision = a / s2 + prior_prec;
                    let mean = c / s2 / precision;
                    let sd = precision.sqrt().recip();
                    0.5 * mean * mean * precision - 0.5 * precision.ln()
                        + log_normal_mass((lo - mean) / sd, (hi - mean) / sd)
                };
                if let Some((theta, beta)) = self.theta_walk(v, q, true, marginal) {
                    self.install_theta(v, q, &other, theta, beta);
                }
                self.draw_lambda(q);
            }
        }
    }

    fn product_excluding(&self, n: usize, skip: usize, q: usize) -> f64 {
        self.obs
            .levels
            .iter()
            .enumerate()
            .filter(|&(u, _)| u != skip)
            .map(|(u, levels)| self.state.beta(u)[q][levels[n] as usize])
            .product()
    }

    // ---- λ --------------------------------------------------------------

    /// Untruncated normal full conditional of λ_q and its truncation bounds.
    pub fn lambda_conditional(&self, q: usize) -> (NormalParams, f64, f64) {
        let lambda = &self.state.lambda;
        let s2 = self.state.sigma2_y;
        let c = &self.comp[q];
        let scc: f64 = c.iter().map(|x| x * x).sum();
        let scr: f64 = c
            .iter()
            .zip(&self.resid)
            .map(|(cn, r)| cn * (r + lambda[q] * cn))
            .sum();
        let params = NormalParams::from_canonical(
            1.0 / self.state.sigma_lambda.powi(2) + scc / s2,
            scr / s2,
        );
        let hi = if q == 0 { f64::INFINITY } else { lambda[q - 1] };
        let lo = lambda.get(q + 1).copied().unwrap_or(0.0);
        (params, lo, hi)
    }

    /// Truncated-normal draws of λ_1..λ_Q inside their ordering bounds.
    pub fn update_lambda(&mut self) {
        for q in 0..self.state.lambda.len() {
            self.draw_lambda(q);
        }
    }

    fn draw_lambda(&mut self, q: usize) {
        let (p, lo, hi) = self.lambda_conditional(q);
        let new = truncated_normal(&mut self.rng, p.mean, p.sd(), lo, hi);
        let delta = new - self.state.lambda[q];
        for (r, c) in self.resid.iter_mut().zip(&self.comp[q]) {
            *r -= delta * c;
        }
        self.state.lambda[q] = new;
    }

    // ---- variances --------------------------------------------------------

    /// Gamma(shape, rate) full conditional of the residual precision.
    pub fn precision_conditional(&self) -> (f64, f64) {
        let sse: f64 = self.resid.iter().map(|r| r * r).sum();
        (
            self.priors.a0 + 0.5 * self.obs.len() as f64,
            self.priors.a1 + 0.5 * sse,
        )
    }

    pub fn update_variances(&mut self) {
        let (shape, rate) = self.precision_conditional();
        let precision: f64 = Gamma::new(shape, 1.0 / rate)
            .expect("positive gamma parameters")
            .sample(&mut self.rng);
        self.state.sigma2_y = 1.0 / precision;

        let df = self.priors.half_t_df;
        for v in 0..self.obs.dims.len() {
            if self.is_ar_time(v) {
                continue;
            }
            let b = &self.state.main_effects[v];
            let ss: f64 = b.iter().map(|x| x * x).sum();
            // b lives on the (B − 1)-dimensional zero-sum subspace
            let k = (b.len() - 1) as f64;
            let target = |s: f64| -> f64 {
                half_t_log_density(s, df, self.priors.a2) - k * s.ln() - 0.5 * ss / (s * s) + s.ln()
            };
            let cur = self.state.sigma_b[v];
            let prop = cur * self.tuners.sigma_b[v].step(&mut self.rng).exp();
            let log_ratio = target(prop) - target(cur);
            if self.tuners.sigma_b[v].accept(&mut self.rng, log_ratio, self.adapting) {
                self.state.sigma_b[v] = prop;
            }
        }

        let ss: f64 = self.state.lambda.iter().map(|x| x * x).sum();
        let k = self.state.lambda.len() as f64;
        let target = |s: f64| -> f64 {
            half_t_log_density(s, df, self.priors.a3) - k * s.ln() - 0.5 * ss / (s * s) + s.ln()
        };
        let cur = self.state.sigma_lambda;
        let prop = cur * self.tuners.sigma_lambda.step(&mut self.rng).exp();
        let log_ratio = target(prop) - target(cur);
        if self
            .tuners
            .sigma_lambda
            .accept(&mut self.rng, log_ratio, self.adapting)
        {
            self.state.sigma_lambda = prop;
        }
    }

    /// AR parameter block; a no-op without an AR time factor.
    pub fn update_ar(&mut self) {
        let (Some(ar), Some(tuner)) = (self.state.ar.as_mut(), self.tuners.ar.as_mut()) else {
            return;
        };
        let t = ar.time_factor;
        let b = self.state.main_effects[t].clone();
        let theta = self.state.scores[t].theta().to_vec();
        ar_update_block(
            ar,
            &b,
            &theta,
            self.priors,
            &mut self.rng,
            tuner,
            self.adapting,
        );
    }

    /// One full sweep in the fixed update order.
    pub fn sweep(&mut self) {
        self.refresh();
        self.update_mu();
        self.update_main_effects();
        self.update_theta();
        self.update_theta_lambda();
        self.update_lambda();
        self.update_variances();
        self.update_ar();
    }

    /// Name of a non-finite parameter, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.state.is_finite()
    }

    /// Post-adaptation acceptance rates per Metropolis block.
    pub fn acceptance_rates(&self) -> Vec<(String, Option<f64>)> {
        let mut out: Vec<(String, Option<f64>)> = Vec::new();
        for row in self.tuners.theta.iter().chain(&self.tuners.theta_joint) {
            for t in row {
                out.push((t.name.clone(), t.acceptance_rate()));
            }
        }
        for t in &self.tuners.sigma_b {
            out.push((t.name.clone(), t.acceptance_rate()));
        }
        out.push((
            self.tuners.sigma_lambda.name.clone(),
            self.tuners.sigma_lambda.acceptance_rate(),
        ));
        if let Some(ar) = &self.tuners.ar {
            for t in ar.blocks() {
                out.push((t.name.clone(), t.acceptance_rate()));
            }
        }
        out
    }

    /// Current random-walk scale of θ^(v)_q.
    pub fn theta_scale(&self, v: usize, q: usize) -> f64 {
        self.tuners.theta[v][q].scale()
    }

    /// Overrides the random-walk scale of θ^(v)_q.
    pub fn set_theta_scale(&mut self, v: usize, q: usize, scale: f64) {
        self.tuners.theta[v][q].set_scale(scale);
    }
}

/// Conditions a draw with diagonal covariance `var` on Σ x = 0.
fn krige_zero_sum(x: Vec<f64>, var: &[f64]) -> Vec<f64> {
    let total: f64 = x.iter().sum();
    let denom: f64 = var.iter().sum();
    x.iter().zip(var).map(|(xi, vi)| xi - vi * total / denom).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear_predictor, Record};
    use crate::simulate::{scenario_preset, simulate_trial};
    use crate::tensor::FactorLayout;
    use rand::SeedableRng;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn setup(id: &str) -> (Dataset, PriorConfig, McmcConfig) {
        let t = simulate_trial(&scenario_preset(id, 1).unwrap()).unwrap();
        (t.train, PriorConfig::default(), McmcConfig::with_q(1))
    }

    /// y minus the predictor of `s` at each record.
    fn residuals(data: &Dataset, s: &ParameterState) -> Vec<f64> {
        data.records
            .iter()
            .map(|r| r.y - linear_predictor(s, &data.layout, &r.cell).unwrap())
            .collect()
    }

    #[test]
    fn mu_and_main_effect_conditionals_match_hand_formulas() {
        let (data, priors, cfg) = setup("ii");
        let obs = Observations::from_dataset(&data);
        let chain = Chain::new(&obs, &priors, &cfg, None, ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = chain.state().clone();
        let r = residuals(&data, &s);
        let s2 = s.sigma2_y;
        let n = data.len() as f64;

        let partial: f64 = r.iter().map(|x| x + s.mu).sum();
        let prec = 1.0 / priors.mu_var + n / s2;
        let mu = chain.mu_conditional();
        assert!(close(mu.var, 1.0 / prec, 1e-12));
        assert!(close(mu.mean, (priors.mu_mean / priors.mu_var + partial / s2) / prec, 1e-12));

        for v in 0..3 {
            let cond = chain.main_effect_conditionals(v);
            for (i, c) in cond.iter().enumerate() {
                let rows: Vec<usize> = (0..data.len()).filter(|&k| data.records[k].cell[v] == i).collect();
                let sum: f64 = rows.iter().map(|&k| r[k] + s.main_effects[v][i]).sum();
                let prec = 1.0 / s.sigma_b[v].powi(2) + rows.len() as f64 / s2;
                assert!(close(c.var, 1.0 / prec, 1e-12));
                assert!(close(c.mean, sum / s2 / prec, 1e-10));
            }
        }
    }

    #[test]
    fn lambda_conditional_matches_hand_formula() {
        let (data, priors, cfg) = setup("i");
        let obs = Observations::from_dataset(&data);
        let chain = Chain::new(&obs, &priors, &cfg, None, ChaCha8Rng::seed_from_u64(2)).unwrap();
        let s = chain.state().clone();
        let r = residuals(&data, &s);
        let c: Vec<f64> = data
            .records
            .iter()
            .map(|rec| s.beta(0)[0][rec.cell[0]] * s.beta(1)[0][rec.cell[1]])
            .collect();
        let scc: f64 = c.iter().map(|x| x * x).sum();
        let scr: f64 = c.iter().zip(&r).map(|(cn, rn)| cn * (rn + s.lambda[0] * cn)).sum();
        let prec = 1.0 / s.sigma_lambda.powi(2) + scc / s.sigma2_y;
        let (p, lo, hi) = chain.lambda_conditional(0);
        assert!(close(p.var, 1.0 / prec, 1e-12));
        assert!(close(p.mean, scr / s.sigma2_y / prec, 1e-10));
        assert_eq!((lo, hi), (0.0, f64::INFINITY));
    }

    #[test]
    fn lambda_conditional_without_data_is_the_prior() {
        let layout = FactorLayout::from_dims(&[3, 3]).unwrap();
        let data = Dataset::new(layout, Vec::new(), "y").unwrap();
        let obs = Observations::from_dataset(&data);
        let priors = PriorConfig::default();
        let chain = Chain::new(&obs, &priors, &McmcConfig::with_q(2), None, ChaCha8Rng::seed_from_u64(3)).unwrap();
        let sl = chain.state().sigma_lambda;
        let lambda = chain.state().lambda.clone();
        let (p, lo, hi) = chain.lambda_conditional(1);
        assert_eq!(p.mean, 0.0);
        assert!(close(p.var, sl * sl, 1e-14));
        assert_eq!((lo, hi), (0.0, lambda[0]));
    }

    #[test]
    fn precision_conditional_at_unit_residuals() {
        // ±1 residuals on all 480 cells: SSE = 480, so Gamma(0.1 + 240, 0.1 + 240)
        let t = simulate_trial(&scenario_preset("ii", 1).unwrap()).unwrap();
        let records: Vec<Record> = t
            .train
            .records
            .iter()
            .enumerate()
            .map(|(k, r)| Record {
                cell: r.cell.clone(),
                y: linear_predictor(&t.truth, &t.train.layout, &r.cell).unwrap() + if k % 2 == 0 { 1.0 } else { -1.0 },
            })
            .collect();
        let data = Dataset::new(t.train.layout.clone(), records, "y").unwrap();
        let obs = Observations::from_dataset(&data);
        let priors = PriorConfig::default();
        let mut chain = Chain::new(&obs, &priors, &McmcConfig::with_q(1), None, ChaCha8Rng::seed_from_u64(4)).unwrap();
        chain.set_state(t.truth.clone()).unwrap();
        let (shape, rate) = chain.precision_conditional();
        assert!(close(shape, 240.1, 1e-12));
        assert!(close(rate, 240.1, 1e-9));
    }

    #[test]
    fn prior_only_sigma_lambda_is_half_t() {
        let layout = FactorLayout::from_dims(&[3, 3]).unwrap();
        let data = Dataset::new(layout, Vec::new(), "y").unwrap();
        let obs = Observations::from_dataset(&data);
        let priors = PriorConfig::default();
        let mut chain = Chain::new(&obs, &priors, &McmcConfig::with_q(1), None, ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut draws = Vec::with_capacity(100_000);
        for it in 0..102_000 {
            chain.set_adapting(it < 2_000);
            chain.update_lambda();
            chain.update_variances();
            if it >= 2_000 {
                draws.push(chain.state().sigma_lambda);
            }
        }
        draws.sort_by(f64::total_cmp);
        let t3 = StudentsT::new(0.0, 1.0, 3.0).unwrap();
        for p in [0.25, 0.5, 0.75, 0.9] {
            let want = t3.inverse_cdf(0.5 + 0.5 * p);
            let got = draws[(p * draws.len() as f64) as usize];
            assert!((got / want - 1.0).abs() < 0.05, "q{p}: {got} vs {want}");
        }
    }

    #[test]
    fn vanishing_theta_steps_are_always_accepted() {
        let (data, priors, cfg) = setup("i");
        let obs = Observations::from_dataset(&data);
        let mut chain = Chain::new(&obs, &priors, &cfg, None, ChaCha8Rng::seed_from_u64(6)).unwrap();
        chain.set_adapting(false);
        for v in 0..2 {
            chain.set_theta_scale(v, 0, 1e-9);
        }
        for _ in 0..50 {
            chain.update_theta();
        }
        for (name, rate) in chain.acceptance_rates() {
            if name.starts_with("theta[") {
                assert!(rate.unwrap() > 0.99, "{name}: {rate:?}");
            }
        }
    }

    #[test]
    fn precise_data_gives_a_small_noise_sd() {
        // With σ_true = 0.01 the Gamma(0.1, 0.1) rate alone acts like an extra
        // SSE of 0.2 over 120 cells, so the exact posterior mean of σ sits
        // near 0.05 rather than at 0.01.
        let mut c = scenario_preset("i", 1).unwrap();
        c.sigma_true = 0.01;
        let t = simulate_trial(&c).unwrap();
        let obs = Observations::from_dataset(&t.train);
        let priors = PriorConfig::default();
        let mut chain = Chain::new(&obs, &priors, &McmcConfig::with_q(1), None, ChaCha8Rng::seed_from_u64(7)).unwrap();
        let (mut sds, mut rb) = (Vec::new(), Vec::new());
        for it in 0..3_000 {
            chain.set_adapting(it < 1_500);
            chain.sweep();
            if it >= 1_500 {
                sds.push(chain.state().sigma2_y.sqrt());
                let (shape, rate) = chain.precision_conditional();
                rb.push(shape / rate);
            }
        }
        let mean = sds.iter().sum::<f64>() / sds.len() as f64;
        assert!(mean < 0.06, "posterior mean σ {mean}");
        // Rao-Blackwellized E[1/σ²] agrees with the raw draws
        let raw = sds.iter().map(|s| 1.0 / (s * s)).sum::<f64>() / sds.len() as f64;
        let rb = rb.iter().sum::<f64>() / rb.len() as f64;
        assert!((raw / rb - 1.0).abs() < 0.05, "{raw} vs {rb}");
        assert!(krige_zero_sum(vec![1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).iter().sum::<f64>().abs() < 1e-12);
    }
}
