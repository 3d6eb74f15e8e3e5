//! First-order autoregressive structure on a time factor.
//!
//! For the factor designated as time, the main effect and every auxiliary
//! score column follow AR(1) recursions started from a zero state,
//!
//! ```text
//! b_t     = α_b + φ_b b_{t−1}     + η_t,   η_t ~ N(0, σ_η²)
//! θ_{t,q} = α_θ + φ_θ θ_{t−1,q}   + ω_t,   ω_t ~ N(0, σ_ω²)
//! ```
//!
//! and the time scores are the usual normalization of θ, so the
//! identifiability constraints hold exactly as for the other factors.
//! φ_b, φ_θ carry uniform priors on [−1, 1], α_b, α_θ normal priors, and
//! σ_η, σ_ω half-t priors.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_column, PriorConfig};
use crate::sampler::adapt::RwScale;
use crate::sampler::dist::{half_t_log_density, normal_log_density};

/// AR(1) parameters of the time factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArParams {
    pub time_factor: usize,
    pub phi_b: f64,
    pub phi_theta: f64,
    pub alpha_b: f64,
    pub alpha_theta: f64,
    pub sigma_eta: f64,
    pub sigma_omega: f64,
}

impl ArParams {
    /// White-noise parameters: φ = α = 0, unit innovation SDs.
    pub fn white_noise(time_factor: usize) -> Self {
        Self {
            time_factor,
            phi_b: 0.0,
            phi_theta: 0.0,
            alpha_b: 0.0,
            alpha_theta: 0.0,
            sigma_eta: 1.0,
            sigma_omega: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi_b.abs() > 1.0 || self.phi_theta.abs() > 1.0 {
            return Err(Error::arg("AR coefficients must lie in [-1, 1]"));
        }
        if self.sigma_eta < 0.0 || self.sigma_omega < 0.0 {
            return Err(Error::arg("innovation SDs must be nonnegative"));
        }
        Ok(())
    }
}

/// Starting values of the recursions; the model itself always starts at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArInitial {
    pub b0: f64,
    pub theta0: f64,
}

/// A simulated time trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ArTimeEffects {
    /// Main-effect recursion before centring.
    pub b_raw: Vec<f64>,
    /// Centred main effect (sums to zero).
    pub b: Vec<f64>,
    /// Q auxiliary columns, each of length T.
    pub theta: Vec<Vec<f64>>,
    /// Normalized score columns.
    pub beta: Vec<Vec<f64>>,
}

fn recursion<R: Rng + ?Sized>(
    len: usize,
    alpha: f64,
    phi: f64,
    sd: f64,
    start: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut prev = start;
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            prev = alpha + phi * prev + sd * z;
            prev
        })
        .collect()
}

/// Simulates the time factor's main effects and score columns.
pub fn ar_simulate_time_effects<R: Rng + ?Sized>(
    params: &ArParams,
    periods: usize,
    components: usize,
    initial: ArInitial,
    rng: &mut R,
) -> Result<ArTimeEffects> {
    params.validate()?;
    if periods < 2 {
        return Err(Error::arg("AR simulation needs at least 2 periods"));
    }
    let b_raw = recursion(
        periods,
        params.alpha_b,
        params.phi_b,
        params.sigma_eta,
        initial.b0,
        rng,
    );
    let mean = b_raw.iter().sum::<f64>() / periods as f64;
    let b = b_raw.iter().map(|x| x - mean).collect();
    let theta: Vec<Vec<f64>> = (0..components)
        .map(|_| {
            recursion(
                periods,
                params.alpha_theta,
                params.phi_theta,
                params.sigma_omega,
                initial.theta0,
                rng,
            )
        })
        .collect();
    let beta = theta
        .iter()
        .map(|c| normalize_column(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ArTimeEffects {
        b_raw,
        b,
        theta,
        beta,
    })
}

/// Log density of a trajectory under the AR(1) recursion from a zero state,
/// up to the 2π constant.
pub fn ar_log_prior(trajectory: &[f64], alpha: f64, phi: f64, sd: f64) -> f64 {
    let var = sd * sd;
    let mut prev = 0.0;
    trajectory
        .iter()
        .map(|&x| {
            let lp = normal_log_density(x, alpha + phi * prev, var);
            prev = x;
            lp
        })
        .sum()
}

/// Reflects a proposal back into [−1, 1].
pub fn reflect_unit(mut x: f64) -> f64 {
    while !(-1.0..=1.0).contains(&x) {
        if x > 1.0 {
            x = 2.0 - x;
        } else {
            x = -2.0 - x;
        }
    }
    x
}

/// Random-walk scales for the six AR parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArTuner {
    pub phi_b: RwScale,
    pub alpha_b: RwScale,
    pub sigma_eta: RwScale,
    pub phi_theta: RwScale,
    pub alpha_theta: RwScale,
    pub sigma_omega: RwScale,
}

impl ArTuner {
    pub fn new(target: f64) -> Self {
        Self {
            phi_b: RwScale::new("ar.phi_b", 0.3, target),
            alpha_b: RwScale::new("ar.alpha_b", 0.3, target),
            sigma_eta: RwScale::new("ar.sigma_eta", 0.3, target),
            phi_theta: RwScale::new("ar.phi_theta", 0.3, target),
            alpha_theta: RwScale::new("ar.alpha_theta", 0.3, target),
            sigma_omega: RwScale::new("ar.sigma_omega", 0.3, target),
        }
    }

    pub fn blocks(&self) -> [&RwScale; 6] {
        [
            &self.phi_b,
            &self.alpha_b,
            &self.sigma_eta,
            &self.phi_theta,
            &self.alpha_theta,
            &self.sigma_omega,
        ]
    }
}

struct Group<'a> {
    phi: &'a mut f64,
    alpha: &'a mut f64,
    sd: &'a mut f64,
    phi_tuner: &'a mut RwScale,
    alpha_tuner: &'a mut RwScale,
    sd_tuner: &'a mut RwScale,
}

fn update_group<R: Rng + ?Sized>(
    group: Group<'_>,
    trajectories: &[&[f64]],
    priors: &PriorConfig,
    rng: &mut R,
    adapting: bool,
) {
    let loglik = |alpha: f64, phi: f64, sd: f64| -> f64 {
        trajectories
            .iter()
            .map(|t| ar_log_prior(t, alpha, phi, sd))
            .sum()
    };

    let current = loglik(*group.alpha, *group.phi, *group.sd);
    let phi_prop = reflect_unit(*group.phi + group.phi_tuner.step(rng));
    let proposed = loglik(*group.alpha, phi_prop, *group.sd);
    let current = if group.phi_tuner.accept(rng, proposed - current, adapting) {
        *group.phi = phi_prop;
        proposed
    } else {
        current
    };

    let alpha_prop = *group.alpha + group.alpha_tuner.step(rng);
    let proposed = loglik(alpha_prop, *group.phi, *group.sd);
    let log_ratio = proposed - current + normal_log_density(alpha_prop, 0.0, priors.ar_alpha_var)
        - normal_log_density(*group.alpha, 0.0, priors.ar_alpha_var);
    let current = if group.alpha_tuner.accept(rng, log_ratio, adapting) {
        *group.alpha = alpha_prop;
        proposed
    } else {
        current
    };

    let sd_prop = *group.sd * group.sd_tuner.step(rng).exp();
    let proposed = loglik(*group.alpha, *group.phi, sd_prop);
    let log_ratio = proposed - current
        + half_t_log_density(sd_prop, priors.half_t_df, priors.ar_innovation_scale)
        - half_t_log_density(*group.sd, priors.half_t_df, priors.ar_innovation_scale)
        + sd_prop.ln()
        - group.sd.ln();
    if group.sd_tuner.accept(rng, log_ratio, adapting) {
        *group.sd = sd_prop;
    }
}

/// Metropolis updates of (φ_b, α_b, σ_η) given the time main effects and of
/// (φ_θ, α_θ, σ_ω) given the time factor's auxiliary columns.
pub fn ar_update_block<R: Rng + ?Sized>(
    params: &mut ArParams,
    b_time: &[f64],
    theta_time: &[Vec<f64>],
    priors: &PriorConfig,
    rng: &mut R,
    tuner: &mut ArTuner,
    adapting: bool,
) {
    update_group(
        Group {
            phi: &mut params.phi_b,
            alpha: &mut params.alpha_b,
            sd: &mut params.sigma_eta,
            phi_tuner: &mut tuner.phi_b,
            alpha_tuner: &mut tuner.alpha_b,
            sd_tuner: &mut tuner.sigma_eta,
        },
        &[b_time],
        priors,
        rng,
        adapting,
    );
    let columns: Vec<&[f64]> = theta_time.iter().map(Vec::as_slice).collect();
    update_group(
        Group {
            phi: &mut params.phi_theta,
            alpha: &mut params.alpha_theta,
            sd: &mut params.sigma_omega,
            phi_tuner: &mut tuner.phi_theta,
            alpha_tuner: &mut tuner.alpha_theta,
            sd_tuner: &mut tuner.sigma_omega,
        },
        &columns,
        priors,
        rng,
        adapting,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn white_noise_limit_keeps_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ArParams::white_noise(2);
        let out = ar_simulate_time_effects(&p, 10, 2, ArInitial::default(), &mut rng).unwrap();
        assert!(out.b.iter().sum::<f64>().abs() < 1e-12);
        for col in &out.beta {
            assert!(col.iter().sum::<f64>().abs() < 1e-12);
            assert!((col.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ArParams {
            phi_b: 0.5,
            sigma_eta: 0.0,
            sigma_omega: 1.0,
            ..ArParams::white_noise(0)
        };
        let init = ArInitial {
            b0: 1.0,
            theta0: 0.0,
        };
        let out = ar_simulate_time_effects(&p, 5, 1, init, &mut rng).unwrap();
        assert_eq!(out.b_raw, vec![0.5, 0.25, 0.125, 0.0625, 0.03125]);
    }

    #[test]
    fn constant_theta_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ArParams {
            sigma_omega: 0.0,
            ..ArParams::white_noise(0)
        };
        assert!(matches!(
            ar_simulate_time_effects(&p, 5, 1, ArInitial::default(), &mut rng),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn normalization_matches_generic_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let p = ArParams {
            phi_theta: 0.6,
            alpha_theta: 0.3,
            ..ArParams::white_noise(0)
        };
        let out = ar_simulate_time_effects(&p, 10, 1, ArInitial::default(), &mut rng).unwrap();
        let theta = &out.theta[0];
        // explicit centring and scaling of the trajectory
        let m = theta.iter().sum::<f64>() / 10.0;
        let ss: f64 = theta.iter().map(|t| (t - m).powi(2)).sum();
        for (t, b) in theta.iter().zip(&out.beta[0]) {
            assert!(((t - m) / ss.sqrt() - b).abs() < 1e-15);
        }
        assert_eq!(out.beta[0], normalize_column(theta).unwrap());
    }

    #[test]
    fn zero_ar_prior_equals_iid_prior() {
        let traj = [0.3, -1.2, 2.5, 0.0, 0.7];
        let sd = 1.7;
        let iid: f64 = traj
            .iter()
            .map(|&x| normal_log_density(x, 0.0, sd * sd))
            .sum();
        assert!((ar_log_prior(&traj, 0.0, 0.0, sd) - iid).abs() < 1e-10);
    }

    #[test]
    fn reflection_stays_in_unit_interval() {
        for &x in &[1.3, -1.3, 3.7, -5.2, 0.2, 1.0, -1.0] {
            let r = reflect_unit(x);
            assert!((-1.0..=1.0).contains(&r), "{x} -> {r}");
        }
        assert!((reflect_unit(1.3) - 0.7).abs() < 1e-12);
        assert!((reflect_unit(-1.3) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn ar_block_keeps_phi_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let priors = PriorConfig::default();
        let mut params = ArParams::white_noise(0);
        let mut tuner = ArTuner::new(0.44);
        let b: Vec<f64> = (0..10).map(|t| (t as f64 * 0.7).sin()).collect();
        let theta = vec![(0..10).map(|t| (t as f64).cos()).collect::<Vec<f64>>()];
        for k in 0..5000 {
            ar_update_block(
                &mut params,
                &b,
                &theta,
                &priors,
                &mut rng,
                &mut tuner,
                k < 1000,
            );
            assert!(params.phi_b.abs() <= 1.0 && params.phi_theta.abs() <= 1.0);
            assert!(params.sigma_eta > 0.0 && params.sigma_omega > 0.0);
        }
    }
}
