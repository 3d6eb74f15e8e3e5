use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Random-walk step size for one Metropolis block, adapted by
/// Robbins-Monro on the log scale toward a target acceptance rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwScale {
    pub name: String,
    log_scale: f64,
    target: f64,
    adapt_steps: u64,
    proposals: u64,
    accepts: u64,
}

impl RwScale {
    pub fn new(name: impl Into<String>, initial_scale: f64, target: f64) -> Self {
        Self {
            name: name.into(),
            log_scale: initial_scale.ln(),
            target,
            adapt_steps: 0,
            proposals: 0,
            accepts: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn set_scale(&mut self, scale: f64) {
        self.log_scale = scale.ln();
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.scale() * z
    }

    /// Metropolis accept/reject for a log acceptance ratio; updates counters
    /// and, while `adapting`, the scale.
    pub fn accept<R: Rng + ?Sized>(&mut self, rng: &mut R, log_ratio: f64, adapting: bool) -> bool {
        let prob = if log_ratio.is_nan() {
            0.0
        } else {
            log_ratio.min(0.0).exp()
        };
        let accepted = prob >= 1.0 || rng.random::<f64>() < prob;
        self.record(prob, accepted, adapting);
        accepted
    }

    /// Registers an automatically rejected proposal.
    pub fn reject(&mut self, adapting: bool) {
        self.record(0.0, false, adapting);
    }

    fn record(&mut self, prob: f64, accepted: bool, adapting: bool) {
        if adapting {
            self.adapt_steps += 1;
            let gain = (1.0 + self.adapt_steps as f64 / 10.0).powf(-0.6);
            self.log_scale = (self.log_scale + gain * (prob - self.target)).clamp(-12.0, 4.0);
        } else {
            self.proposals += 1;
            if accepted {
                self.accepts += 1;
            }
        }
    }

    /// Acceptance rate over non-adapting proposals.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepts as f64 / self.proposals as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adapts_toward_target_on_a_normal_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tuner = RwScale::new("x", 50.0, 0.44);
        let mut x: f64 = 0.0;
        for k in 0..20_000 {
            let adapting = k < 10_000;
            let prop = x + tuner.step(&mut rng);
            let lr = -0.5 * (prop * prop - x * x);
            if tuner.accept(&mut rng, lr, adapting) {
                x = prop;
            }
        }
        let rate = tuner.acceptance_rate().unwrap();
        assert!((rate - 0.44).abs() < 0.05, "rate {rate}");
        assert!(tuner.scale() > 1.0 && tuner.scale() < 5.0);
    }
}
